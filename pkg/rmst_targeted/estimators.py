"""Treatment-effect estimators on a merged pseudo-observation dataset.

Four methods share one report format:

    unadjusted  difference of arm means, jackknife variance per arm
    gee         linear regression of P on (A, X), sandwich standard error
    aiptw       augmented inverse probability weighting
    tmle        targeted maximum likelihood with super-learner nuisances

Pseudo-values are treated as independent responses. All nuisance fitting
is seeded through the fold plan, so a report is a pure function of
(PseudoDataset, NuisanceConfig, seed).
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit
from scipy.stats import norm
import statsmodels.api as sm

from rmst_targeted.learners import (
    BINOMIAL,
    DEFAULT_LIBRARY,
    GAUSSIAN,
    EnsembleModel,
    fit_glm,
    fit_single,
    fit_super_learner,
    make_fold_plan,
)
from rmst_targeted.learners.glm import GlmFit
from rmst_targeted.learners.library import TREATMENT_COLUMN, resolve_library
from rmst_targeted.logging import Logger
from rmst_targeted.pseudo import PseudoDataset, jackknife_variance
from rmst_targeted.types import (
    METHODS,
    DataValidationException,
    EstimateReport,
    EstimationException,
    FluctuationException,
)

logger = Logger(__name__)

Z_95 = 1.96
SCORE_TOLERANCE = 1e-6
MAX_BRACKET_DOUBLINGS = 60

AIPTW_DEFAULT_LIBRARY = ('glm',)
TMLE_DEFAULT_LIBRARY = DEFAULT_LIBRARY


@dataclass(frozen=True)
class NuisanceConfig:
    """Nuisance-model settings shared by AIPTW and TMLE.

    Attributes:
        outcome_library: Learner names for Q(A, X); None = method default.
        propensity_library: Learner names for g(X); None = method default.
        folds: Cross-validation folds V.
        g_bounds: Propensity truncation bounds.
        q_bounds: Clipping bounds for the scaled TMLE outcome fit.
        threads: Worker cap for cross-validation.
    """
    outcome_library: Optional[Tuple[str, ...]] = None
    propensity_library: Optional[Tuple[str, ...]] = None
    folds: int = 10
    g_bounds: Tuple[float, float] = (0.025, 0.975)
    q_bounds: Tuple[float, float] = (0.005, 0.995)
    threads: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise DataValidationException(f"folds must be at least 2, got {self.folds}")
        lo, hi = self.g_bounds
        if not (0.0 < lo < 0.5 < hi < 1.0):
            raise DataValidationException(
                f"g_bounds must lie in (0, 0.5) x (0.5, 1), got {self.g_bounds}"
            )
        qlo, qhi = self.q_bounds
        if not (0.0 < qlo < qhi < 1.0):
            raise DataValidationException(f"q_bounds must satisfy 0 < lo < hi < 1, got {self.q_bounds}")
        if self.threads < 1:
            raise DataValidationException(f"threads must be at least 1, got {self.threads}")
        for attr in ('outcome_library', 'propensity_library'):
            names = getattr(self, attr)
            if names is not None:
                resolve_library(names)
                object.__setattr__(self, attr, tuple(names))

    def libraries(self, method: str) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
        """(outcome, propensity) learner names with method defaults filled in."""
        default = TMLE_DEFAULT_LIBRARY if method == 'tmle' else AIPTW_DEFAULT_LIBRARY
        return (
            tuple(self.outcome_library or default),
            tuple(self.propensity_library or default),
        )

    def settings(self, method: str, seed: Optional[int]) -> Dict[str, Any]:
        """Effective settings echoed in report diagnostics."""
        settings: Dict[str, Any] = {'method': method, 'seed': seed}
        if method in ('aiptw', 'tmle'):
            outcome, propensity = self.libraries(method)
            settings.update({
                'outcome_library': list(outcome),
                'propensity_library': list(propensity),
                'folds': self.folds,
                'g_bounds': list(self.g_bounds),
                'threads': self.threads,
            })
            if method == 'tmle':
                settings['q_bounds'] = list(self.q_bounds)
        return settings


@dataclass
class Nuisances:
    """Fitted nuisance predictions for one dataset.

    Attributes:
        g: Truncated propensity P(A=1 | X).
        q_a: Outcome fit at the observed arm.
        q1: Outcome fit with arm set to 1.
        q0: Outcome fit with arm set to 0.
        diagnostics: Propensity summary and learner weights.
    """
    g: np.ndarray
    q_a: np.ndarray
    q1: np.ndarray
    q0: np.ndarray
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def build_report(
    method: str,
    tau: float,
    estimate: float,
    se: float,
    n1: int,
    n0: int,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> EstimateReport:
    """Assemble an EstimateReport with Wald interval and normal p-value.

    Raises:
        EstimationException: Non-finite estimate or negative/non-finite se.
    """
    estimate = float(estimate)
    se = float(se)
    if not np.isfinite(estimate):
        raise EstimationException(f"{method}: estimate is not finite ({estimate})")
    if not np.isfinite(se) or se < 0:
        raise EstimationException(f"{method}: invalid standard error ({se})")
    if se > 0:
        p_value = float(2.0 * norm.sf(abs(estimate / se)))
    else:
        p_value = 1.0 if estimate == 0.0 else 0.0
    report: EstimateReport = {
        'method': method,
        'tau': float(tau),
        'estimate': estimate,
        'se': se,
        'ci_low': estimate - Z_95 * se,
        'ci_high': estimate + Z_95 * se,
        'p_value': p_value,
        'n1': int(n1),
        'n0': int(n0),
        'diagnostics': dict(diagnostics or {}),
    }
    assert report['ci_low'] == estimate - Z_95 * se
    assert report['ci_high'] == estimate + Z_95 * se
    assert 0.0 <= report['p_value'] <= 1.0
    return report


def _require_both_arms(po: PseudoDataset) -> None:
    if po.n1 < 1 or po.n0 < 1:
        raise DataValidationException(
            f"Both arms must be present, got n1={po.n1}, n0={po.n0}"
        )


def estimate_unadjusted(po: PseudoDataset, diagnostics: Optional[Dict[str, Any]] = None) -> EstimateReport:
    """Difference of arm means of the pseudo-values.

    The variance is the sum of the per-arm jackknife variances.
    """
    _require_both_arms(po)
    p1 = po.pseudo[po.arm == 1]
    p0 = po.pseudo[po.arm == 0]
    estimate = float(p1.mean() - p0.mean())
    variance = 0.0
    for values in (p1, p0):
        if values.size >= 2:
            variance += jackknife_variance(values)
    extra = {'mu1': float(p1.mean()), 'mu0': float(p0.mean())}
    extra.update(diagnostics or {})
    return build_report('unadjusted', po.tau, estimate, np.sqrt(variance), po.n1, po.n0, extra)


def _outcome_design(po: PseudoDataset, arm: Optional[np.ndarray] = None) -> np.ndarray:
    a = po.arm if arm is None else arm
    return np.column_stack([a.astype(float), po.covariates])


def _outcome_names(po: PseudoDataset):
    return [TREATMENT_COLUMN] + list(po.covariate_names)


def sandwich_covariance(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    """HC0 covariance of the least-squares coefficients of response on (1, design)."""
    exog = sm.add_constant(np.asarray(design, dtype=float), has_constant='add')
    fit = sm.OLS(np.asarray(response, dtype=float), exog).fit(cov_type='HC0')
    return np.asarray(fit.cov_params())


def estimate_gee(po: PseudoDataset, diagnostics: Optional[Dict[str, Any]] = None) -> EstimateReport:
    """Gaussian identity regression of P on (A, X) with a robust standard error.

    Independence working covariance, so the point estimate is ordinary
    least squares and the covariance is the HC0 sandwich.

    Raises:
        RankDeficientException: (1, A, X) is collinear.
    """
    _require_both_arms(po)
    design = _outcome_design(po)
    fit: GlmFit = fit_glm(design, po.pseudo, GAUSSIAN, names=_outcome_names(po))
    covariance = sandwich_covariance(design, po.pseudo)
    se = float(np.sqrt(max(covariance[1, 1], 0.0)))
    extra: Dict[str, Any] = {
        'coefficients': {
            name: float(c) for name, c in zip(['(intercept)'] + fit.design_schema, fit.coefficients)
        },
    }
    extra.update(diagnostics or {})
    return build_report('gee', po.tau, fit.coefficients[1], se, po.n1, po.n0, extra)


def _fit_model(X, y, names, library, family, strata, config: NuisanceConfig, seed) -> EnsembleModel:
    if len(library) == 1:
        return fit_single(library[0], X, y, family, names=names)
    folds = make_fold_plan(strata, config.folds, seed)
    return fit_super_learner(X, y, library, folds, family, names=names, threads=config.threads)


def _model_summary(model: EnsembleModel) -> Dict[str, Any]:
    return {
        'weights': model.weight_map(),
        'cv_risks': model.risk_map(),
        'dropped': dict(model.dropped),
        'stacking_fallback': bool(model.stacking_fallback),
        'separation': [fit.name for fit in model.base_fits if fit.glm.separation],
    }


def truncate_propensity(g: np.ndarray, bounds: Tuple[float, float]) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Clip g to ``bounds`` and summarise the truncation."""
    lo, hi = bounds
    low = int(np.sum(g < lo))
    high = int(np.sum(g > hi))
    summary: Dict[str, Any] = {
        'g_min': float(np.min(g)),
        'g_max': float(np.max(g)),
        'g_truncated': low + high,
        'g_truncated_low': low,
        'g_truncated_high': high,
    }
    warnings = []
    if g.size and (low == g.size or high == g.size):
        side = 'lower' if low == g.size else 'upper'
        warnings.append(f"every propensity truncated at the {side} bound")
        logger.warning(f"Every propensity score was truncated at the {side} bound")
    summary['warnings'] = warnings
    return np.clip(g, lo, hi), summary


def fit_nuisances(
    po: PseudoDataset,
    response: np.ndarray,
    method: str,
    config: NuisanceConfig,
    seed: Optional[int],
    outcome_family: str = GAUSSIAN,
) -> Nuisances:
    """Fit the outcome regression Q(A, X) and the propensity g(X)."""
    outcome_library, propensity_library = config.libraries(method)

    X_q = _outcome_design(po)
    q_names = _outcome_names(po)
    q_model = _fit_model(X_q, response, q_names, outcome_library, outcome_family, po.arm, config, seed)
    q_a = q_model.predict(X_q)
    q1 = q_model.predict(_outcome_design(po, np.ones(po.n, dtype=int)))
    q0 = q_model.predict(_outcome_design(po, np.zeros(po.n, dtype=int)))

    X_g = po.covariates
    g_model = _fit_model(
        X_g, po.arm.astype(float), list(po.covariate_names), propensity_library,
        BINOMIAL, po.arm, config, seed,
    )
    g, g_summary = truncate_propensity(g_model.predict(X_g), config.g_bounds)

    diagnostics = dict(g_summary)
    diagnostics['outcome_model'] = _model_summary(q_model)
    diagnostics['propensity_model'] = _model_summary(g_model)
    return Nuisances(g=g, q_a=q_a, q1=q1, q0=q0, diagnostics=diagnostics)


def augmented_ipw(arm, pseudo, g, q1, q0) -> Tuple[float, np.ndarray]:
    """AIPTW estimate and per-subject influence contributions.

    Returns:
        (psi, phi - psi) where phi is the augmented per-subject contrast.
    """
    a = np.asarray(arm, dtype=float)
    p = np.asarray(pseudo, dtype=float)
    phi = (a / g * (p - q1) + q1) - ((1.0 - a) / (1.0 - g) * (p - q0) + q0)
    psi = float(phi.mean())
    return psi, phi - psi


def estimate_aiptw(
    po: PseudoDataset,
    config: Optional[NuisanceConfig] = None,
    seed: Optional[int] = None,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> EstimateReport:
    """Augmented inverse probability of treatment weighting.

    Nuisances default to main-terms GLMs; se = sd(influence) / sqrt(n).
    """
    _require_both_arms(po)
    config = config or NuisanceConfig()
    nuisances = fit_nuisances(po, po.pseudo, 'aiptw', config, seed)
    psi, influence = augmented_ipw(po.arm, po.pseudo, nuisances.g, nuisances.q1, nuisances.q0)
    se = float(np.std(influence, ddof=1) / np.sqrt(po.n))

    extra = dict(nuisances.diagnostics)
    extra['settings'] = config.settings('aiptw', seed)
    extra.update(diagnostics or {})
    return build_report('aiptw', po.tau, psi, se, po.n1, po.n0, extra)


def _fluctuation_score(epsilon, h, y, offset) -> float:
    return float(np.sum(h * (y - expit(offset + epsilon * h))))


def solve_fluctuation(h: np.ndarray, y: np.ndarray, q: np.ndarray) -> float:
    """Solve sum H (y - expit(logit(q) + eps H)) = 0 for eps.

    The score is decreasing in eps, so a bracket is grown from [-1, 1]
    by doubling and the root found by Brent's method.

    Raises:
        FluctuationException: No sign change within the bracket limit.
    """
    offset = logit(q)
    at_zero = _fluctuation_score(0.0, h, y, offset)
    if at_zero == 0.0 or not np.any(h):
        return 0.0
    lo, hi = -1.0, 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        s_lo = _fluctuation_score(lo, h, y, offset)
        s_hi = _fluctuation_score(hi, h, y, offset)
        if s_lo >= 0.0 >= s_hi:
            if s_lo == 0.0:
                return lo
            if s_hi == 0.0:
                return hi
            return float(brentq(_fluctuation_score, lo, hi, args=(h, y, offset), xtol=1e-14, maxiter=500))
        lo, hi = 2.0 * lo, 2.0 * hi
    raise FluctuationException(
        "Fluctuation score equation has no root in the search bracket",
        diagnostics={'bracket': [lo, hi], 'score_at_zero': at_zero},
    )


def estimate_tmle(
    po: PseudoDataset,
    config: Optional[NuisanceConfig] = None,
    seed: Optional[int] = None,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> EstimateReport:
    """Targeted maximum likelihood estimate of the RMST difference.

    Pseudo-values are rescaled to [0, 1] by their observed range, the
    initial outcome fit is clipped to ``q_bounds`` and fluctuated along
    the clever covariate H(A, X) = A/g - (1 - A)/(1 - g). The standard
    error comes from the efficient influence function on the original
    scale.

    Raises:
        FluctuationException: The targeting step did not solve its score equation.
    """
    _require_both_arms(po)
    config = config or NuisanceConfig()
    extra: Dict[str, Any] = {}

    p_min, p_max = float(np.min(po.pseudo)), float(np.max(po.pseudo))
    if p_max == p_min:
        extra.update({'epsilon': 0.0, 'eif_score_mean': 0.0, 'scale': [p_min, p_max]})
        extra['settings'] = config.settings('tmle', seed)
        extra.update(diagnostics or {})
        return build_report('tmle', po.tau, 0.0, 0.0, po.n1, po.n0, extra)

    width = p_max - p_min
    scaled = (po.pseudo - p_min) / width
    nuisances = fit_nuisances(po, scaled, 'tmle', config, seed)
    qlo, qhi = config.q_bounds
    q_a = np.clip(nuisances.q_a, qlo, qhi)
    q1 = np.clip(nuisances.q1, qlo, qhi)
    q0 = np.clip(nuisances.q0, qlo, qhi)
    g = nuisances.g
    a = po.arm.astype(float)

    h_a = a / g - (1.0 - a) / (1.0 - g)
    h1 = 1.0 / g
    h0 = -1.0 / (1.0 - g)

    epsilon = solve_fluctuation(h_a, scaled, q_a)
    q_a_star = expit(logit(q_a) + epsilon * h_a)
    q1_star = expit(logit(q1) + epsilon * h1)
    q0_star = expit(logit(q0) + epsilon * h0)

    score_mean = float(np.mean(h_a * (scaled - q_a_star)))
    if abs(score_mean) >= SCORE_TOLERANCE:
        raise FluctuationException(
            f"Fluctuation left a score mean of {score_mean:.3g}",
            diagnostics={'epsilon': epsilon, 'eif_score_mean': score_mean},
        )

    psi_scaled = float(np.mean(q1_star - q0_star))
    psi = psi_scaled * width
    eif = width * (h_a * (scaled - q_a_star) + q1_star - q0_star - psi_scaled)
    se = float(np.std(eif, ddof=1) / np.sqrt(po.n))

    extra.update(nuisances.diagnostics)
    extra.update({
        'epsilon': float(epsilon),
        'eif_score_mean': score_mean,
        'initial_estimate': float(np.mean(q1 - q0) * width),
        'scale': [p_min, p_max],
    })
    extra['settings'] = config.settings('tmle', seed)
    extra.update(diagnostics or {})
    logger.debug(f"TMLE: epsilon={epsilon:.6g}, estimate={psi:.4f}, se={se:.4f}")
    return build_report('tmle', po.tau, psi, se, po.n1, po.n0, extra)


def estimate(
    po: PseudoDataset,
    method: str = 'tmle',
    config: Optional[NuisanceConfig] = None,
    seed: Optional[int] = None,
    plugin_difference: Optional[float] = None,
) -> EstimateReport:
    """Run one estimator by name.

    Args:
        po: Merged pseudo-dataset.
        method: One of 'unadjusted', 'gee', 'aiptw', 'tmle'.
        config: Nuisance settings (AIPTW/TMLE).
        seed: Fold-plan seed.
        plugin_difference: Kaplan-Meier plug-in difference, echoed in diagnostics.
    """
    if method not in METHODS:
        raise DataValidationException(f"Unknown method '{method}'. Available: {', '.join(METHODS)}")
    config = config or NuisanceConfig()
    extra: Dict[str, Any] = {'provenance': po.provenance}
    if plugin_difference is not None:
        extra['plugin_difference'] = float(plugin_difference)

    if method == 'unadjusted':
        extra['settings'] = config.settings(method, seed)
        return estimate_unadjusted(po, extra)
    if method == 'gee':
        extra['settings'] = config.settings(method, seed)
        return estimate_gee(po, extra)
    if method == 'aiptw':
        return estimate_aiptw(po, config, seed, extra)
    return estimate_tmle(po, config, seed, extra)
