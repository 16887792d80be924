"""Synthetic two-arm survival studies with known RMST contrasts.

A scenario draws covariates X, treatment A ~ Bernoulli(g0(X)), an event
time from a proportional-hazards Weibull law

    S(t | X, a) = exp(-lambda_a(X) t^k),  lambda_a(X) = rate_a exp(beta'X)

and an exponential censoring time with rate c exp(beta_c'X + gamma_c a).
The true RMST of each arm is the covariate average of the closed-form
conditional RMST, so every scenario has an exact (or quadrature-exact)
truth to test estimators against.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, gamma, gammainc

from rmst_targeted.dataset import StudyData
from rmst_targeted.encoding import NUMERIC, CovariateSchema
from rmst_targeted.estimators import NuisanceConfig, estimate
from rmst_targeted.logging import Logger
from rmst_targeted.pseudo import rmst_pseudo_per_arm
from rmst_targeted.types import (
    DataValidationException,
    ScenarioException,
    TauSupportException,
    TruthRecord,
)

logger = Logger(__name__)

UNIFORM = 'uniform'
BERNOULLI = 'bernoulli'

MONTE_CARLO_DRAWS = 1_000_000
QUAD_TOLERANCE = 1e-10
CLOSED_FORM = 'closed_form'
NUMERIC_INTEGRATION = 'numeric_integration'


@dataclass(frozen=True)
class CovariateLaw:
    """Distribution of one covariate: uniform(low, high) or Bernoulli(p)."""
    kind: str = UNIFORM
    low: float = 0.0
    high: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind == UNIFORM:
            if not self.low < self.high:
                raise ScenarioException(f"uniform law needs low < high, got ({self.low}, {self.high})")
        elif self.kind == BERNOULLI:
            if not 0.0 <= self.p <= 1.0:
                raise ScenarioException(f"Bernoulli law needs p in [0, 1], got {self.p}")
        else:
            raise ScenarioException(f"Unknown covariate law '{self.kind}'")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == UNIFORM:
            return rng.uniform(self.low, self.high, size=n)
        return (rng.random(n) < self.p).astype(float)


@dataclass(frozen=True)
class SimScenario:
    """A data-generating mechanism plus the analyst's nuisance overrides.

    Attributes:
        name: Scenario identifier.
        covariates: One law per covariate (may be empty).
        treatment_intercept: Intercept of the logistic g0.
        treatment_coef: Covariate coefficients of the logistic g0.
        treatment_constant: Constant g0, used instead of the logistic model.
        event_rate: Baseline Weibull rate (control, treated).
        event_coef: Covariate coefficients of the event hazard.
        event_shape: Weibull shape k (1 = exponential).
        censor_rate: Baseline censoring rate c; 0 means no censoring.
        censor_coef: Covariate coefficients of the censoring hazard.
        censor_treatment: Treatment coefficient of the censoring hazard.
        tau: Restriction time.
        seed: Default seed for generation and Monte-Carlo truths.
        outcome_library: Analyst's outcome learners (None = method default).
        propensity_library: Analyst's propensity learners (None = method default).
    """
    name: str
    covariates: Tuple[CovariateLaw, ...] = ()
    treatment_intercept: float = 0.0
    treatment_coef: Tuple[float, ...] = ()
    treatment_constant: Optional[float] = None
    event_rate: Tuple[float, float] = (0.1, 0.1)
    event_coef: Tuple[float, ...] = ()
    event_shape: float = 1.0
    censor_rate: float = 0.0
    censor_coef: Tuple[float, ...] = ()
    censor_treatment: float = 0.0
    tau: float = 10.0
    seed: int = 0
    outcome_library: Optional[Tuple[str, ...]] = None
    propensity_library: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        d = len(self.covariates)
        for attr in ('treatment_coef', 'event_coef', 'censor_coef'):
            coef = getattr(self, attr)
            if coef and len(coef) != d:
                raise ScenarioException(f"{self.name}: {attr} has {len(coef)} entries for {d} covariates")
        if len(self.event_rate) != 2 or min(self.event_rate) <= 0:
            raise ScenarioException(f"{self.name}: event rates must be two positive numbers")
        if self.event_shape <= 0:
            raise ScenarioException(f"{self.name}: Weibull shape must be positive")
        if self.censor_rate < 0:
            raise ScenarioException(f"{self.name}: censoring rate must be non-negative")
        if self.tau <= 0:
            raise ScenarioException(f"{self.name}: tau must be positive")
        if self.treatment_constant is not None and not 0.0 <= self.treatment_constant <= 1.0:
            raise ScenarioException(f"{self.name}: constant treatment probability must lie in [0, 1]")

    @property
    def dimension(self) -> int:
        return len(self.covariates)

    @property
    def covariate_names(self) -> List[str]:
        return [f'x{j + 1}' for j in range(self.dimension)]

    def _linear(self, coef: Tuple[float, ...], X: np.ndarray) -> np.ndarray:
        if not coef:
            return np.zeros(X.shape[0])
        return X @ np.asarray(coef, dtype=float)

    def propensity(self, X: np.ndarray) -> np.ndarray:
        """g0(X) = P(A = 1 | X)."""
        if self.treatment_constant is not None:
            return np.full(X.shape[0], self.treatment_constant)
        return expit(self.treatment_intercept + self._linear(self.treatment_coef, X))

    def hazard_scale(self, X: np.ndarray, arm: int) -> np.ndarray:
        """lambda_a(X) for every row of X."""
        return self.event_rate[arm] * np.exp(self._linear(self.event_coef, X))

    def censoring_scale(self, X: np.ndarray, arm: np.ndarray) -> np.ndarray:
        return self.censor_rate * np.exp(self._linear(self.censor_coef, X) + self.censor_treatment * arm)

    def nuisance_config(self, base: Optional[NuisanceConfig] = None) -> NuisanceConfig:
        """``base`` with this scenario's learner overrides applied."""
        base = base or NuisanceConfig()
        changes = {}
        if self.outcome_library is not None:
            changes['outcome_library'] = self.outcome_library
        if self.propensity_library is not None:
            changes['propensity_library'] = self.propensity_library
        return replace(base, **changes) if changes else base


_CONFOUNDED = dict(
    covariates=(CovariateLaw(UNIFORM, 0.0, 1.0),),
    treatment_intercept=-0.5,
    treatment_coef=(1.5,),
    event_rate=(0.08, 0.08 * float(np.exp(-0.4))),
    event_coef=(0.8,),
    censor_rate=0.03,
    tau=12.0,
)

SCENARIOS: Dict[str, SimScenario] = {
    'S0': SimScenario(
        name='S0',
        covariates=(CovariateLaw(UNIFORM, 0.0, 1.0),),
        treatment_constant=0.5,
        event_rate=(0.08, 0.08),
        event_coef=(0.8,),
        censor_rate=0.03,
        tau=12.0,
    ),
    'S1': SimScenario(name='S1', **_CONFOUNDED),
    'S1-misQ': SimScenario(name='S1-misQ', outcome_library=('glm',), **_CONFOUNDED),
    'S1-misG': SimScenario(name='S1-misG', propensity_library=('mean',), **_CONFOUNDED),
}


def get_scenario(name: str) -> SimScenario:
    """Built-in scenario by name.

    Raises:
        ScenarioException: Unknown name.
    """
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ScenarioException(
            f"Unknown scenario '{name}'. Available: {', '.join(sorted(SCENARIOS))}"
        )


def conditional_rmst(scale, shape: float, tau: float):
    """Closed-form integral of exp(-scale t^shape) over [0, tau]."""
    scale = np.asarray(scale, dtype=float)
    a = 1.0 / shape
    return a * scale ** (-a) * gamma(a) * gammainc(a, scale * tau ** shape)


def _marginalise(scenario: SimScenario, f: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, str]:
    """E_X[f(X)] under the covariate laws, with the method used."""
    laws = scenario.covariates
    if not laws:
        return float(f(np.zeros((1, 0)))[0]), CLOSED_FORM
    if all(law.kind == BERNOULLI for law in laws):
        points = np.array(list(itertools.product((0.0, 1.0), repeat=len(laws))))
        probs = np.prod([np.where(points[:, j] == 1.0, law.p, 1.0 - law.p) for j, law in enumerate(laws)], axis=0)
        return float(np.sum(probs * f(points))), CLOSED_FORM
    if len(laws) == 1:
        law = laws[0]
        value, _ = quad(
            lambda x: float(f(np.array([[x]]))[0]) / (law.high - law.low),
            law.low, law.high, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200,
        )
        return float(value), NUMERIC_INTEGRATION
    rng = np.random.default_rng(scenario.seed)
    draws = np.column_stack([law.sample(rng, MONTE_CARLO_DRAWS) for law in laws])
    return float(np.mean(f(draws))), NUMERIC_INTEGRATION


def marginal_survival(scenario: SimScenario, arm: int, t: float) -> float:
    """S^a(t) averaged over the covariate law."""
    value, _ = _marginalise(
        scenario, lambda X: np.exp(-scenario.hazard_scale(X, arm) * t ** scenario.event_shape)
    )
    return value


def _true_rmst(scenario: SimScenario, arm: int, numeric: bool = False) -> Tuple[float, str]:
    if numeric:
        value, _ = quad(
            lambda t: marginal_survival(scenario, arm, t), 0.0, scenario.tau,
            epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200,
        )
        return float(value), NUMERIC_INTEGRATION
    return _marginalise(
        scenario,
        lambda X: conditional_rmst(scenario.hazard_scale(X, arm), scenario.event_shape, scenario.tau),
    )


def true_rmst(scenario: SimScenario, arm: int, numeric: bool = False) -> float:
    """True RMST of arm ``arm`` at ``scenario.tau``.

    Args:
        scenario: Data-generating scenario.
        arm: 1 (treated) or 0 (control).
        numeric: Integrate the marginal survival curve by quadrature
            instead of using the closed-form conditional RMST.
    """
    if arm not in (0, 1):
        raise ScenarioException(f"arm must be 0 or 1, got {arm}")
    return _true_rmst(scenario, arm, numeric)[0]


def truth(scenario: SimScenario, numeric: bool = False) -> TruthRecord:
    """True RMST per arm and their difference."""
    mu1, method = _true_rmst(scenario, 1, numeric)
    mu0, _ = _true_rmst(scenario, 0, numeric)
    return {
        'theta_true': mu1 - mu0,
        'mu1_true': mu1,
        'mu0_true': mu0,
        'method': method,
    }


def censoring_probability(scenario: SimScenario, arm: int) -> float:
    """P(C < T) for exponential event and censoring laws without covariate effects.

    Raises:
        ScenarioException: The scenario has no analytic censoring probability.
    """
    if scenario.censor_rate == 0:
        return 0.0
    if scenario.event_shape != 1.0 or any(scenario.event_coef) or any(scenario.censor_coef):
        raise ScenarioException(
            f"{scenario.name}: censoring probability is analytic only for "
            f"covariate-free exponential laws"
        )
    c = scenario.censor_rate * np.exp(scenario.censor_treatment * arm)
    return float(c / (scenario.event_rate[arm] + c))


def generate(scenario: SimScenario, n: int, seed: Optional[int] = None) -> StudyData:
    """Draw a study of ``n`` subjects.

    Draw order is X, A, T, C, so a seed fixes the whole dataset.

    Raises:
        ScenarioException: n < 4.
        DataValidationException: The draw left an arm with fewer than two
            subjects (a warning is logged first).
    """
    if n < 4:
        raise ScenarioException(f"n must be at least 4, got {n}")
    rng = np.random.default_rng(scenario.seed if seed is None else seed)

    if scenario.dimension:
        X = np.column_stack([law.sample(rng, n) for law in scenario.covariates])
    else:
        X = np.zeros((n, 0))
    arm = (rng.random(n) < scenario.propensity(X)).astype(int)

    scale = np.where(arm == 1, scenario.hazard_scale(X, 1), scenario.hazard_scale(X, 0))
    event_time = (rng.standard_exponential(n) / scale) ** (1.0 / scenario.event_shape)

    censor_scale = scenario.censoring_scale(X, arm)
    unit = rng.standard_exponential(n)
    with np.errstate(divide='ignore'):
        censor_time = np.where(censor_scale > 0, unit / np.where(censor_scale > 0, censor_scale, 1.0), np.inf)

    time = np.minimum(event_time, censor_time)
    event = (event_time <= censor_time).astype(int)

    n1 = int(arm.sum())
    if n1 < 2 or n - n1 < 2:
        logger.warning(
            f"{scenario.name}: degenerate treatment mechanism produced n1={n1}, n0={n - n1}"
        )
    names = scenario.covariate_names
    schema = CovariateSchema(
        names=list(names),
        kinds={name: NUMERIC for name in names},
        levels={},
        encoded_names=list(names),
    )
    return StudyData(
        ids=np.array([str(i + 1) for i in range(n)], dtype=object),
        arm=arm,
        time=time,
        event=event,
        covariates=X,
        schema=schema,
    )


@dataclass
class StudySummary:
    """Aggregate of repeated estimation on simulated studies.

    Attributes:
        theta_true: True RMST difference.
        mean_estimate: Mean estimate over successful replicates.
        bias: mean_estimate - theta_true.
        mc_se: Monte-Carlo standard error of mean_estimate.
        coverage: Share of 95% intervals containing theta_true.
        mean_se: Mean reported standard error.
        max_abs_eif_score: Largest |eif_score_mean| (TMLE only, else 0).
        failed: Replicates skipped because of data or support errors.
    """
    scenario: str
    method: str
    n: int
    replicates: int
    theta_true: float
    mean_estimate: float
    bias: float
    mc_se: float
    coverage: float
    mean_se: float
    max_abs_eif_score: float
    failed: int = 0
    estimates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ses: np.ndarray = field(default_factory=lambda: np.zeros(0))


def run_study(
    scenario: SimScenario,
    n: int,
    replicates: int,
    method: str = 'tmle',
    base_seed: int = 0,
    threads: int = 1,
    config: Optional[NuisanceConfig] = None,
) -> StudySummary:
    """Generate, estimate and summarise ``replicates`` studies.

    Replicate r uses seed ``base_seed + r`` for both data and folds, so the
    summary does not depend on ``threads``.
    """
    if replicates < 1:
        raise DataValidationException(f"replicates must be at least 1, got {replicates}")
    config = scenario.nuisance_config(config)
    theta = truth(scenario)['theta_true']

    def replicate(r: int):
        seed = base_seed + r
        try:
            data = generate(scenario, n, seed=seed)
            po = rmst_pseudo_per_arm(data, scenario.tau)
        except (DataValidationException, TauSupportException) as e:
            logger.warning(f"{scenario.name} replicate {r} skipped: {e}")
            return None
        return estimate(po, method, config, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(replicate, range(replicates)))
    else:
        reports = [replicate(r) for r in range(replicates)]

    done = [report for report in reports if report is not None]
    if not done:
        raise DataValidationException(f"{scenario.name}: every replicate failed")
    estimates = np.array([report['estimate'] for report in done])
    ses = np.array([report['se'] for report in done])
    lows = np.array([report['ci_low'] for report in done])
    highs = np.array([report['ci_high'] for report in done])
    scores = [abs(report['diagnostics'].get('eif_score_mean', 0.0)) for report in done]

    mean_estimate = float(estimates.mean())
    summary = StudySummary(
        scenario=scenario.name,
        method=method,
        n=n,
        replicates=len(done),
        theta_true=theta,
        mean_estimate=mean_estimate,
        bias=mean_estimate - theta,
        mc_se=float(estimates.std(ddof=1) / np.sqrt(len(done))) if len(done) > 1 else float('nan'),
        coverage=float(np.mean((lows <= theta) & (theta <= highs))),
        mean_se=float(ses.mean()),
        max_abs_eif_score=float(max(scores)),
        failed=replicates - len(done),
        estimates=estimates,
        ses=ses,
    )
    logger.info(
        f"{scenario.name}/{method}: bias {summary.bias:.4f} "
        f"(MC se {summary.mc_se:.4f}), coverage {summary.coverage:.3f}"
    )
    return summary
