"""Cross-validated super learner with simplex stacking weights.

Each base learner's out-of-fold predictions are stacked by non-negative
least squares and the weights normalised to the simplex. Every surviving
learner is then refit on the full data. Given a seeded FoldPlan the result
does not depend on execution order or thread count.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import nnls
from sklearn.model_selection import StratifiedKFold

from rmst_targeted.learners.base import Learner, LearnerFit
from rmst_targeted.learners.glm import GlmFit, predict_glm
from rmst_targeted.learners.library import resolve_library
from rmst_targeted.logging import Logger
from rmst_targeted.types import (
    DataValidationException,
    EstimationException,
    LearnerException,
    SchemaException,
)

logger = Logger(__name__)

STACKING_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Cross-validation fold assignment.

    Attributes:
        V: Number of folds.
        assignment: Fold index (0..V-1) per row.
        seed: Seed that produced the assignment.
    """
    V: int
    assignment: np.ndarray
    seed: Optional[int] = None

    def train_test(self, v: int):
        return np.flatnonzero(self.assignment != v), np.flatnonzero(self.assignment == v)


def make_fold_plan(strata, V: int = 10, seed: Optional[int] = None) -> FoldPlan:
    """Stratified, seeded fold assignment.

    Each stratum is spread over the V folds as evenly as its size allows.

    Args:
        strata: Stratum label per row (the arm).
        V: Fold count, at least 2 and at most the row count.
        seed: Shuffle seed.

    Raises:
        DataValidationException: V < 2 or fewer rows than folds.
    """
    strata = np.asarray(strata)
    n = strata.size
    if V < 2:
        raise DataValidationException(f"Need at least 2 folds, got {V}")
    if n < V:
        raise DataValidationException(f"Cannot make {V} nonempty folds from {n} rows")
    labels, counts = np.unique(strata, return_counts=True)
    assignment = np.empty(n, dtype=int)
    if counts.max() >= V:
        splitter = StratifiedKFold(n_splits=V, shuffle=True, random_state=seed)
        with warnings.catch_warnings():
            # Strata smaller than V simply leave some folds without them
            warnings.simplefilter('ignore', UserWarning)
            for v, (_, test) in enumerate(splitter.split(np.zeros((n, 1)), strata)):
                assignment[test] = v
        return FoldPlan(V=V, assignment=assignment, seed=seed)

    # Every stratum smaller than V: deal shuffled rows round-robin over a
    # shuffled fold order, continuing the rotation across strata
    rng = np.random.default_rng(seed)
    order = rng.permutation(V)
    offset = 0
    for label in labels:
        rows = rng.permutation(np.flatnonzero(strata == label))
        assignment[rows] = order[(np.arange(rows.size) + offset) % V]
        offset += rows.size
    return FoldPlan(V=V, assignment=assignment, seed=seed)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """Fitted super learner.

    Attributes:
        base_fits: Surviving learners refit on the full data.
        weights: Simplex weights, aligned with ``base_fits``.
        cv_risks: Out-of-fold mean squared error per surviving learner.
        folds: Fold plan used for cross-validation.
        family: GLM family of the base learners.
        input_names: Column names of the training matrix.
        dropped: Learner name -> failure message, for learners removed.
        stacking_fallback: NNLS weights were replaced by the best single learner.
        cv_predictions: Out-of-fold prediction matrix (n x learners).
        cv_learners: Learner names aligned with ``cv_risks``.
    """
    base_fits: List[LearnerFit]
    weights: np.ndarray
    cv_risks: np.ndarray
    folds: Optional[FoldPlan]
    family: str
    input_names: List[str] = field(default_factory=list)
    dropped: Dict[str, str] = field(default_factory=dict)
    stacking_fallback: bool = False
    cv_predictions: Optional[np.ndarray] = None
    cv_learners: List[str] = field(default_factory=list)

    @property
    def learner_names(self) -> List[str]:
        return [fit.name for fit in self.base_fits]

    def weight_map(self) -> Dict[str, float]:
        return {name: float(w) for name, w in zip(self.learner_names, self.weights)}

    def risk_map(self) -> Dict[str, Optional[float]]:
        return {
            name: (float(r) if np.isfinite(r) else None)
            for name, r in zip(self.cv_learners, self.cv_risks)
        }

    def predict(self, X: np.ndarray) -> np.ndarray:
        base = np.column_stack([fit.predict(X) for fit in self.base_fits])
        return base @ self.weights


def _out_of_fold(learner: Learner, X, y, names, folds: FoldPlan, family: str) -> np.ndarray:
    predictions = np.empty(y.size)
    for v in range(folds.V):
        train, test = folds.train_test(v)
        fit = learner.fit(X[train], y[train], names, family)
        predictions[test] = fit.predict(X[test])
    return predictions


def stack_weights(Z: np.ndarray, y: np.ndarray):
    """NNLS stacking weights normalised to the simplex.

    Returns:
        (weights, fallback) where fallback is True when the normalised NNLS
        combination was worse than the best single column.
    """
    risks = np.mean((Z - y[:, None]) ** 2, axis=0)
    best = int(np.argmin(risks))
    raw, _ = nnls(Z, y)
    total = raw.sum()
    if total <= 0 or not np.isfinite(total):
        weights = np.zeros(Z.shape[1])
        weights[best] = 1.0
        return weights, True
    weights = raw / total
    ensemble_risk = np.mean((Z @ weights - y) ** 2)
    if ensemble_risk > risks[best] + STACKING_SLACK:
        weights = np.zeros(Z.shape[1])
        weights[best] = 1.0
        return weights, True
    return weights, False


def fit_super_learner(
    X,
    y,
    library: Sequence[Union[str, Learner]],
    folds: FoldPlan,
    family: str,
    names: Optional[Sequence[str]] = None,
    threads: int = 1,
) -> EnsembleModel:
    """Fit a super learner.

    Args:
        X: (n, p) training matrix.
        y: Length-n response.
        library: Learners or learner identifiers (non-empty).
        folds: Fold plan with V >= 2.
        family: 'gaussian' or 'binomial'.
        names: Column names of X (default x1..xp).
        threads: Worker cap for per-learner cross-validation.

    Raises:
        LearnerException: Every learner failed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = list(names) if names is not None else [f'x{j + 1}' for j in range(X.shape[1])]
    if not library:
        raise DataValidationException("Super learner library is empty")
    if folds.V < 2:
        raise DataValidationException(f"Need at least 2 folds, got {folds.V}")
    learners = [
        item if isinstance(item, Learner) else resolve_library([item])[0] for item in library
    ]

    def cross_validate(learner: Learner):
        try:
            return _out_of_fold(learner, X, y, names, folds, family), None
        except (EstimationException, np.linalg.LinAlgError) as e:
            return None, str(e)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(cross_validate, learners))
    else:
        outcomes = [cross_validate(learner) for learner in learners]

    dropped: Dict[str, str] = {}
    kept: List[Learner] = []
    columns: List[np.ndarray] = []
    for learner, (predictions, error) in zip(learners, outcomes):
        if error is not None:
            dropped[learner.name] = error
            logger.warning(f"Dropping learner '{learner.name}': {error}")
            continue
        kept.append(learner)
        columns.append(predictions)
    if not kept:
        raise LearnerException(f"All learners failed: {dropped}")

    Z = np.column_stack(columns)
    weights, fallback = stack_weights(Z, y)
    cv_risks = np.mean((Z - y[:, None]) ** 2, axis=0)

    base_fits: List[LearnerFit] = []
    final_weights: List[float] = []
    for learner, weight in zip(kept, weights):
        try:
            base_fits.append(learner.fit(X, y, names, family))
            final_weights.append(weight)
        except (EstimationException, np.linalg.LinAlgError) as e:
            dropped[learner.name] = str(e)
            logger.warning(f"Dropping learner '{learner.name}' on full-data refit: {e}")
    if not base_fits:
        raise LearnerException(f"All learners failed on the full data: {dropped}")
    final = np.asarray(final_weights, dtype=float)
    if final.sum() <= 0:
        final = np.full(final.size, 1.0 / final.size)
    else:
        final = final / final.sum()

    logger.debug(
        f"Super learner ({family}): risks {dict(zip([l.name for l in kept], cv_risks))}, "
        f"weights {dict(zip([f.name for f in base_fits], final))}"
    )
    return EnsembleModel(
        base_fits=base_fits,
        weights=final,
        cv_risks=cv_risks,
        folds=folds,
        family=family,
        input_names=names,
        dropped=dropped,
        stacking_fallback=fallback,
        cv_predictions=Z,
        cv_learners=[learner.name for learner in kept],
    )


def fit_single(learner: Union[str, Learner], X, y, family: str,
               names: Optional[Sequence[str]] = None) -> EnsembleModel:
    """One learner fitted on the full data, wrapped as a weight-1 ensemble."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = list(names) if names is not None else [f'x{j + 1}' for j in range(X.shape[1])]
    if not isinstance(learner, Learner):
        learner = resolve_library([learner])[0]
    fit = learner.fit(X, np.asarray(y, dtype=float), names, family)
    return EnsembleModel(
        base_fits=[fit], weights=np.ones(1), cv_risks=np.full(1, np.nan),
        folds=None, family=family, input_names=names,
        cv_learners=[fit.name],
    )


def predict(model: Union[GlmFit, LearnerFit, EnsembleModel], X, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Predict the mean response of any fitted model.

    Binomial models return probabilities in (0, 1); gaussian models the
    linear predictor.

    Raises:
        SchemaException: ``X`` (or ``names``) does not match the training schema.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if isinstance(model, GlmFit):
        expected = model.design_schema
    else:
        expected = model.input_names
    if X.shape[1] != len(expected) or (names is not None and list(names) != list(expected)):
        raise SchemaException(
            f"Prediction columns {list(names) if names is not None else X.shape[1]} "
            f"do not match training schema {expected}"
        )
    if isinstance(model, GlmFit):
        return predict_glm(model, X)
    return model.predict(X)
