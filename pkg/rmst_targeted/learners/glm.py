"""Generalized linear models fitted by iteratively reweighted least squares.

Two families are supported: ``gaussian`` (identity link, solved exactly in
one least-squares step) and ``binomial`` (logit link, IRLS). An intercept
is always prepended. Collinear designs are an error; there is no
pseudo-inverse fallback.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, logit

from rmst_targeted.logging import Logger
from rmst_targeted.types import (
    DataValidationException,
    RankDeficientException,
    SchemaException,
)

logger = Logger(__name__)

GAUSSIAN = 'gaussian'
BINOMIAL = 'binomial'
FAMILIES = (GAUSSIAN, BINOMIAL)
INTERCEPT = '(intercept)'

RANK_TOLERANCE = 1e-10
PROBABILITY_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Fitted GLM.

    Attributes:
        family: 'gaussian' (identity link) or 'binomial' (logit link).
        coefficients: Intercept first, then one per design column.
        converged: Whether IRLS met its tolerance.
        iterations: IRLS iterations used (1 for gaussian).
        design_schema: Design column names, intercept excluded.
        separation: Binomial fit drifted to fitted probabilities of 0 or 1.
        max_score: Max-norm of the score vector X'(y - mu) at the solution.
    """
    family: str
    coefficients: np.ndarray
    converged: bool
    iterations: int
    design_schema: List[str] = field(default_factory=list)
    separation: bool = False
    max_score: float = 0.0


def _with_intercept(design: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((design.shape[0], 1)), design])


def collinear_columns(matrix: np.ndarray, names: Sequence[str]) -> List[str]:
    """Names of the columns a pivoted QR finds dependent on earlier ones."""
    norms = np.linalg.norm(matrix, axis=0)
    scaled = matrix / np.where(norms > 0, norms, 1.0)
    _, r, pivots = qr(scaled, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        return []
    rank = int(np.sum(diag > RANK_TOLERANCE * max(diag[0], 1e-300)))
    return [names[int(j)] for j in sorted(pivots[rank:])]


def fit_glm(
    design,
    response,
    family: str,
    names: Optional[Sequence[str]] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> GlmFit:
    """Fit a GLM with intercept.

    Args:
        design: (n, p) matrix, intercept excluded.
        response: Length-n vector; in [0, 1] for binomial.
        family: 'gaussian' or 'binomial'.
        names: Design column names (default x1..xp).
        tol: Relative coefficient-change tolerance for IRLS.
        max_iter: IRLS iteration cap.

    Raises:
        RankDeficientException: Design (with intercept) is not full rank.
        DataValidationException: Shape mismatch or binomial response outside [0, 1].
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1)
    n, p = design.shape
    if y.shape != (n,):
        raise DataValidationException(f"Design has {n} rows but response has {y.size} values")
    if family not in FAMILIES:
        raise DataValidationException(f"Unknown GLM family: {family}")
    names = list(names) if names is not None else [f'x{j + 1}' for j in range(p)]
    if len(names) != p:
        raise SchemaException(f"{len(names)} names for {p} design columns")

    M = _with_intercept(design)
    dependent = collinear_columns(M, [INTERCEPT] + names)
    if dependent:
        raise RankDeficientException(
            f"Design is rank deficient; collinear columns: {', '.join(dependent)}",
            columns=dependent,
        )

    if family == GAUSSIAN:
        beta = np.linalg.lstsq(M, y, rcond=None)[0]
        score = M.T @ (y - M @ beta)
        return GlmFit(
            family=family, coefficients=beta, converged=True, iterations=1,
            design_schema=names, max_score=float(np.max(np.abs(score))),
        )

    if np.any((y < 0) | (y > 1)):
        raise DataValidationException("Binomial response must lie in [0, 1]")

    beta = np.zeros(p + 1)
    beta[0] = logit(np.clip(y.mean(), 0.01, 0.99))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = M @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), PROBABILITY_FLOOR)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        new_beta = np.linalg.lstsq(M * sw[:, None], z * sw, rcond=None)[0]
        change = np.max(np.abs(new_beta - beta))
        beta = new_beta
        if change < tol * max(np.max(np.abs(beta)), 1.0):
            converged = True
            break

    mu = expit(M @ beta)
    score = M.T @ (y - mu)
    separation = (not converged) or bool(
        np.any(mu < PROBABILITY_FLOOR) or np.any(mu > 1.0 - PROBABILITY_FLOOR)
    )
    if separation:
        logger.warning(
            f"Logistic fit on {names} shows separation "
            f"(converged={converged}, iterations={iterations})"
        )
    return GlmFit(
        family=family, coefficients=beta, converged=converged, iterations=iterations,
        design_schema=names, separation=separation, max_score=float(np.max(np.abs(score))),
    )


def predict_glm(fit: GlmFit, design) -> np.ndarray:
    """Mean response: identity for gaussian, inverse logit for binomial.

    Raises:
        SchemaException: Column count differs from the fitted design.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1)
    if design.shape[1] != len(fit.design_schema):
        raise SchemaException(
            f"Design has {design.shape[1]} columns, model expects "
            f"{len(fit.design_schema)} ({fit.design_schema})"
        )
    eta = _with_intercept(design) @ fit.coefficients
    return expit(eta) if fit.family == BINOMIAL else eta
