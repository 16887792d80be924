"""Jackknife pseudo-observations.

``jackknife_pseudo`` is the generic construction
``P_i = n * mu_hat - (n - 1) * mu_hat(-i)`` for any functional.
``rmst_pseudo_fast`` specialises it to Kaplan-Meier RMST in O(n log n) by
updating risk-set counts and step areas instead of refitting n curves;
``rmst_pseudo_naive`` is the O(n^2) refit kept as its oracle.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Sequence

import numpy as np
import pandas as pd

from rmst_targeted.dataset import StudyData, split_by_arm
from rmst_targeted.logging import Logger
from rmst_targeted.survival import kaplan_meier, max_tau, rmst, step_areas
from rmst_targeted.types import (
    DataValidationException,
    PseudoValueException,
    TauSupportException,
)

logger = Logger(__name__)

MAIN = 'main'
COPY_REFERENCE = 'copy_reference'


@dataclass(frozen=True, eq=False)
class PseudoDataset:
    """Merged pseudo-observation table, one row per subject, original order.

    Pseudo-values are not range restricted: they may be negative or
    exceed tau.
    """
    ids: np.ndarray
    covariates: np.ndarray
    arm: np.ndarray
    pseudo: np.ndarray
    event: np.ndarray
    time: np.ndarray
    tau: float
    provenance: str = MAIN
    covariate_names: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n1(self) -> int:
        return int(np.sum(self.arm == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self.arm == 0))

    def with_pseudo(self, pseudo: np.ndarray, provenance: str) -> 'PseudoDataset':
        """Copy with replaced pseudo-values."""
        return replace(self, pseudo=np.asarray(pseudo, dtype=float), provenance=provenance)

    def shifted(self, constant: float) -> 'PseudoDataset':
        """Copy with ``constant`` added to every pseudo-value."""
        return replace(self, pseudo=self.pseudo + constant)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'id': self.ids.astype(str),
            'arm': self.arm,
            'time': self.time,
            'event': self.event,
        })
        for j, name in enumerate(self.covariate_names):
            frame[name] = self.covariates[:, j]
        frame['pseudo_value'] = self.pseudo
        return frame


def _leave_one_out(sample: Any, i: int) -> Any:
    if isinstance(sample, np.ndarray):
        return np.delete(sample, i, axis=0)
    return list(sample[:i]) + list(sample[i + 1:])


def jackknife_pseudo(
    sample: Any,
    functional: Callable[[Any], float],
    threads: int = 1,
) -> np.ndarray:
    """Tukey pseudo-values of ``functional`` over ``sample``.

    Each value is computed independently, so the result is identical for
    any ``threads``.

    Args:
        sample: numpy array (observations along axis 0) or sequence.
        functional: Maps a sample to a real number.
        threads: Worker cap for the leave-one-out evaluations.

    Raises:
        TauSupportException: A leave-one-out subsample does not support tau;
            ``index`` names the omitted observation.
        PseudoValueException: Any other functional failure, with ``index``.
    """
    n = len(sample)
    if n < 2:
        raise DataValidationException(f"Jackknife needs at least 2 observations, got {n}")
    full = float(functional(sample))

    def pseudo_value(i: int) -> float:
        try:
            loo = float(functional(_leave_one_out(sample, i)))
        except TauSupportException as e:
            raise TauSupportException(
                f"leave-one-out sample without observation {i}: {e}",
                max_tau=e.max_tau, arm=e.arm, index=i,
            )
        except Exception as e:
            raise PseudoValueException(f"functional failed without observation {i}: {e}", index=i) from e
        return n * full - (n - 1) * loo

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(pseudo_value, range(n)))
    else:
        values = [pseudo_value(i) for i in range(n)]
    return np.asarray(values, dtype=float)


def rmst_pseudo_naive(times, events, tau: float, threads: int = 1) -> np.ndarray:
    """RMST pseudo-values by refitting the Kaplan-Meier curve n times."""
    sample = np.column_stack([np.asarray(times, dtype=float), np.asarray(events, dtype=float)])

    def functional(s: np.ndarray) -> float:
        return rmst(kaplan_meier(s[:, 0], s[:, 1].astype(int)), tau)['value']

    return jackknife_pseudo(sample, functional, threads=threads)


def loo_support(times, events) -> np.ndarray:
    """Largest tau each leave-one-out subsample supports.

    That is the subsample's largest observed time: the second largest
    distinct time when the omitted subject is alone at the last one.
    """
    times = np.asarray(times, dtype=float)
    curve = kaplan_meier(times, events)
    t, r = curve.distinct_times, curve.at_risk
    m = t.size
    k = np.searchsorted(t, times)
    alone_at_end = (k == m - 1) & (r[k] == 1)
    return np.where(alone_at_end, t[m - 2] if m > 1 else np.nan, t[m - 1])


def max_pseudo_tau(times, events) -> float:
    """Largest tau valid for the sample and every leave-one-out subsample."""
    return float(min(np.min(loo_support(times, events)), max_tau(times, events)))


def rmst_pseudo_arrays(times, events, tau: float, ids=None, arm=None) -> np.ndarray:
    """Fast RMST pseudo-values of one sample treated as a single cohort."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=int)
    n = times.size
    if n < 2:
        raise DataValidationException(f"Jackknife needs at least 2 observations, got {n}")

    curve = kaplan_meier(times, events)
    full = rmst(curve, tau)['value']
    support = loo_support(times, events)
    bad = np.flatnonzero(tau > support)
    if bad.size:
        i = int(bad[0])
        subject = str(ids[i]) if ids is not None else str(i)
        where = f"arm {arm}, " if arm is not None else ""
        raise TauSupportException(
            f"tau={tau} exceeds the support of the leave-one-out sample "
            f"({where}subject {subject}); largest valid tau is {support[i]}",
            max_tau=float(np.min(support)), arm=arm, subject=subject, index=i,
        )

    t, d, r = curve.distinct_times, curve.events.astype(float), curve.at_risk.astype(float)
    m = t.size
    widths = step_areas(t, tau)
    w0, w = widths[0], widths[1:]

    # Factors with the omitted subject removed from the risk set
    reduced = np.where(r >= 2, 1.0 - d / np.where(r >= 2, r - 1.0, 1.0), 1.0)
    prefix = np.cumprod(reduced)
    prefix_prev = np.concatenate(([1.0], prefix[:-1]))
    area_prev = np.concatenate(([0.0], np.cumsum(w * prefix)[:-1]))

    # tail[k]: area after t_k relative to S(t_k), from the untouched factors
    factor = 1.0 - d / r
    tail = np.zeros(m)
    for j in range(m - 2, -1, -1):
        tail[j] = factor[j + 1] * (w[j + 1] + tail[j + 1])

    k = np.searchsorted(t, times)
    r_k = r[k]
    own = np.where(r_k >= 2, 1.0 - (d[k] - events) / np.where(r_k >= 2, r_k - 1.0, 1.0), 1.0)
    loo = w0 + area_prev[k] + prefix_prev[k] * own * (w[k] + tail[k])
    return n * full - (n - 1) * loo


def rmst_pseudo_fast(view, tau: float) -> np.ndarray:
    """RMST pseudo-values for one arm (any object with ``time``/``event``).

    Matches ``rmst_pseudo_naive`` to rounding error.

    Raises:
        TauSupportException: tau beyond the support of the arm or of one of
            its leave-one-out subsamples; names the subject.
    """
    return rmst_pseudo_arrays(
        view.time, view.event, tau,
        ids=getattr(view, 'ids', None), arm=getattr(view, 'arm', None),
    )


def rmst_pseudo_per_arm(
    data: StudyData,
    tau: float,
    method: str = 'fast',
    threads: int = 1,
) -> PseudoDataset:
    """Per-arm RMST pseudo-values merged into one dataset.

    Args:
        data: Two-arm study data.
        tau: Restriction time.
        method: 'fast' or 'naive'.
        threads: Worker cap for the naive path.

    Raises:
        TauSupportException: Names the arm and, for leave-one-out failures,
            the subject.
    """
    if method not in ('fast', 'naive'):
        raise ValueError(f"Unknown pseudo-value method: {method}")
    pseudo = np.empty(data.n)
    for view in split_by_arm(data):
        try:
            if method == 'fast':
                values = rmst_pseudo_fast(view, tau)
            else:
                values = rmst_pseudo_naive(view.time, view.event, tau, threads=threads)
        except TauSupportException as e:
            subject = e.subject
            if e.index is not None and method == 'naive':
                subject = str(view.ids[e.index])
            raise TauSupportException(
                f"arm {view.arm}: {e}", max_tau=e.max_tau, arm=view.arm,
                subject=subject, index=e.index,
            )
        pseudo[view.indices] = values
        logger.debug(f"arm {view.arm}: {view.n} pseudo-values, mean {values.mean():.4f}")

    return PseudoDataset(
        ids=data.ids,
        covariates=data.covariates,
        arm=data.arm,
        pseudo=pseudo,
        event=data.event,
        time=data.time,
        tau=float(tau),
        provenance=MAIN,
        covariate_names=data.covariate_names,
    )


def jackknife_mean(pseudo_values: Sequence[float]) -> float:
    """Jackknife estimate: the mean of the pseudo-values."""
    values = np.asarray(pseudo_values, dtype=float)
    if values.size == 0:
        raise DataValidationException("jackknife_mean needs at least one value")
    return float(values.mean())


def jackknife_variance(pseudo_values: Sequence[float]) -> float:
    """Variance of the jackknife mean: sum((P_i - P_bar)^2) / (n (n - 1))."""
    values = np.asarray(pseudo_values, dtype=float)
    n = values.size
    if n < 2:
        raise DataValidationException(f"jackknife_variance needs at least 2 values, got {n}")
    return float(np.sum((values - values.mean()) ** 2) / (n * (n - 1)))
