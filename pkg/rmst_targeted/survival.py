"""Kaplan-Meier curves and restricted mean survival time.

RMST is computed from the step geometry of the curve, never by quadrature.
At a time with both events and censorings, censored subjects stay in the
risk set for the events (events precede censorings).
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from rmst_targeted.types import DataValidationException, RmstValue, TauSupportException


@dataclass(frozen=True, eq=False)
class StepSurvival:
    """Right-continuous Kaplan-Meier step function.

    Attributes:
        distinct_times: Strictly increasing distinct observed times.
        survival: S(t) on [t_k, t_{k+1}); S = 1 before the first time.
        at_risk: Number at risk just before each time.
        events: Number of events at each time.
    """
    distinct_times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    @property
    def max_time(self) -> float:
        """Largest observed time (event or censoring) of the sample."""
        return float(self.distinct_times[-1])

    @property
    def support(self) -> float:
        """Largest tau the curve determines: its largest observed time."""
        return self.max_time


def kaplan_meier(times, events) -> StepSurvival:
    """Product-limit estimate of the survival function.

    Args:
        times: Positive observed times.
        events: Event indicators (1 = event, 0 = censored).

    Raises:
        DataValidationException: Empty or mismatched input.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=int)
    if times.size == 0:
        raise DataValidationException("Kaplan-Meier needs at least one observation")
    if times.shape != events.shape:
        raise DataValidationException(
            f"times and events differ in length ({times.size} vs {events.size})"
        )

    distinct, inverse = np.unique(times, return_inverse=True)
    removed = np.bincount(inverse, minlength=distinct.size)
    n_events = np.bincount(inverse, weights=events, minlength=distinct.size).astype(int)
    # Subjects still at risk just before t_k: all with Y >= t_k
    at_risk = times.size - np.concatenate(([0], np.cumsum(removed)[:-1]))
    survival = np.cumprod(1.0 - n_events / at_risk)
    return StepSurvival(
        distinct_times=distinct,
        survival=survival,
        at_risk=at_risk.astype(int),
        events=n_events,
    )


def survival_at(curve: StepSurvival, t: float) -> float:
    """Evaluate S(t); constant at its last value after the last time."""
    k = np.searchsorted(curve.distinct_times, t, side='right')
    return 1.0 if k == 0 else float(curve.survival[k - 1])


def step_areas(distinct_times: np.ndarray, tau: float) -> np.ndarray:
    """Width within [0, tau] of each step [t_k, t_{k+1}).

    Returns an array of length m + 1: entry 0 is the width of [0, t_1),
    entry k the width of [t_k, t_{k+1}) with t_{m+1} = tau.
    """
    edges = np.minimum(np.concatenate(([0.0], distinct_times, [tau])), tau)
    return np.maximum(np.diff(edges), 0.0)


def rmst(curve: StepSurvival, tau: float) -> RmstValue:
    """Exact area under the step function on [0, tau].

    Raises:
        TauSupportException: tau beyond the largest observed time.
    """
    if not tau > 0:
        raise DataValidationException(f"tau must be positive, got {tau}")
    if tau > curve.support:
        raise TauSupportException(
            f"tau={tau} exceeds the largest observed time {curve.max_time}",
            max_tau=curve.support,
        )
    widths = step_areas(curve.distinct_times, tau)
    value = widths[0] + float(np.dot(widths[1:], curve.survival))
    return {'value': float(value), 'tau': float(tau)}


def max_tau(times, events) -> float:
    """Largest tau a sample supports: its largest observed time."""
    return kaplan_meier(times, events).support


def rmst_difference_plugin(data, tau: float) -> float:
    """Unadjusted plug-in difference of per-arm Kaplan-Meier RMST.

    Raises:
        TauSupportException: tau beyond either arm's support; ``arm`` is set.
    """
    values = {}
    for label in (1, 0):
        mask = data.arm == label
        try:
            values[label] = rmst(kaplan_meier(data.time[mask], data.event[mask]), tau)['value']
        except TauSupportException as e:
            raise TauSupportException(f"arm {label}: {e}", max_tau=e.max_tau, arm=label)
    return values[1] - values[0]


def curve_to_frame(curve: StepSurvival, arm=None) -> pd.DataFrame:
    """Curve as a table (time, survival, at_risk, events) for plotting."""
    frame = pd.DataFrame({
        'time': curve.distinct_times,
        'survival': curve.survival,
        'at_risk': curve.at_risk,
        'events': curve.events,
    })
    if arm is not None:
        frame.insert(0, 'arm', arm)
    return frame
