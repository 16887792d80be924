"""Validated run configuration built from parsed CLI arguments."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from rmst_targeted.estimators import NuisanceConfig
from rmst_targeted.learners import parse_library
from rmst_targeted.types import METHODS, DataValidationException

DEFAULT_METHOD = 'tmle'
DEFAULT_FOLDS = 10
DEFAULT_G_BOUNDS = (0.025, 0.975)
DEFAULT_SEED = 0


def parse_bounds(text: str) -> Tuple[float, float]:
    """Parse ``lo,hi`` into a pair of floats.

    Raises:
        DataValidationException: Not two comma-separated numbers.
    """
    parts = [part.strip() for part in str(text).split(',')]
    if len(parts) != 2:
        raise DataValidationException(f"--g-bounds expects 'lo,hi', got '{text}'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise DataValidationException(f"--g-bounds expects two numbers, got '{text}'")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs.

    Attributes:
        input: Input CSV path (pseudo, estimate, sensitivity).
        tau: Restriction time.
        method: Estimator name.
        learners: Learner names for both nuisances (None = method default).
        folds: Cross-validation folds.
        g_bounds: Propensity truncation bounds.
        seed: Seed for folds and simulation.
        out: Output path; None writes to standard output.
        threads: Worker cap.
        curves: Optional Kaplan-Meier curve export path (pseudo).
        tentative_out: Optional tentative pseudo-value export path (sensitivity).
        scenario: Scenario name (simulate).
        n: Sample size (simulate).
        truth: Print the scenario truth (simulate).
    """
    input: Optional[Path] = None
    tau: Optional[float] = None
    method: str = DEFAULT_METHOD
    learners: Optional[Tuple[str, ...]] = None
    folds: int = DEFAULT_FOLDS
    g_bounds: Tuple[float, float] = field(default=DEFAULT_G_BOUNDS)
    seed: int = DEFAULT_SEED
    out: Optional[Path] = None
    threads: int = 1
    curves: Optional[Path] = None
    tentative_out: Optional[Path] = None
    scenario: Optional[str] = None
    n: Optional[int] = None
    truth: bool = False

    @classmethod
    def from_args(cls, args) -> 'RunConfig':
        """Build and validate a config from an argparse namespace."""
        learners = getattr(args, 'learners', None)
        g_bounds = getattr(args, 'g_bounds', None)
        config = cls(
            input=Path(args.input) if getattr(args, 'input', None) else None,
            tau=getattr(args, 'tau', None),
            method=getattr(args, 'method', None) or DEFAULT_METHOD,
            learners=parse_library(learners) if learners else None,
            folds=DEFAULT_FOLDS if getattr(args, 'folds', None) is None else args.folds,
            g_bounds=parse_bounds(g_bounds) if g_bounds else DEFAULT_G_BOUNDS,
            seed=DEFAULT_SEED if getattr(args, 'seed', None) is None else args.seed,
            out=Path(args.out) if getattr(args, 'out', None) else None,
            threads=1 if getattr(args, 'threads', None) is None else args.threads,
            curves=Path(args.curves) if getattr(args, 'curves', None) else None,
            tentative_out=Path(args.tentative_out) if getattr(args, 'tentative_out', None) else None,
            scenario=getattr(args, 'scenario', None),
            n=getattr(args, 'n', None),
            truth=bool(getattr(args, 'truth', False)),
        )
        config.validate()
        return config

    def validate(self, require_tau: bool = False) -> None:
        """Check ranges.

        Raises:
            DataValidationException: Any flag out of range.
        """
        if self.tau is not None and not self.tau > 0:
            raise DataValidationException(f"--tau must be positive, got {self.tau}")
        if require_tau and self.tau is None:
            raise DataValidationException("--tau is required")
        if self.method not in METHODS:
            raise DataValidationException(f"--method must be one of {', '.join(METHODS)}")
        if self.folds < 2:
            raise DataValidationException(f"--folds must be at least 2, got {self.folds}")
        lo, hi = self.g_bounds
        if not (0.0 < lo < 0.5 < hi < 1.0):
            raise DataValidationException(
                f"--g-bounds must lie in (0, 0.5) x (0.5, 1), got {lo},{hi}"
            )
        if self.threads < 1:
            raise DataValidationException(f"--threads must be at least 1, got {self.threads}")
        if self.n is not None and self.n < 4:
            raise DataValidationException(f"--n must be at least 4, got {self.n}")

    def nuisance_config(self) -> NuisanceConfig:
        return NuisanceConfig(
            outcome_library=self.learners,
            propensity_library=self.learners,
            folds=self.folds,
            g_bounds=self.g_bounds,
            threads=self.threads,
        )
