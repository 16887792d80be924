"""Concrete learners and the name registry behind ``--learners``.

Default library:
    mean             intercept only
    glm              main effects
    glm_interaction  main effects + treatment x covariate products
    glm_squared      main effects + squares of non-binary covariates
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from rmst_targeted.learners.base import Learner
from rmst_targeted.types import DataValidationException

TREATMENT_COLUMN = 'arm'


class MeanLearner(Learner):
    """Intercept-only GLM."""

    name = 'mean'

    def expand(self, X, names, state) -> Tuple[np.ndarray, List[str]]:
        return np.zeros((X.shape[0], 0)), []


class MainTermsLearner(Learner):
    """GLM on the covariates as given."""

    name = 'glm'

    def expand(self, X, names, state) -> Tuple[np.ndarray, List[str]]:
        return X, list(names)


class TreatmentInteractionLearner(Learner):
    """Main effects plus products of the treatment column with each covariate.

    Without a treatment column (propensity models) this is the main-terms GLM.
    """

    name = 'glm_interaction'

    def expand(self, X, names, state) -> Tuple[np.ndarray, List[str]]:
        names = list(names)
        if TREATMENT_COLUMN not in names:
            return X, names
        a = names.index(TREATMENT_COLUMN)
        others = [j for j in range(len(names)) if j != a]
        products = X[:, others] * X[:, [a]]
        return (
            np.hstack([X, products]),
            names + [f'{TREATMENT_COLUMN}:{names[j]}' for j in others],
        )


class SquaredTermsLearner(Learner):
    """Main effects plus squares of covariates with more than two distinct values."""

    name = 'glm_squared'

    def prepare(self, X, names) -> Dict[str, Any]:
        columns = [
            j for j, name in enumerate(names)
            if name != TREATMENT_COLUMN and np.unique(X[:, j]).size > 2
        ]
        return {'squared': columns}

    def expand(self, X, names, state) -> Tuple[np.ndarray, List[str]]:
        columns = state.get('squared', [])
        squares = X[:, columns] ** 2
        return (
            np.hstack([X, squares]),
            list(names) + [f'{names[j]}^2' for j in columns],
        )


LEARNERS = {
    learner.name: learner
    for learner in (
        MeanLearner(),
        MainTermsLearner(),
        TreatmentInteractionLearner(),
        SquaredTermsLearner(),
    )
}

DEFAULT_LIBRARY = ('mean', 'glm', 'glm_interaction', 'glm_squared')


def get_learner(name: str) -> Learner:
    """Look up a learner by identifier.

    Raises:
        DataValidationException: Unknown identifier.
    """
    try:
        return LEARNERS[name]
    except KeyError:
        raise DataValidationException(
            f"Unknown learner '{name}'. Available: {', '.join(sorted(LEARNERS))}"
        )


def resolve_library(names: Optional[Sequence[str]]) -> List[Learner]:
    """Learners for ``names`` (default library when None or empty)."""
    names = list(names) if names else list(DEFAULT_LIBRARY)
    return [get_learner(name) for name in names]


def parse_library(text: str) -> Tuple[str, ...]:
    """Parse a comma-separated ``--learners`` value, validating each name."""
    names = tuple(part.strip() for part in text.split(',') if part.strip())
    if not names:
        raise DataValidationException("--learners needs at least one learner")
    for name in names:
        get_learner(name)
    return names
