"""Abstract base class for nuisance learners.

A Learner turns the covariate matrix it is given into a working design
(adding interactions, squares, or nothing) and fits a GLM on it. The
super learner and the estimators only depend on this interface, so any
learner with ``prepare``/``expand`` can join a library.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from rmst_targeted.learners.glm import GlmFit, fit_glm, predict_glm


@dataclass(frozen=True, eq=False)
class LearnerFit:
    """A learner fitted on one training set.

    Attributes:
        learner: The learner that produced this fit.
        state: Data-dependent expansion choices made at fit time.
        glm: GLM fitted on the expanded design.
        input_names: Column names of the matrix the learner was given.
    """
    learner: 'Learner'
    state: Dict[str, Any]
    glm: GlmFit
    input_names: List[str]

    @property
    def name(self) -> str:
        return self.learner.name

    def predict(self, X: np.ndarray) -> np.ndarray:
        design, _ = self.learner.expand(np.asarray(X, dtype=float), self.input_names, self.state)
        return predict_glm(self.glm, design)


class Learner(ABC):
    """Abstract nuisance learner.

    Subclasses decide the working design; fitting is always a GLM of the
    requested family on that design.
    """

    name: str = ''

    def prepare(self, X: np.ndarray, names: Sequence[str]) -> Dict[str, Any]:
        """Record data-dependent choices (e.g. which columns to square).

        Returns:
            State passed back to ``expand`` at fit and predict time.
        """
        return {}

    @abstractmethod
    def expand(
        self,
        X: np.ndarray,
        names: Sequence[str],
        state: Dict[str, Any],
    ) -> Tuple[np.ndarray, List[str]]:
        """Build the working design (intercept excluded) and its column names."""
        pass

    def fit(self, X: np.ndarray, y: np.ndarray, names: Sequence[str], family: str) -> LearnerFit:
        """Fit the learner.

        Raises:
            RankDeficientException: Working design is collinear.
        """
        X = np.asarray(X, dtype=float)
        names = list(names)
        state = self.prepare(X, names)
        design, design_names = self.expand(X, names, state)
        glm = fit_glm(design, y, family, names=design_names)
        return LearnerFit(learner=self, state=state, glm=glm, input_names=names)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"
