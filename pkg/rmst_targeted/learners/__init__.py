"""Nuisance learners - GLMs, the learner interface, and the super learner."""

from rmst_targeted.learners.base import Learner, LearnerFit
from rmst_targeted.learners.glm import BINOMIAL, GAUSSIAN, GlmFit, fit_glm
from rmst_targeted.learners.library import (
    DEFAULT_LIBRARY,
    get_learner,
    parse_library,
    resolve_library,
)
from rmst_targeted.learners.superlearner import (
    EnsembleModel,
    FoldPlan,
    fit_single,
    fit_super_learner,
    make_fold_plan,
    predict,
)

__all__ = [
    'Learner',
    'LearnerFit',
    'GlmFit',
    'fit_glm',
    'GAUSSIAN',
    'BINOMIAL',
    'DEFAULT_LIBRARY',
    'get_learner',
    'parse_library',
    'resolve_library',
    'EnsembleModel',
    'FoldPlan',
    'fit_single',
    'fit_super_learner',
    'make_fold_plan',
    'predict',
]
