"""rmst_targeted: RMST differences from jackknife pseudo-observations.

Estimates the difference in restricted mean survival time between two
arms of a trial. Censoring is handled once, by turning each subject's
censored record into a Kaplan-Meier pseudo-value; after that any
treatment-effect estimator for a complete outcome applies.

Core Components:
- Dataset: CSV ingest, validation and covariate encoding
- Survival: Kaplan-Meier curves and exact RMST
- Pseudo: jackknife pseudo-values (fast per-arm path and naive oracle)
- Learners: GLMs, the learner interface and the super learner
- Estimators: unadjusted, GEE, AIPTW, TMLE
- Sensitivity: copy-reference analysis of the censoring assumption
- Simulation: scenarios with known truth, replicate studies
- Types: report primitives and exception hierarchy

Data flow:
```
    CSV
     ↓
    StudyData (validated, encoded)
     ↓
    PseudoDataset (one pseudo-value per subject)
     ↓                           ↘
    estimate(method)        cr_pseudo → estimate(method)
     ↓                           ↓
    EstimateReport          CRResult
```

Basic Usage Example:
```python
from rmst_targeted import load_csv, rmst_pseudo_per_arm, estimate

data = load_csv('trial.csv')
po = rmst_pseudo_per_arm(data, tau=160)
report = estimate(po, method='tmle', seed=7)
print(report['estimate'], report['se'])
```
"""

__version__ = '1.0.0'

from rmst_targeted.types import (
    RmstValue,
    EstimateReport,
    CRResult,
    TruthRecord,
    RmstException,
    DataValidationException,
    SchemaException,
    ParseException,
    ScenarioException,
    TauSupportException,
    PseudoValueException,
    EstimationException,
    RankDeficientException,
    LearnerException,
    FluctuationException,
)

from rmst_targeted.dataset import StudyData, load_csv, read_frame, write_csv, split_by_arm
from rmst_targeted.survival import kaplan_meier, rmst, rmst_difference_plugin
from rmst_targeted.pseudo import (
    PseudoDataset,
    jackknife_pseudo,
    rmst_pseudo_fast,
    rmst_pseudo_naive,
    rmst_pseudo_per_arm,
)
from rmst_targeted.estimators import (
    NuisanceConfig,
    estimate,
    estimate_unadjusted,
    estimate_gee,
    estimate_aiptw,
    estimate_tmle,
)
from rmst_targeted.sensitivity import build_tentative_dataset, cr_pseudo, run_cr_analysis
from rmst_targeted.simulation import SimScenario, generate, get_scenario, true_rmst, truth
from rmst_targeted.logging import Logger

__all__ = [
    # Types - report primitives
    'RmstValue',
    'EstimateReport',
    'CRResult',
    'TruthRecord',

    # Exceptions
    'RmstException',
    'DataValidationException',
    'SchemaException',
    'ParseException',
    'ScenarioException',
    'TauSupportException',
    'PseudoValueException',
    'EstimationException',
    'RankDeficientException',
    'LearnerException',
    'FluctuationException',

    # Data and survival
    'StudyData',
    'load_csv',
    'read_frame',
    'write_csv',
    'split_by_arm',
    'kaplan_meier',
    'rmst',
    'rmst_difference_plugin',

    # Pseudo-observations
    'PseudoDataset',
    'jackknife_pseudo',
    'rmst_pseudo_fast',
    'rmst_pseudo_naive',
    'rmst_pseudo_per_arm',

    # Estimation
    'NuisanceConfig',
    'estimate',
    'estimate_unadjusted',
    'estimate_gee',
    'estimate_aiptw',
    'estimate_tmle',

    # Sensitivity and simulation
    'build_tentative_dataset',
    'cr_pseudo',
    'run_cr_analysis',
    'SimScenario',
    'generate',
    'get_scenario',
    'true_rmst',
    'truth',

    'Logger',
]
