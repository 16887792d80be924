"""Report primitives and exception hierarchy for rmst_targeted.

Reports are TypedDicts because they flow straight to JSON. Array-backed
containers (StudyData, StepSurvival, PseudoDataset, fitted learners) live
next to the code that builds them.
"""

from typing import Any, Dict, List, Optional, Sequence, TypedDict


# Report primitives - data that leaves the library as JSON


class RmstValue(TypedDict):
    """Restricted mean survival time of one curve.

    Attributes:
        value: Area under the survival curve on [0, tau], in days.
        tau: Restriction time, in days.
    """
    value: float
    tau: float


class EstimateReport(TypedDict):
    """Output of a treatment-effect estimator.

    Attributes:
        method: One of 'unadjusted', 'gee', 'aiptw', 'tmle'.
        tau: Restriction time the pseudo-values were computed at.
        estimate: Estimated RMST difference (treated minus control), days.
        se: Standard error of the estimate.
        ci_low: Lower end of the 95% Wald interval.
        ci_high: Upper end of the 95% Wald interval.
        p_value: Two-sided normal p-value for a zero difference.
        n1: Treated-arm size.
        n0: Control-arm size.
        diagnostics: Propensity summary, fluctuation, learner weights, settings.
    """
    method: str
    tau: float
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    n1: int
    n0: int
    diagnostics: Dict[str, Any]


class CRResult(TypedDict):
    """Main and copy-reference reports for one estimator.

    Attributes:
        main_report: Estimate on the main-analysis pseudo-values.
        cr_report: Estimate on the copy-reference pseudo-values.
        replaced_count: Treated censored subjects whose values were replaced.
        tentative_dataset_size: Size of the pooled tentative dataset.
    """
    main_report: EstimateReport
    cr_report: EstimateReport
    replaced_count: int
    tentative_dataset_size: int


class TruthRecord(TypedDict):
    """Analytic truth of a simulation scenario.

    Attributes:
        theta_true: mu1_true - mu0_true, days.
        mu1_true: True treated-arm RMST.
        mu0_true: True control-arm RMST.
        method: 'closed_form' or 'numeric_integration'.
    """
    theta_true: float
    mu1_true: float
    mu0_true: float
    method: str


REPORT_FIELDS = (
    'method', 'tau', 'estimate', 'se', 'ci_low', 'ci_high',
    'p_value', 'n1', 'n0', 'diagnostics',
)

METHODS = ('unadjusted', 'gee', 'aiptw', 'tmle')


# Exception hierarchy


class RmstException(Exception):
    """Base exception for all rmst_targeted errors."""
    pass


class DataValidationException(RmstException):
    """Input data violates a precondition.

    Raised when:
    - A required value is missing
    - arm or event is outside {0, 1}
    - time is not positive
    - ids are duplicated or an arm has fewer than two subjects
    """
    pass


class SchemaException(DataValidationException):
    """A required column is missing or a design does not match its schema."""
    pass


class ParseException(DataValidationException):
    """A cell could not be parsed as a number.

    Attributes:
        row: 1-based data row number (header excluded).
        column: Column name.
    """

    def __init__(self, message: str, row: int, column: str):
        super().__init__(message)
        self.row = row
        self.column = column


class ScenarioException(DataValidationException):
    """Unknown scenario name or invalid scenario parameters."""
    pass


class TauSupportException(RmstException):
    """tau lies beyond the observed support.

    Attributes:
        max_tau: Largest tau the offending sample supports.
        arm: Arm label, when the failure is arm specific.
        subject: Subject id, when a leave-one-out subsample failed.
        index: 0-based position of the omitted observation.
    """

    def __init__(
        self,
        message: str,
        max_tau: float,
        arm: Optional[int] = None,
        subject: Optional[str] = None,
        index: Optional[int] = None,
    ):
        super().__init__(message)
        self.max_tau = max_tau
        self.arm = arm
        self.subject = subject
        self.index = index


class PseudoValueException(RmstException):
    """A functional failed on a leave-one-out subsample.

    Attributes:
        index: 0-based position of the omitted observation.
    """

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class EstimationException(RmstException):
    """An estimator could not produce a result."""
    pass


class RankDeficientException(EstimationException):
    """Design matrix is not of full column rank.

    Attributes:
        columns: Names of the columns found to be linearly dependent.
    """

    def __init__(self, message: str, columns: Sequence[str]):
        super().__init__(message)
        self.columns: List[str] = list(columns)


class LearnerException(EstimationException):
    """Every base learner of a super learner failed."""
    pass


class FluctuationException(EstimationException):
    """The TMLE targeting step did not solve its score equation.

    Attributes:
        diagnostics: Bracket, score values and iteration details.
    """

    def __init__(self, message: str, diagnostics: Dict[str, Any]):
        super().__init__(message)
        self.diagnostics = diagnostics
