"""Two-arm right-censored survival data: ingest, validate, encode, export.

A CSV has reserved columns ``id``, ``arm``, ``time`` and ``event``; every
other column is a covariate. Missing cells are an error, never imputed.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from rmst_targeted.encoding import CovariateEncoder, CovariateSchema
from rmst_targeted.logging import Logger
from rmst_targeted.types import (
    DataValidationException,
    ParseException,
    SchemaException,
)

logger = Logger(__name__)

RESERVED = ('id', 'arm', 'time', 'event')
MISSING_TOKENS = frozenset({'', 'NA', 'NaN', 'nan', 'NULL', 'null'})


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: O_i = (X_i, A_i, Y_i, delta_i)."""
    id: str
    arm: int
    time: float
    event: int
    covariates: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class StudyData:
    """Validated two-arm survival data in column form.

    Attributes:
        ids: Subject identifiers (unique strings).
        arm: Treatment indicator A in {0, 1}.
        time: Observed time Y = min(T, C), positive days.
        event: Event indicator delta in {0, 1}; 0 means censored.
        covariates: Encoded covariate matrix, shape (n, schema.dimension).
        schema: Covariate schema used for the encoding.
        pooled: True for a single-cohort dataset (the copy-reference
            tentative dataset); the two-arm size check is skipped.
    """
    ids: np.ndarray
    arm: np.ndarray
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    schema: CovariateSchema = field(default_factory=CovariateSchema)
    pooled: bool = False

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=object)
        arm = np.asarray(self.arm)
        time = np.asarray(self.time, dtype=float)
        event = np.asarray(self.event)
        covariates = np.asarray(self.covariates, dtype=float)
        n = ids.shape[0]
        if covariates.ndim == 1 and covariates.size == 0:
            covariates = np.zeros((n, 0))

        for name, values in (('arm', arm), ('time', time), ('event', event)):
            if values.shape != (n,):
                raise DataValidationException(
                    f"'{name}' has {values.shape[0] if values.ndim else 0} values, expected {n}"
                )
        if covariates.shape != (n, self.schema.dimension):
            raise SchemaException(
                f"Covariate matrix shape {covariates.shape} does not match "
                f"({n}, {self.schema.dimension})"
            )
        if n == 0:
            raise DataValidationException("Study data has no records")

        _check_binary('arm', arm, ids)
        _check_binary('event', event, ids)
        bad_time = np.flatnonzero(~np.isfinite(time) | (time <= 0))
        if bad_time.size:
            i = bad_time[0]
            raise DataValidationException(
                f"Row {i + 1} (id {ids[i]}): time must be positive, got {time[i]}"
            )
        if not np.all(np.isfinite(covariates)):
            row = int(np.flatnonzero(~np.all(np.isfinite(covariates), axis=1))[0])
            raise DataValidationException(f"Row {row + 1} (id {ids[row]}): non-finite covariate")
        unique_ids, counts = np.unique(ids.astype(str), return_counts=True)
        if np.any(counts > 1):
            raise DataValidationException(
                f"Duplicate ids: {', '.join(unique_ids[counts > 1][:5])}"
            )

        object.__setattr__(self, 'ids', ids.astype(str).astype(object))
        object.__setattr__(self, 'arm', arm.astype(int))
        object.__setattr__(self, 'time', time)
        object.__setattr__(self, 'event', event.astype(int))
        object.__setattr__(self, 'covariates', covariates)

        if not self.pooled and (self.n1 < 2 or self.n0 < 2):
            raise DataValidationException(
                f"Each arm needs at least 2 subjects, got n1={self.n1}, n0={self.n0}"
            )

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n1(self) -> int:
        return int(np.sum(self.arm == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self.arm == 0))

    @property
    def covariate_names(self) -> list:
        return list(self.schema.encoded_names)

    def records(self) -> Iterator[SurvivalRecord]:
        """Iterate over subjects as SurvivalRecord objects."""
        for i in range(self.n):
            yield SurvivalRecord(
                id=str(self.ids[i]),
                arm=int(self.arm[i]),
                time=float(self.time[i]),
                event=int(self.event[i]),
                covariates=tuple(float(v) for v in self.covariates[i]),
            )

    def subset(self, indices: Sequence[int], pooled: Optional[bool] = None) -> 'StudyData':
        """New StudyData holding ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=int)
        return StudyData(
            ids=self.ids[idx],
            arm=self.arm[idx],
            time=self.time[idx],
            event=self.event[idx],
            covariates=self.covariates[idx],
            schema=self.schema,
            pooled=self.pooled if pooled is None else pooled,
        )

    def to_frame(self) -> pd.DataFrame:
        """Reserved columns followed by the raw (decoded) covariates."""
        frame = pd.DataFrame({
            'id': self.ids.astype(str),
            'arm': self.arm,
            'time': self.time,
            'event': self.event,
        })
        raw = CovariateEncoder.decode(self.covariates, self.schema)
        for name in self.schema.names:
            frame[name] = raw[name].to_numpy()
        return frame


@dataclass(frozen=True, eq=False)
class ArmView:
    """The records of one arm, in original order.

    Attributes:
        arm: Arm label.
        indices: Positions of these records in the parent StudyData.
    """
    arm: int
    indices: np.ndarray
    ids: np.ndarray
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])


def _check_binary(name: str, values: np.ndarray, ids: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isin(values, (0, 1)))
    if bad.size:
        i = bad[0]
        raise DataValidationException(
            f"Row {i + 1} (id {ids[i]}): {name} must be 0 or 1, got {values[i]}"
        )


def _resolve_roles(columns: Sequence[str], schema_hint: Optional[Mapping]) -> Dict[str, str]:
    roles = {role: role for role in RESERVED}
    for role, column in (schema_hint or {}).items():
        if role in RESERVED:
            roles[role] = str(column)
    missing = [f"{role} ('{col}')" for role, col in roles.items() if col not in columns]
    if missing:
        raise SchemaException(f"Missing required columns: {', '.join(missing)}")
    return roles


def _parse_numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    parsed = pd.to_numeric(frame[column].str.strip(), errors='coerce')
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if bad.size:
        row = int(bad[0]) + 1
        raise ParseException(
            f"Row {row}: column '{column}' value '{frame[column].iloc[bad[0]]}' is not numeric",
            row=row,
            column=column,
        )
    return parsed.to_numpy(dtype=float)


def read_frame(path: Union[str, Path]) -> pd.DataFrame:
    """Read a CSV with every cell kept as the text in the file.

    Raises:
        DataValidationException: Missing or unreadable file.
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationException(f"File not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationException(f"Cannot read {path}: {e}")


def load_csv(
    path: Union[str, Path],
    schema_hint: Optional[Mapping] = None,
) -> StudyData:
    """Load and validate a two-arm survival CSV.

    Args:
        path: CSV file (UTF-8, comma separated, header row).
        schema_hint: Optional mapping overriding reserved column names
            (keys 'id', 'arm', 'time', 'event'), plus optional
            'covariates' (list restricting covariate columns) and
            'categorical' (list of columns forced to be categorical).

    Returns:
        StudyData with covariates encoded, row order preserved.

    Raises:
        SchemaException: Required column missing.
        ParseException: Non-numeric time/arm/event cell.
        DataValidationException: Missing cell or invariant violation.
    """
    path = Path(path)
    frame = read_frame(path)

    columns = [str(c) for c in frame.columns]
    roles = _resolve_roles(columns, schema_hint)
    hint = dict(schema_hint or {})
    reserved_columns = set(roles.values())
    if 'covariates' in hint:
        covariate_columns = [str(c) for c in hint['covariates']]
        absent = [c for c in covariate_columns if c not in columns]
        if absent:
            raise SchemaException(f"Covariate columns missing: {', '.join(absent)}")
    else:
        covariate_columns = [c for c in columns if c not in reserved_columns]

    used = [roles[r] for r in RESERVED] + covariate_columns
    for column in used:
        stripped = frame[column].str.strip()
        missing = np.flatnonzero(stripped.isin(MISSING_TOKENS).to_numpy())
        if missing.size:
            raise DataValidationException(
                f"Row {int(missing[0]) + 1}: missing value in column '{column}'"
            )

    time = _parse_numeric(frame, roles['time'])
    arm = _parse_numeric(frame, roles['arm'])
    event = _parse_numeric(frame, roles['event'])

    raw_covariates = frame[covariate_columns].rename(columns=str)
    schema = CovariateEncoder.fit(raw_covariates, categorical=hint.get('categorical'))
    covariates = CovariateEncoder.encode(raw_covariates, schema)

    data = StudyData(
        ids=frame[roles['id']].str.strip().to_numpy(dtype=object),
        arm=arm,
        time=time,
        event=event,
        covariates=covariates,
        schema=schema,
    )
    logger.info(
        f"Loaded {data.n} records from {path} (n1={data.n1}, n0={data.n0}, "
        f"covariates={schema.encoded_names})"
    )
    return data


def write_csv(data: StudyData, path: Union[str, Path]) -> None:
    """Write StudyData back to CSV; ``load_csv`` of the result reproduces it."""
    data.to_frame().to_csv(Path(path), index=False)


def split_by_arm(data: StudyData) -> Tuple[ArmView, ArmView]:
    """Partition records by arm, preserving original order within each arm.

    Returns:
        (arm1, arm0) views.
    """
    views = []
    for label in (1, 0):
        idx = np.flatnonzero(data.arm == label)
        views.append(ArmView(
            arm=label,
            indices=idx,
            ids=data.ids[idx],
            time=data.time[idx],
            event=data.event[idx],
            covariates=data.covariates[idx],
        ))
    return views[0], views[1]
