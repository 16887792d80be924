"""Covariate encoding - turn raw covariate columns into a numeric design.

Numeric columns pass through unchanged. Categorical columns are one-hot
encoded with the lexicographically smallest level as the dropped reference,
so two loads of the same file always produce the same design without any
configuration.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from rmst_targeted.types import SchemaException

NUMERIC = 'numeric'
CATEGORICAL = 'categorical'


@dataclass(frozen=True)
class CovariateSchema:
    """Names and kinds of the raw covariates and of the encoded columns.

    Attributes:
        names: Raw covariate column names, in file order.
        kinds: Raw name -> 'numeric' or 'categorical'.
        levels: Raw categorical name -> sorted level list (reference first).
        encoded_names: Column names of the encoded design, e.g. 'sex=M'.
    """
    names: List[str] = field(default_factory=list)
    kinds: Dict[str, str] = field(default_factory=dict)
    levels: Dict[str, List[str]] = field(default_factory=dict)
    encoded_names: List[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.encoded_names)


class CovariateEncoder:
    """Deterministic covariate encoder.

    ``fit`` inspects raw string columns and records a CovariateSchema;
    ``encode`` maps raw columns to the numeric design; ``decode`` inverts
    ``encode`` so a StudyData can be written back to CSV.
    """

    @staticmethod
    def fit(frame: pd.DataFrame, categorical: Optional[Sequence[str]] = None) -> CovariateSchema:
        """Infer a schema from raw (string) covariate columns.

        A column is numeric when every cell parses as a float, unless it is
        listed in ``categorical``.

        Args:
            frame: Covariate columns only, cells as strings.
            categorical: Column names forced to be categorical.

        Returns:
            CovariateSchema describing the encoding.
        """
        forced = set(categorical or ())
        names = [str(c) for c in frame.columns]
        kinds: Dict[str, str] = {}
        levels: Dict[str, List[str]] = {}
        encoded: List[str] = []

        for name in names:
            values = frame[name].astype(str).str.strip()
            parsed = pd.to_numeric(values, errors='coerce')
            if name not in forced and not parsed.isna().any():
                kinds[name] = NUMERIC
                encoded.append(name)
                continue
            kinds[name] = CATEGORICAL
            column_levels = sorted(set(values.tolist()))
            levels[name] = column_levels
            # Reference level (first) is dropped
            encoded.extend(f'{name}={level}' for level in column_levels[1:])

        return CovariateSchema(names=names, kinds=kinds, levels=levels, encoded_names=encoded)

    @staticmethod
    def encode(frame: pd.DataFrame, schema: CovariateSchema) -> np.ndarray:
        """Encode raw covariate columns according to ``schema``.

        Raises:
            SchemaException: If a schema column is absent or a categorical
                cell holds a level unknown to the schema.
        """
        missing = [name for name in schema.names if name not in frame.columns]
        if missing:
            raise SchemaException(f"Covariate columns missing: {', '.join(missing)}")

        n = len(frame)
        blocks: List[np.ndarray] = []
        for name in schema.names:
            values = frame[name].astype(str).str.strip()
            if schema.kinds[name] == NUMERIC:
                blocks.append(pd.to_numeric(values).to_numpy(dtype=float).reshape(n, 1))
                continue
            column_levels = schema.levels[name]
            unknown = sorted(set(values) - set(column_levels))
            if unknown:
                raise SchemaException(
                    f"Column '{name}' has levels not in schema: {', '.join(unknown)}"
                )
            for level in column_levels[1:]:
                blocks.append((values.to_numpy() == level).astype(float).reshape(n, 1))

        if not blocks:
            return np.zeros((n, 0))
        return np.hstack(blocks)

    @staticmethod
    def decode(matrix: np.ndarray, schema: CovariateSchema) -> pd.DataFrame:
        """Recover raw covariate columns from an encoded design."""
        matrix = np.asarray(matrix, dtype=float)
        columns: Dict[str, list] = {}
        position = 0
        for name in schema.names:
            if schema.kinds[name] == NUMERIC:
                columns[name] = matrix[:, position].tolist()
                position += 1
                continue
            column_levels = schema.levels[name]
            width = len(column_levels) - 1
            block = matrix[:, position:position + width]
            labels = []
            for row in block:
                hits = np.flatnonzero(row == 1.0)
                labels.append(column_levels[hits[0] + 1] if hits.size else column_levels[0])
            columns[name] = labels
            position += width
        return pd.DataFrame(columns, columns=schema.names)
