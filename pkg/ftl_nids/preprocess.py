"""
Preprocessing pipeline

RawTable → cleaned → encoded → correlation-selected → min-max scaled Dataset.
Every column decision lands in a PreprocessReport so a run can be audited
after the fact.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .dataset_io import Dataset, FeatureMeta, RawTable, encode_labels
from .errors import (
    AllColumnsDroppedError,
    CardinalityError,
    DimensionMismatchError,
    EmptyDataError,
    NoFeaturesSelectedError,
    ZeroVarianceError,
)

logger = logging.getLogger('PREPROCESS')

# Cells that read as "missing" in a numeric column
_MISSING_TOKENS = {'', 'nan', 'na', 'null', 'none'}

DropReason = Literal['constant', 'non-finite', 'low-correlation', 'redundant']


class PreprocessPolicy(BaseModel):
    """Thresholds and switches for the preprocessing stages"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    nonfinite_threshold: float = Field(0.0, ge=0.0, le=1.0)
    max_cardinality: int = Field(256, ge=1)
    label_threshold: float = Field(0.05, ge=0.0, le=1.0)
    redundancy_threshold: float = Field(0.95, gt=0.0, le=1.0)
    label_mode: Literal['multiclass', 'binary'] = 'multiclass'
    normal_label: str = 'Normal'


@dataclass(frozen=True)
class DroppedColumn:
    name: str
    reason: DropReason


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=np.float64)
        hi = np.asarray(self.maximum, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("scaler min/max must be 1-D and equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("scaler params must be finite")
        if np.any(hi < lo):
            raise ValueError("scaler max must be >= min")
        object.__setattr__(self, 'minimum', lo)
        object.__setattr__(self, 'maximum', hi)
        object.__setattr__(self, 'feature_names', tuple(self.feature_names))

    @property
    def n_features(self) -> int:
        return int(self.minimum.shape[0])

    def to_dict(self) -> Dict:
        names = self.feature_names or tuple(str(i) for i in range(self.n_features))
        return {
            name: {'min': float(lo), 'max': float(hi)}
            for name, lo, hi in zip(names, self.minimum, self.maximum)
        }


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson matrix over features plus the label (always the last row/column)"""
    matrix: np.ndarray
    feature_names: Tuple[str, ...]
    label_name: str = 'label'

    @property
    def names(self) -> List[str]:
        return list(self.feature_names) + [self.label_name]

    def label_correlation(self) -> Dict[str, float]:
        return {name: float(self.matrix[i, -1]) for i, name in enumerate(self.feature_names)}


@dataclass(frozen=True)
class PreprocessReport:
    original_columns: Tuple[str, ...] = ()
    label_column: Optional[str] = None
    label_mode: str = 'multiclass'
    label_names: Tuple[str, ...] = ()
    dropped_columns: Tuple[DroppedColumn, ...] = ()
    encoding_maps: Dict[str, Dict[str, int]] = field(default_factory=dict)
    selected_features: Tuple[str, ...] = ()
    rows_dropped: int = 0
    label_correlation: Dict[str, float] = field(default_factory=dict)
    scaler: Optional[ScalerParams] = None

    def accounted_columns(self) -> List[str]:
        names = [d.name for d in self.dropped_columns] + list(self.selected_features)
        if self.label_column is not None:
            names.append(self.label_column)
        return names

    def to_dict(self) -> Dict:
        return {
            'original_columns': list(self.original_columns),
            'label_column': self.label_column,
            'label_mode': self.label_mode,
            'label_names': list(self.label_names),
            'dropped_columns': [{'name': d.name, 'reason': d.reason} for d in self.dropped_columns],
            'encoding_maps': {k: dict(v) for k, v in self.encoding_maps.items()},
            'selected_features': list(self.selected_features),
            'rows_dropped': self.rows_dropped,
            'label_correlation': dict(self.label_correlation),
            'scaler': self.scaler.to_dict() if self.scaler is not None else None,
        }


def _parse_numeric(values: List[str]) -> Optional[np.ndarray]:
    """float64 array if every cell reads as a number (inf/nan/blank allowed), else None"""
    series = pd.Series(values, dtype=object)
    parsed = pd.to_numeric(series, errors='coerce')
    unparsed = parsed.isna() & ~series.str.strip().str.lower().isin(_MISSING_TOKENS)
    if unparsed.any():
        return None
    return parsed.to_numpy(dtype=np.float64)


def _feature_columns(table: RawTable) -> List[str]:
    return [c for c in table.column_names if c != table.label_column]


def apply_label_mode(table: RawTable, policy: PreprocessPolicy) -> RawTable:
    """Collapse every non-normal class to `attack` when label_mode is binary"""
    if policy.label_mode != 'binary' or table.label_column is None:
        return table
    idx = table.column_names.index(table.label_column)
    cells = []
    for row in table.cells:
        row = list(row)
        if row[idx] != '':
            row[idx] = policy.normal_label if row[idx] == policy.normal_label else 'attack'
        cells.append(row)
    return replace(table, cells=cells)


def _select_columns(table: RawTable, keep: List[str]) -> RawTable:
    positions = [table.column_names.index(c) for c in keep]
    cells = [[row[p] for p in positions] for row in table.cells]
    return replace(table, column_names=list(keep), cells=cells)


def _is_constant(values: List[str], numeric: Optional[np.ndarray]) -> bool:
    if numeric is not None:
        # "5" and "5.0" are the same value; all-NaN counts as one value
        return pd.Series(numeric).nunique(dropna=False) <= 1
    return len(set(values)) <= 1


def clean_columns(table: RawTable, policy: Optional[PreprocessPolicy] = None
                  ) -> Tuple[RawTable, PreprocessReport]:
    """
    Drop constant and non-finite feature columns, then residual bad rows.

    A numeric column whose non-finite fraction exceeds
    `policy.nonfinite_threshold` is dropped; rows carrying a stray non-finite
    cell in a surviving numeric column are dropped and counted. The label
    column is never touched here.
    """
    policy = policy or PreprocessPolicy()
    if table.row_count == 0:
        raise EmptyDataError("cannot clean an empty table")

    dropped: List[DroppedColumn] = []
    keep: List[str] = []
    numeric_cache: Dict[str, Optional[np.ndarray]] = {}

    for name in _feature_columns(table):
        values = table.column(name)
        numeric = _parse_numeric(values)
        if _is_constant(values, numeric):
            dropped.append(DroppedColumn(name, 'constant'))
            continue
        if numeric is not None:
            bad_fraction = float(np.mean(~np.isfinite(numeric)))
            if bad_fraction > policy.nonfinite_threshold:
                dropped.append(DroppedColumn(name, 'non-finite'))
                continue
        numeric_cache[name] = numeric
        keep.append(name)

    # Residual non-finite cells in surviving numeric columns
    good_rows = np.ones(table.row_count, dtype=bool)
    for name in keep:
        numeric = numeric_cache[name]
        if numeric is not None:
            good_rows &= np.isfinite(numeric)
    rows_dropped = int((~good_rows).sum())

    if rows_dropped:
        logger.warning(f"⚠️  Dropping {rows_dropped} rows with non-finite cells")
        cells = [row for row, ok in zip(table.cells, good_rows) if ok]
        row_ids = tuple(r for r, ok in zip(table.row_ids, good_rows) if ok)
        table = replace(table, cells=cells, row_ids=row_ids)
        if table.row_count == 0:
            raise EmptyDataError("every row held a non-finite cell")

        # Row drops can leave a column constant
        still_varying = []
        for name in keep:
            values = table.column(name)
            if _is_constant(values, _parse_numeric(values)):
                dropped.append(DroppedColumn(name, 'constant'))
            else:
                still_varying.append(name)
        keep = still_varying

    if not keep:
        raise AllColumnsDroppedError(
            f"all {len(_feature_columns(table))} feature columns were dropped during cleaning"
        )

    for d in dropped:
        logger.info(f"📍 Dropped column '{d.name}' ({d.reason})")

    label = [table.label_column] if table.label_column is not None else []
    cleaned = _select_columns(table, keep + label)
    report = PreprocessReport(
        label_column=table.label_column,
        label_mode=policy.label_mode,
        dropped_columns=tuple(dropped),
        rows_dropped=rows_dropped,
    )
    return cleaned, report


def encode_categorical(table: RawTable, policy: Optional[PreprocessPolicy] = None
                       ) -> Tuple[Dataset, Dict[str, Dict[str, int]]]:
    """
    Numeric columns parse to reals; anything else becomes lexicographic
    ordinal codes. Returns the Dataset and the per-column value→code maps.
    """
    policy = policy or PreprocessPolicy()
    if table.label_column is None:
        raise ValueError("table has no label column")

    labels, label_names = encode_labels(table, table.label_column)

    columns = []
    meta = []
    encoding_maps: Dict[str, Dict[str, int]] = {}
    for name in _feature_columns(table):
        values = table.column(name)
        numeric = _parse_numeric(values)
        if numeric is not None:
            columns.append(numeric)
            meta.append(FeatureMeta(name, 'numeric'))
            continue

        distinct = sorted(set(values))
        if len(distinct) > policy.max_cardinality:
            raise CardinalityError(
                f"column '{name}' has {len(distinct)} distinct values "
                f"(max {policy.max_cardinality}); consider dropping it"
            )
        codes = {v: i for i, v in enumerate(distinct)}
        encoding_maps[name] = codes
        columns.append(np.array([codes[v] for v in values], dtype=np.float64))
        meta.append(FeatureMeta(name, 'categorical-encoded'))

    features = np.column_stack(columns) if columns else np.empty((table.row_count, 0))
    data = Dataset(
        features=features,
        labels=labels,
        feature_meta=tuple(meta),
        label_names=tuple(label_names),
        row_ids=np.array(table.row_ids, dtype=np.int64),
    )
    return data, encoding_maps


def pearson_correlation_matrix(data: Dataset, label_name: str = 'label') -> CorrelationMatrix:
    """Population Pearson correlation over every feature and the label"""
    if data.n_samples == 0:
        raise EmptyDataError("cannot correlate an empty dataset")

    X = np.column_stack([data.features, data.labels.astype(np.float64)])
    names = data.feature_names + [label_name]

    centered = X - X.mean(axis=0)
    std = np.sqrt((centered ** 2).mean(axis=0))
    zero = np.flatnonzero(std == 0.0)
    if zero.size:
        raise ZeroVarianceError(
            f"zero-variance columns reached correlation: {[names[i] for i in zero]}"
        )

    cov = centered.T @ centered / X.shape[0]
    rho = cov / np.outer(std, std)
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return CorrelationMatrix(matrix=rho, feature_names=tuple(data.feature_names), label_name=label_name)


def select_features(corr: CorrelationMatrix, policy: Optional[PreprocessPolicy] = None
                    ) -> Tuple[List[str], List[DroppedColumn]]:
    """
    Label-relevance filter, then pairwise-redundancy filter.

    Features are visited by descending |ρ(feature, label)| (name order on
    ties); a feature is dropped as redundant when it correlates above the
    redundancy threshold with one already kept. The selection keeps the
    original column order.
    """
    policy = policy or PreprocessPolicy()
    names = list(corr.feature_names)
    relevance = np.abs(corr.matrix[:-1, -1])

    dropped: List[DroppedColumn] = []
    survivors = []
    for i, name in enumerate(names):
        if relevance[i] < policy.label_threshold:
            dropped.append(DroppedColumn(name, 'low-correlation'))
        else:
            survivors.append(i)

    kept: List[int] = []
    for i in sorted(survivors, key=lambda j: (-relevance[j], names[j])):
        if any(abs(corr.matrix[i, k]) > policy.redundancy_threshold for k in kept):
            dropped.append(DroppedColumn(names[i], 'redundant'))
        else:
            kept.append(i)

    if not kept:
        raise NoFeaturesSelectedError(
            f"no feature reaches |rho| >= {policy.label_threshold} with the label; "
            "lower label_threshold"
        )

    selected = [names[i] for i in sorted(kept)]
    return selected, dropped


def fit_minmax_scaler(train: Dataset) -> ScalerParams:
    if train.n_samples == 0:
        raise EmptyDataError("cannot fit a scaler on empty data")
    lo = train.features.min(axis=0)
    hi = train.features.max(axis=0)
    degenerate = [n for n, a, b in zip(train.feature_names, lo, hi) if a == b]
    if degenerate:
        logger.warning(f"⚠️  Features with max == min map to 0.0: {degenerate}")
    return ScalerParams(minimum=lo, maximum=hi, feature_names=tuple(train.feature_names))


def _check_dims(data: Dataset, params: ScalerParams):
    if data.n_features != params.n_features:
        raise DimensionMismatchError(
            f"dataset has {data.n_features} features, scaler expects {params.n_features}"
        )


def apply_scaler(data: Dataset, params: ScalerParams) -> Dataset:
    """x' = (x - min) / (max - min); no clamping, degenerate features → 0.0"""
    _check_dims(data, params)
    span = params.maximum - params.minimum
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (data.features - params.minimum) / safe, 0.0)
    return data.with_features(scaled)


def invert_scaler(data: Dataset, params: ScalerParams) -> Dataset:
    _check_dims(data, params)
    span = params.maximum - params.minimum
    restored = data.features * span + params.minimum
    return data.with_features(restored)


def run_pipeline(table: RawTable, policy: Optional[PreprocessPolicy] = None
                 ) -> Tuple[Dataset, PreprocessReport]:
    """clean → encode → correlate → select. Scaling happens after the split."""
    policy = policy or PreprocessPolicy()
    original = tuple(table.column_names)

    table = apply_label_mode(table, policy)
    cleaned, report = clean_columns(table, policy)
    data, encoding_maps = encode_categorical(cleaned, policy)

    corr = pearson_correlation_matrix(data, label_name=table.label_column or 'label')
    selected, selection_drops = select_features(corr, policy)

    keep = [data.feature_names.index(n) for n in selected]
    meta = tuple(data.feature_meta[i] for i in keep)
    data = data.with_features(data.features[:, keep], feature_meta=meta)

    # Encoding maps only for columns that made it through
    encoding_maps = {k: v for k, v in encoding_maps.items() if k in selected}
    report = replace(
        report,
        original_columns=original,
        label_names=data.label_names,
        dropped_columns=report.dropped_columns + tuple(selection_drops),
        encoding_maps=encoding_maps,
        selected_features=tuple(selected),
        label_correlation=corr.label_correlation(),
    )

    logger.info(
        f"✅ Preprocessed {data.n_samples} rows: {len(selected)} features selected, "
        f"{len(report.dropped_columns)} dropped, {data.n_classes} classes"
    )
    return data, report
