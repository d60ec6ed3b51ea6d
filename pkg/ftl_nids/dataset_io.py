"""
Dataset loading and partitioning

Reads tabular intrusion captures, encodes the label column, and splits the
data into train/test, server/client-pool and per-client shares. Every
partition is a pure function of (input, seed).
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import (
    EmptyDataError,
    EmptyLabelError,
    EmptyPartitionError,
    MissingFileError,
    MissingLabelColumnError,
    PartitionError,
    RaggedRowError,
)

logger = logging.getLogger('DATASET_IO')


@dataclass(frozen=True)
class RawTable:
    """Verbatim CSV contents (the raw capture before any cleaning)"""
    column_names: List[str]
    cells: List[List[str]]
    label_column: Optional[str] = None
    # Original 0-based data-row index of every row; survives row drops
    row_ids: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.row_ids is None:
            object.__setattr__(self, 'row_ids', tuple(range(len(self.cells))))
        if len(self.row_ids) != len(self.cells):
            raise ValueError("row_ids length must equal row count")

    @property
    def row_count(self) -> int:
        return len(self.cells)

    @property
    def col_count(self) -> int:
        return len(self.column_names)

    def column(self, name: str) -> List[str]:
        idx = self.column_names.index(name)
        return [row[idx] for row in self.cells]


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: Literal['numeric', 'categorical-encoded']


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix + integer labels; the currency of the pipeline"""
    features: np.ndarray
    labels: np.ndarray
    feature_meta: Tuple[FeatureMeta, ...]
    label_names: Tuple[str, ...]
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels length must equal n_samples")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain NaN or infinite values")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_names)):
            raise ValueError("label index out of range for label_names")
        row_ids = self.row_ids
        if row_ids is None:
            row_ids = np.arange(features.shape[0], dtype=np.int64)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'row_ids', np.asarray(row_ids, dtype=np.int64))
        object.__setattr__(self, 'feature_meta', tuple(self.feature_meta))
        object.__setattr__(self, 'label_names', tuple(self.label_names))

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def feature_names(self) -> List[str]:
        return [m.name for m in self.feature_meta]

    def __len__(self) -> int:
        return self.n_samples

    def subset(self, indices) -> 'Dataset':
        """Rows at the given positions (positions, not row_ids)"""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            feature_meta=self.feature_meta,
            label_names=self.label_names,
            row_ids=self.row_ids[idx],
        )

    def with_features(self, features: np.ndarray, feature_meta=None) -> 'Dataset':
        return Dataset(
            features=features,
            labels=self.labels,
            feature_meta=self.feature_meta if feature_meta is None else feature_meta,
            label_names=self.label_names,
            row_ids=self.row_ids,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


class SplitSpec(BaseModel):
    """How the data is divided between test, server and clients"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    test_fraction: float = Field(0.2, gt=0.0, lt=0.5)
    server_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    n_clients: int = Field(2, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    client_partition: Literal['iid', 'dirichlet'] = 'iid'
    dirichlet_alpha: float = Field(0.5, gt=0.0)

    @model_validator(mode='after')
    def _check_fractions(self):
        # U > V requires the test share to stay below one half
        if not self.test_fraction < 0.5:
            raise ValueError("test_fraction must be < 0.5 so that U > V")
        return self


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def load_csv(path, label_column: str) -> RawTable:
    """Read a headed, comma-separated UTF-8 file into a RawTable"""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} has no header row")

        cells = []
        for row_number, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise RaggedRowError(row_number, len(row), len(header))
            cells.append(row)

    if label_column not in header:
        raise MissingLabelColumnError(label_column)

    logger.info(f"📄 Loaded {len(cells)} rows × {len(header)} columns from {path.name}")
    return RawTable(column_names=list(header), cells=cells, label_column=label_column)


def encode_labels(table: RawTable, label_column: str) -> Tuple[np.ndarray, List[str]]:
    """Lexicographic class indices for the label column"""
    if label_column not in table.column_names:
        raise MissingLabelColumnError(label_column)
    values = table.column(label_column)
    for row_number, value in enumerate(values, start=1):
        if value == '':
            raise EmptyLabelError(row_number)

    label_names = sorted(set(values))
    index = {name: i for i, name in enumerate(label_names)}
    labels = np.array([index[v] for v in values], dtype=np.int64)
    return labels, label_names


def _apportion(class_counts: np.ndarray, target: int, caps: np.ndarray) -> np.ndarray:
    """
    Largest-remainder allocation of `target` rows over classes.

    Quotas follow the class proportions, never exceed `caps`, and leftovers go
    to the largest fractional remainders (ties toward the lower class index).
    """
    total = class_counts.sum()
    alloc = np.zeros_like(class_counts)
    if total == 0 or target == 0:
        return alloc

    quotas = target * class_counts / total
    alloc = np.minimum(np.floor(quotas).astype(np.int64), caps)
    remainders = quotas - np.floor(quotas)

    while alloc.sum() < target:
        open_classes = np.flatnonzero(alloc < caps)
        if open_classes.size == 0:
            break
        # Highest remainder first, lowest class index on ties
        order = sorted(open_classes, key=lambda k: (-remainders[k], k))
        for k in order:
            if alloc.sum() >= target:
                break
            alloc[k] += 1
            remainders[k] = -1.0
        if all(remainders[k] < 0 for k in open_classes):
            remainders = np.where(alloc < caps, 0.0, -1.0)
    return alloc


def _stratified_take(labels: np.ndarray, n_classes: int, target: int,
                     rng: np.random.Generator, keep_one: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Positions of `target` rows drawn class by class, and the remaining positions"""
    counts = np.bincount(labels, minlength=n_classes)
    caps = np.maximum(counts - 1, 0) if keep_one else counts.copy()

    if keep_one:
        for k in np.flatnonzero(counts == 1):
            logger.warning(f"⚠️  Class {k} has a single sample; keeping it on the training side")

    alloc = _apportion(counts, target, caps)

    taken = []
    for k in range(n_classes):
        members = np.flatnonzero(labels == k)
        if members.size == 0:
            continue
        chosen = rng.permutation(members)[:alloc[k]]
        taken.append(chosen)

    taken = np.sort(np.concatenate(taken)) if taken else np.array([], dtype=np.int64)
    rest = np.setdiff1d(np.arange(labels.shape[0]), taken, assume_unique=True)
    return taken, rest


def split_train_test(data: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """Seeded, stratified train/test split with |train| > |test|"""
    n = data.n_samples
    if n < 2:
        raise EmptyDataError("need at least 2 samples to split train/test")

    n_test = min(_round_half_up(spec.test_fraction * n), (n - 1) // 2)
    rng = np.random.default_rng(spec.seed)
    test_idx, train_idx = _stratified_take(data.labels, data.n_classes, n_test, rng, keep_one=True)

    train, test = data.subset(train_idx), data.subset(test_idx)
    logger.info(f"✅ Train/test split: U={train.n_samples}, V={test.n_samples}")
    return train, test


def partition_client_server(train: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """Split the training data into server data X_s and the client pool X_c"""
    u = train.n_samples
    if u == 0:
        raise EmptyDataError("training data is empty")

    n_server = _round_half_up(spec.server_fraction * u)
    if n_server == 0 or n_server == u:
        raise EmptyPartitionError(
            f"server_fraction {spec.server_fraction} on {u} rows leaves an empty partition "
            f"(server={n_server}, clients={u - n_server})"
        )

    # Offset the stream so this split is independent of the train/test draw
    rng = np.random.default_rng([spec.seed, 1])
    server_idx, pool_idx = _stratified_take(train.labels, train.n_classes, n_server, rng, keep_one=False)

    server_data, client_pool = train.subset(server_idx), train.subset(pool_idx)
    logger.info(f"✅ Server/client split: X_s={server_data.n_samples}, X_c={client_pool.n_samples}")
    return server_data, client_pool


def _dirichlet_assignment(labels: np.ndarray, n_classes: int, n_clients: int, alpha: float,
                          rng: np.random.Generator, max_attempts: int = 20) -> List[np.ndarray]:
    for _ in range(max_attempts):
        shares = [[] for _ in range(n_clients)]
        for k in range(n_classes):
            members = rng.permutation(np.flatnonzero(labels == k))
            if members.size == 0:
                continue
            proportions = rng.dirichlet([alpha] * n_clients)
            cuts = np.floor(np.cumsum(proportions)[:-1] * members.size + 0.5).astype(np.int64)
            for i, part in enumerate(np.split(members, cuts)):
                shares[i].extend(part.tolist())
        if all(len(s) > 0 for s in shares):
            return [np.sort(np.array(s, dtype=np.int64)) for s in shares]
    raise PartitionError(
        f"Dirichlet(alpha={alpha}) left a client without data after {max_attempts} draws"
    )


def partition_among_clients(client_pool: Dataset, n_clients: int, seed: int,
                            mode: str = 'iid', alpha: float = 0.5) -> List[Dataset]:
    """Divide the client pool into N row-disjoint local shares X_{c_i}"""
    if n_clients < 1:
        raise PartitionError("n_clients must be >= 1")
    if client_pool.n_samples == 0:
        raise EmptyDataError("client pool is empty")
    if n_clients > client_pool.n_samples:
        raise PartitionError(
            f"{n_clients} clients requested but the pool has only {client_pool.n_samples} rows"
        )

    rng = np.random.default_rng([seed, 2])
    if mode == 'iid':
        order = rng.permutation(client_pool.n_samples)
        parts = [np.sort(p) for p in np.array_split(order, n_clients)]
    elif mode == 'dirichlet':
        parts = _dirichlet_assignment(client_pool.labels, client_pool.n_classes, n_clients, alpha, rng)
    else:
        raise PartitionError(f"Unknown client partition mode: {mode}")

    shares = [client_pool.subset(p) for p in parts]
    logger.info(f"✅ Client shares ({mode}): {[s.n_samples for s in shares]}")
    return shares


def split_all(data: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset, List[Dataset]]:
    """train/test → server/pool → client shares; returns (server, test, clients)"""
    train, test = split_train_test(data, spec)
    server_data, client_pool = partition_client_server(train, spec)
    clients = partition_among_clients(
        client_pool, spec.n_clients, spec.seed,
        mode=spec.client_partition, alpha=spec.dirichlet_alpha,
    )
    return server_data, test, clients


def union_row_ids(parts: Sequence[Dataset]) -> np.ndarray:
    return np.sort(np.concatenate([p.row_ids for p in parts]))
