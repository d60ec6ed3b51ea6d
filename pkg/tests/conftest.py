"""
Shared fixtures for the FTL-NIDS test suites
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from ftl_nids.dataset_io import Dataset, FeatureMeta, RawTable  # noqa: E402
from ftl_nids.neuralnet import ComboNetConfig  # noqa: E402

REPO_ROOT = Path(__file__).parent.parent
FIXTURE_CSV = REPO_ROOT / 'fixtures' / 'iiot_sample.csv'
CONFIG_DIR = REPO_ROOT / 'configs'


def make_dataset(features, labels, label_names=None, names=None) -> Dataset:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if label_names is None:
        label_names = [f'c{k}' for k in range(int(labels.max()) + 1)]
    if names is None:
        names = [f'f{j}' for j in range(features.shape[1])]
    return Dataset(
        features=features,
        labels=labels,
        feature_meta=tuple(FeatureMeta(n, 'numeric') for n in names),
        label_names=tuple(label_names),
    )


def write_csv(path: Path, lines) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    return path


@pytest.fixture
def fixture_csv() -> Path:
    return FIXTURE_CSV


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def three_class_dataset() -> Dataset:
    """Counts (50, 30, 20), 2 features, rows in class order"""
    rng = np.random.default_rng(5)
    labels = np.repeat([0, 1, 2], [50, 30, 20])
    features = rng.normal(size=(100, 2)) + labels[:, None]
    return make_dataset(features, labels)


@pytest.fixture
def separable_blobs() -> Dataset:
    """Two well separated 4-D clusters at -2 and +2"""
    rng = np.random.default_rng(11)
    labels = np.repeat([0, 1], 60)
    centers = np.where(labels[:, None] == 0, -2.0, 2.0) * np.ones((1, 4))
    features = centers + rng.normal(0.0, 0.5, size=(120, 4))
    order = rng.permutation(120)
    return make_dataset(features[order], labels[order])


@pytest.fixture
def small_net_config() -> ComboNetConfig:
    return ComboNetConfig(
        input_dim=8, stem_channels=4, residual_blocks=1, kernel_size=3,
        dense_hidden=(16,), n_classes=3, init_seed=3,
    )


@pytest.fixture
def tiny_table() -> RawTable:
    return RawTable(
        column_names=['a', 'b', 'label'],
        cells=[['1', 'x', 'dos'], ['2', 'y', 'normal'], ['3', 'x', 'dos']],
        label_column='label',
    )
