"""
Seeded synthetic data: Gaussian blobs and IIoT-shaped capture tables
"""
from typing import Dict, Optional, Tuple

import numpy as np

from .dataset_io import Dataset, FeatureMeta, RawTable

IIOT_COLUMNS = [
    'ip.proto', 'frame.version', 'tcp.len', 'tcp.ack_ratio', 'tcp.len_copy',
    'dns.qry_len', 'tcp.conn_count', 'http.content_length', 'flow.bytes_per_sec',
    'udp.stream_jitter', 'Attack_type',
]

# class → (row share, dns mean, conn mean, http mean, p(tcp), p(udp))
IIOT_PROFILES: Dict[str, Tuple[float, float, float, float, float, float]] = {
    'Normal':        (0.31, 1.5, 2.0, 2.0, 0.6, 0.3),
    'DDoS_UDP':      (0.24, 0.5, 1.0, 0.5, 0.5, 0.5),
    'DDoS_TCP':      (0.23, 0.5, 1.0, 0.5, 0.5, 0.5),
    'Port_Scanning': (0.09, 0.5, 6.0, 0.5, 0.9, 0.1),
    'Password':      (0.06, 2.5, 3.0, 4.0, 1.0, 0.0),
    'SQL_injection': (0.04, 3.5, 2.0, 7.0, 1.0, 0.0),
    'MITM':          (0.03, 5.0, 1.0, 0.5, 0.4, 0.1),
}


def make_blobs(n_samples: int = 2500, n_features: int = 10, n_classes: int = 3,
               cluster_std: float = 1.0, center_box: Tuple[float, float] = (-10.0, 10.0),
               seed: int = 0, centers: Optional[np.ndarray] = None) -> Dataset:
    """Isotropic Gaussian clusters, one per class, class sizes as even as possible"""
    if n_classes < 1 or n_samples < n_classes:
        raise ValueError("need n_classes >= 1 and at least one sample per class")

    rng = np.random.default_rng(seed)
    if centers is None:
        centers = rng.uniform(center_box[0], center_box[1], size=(n_classes, n_features))
    centers = np.asarray(centers, dtype=np.float64)

    sizes = np.full(n_classes, n_samples // n_classes)
    sizes[:n_samples % n_classes] += 1
    labels = np.repeat(np.arange(n_classes), sizes)
    features = centers[labels] + rng.normal(0.0, cluster_std, size=(n_samples, n_features))

    order = rng.permutation(n_samples)
    width = len(str(n_classes - 1))
    return Dataset(
        features=features[order],
        labels=labels[order],
        feature_meta=tuple(FeatureMeta(f'x{j}', 'numeric') for j in range(n_features)),
        label_names=tuple(f'class_{k:0{width}d}' for k in range(n_classes)),
    )


def dataset_to_table(data: Dataset, label_column: str = 'label') -> RawTable:
    """Render a Dataset as text cells so it can run through the CSV pipeline"""
    cells = [
        [repr(float(v)) for v in row] + [data.label_names[y]]
        for row, y in zip(data.features, data.labels)
    ]
    return RawTable(
        column_names=data.feature_names + [label_column],
        cells=cells,
        label_column=label_column,
    )


def make_iiot_like_table(n_rows: int = 2000, seed: int = 0, inf_rate: float = 0.01) -> RawTable:
    """
    Table in the shape of the bundled capture fixture.

    Seven imbalanced classes. The two DDoS classes share every marginal
    distribution and differ only in how tcp.len and tcp.ack_ratio move
    together. frame.version is constant, flow.bytes_per_sec carries `inf`
    cells, tcp.len_copy duplicates tcp.len and udp.stream_jitter is noise.

    The DDoS pair is built as a feature interaction on purpose. Per-feature
    models (Gaussian NB) and linear ones (lr, sgd) cannot separate it, so
    the network's margin over GNB on these tables is partly a property of
    the generator. It is not a measurement on real traffic.
    """
    rng = np.random.default_rng(seed)
    names = list(IIOT_PROFILES)
    shares = np.array([IIOT_PROFILES[n][0] for n in names])
    sizes = np.rint(shares / shares.sum() * n_rows).astype(int)
    sizes[0] += n_rows - sizes.sum()
    labels = rng.permutation(np.repeat(np.arange(len(names)), sizes))

    cells = []
    for i, k in enumerate(labels):
        name = names[k]
        _, dns, conn, http, p_tcp, p_udp = IIOT_PROFILES[name]
        if name.startswith('DDoS'):
            a = rng.uniform()
            noise = rng.normal(0.0, 0.02)
            b = a + noise if name == 'DDoS_TCP' else 1.0 - a + noise
        else:
            a, b = rng.normal(1.3, 0.08, size=2)

        r = rng.uniform()
        proto = 'tcp' if r < p_tcp else ('udp' if r < p_tcp + p_udp else 'icmp')
        length = f'{100 * a:.3f}'
        rate = 'inf' if (rng.uniform() < inf_rate or i == 0) else f'{rng.normal(500, 50):.2f}'
        cells.append([
            proto, '1.0', length, f'{b:.4f}', length,
            f'{10 * rng.normal(dns, 0.3):.2f}',
            f'{5 * rng.normal(conn, 0.3):.2f}',
            f'{100 * rng.normal(http, 0.3):.2f}',
            rate, f'{rng.uniform():.4f}', name,
        ])

    return RawTable(column_names=list(IIOT_COLUMNS), cells=cells, label_column='Attack_type')
