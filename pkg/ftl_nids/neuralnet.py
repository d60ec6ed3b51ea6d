"""
Combo-NN: residual 1-D convolution front-end + dense head, written against
numpy with hand-derived backprop.

Layout of a forward pass for a batch x [b × d]:

    x → [b, 1, d] → stem conv (same padding) → ReLU
      → residual_blocks × (conv → ReLU → conv, + skip, ReLU)
      → pool over positions (avg) or flatten
      → dense_hidden × (dense → ReLU)
      → dense logits

Parameter blocks are ordered stem, res{i}.conv1, res{i}.conv2, dense{j},
logits. Conv weights are [out, in, k]; dense weights are [in, out].
All arithmetic is float64. The forward pass treats every row on its own, so
logits do not depend on batch size or on a row's position in the batch.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from .errors import (
    DimensionMismatchError,
    EmptyDataError,
    FingerprintMismatchError,
    LabelRangeError,
    ShapeMismatchError,
    StaleCacheError,
    TruncatedFileError,
    VersionError,
    WeightFormatError,
)

logger = logging.getLogger(__name__)

WEIGHT_MAGIC = b'FTLW'
WEIGHT_FORMAT_VERSION = 1

_KIND_TAGS = {'conv': 0, 'dense': 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class ComboNetConfig(BaseModel):
    """Architecture of the Combo-NN; hashed into every weight file"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    input_dim: int = Field(..., ge=1)
    stem_channels: int = Field(8, ge=1)
    residual_blocks: int = Field(2, ge=0)
    kernel_size: int = Field(3, ge=1)
    dense_hidden: Tuple[int, ...] = (32,)
    n_classes: int = Field(..., ge=2)
    init_seed: int = Field(0, ge=0, lt=2 ** 64)
    pooling: Literal['avg', 'flatten'] = 'avg'

    @field_validator('kernel_size')
    @classmethod
    def _odd_kernel(cls, v):
        if v % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return v

    @field_validator('dense_hidden')
    @classmethod
    def _positive_hidden(cls, v):
        if any(h < 1 for h in v):
            raise ValueError("dense_hidden sizes must be positive")
        return tuple(v)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode('utf-8')).digest()[:8]

    @property
    def pooled_dim(self) -> int:
        if self.pooling == 'flatten':
            return self.stem_channels * self.input_dim
        return self.stem_channels


def layer_shapes(config: ComboNetConfig) -> List[Tuple[str, str, Tuple[int, ...], int]]:
    """(layer_id, kind, weight shape, bias length) in block order"""
    c, k = config.stem_channels, config.kernel_size
    shapes = [('stem', 'conv', (c, 1, k), c)]
    for i in range(config.residual_blocks):
        shapes.append((f'res{i}.conv1', 'conv', (c, c, k), c))
        shapes.append((f'res{i}.conv2', 'conv', (c, c, k), c))
    fan_in = config.pooled_dim
    for j, width in enumerate(config.dense_hidden):
        shapes.append((f'dense{j}', 'dense', (fan_in, width), width))
        fan_in = width
    shapes.append(('logits', 'dense', (fan_in, config.n_classes), config.n_classes))
    return shapes


@dataclass(frozen=True)
class ParamBlock:
    layer_id: str
    kind: Literal['conv', 'dense']
    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class ModelWeights:
    """Ordered parameter blocks plus the config they were built for"""
    config: ComboNetConfig
    blocks: Tuple[ParamBlock, ...]

    def __post_init__(self):
        object.__setattr__(self, 'blocks', tuple(self.blocks))
        expected = layer_shapes(self.config)
        if len(expected) != len(self.blocks):
            raise ShapeMismatchError(
                f"config expects {len(expected)} blocks, got {len(self.blocks)}"
            )
        for (layer_id, kind, w_shape, b_len), block in zip(expected, self.blocks):
            if (block.layer_id, block.kind, block.weight.shape, block.bias.shape) != (
                layer_id, kind, w_shape, (b_len,)
            ):
                raise ShapeMismatchError(
                    f"block {block.layer_id} {block.weight.shape}/{block.bias.shape} "
                    f"does not match {layer_id} {w_shape}/({b_len},)"
                )

    @property
    def fingerprint(self) -> bytes:
        return self.config.fingerprint()

    def block(self, layer_id: str) -> ParamBlock:
        for b in self.blocks:
            if b.layer_id == layer_id:
                return b
        raise KeyError(layer_id)

    def copy(self) -> 'ModelWeights':
        return ModelWeights(
            config=self.config,
            blocks=tuple(
                ParamBlock(b.layer_id, b.kind, b.weight.copy(), b.bias.copy()) for b in self.blocks
            ),
        )

    def flat(self) -> np.ndarray:
        """All parameters as one vector, block order, weight before bias"""
        return np.concatenate([np.concatenate([b.weight.ravel(), b.bias]) for b in self.blocks])

    def from_flat(self, vector: np.ndarray) -> 'ModelWeights':
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.n_parameters,):
            raise ShapeMismatchError(f"expected {self.n_parameters} values, got {vector.shape}")
        blocks, pos = [], 0
        for b in self.blocks:
            w_size = b.weight.size
            weight = vector[pos:pos + w_size].reshape(b.weight.shape).copy()
            pos += w_size
            bias = vector[pos:pos + b.bias.size].copy()
            pos += b.bias.size
            blocks.append(ParamBlock(b.layer_id, b.kind, weight, bias))
        return ModelWeights(config=self.config, blocks=tuple(blocks))

    @property
    def n_parameters(self) -> int:
        return sum(b.weight.size + b.bias.size for b in self.blocks)

    def equals(self, other: 'ModelWeights') -> bool:
        if self.fingerprint != other.fingerprint:
            return False
        return all(
            np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.blocks, other.blocks)
        )

    def max_abs_delta(self, other: 'ModelWeights') -> float:
        _check_congruent(self.blocks, other.blocks)
        return float(np.max(np.abs(self.flat() - other.flat())))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


@dataclass(frozen=True)
class GradientSet:
    """Mean-loss gradients, one block per ModelWeights block"""
    blocks: Tuple[ParamBlock, ...]
    sample_count: int

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([b.weight.ravel(), b.bias]) for b in self.blocks])


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"batch features must be [b × d] with b >= 1, got {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError("batch labels length must equal batch size")
        object.__setattr__(self, 'features', x)
        object.__setattr__(self, 'labels', y)

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


class TrainParams(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    epochs: int = Field(20, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, gt=0.0)
    shuffle_seed: int = Field(0, ge=0, lt=2 ** 64)


@dataclass(frozen=True)
class TrainResult:
    weights: ModelWeights
    loss_trace: List[float] = field(default_factory=list)


@dataclass
class _ConvCache:
    windows: np.ndarray    # [b, in, d, k]
    pre_activation: np.ndarray


@dataclass
class _BlockCache:
    block_input: np.ndarray
    conv1: _ConvCache
    conv2: _ConvCache
    summed: np.ndarray


@dataclass
class ForwardCache:
    """Activations kept by forward() for the matching backward()"""
    weights: ModelWeights
    batch_size: int
    stem: _ConvCache
    residual: List[_BlockCache]
    pooled_from: np.ndarray
    dense_inputs: List[np.ndarray]
    dense_pre: List[np.ndarray]

    def relu_pattern(self) -> np.ndarray:
        """Concatenated ReLU on/off masks; changes mean a kink was crossed"""
        parts = [self.stem.pre_activation > 0]
        for rc in self.residual:
            parts.append(rc.conv1.pre_activation > 0)
            parts.append(rc.summed > 0)
        parts.extend(z > 0 for z in self.dense_pre)
        return np.concatenate([p.ravel() for p in parts])


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> _ConvCache:
    out_channels, in_channels, k = weight.shape
    pad = k // 2
    b, _, d = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    # Accumulated tap by tap with elementwise ops: a row's output never
    # depends on the other rows in the batch
    out = np.zeros((b, out_channels, d))
    for i in range(in_channels):
        for kk in range(k):
            out += weight[None, :, i, kk, None] * padded[:, None, i, kk:kk + d]
    out += bias[None, :, None]
    return _ConvCache(windows=sliding_window_view(padded, k, axis=2), pre_activation=out)


def _dense_forward(a: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    z = np.zeros((a.shape[0], weight.shape[1]))
    for j in range(weight.shape[0]):
        z += a[:, j, None] * weight[j]
    return z + bias


def _average_positions(h: np.ndarray) -> np.ndarray:
    total = np.zeros(h.shape[:2])
    for p in range(h.shape[2]):
        total += h[:, :, p]
    return total / h.shape[2]


def _conv_backward(dout: np.ndarray, cache: _ConvCache, weight: np.ndarray,
                   need_input_grad: bool = True):
    d_weight = np.tensordot(dout, cache.windows, axes=([0, 2], [0, 2]))
    d_bias = dout.sum(axis=(0, 2))
    if not need_input_grad:
        return d_weight, d_bias, None

    k = weight.shape[2]
    pad = k // 2
    b, _, d = dout.shape
    # [b, d, in, k]
    d_windows = np.tensordot(dout, weight, axes=([1], [0]))
    d_padded = np.zeros((b, weight.shape[1], d + 2 * pad))
    for kk in range(k):
        d_padded[:, :, kk:kk + d] += d_windows[:, :, :, kk].transpose(0, 2, 1)
    return d_weight, d_bias, d_padded[:, :, pad:pad + d]


def _check_congruent(a: Sequence[ParamBlock], b: Sequence[ParamBlock]):
    if len(a) != len(b):
        raise ShapeMismatchError(f"{len(a)} blocks vs {len(b)} blocks")
    for x, y in zip(a, b):
        if x.weight.shape != y.weight.shape or x.bias.shape != y.bias.shape:
            raise ShapeMismatchError(
                f"block {x.layer_id} {x.weight.shape} vs {y.layer_id} {y.weight.shape}"
            )


def init_model(config: ComboNetConfig) -> ModelWeights:
    """He-uniform weights, zero biases, drawn in block order from init_seed"""
    rng = np.random.default_rng(config.init_seed)
    blocks = []
    for layer_id, kind, w_shape, b_len in layer_shapes(config):
        fan_in = w_shape[1] * w_shape[2] if kind == 'conv' else w_shape[0]
        limit = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=w_shape)
        blocks.append(ParamBlock(layer_id, kind, weight, np.zeros(b_len)))
    return ModelWeights(config=config, blocks=tuple(blocks))


def forward(weights: ModelWeights, batch: Batch) -> Tuple[np.ndarray, ForwardCache]:
    cfg = weights.config
    x = batch.features
    if x.shape[1] != cfg.input_dim:
        raise DimensionMismatchError(
            f"batch has {x.shape[1]} features, network expects {cfg.input_dim}"
        )

    blocks = iter(weights.blocks)
    stem = next(blocks)
    stem_cache = _conv_forward(x[:, None, :], stem.weight, stem.bias)
    h = _relu(stem_cache.pre_activation)

    residual = []
    for _ in range(cfg.residual_blocks):
        c1, c2 = next(blocks), next(blocks)
        conv1 = _conv_forward(h, c1.weight, c1.bias)
        conv2 = _conv_forward(_relu(conv1.pre_activation), c2.weight, c2.bias)
        summed = conv2.pre_activation + h
        residual.append(_BlockCache(block_input=h, conv1=conv1, conv2=conv2, summed=summed))
        h = _relu(summed)

    pooled_from = h
    if cfg.pooling == 'avg':
        a = _average_positions(h)
    else:
        a = h.reshape(h.shape[0], -1)

    dense_inputs, dense_pre = [], []
    for _ in cfg.dense_hidden:
        layer = next(blocks)
        dense_inputs.append(a)
        z = _dense_forward(a, layer.weight, layer.bias)
        dense_pre.append(z)
        a = _relu(z)

    out = next(blocks)
    dense_inputs.append(a)
    logits = _dense_forward(a, out.weight, out.bias)

    cache = ForwardCache(
        weights=weights,
        batch_size=batch.size,
        stem=stem_cache,
        residual=residual,
        pooled_from=pooled_from,
        dense_inputs=dense_inputs,
        dense_pre=dense_pre,
    )
    return logits, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits"""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionMismatchError(f"{labels.shape[0]} labels for {b} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelRangeError(f"labels must lie in [0, {c})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(b)
    loss = float(-log_probs[rows, labels].mean())

    d_logits = np.exp(log_probs)
    d_logits[rows, labels] -= 1.0
    d_logits /= b
    return loss, d_logits


def backward(weights: ModelWeights, cache: ForwardCache, d_logits: np.ndarray) -> GradientSet:
    """Reverse-mode gradients of the mean loss for every parameter block"""
    if cache.weights is not weights and not weights.equals(cache.weights):
        raise StaleCacheError("cache was produced by a different set of weights")
    if d_logits.shape[0] != cache.batch_size:
        raise StaleCacheError(
            f"cache holds a batch of {cache.batch_size}, gradient has {d_logits.shape[0]} rows"
        )

    cfg = weights.config
    blocks = weights.blocks
    grads: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    # Dense head, last layer first
    dense_blocks = blocks[-(len(cfg.dense_hidden) + 1):]
    upstream = d_logits
    for j in range(len(dense_blocks) - 1, -1, -1):
        layer = dense_blocks[j]
        if j < len(cfg.dense_hidden):
            upstream = upstream * (cache.dense_pre[j] > 0)
        inputs = cache.dense_inputs[j]
        grads[layer.layer_id] = (inputs.T @ upstream, upstream.sum(axis=0))
        upstream = upstream @ layer.weight.T

    h = cache.pooled_from
    if cfg.pooling == 'avg':
        d_h = np.repeat(upstream[:, :, None] / h.shape[2], h.shape[2], axis=2)
    else:
        d_h = upstream.reshape(h.shape)

    for i in range(cfg.residual_blocks - 1, -1, -1):
        rc = cache.residual[i]
        c1, c2 = blocks[1 + 2 * i], blocks[2 + 2 * i]
        d_summed = d_h * (rc.summed > 0)
        dw2, db2, d_mid = _conv_backward(d_summed, rc.conv2, c2.weight)
        d_mid = d_mid * (rc.conv1.pre_activation > 0)
        dw1, db1, d_in = _conv_backward(d_mid, rc.conv1, c1.weight)
        grads[c1.layer_id] = (dw1, db1)
        grads[c2.layer_id] = (dw2, db2)
        d_h = d_summed + d_in

    stem = blocks[0]
    d_stem = d_h * (cache.stem.pre_activation > 0)
    dw, db, _ = _conv_backward(d_stem, cache.stem, stem.weight, need_input_grad=False)
    grads[stem.layer_id] = (dw, db)

    return GradientSet(
        blocks=tuple(
            ParamBlock(b.layer_id, b.kind, grads[b.layer_id][0], grads[b.layer_id][1])
            for b in blocks
        ),
        sample_count=cache.batch_size,
    )


def sgd_step(weights: ModelWeights, grads: GradientSet, lr: float) -> ModelWeights:
    """w' = w - lr * g, returned as a new ModelWeights"""
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    _check_congruent(weights.blocks, grads.blocks)
    return ModelWeights(
        config=weights.config,
        blocks=tuple(
            ParamBlock(w.layer_id, w.kind, w.weight - lr * g.weight, w.bias - lr * g.bias)
            for w, g in zip(weights.blocks, grads.blocks)
        ),
    )


def mean_loss(weights: ModelWeights, features: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = forward(weights, Batch(features, labels))
    loss, _ = cross_entropy_loss(logits, labels)
    return loss


def full_batch_gradient(weights: ModelWeights, features: np.ndarray,
                        labels: np.ndarray) -> Tuple[float, GradientSet]:
    batch = Batch(features, labels)
    logits, cache = forward(weights, batch)
    loss, d_logits = cross_entropy_loss(logits, batch.labels)
    return loss, backward(weights, cache, d_logits)


def train_epochs(weights: ModelWeights, data, params: TrainParams,
                 progress: bool = False) -> TrainResult:
    """
    Seeded mini-batch SGD over `data` (anything with .features / .labels).

    The loss trace holds the full-data mean loss after each epoch.
    """
    n = int(data.features.shape[0])
    if n == 0:
        raise EmptyDataError("cannot train on empty data")

    batch_size = params.batch_size
    if batch_size > n:
        logger.warning(f"⚠️  batch_size {batch_size} > {n} samples; using full batch")
        batch_size = n

    rng = np.random.default_rng(params.shuffle_seed)
    trace = []
    for epoch in tqdm(range(params.epochs), desc='epochs', disable=not progress, leave=False):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = full_batch_gradient(weights, data.features[idx], data.labels[idx])
            weights = sgd_step(weights, grads, params.learning_rate)
        trace.append(mean_loss(weights, data.features, data.labels))
        logger.debug(f"epoch {epoch + 1}/{params.epochs} loss={trace[-1]:.6f}")

    return TrainResult(weights=weights, loss_trace=trace)


def predict_logits(weights: ModelWeights, features, chunk_size: int = 4096) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weights.config.input_dim:
        raise DimensionMismatchError(
            f"features shape {x.shape} does not match input_dim {weights.config.input_dim}"
        )
    parts = []
    for start in range(0, x.shape[0], chunk_size):
        chunk = x[start:start + chunk_size]
        logits, _ = forward(weights, Batch(chunk, np.zeros(chunk.shape[0], dtype=np.int64)))
        parts.append(logits)
    if not parts:
        return np.zeros((0, weights.config.n_classes))
    return np.vstack(parts)


def predict_classes(weights: ModelWeights, features) -> np.ndarray:
    """argmax per row; np.argmax already resolves ties to the lowest index"""
    return np.argmax(predict_logits(weights, features), axis=1)


# Weight file: see docs/WEIGHT_FORMAT.md

_HEADER = struct.Struct('<4sH8sI')


def serialize_weights(weights: ModelWeights) -> bytes:
    out = [_HEADER.pack(WEIGHT_MAGIC, WEIGHT_FORMAT_VERSION, weights.fingerprint, len(weights.blocks))]
    for b in weights.blocks:
        layer_id = b.layer_id.encode('utf-8')
        out.append(struct.pack('<H', len(layer_id)))
        out.append(layer_id)
        out.append(struct.pack('<BB', _KIND_TAGS[b.kind], b.weight.ndim))
        out.append(struct.pack(f'<{b.weight.ndim}I', *b.weight.shape))
        out.append(np.ascontiguousarray(b.weight, dtype='<f8').tobytes())
        out.append(struct.pack('<I', b.bias.size))
        out.append(np.ascontiguousarray(b.bias, dtype='<f8').tobytes())
    return b''.join(out)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(
                f"weight file truncated at byte {len(self.blob)} (needed {self.pos + n})"
            )
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def deserialize_weights(blob: bytes, config: ComboNetConfig) -> ModelWeights:
    """Parse a weight file and verify it against `config`"""
    reader = _Reader(bytes(blob))
    if len(blob) >= 4 and blob[:4] != WEIGHT_MAGIC:
        raise VersionError(f"bad magic {bytes(blob[:4])!r}, expected {WEIGHT_MAGIC!r}")
    magic, version, fingerprint, n_blocks = reader.unpack(_HEADER.format)
    if version != WEIGHT_FORMAT_VERSION:
        raise VersionError(f"unsupported weight format version {version}")
    if fingerprint != config.fingerprint():
        raise FingerprintMismatchError(
            f"file fingerprint {fingerprint.hex()} does not match config {config.fingerprint().hex()}"
        )

    blocks = []
    for _ in range(n_blocks):
        (id_len,) = reader.unpack('<H')
        raw_id = reader.take(id_len)
        try:
            layer_id = raw_id.decode('utf-8')
        except UnicodeDecodeError:
            raise WeightFormatError(f"layer id {raw_id!r} is not valid UTF-8")
        tag, ndim = reader.unpack('<BB')
        if tag not in _TAG_KINDS:
            raise WeightFormatError(f"unknown block kind tag {tag} for {layer_id}")
        shape = reader.unpack(f'<{ndim}I')
        count = int(np.prod(shape)) if ndim else 1
        weight = np.frombuffer(reader.take(8 * count), dtype='<f8').astype(np.float64).reshape(shape)
        (bias_len,) = reader.unpack('<I')
        bias = np.frombuffer(reader.take(8 * bias_len), dtype='<f8').astype(np.float64)
        blocks.append(ParamBlock(layer_id, _TAG_KINDS[tag], weight, bias))

    if reader.pos != len(reader.blob):
        raise WeightFormatError(f"{len(reader.blob) - reader.pos} trailing bytes after last block")

    return ModelWeights(config=config, blocks=tuple(blocks))


def expected_file_size(config: ComboNetConfig) -> int:
    size = _HEADER.size
    for layer_id, _, w_shape, b_len in layer_shapes(config):
        size += 2 + len(layer_id.encode('utf-8')) + 2 + 4 * len(w_shape)
        size += 8 * int(np.prod(w_shape)) + 4 + 8 * b_len
    return size


@dataclass(frozen=True)
class GradientCheckResult:
    max_relative_error: float
    max_absolute_error: float
    checked: int
    skipped: int
    worst_layer: Optional[str] = None


def gradient_check(weights: ModelWeights, batch: Batch, h: float = 1e-4,
                   abs_floor: float = 1e-5) -> GradientCheckResult:
    """
    Compare backprop against central differences on every parameter.

    Relative error is |a - f| / (|a| + 1e-8). Coordinates whose ±h step flips
    any ReLU mask are skipped; there the loss is not differentiable. When both
    derivatives sit below `abs_floor` the pair is compared absolutely and
    reported in `max_absolute_error` instead.
    """
    logits, cache = forward(weights, batch)
    _, d_logits = cross_entropy_loss(logits, batch.labels)
    analytic = backward(weights, cache, d_logits).flat()
    base_pattern = cache.relu_pattern()

    theta = weights.flat()
    worst, worst_abs, worst_layer = 0.0, 0.0, None
    checked = skipped = 0

    owners = []
    for b in weights.blocks:
        owners.extend([b.layer_id] * (b.weight.size + b.bias.size))

    def loss_at(vector):
        perturbed = weights.from_flat(vector)
        lg, c = forward(perturbed, batch)
        return cross_entropy_loss(lg, batch.labels)[0], c.relu_pattern()

    for i in range(theta.size):
        plus = theta.copy()
        plus[i] += h
        minus = theta.copy()
        minus[i] -= h
        f_plus, pat_plus = loss_at(plus)
        f_minus, pat_minus = loss_at(minus)
        if not (np.array_equal(pat_plus, base_pattern) and np.array_equal(pat_minus, base_pattern)):
            skipped += 1
            continue

        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[i]
        checked += 1
        if abs(a) < abs_floor and abs(numeric) < abs_floor:
            worst_abs = max(worst_abs, abs(a - numeric))
            continue
        err = abs(a - numeric) / (abs(a) + 1e-8)
        if err > worst:
            worst, worst_layer = err, owners[i]

    return GradientCheckResult(
        max_relative_error=worst,
        max_absolute_error=worst_abs,
        checked=checked,
        skipped=skipped,
        worst_layer=worst_layer,
    )
