"""
Comparison classifiers: multinomial logistic regression (full-batch GD),
a linear softmax model trained by minibatch SGD, Gaussian Naive Bayes and a
random forest of CART trees. All numpy, all deterministic under seed.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .dataset_io import Dataset
from .errors import DimensionMismatchError, EmptyDataError, EmptyInputError, SingleClassError

logger = logging.getLogger('BASELINES')

BaselineKind = Literal['lr', 'gnb', 'sgd', 'rf']
BASELINE_KINDS = ('lr', 'gnb', 'sgd', 'rf')


class LRParams(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    learning_rate: float = Field(0.1, gt=0.0)
    epochs: int = Field(500, ge=0)


class SGDParams(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    learning_rate: float = Field(0.01, gt=0.0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(20, ge=0)


class GNBParams(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    var_floor: float = Field(1e-9, gt=0.0)


class RFParams(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    n_trees: int = Field(50, ge=1)
    max_depth: int = Field(12, ge=1)
    min_samples_split: int = Field(2, ge=2)
    bootstrap: bool = True
    max_workers: int = Field(1, ge=1)


BaselineParams = Union[LRParams, SGDParams, GNBParams, RFParams]

_DEFAULT_PARAMS = {'lr': LRParams, 'sgd': SGDParams, 'gnb': GNBParams, 'rf': RFParams}


@dataclass
class DecisionTree:
    """Array-backed CART tree; node 0 is the root, leaves have feature == -1"""
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    counts: List[List[int]] = field(default_factory=list)

    def add_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append([int(c) for c in counts])
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        leaf_class = np.argmax(np.array(self.counts), axis=1)

        node = np.zeros(X.shape[0], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            f = feature[node[rows]]
            go_left = X[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
            active = feature[node] >= 0
        return leaf_class[node]

    def to_dict(self) -> Dict:
        return {
            'feature': list(self.feature),
            'threshold': list(self.threshold),
            'left': list(self.left),
            'right': list(self.right),
            'counts': [list(c) for c in self.counts],
        }


@dataclass
class BaselineModel:
    kind: BaselineKind
    n_features: int
    n_classes: int
    # lr / sgd
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    # gnb
    priors: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    # rf
    trees: List[DecisionTree] = field(default_factory=list)
    loss_trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        out = {'kind': self.kind, 'n_features': self.n_features, 'n_classes': self.n_classes}
        if self.kind in ('lr', 'sgd'):
            out['weight'] = self.weight.tolist()
            out['bias'] = self.bias.tolist()
            out['loss_trace'] = list(self.loss_trace)
        elif self.kind == 'gnb':
            out['priors'] = self.priors.tolist()
            out['means'] = self.means.tolist()
            out['variances'] = self.variances.tolist()
        else:
            out['trees'] = [t.to_dict() for t in self.trees]
        return out


def gini_impurity(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyInputError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


# Linear softmax models

def _softmax_loss_grad(W, b, X, Y_onehot):
    logits = X @ W + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = float(-(Y_onehot * log_probs).sum() / n)
    diff = (np.exp(log_probs) - Y_onehot) / n
    return loss, X.T @ diff, diff.sum(axis=0)


def _fit_lr(train: Dataset, params: LRParams) -> BaselineModel:
    X, Y = train.features, np.eye(train.n_classes)[train.labels]
    W = np.zeros((train.n_features, train.n_classes))
    b = np.zeros(train.n_classes)
    trace = []
    for _ in range(params.epochs):
        loss, dW, db = _softmax_loss_grad(W, b, X, Y)
        trace.append(loss)
        W = W - params.learning_rate * dW
        b = b - params.learning_rate * db
    return BaselineModel('lr', train.n_features, train.n_classes, weight=W, bias=b, loss_trace=trace)


def _fit_sgd(train: Dataset, params: SGDParams, seed: int) -> BaselineModel:
    X, Y = train.features, np.eye(train.n_classes)[train.labels]
    n = X.shape[0]
    W = np.zeros((train.n_features, train.n_classes))
    b = np.zeros(train.n_classes)
    rng = np.random.default_rng(seed)
    batch_size = min(params.batch_size, n)
    trace = []
    for _ in range(params.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, dW, db = _softmax_loss_grad(W, b, X[idx], Y[idx])
            W = W - params.learning_rate * dW
            b = b - params.learning_rate * db
        trace.append(_softmax_loss_grad(W, b, X, Y)[0])
    return BaselineModel('sgd', train.n_features, train.n_classes, weight=W, bias=b, loss_trace=trace)


# Gaussian Naive Bayes

def _fit_gnb(train: Dataset, params: GNBParams) -> BaselineModel:
    counts = train.class_counts()
    priors = counts / counts.sum()
    means = np.zeros((train.n_classes, train.n_features))
    variances = np.ones((train.n_classes, train.n_features))
    for k in np.flatnonzero(counts):
        members = train.features[train.labels == k]
        means[k] = members.mean(axis=0)
        variances[k] = members.var(axis=0)
    variances = np.maximum(variances, params.var_floor)
    return BaselineModel('gnb', train.n_features, train.n_classes,
                         priors=priors, means=means, variances=variances)


def _gnb_log_posterior(model: BaselineModel, X: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        log_prior = np.log(model.priors)
    # [n, C]
    diff = X[:, None, :] - model.means[None, :, :]
    log_like = -0.5 * (np.log(2.0 * np.pi * model.variances)[None] + diff ** 2 / model.variances[None])
    return log_prior[None, :] + log_like.sum(axis=2)


# Random forest

def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int, features: np.ndarray, n_try: int):
    """
    Lowest weighted child Gini over candidate features.

    Features are tried in the given order; past the first `n_try`, the search
    only continues while no valid split has been found.
    """
    n = y.shape[0]
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    best = None
    for pos, f in enumerate(features):
        if pos >= n_try and best is not None:
            break
        order = np.argsort(X[:, f], kind='stable')
        xs = X[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue

        left_counts = np.cumsum(onehot[order], axis=0)[valid]
        right_counts = onehot.sum(axis=0) - left_counts
        n_left = (valid + 1).astype(np.float64)
        n_right = n - n_left
        gini_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
        weighted = (n_left * gini_left + n_right * gini_right) / n

        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[0]:
            threshold = (xs[valid[i]] + xs[valid[i] + 1]) / 2.0
            best = (float(weighted[i]), int(f), float(threshold))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, params: RFParams,
               rng: np.random.Generator) -> DecisionTree:
    tree = DecisionTree()
    n_try = max(1, int(np.sqrt(X.shape[1])))
    # (row indices, depth, node id)
    root = tree.add_node(np.bincount(y, minlength=n_classes))
    stack = [(np.arange(y.shape[0]), 0, root)]
    while stack:
        idx, depth, node = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes)
        if depth >= params.max_depth or idx.size < params.min_samples_split or np.count_nonzero(counts) <= 1:
            continue

        split = _best_split(X[idx], y[idx], n_classes, rng.permutation(X.shape[1]), n_try)
        if split is None:
            continue
        _, f, threshold = split
        go_left = X[idx, f] <= threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]

        tree.feature[node] = f
        tree.threshold[node] = threshold
        tree.left[node] = tree.add_node(np.bincount(y[left_idx], minlength=n_classes))
        tree.right[node] = tree.add_node(np.bincount(y[right_idx], minlength=n_classes))
        stack.append((right_idx, depth + 1, tree.right[node]))
        stack.append((left_idx, depth + 1, tree.left[node]))
    return tree


def _fit_one_tree(train: Dataset, params: RFParams, tree_seed: int) -> DecisionTree:
    rng = np.random.default_rng(tree_seed)
    n = train.n_samples
    rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    return _grow_tree(train.features[rows], train.labels[rows], train.n_classes, params, rng)


def _fit_rf(train: Dataset, params: RFParams, seed: int, progress: bool) -> BaselineModel:
    # Seeds fixed before any tree is grown, so worker scheduling cannot reorder streams
    tree_seeds = np.random.default_rng(seed).integers(0, 2 ** 63, size=params.n_trees)
    with ThreadPoolExecutor(max_workers=params.max_workers) as executor:
        futures = [executor.submit(_fit_one_tree, train, params, int(s)) for s in tree_seeds]
        trees = [f.result() for f in tqdm(futures, desc='trees', disable=not progress, leave=False)]
    return BaselineModel('rf', train.n_features, train.n_classes, trees=trees)


def fit_baseline(kind: BaselineKind, train: Dataset, hyperparams: Optional[BaselineParams] = None,
                 seed: int = 0, progress: bool = False) -> BaselineModel:
    if kind not in _DEFAULT_PARAMS:
        raise ValueError(f"unknown baseline kind: {kind}")
    if train.n_samples == 0:
        raise EmptyDataError("cannot fit a baseline on empty data")
    if np.count_nonzero(train.class_counts()) < 2:
        raise SingleClassError(f"{kind} needs at least 2 classes in the training data")

    params = hyperparams if hyperparams is not None else _DEFAULT_PARAMS[kind]()
    if kind == 'lr':
        model = _fit_lr(train, params)
    elif kind == 'sgd':
        model = _fit_sgd(train, params, seed)
    elif kind == 'gnb':
        model = _fit_gnb(train, params)
    else:
        model = _fit_rf(train, params, seed, progress)

    logger.info(f"✅ Fitted {kind} on {train.n_samples} rows × {train.n_features} features")
    return model


def predict_baseline(model: BaselineModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"features shape {X.shape} does not match the {model.n_features} features seen in training"
        )

    if model.kind in ('lr', 'sgd'):
        return np.argmax(X @ model.weight + model.bias, axis=1)
    if model.kind == 'gnb':
        return np.argmax(_gnb_log_posterior(model, X), axis=1)

    votes = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        votes[rows, tree.predict(X)] += 1
    return np.argmax(votes, axis=1)
