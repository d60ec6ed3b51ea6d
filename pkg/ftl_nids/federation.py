"""
FTL protocol engine

Server bootstrap on X_s, duplication to the clients, local work per client
(one full-batch gradient for fedsgd, local epochs for fedavg), sample-count
weighted averaging, and round orchestration with per-round evaluation.

States are immutable values: a round builds a new ServerState and only
returns it once every client finished, so a failing client leaves the caller's
state exactly as it was.
"""
import hashlib
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .dataset_io import Dataset
from .errors import (
    EmptyDataError,
    EmptyInputError,
    FingerprintMismatchError,
    PartitionError,
    RoundAbortedError,
    ShapeMismatchError,
)
from .metrics import MetricsReport, evaluate
from .neuralnet import (
    ComboNetConfig,
    GradientSet,
    ModelWeights,
    ParamBlock,
    TrainParams,
    full_batch_gradient,
    init_model,
    mean_loss,
    predict_classes,
    sgd_step,
    train_epochs,
)

logger = logging.getLogger('FEDERATION')


class RoundConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    mode: Literal['fedsgd', 'fedavg'] = 'fedavg'
    learning_rate: float = Field(0.05, gt=0.0)
    local_epochs: int = Field(1, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    max_workers: int = Field(1, ge=1)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    network: ComboNetConfig
    bootstrap: TrainParams
    round: RoundConfig
    rounds: int = Field(2, ge=0)
    tolerance: float = Field(1e-6, ge=0.0)


@dataclass(frozen=True)
class ClientState:
    client_id: int
    local_data: Dataset
    current_weights: Optional[ModelWeights] = None

    @property
    def n_i(self) -> int:
        return self.local_data.n_samples


@dataclass(frozen=True)
class ServerState:
    global_weights: ModelWeights
    round: int = 0
    client_ids: Tuple[int, ...] = ()
    total_samples: int = 0
    bootstrap_loss_trace: Tuple[float, ...] = ()


@dataclass(frozen=True)
class ClientRoundEntry:
    client_id: int
    n_i: int
    loss: float
    local_accuracy: float
    eval_accuracy: float

    def to_dict(self) -> Dict:
        return {
            'client_id': self.client_id,
            'n_i': self.n_i,
            'loss': self.loss,
            'local_accuracy': self.local_accuracy,
            'eval_accuracy': self.eval_accuracy,
        }


@dataclass(frozen=True)
class RoundLog:
    round: int
    clients: Tuple[ClientRoundEntry, ...]
    server: MetricsReport
    weight_delta: Optional[float] = None

    def to_dict(self, label_names: Optional[Sequence[str]] = None) -> Dict:
        return {
            'round': self.round,
            'clients': [c.to_dict() for c in self.clients],
            'server': self.server.to_dict(label_names),
            'weight_delta': self.weight_delta,
        }


@dataclass(frozen=True)
class SimulationResult:
    bootstrap_log: RoundLog
    round_logs: List[RoundLog] = field(default_factory=list)
    final_weights: Optional[ModelWeights] = None
    stopped_early: bool = False

    @property
    def logs(self) -> List[RoundLog]:
        return [self.bootstrap_log] + list(self.round_logs)


@dataclass(frozen=True)
class _ClientOutcome:
    loss: float
    weights: Optional[ModelWeights] = None
    grads: Optional[GradientSet] = None


def derive_seed(global_seed: int, client_id: int, round_index: int) -> int:
    """Per-client RNG seed from (global seed, client id, round)"""
    digest = hashlib.sha256(struct.pack('<QQQ', global_seed, client_id, round_index)).digest()
    return int.from_bytes(digest[:8], 'little')


def bootstrap_server(config: ComboNetConfig, server_data: Dataset, train_params: TrainParams,
                     client_ids: Sequence[int] = (), total_samples: int = 0,
                     progress: bool = False) -> ServerState:
    """Initialise M_s and train it on X_s; the result T_s sits at t=0"""
    if server_data.n_samples == 0:
        raise EmptyDataError("server data is empty")

    result = train_epochs(init_model(config), server_data, train_params, progress=progress)
    if result.loss_trace:
        logger.info(
            f"✅ Server bootstrap: {train_params.epochs} epochs on {server_data.n_samples} rows, "
            f"final loss {result.loss_trace[-1]:.4f}"
        )
    return ServerState(
        global_weights=result.weights,
        round=0,
        client_ids=tuple(client_ids),
        total_samples=total_samples,
        bootstrap_loss_trace=tuple(result.loss_trace),
    )


def register_clients(server: ServerState, clients: Sequence[ClientState]) -> ServerState:
    return replace(
        server,
        client_ids=tuple(c.client_id for c in clients),
        total_samples=sum(c.n_i for c in clients),
    )


def deploy_to_clients(server: ServerState, clients: Sequence[ClientState]) -> List[ClientState]:
    """Give every client its own value-copy of the global weights"""
    ids = tuple(c.client_id for c in clients)
    if ids != server.client_ids:
        raise PartitionError(f"client list {ids} does not match registry {server.client_ids}")

    fingerprint = server.global_weights.fingerprint
    deployed = []
    for c in clients:
        if c.current_weights is not None and c.current_weights.fingerprint != fingerprint:
            raise FingerprintMismatchError(
                f"client {c.client_id} holds weights for a different network config"
            )
        deployed.append(replace(c, current_weights=server.global_weights.copy()))
    return deployed


def _require_ready(client: ClientState):
    if client.current_weights is None:
        raise ValueError(f"client {client.client_id} has no deployed weights")
    if client.n_i == 0:
        raise EmptyDataError(f"client {client.client_id} has no local data")


def client_local_loss(client: ClientState) -> float:
    """F_i: mean loss over all n_i local samples at the current weights"""
    _require_ready(client)
    return mean_loss(client.current_weights, client.local_data.features, client.local_data.labels)


def client_gradient(client: ClientState) -> GradientSet:
    """g_i: full-batch mean gradient of F_i; sample_count = n_i"""
    _require_ready(client)
    _, grads = full_batch_gradient(
        client.current_weights, client.local_data.features, client.local_data.labels
    )
    return grads


def client_sgd_update(server_weights: ModelWeights, grad: GradientSet, lr: float) -> ModelWeights:
    return sgd_step(server_weights, grad, lr)


def client_local_train(client: ClientState, cfg: RoundConfig, round_index: int = 0) -> ModelWeights:
    """M_{c_i}: local_epochs of seeded minibatch SGD from the deployed weights"""
    _require_ready(client)
    if cfg.local_epochs == 0:
        return client.current_weights

    params = TrainParams(
        epochs=cfg.local_epochs,
        batch_size=min(cfg.batch_size, client.n_i),
        learning_rate=cfg.learning_rate,
        shuffle_seed=derive_seed(cfg.seed, client.client_id, round_index),
    )
    return train_epochs(client.current_weights, client.local_data, params).weights


def federated_weighted_average(entries: Sequence[Tuple[ModelWeights, int]]) -> ModelWeights:
    """Σ (n_i / n) · w_i per parameter, entries combined in the order given"""
    if not entries:
        raise EmptyInputError("no models to average")

    models = [w for w, _ in entries]
    counts = np.array([n for _, n in entries], dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("every n_i must be > 0")

    reference = models[0]
    for m in models[1:]:
        if m.fingerprint != reference.fingerprint:
            raise ShapeMismatchError("cannot average models built for different configs")

    coefficients = counts / counts.sum()
    blocks = []
    for i, ref_block in enumerate(reference.blocks):
        weight_stack = np.stack([m.blocks[i].weight for m in models], axis=0)
        bias_stack = np.stack([m.blocks[i].bias for m in models], axis=0)
        weight = np.tensordot(coefficients, weight_stack, axes=1)
        bias = np.tensordot(coefficients, bias_stack, axes=1)
        blocks.append(ParamBlock(ref_block.layer_id, ref_block.kind, weight, bias))
    return ModelWeights(config=reference.config, blocks=tuple(blocks))


def _accuracy(weights: ModelWeights, data: Dataset) -> float:
    if data.n_samples == 0:
        return 0.0
    return float(np.mean(predict_classes(weights, data.features) == data.labels))


def _client_work(client: ClientState, cfg: RoundConfig, round_index: int) -> _ClientOutcome:
    if cfg.mode == 'fedsgd':
        loss = client_local_loss(client)
        return _ClientOutcome(loss=loss, grads=client_gradient(client))

    weights = client_local_train(client, cfg, round_index)
    loss = mean_loss(weights, client.local_data.features, client.local_data.labels)
    return _ClientOutcome(weights=weights, loss=loss)


def _client_entries(models: Sequence[ModelWeights], clients: Sequence[ClientState],
                    losses: Sequence[float], eval_data: Dataset) -> Tuple[ClientRoundEntry, ...]:
    return tuple(
        ClientRoundEntry(
            client_id=c.client_id,
            n_i=c.n_i,
            loss=float(loss),
            local_accuracy=_accuracy(w, c.local_data),
            eval_accuracy=_accuracy(w, eval_data),
        )
        for w, c, loss in zip(models, clients, losses)
    )


def _server_report(weights: ModelWeights, eval_data: Dataset) -> MetricsReport:
    return evaluate(eval_data.labels, predict_classes(weights, eval_data.features), eval_data.n_classes)


def run_round(server: ServerState, clients: Sequence[ClientState], cfg: RoundConfig,
              eval_data: Dataset) -> Tuple[ServerState, RoundLog]:
    """deploy → client work → weighted average → t+1 → evaluate"""
    round_index = server.round + 1
    deployed = deploy_to_clients(server, clients)

    outcomes: List[_ClientOutcome] = []
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as executor:
        futures = [
            executor.submit(_client_work, c, cfg, round_index)
            for c in deployed
        ]
        # Consumed in client order so parallel and serial runs aggregate identically
        for client, future in zip(deployed, futures):
            try:
                outcomes.append(future.result())
            except Exception as e:
                logger.error(f"❌ Round {round_index} aborted: client {client.client_id} failed: {e}",
                             extra={'round': round_index, 'client_id': client.client_id})
                raise RoundAbortedError(round_index, client.client_id, e) from e

    if not outcomes:
        raise EmptyInputError(f"round {round_index} has no clients to aggregate")

    if cfg.mode == 'fedsgd':
        # Server-side stepping: w_t - eta * g_i for every client
        outcomes = [
            replace(o, weights=client_sgd_update(server.global_weights, o.grads, cfg.learning_rate))
            for o in outcomes
        ]

    new_weights = federated_weighted_average([(o.weights, c.n_i) for o, c in zip(outcomes, deployed)])
    delta = new_weights.max_abs_delta(server.global_weights)
    new_server = replace(server, global_weights=new_weights, round=round_index)

    report = _server_report(new_weights, eval_data)
    log = RoundLog(
        round=round_index,
        clients=_client_entries([o.weights for o in outcomes], deployed,
                                [o.loss for o in outcomes], eval_data),
        server=report,
        weight_delta=delta,
    )
    logger.info(
        f"📍 Round {round_index} ({cfg.mode}): server accuracy {report.accuracy:.4f}, "
        f"macro F1 {report.macro_f1:.4f}, weight delta {delta:.3e}",
        extra={'round': round_index, 'accuracy': report.accuracy, 'weight_delta': delta},
    )
    return new_server, log


def bootstrap_log(server: ServerState, clients: Sequence[ClientState], eval_data: Dataset) -> RoundLog:
    """t=0 evaluation of T_s, with every client scored at the bootstrap weights"""
    weights = server.global_weights
    losses = [
        mean_loss(weights, c.local_data.features, c.local_data.labels) if c.n_i else 0.0
        for c in clients
    ]
    return RoundLog(
        round=0,
        clients=_client_entries([weights] * len(clients), clients, losses, eval_data),
        server=_server_report(weights, eval_data),
        weight_delta=None,
    )


def run_simulation(config: SimulationConfig, server_data: Dataset, client_shares: Sequence[Dataset],
                   eval_data: Dataset, progress: bool = False) -> SimulationResult:
    """Bootstrap, then up to `config.rounds` rounds; stops once the weight delta < tolerance"""
    clients = [ClientState(client_id=i, local_data=share) for i, share in enumerate(client_shares)]
    server = bootstrap_server(config.network, server_data, config.bootstrap, progress=progress)
    server = register_clients(server, clients)

    boot = bootstrap_log(server, clients, eval_data)
    logger.info(f"📍 Bootstrap: server accuracy {boot.server.accuracy:.4f} on {eval_data.n_samples} rows")

    round_logs = []
    stopped_early = False
    for _ in tqdm(range(config.rounds), desc='rounds', disable=not progress):
        server, log = run_round(server, clients, config.round, eval_data)
        round_logs.append(log)
        if log.weight_delta is not None and log.weight_delta < config.tolerance:
            logger.info(f"✅ Converged after round {log.round} (delta {log.weight_delta:.3e})")
            stopped_early = True
            break

    return SimulationResult(
        bootstrap_log=boot,
        round_logs=round_logs,
        final_weights=server.global_weights,
        stopped_early=stopped_early,
    )
