"""Federated orchestration: client partitioning, global-model cloning, local
training, sample-weighted aggregation, and the round loop.

Determinism contract: every stochastic choice a client makes during round r
comes from a generator seeded by (master_seed, client_id, epoch_index), so
results are independent of client scheduling order; aggregation always sums
in ascending client order.  Client optimizer state is created fresh at the
start of each round (the server exchanges parameters only), and the
centralized trainer mirrors that by re-seeding its optimizer every
`local_epochs` epochs, which makes a one-client federated run bitwise equal
to a centralized run.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .datagen import largest_remainder
from .nn.loss import one_hot, softmax_cross_entropy
from .nn.network import Network
from .nn.optim import AdamState, adam_step, sgd_step


@dataclass
class ClientState:
    client_id: int
    x: np.ndarray
    y: np.ndarray
    seed: int = 0
    params: np.ndarray | None = None

    @property
    def sample_count(self) -> int:
        return int(self.x.shape[0])


@dataclass
class GlobalState:
    round: int
    params: np.ndarray
    clients: list[ClientState]


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


@dataclass
class RoundRecord:
    round: int
    client: str  # client id as text, or "GLOBAL"
    loss: float
    accuracy: float
    weight: float


@dataclass
class FederatedConfig:
    rounds: int = 10
    local_epochs: int = 1
    batch_size: int = 64
    lr: float = 0.001
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("rounds, local_epochs and batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


@dataclass
class FederatedResult:
    final_params: np.ndarray
    history: list[RoundRecord]
    weights: np.ndarray
    rounds_run: int


# ---------------------------------------------------------------------------
# partitioning


def partition_dataset(
    x: np.ndarray,
    y: np.ndarray,
    n_clients: int,
    proportions=None,
    seed: int = 0,
    mode: str = "iid",
    skew: float = 0.8,
) -> list[ClientState]:
    """Split (x, y) into disjoint client shards covering the whole dataset.

    "iid" shuffles within each class and hands out proportional slices, so
    every shard's class composition tracks the requested proportions.
    "label_skew" concentrates each class on one dominant client for non-IID
    stress tests.
    """
    if n_clients < 1:
        raise ValueError("need at least one client")
    if proportions is None:
        proportions = [1.0 / n_clients] * n_clients
    if len(proportions) != n_clients:
        raise ValueError(f"{len(proportions)} proportions for {n_clients} clients")
    largest_remainder(100, proportions)  # validates positivity and unit sum
    if mode not in ("iid", "label_skew"):
        raise ValueError(f"unknown partition mode {mode!r}")

    rng = np.random.default_rng(seed)
    assignments: list[list[int]] = [[] for _ in range(n_clients)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        if mode == "iid":
            shares = proportions
        else:
            dominant = int(cls) % n_clients
            base = (1.0 - skew) / n_clients
            shares = [base + (skew if i == dominant else 0.0) for i in range(n_clients)]
        counts = largest_remainder(len(idx), shares)
        start = 0
        for client, count in enumerate(counts):
            assignments[client].extend(idx[start : start + count].tolist())
            start += count

    clients = []
    for cid, rows in enumerate(assignments):
        rows = np.array(sorted(rows), dtype=int)
        clients.append(ClientState(client_id=cid, x=x[rows], y=y[rows], seed=seed))
    return clients


# ---------------------------------------------------------------------------
# weights, cloning, aggregation


def effective_sample_count(n_samples: int, batch_size: int | None = None) -> int:
    """Client data size as batch cardinality times batch size.

    Equals the raw sample count whenever the shard is batch-aligned; partial
    batches round the count up to the next full batch.
    """
    if batch_size is None:
        return n_samples
    cardinality = -(-n_samples // batch_size)
    return cardinality * batch_size


def weight_scaling_factors(sample_counts) -> np.ndarray:
    """Per-client aggregation weights, proportional to local sample counts."""
    counts = np.asarray(sample_counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("no clients")
    if (counts <= 0).any():
        raise ValueError(f"every client needs samples, got counts {sample_counts}")
    return counts / counts.sum()


def clone_global(params: np.ndarray, n_clients: int) -> list[np.ndarray]:
    """Value copies of the global parameters, one per client, no sharing."""
    return [params.copy() for _ in range(n_clients)]


def aggregate(param_list: list[np.ndarray], weights) -> np.ndarray:
    """Weighted mean of parameter vectors: out[k] = sum_i w[i] * params[i][k]."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(param_list) != weights.size:
        raise ValueError(f"{len(param_list)} vectors but {weights.size} weights")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    length = param_list[0].shape
    for i, p in enumerate(param_list):
        if p.shape != length:
            raise ValueError(f"vector {i} has shape {p.shape}, expected {length}")
    stack = np.stack([p.astype(np.float64) for p in param_list])
    out = (weights[:, None] * stack).sum(axis=0)
    return out.astype(param_list[0].dtype)


# ---------------------------------------------------------------------------
# training loops


def evaluate(network: Network, params: np.ndarray, x: np.ndarray, y: np.ndarray,
             batch: int = 256) -> tuple[float, float]:
    """Infer-mode loss and accuracy."""
    losses = []
    correct = 0
    for start in range(0, x.shape[0], batch):
        xb, yb = x[start : start + batch], y[start : start + batch]
        logits, _ = network.forward(params, xb, mode="infer")
        loss, _ = softmax_cross_entropy(
            logits.astype(np.float64), one_hot(yb, network.spec.classes)
        )
        losses.append(loss * len(yb))
        correct += int((logits.argmax(axis=1) == yb).sum())
    return float(np.sum(losses) / x.shape[0]), correct / x.shape[0]


def local_train(
    network: Network,
    start_params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    optimizer: str = "adam",
    seed_key: tuple[int, int, int] = (0, 0, 0),
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, list[EpochMetrics]]:
    """Mini-batch training from a private copy of `start_params`.

    `seed_key` is (master_seed, client_id, first_epoch_index); epoch e uses
    the generator seeded by (master, client, first_epoch + e) for both the
    shuffle and any dropout draws.
    """
    if x.shape[0] == 0:
        raise ValueError("empty shard")
    if batch_size > x.shape[0]:
        raise ValueError(f"batch size {batch_size} exceeds shard size {x.shape[0]}")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    master, client_id, epoch_base = seed_key

    params = start_params.copy()
    opt_state = AdamState.zeros(network.n_params, dtype=params.dtype)
    classes = network.spec.classes
    metrics: list[EpochMetrics] = []
    for e in range(epochs):
        rng = np.random.default_rng((master, client_id, epoch_base + e))
        order = rng.permutation(x.shape[0])
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), batch_size):
            rows = order[start : start + batch_size]
            xb, yb = x[rows], y[rows]
            loss, grads, logits = network.loss_and_grad(
                params, xb, one_hot(yb, classes), rng=rng
            )
            if optimizer == "adam":
                params, opt_state = adam_step(params, grads, opt_state, lr)
            else:
                params = sgd_step(params, grads, lr)
            loss_sum += loss * len(rows)
            correct += int((logits.argmax(axis=1) == yb).sum())
        row = EpochMetrics(
            epoch=epoch_base + e,
            train_loss=loss_sum / x.shape[0],
            train_accuracy=correct / x.shape[0],
        )
        if validation is not None:
            row.val_loss, row.val_accuracy = evaluate(network, params, *validation)
        metrics.append(row)
    return params, metrics


def train_centralized(
    network: Network,
    x: np.ndarray,
    y: np.ndarray,
    validation: tuple[np.ndarray, np.ndarray] | None,
    config: FederatedConfig,
    init_params: np.ndarray | None = None,
) -> tuple[np.ndarray, list[EpochMetrics]]:
    """Single-worker training with the same seeding/optimizer cadence as a
    one-client federated run (optimizer state resets every local_epochs)."""
    params = network.init_params(config.seed) if init_params is None else init_params.copy()
    history: list[EpochMetrics] = []
    for r in range(config.rounds):
        params, metrics = local_train(
            network,
            params,
            x,
            y,
            epochs=config.local_epochs,
            batch_size=config.batch_size,
            lr=config.lr,
            optimizer=config.optimizer,
            seed_key=(config.seed, 0, r * config.local_epochs),
            validation=validation,
        )
        history.extend(metrics)
    return params, history


def run_federated(
    network: Network,
    clients: list[ClientState],
    validation: tuple[np.ndarray, np.ndarray] | None,
    config: FederatedConfig,
    init_params: np.ndarray | None = None,
    client_order: list[int] | None = None,
) -> FederatedResult:
    """Round loop: clone -> local train on every client -> weighted average.

    `client_order` only changes the execution schedule, never the result.
    """
    if not clients:
        raise ValueError("no clients registered")
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise ValueError("client ids must be unique")
    order = list(range(len(clients))) if client_order is None else list(client_order)
    if sorted(order) != list(range(len(clients))):
        raise ValueError("client_order must be a permutation of the client indexes")

    weights = weight_scaling_factors([c.sample_count for c in clients])
    global_params = (
        network.init_params(config.seed) if init_params is None else init_params.copy()
    )
    by_rank = np.argsort([c.client_id for c in clients], kind="stable")

    history: list[RoundRecord] = []
    for r in range(config.rounds):
        copies = clone_global(global_params, len(clients))
        results: dict[int, tuple[np.ndarray, list[EpochMetrics]]] = {}
        for slot in order:  # schedule; any order yields the same aggregate
            client = clients[slot]
            results[slot] = local_train(
                network,
                copies[slot],
                client.x,
                client.y,
                epochs=config.local_epochs,
                batch_size=config.batch_size,
                lr=config.lr,
                optimizer=config.optimizer,
                seed_key=(config.seed, client.client_id, r * config.local_epochs),
            )
        for slot in by_rank:
            client = clients[slot]
            params_i, metrics_i = results[slot]
            client.params = params_i
            last = metrics_i[-1]
            history.append(
                RoundRecord(
                    round=r,
                    client=str(client.client_id),
                    loss=last.train_loss,
                    accuracy=last.train_accuracy,
                    weight=float(weights[slot]),
                )
            )
        global_params = aggregate(
            [results[slot][0] for slot in by_rank], weights[by_rank]
        )
        if validation is not None:
            val_loss, val_acc = evaluate(network, global_params, *validation)
            history.append(
                RoundRecord(round=r, client="GLOBAL", loss=val_loss, accuracy=val_acc, weight=1.0)
            )
    return FederatedResult(
        final_params=global_params,
        history=history,
        weights=weights,
        rounds_run=config.rounds,
    )


# ---------------------------------------------------------------------------
# artifacts


def write_round_history_csv(history: list[RoundRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["round", "client_id", "loss", "accuracy", "weight"])
        for row in history:
            out.writerow([row.round, row.client, row.loss, row.accuracy, row.weight])


def summary_json(result: FederatedResult, config: FederatedConfig) -> str:
    final_global = [h for h in result.history if h.client == "GLOBAL"]
    payload = {
        "config": {
            "rounds": config.rounds,
            "local_epochs": config.local_epochs,
            "batch_size": config.batch_size,
            "lr": config.lr,
            "optimizer": config.optimizer,
            "seed": config.seed,
        },
        "weights": result.weights.tolist(),
        "rounds_run": result.rounds_run,
        "final_validation": (
            {"loss": final_global[-1].loss, "accuracy": final_global[-1].accuracy}
            if final_global
            else None
        ),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
