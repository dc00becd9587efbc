"""Adam training loop with the halving learning-rate schedule.

One optimiser step per minibatch; after each epoch the validation loss
is measured and, when its relative improvement drops below the
threshold, the learning rate is halved.  The best-validation network is
kept as the checkpoint.  Everything is deterministic given the seed.

Note on metrics: the ``seconds`` column of emitted records is pinned to
0.0 so that rerunning a command with the same spec and seed reproduces
byte-identical CSV files; measured wall-clock time goes to the log
callback instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import DataError, NumericError
from .network import (Network, NetworkConfig, masked_accuracy, sequence_loss,
                      stack_logits, to_checkpoint)
from .tasks import Dataset, SequenceBatch
from .tensor import make_rng

METRICS_HEADER = "epoch,split,loss,accuracy,lr,seconds,seed"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 24
    lr_halving_threshold: float = 0.001
    batch_size: int = 32
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float
    seconds: float
    seed: int

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.split},{self.loss!r},{self.accuracy!r},"
                f"{self.lr!r},{self.seconds!r},{self.seed}")


def write_metrics_csv(path, records: list[MetricsRecord]) -> None:
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


class Adam:
    """Adaptive-moment optimiser over a named parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            arr -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def loss_and_grads(net: Network, batch: SequenceBatch, mode: str = "eval",
                   rng: np.random.Generator | None = None):
    """One taped forward/backward; returns (loss, accuracy, grads-by-name)."""
    tape = ad.Tape()
    logits = net.forward(batch.inputs, batch.mask, mode=mode, rng=rng, tape=tape)
    loss = sequence_loss(logits, batch.targets, batch.mask)
    grads = tape.backward_named(loss)
    acc = masked_accuracy(stack_logits(logits), batch.targets, batch.mask)
    return float(loss.value), acc, grads


def evaluate(net: Network, batch: SequenceBatch) -> tuple[float, float]:
    """Deterministic eval-mode (loss, per-step accuracy) on a batch."""
    if not batch.mask.any():
        raise DataError("batch mask selects no valid steps")
    logits = net.forward(batch.inputs, batch.mask, mode="eval")
    loss = sequence_loss(logits, batch.targets, batch.mask)
    acc = masked_accuracy(stack_logits(logits), batch.targets, batch.mask)
    return float(loss), acc


@dataclass
class TrainResult:
    network: Network
    metrics: list[MetricsRecord]
    best_checkpoint: dict
    best_val_loss: float
    final_lr: float


def _param_norms(params: dict[str, np.ndarray]) -> str:
    worst = sorted(params, key=lambda n: -float(np.abs(params[n]).max()))[:3]
    return ", ".join(f"{n}=|max|{float(np.abs(params[n]).max()):.3e}" for n in worst)


def train(net_config: NetworkConfig, config: TrainConfig, dataset: Dataset,
          log=None) -> TrainResult:
    """Run the full schedule; returns the best-validation checkpoint and metrics."""
    rng = make_rng(config.seed)
    net = Network.init(net_config, rng)
    params = net.named_parameters()
    opt = Adam(params, config.beta1, config.beta2, config.eps)
    lr = config.lr
    records: list[MetricsRecord] = []
    best_val = np.inf
    best_ckpt = to_checkpoint(net, config.seed, 0)
    prev_val = None
    n_train = dataset.train.num_sequences

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n_train)
        loss_sum = 0.0
        acc_sum = 0.0
        weight_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            sub = dataset.train.select(idx)
            loss, acc, grads = loss_and_grads(net, sub, mode="train", rng=rng)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}; "
                    f"largest parameters: {_param_norms(params)}")
            opt.step(params, grads, lr)
            w = float(sub.mask.sum())
            loss_sum += loss * w
            acc_sum += acc * w
            weight_sum += w
        val_loss, val_acc = evaluate(net, dataset.val)
        elapsed = time.perf_counter() - t0
        records.append(MetricsRecord(epoch, "train", loss_sum / weight_sum,
                                     acc_sum / weight_sum, lr, 0.0, config.seed))
        records.append(MetricsRecord(epoch, "val", val_loss, val_acc, lr, 0.0,
                                     config.seed))
        if log is not None:
            log(f"epoch {epoch:3d}  train {loss_sum / weight_sum:.4f}  "
                f"val {val_loss:.4f} acc {val_acc:.4f}  lr {lr:.2e}  {elapsed:.1f}s")
        if val_loss < best_val:
            best_val = val_loss
            best_ckpt = to_checkpoint(net, config.seed, epoch)
        if prev_val is not None:
            improvement = (prev_val - val_loss) / max(prev_val, config.eps)
            if improvement < config.lr_halving_threshold:
                lr *= 0.5
        prev_val = val_loss

    return TrainResult(network=net, metrics=records, best_checkpoint=best_ckpt,
                       best_val_loss=float(best_val), final_lr=lr)
