"""Synthetic sequence tasks for exercising backward information flow.

Two generators:

* ``gen_latent_feature_task`` draws sequences from exactly the gated
  two-state chain the oracle module performs inference on: per feature,
  a persistent latent bit with context resets, observed through
  Gaussian noise.  Labels at time t correlate with future observations
  through persistence, so smoothing provably helps; the Bayes-optimal
  per-step accuracies (filtered and smoothed) are computed exactly and
  stored with the dataset as performance ceilings.

* ``gen_delayed_cue_task`` labels step t with the cue that arrives at
  step t + gap.  Causal models cannot beat chance on the affected
  positions; anything with a backward pass can.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError

MASKED_TARGET = 0  # sentinel for padded positions; the mask removes them from the loss


@dataclass
class SequenceBatch:
    """Right-padded batch: inputs [T x B x I], targets [T x B], mask [T x B]."""

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.inputs.ndim != 3:
            raise DimensionError(f"inputs must be [T x B x I], got {self.inputs.shape}")
        T, B, _ = self.inputs.shape
        if self.targets.shape != (T, B) or self.mask.shape != (T, B):
            raise DimensionError("targets and mask must be [T x B]")

    @property
    def num_sequences(self) -> int:
        return self.inputs.shape[1]

    @property
    def num_steps(self) -> int:
        return self.inputs.shape[0]

    def select(self, idx) -> "SequenceBatch":
        return SequenceBatch(self.inputs[:, idx], self.targets[:, idx],
                             self.mask[:, idx], seed=self.seed)


def batch_from_sequences(seqs: list[np.ndarray], labels: list[np.ndarray],
                         seed: int = 0) -> SequenceBatch:
    """Pad variable-length [T_i x I] sequences into one right-padded batch."""
    if len(seqs) == 0:
        raise DataError("no sequences given")
    if len(seqs) != len(labels):
        raise DataError("one label sequence per input sequence required")
    T = max(s.shape[0] for s in seqs)
    I = seqs[0].shape[1]
    B = len(seqs)
    inputs = np.zeros((T, B, I))
    targets = np.full((T, B), MASKED_TARGET, dtype=np.int64)
    mask = np.zeros((T, B), dtype=bool)
    for b, (s, y) in enumerate(zip(seqs, labels)):
        L = s.shape[0]
        if y.shape[0] != L:
            raise DataError(f"sequence {b}: {L} steps but {y.shape[0]} labels")
        inputs[:L, b] = s
        targets[:L, b] = y
        mask[:L, b] = True
    return SequenceBatch(inputs, targets, mask, seed=seed)


@dataclass
class Dataset:
    train: SequenceBatch
    val: SequenceBatch
    test: SequenceBatch
    metadata: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.train.inputs.shape[2]

    @property
    def num_classes(self) -> int:
        return int(self.metadata["num_classes"])


# ---------------------------------------------------------------------------
# Latent feature task
# ---------------------------------------------------------------------------

def _sample_chains(rng, T, n, F, p, z):
    """Latent bits [T x n x F]: persistent with probability z, else redrawn."""
    phi = np.empty((T, n, F))
    phi[0] = rng.random((n, F)) < p
    for t in range(1, T):
        keep = rng.random((n, F)) < z[t - 1]
        fresh = (rng.random((n, F)) < p).astype(np.float64)
        phi[t] = np.where(keep, phi[t - 1], fresh)
    return phi


def gaussian_likelihood_ratio(x: np.ndarray, noise: float) -> np.ndarray:
    """lambda = N(x; 0, noise) / N(x; 1, noise) = exp((1 - 2x) / (2 noise^2)).

    The exponent is clipped at +-700 to stay inside float64; beyond that
    the posterior is saturated and only the ratio's direction matters.
    """
    return np.exp(np.clip((1.0 - 2.0 * x) / (2.0 * noise * noise), -700.0, 700.0))


def batched_forward_backward(p: float, z: np.ndarray, lam: np.ndarray):
    """Vectorised two-state filter/smoother over a [T x N] likelihood-ratio array.

    Same recursions as ``oracle.forward_backward``, run for N sequences
    at once; returns (filtered, smoothed), each [T x N] posteriors of
    the bit being 1.
    """
    T, _ = lam.shape
    prior = np.array([1.0 - p, p])
    emis = np.stack([lam, np.ones_like(lam)], axis=-1)        # [T x N x 2]

    alpha = np.empty_like(emis)
    a = prior[None, :] * emis[0]
    alpha[0] = a / a.sum(axis=1, keepdims=True)
    for t in range(1, T):
        pred = z[t - 1] * alpha[t - 1] + (1.0 - z[t - 1]) * prior[None, :]
        a = pred * emis[t]
        alpha[t] = a / a.sum(axis=1, keepdims=True)

    beta = np.ones_like(emis)
    for t in range(T - 2, -1, -1):
        msg = emis[t + 1] * beta[t + 1]
        b = z[t] * msg + (1.0 - z[t]) * (msg @ prior)[:, None]
        beta[t] = b / b.sum(axis=1, keepdims=True)

    joint = alpha * beta
    smoothed = joint[..., 1] / joint.sum(axis=-1)
    return alpha[..., 1], smoothed


def latent_oracle_accuracies(batch: SequenceBatch, p: float, z: np.ndarray,
                             noise: float) -> tuple[float, float]:
    """Exact (filtered, smoothed) Bayes accuracies for a latent-feature batch.

    Decodes each feature's posterior at 0.5 and scores the joint class.
    This is the ceiling no trained model can beat in expectation.
    """
    T, n, F = batch.inputs.shape
    pred_f = np.zeros((T, n), dtype=np.int64)
    pred_s = np.zeros((T, n), dtype=np.int64)
    for f in range(F):
        lam = gaussian_likelihood_ratio(batch.inputs[:, :, f], noise)
        filtered, smoothed = batched_forward_backward(p, z, lam)
        pred_f += (filtered >= 0.5).astype(np.int64) << f
        pred_s += (smoothed >= 0.5).astype(np.int64) << f
    m = batch.mask
    return (float((pred_f == batch.targets)[m].mean()),
            float((pred_s == batch.targets)[m].mean()))


def gen_latent_feature_task(rng: np.random.Generator, T: int = 20, F: int = 1,
                            noise: float = 1.0, z: float = 0.9, p: float = 0.5,
                            sizes: tuple[int, int, int] = (2000, 500, 500),
                            seed: int = 0) -> Dataset:
    """Noisy observations of F persistent latent bits; labels are the joint bits."""
    if F < 1 or F > 3:
        raise ConfigError(f"F must be 1..3 (labels enumerate 2^F classes), got {F}")
    if noise <= 0.0:
        raise ConfigError(f"noise must be positive, got {noise}")
    if not (0.0 <= z <= 1.0 and 0.0 < p < 1.0):
        raise ConfigError("need gate z in [0, 1] and prior p in (0, 1)")
    z_sched = np.full(T - 1, z)

    def make_split(n):
        phi = _sample_chains(rng, T, n, F, p, z_sched)
        x = phi + noise * rng.standard_normal((T, n, F))
        targets = (phi.astype(np.int64) << np.arange(F)).sum(axis=2)
        return SequenceBatch(x, targets, np.ones((T, n), dtype=bool), seed=seed)

    train, val, test = (make_split(n) for n in sizes)
    filt_acc, smooth_acc = latent_oracle_accuracies(test, p, z_sched, noise)
    meta = {"kind": "latent_feature", "T": T, "F": F, "noise": noise, "z": z, "p": p,
            "num_classes": 2 ** F, "oracle_filtered_accuracy": filt_acc,
            "oracle_smoothed_accuracy": smooth_acc}
    return Dataset(train, val, test, meta)


# ---------------------------------------------------------------------------
# Delayed cue task
# ---------------------------------------------------------------------------

def affected_positions(T: int, gap: int) -> np.ndarray:
    """Boolean [T]: positions whose label depends on a future cue."""
    pos = np.zeros(T, dtype=bool)
    pos[:T - gap] = gap > 0
    return pos


def gen_delayed_cue_task(rng: np.random.Generator, T: int = 10, gap: int = 3,
                         sizes: tuple[int, int, int] = (2000, 500, 500),
                         seed: int = 0) -> Dataset:
    """Random +-1 cues; the label at t is the sign of the cue at t + gap.

    Trailing positions (no future cue available) are labelled with the
    current cue so every step stays supervised; the affected region is
    t < T - gap.
    """
    if gap < 0 or gap >= T:
        raise ConfigError(f"need 0 <= gap < T, got gap={gap}, T={T}")

    def make_split(n):
        bits = rng.integers(0, 2, size=(T, n))
        x = (2.0 * bits - 1.0)[:, :, None]
        targets = np.concatenate([bits[gap:], bits[T - gap:]], axis=0) if gap else bits
        return SequenceBatch(x, targets, np.ones((T, n), dtype=bool), seed=seed)

    train, val, test = (make_split(n) for n in sizes)
    meta = {"kind": "delayed_cue", "T": T, "gap": gap, "num_classes": 2,
            "chance": 0.5, "affected": affected_positions(T, gap).tolist()}
    return Dataset(train, val, test, meta)


# ---------------------------------------------------------------------------
# Task spec dispatch and JSONL caching
# ---------------------------------------------------------------------------

def generate_dataset(task_spec: dict, seed: int) -> Dataset:
    """Build a dataset from a declarative spec; deterministic given the seed."""
    from .tensor import make_rng
    spec = dict(task_spec)
    kind = spec.pop("kind", None)
    sizes = tuple(spec.pop("sizes", (2000, 500, 500)))
    rng = make_rng(seed)
    if kind == "latent_feature":
        return gen_latent_feature_task(rng, sizes=sizes, seed=seed, **spec)
    if kind == "delayed_cue":
        return gen_delayed_cue_task(rng, sizes=sizes, seed=seed, **spec)
    raise ConfigError(f"unknown task kind {kind!r}")


def save_batch_jsonl(path, batch: SequenceBatch) -> None:
    """One sequence per line: {inputs, targets, mask}."""
    with open(path, "w") as fh:
        for b in range(batch.num_sequences):
            rec = {"inputs": batch.inputs[:, b].tolist(),
                   "targets": batch.targets[:, b].tolist(),
                   "mask": batch.mask[:, b].tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_batch_jsonl(path, seed: int = 0) -> SequenceBatch:
    inputs, targets, mask = [], [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            inputs.append(rec["inputs"])
            targets.append(rec["targets"])
            mask.append(rec["mask"])
    if not inputs:
        raise DataError(f"no sequences in {path}")
    return SequenceBatch(np.asarray(inputs).transpose(1, 0, 2),
                         np.asarray(targets).T, np.asarray(mask).T, seed=seed)
