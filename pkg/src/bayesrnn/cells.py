"""Recurrent cell step functions and their parameter bundles.

Every step function is pure: it maps (params, inputs, carried state) to
new state, with no internal state of its own.  Parameters are plain
dataclasses of [H x I] / [H x H] matrices and [H] biases; because the
step functions are written with the dispatching ops from ``autodiff``,
the same code runs on raw numpy arrays (evaluation) and on taped
variables (training).

The probabilistic unit (BRU) forward step:

    z_t = sigmoid(W_iz x_t + W_hz h_{t-1} + b_z)        # forget/context gate
    r_t = sigmoid(W_ir x_t + W_hr h_{t-1} + b_r)        # input-relevance gate
    n_t = sigmoid(W_ih x_t + b_ih + z_{t-1} * (W_hh h_{t-1} + b_hh))
    h_t = (1 - r_t) * n_t + r_t * h_{t-1}

with initial state h_0 = sigmoid(p_logits) (the learned feature prior)
and z_0 = 0.  Smoothing passes run backward over a finished forward
pass: the unit-wise one reuses the forget gate and adds no parameters,

    h'_{t-1} = z_t * h'_t + (1 - z_t) * h_{t-1},

while the layer-wise one learns its own relevance gate and backward
transition,

    s_t     = sigmoid(W_is x_t + b_is + W_hs h_{t-1} + b_hs)
    h'_{t-1} = (W_hhb h'_t + b_hhb) * s_t + h_{t-1} * (1 - s_t).

GRU, LSTM (no peepholes), MGU (gates tied: r = 1 - z) and Li-GRU
(forget pinned open: z = 1) are provided as baselines and as reduction
checks on the gate structure.

All step functions take batch-first [B x feature] arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import DimensionError
from .tensor import rand_init

CELL_KINDS = ("GRU", "LSTM", "BRU", "UBRU", "LBRU", "MGU", "LiGRU")


@dataclass
class BruParams:
    W_iz: np.ndarray
    W_hz: np.ndarray
    b_z: np.ndarray
    W_ir: np.ndarray
    W_hr: np.ndarray
    b_r: np.ndarray
    W_ih: np.ndarray
    b_ih: np.ndarray
    W_hh: np.ndarray
    b_hh: np.ndarray
    p_logits: np.ndarray


@dataclass
class GruParams:
    W_iz: np.ndarray
    W_hz: np.ndarray
    b_z: np.ndarray
    W_ir: np.ndarray
    W_hr: np.ndarray
    b_r: np.ndarray
    W_in: np.ndarray
    b_in: np.ndarray
    W_hn: np.ndarray
    b_hn: np.ndarray


@dataclass
class LstmParams:
    """Gate blocks: input (i), forget (f), cell candidate (g), output (o)."""

    W_ii: np.ndarray
    W_hi: np.ndarray
    b_i: np.ndarray
    W_if: np.ndarray
    W_hf: np.ndarray
    b_f: np.ndarray
    W_ig: np.ndarray
    W_hg: np.ndarray
    b_g: np.ndarray
    W_io: np.ndarray
    W_ho: np.ndarray
    b_o: np.ndarray


@dataclass
class MguParams:
    W_iz: np.ndarray
    W_hz: np.ndarray
    b_z: np.ndarray
    W_in: np.ndarray
    b_in: np.ndarray
    W_hn: np.ndarray
    b_hn: np.ndarray


@dataclass
class LiGruParams:
    W_ir: np.ndarray
    W_hr: np.ndarray
    b_r: np.ndarray
    W_ih: np.ndarray
    b_ih: np.ndarray
    W_hh: np.ndarray
    b_hh: np.ndarray


@dataclass
class SmootherParams:
    W_is: np.ndarray
    W_hs: np.ndarray
    b_is: np.ndarray
    b_hs: np.ndarray
    W_hhb: np.ndarray
    b_hhb: np.ndarray


def named_arrays(bundle) -> dict[str, np.ndarray]:
    """Field-name -> array view of a parameter bundle."""
    return {f.name: getattr(bundle, f.name) for f in fields(bundle)}


def map_arrays(bundle, fn):
    """Rebuild a bundle with ``fn`` applied to each field (e.g. tape binding)."""
    cls = type(bundle)
    return cls(**{name: fn(name, arr) for name, arr in named_arrays(bundle).items()})


def _gate_shapes(input_dim: int, hidden: int, names: tuple[str, ...]) -> dict[str, tuple]:
    shapes = {}
    for name in names:
        if name.startswith("W_i"):
            shapes[name] = (hidden, input_dim)
        elif name.startswith("W_h"):
            shapes[name] = (hidden, hidden)
        else:
            shapes[name] = (hidden,)
    return shapes


def param_shapes(cls, input_dim: int, hidden: int) -> dict[str, tuple]:
    """Shape plan for a bundle class; the constructor and the parameter
    audit both derive from this single table."""
    names = tuple(f.name for f in fields(cls))
    shapes = _gate_shapes(input_dim, hidden, tuple(n for n in names if n != "p_logits"))
    if "p_logits" in names:
        shapes["p_logits"] = (hidden,)
    return shapes


def init_params(cls, rng: np.random.Generator, input_dim: int, hidden: int):
    """Weights ~ scaled uniform by fan-in; biases and prior logits zero."""
    arrays = {}
    for name, shape in param_shapes(cls, input_dim, hidden).items():
        if name.startswith("W_"):
            arrays[name] = rand_init(rng, shape, "scaled_uniform", fan_in=shape[1])
        else:
            arrays[name] = np.zeros(shape)
    return cls(**arrays)


def _shape(x) -> tuple:
    return np.shape(x.value if isinstance(x, ad.Var) else x)


def _check_2d(name, x, cols):
    shape = _shape(x)
    if len(shape) != 2 or shape[1] != cols:
        raise DimensionError(f"{name} must be [B x {cols}], got {shape}")


def bru_step(p: BruParams, x_t, h_prev, z_prev):
    """One probabilistic-unit step; returns (h_t, z_t, r_t, n_t).

    At t = 1 pass h_prev = sigmoid(p_logits) and z_prev = 0.
    """
    _check_2d("x_t", x_t, _shape(p.W_iz)[1])
    z_t = ad.sigmoid(ad.matmul(x_t, p.W_iz, tb=True) + ad.matmul(h_prev, p.W_hz, tb=True) + p.b_z)
    r_t = ad.sigmoid(ad.matmul(x_t, p.W_ir, tb=True) + ad.matmul(h_prev, p.W_hr, tb=True) + p.b_r)
    n_t = ad.sigmoid(ad.matmul(x_t, p.W_ih, tb=True) + p.b_ih
                     + z_prev * (ad.matmul(h_prev, p.W_hh, tb=True) + p.b_hh))
    h_t = (1.0 - r_t) * n_t + r_t * h_prev
    return h_t, z_t, r_t, n_t


def bru_initial_state(p: BruParams, batch: int):
    """(h_0, z_0) = (sigmoid(p_logits) broadcast over the batch, zeros)."""
    h0 = np.ones((batch, 1)) * ad.sigmoid(p.p_logits)
    return h0, np.zeros(_shape(h0))


def ubru_smooth(h_seq, z_seq, mask=None):
    """Unit-wise backward smoothing; adds no parameters.

    ``h_seq`` and ``z_seq`` are step lists from a finished forward pass.
    Recursion (gate indexed at the later step, matching the forward
    cell's definition of z): h'_{t-1} = z_t * h'_t + (1 - z_t) * h_{t-1}.
    ``mask``, if given, is a step list of [B x 1] validity indicators;
    smoothing restarts at each sequence's true final step, so padding
    never leaks backward.
    """
    if len(h_seq) != len(z_seq):
        raise DimensionError(f"need one gate vector per state, got {len(h_seq)} vs {len(z_seq)}")
    T = len(h_seq)
    hp = [None] * T
    hp[T - 1] = h_seq[T - 1]
    for t in range(T - 2, -1, -1):
        smoothed = z_seq[t + 1] * hp[t + 1] + (1.0 - z_seq[t + 1]) * h_seq[t]
        if mask is None:
            hp[t] = smoothed
        else:
            m = mask[t + 1]
            hp[t] = m * smoothed + (1.0 - m) * h_seq[t]
    return hp


def lbru_smooth(sp: SmootherParams, h_seq, x_seq, mask=None):
    """Layer-wise backward smoothing with its own gate and transition.

    s_t is computed from x_t and the forward state h_{t-1}; the
    recursion h'_{t-1} = (W_hhb h'_t + b_hhb) * s_t + h_{t-1} * (1 - s_t)
    starts from h'_T = h_T.  The backward transition is unconstrained,
    so outputs are not confined to (0, 1).
    """
    if len(h_seq) != len(x_seq):
        raise DimensionError(f"state/input step counts differ: {len(h_seq)} vs {len(x_seq)}")
    T = len(h_seq)
    hp = [None] * T
    hp[T - 1] = h_seq[T - 1]
    for t in range(T - 2, -1, -1):
        s_next = ad.sigmoid(ad.matmul(x_seq[t + 1], sp.W_is, tb=True) + sp.b_is
                            + ad.matmul(h_seq[t], sp.W_hs, tb=True) + sp.b_hs)
        smoothed = (ad.matmul(hp[t + 1], sp.W_hhb, tb=True) + sp.b_hhb) * s_next \
            + h_seq[t] * (1.0 - s_next)
        if mask is None:
            hp[t] = smoothed
        else:
            m = mask[t + 1]
            hp[t] = m * smoothed + (1.0 - m) * h_seq[t]
    return hp


def gru_step(p: GruParams, x_t, h_prev):
    """Standard GRU step with h_t = (1 - z_t) * n_t + z_t * h_{t-1}."""
    z_t = ad.sigmoid(ad.matmul(x_t, p.W_iz, tb=True) + ad.matmul(h_prev, p.W_hz, tb=True) + p.b_z)
    r_t = ad.sigmoid(ad.matmul(x_t, p.W_ir, tb=True) + ad.matmul(h_prev, p.W_hr, tb=True) + p.b_r)
    n_t = ad.tanh(ad.matmul(x_t, p.W_in, tb=True) + p.b_in
                  + r_t * (ad.matmul(h_prev, p.W_hn, tb=True) + p.b_hn))
    return (1.0 - z_t) * n_t + z_t * h_prev


def lstm_step(p: LstmParams, x_t, h_prev, c_prev):
    """LSTM step without peephole connections; returns (h_t, c_t)."""
    i_t = ad.sigmoid(ad.matmul(x_t, p.W_ii, tb=True) + ad.matmul(h_prev, p.W_hi, tb=True) + p.b_i)
    f_t = ad.sigmoid(ad.matmul(x_t, p.W_if, tb=True) + ad.matmul(h_prev, p.W_hf, tb=True) + p.b_f)
    g_t = ad.tanh(ad.matmul(x_t, p.W_ig, tb=True) + ad.matmul(h_prev, p.W_hg, tb=True) + p.b_g)
    o_t = ad.sigmoid(ad.matmul(x_t, p.W_io, tb=True) + ad.matmul(h_prev, p.W_ho, tb=True) + p.b_o)
    c_t = f_t * c_prev + i_t * g_t
    h_t = o_t * ad.tanh(c_t)
    return h_t, c_t


def mgu_step(p: MguParams, x_t, h_prev):
    """Single-gate unit: a GRU whose reset is tied to the update (r = 1 - z)."""
    g = ad.sigmoid(ad.matmul(x_t, p.W_iz, tb=True) + ad.matmul(h_prev, p.W_hz, tb=True) + p.b_z)
    n_t = ad.tanh(ad.matmul(x_t, p.W_in, tb=True) + p.b_in
                  + (1.0 - g) * (ad.matmul(h_prev, p.W_hn, tb=True) + p.b_hn))
    return (1.0 - g) * n_t + g * h_prev


def ligru_step(p: LiGruParams, x_t, h_prev):
    """Forget-always-open unit: the probabilistic cell with z pinned to 1."""
    r_t = ad.sigmoid(ad.matmul(x_t, p.W_ir, tb=True) + ad.matmul(h_prev, p.W_hr, tb=True) + p.b_r)
    n_t = ad.sigmoid(ad.matmul(x_t, p.W_ih, tb=True) + p.b_ih
                     + ad.matmul(h_prev, p.W_hh, tb=True) + p.b_hh)
    return (1.0 - r_t) * n_t + r_t * h_prev


def variant_step(kind: str, params, x_t, h_prev):
    """Dispatch for the single-state reduced cells."""
    if kind == "MGU":
        return mgu_step(params, x_t, h_prev)
    if kind == "LiGRU":
        return ligru_step(params, x_t, h_prev)
    raise DimensionError(f"unknown variant kind {kind!r}")


PARAM_CLASSES = {
    "GRU": GruParams,
    "LSTM": LstmParams,
    "BRU": BruParams,
    "UBRU": BruParams,
    "LBRU": BruParams,
    "MGU": MguParams,
    "LiGRU": LiGruParams,
}
