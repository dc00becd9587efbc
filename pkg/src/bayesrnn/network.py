"""Layer stacking, bidirectional composition, readout, and the parameter audit.

A network is a stack of recurrent layers followed by a shared per-step
affine readout into class logits.  Smoothing cells (UBRU/LBRU) run
their backward pass inside each layer, so the sequence fed upward is
the smoothed one.  Bidirectional networks run a direction-reversed
twin of each layer (with its own parameters, including its own
smoother) and concatenate the two outputs per step.

Batches are right-padded; recurrent state only updates on valid steps
and the smoothing recursions restart at each sequence's true final
step, so padding never contaminates valid positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import cells
from .cells import CELL_KINDS, PARAM_CLASSES, SmootherParams
from .errors import ConfigError, DimensionError
from .tensor import from_jsonable, rand_init, to_jsonable


@dataclass(frozen=True)
class NetworkConfig:
    cell: str
    layers: int
    hidden: int
    input_dim: int
    num_classes: int
    bidirectional: bool = False
    dropout: float = 0.0
    freeze_prior: bool = True

    def __post_init__(self):
        if self.cell not in CELL_KINDS:
            raise ConfigError(f"unknown cell {self.cell!r}; choose from {CELL_KINDS}")
        for name in ("layers", "hidden", "input_dim", "num_classes"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "NetworkConfig":
        return cls(**obj)


def _smoothing(cell: str) -> str | None:
    if cell == "UBRU":
        return "unit"
    if cell == "LBRU":
        return "layer"
    return None


def _forward_kind(cell: str) -> str:
    """The step function family a cell uses for its forward scan."""
    return "BRU" if cell in ("UBRU", "LBRU") else cell


@dataclass
class LayerBundle:
    forward: object
    backward: object | None = None
    forward_smoother: SmootherParams | None = None
    backward_smoother: SmootherParams | None = None


# ---------------------------------------------------------------------------
# Parameter audit
# ---------------------------------------------------------------------------

@dataclass
class ParamAudit:
    """Trainable scalar counts, broken down by named matrix."""

    config: NetworkConfig
    per_layer: list[dict[str, int]]
    readout: dict[str, int]

    @property
    def layer_totals(self) -> list[int]:
        return [sum(layer.values()) for layer in self.per_layer]

    @property
    def total(self) -> int:
        return sum(self.layer_totals) + sum(self.readout.values())

    @property
    def recurrent_total(self) -> int:
        return sum(self.layer_totals)

    def to_jsonable(self) -> dict:
        return {"config": self.config.to_dict(), "per_layer": self.per_layer,
                "readout": self.readout, "layer_totals": self.layer_totals,
                "total": self.total}

    def format_table(self) -> str:
        lines = [f"cell={self.config.cell} layers={self.config.layers} "
                 f"hidden={self.config.hidden} input_dim={self.config.input_dim} "
                 f"bidirectional={self.config.bidirectional}"]
        for i, layer in enumerate(self.per_layer):
            lines.append(f"layer {i}:")
            for name, count in layer.items():
                lines.append(f"    {name:<16} {count:>8}")
            lines.append(f"    {'subtotal':<16} {self.layer_totals[i]:>8}")
        for name, count in self.readout.items():
            lines.append(f"readout {name:<10} {count:>8}")
        lines.append(f"{'TOTAL':<20} {self.total:>8}")
        return "\n".join(lines)


def _bundle_counts(cell: str, input_dim: int, hidden: int, freeze_prior: bool) -> dict[str, int]:
    plan = cells.param_shapes(PARAM_CLASSES[cell], input_dim, hidden)
    counts = {}
    for name, shape in plan.items():
        if name == "p_logits" and freeze_prior:
            continue
        counts[name] = int(np.prod(shape))
    if _smoothing(cell) == "layer":
        for name, shape in cells.param_shapes(SmootherParams, input_dim, hidden).items():
            counts[name] = int(np.prod(shape))
    return counts


def param_count(config: NetworkConfig) -> ParamAudit:
    """Audit of trainable scalars as a pure function of the configuration."""
    per_layer = []
    in_dim = config.input_dim
    for _ in range(config.layers):
        layer: dict[str, int] = {}
        for direction in ("f", "b")[:config.directions]:
            for name, count in _bundle_counts(config.cell, in_dim, config.hidden,
                                              config.freeze_prior).items():
                layer[f"{direction}.{name}"] = count
        per_layer.append(layer)
        in_dim = config.hidden * config.directions
    readout = {"W_out": config.num_classes * in_dim, "b_out": config.num_classes}
    return ParamAudit(config=config, per_layer=per_layer, readout=readout)


# ---------------------------------------------------------------------------
# The network
# ---------------------------------------------------------------------------

class Network:
    """Parameter container plus the forward computation over step lists."""

    def __init__(self, config: NetworkConfig, layers: list[LayerBundle],
                 W_out: np.ndarray, b_out: np.ndarray):
        self.config = config
        self.layers = layers
        self.W_out = W_out
        self.b_out = b_out

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, config: NetworkConfig, rng: np.random.Generator) -> "Network":
        kind = config.cell
        layers = []
        in_dim = config.input_dim
        for _ in range(config.layers):
            bundle = LayerBundle(
                forward=cells.init_params(PARAM_CLASSES[kind], rng, in_dim, config.hidden))
            if _smoothing(kind) == "layer":
                bundle.forward_smoother = cells.init_params(
                    SmootherParams, rng, in_dim, config.hidden)
            if config.bidirectional:
                bundle.backward = cells.init_params(
                    PARAM_CLASSES[kind], rng, in_dim, config.hidden)
                if _smoothing(kind) == "layer":
                    bundle.backward_smoother = cells.init_params(
                        SmootherParams, rng, in_dim, config.hidden)
            layers.append(bundle)
            in_dim = config.hidden * config.directions
        W_out = rand_init(rng, (config.num_classes, in_dim), "scaled_uniform", fan_in=in_dim)
        b_out = np.zeros(config.num_classes)
        return cls(config, layers, W_out, b_out)

    # -- parameter access ---------------------------------------------------

    def _bundles(self):
        for i, layer in enumerate(self.layers):
            yield f"l{i}.f", layer.forward
            if layer.forward_smoother is not None:
                yield f"l{i}.fs", layer.forward_smoother
            if layer.backward is not None:
                yield f"l{i}.b", layer.backward
            if layer.backward_smoother is not None:
                yield f"l{i}.bs", layer.backward_smoother

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Flat name -> array map of trainable parameters.

        A frozen prior stays in the bundle (as zeros) but is excluded
        here, so it is neither updated nor counted.
        """
        out = {}
        for prefix, bundle in self._bundles():
            for name, arr in cells.named_arrays(bundle).items():
                if name == "p_logits" and self.config.freeze_prior:
                    continue
                out[f"{prefix}.{name}"] = arr
        out["out.W_out"] = self.W_out
        out["out.b_out"] = self.b_out
        return out

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        current = self.named_parameters()
        for name, arr in values.items():
            np.copyto(current[name], arr)

    # -- forward ------------------------------------------------------------

    def forward(self, inputs: np.ndarray, mask: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None, tape: ad.Tape | None = None):
        """Per-step class logits for a [T x B x I] batch.

        Returns a length-T list of [B x C] arrays (or taped variables
        when ``tape`` is given).  ``mode='train'`` enables inverted
        dropout between layers, drawing from ``rng``.
        """
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[2] != self.config.input_dim:
            raise DimensionError(
                f"inputs must be [T x B x {self.config.input_dim}], got {inputs.shape}")
        T, B, _ = inputs.shape
        if mask.shape != (T, B):
            raise DimensionError(f"mask must be [T x B] = {(T, B)}, got {mask.shape}")
        if mode == "train" and self.config.dropout > 0.0 and rng is None:
            raise ConfigError("training with dropout requires an rng")

        mask_steps = [np.asarray(mask[t], dtype=np.float64)[:, None] for t in range(T)]
        x_steps = [inputs[t] for t in range(T)]
        layers = self.layers if tape is None else self._taped_layers(tape)
        W_out, b_out = self.W_out, self.b_out
        if tape is not None:
            W_out = tape.leaf(self.W_out, "out.W_out")
            b_out = tape.leaf(self.b_out, "out.b_out")

        for li, bundle in enumerate(layers):
            outs = self._run_direction(bundle.forward, bundle.forward_smoother,
                                       x_steps, mask_steps, reverse=False)
            if self.config.bidirectional:
                back = self._run_direction(bundle.backward, bundle.backward_smoother,
                                           x_steps, mask_steps, reverse=True)
                outs = [ad.concat([f, b], axis=1) for f, b in zip(outs, back)]
            if mode == "train" and self.config.dropout > 0.0 and li < len(layers) - 1:
                keep = 1.0 - self.config.dropout
                outs = [o * ((rng.random(size=_shape_of(o)) < keep) / keep) for o in outs]
            x_steps = outs

        return [ad.matmul(h, W_out, tb=True) + b_out for h in x_steps]

    def _taped_layers(self, tape: ad.Tape) -> list[LayerBundle]:
        def bind(prefix, bundle):
            if bundle is None:
                return None
            frozen = self.config.freeze_prior

            def leaf_or_const(name, arr):
                if name == "p_logits" and frozen:
                    return arr
                return tape.leaf(arr, f"{prefix}.{name}")

            return cells.map_arrays(bundle, leaf_or_const)

        return [LayerBundle(forward=bind(f"l{i}.f", layer.forward),
                            backward=bind(f"l{i}.b", layer.backward),
                            forward_smoother=bind(f"l{i}.fs", layer.forward_smoother),
                            backward_smoother=bind(f"l{i}.bs", layer.backward_smoother))
                for i, layer in enumerate(self.layers)]

    def _run_direction(self, params, smoother, x_steps, mask_steps, reverse: bool):
        kind = _forward_kind(self.config.cell)
        if reverse:
            x_steps = x_steps[::-1]
            mask_steps = mask_steps[::-1]
        B = _shape_of(x_steps[0])[0]
        T = len(x_steps)
        h_list, z_list = [], []

        if kind == "BRU":
            h, z_prev = cells.bru_initial_state(params, B)
            for t in range(T):
                m = mask_steps[t]
                h_new, z_new, _, _ = cells.bru_step(params, x_steps[t], h, z_prev)
                h = m * h_new + (1.0 - m) * h
                z_prev = m * z_new + (1.0 - m) * z_prev
                h_list.append(h)
                z_list.append(z_prev)
        elif kind == "LSTM":
            h = np.zeros((B, self.config.hidden))
            c = np.zeros((B, self.config.hidden))
            for t in range(T):
                m = mask_steps[t]
                h_new, c_new = cells.lstm_step(params, x_steps[t], h, c)
                h = m * h_new + (1.0 - m) * h
                c = m * c_new + (1.0 - m) * c
                h_list.append(h)
        else:
            h = np.zeros((B, self.config.hidden))
            step = {"GRU": cells.gru_step, "MGU": cells.mgu_step,
                    "LiGRU": cells.ligru_step}[kind]
            for t in range(T):
                m = mask_steps[t]
                h_new = step(params, x_steps[t], h)
                h = m * h_new + (1.0 - m) * h
                h_list.append(h)

        smoothing = _smoothing(self.config.cell)
        if smoothing == "unit":
            outs = cells.ubru_smooth(h_list, z_list, mask_steps)
        elif smoothing == "layer":
            outs = cells.lbru_smooth(smoother, h_list, x_steps, mask_steps)
        else:
            outs = h_list
        return outs[::-1] if reverse else outs


def _shape_of(x) -> tuple:
    return x.value.shape if isinstance(x, ad.Var) else np.shape(x)


# ---------------------------------------------------------------------------
# Loss and metrics
# ---------------------------------------------------------------------------

def sequence_loss(logits_steps, targets: np.ndarray, mask: np.ndarray):
    """Mean cross-entropy over valid steps; scalar (taped if the logits are)."""
    T = len(logits_steps)
    targets = np.asarray(targets)
    mask = np.asarray(mask)
    flat = ad.concat(logits_steps, axis=0)
    return ad.softmax_xent(flat, targets.reshape(T * targets.shape[1]),
                           mask.reshape(T * mask.shape[1]).astype(np.float64))


def stack_logits(logits_steps) -> np.ndarray:
    return np.stack([s.value if isinstance(s, ad.Var) else s for s in logits_steps])


def masked_accuracy(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray,
                    positions: np.ndarray | None = None) -> float:
    """Fraction of valid steps whose argmax matches the target.

    ``positions``, if given, is a boolean [T] (or [T x B]) filter
    applied on top of the validity mask.
    """
    mask = np.asarray(mask, dtype=bool)
    if positions is not None:
        positions = np.asarray(positions, dtype=bool)
        if positions.ndim == 1:
            positions = positions[:, None] & np.ones_like(mask)
        mask = mask & positions
    if not mask.any():
        raise DimensionError("no valid steps selected")
    pred = logits.argmax(axis=-1)
    return float((pred == targets)[mask].mean())


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _bundle_to_json(bundle):
    if bundle is None:
        return None
    return {name: to_jsonable(arr) for name, arr in cells.named_arrays(bundle).items()}


def _bundle_from_json(cls, obj):
    if obj is None:
        return None
    return cls(**{name: from_jsonable(val) for name, val in obj.items()})


def to_checkpoint(net: Network, rng_seed: int, epoch: int) -> dict:
    layers = [{"forward": _bundle_to_json(layer.forward),
               "backward": _bundle_to_json(layer.backward),
               "forward_smoother": _bundle_to_json(layer.forward_smoother),
               "backward_smoother": _bundle_to_json(layer.backward_smoother)}
              for layer in net.layers]
    return {"config": net.config.to_dict(), "rng_seed": rng_seed, "epoch": epoch,
            "params": {"layers": layers,
                       "readout": {"W_out": to_jsonable(net.W_out),
                                   "b_out": to_jsonable(net.b_out)}}}


def from_checkpoint(obj: dict) -> Network:
    config = NetworkConfig.from_dict(obj["config"])
    cell_cls = PARAM_CLASSES[config.cell]
    layers = [LayerBundle(
        forward=_bundle_from_json(cell_cls, entry["forward"]),
        backward=_bundle_from_json(cell_cls, entry["backward"]),
        forward_smoother=_bundle_from_json(SmootherParams, entry["forward_smoother"]),
        backward_smoother=_bundle_from_json(SmootherParams, entry["backward_smoother"]))
        for entry in obj["params"]["layers"]]
    readout = obj["params"]["readout"]
    return Network(config, layers, from_jsonable(readout["W_out"]),
                   from_jsonable(readout["b_out"]))


def save_checkpoint(path, net: Network, rng_seed: int, epoch: int) -> None:
    with open(path, "w") as fh:
        json.dump(to_checkpoint(net, rng_seed, epoch), fh)


def load_checkpoint(path) -> Network:
    with open(path) as fh:
        return from_checkpoint(json.load(fh))
