"""Reverse-mode differentiation on an explicit tape.

Values are computed eagerly with numpy; each primitive appends a node
holding the forward value and a vector-Jacobian closure.  A backward
sweep from a scalar loss accumulates gradients for every recorded leaf,
summing over all paths (including paths through time and through the
smoothing recursions).

The public ops (``matmul``, ``add``, ``sub``, ``mul``, ``sigmoid``,
``tanh``, ``relu``, ``concat``, ``take``, ``mean``, ``softmax_xent``)
dispatch on their arguments: if no ``Var`` is involved they evaluate in
plain numpy, so the same model code serves both the trainable (taped)
and the evaluation path.  ``Var`` also overloads ``+ - * @`` for
readability; plain arrays and scalars mix in as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import activations
from .errors import ContractError, DataError, DomainError

_PRIMITIVES = ("matmul", "add", "sub", "mul", "sigmoid", "tanh", "relu",
               "concat", "slice", "softmax-cross-entropy", "mean")


class Var:
    """Handle to one slot of a tape; immutable once recorded."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class _Node:
    __slots__ = ("value", "parents", "vjp", "name")

    def __init__(self, value, parents, vjp, name=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.name = name


class Tape:
    """Append-only record of primitive operations, in topological order."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, name: str | None = None) -> Var:
        """Register a trainable leaf (a parameter array)."""
        value = np.asarray(value, dtype=np.float64)
        return self._push(value, (), None, name=name)

    def _push(self, value, parents, vjp, name=None) -> Var:
        node = _Node(np.asarray(value, dtype=np.float64), parents, vjp, name)
        self._nodes.append(node)
        return Var(self, len(self._nodes) - 1, node.value)

    def record(self, op: str, *inputs, **kwargs) -> Var:
        """Record a primitive by name; see module docstring for the set."""
        table = {"matmul": matmul, "add": add, "sub": sub, "mul": mul,
                 "sigmoid": sigmoid, "tanh": tanh, "relu": relu,
                 "concat": concat, "slice": take, "mean": mean,
                 "softmax-cross-entropy": softmax_xent}
        if op not in table:
            raise DomainError(f"unsupported primitive {op!r}; known: {_PRIMITIVES}")
        return table[op](*inputs, **kwargs)

    def backward(self, loss: Var) -> list[np.ndarray | None]:
        """Gradients of a recorded scalar with respect to every slot.

        Returns a list aligned with slot indices (``grads[v.index]``);
        entries are None for slots the loss does not depend on.  The
        tape is not mutated, so repeated sweeps are identical.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ContractError("loss must be a Var recorded on this tape")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self._nodes[i]
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if grads[parent] is None:
                    grads[parent] = pg.copy()
                else:
                    grads[parent] = grads[parent] + pg
        return grads

    def backward_named(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients for every named leaf, zeros for unused ones."""
        grads = self.backward(loss)
        out = {}
        for i, node in enumerate(self._nodes):
            if node.name is not None:
                g = grads[i]
                out[node.name] = np.zeros_like(node.value) if g is None else g
        return out


def _value(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ContractError("operands recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _parents(*xs):
    return tuple(x.index for x in xs if isinstance(x, Var))


def matmul(a, b, tb: bool = False):
    """a @ b, or a @ b.T when ``tb`` (the common weight orientation)."""
    av, bv = _value(a), _value(b)
    out = av @ (bv.T if tb else bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def vjp(g):
        gs = []
        if isinstance(a, Var):
            gs.append(g @ bv if tb else g @ bv.T)
        if isinstance(b, Var):
            gs.append(g.T @ av if tb else av.T @ g)
        return gs

    return tape._push(out, _parents(a, b), vjp)


def _ewise(a, b, fwd, da, db):
    av, bv = _value(a), _value(b)
    out = fwd(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def vjp(g):
        gs = []
        if isinstance(a, Var):
            gs.append(_unbroadcast(da(g, av, bv), av.shape))
        if isinstance(b, Var):
            gs.append(_unbroadcast(db(g, av, bv), bv.shape))
        return gs

    return tape._push(out, _parents(a, b), vjp)


def add(a, b):
    return _ewise(a, b, lambda x, y: x + y,
                  lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _ewise(a, b, lambda x, y: x - y,
                  lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _ewise(a, b, lambda x, y: x * y,
                  lambda g, x, y: g * y, lambda g, x, y: g * x)


def _unary(x, fwd, dfd):
    xv = _value(x)
    out = fwd(xv)
    if not isinstance(x, Var):
        return out
    return x.tape._push(out, (x.index,), lambda g: (dfd(g, xv, out),))


def sigmoid(x):
    return _unary(x, lambda v: np.asarray(activations.sigmoid(v)),
                  lambda g, v, out: g * out * (1.0 - out))


def tanh(x):
    return _unary(x, np.tanh, lambda g, v, out: g * (1.0 - out * out))


def relu(x):
    return _unary(x, lambda v: np.maximum(v, 0.0),
                  lambda g, v, out: g * (v > 0.0))


def mean(x):
    """Mean over all elements, as a scalar."""
    xv = _value(x)
    out = np.asarray(xv.mean())
    if not isinstance(x, Var):
        return out
    return x.tape._push(out, (x.index,),
                        lambda g: (np.full_like(xv, float(g) / xv.size),))


def concat(parts, axis: int = -1):
    """Concatenate a list of same-rank tensors along an axis."""
    values = [_value(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        gs = []
        for i, p in enumerate(parts):
            if isinstance(p, Var):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offsets[i], offsets[i + 1])
                gs.append(g[tuple(sl)])
        return gs

    return tape._push(out, _parents(*parts), vjp)


def take(x, key):
    """Slice/index a tensor; the adjoint scatter-adds into the source shape."""
    xv = _value(x)
    out = xv[key]
    if not isinstance(x, Var):
        return out

    def vjp(g):
        gx = np.zeros_like(xv)
        np.add.at(gx, key, g)
        return (gx,)

    return x.tape._push(np.asarray(out), (x.index,), vjp)


def softmax_xent(logits, targets, mask=None):
    """Masked mean cross-entropy, fused with the softmax for stability.

    ``logits`` is [N x C]; ``targets`` an int vector of class indices;
    ``mask`` an optional float/bool vector weighting the N rows (rows
    with mask 0 contribute nothing).  Returns a scalar: the sum of the
    masked per-row negative log-likelihoods divided by the mask total.
    """
    lv = _value(logits)
    t = np.asarray(targets)
    if lv.ndim != 2 or t.shape != (lv.shape[0],):
        raise DataError(f"logits [N x C] and targets [N] required, got {lv.shape}, {t.shape}")
    if np.any(t < 0) or np.any(t >= lv.shape[1]):
        raise DataError("target class index out of range")
    m = np.ones(lv.shape[0]) if mask is None else np.asarray(mask, dtype=np.float64)
    total = m.sum()
    if total <= 0:
        raise DataError("mask selects no valid rows")
    shifted = lv - lv.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(lv.shape[0])
    out = np.asarray(-(m * logp[rows, t]).sum() / total)
    if not isinstance(logits, Var):
        return out

    def vjp(g):
        soft = np.exp(logp)
        soft[rows, t] -= 1.0
        return (float(g) * soft * (m / total)[:, None],)

    return logits.tape._push(out, (logits.index,), vjp)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradReport:
    """Comparison of analytic gradients against central differences.

    Per parameter tensor: the largest absolute discrepancy, and that
    discrepancy relative to the tensor's largest gradient magnitude,
    rel = max|a - n| / max(max|a|, max|n|, 1e-8).  The relative form is
    what the pass/fail decision uses; a wrong adjoint shows up at the
    gradient's own scale, while finite-difference noise (~1e-11 on a
    double-precision loss) does not.
    """

    eps: float
    per_param: dict[str, tuple[float, float]] = field(default_factory=dict)
    samples: list[tuple[str, int, float, float]] = field(default_factory=list)

    @property
    def max_abs_error(self) -> float:
        return max((a for a, _ in self.per_param.values()), default=0.0)

    @property
    def max_rel_error(self) -> float:
        return max((r for _, r in self.per_param.values()), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol

    def format_table(self) -> str:
        width = max([len(n) for n in self.per_param] + [9])
        lines = [f"{'parameter':<{width}}  {'max abs err':>12}  {'max rel err':>12}"]
        for name, (abs_err, rel_err) in sorted(self.per_param.items()):
            lines.append(f"{name:<{width}}  {abs_err:>12.3e}  {rel_err:>12.3e}")
        lines.append(f"{'OVERALL':<{width}}  {self.max_abs_error:>12.3e}  {self.max_rel_error:>12.3e}")
        return "\n".join(lines)


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(loss_fn, grad_fn, params: dict[str, np.ndarray],
               eps: float = 1e-5, max_samples: int = 3) -> GradReport:
    """Check analytic gradients of ``grad_fn`` against central differences.

    ``loss_fn(params) -> float`` evaluates the loss; ``grad_fn(params)
    -> dict[name, array]`` returns analytic gradients.  Every scalar
    entry of every parameter is perturbed by +-eps.  The parameter dict
    is restored on exit.
    """
    report = GradReport(eps=eps)
    analytic = grad_fn(params)
    for name, arr in params.items():
        flat = arr.ravel()
        gflat = np.asarray(analytic[name]).ravel()
        numeric = np.empty_like(gflat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(params)
            flat[i] = orig - eps
            down = loss_fn(params)
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
            if len(report.samples) < max_samples:
                report.samples.append((name, i, float(gflat[i]), float(numeric[i])))
        max_abs = float(np.max(np.abs(gflat - numeric))) if flat.size else 0.0
        scale = max(float(np.max(np.abs(gflat), initial=0.0)),
                    float(np.max(np.abs(numeric), initial=0.0)), 1e-8)
        report.per_param[name] = (max_abs, max_abs / scale)
    return report
