"""Dense numeric substrate.

All numeric state in this package is carried by row-major ``numpy``
arrays of ``float64`` with rank at most 3 (time x batch x feature).
This module provides the shape/finiteness guards, the seedable RNG, the
initialisation schemes, and the JSON serialisation used by checkpoints.
Arithmetic itself is delegated to numpy; the wrappers here enforce the
contracts (matching shapes, finite results) that raw numpy does not.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError, NumericError

MAX_RANK = 3


def make_rng(seed: int) -> np.random.Generator:
    """Return a deterministic generator; identical seeds give identical streams."""
    if seed < 0:
        raise DomainError(f"seed must be a non-negative integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def as_tensor(x, rank_max: int = MAX_RANK) -> np.ndarray:
    """Coerce to a float64 array, enforcing rank and finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim > rank_max:
        raise DimensionError(f"rank {arr.ndim} exceeds maximum {rank_max}")
    check_finite(arr, "tensor input")
    return arr


def check_finite(arr: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product of a [m x k] and b [k x n] in double precision."""
    a = as_tensor(a, rank_max=2)
    b = as_tensor(b, rank_max=2)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def ewise(op: str, a, b=None) -> np.ndarray:
    """Elementwise combination of equal-shape tensors (or a scalar operand).

    ``op`` is one of ``add``, ``sub``, ``mul``, ``affine``.  For ``affine``
    the second operand is a pair ``(alpha, beta)`` and the result is
    ``alpha * a + beta``.
    """
    a = as_tensor(a)
    if op == "affine":
        alpha, beta = b
        return check_finite(float(alpha) * a + float(beta), "affine result")
    if np.isscalar(b):
        rhs = float(b)
    else:
        rhs = as_tensor(b)
        if rhs.shape != a.shape:
            raise DimensionError(f"shape mismatch: {a.shape} vs {rhs.shape}")
    if op == "add":
        out = a + rhs
    elif op == "sub":
        out = a - rhs
    elif op == "mul":
        out = a * rhs
    else:
        raise DomainError(f"unknown elementwise op {op!r}")
    return check_finite(out, f"{op} result")


def rand_init(rng: np.random.Generator, shape, scheme: str = "uniform", *,
              lo: float = -1.0, hi: float = 1.0, fan_in: int | None = None) -> np.ndarray:
    """Draw an initial tensor.

    ``uniform`` samples from [lo, hi); ``scaled_uniform`` samples from
    [-1/sqrt(fan_in), +1/sqrt(fan_in)), the usual recurrent-layer scaling.
    Deterministic given the generator state.
    """
    shape = tuple(int(s) for s in (shape if np.iterable(shape) else (shape,)))
    if len(shape) > MAX_RANK or any(s <= 0 for s in shape):
        raise DimensionError(f"invalid shape {shape}")
    if scheme == "uniform":
        return rng.uniform(lo, hi, size=shape)
    if scheme == "scaled_uniform":
        if fan_in is None or fan_in <= 0:
            raise DomainError("scaled_uniform requires a positive fan_in")
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)
    raise DomainError(f"unknown init scheme {scheme!r}")


def to_jsonable(arr: np.ndarray) -> dict:
    """Serialise as {shape, data} with full round-trip decimal precision.

    Python's float repr is the shortest string that round-trips, i.e. up
    to 17 significant digits; json preserves it.
    """
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}


def from_jsonable(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise DimensionError(f"data length {data.size} does not match shape {shape}")
    return check_finite(data.reshape(shape), "deserialised tensor")
