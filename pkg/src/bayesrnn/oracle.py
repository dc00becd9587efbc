"""Exact inference for the two-state gated feature chain.

The generative model behind the recurrent unit, per scalar feature:

* a latent bit ``phi_t`` with stationary prior ``p = P(phi = 1)``;
* independent gate bits ``zeta_t ~ Bernoulli(z_t)`` for t = 1..T-1.
  ``zeta_t = 1`` copies the bit forward (``phi_{t+1} = phi_t``);
  ``zeta_t = 0`` redraws it from the prior;
* an observation per step summarised entirely by the likelihood ratio
  ``lambda_t = L(x_t | phi = 0) / L(x_t | phi = 1)``.

Marginalising the gate gives the mixture transition kernel
``P(phi_{t+1} | phi_t) = z_t * [phi_{t+1} = phi_t]
+ (1 - z_t) * p^phi_{t+1} (1-p)^(1-phi_{t+1})``.

Three independent routes to the posteriors are implemented:

* ``bayes_filter``        -- the closed-form forward recursion
  (predict with the convex prior/posterior mix, update with the ratio);
* ``enumerate_posteriors``-- brute force over every joint (phi, zeta)
  trajectory, feasible for T <= 12;
* ``forward_backward``    -- standard two-state alpha/beta recursions
  with the mixture kernel, O(T).

The filter is exact under the model, so all three agree on filtered
marginals.  The closed-form backward recursion
``h'_{t-1} = (1 - z_{t-1}) h_{t-1} + z_{t-1} h'_t`` is exact whenever
the gates are deterministic (z in {0, 1}); for fractional gates its gap
to the exact smoothed posterior is measured, not assumed zero.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError, NumericError

ENUMERATION_MAX_T = 12


@dataclass(frozen=True)
class OracleModel:
    """Per-feature chain: prior p, gate probabilities z (length T-1),
    likelihood ratios lam (length T)."""

    p: float
    z: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        lam = np.asarray(self.lam, dtype=np.float64)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "lam", lam)
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"prior p must lie strictly inside (0, 1), got {self.p}")
        if z.ndim != 1 or lam.ndim != 1 or len(lam) != len(z) + 1:
            raise DomainError("need T likelihood ratios and T-1 gate probabilities")
        if np.any(z < 0.0) or np.any(z > 1.0):
            raise DomainError("gate probabilities must lie in [0, 1]")
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            raise DomainError("likelihood ratios must be finite and positive")

    @property
    def T(self) -> int:
        return len(self.lam)

    def to_jsonable(self) -> dict:
        return {"p": self.p, "z": list(map(float, self.z)),
                "lambda": list(map(float, self.lam))}

    def digest(self) -> str:
        """Short stable hash for logging and replay files."""
        blob = json.dumps(self.to_jsonable(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def bayes_filter(model: OracleModel) -> np.ndarray:
    """Filtered posteriors h_t = P(phi_t = 1 | x_1..x_t), t = 1..T.

    Starts from h_0 = p with a closed gate, predicts with
    rho_t = (1 - z_{t-1}) p + z_{t-1} h_{t-1}, and updates with
    h_t = 1 / (1 + lam_t (1 - rho_t) / rho_t).
    """
    h = np.empty(model.T)
    h_prev = model.p
    for t in range(model.T):
        rho = h_prev if t == 0 else (1.0 - model.z[t - 1]) * model.p + model.z[t - 1] * h_prev
        if rho <= 0.0 or rho >= 1.0:
            raise NumericError(f"degenerate predictor rho={rho} at step {t + 1}")
        h_t = 1.0 / (1.0 + model.lam[t] * (1.0 - rho) / rho)
        if not 0.0 < h_t < 1.0:
            raise NumericError(f"posterior left (0, 1) at step {t + 1}")
        h[t] = h_prev = h_t
    return h


def ubru_smoother_reference(model: OracleModel, filtered: np.ndarray) -> np.ndarray:
    """Closed-form backward pass h'_{t-1} = (1-z_{t-1}) h_{t-1} + z_{t-1} h'_t.

    The gate indexed t-1 is the one governing the t-1 -> t transition.
    Initialised with h'_T = h_T.  Exact for deterministic gates.
    """
    filtered = np.asarray(filtered, dtype=np.float64)
    if filtered.shape != (model.T,):
        raise DomainError("filtered sequence length must equal T")
    hp = np.empty_like(filtered)
    hp[-1] = filtered[-1]
    for t in range(model.T - 2, -1, -1):
        hp[t] = (1.0 - model.z[t]) * filtered[t] + model.z[t] * hp[t + 1]
    return hp


def _bit_matrix(n_vars: int) -> np.ndarray:
    """All 2^n binary assignments as an [2^n x n] 0/1 array."""
    idx = np.arange(2 ** n_vars, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(n_vars)[None, :]) & 1).astype(np.float64)


def enumerate_posteriors(model: OracleModel):
    """Exact marginals by brute force over joint (phi, zeta) trajectories.

    Returns (filtered, smoothed).  Every one of the 2^T * 2^(T-1) joint
    assignments is weighted by prior * transitions * gate priors, with
    emissions entering through the likelihood-ratio convention
    L(x|phi=1) = 1, L(x|phi=0) = lambda (posteriors only need ratios).
    Filtered marginals at t reuse the same weights with emissions
    truncated at t: unobserved futures marginalise to one.
    """
    T = model.T
    if T > ENUMERATION_MAX_T:
        raise CapacityError(f"enumeration supports T <= {ENUMERATION_MAX_T}, got T={T}")
    phi = _bit_matrix(T)                     # [M x T]
    zeta = _bit_matrix(T - 1) if T > 1 else np.zeros((1, 0))   # [Z x (T-1)]
    p = model.p

    weights = np.where(phi[:, 0] == 1.0, p, 1.0 - p)[:, None] * np.ones((1, zeta.shape[0]))
    for t in range(T - 1):
        same = (phi[:, t + 1] == phi[:, t]).astype(np.float64)       # [M]
        redraw = np.where(phi[:, t + 1] == 1.0, p, 1.0 - p)          # [M]
        open_w = model.z[t] * zeta[:, t]                             # [Z]
        closed_w = (1.0 - model.z[t]) * (1.0 - zeta[:, t])           # [Z]
        weights *= same[:, None] * open_w[None, :] + redraw[:, None] * closed_w[None, :]
    w_phi = weights.sum(axis=1)                                      # [M]

    emis_steps = np.where(phi == 1.0, 1.0, model.lam[None, :])       # [M x T]
    emis_prefix = np.cumprod(emis_steps, axis=1)                     # [M x T]

    filtered = np.empty(T)
    smoothed = np.empty(T)
    w_full = w_phi * emis_prefix[:, -1]
    norm_full = w_full.sum()
    for t in range(T):
        w_pref = w_phi * emis_prefix[:, t]
        filtered[t] = np.sum(w_pref * phi[:, t]) / w_pref.sum()
        smoothed[t] = np.sum(w_full * phi[:, t]) / norm_full
    return filtered, smoothed


def forward_backward(model: OracleModel):
    """Exact marginals by two-state alpha/beta recursions (second oracle).

    States are ordered (phi=0, phi=1); the time-varying kernel is the
    gate-marginalised mixture.  Per-step normalisation keeps the
    recursions stable; posteriors are scale free.
    """
    T = model.T
    p = model.p
    emis = np.stack([model.lam, np.ones(T)], axis=1)        # [T x 2]
    prior = np.array([1.0 - p, p])

    alpha = np.empty((T, 2))
    a = prior * emis[0]
    alpha[0] = a / a.sum()
    for t in range(1, T):
        z = model.z[t - 1]
        pred = z * alpha[t - 1] + (1.0 - z) * (alpha[t - 1].sum() * prior)
        a = pred * emis[t]
        alpha[t] = a / a.sum()

    beta = np.empty((T, 2))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        z = model.z[t]
        msg = emis[t + 1] * beta[t + 1]
        b = z * msg + (1.0 - z) * float(prior @ msg)
        beta[t] = b / b.sum()

    joint = alpha * beta
    smoothed = joint[:, 1] / joint.sum(axis=1)
    filtered = alpha[:, 1]
    return filtered, smoothed


def smoother_gap(model: OracleModel) -> float:
    """Max |closed-form backward pass - exact smoothed posterior| for a model."""
    filtered, smoothed = forward_backward(model)
    approx = ubru_smoother_reference(model, filtered)
    return float(np.max(np.abs(approx - smoothed)))


def random_model(rng: np.random.Generator, T: int, binary_gates: bool = False) -> OracleModel:
    """Sample a random chain; gates either fractional in [0,1] or fair coin bits."""
    p = float(rng.uniform(0.05, 0.95))
    if binary_gates:
        z = rng.integers(0, 2, size=T - 1).astype(np.float64)
    else:
        z = rng.uniform(0.0, 1.0, size=T - 1)
    lam = np.exp(rng.normal(0.0, 1.0, size=T))
    return OracleModel(p=p, z=z, lam=lam)
