"""Activation functions with their Bayesian readings.

The sigmoid and softmax are the exact class posteriors of Gaussian
class-conditional models with a shared covariance; a beta assumption on
inputs in (0, 1) gives a sigmoid over log-inputs; the log of a sigmoid
is the softplus and ReLU is its linear approximation.  This module
provides the activations themselves, the conversions from generative
model parameters to affine weights, direct density-based posterior
evaluators (the independent route used to verify those conversions),
the least-squares linear approximation of the logit, and the
variance-scaled sigmoid unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError


def sigmoid(x):
    """1 / (1 + exp(-x)), stable over the full float64 range."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softmax(v):
    """Exponentiate-and-normalise with max subtraction; rows sum to 1."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def logit(p):
    """ln(p / (1 - p)) for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("logit requires p in the open interval (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def odds(p):
    """p / (1 - p) for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("odds requires p in the open interval (0, 1)")
    out = p / (1.0 - p)
    return out if out.ndim else float(out)


def softplus(x):
    """ln(1 + exp(x)), computed as logaddexp(0, x) for stability."""
    out = np.logaddexp(0.0, np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def relu(x):
    out = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    return out if out.ndim else float(out)


def tanh(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Linear approximation of the logit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogitApprox:
    """Least-squares line alpha * h + beta fitted to logit(h) on a range.

    The derivative of logit at h = 0.5 is exactly 4, and every secant
    slope of logit is >= 4, so alpha >= 4 always.
    """

    alpha: float
    beta: float
    fit_range: tuple[float, float]

    def __post_init__(self):
        if self.alpha < 4.0 - 1e-9:
            raise DomainError(f"logit approximation slope must be >= 4, got {self.alpha}")

    def __call__(self, h):
        return self.alpha * np.asarray(h, dtype=np.float64) + self.beta


def logit_linear_approx(fit_range: tuple[float, float],
                        grid_step: float = 1e-4) -> LogitApprox:
    """Fit logit(h) ~ alpha*h + beta by least squares on a dense grid.

    The grid is a uniform sampling of [lo, hi] at roughly ``grid_step``
    spacing (endpoints included), so a range symmetric about 0.5 yields
    beta = -alpha/2 and the line passes through (0.5, 0).
    """
    lo, hi = float(fit_range[0]), float(fit_range[1])
    if not (0.0 < lo < hi < 1.0):
        raise DomainError(f"fit range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")
    n = max(int(round((hi - lo) / grid_step)) + 1, 2)
    h = np.linspace(lo, hi, n)
    y = logit(h)
    alpha, beta = np.polyfit(h, y, deg=1)
    return LogitApprox(alpha=float(alpha), beta=float(beta), fit_range=(lo, hi))


# ---------------------------------------------------------------------------
# Gaussian class-conditional model -> affine unit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianClassModel:
    """C Gaussian classes with shared covariance and prior weights.

    means:      [C x P] class means.
    covariance: [P x P] shared symmetric positive-definite covariance.
    priors:     length-C simplex vector.
    """

    means: np.ndarray
    covariance: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariance, dtype=np.float64)
        priors = np.asarray(self.priors, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "priors", priors)
        if means.shape[0] != priors.shape[0]:
            raise DomainError("one prior per class required")
        if cov.shape != (means.shape[1], means.shape[1]):
            raise DomainError("covariance shape must match the input dimension")
        if abs(float(priors.sum()) - 1.0) > 1e-12 or np.any(priors <= 0):
            raise DomainError("priors must be strictly positive and sum to 1")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise DomainError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance is not positive definite") from exc

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]


def gaussian_to_affine(model: GaussianClassModel):
    """Affine parameters whose sigmoid/softmax equals the Gaussian Bayes posterior.

    Two classes: w = Sigma^-1 (mu_1 - mu_2) and the bias carries the
    log-prior difference and the quadratic terms, so that
    sigmoid(w.x + b) = P(class 1 | x).  C classes: w_i = Sigma^-1 mu_i,
    b_i = ln prior_i - mu_i.Sigma^-1.mu_i / 2, combined by softmax.
    Returns (weights, biases); for C = 2 weights is a vector and biases
    a scalar.
    """
    prec = np.linalg.inv(model.covariance)
    mu = model.means
    if model.num_classes == 2:
        w = prec @ (mu[0] - mu[1])
        quad = 0.5 * (mu[0] @ prec @ mu[0] - mu[1] @ prec @ mu[1])
        b = float(np.log(model.priors[0]) - np.log(model.priors[1]) - quad)
        return w, b
    weights = (prec @ mu.T).T
    biases = np.log(model.priors) - 0.5 * np.einsum("ip,pq,iq->i", mu, prec, mu)
    return weights, biases


def gaussian_bayes_posterior(model: GaussianClassModel, x) -> np.ndarray:
    """Exact class posterior from the Gaussian densities themselves.

    This is the reference route: it never forms the affine parameters,
    only density values and Bayes's theorem.
    """
    x = np.asarray(x, dtype=np.float64)
    prec = np.linalg.inv(model.covariance)
    _, logdet = np.linalg.slogdet(model.covariance)
    d = model.means.shape[1]
    diffs = x[None, :] - model.means
    logliks = -0.5 * (np.einsum("ip,pq,iq->i", diffs, prec, diffs)
                      + logdet + d * np.log(2.0 * np.pi))
    joint = logliks + np.log(model.priors)
    return softmax(joint)


# ---------------------------------------------------------------------------
# Beta class-conditional model (beta = 1 case) -> affine unit
# ---------------------------------------------------------------------------

def beta_to_affine(alpha1, alpha2, priors):
    """Affine parameters for the two-class Beta(alpha, 1) model over log-inputs.

    Each input dimension j is Beta(alpha_{c,j}, 1) distributed, density
    alpha * x^(alpha-1) on (0, 1).  Then P(class 1 | x) =
    sigmoid(w . ln(x) + b) with w = alpha1 - alpha2 and the bias holding
    the log-prior difference plus the log normaliser difference
    (ln B(a, 1) = -ln a).
    """
    a1 = np.asarray(alpha1, dtype=np.float64)
    a2 = np.asarray(alpha2, dtype=np.float64)
    if np.any(a1 <= 0) or np.any(a2 <= 0):
        raise DomainError("beta shape parameters must be positive")
    p = np.asarray(priors, dtype=np.float64)
    w = a1 - a2
    b = float(np.log(p[0]) - np.log(p[1]) + np.sum(np.log(a1) - np.log(a2)))
    return w, b


def beta_bayes_posterior(alpha1, alpha2, priors, x) -> float:
    """Exact two-class posterior from Beta(alpha, 1) densities (reference route)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError("beta likelihoods are defined for x in (0, 1)^P")
    a1 = np.asarray(alpha1, dtype=np.float64)
    a2 = np.asarray(alpha2, dtype=np.float64)
    p = np.asarray(priors, dtype=np.float64)
    loglik1 = np.sum(np.log(a1) + (a1 - 1.0) * np.log(x))
    loglik2 = np.sum(np.log(a2) + (a2 - 1.0) * np.log(x))
    post = softmax(np.array([loglik1 + np.log(p[0]), loglik2 + np.log(p[1])]))
    return float(post[0])


def variance_scaled_sigmoid(x, rho: float, weights, bias: float) -> float:
    """sigmoid(rho * (w.x + b)): scaling the precision of the class model.

    rho = 0 erases all discrimination (output 0.5); rho = 1 recovers the
    plain sigmoid unit.
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    a = float(np.dot(np.asarray(weights, dtype=np.float64),
                     np.asarray(x, dtype=np.float64)) + bias)
    return float(sigmoid(rho * a))
