"""Verification harnesses shared by the CLI and the acceptance suite.

``run_oracle_check`` drives random chains through all three inference
routes and reports agreement; ``grad_check_network`` builds a small
network instance (biases randomised so nothing sits at a symmetric
point) and compares analytic gradients against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .autodiff import GradReport, grad_check
from .network import Network, NetworkConfig
from .tasks import SequenceBatch
from .tensor import make_rng
from .trainer import evaluate, loss_and_grads

FILTER_TOL = 1e-12
SMOOTHER_TOL = 1e-12


@dataclass
class OracleCheckRow:
    digest: str
    T: int
    binary: bool
    filter_err: float
    smoother_err: float | None   # exactness, binary gates only
    smoother_gap: float | None   # approximation gap, fractional gates only
    model: oracle.OracleModel


@dataclass
class OracleCheckResult:
    rows: list[OracleCheckRow]
    max_filter_err: float
    max_binary_smoother_err: float
    max_fractional_gap: float

    @property
    def ok(self) -> bool:
        return (self.max_filter_err < FILTER_TOL
                and self.max_binary_smoother_err < SMOOTHER_TOL)

    def failing_models(self) -> list[dict]:
        bad = []
        for row in self.rows:
            if row.filter_err >= FILTER_TOL or (
                    row.smoother_err is not None and row.smoother_err >= SMOOTHER_TOL):
                bad.append(row.model.to_jsonable())
        return bad


def run_oracle_check(trials: int, tmax: int, seed: int,
                     inject_error: float = 0.0) -> OracleCheckResult:
    """Cross-check filter/smoother exactness on random models.

    Trials alternate between fractional and deterministic gates.  Every
    model is checked against both brute-force enumeration and the
    two-state forward-backward recursions.  ``inject_error`` perturbs
    the filter output and exists as a negative control.
    """
    rng = make_rng(seed)
    rows = []
    max_filter = 0.0
    max_binary = 0.0
    max_gap = 0.0
    for trial in range(trials):
        binary = trial % 2 == 1
        T = int(rng.integers(2, tmax + 1))
        model = oracle.random_model(rng, T, binary_gates=binary)
        filt = oracle.bayes_filter(model) + inject_error
        enum_filt, enum_smooth = oracle.enumerate_posteriors(model)
        fb_filt, fb_smooth = oracle.forward_backward(model)
        cross = max(float(np.max(np.abs(enum_filt - fb_filt))),
                    float(np.max(np.abs(enum_smooth - fb_smooth))))
        filter_err = max(float(np.max(np.abs(filt - enum_filt))), cross)
        approx = oracle.ubru_smoother_reference(model, oracle.bayes_filter(model))
        gap = float(np.max(np.abs(approx - enum_smooth)))
        row = OracleCheckRow(model.digest(), T, binary, filter_err,
                             smoother_err=gap if binary else None,
                             smoother_gap=None if binary else gap,
                             model=model)
        rows.append(row)
        max_filter = max(max_filter, filter_err)
        if binary:
            max_binary = max(max_binary, row.smoother_err)
        else:
            max_gap = max(max_gap, gap)
    return OracleCheckResult(rows, max_filter, max_binary, max_gap)


def format_oracle_table(result: OracleCheckResult, limit: int | None = 20) -> str:
    lines = [f"{'model':<14}{'T':>3}  {'gates':<10}{'filter err':>12}  "
             f"{'smoother err':>13}  {'smoother gap':>13}"]
    rows = result.rows if limit is None else result.rows[:limit]
    for row in rows:
        serr = f"{row.smoother_err:.3e}" if row.smoother_err is not None else "-"
        sgap = f"{row.smoother_gap:.3e}" if row.smoother_gap is not None else "-"
        lines.append(f"{row.digest:<14}{row.T:>3}  "
                     f"{'binary' if row.binary else 'fractional':<10}"
                     f"{row.filter_err:>12.3e}  {serr:>13}  {sgap:>13}")
    if limit is not None and len(result.rows) > limit:
        lines.append(f"... {len(result.rows) - limit} more rows")
    lines.append(f"models={len(result.rows)}  max filter err={result.max_filter_err:.3e}  "
                 f"max binary smoother err={result.max_binary_smoother_err:.3e}  "
                 f"max fractional gap={result.max_fractional_gap:.3e}")
    return "\n".join(lines)


def grad_check_instance(cell: str, seed: int, layers: int = 2,
                        bidirectional: bool = True, hidden: int = 4,
                        input_dim: int = 3, num_classes: int = 3,
                        T: int = 5, B: int = 2):
    """Small network plus batch for gradient checking (I<=3, H<=4, T<=5, B<=2)."""
    cfg = NetworkConfig(cell=cell, layers=layers, hidden=hidden, input_dim=input_dim,
                        num_classes=num_classes, bidirectional=bidirectional)
    rng = make_rng(seed)
    net = Network.init(cfg, rng)
    for arr in net.named_parameters().values():
        arr[...] = rng.uniform(-1.0, 1.0, size=arr.shape)
    inputs = rng.normal(size=(T, B, input_dim))
    mask = np.ones((T, B), dtype=bool)
    if B > 1:
        mask[T - 1, B - 1] = False   # exercise the padding path
    targets = rng.integers(0, num_classes, size=(T, B))
    return net, SequenceBatch(inputs, targets, mask)


def grad_check_network(cell: str, seed: int = 17, layers: int = 2,
                       bidirectional: bool = True, eps: float = 1e-5) -> GradReport:
    net, batch = grad_check_instance(cell, seed, layers, bidirectional)

    def loss_fn(_params):
        return evaluate(net, batch)[0]

    def grad_fn(_params):
        return loss_and_grads(net, batch)[2]

    return grad_check(loss_fn, grad_fn, net.named_parameters(), eps=eps)
