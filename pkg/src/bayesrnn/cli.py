"""Command-line interface.

One executable, subcommand style:

* ``oracle-check``  -- exactness of the inference recursions on random chains
* ``grad-check``    -- finite-difference check of a cell's gradients
* ``param-audit``   -- trainable-parameter counts, with parity assertions
* ``train``         -- run one training job from a JSON experiment spec
* ``eval``          -- evaluate a checkpoint on a task split
* ``compare``       -- the architecture grid across a seed list

Exit codes: 0 success, 1 assertion/hypothesis failure, 2 usage or I/O
error.  All commands are deterministic given their spec and seed(s);
``BRU_THREADS`` caps sweep concurrency.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import beta as beta_dist

from . import checks
from .errors import ConfigError, DataError, NumericError
from .network import (NetworkConfig, from_checkpoint, param_count,
                      stack_logits)
from .tasks import Dataset, generate_dataset, save_batch_jsonl
from .trainer import (METRICS_HEADER, TrainConfig, evaluate, train,
                      write_metrics_csv)

COMPARE_GRID = (
    ("Uni-GRU", "GRU", False),
    ("UBRU", "UBRU", False),
    ("LBRU", "LBRU", False),
    ("Bi-GRU", "GRU", True),
    ("Bi-LSTM", "LSTM", True),
    ("Bi-LBRU", "LBRU", True),
)

_NETWORK_KEYS = {"cell", "layers", "hidden", "input_dim", "num_classes",
                 "bidirectional", "dropout", "freeze_prior"}
_TRAIN_KEYS = {"lr", "beta1", "beta2", "eps", "epochs", "lr_halving_threshold",
               "batch_size", "seed"}
_TASK_KEYS = {
    "latent_feature": {"kind", "T", "F", "noise", "z", "p", "sizes"},
    "delayed_cue": {"kind", "T", "gap", "sizes"},
}
_SPEC_KEYS = {"network", "train", "task", "seeds", "out_dir"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")


def load_spec(path: str) -> dict:
    """Parse and schema-validate an experiment spec; raises ConfigError."""
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError("experiment spec must be a JSON object")
    _reject_unknown(spec, _SPEC_KEYS, "spec")
    for key in ("task", "seeds", "out_dir"):
        if key not in spec:
            raise ConfigError(f"spec is missing required key {key!r}")
    task = spec["task"]
    kind = task.get("kind")
    if kind not in _TASK_KEYS:
        raise ConfigError(f"task.kind must be one of {sorted(_TASK_KEYS)}, got {kind!r}")
    _reject_unknown(task, _TASK_KEYS[kind], "task")
    _reject_unknown(spec.get("train", {}), _TRAIN_KEYS, "train")
    _reject_unknown(spec.get("network", {}), _NETWORK_KEYS, "network")
    seeds = spec["seeds"]
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and s >= 0 for s in seeds)):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    return spec


def _task_dims(dataset: Dataset) -> tuple[int, int]:
    return dataset.input_dim, dataset.num_classes


def _network_config(spec: dict, dataset: Dataset, cell: str | None = None,
                    bidirectional: bool | None = None) -> NetworkConfig:
    section = dict(spec.get("network", {}))
    input_dim, num_classes = _task_dims(dataset)
    for key, derived in (("input_dim", input_dim), ("num_classes", num_classes)):
        if key in section and section[key] != derived:
            raise ConfigError(f"network.{key}={section[key]} conflicts with the "
                              f"task's value {derived}")
        section[key] = derived
    if cell is not None:
        section["cell"] = cell
    if bidirectional is not None:
        section["bidirectional"] = bidirectional
    section.setdefault("cell", "UBRU")
    section.setdefault("layers", 1)
    section.setdefault("hidden", 16)
    return NetworkConfig.from_dict(section)


def _train_config(spec: dict, seed: int) -> TrainConfig:
    section = dict(spec.get("train", {}))
    section["seed"] = seed
    return TrainConfig.from_dict(section)


def _headline_counts(net, dataset: Dataset):
    """(correct, total) on the test split, over the task's headline positions."""
    batch = dataset.test
    logits = stack_logits(net.forward(batch.inputs, batch.mask))
    mask = batch.mask.copy()
    if dataset.metadata.get("kind") == "delayed_cue":
        positions = np.asarray(dataset.metadata["affected"], dtype=bool)
        if positions.any():
            mask &= positions[:, None]
    correct = int(((logits.argmax(axis=-1) == batch.targets) & mask).sum())
    return correct, int(mask.sum())


def cmd_oracle_check(args) -> int:
    result = checks.run_oracle_check(args.trials, args.tmax, args.seed,
                                     inject_error=args.inject_error)
    print(checks.format_oracle_table(result, limit=None if args.full_table else 20))
    if not result.ok:
        print("FAIL: recursions disagree with enumeration; failing models follow",
              file=sys.stderr)
        for model in result.failing_models():
            print(json.dumps(model), file=sys.stderr)
        return 1
    return 0


def cmd_grad_check(args) -> int:
    report = checks.grad_check_network(args.cell, seed=args.seed, layers=args.layers,
                                       bidirectional=not args.unidirectional,
                                       eps=args.eps)
    table = report.format_table()
    print(table)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "gradreport.txt"), "w") as fh:
            fh.write(table + "\n")
    return 0 if report.passed(args.tol) else 1


def cmd_param_audit(args) -> int:
    try:
        with open(args.config) as fh:
            section = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {args.config}: {exc}") from exc
    _reject_unknown(section, _NETWORK_KEYS, "network config")
    config = NetworkConfig.from_dict(section)
    audit = param_count(config)
    print(audit.format_table() if not args.json else json.dumps(audit.to_jsonable()))
    if args.assert_parity:
        base = config.to_dict()
        ubru = param_count(NetworkConfig.from_dict(
            {**base, "cell": "UBRU", "bidirectional": False, "freeze_prior": True}))
        gru = param_count(NetworkConfig.from_dict(
            {**base, "cell": "GRU", "bidirectional": False}))
        lbru = param_count(NetworkConfig.from_dict(
            {**base, "cell": "LBRU", "bidirectional": False}))
        bigru = param_count(NetworkConfig.from_dict(
            {**base, "cell": "GRU", "bidirectional": True}))
        print(f"UBRU={ubru.total} GRU={gru.total} "
              f"LBRU={lbru.total} Bi-GRU={bigru.total}")
        if ubru.total != gru.total:
            print("FAIL: UBRU and GRU parameter counts differ", file=sys.stderr)
            return 1
        if lbru.total >= bigru.total:
            print("FAIL: LBRU is not smaller than Bi-GRU", file=sys.stderr)
            return 1
    return 0


def _run_one(spec: dict, seed: int, cell: str | None = None,
             bidirectional: bool | None = None):
    dataset = generate_dataset(spec["task"], seed)
    net_config = _network_config(spec, dataset, cell, bidirectional)
    result = train(net_config, _train_config(spec, seed), dataset)
    best_net = from_checkpoint(result.best_checkpoint)
    test_loss, test_acc = evaluate(best_net, dataset.test)
    correct, total = _headline_counts(best_net, dataset)
    return {"dataset": dataset, "result": result, "net_config": net_config,
            "test_loss": test_loss, "test_acc": test_acc,
            "headline_correct": correct, "headline_total": total}


def cmd_train(args) -> int:
    spec = load_spec(args.spec)
    seed = args.seed if args.seed is not None else spec["seeds"][0]
    out_dir = args.out_dir or spec["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    run = _run_one(spec, seed)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), run["result"].metrics)
    with open(os.path.join(out_dir, "checkpoint.json"), "w") as fh:
        json.dump(run["result"].best_checkpoint, fh)
    if args.dump_data:
        save_batch_jsonl(os.path.join(out_dir, "train.jsonl"), run["dataset"].train)
    print(f"seed={seed} best_val_loss={run['result'].best_val_loss!r} "
          f"test_loss={run['test_loss']!r} test_accuracy={run['test_acc']!r}")
    return 0


def cmd_eval(args) -> int:
    spec = load_spec(args.spec)
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    with open(args.checkpoint) as fh:
        net = from_checkpoint(json.load(fh))
    seed = args.seed if args.seed is not None else spec["seeds"][0]
    dataset = generate_dataset(spec["task"], seed)
    batch = getattr(dataset, args.split)
    loss, acc = evaluate(net, batch)
    print(METRICS_HEADER)
    print(f"0,{args.split},{loss!r},{acc!r},0.0,0.0,{seed}")
    return 0


def cmd_compare(args) -> int:
    spec = load_spec(args.spec)
    out_dir = args.out_dir or spec["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    seeds = spec["seeds"]
    jobs = [(name, cell, bidir, seed)
            for name, cell, bidir in COMPARE_GRID for seed in seeds]
    workers = max(1, int(os.environ.get("BRU_THREADS", "1")))

    def worker(job):
        name, cell, bidir, seed = job
        run = _run_one(spec, seed, cell=cell, bidirectional=bidir)
        return job, run

    results = {}
    if workers == 1:
        for job in jobs:
            results[job] = worker(job)[1]
            _log_run(job, results[job])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for job, run in pool.map(worker, jobs):
                results[job] = run
                _log_run(job, run)

    with open(os.path.join(out_dir, "runs.csv"), "w") as fh:
        fh.write("architecture,seed,param_count,test_loss,test_accuracy,"
                 "headline_correct,headline_total\n")
        for name, cell, bidir in COMPARE_GRID:
            for seed in seeds:
                run = results[(name, cell, bidir, seed)]
                n_params = param_count(run["net_config"]).total
                fh.write(f"{name},{seed},{n_params},{run['test_loss']!r},"
                         f"{run['test_acc']!r},{run['headline_correct']},"
                         f"{run['headline_total']}\n")

    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("architecture,param_count,mean_accuracy,interval_half_width\n")
        for name, cell, bidir in COMPARE_GRID:
            runs = [results[(name, cell, bidir, seed)] for seed in seeds]
            n_params = param_count(runs[0]["net_config"]).total
            accs = [r["headline_correct"] / r["headline_total"] for r in runs]
            mean_acc = float(np.mean(accs))
            k = sum(r["headline_correct"] for r in runs)
            n = sum(r["headline_total"] for r in runs)
            lo, hi = credible_interval(k, n)
            fh.write(f"{name},{n_params},{mean_acc!r},{(hi - lo) / 2.0!r}\n")
    print(f"wrote {out_dir}/runs.csv and {out_dir}/summary.csv")
    return 0


def _log_run(job, run):
    name, _, _, seed = job
    print(f"{name:8s} seed={seed}  test_acc={run['test_acc']:.4f}  "
          f"headline={run['headline_correct']}/{run['headline_total']}")


def credible_interval(correct: int, total: int, level: float = 0.95):
    """Equal-tailed credible interval for an accuracy under a beta posterior
    with a uniform prior."""
    tail = (1.0 - level) / 2.0
    lo = float(beta_dist.ppf(tail, correct + 1, total - correct + 1))
    hi = float(beta_dist.ppf(1.0 - tail, correct + 1, total - correct + 1))
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesrnn",
                                     description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle-check", help="exactness of the inference recursions")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tmax", type=int, default=8)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--full-table", action="store_true")
    p.add_argument("--inject-error", type=float, default=0.0,
                   help="perturb the filter (negative control)")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    p.add_argument("--cell", required=True,
                   choices=["GRU", "LSTM", "BRU", "UBRU", "LBRU", "MGU", "LiGRU"])
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--unidirectional", action="store_true")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("param-audit", help="trainable parameter counts")
    p.add_argument("--config", required=True, help="NetworkConfig JSON file")
    p.add_argument("--assert-parity", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_param_audit)

    p = sub.add_parser("train", help="train one model from an experiment spec")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--dump-data", action="store_true",
                   help="also cache the training split as JSON lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="architecture grid over the seed list")
    p.add_argument("spec")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
