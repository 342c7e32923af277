"""Command-line harness: train target models, explain instances, and run
comparison / hyperparameter-sweep experiments with CSV reports.

Subcommands: train, explain, compare, sweep, gen-synthetic.
Exit codes: 0 success, 2 partial success (some rows failed), 1 hard error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig
from .data import encode_and_standardize, load_csv, split_dataset, transform_with_schema
from .explainer import (
    ExplanationFailed,
    NeighborhoodConfig,
    explain,
)
from .lime import LimeConfig, lime_explain
from .metrics import DegenerateNeighborhoodError, jaccard_top_k
from .mlp import ModelBundle, TrainConfig, train_mlp
from .sampling import sample_in_ball, tagged_rng
from . import synthetic

EXPLAINER_NAMES = ("ABLE_FGSM", "ABLE_PGD", "ABLE_DEEPFOOL", "ABLE_HSJ", "LIME")
REPORT_FORMAT = "able-report/1"
SWEEP_FORMAT = "able-sweep/1"
REPORT_COLUMNS = [
    "dataset", "explainer", "seed", "instance", "fidelity_r2", "jaccard",
    "runtime_ms", "pairs_used", "failed_points", "eps_fwd_mean",
    "eps_rev_mean", "labeling_queries", "attack_queries", "eval_queries", "error",
]
ATTACK_FIELDS = (
    "epsilon0", "epsilon_step", "epsilon_max", "pgd_steps", "pgd_alpha_fraction",
    "df_overshoot", "df_max_iters", "hsj_max_queries", "hsj_theta",
)


def default_seed() -> int:
    return int(os.environ.get("ABLE_SEED", "0"))


def mix_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary parts (stable across runs)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little") & 0x7FFFFFFFFFFFFFFF


@dataclass
class ExperimentConfig:
    dataset: str = ""
    label_column: str = "label"
    model: dict = field(default_factory=dict)  # {"path": ...} or {"train": {...}}
    explainers: list = field(default_factory=lambda: [{"name": "ABLE_FGSM"}, {"name": "LIME"}])
    num_test_instances: int = 100
    seeds: list = field(default_factory=lambda: list(range(10)))
    r: float = 0.2
    n: int = 150
    k: int = 5
    perturb_radius: float = 0.1
    split_seed: int = 0
    out: str = "report"
    workers: int = 1

    def validate(self):
        if not self.dataset:
            raise ValueError("no dataset given (config 'dataset' or --data)")
        if not self.explainers:
            raise ValueError("need at least one explainer")
        if not self.seeds:
            raise ValueError("need at least one seed")
        for spec in self.explainers:
            name = spec.get("name")
            if name not in EXPLAINER_NAMES:
                raise ValueError(f"unknown explainer {name!r}; choose from {EXPLAINER_NAMES}")


def _load_experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    if getattr(args, "data", None):
        cfg.dataset = args.data
    if getattr(args, "label", None):
        cfg.label_column = args.label
    if getattr(args, "model", None):
        cfg.model = {"path": args.model}
    if getattr(args, "explainers", None):
        cfg.explainers = [{"name": n.strip()} for n in args.explainers.split(",") if n.strip()]
    if getattr(args, "instances", None) is not None:
        cfg.num_test_instances = args.instances
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    for flag in ("r", "n", "k", "perturb_radius", "split_seed", "out", "workers"):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, flag, value)
    cfg.validate()
    return cfg


def _explain_one(model, name: str, spec: dict, cfg: ExperimentConfig, x: np.ndarray,
                 seed: int, feature_names) -> object:
    k = min(cfg.k, x.size)
    if name == "LIME":
        lime_cfg = LimeConfig(
            num_samples=int(spec.get("num_samples", 5000)),
            kernel_width=spec.get("kernel_width"),
            perturb_std=float(spec.get("perturb_std", 1.0)),
            k=k,
            seed=seed,
        )
        return lime_explain(model, x, lime_cfg, feature_names)
    n_cfg = NeighborhoodConfig(
        radius=float(spec.get("r", cfg.r)), count=int(spec.get("n", cfg.n)), seed=seed
    )
    attack_kwargs = {f: spec[f] for f in ATTACK_FIELDS if f in spec}
    a_cfg = AttackConfig(kind=name.removeprefix("ABLE_"), seed=seed, **attack_kwargs)
    return explain(model, x, n_cfg, a_cfg, k=k, feature_names=feature_names)


def _run_row(task: tuple) -> dict:
    """One (explainer, seed, instance) report row; exceptions become the
    row's error field so a single failure never aborts the run."""
    model, name, spec, cfg, dataset_name, seed, inst_id, x, feature_names = task
    row = {c: "" for c in REPORT_COLUMNS}
    row.update(dataset=dataset_name, explainer=name, seed=seed, instance=inst_id)
    row_seed = mix_seed(seed, inst_id)
    try:
        exp = _explain_one(model, name, spec, cfg, x, row_seed, feature_names)
        rng = tagged_rng(row_seed, "stability")
        x_pert = sample_in_ball(rng, x, cfg.perturb_radius, 1)[0]
        exp_pert = _explain_one(model, name, spec, cfg, x_pert, row_seed, feature_names)
        k = min(cfg.k, x.size)
        jac = jaccard_top_k(
            {i for i, _, _ in exp.top_features[:k]},
            {i for i, _, _ in exp_pert.top_features[:k]},
        )
        row.update(
            fidelity_r2=f"{exp.fidelity_r2:.6f}",
            jaccard=f"{jac:.6f}",
            runtime_ms=f"{exp.runtime_ms:.3f}",
            pairs_used=exp.pairs_used,
            failed_points=exp.failed_points,
            eps_fwd_mean=f"{exp.eps_forward_mean:.6f}",
            eps_rev_mean=f"{exp.eps_reverse_mean:.6f}",
            labeling_queries=exp.labeling_queries,
            attack_queries=exp.attack_queries,
            eval_queries=exp.eval_queries,
        )
    except (ExplanationFailed, DegenerateNeighborhoodError) as err:
        row["error"] = str(err)
    return row


def _prepare_model_and_data(cfg: ExperimentConfig):
    table, schema = load_csv(cfg.dataset, cfg.label_column)
    ds, standardizer = encode_and_standardize(table, schema)
    train, val, test = split_dataset(ds, seed=cfg.split_seed)
    model_spec = cfg.model or {"train": {}}
    if "path" in model_spec:
        bundle = ModelBundle.load(model_spec["path"])
        model = bundle.model
        if model.n_features != ds.n_features:
            raise ValueError(
                f"model expects {model.n_features} features, dataset has {ds.n_features}"
            )
    else:
        train_kwargs = dict(model_spec.get("train", {}))
        if "hidden" in train_kwargs:
            train_kwargs["hidden"] = tuple(train_kwargs["hidden"])
        model = train_mlp(train, val, TrainConfig(**train_kwargs))
    return model, ds, test


def _pick_instances(cfg: ExperimentConfig, test) -> list[int]:
    rng = np.random.default_rng(mix_seed(cfg.seeds[0], "instances"))
    count = min(cfg.num_test_instances, test.n_rows)
    return sorted(int(i) for i in rng.choice(test.n_rows, size=count, replace=False))


def _write_report(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# format={REPORT_FORMAT}\n")
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _summarize(rows: list[dict]) -> dict[str, dict[str, float]]:
    summary: dict[str, dict[str, float]] = {}
    order = []
    for row in rows:
        if row["explainer"] not in order:
            order.append(row["explainer"])
    for name in order:
        ok = [r for r in rows if r["explainer"] == name and not r["error"]]
        n_fail = sum(1 for r in rows if r["explainer"] == name and r["error"])
        entry = {"rows": len(ok), "failures": n_fail}
        if ok:
            entry["fidelity_r2"] = float(np.mean([float(r["fidelity_r2"]) for r in ok]))
            entry["jaccard"] = float(np.mean([float(r["jaccard"]) for r in ok]))
            entry["runtime_ms"] = float(np.mean([float(r["runtime_ms"]) for r in ok]))
        summary[name] = entry
    return summary


def _print_summary(summary: dict) -> None:
    names = list(summary)
    print("metric," + ",".join(names))
    for metric in ("fidelity_r2", "jaccard", "runtime_ms"):
        cells = [
            f"{summary[n][metric]:.4f}" if metric in summary[n] else "" for n in names
        ]
        print(f"{metric}," + ",".join(cells))
    print("rows," + ",".join(str(summary[n]["rows"]) for n in names))
    print("failures," + ",".join(str(summary[n]["failures"]) for n in names))


def cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    table, schema = load_csv(args.data, args.label)
    ds, standardizer = encode_and_standardize(table, schema)
    train, val, test = split_dataset(ds, seed=args.split_seed)
    cfg = TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
        seed=seed, l2=args.l2, hidden=tuple(int(h) for h in args.hidden.split(",")),
    )
    model = train_mlp(train, val, cfg)
    test_acc = float(np.mean(model.predict_label(test.x) == test.y))
    bundle = ModelBundle(model=model, standardizer=standardizer, schema=schema)
    bundle.save(args.out)
    print(f"rows={ds.n_rows} features={ds.n_features} classes={ds.num_classes}")
    print(f"split=train:{train.n_rows}/val:{val.n_rows}/test:{test.n_rows}")
    print(f"test_accuracy={test_acc:.4f}")
    print(f"model_written={args.out}")
    return 0


def _parse_instance_spec(spec: str, n_rows: int) -> list[int]:
    ids: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            ids.extend(range(int(lo), int(hi) + 1))
        elif part:
            ids.append(int(part))
    for i in ids:
        if not 0 <= i < n_rows:
            raise ValueError(f"instance {i} out of range (dataset has {n_rows} rows)")
    return ids


def cmd_explain(args, parser) -> int:
    if args.explainer not in EXPLAINER_NAMES:
        parser.error(f"unknown explainer {args.explainer!r}; choose from {EXPLAINER_NAMES}")
    seed = args.seed if args.seed is not None else default_seed()
    bundle = ModelBundle.load(args.model)
    table, _ = load_csv(args.data, bundle.schema.label_column)
    ds = transform_with_schema(table, bundle.schema, bundle.standardizer)
    ids = _parse_instance_spec(args.instances, ds.n_rows)
    cfg = ExperimentConfig(dataset=args.data, r=args.r, n=args.n, k=args.k)
    spec: dict = {}
    if args.num_samples is not None:
        spec["num_samples"] = args.num_samples
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    failures = 0
    try:
        for inst_id in ids:
            record = {"instance_id": inst_id, "explainer": args.explainer}
            try:
                exp = _explain_one(
                    bundle.model, args.explainer, spec, cfg, ds.x[inst_id],
                    mix_seed(seed, inst_id), ds.feature_names,
                )
                record.update(exp.to_dict())
            except (ExplanationFailed, DegenerateNeighborhoodError) as err:
                record["error"] = str(err)
                failures += 1
            out.write(json.dumps(record) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 2 if failures else 0


def cmd_compare(args) -> int:
    cfg = _load_experiment_config(args)
    model, ds, test = _prepare_model_and_data(cfg)
    instance_ids = _pick_instances(cfg, test)
    dataset_name = os.path.basename(cfg.dataset)
    tasks = []
    for spec in cfg.explainers:
        for seed in cfg.seeds:
            for inst_id in instance_ids:
                tasks.append((
                    model, spec["name"], spec, cfg, dataset_name, seed, inst_id,
                    test.x[inst_id], ds.feature_names,
                ))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_row, tasks, chunksize=4))
    else:
        rows = [_run_row(t) for t in tasks]
    report_path = f"{cfg.out}.csv"
    _write_report(report_path, rows)
    summary = _summarize(rows)
    _print_summary(summary)
    with open(f"{cfg.out}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(f"report_written={report_path}")
    n_failed = sum(1 for r in rows if r["error"])
    return 2 if n_failed else 0


def cmd_sweep(args) -> int:
    cfg = _load_experiment_config(args)
    r_grid = [float(v) for v in args.r_grid.split(",")]
    n_grid = [int(v) for v in args.n_grid.split(",")]
    if not r_grid or not n_grid:
        raise ValueError("grids must be non-empty")
    able_specs = [s for s in cfg.explainers if s["name"].startswith("ABLE_")]
    if not able_specs:
        raise ValueError("sweep needs at least one ABLE_* explainer")
    model, ds, test = _prepare_model_and_data(cfg)
    instance_ids = _pick_instances(cfg, test)
    failures = 0
    grid = {}
    for r in r_grid:
        for n in n_grid:
            cell = []
            for spec in able_specs:
                cell_spec = dict(spec)
                cell_spec["r"] = r
                cell_spec["n"] = n
                for seed in cfg.seeds:
                    for inst_id in instance_ids:
                        try:
                            exp = _explain_one(
                                model, spec["name"], cell_spec, cfg, test.x[inst_id],
                                mix_seed(seed, inst_id), ds.feature_names,
                            )
                            cell.append(exp.fidelity_r2)
                        except (ExplanationFailed, DegenerateNeighborhoodError):
                            failures += 1
            grid[(r, n)] = float(np.mean(cell)) if cell else float("nan")
    out_path = f"{cfg.out}_sweep.csv"
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# format={SWEEP_FORMAT}\n")
        writer = csv.writer(fh)
        writer.writerow(["r"] + [f"n={n}" for n in n_grid])
        for r in r_grid:
            writer.writerow([r] + [f"{grid[(r, n)]:.6f}" for n in n_grid])
    print(f"sweep_written={out_path} cells={len(grid)}")
    return 2 if failures else 0


def cmd_gen_synthetic(args) -> int:
    if args.kind == "blobs":
        x, y = synthetic.make_blobs(
            args.rows, n_classes=args.classes, n_features=args.features,
            cluster_std=args.cluster_std, curvature=args.curvature, seed=args.seed,
        )
    else:
        x, y = synthetic.make_moons(args.rows, noise=args.noise, seed=args.seed)
    synthetic.write_csv(args.out, x, y, label_column=args.label)
    print(f"dataset_written={args.out} rows={len(y)} features={x.shape[1]}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are hard errors (exit 1)
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="able", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a target model on a CSV dataset")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--label", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--epochs", type=int, default=200)
    p_train.add_argument("--lr", type=float, default=0.05)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--hidden", default="64,32")
    p_train.add_argument("--l2", type=float, default=1e-4)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--split-seed", type=int, default=0)

    p_explain = sub.add_parser("explain", help="explain selected instances as NDJSON")
    p_explain.add_argument("--model", required=True)
    p_explain.add_argument("--data", required=True)
    p_explain.add_argument("--instances", required=True, help="e.g. 0..4 or 1,5,9")
    p_explain.add_argument("--explainer", required=True)
    p_explain.add_argument("--seed", type=int, default=None)
    p_explain.add_argument("--r", type=float, default=0.2)
    p_explain.add_argument("--n", type=int, default=150)
    p_explain.add_argument("--k", type=int, default=5)
    p_explain.add_argument("--num-samples", type=int, default=None)
    p_explain.add_argument("--out", default=None)

    p_compare = sub.add_parser("compare", help="explainer comparison report")
    p_sweep = sub.add_parser("sweep", help="neighborhood (r, n) fidelity grid")
    for p in (p_compare, p_sweep):
        p.add_argument("--config", default=None)
        p.add_argument("--data", default=None)
        p.add_argument("--label", default=None)
        p.add_argument("--model", default=None)
        p.add_argument("--explainers", default=None, help="comma-separated names")
        p.add_argument("--instances", type=int, default=None)
        p.add_argument("--seeds", default=None, help="comma-separated integers")
        p.add_argument("--r", type=float, default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--perturb-radius", dest="perturb_radius", type=float, default=None)
        p.add_argument("--split-seed", dest="split_seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=None)
    p_sweep.add_argument("--r-grid", default="0.2,0.4,0.6,0.8,1.0")
    p_sweep.add_argument("--n-grid", default="50,75,100,150")

    p_gen = sub.add_parser("gen-synthetic", help="write a bundled synthetic dataset")
    p_gen.add_argument("--kind", choices=("blobs", "moons"), default="blobs")
    p_gen.add_argument("--rows", type=int, default=1000)
    p_gen.add_argument("--classes", type=int, default=2)
    p_gen.add_argument("--features", type=int, default=2)
    p_gen.add_argument("--cluster-std", type=float, default=1.0)
    p_gen.add_argument("--curvature", type=float, default=0.0)
    p_gen.add_argument("--noise", type=float, default=0.2)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--label", default="label")
    p_gen.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "explain":
            return cmd_explain(args, parser)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit:
        raise
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
