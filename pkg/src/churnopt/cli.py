"""Command-line front end.

Subcommands: ``generate`` (synthetic CSVs), ``benchmark`` (full
dataset x d x method grid with ranking and comparison tests), ``stats``
(rank + test any profit matrix), ``sweep`` (incentive-sensitivity
tables). Exit codes: 0 success, 1 usage or config error, 2 a benchmark
cell failed. The CHURNOPT_OUT environment variable sets the default
output directory; flags override config-file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .data import load_dataset, save_dataset
from .stats import compare_methods, friedman_iman_davenport, rank_methods

__all__ = ["main"]


class _CliError(Exception):
    """Usage or configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        self.print_usage(sys.stderr)
        raise _CliError(message)


def _default_out() -> str:
    return os.environ.get("CHURNOPT_OUT", "churnopt_out")


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise _CliError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise _CliError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}")


def _spec_from_dict(raw: dict, default_seed: int = 0) -> ex.SyntheticSpec:
    known = {f.name for f in fields(ex.SyntheticSpec)}
    unknown = set(raw) - known
    if unknown:
        raise _CliError(f"unknown synthetic-spec key(s) {sorted(unknown)}")
    raw = dict(raw)
    raw.setdefault("seed", default_seed)
    try:
        return ex.SyntheticSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise _CliError(f"invalid synthetic spec: {exc}")


def _run_config(config: dict) -> ex.RunConfig:
    campaign = config.get("campaign", {})
    model = config.get("model", {})
    cv = config.get("cv", {})
    smote = config.get("smote", {})
    base = config.get("baselines", {})
    try:
        return ex.RunConfig(
            f=campaign.get("f", 1.36),
            gamma=campaign.get("gamma", 0.3),
            slope=campaign.get("slope", 10.0),
            d_grid=tuple(config.get("d_grid", ex.DEFAULT_D_GRID)),
            methods=tuple(config.get("methods", ex.DEFAULT_METHODS)),
            q=config.get("q", 2),
            hidden=model.get("hidden"),
            learning_rate=model.get("learning_rate", 0.01),
            epochs=model.get("epochs", 50),
            batch_size=model.get("batch_size"),
            cv_learning_rates=tuple(cv.get("learning_rates", ())),
            cv_epochs=tuple(cv.get("epochs", ())),
            cv_splits=cv.get("splits", 5),
            cv_seeds=cv.get("seeds", 10),
            smote_k=smote.get("k_neighbors", 5),
            smote_ratio=smote.get("ratio", 1.0),
            knn_k=base.get("knn_k", 5),
            cart_max_depth=base.get("cart_max_depth", 6),
            cart_min_leaf=base.get("cart_min_leaf", 5),
            class_threshold=config.get("class_threshold", 0.5),
            regret_net_accuracy=config.get("regret_net_accuracy", "threshold"),
            drop_below_break_even=config.get("drop_below_break_even", False),
            seed=config.get("seed", 0),
        )
    except (TypeError, ValueError) as exc:
        raise _CliError(f"invalid config: {exc}")


def _build_datasets(config: dict, cfg: ex.RunConfig):
    """Materialize (name, train, test) triples from the config."""
    spec = config.get("datasets", "bundled")
    out = []
    if spec == "bundled":
        for s in ex.bundled_specs(cfg.seed):
            train, test = ex.generate_synthetic(s)
            out.append((s.name, train, test))
        return out
    if isinstance(spec, dict) and "synthetic" in spec:
        for i, raw in enumerate(spec["synthetic"]):
            s = _spec_from_dict(raw, default_seed=cfg.seed + i)
            train, test = ex.generate_synthetic(s)
            out.append((s.name, train, test))
        return out
    if isinstance(spec, list):
        for entry in spec:
            for key in ("name", "train", "test"):
                if key not in entry:
                    raise _CliError(f"dataset entry missing key {key!r}: {entry}")
            try:
                train = load_dataset(entry["train"], name=f"{entry['name']}_train")
                test = load_dataset(entry["test"], name=f"{entry['name']}_test")
            except FileNotFoundError as exc:
                raise _CliError(f"dataset file not found: {exc.filename}")
            except ValueError as exc:
                raise _CliError(str(exc))
            out.append((entry["name"], train, test))
        return out
    raise _CliError("config key 'datasets' must be 'bundled', a {synthetic: [...]} block, or a list of files")


def _write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def cmd_generate(args) -> int:
    raw = _load_json(args.spec)
    if isinstance(raw, dict) and "specs" in raw:
        raw_specs = raw["specs"]
    elif isinstance(raw, list):
        raw_specs = raw
    else:
        raw_specs = [raw]
    specs = [_spec_from_dict(r, default_seed=i) for i, r in enumerate(raw_specs)]
    out = Path(args.out)
    for s in specs:
        train, test = ex.generate_synthetic(s)
        for ds, tag in ((train, "train"), (test, "test")):
            path = save_dataset(ds, out / f"{s.name}_{tag}.csv")
            print(f"wrote {path} ({len(ds)} rows)")
    return 0


def _benchmark_run(args):
    config = _load_json(args.config) if args.config else {}
    cfg = _run_config(config)
    datasets = _build_datasets(config, cfg)
    out = Path(args.out or config.get("out_dir") or _default_out())
    report = ex.run_benchmark(datasets, cfg, jobs=args.jobs)
    return config, cfg, datasets, out, report


def cmd_benchmark(args) -> int:
    _, cfg, datasets, out, report = _benchmark_run(args)
    names = [name for name, _, _ in datasets]
    cells_path = report.to_csv(out / "benchmark_cells.csv")
    summary = ex.benchmark_summary(report, cfg, names, alpha=args.alpha)
    summary_path = _write_json(summary, out / "summary.json")
    n_ok = sum(1 for c in report.cells if c.status == "ok")
    print(f"wrote {cells_path} ({n_ok}/{len(report.cells)} cells ok)")
    print(f"wrote {summary_path}")
    for c in report.failed:
        print(f"FAILED {c.dataset} d={c.d_label} {c.method}: {c.error}", file=sys.stderr)
    return 2 if report.failed else 0


def cmd_sweep(args) -> int:
    _, cfg, datasets, out, report = _benchmark_run(args)
    tables = ex.sensitivity_sweep(report, cfg)
    for stem, rows in tables.items():
        path = ex.write_table_csv(rows, out / f"{stem}.csv")
        print(f"wrote {path} ({len(rows)} rows)")
    for c in report.failed:
        print(f"FAILED {c.dataset} d={c.d_label} {c.method}: {c.error}", file=sys.stderr)
    return 2 if report.failed else 0


def _read_profit_matrix(path: str):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise _CliError(f"{path}: no such file")
    if not rows or len(rows[0]) < 2:
        raise _CliError(f"{path}: expected header 'dataset,<method>,...'")
    methods = [h.strip() for h in rows[0][1:]]
    datasets, values = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(methods) + 1:
            raise _CliError(f"{path}: line {i}: expected {len(methods) + 1} cells, got {len(row)}")
        datasets.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError:
            raise _CliError(f"{path}: line {i}: non-numeric profit value")
    if not datasets:
        raise _CliError(f"{path}: no data rows")
    return methods, datasets, np.asarray(values).T  # (methods x datasets)


def cmd_stats(args) -> int:
    methods, datasets, profits = _read_profit_matrix(args.profits)
    if len(methods) < 3:
        raise _CliError(f"need at least 3 methods for the Friedman test, got {len(methods)}")
    table = rank_methods(profits, methods, datasets)
    try:
        fr = friedman_iman_davenport(table.avg_ranks, len(datasets))
        friedman_block = {"chi2": fr.chi2, "f_stat": fr.f_stat, "p_value": fr.p_value, "df": [fr.df1, fr.df2]}
    except ValueError as exc:
        raise _CliError(str(exc))
    holm_report = compare_methods(table, args.alpha)

    print(f"Friedman (Iman-Davenport): F = {fr.f_stat:.4f}, p = {fr.p_value:.6f}")
    print(f"{'method':<16} {'avg rank':>9} {'avg profit':>11} {'p-value':>9} {'threshold':>10} outcome")
    order = np.argsort(table.avg_ranks, kind="stable")
    by_method = {c.method: c for c in holm_report.comparisons}
    for i in order:
        m = table.methods[i]
        c = by_method.get(m)
        stat = f"{c.p_value:>9.4f} {c.threshold:>10.4f} {'reject' if c.reject else 'not reject'}" if c else f"{'-':>9} {'-':>10} -"
        print(f"{m:<16} {table.avg_ranks[i]:>9.4f} {table.avg_profits[i]:>11.2f} {stat}")

    payload = {
        "alpha": args.alpha,
        "avg_ranks": {m: float(r) for m, r in zip(table.methods, table.avg_ranks)},
        "avg_profits": {m: float(p) for m, p in zip(table.methods, table.avg_profits)},
        "friedman": friedman_block,
        "holm": {
            "best": holm_report.best,
            "comparisons": [
                {
                    "method": c.method,
                    "avg_rank": c.avg_rank,
                    "z": c.z,
                    "p_value": c.p_value,
                    "threshold": c.threshold,
                    "outcome": "reject" if c.reject else "not reject",
                }
                for c in holm_report.comparisons
            ],
        },
    }
    path = _write_json(payload, Path(args.out or _default_out()) / "stats.json")
    print(f"wrote {path}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="churnopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test CSVs from a spec file")
    p.add_argument("--spec", required=True, help="JSON spec file: one spec, a list, or {'specs': [...]}")
    p.add_argument("--out", default=_default_out(), help="output directory")
    p.set_defaults(fn=cmd_generate)

    for name, fn, helptext in (
        ("benchmark", cmd_benchmark, "run the dataset x d x method grid and the comparison tests"),
        ("sweep", cmd_sweep, "run the grid and emit incentive-sensitivity tables"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON run config (defaults to the bundled synthetic run)")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel worker processes")
        if name == "benchmark":
            p.add_argument("--alpha", type=float, default=0.05, help="significance level")
        p.set_defaults(fn=fn)

    p = sub.add_parser("stats", help="rank a profit matrix CSV and run Friedman/Nemenyi/Holm")
    p.add_argument("--profits", required=True, help="CSV: header 'dataset,<method>,...', one row per dataset")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level")
    p.add_argument("--out", help="output directory for stats.json")
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
