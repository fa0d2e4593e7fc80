"""Benchmark protocol: synthetic data, tuning, and the dataset x d x method grid.

Every cell of the benchmark derives its random state from
(master seed, dataset index, d index, method index), so results are
reproducible byte for byte no matter how cells are scheduled.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .campaign import (
    CampaignParams,
    break_even_clv,
    midpoint,
    normalized_gap,
    optimal_total_profit,
    prescribe,
    total_profit,
)
from .data import Dataset, assign_segments, segment_edges, quantile_segments, standardize
from .metrics import accuracy, msp, targeted_fraction
from .models import (
    CartConfig,
    TrainConfig,
    cart_scores,
    default_hidden,
    fit_cart,
    fit_logistic,
    forward_batch,
    init_mlp,
    knn_scores,
    mean_loss,
    train,
)
from .smote import SmoteConfig, smote_balance
from .stats import compare_methods, friedman_iman_davenport, rank_methods

__all__ = [
    "SyntheticSpec",
    "generate_synthetic",
    "bundled_specs",
    "monte_carlo_cv",
    "RunConfig",
    "CellResult",
    "BenchmarkReport",
    "resolve_d",
    "run_benchmark",
    "benchmark_summary",
    "sensitivity_sweep",
    "METHODS",
    "DEFAULT_METHODS",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic churn dataset with individual CLVs.

    Features are unit Gaussians shifted by +-signal/2 along a random
    direction depending on the label. CLVs are log-normal with the given
    mean and log-space dispersion; clv_churn_corr in [-1, 1] correlates
    the CLV draw with the churn indicator (positive: churners tend to be
    the more valuable customers).
    """

    name: str
    n_train: int
    n_test: int
    n_features: int = 24
    churn_rate: float = 0.18
    clv_mean: float = 85.0
    clv_sigma: float = 0.8
    signal: float = 1.2
    clv_churn_corr: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_train < 10 or self.n_test < 10:
            raise ValueError("n_train and n_test must be >= 10")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if not 0 < self.churn_rate < 1:
            raise ValueError(f"churn_rate must lie in (0, 1), got {self.churn_rate}")
        if not self.clv_mean > 0:
            raise ValueError("clv_mean must be > 0")
        if self.clv_sigma < 0 or self.signal < 0:
            raise ValueError("clv_sigma and signal must be >= 0")
        if not -1 <= self.clv_churn_corr <= 1:
            raise ValueError("clv_churn_corr must lie in [-1, 1]")


def _draw_split(rng: np.random.Generator, spec: SyntheticSpec, n: int, direction: np.ndarray):
    rate, sigma, corr = spec.churn_rate, spec.clv_sigma, spec.clv_churn_corr
    for _ in range(100):
        churn = rng.random(n) < rate
        if 0 < churn.sum() < n:
            break
    else:
        raise ValueError(f"spec {spec.name!r}: could not draw both classes at rate {rate}")
    y = np.where(churn, 0, 1).astype(np.int64)

    X = rng.standard_normal((n, spec.n_features)) + np.where(churn, -0.5, 0.5)[:, None] * (
        spec.signal * direction
    )

    # standardized churn indicator drives the CLV-churn dependence
    s = (churn.astype(float) - rate) / np.sqrt(rate * (1 - rate))
    z = corr * s + np.sqrt(1 - corr**2) * rng.standard_normal(n)
    # choose mu so that E[clv] equals clv_mean exactly under this mixture
    s1 = (1 - rate) / np.sqrt(rate * (1 - rate))
    s0 = -rate / np.sqrt(rate * (1 - rate))
    moment = (
        rate * np.exp(sigma * corr * s1) + (1 - rate) * np.exp(sigma * corr * s0)
    ) * np.exp(sigma**2 * (1 - corr**2) / 2)
    mu = np.log(spec.clv_mean) - np.log(moment)
    clv = np.exp(mu + sigma * z)
    return X, y, clv


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Draw (train, test) datasets from one spec, reproducibly per seed."""
    rng = np.random.default_rng(spec.seed)
    direction = rng.standard_normal(spec.n_features)
    direction /= np.linalg.norm(direction)
    schema = tuple(f"f{i + 1}" for i in range(spec.n_features))
    parts = []
    for tag, n in (("train", spec.n_train), ("test", spec.n_test)):
        X, y, clv = _draw_split(rng, spec, n, direction)
        parts.append(
            Dataset(name=f"{spec.name}_{tag}", schema=schema, features=X, labels=y, clvs=clv)
        )
    return parts[0], parts[1]


# Sizes, churn rates and mean CLVs of the 12 bundled monthly specs.
_MONTHLY = (
    ("jan", 786, 197, 0.1699, 85.00),
    ("feb", 792, 198, 0.1697, 85.00),
    ("mar", 792, 198, 0.1717, 88.20),
    ("apr", 818, 205, 0.1632, 88.40),
    ("may", 844, 211, 0.1725, 86.80),
    ("jun", 889, 223, 0.1835, 91.20),
    ("jul", 924, 231, 0.1974, 91.00),
    ("aug", 930, 233, 0.1823, 92.20),
    ("sep", 938, 235, 0.1935, 90.60),
    ("oct", 961, 241, 0.2038, 87.40),
    ("nov", 972, 244, 0.2146, 87.20),
    ("dec", 962, 241, 0.1787, 89.40),
)


def bundled_specs(
    master_seed: int = 0,
    n_features: int = 24,
    signal: float = 1.2,
    clv_sigma: float = 0.8,
    clv_churn_corr: float = 0.25,
) -> list[SyntheticSpec]:
    """Twelve monthly synthetic specs sized like a year of customer bases."""
    seeds = np.random.SeedSequence(master_seed).generate_state(len(_MONTHLY))
    return [
        SyntheticSpec(
            name=name,
            n_train=n_train,
            n_test=n_test,
            n_features=n_features,
            churn_rate=rate,
            clv_mean=clv_mean,
            clv_sigma=clv_sigma,
            signal=signal,
            clv_churn_corr=clv_churn_corr,
            seed=int(seed),
        )
        for (name, n_train, n_test, rate, clv_mean), seed in zip(_MONTHLY, seeds)
    ]


def monte_carlo_cv(
    data: Dataset,
    grid: Sequence[tuple[float, int]],
    params: CampaignParams,
    base: TrainConfig | None = None,
    hidden: int | None = None,
    splits: int = 5,
    n_seeds: int = 10,
    seed: int = 0,
) -> TrainConfig:
    """Pick (learning rate, epochs) by repeated random 80/20 validation.

    Each grid cell is scored by the mean held-out loss over `splits`
    random splits times `n_seeds` training seeds (splits and seeds are
    shared across cells, so the comparison is paired). Ties break toward
    the smaller learning rate, then fewer epochs. Training failures are
    excluded from the mean, counted, and reported via a warning.
    """
    if not grid:
        raise ValueError("hyperparameter grid must be nonempty")
    base = base if base is not None else TrainConfig()
    if hidden is None:
        hidden = default_hidden(data.n_features)
    rng = np.random.default_rng(seed)
    n = len(data)
    n_val = max(1, round(0.2 * n))
    splits_idx = []
    for _ in range(splits):
        for _ in range(100):
            perm = rng.permutation(n)
            if len(np.unique(data.labels[perm[: n - n_val]])) == 2:
                splits_idx.append(perm)
                break
        else:
            raise ValueError("could not draw a two-class training part")
    run_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(splits * n_seeds)]

    failures = 0
    best: tuple[float, float, int] | None = None  # (score, lr, epochs)
    for lr, epochs in sorted(grid):
        cfg = replace(base, learning_rate=lr, epochs=int(epochs))
        losses = []
        for si, perm in enumerate(splits_idx):
            tr = data.subset(perm[: n - n_val])
            va = data.subset(perm[n - n_val :])
            for s in range(n_seeds):
                run_seed = run_seeds[si * n_seeds + s]
                try:
                    model = train(
                        init_mlp(data.n_features, hidden, seed=run_seed),
                        tr,
                        params,
                        replace(cfg, seed=run_seed),
                    )
                except RuntimeError:
                    failures += 1
                    continue
                losses.append(mean_loss(model, va, params, cfg.loss))
        score = float(np.mean(losses)) if losses else np.inf
        if best is None or score < best[0]:
            best = (score, lr, int(epochs))
    if failures:
        warnings.warn(f"{failures} training run(s) failed during cross-validation", stacklevel=2)
    return replace(base, learning_rate=best[1], epochs=best[2])


METHODS = (
    "regret_net",
    "xent_net",
    "logistic",
    "knn",
    "cart",
    "msp_logistic",
    "msp_knn",
    "msp_cart",
    "oracle",
    "constant",
)

DEFAULT_METHODS = (
    "regret_net",
    "xent_net",
    "logistic",
    "knn",
    "cart",
    "msp_logistic",
    "msp_knn",
    "msp_cart",
)

DEFAULT_D_GRID = ("clv/20", "clv/15", "clv/10", "clv/5", "clv/3")


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark run needs beyond the datasets themselves."""

    f: float = 1.36
    gamma: float = 0.3
    slope: float = 10.0
    d_grid: tuple = DEFAULT_D_GRID
    methods: tuple[str, ...] = DEFAULT_METHODS
    q: int = 2
    hidden: int | None = None
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int | None = None
    cv_learning_rates: tuple[float, ...] = ()  # nonempty grid enables tuning
    cv_epochs: tuple[int, ...] = ()
    cv_splits: int = 5
    cv_seeds: int = 10
    smote_k: int = 5
    smote_ratio: float = 1.0
    knn_k: int = 5
    cart_max_depth: int = 6
    cart_min_leaf: int = 5
    class_threshold: float = 0.5
    regret_net_accuracy: str = "threshold"  # or "midpoint": score decisions per customer
    drop_below_break_even: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; available: {METHODS}")
        if self.regret_net_accuracy not in ("threshold", "midpoint"):
            raise ValueError("regret_net_accuracy must be 'threshold' or 'midpoint'")
        if self.q < 1:
            raise ValueError("q must be >= 1")

    def campaign(self, d: float) -> CampaignParams:
        return CampaignParams(f=self.f, d=d, gamma=self.gamma, slope=self.slope)

    def train_config(self, seed: int, loss: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            loss=loss,
            seed=seed,
        )


def resolve_d(entry, train_clv_mean: float) -> float:
    """Turn a d-grid entry into euros: a number, or 'clv/x' for mean/x."""
    if isinstance(entry, str):
        text = entry.strip().lower()
        if not text.startswith("clv/"):
            raise ValueError(f"d entry {entry!r} must be a number or look like 'clv/20'")
        return train_clv_mean / float(text[4:])
    d = float(entry)
    if d <= 0:
        raise ValueError(f"d must be > 0, got {d}")
    return d


@dataclass(frozen=True)
class CellResult:
    dataset: str
    d_label: str
    d: float
    method: str
    profit: float = np.nan
    accuracy: float = np.nan
    gap: float = np.nan
    eta: float = np.nan
    optimal_profit: float = np.nan
    status: str = "ok"
    error: str = ""


def _cell_seeds(master_seed: int, di: int, dj: int, mi: int) -> tuple[int, int, int]:
    state = np.random.SeedSequence([master_seed, di, dj, mi]).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def _threshold_decisions(scores, t):
    return (np.asarray(scores) <= t).astype(np.int64)


def _accuracy_of_decisions(decisions, labels) -> float:
    return float(np.mean((np.asarray(decisions) == 1) == (np.asarray(labels) == 0)))


def _msp_decisions(train_scores, train_s: Dataset, test_scores, test_clvs, q, params):
    """Per-segment thresholds fitted on train, carried to test by CLV edges."""
    result = msp(train_scores, train_s.labels, train_s.clvs, q, params)
    edges = segment_edges(train_s.clvs, quantile_segments(train_s.clvs, q))
    seg = assign_segments(test_clvs, edges)
    return _threshold_decisions(test_scores, result.thresholds[seg])


def evaluate_cell(
    train_ds: Dataset,
    test_ds: Dataset,
    method: str,
    cfg: RunConfig,
    d: float,
    smote_seed: int,
    train_seed: int,
    cv_seed: int,
) -> tuple[np.ndarray, float]:
    """Decisions on the test split plus the model's accuracy for one cell."""
    params = cfg.campaign(d)
    train_s, test_s, _ = standardize(train_ds, test_ds)
    if cfg.drop_below_break_even:
        keep = np.flatnonzero(train_s.clvs > break_even_clv(params))
        if keep.size == 0:
            raise ValueError("no training customers above break-even CLV")
        train_s = train_s.subset(keep)

    if method == "oracle":
        scores = test_s.labels.astype(float)
        decisions = prescribe(scores, midpoint(params, test_s.clvs))
        return decisions, accuracy(scores, test_s.labels, cfg.class_threshold)

    if method == "constant":
        scores = np.full(len(test_s), 0.5)
        decisions = _threshold_decisions(scores, cfg.class_threshold)
        return decisions, accuracy(scores, test_s.labels, cfg.class_threshold)

    if method == "regret_net":
        tc = cfg.train_config(train_seed, "smooth-regret")
        if cfg.cv_learning_rates and cfg.cv_epochs:
            grid = [(lr, e) for lr in cfg.cv_learning_rates for e in cfg.cv_epochs]
            tc = replace(
                monte_carlo_cv(
                    train_s,
                    grid,
                    params,
                    base=tc,
                    hidden=cfg.hidden,
                    splits=cfg.cv_splits,
                    n_seeds=cfg.cv_seeds,
                    seed=cv_seed,
                ),
                seed=train_seed,
            )
        hidden = cfg.hidden if cfg.hidden is not None else default_hidden(train_s.n_features)
        model = train(init_mlp(train_s.n_features, hidden, seed=train_seed), train_s, params, tc)
        scores = forward_batch(model, test_s.features)
        decisions = prescribe(scores, midpoint(params, test_s.clvs))
        if cfg.regret_net_accuracy == "midpoint":
            return decisions, _accuracy_of_decisions(decisions, test_s.labels)
        return decisions, accuracy(scores, test_s.labels, cfg.class_threshold)

    # remaining methods train on the SMOTE-balanced split
    balanced = smote_balance(
        train_s, SmoteConfig(k_neighbors=cfg.smote_k, ratio=cfg.smote_ratio, seed=smote_seed)
    )

    if method == "xent_net":
        hidden = cfg.hidden if cfg.hidden is not None else default_hidden(balanced.n_features)
        model = train(
            init_mlp(balanced.n_features, hidden, seed=train_seed),
            balanced,
            params,
            cfg.train_config(train_seed, "cross-entropy"),
        )
        test_scores = forward_batch(model, test_s.features)
        train_scores = None
    elif method in ("logistic", "msp_logistic"):
        model = fit_logistic(balanced)
        test_scores = model.score_batch(test_s.features)
        train_scores = model.score_batch(train_s.features)
    elif method in ("knn", "msp_knn"):
        k = min(cfg.knn_k, len(balanced))
        test_scores = knn_scores(balanced, test_s.features, k)
        train_scores = knn_scores(balanced, train_s.features, k)
    elif method in ("cart", "msp_cart"):
        tree = fit_cart(balanced, CartConfig(cfg.cart_max_depth, cfg.cart_min_leaf))
        test_scores = cart_scores(tree, test_s.features)
        train_scores = cart_scores(tree, train_s.features)
    else:
        raise ValueError(f"unknown method {method!r}")

    if method.startswith("msp_"):
        decisions = _msp_decisions(train_scores, train_s, test_scores, test_s.clvs, cfg.q, params)
        return decisions, _accuracy_of_decisions(decisions, test_s.labels)
    decisions = _threshold_decisions(test_scores, cfg.class_threshold)
    return decisions, accuracy(test_scores, test_s.labels, cfg.class_threshold)


def _run_cell(args) -> CellResult:
    name, train_ds, test_ds, method, cfg, d_label, d, seeds = args
    try:
        decisions, acc = evaluate_cell(train_ds, test_ds, method, cfg, d, *seeds)
        params = cfg.campaign(d)
        profit = total_profit(decisions, test_ds.labels, params, test_ds.clvs)
        optimal = optimal_total_profit(test_ds.labels, params, test_ds.clvs)
        gap = normalized_gap(-optimal, -profit) if optimal != 0 else np.nan
        return CellResult(
            dataset=name,
            d_label=d_label,
            d=d,
            method=method,
            profit=profit,
            accuracy=acc,
            gap=gap,
            eta=targeted_fraction(decisions),
            optimal_profit=optimal,
        )
    except Exception as exc:  # isolate the cell, keep the run going
        return CellResult(
            dataset=name, d_label=d_label, d=d, method=method, status="failed", error=str(exc)
        )


@dataclass(frozen=True)
class BenchmarkReport:
    cells: tuple[CellResult, ...]

    @property
    def failed(self) -> tuple[CellResult, ...]:
        return tuple(c for c in self.cells if c.status != "ok")

    def profit_matrix(self, d_label: str, methods, datasets) -> np.ndarray:
        """(method x dataset) test profits for one d value; NaN if missing."""
        index = {(c.dataset, c.method): c for c in self.cells if c.d_label == d_label}
        out = np.full((len(methods), len(datasets)), np.nan)
        for i, m in enumerate(methods):
            for j, ds in enumerate(datasets):
                cell = index.get((ds, m))
                if cell is not None and cell.status == "ok":
                    out[i, j] = cell.profit
        return out

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["dataset", "d_label", "d", "method", "profit", "accuracy", "gap", "eta", "status"]
            )
            for c in self.cells:
                writer.writerow(
                    [
                        c.dataset,
                        c.d_label,
                        _fmt(c.d),
                        c.method,
                        _fmt(c.profit),
                        _fmt(c.accuracy),
                        _fmt(c.gap),
                        _fmt(c.eta),
                        c.status,
                    ]
                )
        return path


def _fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def run_benchmark(
    datasets: Sequence[tuple[str, Dataset, Dataset]],
    cfg: RunConfig,
    jobs: int = 1,
) -> BenchmarkReport:
    """Evaluate every (dataset, d, method) cell; failures never abort the run.

    Cells are independent jobs; with jobs > 1 they execute in a process
    pool. Per-cell seeding keeps the report identical either way.
    """
    tasks = []
    for di, (name, train_ds, test_ds) in enumerate(datasets):
        clv_mean = float(train_ds.clvs.mean())
        for dj, entry in enumerate(cfg.d_grid):
            d = resolve_d(entry, clv_mean)
            d_label = str(entry)
            for mi, method in enumerate(cfg.methods):
                seeds = _cell_seeds(cfg.seed, di, dj, mi)
                tasks.append((name, train_ds, test_ds, method, cfg, d_label, d, seeds))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks, chunksize=4))
    else:
        cells = [_run_cell(t) for t in tasks]
    return BenchmarkReport(cells=tuple(cells))


def benchmark_summary(report: BenchmarkReport, cfg: RunConfig, datasets_names, alpha: float = 0.05) -> dict:
    """Rank methods and run the comparison tests, separately per d value.

    Statistical blocks that cannot be computed (failed cells, degenerate
    statistics, k < 3) carry a note instead of aborting the summary.
    """
    methods = list(cfg.methods)
    summary: dict = {
        "methods": methods,
        "datasets": list(datasets_names),
        "failed_cells": [
            {"dataset": c.dataset, "d_label": c.d_label, "method": c.method, "error": c.error}
            for c in report.failed
        ],
        "per_d": {},
    }
    for entry in cfg.d_grid:
        d_label = str(entry)
        block: dict = {}
        profits = report.profit_matrix(d_label, methods, datasets_names)
        if np.isnan(profits).any():
            block["note"] = "skipped: missing or failed cells"
        else:
            table = rank_methods(profits, methods, datasets_names)
            block["avg_ranks"] = {m: float(r) for m, r in zip(methods, table.avg_ranks)}
            block["avg_profits"] = {m: float(p) for m, p in zip(methods, table.avg_profits)}
            try:
                fr = friedman_iman_davenport(table.avg_ranks, len(datasets_names))
                block["friedman"] = {
                    "chi2": fr.chi2,
                    "f_stat": fr.f_stat,
                    "p_value": fr.p_value,
                    "df": [fr.df1, fr.df2],
                }
            except ValueError as exc:
                block["friedman"] = {"note": str(exc)}
            holm_report = compare_methods(table, alpha)
            block["holm"] = {
                "best": holm_report.best,
                "alpha": alpha,
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
            }
        summary["per_d"][d_label] = block
    return summary


def sensitivity_sweep(report: BenchmarkReport, cfg: RunConfig) -> dict[str, list[dict]]:
    """Plot-ready tables: profit vs d, gap vs d, and per-dataset (eta, profit).

    Means ignore failed cells; a d value with no successful cell for a
    method yields no row.
    """
    methods = list(cfg.methods)
    by_method_d: dict[tuple[str, str], list[CellResult]] = {}
    for c in report.cells:
        if c.status == "ok":
            by_method_d.setdefault((c.method, c.d_label), []).append(c)

    profit_rows, gap_rows, eta_rows = [], [], []
    for entry in cfg.d_grid:
        d_label = str(entry)
        for m in methods:
            cells = by_method_d.get((m, d_label), [])
            if not cells:
                continue
            d_mean = float(np.mean([c.d for c in cells]))
            profit_rows.append(
                {
                    "d_label": d_label,
                    "d_mean": d_mean,
                    "method": m,
                    "mean_profit": float(np.mean([c.profit for c in cells])),
                }
            )
            gaps = [c.gap for c in cells if not np.isnan(c.gap)]
            if gaps:
                gap_rows.append(
                    {
                        "d_label": d_label,
                        "d_mean": d_mean,
                        "method": m,
                        "mean_gap": float(np.mean(gaps)),
                    }
                )
            for c in cells:
                eta_rows.append(
                    {
                        "dataset": c.dataset,
                        "d_label": d_label,
                        "d": c.d,
                        "method": m,
                        "eta": c.eta,
                        "profit": c.profit,
                    }
                )
    return {"profit_vs_d": profit_rows, "gap_vs_d": gap_rows, "eta_profit_vs_d": eta_rows}


def write_table_csv(rows: list[dict], path: str | Path) -> Path:
    """Write a list of homogeneous dicts as CSV with repr-stable floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if not rows:
            fh.write("")
            return path
        writer = csv.writer(fh)
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else str(v) for v in row.values()])
    return path
