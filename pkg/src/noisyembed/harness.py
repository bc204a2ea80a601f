"""Noise-rate sweep protocol: noisy runs against clean-subsample toplines.

Every cell (method, noise rate, seed) trains once on labels corrupted at rate
p and once on a clean random (1-p)-fraction of the same base dataset, then
evaluates both embeddings on true labels. Seeds are paired: all methods and
both arms of a cell share the base dataset, and the noisy/topline arms share
their training seed, so a p = 0 cell reproduces its topline exactly.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .datagen import SynthSpec, generate, subsample_clean
from .metrics import evaluate_embedding
from .noise import NoiseSpec, inject_noise
from .optimizer import TrainConfig, initialize_embeddings, train
from .risk import solve_marginal_bound, solve_triplet_bound
from .sampling import MinibatchSpec, estimate_skew
from .core import LossConfig
from .rng import derive_seed

__all__ = [
    "MethodSpec",
    "SweepConfig",
    "CellResult",
    "FailedCell",
    "SweepReport",
    "CSV_COLUMNS",
    "run_sweep",
    "emit_report",
    "write_cells_csv",
    "read_cells_csv",
    "sweep_config_to_json",
    "sweep_config_from_json",
    "default_sweep_config",
    "worker_count",
]

WORKERS_ENV = "NOISYEMBED_WORKERS"

CSV_COLUMNS = [
    "method",
    "p",
    "seed",
    "rec@1",
    "rec@10",
    "nmi",
    "topline_rec@1",
    "ratio",
    "eta",
    "p_star",
]


@dataclass(frozen=True)
class MethodSpec:
    """A (loss family, mining scheme) combination under sweep."""

    loss: str = "triplet"
    mining: str = "random_semi_hard"

    @property
    def name(self) -> str:
        return f"{self.loss}:{self.mining}"


@dataclass(frozen=True)
class SweepConfig:
    noise_rates: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    methods: tuple = (
        MethodSpec("triplet", "random_semi_hard"),
        MethodSpec("triplet", "fixed_semi_hard"),
        MethodSpec("marginal", "random_semi_hard"),
    )
    repeats: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthSpec = field(default_factory=SynthSpec)
    eval_ks: tuple = (1, 10)
    init_mode: str = "random_uniform_sphere"
    init_mix: float = 0.0

    def __post_init__(self):
        for p in self.noise_rates:
            if not 0.0 <= p < 1.0:
                raise ValueError(f"noise rate {p} outside [0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if 1 not in self.eval_ks or 10 not in self.eval_ks:
            raise ValueError("eval_ks must include 1 and 10 for the report columns")


def default_sweep_config() -> SweepConfig:
    return SweepConfig()


@dataclass(frozen=True)
class CellResult:
    """One sweep cell; ``eta`` holds the triplet mining skew for triplet
    methods and the gamma ratio for marginal methods."""

    method: str
    p: float
    seed: int
    rec1: float
    rec10: float
    nmi: float
    topline_rec1: float
    ratio: Optional[float]
    eta: float
    p_star: float


@dataclass(frozen=True)
class FailedCell:
    method: str
    p: float
    seed: int
    error: str


@dataclass
class SweepReport:
    config: SweepConfig
    cells: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def _cell_seeds(cfg: SweepConfig, method_idx: int, p_idx: int, seed_idx: int) -> dict:
    root = cfg.train.seed
    return {
        "data": derive_seed(cfg.data.seed, seed_idx),
        "noise": derive_seed(root, 1, seed_idx, p_idx),
        "subsample": derive_seed(root, 2, seed_idx, p_idx),
        # init/train/eval deliberately ignore the arm so a p=0 cell's two
        # arms run identically and the ratio is exactly 1
        "init": derive_seed(root, 3, seed_idx, p_idx, method_idx),
        "train": derive_seed(root, 4, seed_idx, p_idx, method_idx),
        "eval": derive_seed(root, 5, seed_idx, p_idx, method_idx),
    }


def _make_init(cfg: SweepConfig, pset, seed: int):
    features = pset.features if cfg.init_mode == "from_features" else None
    return initialize_embeddings(
        pset.n,
        cfg.data.d,
        mode=cfg.init_mode,
        seed=seed,
        features=features,
        mix_lambda=cfg.init_mix,
    )


def _train_and_eval(cfg: SweepConfig, pset, train_cfg: TrainConfig, seeds: dict):
    init = _make_init(cfg, pset, seeds["init"])
    result = train(pset, init, train_cfg)
    report = evaluate_embedding(
        result.state,
        pset.true_labels,
        pset.K,
        ks=cfg.eval_ks,
        seed=seeds["eval"],
    )
    return result, report


def _measure_skew(method: MethodSpec, result) -> float:
    if not result.selection_log.counts:
        return 1.0  # nothing was ever selected; no skew evidence
    if method.loss == "marginal":
        est = estimate_skew(result.selection_log, result.positive_log)
        return est.gamma if est.gamma is not None else 1.0
    return estimate_skew(result.selection_log).eta


def _run_cell(cfg: SweepConfig, method_idx: int, p_idx: int, seed_idx: int) -> CellResult:
    method = cfg.methods[method_idx]
    p = cfg.noise_rates[p_idx]
    seeds = _cell_seeds(cfg, method_idx, p_idx, seed_idx)
    base = generate(replace(cfg.data, seed=seeds["data"]))
    train_cfg = replace(
        cfg.train,
        seed=seeds["train"],
        loss=replace(cfg.train.loss, family=method.loss, mining=method.mining),
    )

    noisy = inject_noise(base, NoiseSpec(p=p, K=base.K, seed=seeds["noise"]))
    noisy_result, noisy_eval = _train_and_eval(cfg, noisy, train_cfg, seeds)

    topline = subsample_clean(base, 1.0 - p, seed=seeds["subsample"])
    _, topline_eval = _train_and_eval(cfg, topline, train_cfg, seeds)

    skew = _measure_skew(method, noisy_result)
    if method.loss == "marginal":
        p_star = solve_marginal_bound(base.K, skew).p_star
    else:
        p_star = solve_triplet_bound(base.K, skew).p_star

    rec1 = noisy_eval.recall_at[1]
    top1 = topline_eval.recall_at[1]
    return CellResult(
        method=method.name,
        p=p,
        seed=seed_idx,
        rec1=rec1,
        rec10=noisy_eval.recall_at[10],
        nmi=noisy_eval.nmi,
        topline_rec1=top1,
        ratio=(rec1 / top1) if top1 > 0 else None,
        eta=skew,
        p_star=p_star,
    )


def _cell_entry(args):
    cfg, mi, pi, si = args
    try:
        return _run_cell(cfg, mi, pi, si)
    except Exception as exc:  # a failed cell must not sink the sweep
        method = cfg.methods[mi]
        return FailedCell(
            method=method.name,
            p=cfg.noise_rates[pi],
            seed=si,
            error=f"{type(exc).__name__}: {exc}",
        )


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_sweep(cfg: SweepConfig, workers: Optional[int] = None) -> SweepReport:
    """Run every (method, noise rate, seed) cell; failures are recorded and
    the sweep continues. Results are merged in config order regardless of
    how many workers executed them."""
    tasks = [
        (cfg, mi, pi, si)
        for mi in range(len(cfg.methods))
        for pi in range(len(cfg.noise_rates))
        for si in range(cfg.repeats)
    ]
    n_workers = worker_count(workers)
    if n_workers == 1 or len(tasks) == 1:
        outcomes = [_cell_entry(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_cell_entry, tasks))
    cells = [o for o in outcomes if isinstance(o, CellResult)]
    failures = [o for o in outcomes if isinstance(o, FailedCell)]
    return SweepReport(config=cfg, cells=cells, failures=failures)


# --- report emission ---


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_cells_csv(path: str | Path, cells: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for c in cells:
            writer.writerow(
                [
                    c.method,
                    repr(float(c.p)),
                    c.seed,
                    repr(c.rec1),
                    repr(c.rec10),
                    repr(c.nmi),
                    repr(c.topline_rec1),
                    _fmt(c.ratio),
                    repr(c.eta),
                    repr(c.p_star),
                ]
            )


def read_cells_csv(path: str | Path) -> list:
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(
                CellResult(
                    method=row["method"],
                    p=float(row["p"]),
                    seed=int(row["seed"]),
                    rec1=float(row["rec@1"]),
                    rec10=float(row["rec@10"]),
                    nmi=float(row["nmi"]),
                    topline_rec1=float(row["topline_rec@1"]),
                    ratio=float(row["ratio"]) if row["ratio"] != "" else None,
                    eta=float(row["eta"]),
                    p_star=float(row["p_star"]),
                )
            )
    return cells


def _mean_se(values: list) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "se": None, "count": 0}
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "se": se, "count": int(arr.size)}


def summarize(report: SweepReport) -> dict:
    """Per-(method, p) means and standard errors plus ratio breakpoints
    (first noise rate where the mean ratio drops below 0.9)."""
    methods: dict = {}
    for cell in report.cells:
        by_p = methods.setdefault(cell.method, {})
        by_p.setdefault(cell.p, []).append(cell)
    summary_methods = {}
    breakpoints = {}
    for name, by_p in methods.items():
        rows = {}
        breakpoint_p = None
        for p in sorted(by_p):
            cells = by_p[p]
            row = {
                "rec@1": _mean_se([c.rec1 for c in cells]),
                "rec@10": _mean_se([c.rec10 for c in cells]),
                "nmi": _mean_se([c.nmi for c in cells]),
                "topline_rec@1": _mean_se([c.topline_rec1 for c in cells]),
                "ratio": _mean_se([c.ratio for c in cells]),
                "eta": _mean_se([c.eta for c in cells]),
                "p_star": _mean_se([c.p_star for c in cells]),
            }
            rows[repr(float(p))] = row
            mean_ratio = row["ratio"]["mean"]
            if breakpoint_p is None and mean_ratio is not None and mean_ratio < 0.9:
                breakpoint_p = p
        summary_methods[name] = rows
        breakpoints[name] = breakpoint_p
    return {
        "methods": summary_methods,
        "breakpoints": breakpoints,
        "failures": [
            {"method": f.method, "p": f.p, "seed": f.seed, "error": f.error}
            for f in report.failures
        ],
        "n_cells": len(report.cells),
    }


def sweep_config_to_json(cfg: SweepConfig) -> dict:
    return {
        "noise_rates": list(cfg.noise_rates),
        "methods": [{"loss": m.loss, "mining": m.mining} for m in cfg.methods],
        "repeats": cfg.repeats,
        "data": {
            "K": cfg.data.K,
            "per_class": cfg.data.per_class,
            "d": cfg.data.d,
            "spread": cfg.data.spread,
            "seed": cfg.data.seed,
        },
        "train": {
            "steps": cfg.train.steps,
            "learning_rate": cfg.train.learning_rate,
            "seed": cfg.train.seed,
            "snapshot_every": cfg.train.snapshot_every,
            "minibatch": {
                "classes_per_batch": cfg.train.minibatch.classes_per_batch,
                "samples_per_class": cfg.train.minibatch.samples_per_class,
                "seed": cfg.train.minibatch.seed,
            },
            "loss": {
                "family": cfg.train.loss.family,
                "hinged": cfg.train.loss.hinged,
                "alpha": cfg.train.loss.alpha,
                "beta": cfg.train.loss.beta,
                "mining": cfg.train.loss.mining,
            },
        },
        "eval_ks": list(cfg.eval_ks),
        "init_mode": cfg.init_mode,
        "init_mix": cfg.init_mix,
    }


def sweep_config_from_json(doc: dict) -> SweepConfig:
    """Build a sweep config from a JSON document; missing keys keep defaults."""
    defaults = SweepConfig()
    data_doc = doc.get("data", {})
    data = SynthSpec(
        K=data_doc.get("K", defaults.data.K),
        per_class=data_doc.get("per_class", defaults.data.per_class),
        d=data_doc.get("d", defaults.data.d),
        spread=data_doc.get("spread", defaults.data.spread),
        seed=data_doc.get("seed", defaults.data.seed),
    )
    train_doc = doc.get("train", {})
    mb_doc = train_doc.get("minibatch", {})
    loss_doc = train_doc.get("loss", {})
    train = TrainConfig(
        steps=train_doc.get("steps", defaults.train.steps),
        learning_rate=train_doc.get("learning_rate", defaults.train.learning_rate),
        seed=train_doc.get("seed", defaults.train.seed),
        snapshot_every=train_doc.get("snapshot_every", defaults.train.snapshot_every),
        minibatch=MinibatchSpec(
            classes_per_batch=mb_doc.get("classes_per_batch", 12),
            samples_per_class=mb_doc.get("samples_per_class", 5),
            seed=mb_doc.get("seed", 0),
        ),
        loss=LossConfig(
            family=loss_doc.get("family", "triplet"),
            hinged=loss_doc.get("hinged", True),
            alpha=loss_doc.get("alpha", 0.2),
            beta=loss_doc.get("beta", 1.4),
            mining=loss_doc.get("mining", "random_semi_hard"),
        ),
    )
    methods = tuple(
        MethodSpec(loss=m["loss"], mining=m["mining"])
        for m in doc.get("methods", [{"loss": m.loss, "mining": m.mining} for m in defaults.methods])
    )
    return SweepConfig(
        noise_rates=tuple(doc.get("noise_rates", defaults.noise_rates)),
        methods=methods,
        repeats=doc.get("repeats", defaults.repeats),
        train=train,
        data=data,
        eval_ks=tuple(doc.get("eval_ks", defaults.eval_ks)),
        init_mode=doc.get("init_mode", defaults.init_mode),
        init_mix=doc.get("init_mix", defaults.init_mix),
    )


def emit_report(report: SweepReport, out_dir: str | Path, figures: bool = True) -> dict:
    """Write cells.csv and summary.json (and figures) under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "cells.csv"
    write_cells_csv(csv_path, report.cells)
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summarize(report), indent=2, sort_keys=True) + "\n"
    )
    paths = {"cells": csv_path, "summary": summary_path}
    if figures:
        from .figures import render_figures

        paths["figures"] = render_figures(report.cells, out)
    return paths
