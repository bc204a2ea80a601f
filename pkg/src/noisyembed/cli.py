"""Command-line interface.

Subcommands: gen, noise-calc, bound, train, eval, sweep, verify, plot.
All structured output is JSON on stdout or files under a target directory;
the sweep exits nonzero iff any cell failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import LossConfig, load_point_set, save_point_set
from .datagen import SynthSpec, generate
from .harness import (
    MethodSpec,
    SweepConfig,
    emit_report,
    read_cells_csv,
    run_sweep,
)
from .metrics import evaluate_embedding
from .noise import NoiseSpec, inject_noise, monte_carlo_pair_noise, pair_noise_rates
from .optimizer import TrainConfig, initialize_embeddings, train, write_training_log
from .risk import solve_marginal_bound, solve_triplet_bound
from .sampling import MinibatchSpec
from .verify import run_all

__all__ = ["main", "build_parser"]


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_gen(args) -> int:
    spec = SynthSpec(
        K=args.K, per_class=args.per_class, d=args.d, spread=args.spread, seed=args.seed
    )
    pset = generate(spec)
    save_point_set(args.out, pset)
    print(f"wrote {pset.n} samples in {spec.K} classes to {args.out}")
    return 0


def _cmd_noise_calc(args) -> int:
    spec = NoiseSpec(p=args.p, K=args.K, seed=args.seed)
    rates = pair_noise_rates(spec)
    doc = {"p": args.p, "K": args.K, "q_neg": rates.q_neg, "q_pos": rates.q_pos}
    if args.trials:
        mc = monte_carlo_pair_noise(spec, args.trials)
        doc["empirical"] = {
            "q_neg": mc.q_neg,
            "q_pos": mc.q_pos,
            "trials": args.trials,
        }
    _emit(doc, args.out)
    return 0


def _cmd_bound(args) -> int:
    if args.loss == "triplet":
        if args.eta is None:
            raise SystemExit("--eta is required for the triplet bound")
        res = solve_triplet_bound(args.K, args.eta)
    else:
        if args.gamma is None:
            raise SystemExit("--gamma is required for the marginal bound")
        res = solve_marginal_bound(args.K, args.gamma)
    p_star = res.p_star if args.exact else res.asymptotic
    _emit(
        {"p_star": p_star, "asymptotic": res.asymptotic, "exact": bool(args.exact)},
        args.out,
    )
    return 0


def _loss_config(args) -> LossConfig:
    return LossConfig(
        family=args.loss,
        hinged=not args.unhinged,
        alpha=args.alpha,
        beta=args.beta,
        mining=args.mining,
    )


def _cmd_train(args) -> int:
    pset = load_point_set(args.data)
    if args.p > 0:
        pset = inject_noise(pset, NoiseSpec(p=args.p, K=pset.K, seed=args.seed))
    if args.init == "from_features" and pset.features is None:
        raise SystemExit("dataset JSON carries no vectors for feature initialization")
    d = args.d or (pset.features.shape[1] if pset.features is not None else 16)
    init = initialize_embeddings(
        pset.n,
        d,
        mode=args.init,
        seed=args.seed,
        features=pset.features if args.init == "from_features" else None,
        mix_lambda=args.mix_lambda,
    )
    cfg = TrainConfig(
        steps=args.steps,
        learning_rate=args.lr,
        minibatch=MinibatchSpec(
            classes_per_batch=args.classes_per_batch,
            samples_per_class=args.samples_per_class,
        ),
        loss=_loss_config(args),
        seed=args.seed,
    )
    result = train(pset, init, cfg)
    save_point_set(args.out, pset, vectors=result.state.vectors)
    if args.log:
        write_training_log(args.log, result.log)
    last = result.log[-1].risk if result.log else 0.0
    print(f"trained {cfg.steps} steps; final batch risk {last:.6f}; wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    pset = load_point_set(args.emb)
    if pset.features is None:
        raise SystemExit("embedding JSON carries no vectors")
    ks = sorted(int(k) for k in args.ks.split(","))
    report = evaluate_embedding(
        pset.features, pset.true_labels, pset.K, ks=ks, seed=args.seed
    )
    _emit(
        {
            "recall_at": {str(k): v for k, v in report.recall_at.items()},
            "nmi": report.nmi,
            "kmeans_inertia": report.kmeans_inertia,
        },
        args.out,
    )
    return 0


def _sweep_config_from_file(path: str) -> SweepConfig:
    from .harness import sweep_config_from_json

    return sweep_config_from_json(json.loads(Path(path).read_text()))


def _cmd_sweep(args) -> int:
    cfg = _sweep_config_from_file(args.config)
    report = run_sweep(cfg, workers=args.workers)
    paths = emit_report(report, args.out, figures=not args.no_figures)
    print(f"wrote {paths['cells']} ({len(report.cells)} cells, {len(report.failures)} failed)")
    return 0 if report.ok else 1


def _cmd_verify(args) -> int:
    report = run_all(seed=args.seed)
    _emit(report.to_json_dict(), args.out)
    return 0 if report.passed else 1


def _cmd_plot(args) -> int:
    from .figures import render_figures

    cells = read_cells_csv(args.cells)
    paths = render_figures(cells, args.out)
    for path in paths:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisyembed",
        description="Label-noise tolerance laboratory for embedding losses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset JSON")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--spread", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("noise-calc", help="pair flip rates for (p, K)")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_noise_calc)

    p = sub.add_parser("bound", help="noise tolerance bound")
    p.add_argument("--loss", choices=("triplet", "marginal"), required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--exact", action="store_true", help="solve the finite-K condition")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("train", help="train an embedding on a dataset JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="training log CSV path")
    p.add_argument("--p", type=float, default=0.0, help="label noise rate to inject")
    p.add_argument("--loss", choices=("triplet", "marginal"), default="triplet")
    p.add_argument(
        "--mining",
        choices=("random_semi_hard", "fixed_semi_hard", "exhaustive"),
        default="random_semi_hard",
    )
    p.add_argument("--unhinged", action="store_true")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=1.4)
    p.add_argument("--steps", type=int, default=600)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--d", type=int, default=None, help="embedding dimension")
    p.add_argument("--classes-per-batch", type=int, default=12)
    p.add_argument("--samples-per-class", type=int, default=5)
    p.add_argument("--init", choices=("random_uniform_sphere", "from_features"),
                   default="random_uniform_sphere")
    p.add_argument("--mix-lambda", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate an embedding JSON on true labels")
    p.add_argument("--emb", required=True)
    p.add_argument("--ks", default="1,10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run a noise-rate sweep from a config file")
    p.add_argument("config", help="sweep config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plot", help="render figures from an emitted cells CSV")
    p.add_argument("--cells", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
