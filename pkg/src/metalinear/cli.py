"""Command-line front end.

Subcommands::

    metalinear gen        --kind meta|fewshot  write a synthetic dataset CSV
    metalinear estimate   --estimator mom|sigma_f|g  write an estimate matrix CSV
    metalinear optrep     write the optimal weighting matrix CSV
    metalinear risk       print Monte Carlo / analytic / dc risk estimates
    metalinear experiment fig1b|fig3|fig4|fig5|scaling  run a sweep, write CSV

Common flags: --config PATH (flat key=value file, see config.py for the
grammar), --seed U64, --out PATH, --trials N, --variant main|appendix,
--describe (print the resolved config as JSON and exit).

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
nonconvergence or a divergent formula evaluation.

Dataset CSV column order (written by ``gen``, parsed by io.py)::

    record, task_index, sample_index, y, x0, ..., x{d-1}

with one ``task_vector`` row per task (x-columns hold the coefficients,
sample_index = -1, y = 0.0) followed by its ``sample`` rows.  Matrix CSVs
(covariances, estimates, weightings) are plain rows of comma-separated
floats after ``# key=value`` metadata comments.  Result CSVs have the
header ``sweep_value,method,value,stderr,seed`` except fig4, which pins
``iota,err_opnorm,stderr,seeds``.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments as exp
from .config import ConfigError, default_config, resolve_config
from .datagen import ProblemSpec, gen_few_shot, gen_meta_train
from .estimators import g_hat, mom_m_hat, sigma_f_hat
from .io import (
    ResultRow,
    write_few_shot_csv,
    write_matrix_csv,
    write_meta_train_csv,
    write_results_csv,
)
from .linalg import CovarianceModel, ValidationError
from .optrep import NonconvergenceError, RobustBox, compute_optimal_rep
from .linalg import sqrt_spd
from .risk import (
    DivergenceError,
    analytic_risk,
    canonical_cov,
    compute_reduction,
    dc_predict,
    monte_carlo_risk,
    theta_from_lambda_sq,
)

_RUNNERS = {
    "fig1b": exp.run_fig1b,
    "fig3": exp.run_fig3,
    "fig4": exp.run_fig4,
    "fig5": exp.run_fig5,
    "scaling": exp.run_scaling,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default=None, help="output path")
    parser.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    parser.add_argument(
        "--variant", choices=["main", "appendix"], default=None,
        help="analytic risk variant",
    )
    parser.add_argument(
        "--describe", action="store_true",
        help="print the resolved config as JSON and exit",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metalinear")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    p_gen.add_argument("--kind", choices=["meta", "fewshot"], default="meta")
    _add_common(p_gen)

    p_est = sub.add_parser("estimate", help="run an estimator on generated data")
    p_est.add_argument(
        "--estimator", choices=["mom", "sigma_f", "g"], default="mom"
    )
    _add_common(p_est)

    p_opt = sub.add_parser("optrep", help="compute the optimal weighting matrix")
    p_opt.add_argument("--theta-lower", type=float, default=None, dest="theta_lower")
    _add_common(p_opt)

    p_risk = sub.add_parser("risk", help="evaluate few-shot risk estimates")
    _add_common(p_risk)

    p_exp = sub.add_parser("experiment", help="run a named experiment sweep")
    p_exp.add_argument("name", choices=sorted(_RUNNERS))
    _add_common(p_exp)

    return parser


def _resolve(args: argparse.Namespace, name: str):
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "trials": args.trials,
        "variant": args.variant,
    }
    if getattr(args, "theta_lower", None) is not None:
        overrides["theta_lower"] = args.theta_lower
    return resolve_config(name, file_path=args.config, overrides=overrides)


def _spec_from(cfg) -> ProblemSpec:
    return ProblemSpec(
        feature_cov=CovarianceModel.from_spectrum(cfg.feature_eigvals()),
        task_cov=CovarianceModel.from_spectrum(cfg.task_eigvals()),
        noise_sd=cfg.noise_sd,
    )


def _cmd_gen(args) -> int:
    cfg = _resolve(args, "adhoc")
    if args.describe:
        print(cfg.describe())
        return 0
    out = cfg.out or f"dataset_{args.kind}.csv"
    spec = _spec_from(cfg)
    if args.kind == "meta":
        data = gen_meta_train(spec, cfg.T, cfg.n1, cfg.seed)
        write_meta_train_csv(out, data, {"sigma": cfg.noise_sd, "seed": cfg.seed})
    else:
        data = gen_few_shot(spec, cfg.n2, cfg.seed)
        write_few_shot_csv(out, data, {"sigma": cfg.noise_sd, "seed": cfg.seed})
    print(f"wrote {out}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _resolve(args, "adhoc")
    if args.describe:
        print(cfg.describe())
        return 0
    out = cfg.out or f"estimate_{args.estimator}.csv"
    data = gen_meta_train(_spec_from(cfg), cfg.T, cfg.n1, cfg.seed)
    if args.estimator == "mom":
        mat = mom_m_hat(data).m_hat
    elif args.estimator == "sigma_f":
        mat = sigma_f_hat(data).matrix
    else:
        mat = g_hat(data)[1]
    write_matrix_csv(out, mat, {"estimator": args.estimator, "seed": cfg.seed,
                                "T": cfg.T, "n1": cfg.n1})
    print(f"wrote {out}")
    return 0


def _cmd_optrep(args) -> int:
    cfg = _resolve(args, "adhoc")
    if args.describe:
        print(cfg.describe())
        return 0
    out = cfg.out or "weighting.csv"
    spec = _spec_from(cfg)
    ttil = canonical_cov(spec.feature_cov, spec.task_cov)
    box = (
        RobustBox.from_lower(cfg.theta_lower, cfg.d, cfg.n2)
        if cfg.theta_lower is not None
        else None
    )
    w = compute_optimal_rep(
        cfg.R or cfg.d, spec.feature_cov, ttil, cfg.noise_sd, cfg.n2,
        box=box, variant=cfg.variant,
    )
    write_matrix_csv(out, w.matrix, {"R": cfg.R or cfg.d, "n2": cfg.n2})
    print(f"wrote {out}")
    return 0


def _cmd_risk(args) -> int:
    cfg = _resolve(args, "adhoc")
    if args.describe:
        print(cfg.describe())
        return 0
    spec = _spec_from(cfg)
    ttil = canonical_cov(spec.feature_cov, spec.task_cov)
    R = cfg.R or cfg.d
    w = compute_optimal_rep(
        R, spec.feature_cov, ttil, cfg.noise_sd, cfg.n2, variant=cfg.variant
    )
    mc = monte_carlo_risk(spec, w, cfg.n2, cfg.trials, cfg.seed)
    red = compute_reduction(R, spec.feature_cov, ttil, cfg.noise_sd)
    lam_sq = np.sum((sqrt_spd(spec.feature_cov) @ w.matrix) ** 2, axis=0)
    prof = theta_from_lambda_sq(lam_sq, cfg.n2)
    analytic = analytic_risk(
        prof, red.ttil_diag, red.sigma_R, variant=cfg.variant, total=True
    )
    _, dc = dc_predict(lam_sq, np.sqrt(red.ttil_diag), cfg.n2, red.sigma_R)
    print(f"monte_carlo: {mc.value:.6g} (stderr {mc.stderr:.3g})")
    print(f"analytic_{cfg.variant} (total): {analytic.value:.6g}")
    print(f"dc (excess, task-averaged coefficients): {dc.value:.6g}")
    if cfg.out:
        write_results_csv(
            cfg.out,
            [
                ResultRow(float(R), "monte_carlo", mc.value, mc.stderr, 0.0, cfg.seed),
                ResultRow(float(R), analytic.method, analytic.value, 0.0, 0.0, cfg.seed),
                ResultRow(float(R), "dc", dc.value, 0.0, 0.0, cfg.seed),
            ],
            exp.csv_metadata(cfg),
        )
        print(f"wrote {cfg.out}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _resolve(args, args.name)
    if args.describe:
        print(cfg.describe())
        return 0
    rows = _RUNNERS[args.name](cfg)
    out = cfg.out or f"{args.name}.csv"
    meta = exp.csv_metadata(cfg)
    if args.name == "fig4":
        meta.update({"T": cfg.T, "n1": cfg.n1, "note": "nominal T=N=100 run as T=50,n1=2"})
        write_results_csv(
            out,
            [
                ResultRow(r.sweep_value, r.method, r.value, r.stderr,
                          r.wall_time_ms, cfg.est_seeds)
                for r in rows
            ],
            meta,
            columns=("sweep_value", "value", "stderr", "seed"),
        )
        # pinned fig4 header names
        _rewrite_header(out, "sweep_value,value,stderr,seed",
                        ",".join(exp.FIG4_COLUMNS))
    else:
        write_results_csv(out, rows, meta)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _rewrite_header(path: str, old: str, new: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text.replace(old, new, 1))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "estimate": _cmd_estimate,
        "optrep": _cmd_optrep,
        "risk": _cmd_risk,
        "experiment": _cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonconvergenceError, DivergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
