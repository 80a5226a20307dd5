"""Seeded experiment runners reproducing the synthetic sweeps.

Each runner is a pure function of its config: rerunning with the same
config yields identical rows (and byte-identical CSV through io.py).
Runners enforce their documented trend post-conditions and raise
ExperimentPostconditionError on violation.
"""

from __future__ import annotations

import time

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_spectrum
from .datagen import ProblemSpec, gen_meta_train
from .estimators import mom_m_hat, task_average_b_hat
from .interpolator import EigenWeighting
from .io import ResultRow
from .linalg import CovarianceModel, Subspace, principal_angle_sin, psd_clip
from .optrep import (
    RobustBox,
    compute_optimal_rep,
    e2e_bound,
    solve_theta_star,
    weighting_from_profile,
)
from .risk import (
    analytic_risk,
    canonical_cov,
    compute_reduction,
    monte_carlo_risk_paired,
    theta_from_lambda_sq,
)
from .rng import substream

__all__ = [
    "ExperimentPostconditionError",
    "run_fig1b",
    "run_fig3",
    "run_fig4",
    "run_fig5",
    "run_scaling",
    "csv_metadata",
    "FIG4_COLUMNS",
]

FIG4_COLUMNS = ("iota", "err_opnorm", "stderr", "seeds")


class ExperimentPostconditionError(AssertionError):
    """A runner's documented trend assertion failed."""


def csv_metadata(cfg: ExperimentConfig) -> dict:
    return {
        "experiment": cfg.name,
        "d": cfg.d,
        "n2": cfg.n2,
        "noise_sd": cfg.noise_sd,
        "seed": cfg.seed,
        "variant": cfg.variant,
        "kappa_bar": cfg.d / cfg.n2,
    }


def _spec(cfg: ExperimentConfig) -> ProblemSpec:
    return ProblemSpec(
        feature_cov=CovarianceModel.from_spectrum(cfg.feature_eigvals()),
        task_cov=CovarianceModel.from_spectrum(cfg.task_eigvals()),
        noise_sd=cfg.noise_sd,
    )


def _bilevel_with_low(template: str, d: int, low: float) -> np.ndarray:
    """Replace the low level of a bilevel template with the sweep value."""
    if not template.startswith("bilevel:"):
        raise ConfigError(
            f"iota sweeps need a bilevel spectrum template, got {template!r}"
        )
    ch, vh, cl, _ = template[len("bilevel:"):].split(",")
    return parse_spectrum(f"bilevel:{ch},{vh},{cl},{low!r}", d)


def _mc_seed(cfg: ExperimentConfig, *labels) -> int:
    return int(substream(cfg.seed, *labels).integers(2**63))


def run_fig1b(cfg: ExperimentConfig) -> list[ResultRow]:
    """Optimal vs projection-only weighting: Monte Carlo and analytic curves.

    Emits per (R, method): mc_{optimal,identity}, and both analytic
    variants (with the equivalent-noise floor included) for each weighting.
    """
    spec = _spec(cfg)
    ttil = canonical_cov(spec.feature_cov, spec.task_cov)
    rows: list[ResultRow] = []
    for r_val in cfg.sweep_values:
        t0 = time.perf_counter()
        R = int(r_val)
        red = compute_reduction(R, spec.feature_cov, ttil, cfg.noise_sd)
        th_opt = solve_theta_star(
            red.ttil_diag, cfg.n2, red.sigma_R, variant=cfg.variant
        )
        w_opt = weighting_from_profile(red, th_opt)
        w_proj = EigenWeighting.projection(red.basis_U1)
        th_id = theta_from_lambda_sq(np.ones(R), cfg.n2)
        mc_opt, mc_id = monte_carlo_risk_paired(
            spec, [w_opt, w_proj], cfg.n2, cfg.trials, _mc_seed(cfg, "fig1b", R)
        )
        elapsed = (time.perf_counter() - t0) * 1e3
        for method, est in (("mc_optimal", mc_opt), ("mc_identity", mc_id)):
            rows.append(
                ResultRow(r_val, method, est.value, est.stderr, elapsed, cfg.seed)
            )
        for label, prof in (("optimal", th_opt), ("identity", th_id)):
            for variant in ("main", "appendix"):
                est = analytic_risk(
                    prof, red.ttil_diag, red.sigma_R, variant=variant, total=True
                )
                rows.append(
                    ResultRow(
                        r_val,
                        f"analytic_{variant}_{label}",
                        est.value,
                        0.0,
                        elapsed,
                        cfg.seed,
                    )
                )
    return rows


def _r_grid(n2: int, d: int) -> list[int]:
    start = 5 * (n2 // 5 + 1)  # smallest multiple of 5 strictly above n2
    grid = list(range(start, d + 1, 5))
    if not grid or grid[-1] != d:
        grid.append(d)
    return grid


def run_fig3(cfg: ExperimentConfig) -> list[ResultRow]:
    """Analytic risk of the optimal weighting over R, for several task tails.

    Asserts the documented trends: risk nonincreasing in R past n2 for each
    iota, and smaller iota gives smaller risk at R = d.
    """
    sf = CovarianceModel.from_spectrum(cfg.feature_eigvals())
    r_grid = _r_grid(cfg.n2, cfg.d)
    rows: list[ResultRow] = []
    at_full_dim: dict[float, float] = {}
    for iota in cfg.sweep_values:
        ttil = CovarianceModel.from_spectrum(
            _bilevel_with_low(cfg.task_spectrum, cfg.d, float(iota))
        )
        values = []
        for R in r_grid:
            t0 = time.perf_counter()
            red = compute_reduction(R, sf, ttil, cfg.noise_sd)
            theta = solve_theta_star(
                red.ttil_diag, cfg.n2, red.sigma_R, variant=cfg.variant
            )
            est = analytic_risk(
                theta, red.ttil_diag, red.sigma_R, variant=cfg.variant, total=True
            )
            values.append(est.value)
            rows.append(
                ResultRow(
                    float(R),
                    f"analytic_{cfg.variant}_iota={iota:g}",
                    est.value,
                    0.0,
                    (time.perf_counter() - t0) * 1e3,
                    cfg.seed,
                )
            )
        at_full_dim[float(iota)] = values[-1]
        diffs = np.diff(values)
        if np.any(diffs > 1e-7 * np.maximum(1.0, np.abs(values[:-1]))):
            raise ExperimentPostconditionError(
                f"risk not nonincreasing in R at iota={iota}: {values}"
            )
    pairs = sorted(at_full_dim.items())
    for (i1, v1), (i2, v2) in zip(pairs, pairs[1:]):
        if i2 > i1 and v2 <= v1:
            raise ExperimentPostconditionError(
                f"risk at R=d not increasing in iota: {pairs}"
            )
    return rows


def run_fig4(cfg: ExperimentConfig) -> list[ResultRow]:
    """Seed-averaged operator-norm error of the split estimator vs iota.

    iota scales the low level of the *feature* spectrum.  Asserts the
    nondecreasing trend with err(max iota) > err(0) when 0 is swept.
    """
    task_vals = parse_spectrum(cfg.task_spectrum, cfg.d)
    st = CovarianceModel.from_spectrum(task_vals)
    rows: list[ResultRow] = []
    means: list[float] = []
    for iota in cfg.sweep_values:
        t0 = time.perf_counter()
        sf_vals = _bilevel_with_low(cfg.feature_spectrum, cfg.d, float(iota))
        sf = CovarianceModel.from_spectrum(sf_vals)
        spec = ProblemSpec(feature_cov=sf, task_cov=st, noise_sd=cfg.noise_sd)
        m_true = sf.matrix @ st.matrix @ sf.matrix
        errs = np.empty(cfg.est_seeds)
        for s in range(cfg.est_seeds):
            data = gen_meta_train(
                spec, cfg.T, cfg.n1, _mc_seed(cfg, "fig4", f"{iota:g}", s)
            )
            errs[s] = np.linalg.norm(mom_m_hat(data).m_hat - m_true, 2)
        means.append(float(errs.mean()))
        rows.append(
            ResultRow(
                float(iota),
                "mom_err_opnorm",
                float(errs.mean()),
                float(errs.std(ddof=1) / np.sqrt(cfg.est_seeds)),
                (time.perf_counter() - t0) * 1e3,
                cfg.seed,
            )
        )
    if any(b < a - 1e-12 for a, b in zip(means, means[1:])):
        raise ExperimentPostconditionError(f"estimator error not nondecreasing: {means}")
    sweep = list(cfg.sweep_values)
    if 0.0 in sweep and means[sweep.index(0.0)] >= means[-1]:
        raise ExperimentPostconditionError(
            f"err(iota={sweep[-1]}) = {means[-1]} not above err(0) = {means[sweep.index(0.0)]}"
        )
    return rows


def run_fig5(cfg: ExperimentConfig) -> list[ResultRow]:
    """Full pipeline: Phase-1 estimate -> boxed optimal weighting -> MC risk.

    Per R: oracle weighting risk (true canonical covariance) and the
    seed-averaged risk of the weighting computed from the split estimate,
    at the base N = T n1 and at every multiple in cfg.n_scales, plus the
    end-to-end bound evaluated at the measured estimation error.
    """
    if cfg.theta_lower is None:
        raise ConfigError("fig5 requires theta_lower")
    spec = _spec(cfg)
    m_true = (
        spec.feature_cov.matrix @ spec.task_cov.matrix @ spec.feature_cov.matrix
    )
    ttil = canonical_cov(spec.feature_cov, spec.task_cov)
    box = RobustBox.from_lower(cfg.theta_lower, cfg.d, cfg.n2)
    rows: list[ResultRow] = []

    oracle_by_r: dict[int, tuple[float, float]] = {}
    for r_val in cfg.sweep_values:
        R = int(r_val)
        t0 = time.perf_counter()
        w_star = compute_optimal_rep(
            R, spec.feature_cov, ttil, cfg.noise_sd, cfg.n2, box=box,
            variant=cfg.variant,
        )
        oracle = monte_carlo_risk_paired(
            spec, [w_star], cfg.n2, cfg.trials, _mc_seed(cfg, "fig5-oracle", R)
        )[0]
        oracle_by_r[R] = (oracle.value, oracle.stderr)
        rows.append(
            ResultRow(r_val, "mc_oracle", oracle.value, oracle.stderr,
                      (time.perf_counter() - t0) * 1e3, cfg.seed)
        )

    for scale in cfg.n_scales:
        T_eff = cfg.T * int(scale)
        tag = f"N={T_eff * cfg.n1}"
        # one Phase-1 estimate per seed, shared across the R sweep
        m_hats, est_errs = [], np.empty(cfg.est_seeds)
        for s in range(cfg.est_seeds):
            data = gen_meta_train(
                spec, T_eff, cfg.n1, _mc_seed(cfg, "fig5-phase1", scale, s)
            )
            m_hat = mom_m_hat(data).m_hat
            est_errs[s] = np.linalg.norm(m_hat - m_true, 2)
            m_hats.append(psd_clip(m_hat))
        for r_val in cfg.sweep_values:
            R = int(r_val)
            t0 = time.perf_counter()
            est_means = np.empty(cfg.est_seeds)
            for s, m_cov in enumerate(m_hats):
                w_est = compute_optimal_rep(
                    R, spec.feature_cov, m_cov, cfg.noise_sd, cfg.n2,
                    box=box, variant=cfg.variant,
                )
                est_means[s] = monte_carlo_risk_paired(
                    spec, [w_est], cfg.n2, cfg.trials,
                    _mc_seed(cfg, "fig5-mc", scale, R, s),
                )[0].value
            elapsed = (time.perf_counter() - t0) * 1e3
            est_mean = float(est_means.mean())
            est_se = float(est_means.std(ddof=1) / np.sqrt(cfg.est_seeds))
            orc_val, orc_se = oracle_by_r[R]
            bound = e2e_bound(
                R, cfg.n2, cfg.d, cfg.theta_lower, float(est_errs.mean())
            )
            rows.append(
                ResultRow(r_val, f"mc_estimated_{tag}", est_mean, est_se, elapsed,
                          cfg.seed)
            )
            rows.append(
                ResultRow(r_val, f"risk_gap_{tag}", est_mean - orc_val,
                          float(np.hypot(est_se, orc_se)), elapsed, cfg.seed)
            )
            rows.append(
                ResultRow(r_val, f"e2e_bound_{tag}", bound, 0.0, elapsed, cfg.seed)
            )
    return rows


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_scaling(cfg: ExperimentConfig) -> list[ResultRow]:
    """Estimator error scaling: split estimator vs N, task-average vs n1.

    Emits per-point errors plus the fitted log-log slopes (methods
    mom_slope_vs_N and taskavg_slope_vs_n1).
    """
    spec = _spec(cfg)
    s_t = int(np.sum(cfg.task_eigvals() > cfg.task_eigvals()[-1]))
    s_t = max(s_t, 1)
    m_true = (
        spec.feature_cov.matrix @ spec.task_cov.matrix @ spec.feature_cov.matrix
    )
    target = CovarianceModel.from_matrix(m_true)
    top_true = Subspace(target.eigvecs[:, :s_t])
    rows: list[ResultRow] = []

    n_values = [int(v) for v in cfg.sweep_values]
    errs = []
    for n_total in n_values:
        t0 = time.perf_counter()
        T = n_total // cfg.n1
        per_seed = np.empty(cfg.est_seeds)
        for s in range(cfg.est_seeds):
            data = gen_meta_train(spec, T, cfg.n1, _mc_seed(cfg, "scal-mom", n_total, s))
            per_seed[s] = np.linalg.norm(mom_m_hat(data).m_hat - m_true, 2)
        errs.append(float(per_seed.mean()))
        rows.append(
            ResultRow(float(n_total), "mom_err_vs_N", errs[-1],
                      float(per_seed.std(ddof=1) / np.sqrt(cfg.est_seeds)),
                      (time.perf_counter() - t0) * 1e3, cfg.seed)
        )
    rows.append(
        ResultRow(0.0, "mom_slope_vs_N",
                  _loglog_slope(np.array(n_values, float), np.array(errs)),
                  0.0, 0.0, cfg.seed)
    )

    n1_grid = (8, 32, 128)
    n_fixed = 12800
    errs_ta = []
    for n1 in n1_grid:
        t0 = time.perf_counter()
        T = n_fixed // n1
        per_seed = np.empty(cfg.est_seeds)
        for s in range(cfg.est_seeds):
            data = gen_meta_train(spec, T, n1, _mc_seed(cfg, "scal-ta", n1, s))
            _, sub = task_average_b_hat(data, s_t)
            per_seed[s] = principal_angle_sin(sub, top_true)
        errs_ta.append(float(per_seed.mean()))
        rows.append(
            ResultRow(float(n1), "taskavg_err_vs_n1", errs_ta[-1],
                      float(per_seed.std(ddof=1) / np.sqrt(cfg.est_seeds)),
                      (time.perf_counter() - t0) * 1e3, cfg.seed)
        )
    rows.append(
        ResultRow(0.0, "taskavg_slope_vs_n1",
                  _loglog_slope(np.array(n1_grid, float), np.array(errs_ta)),
                  0.0, 0.0, cfg.seed)
    )
    return rows
