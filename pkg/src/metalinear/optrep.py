"""Optimal eigen-weighting: the shrinkage-profile program and its solvers.

The program minimizes the closed-form risk f(theta) over the simplex-like
set {0 <= theta < 1, sum theta = n2}, optionally intersected with a box
theta_lower <= theta <= theta_upper used for robustness.  Two independent
solvers are provided:

* a projected-gradient method with exact box-simplex projection (primary);
* a damped fixed-point iteration on the stationarity system in the
  aggregate unknowns (C, V, S), with a coarse grid fallback at small R
  (secondary validator).

Working in phi = 1 - theta, with D = R - n2 - sum phi^2, V = sum t_i phi_i^2,
the gradient is df/dphi_i = (2 n2 phi_i / D^2) (V + nu + D t_i), where nu
is the variant-specific noise constant (main: sigma_R^2 (n2+1)/n2;
appendix: R sigma_R^2).  Interior stationarity therefore reads
phi_i = C D^2 / (2 n2 (V + nu + D t_i)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interpolator import EigenWeighting
from .linalg import CovarianceModel, ValidationError, eig_sym
from .risk import DEFAULT_VARIANT, ReductionResult, ThetaProfile, compute_reduction

__all__ = [
    "NonconvergenceError",
    "KktState",
    "RobustBox",
    "project_capped_simplex",
    "objective",
    "objective_grad_phi",
    "noise_constant",
    "solve_theta_star",
    "solve_theta_cvs",
    "stationarity_spread",
    "theta_to_lambda_sq",
    "weighting_from_profile",
    "compute_optimal_rep",
    "e2e_bound",
]

THETA_CAP = 1.0 - 1e-12


class NonconvergenceError(RuntimeError):
    """Solver failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best_theta: np.ndarray):
        super().__init__(message)
        self.best_theta = best_theta


@dataclass(frozen=True)
class KktState:
    """Aggregates of the stationarity system at a solution.

    C: interior gradient value (the multiplier); V = sum t_i phi_i^2;
    S = sum theta_i^2; phi = 1 - theta.
    """

    C: float
    V: float
    S: float
    phi: np.ndarray


@dataclass(frozen=True)
class RobustBox:
    """Box constraint theta_lower <= theta <= theta_upper."""

    theta_lower: float
    theta_upper: float

    def __post_init__(self) -> None:
        if not 0 < self.theta_lower <= self.theta_upper <= 1:
            raise ValidationError("need 0 < theta_lower <= theta_upper <= 1")

    @classmethod
    def from_lower(cls, theta_lower: float, d: int, n2: int) -> "RobustBox":
        upper = 1.0 - (d - n2) * theta_lower / n2
        return cls(theta_lower=theta_lower, theta_upper=upper)


def project_capped_simplex(
    v: np.ndarray, total: float, lo: float, hi: float
) -> np.ndarray:
    """Euclidean projection onto {lo <= x <= hi, sum x = total}.

    The projection is clip(v - tau, lo, hi) for the shift tau making the
    sum hit ``total``; the sum is a piecewise-linear nonincreasing function
    of tau with breakpoints at v_i - hi and v_i - lo, so tau is found
    exactly from the bracketing segment.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not (n * lo <= total + 1e-9 and total <= n * hi + 1e-9):
        raise ValidationError(
            f"infeasible projection: {n}*[{lo}, {hi}] cannot sum to {total}"
        )
    knots = np.unique(np.concatenate([v - lo, v - hi]))
    sums = np.clip(v[None, :] - knots[:, None], lo, hi).sum(axis=1)  # nonincreasing
    if total >= sums[0]:
        return np.clip(v - knots[0], lo, hi)
    if total <= sums[-1]:
        return np.clip(v - knots[-1], lo, hi)
    k = int(np.searchsorted(-sums, -total, side="right")) - 1
    s0, s1 = sums[k], sums[k + 1]
    if s1 == s0:
        tau = knots[k]
    else:
        tau = knots[k] + (total - s0) * (knots[k + 1] - knots[k]) / (s1 - s0)
    return np.clip(v - tau, lo, hi)


def noise_constant(R: int, n2: int, sigma_R: float, variant: str) -> float:
    """The nu entering the gradient: df/dphi_i = (2 n2 phi_i/D^2)(V + nu + D t_i)."""
    if variant == "main":
        return sigma_R**2 * (n2 + 1) / n2
    if variant == "appendix":
        return R * sigma_R**2
    raise ValidationError(f"unknown variant {variant!r}")


def objective(
    theta: np.ndarray, ttil_diag: np.ndarray, n2: int, sigma_R: float, variant: str
) -> float:
    """The closed-form risk as a plain function of theta (no profile checks)."""
    th = np.asarray(theta, dtype=float)
    t = np.asarray(ttil_diag, dtype=float)
    s = float(np.sum(th**2))
    denom = n2 - s
    if denom <= 0:
        return np.inf
    bias = n2 * float(np.sum((1.0 - th) ** 2 * t))
    if variant == "main":
        noise = (s + 1.0) * sigma_R**2
    else:
        noise = th.size * sigma_R**2 * s
    return (bias + noise) / denom


def objective_grad_phi(
    phi: np.ndarray, ttil_diag: np.ndarray, n2: int, sigma_R: float, variant: str
) -> np.ndarray:
    """Gradient of the objective with respect to phi = 1 - theta."""
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(ttil_diag, dtype=float)
    R = phi.size
    D = R - n2 - float(np.sum(phi**2))
    V = float(np.sum(t * phi**2))
    nu = noise_constant(R, n2, sigma_R, variant)
    return 2.0 * n2 * phi / D**2 * (V + nu + D * t)


def _validate_instance(
    ttil_diag: np.ndarray, n2: int, sigma_R: float, box: RobustBox | None
) -> tuple[np.ndarray, float, float]:
    t = np.asarray(ttil_diag, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValidationError("need at least two reduced directions")
    scale = max(float(t.max(initial=0.0)), 1.0)
    if t.min() < -1e-12 * scale:
        raise ValidationError("reduced energies must be nonnegative")
    t = np.clip(t, 0.0, None)
    if not 1 <= n2 < t.size:
        raise ValidationError(f"need 1 <= n2 < R, got n2={n2}, R={t.size}")
    if sigma_R < 0:
        raise ValidationError("sigma_R must be nonnegative")
    lo, hi = 0.0, THETA_CAP
    if box is not None:
        lo, hi = box.theta_lower, min(box.theta_upper, THETA_CAP)
        if t.size * lo > n2 + 1e-12 or t.size * hi < n2 - 1e-12:
            raise ValidationError(
                f"infeasible box: R*[{lo:.4g}, {hi:.4g}] cannot sum to n2={n2}"
            )
    return t, lo, hi


def _scaled_capped(base: np.ndarray, total: float, lo: float, hi: float) -> np.ndarray:
    """clip(C * base, lo, hi) with C > 0 chosen so the sum equals total.

    The sum is a nondecreasing piecewise-linear function of C with
    breakpoints at lo/base_i and hi/base_i, so C is found exactly from the
    bracketing segment.
    """
    knots = np.unique(np.concatenate([lo / base, hi / base]))
    sums = np.clip(knots[:, None] * base[None, :], lo, hi).sum(axis=1)
    if total <= sums[0]:
        return np.clip(knots[0] * base, lo, hi)
    if total >= sums[-1]:
        return np.clip(knots[-1] * base, lo, hi)
    k = int(np.searchsorted(sums, total, side="right")) - 1
    s0, s1 = sums[k], sums[k + 1]
    c = knots[k] if s1 == s0 else knots[k] + (total - s0) * (knots[k + 1] - knots[k]) / (s1 - s0)
    return np.clip(c * base, lo, hi)


def _kkt_polish(
    theta: np.ndarray,
    t: np.ndarray,
    n2: int,
    nu: float,
    lo: float,
    hi: float,
    damping: float = 0.5,
    max_iters: int = 20000,
    tol: float = 1e-16,
) -> np.ndarray:
    """Refine a near-solution on the stationarity fixed point.

    Iterates phi <- clip(C base(V, S), ...) with C matched to the sum
    constraint, which pins interior coordinates to a shared multiplier
    with machine accuracy (plain descent cannot resolve residuals below
    sqrt(eps) through objective differences).
    """
    R = t.size
    phi_lo, phi_hi = 1.0 - hi, 1.0 - lo
    phi = 1.0 - theta
    for _ in range(max_iters):
        d_val = R - n2 - float(phi @ phi)
        if d_val <= 0:
            break
        v_val = float(t @ (phi * phi))
        base = d_val * d_val / (2.0 * n2 * (v_val + nu + d_val * t))
        cand = _scaled_capped(base, float(R - n2), phi_lo, phi_hi)
        new = (1.0 - damping) * phi + damping * cand
        delta = float(np.abs(new - phi).max())
        phi = new
        if delta < tol:
            break
    theta = project_capped_simplex(1.0 - phi, float(n2), lo, hi)
    return theta


def _gp_residual(
    theta: np.ndarray, t: np.ndarray, n2: int, sigma_R: float, variant: str,
    lo: float, hi: float,
) -> float:
    grad_th = -objective_grad_phi(1.0 - theta, t, n2, sigma_R, variant)
    moved = project_capped_simplex(theta - grad_th, float(n2), lo, hi)
    return float(np.max(np.abs(moved - theta)))


def solve_theta_star(
    ttil_diag: np.ndarray,
    n2: int,
    sigma_R: float,
    box: RobustBox | None = None,
    variant: str = DEFAULT_VARIANT,
    max_iters: int = 20000,
    tol: float = 1e-10,
) -> ThetaProfile:
    """Minimize the closed-form risk over the feasible shrinkage profiles.

    Projected-gradient descent with backtracking and exact box-simplex
    projection locates the solution; a stationarity fixed-point polish
    brings the gradient-projection residual below tol.
    """
    t, lo, hi = _validate_instance(ttil_diag, n2, sigma_R, box)
    R = t.size
    nu = noise_constant(R, n2, sigma_R, variant)

    g = np.random.default_rng(0)
    starts = [np.full(R, n2 / R), g.uniform(0.0, 1.0, R)]

    best_theta, best_val, best_resid = None, np.inf, np.inf
    for start in starts:
        th = project_capped_simplex(start, float(n2), lo, hi)
        fcur = objective(th, t, n2, sigma_R, variant)
        step = 1.0
        for _ in range(max_iters):
            grad_th = -objective_grad_phi(1.0 - th, t, n2, sigma_R, variant)
            resid = np.max(
                np.abs(project_capped_simplex(th - grad_th, float(n2), lo, hi) - th)
            )
            if resid <= tol:
                break
            accepted = False
            for _ in range(80):
                cand = project_capped_simplex(th - step * grad_th, float(n2), lo, hi)
                fcand = objective(cand, t, n2, sigma_R, variant)
                if fcand < fcur - 1e-15 * max(1.0, abs(fcur)):
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break  # descent stalled at float resolution; polish takes over
            th, fcur = cand, fcand
            step = min(step * 2.0, 1e8)
        th = _kkt_polish(th, t, n2, nu, lo, hi)
        fcur = objective(th, t, n2, sigma_R, variant)
        resid = _gp_residual(th, t, n2, sigma_R, variant, lo, hi)
        if fcur < best_val:
            best_theta, best_val, best_resid = th, fcur, resid

    if best_theta is None or best_resid > tol:
        raise NonconvergenceError(
            f"solver residual {best_resid:.3e} above tolerance {tol:.1e}",
            best_theta if best_theta is not None else np.full(R, n2 / R),
        )
    return ThetaProfile(theta=best_theta, xi=1.0, n2=n2)


def stationarity_spread(
    theta: ThetaProfile,
    ttil_diag: np.ndarray,
    sigma_R: float,
    box: RobustBox | None = None,
    variant: str = DEFAULT_VARIANT,
) -> float:
    """Relative spread of the gradient over strictly interior coordinates.

    At a KKT point the gradient is a constant multiplier on every
    coordinate away from the bounds (complementary slackness lets boundary
    coordinates differ), so this should be ~0 at a solution.
    """
    lo = box.theta_lower if box is not None else 0.0
    hi = box.theta_upper if box is not None else THETA_CAP
    margin = 1e-7 + 1e-4 * (hi - lo)
    th = theta.theta
    interior = (th > lo + margin) & (th < hi - margin)
    if interior.sum() < 2:
        return 0.0
    grad = objective_grad_phi(1.0 - th, ttil_diag, theta.n2, sigma_R, variant)
    vals = grad[interior]
    center = np.mean(np.abs(vals))
    if center == 0:
        return 0.0
    return float((vals.max() - vals.min()) / center)


def _kkt_state(
    theta: np.ndarray, ttil_diag: np.ndarray, n2: int, sigma_R: float, variant: str
) -> KktState:
    phi = 1.0 - theta
    grad = objective_grad_phi(phi, ttil_diag, n2, sigma_R, variant)
    interior = (theta > 1e-9) & (theta < THETA_CAP - 1e-9)
    c = float(np.median(grad[interior])) if interior.any() else float(np.median(grad))
    return KktState(
        C=c,
        V=float(np.sum(ttil_diag * phi**2)),
        S=float(np.sum(theta**2)),
        phi=phi,
    )


def solve_theta_cvs(
    ttil_diag: np.ndarray,
    n2: int,
    sigma_R: float,
    variant: str = DEFAULT_VARIANT,
    damping: float = 0.5,
    max_iters: int = 50000,
    tol: float = 1e-13,
) -> tuple[ThetaProfile, KktState]:
    """Secondary solver: damped fixed point on the (C, V, S) system.

    Iterates phi_i = C D^2 / (2 n2 (V + nu + D t_i)) with C eliminated by
    the feasibility equation sum phi = R - n2, phi capped at 1 (theta >= 0),
    and (V, S) relaxed with the given damping.  For R <= 8 a coarse grid
    over (V, S) seeds the iteration (the brute-force fallback).
    """
    t, _, _ = _validate_instance(ttil_diag, n2, sigma_R, None)
    R = t.size
    nu = noise_constant(R, n2, sigma_R, variant)

    def phi_of(V: float, Sp: float) -> np.ndarray:
        D = max(R - n2 - Sp, 1e-12)
        base = D * D / (2.0 * n2 * (V + nu + D * t))
        return _scaled_capped(base, float(R - n2), 1e-15, 1.0)

    seeds = [(float(np.sum(t * (1 - n2 / R) ** 2)), float(R * (1 - n2 / R) ** 2))]
    if R <= 8:
        vmax = float(t.sum()) + 1e-9
        spmax = float(R)
        grid_v = np.linspace(0.0, vmax, 9)
        grid_sp = np.linspace(0.0, spmax, 9)
        best, best_r = None, np.inf
        for V0 in grid_v:
            for Sp0 in grid_sp:
                phi = phi_of(V0, Sp0)
                r = abs(np.sum(t * phi**2) - V0) + abs(np.sum(phi**2) - Sp0)
                if r < best_r:
                    best, best_r = (float(V0), float(Sp0)), r
        seeds.insert(0, best)

    last_exc: NonconvergenceError | None = None
    for V, Sp in seeds:
        phi = phi_of(V, Sp)
        ok = False
        for _ in range(max_iters):
            phi = phi_of(V, Sp)
            v_new = float(np.sum(t * phi**2))
            sp_new = float(np.sum(phi**2))
            if abs(v_new - V) <= tol * max(1.0, V) and abs(sp_new - Sp) <= tol * max(1.0, Sp):
                ok = True
                break
            V = (1 - damping) * V + damping * v_new
            Sp = (1 - damping) * Sp + damping * sp_new
        theta = np.clip(1.0 - phi, 0.0, THETA_CAP)
        theta = project_capped_simplex(theta, float(n2), 0.0, THETA_CAP)
        if ok:
            prof = ThetaProfile(theta=theta, xi=1.0, n2=n2)
            return prof, _kkt_state(theta, t, n2, sigma_R, variant)
        last_exc = NonconvergenceError("(C,V,S) fixed point did not converge", theta)
    raise last_exc


def theta_to_lambda_sq(theta: ThetaProfile) -> np.ndarray:
    """Squared diagonal weights lambda_i^2 = theta_i / (1 - theta_i), xi = 1.

    This is the inverse of the shrinkage map: feeding the result back
    through solve_xi recovers theta exactly (the weighting itself is only
    determined up to a global rescaling, which solve_xi absorbs into xi).
    Coordinates with theta_i = 0 get weight 0 (dropped).
    """
    th = theta.theta
    if th.max() >= 1.0:
        raise ValidationError("theta entries must be < 1")
    return th / (1.0 - th)


def weighting_from_profile(red: ReductionResult, theta: ThetaProfile) -> EigenWeighting:
    """Lift a solved profile through the reduction basis with feature whitening:
    L = U1 (Sigma_F^R)^{-1/2} diag(lam)."""
    lam = np.sqrt(theta_to_lambda_sq(theta))
    fvals, fvecs = eig_sym(red.sigma_F_R)
    if fvals[-1] <= 1e-12 * max(fvals[0], 1.0):
        raise ValidationError("reduced feature covariance is singular")
    inv_root = (fvecs / np.sqrt(fvals)) @ fvecs.T
    return EigenWeighting(red.basis_U1 @ (inv_root * lam))


def compute_optimal_rep(
    R: int,
    sigma_f: CovarianceModel,
    sigma_ttil: CovarianceModel,
    sigma: float,
    n2: int,
    box: RobustBox | None = None,
    variant: str = DEFAULT_VARIANT,
) -> EigenWeighting:
    """Assemble the optimal d x R weighting from the reduced problem."""
    if not 1 <= n2 < R <= sigma_ttil.dim:
        raise ValidationError(f"need 1 <= n2 < R <= d, got n2={n2}, R={R}")
    red = compute_reduction(R, sigma_f, sigma_ttil, sigma)
    theta = solve_theta_star(red.ttil_diag, n2, red.sigma_R, box=box, variant=variant)
    return weighting_from_profile(red, theta)


def e2e_bound(
    R: int,
    n2: int,
    d: int,
    theta_lower: float,
    est_error_E: float,
    scale_front: float = 1.0,
) -> float:
    """End-to-end excess-risk bound n2^2 E / (d (R-n2)(2 n2 - R tl) tl).

    The bound is stated up to an absolute constant; scale_front multiplies
    the value.
    """
    if R <= n2:
        raise ValidationError("bound requires R > n2")
    if est_error_E < 0:
        raise ValidationError("estimation error must be nonnegative")
    if not theta_lower > 0:
        raise ValidationError("theta_lower must be positive")
    if 2 * n2 - R * theta_lower <= 0:
        raise ValidationError("bound degenerate: 2 n2 - R theta_lower <= 0")
    return (
        scale_front
        * n2**2
        * est_error_E
        / (d * (R - n2) * (2 * n2 - R * theta_lower) * theta_lower)
    )
