"""Dense symmetric linear algebra and Gaussian sampling.

Conventions used throughout the library:

* eigenvalues are reported in nonincreasing order;
* covariance matrices are validated at construction (symmetry, PSD up to
  round-off) and carry their eigendecomposition;
* pseudoinverse-type solves truncate singular values below 1e-12 times the
  largest one (fixed, so interpolator behavior is reproducible).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ValidationError",
    "CovarianceModel",
    "Subspace",
    "SpectrumSummary",
    "eig_sym",
    "sqrt_spd",
    "min_norm_solve",
    "principal_angle_sin",
    "sample_gaussian",
    "psd_clip",
]

# Fixed pseudoinverse truncation threshold (relative to sigma_max).
PINV_RCOND = 1e-12

# Eigenvalues in [-EIG_CLIP_TOL, 0) are round-off and get clipped to zero;
# anything more negative means genuinely indefinite input.
EIG_CLIP_TOL = 1e-10

SYM_RTOL = 1e-10


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _check_symmetric(mat: np.ndarray, rtol: float = SYM_RTOL) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {mat.shape}")
    scale = max(np.abs(mat).max(), 1.0)
    if np.abs(mat - mat.T).max() > rtol * scale:
        raise ValidationError("matrix is not symmetric within tolerance")
    return 0.5 * (mat + mat.T)


def eig_sym(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.

    Ties are broken deterministically: for exactly diagonal input the
    eigenvectors are coordinate vectors ordered by original coordinate
    index; otherwise the (deterministic) LAPACK order is kept stable.
    """
    sym = _check_symmetric(mat)
    d = sym.shape[0]
    offdiag = sym - np.diag(np.diag(sym))
    if not offdiag.any():
        # Diagonal fast path: stable sort keeps coordinate order on ties.
        diag = np.diag(sym)
        order = np.argsort(-diag, kind="stable")
        return diag[order].copy(), np.eye(d)[:, order]
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class CovarianceModel:
    """A symmetric PSD matrix with its cached eigendecomposition.

    ``eigvals`` are nonincreasing; tiny negative eigenvalues (round-off)
    are clipped to zero at construction, genuinely negative ones are
    rejected.
    """

    matrix: np.ndarray
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "CovarianceModel":
        sym = _check_symmetric(mat)
        vals, vecs = eig_sym(sym)
        scale = max(vals[0], 1.0) if vals.size else 1.0
        if vals.size and vals[-1] < -EIG_CLIP_TOL * scale:
            raise ValidationError(
                f"matrix is not PSD: smallest eigenvalue {vals[-1]:.3e}"
            )
        vals = np.clip(vals, 0.0, None)
        return cls(matrix=sym, eigvals=vals, eigvecs=vecs)

    @classmethod
    def from_spectrum(cls, eigvals: np.ndarray) -> "CovarianceModel":
        """Diagonal covariance with the given spectrum (any order)."""
        vals = np.asarray(eigvals, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValidationError("spectrum must be a nonempty 1-d array")
        if vals.min() < -EIG_CLIP_TOL:
            raise ValidationError("spectrum has a negative entry")
        return cls.from_matrix(np.diag(np.clip(vals, 0.0, None)))

    @classmethod
    def identity(cls, d: int) -> "CovarianceModel":
        return cls.from_matrix(np.eye(d))

    @property
    def sqrt_factor(self) -> np.ndarray:
        """F with F @ F.T = matrix (used for sampling)."""
        return self.eigvecs * np.sqrt(self.eigvals)

    def summary(self) -> "SpectrumSummary":
        return SpectrumSummary.from_eigvals(self.eigvals)


def psd_clip(mat: np.ndarray) -> CovarianceModel:
    """Project a symmetric matrix onto the PSD cone (clip eigenvalues at 0).

    Used when a noisy symmetric *estimate* of a PSD target (which may have
    negative eigenvalues) has to enter a pipeline that requires a valid
    covariance.
    """
    sym = _check_symmetric(mat, rtol=1e-8)
    vals, vecs = eig_sym(sym)
    vals = np.clip(vals, 0.0, None)
    return CovarianceModel(
        matrix=(vecs * vals) @ vecs.T, eigvals=vals, eigvecs=vecs
    )


@dataclass(frozen=True)
class Subspace:
    """A linear subspace given by an orthonormal basis (columns)."""

    basis: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[1] > b.shape[0] or b.shape[1] == 0:
            raise ValidationError(f"bad basis shape {b.shape}")
        gram = b.T @ b
        if np.abs(gram - np.eye(b.shape[1])).max() > 1e-8:
            raise ValidationError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def dim_ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class SpectrumSummary:
    """Trace/operator-norm summaries of a PSD spectrum.

    ``approx_rank_s`` is the smallest s in 1..d with s/d >= (s+1)-th
    eigenvalue (the low-rankness measure used for feature covariances).
    """

    trace: float
    op_norm: float
    effective_rank: float
    approx_rank_s: int

    @classmethod
    def from_eigvals(cls, eigvals: np.ndarray) -> "SpectrumSummary":
        vals = np.asarray(eigvals, dtype=float)
        d = vals.size
        trace = float(vals.sum())
        op = float(vals[0]) if d else 0.0
        eff = trace / op if op > 0 else 1.0
        s = d
        for cand in range(1, d + 1):
            lam_next = vals[cand] if cand < d else 0.0
            if cand / d >= lam_next:
                s = cand
                break
        return cls(trace=trace, op_norm=op, effective_rank=eff, approx_rank_s=s)


def sqrt_spd(cov: CovarianceModel) -> np.ndarray:
    """Symmetric PSD square root: S @ S = cov.matrix."""
    root = (cov.eigvecs * np.sqrt(cov.eigvals)) @ cov.eigvecs.T
    return 0.5 * (root + root.T)


def min_norm_solve(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-Euclidean-norm least-squares solution A^+ y.

    Singular values below 1e-12 * sigma_max are treated as zero, so rank
    deficiency is handled silently by truncation.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    if a.ndim != 2 or y.shape != (a.shape[0],):
        raise ValidationError(f"shape mismatch: A {a.shape}, y {y.shape}")
    sol, *_ = np.linalg.lstsq(a, y, rcond=PINV_RCOND)
    return sol


def principal_angle_sin(u: Subspace, v: Subspace) -> float:
    """Sine of the largest principal angle between two equal-rank subspaces."""
    if u.dim_ambient != v.dim_ambient:
        raise ValidationError("subspaces live in different ambient dimensions")
    if u.rank != v.rank:
        raise ValidationError(f"rank mismatch: {u.rank} vs {v.rank}")
    resid = u.basis - v.basis @ (v.basis.T @ u.basis)
    return float(min(np.linalg.norm(resid, 2), 1.0))


def sample_gaussian(
    cov: CovarianceModel, count: int, rng_stream: np.random.Generator
) -> np.ndarray:
    """count i.i.d. rows from N(0, cov). Deterministic given the stream."""
    if count < 0:
        raise ValidationError("count must be nonnegative")
    z = rng_stream.standard_normal((count, cov.dim))
    return z @ cov.sqrt_factor.T
