"""Few-shot estimators: weighted minimum-norm interpolation and its ridge form.

The weighting matrix L (d x R) both projects features onto R directions and
rescales them; the fitted coefficient vector always lies in range(L).  The
ridge solve works in the R-dimensional coordinates alpha = L^+ beta, which
is equivalent on range(L) and avoids forming (L L^T)^+.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ValidationError, min_norm_solve

__all__ = ["EigenWeighting", "fit_weighted_min_norm", "fit_weighted_ridge"]


@dataclass(frozen=True)
class EigenWeighting:
    """A d x R weighting matrix. Columns need not be orthogonal."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] < 1:
            raise ValidationError(f"weighting must be d x R with R >= 1, got {m.shape}")
        if not m.any():
            raise ValidationError("all-zero weighting is not allowed")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def R(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, d: int) -> "EigenWeighting":
        return cls(np.eye(d))

    @classmethod
    def projection(cls, basis: np.ndarray) -> "EigenWeighting":
        """Unit weights on the given (d x R) direction basis."""
        return cls(np.asarray(basis, dtype=float))


def _check_shapes(x: np.ndarray, y: np.ndarray, w: EigenWeighting) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValidationError(f"shape mismatch: X {x.shape}, y {y.shape}")
    if x.shape[1] != w.d:
        raise ValidationError(f"X has {x.shape[1]} columns, weighting expects {w.d}")
    return x, y


def fit_weighted_min_norm(x: np.ndarray, y: np.ndarray, w: EigenWeighting) -> np.ndarray:
    """L @ (X L)^+ y: the minimum-norm interpolator in alpha-coordinates."""
    x, y = _check_shapes(x, y, w)
    alpha = min_norm_solve(x @ w.matrix, y)
    return w.matrix @ alpha


def fit_weighted_ridge(
    x: np.ndarray, y: np.ndarray, w: EigenWeighting, t: float
) -> np.ndarray:
    """Ridge fit restricted to range(L), penalty t > 0 on ||alpha||^2.

    As t -> 0 this converges to fit_weighted_min_norm.
    """
    if not t > 0:
        raise ValidationError("ridge penalty t must be > 0")
    x, y = _check_shapes(x, y, w)
    z = x @ w.matrix
    gram = z.T @ z + t * np.eye(w.R)
    alpha = np.linalg.solve(gram, z.T @ y)
    return w.matrix @ alpha
