"""Moment-based estimators for the representation-learning phase.

All estimators consume a MetaTrainSet and target either the feature
covariance or the label-weighted second moment M = Sigma_F Sigma_T Sigma_F,
whose top eigenspace is the quantity the downstream weighting needs.

The split-batch estimator averages products of *independent* half-batch
means, which removes the per-sample second-moment bias and makes it
unbiased for M; the normalization is 1/(2T) so that the symmetrized sum
has expectation exactly M (the per-task symmetrized product has
expectation 2 Sigma_F beta beta' Sigma_F).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datagen import MetaTrainSet
from .linalg import (
    CovarianceModel,
    Subspace,
    ValidationError,
    eig_sym,
    principal_angle_sin,
)

__all__ = [
    "MomEstimate",
    "AlignmentScores",
    "sigma_f_hat",
    "mom_m_hat",
    "task_average_b_hat",
    "g_hat",
    "dk_angle",
    "alignment_scores",
]


@dataclass(frozen=True)
class MomEstimate:
    """Split-batch estimate of M; symmetric, but not necessarily PSD."""

    m_hat: np.ndarray
    n1: int
    T: int


@dataclass(frozen=True)
class AlignmentScores:
    """Correlation-style alignment between feature and canonical covariances.

    canonical_feature = <Sigma_F, canonical> / (||Sigma_F||_F ||canonical||_F);
    canonical_identity replaces Sigma_F by the identity.
    """

    canonical_feature: float
    canonical_identity: float


def sigma_f_hat(data: MetaTrainSet) -> CovarianceModel:
    """Pooled sample second moment (1/N) sum x x^T over all N samples."""
    x = data.features.reshape(-1, data.d)
    return CovarianceModel.from_matrix(x.T @ x / x.shape[0])


def _half_batch_means(data: MetaTrainSet) -> tuple[np.ndarray, np.ndarray, int]:
    n1 = data.n1
    if n1 % 2 == 1:
        warnings.warn(
            f"odd n1={n1}: dropping the last sample of each task for the split estimator",
            stacklevel=3,
        )
        n1 -= 1
    if n1 < 2:
        raise ValidationError("split estimator needs at least 2 usable samples per task")
    h = n1 // 2
    x, y = data.features, data.labels
    b1 = np.einsum("tn,tnd->td", y[:, :h], x[:, :h]) / h
    b2 = np.einsum("tn,tnd->td", y[:, h:n1], x[:, h:n1]) / h
    return b1, b2, n1


def mom_m_hat(data: MetaTrainSet) -> MomEstimate:
    """Split-batch estimate of M = Sigma_F Sigma_T Sigma_F."""
    b1, b2, n1_used = _half_batch_means(data)
    m = (b1.T @ b2 + b2.T @ b1) / (2 * data.T)
    return MomEstimate(m_hat=0.5 * (m + m.T), n1=n1_used, T=data.T)


def task_average_b_hat(
    data: MetaTrainSet, s: int
) -> tuple[np.ndarray, Subspace]:
    """Per-task label-weighted feature means and their top-s left subspace.

    Column i is b_i = (1/n1) sum_j y_ij x_ij (estimates Sigma_F beta_i);
    the top-s left-singular subspace of the d x T matrix estimates the
    principal subspace of M.
    """
    if not 1 <= s <= min(data.d, data.T):
        raise ValidationError(f"need 1 <= s <= min(d, T), got s={s}")
    b = (np.einsum("tn,tnd->td", data.labels, data.features) / data.n1).T
    u, _, _ = np.linalg.svd(b, full_matrices=False)
    return b, Subspace(u[:, :s])


def g_hat(
    data: MetaTrainSet, feature_cov: CovarianceModel | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Gram estimator (1/T) B B^T and its debiased variant.

    E[G] = (1 + 1/n1) M + (1/n1) (tr(Sigma_T Sigma_F) + sigma^2) Sigma_F, and
    tr(Sigma_T Sigma_F) + sigma^2 = E[y^2], so the bias is removed with the
    label-energy plug-in and the pooled feature covariance (or a supplied
    one) -- no separate noise estimate is needed.
    """
    b = (np.einsum("tn,tnd->td", data.labels, data.features) / data.n1).T
    g_raw = b @ b.T / data.T
    sf = feature_cov if feature_cov is not None else sigma_f_hat(data)
    y_energy = float(np.mean(data.labels**2))
    g_deb = (g_raw - (y_energy / data.n1) * sf.matrix) * (data.n1 / (data.n1 + 1))
    return g_raw, 0.5 * (g_deb + g_deb.T)


def dk_angle(est: np.ndarray, target: CovarianceModel, r: int) -> float:
    """Sine of the largest principal angle between top-r eigenspaces.

    Requires a strict eigengap of the target at position r (otherwise the
    target subspace is ill-defined).
    """
    if not 1 <= r < target.dim:
        raise ValidationError(f"need 1 <= r < d, got r={r}")
    gap = target.eigvals[r - 1] - target.eigvals[r]
    if gap <= 0:
        raise ValidationError(f"zero eigengap at position {r}")
    vals, vecs = eig_sym(est)
    return principal_angle_sin(
        Subspace(vecs[:, :r]), Subspace(target.eigvecs[:, :r])
    )


def alignment_scores(
    sigma_f: CovarianceModel,
    sigma_ttil: CovarianceModel,
    sigma_t: CovarianceModel | None = None,
) -> AlignmentScores:
    """Alignment of the feature covariance with the canonical covariance.

    When the task covariance is supplied, the identity
    <Sigma_F, canonical> = tr(Sigma_F Sigma_T Sigma_F) is verified.
    """
    f, c = sigma_f.matrix, sigma_ttil.matrix
    nf, nc = np.linalg.norm(f), np.linalg.norm(c)
    if nf == 0 or nc == 0:
        raise ValidationError("alignment undefined for a zero matrix")
    inner = float(np.sum(f * c))
    if sigma_t is not None:
        tr_m = float(np.trace(f @ sigma_t.matrix @ f))
        if abs(inner - tr_m) > 1e-8 * max(1.0, abs(tr_m)):
            raise ValidationError(
                f"<Sigma_F, canonical> = {inner:.12g} != tr(M) = {tr_m:.12g}"
            )
    d = sigma_f.dim
    return AlignmentScores(
        canonical_feature=inner / (nf * nc),
        canonical_identity=float(np.trace(c)) / (np.sqrt(d) * nc),
    )
