"""Fit a spiked covariance model to a data matrix.

Top-``k`` eigenvectors of the centred sample covariance span the signal
subspace, the residual floor is the mean of the trailing eigenvalues, and the
spike excesses are the leading eigenvalues minus that floor, clipped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SpikedModel, make_model

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FittedSpike:
    k: int
    U_x: np.ndarray
    lambdas: np.ndarray
    sigma2: float
    mean: np.ndarray
    explained_fraction: float
    eigvals: np.ndarray

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def to_model(self) -> SpikedModel:
        return make_model(self.d, self.k, self.lambdas, self.sigma2, basis=self.U_x)


def sample_covariance(X):
    """Sample mean and unbiased covariance of the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-d matrix with at least two rows")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def sym_eig(cov):
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Each eigenvector is signed so that its first nonzero entry is positive.
    """
    A = np.asarray(cov, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    nz = np.abs(vecs) > 1e-12
    first = np.argmax(nz, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs *= signs
    return vecs, vals


def choose_k(eigvals, threshold_fraction: float) -> int:
    """Smallest ``k`` whose leading eigenvalues reach ``threshold_fraction``
    of the total, clamped to ``d - 1``."""
    lam = np.asarray(eigvals, dtype=np.float64)
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    total = lam.sum()
    if not total > 0:
        raise ValueError("spectrum has zero total variance")
    frac = np.cumsum(lam) / total
    k = int(np.searchsorted(frac, threshold_fraction, side="left")) + 1
    return min(k, lam.size - 1)


def parse_rank_rule(rule: str):
    """``"fixed:K"`` or ``"threshold:F"`` -> ``("fixed", K)`` / ``("threshold", F)``."""
    kind, _, value = rule.partition(":")
    if kind == "fixed":
        return kind, int(value)
    if kind == "threshold":
        return kind, float(value)
    raise ValueError(f"unknown rank rule {rule!r}; use fixed:K or threshold:F")


def fit_spiked(X, rank_rule=("threshold", 0.95)) -> FittedSpike:
    if isinstance(rank_rule, str):
        rank_rule = parse_rank_rule(rank_rule)
    mean, cov = sample_covariance(X)
    vecs, vals = sym_eig(cov)
    vals = np.maximum(vals, 0.0)
    total = vals.sum()
    if not total > 0:
        raise ValueError("data has zero total variance")
    kind, value = rank_rule
    d = vals.size
    k = int(value) if kind == "fixed" else choose_k(vals, float(value))
    if not 0 <= k < d:
        raise ValueError(f"rank {k} leaves no residual subspace in d={d}")
    sigma2 = float(vals[k:].mean())
    if not sigma2 > 0:
        raise ValueError("residual spectrum is zero; spiked fit is degenerate")
    lambdas = np.maximum(vals[:k] - sigma2, 0.0)
    return FittedSpike(
        k=k,
        U_x=vecs[:, :k].copy(),
        lambdas=lambdas,
        sigma2=sigma2,
        mean=mean,
        explained_fraction=float(vals[:k].sum() / total),
        eigvals=vals,
    )


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of A and B."""
    qa, _ = np.linalg.qr(np.asarray(A, dtype=np.float64))
    qb, _ = np.linalg.qr(np.asarray(B, dtype=np.float64))
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))
