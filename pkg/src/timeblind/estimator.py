"""Single-sample time recovery from the residual-subspace variance clock.

A noisy interpolant ``z`` at time ``t`` has residual coordinates with
variance ``(1-t)^2 + t^2 sigma2``. Their empirical second moment pins that
variance down at rate ``(d-k)^{-1/2}`` and a quadratic inversion turns it
back into ``t``. The clock has a minimum at ``t* = 1/(1+sigma2)``, so the
inverse has two branches: ``descending`` (t <= t*) and ``ascending``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import SpikedModel, TimeInterval, clock_eval, critical_point

# Discriminants within this distance of zero are treated as zero.
BOUNDARY_TOL = 1e-14


class Status(str, Enum):
    OK_DESCENDING = "ok_descending"
    OK_ASCENDING = "ok_ascending"
    DISCARDED = "discarded_negative_discriminant"
    CLIPPED = "clipped_to_interval"


_STATUS_CODES = list(Status)


@dataclass(frozen=True)
class TimeEstimate:
    sigma_hat_perp2: float
    t_hat: float | None
    status: Status

    @property
    def discarded(self) -> bool:
        return self.status is Status.DISCARDED


@dataclass(frozen=True)
class TheoryPrediction:
    per_sample_std: np.ndarray
    aggregate_std: float
    excluded_fraction: float
    included: np.ndarray


def residual_statistic(z, model: SpikedModel):
    """``||P_perp z||^2 / (d - k)``; vectorised over rows of ``z``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.d:
        raise ValueError(f"z has length {z.shape[-1]}, model has d={model.d}")
    stat = model.residual_energy(z) / model.n_residual
    return float(stat[0]) if z.ndim == 1 else stat


def _check_branch(branch):
    if branch not in ("descending", "ascending"):
        raise ValueError(f"branch must be 'descending' or 'ascending', got {branch!r}")


def invert_clock_many(sigma_hat_perp2, sigma2, branch="descending", clip_interval=TimeInterval()):
    """Vectorised :func:`invert_clock`.

    Returns ``(t_hat, codes)`` where discarded entries of ``t_hat`` are NaN
    and ``codes`` indexes into :class:`Status` (in declaration order).
    """
    _check_branch(branch)
    s = np.asarray(sigma_hat_perp2, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("residual statistic must be >= 0")
    a = 1.0 + sigma2
    # quarter discriminant of (1+sigma2) t^2 - 2t + (1 - s) = 0
    disc = a * s - sigma2
    keep = disc >= -BOUNDARY_TOL
    root = np.sqrt(np.where(keep, np.maximum(disc, 0.0), 0.0))
    t = (1.0 - root) / a if branch == "descending" else (1.0 + root) / a
    ok = Status.OK_DESCENDING if branch == "descending" else Status.OK_ASCENDING
    codes = np.full(s.shape, _STATUS_CODES.index(ok), dtype=np.int8)
    if clip_interval is not None:
        clipped = np.clip(t, clip_interval.lo, clip_interval.hi)
        codes[clipped != t] = _STATUS_CODES.index(Status.CLIPPED)
        t = clipped
    t = np.where(keep, t, np.nan)
    codes[~keep] = _STATUS_CODES.index(Status.DISCARDED)
    return t, codes


def invert_clock(
    sigma_hat_perp2: float,
    sigma2: float,
    branch: str = "descending",
    clip_interval: TimeInterval | None = TimeInterval(),
) -> TimeEstimate:
    """Solve ``(1-t)^2 + t^2 sigma2 = sigma_hat_perp2`` on one branch.

    A statistic below the clock minimum ``sigma2/(1+sigma2)`` has no preimage
    and is reported as discarded. The root is projected onto
    ``clip_interval`` (pass ``None`` to skip).
    """
    t, codes = invert_clock_many(np.array([sigma_hat_perp2]), sigma2, branch, clip_interval)
    status = _STATUS_CODES[int(codes[0])]
    return TimeEstimate(float(sigma_hat_perp2), None if status is Status.DISCARDED else float(t[0]), status)


def estimate_time(z, model: SpikedModel, branch="descending", clip_interval=TimeInterval()) -> TimeEstimate:
    return invert_clock(residual_statistic(z, model), model.sigma2, branch, clip_interval)


def estimate_times(z, model: SpikedModel, branch="descending", clip_interval=TimeInterval()):
    """Row-wise :func:`estimate_time`; returns ``(t_hat, codes)`` as in :func:`invert_clock_many`."""
    return invert_clock_many(residual_statistic(np.atleast_2d(z), model), model.sigma2, branch, clip_interval)


def per_sample_variance(sigma2: float, d_minus_k: int, t):
    """First-order variance of ``t_hat - t`` given ``t``."""
    value, deriv = clock_eval(sigma2, np.asarray(t, dtype=np.float64))
    return value * value * (2.0 / d_minus_k) / (deriv * deriv)


def theory_prediction(sigma2: float, d_minus_k: int, t_samples, exclusion_halfwidth: float = 0.05) -> TheoryPrediction:
    """Delta-method error scale of the estimator for a set of true times.

    Times within ``exclusion_halfwidth`` of the critical point are dropped
    (the linearisation is useless where the clock is flat); the aggregate is
    the root mean of the remaining per-sample variances.
    """
    if d_minus_k < 1:
        raise ValueError("d_minus_k must be >= 1")
    t = np.atleast_1d(np.asarray(t_samples, dtype=np.float64))
    if t.size == 0:
        raise ValueError("t_samples is empty")
    included = np.abs(t - critical_point(sigma2)) > exclusion_halfwidth
    if not included.any():
        raise ValueError("every sample lies inside the exclusion window around the critical point")
    var = per_sample_variance(sigma2, d_minus_k, t[included])
    return TheoryPrediction(
        per_sample_std=np.sqrt(var),
        aggregate_std=float(np.sqrt(var.mean())),
        excluded_fraction=float(1.0 - included.mean()),
        included=included,
    )


def effective_rank(eigenvalues) -> float:
    """``(tr A)^2 / tr(A^2)`` from the spectrum of A."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size == 0 or not np.any(lam > 0):
        raise ValueError("spectrum must contain a positive eigenvalue")
    return float(lam.sum() ** 2 / np.dot(lam, lam))


def _check_projection(basis, projected_eigenvalues):
    Q = np.asarray(basis, dtype=np.float64)
    mu = np.asarray(projected_eigenvalues, dtype=np.float64)
    m = Q.shape[1]
    if mu.shape != (m,) or np.any(mu <= 0):
        raise ValueError("need one positive eigenvalue per basis column")
    if np.max(np.abs(Q.T @ Q - np.eye(m))) > 1e-8:
        raise ValueError("basis columns are not orthonormal")
    return Q, mu


def estimate_times_general(z, basis, projected_eigenvalues, branch="descending", clip_interval=TimeInterval()):
    """Row-wise inversion on an arbitrary projection; returns ``(t_hat, codes)``."""
    Q, mu = _check_projection(basis, projected_eigenvalues)
    proj = np.atleast_2d(np.asarray(z, dtype=np.float64)) @ Q
    stat = np.einsum("ij,ij->i", proj, proj) / Q.shape[1]
    return invert_clock_many(stat, float(mu.mean()), branch, clip_interval)


def estimate_time_general(
    z,
    basis,
    projected_eigenvalues,
    branch="descending",
    clip_interval=TimeInterval(),
):
    """Time estimate from an arbitrary projection with anisotropic spectrum.

    ``basis`` is a ``d x m`` orthonormal column set; ``projected_eigenvalues``
    is the spectrum of the data covariance compressed onto it. The mean
    eigenvalue plays the role of ``sigma2`` in the inversion. Also returns the
    effective rank of ``(1-t)^2 I + t^2 Sigma_P`` at the estimate (``None``
    when discarded), which sets the concentration rate.
    """
    Q, mu = _check_projection(basis, projected_eigenvalues)
    proj = np.asarray(z, dtype=np.float64) @ Q
    est = invert_clock(float(np.dot(proj, proj) / Q.shape[1]), float(mu.mean()), branch, clip_interval)
    if est.t_hat is None:
        return est, None
    t = est.t_hat
    return est, effective_rank((1.0 - t) ** 2 + t * t * mu)


def general_rate_std(projected_eigenvalues, t: float) -> float:
    """Predicted std of the general estimator at true time ``t``."""
    mu = np.asarray(projected_eigenvalues, dtype=np.float64)
    value, deriv = clock_eval(float(mu.mean()), t)
    r = effective_rank((1.0 - t) ** 2 + t * t * mu)
    return float(np.sqrt(2.0 / r) * value / abs(deriv))


def status_names(codes) -> list[str]:
    return [_STATUS_CODES[int(c)].value for c in np.asarray(codes).ravel()]
