"""Spiked Gaussian data model and linear-path interpolant sampling.

Data covariance is ``U diag(lambdas) U^T + sigma2 * I``; the per-coordinate
variances along the eigenbasis are ``S_i = lambdas_i + sigma2`` for the ``k``
signal directions and ``sigma2`` for the ``d - k`` residual directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence, Union

import numpy as np

# Rows per RNG chunk. Fixed so that results never depend on how work is split.
CHUNK_ROWS = 4096


@dataclass(frozen=True)
class TimeInterval:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"need 0 <= lo < hi <= 1, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def grid(self, n: int) -> np.ndarray:
        """Uniform grid with both endpoints; a single node sits at the midpoint."""
        if n < 1:
            raise ValueError("grid needs at least one node")
        if n == 1:
            return np.array([0.5 * (self.lo + self.hi)])
        return np.linspace(self.lo, self.hi, n)


@dataclass(frozen=True, eq=False)
class SpikedModel:
    d: int
    k: int
    lambdas: np.ndarray
    sigma2: float
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def axis_aligned(self) -> bool:
        return self.basis is None

    @property
    def n_residual(self) -> int:
        return self.d - self.k

    @property
    def S(self) -> np.ndarray:
        """Covariance eigenvalues, signal directions first."""
        s = np.full(self.d, self.sigma2)
        s[: self.k] += self.lambdas
        return s

    @cached_property
    def _classes(self):
        values: list[float] = []
        counts: list[int] = []
        member = np.empty(self.k, dtype=np.int64)
        for j, s in enumerate(self.lambdas + self.sigma2):
            s = float(s)
            if s not in values:
                values.append(s)
                counts.append(0)
            c = values.index(s)
            counts[c] += 1
            member[j] = c
        values.append(float(self.sigma2))
        counts.append(self.n_residual)
        onehot = np.zeros((self.k, len(values)))
        onehot[np.arange(self.k), member] = 1.0
        return np.array(values), np.array(counts, dtype=np.int64), onehot

    def variance_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct eigenvalues and their multiplicities.

        Signal eigenvalues come first in order of appearance; the residual
        floor is always the last class.
        """
        values, counts, _ = self._classes
        return values, counts

    def class_energies(self, z: np.ndarray) -> np.ndarray:
        """Squared norm of each row of ``z`` restricted to every variance class.

        Columns follow :meth:`variance_classes`. ``z`` may be a single vector.
        """
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.d:
            raise ValueError(f"expected vectors of length {self.d}, got {z.shape[1]}")
        sig = z[:, : self.k] if self.axis_aligned else z @ self.basis
        out = (sig * sig) @ self._classes[2]
        out[:, -1] = self.residual_energy(z)
        return out

    def residual_energy(self, z: np.ndarray) -> np.ndarray:
        """``||P_perp z||^2`` for each row of ``z``."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.d:
            raise ValueError(f"expected vectors of length {self.d}, got {z.shape[1]}")
        if self.axis_aligned:
            res = z[:, self.k :]
            return np.einsum("ij,ij->i", res, res)
        proj = z @ self.basis
        total = np.einsum("ij,ij->i", z, z)
        return np.maximum(total - np.einsum("ij,ij->i", proj, proj), 0.0)

    def sample_data(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` rows from N(0, Sigma)."""
        if self.axis_aligned:
            return rng.standard_normal((n, self.d)) * np.sqrt(self.S)
        x = np.sqrt(self.sigma2) * rng.standard_normal((n, self.d))
        h = rng.standard_normal((n, self.k)) * np.sqrt(self.lambdas)
        return x + h @ self.basis.T


def make_model(
    d: int,
    k: int,
    lambdas: Sequence[float] | np.ndarray,
    sigma2: float,
    basis: np.ndarray | None = None,
) -> SpikedModel:
    """Validate parameters and build a :class:`SpikedModel`.

    ``basis`` is ``None`` for the axis-aligned model (signal = first ``k``
    coordinates) or an explicit ``d x k`` orthonormal column set.
    """
    d, k = int(d), int(k)
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if not 0 <= k < d:
        raise ValueError(f"need 0 <= k < d, got k={k}, d={d}")
    lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if lam.shape[0] != k:
        raise ValueError(f"expected {k} spike excesses, got {lam.shape[0]}")
    if np.any(~np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("spike excesses must be finite and >= 0")
    sigma2 = float(sigma2)
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    if basis is not None:
        basis = np.array(basis, dtype=np.float64)
        if basis.shape != (d, k):
            raise ValueError(f"basis must be {d}x{k}, got {basis.shape}")
        gram_err = np.max(np.abs(basis.T @ basis - np.eye(k))) if k else 0.0
        if gram_err > 1e-8:
            raise ValueError(f"basis columns are not orthonormal (max error {gram_err:.3g})")
        basis.setflags(write=False)
    lam.setflags(write=False)
    return SpikedModel(d, k, lam, sigma2, basis)


def equal_spikes(d: int, k: int, S: float, sigma2: float) -> SpikedModel:
    """Model whose signal eigenvalues all equal ``S`` (excess ``S - sigma2``)."""
    return make_model(d, k, np.full(k, S - sigma2), sigma2)


@dataclass(frozen=True, eq=False)
class InterpolantBatch:
    t: np.ndarray
    eps: np.ndarray
    x: np.ndarray

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def z(self) -> np.ndarray:
        return (1.0 - self.t)[:, None] * self.eps + self.t[:, None] * self.x

    @property
    def u(self) -> np.ndarray:
        return self.x - self.eps


TimeMode = Union[float, TimeInterval]


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for chunk ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def draw_times(t_mode: TimeMode, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(t_mode, TimeInterval):
        return rng.uniform(t_mode.lo, t_mode.hi, n)
    t = float(t_mode)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"fixed time must lie in [0, 1], got {t}")
    return np.full(n, t)


def iter_batches(
    model: SpikedModel, n: int, t_mode: TimeMode, seed: int, chunk: int = CHUNK_ROWS
) -> Iterator[InterpolantBatch]:
    """Yield the rows of :func:`sample_batch` chunk by chunk."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for index, start in enumerate(range(0, n, chunk)):
        yield _sample_chunk(model, min(chunk, n - start), t_mode, seed, index)


def _sample_chunk(model, m, t_mode, seed, index):
    rng = chunk_rng(seed, index)
    t = draw_times(t_mode, m, rng)
    eps = rng.standard_normal((m, model.d))
    x = model.sample_data(m, rng)
    return InterpolantBatch(t, eps, x)


def sample_batch(model: SpikedModel, n: int, t_mode: TimeMode, seed: int) -> InterpolantBatch:
    """Draw ``n`` i.i.d. triples ``(eps, x, t)``; ``z`` and ``u`` are derived.

    ``t_mode`` is a float for a fixed time or a :class:`TimeInterval` for
    uniform times on that interval.
    """
    parts = list(iter_batches(model, n, t_mode, seed))
    return InterpolantBatch(
        np.concatenate([p.t for p in parts]),
        np.concatenate([p.eps for p in parts]),
        np.concatenate([p.x for p in parts]),
    )


def clock_eval(sigma2: float, t):
    """Residual-subspace variance ``(1-t)^2 + t^2 sigma2`` and its t-derivative."""
    t = np.asarray(t, dtype=np.float64)
    value = (1.0 - t) ** 2 + t * t * sigma2
    deriv = -2.0 * (1.0 - t) + 2.0 * t * sigma2
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def critical_point(sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    return 1.0 / (1.0 + sigma2)


def coordinate_stats(model_or_S, t: float):
    """Per-coordinate ``(S, r, alpha)`` at time ``t``.

    ``r = (1-t)^2 + t^2 S`` is Var(z_i | t) and ``alpha = (t S - (1-t)) / r``
    is the least-squares slope of ``u_i`` on ``z_i``. Accepts a model or an
    array of eigenvalues.
    """
    S = model_or_S.S if isinstance(model_or_S, SpikedModel) else np.asarray(model_or_S, float)
    r = (1.0 - t) ** 2 + t * t * S
    alpha = (t * S - (1.0 - t)) / r
    return S, r, alpha


def term_one(model: SpikedModel) -> float:
    """``tr Cov(u) = sum_i (S_i + 1)``."""
    return float(np.sum(model.lambdas)) + model.d * (model.sigma2 + 1.0)
