"""Experiment drivers: (d, k) decomposition grid, estimator error histograms,
binned error versus true time, and the clock critical-point table."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decomposition import DEFAULT_INTERVAL, decompose
from .estimator import Status, _STATUS_CODES, estimate_times, theory_prediction
from .io import write_csv
from .model import SpikedModel, TimeInterval, critical_point, equal_spikes, iter_batches

SWEEP_HEADER = ["d", "k", "term1", "coupling_variance", "total", "gap", "ratio", "mc_se", "seed", "n_outer", "grid_n"]
HISTOGRAM_HEADER = ["bin_lo", "bin_hi", "count"]
MAE_HEADER = ["t_center", "mae", "n", "reflection_pred"]
CLOCK_HEADER = ["sigma2", "t_star", "clock_min"]

EDGE_MASS = 0.05

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(base: int, *parts: int) -> int:
    """Fold integers into a seed: ``h = splitmix64(h ^ p)`` starting from
    ``splitmix64(base)``, truncated to 63 bits."""
    h = splitmix64(int(base) & _MASK64)
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h >> 1


@dataclass(frozen=True)
class SweepRow:
    d: int
    k: int
    term1: float
    coupling_variance: float
    total: float
    gap: float
    ratio: float
    mc_se: float
    seed: int
    n_outer: int
    grid_n: int

    def as_tuple(self):
        return tuple(getattr(self, h) for h in SWEEP_HEADER)


@dataclass
class SweepTable:
    rows: list[SweepRow]
    skipped: list[tuple[int, int]] = field(default_factory=list)

    def cell(self, d: int, k: int) -> SweepRow:
        for r in self.rows:
            if r.d == d and r.k == k:
                return r
        raise KeyError((d, k))

    def write(self, path) -> None:
        write_csv(path, SWEEP_HEADER, [r.as_tuple() for r in self.rows])


def sweep_dk(
    d_list,
    k_list,
    S: float = 10.0,
    sigma2: float = 0.01,
    interval: TimeInterval = DEFAULT_INTERVAL,
    n_outer: int = 200_000,
    grid_n: int = 2000,
    seed: int = 0,
    jobs: int = 1,
) -> SweepTable:
    """Decompose every admissible cell ``k < d`` of the grid.

    Signal eigenvalues all equal ``S`` (spike excess ``S - sigma2``). Cell
    seeds are ``mix_seed(seed, d, k)``.
    """
    if not len(d_list) or not len(k_list):
        raise ValueError("d_list and k_list must be non-empty")
    cells, skipped = [], []
    for d in sorted(set(int(v) for v in d_list)):
        for k in sorted(set(int(v) for v in k_list)):
            (cells if k < d else skipped).append((d, k))

    def run(cell):
        d, k = cell
        cell_seed = mix_seed(seed, d, k)
        rep = decompose(equal_spikes(d, k, S, sigma2), interval, n_outer, grid_n, cell_seed)
        return SweepRow(
            d, k, rep.term1, rep.coupling_variance, rep.total_timeblind_variance, rep.gap,
            rep.ratio, rep.mc_standard_error, cell_seed, n_outer, grid_n,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    rows.sort(key=lambda r: (r.d, r.k))
    return SweepTable(rows, skipped)


@dataclass(frozen=True, eq=False)
class ErrorHistogram:
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    empirical_std: float
    theory_std: float
    n_used: int
    n_discarded: int
    mae: float
    errors: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)

    @property
    def n_total(self) -> int:
        return self.n_used + self.n_discarded

    def write(self, path) -> None:
        e = self.bin_edges
        write_csv(path, HISTOGRAM_HEADER, zip(e[:-1], e[1:], self.bin_counts))


def _estimate_stream(model, n, t_mode, branch, seed):
    """True times and estimates for ``n`` fresh interpolants, chunk by chunk."""
    ts, th, codes = [], [], []
    for batch in iter_batches(model, n, t_mode, seed):
        est, c = estimate_times(batch.z, model, branch)
        ts.append(batch.t)
        th.append(est)
        codes.append(c)
    return np.concatenate(ts), np.concatenate(th), np.concatenate(codes)


def error_histogram(
    model: SpikedModel,
    n: int,
    t_mode=TimeInterval(),
    branch: str = "descending",
    n_bins: int = 101,
    seed: int = 0,
) -> ErrorHistogram:
    """Histogram of ``t_hat - t`` over non-discarded samples, symmetric about 0."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    t, t_hat, codes = _estimate_stream(model, n, t_mode, branch, seed)
    used = codes != _STATUS_CODES.index(Status.DISCARDED)
    err = t_hat[used] - t[used]
    half = float(np.max(np.abs(err))) if err.size else 1.0
    half = half * (1 + 1e-12) if half > 0 else 1.0
    edges = np.linspace(-half, half, n_bins + 1)
    counts, _ = np.histogram(err, bins=edges)
    theory = theory_prediction(model.sigma2, model.n_residual, t)
    return ErrorHistogram(
        bin_edges=edges,
        bin_counts=counts,
        empirical_std=float(np.std(err)),
        theory_std=theory.aggregate_std,
        n_used=int(used.sum()),
        n_discarded=int((~used).sum()),
        mae=float(np.mean(np.abs(err))),
        errors=err,
        t=t[used],
    )


@dataclass(frozen=True, eq=False)
class BinnedMae:
    t_bin_centers: np.ndarray
    bin_edges: np.ndarray
    mae_per_bin: np.ndarray  # NaN for empty bins
    counts: np.ndarray
    discarded: np.ndarray
    t_star: float
    predicted_reflection_error: np.ndarray
    edge_mass: float

    def write(self, path) -> None:
        rows = []
        for c, m, n, p in zip(self.t_bin_centers, self.mae_per_bin, self.counts, self.predicted_reflection_error):
            empty = n == 0
            rows.append((c, None if empty else m, n, None if empty else p))
        write_csv(path, MAE_HEADER, rows)


def reflection_error(t, t_star):
    """Error of the descending inverter at true time ``t``: ``2 (t - t*)`` past ``t*``."""
    return np.maximum(0.0, 2.0 * (np.asarray(t, dtype=np.float64) - t_star))


def binned_mae(
    model: SpikedModel,
    n: int,
    n_bins: int = 50,
    branch: str = "descending",
    seed: int = 0,
    edge_mass: float = EDGE_MASS,
) -> BinnedMae:
    """Mean ``|t_hat - t|`` per true-time bin, ``t ~ U[0,1]`` plus a point mass at 1.

    ``round(edge_mass * n)`` samples sit exactly at ``t = 1``. The reflection
    prediction of a bin is the average of :func:`reflection_error` over the
    bin's own samples.
    """
    if n < 10 * n_bins:
        raise ValueError("n must be >= 10 * n_bins")
    n_edge = int(round(edge_mass * n))
    parts = []
    if n - n_edge:
        parts.append(_estimate_stream(model, n - n_edge, TimeInterval(), branch, mix_seed(seed, 1)))
    if n_edge:
        parts.append(_estimate_stream(model, n_edge, 1.0, branch, mix_seed(seed, 2)))
    t = np.concatenate([p[0] for p in parts])
    t_hat = np.concatenate([p[1] for p in parts])
    codes = np.concatenate([p[2] for p in parts])
    used = codes != _STATUS_CODES.index(Status.DISCARDED)

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, n_bins - 1)
    t_star = critical_point(model.sigma2)
    refl = reflection_error(t, t_star)
    abserr = np.abs(t_hat - t)
    mae = np.full(n_bins, np.nan)
    pred = np.full(n_bins, np.nan)
    counts = np.zeros(n_bins, dtype=np.int64)
    discarded = np.zeros(n_bins, dtype=np.int64)
    for b in range(n_bins):
        inb = idx == b
        sel = inb & used
        counts[b] = sel.sum()
        discarded[b] = (inb & ~used).sum()
        if counts[b]:
            mae[b] = abserr[sel].mean()
            pred[b] = refl[sel].mean()
    return BinnedMae(
        t_bin_centers=0.5 * (edges[:-1] + edges[1:]),
        bin_edges=edges,
        mae_per_bin=mae,
        counts=counts,
        discarded=discarded,
        t_star=t_star,
        predicted_reflection_error=pred,
        edge_mass=edge_mass,
    )


def clock_table(sigma2_list):
    """Rows ``(sigma2, t*, clock minimum sigma2/(1+sigma2))``."""
    rows = []
    for s2 in sigma2_list:
        s2 = float(s2)
        if not (math.isfinite(s2) and s2 > 0):
            raise ValueError(f"sigma2 must be > 0, got {s2}")
        rows.append((s2, critical_point(s2), s2 / (1.0 + s2)))
    return rows


def write_clock_table(path, rows) -> None:
    write_csv(path, CLOCK_HEADER, rows)


@dataclass(frozen=True)
class DataEstimate:
    n: int
    n_discarded: int
    mae: float
    empirical_std: float
    theory_std: float
    mae_identifiable: float
    theory_mae_identifiable: float
    n_identifiable: int


def estimate_on_data(fit, X, n: int, seed: int = 0, exclusion_halfwidth: float = 0.05) -> DataEstimate:
    """Run the fitted-model estimator on interpolants built from rows of ``X``.

    Rows are drawn with replacement and centred with the fitted mean; noise is
    standard normal and ``t ~ U[0, 1]``. The ``identifiable`` figures keep
    only samples with ``t <= t* - exclusion_halfwidth``, where the descending
    inverter is the correct branch; their theory value is the expected
    absolute value of the delta-method Gaussian, ``sqrt(2/pi) * std``.
    """
    from .estimator import per_sample_variance

    model = fit.to_model()
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    rows = rng.integers(0, X.shape[0], n)
    t = rng.uniform(0.0, 1.0, n)
    eps = rng.standard_normal((n, model.d))
    xc = X[rows] - fit.mean
    z = (1.0 - t)[:, None] * eps + t[:, None] * xc
    t_hat, codes = estimate_times(z, model)
    used = codes != _STATUS_CODES.index(Status.DISCARDED)
    err = t_hat[used] - t[used]
    t_star = critical_point(model.sigma2)
    ident = used & (t <= t_star - exclusion_halfwidth)
    theory = theory_prediction(model.sigma2, model.n_residual, t, exclusion_halfwidth)
    th_std_ident = np.sqrt(per_sample_variance(model.sigma2, model.n_residual, t[ident]))
    return DataEstimate(
        n=n,
        n_discarded=int((~used).sum()),
        mae=float(np.mean(np.abs(err))),
        empirical_std=float(np.std(err)),
        theory_std=theory.aggregate_std,
        mae_identifiable=float(np.mean(np.abs(t_hat[ident] - t[ident]))),
        theory_mae_identifiable=float(np.sqrt(2.0 / np.pi) * th_std_ident.mean()),
        n_identifiable=int(ident.sum()),
    )
