"""Exact mini-batch optimal-transport pairing under squared Euclidean cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .model import SpikedModel, chunk_rng

MODES = ("independent", "minibatch_ot")


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    permutation: np.ndarray
    total_cost: float


@dataclass(frozen=True)
class CouplingCostStats:
    mode: str
    batch_size: int
    n_batches: int
    mean_pair_cost: float
    std_error: float


def cost_matrix(eps_batch, x_batch) -> np.ndarray:
    """``C[i, j] = ||eps_i - x_j||^2``."""
    e = np.atleast_2d(np.asarray(eps_batch, dtype=np.float64))
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if e.shape != x.shape:
        raise ValueError(f"batch shapes differ: {e.shape} vs {x.shape}")
    diff = e[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _is_bijection(perm, n) -> bool:
    return perm.shape == (n,) and np.array_equal(np.sort(perm), np.arange(n))


def solve_assignment(cost) -> AssignmentResult:
    """Exact minimum-cost perfect matching of rows to columns."""
    C = np.ascontiguousarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    n = C.shape[0]
    perm = _backend.hungarian(C) if n else np.zeros(0, dtype=np.int64)
    if not _is_bijection(perm, n):
        raise RuntimeError("assignment solver returned a non-bijection")
    total = sum(C[i, perm[i]] for i in range(n))
    return AssignmentResult(perm, float(total))


def pair_minibatch(eps_batch, x_batch):
    """Reorder ``x_batch`` so row i is matched to ``eps_batch[i]``."""
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    res = solve_assignment(cost_matrix(eps_batch, x))
    return x[res.permutation], res


def coupling_cost_stats(
    model: SpikedModel, mode: str, batch_size: int, n_batches: int, seed: int = 0
) -> CouplingCostStats:
    """Mean squared pair distance ``||x - eps||^2`` under a pairing scheme.

    Batches are drawn from ``(seed, batch index)`` regardless of mode, so
    different modes with the same seed see identical draws.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if batch_size < 1 or n_batches < 1:
        raise ValueError("batch_size and n_batches must be >= 1")
    per_batch = np.empty(n_batches)
    for b in range(n_batches):
        rng = chunk_rng(seed, b)
        eps = rng.standard_normal((batch_size, model.d))
        x = model.sample_data(batch_size, rng)
        if mode == "minibatch_ot":
            x, _ = pair_minibatch(eps, x)
        diff = x - eps
        per_batch[b] = np.einsum("ij,ij->", diff, diff) / batch_size
    mean = math.fsum(per_batch) / n_batches
    se = float(np.std(per_batch, ddof=1) / math.sqrt(n_batches)) if n_batches > 1 else float("nan")
    return CouplingCostStats(mode, batch_size, n_batches, mean, se)
