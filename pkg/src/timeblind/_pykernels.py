"""Reference implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or ``TIMEBLIND_PURE_PYTHON=1``.
"""

import math

import numpy as np

_ROWS = 512


def posterior_moments(energies, base, inv_2v, alpha, cond_var):
    energies = np.ascontiguousarray(energies, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    inv_2v = np.asarray(inv_2v, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    cond_var = np.asarray(cond_var, dtype=np.float64)
    n, C = energies.shape
    G = base.shape[0]
    if inv_2v.shape != (G, C):
        raise ValueError("inv_2v must have shape (G, C)")
    if alpha.shape != (C, G) or cond_var.shape != (G,):
        raise ValueError("alpha must have shape (C, G) and cond_var (G,)")
    out_cv = np.empty(n)
    out_spread = np.empty(n)
    for s in range(0, n, _ROWS):
        q = energies[s : s + _ROWS]
        logw = base[None, :] - q @ inv_2v.T
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        out_cv[s : s + _ROWS] = w @ cond_var
        mean_a = w @ alpha.T
        spread = np.empty_like(q)
        for c in range(C):
            dev = alpha[c][None, :] - mean_a[:, c : c + 1]
            spread[:, c] = np.einsum("ij,ij->i", w, dev * dev)
        out_spread[s : s + _ROWS] = np.einsum("ij,ij->i", q, spread)
    return out_cv, out_spread


def hungarian(cost):
    a = np.asarray(cost, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("cost matrix must be square")
    rows = a.tolist()
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm
