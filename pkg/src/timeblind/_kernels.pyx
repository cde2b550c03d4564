# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`timeblind._pykernels`."""

import numpy as np

from libc.math cimport exp, INFINITY


def posterior_moments(
    const double[:, ::1] energies,
    const double[::1] base,
    const double[:, ::1] inv_2v,
    const double[:, ::1] alpha,
    const double[::1] cond_var,
):
    """Posterior-weighted moments over a time grid, one row of ``energies`` per z.

    energies : (n, C) squared norm of z per variance class
    base     : (G,) log prior minus 0.5 * sum_c count_c * log v_c(t_g)
    inv_2v   : (G, C) 1 / (2 v_c(t_g))
    alpha    : (C, G) regression slope of class c at t_g
    cond_var : (G,) sum_i Var(u_i | z, t_g)

    Returns ``(mean_cond_var, spread)`` where ``mean_cond_var[i]`` is the
    posterior mean of ``cond_var`` and ``spread[i] = sum_c energies[i, c] *
    Var_post(alpha_c)``.
    """
    cdef Py_ssize_t n = energies.shape[0]
    cdef Py_ssize_t C = energies.shape[1]
    cdef Py_ssize_t G = base.shape[0]
    if inv_2v.shape[0] != G or inv_2v.shape[1] != C:
        raise ValueError("inv_2v must have shape (G, C)")
    if alpha.shape[0] != C or alpha.shape[1] != G or cond_var.shape[0] != G:
        raise ValueError("alpha must have shape (C, G) and cond_var (G,)")

    out_cv = np.empty(n)
    out_spread = np.empty(n)
    buf_arr = np.empty(G)
    cdef double[::1] ocv = out_cv
    cdef double[::1] osp = out_spread
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t i, g, c
    cdef double l, mx, w, tot, ecv, m, s, a, spread

    with nogil:
        for i in range(n):
            mx = -INFINITY
            for g in range(G):
                l = base[g]
                for c in range(C):
                    l -= energies[i, c] * inv_2v[g, c]
                buf[g] = l
                if l > mx:
                    mx = l
            tot = 0.0
            ecv = 0.0
            for g in range(G):
                w = exp(buf[g] - mx)
                buf[g] = w
                tot += w
                ecv += w * cond_var[g]
            ocv[i] = ecv / tot
            spread = 0.0
            for c in range(C):
                m = 0.0
                for g in range(G):
                    m += buf[g] * alpha[c, g]
                m /= tot
                s = 0.0
                for g in range(G):
                    a = alpha[c, g] - m
                    s += buf[g] * a * a
                spread += energies[i, c] * (s / tot)
            osp[i] = spread
    return out_cv, out_spread


def hungarian(const double[:, ::1] cost):
    """Minimum-cost perfect matching; returns ``perm`` with row i -> column perm[i].

    Shortest-augmenting-path with dual potentials, O(B^3). Among equal
    reduced costs the lowest column index wins.
    """
    cdef Py_ssize_t n = cost.shape[0]
    if cost.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    minv_arr = np.empty(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.intp)
    way_arr = np.zeros(n + 1, dtype=np.intp)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] minv = minv_arr
    cdef Py_ssize_t[::1] p = p_arr
    cdef Py_ssize_t[::1] way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur

    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
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
            while j0 != 0:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1

    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p_arr[j] - 1] = j - 1
    return perm
