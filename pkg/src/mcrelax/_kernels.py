"""Compiled per-element kernels for the local dual set.

Every batch element is processed independently and sequentially, so the
result for one element never depends on the rest of the batch.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _violation(x, d):
    dim, l = x.shape
    viol = 0.0
    for r in range(dim):
        acc = 0.0
        for k in range(l):
            acc += x[r, k]
        viol = max(viol, abs(acc))
    for i in range(l):
        for j in range(i + 1, l):
            sq = 0.0
            for r in range(dim):
                t = x[r, i] - x[r, j]
                sq += t * t
            viol = max(viol, np.sqrt(sq) - d[i, j])
    return viol


@njit(cache=True)
def _dykstra(x, d, max_sweeps, tol, inc_pair, inc_plane, prev):
    """Project ``x`` (dim, l) in place; return (sweeps, converged)."""
    dim, l = x.shape
    inc_pair[:] = 0.0
    inc_plane[:] = 0.0
    for sweep in range(1, max_sweeps + 1):
        prev[:] = x
        k = 0
        for i in range(l):
            for j in range(i + 1, l):
                sq = 0.0
                for r in range(dim):
                    t = (x[r, i] + inc_pair[k, r, 0]) - (x[r, j] + inc_pair[k, r, 1])
                    sq += t * t
                norm = np.sqrt(sq)
                shrink = 0.0
                if norm > d[i, j]:
                    shrink = 1.0 - d[i, j] / norm
                for r in range(dim):
                    a = x[r, i] + inc_pair[k, r, 0]
                    b = x[r, j] + inc_pair[k, r, 1]
                    shift = 0.5 * shrink * (a - b)
                    x[r, i] = a - shift
                    x[r, j] = b + shift
                    inc_pair[k, r, 0] = shift
                    inc_pair[k, r, 1] = -shift
                k += 1
        for r in range(dim):
            mean = 0.0
            for c in range(l):
                mean += x[r, c] + inc_plane[r, c]
            mean /= l
            for c in range(l):
                y = x[r, c] + inc_plane[r, c]
                x[r, c] = y - mean
                inc_plane[r, c] = mean
        move = 0.0
        for r in range(dim):
            for c in range(l):
                move = max(move, abs(x[r, c] - prev[r, c]))
        if max(_violation(x, d), 0.0) + move < tol:
            return sweep, True
    return max_sweeps, False


@njit(cache=True)
def dykstra_batch(xs, d, max_sweeps, tol):
    n, dim, l = xs.shape
    npairs = l * (l - 1) // 2
    inc_pair = np.empty((npairs, dim, 2))
    inc_plane = np.empty((dim, l))
    prev = np.empty((dim, l))
    sweeps = np.empty(n, dtype=np.int64)
    ok = np.empty(n, dtype=np.bool_)
    for e in range(n):
        s, c = _dykstra(xs[e], d, max_sweeps, tol, inc_pair, inc_plane, prev)
        sweeps[e] = s
        ok[e] = c
    return sweeps, ok


@njit(cache=True)
def shrink_one(v, d):
    """Re-center rows and scale by the largest factor <= 1 that restores feasibility."""
    dim, l = v.shape
    for r in range(dim):
        mean = 0.0
        for c in range(l):
            mean += v[r, c]
        mean /= l
        for c in range(l):
            v[r, c] -= mean
    factor = 1.0
    for i in range(l):
        for j in range(i + 1, l):
            sq = 0.0
            for r in range(dim):
                t = v[r, i] - v[r, j]
                sq += t * t
            dist = np.sqrt(sq)
            if dist > d[i, j]:
                factor = min(factor, d[i, j] / dist)
    if factor < 1.0:
        factor *= 1.0 - 4.0 * 2.220446049250313e-16
        for r in range(dim):
            for c in range(l):
                v[r, c] *= factor


@njit(cache=True)
def ascent_batch(zn, v, d, max_iters, rtol, max_sweeps, tol):
    """Projected gradient ascent of ``<zn, v>`` over the local dual set.

    ``zn`` holds unit-Frobenius-norm arguments, ``v`` feasible starting
    points (overwritten with the final iterates, shrunk to exact
    feasibility). Returns (values, residuals, converged).
    """
    n, dim, l = zn.shape
    npairs = l * (l - 1) // 2
    inc_pair = np.empty((npairs, dim, 2))
    inc_plane = np.empty((dim, l))
    prev = np.empty((dim, l))
    trial = np.empty((dim, l))
    values = np.empty(n)
    residuals = np.zeros(n)
    ok = np.empty(n, dtype=np.bool_)
    for e in range(n):
        x = v[e]
        z = zn[e]
        val = 0.0
        for r in range(dim):
            for c in range(l):
                val += z[r, c] * x[r, c]
        done = False
        inner_ok = True
        for it in range(max_iters):
            for r in range(dim):
                for c in range(l):
                    trial[r, c] = x[r, c] + z[r, c]
            _, c_ok = _dykstra(trial, d, max_sweeps, tol, inc_pair, inc_plane, prev)
            inner_ok = inner_ok and c_ok
            res = 0.0
            new = 0.0
            for r in range(dim):
                for c in range(l):
                    res = max(res, abs(trial[r, c] - x[r, c]))
                    x[r, c] = trial[r, c]
                    new += z[r, c] * x[r, c]
            residuals[e] = res
            if abs(new - val) <= rtol * abs(new):
                val = new
                done = True
                break
            val = new
        shrink_one(x, d)
        val = 0.0
        for r in range(dim):
            for c in range(l):
                val += z[r, c] * x[r, c]
        values[e] = val
        ok[e] = done and inner_ok
    return values, residuals, ok
