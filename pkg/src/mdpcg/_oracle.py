"""Compiled vertex oracle: greedy policy on frozen rewards and its density.

Falls back to numpy when numba is unavailable or ``MDPCG_NO_JIT`` is set.
"""
import os

import numpy as np


def greedy_density_numpy(kernel, p, r):
    T, S, A = r.shape
    pi = np.empty((T, S), dtype=np.intp)
    v = None
    for t in range(T - 1, -1, -1):
        q = r[t] if v is None else r[t] + np.tensordot(v, kernel[t], axes=(0, 0))
        pi[t] = q.argmax(axis=1)
        v = q.max(axis=1)
    d = np.zeros((T, S, A))
    states = np.arange(S)
    mass = p
    for t in range(T):
        if t > 0:
            mass = np.tensordot(kernel[t - 1], d[t - 1], axes=([1, 2], [0, 1]))
        d[t, states, pi[t]] = mass
    return d


def _greedy_density_loops(kernel, p, r):
    T, S, A = r.shape
    pi = np.empty((T, S), dtype=np.int64)
    v = np.zeros(S)
    v_next = np.zeros(S)
    for t in range(T - 1, -1, -1):
        for s in range(S):
            best = -np.inf
            best_a = 0
            for a in range(A):
                q = r[t, s, a]
                if t < T - 1:
                    for n in range(S):
                        q += kernel[t, n, s, a] * v_next[n]
                if q > best:
                    best = q
                    best_a = a
            pi[t, s] = best_a
            v[s] = best
        for s in range(S):
            v_next[s] = v[s]
    d = np.zeros((T, S, A))
    for s in range(S):
        d[0, s, pi[0, s]] = p[s]
    for t in range(1, T):
        for s in range(S):
            a = pi[t - 1, s]
            mass = d[t - 1, s, a]
            if mass != 0.0:
                for n in range(S):
                    d[t, n, pi[t, n]] += kernel[t - 1, n, s, a] * mass
    return d


greedy_density = greedy_density_numpy
JIT = False
if not os.environ.get("MDPCG_NO_JIT"):
    try:
        import numba
    except ImportError:  # pragma: no cover
        pass
    else:
        _jitted = numba.njit(cache=True)(_greedy_density_loops)

        def greedy_density(kernel, p, r):
            return _jitted(np.ascontiguousarray(kernel, dtype=np.float64),
                           np.ascontiguousarray(p, dtype=np.float64),
                           np.ascontiguousarray(r, dtype=np.float64))

        JIT = True
