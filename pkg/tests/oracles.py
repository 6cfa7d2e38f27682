"""Independent reference computations used only by the tests."""

from __future__ import annotations

import math

import numpy as np


def newton_stages(T, f, t, x, h, tol=1e-14, max_iters=100, fd_step=1e-7):
    """Damped Newton on ``y - 1 (x) x - h (A (x) I) F(y) = 0`` with a finite-difference Jacobian.

    Uses the standard stage times ``t + c_i h``; the test fields are autonomous.
    Returns the stacked stage vector of length ``s n``.
    """
    A = np.asarray(T.A, dtype=float)
    s = A.shape[0]
    x = np.asarray(x, dtype=float)
    n = x.size
    times = t + np.asarray(T.c, dtype=float) * h

    def G(y):
        Y = y.reshape(s, n)
        F = np.stack([np.asarray(f(times[i], Y[i]), dtype=float) for i in range(s)])
        return (Y - x[None, :] - h * A @ F).ravel()

    y = np.tile(x, s)
    g = G(y)
    for _ in range(max_iters):
        if np.max(np.abs(g)) <= tol:
            break
        J = np.empty((s * n, s * n))
        for k in range(s * n):
            e = np.zeros(s * n)
            e[k] = fd_step
            J[:, k] = (G(y + e) - G(y - e)) / (2 * fd_step)
        dy = np.linalg.solve(J, -g)
        step = 1.0
        g_norm = np.linalg.norm(g)
        while step > 1e-6:
            y_new = y + step * dy
            g_new = G(y_new)
            if np.linalg.norm(g_new) < g_norm:
                break
            step *= 0.5
        y, g = y_new, g_new
    return y


def fibonacci_sphere(count: int, dim: int) -> np.ndarray:
    """Near-uniform points on the unit sphere in R^1, R^2 or R^3."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2 * math.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        r = np.sqrt(1 - z**2)
        phi = math.pi * (3 - math.sqrt(5)) * k
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("dim must be 1, 2 or 3")


def brute_log_norm_neg_inverse(A: np.ndarray, d: np.ndarray, count: int = 10_000) -> float:
    """``-min_{||u||=1} <u, A^{-1} u>`` in the ``[d]``-weighted inner product, by grid search."""
    Ainv = np.linalg.inv(A)
    w = fibonacci_sphere(count, A.shape[0])
    u = w / np.sqrt(d)[None, :]  # unit in the weighted norm
    q = np.einsum("ki,i,ij,kj->k", u, d, Ainv, u)
    return -float(q.min())


def fd_log_norm(B, induced, h: float) -> float:
    """One-sided difference ``(||I + hB|| - 1) / h``."""
    B = np.asarray(B, dtype=float)
    return (induced(np.eye(B.shape[0]) + h * B) - 1.0) / h


def truncated_exp(z: float, order: int) -> float:
    return sum(z**k / math.factorial(k) for k in range(order + 1))
