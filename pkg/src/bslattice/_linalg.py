"""Largest singular value of matrix-free operators."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

DENSE_LIMIT = 1500


class ConvergenceError(RuntimeError):
    """Singular-value iteration failed to settle.

    Attributes
    ----------
    iterates : tuple of float
        The last two singular-value estimates.
    """

    def __init__(self, message, iterates):
        super().__init__(f"{message}; last two iterates {iterates}")
        self.iterates = iterates


def dense_norm(a):
    """Spectral norm of a dense matrix via LAPACK."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if a.shape == (1, 1):
        return float(abs(a[0, 0]))
    return float(np.linalg.norm(a, 2))


def largest_singular_value(matvec, rmatvec, n, dtype=complex, tol=1e-8, v0=None,
                           basis=30, max_restarts=40, seed=0):
    """Top singular value of K from products with K and K^H.

    Restarted Lanczos on K^H K with full reorthogonalisation.  Iteration
    stops when the Ritz residual is below ``tol`` times the Ritz value,
    which bounds the relative error of sigma^2 by ``tol``.

    Parameters
    ----------
    matvec, rmatvec : callable
        Products u -> K u and v -> K^H v on flat vectors of length n.
    n : int
        Number of columns.
    tol : float
        Relative tolerance.
    v0 : ndarray, optional
        Starting vector, e.g. the singular vector of a nearby problem.

    Returns
    -------
    sigma : float
    v : ndarray
        Approximate top right singular vector (unit norm).
    """
    if n == 0:
        return 0.0, np.zeros(0, dtype=dtype)
    if v0 is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(n).astype(dtype)
        v += 1.0
    else:
        v = np.asarray(v0, dtype=dtype).ravel().copy()
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero starting vector")
    v /= nv
    history = []
    m = min(basis, n)
    for _ in range(max_restarts):
        V = np.empty((m + 1, n), dtype=dtype)
        V[0] = v
        alpha = []
        beta = []
        for j in range(m):
            w = rmatvec(matvec(V[j]))
            a = float(np.vdot(V[j], w).real)
            alpha.append(a)
            w = w - a * V[j]
            if j > 0:
                w = w - beta[j - 1] * V[j - 1]
            for _ in range(2):
                w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
            b = float(np.linalg.norm(w))
            if j == 0:
                evals, evecs = np.array([a]), np.ones((1, 1))
            else:
                evals, evecs = eigh_tridiagonal(np.array(alpha), np.array(beta))
            theta = float(evals[-1])
            s = evecs[:, -1]
            resid = b * abs(s[-1])
            history.append(np.sqrt(max(theta, 0.0)))
            if theta <= 0:
                if b <= 1e-300:
                    return 0.0, V[0]
            elif resid <= tol * theta or b <= 1e-14 * theta:
                x = V[: j + 1].T @ s
                return float(np.sqrt(theta)), x / np.linalg.norm(x)
            if j + 1 == m or b == 0:
                break
            beta.append(b)
            V[j + 1] = w / b
        x = V[: len(alpha)].T @ s
        v = x / np.linalg.norm(x)
    raise ConvergenceError("Lanczos did not converge", tuple(history[-2:]))


def operator_norm(op, tol=1e-8, v0=None, return_vector=False):
    """Spectral norm of an operator exposing ``shape``, ``matvec``, ``rmatvec``.

    Small problems go to a dense LAPACK SVD; large ones to Lanczos.
    """
    n = op.shape[1]
    if n <= DENSE_LIMIT and hasattr(op, "dense"):
        val = dense_norm(op.dense())
        return (val, None) if return_vector else val
    val, vec = largest_singular_value(op.matvec, op.rmatvec, n, tol=tol, v0=v0)
    return (val, vec) if return_vector else val
