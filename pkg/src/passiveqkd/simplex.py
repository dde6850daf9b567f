"""Dense two-phase simplex for small linear programs.

Solves ``min c.x`` subject to ``A x <= b`` and ``0 <= x <= upper``. Pivoting
uses Bland's rule (lowest index enters, lowest basic index leaves on ties),
so results are deterministic and cycling cannot occur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPInfeasibleError(ArithmeticError):
    """No point satisfies the constraints."""

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = list(violated)


class LPUnboundedError(ArithmeticError):
    pass


@dataclass
class LPSolution:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    piv = T[row]
    others = np.nonzero(T[:, col])[0]
    for r in others:
        if r != row:
            T[r] -= T[r, col] * piv
    T[:, col][np.abs(T[:, col]) < 1e-300] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _run(T, basis, n_cols, tol, max_iter):
    """Iterate on tableau T whose last row is the reduced-cost row."""
    m = T.shape[0] - 1
    it = 0
    while True:
        cost = T[-1, :n_cols]
        entering = np.nonzero(cost < -tol)[0]
        if entering.size == 0:
            return it
        col = int(entering[0])
        column = T[:m, col]
        pos = column > tol
        if not np.any(pos):
            raise LPUnboundedError("objective is unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tol * max(1.0, abs(best)))[0]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise ArithmeticError("simplex iteration limit reached")


def solve(c, A, b, upper=1.0, tol=1e-11, max_iter=10000):
    """Minimize ``c.x`` with ``A x <= b`` and ``0 <= x <= upper``."""
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = c.size
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
    finite = np.isfinite(upper)
    # upper bounds become ordinary rows
    A_full = np.vstack([A, np.eye(n)[finite]])
    b_full = np.concatenate([b, upper[finite]])
    # row scaling keeps coefficients spanning many decades well conditioned
    scale = np.max(np.abs(A_full), axis=1)
    scale[scale == 0] = 1.0
    A_full = A_full / scale[:, None]
    b_full = b_full / scale
    m = A_full.shape[0]

    neg = b_full < 0
    sign = np.where(neg, -1.0, 1.0)
    n_art = int(np.sum(neg))
    # columns: x (n), slacks (m), artificials (n_art), rhs
    T = np.zeros((m + 1, n + m + n_art + 1))
    T[:m, :n] = A_full * sign[:, None]
    T[:m, n:n + m] = np.diag(sign)
    T[:m, -1] = b_full * sign
    basis = np.empty(m, dtype=int)
    art_rows = np.nonzero(neg)[0]
    for k, r in enumerate(art_rows):
        T[r, n + m + k] = 1.0
        basis[r] = n + m + k
    for r in np.nonzero(~neg)[0]:
        basis[r] = n + r
    iters = 0
    if n_art:
        T[-1, :] = 0.0
        T[-1, n + m:n + m + n_art] = 1.0
        for r in art_rows:
            T[-1] -= T[r]
        iters += _run(T, basis, n + m + n_art, tol, max_iter)
        if -T[-1, -1] > 1e-9:
            residual = {
                int(r): float(T[i, -1]) for i, r in enumerate(basis)
                if r >= n + m and T[i, -1] > 1e-9
            }
            violated = [int(art_rows[a - n - m]) for a in residual]
            raise LPInfeasibleError(
                f"constraints infeasible (phase-one residual {-T[-1, -1]:.3e})", violated
            )
        # drive remaining zero-level artificials out of the basis
        for i in range(m):
            if basis[i] >= n + m:
                row = T[i, :n + m]
                cand = np.nonzero(np.abs(row) > tol)[0]
                if cand.size:
                    _pivot(T, basis, i, int(cand[0]))
        T = np.delete(T, np.s_[n + m:n + m + n_art], axis=1)
    T[-1, :] = 0.0
    T[-1, :n] = c
    for i, r in enumerate(basis):
        if r < n + m and T[-1, r] != 0:
            T[-1] -= T[-1, r] * T[i]
    iters += _run(T, basis, n + m, tol, max_iter)
    x = np.zeros(n + m)
    for i, r in enumerate(basis):
        if r < n + m:
            x[r] = T[i, -1]
    x = np.clip(x[:n], 0.0, upper)
    return LPSolution(x=x, objective=float(c @ x), iterations=iters)
