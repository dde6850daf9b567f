"""Decoy-state linear programs on pseudo-yields.

Variables are Y'_0..Y'_ncut followed by e_nY'_0..e_nY'_ncut. Each region
contributes a two-sided constraint on its gain and error-gain; photon
numbers above the cutoff are worst-cased through the tail mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .regions import STATES_OF_BASIS
from .simplex import LPInfeasibleError
from .statistics import basis_average, check_proportionality


@dataclass
class Interval:
    lower: float
    upper: float


@dataclass
class DecoyLP:
    """``A x <= b`` with ``0 <= x <= 1``; ``labels`` names each row."""

    A: np.ndarray
    b: np.ndarray
    n_cut: int
    labels: list = field(default_factory=list)

    @property
    def n_vars(self):
        return 2 * (self.n_cut + 1)

    def y_index(self, n):
        return n

    def e_index(self, n):
        return self.n_cut + 1 + n

    def var_names(self):
        return [f"Y{n}" for n in range(self.n_cut + 1)] + [f"eY{n}" for n in range(self.n_cut + 1)]

    def dump(self):
        """Human-readable listing of the constraint system."""
        names = self.var_names()
        lines = [f"variables: {', '.join(names)} in [0, 1]"]
        for label, row, rhs in zip(self.labels, self.A, self.b):
            terms = " ".join(f"{v:+.6e}*{names[j]}" for j, v in enumerate(row) if v != 0)
            lines.append(f"{label}: {terms} <= {rhs:.9e}")
        return "\n".join(lines)


@dataclass
class DecoyBounds:
    y1_lower: float
    e1y1_upper: float
    e1y1_lower: float
    y1_upper: float = 1.0

    @property
    def e1_upper(self):
        if self.y1_lower <= 0:
            return 1.0
        return float(min(1.0, self.e1y1_upper / self.y1_lower))

    @property
    def e1_lower(self):
        if self.y1_upper <= 0:
            return 0.0
        return float(min(1.0, self.e1y1_lower / self.y1_upper))

    def to_dict(self):
        return {
            "y1_lower": self.y1_lower,
            "e1y1_upper": self.e1y1_upper,
            "e1y1_lower": self.e1y1_lower,
            "y1_upper": self.y1_upper,
            "e1_upper": self.e1_upper,
            "e1_lower": self.e1_lower,
        }


def asymptotic_intervals(st, widen=1.0, rel_floor=1e-12):
    """Gain and error-gain intervals from the quadrature error alone.

    A relative floor covers rounding in the constraint sums.
    """
    dq = widen * st.gain_err + rel_floor * abs(st.gain)
    de = widen * st.error_gain_err + rel_floor * abs(st.error_gain)
    return (
        Interval(st.gain - dq, st.gain + dq),
        Interval(st.error_gain - de, st.error_gain + de),
    )


def build_lp(stats, n_cut=None, intervals=None, pdf=None, check=True, tol=1e-6):
    """LP for one (Alice basis, Bob basis) pair over several decoy settings.

    ``stats`` are :class:`RegionStatistics` for the same state family at
    different decoy radii. ``intervals`` optionally replaces the observed
    gain/error-gain by ``(Interval, Interval)`` pairs, one per entry of
    ``stats``. When ``pdf`` is given (and regions are not points) the
    proportionality criterion is verified first.
    """
    if len(stats) < 1:
        raise ValueError("need at least one region")
    if n_cut is None:
        n_cut = min(s.n_cut for s in stats)
    if check and pdf is not None:
        check_proportionality([s.region for s in stats], pdf, tol=tol)
    nv = 2 * (n_cut + 1)
    rows, rhs, labels = [], [], []
    for k, st in enumerate(stats):
        p = np.asarray(st.photon_coeffs[: n_cut + 1], dtype=float)
        tail = max(0.0, 1.0 - float(np.sum(p)))
        q_int, e_int = intervals[k] if intervals is not None else asymptotic_intervals(st)
        # coefficient uncertainty shifts the sums by at most sum(coeff_err) * 1
        slack = float(np.sum(st.coeff_err[: n_cut + 1]))
        name = f"{st.region.name}/{st.bob_basis}"
        for off, iv, tag in ((0, q_int, "Q"), (n_cut + 1, e_int, "QE")):
            row = np.zeros(nv)
            row[off:off + n_cut + 1] = p
            rows.append(row)
            rhs.append(iv.upper + slack)
            labels.append(f"{name} {tag} upper")
            rows.append(-row)
            rhs.append(tail + slack - iv.lower)
            labels.append(f"{name} {tag} lower")
    for n in range(n_cut + 1):
        row = np.zeros(nv)
        row[n_cut + 1 + n] = 1.0
        row[n] = -1.0
        rows.append(row)
        rhs.append(0.0)
        labels.append(f"eY{n} <= Y{n}")
    return DecoyLP(np.array(rows), np.array(rhs), n_cut, labels)


def _solve(lp, c, solver):
    if solver == "simplex":
        try:
            return simplex.solve(c, lp.A, lp.b, upper=1.0).objective
        except LPInfeasibleError as exc:
            names = [lp.labels[i] if i < len(lp.labels) else f"bound row {i}" for i in exc.violated]
            raise LPInfeasibleError(f"{exc}; violated: {', '.join(names) or 'unknown'}", names) from exc
    if solver == "highs":
        from scipy.optimize import linprog

        scale = np.max(np.abs(lp.A), axis=1)
        scale[scale == 0] = 1.0
        res = linprog(c, A_ub=lp.A / scale[:, None], b_ub=lp.b / scale,
                      bounds=(0.0, 1.0), method="highs")
        if res.status == 2:
            raise LPInfeasibleError("constraints infeasible (HiGHS)")
        if res.status != 0:
            raise ArithmeticError(f"HiGHS failed: {res.message}")
        return float(res.fun)
    raise ValueError(f"unknown solver {solver!r}")


def solve_bounds(lp: DecoyLP, solver="simplex"):
    """Bounds on Y'_1 and e_1Y'_1 from four LP solves."""
    c = np.zeros(lp.n_vars)
    c[lp.y_index(1)] = 1.0
    y1 = _solve(lp, c, solver)
    y1_up = -_solve(lp, -c, solver)
    c = np.zeros(lp.n_vars)
    c[lp.e_index(1)] = -1.0
    e_up = -_solve(lp, c, solver)
    c[lp.e_index(1)] = 1.0
    e_lo = _solve(lp, c, solver)
    clip = lambda v: float(min(1.0, max(0.0, v)))
    return DecoyBounds(clip(y1), clip(e_up), clip(e_lo), clip(y1_up))


def paired_statistics(table, alice_basis, bob_basis):
    """Average paired states per decoy level.

    ``table`` maps ``(state, decoy_index, bob_basis)`` to RegionStatistics.
    Returns the averaged statistics ordered by decoy index.
    """
    states = STATES_OF_BASIS[alice_basis]
    levels = sorted({k for (s, k, b) in table if s in states and b == bob_basis})
    if not levels:
        raise KeyError(f"no statistics for Alice {alice_basis} / Bob {bob_basis}")
    return [basis_average([table[(s, k, bob_basis)] for s in states]) for k in levels]


def basis_bounds(table, pairs, pdf=None, n_cut=None, intervals=None, solver="simplex"):
    """Solve one LP per (Alice basis, Bob basis) pair.

    ``intervals``, when given, maps a pair to the per-level interval list.
    """
    out = {}
    for pair in pairs:
        stats = paired_statistics(table, *pair)
        iv = None if intervals is None else intervals[pair]
        lp = build_lp(stats, n_cut=n_cut, intervals=iv, pdf=pdf)
        out[pair] = solve_bounds(lp, solver=solver)
    return out
