"""Secret-key rates: BB84 and reference-frame-independent (RFI), asymptotic and finite size."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri
from scipy.stats import norm

RFI_E1Z_LIMIT = 0.159


def binary_entropy(x):
    """h2(x) in bits, with h2(0) = h2(1) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("argument of binary entropy must lie in [0, 1]")
    xc = np.clip(x, 1e-300, 1.0)
    yc = np.clip(1.0 - x, 1e-300, 1.0)
    out = -x * np.log2(xc) - (1.0 - x) * np.log2(yc)
    return float(out) if out.ndim == 0 else out


@dataclass
class KeyRateResult:
    rate: float
    y1_lower: float = 0.0
    e1_upper: dict = field(default_factory=dict)
    p1_key: float = 0.0
    p_z_alice: float = 0.0
    p_z_bob: float = 0.0
    gain_z: float = 0.0
    qber_z: float = 0.0
    error_correction: float = 0.0
    privacy: float = 0.0
    valid: bool = True
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def bb84_rate(p1_key, gain_z, error_gain_z, y1_lower, e1x_upper, p_z_alice, p_z_bob, f_e=1.16):
    """Asymptotic BB84 rate per emitted pulse.

    All averages are conditional on the key-generation regions; the sifting
    factors ``p_z_alice``, ``p_z_bob`` multiply the bracket.
    """
    qber = error_gain_z / gain_z if gain_z > 0 else 0.0
    e1 = min(max(e1x_upper, 0.0), 1.0)
    privacy = p1_key * y1_lower * (1.0 - binary_entropy(min(e1, 0.5)))
    if e1 >= 0.5:
        privacy = 0.0
    ec = f_e * gain_z * binary_entropy(min(max(qber, 0.0), 1.0))
    raw = p_z_alice * p_z_bob * (privacy - ec)
    return KeyRateResult(
        rate=max(0.0, raw), y1_lower=y1_lower, e1_upper={"X": e1}, p1_key=p1_key,
        p_z_alice=p_z_alice, p_z_bob=p_z_bob, gain_z=gain_z, qber_z=qber,
        error_correction=ec, privacy=privacy,
    )


def rfi_correlation(e1):
    """Rotation-invariant C from the four cross-basis e1 values.

    Entries may be numbers or ``(lower, upper)`` intervals; for an interval
    the smallest (1 - 2e)^2 it allows is used, which keeps C a lower bound.
    """
    total = 0.0
    for e in e1:
        if np.ndim(e) == 0:
            total += (1.0 - 2.0 * e) ** 2
            continue
        lo, hi = e
        if lo <= 0.5 <= hi:
            continue
        nearest = hi if hi < 0.5 else lo
        total += (1.0 - 2.0 * nearest) ** 2
    return float(min(total, 2.0))


def rfi_eve_information(c, e1z):
    """Eve's information I_E on the key from C and the Z-basis e1."""
    u = min(1.0, np.sqrt(c / 2.0) / (1.0 - e1z)) if e1z < 1 else 1.0
    if e1z > 0:
        rad = max(0.0, c / 2.0 - (1.0 - e1z) ** 2 * u**2)
        # v > 1 means no state matches the bounds; clamp keeps h2 defined
        v = min(1.0, np.sqrt(rad) / e1z)
    else:
        v = 0.0
    i_e = (1.0 - e1z) * binary_entropy((1.0 + u) / 2.0) + e1z * binary_entropy((1.0 + v) / 2.0)
    return float(i_e), float(u), float(v)


def rfi_worst_information(c, e1z_upper, n_grid=2001):
    """Largest I_E over Z-basis error rates in [0, e1z_upper].

    The true single-photon error lies somewhere in that range; taking the
    worst case keeps the bound sound where the formula at the upper end
    alone would need v > 1.
    """
    grid = np.linspace(0.0, e1z_upper, n_grid) if e1z_upper > 0 else np.zeros(1)
    vals = np.array([rfi_eve_information(c, e)[0] for e in grid])
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best_e, best = float(grid[k]), float(vals[k])
    if hi > lo:
        res = minimize_scalar(lambda e: -rfi_eve_information(c, e)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        if -res.fun > best:
            best_e, best = float(res.x), float(-res.fun)
    return best, best_e


def rfi_rate(p1_key, gain_z, error_gain_z, y1_lower, e1z_upper, e1_cross, p_z_alice, p_z_bob, f_e=1.16):
    """Asymptotic RFI-QKD rate.

    ``e1_cross`` holds e1 for XX, XY, YX, YY as numbers or (lower, upper)
    intervals (a dict keyed by pair name or a sequence).
    """
    qber = error_gain_z / gain_z if gain_z > 0 else 0.0
    c = rfi_correlation(list(e1_cross.values()) if isinstance(e1_cross, dict) else e1_cross)
    base = dict(y1_lower=y1_lower, p1_key=p1_key, p_z_alice=p_z_alice, p_z_bob=p_z_bob,
                gain_z=gain_z, qber_z=qber)
    e1_map = dict(e1_cross) if isinstance(e1_cross, dict) else {}
    e1_map["Z"] = e1z_upper
    if e1z_upper > RFI_E1Z_LIMIT:
        return KeyRateResult(rate=0.0, e1_upper=e1_map, valid=False,
                             note=f"e1 in Z exceeds {RFI_E1Z_LIMIT}", extra={"C": c}, **base)
    i_e, e_worst = rfi_worst_information(c, e1z_upper)
    _, u, v = rfi_eve_information(c, e_worst)
    privacy = p1_key * y1_lower * (1.0 - i_e)
    ec = f_e * gain_z * binary_entropy(min(max(qber, 0.0), 1.0))
    raw = p_z_alice * p_z_bob * (privacy - ec)
    return KeyRateResult(rate=max(0.0, raw), e1_upper=e1_map, error_correction=ec,
                         privacy=privacy, extra={"C": c, "I_E": i_e, "e1z_worst": e_worst, "u_max": u, "v": v}, **base)


def gamma_from_epsilon(epsilon):
    """Number of standard deviations for a two-sided Gaussian failure probability."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return float(-ndtri(epsilon / 2.0))


def epsilon_from_gamma(gamma):
    return float(2.0 * norm.sf(gamma))


@dataclass(frozen=True)
class FiniteSizeConfig:
    n_total: float
    epsilon: float = 1e-7
    gamma: float = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", gamma_from_epsilon(self.epsilon))
        elif abs(epsilon_from_gamma(self.gamma) - self.epsilon) > 1e-6 * self.epsilon:
            raise ValueError("gamma and epsilon are inconsistent")
        if not self.n_total > 0:
            raise ValueError("n_total must be positive")


def finite_bounds(count, gamma):
    """Two-sided interval ``count -/+ gamma sqrt(count)``, lower end clamped at 0."""
    if count < 0:
        raise ValueError("count must be non-negative")
    half = gamma * np.sqrt(count)
    return max(0.0, count - half), count + half
