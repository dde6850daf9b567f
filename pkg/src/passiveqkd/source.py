"""Four-laser passive source.

Two pairs of equal-intensity lasers interfere at beam splitters; the two
outputs are rotated to H and V and joined at a polarizing beam splitter.
Every function here accepts scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class UnreachableStateError(ValueError):
    """Requested output state lies outside what the source can emit."""


class SingularDensityError(ValueError):
    """Density evaluated on the boundary where it diverges."""


class InvalidScaleError(ValueError):
    """Reshaping scale would give an acceptance probability above one."""


@dataclass(frozen=True)
class SourcePhases:
    phi1: float
    phi2: float
    phi3: float
    phi4: float

    def __post_init__(self):
        for name in ("phi1", "phi2", "phi3", "phi4"):
            object.__setattr__(self, name, float(np.mod(getattr(self, name), TWO_PI)))

    def as_tuple(self):
        return (self.phi1, self.phi2, self.phi3, self.phi4)


@dataclass(frozen=True)
class ArmState:
    mu: float
    phase: float


@dataclass(frozen=True)
class OutputState:
    mu: float
    theta_hv: float
    phi_hv: float
    phi_g: float
    mu_h: float
    mu_v: float

    @classmethod
    def from_components(cls, mu_h, mu_v, phi_hv, phi_g):
        mu = mu_h + mu_v
        return cls(
            mu=mu,
            theta_hv=float(bloch_polar_angle(mu_h, mu_v)),
            phi_hv=float(np.mod(phi_hv, TWO_PI)),
            phi_g=float(np.mod(phi_g, TWO_PI)),
            mu_h=mu_h,
            mu_v=mu_v,
        )


def bloch_polar_angle(mu_h, mu_v):
    """Bloch polar angle 2*arccos(sqrt(mu_h/mu)); zero when mu == 0."""
    mu_h = np.clip(np.asarray(mu_h, dtype=float), 0.0, None)
    mu_v = np.clip(np.asarray(mu_v, dtype=float), 0.0, None)
    # atan2 form keeps full precision next to both poles
    return 2.0 * np.arctan2(np.sqrt(mu_v), np.sqrt(mu_h))


def interfere_pair(mu1, mu2, phi1, phi2):
    """Port-c output of a 50:50 beam splitter fed with two coherent pulses.

    The i factor picked up on reflection is applied here, so ``phi2`` is the
    raw laser phase. Returns ``(mu_out, phase_out)``; arrays broadcast.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if np.any(mu1 < 0) or np.any(mu2 < 0):
        raise ValueError("intensities must be non-negative")
    amp = np.sqrt(mu1 / 2.0) * np.exp(1j * np.asarray(phi1)) + 1j * np.sqrt(
        mu2 / 2.0
    ) * np.exp(1j * np.asarray(phi2))
    mu_out = mu1 / 2.0 + mu2 / 2.0 + np.cos(phi2 + np.pi / 2.0 - phi1) * np.sqrt(mu1 * mu2)
    # cancellation can leave -1e-17
    mu_out = np.maximum(mu_out, 0.0)
    phase = np.mod(np.angle(amp), TWO_PI)
    if np.ndim(mu_out) == 0:
        return ArmState(float(mu_out), float(phase))
    return mu_out, phase


def _arm(mu, phi_a, phi_b):
    out = interfere_pair(mu, mu, phi_a, phi_b)
    if isinstance(out, ArmState):
        return out.mu, out.phase
    return out


def phases_to_output(phases, per_laser_mu):
    """Map four laser phases to the emitted pulse.

    ``phases`` is a :class:`SourcePhases` (returns an :class:`OutputState`) or
    an array of shape ``(..., 4)`` (returns a dict of arrays with the same
    field names).
    """
    if per_laser_mu <= 0:
        raise ValueError("per_laser_mu must be positive")
    if isinstance(phases, SourcePhases):
        p = np.array(phases.as_tuple())
    else:
        p = np.asarray(phases, dtype=float)
    mu_h, phi_h = _arm(per_laser_mu, p[..., 0], p[..., 1])
    mu_v, phi_v = _arm(per_laser_mu, p[..., 2], p[..., 3])
    phi_hv = np.mod(phi_v - phi_h, TWO_PI)
    if isinstance(phases, SourcePhases):
        return OutputState.from_components(float(mu_h), float(mu_v), float(phi_hv), float(phi_h))
    return {
        "mu": mu_h + mu_v,
        "theta_hv": bloch_polar_angle(mu_h, mu_v),
        "phi_hv": phi_hv,
        "phi_g": np.mod(phi_h, TWO_PI),
        "mu_h": mu_h,
        "mu_v": mu_v,
    }


def _arm_solutions(mu_arm, phase, per_laser_mu, tol=1e-12):
    """Laser phase pairs giving an arm of intensity mu_arm and phase ``phase``."""
    mu_max = 2.0 * per_laser_mu
    if mu_arm < -tol or mu_arm > mu_max + tol:
        raise UnreachableStateError(
            f"arm intensity {mu_arm} outside [0, {mu_max}]"
        )
    # phi2' - phi1 = -/+ half_gap * 2, centred on the arm phase
    gap = np.arccos(np.clip(mu_arm / per_laser_mu - 1.0, -1.0, 1.0))
    signs = (1.0,) if gap < 1e-12 or abs(gap - np.pi) < 1e-12 else (1.0, -1.0)
    sols = []
    for s in signs:
        a = phase + s * gap / 2.0
        b_shifted = phase - s * gap / 2.0
        sols.append((np.mod(a, TWO_PI), np.mod(b_shifted - np.pi / 2.0, TWO_PI)))
    return sols


def output_to_phases(target: OutputState, per_laser_mu) -> list[SourcePhases]:
    """All laser-phase tuples reproducing ``target`` (up to four)."""
    if per_laser_mu <= 0:
        raise ValueError("per_laser_mu must be positive")
    phi_h = target.phi_g
    phi_v = target.phi_g + target.phi_hv
    h_sols = _arm_solutions(target.mu_h, phi_h, per_laser_mu)
    v_sols = _arm_solutions(target.mu_v, phi_v, per_laser_mu)
    return [SourcePhases(a, b, c, d) for (a, b) in h_sols for (c, d) in v_sols]


def arcsine_pdf(mu, mu_max):
    """Marginal density of one arm intensity under uniform laser phases."""
    mu = np.asarray(mu, dtype=float)
    return 1.0 / (np.pi * np.sqrt(mu * (mu_max - mu)))


def intensity_pdf(mu_h, mu_v, mu_max):
    """Joint density of (mu_h, mu_v) for uniformly random laser phases."""
    mu_h = np.asarray(mu_h, dtype=float)
    mu_v = np.asarray(mu_v, dtype=float)
    inside = (mu_h > 0) & (mu_h < mu_max) & (mu_v > 0) & (mu_v < mu_max)
    if not np.all(inside):
        raise SingularDensityError(
            "intensity density is singular on and undefined beyond the boundary"
        )
    out = arcsine_pdf(mu_h, mu_max) * arcsine_pdf(mu_v, mu_max)
    return float(out) if out.ndim == 0 else out


def reshape_acceptance(mu_h, mu_v, mu_max, c):
    """Keep-probability that turns the source density into c*exp(mu_h+mu_v)."""
    mu_h = np.asarray(mu_h, dtype=float)
    mu_v = np.asarray(mu_v, dtype=float)
    prod = np.clip(mu_h * (mu_max - mu_h), 0.0, None) * np.clip(mu_v * (mu_max - mu_v), 0.0, None)
    q = c * np.pi**2 * np.sqrt(prod) * np.exp(mu_h + mu_v)
    if np.any(q > 1.0 + 1e-9):
        raise InvalidScaleError(f"acceptance {float(np.max(q))} exceeds 1 for c={c}")
    q = np.minimum(q, 1.0)
    return float(q) if q.ndim == 0 else q


def golden_section_max(f, a, b, tol=1e-12, max_iter=500):
    """Maximize a unimodal ``f`` on [a, b]; returns the arg-max."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def reshaping_constant(mu_max):
    """Largest C keeping the reshaping acceptance at or below one everywhere.

    Per axis we need sqrt(C) * exp(mu) <= arcsine_pdf(mu); the binding point
    maximizes sqrt(mu (mu_max - mu)) * exp(mu).
    """
    if mu_max <= 0:
        raise ValueError("mu_max must be positive")

    def log_g(mu):
        return 0.5 * np.log(mu) + 0.5 * np.log(mu_max - mu) + mu

    mu_star = golden_section_max(log_g, 0.0 + 1e-300, mu_max * (1 - 1e-16))
    g = np.sqrt(mu_star * (mu_max - mu_star)) * np.exp(mu_star)
    sqrt_c = 1.0 / (np.pi * g)
    return sqrt_c**2


class InherentDensity:
    """Intensity density of the unmodified source on (0, mu_max)^2."""

    kind = "inherent"

    def __init__(self, mu_max):
        self.mu_max = float(mu_max)

    def __call__(self, mu_h, mu_v):
        return arcsine_pdf(mu_h, self.mu_max) * arcsine_pdf(mu_v, self.mu_max)

    @property
    def total_mass(self):
        return 1.0

    def __repr__(self):
        return f"InherentDensity(mu_max={self.mu_max})"


class ReshapedDensity:
    """Density c*exp(mu_h + mu_v) of pulses that survive reshaping.

    Unnormalized: its total mass over the square is the fraction of pulses
    kept, so region integrals are probabilities per emitted pulse.
    """

    kind = "reshaped"

    def __init__(self, mu_max, c=None):
        self.mu_max = float(mu_max)
        self.c = reshaping_constant(mu_max) if c is None else float(c)

    def __call__(self, mu_h, mu_v):
        return self.c * np.exp(np.asarray(mu_h) + np.asarray(mu_v))

    @property
    def total_mass(self):
        return self.c * np.expm1(self.mu_max) ** 2

    def acceptance(self, mu_h, mu_v):
        return reshape_acceptance(mu_h, mu_v, self.mu_max, self.c)

    def __repr__(self):
        return f"ReshapedDensity(mu_max={self.mu_max}, c={self.c:.6g})"
