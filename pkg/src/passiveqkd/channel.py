"""Channel and threshold-detector model on the Bloch sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .source import bloch_polar_angle

BOB_AXES = {
    "Z": np.array([0.0, 0.0, 1.0]),
    "X": np.array([1.0, 0.0, 0.0]),
    "Y": np.array([0.0, 1.0, 0.0]),
}


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if abs(self.x**2 + self.y**2 + self.z**2 - 1.0) > 1e-12:
            raise ValueError("Bloch vector must have unit norm")

    def as_array(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class ChannelParams:
    """Loss, detection and polarization misalignment.

    ``rot_angle`` is the rotation angle on the Bloch sphere. A rotation of
    ``misalignment_angle(e_d)`` about the Y axis flips an H photon to V with
    probability ``e_d``.
    """

    eta: float = 1.0
    eta_d: float = 1.0
    p_d: float = 1e-6
    rot_axis: tuple = (0.0, 1.0, 0.0)
    rot_angle: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eta <= 1 or not 0 < self.eta_d <= 1:
            raise ValueError("eta must lie in [0, 1] and eta_d in (0, 1]")
        if not 0 <= self.p_d < 1:
            raise ValueError("p_d must lie in [0, 1)")
        if abs(np.linalg.norm(self.rot_axis) - 1.0) > 1e-12:
            raise ValueError("rotation axis must be a unit vector")
        object.__setattr__(self, "rot_axis", tuple(float(a) for a in self.rot_axis))

    @property
    def e_d(self):
        return float(np.sin(self.rot_angle / 2) ** 2)

    @property
    def transmittance(self):
        return self.eta * self.eta_d

    def as_dict(self):
        return {
            "eta": self.eta, "eta_d": self.eta_d, "p_d": self.p_d,
            "rot_axis": list(self.rot_axis), "rot_angle": self.rot_angle,
        }


def misalignment_angle(e_d):
    """Bloch rotation angle producing a basis-state error probability ``e_d``."""
    return 2.0 * np.arcsin(np.sqrt(e_d))


def transmittance(distance_km, attenuation_db_per_km=0.2):
    return 10.0 ** (-attenuation_db_per_km * np.asarray(distance_km, dtype=float) / 10.0)


def bloch_vector(theta_hv, phi_hv):
    """Unit vector (sin t cos p, sin t sin p, cos t); arrays give shape (..., 3)."""
    theta_hv = np.asarray(theta_hv, dtype=float)
    phi_hv = np.asarray(phi_hv, dtype=float)
    s = np.sin(theta_hv)
    vec = np.stack(np.broadcast_arrays(s * np.cos(phi_hv), s * np.sin(phi_hv), np.cos(theta_hv)), axis=-1)
    if vec.ndim == 1:
        return BlochVector(*vec)
    return vec


def _as_array(v):
    return v.as_array() if isinstance(v, BlochVector) else np.asarray(v, dtype=float)


def rotate(s, axis, alpha):
    """Rodrigues rotation of ``s`` by ``alpha`` about the unit vector ``axis``."""
    k = _as_array(axis)
    if abs(np.linalg.norm(k) - 1.0) > 1e-12:
        raise ValueError("rotation axis must be a unit vector")
    v = _as_array(s)
    c, sn = np.cos(alpha), np.sin(alpha)
    out = v * c + np.cross(k, v) * sn + np.outer(v @ k, k).reshape(v.shape) * (1 - c)
    if isinstance(s, BlochVector):
        n = np.linalg.norm(out)
        return BlochVector(*(out / n))
    return out


def rotation_matrix(axis, alpha):
    k = np.asarray(axis, dtype=float)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) * np.cos(alpha) + np.sin(alpha) * kx + (1 - np.cos(alpha)) * np.outer(k, k)


def projection_probability(s_rot, b):
    """Probability a photon in state ``s_rot`` is found along ``b``."""
    dot = np.sum(_as_array(s_rot) * _as_array(b), axis=-1)
    return np.clip((1.0 + dot) / 2.0, 0.0, 1.0)


def click_probabilities(mu, p_proj, ch: ChannelParams):
    """Click probabilities of the detector along b (P0) and along -b (P1)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("intensity must be non-negative")
    t = ch.transmittance * mu
    # expm1 keeps relative precision for the faint decoy pulses
    x0 = t * p_proj
    x1 = t * (1.0 - p_proj)
    p0 = -np.expm1(-x0) + ch.p_d * np.exp(-x0)
    p1 = -np.expm1(-x1) + ch.p_d * np.exp(-x1)
    return p0, p1


def detection_events(p0, p1, bit):
    """Gain and error-gain from independent clicks; double clicks count half an error."""
    gain = p0 + p1 - p0 * p1
    both = p0 * p1
    if bit == 0:
        wrong_only = p1 * (1.0 - p0)
    else:
        wrong_only = p0 * (1.0 - p1)
    return gain, wrong_only + 0.5 * both


def gain_and_error(mu_h, mu_v, phi_hv, bob_basis, ch: ChannelParams, bit=0):
    """Gain and error-gain for one pulse.

    ``bit`` is Alice's bit value: 0 for the positive pole of her basis. Bob's
    detector 0 sits on the positive pole of ``bob_basis``; an event is an
    error when Bob's bit differs from Alice's.
    """
    mu_h = np.asarray(mu_h, dtype=float)
    mu_v = np.asarray(mu_v, dtype=float)
    mu = mu_h + mu_v
    s = bloch_vector(bloch_polar_angle(mu_h, mu_v), phi_hv)
    s = s.as_array() if isinstance(s, BlochVector) else s
    # rotating the state is equivalent to counter-rotating Bob's axis
    b_eff = rotation_matrix(ch.rot_axis, ch.rot_angle).T @ BOB_AXES[bob_basis]
    p_proj = projection_probability(s, b_eff)
    p0, p1 = click_probabilities(mu, p_proj, ch)
    return detection_events(p0, p1, bit)
