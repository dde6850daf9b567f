"""Post-selection regions in the (mu_H, mu_V, phi_HV) space.

Angles ``theta`` here are polar angles in the (mu_H, mu_V) plane, not Bloch
angles. A region is a sector (or, for the naive comparison strategy, a
max-norm square slice) crossed with a set of phase windows. Point regions
model an active source that emits one exact state.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

TWO_PI = 2.0 * np.pi

BASIS_STATES = ("H", "V", "X+", "X-", "Y+", "Y-")
BASIS_OF = {"H": "Z", "V": "Z", "X+": "X", "X-": "X", "Y+": "Y", "Y-": "Y"}
# bit 0 is the positive pole of each basis
BIT_OF = {"H": 0, "V": 1, "X+": 0, "X-": 1, "Y+": 0, "Y-": 1}
STATES_OF_BASIS = {"Z": ("H", "V"), "X": ("X+", "X-"), "Y": ("Y+", "Y-")}


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PostSelectionConfig:
    mu_max: float = 1.0
    delta_z: float = 0.1
    delta_xy: float = 0.1
    delta_phi: float = 0.1
    t_decoy: float = 0.04
    t_decoy2: float = 0.02

    def validate(self):
        if not self.mu_max > 0:
            raise ConfigurationError("mu_max must be positive")
        for name in ("delta_z", "delta_xy", "delta_phi"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0 < self.t_decoy2 < self.t_decoy <= 1:
            raise ConfigurationError("need 0 < t_decoy2 < t_decoy <= 1")
        if not self.delta_xy < np.pi / 4:
            raise ConfigurationError("delta_xy must be below pi/4")
        if not self.delta_z + self.delta_xy <= np.pi / 4:
            raise ConfigurationError("Z and X/Y slices overlap (delta_z + delta_xy > pi/4)")
        if not self.delta_phi < np.pi / 4:
            raise ConfigurationError("delta_phi must be below pi/4")
        return self

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Region:
    """One acceptance region.

    ``shape`` is ``"sector"`` (radius bound), ``"square"`` (bound on
    max(mu_H, mu_V)) or ``"point"`` (a single state of probability
    ``point_weight``). ``phi_windows`` holds ``(centre, half_width)`` pairs.
    """

    basis_state: str
    decoy_index: int
    theta_range: tuple
    r_max: float
    phi_windows: tuple
    shape: str = "sector"
    point: Optional[tuple] = None
    point_weight: float = 1.0

    @property
    def name(self):
        return f"{self.basis_state}{self.decoy_index}"

    @property
    def basis(self):
        return BASIS_OF[self.basis_state]

    @property
    def bit(self):
        return BIT_OF[self.basis_state]

    @property
    def phase_fraction(self):
        """Probability mass of the phase windows under a uniform phase."""
        if self.shape == "point":
            return 1.0
        return sum(2.0 * hw for _, hw in self.phi_windows) / TWO_PI

    def r_upper(self, theta):
        """Radial limit of the region along direction ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self.shape == "sector":
            return np.full_like(theta, self.r_max)
        if self.shape == "square":
            return self.r_max / np.maximum(np.cos(theta), np.sin(theta))
        raise ValueError("point regions have no radial extent")

    def theta_breaks(self):
        """Sub-intervals of theta on which r_upper is smooth."""
        lo, hi = self.theta_range
        if self.shape == "square" and lo < np.pi / 4 < hi:
            return [(lo, np.pi / 4), (np.pi / 4, hi)]
        return [(lo, hi)]

    def to_dict(self):
        d = asdict(self)
        d["name"] = self.name
        return d


def _in_windows(phi, windows):
    phi = np.asarray(phi, dtype=float)
    hit = np.zeros(np.shape(phi), dtype=bool)
    for centre, hw in windows:
        d = np.abs(np.mod(phi - centre + np.pi, TWO_PI) - np.pi)
        hit |= d <= hw
    return hit


def contains(region: Region, mu_h, mu_v, phi_hv):
    """Membership test; broadcasts over arrays."""
    mu_h = np.asarray(mu_h, dtype=float)
    mu_v = np.asarray(mu_v, dtype=float)
    if region.shape == "point":
        ph, pv, pphi = region.point
        return np.isclose(mu_h, ph) & np.isclose(mu_v, pv) & _in_windows(phi_hv, [(pphi, 1e-12)])
    theta = np.arctan2(mu_v, mu_h)
    lo, hi = region.theta_range
    ok = (theta >= lo) & (theta <= hi) & (mu_h >= 0) & (mu_v >= 0)
    if region.shape == "sector":
        ok &= np.hypot(mu_h, mu_v) <= region.r_max
    else:
        ok &= np.maximum(mu_h, mu_v) <= region.r_max
    ok &= _in_windows(phi_hv, region.phi_windows)
    return ok


FULL_CIRCLE = ((np.pi, np.pi),)


def _state_geometry(state, config: PostSelectionConfig):
    dz, dxy, dp = config.delta_z, config.delta_xy, config.delta_phi
    q = np.pi / 4
    if state == "H":
        return (0.0, dz), FULL_CIRCLE
    if state == "V":
        return (np.pi / 2 - dz, np.pi / 2), FULL_CIRCLE
    centre = {"X+": 0.0, "X-": np.pi, "Y+": np.pi / 2, "Y-": 3 * np.pi / 2}[state]
    return (q - dxy, q + dxy), ((centre, dp),)


def build_regions(config: PostSelectionConfig, shape="sector"):
    """The 18 regions: six states times three nested decoy radii."""
    config.validate()
    radii = (config.mu_max, config.t_decoy * config.mu_max, config.t_decoy2 * config.mu_max)
    out = []
    for state in BASIS_STATES:
        theta_range, windows = _state_geometry(state, config)
        for k, r in enumerate(radii):
            out.append(Region(state, k, theta_range, r, windows, shape=shape))
    return out


def full_domain(mu_max):
    """The whole (0, mu_max)^2 square with every phase; useful for normalization."""
    return Region("H", 0, (0.0, np.pi / 2), mu_max, FULL_CIRCLE, shape="square")


IDEAL_POINT = {
    "H": lambda mu: (mu, 0.0, 0.0),
    "V": lambda mu: (0.0, mu, 0.0),
    "X+": lambda mu: (mu / 2, mu / 2, 0.0),
    "X-": lambda mu: (mu / 2, mu / 2, np.pi),
    "Y+": lambda mu: (mu / 2, mu / 2, np.pi / 2),
    "Y-": lambda mu: (mu / 2, mu / 2, 3 * np.pi / 2),
}


def point_regions(intensities, weights=None, states=BASIS_STATES):
    """Active-source limit: every region is one perfectly prepared state.

    ``weights[k]`` is the probability of emitting decoy ``k`` of a given
    state; defaults to 1 (only ratios matter asymptotically).
    """
    if weights is None:
        weights = [1.0] * len(intensities)
    out = []
    for state in states:
        for k, (mu, w) in enumerate(zip(intensities, weights)):
            pt = IDEAL_POINT[state](mu)
            theta = np.arctan2(pt[1], pt[0])
            out.append(
                Region(state, k, (theta, theta), mu, ((pt[2], 0.0),), shape="point",
                       point=pt, point_weight=w)
            )
    return out


def select(regions, state=None, decoy_index=None, basis=None):
    return [
        r for r in regions
        if (state is None or r.basis_state == state)
        and (decoy_index is None or r.decoy_index == decoy_index)
        and (basis is None or r.basis == basis)
    ]
