"""Event-level Monte-Carlo simulation of the passive source and detection.

Independent of the quadrature code: pulses are drawn from uniform laser
phases, pushed through the interferometers, optionally thinned by the
reshaping coin, sorted into regions and detected with Bernoulli clicks.
Batches use a counter-based generator (Philox) jumped by batch index, so a
run is reproducible and its batches can be simulated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, click_probabilities, projection_probability, rotation_matrix, BOB_AXES, bloch_vector
from .regions import PostSelectionConfig, build_regions, contains
from .source import OutputState, ReshapedDensity, SourcePhases, phases_to_output, bloch_polar_angle
from .statistics import poisson_weights


def make_rng(seed, batch=0):
    bitgen = np.random.Philox(seed)
    return np.random.Generator(bitgen.jumped(batch) if batch else bitgen)


def sample_pulse(rng, per_laser_mu) -> OutputState:
    """One pulse from four independent uniform laser phases."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=4)
    return phases_to_output(SourcePhases(*phases), per_laser_mu)


def sample_pulses(rng, n, per_laser_mu):
    """``n`` pulses as a dict of arrays (same keys as OutputState fields)."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, 4))
    return phases_to_output(phases, per_laser_mu)


@dataclass
class McRegionTally:
    name: str
    selected: int = 0
    detected: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    pn_sum: np.ndarray = None
    pn_sumsq: np.ndarray = None

    def merge(self, other):
        self.selected += other.selected
        for b in other.detected:
            self.detected[b] = self.detected.get(b, 0) + other.detected[b]
            self.errors[b] = self.errors.get(b, 0) + other.errors[b]
        self.pn_sum = other.pn_sum if self.pn_sum is None else self.pn_sum + other.pn_sum
        self.pn_sumsq = other.pn_sumsq if self.pn_sumsq is None else self.pn_sumsq + other.pn_sumsq


@dataclass
class McRunReport:
    n_pulses: int
    n_accepted: int
    regions: dict

    @property
    def acceptance_fraction(self):
        return self.n_accepted / self.n_pulses

    def p_region(self, name):
        """Selection probability per emitted pulse and its standard error."""
        return _proportion(self.regions[name].selected, self.n_pulses)

    def gain(self, name, bob_basis):
        t = self.regions[name]
        return _proportion(t.detected[bob_basis], t.selected)

    def error_gain(self, name, bob_basis):
        t = self.regions[name]
        return _proportion(t.errors[bob_basis], t.selected)

    def photon_coeff(self, name, n):
        t = self.regions[name]
        if t.selected == 0:
            return np.nan, np.inf
        mean = t.pn_sum[n] / t.selected
        # same one-event floor as the proportions: a handful of pulses says little
        var = max(t.pn_sumsq[n] / t.selected - mean**2, 1.0 / t.selected)
        return mean, np.sqrt(var / t.selected)

    def to_dict(self):
        out = {"n_pulses": self.n_pulses, "acceptance_fraction": self.acceptance_fraction, "regions": {}}
        for name, t in self.regions.items():
            p, sp = self.p_region(name)
            entry = {"selected": t.selected, "p_region": p, "p_region_se": sp}
            for b in t.detected:
                g, sg = self.gain(name, b)
                e, se = self.error_gain(name, b)
                entry[b] = {"detected": t.detected[b], "errors": t.errors[b],
                            "gain": g, "gain_se": sg, "error_gain": e, "error_gain_se": se}
            out["regions"][name] = entry
        return out


def _proportion(k, n):
    if n == 0:
        return np.nan, np.inf
    p = k / n
    # a floor of one event keeps the standard error of empty tallies honest
    return p, np.sqrt(max(p * (1 - p), 1.0 / n) / n)


def _detect(rng, mu, s, ch, bob_basis):
    """Bob's bit per pulse: 0, 1, or -1 for no click. Double clicks get a random bit."""
    b_eff = rotation_matrix(ch.rot_axis, ch.rot_angle).T @ BOB_AXES[bob_basis]
    p_proj = projection_probability(s, b_eff)
    p0, p1 = click_probabilities(mu, p_proj, ch)
    c0 = rng.random(mu.shape) < p0
    c1 = rng.random(mu.shape) < p1
    coin = rng.random(mu.shape) < 0.5
    bit = np.full(mu.shape, -1, dtype=np.int8)
    bit[c0 & ~c1] = 0
    bit[c1 & ~c0] = 1
    both = c0 & c1
    bit[both] = coin[both].astype(np.int8)
    return bit


def _simulate_batch(seed, batch, n, regions, ch, per_laser_mu, reshape_density, bob_bases, n_photon):
    rng = make_rng(seed, batch)
    out = sample_pulses(rng, n, per_laser_mu)
    mu_h, mu_v, phi = out["mu_h"], out["mu_v"], out["phi_hv"]
    keep = np.ones(n, dtype=bool)
    if reshape_density is not None:
        q = reshape_density.acceptance(mu_h, mu_v)
        keep = rng.random(n) < q
    mu_h, mu_v, phi = mu_h[keep], mu_v[keep], phi[keep]
    mu = mu_h + mu_v
    s = bloch_vector(bloch_polar_angle(mu_h, mu_v), phi)
    s = np.atleast_2d(s.as_array() if hasattr(s, "as_array") else s)
    bits = {b: _detect(rng, mu, s, ch, b) for b in bob_bases}
    pn = poisson_weights(mu, n_photon)
    tallies = {}
    for r in regions:
        sel = contains(r, mu_h, mu_v, phi)
        t = McRegionTally(r.name, selected=int(sel.sum()))
        for b in bob_bases:
            bb = bits[b][sel]
            det = bb >= 0
            t.detected[b] = int(det.sum())
            t.errors[b] = int((det & (bb != r.bit)).sum())
        t.pn_sum = pn[:, sel].sum(axis=1)
        t.pn_sumsq = (pn[:, sel] ** 2).sum(axis=1)
        tallies[r.name] = t
    return int(keep.sum()), tallies


def run(config: PostSelectionConfig, ch: ChannelParams, n_pulses, rng_seed, reshape=True,
        regions=None, bob_bases=("Z", "X", "Y"), n_photon=3, batch_size=1 << 18):
    """Simulate ``n_pulses`` emitted pulses and tally every region.

    A pulse can fall in several nested decoy regions and is counted in each.
    """
    if n_pulses < 10_000:
        raise ValueError("n_pulses must be at least 10^4")
    regions = build_regions(config) if regions is None else regions
    density = ReshapedDensity(config.mu_max) if reshape else None
    per_laser = config.mu_max / 2.0
    total = {r.name: McRegionTally(r.name) for r in regions}
    accepted = 0
    n_batches = -(-n_pulses // batch_size)
    for k in range(n_batches):
        n = min(batch_size, n_pulses - k * batch_size)
        acc, tallies = _simulate_batch(rng_seed, k, n, regions, ch, per_laser, density, bob_bases, n_photon)
        accepted += acc
        for name, t in tallies.items():
            total[name].merge(t)
    return McRunReport(n_pulses=n_pulses, n_accepted=accepted, regions=total)
