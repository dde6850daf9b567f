"""End-to-end rate evaluation for passive and active sources."""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace

import numpy as np

from .channel import ChannelParams, misalignment_angle, transmittance
from .decoy import Interval, LPInfeasibleError, basis_bounds, paired_statistics
from .keyrate import KeyRateResult, bb84_rate, finite_bounds, rfi_rate
from .regions import STATES_OF_BASIS, PostSelectionConfig, build_regions, point_regions
from .source import InherentDensity, ReshapedDensity
from .statistics import basis_average, compute_statistics_multi

BB84_PAIRS = (("Z", "Z"), ("X", "X"))
RFI_CROSS = (("X", "X"), ("X", "Y"), ("Y", "X"), ("Y", "Y"))
RFI_PAIRS = (("Z", "Z"),) + RFI_CROSS


@dataclass(frozen=True)
class ProtocolSetup:
    """Fixed system constants and analysis choices.

    ``key_pdf`` selects the density behind the key-generation statistics:
    ``"inherent"`` (key pulses skip the reshaping step) or ``"reshaped"``.
    """

    f_e: float = 1.16
    p_d: float = 1e-6
    eta_d: float = 1.0
    e_d: float = 0.02
    attenuation: float = 0.2
    p_z_bob: float = 0.99
    p_z_alice_active: float = 0.99
    n_cut: int = 10
    key_pdf: str = "inherent"
    solver: str = "simplex"

    def as_dict(self):
        return asdict(self)


def make_channel(distance_km, setup: ProtocolSetup, rot_axis=(0.0, 1.0, 0.0), rot_angle=None):
    if rot_angle is None:
        rot_angle = misalignment_angle(setup.e_d)
    return ChannelParams(
        eta=float(transmittance(distance_km, setup.attenuation)),
        eta_d=setup.eta_d, p_d=setup.p_d, rot_axis=rot_axis, rot_angle=float(rot_angle),
    )


def _bob_bases(state, protocol):
    if state in ("H", "V"):
        return ("Z",)
    return ("X",) if protocol == "bb84" else ("X", "Y")


def statistics_table(regions, pdf, ch, n_cut, protocol="bb84"):
    """Map ``(state, decoy_index, bob_basis)`` to RegionStatistics."""
    table = {}
    for r in regions:
        if protocol == "bb84" and r.basis == "Y":
            continue
        for b, st in compute_statistics_multi(r, pdf, ch, _bob_bases(r.basis_state, protocol), n_cut).items():
            table[(r.basis_state, r.decoy_index, b)] = st
    return table


def key_statistics(config: PostSelectionConfig, ch, setup: ProtocolSetup, table=None):
    """Averaged statistics of the signal-level Z regions for key generation."""
    if setup.key_pdf == "reshaped" and table is not None:
        return basis_average([table[("H", 0, "Z")], table[("V", 0, "Z")]])
    pdf = InherentDensity(config.mu_max) if setup.key_pdf == "inherent" else ReshapedDensity(config.mu_max)
    regions = [r for r in build_regions(config) if r.decoy_index == 0 and r.basis == "Z"]
    stats = [compute_statistics_multi(r, pdf, ch, ("Z",), setup.n_cut)["Z"] for r in regions]
    return basis_average(stats)


def _bb84_from(key, bounds, p_z_alice, setup):
    zz, xx = bounds[("Z", "Z")], bounds[("X", "X")]
    res = bb84_rate(key.photon_coeffs[1], key.gain, key.error_gain, zz.y1_lower,
                    xx.e1_upper, p_z_alice, setup.p_z_bob, setup.f_e)
    res.e1_upper["Z"] = zz.e1_upper
    res.extra["bounds"] = {f"{a}{b}": v.to_dict() for (a, b), v in bounds.items()}
    return res


def passive_bb84(config: PostSelectionConfig, ch, setup=ProtocolSetup()):
    """Asymptotic passive BB84 rate."""
    pdf = ReshapedDensity(config.mu_max)
    table = statistics_table(build_regions(config), pdf, ch, setup.n_cut, "bb84")
    bounds = basis_bounds(table, BB84_PAIRS, pdf=pdf, solver=setup.solver)
    key = key_statistics(config, ch, setup, table)
    return _bb84_from(key, bounds, key.p_region, setup)


def orient_cross_pairs(table):
    """Relabel Bob's bit for anti-correlated basis pairs.

    For a pair whose signal-level error rate exceeds one half, Bob's outcomes
    are flipped (error gain becomes gain minus error gain). C depends on e
    only through (1 - 2e)^2, so this leaves it unchanged, and afterwards the
    upper bound on e is the conservative end for every pair.
    """
    out = dict(table)
    flipped = []
    for a, b in RFI_CROSS:
        sig = basis_average([table[(s, 0, b)] for s in STATES_OF_BASIS[a]])
        if sig.error_gain > 0.5 * sig.gain:
            flipped.append(f"{a}{b}")
            for key, st in table.items():
                if key[0] in STATES_OF_BASIS[a] and key[2] == b:
                    out[key] = replace(st, error_gain=st.gain - st.error_gain,
                                       error_gain_err=st.error_gain_err + st.gain_err)
    return out, flipped


def passive_rfi(config: PostSelectionConfig, ch, setup=ProtocolSetup()):
    """Asymptotic passive RFI-QKD rate."""
    pdf = ReshapedDensity(config.mu_max)
    table = statistics_table(build_regions(config), pdf, ch, setup.n_cut, "rfi")
    table, flipped = orient_cross_pairs(table)
    bounds = basis_bounds(table, RFI_PAIRS, pdf=pdf, solver=setup.solver)
    key = key_statistics(config, ch, setup, table)
    return _rfi_from(key, bounds, key.p_region, setup, flipped)


def _rfi_from(key, bounds, p_z_alice, setup, flipped=()):
    zz = bounds[("Z", "Z")]
    cross = {f"{a}{b}": (bounds[(a, b)].e1_lower, bounds[(a, b)].e1_upper) for a, b in RFI_CROSS}
    res = rfi_rate(key.photon_coeffs[1], key.gain, key.error_gain, zz.y1_lower, zz.e1_upper,
                   cross, p_z_alice, setup.p_z_bob, setup.f_e)
    res.extra["bounds"] = {f"{a}{b}": v.to_dict() for (a, b), v in bounds.items()}
    res.extra["flipped_pairs"] = list(flipped)
    return res


ACTIVE_DECOYS = (0.04, 0.02)


def active_table(intensities, ch, n_cut, protocol="bb84"):
    states = ("H", "V", "X+", "X-") if protocol == "bb84" else ("H", "V", "X+", "X-", "Y+", "Y-")
    return statistics_table(point_regions(intensities, states=states), None, ch, n_cut, protocol)


def active_bb84(mu_signal, ch, setup=ProtocolSetup(), decoys=ACTIVE_DECOYS):
    """Active three-intensity decoy BB84 evaluated through the same LP engine."""
    table = active_table((mu_signal,) + tuple(decoys), ch, setup.n_cut, "bb84")
    bounds = basis_bounds(table, BB84_PAIRS, solver=setup.solver)
    key = basis_average([table[("H", 0, "Z")], table[("V", 0, "Z")]])
    return _bb84_from(key, bounds, setup.p_z_alice_active, setup)


def active_rfi(mu_signal, ch, setup=ProtocolSetup(), decoys=ACTIVE_DECOYS):
    table = active_table((mu_signal,) + tuple(decoys), ch, setup.n_cut, "rfi")
    table, flipped = orient_cross_pairs(table)
    bounds = basis_bounds(table, RFI_PAIRS, solver=setup.solver)
    key = basis_average([table[("H", 0, "Z")], table[("V", 0, "Z")]])
    return _rfi_from(key, bounds, setup.p_z_alice_active, setup, flipped)


def finite_intervals(stats_by_level, n_total, bob_prob, gamma):
    """Gaussian count intervals turned into bounds on the conditional averages.

    The number of pulses in a region is its asymptotic expectation
    ``n_total * P_S * P(Bob basis)``; quadrature error widens each interval.
    """
    out = []
    for st in stats_by_level:
        n_si = n_total * st.p_region * bob_prob
        ivs = []
        for val, err in ((st.gain, st.gain_err), (st.error_gain, st.error_gain_err)):
            if n_si <= 0:
                ivs.append(Interval(0.0, 1.0))
                continue
            lo, hi = finite_bounds(val * n_si, gamma)
            pad = err + 1e-12 * abs(val)
            ivs.append(Interval(lo / n_si - pad, hi / n_si + pad))
        out.append(tuple(ivs))
    return out


def finite_key_rate(config: PostSelectionConfig, ch, fs, setup=ProtocolSetup(), p_z_bob=None):
    """Finite-size passive BB84 rate with Gaussian intervals on every observable.

    Bob's Z-basis probability (default ``setup.p_z_bob``) enters both the
    sifting factor and the number of pulses measured in each basis.
    """
    p_z_bob = setup.p_z_bob if p_z_bob is None else p_z_bob
    setup = replace(setup, p_z_bob=p_z_bob)
    pdf = ReshapedDensity(config.mu_max)
    table = statistics_table(build_regions(config), pdf, ch, setup.n_cut, "bb84")
    bob_prob = {"Z": p_z_bob, "X": 1.0 - p_z_bob}
    intervals = {
        pair: finite_intervals(paired_statistics(table, *pair), fs.n_total, bob_prob[pair[1]], fs.gamma)
        for pair in BB84_PAIRS
    }
    key = key_statistics(config, ch, setup, table)
    try:
        bounds = basis_bounds(table, BB84_PAIRS, pdf=pdf, intervals=intervals, solver=setup.solver)
    except LPInfeasibleError as exc:
        return KeyRateResult(rate=0.0, valid=False, note=f"decoy LP infeasible: {exc}",
                             p_z_alice=key.p_region, p_z_bob=p_z_bob)
    res = _bb84_from(key, bounds, key.p_region, setup)
    res.extra["n_total"] = fs.n_total
    res.extra["gamma"] = fs.gamma
    res.extra["interval_assignment"] = "per-constraint worst case: upper ends bound sums from above, lower ends from below"
    return res
