import numpy as np
import pytest

from passiveqkd.channel import ChannelParams, misalignment_angle
from passiveqkd.decoy import (
    DecoyBounds, Interval, LPInfeasibleError, basis_bounds, build_lp, paired_statistics,
    solve_bounds,
)
from passiveqkd.pipeline import (
    BB84_PAIRS, RFI_PAIRS, ProtocolSetup, active_table, make_channel, statistics_table,
)
from passiveqkd.regions import PostSelectionConfig, build_regions, point_regions, select
from passiveqkd.source import InherentDensity, ReshapedDensity
from passiveqkd.statistics import ProportionalityError, RegionStatistics
from reference_decoy import single_photon_bounds
from synthetic import forward_statistics

CFG = PostSelectionConfig()
PDF = ReshapedDensity(1.0)
SETUP = ProtocolSetup()
PERFECT = ChannelParams(eta=1.0, eta_d=1.0, p_d=0.0, rot_axis=(0, 1, 0), rot_angle=0.0)


def fig6_table(ch, protocol="bb84", cfg=CFG):
    return statistics_table(build_regions(cfg), ReshapedDensity(cfg.mu_max), ch, 10, protocol)


@pytest.mark.parametrize("distance", [0, 50, 100])
@pytest.mark.parametrize("solver", ["simplex", "highs"])
def test_point_regions_equal_standard_decoy_lp(distance, solver):
    ch = make_channel(distance, SETUP)
    table = active_table((0.5, 0.1, 0.002), ch, 10)
    b = basis_bounds(table, [("Z", "Z")], solver=solver)[("Z", "Z")]
    y1, e1y1 = single_photon_bounds((0.5, 0.1, 0.002), ch.eta, SETUP.p_d, SETUP.e_d)
    assert b.y1_lower == pytest.approx(y1, abs=1e-9)
    assert b.e1y1_upper == pytest.approx(e1y1, abs=1e-9)


class _ConstantLoss:
    """Y_n = 1 - (1 - eta)^n for every polarization; no errors."""

    def __init__(self, eta, n=25):
        self.eta, self.n = eta, n

    def yields(self, t):
        t = np.asarray(t)
        y = 1 - (1 - self.eta) ** np.arange(self.n + 1)
        y = np.broadcast_to(y.reshape((-1,) + (1,) * t.ndim), (self.n + 1,) + t.shape)
        return y, np.zeros_like(y)


def test_constant_loss_channel_is_bounded_from_below():
    regions = select(build_regions(CFG), state="X+")
    stats, truth = forward_statistics(regions, PDF, _ConstantLoss(0.3))
    assert truth[0][0] == pytest.approx(0.3, rel=1e-12)
    b = solve_bounds(build_lp(stats, pdf=PDF))
    assert b.y1_lower <= 0.3
    assert b.y1_lower > 0.95 * 0.3


def test_blocked_channel_gives_zero_bounds():
    ch = ChannelParams(eta=0.0, eta_d=1.0, p_d=0.0, rot_axis=(0, 1, 0), rot_angle=0.0)
    b = basis_bounds(fig6_table(ch), [("Z", "Z")], pdf=PDF)[("Z", "Z")]
    # only the photon-number tail can hide any signal
    assert b.y1_lower == 0.0 and b.e1y1_upper == pytest.approx(0.0, abs=1e-12)
    assert b.e1_upper == 1.0


def test_lossless_channel_single_photon_yield_near_one():
    bounds = basis_bounds(fig6_table(PERFECT), BB84_PAIRS, pdf=PDF)
    for b in bounds.values():
        assert b.y1_lower >= 0.99


def test_error_yield_upper_bound_tight_without_noise():
    # exactly prepared states: true e1Y1 = 0
    table = active_table((0.5, 0.1, 0.002), PERFECT, 10)
    assert basis_bounds(table, [("X", "X")])[("X", "X")].e1y1_upper <= 1e-3
    # finite slices carry a small intrinsic error; the LP brackets it tightly
    b = basis_bounds(fig6_table(PERFECT), [("X", "X")], pdf=PDF)[("X", "X")]
    assert b.e1y1_upper - b.e1y1_lower <= 1e-3
    assert b.e1y1_upper <= 3e-3


def test_single_decoy_setting_one_constraint_bound():
    table = active_table((0.5,), make_channel(20, SETUP), 10)
    st = paired_statistics(table, "Z", "Z")
    b = solve_bounds(build_lp(st))
    p = st[0].photon_coeffs
    expect = max(0.0, (st[0].gain - (1 - p[1])) / p[1])
    assert b.y1_lower == pytest.approx(expect, abs=1e-10)


def test_more_decoys_never_loosen_bounds():
    ch = make_channel(50, SETUP)
    two = basis_bounds(active_table((0.5, 0.1), ch, 10), BB84_PAIRS)
    three = basis_bounds(active_table((0.5, 0.1, 0.01), ch, 10), BB84_PAIRS)
    for pair in BB84_PAIRS:
        assert three[pair].y1_lower >= two[pair].y1_lower - 1e-12
        assert three[pair].e1y1_upper <= two[pair].e1y1_upper + 1e-12


def test_misalignment_sign_symmetry():
    up = make_channel(30, SETUP, rot_angle=misalignment_angle(0.02))
    down = make_channel(30, SETUP, rot_angle=-misalignment_angle(0.02))
    a = basis_bounds(fig6_table(up), BB84_PAIRS, pdf=PDF)
    b = basis_bounds(fig6_table(down), BB84_PAIRS, pdf=PDF)
    for pair in BB84_PAIRS:
        assert a[pair].y1_lower == pytest.approx(b[pair].y1_lower, rel=1e-8)
        assert a[pair].e1y1_upper == pytest.approx(b[pair].e1y1_upper, rel=1e-8)


def test_identity_frame_rfi_pattern_and_basis_independent_yield():
    ch = make_channel(50, SETUP, rot_axis=(0, 0, 1), rot_angle=0.0)
    bounds = basis_bounds(fig6_table(ch, "rfi"), RFI_PAIRS, pdf=PDF)
    xx, yy, xy, yx = (bounds[p] for p in (("X", "X"), ("Y", "Y"), ("X", "Y"), ("Y", "X")))
    assert xx.e1_upper == pytest.approx(yy.e1_upper, rel=1e-8)
    assert xy.e1_lower <= 0.5 <= xy.e1_upper
    assert 1 - yx.e1_upper <= xy.e1_upper and xy.e1_lower <= 1 - yx.e1_lower
    # Y1 does not depend on the polarization; every basis bound sits under the true value
    y_true = ch.eta
    y1 = [b.y1_lower for b in bounds.values()]
    assert max(y1) <= y_true
    assert max(y1) - min(y1) <= y_true - min(y1)


def test_lp_dump_lists_every_row():
    lp = build_lp(paired_statistics(fig6_table(PERFECT), "Z", "Z"), pdf=PDF)
    text = lp.dump()
    assert text.count("\n") == len(lp.labels)
    assert "H0/Z Q upper" in text and "eY3 <= Y3" in text


def test_builder_refuses_naive_regions():
    naive = select(build_regions(CFG, shape="square"), state="H")
    fake = [RegionStatistics(r, "Z", 0.1, 0.5, 0.01, np.full(11, 0.05), 0.45) for r in naive]
    with pytest.raises(ProportionalityError):
        build_lp(fake, pdf=InherentDensity(1.0))


def test_inconsistent_intervals_are_infeasible():
    table = active_table((0.5, 0.1), make_channel(10, SETUP), 10)
    st = paired_statistics(table, "Z", "Z")
    bad = [(Interval(0.9, 0.95), Interval(0.0, 0.01)), (Interval(0.0, 0.001), Interval(0.0, 0.001))]
    with pytest.raises(LPInfeasibleError) as exc:
        solve_bounds(build_lp(st, intervals=bad))
    assert exc.value.violated


def test_bounds_conventions():
    b = DecoyBounds(y1_lower=0.0, e1y1_upper=0.1, e1y1_lower=0.0)
    assert b.e1_upper == 1.0
    b = DecoyBounds(y1_lower=0.2, e1y1_upper=0.01, e1y1_lower=0.005, y1_upper=0.25)
    assert b.e1_upper == pytest.approx(0.05) and b.e1_lower == pytest.approx(0.02)
