import numpy as np
import pytest
from scipy.integrate import nquad, quad
from scipy.special import factorial
from scipy.stats import poisson

from passiveqkd.channel import ChannelParams, gain_and_error, misalignment_angle
from passiveqkd.quadrature import integrate
from passiveqkd.regions import PostSelectionConfig, build_regions, full_domain, point_regions, select
from passiveqkd.source import InherentDensity, ReshapedDensity
from passiveqkd.statistics import (
    ProportionalityError, check_proportionality, compute_region_statistics,
    compute_statistics_multi, expected_observable, photon_number_coeff, poisson_weights,
    polar_distribution, polar_distribution_numeric, proportionality_deviation, region_probability,
)

CFG = PostSelectionConfig()
CH = ChannelParams(eta=0.1, eta_d=1.0, p_d=1e-6, rot_axis=(0.0, 1.0, 0.0), rot_angle=misalignment_angle(0.02))


def test_poisson_weights_match_pmf():
    mu = np.linspace(0, 3, 7)
    assert poisson_weights(mu, 12) == pytest.approx(poisson.pmf(np.arange(13)[:, None], mu), rel=1e-13, abs=1e-300)


def test_expected_observable_normalization_and_mean():
    dom = full_domain(1.0)
    pdf = InherentDensity(1.0)
    assert expected_observable(dom, pdf, lambda h, v, p: np.ones(np.shape(h))) == 1.0
    # each arm is arcsine on [0, mu_max] with mean mu_max / 2
    assert expected_observable(dom, pdf, lambda h, v, p: h + v) == pytest.approx(1.0, rel=1e-10)


def test_point_region_reduces_to_poisson():
    x = select(point_regions((0.37,)), state="X+")[0]
    for n in range(5):
        assert photon_number_coeff(x, None, n) == pytest.approx(poisson.pmf(n, 0.37), rel=1e-14)


@pytest.mark.parametrize("state", ["H", "X+"])
def test_reshaped_photon_coeffs_follow_closed_form(state):
    pdf = ReshapedDensity(1.0)
    region = select(build_regions(CFG), state=state, decoy_index=0)[0]
    p = region_probability(region, pdf)
    lo, hi = region.theta_range
    for n in range(6):
        ang, _ = quad(lambda t: (np.sin(t) + np.cos(t)) ** n, lo, hi, epsrel=1e-13)
        expect = region.phase_fraction * pdf.c * region.r_max ** (n + 2) / ((n + 2) * factorial(n)) * ang
        assert photon_number_coeff(region, pdf, n) * p == pytest.approx(expect, rel=1e-9)


def test_photon_coeffs_complete():
    st = compute_region_statistics(build_regions(CFG)[0], InherentDensity(1.0), CH, "Z", n_cut=60)
    assert st.photon_coeffs.sum() == pytest.approx(1.0, abs=1e-9)
    assert st.photon_coeffs.sum() + st.tail_mass == pytest.approx(1.0, abs=1e-9)
    st20 = compute_region_statistics(build_regions(CFG)[0], InherentDensity(1.0), CH, "Z", n_cut=20)
    assert st20.tail_mass < 1e-8


def test_polar_distribution_closed_form_matches_numeric():
    pdf = ReshapedDensity(0.8)
    region = select(build_regions(PostSelectionConfig(mu_max=0.8)), state="X-", decoy_index=1)[0]
    t = np.linspace(*region.theta_range, 7)
    for n in range(4):
        assert polar_distribution(region, pdf, n, t) == pytest.approx(
            polar_distribution_numeric(region, pdf, n, t), rel=1e-9)
    flat = polar_distribution(region, pdf, 0, t)
    assert flat == pytest.approx(np.full_like(t, flat[0]), rel=1e-14)


def test_naive_regions_not_proportional():
    naive = select(build_regions(CFG, shape="square"), state="H")
    pdf = InherentDensity(1.0)
    assert proportionality_deviation(naive[0], naive[1], pdf, n_max=2, n_theta=11, numeric=True) > 0.01
    with pytest.raises(ProportionalityError, match="H0 and H1"):
        check_proportionality(naive, pdf, n_max=1, numeric=True)
    assert check_proportionality(build_regions(CFG), ReshapedDensity(1.0), numeric=True) < 1e-6


def test_inherent_gain_matches_independent_integral():
    # direct nquad in the arcsine variables mu = m sin^2 u; density becomes 4/pi^2
    m, dz = 1.0, 0.3
    cfg = PostSelectionConfig(mu_max=m, delta_z=dz, delta_xy=0.3)
    h = build_regions(cfg)[0]

    def w_max(u):
        mh = m * np.sin(u) ** 2
        mv = min(mh * np.tan(dz), np.sqrt(max(m * m - mh * mh, 0.0)))
        return np.arcsin(np.sqrt(min(mv / m, 1.0)))

    # the phase integrand is smooth and periodic: the trapezoid rule converges geometrically
    phis = np.linspace(0, 2 * np.pi, 32, endpoint=False)

    def integrand(w, u):
        mh, mv = m * np.sin(u) ** 2, m * np.sin(w) ** 2
        q, _ = gain_and_error(mh, mv, phis, "Z", CH)
        return 4 / np.pi**2 * np.mean(q)

    opts = {"epsrel": 1e-11, "epsabs": 0}
    val, _ = nquad(integrand, [lambda u: (0, w_max(u)), (0, np.pi / 2)], opts=[opts] * 2)
    p, _ = nquad(lambda w, u: 4 / np.pi**2, [lambda u: (0, w_max(u)), (0, np.pi / 2)], opts=[opts] * 2)
    st = compute_region_statistics(h, InherentDensity(m), CH, "Z")
    assert st.p_region == pytest.approx(p, rel=1e-8)
    assert st.gain == pytest.approx(val / p, rel=1e-7)


def test_perfect_channel_error_from_region_width():
    ch = ChannelParams(eta=1.0, eta_d=1.0, p_d=0.0, rot_axis=(0, 1, 0), rot_angle=0.0)
    st = compute_region_statistics(build_regions(CFG)[0], ReshapedDensity(1.0), ch, "Z")
    # per-pulse QBER grows with the polar angle, so the region edge bounds the average
    mu = np.linspace(1e-6, 1.0, 2001)
    t = CFG.delta_z
    q, qe = gain_and_error(mu * np.cos(t), mu * np.sin(t), 0.0, "Z", ch)
    assert 0 < st.error_gain <= np.max(qe / q) * st.gain
    assert np.max(qe / q) < 0.1


def test_small_decoy_is_dark_dominated():
    ch = ChannelParams(eta=1e-5, eta_d=1.0, p_d=1e-6, rot_axis=(0, 1, 0), rot_angle=0.0)
    st = compute_region_statistics(select(build_regions(CFG), state="H", decoy_index=2)[0],
                                   ReshapedDensity(1.0), ch, "Z")
    assert st.gain < 5e-6
    assert st.error_gain / st.gain > 0.25


def test_multi_basis_statistics_invariants():
    pdf = ReshapedDensity(1.0)
    for region in build_regions(CFG)[::2]:
        for b, st in compute_statistics_multi(region, pdf, CH, ("Z", "X", "Y")).items():
            assert 0 <= st.error_gain <= st.gain <= 1
            assert np.all(st.photon_coeffs >= 0)
            assert st.photon_coeffs.sum() + st.tail_mass == pytest.approx(1.0, abs=1e-9)
            assert st.gain_err < 1e-9 * max(st.gain, 1e-6) + 1e-15


def test_quadrature_rejects_region_beyond_source():
    big = PostSelectionConfig(mu_max=1.2)
    with pytest.raises(ValueError, match="beyond"):
        integrate(build_regions(big)[0], InherentDensity(1.0))
