"""Region-averaged observables for the decoy analysis.

All averages are conditional on the pulse falling in the region: for a
region S with selection probability P_S, ``<f>_S = (1/P_S) * integral over S
of density * f``. Photon-number weights are Poissonian in the total
intensity mu_H + mu_V.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import warnings

from scipy.integrate import IntegrationWarning, quad
from scipy.special import factorial
from scipy.stats import poisson

from .channel import ChannelParams, gain_and_error
from .quadrature import QuadratureError, integrate


class ProportionalityError(ValueError):
    """Nested decoy regions whose photon-number distributions are not proportional."""


def poisson_weights(mu, n_cut):
    """Array of shape (n_cut + 1, *mu.shape) with P_n(mu) for n = 0..n_cut."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty((n_cut + 1,) + mu.shape)
    out[0] = np.exp(-mu)
    for n in range(1, n_cut + 1):
        out[n] = out[n - 1] * mu / n
    return out


@dataclass
class RegionStatistics:
    """Selection probability and conditional averages for one region.

    ``*_err`` fields are absolute quadrature error estimates of the
    corresponding conditional averages (zero for point regions).
    """

    region: object
    bob_basis: str
    p_region: float
    gain: float
    error_gain: float
    photon_coeffs: np.ndarray
    tail_mass: float
    p_region_err: float = 0.0
    gain_err: float = 0.0
    error_gain_err: float = 0.0
    coeff_err: np.ndarray = field(default=None)

    def __post_init__(self):
        self.photon_coeffs = np.asarray(self.photon_coeffs, dtype=float)
        if self.coeff_err is None:
            self.coeff_err = np.zeros_like(self.photon_coeffs)

    @property
    def n_cut(self):
        return len(self.photon_coeffs) - 1

    @property
    def qber(self):
        return self.error_gain / self.gain if self.gain > 0 else 0.0

    def to_dict(self):
        return {
            "region": self.region.name,
            "bob_basis": self.bob_basis,
            "p_region": self.p_region,
            "gain": self.gain,
            "error_gain": self.error_gain,
            "photon_coeffs": self.photon_coeffs.tolist(),
            "tail_mass": self.tail_mass,
        }


def region_probability(region, pdf, **kw):
    """Probability that a pulse falls in ``region``."""
    val, _ = integrate(region, pdf, **kw)
    return float(val)


def expected_observable(region, pdf, f, **kw):
    """Conditional average of a vectorized ``f(mu_h, mu_v, phi)`` over the region."""

    def stacked(mu_h, mu_v, phi):
        one = np.ones(np.broadcast(mu_h, mu_v, phi).shape)
        return np.stack(np.broadcast_arrays(one, f(mu_h, mu_v, phi)))

    val, _ = integrate(region, pdf, stacked, **kw)
    if val[0] <= 0:
        raise QuadratureError(f"region {region.name} has zero probability")
    return float(val[1] / val[0])


def photon_number_coeff(region, pdf, n, **kw):
    """Region-averaged Poisson weight <P_n>."""

    def f(mu_h, mu_v, phi):
        return poisson.pmf(n, mu_h + mu_v) * np.ones(np.shape(phi))

    return expected_observable(region, pdf, f, **kw)


def _ratio_err(num, num_err, den, den_err):
    return (np.abs(num_err) + np.abs(num / den) * den_err) / den


def compute_statistics_multi(region, pdf, ch: ChannelParams, bob_bases, n_cut=10, **kw):
    """Statistics of one region for several Bob bases sharing one quadrature.

    Returns a dict keyed by Bob basis.
    """
    if n_cut < 2:
        raise ValueError("n_cut must be at least 2")
    bob_bases = tuple(bob_bases)
    bit = region.bit

    def f(mu_h, mu_v, phi):
        mu_h, mu_v, phi = np.broadcast_arrays(mu_h, mu_v, phi)
        rows = [np.ones(mu_h.shape)]
        for k, b in enumerate(bob_bases):
            q, qe = gain_and_error(mu_h, mu_v, phi, b, ch, bit=bit)
            if k == 0:
                rows.append(q)
            rows.append(qe)
        rows.extend(poisson_weights(mu_h + mu_v, n_cut))
        return np.stack(rows)

    val, err = integrate(region, pdf, f, **kw)
    p, p_err = float(val[0]), float(err[0])
    if p <= 0:
        raise QuadratureError(f"region {region.name} has zero probability")
    cond = val / p
    cond_err = _ratio_err(val, err, p, p_err)
    nb = len(bob_bases)
    coeffs = np.clip(cond[2 + nb:], 0.0, None)
    coeff_err = cond_err[2 + nb:]
    tail = max(0.0, 1.0 - float(np.sum(coeffs)))
    out = {}
    for k, b in enumerate(bob_bases):
        out[b] = RegionStatistics(
            region=region,
            bob_basis=b,
            p_region=p,
            gain=float(cond[1]),
            error_gain=float(cond[2 + k]),
            photon_coeffs=coeffs,
            tail_mass=tail,
            p_region_err=p_err,
            gain_err=float(cond_err[1]),
            error_gain_err=float(cond_err[2 + k]),
            coeff_err=coeff_err,
        )
    return out


def compute_region_statistics(region, pdf, ch: ChannelParams, bob_basis, n_cut=10, **kw):
    return compute_statistics_multi(region, pdf, ch, (bob_basis,), n_cut, **kw)[bob_basis]


def _radial_quad(g, r_hi):
    # the inherent density has integrable 1/sqrt edges; keep clear of the exact
    # boundary. quad may report roundoff there while still meeting ~1e-9.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(g, 0.0, r_hi * (1 - 1e-15), limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def polar_distribution(region, pdf, n, theta):
    """Radially integrated photon-number density f_{n,theta}(theta).

    Integrand is P_n(r(cos t + sin t)) * pdf * r over r in [0, r_upper(t)];
    the phase factor is left out. For the reshaped density on a sector this
    equals c * r_max^(n+2) / ((n+2) n!) * (sin t + cos t)^n.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty_like(theta)
    for i, t in enumerate(theta):
        ct, st = np.cos(t), np.sin(t)
        r_hi = float(region.r_upper(t))

        def g(r):
            mu_h, mu_v = r * ct, r * st
            return poisson.pmf(n, mu_h + mu_v) * pdf(mu_h, mu_v) * r

        if pdf.kind == "reshaped":
            # c e^{mu} cancels the Poisson exponential: integrand is polynomial in r
            s = ct + st
            out[i] = pdf.c * r_hi ** (n + 2) * s**n / ((n + 2) * factorial(n))
            continue
        out[i] = _radial_quad(g, r_hi)
    return out


def polar_distribution_numeric(region, pdf, n, theta):
    """Same as :func:`polar_distribution` but always by adaptive quadrature."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty_like(theta)
    for i, t in enumerate(theta):
        ct, st = np.cos(t), np.sin(t)
        r_hi = float(region.r_upper(t))
        out[i] = _radial_quad(lambda r: poisson.pmf(n, r * (ct + st)) * pdf(r * ct, r * st) * r, r_hi)
    return out


def proportionality_deviation(outer, inner, pdf, n_max=5, n_theta=41, numeric=False):
    """Largest relative deviation of f_outer/f_inner from (r1/r2)^(n+2).

    Sampled on an interior theta grid of the common angular range.
    """
    if outer.shape == "point" or inner.shape == "point":
        return 0.0
    lo = max(outer.theta_range[0], inner.theta_range[0])
    hi = min(outer.theta_range[1], inner.theta_range[1])
    # stay off the exact edges where the inherent density diverges
    pad = 1e-6 * (hi - lo)
    theta = np.linspace(lo + pad, hi - pad, n_theta)
    dist = polar_distribution_numeric if numeric else polar_distribution
    ratio_r = outer.r_max / inner.r_max
    worst = 0.0
    for n in range(n_max + 1):
        f1 = dist(outer, pdf, n, theta)
        f2 = dist(inner, pdf, n, theta)
        expected = ratio_r ** (n + 2)
        dev = np.max(np.abs(f1 / f2 - expected)) / expected
        worst = max(worst, float(dev))
    return worst


def check_proportionality(regions, pdf, tol=1e-6, n_max=5, numeric=False):
    """Raise :class:`ProportionalityError` unless every nested decoy pair is proportional.

    Returns the largest deviation found.
    """
    by_state = {}
    for r in regions:
        by_state.setdefault(r.basis_state, []).append(r)
    worst = 0.0
    for state, group in by_state.items():
        group = sorted(group, key=lambda r: r.decoy_index)
        if any(r.shape == "point" for r in group):
            continue
        for a in group:
            for b in group:
                if a.decoy_index >= b.decoy_index:
                    continue
                dev = proportionality_deviation(a, b, pdf, n_max=n_max, numeric=numeric)
                worst = max(worst, dev)
                if dev > tol:
                    raise ProportionalityError(
                        f"regions {a.name} and {b.name} ({pdf.kind} density, {a.shape} shape): "
                        f"photon-number distributions deviate from proportional by "
                        f"{dev:.3e} > {tol:.1e}; the decoy linear program would be invalid"
                    )
    return worst


def basis_average(stats_list):
    """Average paired states of one basis, weighting each by its selection probability.

    The paired regions are symmetric images of each other, so the weighted
    mean is the statistic of the union region.
    """
    w = np.array([s.p_region for s in stats_list])
    tot = float(np.sum(w))
    if tot <= 0:
        raise ValueError("paired regions have zero total probability")
    wn = w / tot

    def avg(attr):
        return sum(wi * np.asarray(getattr(s, attr)) for wi, s in zip(wn, stats_list))

    coeffs = avg("photon_coeffs")
    first = stats_list[0]
    return RegionStatistics(
        region=first.region,
        bob_basis=first.bob_basis,
        p_region=tot,
        gain=float(avg("gain")),
        error_gain=float(avg("error_gain")),
        photon_coeffs=coeffs,
        tail_mass=max(0.0, 1.0 - float(np.sum(coeffs))),
        p_region_err=float(sum(s.p_region_err for s in stats_list)),
        gain_err=float(avg("gain_err")),
        error_gain_err=float(avg("error_gain_err")),
        coeff_err=avg("coeff_err"),
    )
