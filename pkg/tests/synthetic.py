"""Random synthetic channels for LP soundness checks.

A channel is a set of photon-number yields Y_n(t) and error yields
e_nY_n(t) that depend on the polar angle t of (mu_H, mu_V). Observables are
forward-integrated over each region, so the true pseudo-yield of the
single-photon term is known exactly.
"""

from dataclasses import dataclass

import numpy as np

from passiveqkd.quadrature import integrate
from passiveqkd.regions import PostSelectionConfig, build_regions
from passiveqkd.source import ReshapedDensity
from passiveqkd.statistics import RegionStatistics, poisson_weights

N_TRUE = 25


@dataclass
class SyntheticChannel:
    lo: np.ndarray
    hi: np.ndarray
    freq: np.ndarray
    phase: np.ndarray
    err_frac: np.ndarray
    err_freq: np.ndarray

    @classmethod
    def random(cls, rng, n=N_TRUE):
        a, b = rng.uniform(0, 1, n + 1), rng.uniform(0, 1, n + 1)
        return cls(np.minimum(a, b), np.maximum(a, b), rng.uniform(0.5, 12, n + 1),
                   rng.uniform(0, 2 * np.pi, n + 1), rng.uniform(0, 1, (2, n + 1)),
                   rng.uniform(0.5, 12, n + 1))

    def yields(self, t):
        """Arrays (Y, eY) of shape (n + 1, *t.shape), both in [0, 1] with eY <= Y."""
        t = np.asarray(t)[None]
        s = 0.5 + 0.5 * np.sin(self.freq[:, None] * t.reshape(1, -1) + self.phase[:, None])
        y = self.lo[:, None] + (self.hi - self.lo)[:, None] * s
        r0, r1 = self.err_frac
        frac = np.minimum(r0, r1)[:, None] + np.abs(r1 - r0)[:, None] * (0.5 + 0.5 * np.cos(self.err_freq[:, None] * t.reshape(1, -1)))
        shape = (len(self.lo),) + t.shape[1:]
        return y.reshape(shape), (y * frac).reshape(shape)


def random_config(rng):
    dz = rng.uniform(0.05, 0.35)
    t1 = rng.uniform(0.15, 0.8)
    return PostSelectionConfig(
        mu_max=rng.uniform(0.2, 1.0), delta_z=dz, delta_xy=rng.uniform(0.05, np.pi / 4 - dz),
        delta_phi=rng.uniform(0.05, 0.5), t_decoy=t1, t_decoy2=rng.uniform(0.05, 0.9) * t1,
    )


def forward_statistics(regions, pdf, chan, n_cut=10):
    """Region statistics driven by ``chan`` plus the true single-photon pseudo-yields."""
    stats, truth = [], []
    for region in regions:
        def f(mu_h, mu_v, phi):
            mu_h, mu_v, phi = np.broadcast_arrays(mu_h, mu_v, phi)
            t = np.arctan2(mu_v, mu_h)
            pn = poisson_weights(mu_h + mu_v, N_TRUE)
            y, ey = chan.yields(t)
            return np.stack([np.ones(mu_h.shape), (pn * y).sum(0), (pn * ey).sum(0),
                             pn[1] * y[1], pn[1] * ey[1], *pn[: n_cut + 1]])

        val, err = integrate(region, pdf, f)
        p = val[0]
        cond, cond_err = val / p, (err + np.abs(val / p) * err[0]) / p
        coeffs = cond[5:]
        stats.append(RegionStatistics(
            region=region, bob_basis="-", p_region=p, gain=cond[1], error_gain=cond[2],
            photon_coeffs=coeffs, tail_mass=max(0.0, 1 - coeffs.sum()), gain_err=cond_err[1],
            error_gain_err=cond_err[2], coeff_err=cond_err[5:],
        ))
        p1 = cond[6]
        truth.append((cond[3] / p1, cond[4] / p1))
    return stats, truth


def random_case(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    state = ("H", "V", "X+", "X-", "Y+", "Y-")[rng.integers(6)]
    regions = [r for r in build_regions(cfg) if r.basis_state == state]
    return cfg, regions, SyntheticChannel.random(rng)


def run_case(seed):
    cfg, regions, chan = random_case(seed)
    pdf = ReshapedDensity(cfg.mu_max)
    return forward_statistics(regions, pdf, chan), pdf
