"""Integration of observables over post-selection regions.

Integrals are taken against ``density(mu_H, mu_V) * dphi / (2 pi)`` over a
region. Integrands are vectorized callables ``f(mu_h, mu_v, phi)`` that may
return an array with leading observable axes; all observables share one set
of nodes.

* reshaped density: tensor Gauss-Legendre in polar (r, theta), refined by
  doubling until successive estimates agree.
* inherent density: the arcsine singularities are removed by
  mu = mu_max sin^2(u), under which the density is flat; the outer integral
  is adaptive (``scipy.integrate.quad_vec``), the inner one Gauss-Legendre.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec


class QuadratureError(ArithmeticError):
    """Integration did not reach the requested tolerance."""


@lru_cache(maxsize=64)
def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _nodes(a, b, n):
    x, w = _gl(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _phase_nodes(region, n_window, n_circle):
    nodes, weights = [], []
    for centre, hw in region.phi_windows:
        n = n_circle if hw >= np.pi - 1e-12 else n_window
        p, w = _nodes(centre - hw, centre + hw, n)
        nodes.append(p)
        weights.append(w / (2.0 * np.pi))
    return np.concatenate(nodes), np.concatenate(weights)


def _unit(mu_h, mu_v, phi):
    return np.ones(np.broadcast(mu_h, mu_v, phi).shape)


def _reduce(values, weights, n_axes):
    """Contract the trailing ``n_axes`` of ``values`` against ``weights``."""
    values = np.asarray(values, dtype=float)
    axes = tuple(range(values.ndim - n_axes, values.ndim))
    return np.sum(values * weights, axis=axes)


def _polar_once(region, density, f, n_r, n_t, n_p):
    phi, wp = _phase_nodes(region, n_p, 3 * n_p)
    total = 0.0
    for t_lo, t_hi in region.theta_breaks():
        if t_hi <= t_lo:
            continue
        th, wt = _nodes(t_lo, t_hi, n_t)
        r_hi = region.r_upper(th)
        x, wx = _gl(n_r)
        r = 0.5 * r_hi[:, None] * (x[None, :] + 1.0)
        wr = 0.5 * r_hi[:, None] * wx[None, :]
        mu_h = r * np.cos(th)[:, None]
        mu_v = r * np.sin(th)[:, None]
        base = density(mu_h, mu_v) * r * wr * wt[:, None]
        vals = f(mu_h[..., None], mu_v[..., None], phi[None, None, :])
        total = total + _reduce(vals, base[..., None] * wp[None, None, :], 3)
    return np.asarray(total, dtype=float)


def _integrate_polar(region, density, f, rtol, atol, start=(12, 12, 6), max_level=6):
    n_r, n_t, n_p = start
    prev = _polar_once(region, density, f, n_r, n_t, n_p)
    for _ in range(max_level):
        n_r, n_t, n_p = 2 * n_r, 2 * n_t, 2 * n_p
        cur = _polar_once(region, density, f, n_r, n_t, n_p)
        err = np.abs(cur - prev)
        if np.all(err <= np.maximum(atol, rtol * np.abs(cur))):
            return cur, err
        prev = cur
    raise QuadratureError(
        f"polar quadrature for region {region.name} did not converge: "
        f"max abs change {float(np.max(err)):.3e} at n=({n_r},{n_t},{n_p})"
    )


def _mu_h_limits(region, mu_max):
    """Range of mu_H covered by the region and the kinks of its mu_V limits."""
    lo_t, hi_t = region.theta_range
    r = region.r_max
    if region.shape == "sector":
        top = r * np.cos(lo_t)
        kinks = [r * np.cos(hi_t)]
    else:
        top = r if np.tan(lo_t) <= 1.0 else r / np.tan(lo_t)
        kinks = [r / np.tan(hi_t)] if np.tan(hi_t) > 0 else []
    top = min(top, mu_max)
    kinks = [k for k in kinks if 0.0 < k < top]
    return top, kinks


def _mu_v_limits(region, mu_h):
    lo_t, hi_t = region.theta_range
    lo = mu_h * np.tan(lo_t)
    tan_hi = np.tan(hi_t) if hi_t < np.pi / 2 - 1e-15 else np.inf
    if region.shape == "sector":
        cap = np.sqrt(np.maximum(region.r_max**2 - mu_h**2, 0.0))
    else:
        cap = region.r_max
    hi = np.minimum(mu_h * tan_hi, cap) if np.isfinite(tan_hi) else cap
    return lo, np.maximum(hi, lo)


def _integrate_arcsine(region, density, f, rtol, atol, n_v=24, n_p=8):
    m = density.mu_max
    top, kinks = _mu_h_limits(region, m)
    u_top = np.arcsin(np.sqrt(min(top / m, 1.0)))
    u_kinks = [float(np.arcsin(np.sqrt(k / m))) for k in kinks]
    phi, wp = _phase_nodes(region, n_p, 3 * n_p)
    x, wx = _gl(n_v)

    def inner(u):
        mu_h = m * np.sin(u) ** 2
        lo, hi = _mu_v_limits(region, mu_h)
        v_lo = np.arcsin(np.sqrt(np.clip(lo / m, 0.0, 1.0)))
        v_hi = np.arcsin(np.sqrt(np.clip(hi / m, 0.0, 1.0)))
        half = 0.5 * (v_hi - v_lo)
        v = v_lo + half * (x + 1.0)
        mu_v = m * np.sin(v) ** 2
        vals = f(np.full_like(mu_v, mu_h)[:, None], mu_v[:, None], phi[None, :])
        w = (half * wx)[:, None] * wp[None, :] * (4.0 / np.pi**2)
        return _reduce(vals, w, 2)

    shape_probe = np.shape(inner(min(u_top, 0.5) / 2.0))
    if u_top <= 0:
        return np.zeros(shape_probe), np.zeros(shape_probe)
    val, err = quad_vec(
        inner, 0.0, u_top, epsabs=atol, epsrel=rtol, points=u_kinks or None,
        limit=2000, norm="max",
    )
    val = np.asarray(val, dtype=float)
    if not np.all(np.abs(err) <= np.maximum(10 * atol, 10 * rtol * np.max(np.abs(val)))):
        raise QuadratureError(
            f"arcsine-substituted quadrature for region {region.name} did not converge "
            f"(error estimate {float(np.max(err)):.3e})"
        )
    return val, np.full(val.shape, float(err))


def integrate(region, density, f=None, *, rtol=1e-10, atol=1e-15):
    """Return ``(value, abs_error)`` of the density-weighted integral of f."""
    f = _unit if f is None else f
    if region.shape == "point":
        mu_h, mu_v, phi = region.point
        val = np.asarray(f(np.asarray(mu_h), np.asarray(mu_v), np.asarray(phi)), dtype=float)
        return region.point_weight * val, np.zeros(val.shape)
    if region.r_max > density.mu_max * (1 + 1e-12):
        raise ValueError(
            f"region {region.name} extends beyond the density support (r_max > mu_max)"
        )
    if density.kind == "reshaped":
        return _integrate_polar(region, density, f, rtol, atol)
    if density.kind == "inherent":
        return _integrate_arcsine(region, density, f, rtol, atol)
    raise ValueError(f"unknown density kind {density.kind!r}")
