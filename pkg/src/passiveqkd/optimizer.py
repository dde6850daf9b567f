"""Parameter search for the post-selection configuration.

Coordinate descent over a coarse grid, then bounded Nelder-Mead refinement
in box-normalized coordinates. Every evaluation is a full pipeline run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .keyrate import KeyRateResult
from .pipeline import ProtocolSetup, finite_key_rate, passive_bb84, passive_rfi
from .regions import ConfigurationError, PostSelectionConfig

CONFIG_PARAMS = ("mu_max", "delta_z", "delta_xy", "delta_phi", "t_decoy", "t_decoy2")
ALL_PARAMS = CONFIG_PARAMS + ("p_z_bob",)
OBJECTIVES = ("bb84_asymptotic", "bb84_finite", "rfi_asymptotic")


@dataclass
class OptimizationSpec:
    """What to optimize.

    ``bounds`` maps each free parameter to ``(low, high)``. With
    ``decoy_radii`` set, the decoy scale factors follow mu_max so that the
    decoy radii stay at the given absolute values.
    """

    bounds: dict
    objective: str = "bb84_asymptotic"
    base: PostSelectionConfig = field(default_factory=PostSelectionConfig)
    p_z_bob: float = 0.99
    decoy_radii: tuple = None
    grid_points: int = 8
    sweeps: int = 2
    rtol: float = 1e-4
    max_refine_evals: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        for name, (lo, hi) in self.bounds.items():
            if name not in ALL_PARAMS:
                raise ValueError(f"unknown parameter {name!r}")
            if not lo <= hi:
                raise ValueError(f"empty range for {name}")

    @property
    def free(self):
        return tuple(n for n in ALL_PARAMS if n in self.bounds)


@dataclass
class OptimizationResult:
    config: PostSelectionConfig
    p_z_bob: float
    result: KeyRateResult
    trace: list
    all_zero: bool = False

    @property
    def rate(self):
        return self.result.rate


def _materialize(spec: OptimizationSpec, values: dict):
    cfg_kw = {k: v for k, v in values.items() if k in CONFIG_PARAMS}
    cfg = replace(spec.base, **cfg_kw)
    if spec.decoy_radii is not None:
        r1, r2 = spec.decoy_radii
        cfg = replace(cfg, t_decoy=r1 / cfg.mu_max, t_decoy2=r2 / cfg.mu_max)
    return cfg, values.get("p_z_bob", spec.p_z_bob)


def make_objective(spec: OptimizationSpec, ch, setup: ProtocolSetup, fs=None):
    if spec.objective == "bb84_finite" and fs is None:
        raise ValueError("finite-size objective needs a FiniteSizeConfig")

    def evaluate(values):
        cfg, pzb = _materialize(spec, values)
        try:
            cfg.validate()
        except ConfigurationError as exc:
            return KeyRateResult(rate=0.0, valid=False, note=str(exc)), cfg, pzb
        st = replace(setup, p_z_bob=pzb)
        if spec.objective == "bb84_asymptotic":
            res = passive_bb84(cfg, ch, st)
        elif spec.objective == "rfi_asymptotic":
            res = passive_rfi(cfg, ch, st)
        else:
            res = finite_key_rate(cfg, ch, fs, st, p_z_bob=pzb)
        return res, cfg, pzb

    return evaluate


def optimize(spec: OptimizationSpec, ch, setup=ProtocolSetup(), fs=None, evaluate=None):
    """Best configuration found; deterministic for a given spec (including seed)."""
    evaluate = evaluate or make_objective(spec, ch, setup, fs)
    free = spec.free
    lo = np.array([spec.bounds[n][0] for n in free], dtype=float)
    hi = np.array([spec.bounds[n][1] for n in free], dtype=float)
    current = {n: 0.5 * (spec.bounds[n][0] + spec.bounds[n][1]) for n in free}
    trace, cache = [], {}
    best = {"rate": -1.0, "values": dict(current), "res": None}

    def run(values):
        key = tuple(round(float(values[n]), 12) for n in free)
        if key in cache:
            return cache[key]
        res, cfg, pzb = evaluate(dict(values))
        cache[key] = res.rate
        trace.append({"iteration": len(trace), **{n: float(values[n]) for n in free}, "rate": float(res.rate)})
        if res.rate > best["rate"]:
            best.update(rate=res.rate, values=dict(values), res=res)
        return res.rate

    run(current)
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.sweeps):
        before = best["rate"]
        for i in rng.permutation(len(free)):
            name = free[i]
            for v in np.linspace(lo[i], hi[i], spec.grid_points):
                run({**best["values"], name: float(v)})
        if best["rate"] <= before * (1 + spec.rtol):
            break

    if best["rate"] > 0 and len(free) and np.any(hi > lo):
        span = np.where(hi > lo, hi - lo, 1.0)
        scale = best["rate"]

        def f(z):
            z = np.clip(z, 0.0, 1.0)
            vals = {n: float(lo[i] + z[i] * span[i]) for i, n in enumerate(free)}
            return -run(vals) / scale

        z0 = np.array([(best["values"][n] - lo[i]) / span[i] for i, n in enumerate(free)])
        minimize(f, z0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * len(free),
                 options={"xatol": 1e-3, "fatol": spec.rtol, "maxfev": spec.max_refine_evals,
                          "initial_simplex": _initial_simplex(z0)})

    cfg, pzb = _materialize(spec, best["values"])
    res = best["res"]
    all_zero = best["rate"] <= 0
    if all_zero:
        mid = {n: 0.5 * (spec.bounds[n][0] + spec.bounds[n][1]) for n in free}
        cfg, pzb = _materialize(spec, mid)
        res = KeyRateResult(rate=0.0, valid=False, note="every evaluated configuration gave zero rate")
    return OptimizationResult(cfg, pzb, res, trace, all_zero)


def _initial_simplex(z0, step=0.1):
    n = len(z0)
    pts = [z0.copy()]
    for i in range(n):
        p = z0.copy()
        p[i] = p[i] + step if p[i] + step <= 1.0 else p[i] - step
        pts.append(p)
    return np.array(pts)


def optimize_active_mu(rate_fn, lo=0.05, hi=1.0, grid=20):
    """Signal intensity maximizing an active-source rate: grid then bounded refinement."""
    from scipy.optimize import minimize_scalar

    mus = np.linspace(lo, hi, grid)
    rates = [rate_fn(m).rate for m in mus]
    k = int(np.argmax(rates))
    a, b = mus[max(k - 1, 0)], mus[min(k + 1, grid - 1)]
    res = minimize_scalar(lambda m: -rate_fn(m).rate, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-4})
    if -res.fun >= rates[k]:
        return float(res.x), rate_fn(float(res.x))
    return float(mus[k]), rate_fn(float(mus[k]))
