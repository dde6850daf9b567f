"""Command-line entry point.

Configuration is an INI file; see the README for the schema. Output is CSV
(one row per scan point) or a JSON report carrying every intermediate.

Exit codes: 0 success, 1 configuration error, 2 numeric or LP failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .decoy import LPInfeasibleError, build_lp, paired_statistics
from .keyrate import FiniteSizeConfig
from .optimizer import OptimizationSpec, optimize, optimize_active_mu
from .pipeline import (
    ProtocolSetup, active_bb84, active_rfi, finite_key_rate, make_channel, passive_bb84,
    passive_rfi, statistics_table,
)
from .quadrature import QuadratureError
from .regions import ConfigurationError, PostSelectionConfig, build_regions
from .source import ReshapedDensity
from .statistics import ProportionalityError

SCENARIOS = ("bb84-scan", "rfi-scan", "finite-scan", "optimize", "verify", "lp-dump")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    setup: ProtocolSetup
    postselection: PostSelectionConfig
    distances: list
    optimize_bounds: dict = field(default_factory=dict)
    decoy_radii: tuple = None
    optimize_objective: str = "bb84_asymptotic"
    active_decoys: tuple = (0.04, 0.02)
    rfi_distance: float = 50.0
    rfi_angles_deg: list = field(default_factory=lambda: [0, 15, 30, 45, 60, 75, 90])
    finite_n: list = field(default_factory=lambda: [1e10, 1e11, 1e12])
    epsilon: float = 1e-7
    mc_pulses: int = 1_000_000
    mc_sigma: float = 5.0
    lp_pair: tuple = ("X", "X")
    raw: dict = field(default_factory=dict)

    def digest(self, seed):
        payload = json.dumps({"config": self.raw, "seed": seed}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _line_index(text):
    """Map (section, key) to the line where the key is set."""
    index, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section:
            index[(section, m.group(1).strip().lower())] = no
    return index


class _Reader:
    def __init__(self, parser, lines, path):
        self.p, self.lines, self.path = parser, lines, path

    def _fail(self, section, key, msg):
        line = self.lines.get((section, key))
        where = f"{self.path}:{line}" if line else f"{self.path} [{section}]"
        raise ConfigError(f"{where}: {key}: {msg}")

    def has(self, section, key):
        return self.p.has_option(section, key)

    def float(self, section, key, default=None, positive=False):
        if not self.has(section, key):
            return default
        raw = self.p.get(section, key)
        try:
            v = float(raw)
        except ValueError:
            self._fail(section, key, f"expected a number, got {raw!r}")
        if positive and not v > 0:
            self._fail(section, key, "must be positive")
        return v

    def floats(self, section, key, default=None):
        if not self.has(section, key):
            return default
        raw = self.p.get(section, key)
        try:
            return [float(x) for x in raw.replace(",", " ").split()]
        except ValueError:
            self._fail(section, key, f"expected a list of numbers, got {raw!r}")

    def str(self, section, key, default=None):
        return self.p.get(section, key) if self.has(section, key) else default


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    r = _Reader(parser, _line_index(text), path)
    scenario = r.str("run", "scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"{path}: [run] scenario must be one of {', '.join(SCENARIOS)}, got {scenario!r}")

    setup = ProtocolSetup(
        f_e=r.float("system", "f_e", 1.16, positive=True),
        p_d=r.float("system", "p_d", 1e-6),
        eta_d=r.float("system", "eta_d", 1.0, positive=True),
        e_d=r.float("system", "e_d", 0.02),
        attenuation=r.float("system", "attenuation", 0.2, positive=True),
        p_z_bob=r.float("system", "p_z_bob", 0.99, positive=True),
        p_z_alice_active=r.float("system", "p_z_alice_active", 0.99, positive=True),
        n_cut=int(r.float("system", "n_cut", 10)),
        key_pdf=r.str("system", "key_pdf", "inherent"),
        solver=r.str("system", "solver", "simplex"),
    )
    if setup.key_pdf not in ("inherent", "reshaped"):
        r._fail("system", "key_pdf", "must be 'inherent' or 'reshaped'")
    if setup.solver not in ("simplex", "highs"):
        r._fail("system", "solver", "must be 'simplex' or 'highs'")
    if not 0 <= setup.p_d < 1:
        r._fail("system", "p_d", "must lie in [0, 1)")
    if not 0 <= setup.e_d < 0.5:
        r._fail("system", "e_d", "must lie in [0, 0.5)")

    ps = PostSelectionConfig(**{
        k: r.float("postselection", k, getattr(PostSelectionConfig(), k), positive=True)
        for k in ("mu_max", "delta_z", "delta_xy", "delta_phi", "t_decoy", "t_decoy2")
    })
    try:
        ps.validate()
    except ConfigurationError as exc:
        raise ConfigError(f"{path} [postselection]: {exc}") from exc

    bounds = {}
    if parser.has_section("optimize"):
        for name in ("mu_max", "delta_z", "delta_xy", "delta_phi", "t_decoy", "t_decoy2", "p_z_bob"):
            vals = r.floats("optimize", name)
            if vals is not None:
                if len(vals) != 2 or vals[0] > vals[1]:
                    r._fail("optimize", name, "expected 'low, high'")
                bounds[name] = tuple(vals)
    radii = r.floats("optimize", "decoy_radii") if parser.has_section("optimize") else None
    if radii is not None and len(radii) != 2:
        r._fail("optimize", "decoy_radii", "expected two radii")

    cfg = RunConfig(
        scenario=scenario,
        setup=setup,
        postselection=ps,
        distances=r.floats("channel", "distances", [0.0, 25.0, 50.0, 75.0, 100.0]),
        optimize_bounds=bounds,
        decoy_radii=tuple(radii) if radii else None,
        optimize_objective=r.str("optimize", "objective", "bb84_asymptotic"),
        active_decoys=tuple(r.floats("active", "decoys", [0.04, 0.02])),
        rfi_distance=r.float("rfi", "distance", 50.0),
        rfi_angles_deg=r.floats("rfi", "angles_deg", [0, 15, 30, 45, 60, 75, 90]),
        finite_n=r.floats("finite", "n_values", [1e10, 1e11, 1e12]),
        epsilon=r.float("finite", "epsilon", 1e-7, positive=True),
        mc_pulses=int(r.float("verify", "mc_pulses", 1_000_000)),
        mc_sigma=r.float("verify", "sigma", 5.0, positive=True),
        lp_pair=tuple((r.str("lp-dump", "pair", "XX") or "XX").upper()),
        raw={s: dict(parser.items(s)) for s in parser.sections()},
    )
    if any(d < 0 for d in cfg.distances):
        r._fail("channel", "distances", "distances must be non-negative")
    if cfg.optimize_objective not in ("bb84_asymptotic", "bb84_finite", "rfi_asymptotic"):
        r._fail("optimize", "objective", "unknown objective")
    if len(cfg.lp_pair) != 2 or any(b not in "ZXY" for b in cfg.lp_pair):
        r._fail("lp-dump", "pair", "expected two basis letters, e.g. XX")
    if not 0 < cfg.epsilon < 1:
        r._fail("finite", "epsilon", "must lie in (0, 1)")
    return cfg


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _spec(cfg: RunConfig, seed, objective=None):
    return OptimizationSpec(bounds=cfg.optimize_bounds, objective=objective or cfg.optimize_objective,
                            base=cfg.postselection, p_z_bob=cfg.setup.p_z_bob,
                            decoy_radii=cfg.decoy_radii, seed=seed)


def _bb84_point(args):
    cfg, seed, distance = args
    ch = make_channel(distance, cfg.setup)
    if cfg.optimize_bounds:
        opt = optimize(_spec(cfg, seed, "bb84_asymptotic"), ch, cfg.setup)
        ps, passive = opt.config, opt.result
    else:
        ps, passive = cfg.postselection, passive_bb84(cfg.postselection, ch, cfg.setup)
    mu, active = optimize_active_mu(lambda m: active_bb84(m, ch, cfg.setup, cfg.active_decoys))
    row = {"distance_km": distance, "active_rate": active.rate, "passive_rate": passive.rate,
           "mu_max": ps.mu_max, "delta_z": ps.delta_z, "active_mu": mu}
    return row, {"passive": passive.to_dict(), "active": active.to_dict(), "postselection": ps.as_dict()}


def _rfi_point(args):
    cfg, seed, deg = args
    ch = make_channel(cfg.rfi_distance, cfg.setup, rot_axis=(0.0, 0.0, 1.0), rot_angle=np.radians(deg))
    passive = passive_rfi(cfg.postselection, ch, cfg.setup)
    mu, active = optimize_active_mu(lambda m: active_rfi(m, ch, cfg.setup, cfg.active_decoys))
    row = {"theta_ab_deg": deg, "rate": passive.rate, "active_rate": active.rate, "active_mu": mu}
    return row, {"passive": passive.to_dict(), "active": active.to_dict()}


def _finite_point(args):
    cfg, seed, distance, n = args
    ch = make_channel(distance, cfg.setup)
    if n is None:
        res = passive_bb84(cfg.postselection, ch, cfg.setup)
    else:
        res = finite_key_rate(cfg.postselection, ch, FiniteSizeConfig(n, cfg.epsilon), cfg.setup)
    row = {"distance_km": distance, "n_total": "inf" if n is None else n, "rate": res.rate}
    return row, res.to_dict()


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_verify(cfg: RunConfig, seed, log):
    """Monte-Carlo cross-validation plus proportionality checks; returns (ok, report)."""
    from .mc_oracle import run as mc_run
    from .regions import full_domain
    from .source import InherentDensity
    from .statistics import check_proportionality, compute_statistics_multi

    report, ok = {"checks": []}, True

    def record(name, passed, detail):
        nonlocal ok
        ok &= bool(passed)
        report["checks"].append({"check": name, "passed": bool(passed), "detail": detail})
        log(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    ps = cfg.postselection
    pdf = ReshapedDensity(ps.mu_max)
    dev = check_proportionality(build_regions(ps), pdf, tol=1e-6)
    record("proportionality (reshaped, sectors)", dev < 1e-6, f"max deviation {dev:.2e}")
    naive = build_regions(ps, shape="square")
    try:
        check_proportionality(naive, InherentDensity(ps.mu_max), tol=1e-2, numeric=True)
        record("naive regions rejected", False, "inherent density with square regions was accepted")
    except ProportionalityError as exc:
        record("naive regions rejected", True, str(exc).split(":")[0])

    ch = make_channel(cfg.distances[0] if cfg.distances else 0.0, cfg.setup)
    for reshape in (True, False):
        dens = pdf if reshape else InherentDensity(ps.mu_max)
        mc = mc_run(ps, ch, cfg.mc_pulses, seed, reshape=reshape)
        worst, where = 0.0, ""
        for region in build_regions(ps):
            st = compute_statistics_multi(region, dens, ch, ("Z", "X", "Y"), 5)
            z = []
            p, sp = mc.p_region(region.name)
            z.append(("p_region", (p - st["Z"].p_region) / sp))
            for b in ("Z", "X", "Y"):
                g, sg = mc.gain(region.name, b)
                e, se = mc.error_gain(region.name, b)
                z.append((f"gain/{b}", (g - st[b].gain) / sg))
                z.append((f"error_gain/{b}", (e - st[b].error_gain) / se))
            for n in range(4):
                m, sm = mc.photon_coeff(region.name, n)
                z.append((f"P{n}", (m - st["Z"].photon_coeffs[n]) / sm))
            for label, val in z:
                if abs(val) > worst:
                    worst, where = abs(val), f"{region.name} {label}"
        record(f"Monte-Carlo vs quadrature ({'reshaped' if reshape else 'inherent'})",
               worst <= cfg.mc_sigma, f"largest deviation {worst:.2f} sigma at {where}")
    return ok, report


def run_scenario(cfg: RunConfig, seed=0, jobs=1, log=None):
    """Execute the configured scenario; returns (exit code, rows, report)."""
    log = log or (lambda msg: print(msg, file=sys.stderr))
    digest = cfg.digest(seed)
    rows, details = [], []
    if cfg.scenario == "bb84-scan":
        out = _map(_bb84_point, [(cfg, seed, d) for d in cfg.distances], jobs)
    elif cfg.scenario == "rfi-scan":
        out = _map(_rfi_point, [(cfg, seed, a) for a in cfg.rfi_angles_deg], jobs)
    elif cfg.scenario == "finite-scan":
        items = [(cfg, seed, d, n) for d in cfg.distances for n in list(cfg.finite_n) + [None]]
        out = _map(_finite_point, items, jobs)
    elif cfg.scenario == "optimize":
        distance = cfg.distances[0]
        ch = make_channel(distance, cfg.setup)
        fs = FiniteSizeConfig(cfg.finite_n[0], cfg.epsilon) if cfg.optimize_objective == "bb84_finite" else None
        if not cfg.optimize_bounds:
            raise ConfigError("optimize scenario needs at least one bound in [optimize]")
        opt = optimize(_spec(cfg, seed), ch, cfg.setup, fs)
        out = [({**row, "distance_km": distance}, {}) for row in opt.trace]
        details.append({"best": {"postselection": opt.config.as_dict(), "p_z_bob": opt.p_z_bob,
                                 "result": opt.result.to_dict(), "all_zero": opt.all_zero}})
    elif cfg.scenario == "verify":
        ok, rep = run_verify(cfg, seed, log)
        out = [({"check": c["check"], "passed": c["passed"], "detail": c["detail"]}, {}) for c in rep["checks"]]
        rows = [dict(r, config_hash=digest) for r, _ in out]
        return (EXIT_OK if ok else EXIT_VERIFY), rows, {"config_hash": digest, "checks": rep["checks"]}
    else:  # lp-dump
        distance = cfg.distances[0]
        ch = make_channel(distance, cfg.setup)
        pdf = ReshapedDensity(cfg.postselection.mu_max)
        proto = "bb84" if set(cfg.lp_pair) <= {"Z", "X"} and cfg.lp_pair[0] == cfg.lp_pair[1] else "rfi"
        table = statistics_table(build_regions(cfg.postselection), pdf, ch, cfg.setup.n_cut, proto)
        lp = build_lp(paired_statistics(table, *cfg.lp_pair), pdf=pdf)
        text = f"# config_hash {digest}\n# pair {''.join(cfg.lp_pair)} at {distance} km\n" + lp.dump()
        return EXIT_OK, [], {"config_hash": digest, "text": text}
    for row, det in out:
        rows.append({**row, "config_hash": digest})
        details.append(det)
    report = {"config_hash": digest, "scenario": cfg.scenario, "seed": seed,
              "setup": cfg.setup.as_dict(), "postselection": cfg.postselection.as_dict(),
              "rows": rows, "details": details}
    return EXIT_OK, rows, report


def _write(rows, report, fmt, out):
    if "text" in report:
        text = report["text"] + "\n"
    elif fmt == "report":
        text = json.dumps(_to_jsonable(report), indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        if rows:
            fields = list(rows[0].keys())
            w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
        text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="passiveqkd", description="Fully passive QKD source simulations")
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--seed", type=int, default=0, help="seed for the optimizer and Monte-Carlo runs")
    ap.add_argument("--out", default="-", help="output path (default stdout)")
    ap.add_argument("--format", choices=("csv", "report"), default="csv")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for scan points")
    args = ap.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        code, rows, report = run_scenario(cfg, args.seed, max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, LPInfeasibleError, ProportionalityError, ArithmeticError,
            FloatingPointError) as exc:
        print(f"numeric failure ({type(exc).__module__}.{type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write(rows, report, args.format, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
