"""Batch driver: one subcommand per experiment family.

    horolab relations    [--backend algebraic|variable]
    horolab holonomy     [--backend algebraic|variable]
    horolab margulis     [--backend algebraic|variable]
    horolab standardness

Common flags: ``--config PATH --seed N --threads N --out DIR``.  The config
file is INI style (``[section]`` then ``key = value``); unknown sections or
keys are errors.  Every run writes

    <out>/<name>.json        summary record (config echo, scalars, gates)
    <out>/<name>.csv         per-trial rows
    <out>/<name>_<fig>.dat   two-column data for plotting
    <out>/<name>.timing.json wall time (kept apart so the rest is
                             byte-reproducible)

Exit status: 0 when every gate passes, 1 on a gate failure, 2 on a usage or
configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, HorolabError

BACKENDS = ("algebraic", "variable")

# defaults per section; a value's type fixes how the config text is parsed
DEFAULTS = {
    "metric": {"a": 0.05},
    "relations": {
        "grid": 20, "s_max": 2.0, "t_max": 1.0, "tol": 1e-10,
        "grid_variable": 4, "s_max_variable": 1.0, "t_max_variable": 0.05,
        "tol_variable": 1e-3, "chart_pairs": 20,
    },
    "holonomy": {
        "grid": 10, "s_max": 1.5, "t_max": 0.005, "u_max": 1.0, "delta": 1e-4,
        "tol_closed": 1e-10, "tol_equiv": 1e-9, "tol_deriv": 1e-6,
        "grid_variable": 3, "s_max_variable": 0.5, "t_max_variable": 0.005,
        "delta_variable": 1e-3, "tol_equiv_variable": 1e-3, "tol_deriv_variable": 1e-3,
        "slope_lo": 1.7, "slope_hi": 2.3,
    },
    "margulis": {
        "arc_length": 0.1, "times": "0.5, 1.0, 1.5, 2.0", "tol_expansion": 0.02,
        "entropy_T": 6.0, "entropy_samples": 8, "tol_entropy": 1e-3,
        "box_side": 0.8, "box_samples": 100000, "box_point": "0.2, 1.1, 0.0",
        "tol_box": 0.05,
    },
    "standardness": {
        "eps": 0.3, "R": "25, 50, 100, 200", "dt": 0.25, "shape": "1, 2, 10",
        "y_spacing": "haar", "samples": 500, "cover_ratio_max": 2.0,
        "ball_ratio_max": 3.0,
        "claimA_trials": 500, "claimA_R": 50.0, "claimA_shape": "1, 3, 1",
        "claimA_y_spacing": "log", "claimA_min_success": 0.95,
        "claimB_pairs": 10000, "claimB_samples": 100, "claimB_R": 100.0,
        "pm_eps": "0.05, 0.1, 0.2, 0.4", "pm_R": "10, 20, 40, 80", "pm_samples": 100000,
        "boundary_eps": "0.1, 0.05, 0.025", "boundary_samples": 40000,
        "boundary_ratio_max": 3.0,
        "union_R": 100.0, "union_samples": 2000, "good_samples": 500, "good_dt": 0.05,
        "parts": "boundary, pm, union, good, claimB, claimA, cover",
    },
}


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _coerce(default, text, where):
    try:
        if isinstance(default, bool):
            return text.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return str(text).strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}") from exc


@dataclass
class ExperimentConfig:
    """Everything that determines a run's output."""

    command: str
    backend: str = "algebraic"
    seed: int = 0
    threads: int = 1
    out: str = "horolab_out"
    params: dict = field(default_factory=dict)

    @classmethod
    def load(cls, command, path=None, **kw):
        params = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
        if path is not None:
            cp = configparser.ConfigParser(interpolation=None)
            cp.optionxform = str
            try:
                with open(path) as fh:
                    cp.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            for sec in cp.sections():
                if sec not in params:
                    raise ConfigError(f"unknown section [{sec}]")
                for key, text in cp.items(sec):
                    if key not in params[sec]:
                        raise ConfigError(f"unknown key {key!r} in [{sec}]")
                    params[sec][key] = _coerce(DEFAULTS[sec][key], text, f"[{sec}] {key}")
        cfg = cls(command, params=params, **kw)
        if cfg.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {cfg.backend!r}")
        if cfg.seed < 0:
            raise ConfigError("seed must be non-negative")
        if cfg.threads < 1:
            raise ConfigError("threads must be positive")
        return cfg

    def section(self, name):
        return self.params[name]

    def rng(self, *stream):
        """Independent generator for a named part of the run."""
        return np.random.default_rng([self.seed, *stream])

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        d.pop("threads")
        return d


@dataclass
class ExperimentRecord:
    name: str
    config: dict
    scalars: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def gate(self, name, value, threshold, op="<"):
        """Record a comparison ``value op threshold``; NaN always fails."""
        value = float(value)
        ok = {"<": value < threshold, "<=": value <= threshold,
              ">": value > threshold, ">=": value >= threshold,
              "==": value == threshold}[op] and not math.isnan(value)
        self.gates.append({"name": name, "value": value, "op": op,
                           "threshold": threshold, "passed": bool(ok)})
        return ok

    @property
    def passed(self) -> bool:
        return all(g["passed"] for g in self.gates)

    def summary(self):
        return {"name": self.name, "config": self.config, "scalars": self.scalars,
                "gates": self.gates, "passed": self.passed}

    def write(self, out):
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{self.name}.json", "w") as fh:
            json.dump(_plain(self.summary()), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.rows:
            keys = list(self.rows[0].keys())
            for r in self.rows[1:]:
                keys += [k for k in r if k not in keys]
            with open(out / f"{self.name}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
                w.writeheader()
                for r in self.rows:
                    w.writerow({k: _cell(r.get(k, "")) for k in keys})
        for fig, (xs, ys) in self.data.items():
            with open(out / f"{self.name}_{fig}.dat", "w") as fh:
                fh.write(f"# {fig}\n")
                for a, b in zip(xs, ys):
                    fh.write(f"{float(a)!r} {float(b)!r}\n")
        with open(out / f"{self.name}.timing.json", "w") as fh:
            json.dump({"wall_time": self.wall_time}, fh)
            fh.write("\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# -- backends ----------------------------------------------------------------

def make_backend(cfg):
    if cfg.backend == "algebraic":
        from .algebraic import AlgebraicBackend
        return AlgebraicBackend()
    from .variable import ConformalMetric, VariableBackend
    return VariableBackend(ConformalMetric(a=cfg.section("metric")["a"]))


def _base_point(backend, rng):
    if backend.name == "algebraic":
        return backend.haar_sample(rng)
    from .variable import state
    return state(rng.uniform(-0.3, 0.3), rng.uniform(0.4, 0.6), rng.uniform(0.0, 2 * math.pi))


# -- subcommands -------------------------------------------------------------

def cmd_relations(cfg) -> ExperimentRecord:
    """Renormalization, group law and chart round trip residuals."""
    from .flows import chart_roundtrip_residual, group_law_residual, renormalization_residuals
    p = cfg.section("relations")
    b = make_backend(cfg)
    rec = ExperimentRecord("relations", cfg.to_dict())
    sfx = "" if b.name == "algebraic" else "_variable"
    n, smax, tmax, tol = p["grid" + sfx], p["s_max" + sfx], p["t_max" + sfx], p["tol" + sfx]
    rng = cfg.rng(1)
    x = _base_point(b, rng)
    worst_r = 0.0
    for s in np.linspace(-smax, smax, n):
        for t in np.linspace(-tmax, tmax, n):
            rh, rk = renormalization_residuals(b, x, s, t)
            worst_r = max(worst_r, rh, rk)
            rec.rows.append({"kind": "renormalization", "s": s, "t": t, "res_h": rh, "res_k": rk})
    worst_g = 0.0
    for which in ("g", "h", "k"):
        for a_, c_ in rng.uniform(-tmax, tmax, (3, 2)):
            r = group_law_residual(b, which, x, a_, c_)
            worst_g = max(worst_g, r)
            rec.rows.append({"kind": "group_" + which, "s": a_, "t": c_, "res_h": r, "res_k": ""})
    worst_c = 0.0
    from .flows import LocalCoords
    for _ in range(p["chart_pairs"]):
        c = LocalCoords(*rng.uniform(-0.05, 0.05, 3))
        r = chart_roundtrip_residual(b, b.reconstruct(x, c), x)
        worst_c = max(worst_c, r)
    rec.scalars.update(renormalization=worst_r, group_law=worst_g, chart_roundtrip=worst_c)
    rec.gate("renormalization", worst_r, tol)
    rec.gate("group_law", worst_g, tol)
    rec.gate("chart_roundtrip", worst_c, tol)
    return rec


def cmd_holonomy(cfg) -> ExperimentRecord:
    """Solver against the closed form, equivariance and the sigma derivative."""
    from .flows import (equivariance_residual, holonomy_residual, sigma_derivative_convergence_slope,
                        sigma_derivative_residual, solve_holonomy)
    p = cfg.section("holonomy")
    b = make_backend(cfg)
    alg = b.name == "algebraic"
    sfx = "" if alg else "_variable"
    rec = ExperimentRecord("holonomy", cfg.to_dict())
    rng = cfg.rng(2)
    x = _base_point(b, rng)
    n, smax, tmax = p["grid" + sfx], p["s_max" + sfx], p["t_max" + sfx]
    delta = p["delta" + sfx]
    w_closed = w_eq = w_der = w_res = 0.0
    for s in np.linspace(-smax, smax, n):
        for t in np.linspace(-tmax, tmax, n):
            hol = solve_holonomy(b, x, s, t)
            row = {"s": s, "t": t, "rho": hol.rho, "sigma": hol.sigma, "tau": hol.tau}
            r = holonomy_residual(b, x, s, t, hol)
            w_res = max(w_res, r)
            row["residual"] = r
            if alg:
                cf = b.closed_form_holonomy(s, t)
                d = max(abs(hol.rho - cf.rho), abs(hol.sigma - cf.sigma), abs(hol.tau - cf.tau))
                row["closed_form_diff"] = d
                w_closed = max(w_closed, d)
            u = float(rng.uniform(-p["u_max"], p["u_max"]))
            e = equivariance_residual(b, x, s, t, u)
            row["u"] = u
            row["equivariance"] = e
            w_eq = max(w_eq, e)
            if s != 0.0 and t != 0.0:
                d = sigma_derivative_residual(b, x, s, t, delta) / math.exp(hol.rho)
                row["sigma_derivative"] = d
                w_der = max(w_der, d)
            rec.rows.append(row)
    s0, t0 = smax, tmax
    slope = sigma_derivative_convergence_slope(b, x, s0, t0)
    rec.scalars.update(closed_form=w_closed, equivariance=w_eq, sigma_derivative=w_der,
                       residual=w_res, fd_slope=slope)
    if alg:
        rec.gate("closed_form", w_closed, p["tol_closed"])
    rec.gate("equivariance", w_eq, p["tol_equiv" + sfx])
    rec.gate("sigma_derivative", w_der, p["tol_deriv" + sfx])
    rec.gate("fd_slope_lo", slope, p["slope_lo"], ">=")
    rec.gate("fd_slope_hi", slope, p["slope_hi"], "<=")
    return rec


def _flat_angles(rng, n):
    """Directions within 0.5 of horizontal, so both ends of the orbit stay
    below the top of the patch."""
    return rng.uniform(-0.5, 0.5, n) + math.pi * rng.integers(0, 2, n)


def cmd_margulis(cfg) -> ExperimentRecord:
    """Expansion law and entropy (variable), entropy and box test (algebraic)."""
    p = cfg.section("margulis")
    b = make_backend(cfg)
    rec = ExperimentRecord("margulis", cfg.to_dict())
    rng = cfg.rng(3)
    if b.name == "algebraic":
        from .algebraic import iwasawa
        x = b.haar_sample(rng)
        worst = 0.0
        for s in _floats(p["times"]):
            # h-expansion under conjugation: g_s h_t x = h_{e^s t} g_s x
            c = b.local_coords(b.g(b.h(x, 1e-3), s), b.g(x, s))
            rate = math.log(c.v / 1e-3) / s
            worst = max(worst, abs(rate - b.entropy_u))
            rec.rows.append({"kind": "entropy", "t": s, "value": rate})
        rec.scalars["entropy_error"] = worst
        rec.gate("entropy", worst, p["tol_entropy"])
        side = p["box_side"]
        pt = iwasawa(*_floats(p["box_point"]))
        ratio, se, nin = b.box_measure_ratio(pt, (side,) * 3, p["box_samples"], rng)
        rec.scalars.update(box_ratio=ratio, box_se=se, box_multiplicity=nin)
        rec.gate("box_ratio", abs(ratio - 1.0), p["tol_box"])
        rec.gate("box_injective", nin, 1, "<=")
        return rec
    from .variable import state
    x = state(0.3, 1.2, 0.7)
    worst = 0.0
    ts, rs = [], []
    for t in _floats(p["times"]):
        r = b.expansion_ratio(x, p["arc_length"], t)
        worst = max(worst, abs(r - 1.0))
        ts.append(t)
        rs.append(r)
        rec.rows.append({"kind": "expansion", "t": t, "value": r})
    rec.data["expansion"] = (ts, rs)
    arc = b.margulis_arc_measure(x, p["arc_length"])
    rec.scalars.update(expansion_error=worst, arc_measure=arc.value, arc_gap=arc.convergence_gap)
    rec.gate("expansion", worst, p["tol_expansion"])
    samples = [state(*v) for v in zip(rng.uniform(-0.3, 0.3, p["entropy_samples"]),
                                       rng.uniform(0.8, 1.2, p["entropy_samples"]),
                                       _flat_angles(rng, p["entropy_samples"]))]
    from .variable import ConformalMetric, VariableBackend
    hyp = VariableBackend(ConformalMetric(a=0.0))
    h0, _ = hyp.entropy_estimate(samples, p["entropy_T"])
    h1, se1 = b.entropy_estimate(samples, p["entropy_T"])
    rec.scalars.update(entropy_constant_curvature=h0, entropy_metric=h1, entropy_metric_se=se1)
    rec.gate("entropy_constant_curvature", abs(h0 - 1.0), p["tol_entropy"])
    return rec


def cmd_standardness(cfg) -> ExperimentRecord:
    """Boundary scaling, PM volumes, Claims A and B, balls and covers."""
    from .algebraic import AlgebraicBackend
    from .matching import experiments as E
    from .matching.partition import UPartition, boundary_scaling
    if cfg.backend != "algebraic":
        raise ConfigError("standardness runs on the algebraic backend only")
    p = cfg.section("standardness")
    parts = [s.strip() for s in p["parts"].split(",") if s.strip()]
    unknown = set(parts) - {"boundary", "pm", "union", "good", "claimA", "claimB", "cover"}
    if unknown:
        raise ConfigError(f"unknown parts {sorted(unknown)}")
    b = AlgebraicBackend()
    eps = p["eps"]
    part = UPartition.grid(tuple(_ints(p["shape"])), b.core_norm, y_spacing=p["y_spacing"])
    rec = ExperimentRecord("standardness", cfg.to_dict())

    if "boundary" in parts:
        rows = boundary_scaling(b, part, _floats(p["boundary_eps"]), p["boundary_samples"],
                                cfg.rng(4, 0))
        C = [r[3] for r in rows]
        for e, mu, se, c in rows:
            rec.rows.append({"part": "boundary", "eps": e, "value": mu, "se": se, "constant": c})
        rec.data["boundary"] = ([r[0] for r in rows], [r[1] for r in rows])
        rec.scalars["boundary_constants"] = C
        rec.gate("boundary_constant_ratio", max(C) / min(C), p["boundary_ratio_max"], "<=")

    if "pm" in parts:
        rng = cfg.rng(4, 1)
        y = b.haar_sample(rng)
        se_, sr_, ve, vr = E.pm_volume_scaling(b, y, _floats(p["pm_eps"]), _floats(p["pm_R"]),
                                               p["pm_samples"], rng, one_sided=True)
        for e, v in zip(_floats(p["pm_eps"]), ve):
            rec.rows.append({"part": "pm_eps", "eps": e, "value": v})
        for R, v in zip(_floats(p["pm_R"]), vr):
            rec.rows.append({"part": "pm_R", "R": R, "value": v})
        rec.data["pm_eps"] = (_floats(p["pm_eps"]), ve)
        rec.data["pm_R"] = (_floats(p["pm_R"]), vr)
        rec.scalars.update(pm_slope_eps=se_, pm_slope_R=sr_)
        rec.gate("pm_slope_eps", abs(se_ - 3.0), 0.2, "<=")
        rec.gate("pm_slope_R", abs(sr_ + 1.0), 0.1, "<=")

    if "union" in parts:
        rng = cfg.rng(4, 5)
        y = b.haar_sample(rng)
        R = p["union_R"]
        mass, se, pieces = E.pm_union_mass(b, y, R, eps, p["union_samples"], rng)
        bound = 0.5 * math.floor(eps ** 3 * R) * eps ** 15 / R
        rec.scalars.update(union_mass=mass, union_se=se, union_pieces=pieces, union_bound=bound)
        rec.gate("union_mass", mass, bound, ">=")

    if "good" in parts:
        rng = cfg.rng(4, 6)
        pa = UPartition.grid(tuple(_ints(p["claimA_shape"])), b.core_norm,
                             y_spacing=p["claimA_y_spacing"])
        xs = b.haar_sample(rng, p["good_samples"])
        N, hist = E.find_N_eps(b, xs, eps, pa, p["good_dt"])
        for R, frac in hist:
            rec.rows.append({"part": "good", "R": R, "value": frac})
        rec.scalars["N_eps"] = N if N is not None else math.inf
        rec.gate("good_retained", hist[-1][1], 1.0 - 2.0 * eps * eps, ">=")

    if "claimB" in parts:
        rng = cfg.rng(4, 2)
        y = b.haar_sample(rng)
        res = E.claimB_experiment(b, y, p["claimB_R"], eps, p["claimB_pairs"],
                                  p["claimB_samples"], rng)
        rec.scalars.update(claimB_intersections=res.intersections, claimB_samples=res.samples,
                           claimB_sep_min=res.sep_min, claimB_sep_max=res.sep_max)
        rec.gate("claimB_intersections", res.intersections, 0, "==")

    if "claimA" in parts:
        rng = cfg.rng(4, 3)
        pa = UPartition.grid(tuple(_ints(p["claimA_shape"])), b.core_norm,
                             y_spacing=p["claimA_y_spacing"])
        res = E.claimA_experiment(b, pa, eps, p["claimA_R"], p["claimA_trials"], rng)
        ok = [r.in_ball for r in res]
        for i, r in enumerate(res):
            rec.rows.append({"part": "claimA", "trial": i, "value": r.matched_fraction,
                             "in_ball": bool(r.in_ball), "slope_dev": r.max_slope_dev})
        succ = float(np.mean(ok))
        worst = max((r.max_slope_dev for r in res if r.in_ball), default=math.nan)
        rec.scalars.update(claimA_success=succ, claimA_max_slope_dev=worst)
        rec.gate("claimA_success", succ, p["claimA_min_success"], ">=")
        rec.gate("claimA_slope", worst, eps)

    if "cover" in parts:
        rng = cfg.rng(4, 4)
        xs = b.haar_sample(rng, p["samples"])
        Rs = _floats(p["R"])
        covers, balls = [], []
        for R in Rs:
            n, _, F = E.covering_number(b, xs, R, eps, part, p["dt"])
            off = (F.sum(axis=1) - 1) / (F.shape[0] - 1)
            covers.append(n)
            balls.append(float(off.mean()))
            rec.rows.append({"part": "cover", "R": R, "value": n, "ball": balls[-1],
                             "ball_se": float(off.std(ddof=1) / math.sqrt(len(off)))})
        rec.data["cover"] = (Rs, covers)
        rec.data["ball"] = (Rs, balls)
        rec.scalars.update(covers=covers, balls=balls)
        rec.gate("cover_ratio", max(covers) / min(covers), p["cover_ratio_max"], "<=")
        rec.gate("ball_ratio", max(balls) / min(balls) if min(balls) > 0 else math.inf,
                 p["ball_ratio_max"], "<=")
    return rec


COMMANDS = {
    "relations": cmd_relations,
    "holonomy": cmd_holonomy,
    "margulis": cmd_margulis,
    "standardness": cmd_standardness,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="horolab", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__)
        sp.add_argument("--config", default=None, help="INI file overriding defaults")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default="horolab_out")
        sp.add_argument("--backend", choices=BACKENDS, default="algebraic")
    return ap


def run(cfg) -> ExperimentRecord:
    if cfg.threads > 1:
        import numba
        numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
    t0 = time.perf_counter()
    rec = COMMANDS[cfg.command](cfg)
    rec.wall_time = time.perf_counter() - t0
    rec.write(cfg.out)
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.command, args.config, backend=args.backend,
                                    seed=args.seed, threads=args.threads, out=args.out)
        rec = run(cfg)
    except ConfigError as exc:
        print(f"horolab: config error: {exc}", file=sys.stderr)
        return 2
    except HorolabError as exc:
        print(f"horolab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for g in rec.gates:
        mark = "PASS" if g["passed"] else "FAIL"
        print(f"{mark} {rec.name}.{g['name']}: {g['value']:.6g} {g['op']} {g['threshold']}")
    return 0 if rec.passed else 1


if __name__ == "__main__":
    sys.exit(main())
