"""Command-line front end: ``underact <command> --config <path> [--out <dir>]``.

Commands
    design     synthesize the matched system, write a snapshot and diagnostics.json
    simulate   trajectory CSVs for the configured initial states
    verify     residual report: matching, energy decay, trajectory equivalence
    linearize  spectrum, stabilizability, closed-loop germ, pole placement
    analyze    normal operating range map, settling time, inscribed radius

simulate, verify, linearize and analyze reuse ``<out>/snapshot`` when it
was written by ``design`` from the same system, grid and matching settings.
Exit status: 0 success, 1 domain error, 2 config error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys as _sys
import time

import numpy as np

from . import config as C
from .errors import ConfigError, EvaluationError, ParseError, UnderactError
from .snapshot import (load_snapshot, save_snapshot, write_csv, write_json)

COMMANDS = ("design", "simulate", "verify", "linearize", "analyze")


# --- shared pipeline pieces ---------------------------------------------------------

def fingerprint(cfg):
    """Hash of the settings that determine the matched system."""
    g, m = cfg.grid, cfg.matching
    key = json.dumps({"system": sorted(cfg.system.items()), "grid": g.__dict__,
                      "matching": m.__dict__}, sort_keys=True, default=str)
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def synthesize_from_config(cfg, seed=0):
    """(sys, design, matched) computed in-process."""
    from .diagnostics import synthesis_report
    from .matching import synthesize, synthesize_analytic
    sys = C.build_system(cfg)
    d = C.build_design(cfg, sys)
    if cfg.matching.route == "analytic":
        ms = synthesize_analytic(sys, d, deg=cfg.matching.degree, diagnostics=False)
    else:
        ms = synthesize(sys, d, diagnostics=False)
    ms.diagnostics.update(synthesis_report(sys, ms, cfg.matching.samples, seed))
    return sys, d, ms


def matched_from_snapshot(cfg, directory):
    """Rebuild the matched system stored in ``directory``."""
    from .matching import matched_from_grids, synthesize_analytic
    man, chart, arrays = load_snapshot(directory)
    sys = C.build_system(cfg)
    d = C.build_design(cfg, sys)
    if man["route"] == "analytic":
        # analytic fields are re-derived; the stored samples must agree
        ms = synthesize_analytic(sys, d, deg=cfg.matching.degree, diagnostics=False)
        from .snapshot import snapshot_arrays
        fresh = snapshot_arrays(ms)
        for n, a in arrays.items():
            same = np.isclose(fresh[n], a, rtol=1e-12, atol=1e-12) | (np.isnan(a) & np.isnan(fresh[n]))
            if not np.all(same):
                raise ConfigError(f"snapshot field {n} does not match the analytic synthesis")
        return sys, d, ms
    return sys, d, matched_from_grids(sys, d, chart, arrays)


def load_matched(cfg, out_dir, seed=0):
    """Snapshot in ``out_dir`` when it matches the config, else synthesize."""
    snap = os.path.join(out_dir, "snapshot")
    man_path = os.path.join(snap, "manifest.json")
    if os.path.exists(man_path):
        with open(man_path, encoding="utf-8") as fh:
            fp = json.load(fh).get("fingerprint")
        if fp == fingerprint(cfg):
            sys, d, ms = matched_from_snapshot(cfg, snap)
            return sys, d, ms, "snapshot"
        print(f"note: snapshot in {snap} is from different settings; re-synthesizing",
              file=_sys.stderr)
    sys, d, ms = synthesize_from_config(cfg, seed)
    return sys, d, ms, "in_process"


def initial_states(cfg):
    if cfg.simulate.initial_states:
        return [np.array(s) for s in cfg.simulate.initial_states]
    preset = _preset(cfg)
    return [np.array(preset.initial_state if preset else (0.1, 0.0, 0.0, 0.0), dtype=float)]


def _preset(cfg):
    s = dict(cfg.system)
    if "preset" not in s:
        return None
    from .presets import get_preset
    name = s.pop("preset").strip()
    return get_preset(name, **{k: C._float("system", k, v) for k, v in s.items()})


def _t_eval(cfg):
    s = cfg.simulate
    n = int(round(s.t_final / s.dt))
    t = np.arange(n + 1) * s.dt
    return t[t <= s.t_final * (1 + 1e-12)]


def _trajectory(kind, sys, ms, s0, cfg):
    from .control import ControlLaw
    from .simulate import closed_loop, integrate, matched, open_loop
    dyn = {"closed_loop": lambda: closed_loop(ControlLaw(sys, ms)),
           "open_loop": lambda: open_loop(sys, ms),
           "matched": lambda: matched(sys, ms)}[kind]()
    return integrate(dyn, s0, cfg.simulate.t_final, C.sim_settings(cfg), t_eval=_t_eval(cfg))


# --- commands ----------------------------------------------------------------------

def cmd_design(cfg, out, args):
    t0 = time.perf_counter()
    sys, d, ms = synthesize_from_config(cfg, args.seed)
    elapsed = time.perf_counter() - t0
    save_snapshot(os.path.join(out, "snapshot"), ms, cfg.matching.route, cfg.text, fingerprint(cfg))
    write_json(os.path.join(out, "diagnostics.json"), {
        "command": "design", "system": sys.name, "route": cfg.matching.route,
        "seed": args.seed, "chart": ms.chart.__dict__, "synthesis_seconds": elapsed,
        "diagnostics": ms.diagnostics})
    return {"matching_residual": ms.diagnostics.get("matching_residual")}


def cmd_simulate(cfg, out, args):
    sys, d, ms, source = load_matched(cfg, out, args.seed)
    from .simulate import Trajectory
    runs = []
    for i, s0 in enumerate(initial_states(cfg)):
        for kind in cfg.simulate.kinds:
            tr = _trajectory(kind, sys, ms, s0, cfg)
            name = f"trajectory_{kind}_{i}.csv"
            write_csv(os.path.join(out, name), Trajectory.COLUMNS, tr.columns())
            runs.append({"file": name, "kind": kind, "initial_state": s0,
                         "termination": tr.termination, "rows": len(tr),
                         "final_state": tr.states[-1] if len(tr) else None})
    write_json(os.path.join(out, "simulate.json"),
               {"command": "simulate", "matched_source": source, "runs": runs})
    return {"runs": len(runs)}


def cmd_verify(cfg, out, args):
    from .control import ControlLaw
    from .diagnostics import sample_states, synthesis_report
    from .simulate import energy_decay_check, max_state_gap
    sys, d, ms, source = load_matched(cfg, out, args.seed)
    residuals = synthesis_report(sys, ms, cfg.matching.samples, args.seed)
    law = ControlLaw(sys, ms)
    rep = law.verify_matching(sample_states(ms, 200, args.seed))
    runs = []
    for s0 in initial_states(cfg):
        cl = _trajectory("closed_loop", sys, ms, s0, cfg)
        mt = _trajectory("matched", sys, ms, s0, cfg)
        decay = energy_decay_check(cl, ms)
        runs.append({"initial_state": s0, "termination": cl.termination,
                     "trajectory_gap": max_state_gap(cl, mt),
                     "energy_decay": {k: v for k, v in decay.as_dict().items()}})
    report = {"command": "verify", "matched_source": source, "seed": args.seed,
              "max_matching_residual": residuals["matching_residual"],
              "residuals": residuals, "matching_check": rep.as_dict(), "runs": runs}
    write_json(os.path.join(out, "verify.json"), report)
    return {"max_matching_residual": residuals["matching_residual"]}


def _poles(args):
    if not args.poles:
        return None
    try:
        return [complex(p.strip().replace(" ", "").replace("i", "j"))
                for p in args.poles.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--poles: cannot parse {args.poles!r}") from None


def cmd_linearize(cfg, out, args):
    from . import linearize as L
    from .control import ControlLaw
    sys = C.build_system(cfg)
    lin = L.linearize_open_loop(sys)
    preset = _preset(cfg)
    b = preset.params.get("b") if preset and preset.name == "pendulum_cart" else None
    if b is not None:
        lin = L.pendulum_open_loop(b)
    st = L.stabilizability_test(lin)
    report = {"command": "linearize", "system": sys.name,
              "A": lin.A, "B": lin.B, "open_loop_eigenvalues": np.linalg.eigvals(lin.A),
              "stabilizable": st.stabilizable, "certificate": st.certificate}
    poles = _poles(args)
    if poles is not None:
        try:
            k = L.place_poles(lin, poles)
        except ValueError as exc:
            raise ConfigError(f"--poles: {exc}") from None
        Acl = lin.A + lin.B @ k[None, :]
        report["placement"] = {"target_poles": poles, "gains": k,
                               "closed_loop_char_poly": L.char_poly(Acl),
                               "target_char_poly": np.real(np.poly(poles)),
                               "closed_loop_eigenvalues": np.linalg.eigvals(Acl)}
    if b is not None:
        report["discrepancy_report"] = L.discrepancy_report(b)
    try:
        _, _, ms, source = load_matched(cfg, out, args.seed)
        germ = L.linearize_closed_loop(ControlLaw(sys, ms))
        report["germ"] = {"matched_source": source, "gains": germ.gains.as_array(),
                          "A": germ.A, "eigenvalues": germ.eigenvalues, "stable": germ.stable}
    except UnderactError as exc:
        report["germ"] = {"error": str(exc)}
    write_json(os.path.join(out, "linearize.json"), report)
    return {"stabilizable": st.stabilizable}


def cmd_analyze(cfg, out, args):
    from . import analysis as A
    from .control import ControlLaw
    from .simulate import SimSettings
    sys, d, ms, source = load_matched(cfg, out, args.seed)
    preset = _preset(cfg)
    regions = dict(preset.regions) if preset else {}
    a = cfg.analyze
    zero = (0.0, 0.0, 0.0, 0.0)
    for key in ("O", "D", "samples_box"):
        v = getattr(a, key)
        if v is not None:
            regions["N0" if key == "samples_box" else key] = A.Region.box(zero, v)
    missing = [k for k in ("O", "D") if k not in regions]
    if missing:
        raise ConfigError(f"[analyze] needs {missing} for this system")
    O, D = regions["O"], regions["D"]
    N0 = regions.get("N0", D)
    horizon = a.t_horizon or (preset.t_horizon if preset else 25.0)
    settings = preset.analysis_settings if preset else SimSettings(1e-7, 1e-9, float("inf"))
    flow = A.ClosedLoopFlow(ControlLaw(sys, ms), settings)
    samples = np.vstack([np.zeros((1, 4)), N0.grid(a.sample_counts)])
    samples = np.unique(samples, axis=0)
    nr = A.estimate_normal_range(flow, O, samples, horizon, D, threads=args.threads,
                                 keep_paths=True)
    rows = np.column_stack([samples, nr.member, nr.stayed, nr.certified])
    write_csv(os.path.join(out, "normal_range.csv"),
              ("x1", "x2", "v1", "v2", "member", "stayed", "certified"), rows)
    st = A.settling_time(flow, samples[nr.member], D, horizon,
                         paths=[p for p, m in zip(nr.paths, nr.member) if m])
    try:
        radius = A.inscribed_radius((samples, nr.member), zero, a.weights,
                                    n_boundary=a.n_boundary, seed=args.seed, domain=N0)
    except UnderactError as exc:
        radius = None
        print(f"inscribed radius: {exc}", file=_sys.stderr)
    write_json(os.path.join(out, "analyze.json"), {
        "command": "analyze", "matched_source": source, "seed": args.seed,
        "O": O.__dict__, "D": D.__dict__, "t_horizon": horizon,
        "counts": nr.counts, "certificate_level": nr.level,
        "settling_time": st.T, "settling_per_sample": st.per_sample,
        "inscribed_radius": radius, "weights": a.weights,
        "note": "inscribed radius is a sampled estimate from the membership map"})
    return {"settling_time": st.T, "members": nr.counts["members"]}


_RUN = {"design": cmd_design, "simulate": cmd_simulate, "verify": cmd_verify,
        "linearize": cmd_linearize, "analyze": cmd_analyze}


def build_parser():
    p = argparse.ArgumentParser(prog="underact", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out", default=None, help="output directory (default: [output] dir)")
    p.add_argument("--poles", default=None, help='target poles, e.g. "-1,-1,-2,-2" or "-1+2j,-1-2j,-3,-4"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    return p


def run(command, config_path, out_dir=None, poles=None, seed=0, threads=1):
    """Run one command; returns the exit status."""
    args = argparse.Namespace(command=command, config=config_path, out=out_dir,
                              poles=poles, seed=seed, threads=threads)
    return _run(args)


def _run(args):
    try:
        if args.seed < 0 or args.threads < 1:
            raise ConfigError("--seed must be >= 0 and --threads >= 1")
        cfg = C.load_config(args.config)
        out = args.out or cfg.out_dir
        os.makedirs(out, exist_ok=True)
        summary = _RUN[args.command](cfg, out, args)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except (UnderactError, EvaluationError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"error{f' in {stage}' if stage else ''}: {exc}", file=_sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "out": out,
                      **{k: (float(v) if isinstance(v, (float, np.floating)) else v)
                         for k, v in summary.items()}}))
    return 0


def main(argv=None):
    return _run(build_parser().parse_args(argv))


if __name__ == "__main__":
    raise SystemExit(main())
