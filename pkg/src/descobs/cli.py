"""Command-line front end: ``descobs analyze|synthesize|simulate|scenario``.

Exit codes: 0 success, 1 invalid input or unmet precondition, 2 numerical
failure (including divergence).
"""
import argparse
import csv
import json
import logging
import sys as _sys
import time
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import yaml

from .config import (
    config_to_dict, design_from_dict, design_to_dict, dump_yaml, from_scenario, load_config,
)
from .descriptor import check_regular, to_ddf, to_sdf
from .errors import (
    DescobsError, InvalidInputError, JointObservabilityError, NumericalError, PreconditionError,
    StaleDesignError,
)
from .linalg import CLUSTER_TOL, DEFAULT_TOL, orth
from .network import CommGraph, is_strongly_connected, joint_margin_mu, perron_weights
from .observability import (
    agent_observability, check_C_observable, check_I_observable, check_R_observable,
    joint_margin_inputs,
)
from .scenarios import BUILTIN, builtin
from .simulator import SimConfig, error_metrics, simulate
from .synthesis import ddf_joint_observable, synthesize

log = logging.getLogger("descobs")


def analyze(system, adjacency, tol=DEFAULT_TOL, seed=0):
    """Structural report of a plant and graph; verdicts, never exceptions,
    for the properties it checks."""
    rep = {"n": system.n, "p": system.p, "partition": list(system.output_partition)}
    c = check_regular(system, seed)
    rep["regular"] = c is not None
    rep["regularity_witness"] = None if c is None else float(c)
    g = CommGraph(adjacency)
    rep["agents"] = g.N
    rep["strongly_connected"] = bool(is_strongly_connected(g))
    if rep["strongly_connected"]:
        rep["perron_weights"] = perron_weights(g).r.tolist()
    if c is None:
        return rep
    try:
        sdf = to_sdf(system, tol, seed)
    except DescobsError as exc:
        rep["sdf_error"] = str(exc)
        sdf = None
    if sdf is not None:
        rep["n1"], rep["n2"] = sdf.n1, sdf.n2
        rep["R_observable"] = bool(check_R_observable(sdf, tol))
        rep["I_observable"] = bool(check_I_observable(sdf, tol))
        rep["C_observable"] = bool(check_C_observable(sdf, tol))
        ao = agent_observability(sdf, tol)
        rep["v1"], rep["v2"] = ao.v1, ao.v2
        rep["fast_fully_observed"] = [v == sdf.n2 for v in ao.v2]
        if rep["strongly_connected"] and g.N == system.n_agents:
            rep["mu"] = _sdf_margin(system, sdf, ao, g, tol)
    ddf = to_ddf(system, tol)
    rep["l"] = ddf.l
    slow, fast = ddf_joint_observable(ddf, max(tol, CLUSTER_TOL))
    rep["ddf_slow_observable"] = bool(slow)
    rep["ddf_fast_observable"] = bool(fast)
    return rep


def _sdf_margin(system, sdf, ao, g, tol):
    pw = perron_weights(g)
    inputs = joint_margin_inputs(ao, pw.r)
    T = inputs["T_joint"]
    Ebar = sla.block_diag(np.eye(sdf.n1), sdf.N2)
    blocks = [sla.block_diag(d1.T, d2.T) for d1, d2 in zip(ao.slow, ao.fast)]
    Et = sla.block_diag(*[Ti.T @ Ebar @ Ti for Ti in blocks])
    V = orth(Et, tol=CLUSTER_TOL, scale=1.0)
    try:
        mu, _ = joint_margin_mu(g, T, inputs["joint"], system.n, subspace=V, tol=tol)
    except JointObservabilityError as exc:
        mu = exc.mu
    return float(mu)


def format_report(rep):
    def yn(v):
        return "yes" if v else "no"

    lines = [f"states n = {rep['n']}, outputs p = {rep['p']}, agents = {rep['agents']}"]
    if rep["regular"]:
        lines.append(f"regular: yes (det(c E - A) != 0 at c = {rep['regularity_witness']:.6g})")
    else:
        lines.append("regular: no")
    if "n1" in rep:
        lines.append(f"slow/fast split: n1 = {rep['n1']}, n2 = {rep['n2']}")
    if "l" in rep:
        lines.append(f"differential dimension l = {rep['l']}")
    for key, label in (("R_observable", "R-observable"), ("I_observable", "I-observable"),
                       ("C_observable", "C-observable"),
                       ("ddf_slow_observable", "(C_dia1, A11) observable"),
                       ("ddf_fast_observable", "(C_dia2, A22) observable")):
        if key in rep:
            lines.append(f"{label}: {yn(rep[key])}")
    if "v1" in rep:
        lines.append(f"agent indices v_i1 = {rep['v1']}, v_i2 = {rep['v2']}")
    if "sdf_error" in rep:
        lines.append(f"slow/fast form unavailable: {rep['sdf_error']}")
    lines.append(f"strongly connected: {yn(rep['strongly_connected'])}")
    if "perron_weights" in rep:
        lines.append("Perron weights r = [" + ", ".join(f"{v:.6g}" for v in rep["perron_weights"]) + "]")
    if "mu" in rep:
        lines.append(f"joint observability margin mu = {rep['mu']:.6g}")
    return "\n".join(lines)


# ---------------------------------------------------------------- commands

def _apply_overrides(cfg, args):
    if getattr(args, "tol", None) is not None:
        cfg.synthesis["tol"] = args.tol
    if getattr(args, "seed", None) is not None:
        cfg.synthesis["seed"] = args.seed
    if getattr(args, "path", None) is not None:
        cfg.synthesis["path"] = args.path
    for attr, key in (("dt", "dt"), ("t_end", "t_end"), ("gain_mode", "gain_mode")):
        if getattr(args, attr, None) is not None:
            cfg.simulation[key] = getattr(args, attr)
    return cfg


def cmd_analyze(args):
    cfg = _apply_overrides(load_config(args.config), args)
    tol = cfg.synthesis.get("tol", DEFAULT_TOL)
    rep = analyze(cfg.system, cfg.adjacency, tol, cfg.synthesis.get("seed", 0))
    print(json.dumps(rep, indent=2) if args.json else format_report(rep))
    return 0


def cmd_synthesize(args):
    cfg = _apply_overrides(load_config(args.config), args)
    design = synthesize(cfg.system, cfg.adjacency, cfg.path, cfg.synthesis_options())
    Path(args.output).write_text(dump_yaml(design_to_dict(design, cfg.config_hash())))
    rep = design.report
    print(f"path = {design.path}, gamma = {design.gamma:.6g}, admissible = {rep.get('admissible')}, "
          f"spectral abscissa = {rep.get('spectral_abscissa', float('nan')):.6g}")
    return 0


def _sim_config(cfg):
    s = dict(cfg.simulation)
    for key in ("t_end", "dt"):
        if key not in s:
            raise InvalidInputError(f"simulation.{key} is missing")
    x0 = s.pop("x0", None)
    xhat0 = s.pop("xhat0", None)
    n = cfg.system.n
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.size != n:
            raise InvalidInputError(f"simulation.x0 needs {n} entries, got {x0.size}")
    if xhat0 is not None:
        xhat0 = [np.asarray(v, dtype=float).ravel() for v in xhat0]
        if len(xhat0) != cfg.system.n_agents or any(v.size != n for v in xhat0):
            raise InvalidInputError(f"simulation.xhat0 needs {cfg.system.n_agents} vectors of length {n}")
    return SimConfig(x0=x0, xhat0=xhat0, **s)


def _fmt(v):
    return repr(float(v))


def write_run(run, out, names):
    """One CSV per agent plus ``summary.csv`` and ``events.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    N = run.xhat.shape[1]
    for i in range(N):
        header = (["t"] + names + [f"xhat_{nm}" for nm in names]
                  + ["err_norm2", "err_norm_inf", "omega"])
        with open(out / f"agent_{i + 1}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(run.t.size):
                om = run.omega[k, i] if run.omega is not None else np.nan
                w.writerow([_fmt(run.t[k])] + [_fmt(v) for v in run.x[k]]
                           + [_fmt(v) for v in run.xhat[k, i]]
                           + [_fmt(run.err2[k, i]), _fmt(run.errinf[k, i]), _fmt(om)])
    metrics = error_metrics(run)
    with open(out / "summary.csv", "w", newline="") as fh:
        keys = list(metrics[0].keys())
        w = csv.writer(fh)
        w.writerow(keys + ["final_omega"])
        for i, m in enumerate(metrics):
            om = run.omega[-1, i] if run.omega is not None else np.nan
            w.writerow([("" if m[k] is None else m[k]) for k in keys] + [_fmt(om)])
    with open(out / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kind", "size"])
        for ev in run.events:
            w.writerow([_fmt(ev.get("t", 0.0)), ev.get("kind", "plant_jump"), _fmt(ev.get("size", 0.0))])
    return metrics


def cmd_simulate(args):
    cfg = _apply_overrides(load_config(args.config), args)
    try:
        data = yaml.safe_load(Path(args.design).read_text())
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"{args.design}: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInputError("design file must be a mapping")
    if data.get("config_hash") != cfg.config_hash():
        raise StaleDesignError("design was synthesized for a different config; re-run synthesize")
    design = design_from_dict(data, cfg.system)
    simcfg = _sim_config(cfg)
    t0 = time.perf_counter()
    run = simulate(cfg.system, design, cfg.adjacency, simcfg)
    metrics = write_run(run, args.output, cfg.names())
    for m in metrics:
        print(f"agent {m['agent'] + 1}: |e(0+)| = {m['initial_error']:.3e}, "
              f"|e(T)| = {m['final_error']:.3e}, jumps = {m['jumps']}")
    print(f"{len(run.events)} plant event(s); {time.perf_counter() - t0:.2f} s")
    if run.diverged is not None:
        log.error("divergence at t = %s (agent %s)", run.diverged.get("t"), run.diverged.get("agent"))
        return 2
    return 0


def cmd_scenario(args):
    if args.action == "list":
        for name in BUILTIN:
            print(name)
        return 0
    if not args.name:
        raise InvalidInputError("scenario emit needs a scenario name")
    if args.name not in BUILTIN:
        raise InvalidInputError(f"unknown scenario {args.name!r}; choose from {sorted(BUILTIN)}")
    text = dump_yaml(config_to_dict(from_scenario(builtin(args.name))))
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text, end="")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="descobs", description="Distributed observers for descriptor systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--path", choices=("sdf", "ddf", "auto"))

    a = sub.add_parser("analyze", help="structural report of a config")
    a.add_argument("config")
    a.add_argument("--json", action="store_true", help="machine-readable output")
    common(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synthesize", help="compute observer gains, weights and coupling gain")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True)
    common(s)
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="simulate plant and observers, write CSVs")
    m.add_argument("config")
    m.add_argument("design")
    m.add_argument("-o", "--output", required=True)
    common(m)
    m.add_argument("--dt", type=float)
    m.add_argument("--t-end", type=float, dest="t_end")
    m.add_argument("--gain-mode", choices=("static", "adaptive"), dest="gain_mode")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("scenario", help="list or emit builtin scenarios")
    c.add_argument("action", choices=("list", "emit"))
    c.add_argument("name", nargs="?")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_scenario)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (PreconditionError, InvalidInputError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())
