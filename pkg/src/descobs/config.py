"""YAML scenario configs and design files.

A config names a builtin scenario (with parameter overrides) or gives the
matrices directly. Matrices are nested lists, ``{shape: [r, c], data: [...]}``
in row-major order, or ``{csv: path}`` relative to the config file.

    builtin: hydraulic            # or: system: {E: ..., A: ..., C: ..., partition: [...]}
    params: {k_leak: 0.005}
    graph: {adjacency: [[0, 0, 1], [1, 0, 0], [0, 1, 0]]}
    synthesis: {path: sdf, tol: 1.0e-9, seed: 0}
    simulation: {t_end: 20.0, dt: 1.0e-3, gain_mode: static, record_stride: 10}
"""
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .descriptor import DescriptorSystem, IndexReduction
from .errors import InvalidInputError
from .scenarios import BUILTIN, builtin
from .synthesis import ObserverDesign, SynthesisOptions

SYNTH_KEYS = {f.name for f in fields(SynthesisOptions)} | {"path"}
SIM_KEYS = {"t_end", "dt", "gain_mode", "x0", "xhat0", "record_stride", "stepping",
            "omega0", "jump_factor"}


@dataclass
class ScenarioConfig:
    name: str
    system: DescriptorSystem
    adjacency: np.ndarray
    synthesis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    builtin: str = None
    params: dict = field(default_factory=dict)
    state_names: list = None

    @property
    def path(self):
        return self.synthesis.get("path", "auto")

    def synthesis_options(self, **overrides):
        kw = {k: v for k, v in self.synthesis.items() if k != "path"}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        if kw.get("Y0") is not None:
            kw["Y0"] = np.asarray(kw["Y0"], dtype=float)
        return SynthesisOptions(**kw)

    def names(self):
        n = self.system.n
        if self.state_names and len(self.state_names) == n:
            return list(self.state_names)
        return [f"x{k + 1}" for k in range(n)]

    def config_hash(self):
        """Hash of everything a design depends on (system, graph, synthesis)."""
        payload = dict(
            E=_list(self.system.E), A=_list(self.system.A), C=_list(self.system.C),
            partition=list(self.system.output_partition),
            adjacency=_list(self.adjacency),
            synthesis=_plain(self.synthesis),
        )
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _list(M):
    return np.asarray(M, dtype=float).tolist()


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _matrix(entry, where, base):
    try:
        if isinstance(entry, dict):
            if "csv" in entry:
                return np.atleast_2d(np.loadtxt(base / entry["csv"], delimiter=",", ndmin=2))
            shape = entry["shape"]
            return np.asarray(entry["data"], dtype=float).reshape(shape)
        M = np.asarray(entry, dtype=float)
    except (KeyError, ValueError, TypeError, OSError) as exc:
        raise InvalidInputError(f"{where}: cannot read matrix ({exc})") from None
    if M.ndim == 1 and M.size == 0:
        return M.reshape(0, 0)
    if M.ndim != 2:
        raise InvalidInputError(f"{where}: expected a 2-D matrix, got shape {M.shape}")
    return M


def _check_keys(section, allowed, where):
    bad = set(section) - set(allowed)
    if bad:
        raise InvalidInputError(f"{where}: unknown keys {sorted(bad)}")


def from_scenario(sc):
    return ScenarioConfig(
        name=sc.name, system=sc.system, adjacency=np.asarray(sc.adjacency, dtype=float),
        synthesis={"path": sc.path, **sc.options},
        simulation={"t_end": sc.t_end, "dt": sc.dt, "x0": np.asarray(sc.x0).tolist()},
        builtin=sc.name, params={}, state_names=list(sc.state_names),
    )


def parse_config(data, base=Path(".")):
    """Build a ``ScenarioConfig`` from a parsed YAML mapping."""
    if not isinstance(data, dict):
        raise InvalidInputError("config must be a mapping")
    _check_keys(data, {"name", "builtin", "params", "system", "graph", "synthesis",
                       "simulation", "state_names"}, "config")
    synth = dict(data.get("synthesis") or {})
    sim = dict(data.get("simulation") or {})
    _check_keys(synth, SYNTH_KEYS, "synthesis")
    _check_keys(sim, SIM_KEYS, "simulation")
    if data.get("builtin") is not None:
        name = data["builtin"]
        if name not in BUILTIN:
            raise InvalidInputError(f"builtin: unknown scenario {name!r}; choose from {sorted(BUILTIN)}")
        params = dict(data.get("params") or {})
        try:
            sc = builtin(name, **params)
        except TypeError as exc:
            raise InvalidInputError(f"params: {exc}") from None
        cfg = from_scenario(sc)
        cfg.params = params
        cfg.synthesis.update(synth)
        cfg.simulation.update(sim)
        if data.get("graph"):
            cfg.adjacency = _matrix(data["graph"].get("adjacency"), "graph.adjacency", base)
        cfg.name = data.get("name", cfg.name)
        return cfg
    sysd = data.get("system")
    if not isinstance(sysd, dict):
        raise InvalidInputError("config needs either 'builtin' or a 'system' section")
    _check_keys(sysd, {"E", "A", "C", "partition"}, "system")
    for key in ("E", "A", "C"):
        if key not in sysd:
            raise InvalidInputError(f"system.{key} is missing")
    E = _matrix(sysd["E"], "system.E", base)
    A = _matrix(sysd["A"], "system.A", base)
    C = _matrix(sysd["C"], "system.C", base)
    part = sysd.get("partition")
    try:
        system = DescriptorSystem(E, A, C, tuple(part) if part is not None else None)
    except InvalidInputError as exc:
        raise InvalidInputError(f"system: {exc}") from None
    graph = data.get("graph") or {}
    if "adjacency" not in graph:
        raise InvalidInputError("graph.adjacency is missing")
    adj = _matrix(graph["adjacency"], "graph.adjacency", base)
    if adj.shape != (system.n_agents, system.n_agents):
        raise InvalidInputError(
            f"graph.adjacency must be {system.n_agents}x{system.n_agents} "
            f"(one row per output block), got {adj.shape}"
        )
    return ScenarioConfig(data.get("name", "custom"), system, adj, synth, sim,
                          state_names=data.get("state_names"))


def load_config(path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return parse_config(data, path.parent)


def config_to_dict(cfg):
    """Serializable form; builtin configs stay compact (name + overrides)."""
    out = {"name": cfg.name}
    if cfg.builtin:
        out["builtin"] = cfg.builtin
        if cfg.params:
            out["params"] = _plain(cfg.params)
    else:
        out["system"] = dict(E=_list(cfg.system.E), A=_list(cfg.system.A), C=_list(cfg.system.C),
                             partition=list(cfg.system.output_partition))
    out["graph"] = {"adjacency": _list(cfg.adjacency)}
    out["synthesis"] = _plain(cfg.synthesis)
    out["simulation"] = _plain(cfg.simulation)
    if cfg.state_names and not cfg.builtin:
        out["state_names"] = list(cfg.state_names)
    return out


def dump_yaml(obj):
    return yaml.safe_dump(_plain(obj), sort_keys=False, default_flow_style=None, width=120)


def design_to_dict(design, cfg_hash):
    out = dict(
        path=design.path,
        gamma=float(design.gamma),
        seed=int(design.seed),
        config_hash=cfg_hash,
        H=[_list(H) for H in design.H],
        W=[_list(W) for W in design.W],
        Q_dia=_list(design.Q_dia),
        P_dia=_list(design.P_dia),
        report=_plain(design.report),
        provenance=_plain(_scalar_provenance(design.provenance)),
    )
    if design.model is not None:
        m = design.model
        out["model"] = dict(E=_list(m.system.E), A=_list(m.system.A),
                            constraint=_list(m.constraint), alpha=m.alpha, k=m.k)
    return out


def _scalar_provenance(prov):
    keep = {}
    for k, v in prov.items():
        if k in ("lyapunov", "gamma_trace", "mu_spectrum", "H_o", "H1o", "H2o"):
            continue
        keep[k] = v
    return keep


def design_from_dict(d, sys):
    try:
        model = None
        if d.get("model"):
            m = d["model"]
            red = DescriptorSystem(np.array(m["E"]), np.array(m["A"]), sys.C, sys.output_partition)
            model = IndexReduction(red, np.array(m["constraint"], dtype=float).reshape(-1, sys.n),
                                   float(m["alpha"]), int(m["k"]))
        return ObserverDesign(
            d["path"], [np.array(H, dtype=float).reshape(sys.n, -1) for H in d["H"]],
            [np.array(W, dtype=float) for W in d["W"]], float(d["gamma"]),
            np.array(d["Q_dia"], dtype=float), np.array(d["P_dia"], dtype=float),
            d.get("provenance", {}), d.get("report", {}), int(d.get("seed", 0)), model,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"design file is malformed ({exc})") from None
