"""Fixed-step simulation of a descriptor plant and a realized observer network.

The plant is integrated in its differential coordinates with the algebraic
part recovered each step. Everything is linear, so one step is a matrix
product: either the classical fourth-order Runge-Kutta polynomial of the
generator or its exact exponential. With adaptive coupling each agent's gain
``omega_i`` is frozen over a step and then advanced by
``omega_i += dt * ||disagreement_i||^2``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .descriptor import reduce_to_ode, to_ddf
from .errors import ImpulsivePlantError, InvalidInputError
from .network import CommGraph
from .realization import network_maps, realize

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass
class SimConfig:
    """``stepping`` is ``"rk4"``, ``"expm"`` or ``"auto"`` (RK4 unless its step
    matrix is less stable than the exact one). ``omega0`` is the initial
    adaptive gain (default: the design gain)."""

    t_end: float
    dt: float
    gain_mode: str = "static"
    x0: np.ndarray = None
    xhat0: list = None
    record_stride: int = 1
    stepping: str = "auto"
    omega0: float = None
    jump_factor: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.t_end >= self.dt:
            raise InvalidInputError("t_end must be at least dt")
        if self.gain_mode not in ("static", "adaptive"):
            raise InvalidInputError(f"gain_mode must be static or adaptive, got {self.gain_mode!r}")
        if self.stepping not in ("rk4", "expm", "auto"):
            raise InvalidInputError(f"unknown stepping {self.stepping!r}")
        if int(self.record_stride) < 1:
            raise InvalidInputError("record_stride must be >= 1")
        self.record_stride = int(self.record_stride)

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class PlantTrajectory:
    t: np.ndarray
    x: np.ndarray
    events: list


@dataclass
class SimulationRun:
    """Recorded trajectories; ``xhat[k, i]`` is agent ``i``'s estimate at ``t[k]``."""

    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    err2: np.ndarray
    errinf: np.ndarray
    omega: np.ndarray = None
    events: list = field(default_factory=list)
    diverged: dict = None
    jump_gain: float = np.inf
    jump_factor: float = 10.0
    stepping: str = ""

    @property
    def errors(self):
        return self.xhat - self.x[:, None, :]


def rk4_matrix(G, dt):
    """Step matrix of classical RK4 on ``z' = G z``."""
    n = G.shape[0]
    hG = dt * G
    I = np.eye(n)
    return I + hG @ (I + hG @ (I / 2 + hG @ (I / 6 + hG / 24)))


def step_matrix(G, dt, stepping="auto"):
    """Returns ``(Phi, method)``."""
    if stepping == "expm":
        return sla.expm(dt * G), "expm"
    R = rk4_matrix(G, dt)
    if stepping == "rk4":
        return R, "rk4"
    lam = np.linalg.eigvals(dt * G) if G.size else np.zeros(0)
    z = lam
    amp = np.abs(1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24) if z.size else np.zeros(0)
    exact = np.exp(lam.real) if z.size else np.zeros(0)
    # RK4 is kept when it damps every mode at least as much as needed to stay bounded
    if np.all(amp <= np.maximum(exact, 1.0) + 1e-9):
        return R, "rk4"
    return sla.expm(dt * G), "expm"


@dataclass
class _PlantModel:
    S: np.ndarray
    X: np.ndarray
    Pinv: np.ndarray
    l: int
    constraint: np.ndarray


def _plant_model(sys, hidden=None):
    model = sys if hidden is None else hidden.system
    ddf = to_ddf(model)
    try:
        S, K = reduce_to_ode(ddf)
    except ImpulsivePlantError:
        raise ImpulsivePlantError(
            "A22 is singular: the plant has impulsive modes; reduce its index or regularize it"
        ) from None
    P = ddf.P_dia
    X = P @ np.vstack([np.eye(ddf.l), K])
    con = None
    if hidden is not None and hidden.k:
        con = (hidden.constraint @ P)[:, : ddf.l]
    return _PlantModel(S, X, np.linalg.inv(P), ddf.l, con)


def _consistent_start(pm, x0):
    z1 = (pm.Pinv @ x0)[: pm.l]
    if pm.constraint is not None:
        c = pm.constraint
        z1 = z1 - np.linalg.pinv(c) @ (c @ z1)
    return z1, pm.X @ z1


def _jump_event(x0, xp):
    jump = float(np.linalg.norm(xp - x0))
    if jump > 1e-9 * (1.0 + np.linalg.norm(x0)):
        return [dict(t=0.0, kind="consistency-jump", size=jump)]
    return []


def simulate_plant(sys, x0, cfg, hidden=None):
    """Integrate ``E x' = A x`` from ``x0``.

    An inconsistent ``x0`` is replaced by the consistent state at ``t = 0+``
    and the jump is logged. ``hidden`` (an ``IndexReduction``) lets an
    index-two plant run on its reduced model, with ``x0`` first projected onto
    the hidden constraints.

    Raises
    ------
    ImpulsivePlantError
        If ``A22`` is singular and no ``hidden`` model is given.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise InvalidInputError(f"x0 must have length {sys.n}")
    pm = _plant_model(sys, hidden)
    z, xp = _consistent_start(pm, x0)
    events = _jump_event(x0, xp)
    Phi, _ = step_matrix(pm.S, cfg.dt, cfg.stepping)
    steps, stride = cfg.steps, cfg.record_stride
    ts, xs = [0.0], [xp]
    for k in range(1, steps + 1):
        z = Phi @ z
        if k % stride == 0:
            ts.append(k * cfg.dt)
            xs.append(pm.X @ z)
    return PlantTrajectory(np.array(ts), np.array(xs), events)


def adaptive_gain_step(omega, disagreement, dt):
    """``omega + dt * ||disagreement||^2``."""
    d = np.asarray(disagreement, dtype=float)
    return float(omega) + float(dt) * float(d @ d)


def _lift(realized, maps, Z1, Y):
    N, l = len(realized), maps.l
    Z2 = maps.T1 @ Z1 + maps.Ty @ Y
    m = maps.m
    P = realized[0].lift_back
    out = np.empty((N, P.shape[0]))
    for i in range(N):
        out[i] = P @ np.concatenate([Z1[i * l:(i + 1) * l], Z2[i * m:(i + 1) * m]])
    return out


def _generator(pm, maps, C):
    lp, k = pm.S.shape[0], maps.A.shape[0]
    G = np.zeros((lp + k, lp + k))
    G[:lp, :lp] = pm.S
    G[lp:, :lp] = maps.B @ C @ pm.X
    G[lp:, lp:] = maps.A
    return G


def _jump_gain(realized, maps, dt_rec):
    """``||Psi (exp(A dt) - I) pinv(Psi)||`` where ``e = Psi eps`` maps the
    network's differential error to the stacked estimate errors: the largest
    change of ``e`` per record interval allowed by the error dynamics,
    relative to ``||e||``."""
    N, l, m = len(realized), maps.l, maps.m
    P = realized[0].lift_back
    rows = []
    for i in range(N):
        sel = np.zeros((l, N * l))
        sel[:, i * l:(i + 1) * l] = np.eye(l)
        rows.append(P @ np.vstack([sel, maps.T1[i * m:(i + 1) * m]]))
    Psi = np.vstack(rows)
    D = sla.expm(dt_rec * maps.A) - np.eye(maps.A.shape[0])
    return float(np.linalg.norm(Psi @ D @ np.linalg.pinv(Psi), 2))


def simulate_observers(sys, realized, graph, cfg, hidden=None):
    """Plant and realized observers in lock step.

    All agents advance together; the neighbours' algebraic coordinates are
    solved jointly at every evaluation. Estimates start from ``cfg.xhat0``
    (zeros by default) with their algebraic part made consistent.
    """
    g = graph if isinstance(graph, CommGraph) else CommGraph(graph)
    N = g.N
    if len(realized) != N:
        raise InvalidInputError(f"{len(realized)} realized observers for {N} agents")
    n = sys.n
    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    if x0.shape != (n,):
        raise InvalidInputError(f"x0 must have length {n}")
    xh0 = np.zeros((N, n)) if cfg.xhat0 is None else np.asarray(cfg.xhat0, dtype=float)
    if xh0.shape != (N, n):
        raise InvalidInputError(f"xhat0 must be {N} vectors of length {n}")
    pm = _plant_model(sys, hidden)
    C = sys.C
    z1p, xp = _consistent_start(pm, x0)
    events = _jump_event(x0, xp)
    l = realized[0].l
    P = realized[0].lift_back
    Pinv = np.linalg.inv(P)
    Z1 = np.concatenate([(Pinv @ xh0[i])[:l] for i in range(N)])
    adaptive = cfg.gain_mode == "adaptive"
    omega = np.full(N, realized[0].gain if cfg.omega0 is None else float(cfg.omega0))
    maps = network_maps(realized, g, omega if adaptive else None)
    G = _generator(pm, maps, C)
    Phi, method = step_matrix(G, cfg.dt, "expm" if adaptive else cfg.stepping)
    lp = pm.S.shape[0]
    state = np.concatenate([z1p, Z1])
    dt, steps, stride = cfg.dt, cfg.steps, cfg.record_stride
    Lk = np.kron(g.laplacian, np.eye(n))
    Ek = sys.E if realized[0].mode == "sdf" else np.eye(n)
    omega_built = omega.copy()
    jg = _jump_gain(realized, maps, dt * stride)

    ts, xs, xhs, oms = [], [], [], []
    diverged = None

    def record(k, x, xh):
        ts.append(k * dt)
        xs.append(x)
        xhs.append(xh)
        oms.append(omega.copy())

    x = pm.X @ state[:lp]
    xh = _lift(realized, maps, state[lp:], C @ x)
    record(0, x, xh)
    for k in range(1, steps + 1):
        if adaptive:
            disag = -(Lk @ xh.ravel()).reshape(N, n) @ Ek.T
            if np.any(np.abs(omega - omega_built) > 1e-9 * omega_built):
                maps = network_maps(realized, g, omega)
                Phi = sla.expm(dt * _generator(pm, maps, C))
                omega_built = omega.copy()
            omega = np.array([adaptive_gain_step(omega[i], disag[i], dt) for i in range(N)])
        state = Phi @ state
        x = pm.X @ state[:lp]
        xh = _lift(realized, maps, state[lp:], C @ x)
        if not np.all(np.isfinite(xh)) or np.max(np.abs(xh)) > DIVERGENCE_LIMIT:
            bad = int(np.argmax(np.max(np.abs(np.nan_to_num(xh, nan=np.inf)), axis=1)))
            diverged = dict(t=k * dt, agent=bad)
            log.warning("estimates diverged at t=%.4g (agent %d)", k * dt, bad)
            record(k, x, xh)
            break
        if k % stride == 0:
            record(k, x, xh)
    if adaptive:
        jg = max(jg, _jump_gain(realized, maps, dt * stride))
    t = np.array(ts)
    X = np.array(xs)
    XH = np.array(xhs)
    E = XH - X[:, None, :]
    return SimulationRun(
        t=t, x=X, xhat=XH,
        err2=np.linalg.norm(E, axis=2),
        errinf=np.max(np.abs(E), axis=2),
        omega=np.array(oms) if adaptive else None,
        events=events, diverged=diverged, jump_gain=jg,
        jump_factor=cfg.jump_factor, stepping=method,
    )


def simulate(sys, design, graph, cfg):
    """Realize ``design`` and simulate it against the plant (or against the
    index-reduced model the design was built on)."""
    ros = realize(sys, design, graph)
    return simulate_observers(sys, ros, graph, cfg, hidden=design.model)


def count_jumps(run, agent):
    """Sample-to-sample changes of an agent's error larger than
    ``jump_factor`` times what the linear error dynamics can produce over one
    record interval."""
    E = run.errors[:, agent, :]
    if E.shape[0] < 2:
        return 0
    d = np.linalg.norm(np.diff(E, axis=0), axis=1)
    # the bound acts on the stacked error of all agents
    full = np.linalg.norm(run.errors.reshape(E.shape[0], -1), axis=1)
    size = np.maximum(full[:-1], full[1:])
    floor = 1e-12 * (1.0 + np.max(np.linalg.norm(run.x, axis=1)))
    bound = run.jump_factor * run.jump_gain * size + floor
    return int(np.sum(d > bound))


def error_metrics(run, threshold=None, rel_threshold=1e-3):
    """Per-agent summary.

    ``time_to_threshold`` is the first recorded time after which the
    infinity-norm error stays below ``threshold`` (default
    ``rel_threshold * ||e_i(0+)||_inf``); ``None`` if never reached.
    """
    out = []
    for i in range(run.xhat.shape[1]):
        einf = run.errinf[:, i]
        e2 = run.err2[:, i]
        thr = rel_threshold * einf[0] if threshold is None else threshold
        below = einf < thr if thr > 0 else einf <= 0
        if run.diverged is not None or not below[-1]:
            ttt = None
        else:
            above = np.nonzero(~below)[0]
            ttt = float(run.t[above[-1] + 1]) if above.size else float(run.t[0])
        jumps = count_jumps(run, i)
        out.append(dict(
            agent=i,
            initial_error=float(e2[0]),
            initial_error_inf=float(einf[0]),
            max_error=float(np.max(e2)),
            final_error=float(e2[-1]),
            final_error_inf=float(einf[-1]),
            time_to_threshold=ttt,
            jumps=jumps,
            jump_free=jumps == 0,
            diverged=run.diverged is not None,
        ))
    return out
