"""Runnable form of a synthesized observer network: an ODE in the
differential coordinates of each estimate plus an algebraic map for the
remaining coordinates.

In the design's differential/algebraic basis ``z = P^-1 x_hat`` every agent obeys

    z1' = A11 z1 + A12 z2 + B1 y + g (G11 d1 + G12 d2)
    0   = A21 z1 + A22 z2 + B2 y + g (G21 d1 + G22 d2)

with ``A = Q (A - H_i C_i) P``, ``B = Q H_i``, ``G = Q W_i^-1 K P`` (``K = E`` for
consensus on ``E x``, ``K = I`` for consensus on ``x``), ``d = sum_j a_ij (z_j - z_i)``
and ``g`` the coupling gain. For consensus on ``E x`` only ``d1`` enters, so
``z2`` is eliminated agent by agent. For consensus on ``x`` the algebraic rows
of neighbouring agents are coupled through ``d2``; each agent keeps the map

    z2 = -M_i^-1 (A21 z1 + B2 y + g G21 d1 + g G22 sum_j a_ij z_j2),
    M_i = A22 - g deg_i G22,

and the network solves all maps jointly.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .descriptor import INVERSE_COND_LIMIT
from .errors import InvalidInputError, NotRealizableError
from .network import CommGraph


@dataclass
class RealizedObserver:
    """One agent's realized observer at coupling gain ``gain``.

    ``z1' = F z1 + G z2 + B y + K1 d1 + K2 d2`` and
    ``z2 = R1 z1 + Ry y + Rd d1 + Rn n2`` with ``d = sum_j a_ij (z_j - z_i)``
    and ``n2 = sum_j a_ij z_j2``. ``x_hat = lift_back @ [z1; z2]``.
    ``blocks`` keeps the unreduced coefficients so the maps can be rebuilt at
    another gain (adaptive coupling).
    """

    agent: int
    mode: str
    l: int
    gain: float
    F: np.ndarray
    G: np.ndarray
    B: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    R1: np.ndarray
    Ry: np.ndarray
    Rd: np.ndarray
    Rn: np.ndarray
    lift_back: np.ndarray
    blocks: dict

    @property
    def n(self):
        return self.lift_back.shape[0]

    @property
    def m(self):
        return self.n - self.l

    def at_gain(self, gain):
        return _realize_agent(self.agent, self.mode, self.blocks, gain, self.lift_back)

    def substitution_residual(self, rng=None, samples=5):
        """Largest relative residual of the unreduced equations when ``z2``
        comes from the algebraic map (random ``z1``, ``y``, neighbour data)."""
        rng = np.random.default_rng(0) if rng is None else rng
        b = self.blocks
        g, deg = self.gain, b["deg"]
        worst = 0.0
        for _ in range(samples):
            z1 = rng.standard_normal(self.l)
            y = rng.standard_normal(self.B.shape[1])
            d1 = rng.standard_normal(self.l)
            n2 = rng.standard_normal(self.m)
            z2 = self.R1 @ z1 + self.Ry @ y + self.Rd @ d1 + self.Rn @ n2
            d2 = n2 - deg * z2
            alg = b["A21"] @ z1 + b["A22"] @ z2 + b["B2"] @ y + g * (b["G21"] @ d1 + b["G22"] @ d2)
            rate_full = b["A11"] @ z1 + b["A12"] @ z2 + b["B1"] @ y + g * (b["G11"] @ d1 + b["G12"] @ d2)
            rate = self.F @ z1 + self.G @ z2 + self.B @ y + self.K1 @ d1 + self.K2 @ d2
            terms = [z1, z2, y, d1, n2]
            size = 1.0 + max(np.linalg.norm(t) for t in terms if t.size) if self.n else 1.0
            sc = size * max(1.0, _bnorm(b), g * max(_n(b["G21"]), _n(b["G22"]), _n(b["G11"])))
            worst = max(worst, _n(alg) / sc, _n(rate - rate_full) / sc)
        return worst


def _n(M):
    return float(np.linalg.norm(M)) if np.size(M) else 0.0


def _bnorm(b):
    return max(_n(b[k]) for k in ("A11", "A12", "A21", "A22", "B1", "B2"))


def _checked_inverse(M, agent, what, hint=""):
    if M.size == 0:
        return M.copy()
    c = np.linalg.cond(M)
    if not np.isfinite(c) or c > INVERSE_COND_LIMIT:
        raise NotRealizableError(agent, f"{what} is singular or ill-conditioned (cond = {c:.3e}){hint}")
    return np.linalg.inv(M)


def _agent_blocks(sys, design, i, deg):
    Q, P = design.Q_dia, design.P_dia
    l = int(round(np.trace(Q @ sys.E @ P))) if sys.n else 0
    Ci = sys.C_agent(i)
    At = Q @ (sys.A - design.H[i] @ Ci) @ P
    Bt = Q @ design.H[i]
    Winv = np.linalg.inv(design.W[i])
    if design.path == "sdf":
        Qi = np.linalg.inv(Q)
        Gt = np.zeros_like(At)
        Gt[:, :l] = (Q @ Winv @ Qi)[:, :l]
    else:
        Gt = Q @ Winv @ P
    return dict(
        l=l, deg=float(deg),
        A11=At[:l, :l], A12=At[:l, l:], A21=At[l:, :l], A22=At[l:, l:],
        B1=Bt[:l], B2=Bt[l:],
        G11=Gt[:l, :l], G12=Gt[:l, l:], G21=Gt[l:, :l], G22=Gt[l:, l:],
    )


def _realize_agent(i, mode, b, gain, P):
    l = b["l"]
    m = b["A22"].shape[0]
    g = float(gain)
    if mode == "sdf":
        Minv = _checked_inverse(b["A22"], i, "algebraic block of Q (A - H_i C_i) P",
                               "; the gains must be revised")
    else:
        Minv = _checked_inverse(b["A22"] - g * b["deg"] * b["G22"], i, "M_i",
                               "; try a different coupling gain")
    R1 = -Minv @ b["A21"]
    Ry = -Minv @ b["B2"]
    Rd = -g * Minv @ b["G21"]
    Rn = -g * Minv @ b["G22"]
    if mode == "sdf":
        # z2 depends on the agent's own data only: fold it into the ODE
        F = b["A11"] + b["A12"] @ R1
        B = b["B1"] + b["A12"] @ Ry
        K1 = g * b["G11"] + b["A12"] @ Rd
        G = np.zeros((l, m))
        K2 = np.zeros((l, m))
        Rn = np.zeros((m, m))
    else:
        F, G, B = b["A11"], b["A12"], b["B1"]
        K1, K2 = g * b["G11"], g * b["G12"]
    return RealizedObserver(i, mode, l, g, F, G, B, K1, K2, R1, Ry, Rd, Rn, P, b)


def _realize(sys, design, graph, mode):
    g = graph if isinstance(graph, CommGraph) else CommGraph(graph)
    if g.N != design.n_agents:
        raise InvalidInputError(f"graph has {g.N} agents, design has {design.n_agents}")
    if design.path != mode:
        raise InvalidInputError(f"design path is {design.path!r}, expected {mode!r}")
    osys = design.observer_system(sys)
    P = design.P_dia
    # the lift-back is only multiplied, never inverted; it just has to be a basis
    if not np.linalg.cond(P) < 1.0 / (P.shape[0] * np.finfo(float).eps):
        raise NotRealizableError(-1, "lift-back matrix is singular")
    deg = g.in_degree
    out = []
    for i in range(g.N):
        b = _agent_blocks(osys, design, i, deg[i])
        out.append(_realize_agent(i, mode, b, design.gamma, P))
    return out


def realize_sdf(sys, design, graph):
    """Realize a consensus-on-``E x`` design: one ODE per agent driven by the
    agent's output and its neighbours' differential coordinates.

    Raises
    ------
    NotRealizableError
        If an agent's algebraic block is singular.
    """
    return _realize(sys, design, graph, "sdf")


def realize_ddf(sys, design, graph):
    """Realize a consensus-on-``x`` design; the algebraic map of each agent
    reads its neighbours' algebraic coordinates.

    Raises
    ------
    NotRealizableError
        If some ``M_i`` is singular at the design gain.
    """
    return _realize(sys, design, graph, "ddf")


def realize(sys, design, graph):
    return _realize(sys, design, graph, design.path)


@dataclass
class NetworkMaps:
    """Stacked realized network: ``Z1' = A Z1 + B Y`` and ``Z2 = T1 Z1 + Ty Y``.

    ``Z1``/``Z2`` stack the agents' coordinates, ``Y`` stacks their outputs.
    """

    A: np.ndarray
    B: np.ndarray
    T1: np.ndarray
    Ty: np.ndarray
    l: int
    m: int


def network_maps(realized, graph, gains=None):
    """Assemble the realized agents into one linear system.

    ``gains`` (one per agent) rebuilds every agent at that gain; by default
    the agents' own gains are used. The neighbours' algebraic coordinates are
    solved jointly, which is exact rather than lagged.
    """
    g = graph if isinstance(graph, CommGraph) else CommGraph(graph)
    ros = realized if gains is None else [ro.at_gain(w) for ro, w in zip(realized, gains)]
    N = g.N
    l, m = ros[0].l, ros[0].m
    Lk1 = np.kron(g.laplacian, np.eye(l))
    Lk2 = np.kron(g.laplacian, np.eye(m))
    Ak2 = np.kron(g.adjacency, np.eye(m))
    bd = sla.block_diag
    R1, Ry, Rd, Rn = (bd(*[getattr(r, k) for r in ros]) for k in ("R1", "Ry", "Rd", "Rn"))
    F, G, B, K1, K2 = (bd(*[getattr(r, k) for r in ros]) for k in ("F", "G", "B", "K1", "K2"))
    if m:
        lhs = np.eye(N * m) - Rn @ Ak2
        T1 = np.linalg.solve(lhs, R1 - Rd @ Lk1)
        Ty = np.linalg.solve(lhs, Ry)
    else:
        T1 = np.zeros((0, N * l))
        Ty = np.zeros((0, B.shape[1]))
    A = F - K1 @ Lk1 + (G - K2 @ Lk2) @ T1
    Bn = B + (G - K2 @ Lk2) @ Ty
    return NetworkMaps(A, Bn, T1, Ty, l, m)
