"""Builtin plants: three-tank hydraulic network, series RLC network and a
5-state comparison fixture where the slow subsystem is observable but the
differential block of the algebraic/differential split is not.

Constant inputs are carried as extra states with zero derivative so every
plant has the autonomous form ``E x' = A x``.
"""
from dataclasses import dataclass, field

import numpy as np

from .descriptor import DescriptorSystem


def ring_adjacency(n_agents=3):
    """Directed cycle 1 -> 2 -> ... -> N -> 1; ``adj[i, j] = 1`` if i listens to j."""
    adj = np.zeros((n_agents, n_agents))
    for i in range(n_agents):
        adj[(i + 1) % n_agents, i] = 1.0
    return adj


@dataclass
class Scenario:
    name: str
    system: DescriptorSystem
    adjacency: np.ndarray
    x0: np.ndarray
    dt: float
    t_end: float
    state_names: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    path: str = "auto"
    options: dict = field(default_factory=dict)


HYDRAULIC_DEFAULTS = dict(
    d_tank=10.0,
    d_pipe=2.0,
    L_B=10.0,
    L_1=10.0,
    L_2=20.0,
    rho=1.0e3,
    g=9.8,
    eta=1e-3,
    F_in=1.0,
    k_leak=0.005,
    h0=(2.0, 1.5, 1.0),
)


def hydraulic_system(**overrides):
    """Three tanks joined at one pipe branch; tank 1 fed, tank 3 leaking.

    State ``(h1, h2, h3, p1, p2, p3, p_B, F_in)``. Agent ``i`` measures ``h_i``.
    Returns ``(system, params)``.
    """
    prm = dict(HYDRAULIC_DEFAULTS)
    prm.update(overrides)
    a = np.pi * prm["d_tank"] ** 2 / 4.0
    k_num = np.pi * prm["d_pipe"] ** 4 / (128.0 * prm["eta"])
    k1, k2, k3 = k_num / prm["L_B"], k_num / prm["L_1"], k_num / prm["L_2"]
    rg = prm["rho"] * prm["g"]
    kl = prm["k_leak"]

    E = np.diag([a, a, a, 0, 0, 0, 0, 1.0])
    A = np.zeros((8, 8))
    # tank balances: a_i h_i' = F_Bi (+ F_in for tank 1, - leak for tank 3)
    A[0, [3, 6, 7]] = [-k1, k1, 1.0]
    A[1, [4, 6]] = [-k2, k2]
    A[2, [5, 6]] = [-k3 - kl, k3]
    # hydrostatic pressure at each tank bottom
    for i in range(3):
        A[3 + i, i] = rg
        A[3 + i, 3 + i] = -1.0
    # branch balance F_B1 + F_B2 + F_B3 = 0
    A[6, [3, 4, 5, 6]] = [-k1, -k2, -k3, k1 + k2 + k3]
    C = np.zeros((3, 8))
    C[0, 0] = C[1, 1] = C[2, 2] = 1.0
    prm.update(area=a, k1=k1, k2=k2, k3=k3)
    return DescriptorSystem(E, A, C, (1, 1, 1)), prm


def hydraulic_scenario(**overrides):
    sys, prm = hydraulic_system(**overrides)
    h0 = np.asarray(prm["h0"], dtype=float)
    rg = prm["rho"] * prm["g"]
    p = rg * h0
    k = np.array([prm["k1"], prm["k2"], prm["k3"]])
    pB = k @ p / k.sum()
    x0 = np.concatenate([h0, p, [pB, prm["F_in"]]])
    names = ["h1", "h2", "h3", "p1", "p2", "p3", "pB", "F_in"]
    return Scenario("hydraulic", sys, ring_adjacency(3), x0, 1e-3, 20.0, names, prm, "sdf")


ELECTRICAL_DEFAULTS = dict(
    capacitance=(10e-6, 5e-6, 15e-6),
    resistance=(100.0, 400.0, 600.0),
    inductance=(1.2, 1.0, 1.1),
    U=220.0,
    regularization=1e-5,
    v_nodes0=(220, 200, 180, 180, 150, 100, 100, 70, 0, 0),
    i_branch0=0.2,
)

# Branch order: source, capacitors 1..3, resistors 1..3, inductors 1..3.
# Each entry is (from node, to node), nodes numbered 1..10; the three
# R-C-L sections are chained in one loop closed by the source.
ELECTRICAL_BRANCHES = [
    (1, 10),  # source
    (2, 3), (5, 6), (8, 9),  # capacitors
    (1, 2), (4, 5), (7, 8),  # resistors
    (3, 4), (6, 7), (9, 10),  # inductors
]

ELECTRICAL_OUTPUT_SETS = (
    (1, 2, 5, 8, 11, 12, 13),
    (3, 6, 9, 14, 15, 16),
    (4, 7, 10, 17, 18, 19, 20),
)


def incidence_matrix():
    """Branch-node incidence ``A_cir`` (10 x 10): ``v_branch = A_cir v_node``."""
    Acir = np.zeros((10, 10))
    for b, (f, t) in enumerate(ELECTRICAL_BRANCHES):
        Acir[b, f - 1] = 1.0
        Acir[b, t - 1] = -1.0
    return Acir


def _electrical_index():
    # u, v_B (10), i_B (10), v_N (10)
    idx = {"u": 0}
    names = ["U"]
    labels = ["E", "C1", "C2", "C3", "R1", "R2", "R3", "L1", "L2", "L3"]
    for k, lab in enumerate(labels):
        idx[f"v_{lab}"] = 1 + k
    for k, lab in enumerate(labels):
        idx[f"i_{lab}"] = 11 + k
    for k in range(10):
        idx[f"v_N{k + 1}"] = 21 + k
    names += [f"v_{lab}" for lab in labels] + [f"i_{lab}" for lab in labels]
    names += [f"v_N{k + 1}" for k in range(10)]
    return idx, names


def electrical_system(regularize=True, **overrides):
    """Modified-nodal model of the R-C-L chain with a constant source.

    State ``(U, v_E, v_C1..3, v_R1..3, v_L1..3, i_E, i_C1..3, i_R1..3,
    i_L1..3, v_N1..10)``, n = 31. Rows: ``U' = 0``, source law, 10 branch
    voltage laws, Ohm, capacitor and inductor laws, then 10 node current
    balances. The regularization entry sits at the bottom-right of ``A``.
    """
    prm = dict(ELECTRICAL_DEFAULTS)
    prm.update(overrides)
    idx, names = _electrical_index()
    n = 31
    Cc, Rr, Ll = (np.asarray(prm[k], dtype=float) for k in ("capacitance", "resistance", "inductance"))
    Acir = incidence_matrix()
    E = np.zeros((n, n))
    A = np.zeros((n, n))
    row = 0
    # U' = 0
    E[row, 0] = 1.0
    row += 1
    # v_E = U
    A[row, idx["v_E"]] = 1.0
    A[row, 0] = -1.0
    row += 1
    # v_B - A_cir v_N = 0
    for b in range(10):
        A[row, 1 + b] = 1.0
        A[row, 21:31] = -Acir[b]
        row += 1
    # v_R - R i_R = 0
    for k in range(3):
        A[row, idx[f"v_R{k + 1}"]] = 1.0
        A[row, idx[f"i_R{k + 1}"]] = -Rr[k]
        row += 1
    # C v_C' = i_C
    for k in range(3):
        E[row, idx[f"v_C{k + 1}"]] = Cc[k]
        A[row, idx[f"i_C{k + 1}"]] = 1.0
        row += 1
    # L i_L' = v_L
    for k in range(3):
        E[row, idx[f"i_L{k + 1}"]] = Ll[k]
        A[row, idx[f"v_L{k + 1}"]] = 1.0
        row += 1
    # A_cir^T i_B = 0
    for node in range(10):
        A[row, 11:21] = Acir[:, node]
        row += 1
    assert row == n
    if regularize:
        A[n - 1, n - 1] = prm["regularization"]

    C20 = np.zeros((20, n))
    meas = ["v_E", "v_C1", "v_C2", "v_C3", "v_R1", "v_R2", "v_R3", "i_L1", "i_L2", "i_L3"]
    meas += [f"v_N{k + 1}" for k in range(10)]
    for r, key in enumerate(meas):
        C20[r, idx[key]] = 1.0
    rows = [r - 1 for s in ELECTRICAL_OUTPUT_SETS for r in s]
    C = C20[rows]
    part = tuple(len(s) for s in ELECTRICAL_OUTPUT_SETS)
    prm["state_index"] = idx
    return DescriptorSystem(E, A, C, part), prm, names


def electrical_scenario(**overrides):
    sys, prm, names = electrical_system(**overrides)
    idx = prm["state_index"]
    vN = np.asarray(prm["v_nodes0"], dtype=float)
    x0 = np.zeros(sys.n)
    x0[0] = prm["U"]
    x0[1:11] = incidence_matrix() @ vN
    x0[11:21] = prm["i_branch0"]
    x0[21:31] = vN
    prm = {k: v for k, v in prm.items() if k != "state_index"}
    # the 3 s window needs a certified decay rate well above the slowest plant mode
    return Scenario("electrical", sys, ring_adjacency(3), x0, 1e-4, 3.0, names, prm, "ddf",
                    {"decay": 2.0})


def comparison_system(a1=1.0, a2=1.0, a3=1.0, partition=(1, 1, 1)):
    """5-state fixture with ``E = diag(I3, 0)``."""
    E = np.diag([1.0, 1.0, 1.0, 0.0, 0.0])
    A = np.array(
        [
            [0, 0, 0, 1, -1],
            [a1, a2, a3, 0, 1],
            [0, 0, 0, 1, 0],
            [-1, 2, 0, -1, 0],
            [0, 0, 1, 1, 0],
        ],
        dtype=float,
    )
    C = np.array([[1, 0, 0, 0, 1], [0, 0, 0, 0, 1], [0, 0, 1, 0, 0]], dtype=float)
    return DescriptorSystem(E, A, C, partition)


def comparison_scenario(a1=1.0, a2=1.0, a3=1.0):
    sys = comparison_system(a1, a2, a3)
    x0 = np.zeros(5)
    return Scenario(
        "comparison", sys, ring_adjacency(3), x0, 1e-3, 10.0,
        [f"x{k + 1}" for k in range(5)], dict(a1=a1, a2=a2, a3=a3), "sdf",
    )


BUILTIN = {
    "hydraulic": hydraulic_scenario,
    "electrical": electrical_scenario,
    "comparison": comparison_scenario,
}


def builtin(name, **params):
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}") from None
    return factory(**params)
