"""Random plants and graphs shared by the test modules."""
import numpy as np
from scipy.stats import ortho_group

from descobs.descriptor import DescriptorSystem


def _wellcond(rng, n):
    if n == 1:
        return np.array([[rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)]])
    return ortho_group.rvs(n, random_state=rng) @ np.diag(rng.uniform(0.5, 2.0, n)) @ ortho_group.rvs(n, random_state=rng)


def _nilpotent(rng, m):
    Nb = np.zeros((m, m))
    k = 0
    while k < m:
        size = min(int(rng.integers(1, 4)), m - k)
        for j in range(size - 1):
            Nb[k + j, k + j + 1] = rng.uniform(0.5, 2.0)
        k += size
    if m == 0:
        return Nb
    S = _wellcond(rng, m)
    return S @ Nb @ np.linalg.inv(S)


def random_regular(rng, n=None, n1=None, p=None, partition=None, stable=False, nilpotent=True):
    """Regular pencil built from a Weierstrass form with random well-conditioned
    transforms. ``nilpotent`` gives the fast part Jordan chains of length up
    to three under a well-conditioned similarity (index up to three);
    otherwise the plant is impulse-free."""
    n = int(rng.integers(2, 13)) if n is None else n
    n1 = int(rng.integers(1, n)) if n1 is None else n1
    n2 = n - n1
    J = rng.standard_normal((n1, n1))
    if stable:
        J = J - (np.max(np.linalg.eigvals(J).real) + rng.uniform(0.5, 2.0)) * np.eye(n1)
    Nb = _nilpotent(rng, n2) if nilpotent else np.zeros((n2, n2))
    M, K = _wellcond(rng, n), _wellcond(rng, n)
    E = M @ np.block([[np.eye(n1), np.zeros((n1, n2))], [np.zeros((n2, n1)), Nb]]) @ K
    A = M @ np.block([[J, np.zeros((n1, n2))], [np.zeros((n2, n1)), np.eye(n2)]]) @ K
    if partition is None:
        p = int(rng.integers(1, 4)) if p is None else p
        partition = (p,)
    C = rng.standard_normal((sum(partition), n))
    return DescriptorSystem(E, A, C, tuple(partition)), np.linalg.eigvals(J)


def random_strong_digraph(rng, N=None):
    """Directed cycle through a random permutation plus random extra edges."""
    N = int(rng.integers(2, 11)) if N is None else N
    adj = np.zeros((N, N))
    perm = rng.permutation(N)
    for k in range(N):
        adj[perm[(k + 1) % N], perm[k]] = 1.0
    extra = rng.random((N, N)) < rng.uniform(0.0, 0.5)
    adj[extra] = 1.0
    np.fill_diagonal(adj, 0.0)
    return adj


def slow_observability_conditioning(sys):
    """Smallest ``sigma_min / sigma_max`` over agents of the normalized
    observability matrix of each agent's output on the reduced slow ODE."""
    from descobs.descriptor import reduce_to_ode, to_ddf

    d = to_ddf(sys)
    S, K = reduce_to_ode(d)
    Sn = S / max(np.linalg.norm(S, 2), 1.0)
    worst = np.inf
    for i in range(sys.n_agents):
        C1, C2 = d.agent_blocks(i)
        c = C1 + C2 @ K
        O = np.vstack([c @ np.linalg.matrix_power(Sn, k) for k in range(d.l)])
        sv = np.linalg.svd(O, compute_uv=False)
        worst = min(worst, sv[-1] / sv[0] if sv[0] > 0 else 0.0)
    return worst


def random_observer_instance(rng, n_agents=3, min_conditioning=1e-3):
    """Index-one plant with one scalar output per agent on a random strongly
    connected graph. Returns ``(system, adjacency)``.

    The algebraic block is kept well conditioned, the finite spectrum is
    shifted to real parts at most one, and draws whose per-agent slow
    observability conditioning falls below ``min_conditioning`` are redrawn."""
    from descobs.descriptor import DescriptorSystem as _DS

    while True:
        n = int(rng.integers(3, 7))
        l = int(rng.integers(1, n))
        E0 = np.diag([1.0] * l + [0.0] * (n - l))
        A0 = rng.standard_normal((n, n))
        if l < n and np.linalg.cond(A0[l:, l:]) > 1e2:
            continue
        slow = A0[:l, :l] - A0[:l, l:] @ np.linalg.solve(A0[l:, l:], A0[l:, :l]) if l < n else A0
        top = np.max(np.linalg.eigvals(slow).real)
        if top > 1.0:
            A0[:l, :l] -= (top - 1.0) * np.eye(l)
        T1, T2 = _wellcond(rng, n), _wellcond(rng, n)
        C = rng.standard_normal((n_agents, n))
        sys = _DS(T1 @ E0 @ T2, T1 @ A0 @ T2, C, (1,) * n_agents)
        if slow_observability_conditioning(sys) >= min_conditioning:
            return sys, random_strong_digraph(rng, n_agents)


def jointly_observable_normal(seed=0):
    """``E = I`` plant, three scalar outputs, no agent observes every mode."""
    from descobs.descriptor import DescriptorSystem as _DS

    rng = np.random.default_rng(seed)
    A = np.array([[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.5, 1.0], [0.0, 0.0, 0.0, -0.3]])
    T = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    return _DS(np.eye(4), T @ A @ T.T, C @ T.T, (1, 1, 1))
