"""Observability indices, orthogonal observable/unobservable splits and the
R-, I- and C-observability tests for the slow/fast form."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError
from .linalg import CLUSTER_TOL, DEFAULT_TOL, norm2


@dataclass(frozen=True)
class ObsvDecomposition:
    """``T.T @ A @ T = [[A_o, 0], [A_r, A_u]]`` and ``C @ T = [C_o, 0]``."""

    T: np.ndarray
    A_o: np.ndarray
    A_r: np.ndarray
    A_u: np.ndarray
    C_o: np.ndarray
    v: int

    @property
    def dim(self):
        return self.T.shape[0]


def _check_pair(C_blk, A_blk):
    A = np.atleast_2d(np.asarray(A_blk, dtype=float))
    if A.size == 0:
        A = A.reshape(0, 0)
    C = np.asarray(C_blk, dtype=float)
    if C.ndim == 1:
        C = C.reshape(1, -1) if C.size else C.reshape(0, A.shape[0])
    if A.shape[0] != A.shape[1] or C.shape[1] != A.shape[0]:
        raise InvalidInputError(f"incompatible pair: C {C.shape}, A {A.shape}")
    return C, A


def obsv_decompose(C_blk, A_blk, tol=DEFAULT_TOL, scale=None):
    """Orthogonal staircase split of ``(C, A)``, observable part first.

    The observable subspace is grown one SVD at a time as the reachable space
    of ``(A^T, C^T)``; rank calls use the absolute threshold
    ``tol * max(||A||, ||C||, scale)``. Pass ``scale`` when the pair is a
    block of a larger model so that round-off blocks are not mistaken for data.
    """
    C, A = _check_pair(C_blk, A_blk)
    n = A.shape[0]
    T = np.eye(n)
    thr = tol * max(norm2(A), norm2(C), scale or 0.0, np.finfo(float).tiny)
    At = A.T
    B = C.T
    k = 0
    while k < n and B.size:
        U, s, _ = np.linalg.svd(B, full_matrices=True)
        r = int(np.sum(s > thr))
        if r == 0:
            break
        T[:, k:] = T[:, k:] @ U
        B = T[:, k + r:].T @ At @ T[:, k:k + r]
        k += r
    v = k
    At_blk = T.T @ A @ T
    return ObsvDecomposition(
        T=T,
        A_o=At_blk[:v, :v],
        A_r=At_blk[v:, :v],
        A_u=At_blk[v:, v:],
        C_o=(C @ T)[:, :v],
        v=v,
    )


def obsv_index(C_blk, A_blk, tol=DEFAULT_TOL, scale=None):
    """Dimension of the observable subspace of ``(C, A)``."""
    return obsv_decompose(C_blk, A_blk, tol, scale).v


def is_observable(C_blk, A_blk, tol=DEFAULT_TOL, scale=None):
    C, A = _check_pair(C_blk, A_blk)
    return obsv_index(C, A, tol, scale) == A.shape[0]


def form_scales(form):
    """Reference magnitudes for rank calls on the slow and fast pairs of a form."""
    if hasattr(form, "N2"):
        c = norm2(np.hstack([form.C_star1, form.C_star2]))
        return max(norm2(form.A1), c), max(1.0, c)
    return (max(norm2(form.A11), norm2(form.C_dia1), 1.0),
            max(norm2(form.A22), norm2(form.C_dia2), 1.0))


def check_R_observable(sdf, tol=DEFAULT_TOL):
    s1, _ = form_scales(sdf)
    return sdf.n1 == 0 or obsv_index(sdf.C_star1, sdf.A1, tol, s1) == sdf.n1


def _range_basis(M, thr):
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    return U[:, : int(np.sum(s > thr))]


def _null_basis(M, thr):
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    return Vt[int(np.sum(s > thr)):].T


def check_I_observable(sdf, tol=DEFAULT_TOL):
    """``ker N2 /\\ im N2 /\\ ker C_star2 == {0}``.

    Each subspace is described by an orthonormal basis of its orthogonal
    complement; the intersection is the common null space of the stacked
    complements. ``N2`` is compared against the identity fast block, so its
    rank threshold is absolute.
    """
    N2, C2 = sdf.N2, sdf.C_star2
    m = N2.shape[0]
    if m == 0:
        return True
    thr_n = CLUSTER_TOL
    thr_c = tol * max(form_scales(sdf)[1], np.finfo(float).tiny)
    ker_n_perp = _range_basis(N2.T, thr_n).T
    im_n_perp = _null_basis(N2.T, thr_n).T
    ker_c_perp = _range_basis(C2.T, thr_c).T
    stack = np.vstack([ker_n_perp, im_n_perp, ker_c_perp])
    s = np.linalg.svd(stack, compute_uv=False) if stack.size else np.zeros(0)
    rank = int(np.sum(s > 1e-8))
    return m - rank == 0


def check_C_observable(sdf, tol=DEFAULT_TOL):
    fast = sdf.n2 == 0 or obsv_index(sdf.C_star2, sdf.N2, tol, form_scales(sdf)[1]) == sdf.n2
    return check_R_observable(sdf, tol) and fast


@dataclass(frozen=True)
class AgentObservability:
    """Per-agent decompositions of the slow and fast pairs.

    ``kind`` is ``"sdf"`` (pairs ``(C_i1, A1)``, ``(C_i2, N2)``) or ``"ddf"``
    (pairs ``(C_i1, A11)``, ``(C_i2, A22)``).
    """

    kind: str
    slow: tuple
    fast: tuple

    @property
    def n_agents(self):
        return len(self.slow)

    @property
    def v1(self):
        return [d.v for d in self.slow]

    @property
    def v2(self):
        return [d.v for d in self.fast]


def agent_observability(form, tol=DEFAULT_TOL):
    """Decompose every agent's slow and fast pair of an SdfForm or DdfForm."""
    if hasattr(form, "N2"):
        kind, A_s, A_f = "sdf", form.A1, form.N2
    else:
        kind, A_s, A_f = "ddf", form.A11, form.A22
    s1, s2 = form_scales(form)
    slow, fast = [], []
    for i in range(len(form.output_partition)):
        C1, C2 = form.agent_blocks(i)
        slow.append(obsv_decompose(C1, A_s, tol, s1))
        fast.append(obsv_decompose(C2, A_f, tol, s2))
    return AgentObservability(kind, tuple(slow), tuple(fast))


def _g_block(v, dim, g):
    d = np.zeros(dim)
    d[:v] = g
    return np.diag(d)


def joint_margin_inputs(agent_obsv, g):
    """Block-diagonal selector matrices for the joint-observability margin.

    Returns a dict with ``"slow"`` (``diag(g_i I_{v_i1}, 0)`` per agent),
    ``"fast"`` (same for ``v_i2``) and ``"joint"`` (per agent
    ``diag(G_i1, G_i2)``), plus the matching orthogonal transforms under
    ``"T_slow"``, ``"T_fast"``, ``"T_joint"``.
    """
    g = np.asarray(g, dtype=float).ravel()
    N = agent_obsv.n_agents
    if g.size != N:
        raise InvalidInputError(f"need {N} weights g_i, got {g.size}")
    if np.any(g <= 0):
        raise InvalidInputError("all g_i must be positive")
    G1 = [_g_block(d.v, d.dim, gi) for d, gi in zip(agent_obsv.slow, g)]
    G2 = [_g_block(d.v, d.dim, gi) for d, gi in zip(agent_obsv.fast, g)]
    T1 = [d.T for d in agent_obsv.slow]
    T2 = [d.T for d in agent_obsv.fast]
    return {
        "slow": sla.block_diag(*G1),
        "fast": sla.block_diag(*G2),
        "joint": sla.block_diag(*[sla.block_diag(a, b) for a, b in zip(G1, G2)]),
        "T_slow": sla.block_diag(*T1),
        "T_fast": sla.block_diag(*T2),
        "T_joint": sla.block_diag(*[sla.block_diag(a, b) for a, b in zip(T1, T2)]),
    }
