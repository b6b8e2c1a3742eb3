"""Directed communication graphs: Laplacian, strong connectivity, Perron
weights and the joint-observability margin."""
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import breadth_first_order

from .errors import ConnectivityError, InvalidInputError, JointObservabilityError
from .linalg import DEFAULT_TOL


@dataclass(frozen=True)
class CommGraph:
    """0/1 adjacency with ``adjacency[i, j] = 1`` when agent i receives from j."""

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidInputError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all(np.isin(adj, (0.0, 1.0))):
            raise InvalidInputError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj)):
            raise InvalidInputError("adjacency must have a zero diagonal (no self-loops)")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def N(self):
        return self.adjacency.shape[0]

    @property
    def in_degree(self):
        return self.adjacency.sum(axis=1)

    @property
    def laplacian(self):
        return np.diag(self.in_degree) - self.adjacency


@dataclass(frozen=True)
class PerronWeights:
    r: np.ndarray
    R: np.ndarray
    lhat: np.ndarray


def is_strongly_connected(g):
    """Every node reaches node 0 and node 0 reaches every node."""
    if g.N <= 1:
        return True
    adj = g.adjacency
    fwd = breadth_first_order(adj, 0, directed=True, return_predecessors=False)
    bwd = breadth_first_order(adj.T, 0, directed=True, return_predecessors=False)
    return len(fwd) == g.N and len(bwd) == g.N


def perron_weights(g):
    """Positive left null vector ``r`` of the Laplacian with ``sum(r) = N``.

    Raises
    ------
    ConnectivityError
        If the graph is not strongly connected.
    """
    if not is_strongly_connected(g):
        raise ConnectivityError()
    L = g.laplacian
    N = g.N
    if N == 1:
        r = np.ones(1)
    else:
        U, _, _ = np.linalg.svd(L)
        r = U[:, -1]
        r = r * np.sign(r.sum())
        r = r * (N / r.sum())
        # A tiny least-squares polish keeps r^T L at round-off level.
        M = np.vstack([L.T, np.ones((1, N))])
        rhs = np.concatenate([np.zeros(N), [N]])
        r = np.linalg.lstsq(M, rhs, rcond=None)[0]
    if np.any(r <= 0):
        raise ConnectivityError("Laplacian left null vector is not positive")
    R = np.diag(r)
    lhat = R @ L + L.T @ R
    return PerronWeights(r, R, 0.5 * (lhat + lhat.T))


def joint_margin_mu(g, T_blocks, G, block_dim, subspace=None, tol=DEFAULT_TOL):
    """``mu = lambda_min(T^T (Lhat kron I) T + G)``.

    Parameters
    ----------
    g : CommGraph
    T_blocks : sequence of per-agent orthogonal matrices, or one block-diagonal matrix
    G : block-diagonal selector (see ``joint_margin_inputs``)
    block_dim : size of the identity in the Kronecker product
    subspace : optional orthonormal basis; the form is compressed onto it

    Returns
    -------
    (mu, spectrum)

    Raises
    ------
    JointObservabilityError
        If ``mu <= tol * max(1, ||form||)``.
    """
    pw = perron_weights(g)
    if isinstance(T_blocks, np.ndarray):
        T = T_blocks
    else:
        from scipy.linalg import block_diag

        T = block_diag(*T_blocks)
    K = np.kron(pw.lhat, np.eye(block_dim))
    if T.shape != K.shape or np.shape(G) != K.shape:
        raise InvalidInputError(
            f"dimension mismatch: T {T.shape}, G {np.shape(G)}, expected {K.shape}"
        )
    F = T.T @ K @ T + G
    if subspace is not None:
        F = subspace.T @ F @ subspace
    F = 0.5 * (F + F.T)
    spectrum = np.linalg.eigvalsh(F) if F.size else np.zeros(0)
    mu = float(spectrum[0]) if spectrum.size else np.inf
    if mu <= tol * max(1.0, float(np.max(np.abs(spectrum))) if spectrum.size else 1.0):
        raise JointObservabilityError(
            f"joint observability margin mu = {mu:.3e} is not positive", mu=mu, spectrum=spectrum
        )
    return mu, spectrum
