"""Dense numerical primitives: rank decisions, spectral splitting at zero,
nilpotency tests, Sylvester/Lyapunov solvers and regular-pencil spectra.

Every rank or nilpotency decision in the package goes through the relative
tolerance ``DEFAULT_TOL`` unless a caller passes its own.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegeneratePencilError,
    IllConditionedSplitError,
    InvalidInputError,
    NoStabilizingSolutionError,
    SingularEquationError,
)

DEFAULT_TOL = 1e-9
# Eigenvalues of a perturbed nilpotent block of index k scatter like eps**(1/k);
# the zero cluster of (cE - A)^-1 E therefore needs a looser radius than rank calls.
CLUSTER_TOL = 1e-6
# Smallest reciprocal condition number of cE - A accepted as a regularity witness.
REGULARITY_RCOND = 1e-12


def as_matrix(M, name="matrix", square=False, shape=None):
    """Return ``M`` as a finite 2-D float array or raise InvalidInputError."""
    try:
        arr = np.array(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: not a numeric matrix ({exc})") from None
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name}: expected a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains NaN or Inf")
    if square and arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name}: expected a square matrix, got {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise InvalidInputError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def norm2(M):
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


@dataclass(frozen=True)
class RankedFactorization:
    """SVD ``M = left @ diag(singular_values) @ right.T`` with a rank call."""

    left: np.ndarray
    right: np.ndarray
    singular_values: np.ndarray
    numerical_rank: int

    def range_basis(self):
        return self.left[:, : self.numerical_rank]

    def null_basis(self):
        return self.right[:, self.numerical_rank:]

    def left_null_basis(self):
        return self.left[:, self.numerical_rank:]


def ranked_svd(M, tol=DEFAULT_TOL):
    """Full SVD of ``M`` with numerical rank ``#{s_k > tol * s_1}``."""
    M = as_matrix(M, "M")
    if not 0.0 < tol < 1.0:
        raise InvalidInputError(f"tol must lie in (0, 1), got {tol}")
    m, n = M.shape
    if M.size == 0:
        return RankedFactorization(np.eye(m), np.eye(n), np.zeros(0), 0)
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    return RankedFactorization(U, Vt.T, s, rank)


def rank_abs(M, threshold):
    """Number of singular values above an absolute threshold."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > threshold))


def orth(M, tol=DEFAULT_TOL, scale=None):
    """Orthonormal basis of range(M); singular values below tol*scale are dropped."""
    M = np.asarray(M, dtype=float)
    if M.shape[1] == 0 or M.shape[0] == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    ref = s[0] if scale is None else scale
    r = int(np.sum(s > tol * ref)) if ref > 0 else 0
    return U[:, :r]


def null_space(M, tol=DEFAULT_TOL, scale=None):
    """Orthonormal basis of ker(M)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    if n == 0:
        return np.zeros((0, 0))
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    ref = (s[0] if s.size else 0.0) if scale is None else scale
    r = int(np.sum(s > tol * ref)) if ref > 0 else 0
    return Vt[r:].T


@dataclass(frozen=True)
class SpectralSplit:
    """``inverse @ M @ transform == diag(block_invertible, block_nilpotent)``."""

    transform: np.ndarray
    inverse: np.ndarray
    block_invertible: np.ndarray
    block_nilpotent: np.ndarray

    @property
    def n_invertible(self):
        return self.block_invertible.shape[0]

    @property
    def n_nilpotent(self):
        return self.block_nilpotent.shape[0]


def _quasi_triangular_eigs(T):
    return np.linalg.eigvals(T) if T.size else np.zeros(0, dtype=complex)


def split_zero_cluster(M, tol=DEFAULT_TOL, balance=True):
    """Block-diagonalize ``M`` into an invertible part and a nilpotent part.

    ``M`` is first diagonally balanced (an exact similarity by powers of two),
    so the cluster radius ``tol * ||M||`` refers to the balanced norm and badly
    scaled models do not hide small nonzero eigenvalues. The zero part is
    found by repeated orthogonal deflation of numerical null spaces (singular
    values up to ``tol * ||M||``), which stays reliable for long Jordan chains
    whose computed eigenvalues scatter far from zero; a Sylvester solve then
    removes the off-diagonal block. The nilpotent block is returned strictly
    block upper triangular, so it is exactly nilpotent.

    Raises
    ------
    IllConditionedSplitError
        If a singular value in the staircase, or an eigenvalue of the
        invertible part, falls in ``(tol, 10*tol] * ||M||`` where the
        cluster membership is not trustworthy.
    """
    M = as_matrix(M, "M", square=True)
    n = M.shape[0]
    if n == 0:
        e = np.zeros((0, 0))
        return SpectralSplit(e, e, e, e)
    if balance and np.any(M):
        B, D = sla.matrix_balance(M, permute=False)
        d = np.diag(D)
        inner = split_zero_cluster(B, tol, balance=False)
        return SpectralSplit(
            d[:, None] * inner.transform,
            inner.inverse / d[None, :],
            inner.block_invertible,
            inner.block_nilpotent,
        )
    scale = norm2(M)
    if scale == 0.0:
        return SpectralSplit(np.eye(n), np.eye(n), np.zeros((0, 0)), np.zeros((n, n)))
    thr = tol * scale
    T, U, z = _deflate_zero(M, thr)
    k = n - z
    if k:
        ev = np.abs(_quasi_triangular_eigs(T[z:, z:]))
        if np.min(ev) <= 10.0 * thr:
            raise IllConditionedSplitError(complex(ev[np.argmin(ev)]))
    Nb = T[:z, :z]
    if k == 0:
        return SpectralSplit(U, U.T, np.zeros((0, 0)), Nb)
    R = T[z:, z:]
    # [[N, X], [0, R]] -> diag(N, R) with S = [[I, Y], [0, I]], N Y - Y R = -X
    Y = sla.solve_sylvester(Nb, -R, -T[:z, z:]) if z else np.zeros((0, k))
    perm = np.r_[np.arange(z, n), np.arange(z)]
    S = np.eye(n)
    S[:z, z:] = Y
    S_inv = np.eye(n)
    S_inv[:z, z:] = -Y
    transform = (U @ S)[:, perm]
    inverse = (S_inv @ U.T)[perm]
    return SpectralSplit(transform, inverse, R, Nb)


def _deflate_zero(M, thr):
    """Orthogonal nullspace staircase: ``U.T @ M @ U = [[N, X], [0, R]]`` with
    ``N`` (size ``z``) strictly block upper triangular and ``R`` without
    singular values below ``thr``. Deflated entries are set to exactly zero."""
    n = M.shape[0]
    U = np.eye(n)
    T = M.copy()
    z = 0
    while z < n:
        _, s, Vt = np.linalg.svd(T[z:, z:])
        null = int(np.sum(s <= thr))
        if null and np.any((s > thr) & (s < 10.0 * thr)):
            raise IllConditionedSplitError(complex(s[s > thr][-1]))
        if null == 0:
            break
        V = Vt[::-1].T
        D = np.eye(n)
        D[z:, z:] = V
        T = D.T @ T @ D
        U = U @ D
        T[z:, z:z + null] = 0.0
        z += null
    return T, U, z


def is_nilpotent(M, tol=DEFAULT_TOL):
    """Return ``(flag, index)``; index is the smallest k with M**k ~ 0."""
    M = as_matrix(M, "M", square=True)
    n = M.shape[0]
    if n == 0:
        return True, 0
    nrm = norm2(M)
    P = np.eye(n)
    for k in range(1, n + 1):
        P = P @ M
        if norm2(P) <= tol * max(1.0, nrm**k):
            return True, k
    return False, None


def solve_sylvester(A, B, Q, tol=DEFAULT_TOL):
    """Solve ``A X + X B = Q``; spectra of A and -B must be disjoint."""
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B", square=True)
    Q = as_matrix(Q, "Q", shape=(A.shape[0], B.shape[0]))
    if A.size == 0 or B.size == 0:
        return np.zeros(Q.shape)
    la = np.linalg.eigvals(A)
    lb = np.linalg.eigvals(B)
    gap = np.min(np.abs(la[:, None] + lb[None, :]))
    if gap <= tol * max(1.0, norm2(A) + norm2(B)):
        raise SingularEquationError(
            f"spectra of A and -B overlap (min |a_i + b_j| = {gap:.3e})"
        )
    X = sla.solve_sylvester(A, B, Q)
    return X


def _check_symmetric_pd(Q, name):
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, norm2(Q))):
        raise InvalidInputError(f"{name} must be symmetric")
    if Q.size and np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) <= 0:
        raise InvalidInputError(f"{name} must be positive definite")


def solve_lyapunov_standard(A_cl, Q_rhs):
    """Solve ``W A_cl + A_cl^T W = -Q_rhs`` for symmetric positive definite W."""
    A = as_matrix(A_cl, "A_cl", square=True)
    Q = as_matrix(Q_rhs, "Q_rhs", shape=A.shape)
    if A.size == 0:
        return np.zeros((0, 0))
    _check_symmetric_pd(Q, "Q_rhs")
    abscissa = np.max(np.linalg.eigvals(A).real)
    if abscissa >= 0:
        raise NoStabilizingSolutionError(
            f"A_cl is not Hurwitz (spectral abscissa {abscissa:.3e})"
        )
    W = sla.solve_continuous_lyapunov(A.T, -Q)
    return 0.5 * (W + W.T)


def solve_lyapunov_descriptor(E_blk, A_blk, Y, tol=DEFAULT_TOL):
    """Solve ``E^T X A + A^T X E = -E^T Y E`` with X symmetric positive definite.

    The pair must be admissible. Only the part of X acting on range(E) is
    pinned down by the equation; the free block is chosen so that it adds a
    multiple of an orthogonal projector, scaled to the pinned part.
    """
    E = as_matrix(E_blk, "E", square=True)
    A = as_matrix(A_blk, "A", shape=E.shape)
    Y = as_matrix(Y, "Y", shape=E.shape)
    n = E.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    _check_symmetric_pd(Y, "Y")
    # Admissible pairs have det(A) != 0 (no finite eigenvalue at 0), so c = 0 is a shift.
    if np.linalg.cond(A) > 1.0 / REGULARITY_RCOND:
        raise NoStabilizingSolutionError("pair is not admissible: A is singular")
    Ainv = np.linalg.inv(A)
    E_hat = -Ainv @ E
    split = split_zero_cluster(E_hat, CLUSTER_TOL)
    k = split.n_invertible
    if split.n_nilpotent and norm2(split.block_nilpotent) > tol * max(1.0, norm2(E_hat)):
        raise NoStabilizingSolutionError("pair is not admissible: impulsive modes present")
    A1 = -np.linalg.inv(split.block_invertible) if k else np.zeros((0, 0))
    if k and np.max(np.linalg.eigvals(A1).real) >= 0:
        raise NoStabilizingSolutionError("pair is not admissible: unstable finite eigenvalue")
    D = np.eye(n)
    if k:
        D[:k, :k] = np.linalg.inv(split.block_invertible)
    D[k:, k:] = -np.eye(n - k)
    Qw = D @ split.inverse @ (-Ainv)
    Qw_inv = np.linalg.inv(Qw)
    Ybar = Qw_inv.T @ Y @ Qw_inv
    Ybar = 0.5 * (Ybar + Ybar.T)
    Xbar = np.zeros((n, n))
    if k:
        X11 = sla.solve_continuous_lyapunov(A1.T, -Ybar[:k, :k])
        Xbar[:k, :k] = 0.5 * (X11 + X11.T)
        fill = norm2(Qw[:k].T @ Xbar[:k, :k] @ Qw[:k])
    else:
        fill = 1.0
    if k < n:
        # in original coordinates the free block becomes fill times a projector
        Q2 = Qw[k:]
        Xbar[k:, k:] = fill * np.linalg.inv(Q2 @ Q2.T)
    X = Qw.T @ Xbar @ Qw
    return 0.5 * (X + X.T)


def shift_candidates(n, seed=0):
    """Deterministic shift list: fixed values, then uniform draws in [-1e3, 1e3]."""
    fixed = [0.0, 1.0, -1.0, 2.0, -2.0, 10.0, -10.0, 100.0, -100.0]
    rng = np.random.default_rng(seed)
    extra = rng.uniform(-1e3, 1e3, size=max(20, n + 1 - len(fixed)))
    return fixed + [float(c) for c in extra]


def regular_shifts(E, A, seed=0, rcond_tol=REGULARITY_RCOND):
    """Yield ``(c, rcond)`` for candidate shifts where cE - A is safely invertible."""
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    n = E.shape[0]
    for c in shift_candidates(n, seed):
        M = c * E - A
        if n == 0:
            yield c, 1.0
            return
        s = np.linalg.svd(M, compute_uv=False)
        rc = s[-1] / s[0] if s[0] > 0 else 0.0
        if rc > rcond_tol:
            yield c, rc


def best_shift(E, A, seed=0):
    """Shift with the largest reciprocal condition number, or None."""
    best = None
    for c, rc in regular_shifts(E, A, seed):
        if best is None or rc > best[1]:
            best = (c, rc)
    return None if best is None else best[0]


def pencil_finite_eigenvalues(E, A, tol=CLUSTER_TOL):
    """Finite generalized eigenvalues of a regular pencil, with multiplicity.

    Computed as ``c - 1/mu`` over the invertible part of ``(cE - A)^-1 E``,
    which is the same route the standard decomposition uses.
    """
    E = as_matrix(E, "E", square=True)
    A = as_matrix(A, "A", shape=E.shape)
    if E.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    c = best_shift(E, A)
    if c is None:
        raise DegeneratePencilError("pencil is not regular")
    E_hat = np.linalg.solve(c * E - A, E)
    split = split_zero_cluster(E_hat, tol)
    if split.n_invertible == 0:
        return np.zeros(0, dtype=complex)
    mu = np.linalg.eigvals(split.block_invertible)
    return c - 1.0 / mu
