"""Descriptor systems ``E x' = A x, y = C x``: regularity, the slow/fast
(Weierstrass-type) decomposition, the differential/algebraic decomposition,
impulse-freeness and admissibility.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IllConditionedSplitError,
    ImpulsivePlantError,
    InvalidInputError,
    RegularityError,
)
from .linalg import (
    CLUSTER_TOL,
    DEFAULT_TOL,
    as_matrix,
    norm2,
    ranked_svd,
    regular_shifts,
    solve_lyapunov_descriptor,
    split_zero_cluster,
)

log = logging.getLogger(__name__)

# Shift selection: transforms with a larger condition number trigger a retry.
SDF_COND_LIMIT = 1e8
# Inversions with a larger condition number are refused.
INVERSE_COND_LIMIT = 1e10


@dataclass(frozen=True)
class DescriptorSystem:
    """Plant ``E x' = A x``, ``y = C x`` with outputs split across agents.

    ``output_partition[i]`` is the number of consecutive rows of ``C`` that
    agent ``i`` measures.
    """

    E: np.ndarray
    A: np.ndarray
    C: np.ndarray
    output_partition: tuple = field(default=None)

    def __post_init__(self):
        E = as_matrix(self.E, "E", square=True)
        n = E.shape[0]
        A = as_matrix(self.A, "A", shape=(n, n))
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1 and C.size == 0:
            C = C.reshape(0, n)
        C = as_matrix(C, "C")
        if C.shape[1] != n:
            raise InvalidInputError(f"C must have {n} columns, got {C.shape[1]}")
        part = self.output_partition
        if part is None:
            part = (C.shape[0],)
        part = tuple(int(p) for p in part)
        if any(p < 0 for p in part) or sum(part) != C.shape[0]:
            raise InvalidInputError(
                f"output partition {part} does not sum to the {C.shape[0]} rows of C"
            )
        for arr in (E, A, C):
            arr.setflags(write=False)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "output_partition", part)

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def n_agents(self):
        return len(self.output_partition)

    def row_slices(self):
        out, start = [], 0
        for p in self.output_partition:
            out.append(slice(start, start + p))
            start += p
        return out

    def C_agent(self, i):
        return self.C[self.row_slices()[i]]

    def with_partition(self, partition):
        return DescriptorSystem(self.E, self.A, self.C, tuple(partition))


@dataclass(frozen=True)
class SdfForm:
    """Slow/fast form: ``Q E P = diag(I, N2)``, ``Q A P = diag(A1, I)``."""

    Q_star: np.ndarray
    P_star: np.ndarray
    A1: np.ndarray
    N2: np.ndarray
    C_star1: np.ndarray
    C_star2: np.ndarray
    n1: int
    n2: int
    c: float
    output_partition: tuple = ()
    e_hat_norm: float = 1.0

    def agent_blocks(self, i):
        """``(C_star_i1, C_star_i2)`` for agent ``i``."""
        s = _slices(self.output_partition)[i]
        return self.C_star1[s], self.C_star2[s]


@dataclass(frozen=True)
class DdfForm:
    """Differential/algebraic form: ``Q E P = diag(I_l, 0)``."""

    Q_dia: np.ndarray
    P_dia: np.ndarray
    l: int
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    C_dia1: np.ndarray
    C_dia2: np.ndarray
    output_partition: tuple = ()

    @property
    def n(self):
        return self.Q_dia.shape[0]

    def A_blocks(self):
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    def agent_blocks(self, i):
        s = _slices(self.output_partition)[i]
        return self.C_dia1[s], self.C_dia2[s]


def _slices(partition):
    out, start = [], 0
    for p in partition:
        out.append(slice(start, start + p))
        start += p
    return out


def _pencil(sys_or_E, A=None):
    if A is None:
        return sys_or_E.E, sys_or_E.A
    return as_matrix(sys_or_E, "E", square=True), as_matrix(A, "A", square=True)


def check_regular(sys, seed=0):
    """Return a shift ``c`` with ``cE - A`` safely invertible, or ``None``.

    ``None`` means every candidate failed; the candidate list holds more than
    ``n + 1`` distinct points, so the determinant polynomial vanishes
    identically to working precision.
    """
    E, A = _pencil(sys)
    for c, _ in regular_shifts(E, A, seed):
        return c
    return None


def _sdf_for_shift(E, A, c):
    n = E.shape[0]
    M = c * E - A
    E_hat = np.linalg.solve(M, E)
    split = split_zero_cluster(E_hat, CLUSTER_TOL)
    k = split.n_invertible
    E1 = split.block_invertible
    E2 = split.block_nilpotent
    E1_inv = np.linalg.inv(E1) if k else np.zeros((0, 0))
    F2 = np.linalg.inv(c * E2 - np.eye(n - k)) if n - k else np.zeros((0, 0))
    D = np.zeros((n, n))
    D[:k, :k] = E1_inv
    D[k:, k:] = F2
    Q = D @ split.inverse @ np.linalg.inv(M)
    P = split.transform
    A1 = c * np.eye(k) - E1_inv
    N2 = F2 @ E2
    # Unit-norm columns of P; the block-diagonal rescaling keeps both block forms.
    s = np.linalg.norm(P, axis=0)
    s[s == 0] = 1.0
    P = P / s
    Q = Q * s[:, None]
    A1 = A1 * s[:k, None] / s[None, :k]
    N2 = N2 * s[k:, None] / s[None, k:]
    return Q, P, A1, N2, k, norm2(E_hat)


def to_sdf(sys, tol=DEFAULT_TOL, seed=0):
    """Slow/fast decomposition built from ``(cE - A)^-1 E``.

    Shifts are tried in the deterministic candidate order; the first one
    whose left transform has condition number below ``SDF_COND_LIMIT`` is
    kept, otherwise the best-conditioned candidate.

    Raises
    ------
    RegularityError
        If no candidate shift makes ``cE - A`` invertible.
    """
    E, A = sys.E, sys.A
    n = E.shape[0]
    best, first_err = None, None
    for c, _ in regular_shifts(E, A, seed):
        try:
            Q, P, A1, N2, k, ehn = _sdf_for_shift(E, A, c)
        except IllConditionedSplitError as exc:
            first_err = first_err or exc
            continue
        cond = np.linalg.cond(Q) if n else 1.0
        if best is None or cond < best[0]:
            best = (cond, c, Q, P, A1, N2, k, ehn)
        if cond <= SDF_COND_LIMIT:
            break
    if best is None:
        if first_err is not None:
            raise first_err
        raise RegularityError()
    cond, c, Q, P, A1, N2, k, ehn = best
    if cond > SDF_COND_LIMIT:
        log.info("slow/fast transform condition number %.3e exceeds %.0e", cond, SDF_COND_LIMIT)
    CP = sys.C @ P
    return SdfForm(
        Q_star=Q,
        P_star=P,
        A1=A1,
        N2=N2,
        C_star1=CP[:, :k],
        C_star2=CP[:, k:],
        n1=k,
        n2=n - k,
        c=float(c),
        output_partition=sys.output_partition,
        e_hat_norm=ehn,
    )


def to_ddf(sys, tol=DEFAULT_TOL):
    """Differential/algebraic decomposition from the SVD of ``E``.

    Singular values are absorbed symmetrically: ``Q = diag(S^-1/2, I) U^T``
    and ``P = V diag(S^-1/2, I)``.
    """
    E, A = sys.E, sys.A
    n = E.shape[0]
    f = ranked_svd(E, tol) if n else None
    l = f.numerical_rank if n else 0
    d = np.ones(n)
    if l:
        d[:l] = 1.0 / np.sqrt(f.singular_values[:l])
    Q = (d[:, None] * f.left.T) if n else np.zeros((0, 0))
    P = (f.right * d[None, :]) if n else np.zeros((0, 0))
    QAP = Q @ A @ P
    CP = sys.C @ P
    return DdfForm(
        Q_dia=Q,
        P_dia=P,
        l=l,
        A11=QAP[:l, :l],
        A12=QAP[:l, l:],
        A21=QAP[l:, :l],
        A22=QAP[l:, l:],
        C_dia1=CP[:, :l],
        C_dia2=CP[:, l:],
        output_partition=sys.output_partition,
    )


def _a22_invertible(ddf, tol):
    m = ddf.A22.shape[0]
    if m == 0:
        return True
    s = np.linalg.svd(ddf.A22, compute_uv=False)
    return s[-1] > tol * max(1.0, norm2(ddf.A_blocks()))


def _sdf_impulse_free(sdf):
    return sdf.n2 == 0 or norm2(sdf.N2) <= CLUSTER_TOL * max(1.0, sdf.e_hat_norm)


def _rank_test_impulse_free(E, A, tol):
    n = E.shape[0]
    Z = np.zeros((n, n))
    big = np.block([[E, Z], [A, E]])
    rb = ranked_svd(big, tol).numerical_rank
    re = ranked_svd(E, tol).numerical_rank
    return rb == n + re


def is_impulse_free(sys, tol=DEFAULT_TOL, sdf=None, ddf=None):
    """True iff the slow/fast form has ``N2 = 0`` (equivalently ``A22`` invertible).

    Both routes are evaluated; on disagreement the rank test
    ``rank [[E, 0], [A, E]] = n + rank E`` decides.
    """
    if check_regular(sys) is None:
        raise RegularityError()
    sdf = sdf or to_sdf(sys, tol)
    ddf = ddf or to_ddf(sys, tol)
    a = _sdf_impulse_free(sdf)
    b = _a22_invertible(ddf, tol)
    if a == b:
        return a
    verdict = _rank_test_impulse_free(sys.E, sys.A, tol)
    log.warning("impulse tests disagree (slow/fast=%s, A22=%s); rank test says %s", a, b, verdict)
    return verdict


def is_admissible(E, A, tol=DEFAULT_TOL):
    """Regular, impulse-free and every finite eigenvalue has real part < -tol."""
    sys = DescriptorSystem(E, A, np.zeros((0, np.shape(E)[0])), ())
    if check_regular(sys) is None:
        raise RegularityError()
    sdf = to_sdf(sys, tol)
    if not is_impulse_free(sys, tol, sdf=sdf):
        return False
    if sdf.n1 == 0:
        return True
    return bool(np.max(np.linalg.eigvals(sdf.A1).real) < -tol)


def admissible_by_lyapunov(E, A, Y=None, tol=DEFAULT_TOL):
    """Secondary admissibility check: a positive definite ``X`` solving
    ``E^T X A + A^T X E = -E^T Y E`` exists and satisfies the equation."""
    E = as_matrix(E, "E", square=True)
    A = as_matrix(A, "A", shape=E.shape)
    n = E.shape[0]
    Y = np.eye(n) if Y is None else Y
    from .errors import NoStabilizingSolutionError

    try:
        X = solve_lyapunov_descriptor(E, A, Y, tol)
    except NoStabilizingSolutionError:
        return False
    res = E.T @ X @ A + A.T @ X @ E + E.T @ Y @ E
    scale = max(1.0, norm2(X) * norm2(A) * norm2(E))
    return bool(np.min(np.linalg.eigvalsh(X)) > 0 and norm2(res) <= 1e-6 * scale)


def reduce_to_ode(ddf):
    """Eliminate the algebraic block: ``x1' = S x1`` and ``x2 = K x1``.

    Raises
    ------
    ImpulsivePlantError
        If ``A22`` is singular or too ill-conditioned to invert.
    """
    m = ddf.A22.shape[0]
    if m == 0:
        return ddf.A11.copy(), np.zeros((0, ddf.l))
    if np.linalg.cond(ddf.A22) > INVERSE_COND_LIMIT:
        raise ImpulsivePlantError()
    K = -np.linalg.solve(ddf.A22, ddf.A21)
    return ddf.A11 + ddf.A12 @ K, K


@dataclass(frozen=True)
class IndexReduction:
    """Index-one model sharing every solution of an index-two plant.

    ``constraint @ x = 0`` is the hidden constraint of the original plant;
    the reduced model replaces it by ``d/dt (constraint @ x) = -alpha *
    constraint @ x`` so a violated constraint decays instead of producing an
    impulse. ``k`` is the number of constraints replaced (0 when the plant was
    already impulse-free and ``system`` is the input).
    """

    system: DescriptorSystem
    constraint: np.ndarray
    alpha: float
    k: int


def reduce_index(sys, alpha=1.0, tol=DEFAULT_TOL):
    """Replace the hidden constraints of an index-two plant by stabilized
    derivatives.

    In the differential/algebraic basis the rows of the algebraic block that
    ``A22`` annihilates read ``0 = c x1``. They are replaced by
    ``c x1' = -alpha c x1``; combined with the differential rows this gives
    an algebraic equation in ``x2`` that is solvable when ``c A12`` has full
    rank on the null space of ``A22``.

    Raises
    ------
    ImpulsivePlantError
        If the plant has index above two.
    """
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    f = to_ddf(sys, tol)
    n, l = sys.n, f.l
    if n == l:
        return IndexReduction(sys, np.zeros((0, n)), float(alpha), 0)
    U, s, Vt = np.linalg.svd(f.A22)
    k = int(np.sum(s <= tol * max(1.0, norm2(f.A_blocks()))))
    if k == 0:
        return IndexReduction(sys, np.zeros((0, n)), float(alpha), 0)
    Un, Vn = U[:, -k:], Vt[-k:].T
    c = Un.T @ f.A21
    sv = np.linalg.svd(c @ f.A12 @ Vn, compute_uv=False)
    if sv[-1] <= tol * max(1.0, norm2(c) * norm2(f.A12)):
        raise ImpulsivePlantError("plant index exceeds two; hidden constraints are not resolvable")
    R = np.eye(n)
    R[l:, l:] = U.T
    Et = R @ f.Q_dia @ sys.E @ f.P_dia
    At = R @ f.Q_dia @ sys.A @ f.P_dia
    Et[n - k:] = 0.0
    At[n - k:] = 0.0
    Et[n - k:, :l] = c
    At[n - k:, :l] = -alpha * c
    Pi = np.linalg.inv(f.P_dia)
    reduced = DescriptorSystem(Et @ Pi, At @ Pi, sys.C, sys.output_partition)
    return IndexReduction(reduced, c @ Pi[:l], float(alpha), k)
