"""Observer synthesis on the slow/fast form (coupling through ``E x``) and on
the differential/algebraic form (coupling through ``x``), plus a spectral
certificate of the resulting networked error dynamics.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.signal import place_poles

from .descriptor import (
    INVERSE_COND_LIMIT,
    DescriptorSystem,
    check_regular,
    is_admissible,
    reduce_index,
    to_ddf,
    to_sdf,
)
from .errors import (
    JointObservabilityError,
    NoStabilizingSolutionError,
    PreconditionError,
    SingularEquationError,
    SynthesisError,
)
from .linalg import (
    CLUSTER_TOL,
    DEFAULT_TOL,
    norm2,
    orth,
    pencil_finite_eigenvalues,
    solve_lyapunov_descriptor,
    solve_lyapunov_standard,
)
from .network import CommGraph, joint_margin_mu, perron_weights
from .observability import (
    AgentObservability,
    agent_observability,
    form_scales,
    is_observable,
    joint_margin_inputs,
    obsv_decompose,
)

log = logging.getLogger(__name__)


@dataclass
class SynthesisOptions:
    """Knobs for both synthesis paths.

    ``pole_scale=None`` picks ``max(1, 2 * max |finite plant eigenvalue|)``;
    target poles are ``-pole_scale * (1, 2, ...)``. A design is accepted only
    when its certified spectral abscissa is below ``-decay``.
    ``index_alpha`` is the decay rate given to hidden constraints when the
    consensus-on-``x`` path meets an index-two plant.
    ``robust_tol`` is the relative staircase threshold below which a slow
    direction counts as unobservable to an agent on the consensus-on-``x``
    path, so consensus covers it instead of a large local gain; it is only
    applied when the joint margin stays positive.
    """

    tol: float = DEFAULT_TOL
    pole_scale: float = None
    gamma_floor: float = 1.0
    safety_factor: float = 1.1
    Y0: np.ndarray = None
    seed: int = 0
    max_iter: int = 50
    sweep_max_exp: int = 20
    ddf_basis: str = "auto"
    decay: float = 0.0
    index_alpha: float = 1.0
    robust_tol: float = 1e-3


@dataclass
class ObserverDesign:
    """Per-agent gains ``H_i`` (n x p_i), weights ``W_i`` (n x n) and gain ``gamma``.

    ``path`` is ``"sdf"`` (consensus on ``E x``) or ``"ddf"`` (consensus on
    ``x``). ``Q_dia``/``P_dia`` is the differential/algebraic basis the
    realization must use. ``model``, when set, is the index-one
    ``IndexReduction`` of the plant that the observer runs on; ``None`` means
    the plant matrices themselves.
    """

    path: str
    H: list
    W: list
    gamma: float
    Q_dia: np.ndarray
    P_dia: np.ndarray
    provenance: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    seed: int = 0
    model: object = None

    @property
    def n_agents(self):
        return len(self.H)

    def observer_system(self, sys):
        """The descriptor model the observers are built on."""
        return sys if self.model is None else self.model.system

    def with_gamma(self, gamma):
        """Same gains and weights, different coupling gain (no re-synthesis)."""
        return ObserverDesign(self.path, self.H, self.W, float(gamma), self.Q_dia,
                              self.P_dia, dict(self.provenance), {}, self.seed, self.model)


# ---------------------------------------------------------------- placement

GAMMA_CEILING = 1e12


def default_poles(k, scale):
    return -float(scale) * np.arange(1, k + 1, dtype=float)


def auto_pole_scale(sys):
    try:
        eig = pencil_finite_eigenvalues(sys.E, sys.A)
    except Exception:
        eig = np.zeros(0)
    m = float(np.max(np.abs(eig))) if eig.size else 0.0
    return max(1.0, 2.0 * m)


def _spectrum_matches(M, target, rtol):
    got = np.sort_complex(np.linalg.eigvals(M))
    want = np.sort_complex(np.asarray(target, dtype=complex))
    if got.size != want.size:
        return False
    # greedy matching is enough for well separated targets
    used = np.zeros(got.size, bool)
    for w in want:
        d = np.abs(got - w)
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > rtol * max(1.0, abs(w)):
            return False
        used[k] = True
    return True


def _ackermann_row(A, c, poles):
    n = A.shape[0]
    O = np.vstack([c @ np.linalg.matrix_power(A, k) for k in range(n)])
    coeffs = np.real(np.poly(poles))
    pA = sum(coef * np.linalg.matrix_power(A, n - k) for k, coef in enumerate(coeffs))
    e = np.zeros(n)
    e[-1] = 1.0
    return pA @ np.linalg.solve(O, e)


def place_hurwitz(A_o, C_o, target_spectrum, tol=DEFAULT_TOL, seed=0):
    """Output injection ``H`` with ``eig(A_o - H C_o) = target_spectrum``.

    Uses the Yang-Tits method on the dual pair; falls back to Ackermann's
    formula on a random output combination.
    """
    A = np.atleast_2d(np.asarray(A_o, dtype=float))
    C = np.asarray(C_o, dtype=float).reshape(-1, A.shape[0]) if A.size else np.zeros((np.shape(C_o)[0], 0))
    n, p = A.shape[0], C.shape[0]
    poles = np.asarray(target_spectrum, dtype=complex).ravel()
    if n == 0:
        return np.zeros((0, p))
    if poles.size != n:
        raise SynthesisError(f"need {n} target poles, got {poles.size}")
    if np.any(poles.real >= 0):
        raise SynthesisError("target poles must lie in the open left half-plane")
    if not is_observable(C, A, tol):
        raise PreconditionError("pair (C_o, A_o) is not observable", condition="observable")
    if np.allclose(poles.imag, 0):
        poles = poles.real
    W, s, Vt = np.linalg.svd(C, full_matrices=False)
    r = int(np.sum(s > tol * s[0]))
    Wr, sr, Vr = W[:, :r], s[:r], Vt[:r].T
    candidates = []
    try:
        if np.unique(np.round(poles, 12)).size == poles.size or r > 1:
            K = place_poles(A.T, Vr, poles, method="YT", maxiter=100).gain_matrix
            candidates.append(K.T @ np.diag(1.0 / sr) @ Wr.T)
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.debug("place_poles failed: %s", exc)
    if np.all(np.isreal(poles)) and np.allclose(poles, -np.ones(n) * abs(poles[0])):
        # repeated pole equal to existing spectrum is handled by the YT branch
        pass
    rng = np.random.default_rng(seed)
    for _ in range(20):
        if candidates and _spectrum_matches(A - candidates[-1] @ C, poles, 1e-6):
            return candidates[-1]
        w = rng.standard_normal(p)
        c = w @ C
        if not is_observable(c[None, :], A, tol):
            continue
        try:
            h = _ackermann_row(A, c, poles)
        except np.linalg.LinAlgError:
            continue
        candidates.append(np.outer(h, w))
    if candidates and _spectrum_matches(A - candidates[-1] @ C, poles, 1e-6):
        return candidates[-1]
    raise SynthesisError("pole placement did not reach the target spectrum",
                         diagnostics={"target": poles})


def stabilizing_gain(A_o, C_o, alpha=0.0):
    """Riccati-based injection with ``eig(A_o - H C_o)`` left of ``-alpha``."""
    A = np.atleast_2d(np.asarray(A_o, dtype=float))
    n = A.shape[0]
    C = np.asarray(C_o, dtype=float)
    if n == 0:
        return np.zeros((0, C.shape[0] if C.ndim == 2 else 0))
    C = C.reshape(-1, n)
    sc = max(norm2(C), 1e-300)
    Cs = C / sc
    X = sla.solve_continuous_are(A.T + alpha * np.eye(n), Cs.T, np.eye(n), np.eye(C.shape[0]))
    return X @ Cs.T / sc


def _hurwitz_gain(A_o, C_o, poles, tol, seed, alpha):
    """Pole placement, or a Riccati gain when placement misses the targets.

    The Riccati fallback walks the requested decay rate down by decades until
    the closed loop is certified Hurwitz with at least half that rate.
    """
    try:
        return place_hurwitz(A_o, C_o, poles, tol, seed), "placed"
    except (SynthesisError, PreconditionError) as exc:
        err = exc
    margin = np.sqrt(tol) * max(1.0, norm2(A_o))
    rates = [alpha / 10.0 ** k for k in range(int(np.log10(max(alpha, 1.0))) + 1)] + [0.0]
    for a in rates:
        try:
            H = stabilizing_gain(A_o, C_o, a)
        except (np.linalg.LinAlgError, ValueError):
            continue
        ab = np.max(np.linalg.eigvals(A_o - H @ C_o).real) if H.size else -np.inf
        if ab < -max(0.5 * a, margin):
            log.info("Riccati gain used (decay rate %.3g, abscissa %.3g)", a, ab)
            return H, "riccati"
    raise err


def place_admissible(E_o, A_o, C_o, target_spectrum, tol=DEFAULT_TOL, seed=0, draws=200):
    """``H`` making ``(E_o, A_o - H C_o)`` admissible.

    Ladder: (a) eliminate the algebraic block in differential/algebraic
    coordinates (zero, then random fast gains keeping it invertible) and
    place the resulting slow pair; (b) random gains around the best
    candidate, each verified.
    """
    E = np.atleast_2d(np.asarray(E_o, dtype=float))
    A = np.atleast_2d(np.asarray(A_o, dtype=float))
    n = E.shape[0]
    C = np.asarray(C_o, dtype=float).reshape(-1, n)
    p = C.shape[0]
    if n == 0:
        return np.zeros((0, p))
    poles = np.asarray(target_spectrum, dtype=complex).ravel()
    sys = DescriptorSystem(E, A, C, (p,))
    ddf = to_ddf(sys, tol)
    l = ddf.l
    if poles.size != l:
        raise SynthesisError(f"need {l} target poles (rank of E_o), got {poles.size}")
    Qi = np.linalg.inv(ddf.Q_dia)
    C1, C2 = ddf.C_dia1, ddf.C_dia2
    rng = np.random.default_rng(seed)
    scale22 = max(norm2(ddf.A22), 1.0) / max(norm2(C2), 1e-300)
    diag = {"tried": 0}

    def attempt(H2):
        M = ddf.A22 - H2 @ C2
        if M.size and np.linalg.cond(M) > 1e8:
            return None
        Minv = np.linalg.inv(M) if M.size else np.zeros((0, 0))
        R21 = ddf.A21 - H2 @ C1
        A_bar = ddf.A11 - ddf.A12 @ Minv @ R21
        C_bar = C1 - C2 @ Minv @ R21
        # (A12 - H1 C2) M^-1 R21 adds -H1 (C2 M^-1 R21); folded into C_bar
        H1 = place_hurwitz(A_bar, C_bar, poles, tol, seed)
        H = Qi @ np.vstack([H1, H2])
        diag["tried"] += 1
        if is_admissible(E, A - H @ C, tol):
            return H
        return None

    candidates = []
    if ddf.A22.size == 0 or np.linalg.cond(ddf.A22) < 1e8:
        candidates.append(np.zeros((n - l, p)))
    for _ in range(draws):
        candidates.append(scale22 * rng.standard_normal((n - l, p)))
    last_exc = None
    for H2 in candidates:
        try:
            H = attempt(H2)
        except (SynthesisError, PreconditionError) as exc:
            last_exc = exc
            continue
        if H is not None:
            return H
    raise SynthesisError(
        f"no admissible gain found ({last_exc})" if last_exc else "no admissible gain found",
        diagnostics=diag,
    )


# ---------------------------------------------------------------- helpers

def _pad(M, rows):
    out = np.zeros((rows, M.shape[1]))
    out[: M.shape[0]] = M
    return out


def _sym(M):
    return M + M.T


def _pad_weight(W_o, dim):
    v = W_o.shape[0]
    W = np.eye(dim)
    W[:v, :v] = W_o
    return W


def _unobservable_form(d, r):
    """``r * [[0, A_r^T], [A_r, sym(A_u)]]`` in the decomposition's coordinates."""
    n, v = d.dim, d.v
    Y = np.zeros((n, n))
    Y[v:, :v] = d.A_r
    Y[:v, v:] = d.A_r.T
    Y[v:, v:] = _sym(d.A_u)
    return r * Y


def _rank_tol(tol):
    # Observability indices used for design ignore directions coupled to the
    # outputs at round-off or regularization level; gains for them would be huge.
    return max(tol, CLUSTER_TOL)


def _robust_agent_observability(ddf, g, opt):
    exact = agent_observability(ddf, _rank_tol(opt.tol))
    rtol = max(opt.robust_tol or 0.0, _rank_tol(opt.tol))
    if ddf.l == 0 or rtol <= _rank_tol(opt.tol) or g.N != len(ddf.output_partition):
        return exact
    trimmed = agent_observability(ddf, rtol)
    if all(a.v == b.v for a, b in zip(trimmed.slow, exact.slow)):
        return exact
    pw = perron_weights(g)
    inputs = joint_margin_inputs(trimmed, pw.r)
    try:
        joint_margin_mu(g, inputs["T_slow"], inputs["slow"], ddf.l, tol=opt.tol)
    except JointObservabilityError:
        return exact
    log.info("weakly observed slow directions left to consensus: %s -> %s",
             [d.v for d in exact.slow], [d.v for d in trimmed.slow])
    return AgentObservability(trimmed.kind, trimmed.slow, exact.fast)


def _accepts(rep, opt):
    return rep["admissible"] and rep["spectral_abscissa"] < -opt.decay


def _graph(graph):
    return graph if isinstance(graph, CommGraph) else CommGraph(graph)


# ---------------------------------------------------------------- verification

def error_pencil(sys, graph, design):
    """Global error dynamics ``(I kron E) e' = A_err e``."""
    g = _graph(graph)
    sys = design.observer_system(sys)
    n, N = sys.n, g.N
    L = g.laplacian
    blocks = [sys.A - design.H[i] @ sys.C_agent(i) for i in range(N)]
    try:
        Winv = sla.block_diag(*[np.linalg.inv(W) for W in design.W])
    except np.linalg.LinAlgError as exc:
        raise SingularEquationError("an agent weight is singular") from exc
    K = sys.E if design.path == "sdf" else np.eye(n)
    A_err = sla.block_diag(*blocks) - design.gamma * Winv @ np.kron(L, K)
    return np.kron(np.eye(N), sys.E), A_err


def verify_design(sys, graph, design, tol=DEFAULT_TOL):
    """Spectral certificate of the networked error dynamics.

    The pencil is brought to ``diag(I, 0)`` per agent with the observer
    model's differential/algebraic basis; impulse-freeness is invertibility
    of the stacked algebraic block with condition number at most
    ``INVERSE_COND_LIMIT`` (the limit the realization inverts at), the finite
    spectrum is that of the Schur complement. ``admissible`` additionally
    needs every finite eigenvalue left of ``-tol``.
    """
    g = _graph(graph)
    N = g.N
    E_err, A_err = error_pencil(sys, g, design)
    sys = design.observer_system(sys)
    ddf = to_ddf(sys, tol)
    n, l = sys.n, ddf.l
    Qg = np.kron(np.eye(N), ddf.Q_dia)
    Pg = np.kron(np.eye(N), ddf.P_dia)
    perm = np.concatenate(
        [np.arange(i * n, i * n + l) for i in range(N)]
        + [np.arange(i * n + l, (i + 1) * n) for i in range(N)]
    )
    At = (Qg @ A_err @ Pg)[np.ix_(perm, perm)]
    k = N * l
    A11, A12, A21, A22 = At[:k, :k], At[:k, k:], At[k:, :k], At[k:, k:]
    report = {"regular": None, "impulse_free": None, "spectral_abscissa": None,
              "admissible": False, "cond_algebraic": None, "gamma": float(design.gamma)}
    if A22.size:
        s = np.linalg.svd(A22, compute_uv=False)
        report["cond_algebraic"] = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
        impulse_free = bool(s[-1] > s[0] / INVERSE_COND_LIMIT)
    else:
        report["cond_algebraic"] = 1.0
        impulse_free = True
    report["impulse_free"] = impulse_free
    if impulse_free:
        report["regular"] = True
        S = A11 - A12 @ np.linalg.solve(A22, A21) if A22.size else A11
        eig = np.linalg.eigvals(S) if S.size else np.zeros(0)
    else:
        report["regular"] = check_regular(DescriptorSystem(E_err, A_err, np.zeros((0, N * n)), ())) is not None
        eig = np.zeros(0)
        if report["regular"]:
            try:
                eig = pencil_finite_eigenvalues(E_err, A_err)
            except Exception:
                eig = np.zeros(0)
    abscissa = float(np.max(eig.real)) if eig.size else -np.inf
    report["spectral_abscissa"] = abscissa
    report["admissible"] = bool(report["regular"] and impulse_free and abscissa < -tol)
    return report


# ---------------------------------------------------------------- slow/fast path

def _check_fast_annihilated(d2, i):
    if d2.v == d2.dim:
        return
    leak = max(norm2(d2.A_r), norm2(d2.A_u))
    if leak > CLUSTER_TOL:
        raise PreconditionError(
            f"agent {i}: fast subsystem not fully observable and N2 acts on its "
            f"unobservable part (v_i2={d2.v} < n_2={d2.dim}); condition v_{{i2}}=n_2 fails",
            condition="v_i2=n_2",
        )


def design_sdf(sys, sdf=None, agent_obsv=None, graph=None, options=None):
    """Gains, weights and coupling gain for consensus on ``E x``.

    Per agent: observable split of both pairs, admissible placement on the
    observable descriptor subsystem, descriptor Lyapunov weight (right side
    ``-E^T (gamma Y0) E``) padded with identity on unobservable coordinates.
    ``gamma`` starts at ``safety * sigma_max(Y_u) / mu`` and is doubled until
    the networked error pencil is certified admissible.
    """
    opt = options or SynthesisOptions()
    g = _graph(graph)
    tol = opt.tol
    if sdf is None:
        sdf = to_sdf(sys, tol)
    if agent_obsv is None:
        agent_obsv = agent_observability(sdf, tol)
    N = g.N
    if N != sys.n_agents:
        raise PreconditionError(f"graph has {N} agents, system has {sys.n_agents}",
                                condition="graph-size")
    pw = perron_weights(g)
    n1, n2, n = sdf.n1, sdf.n2, sys.n
    scale = opt.pole_scale or auto_pole_scale(sys)
    Qi = np.linalg.inv(sdf.Q_star)

    agents = []
    for i in range(N):
        d1, d2 = agent_obsv.slow[i], agent_obsv.fast[i]
        _check_fast_annihilated(d2, i)
        v1, v2 = d1.v, d2.v
        E_o = sla.block_diag(np.eye(v1), d2.A_o)
        A_o = sla.block_diag(d1.A_o, np.eye(v2))
        C_o = np.hstack([d1.C_o, d2.C_o])
        ddf_o = to_ddf(DescriptorSystem(E_o, A_o, C_o, (C_o.shape[0],)), tol)
        H_o = place_admissible(E_o, A_o, C_o, default_poles(ddf_o.l, scale), tol, opt.seed + i)
        H1 = d1.T @ _pad(H_o[:v1], n1)
        H2 = d2.T @ _pad(H_o[v1:], n2)
        H = Qi @ np.vstack([H1, H2])
        Y0 = np.eye(v1 + v2) if opt.Y0 is None else np.asarray(opt.Y0, dtype=float)
        Acl = A_o - H_o @ C_o
        W_o1 = solve_lyapunov_descriptor(E_o, Acl, Y0, tol)
        agents.append(dict(d1=d1, d2=d2, H=H, H_o=H_o, E_o=E_o, Acl_o=Acl, W_o1=W_o1, Y0=Y0))

    # bound ingredients
    Yu = sla.block_diag(*[
        sla.block_diag(_unobservable_form(a["d1"], pw.r[i]), np.zeros((n2, n2)))
        for i, a in enumerate(agents)
    ])
    sigma_u = float(norm2(Yu)) if Yu.size else 0.0
    inputs = joint_margin_inputs(agent_obsv, pw.r)
    T = inputs["T_joint"]
    Ebar = sla.block_diag(np.eye(n1), sdf.N2)
    E_tilde = sla.block_diag(*[T_i.T @ Ebar @ T_i for T_i in
                               [sla.block_diag(a["d1"].T, a["d2"].T) for a in agents]])
    V = orth(E_tilde, tol=CLUSTER_TOL, scale=1.0)
    mu, spectrum = joint_margin_mu(g, T, inputs["joint"], n, subspace=V, tol=tol)

    def build(gamma):
        W_list, W_tilde = [], []
        for a in agents:
            d1, d2 = a["d1"], a["d2"]
            v1, v2 = d1.v, d2.v
            Wo = gamma * a["W_o1"]
            Wt = np.eye(n)
            so = np.r_[np.arange(v1), n1 + np.arange(v2)]
            Wt[np.ix_(so, so)] = Wo
            Ts = sla.block_diag(d1.T, d2.T)
            W_T = Ts @ Wt @ Ts.T
            W_list.append(Qi @ W_T @ sdf.Q_star)
            W_tilde.append(Wt)
        return W_list, W_tilde

    bound = sigma_u / mu
    gamma0 = max(opt.safety_factor * bound, opt.gamma_floor) if bound > 0 else opt.gamma_floor
    ddf = to_ddf(sys, tol)
    tried = []
    for k in range(opt.sweep_max_exp + 1):
        gamma = gamma0 * 2.0**k
        W_list, W_tilde = build(gamma)
        design = ObserverDesign("sdf", [a["H"] for a in agents], W_list, gamma,
                                ddf.Q_dia, ddf.P_dia, seed=opt.seed)
        try:
            rep = verify_design(sys, g, design, tol)
        except SingularEquationError as exc:
            tried.append((gamma, str(exc)))
            continue
        tried.append((gamma, rep["spectral_abscissa"], rep["impulse_free"]))
        if _accepts(rep, opt):
            break
    else:
        raise SynthesisError("no coupling gain certified admissible", diagnostics={"tried": tried})
    design.report = rep
    design.provenance = dict(
        mu=mu,
        mu_spectrum=spectrum,
        sigma_Yu=sigma_u,
        gamma_bound=bound,
        bound_satisfied=bool(gamma > bound),
        gamma_trace=tried,
        r=pw.r,
        pole_scale=scale,
        n1=n1,
        n2=n2,
        v1=[a["d1"].v for a in agents],
        v2=[a["d2"].v for a in agents],
        H_o=[a["H_o"] for a in agents],
        lyapunov=[
            dict(E=a["E_o"], A=a["Acl_o"], Y=gamma * a["Y0"], W=gamma * a["W_o1"])
            for a in agents
        ],
        W_tilde=W_tilde,
    )
    return design


# ---------------------------------------------------------------- differential/algebraic path

def _blind_chain(Vr, C2, thr):
    """Nilpotent links sending output-blind directions of ``span(Vr)`` towards
    measured ones (blind direction k is tied to measured direction k mod r,
    later blind directions to earlier blind ones). A direction counts as
    measured when its output singular value exceeds ``thr``."""
    L = np.zeros((Vr.shape[0], Vr.shape[0]))
    Cr = C2 @ Vr
    if Cr.size == 0:
        return L
    _, sc, Wt = np.linalg.svd(Cr)
    rk = int(np.sum(sc > thr)) if sc.size else 0
    if rk == 0:
        return L
    measured, blind = Vr @ Wt[:rk].T, Vr @ Wt[rk:].T
    for k in range(blind.shape[1]):
        target = measured[:, k] if k < rk else blind[:, k - rk]
        L += np.outer(target, blind[:, k])
    return L


def decoupled_ddf(sys, tol=DEFAULT_TOL):
    """Differential/algebraic basis with the two blocks decoupled as far as
    the algebraic block allows.

    Starting from the SVD basis: columns ``P1 <- P1 - P2 pinv(A22) A21`` and
    rows ``Q1 <- Q1 - A12 pinv(A22) Q2`` remove ``A21`` and ``A12`` except on
    the numerical null space of ``A22``; the algebraic rows are then
    left-multiplied by ``G`` with ``G A22 = -I + Z`` off that null space, ``Z``
    a nilpotent chain linking output-blind directions to measured ones.
    ``Q E P = diag(I, 0)`` is preserved throughout. Singular values of
    ``A22`` below ``tol`` relative to the largest count as null.
    """
    base = to_ddf(sys, tol)
    m = base.A22.shape[0]
    if m == 0 or base.l == 0:
        return base
    l = base.l
    cut = tol
    A22p = np.linalg.pinv(base.A22, rcond=cut)
    P = base.P_dia.copy()
    Q = base.Q_dia.copy()
    P[:, :l] = P[:, :l] - P[:, l:] @ (A22p @ base.A21)
    Q[:l] = Q[:l] - base.A12 @ A22p @ Q[l:]
    A22 = base.A22
    U, s, Vt = np.linalg.svd(A22)
    r = int(np.sum(s > cut * max(s[0], 1e-300)))
    Vr, Vn, Un = Vt[:r].T, Vt[r:].T, U[:, r:]
    CP = sys.C @ P
    # same threshold the design applies to the fast pair
    thr = CLUSTER_TOL * max(1.0, norm2(CP))
    F = -Vr @ Vr.T + _blind_chain(Vr, CP[:, l:], thr)
    G = F @ A22p + Vn @ Un.T
    Q[l:] = G @ Q[l:]
    QAP = Q @ sys.A @ P
    CP = sys.C @ P
    from .descriptor import DdfForm

    return DdfForm(Q, P, l, QAP[:l, :l], QAP[:l, l:], QAP[l:, :l], QAP[l:, l:],
                   CP[:, :l], CP[:, l:], sys.output_partition)


def ddf_joint_observable(ddf, tol=DEFAULT_TOL):
    s1, s2 = form_scales(ddf)
    slow = ddf.l == 0 or is_observable(ddf.C_dia1, ddf.A11, tol, s1)
    fast = ddf.A22.shape[0] == 0 or is_observable(ddf.C_dia2, ddf.A22, tol, s2)
    return slow, fast


def _dissipative(M, tol=DEFAULT_TOL):
    """``M + M^T`` negative definite."""
    if M.size == 0:
        return True
    return bool(np.max(np.linalg.eigvalsh(M + M.T)) < -tol * max(1.0, norm2(M)))


def select_ddf(sys, basis="auto", tol=DEFAULT_TOL):
    """Pick a differential/algebraic basis satisfying the design precondition.

    The slow pair must be jointly observable. The fast pair must be jointly
    observable, or ``A22`` dissipative, in which case the algebraic error
    block is Hurwitz for every coupling gain without any observation.
    """
    options = {"svd": [to_ddf], "decoupled": [decoupled_ddf],
               "auto": [decoupled_ddf, to_ddf]}[basis]
    verdicts = []
    for make in options:
        ddf = make(sys, tol)
        slow, fast = ddf_joint_observable(ddf, _rank_tol(tol))
        fast = fast or _dissipative(ddf.A22, tol)
        verdicts.append((make.__name__, slow, fast))
        if slow and fast:
            return ddf, make.__name__
    raise PreconditionError(
        "differential/algebraic pairs are not jointly observable in any basis tried: "
        + ", ".join(f"{nm}(slow={s}, fast={f})" for nm, s, f in verdicts),
        condition="ddf-joint-observability",
    )


def stabilize_unstable_part(A_o, C_o, scale=1.0, tol=DEFAULT_TOL, seed=0):
    """Output injection moving only the modes of ``A_o`` with real part above
    ``-margin`` to ``-scale * (1, 2, ...)``; zero if ``A_o`` is already Hurwitz.

    An ordered real Schur form puts those modes first; injecting only into
    them keeps the closed loop block triangular.
    """
    A = np.atleast_2d(np.asarray(A_o, dtype=float))
    n = A.shape[0]
    C = np.asarray(C_o, dtype=float)
    if n == 0:
        return np.zeros((0, C.shape[0] if C.ndim == 2 else 0))
    C = C.reshape(-1, n)
    margin = np.sqrt(tol) * max(1.0, norm2(A))
    T, Z, k = sla.schur(A, output="real", sort=lambda re, im: re >= -margin)
    if k == 0:
        return np.zeros((n, C.shape[0]))
    Hu, _ = _hurwitz_gain(T[:k, :k], C @ Z[:, :k], default_poles(k, scale), tol, seed, scale)
    return Z[:, :k] @ Hu


def _ddf_lambdas(gamma, ctx):
    """``lambda_1`` (gamma-free) and ``lambda_2(gamma)``."""
    N, l, m = ctx["N"], ctx["l"], ctx["m"]
    r = ctx["r"]
    T1, T2 = ctx["T1"], ctx["T2"]
    Wt1 = sla.block_diag(*[_pad_weight(gamma * a["W1"], l) for a in ctx["agents"]])
    Wt2 = sla.block_diag(*[_pad_weight(gamma * a["W2"], m) for a in ctx["agents"]])
    Lk2 = np.kron(ctx["L"], np.eye(m))
    Lam22 = T2.T @ ctx["Lam22"] @ T2 - gamma * np.linalg.solve(Wt2, T2.T @ Lk2 @ T2)
    Lam12 = T1.T @ ctx["Lam12"] @ T2
    Lam21 = T2.T @ ctx["Lam21"] @ T1
    X11 = np.kron(np.diag(r), np.eye(l)) @ Wt1
    if m:
        try:
            S = X11 @ Lam12 @ np.linalg.solve(Lam22, Lam21)
        except np.linalg.LinAlgError:
            return ctx["lambda1"], np.inf
    else:
        S = np.zeros((N * l, N * l))
    F = ctx["Yu1"] - S - S.T
    if not np.all(np.isfinite(F)):
        return ctx["lambda1"], np.inf
    lam2 = float(np.max(np.linalg.eigvalsh(0.5 * (F + F.T)))) if F.size else 0.0
    return ctx["lambda1"], lam2


def design_ddf(sys, ddf=None, agent_obsv=None, graph=None, options=None):
    """Gains, weights and coupling gain for consensus on ``x``.

    Per agent: observable split of ``(C_i1, A11)`` and ``(C_i2, A22)``,
    pole placement on the observable slow part, stabilization of the
    non-Hurwitz modes of the observable algebraic part, Lyapunov weights with right
    side ``-2 gamma I`` padded with identity on unobservable coordinates.
    ``gamma`` solves ``gamma = safety * max(lambda_1 / mu_2, lambda_2(gamma) / mu_1)``
    by damped fixed-point iteration, with ``lambda_1`` the largest eigenvalue
    of the unobservable algebraic form (a non-positive value needs no gain);
    if that fails a doubling sweep with the spectral certificate as acceptor
    is used.

    An index-two plant is first replaced by its ``reduce_index`` model; the
    design then records that model and the observers run on it.
    """
    opt = options or SynthesisOptions()
    g = _graph(graph)
    tol = opt.tol
    model = None
    if ddf is None:
        red = reduce_index(sys, opt.index_alpha, tol)
        if red.k:
            model, sys = red, red.system
        ddf, basis_name = select_ddf(sys, opt.ddf_basis, tol)
    else:
        basis_name = "given"
        slow, fast = ddf_joint_observable(ddf, _rank_tol(tol))
        if not (slow and (fast or _dissipative(ddf.A22, tol))):
            raise PreconditionError("differential/algebraic pairs are not jointly observable",
                                    condition="ddf-joint-observability")
    if agent_obsv is None:
        agent_obsv = _robust_agent_observability(ddf, g, opt)
    N = g.N
    if N != sys.n_agents:
        raise PreconditionError(f"graph has {N} agents, system has {sys.n_agents}",
                                condition="graph-size")
    pw = perron_weights(g)
    n, l = sys.n, ddf.l
    m = n - l
    scale = opt.pole_scale or auto_pole_scale(sys)
    # algebraic-block poles carry no dynamics; keep them at the block's own scale
    scale2 = max(1.0, norm2(ddf.A22)) if m else 1.0
    Qi = np.linalg.inv(ddf.Q_dia)

    agents = []
    for i in range(N):
        d1, d2 = agent_obsv.slow[i], agent_obsv.fast[i]
        H1o, how1 = _hurwitz_gain(d1.A_o, d1.C_o, default_poles(d1.v, scale), tol, opt.seed + i, scale)
        H2o = stabilize_unstable_part(d2.A_o, d2.C_o, scale2, tol, opt.seed + i)
        how2 = "partial" if np.any(H2o) else "none"
        Acl1 = d1.A_o - H1o @ d1.C_o
        Acl2 = d2.A_o - H2o @ d2.C_o
        W1 = solve_lyapunov_standard(Acl1, 2.0 * np.eye(d1.v)) if d1.v else np.zeros((0, 0))
        W2 = solve_lyapunov_standard(Acl2, 2.0 * np.eye(d2.v)) if d2.v else np.zeros((0, 0))
        H1 = d1.T @ _pad(H1o, l)
        H2 = d2.T @ _pad(H2o, m)
        agents.append(dict(d1=d1, d2=d2, H1o=H1o, H2o=H2o, Acl1=Acl1, Acl2=Acl2, how=(how1, how2),
                           W1=W1, W2=W2, H1=H1, H2=H2, H=Qi @ np.vstack([H1, H2])))

    inputs = joint_margin_inputs(agent_obsv, pw.r)
    mu1, spec1 = joint_margin_mu(g, inputs["T_slow"], inputs["slow"], l, tol=tol) if l else (np.inf, None)
    try:
        mu2, spec2 = joint_margin_mu(g, inputs["T_fast"], inputs["fast"], m, tol=tol) if m else (np.inf, None)
    except JointObservabilityError as exc:
        # admissible only when the unobservable algebraic part is dissipative (lambda_1 < 0)
        mu2, spec2 = 0.0, exc.spectrum if hasattr(exc, "spectrum") else None
    mu = min(mu1, mu2)

    Cs = [ddf.agent_blocks(i) for i in range(N)]
    ctx = dict(
        N=N, l=l, m=m, r=pw.r, L=g.laplacian, agents=agents,
        T1=inputs["T_slow"], T2=inputs["T_fast"],
        Lam22=sla.block_diag(*[ddf.A22 - a["H2"] @ Cs[i][1] for i, a in enumerate(agents)]),
        Lam12=sla.block_diag(*[ddf.A12 - a["H1"] @ Cs[i][1] for i, a in enumerate(agents)]),
        Lam21=sla.block_diag(*[ddf.A21 - a["H2"] @ Cs[i][0] for i, a in enumerate(agents)]),
        Yu1=sla.block_diag(*[_unobservable_form(a["d1"], pw.r[i]) for i, a in enumerate(agents)]),
    )
    Lu22 = sla.block_diag(*[_unobservable_form(a["d2"], pw.r[i]) for i, a in enumerate(agents)])
    ctx["lambda1"] = float(np.max(np.linalg.eigvalsh(Lu22))) if Lu22.size else 0.0
    if ctx["lambda1"] >= 0 and mu2 <= 0:
        raise PreconditionError("algebraic pairs are not jointly observable and the unobservable "
                                "algebraic part is not dissipative",
                                condition="ddf-joint-observability")

    def bound(lam1, lam2):
        b1 = lam1 / mu2 if lam1 > 0 else 0.0
        b2 = lam2 / mu1 if lam2 > 0 else 0.0
        return max(b1, b2)

    def build(gamma):
        W_list = []
        for a in agents:
            WT1 = a["d1"].T @ _pad_weight(gamma * a["W1"], l) @ a["d1"].T.T
            WT2 = a["d2"].T @ _pad_weight(gamma * a["W2"], m) @ a["d2"].T.T
            W_list.append(ddf.P_dia @ sla.block_diag(WT1, WT2) @ ddf.Q_dia)
        return ObserverDesign("ddf", [a["H"] for a in agents], W_list, float(gamma),
                              ddf.Q_dia, ddf.P_dia, seed=opt.seed, model=model)

    trace = []
    gamma = opt.gamma_floor
    accepted = None
    for _ in range(opt.max_iter):
        lam1, lam2 = _ddf_lambdas(gamma, ctx)
        target = max(opt.safety_factor * bound(lam1, lam2), opt.gamma_floor)
        trace.append((gamma, lam1, lam2, target))
        if not np.isfinite(target) or target > GAMMA_CEILING:
            break
        if abs(target - gamma) <= 0.01 * gamma:
            cand = max(gamma, target)
            design = build(cand)
            rep = verify_design(sys, g, design, tol)
            if _accepts(rep, opt):
                accepted = (design, rep, "fixed-point")
                break
            gamma = 2.0 * cand
            continue
        gamma = 0.5 * (gamma + target) if target < gamma else target
    if accepted is None:
        for k in range(opt.sweep_max_exp + 1):
            cand = opt.gamma_floor * 2.0**k
            design = build(cand)
            rep = verify_design(sys, g, design, tol)
            trace.append((cand, None, None, None))
            if _accepts(rep, opt):
                accepted = (design, rep, "sweep")
                break
    if accepted is None:
        raise SynthesisError("coupling gain iteration did not produce a certified design",
                             diagnostics={"trace": trace})
    design, rep, how = accepted
    lam1, lam2 = _ddf_lambdas(design.gamma, ctx)
    design.report = rep
    design.provenance = dict(
        basis=basis_name,
        hidden_constraints=model.k if model else 0,
        mu=mu,
        mu_slow=mu1,
        mu_fast=mu2,
        lambda1=lam1,
        lambda2=lam2,
        gamma_bound=bound(lam1, lam2),
        bound_satisfied=bool(design.gamma > bound(lam1, lam2)),
        gamma_method=how,
        gamma_trace=trace,
        r=pw.r,
        pole_scale=scale,
        l=l,
        v1=[a["d1"].v for a in agents],
        v2=[a["d2"].v for a in agents],
        H1o=[a["H1o"] for a in agents],
        placement=[a["how"] for a in agents],
        H2o=[a["H2o"] for a in agents],
        lyapunov=[
            dict(A1=a["Acl1"], W1=design.gamma * a["W1"], A2=a["Acl2"], W2=design.gamma * a["W2"],
                 rhs=2.0 * design.gamma)
            for a in agents
        ],
    )
    return design


def synthesize(sys, graph, path="auto", options=None):
    """Run one synthesis path; ``auto`` prefers consensus on ``x`` when it applies."""
    opt = options or SynthesisOptions()
    if path == "sdf":
        return design_sdf(sys, graph=graph, options=opt)
    if path == "ddf":
        return design_ddf(sys, graph=graph, options=opt)
    if path != "auto":
        raise ValueError(f"unknown path {path!r}")
    try:
        return design_ddf(sys, graph=graph, options=opt)
    except (PreconditionError, SynthesisError, NoStabilizingSolutionError) as exc:
        log.info("consensus on x not applicable (%s); trying consensus on E x", exc)
        return design_sdf(sys, graph=graph, options=opt)
