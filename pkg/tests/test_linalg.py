import numpy as np
import pytest

from descobs.errors import InvalidInputError, NoStabilizingSolutionError, SingularEquationError
from descobs.linalg import (
    is_nilpotent, norm2, pencil_finite_eigenvalues, ranked_svd, solve_lyapunov_descriptor,
    solve_lyapunov_standard, solve_sylvester, split_zero_cluster,
)


def test_ranked_svd_identity():
    f = ranked_svd(np.eye(3), 1e-10)
    assert f.numerical_rank == 3
    assert np.allclose(f.singular_values, 1.0)


def test_ranked_svd_zero_and_tiny():
    assert ranked_svd(np.zeros((2, 2))).numerical_rank == 0
    assert ranked_svd(np.diag([1.0, 1e-14]), 1e-10).numerical_rank == 1


def test_ranked_svd_reconstruction():
    rng = np.random.default_rng(3)
    for m, n in [(5, 3), (3, 7), (50, 50)]:
        M = rng.standard_normal((m, n))
        f = ranked_svd(M)
        S = np.zeros((m, n))
        S[: f.singular_values.size, : f.singular_values.size] = np.diag(f.singular_values)
        res = norm2(M - f.left @ S @ f.right.T)
        assert res <= 10 * np.finfo(float).eps * norm2(M) * max(m, n)


def test_ranked_svd_rejects_bad_tol():
    with pytest.raises(InvalidInputError):
        ranked_svd(np.eye(2), 0.0)


def test_split_diagonal_cases():
    s = split_zero_cluster(np.diag([1.0, 0.0]))
    assert s.n_invertible == 1 and s.n_nilpotent == 1
    assert np.allclose(s.block_invertible, [[1.0]])
    s = split_zero_cluster(np.diag([2.0, 3.0]))
    assert s.n_invertible == 2 and s.n_nilpotent == 0


def test_split_jordan_block():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    s = split_zero_cluster(M)
    assert s.n_invertible == 0 and s.n_nilpotent == 2
    assert is_nilpotent(s.block_nilpotent) == (True, 2)


def test_split_long_chain_under_similarity():
    rng = np.random.default_rng(5)
    J = np.diag(np.ones(4), 1)
    J[:2, :2] = 0.0
    D = np.diag([0.0, 0.0, 0.0, 0.0, 0.0])
    D[:2, :2] = [[-2.0, 1.0], [0.0, 3.0]]
    Nb = np.diag(np.ones(2), 1)[:3, :3]
    M0 = np.zeros((5, 5))
    M0[:2, :2] = D[:2, :2]
    M0[2:, 2:] = Nb
    S = rng.standard_normal((5, 5)) + 3 * np.eye(5)
    M = S @ M0 @ np.linalg.inv(S)
    s = split_zero_cluster(M, 1e-6)
    assert s.n_invertible == 2 and s.n_nilpotent == 3
    rebuilt = s.inverse @ M @ s.transform
    assert norm2(rebuilt[:2, 2:]) < 1e-10 and norm2(rebuilt[2:, :2]) < 1e-10
    assert np.allclose(np.sort(np.linalg.eigvals(s.block_invertible).real), [-2.0, 3.0])


def test_is_nilpotent_examples():
    assert is_nilpotent(np.zeros((2, 2))) == (True, 1)
    assert is_nilpotent(np.array([[0.0, 1.0], [0.0, 0.0]])) == (True, 2)
    assert is_nilpotent(np.eye(2)) == (False, None)


def test_sylvester_examples():
    assert np.allclose(solve_sylvester([[-1.0]], [[-1.0]], [[2.0]]), [[-1.0]])
    X = solve_sylvester(-2 * np.eye(2), np.zeros((2, 2)), np.eye(2))
    assert np.allclose(X, -0.5 * np.eye(2))
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    A = A - (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(3)
    X = solve_sylvester(A, A.T, -np.eye(3))
    assert np.allclose(X, X.T, atol=1e-10)
    res = norm2(A @ X + X @ A.T + np.eye(3))
    assert res <= 1e-8 * 2 * norm2(A) * norm2(X) + 1e-12


def test_sylvester_overlapping_spectra():
    with pytest.raises(SingularEquationError):
        solve_sylvester([[1.0]], [[-1.0]], [[1.0]])


def test_lyapunov_standard_examples():
    assert np.allclose(solve_lyapunov_standard([[-1.0]], [[2.0]]), [[1.0]])
    assert np.allclose(solve_lyapunov_standard(-np.eye(2), 2 * np.eye(2)), np.eye(2))
    A = np.array([[-1.0, 1.0], [0.0, -2.0]])
    W = solve_lyapunov_standard(A, 2 * np.eye(2))
    assert np.allclose(W @ A + A.T @ W, -2 * np.eye(2), atol=1e-12)
    assert np.min(np.linalg.eigvalsh(W)) > 0


def test_lyapunov_standard_rejects_unstable():
    with pytest.raises(NoStabilizingSolutionError):
        solve_lyapunov_standard([[1.0]], [[1.0]])


def test_lyapunov_descriptor_examples():
    assert np.allclose(solve_lyapunov_descriptor([[1.0]], [[-1.0]], [[2.0]]), [[1.0]])
    assert np.allclose(solve_lyapunov_descriptor(np.eye(2), -np.eye(2), 2 * np.eye(2)), np.eye(2))
    E, A, Y = np.diag([1.0, 0.0]), np.diag([-1.0, 1.0]), 2 * np.eye(2)
    X = solve_lyapunov_descriptor(E, A, Y)
    assert norm2(E.T @ X @ A + A.T @ X @ E + E.T @ Y @ E) < 1e-10
    assert np.min(np.linalg.eigvalsh(X)) > 0


def test_lyapunov_descriptor_rejects_impulsive():
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NoStabilizingSolutionError):
        solve_lyapunov_descriptor(E, np.eye(2), np.eye(2))


def test_pencil_eigenvalues():
    ev = pencil_finite_eigenvalues(np.eye(2), np.diag([-1.0, -2.0]))
    assert np.allclose(np.sort(ev.real), [-2.0, -1.0])
    ev = pencil_finite_eigenvalues(np.diag([1.0, 0.0]), np.diag([-3.0, 1.0]))
    assert np.allclose(ev, [-3.0])
    assert pencil_finite_eigenvalues(np.zeros((2, 2)), np.eye(2)).size == 0


def test_lyapunov_descriptor_free_block_well_scaled():
    # large entries in A shrink the algebraic rows of the Weierstrass transform
    E = np.diag([1.0, 0.0])
    A = np.array([[-1.0, 0.0], [500.0, 1000.0]])
    X = solve_lyapunov_descriptor(E, A, np.eye(2))
    assert norm2(E.T @ X @ A + A.T @ X @ E + E.T @ E) < 1e-10 * norm2(X) * norm2(A)
    ev = np.linalg.eigvalsh(X)
    assert ev[0] > 1e-3 * ev[-1]
