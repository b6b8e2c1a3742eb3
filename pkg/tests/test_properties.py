import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from descobs.config import config_to_dict, dump_yaml, parse_config
from descobs.descriptor import DescriptorSystem, to_ddf, to_sdf
from descobs.linalg import norm2, ranked_svd, solve_sylvester
from descobs.network import CommGraph, perron_weights
from descobs.simulator import adaptive_gain_step
from randsys import random_regular, random_strong_digraph

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 12), st.integers(1, 12))
def test_svd_reconstruction(seed, m, n):
    M = np.random.default_rng(seed).standard_normal((m, n))
    f = ranked_svd(M)
    k = f.singular_values.size
    res = norm2(M - f.left[:, :k] @ np.diag(f.singular_values) @ f.right[:, :k].T)
    assert res <= 10 * np.finfo(float).eps * norm2(M) * max(m, n)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_decompositions_round_trip(seed):
    rng = np.random.default_rng(seed)
    sys, lam = random_regular(rng, nilpotent=bool(rng.integers(2)))
    f = to_sdf(sys)
    assert f.n1 == lam.size
    n1, n2 = f.n1, f.n2
    Et = np.zeros((sys.n, sys.n))
    Et[:n1, :n1] = np.eye(n1)
    Et[n1:, n1:] = f.N2
    scale = norm2(f.Q_star) * norm2(f.P_star)
    assert norm2(f.Q_star @ sys.E @ f.P_star - Et) <= 1e-8 * norm2(sys.E) * scale
    d = to_ddf(sys)
    assert d.l == np.linalg.matrix_rank(sys.E)
    assert norm2(d.Q_dia @ sys.A @ d.P_dia - d.A_blocks()) <= 1e-8 * norm2(sys.A)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_perron_properties(seed):
    g = CommGraph(random_strong_digraph(np.random.default_rng(seed)))
    pw = perron_weights(g)
    assert np.all(pw.r > 0)
    assert np.isclose(pw.r.sum(), g.N)
    assert np.allclose(pw.lhat @ np.ones(g.N), 0, atol=1e-10)
    assert np.min(np.linalg.eigvalsh(pw.lhat)) >= -1e-10


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_sylvester_residual(seed, a, b):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((a, a)) - 5 * np.eye(a)
    B = rng.standard_normal((b, b)) - 5 * np.eye(b)
    Q = rng.standard_normal((a, b))
    X = solve_sylvester(A, B, Q)
    assert norm2(A @ X + X @ B - Q) <= 1e-8 * (norm2(A) + norm2(B)) * norm2(X) + 1e-12


@given(st.floats(1e-3, 1e6), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=5),
       st.floats(1e-6, 1.0))
def test_adaptive_gain_nondecreasing(omega, d, dt):
    assert adaptive_gain_step(omega, np.array(d), dt) >= omega


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 5))
def test_config_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    data = {"name": "r", "system": {"E": rng.standard_normal((n, n)).tolist(),
                                    "A": rng.standard_normal((n, n)).tolist(),
                                    "C": rng.standard_normal((2, n)).tolist(),
                                    "partition": [1, 1]},
            "graph": {"adjacency": [[0, 1], [1, 0]]},
            "synthesis": {"tol": 1e-9, "seed": int(seed % 100)},
            "simulation": {"t_end": 1.0, "dt": 0.01}}
    cfg = parse_config(data)
    t1 = dump_yaml(config_to_dict(cfg))
    import yaml

    cfg2 = parse_config(yaml.safe_load(t1))
    assert dump_yaml(config_to_dict(cfg2)) == t1
    assert cfg2.config_hash() == cfg.config_hash()
    assert np.array_equal(cfg2.system.A, cfg.system.A)
