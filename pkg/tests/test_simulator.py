import numpy as np
import pytest

from descobs.descriptor import DescriptorSystem
from descobs.errors import InvalidInputError
from descobs.realization import realize
from descobs.scenarios import ring_adjacency
from descobs.simulator import (
    SimConfig, adaptive_gain_step, count_jumps, error_metrics, rk4_matrix, simulate,
    simulate_observers, simulate_plant,
)
from descobs.synthesis import synthesize
from randsys import jointly_observable_normal


def test_sim_config_validation():
    with pytest.raises(InvalidInputError):
        SimConfig(t_end=1.0, dt=0.0)
    with pytest.raises(InvalidInputError):
        SimConfig(t_end=1e-4, dt=1e-3)
    with pytest.raises(InvalidInputError):
        SimConfig(t_end=1.0, dt=1e-3, gain_mode="fast")
    assert SimConfig(t_end=1.0, dt=1e-3).steps == 1000


def test_rk4_scalar_decay():
    sys = DescriptorSystem([[1.0]], [[-1.0]], np.zeros((0, 1)), ())
    tr = simulate_plant(sys, [1.0], SimConfig(t_end=1.0, dt=1e-3, stepping="rk4"))
    assert abs(tr.x[-1, 0] - np.exp(-1.0)) < 1e-9
    assert tr.events == []


def test_rk4_matrix_order():
    G = np.array([[-1.0]])
    errs = [abs(rk4_matrix(G, h)[0, 0] - np.exp(-h)) for h in (0.1, 0.05)]
    assert 25 < errs[0] / errs[1] < 40


def test_inconsistent_start_jumps_once():
    # x1' = -x1, 0 = 2 x1 - x2
    E = np.diag([1.0, 0.0])
    A = np.array([[-1.0, 0.0], [2.0, -1.0]])
    sys = DescriptorSystem(E, A, np.zeros((0, 2)), ())
    tr = simulate_plant(sys, [1.0, 5.0], SimConfig(t_end=1.0, dt=1e-3))
    assert len(tr.events) == 1 and tr.events[0]["t"] == 0.0
    assert np.allclose(tr.x[0], [1.0, 2.0])
    assert np.allclose(tr.x[:, 1], 2 * np.exp(-tr.t), atol=1e-10)


def test_electrical_plant_jump(electrical):
    sc, d = electrical
    tr = simulate_plant(sc.system, sc.x0, SimConfig(t_end=1e-3, dt=1e-4), hidden=d.model)
    assert len(tr.events) == 1


def test_adaptive_gain_step_examples():
    assert adaptive_gain_step(2.0, np.zeros(3), 0.1) == 2.0
    assert np.isclose(adaptive_gain_step(1.0, np.array([1.0, 1.0]), 0.01), 1.02)


def _normal_run(**kw):
    sys = jointly_observable_normal()
    adj = ring_adjacency(3)
    d = synthesize(sys, adj, "sdf")
    cfg = SimConfig(**{"t_end": 2.0, "dt": 1e-3, "x0": np.ones(4), **kw})
    return sys, d, simulate(sys, d, adj, cfg)


def test_equilibrium_start_stays_zero(hydraulic):
    sc, d = hydraulic
    cfg = SimConfig(t_end=2.0, dt=1e-3, x0=sc.x0, xhat0=[sc.x0] * 3)
    run = simulate(sc.system, d, sc.adjacency, cfg)
    assert np.max(run.err2) <= 1e-6 * (1 + np.max(np.abs(run.x)))
    m = error_metrics(run, threshold=1e-6 * (1 + np.max(np.abs(run.x))))
    assert all(mm["time_to_threshold"] == 0.0 for mm in m)


def test_record_stride_rows():
    for stride in (1, 7, 10):
        _, _, run = _normal_run(t_end=1.234, record_stride=stride)
        steps = SimConfig(t_end=1.234, dt=1e-3).steps
        assert run.t.size == steps // stride + 1


def test_determinism():
    _, _, a = _normal_run()
    _, _, b = _normal_run()
    assert np.array_equal(a.xhat, b.xhat) and np.array_equal(a.x, b.x)


def test_single_agent_error_decays():
    A = np.array([[0.0, 1.0], [-2.0, -0.5]])
    sys = DescriptorSystem(np.eye(2), A, np.array([[1.0, 0.0]]))
    d = synthesize(sys, np.zeros((1, 1)), "sdf")
    run = simulate(sys, d, np.zeros((1, 1)), SimConfig(t_end=5.0, dt=1e-3, x0=[1.0, 0.0]))
    assert run.err2[-1, 0] < 1e-3 * run.err2[0, 0]


def test_divergence_is_flagged():
    sys = jointly_observable_normal()
    adj = ring_adjacency(3)
    d = synthesize(sys, adj, "sdf")
    # negative coupling gain destabilizes the network
    bad = d.with_gamma(-50.0)
    run = simulate(sys, bad, adj, SimConfig(t_end=50.0, dt=1e-2, x0=np.ones(4), stepping="expm"))
    assert run.diverged is not None
    m = error_metrics(run)
    assert all(mm["diverged"] and mm["time_to_threshold"] is None for mm in m)


def test_adaptive_mode_normal_system():
    _, _, run = _normal_run(gain_mode="adaptive", omega0=1.0, t_end=10.0)
    assert np.all(np.diff(run.omega, axis=0) >= 0)
    assert np.all(run.err2[-1] < 1e-2 * run.err2[0])


def test_jump_counter_detects_injected_jump():
    _, _, run = _normal_run()
    assert count_jumps(run, 0) == 0
    run.xhat[run.t.size // 2:, 0] += 1e3
    assert count_jumps(run, 0) >= 1


def test_observers_reject_wrong_count(hydraulic):
    sc, d = hydraulic
    ros = realize(sc.system, d, sc.adjacency)
    with pytest.raises(InvalidInputError):
        simulate_observers(sc.system, ros[:2], sc.adjacency, SimConfig(t_end=1.0, dt=1e-3))
