"""Fixed-step integration, energy behavior, input reconstruction, CSV I/O."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from geoctrl import (
    ControlLaw,
    IntegratorConfig,
    MechanicalSystem,
    State,
    Trajectory,
    dynamics_rhs,
    make,
    read_trajectory_csv,
    reconstruct_inputs,
    simulate,
)
from geoctrl.errors import NonFiniteStateError
from geoctrl.numutil import loglog_slope


def rest(n):
    return State(q=np.zeros(n), qdot=np.zeros(n))


def test_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        State(q=np.array([np.nan, 0.0]), qdot=np.zeros(2))
    with pytest.raises(ValueError):
        State(q=np.zeros(2), qdot=np.zeros(3))


def test_equilibrium_stays_put():
    sys = make("flat", actuators=(1, 2))
    traj = simulate(sys, ControlLaw.zero(2), rest(2), 0.0, 1.0, IntegratorConfig(dt=1e-2))
    assert np.max(np.abs(traj.qs)) == 0.0
    assert np.max(np.abs(traj.qds)) == 0.0


def test_flat_constant_force_quadratic():
    # q(t) = u t^2 / 2 exactly; RK4 is exact on polynomials of degree <= 4
    sys = make("flat", actuators=(1, 2))
    u = np.array([0.4, -0.9])
    traj = simulate(sys, ControlLaw.constant(u), rest(2), 0.0, 2.0, IntegratorConfig(dt=1e-2))
    want = 0.5 * np.outer(traj.times**2, u)
    assert np.max(np.abs(traj.qs - want)) < 1e-12


def test_flat_sinusoid_closed_form():
    # unit mass, u1 = sin t from rest: q1 = t - sin t, qd1 = 1 - cos t
    sys = make("flat")
    law = ControlLaw.of_time(lambda t: np.array([np.sin(t)]))
    traj = simulate(sys, law, rest(2), 0.0, 3.0, IntegratorConfig(dt=1e-3))
    t = traj.times
    assert np.max(np.abs(traj.qs[:, 0] - (t - np.sin(t)))) < 1e-11
    assert np.max(np.abs(traj.qds[:, 0] - (1.0 - np.cos(t)))) < 1e-11


def test_rk4_fourth_order_self_convergence():
    sys = make("three-link", gravity=0.0)
    law = ControlLaw.constant([0.5, -0.3])
    x0 = State(q=np.array([0.2, -0.4, 0.9]), qdot=np.zeros(3))
    ref = simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=6.25e-4)).qs[-1]
    dts = np.array([2e-2, 1e-2, 5e-3])
    errs = np.array(
        [
            np.linalg.norm(simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=dt)).qs[-1] - ref)
            for dt in dts
        ]
    )
    slope = loglog_slope(dts, errs)
    assert 3.5 < slope < 4.5


def test_three_link_energy_conservation():
    # unforced swing near the hanging configuration, 5 s at dt = 1e-3
    sys = make("three-link", gravity=9.81)
    x0 = State(q=np.array([-np.pi / 2 + 0.1, 0.05, -0.03]), qdot=np.zeros(3))
    traj = simulate(sys, ControlLaw.zero(2), x0, 0.0, 5.0, IntegratorConfig(dt=1e-3))
    E = np.array([sys.total_energy(traj.qs[i], traj.qds[i]) for i in range(traj.n_samples)])
    assert np.max(np.abs(E - E[0])) < 1e-8


def test_simulation_is_deterministic():
    sys = make("pvtol")
    law = ControlLaw.of_time(lambda t: np.array([9.81 + 0.1 * np.sin(3 * t), 0.05 * np.cos(t)]))
    x0 = State(q=np.array([0.0, 1.0, 0.0]), qdot=np.zeros(3))
    a = simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=1e-3))
    b = simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=1e-3))
    assert a.csv_text() == b.csv_text()
    assert np.array_equal(a.qs, b.qs) and np.array_equal(a.qds, b.qds)


def test_dt_must_divide_horizon():
    sys = make("flat")
    with pytest.raises(ValueError, match="divide"):
        simulate(sys, ControlLaw.zero(1), rest(2), 0.0, 1.0, IntegratorConfig(dt=3e-4))


def test_nonfinite_state_detected():
    sys = make("flat")
    law = ControlLaw.of_time(lambda t: np.array([np.nan if t > 0.3 else 0.0]))
    with pytest.raises(NonFiniteStateError) as ei:
        simulate(sys, law, rest(2), 0.0, 1.0, IntegratorConfig(dt=1e-2))
    assert ei.value.t <= 0.35


def test_rhs_matches_euler_lagrange_oracle():
    """d/dt (dL/dqd) - dL/dq = F u, all pieces via plain finite differences
    of the kinetic/potential energies -- independent of the dmass layout."""
    sys = make("three-link", gravity=9.81, actuators=(1, 2, 3))
    rng = np.random.default_rng(20)
    h = 1e-6
    for _ in range(10):
        q = rng.uniform(-np.pi, np.pi, 3)
        qd = rng.uniform(-1.0, 1.0, 3)
        u = rng.uniform(-1.0, 1.0, 3)
        acc = dynamics_rhs(sys, State(q, qd), u)[3:]
        # Mdot = sum_k dM/dq_k qd_k by FD of the inertia
        Mdot = np.zeros((3, 3))
        dLdq = np.zeros(3)
        for k in range(3):
            dq = np.zeros(3)
            dq[k] = h
            Mdot += (sys.mass(q + dq) - sys.mass(q - dq)) / (2 * h) * qd[k]
            Lp = 0.5 * qd @ sys.mass(q + dq) @ qd - sys.potential_value(q + dq)
            Lm = 0.5 * qd @ sys.mass(q - dq) @ qd - sys.potential_value(q - dq)
            dLdq[k] = (Lp - Lm) / (2 * h)
        residual = sys.mass(q) @ acc + Mdot @ qd - dLdq - u
        assert np.linalg.norm(residual) < 1e-6 * max(1.0, np.linalg.norm(u))


def test_reconstruct_inputs_roundtrip():
    sys = make("three-link", gravity=9.81)
    law = ControlLaw.of_time(lambda t: np.array([0.3 * np.sin(t), -0.2 * np.cos(2 * t)]))
    x0 = State(q=np.array([-1.2, 0.4, 0.1]), qdot=np.zeros(3))
    traj = simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=1e-3))
    rec = reconstruct_inputs(sys, traj)
    want = np.array([law(t, None, None) for t in rec.times])
    # central-difference acceleration bias is O(dt^2) with an O(10) constant
    assert np.max(np.abs(rec.inputs - want)) < 5e-4
    assert rec.max_residual < 5e-4


def test_reconstruct_fully_actuated_zero_residual():
    sys = make("three-link", gravity=9.81, actuators=(1, 2, 3))
    law = ControlLaw.of_time(lambda t: np.array([0.2, -0.1, 0.05 * t]))
    x0 = State(q=np.array([0.5, -0.5, 0.5]), qdot=np.zeros(3))
    traj = simulate(sys, law, x0, 0.0, 0.5, IntegratorConfig(dt=1e-3))
    rec = reconstruct_inputs(sys, traj)
    assert rec.max_residual < 1e-12  # square full-rank solve leaves no residual


def test_reconstruct_flags_rank_deficiency():
    # both covectors identical: any motion off their span is unexplainable
    sys = MechanicalSystem(
        n=2,
        m=2,
        inertia=lambda q: np.eye(2),
        input_covectors=[lambda q: np.array([1.0, 0.0])] * 2,
    )
    qs = np.column_stack([np.linspace(0, 1, 11) ** 2, np.zeros(11)])
    qds = np.column_stack([2 * np.linspace(0, 1, 11), np.zeros(11)])
    traj = Trajectory(t0=0.0, t1=1.0, dt=0.1, qs=qs, qds=qds, us=np.zeros((11, 2)))
    rec = reconstruct_inputs(sys, traj)
    assert np.all(np.isinf(rec.residuals))


def test_damping_enters_reconstruction():
    sys = make("blimp", actuators=(1, 2, 3))
    law = ControlLaw.of_time(lambda t: np.array([0.4, 0.1, -0.2]))
    x0 = State(q=np.zeros(3), qdot=np.array([0.5, 0.0, 0.3]))
    traj = simulate(sys, law, x0, 0.0, 1.0, IntegratorConfig(dt=1e-3))
    rec = reconstruct_inputs(sys, traj)
    assert np.max(np.abs(rec.inputs - np.array([0.4, 0.1, -0.2]))) < 1e-5


def test_csv_roundtrip(tmp_path):
    sys = make("pvtol")
    law = ControlLaw.constant([9.81, 0.0])
    x0 = State(q=np.array([0.0, 1.0, 0.0]), qdot=np.zeros(3))
    traj = simulate(sys, law, x0, 0.0, 0.1, IntegratorConfig(dt=1e-2))
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    back = read_trajectory_csv(path)
    assert_allclose(back.qs, traj.qs, rtol=0, atol=0)  # 17 sig digits round-trip
    assert_allclose(back.qds, traj.qds, rtol=0, atol=0)
    assert_allclose(back.us, traj.us, rtol=0, atol=0)
    assert back.dt == traj.dt


def test_csv_header_layout(tmp_path):
    sys = make("three-link")
    traj = simulate(sys, ControlLaw.zero(2), rest(3), 0.0, 0.01, IntegratorConfig(dt=1e-2))
    text = traj.csv_text()
    assert text.splitlines()[0] == "t,q1,q2,q3,qd1,qd2,qd3,u1,u2"


def test_coarse_dt_warns_for_oscillatory_control():
    sys = make("flat")
    law = ControlLaw(eval=lambda t, q, qd: np.array([np.sin(t / 1e-3)]), suggested_max_dt=1e-4)
    with pytest.warns(UserWarning, match="under-resolves"):
        simulate(sys, law, rest(2), 0.0, 0.1, IntegratorConfig(dt=1e-2))
