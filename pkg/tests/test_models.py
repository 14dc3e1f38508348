"""Benchmark model library: derivatives, descriptors, hand-derived products."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from geoctrl import ModelDescriptor, build, list_models, make, symmetric_product
from geoctrl.errors import ConfigError, UnknownModelError
from geoctrl.numutil import central_jacobian

ALL_MODELS = ["flat", "planar-body", "blimp", "pvtol", "three-link"]


def random_configs(n, count, seed, scale=np.pi):
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(count, n))


def test_registry_contents():
    names = [e["name"] for e in list_models()]
    assert sorted(names) == sorted(ALL_MODELS)
    for e in list_models():
        assert e["dof"] >= len(e["default_actuators"])


def test_unknown_model_rejected():
    with pytest.raises(UnknownModelError):
        build(ModelDescriptor(name="hovercraft"))


@pytest.mark.parametrize(
    "desc",
    [
        ModelDescriptor("pvtol", parameters={"wingspan": 2.0}),
        ModelDescriptor("pvtol", parameters={"mass": -1.0}),
        ModelDescriptor("pvtol", parameters={"mass": 0.0}),
        ModelDescriptor("pvtol", parameters={"gravity": -9.81}),
        ModelDescriptor("three-link", actuators=(1, 4)),
        ModelDescriptor("three-link", actuators=(2, 2)),
        ModelDescriptor("flat", actuators=()),
    ],
)
def test_bad_descriptors_rejected(desc):
    with pytest.raises(ConfigError):
        build(desc)


def test_zero_gravity_and_drag_allowed():
    assert build(ModelDescriptor("pvtol", parameters={"gravity": 0.0})).potential is None
    assert build(ModelDescriptor("blimp", parameters={"drag": 0.0})).damping is None


@pytest.mark.parametrize("name", ALL_MODELS)
def test_analytic_derivatives_match_fd(name):
    """The registered dinertia/dpotential/dinput jacobians against central
    differences of the base callables at 100 random configurations."""
    sys = make(name)
    assert sys.derivative_provider == "analytic"
    for q in random_configs(sys.n, 100, seed=10):
        dM = sys.dmass(q)
        fd = central_jacobian(sys.inertia, q, 1e-5)
        assert np.max(np.abs(dM - fd)) <= 1e-6 * max(1.0, np.max(np.abs(dM)))
        if sys.potential is not None:
            gV = sys.grad_potential(q)
            fdV = central_jacobian(lambda x: np.array(sys.potential(x)), q, 1e-5)
            assert np.max(np.abs(gV - fdV)) <= 1e-6 * max(1.0, np.max(np.abs(gV)))
        for a in range(sys.m):
            dF = np.asarray(sys.dinput_covectors[a](q))
            fdF = central_jacobian(sys.input_covectors[a], q, 1e-5)
            assert np.max(np.abs(dF - fdF)) <= 1e-6


@pytest.mark.parametrize("name", ALL_MODELS)
def test_inertia_positive_definite(name):
    sys = make(name)
    for q in random_configs(sys.n, 25, seed=11):
        eigs = np.linalg.eigvalsh(sys.mass(q))
        assert eigs[0] > 0.0


def three_link_inertia_oracle(q, m, l):
    """M(q) assembled from raw link kinematics: COM positions differentiated
    by finite differences, plus the rod inertias on the angle rates."""
    I = m * l**2 / 12.0

    def com(i):
        def r(qq):
            th = np.cumsum(qq)
            p = np.zeros(2)
            for j in range(i):
                p = p + l[j] * np.array([np.cos(th[j]), np.sin(th[j])])
            return p + 0.5 * l[i] * np.array([np.cos(th[i]), np.sin(th[i])])

        return r

    M = np.zeros((3, 3))
    for i in range(3):
        Jv = central_jacobian(com(i), q, 1e-6)  # (2, 3)
        w = np.zeros(3)
        w[: i + 1] = 1.0
        M += m[i] * Jv.T @ Jv + I[i] * np.outer(w, w)
    return M


def test_three_link_inertia_vs_kinematics_oracle():
    params = {"m1": 1.3, "m2": 0.8, "m3": 0.5, "l1": 1.1, "l2": 0.9, "l3": 0.6}
    sys = make("three-link", **params)
    m = np.array([params["m1"], params["m2"], params["m3"]])
    l = np.array([params["l1"], params["l2"], params["l3"]])
    for q in random_configs(3, 20, seed=12):
        want = three_link_inertia_oracle(q, m, l)
        assert_allclose(sys.mass(q), want, rtol=0, atol=1e-8)


def test_three_link_potential_is_weighted_com_height():
    sys = make("three-link", gravity=9.81)
    q = np.array([0.4, -0.3, 1.2])
    th = np.cumsum(q)
    l = np.ones(3)
    heights = []
    p = 0.0
    for i in range(3):
        heights.append(p + 0.5 * l[i] * np.sin(th[i]))
        p += l[i] * np.sin(th[i])
    assert_allclose(sys.potential_value(q), 9.81 * sum(heights), atol=1e-12)


def test_three_link_actuator_subset():
    sys = make("three-link", actuators=(1, 3))
    q = np.zeros(3)
    F = sys.input_matrix(q)
    assert_allclose(F[:, 0], [1.0, 0.0, 0.0])
    assert_allclose(F[:, 1], [0.0, 0.0, 1.0])


def test_pvtol_roll_self_product_is_thrust_direction():
    # <Y2 : Y2> = (2 eps0 / J) Y1: the roll-thrust coupling behind the
    # oscillatory altitude control
    eps0, J = 0.7, 1.4
    sys = make("pvtol", gravity=0.0, coupling=eps0, inertia=J)
    Y1, Y2 = sys.input_field(0), sys.input_field(1)
    for q in random_configs(3, 10, seed=13):
        got = symmetric_product(sys, Y2, Y2, q)
        assert_allclose(got, (2.0 * eps0 / J) * Y1(q), atol=1e-10)


def test_pvtol_thrust_self_product_vanishes():
    sys = make("pvtol", gravity=0.0)
    Y1 = sys.input_field(0)
    for q in random_configs(3, 10, seed=14):
        assert np.linalg.norm(symmetric_product(sys, Y1, Y1, q)) < 1e-10


def test_planar_offset_self_product():
    # the offset force (lever arm d) twists the body, so pushing along it
    # generates lateral drift: <Y4 : Y4> = -(2 d / J) Y_fy
    d, mass, J = 0.8, 1.5, 2.0
    sys = make("planar-body", actuators=(4,), offset=d, mass=mass, inertia=J)
    Y4 = sys.input_field(0)
    q = np.array([0.3, -1.0, 0.6])
    c, s = np.cos(q[2]), np.sin(q[2])
    y_fy = np.array([-s / mass, c / mass, 0.0])
    assert_allclose(symmetric_product(sys, Y4, Y4, q), -(2.0 * d / J) * y_fy, atol=1e-10)


def test_blimp_pair_product_is_lateral():
    # default actuators (fx-body, torque): <Y1 : Y3> = (1/J) Y_fy
    sys = make("blimp")
    Y1, Y3 = sys.input_field(0), sys.input_field(1)
    q = np.array([0.0, 0.0, 0.9])
    c, s = np.cos(q[2]), np.sin(q[2])
    assert_allclose(
        symmetric_product(sys, Y1, Y3, q), np.array([-s, c, 0.0]), atol=1e-10
    )
    assert np.linalg.norm(symmetric_product(sys, Y1, Y1, q)) < 1e-12
    assert np.linalg.norm(symmetric_product(sys, Y3, Y3, q)) < 1e-12


def test_planar_com_products_vanish():
    sys = make("planar-body", actuators=(1, 2))
    fields = [sys.input_field(a) for a in range(2)]
    q = np.array([1.0, -0.5, 0.4])
    for a in range(2):
        for b in range(2):
            assert np.linalg.norm(symmetric_product(sys, fields[a], fields[b], q)) < 1e-10


def test_make_shorthand_matches_build():
    a = make("pvtol", actuators=(1, 2), gravity=0.0)
    b = build(ModelDescriptor("pvtol", parameters={"gravity": 0.0}, actuators=(1, 2)))
    q = np.array([0.1, 0.2, 0.3])
    assert_allclose(a.mass(q), b.mass(q))
    assert_allclose(a.input_matrix(q), b.input_matrix(q))
