"""Built-in benchmark systems with analytic inertia/potential/input derivatives.

Registry
--------
flat         n=2 point mass, M = I, direct forces.  Sanity/test model.
planar-body  n=3 rigid body in the horizontal plane, q = (x, y, theta),
             M = diag(mass, mass, inertia).  Canonical inputs: body-frame
             force through the center of mass along body-x (1) and body-y
             (2), pure torque (3), and a body-x force applied at the
             lateral offset point (0, offset) in the body frame (4); the
             offset force carries the induced torque -offset.
blimp        planar-body plus isotropic linear damping k(q) = -drag * I,
             a crude hull-drag model.  Default actuators (1, 3): body-x
             force and torque, an underactuated configuration.
pvtol        planar VTOL aircraft, q = (x, y, theta), M = diag(mass, mass,
             inertia).  Input 1 is unit thrust along the body vertical
             axis (-sin theta, cos theta, 0); input 2 is a rolling moment
             with the characteristic lateral-force coupling: (coupling *
             cos theta, coupling * sin theta, 1).  Optional gravity
             potential mass * gravity * y.
three-link   planar manipulator with three revolute joints, torque inputs
             at a selectable subset of joints (default joints (1, 2)).

Three-link derivation (standard Lagrangian composition): with relative
joint angles q and absolute link angles theta_i = q_1 + ... + q_i, link i
is a uniform rod of mass m_i, length l_i, center of mass at the midpoint
and rotational inertia I_i = m_i l_i^2 / 12.  The center of mass sits at
p_i = sum_{j<i} l_j e(theta_j) + (l_i/2) e(theta_i) with e(t) = (cos t,
sin t), so with translational Jacobians Jv_i = dp_i/dq and angular rows
Jw_i = (1,...,1,0,...) the inertia matrix is

    M(q) = sum_i m_i Jv_i^T Jv_i + I_i Jw_i^T Jw_i,

and V(q) = gravity * sum_i m_i p_{i,y}.  All q-derivatives of M and V are
differentiated in closed form below; the test suite cross-checks every
analytic derivative against central finite differences.

Parameters are unit values by default (masses 1 kg, lengths 1 m, derived
rod inertias, offset/coupling 1 m).  Gravity defaults: 9.81 m/s^2 for the
pvtol (set gravity 0 for the horizontal/series experiments), 0 for the
three-link (a horizontal device; set 9.81 to add the potential).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, UnknownModelError
from .geometry import MechanicalSystem

_REGISTRY: Dict[str, dict] = {}


@dataclass(frozen=True)
class ModelDescriptor:
    """A named model plus parameter overrides and the active actuator subset.

    ``actuators`` uses 1-based canonical input indices (e.g. (1, 3) picks
    the first and third canonical inputs); None selects the model default.
    """

    name: str
    parameters: Dict[str, float] = field(default_factory=dict)
    actuators: Optional[Tuple[int, ...]] = None

    def resolved(self):
        """Validate against the registry; return (entry, params, actuators)."""
        entry = _REGISTRY.get(self.name)
        if entry is None:
            raise UnknownModelError(self.name, sorted(_REGISTRY))
        params = dict(entry["defaults"])
        for key, val in self.parameters.items():
            if key not in params:
                raise ConfigError(
                    f"model '{self.name}' has no parameter '{key}' "
                    f"(known: {sorted(params)})"
                )
            params[key] = float(val)
        for key, val in params.items():
            if key in entry["nonneg"]:
                if val < 0.0:
                    raise ConfigError(f"parameter '{key}' must be >= 0, got {val}")
            elif val <= 0.0:
                raise ConfigError(f"parameter '{key}' must be > 0, got {val}")
        acts = self.actuators if self.actuators is not None else entry["default_actuators"]
        acts = tuple(int(a) for a in acts)
        n_inputs = len(entry["input_names"])
        if len(acts) == 0:
            raise ConfigError("actuator subset must be non-empty")
        if len(set(acts)) != len(acts):
            raise ConfigError(f"duplicate actuator indices in {acts}")
        for a in acts:
            if not 1 <= a <= n_inputs:
                raise ConfigError(
                    f"actuator index {a} out of range 1..{n_inputs} for model '{self.name}'"
                )
        return entry, params, acts


def build(descriptor: ModelDescriptor) -> MechanicalSystem:
    """Construct the MechanicalSystem for a validated descriptor."""
    entry, params, acts = descriptor.resolved()
    return entry["builder"](params, acts)


def make(name: str, actuators: Optional[Sequence[int]] = None, **parameters) -> MechanicalSystem:
    """Shorthand: make('pvtol', gravity=0.0) or make('three-link', (1, 3))."""
    acts = tuple(actuators) if actuators is not None else None
    return build(ModelDescriptor(name, parameters, acts))


def list_models() -> List[dict]:
    """Registry metadata: name, dof, inputs, defaults — for CLI listing."""
    out = []
    for name in sorted(_REGISTRY):
        e = _REGISTRY[name]
        out.append(
            {
                "name": name,
                "dof": e["n"],
                "inputs": list(e["input_names"]),
                "default_actuators": list(e["default_actuators"]),
                "parameters": dict(e["defaults"]),
                "description": e["doc"],
            }
        )
    return out


def _register(name, n, input_names, defaults, default_actuators, builder, doc, nonneg=()):
    _REGISTRY[name] = {
        "n": n,
        "input_names": tuple(input_names),
        "defaults": dict(defaults),
        "default_actuators": tuple(default_actuators),
        "builder": builder,
        "doc": doc,
        "nonneg": frozenset(nonneg),
    }


# -- flat ------------------------------------------------------------------


def _build_flat(params, acts):
    eye = np.eye(2)
    zero3 = np.zeros((2, 2, 2))
    covs = [lambda q, _a=a - 1: np.eye(2)[_a].copy() for a in acts]
    dcovs = [lambda q: np.zeros((2, 2)) for _ in acts]
    return MechanicalSystem(
        n=2,
        m=len(acts),
        inertia=lambda q: eye.copy(),
        input_covectors=covs,
        dinertia=lambda q: zero3.copy(),
        dinput_covectors=dcovs,
        name="flat",
    )


_register(
    "flat",
    n=2,
    input_names=("f1", "f2"),
    defaults={},
    default_actuators=(1,),
    builder=_build_flat,
    doc="point mass in the plane, identity inertia, direct coordinate forces",
)


# -- planar rigid body / blimp ---------------------------------------------


def _planar_covector_table(params):
    """(F_a(q), dF_a/dq) builders for the 4 canonical planar-body inputs."""
    d = params["offset"]

    def fx(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([c, s, 0.0])

    def dfx(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        J = np.zeros((3, 3))
        J[:, 2] = [-s, c, 0.0]
        return J

    def fy(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([-s, c, 0.0])

    def dfy(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        J = np.zeros((3, 3))
        J[:, 2] = [-c, -s, 0.0]
        return J

    def torque(q):
        return np.array([0.0, 0.0, 1.0])

    def dtorque(q):
        return np.zeros((3, 3))

    def fx_off(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([c, s, -d])

    def dfx_off(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        J = np.zeros((3, 3))
        J[:, 2] = [-s, c, 0.0]
        return J

    return [(fx, dfx), (fy, dfy), (torque, dtorque), (fx_off, dfx_off)]


def _build_planar(params, acts, drag=0.0, name="planar-body"):
    mass, J = params["mass"], params["inertia"]
    M = np.diag([mass, mass, J])
    zero3 = np.zeros((3, 3, 3))
    table = _planar_covector_table(params)
    covs = [table[a - 1][0] for a in acts]
    dcovs = [table[a - 1][1] for a in acts]
    damping = None
    if drag > 0.0:
        K = -drag * np.eye(3)
        damping = lambda q: K.copy()
    return MechanicalSystem(
        n=3,
        m=len(acts),
        inertia=lambda q: M.copy(),
        input_covectors=covs,
        damping=damping,
        dinertia=lambda q: zero3.copy(),
        dinput_covectors=dcovs,
        name=name,
    )


_register(
    "planar-body",
    n=3,
    input_names=("fx-body", "fy-body", "torque", "fx-offset"),
    defaults={"mass": 1.0, "inertia": 1.0, "offset": 1.0},
    default_actuators=(1, 2, 3),
    builder=lambda p, a: _build_planar(p, a),
    doc="rigid body in the horizontal plane; body-frame forces, torque, offset force",
)

_register(
    "blimp",
    n=3,
    input_names=("fx-body", "fy-body", "torque", "fx-offset"),
    defaults={"mass": 1.0, "inertia": 1.0, "offset": 1.0, "drag": 0.1},
    default_actuators=(1, 3),
    builder=lambda p, a: _build_planar(p, a, drag=p["drag"], name="blimp"),
    doc="planar body with isotropic linear hull drag; underactuated by default",
    nonneg=("drag",),
)


# -- pvtol -------------------------------------------------------------------


def _build_pvtol(params, acts):
    mass, J, eps0, g = params["mass"], params["inertia"], params["coupling"], params["gravity"]
    M = np.diag([mass, mass, J])
    zero3 = np.zeros((3, 3, 3))

    def thrust(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([-s, c, 0.0])

    def dthrust(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        Jm = np.zeros((3, 3))
        Jm[:, 2] = [-c, -s, 0.0]
        return Jm

    def roll(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([eps0 * c, eps0 * s, 1.0])

    def droll(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        Jm = np.zeros((3, 3))
        Jm[:, 2] = [-eps0 * s, eps0 * c, 0.0]
        return Jm

    table = [(thrust, dthrust), (roll, droll)]
    covs = [table[a - 1][0] for a in acts]
    dcovs = [table[a - 1][1] for a in acts]
    potential = None
    dpotential = None
    if g > 0.0:
        grad = np.array([0.0, mass * g, 0.0])
        potential = lambda q: mass * g * q[1]
        dpotential = lambda q: grad.copy()
    return MechanicalSystem(
        n=3,
        m=len(acts),
        inertia=lambda q: M.copy(),
        input_covectors=covs,
        potential=potential,
        dinertia=lambda q: zero3.copy(),
        dpotential=dpotential,
        dinput_covectors=dcovs,
        name="pvtol",
    )


_register(
    "pvtol",
    n=3,
    input_names=("thrust", "roll"),
    defaults={"mass": 1.0, "inertia": 1.0, "coupling": 1.0, "gravity": 9.81},
    default_actuators=(1, 2),
    builder=_build_pvtol,
    doc="planar VTOL aircraft: thrust along body axis, roll moment with lateral coupling",
    nonneg=("gravity",),
)


# -- three-link manipulator ---------------------------------------------------


def _build_three_link(params, acts):
    m = np.array([params["m1"], params["m2"], params["m3"]])
    l = np.array([params["l1"], params["l2"], params["l3"]])
    g = params["gravity"]
    I = m * l**2 / 12.0  # uniform rod about its center of mass

    # A[i, j]: coefficient of e(theta_j) in the COM position of link i
    A = np.zeros((3, 3))
    for i in range(3):
        for j in range(i):
            A[i, j] = l[j]
        A[i, i] = 0.5 * l[i]
    # L[j, k] = 1 iff theta_j depends on q_k (j >= k)
    L = np.tril(np.ones((3, 3)))
    # constant angular part sum_i I_i Jw_i^T Jw_i
    Mw = np.zeros((3, 3))
    for i in range(3):
        w = np.zeros(3)
        w[: i + 1] = 1.0
        Mw += I[i] * np.outer(w, w)
    mA = m @ A  # row vector: sum_i m_i A[i, j]

    def jacobians(q):
        th = np.cumsum(q)
        c, s = np.cos(th), np.sin(th)
        Jvx = -(A * s) @ L  # (links, joints)
        Jvy = (A * c) @ L
        return c, s, Jvx, Jvy

    def inertia(q):
        _, _, Jvx, Jvy = jacobians(q)
        return (
            np.einsum("i,ik,il->kl", m, Jvx, Jvx)
            + np.einsum("i,ik,il->kl", m, Jvy, Jvy)
            + Mw
        )

    def dinertia(q):
        c, s, Jvx, Jvy = jacobians(q)
        # dJv(x|y)[r, i, k] = d Jv[i, k] / d q_r
        dJvx = -np.einsum("ij,j,jr,jk->rik", A, c, L, L)
        dJvy = -np.einsum("ij,j,jr,jk->rik", A, s, L, L)
        D = np.einsum("i,rik,il->klr", m, dJvx, Jvx) + np.einsum(
            "i,ik,ril->klr", m, Jvx, dJvx
        )
        D += np.einsum("i,rik,il->klr", m, dJvy, Jvy) + np.einsum(
            "i,ik,ril->klr", m, Jvy, dJvy
        )
        return D

    covs = []
    dcovs = []
    for a in acts:
        e = np.zeros(3)
        e[a - 1] = 1.0
        covs.append(lambda q, _e=e: _e.copy())
        dcovs.append(lambda q: np.zeros((3, 3)))

    potential = None
    dpotential = None
    if g > 0.0:

        def potential(q):
            s = np.sin(np.cumsum(q))
            return g * float(m @ (A @ s))

        def dpotential(q):
            c = np.cos(np.cumsum(q))
            return g * ((mA * c) @ L)

    return MechanicalSystem(
        n=3,
        m=len(acts),
        inertia=inertia,
        input_covectors=covs,
        potential=potential,
        dinertia=dinertia,
        dpotential=dpotential,
        dinput_covectors=dcovs,
        name="three-link",
    )


_register(
    "three-link",
    n=3,
    input_names=("tau1", "tau2", "tau3"),
    defaults={
        "m1": 1.0,
        "m2": 1.0,
        "m3": 1.0,
        "l1": 1.0,
        "l2": 1.0,
        "l3": 1.0,
        "gravity": 0.0,
    },
    default_actuators=(1, 2),
    builder=_build_three_link,
    doc="planar 3R manipulator, uniform-rod links, torque inputs at chosen joints",
    nonneg=("gravity",),
)
