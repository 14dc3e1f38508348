"""Fixed-step RK4 simulation of forced mechanical systems, CSV trajectory
export, and least-squares input reconstruction along sampled curves.

The state is x = (q, qdot) and the dynamics are

    qddot = -Gamma(q)(qdot, qdot) - M(q)^-1 dV/dq + k(q) qdot + sum_a Y_a u_a.

Integration is deliberately fixed-step (no adaptivity): convergence
studies sweep a parameter epsilon and need commensurate, reproducible
time grids.  Controls are evaluated at the RK4 stage times, so
continuous-time oscillatory inputs are sampled exactly where the stages
need them.
"""

import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteStateError
from .geometry import MechanicalSystem
from .numutil import format_sig17


@dataclass(frozen=True)
class State:
    """Configuration and velocity; entries must be finite."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))
        if self.q.shape != self.qdot.shape:
            raise ValueError("q and qdot must have matching shapes")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qdot).all()):
            raise ValueError("state entries must be finite")

    def as_vector(self):
        return np.concatenate([self.q, self.qdot])


@dataclass(frozen=True)
class ControlLaw:
    """u = eval(t, q, qdot), an m-vector.

    ``suggested_max_dt``, when set (oscillatory controls), lets simulate
    warn if the integration step under-resolves the fast time scale.
    """

    eval: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    suggested_max_dt: Optional[float] = None

    def __call__(self, t, q, qdot):
        return np.atleast_1d(np.asarray(self.eval(t, q, qdot), dtype=float))

    @staticmethod
    def zero(m):
        u = np.zeros(m)
        return ControlLaw(eval=lambda t, q, qd, _u=u: _u.copy())

    @staticmethod
    def constant(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return ControlLaw(eval=lambda t, q, qd, _u=u: _u.copy())

    @staticmethod
    def of_time(f):
        """Wrap a pure time signal t -> u(t)."""
        return ControlLaw(eval=lambda t, q, qd: f(t))


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    dense_output: bool = False  # reserved; every step is already emitted

    def __post_init__(self):
        if self.method != "rk4":
            raise ValueError(f"unknown integrator method '{self.method}'")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled states and the inputs recorded at sample times."""

    t0: float
    t1: float
    dt: float
    qs: np.ndarray  # (N, n)
    qds: np.ndarray  # (N, n)
    us: np.ndarray  # (N, m); m may be 0

    def __post_init__(self):
        N = self.qs.shape[0]
        if self.qds.shape != self.qs.shape or self.us.shape[0] != N:
            raise ValueError("misaligned trajectory arrays")
        expect = int(round((self.t1 - self.t0) / self.dt)) + 1
        if N != expect:
            raise ValueError(f"sample count {N} != round((t1-t0)/dt)+1 = {expect}")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.qs.shape[0])

    @property
    def n(self):
        return self.qs.shape[1]

    @property
    def n_samples(self):
        return self.qs.shape[0]

    def state(self, i) -> State:
        return State(self.qs[i], self.qds[i])

    def write_csv(self, path_or_file):
        n = self.qs.shape[1]
        m = self.us.shape[1]
        header = (
            ["t"]
            + [f"q{i+1}" for i in range(n)]
            + [f"qd{i+1}" for i in range(n)]
            + [f"u{i+1}" for i in range(m)]
        )
        close = False
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            fh = open(path_or_file, "w")
            close = True
        else:
            fh = path_or_file
        try:
            fh.write(",".join(header) + "\n")
            ts = self.times
            for i in range(self.qs.shape[0]):
                row = [ts[i], *self.qs[i], *self.qds[i], *self.us[i]]
                fh.write(",".join(format_sig17(v) for v in row) + "\n")
        finally:
            if close:
                fh.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def read_trajectory_csv(path) -> Trajectory:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = sum(1 for h in header if h.startswith("q") and not h.startswith("qd"))
    m = sum(1 for h in header if h.startswith("u"))
    t = data[:, 0]
    dt = t[1] - t[0] if len(t) > 1 else 1.0
    return Trajectory(
        t0=float(t[0]),
        t1=float(t[-1]),
        dt=float(dt),
        qs=data[:, 1 : 1 + n],
        qds=data[:, 1 + n : 1 + 2 * n],
        us=data[:, 1 + 2 * n : 1 + 2 * n + m],
    )


# -- dynamics ----------------------------------------------------------------


def _acceleration(sys: MechanicalSystem, q, qd, applied):
    """qddot given the generalized applied force (covector) `applied`.

    Shares a single inertia factorization between the Coriolis term and
    the force solve: Gamma(qd,qd) = M^-1 b with
    b_m = dM[m,j,k] qd^j qd^k - (1/2) dM[j,k,m] qd^j qd^k.
    """
    dM = sys.dmass(q)
    b = np.einsum("mjk,j,k->m", dM, qd, qd) - 0.5 * np.einsum("jkm,j,k->m", dM, qd, qd)
    rhs = applied - b - sys.grad_potential(q)
    acc = sys.solve_mass(q, rhs)
    if sys.damping is not None:
        acc = acc + sys.damping_matrix(q) @ qd
    return acc


def dynamics_rhs(sys: MechanicalSystem, state: State, u) -> np.ndarray:
    """Time derivative of x = (q, qdot) under input u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    q, qd = state.q, state.qdot
    applied = sys.input_matrix(q) @ u
    return np.concatenate([qd, _acceleration(sys, q, qd, applied)])


def _check_grid(t0, t1, dt):
    steps = (t1 - t0) / dt
    if abs(steps - round(steps)) > 1e-12 * max(1.0, abs(steps)):
        raise ValueError(f"dt={dt} does not divide the horizon {t1 - t0}")
    return int(round(steps))


def _rk4(rhs, x0, t0, dt, steps):
    """Fixed-step RK4; returns the (steps+1, len(x0)) solution array."""

    def stage(t, x):
        k = np.asarray(rhs(t, x), dtype=float)
        # catch non-finite stage derivatives (e.g. a control law returning
        # nan) before they reach the inertia solver
        if not np.isfinite(k).all():
            raise NonFiniteStateError(t)
        return k

    xs = np.empty((steps + 1, x0.size))
    xs[0] = x0
    x = x0.copy()
    for i in range(steps):
        t = t0 + i * dt
        k1 = stage(t, x)
        k2 = stage(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = stage(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = stage(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all():
            raise NonFiniteStateError(t + dt)
        xs[i + 1] = x
    return xs


def simulate(
    sys: MechanicalSystem,
    control: ControlLaw,
    x0: State,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Integrate the forced dynamics; deterministic for identical inputs."""
    steps = _check_grid(t0, t1, cfg.dt)
    if control.suggested_max_dt is not None and cfg.dt > control.suggested_max_dt:
        warnings.warn(
            f"dt={cfg.dt:g} under-resolves the oscillatory control "
            f"(want dt <= {control.suggested_max_dt:g})",
            stacklevel=2,
        )
    n = sys.n

    def rhs(t, x):
        q, qd = x[:n], x[n:]
        u = control(t, q, qd)
        applied = sys.input_matrix(q) @ u
        return np.concatenate([qd, _acceleration(sys, q, qd, applied)])

    xs = _rk4(rhs, x0.as_vector(), t0, cfg.dt, steps)
    ts = t0 + cfg.dt * np.arange(steps + 1)
    us = np.array([control(ts[i], xs[i, :n], xs[i, n:]) for i in range(steps + 1)])
    return Trajectory(t0=t0, t1=t1, dt=cfg.dt, qs=xs[:, :n], qds=xs[:, n:], us=us)


def simulate_forced(
    sys: MechanicalSystem,
    forcing: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    x0: State,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    record: Optional[Callable[[float], np.ndarray]] = None,
) -> Trajectory:
    """Like simulate, but with a direct acceleration-level forcing term.

    ``forcing(t, q, qdot)`` is an n-vector added to the acceleration (the
    potential, Coriolis and damping terms of sys still apply).  ``record``
    optionally logs a vector per sample time into the trajectory's input
    columns (e.g. gain values of an averaged system).
    """
    steps = _check_grid(t0, t1, cfg.dt)
    n = sys.n

    zero = np.zeros(n)

    def rhs(t, x):
        q, qd = x[:n], x[n:]
        acc = _acceleration(sys, q, qd, zero) + forcing(t, q, qd)
        return np.concatenate([qd, acc])

    xs = _rk4(rhs, x0.as_vector(), t0, cfg.dt, steps)
    ts = t0 + cfg.dt * np.arange(steps + 1)
    if record is None:
        us = np.zeros((steps + 1, 0))
    else:
        us = np.array([np.atleast_1d(record(t)) for t in ts])
    return Trajectory(t0=t0, t1=t1, dt=cfg.dt, qs=xs[:, :n], qds=xs[:, n:], us=us)


# -- input reconstruction -----------------------------------------------------


@dataclass(frozen=True)
class ReconstructionResult:
    """Inputs and span residuals at the interior samples of a trajectory."""

    times: np.ndarray
    inputs: np.ndarray  # (N-2, m)
    residuals: np.ndarray  # (N-2,)

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def reconstruct_inputs(sys: MechanicalSystem, traj: Trajectory) -> ReconstructionResult:
    """Least-squares inputs realizing a sampled curve.

    At each interior sample the required generalized force is
    f = M(q)(qddot + Gamma(qdot, qdot)) + dV/dq - M(q) k(q) qdot with
    qddot by central differences; u solves f ~ sum_a u_a F_a(q) and the
    residual is ||f - F u|| / max(1, ||f||).  Samples where {F_a(q)} is
    rank deficient get residual +inf.  Endpoints are dropped.
    """
    N = traj.n_samples
    if N < 3:
        raise ValueError("need at least 3 samples to reconstruct inputs")
    dt = traj.dt
    m = sys.m
    times = traj.times[1 : N - 1]
    inputs = np.zeros((N - 2, m))
    residuals = np.zeros(N - 2)
    for j, i in enumerate(range(1, N - 1)):
        q, qd = traj.qs[i], traj.qds[i]
        qdd = (traj.qds[i + 1] - traj.qds[i - 1]) / (2.0 * dt)
        dM = sys.dmass(q)
        b = np.einsum("mjk,j,k->m", dM, qd, qd) - 0.5 * np.einsum(
            "jkm,j,k->m", dM, qd, qd
        )
        M = sys.mass(q)
        f = M @ qdd + b + sys.grad_potential(q)
        if sys.damping is not None:
            f = f - M @ (sys.damping_matrix(q) @ qd)
        F = sys.input_matrix(q)
        u, _, rank, _ = np.linalg.lstsq(F, f, rcond=None)
        inputs[j] = u
        if rank < m:
            residuals[j] = np.inf
        else:
            residuals[j] = np.linalg.norm(f - F @ u) / max(1.0, np.linalg.norm(f))
    return ReconstructionResult(times=times, inputs=inputs, residuals=residuals)
