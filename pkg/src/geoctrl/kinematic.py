"""Decoupling vector fields, kinematic controllability, and rest-to-rest
motion plans that follow decoupling fields under arbitrary time scalings.

A configuration vector field V decouples the dynamics when both V and
nabla_V V lie in the input span {Y_a(q)} pointwise; every time-scaled
traversal of its integral curves is then realizable by some input, so
planning collapses to kinematics.  Writing V = sum_a h_a(q) Y_a(q), the
h-derivative terms of nabla_V V stay in the span automatically, so the
obstruction at a point is the system of quadratic equations

    B_l(h, h) = sum_{a,b} h_a h_b <c_l, <Y_a : Y_b>(q)> = 0,
    l = 1 .. n-m,

with {c_l} an orthonormal basis of the orthogonal complement of the input
span.  Solutions are projective directions in R^m.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import least_squares

from .errors import (
    NonFiniteStateError,
    RankDeficientInputsError,
    ResidualViolationError,
)
from .geometry import (
    MechanicalSystem,
    VectorField,
    covariant_derivative,
    input_span_data,
    lie_bracket,
    pairwise_symmetric_products,
)
from .simulation import (
    IntegratorConfig,
    ReconstructionResult,
    Trajectory,
    reconstruct_inputs,
)

RANK_TOL = 1e-8


def _span_projector(Y, tol=1e-10):
    """QR-based orthogonal-complement data for span{Y_a(q)}.

    Returns (Q, C): Q spans the input distribution, C its complement.
    Raises if the input fields are rank deficient at the point.
    """
    n, m = Y.shape
    Qfull, R = np.linalg.qr(Y, mode="complete")
    diag = np.abs(np.diag(R[:m, :m]))
    if diag.min() <= tol * max(1.0, diag.max()):
        raise RankDeficientInputsError(None)
    return Qfull[:, :m], Qfull[:, m:]


# -- decoupling test and search ------------------------------------------------


def decoupling_residual(sys: MechanicalSystem, V: VectorField, q) -> float:
    """How far V and nabla_V V stick out of the input span at q.

    Returns max over both fields of ||P_perp w|| / max(1, ||w||); zero
    (to numerical noise) characterizes a decoupling field at the point.
    """
    q = np.asarray(q, dtype=float)
    Y = sys.input_fields_matrix(q)
    try:
        Q, _ = _span_projector(Y)
    except RankDeficientInputsError:
        raise RankDeficientInputsError(q)
    dVV = covariant_derivative(sys, V, V, q)
    v = V(q)

    def leak(w):
        return np.linalg.norm(w - Q @ (Q.T @ w)) / max(1.0, np.linalg.norm(w))

    return float(max(leak(dVV), leak(v)))


@dataclass(frozen=True)
class DecouplingSolutions:
    """Projective coefficient directions solving the quadratic system.

    ``all_directions`` flags the degenerate case of identically zero
    quadratic forms (e.g. fully actuated systems): every direction works.
    """

    directions: List[np.ndarray]
    all_directions: bool = False


def _canonical(h):
    h = h / np.linalg.norm(h)
    k = int(np.argmax(np.abs(h)))
    return -h if h[k] < 0 else h


def quadratic_forms(sys: MechanicalSystem, q) -> np.ndarray:
    """The forms B[l, a, b] tested against h at q; shape (n-m, m, m)."""
    q = np.asarray(q, dtype=float)
    Y, JY, Gam = input_span_data(sys, q)
    try:
        _, C = _span_projector(Y)
    except RankDeficientInputsError:
        raise RankDeficientInputsError(q)
    S = pairwise_symmetric_products(Y, JY, Gam)
    return np.einsum("il,abi->lab", C, S)


def find_decoupling_fields(
    sys: MechanicalSystem,
    q,
    zero_tol: float = 1e-10,
    root_tol: float = 1e-10,
    n_starts: int = 100,
    seed: int = 0,
    angle_tol: float = 1e-6,
) -> DecouplingSolutions:
    """All projective h with B_l(h, h) = 0 at the point q.

    m = 2 uses the closed-form quadratic in the ratio h_2/h_1; larger m
    runs damped least-squares root finding from ``n_starts`` random unit
    starts (seeded, deterministic) and deduplicates at ``angle_tol``.
    An empty list is a valid outcome (no real solutions).
    """
    m = sys.m
    B = quadratic_forms(sys, q)
    if B.shape[0] == 0:
        return DecouplingSolutions(directions=[], all_directions=True)
    scale = float(np.max(np.abs(B)))
    if scale <= zero_tol:
        return DecouplingSolutions(directions=[], all_directions=True)
    live = [Bl for Bl in B if np.max(np.abs(Bl)) > zero_tol * scale]

    def satisfies(h):
        return all(abs(h @ Bl @ h) <= root_tol * scale for Bl in live)

    if m == 2:
        cands = []
        Bl = live[0]
        c, b, a = Bl[0, 0], 2.0 * Bl[0, 1], Bl[1, 1]  # a r^2 + b r + c, r = h2/h1
        if abs(a) <= zero_tol * scale:
            if abs(b) > zero_tol * scale:
                cands.append(np.array([1.0, -c / b]))
            cands.append(np.array([0.0, 1.0]))  # h1 = 0 annihilates when a ~ 0
        else:
            disc = b * b - 4.0 * a * c
            if disc >= 0.0:
                sq = np.sqrt(disc)
                qq = -0.5 * (b + (np.copysign(sq, b) if b != 0.0 else sq))
                r1 = qq / a
                cands.append(np.array([1.0, r1]))
                if qq != 0.0:
                    cands.append(np.array([1.0, c / qq]))
        sols = [_canonical(h) for h in cands if satisfies(_canonical(h))]
    else:
        rng = np.random.default_rng(seed)

        def resid(h):
            hn = h / np.linalg.norm(h)
            return np.array([hn @ Bl @ hn for Bl in live]) / scale

        sols = []
        for _ in range(n_starts):
            h0 = rng.standard_normal(m)
            h0 /= np.linalg.norm(h0)
            res = least_squares(resid, h0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
            h = _canonical(res.x)
            if satisfies(h):
                sols.append(h)
    # projective dedupe, deterministic order
    unique: List[np.ndarray] = []
    for h in sols:
        if not any(abs(h @ u) > 1.0 - 0.5 * angle_tol**2 for u in unique):
            unique.append(h)
    unique.sort(key=lambda h: tuple(np.round(h, 9)))
    return DecouplingSolutions(directions=unique, all_directions=False)


@dataclass(frozen=True)
class DecouplingCandidate:
    """A decoupling field V(q) = sum_a h_a(q) Y_a(q) with its coefficients."""

    coefficients: Callable[[np.ndarray], np.ndarray]
    field: VectorField


def candidate_from_direction(
    sys: MechanicalSystem, q0, h0, seed: int = 0
) -> DecouplingCandidate:
    """Extend a pointwise solution to a field by re-solving along the way.

    At each queried q the quadratic system is re-solved and the branch
    nearest the previously matched direction is taken (sign-aligned), so
    the field is continuous along any continuously sampled path.  The
    branch memory makes the candidate stateful: evaluate it along one
    path at a time.
    """
    h0 = _canonical(np.asarray(h0, dtype=float))
    ref = [h0]

    def coefficients(q):
        sol = find_decoupling_fields(sys, q, seed=seed)
        if sol.all_directions:
            h = ref[0]
        else:
            if not sol.directions:
                raise ValueError(
                    f"decoupling branch vanished at q={np.asarray(q).tolist()}"
                )
            h = max(sol.directions, key=lambda d: abs(d @ ref[0]))
            if h @ ref[0] < 0:
                h = -h
            ref[0] = h
        return h

    def ev(q):
        q = np.asarray(q, dtype=float)
        return sys.input_fields_matrix(q) @ coefficients(q)

    return DecouplingCandidate(coefficients=coefficients, field=VectorField(eval=ev))


# -- LARC ---------------------------------------------------------------------


@dataclass(frozen=True)
class ControllabilityReport:
    rank: int
    depth: int
    verdict: bool
    residuals: List[float] = field(default_factory=list)

    def as_dict(self):
        return {
            "rank": int(self.rank),
            "depth": int(self.depth),
            "verdict": bool(self.verdict),
            "residuals": [float(r) for r in self.residuals],
        }


def larc_rank(
    fields: Sequence[VectorField],
    q,
    max_depth: int = 2,
    tol: float = RANK_TOL,
    n: Optional[int] = None,
    residuals: Optional[Sequence[float]] = None,
) -> ControllabilityReport:
    """Numerical rank of the iterated-bracket span of ``fields`` at q.

    Depth d adds brackets of the base fields with everything at depth
    d-1 (left-normed brackets, which span the full bracket algebra).
    Rank counts singular values above tol * sigma_max; the verdict is
    rank == n (dimension of q by default).
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    q = np.asarray(q, dtype=float)
    n = q.size if n is None else n
    base = list(fields)
    level = list(fields)
    columns = [f(q) for f in base]

    def current_rank():
        sv = np.linalg.svd(np.column_stack(columns), compute_uv=False)
        return int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0

    ranks = [current_rank()]
    for _ in range(2, max_depth + 1):
        nxt = []
        for X in base:
            for W in level:
                nxt.append(
                    VectorField(eval=lambda qq, _X=X, _W=W: lie_bracket(_X, _W, qq))
                )
        columns.extend(f(q) for f in nxt)
        level = nxt
        ranks.append(current_rank())
    rank = ranks[-1]
    depth = 1 + next(i for i, r in enumerate(ranks) if r == rank)
    return ControllabilityReport(
        rank=rank,
        depth=depth,
        verdict=(rank == n),
        residuals=list(residuals) if residuals is not None else [],
    )


def kinematic_controllability(
    sys: MechanicalSystem, q, max_depth: int = 2, tol: float = RANK_TOL, seed: int = 0
):
    """Find decoupling fields at q and test the LARC on them.

    Returns (report, candidates).  For the degenerate all-directions case
    the input fields themselves are used.
    """
    q = np.asarray(q, dtype=float)
    sol = find_decoupling_fields(sys, q, seed=seed)
    if sol.all_directions:
        cands = [
            DecouplingCandidate(
                coefficients=lambda qq, _a=a, _m=sys.m: np.eye(_m)[_a],
                field=sys.input_field(a),
            )
            for a in range(sys.m)
        ]
    else:
        cands = [candidate_from_direction(sys, q, h, seed=seed) for h in sol.directions]
    residuals = [decoupling_residual(sys, c.field, q) for c in cands]
    report = larc_rank(
        [c.field for c in cands], q, max_depth=max_depth, tol=tol, n=sys.n,
        residuals=residuals,
    )
    return report, cands


# -- time scalings and plans ----------------------------------------------------


@dataclass(frozen=True)
class TimeScaling:
    """Monotone s: [0, T] -> [0, 1] with zero endpoint rates."""

    T: float
    profile: str

    def __post_init__(self):
        if self.profile not in ("cubic", "trapezoidal"):
            raise ValueError(f"unknown time-scaling profile '{self.profile}'")
        if not self.T > 0:
            raise ValueError("T must be positive")

    def s(self, t):
        tau = np.clip(t / self.T, 0.0, 1.0)
        if self.profile == "cubic":
            return tau * tau * (3.0 - 2.0 * tau)
        # trapezoidal speed: 25% ramp up, 50% cruise, 25% ramp down
        v = 4.0 / (3.0 * self.T)
        t = tau * self.T
        ta = 0.25 * self.T
        if t <= ta:
            return 0.5 * v * t * t / ta
        if t <= self.T - ta:
            return v * ta / 2.0 + v * (t - ta)
        r = self.T - t
        return 1.0 - 0.5 * v * r * r / ta

    def sdot(self, t):
        if t < 0.0 or t > self.T:
            return 0.0
        tau = t / self.T
        if self.profile == "cubic":
            return 6.0 * tau * (1.0 - tau) / self.T
        v = 4.0 / (3.0 * self.T)
        ta = 0.25 * self.T
        if t <= ta:
            return v * t / ta
        if t <= self.T - ta:
            return v
        return v * (self.T - t) / ta

    @staticmethod
    def cubic(T):
        return TimeScaling(T=T, profile="cubic")

    @staticmethod
    def trapezoidal(T):
        return TimeScaling(T=T, profile="trapezoidal")


@dataclass(frozen=True)
class PlanSegment:
    candidate: DecouplingCandidate
    sign: float
    scaling: TimeScaling


# arc-parameter grid for the path ODE.  RK4 at this resolution puts the
# path error near roundoff for smooth fields, and the spline representation
# reproduces q and qdot on any time grid to ~1e-12.
_PATH_STEPS = 2000


def _time_of_arc(scaling: TimeScaling, s_target: float) -> float:
    # invert the monotone s(t) by bisection; only used to stamp error times
    lo, hi = 0.0, scaling.T
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if scaling.s(mid) < s_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kinematic_plan(
    sys: MechanicalSystem,
    segments: Sequence[PlanSegment],
    q0,
    cfg: IntegratorConfig,
    residual_tol: float = 1e-6,
    validate: bool = True,
) -> Trajectory:
    """Rest-to-rest trajectory following decoupling fields segment by segment.

    Each segment solves qdot = sdot(t) * sign * V(q); junctions are at
    rest because every scaling has zero endpoint rate.  The motion factors
    through the path ODE dQ/ds = sign * V(Q), so the field is walked once
    per segment on an arc grid (in order: branch-tracked candidates are
    stateful) and the time grid q(t) = Q(s(t)) only samples the resulting
    splines.  That keeps the cost independent of dt, which matters because
    the central-difference validation needs fine grids near trapezoid
    corners.  When ``validate`` is set, the inputs realizing each segment
    are reconstructed into the trajectory and the worst span residual is
    checked against ``residual_tol``; otherwise the recorded inputs stay
    zero.
    """
    q = np.asarray(q0, dtype=float)
    all_qs, all_qds, all_us = [], [], []
    t_total = 0.0
    for si, seg in enumerate(segments):
        T = seg.scaling.T
        steps = int(round(T / cfg.dt))
        if abs(T / cfg.dt - steps) > 1e-12 * max(1.0, T / cfg.dt):
            raise ValueError(f"dt={cfg.dt} does not divide segment horizon {T}")

        ds = 1.0 / _PATH_STEPS
        path = np.empty((_PATH_STEPS + 1, sys.n))
        vel = np.empty_like(path)  # dQ/ds at the arc nodes
        x = q.copy()
        path[0] = x
        for i in range(_PATH_STEPS):
            k1 = seg.sign * seg.candidate.field(x)
            vel[i] = k1
            k2 = seg.sign * seg.candidate.field(x + 0.5 * ds * k1)
            k3 = seg.sign * seg.candidate.field(x + 0.5 * ds * k2)
            k4 = seg.sign * seg.candidate.field(x + ds * k3)
            x = x + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(x).all():
                raise NonFiniteStateError(t_total + _time_of_arc(seg.scaling, (i + 1) * ds))
            path[i + 1] = x
        vel[_PATH_STEPS] = seg.sign * seg.candidate.field(x)

        s_nodes = np.linspace(0.0, 1.0, _PATH_STEPS + 1)
        q_of_s = CubicHermiteSpline(s_nodes, path, vel)
        v_of_s = CubicSpline(s_nodes, vel)

        ts = np.arange(steps + 1) * cfg.dt
        svals = np.array([seg.scaling.s(t) for t in ts])
        sdots = np.array([seg.scaling.sdot(t) for t in ts])
        qs = q_of_s(svals)
        qds = sdots[:, None] * v_of_s(svals)
        us = np.zeros((steps + 1, sys.m))
        if validate:
            part = Trajectory(t0=0.0, t1=T, dt=cfg.dt, qs=qs, qds=qds, us=us)
            rec = reconstruct_inputs(sys, part)
            if rec.max_residual > residual_tol:
                worst = int(np.argmax(rec.residuals))
                raise ResidualViolationError(
                    segment=si,
                    t=t_total + rec.times[worst],
                    residual=rec.max_residual,
                    tol=residual_tol,
                )
            us[1:-1] = rec.inputs
            us[0], us[-1] = us[1], us[-2]
        if si == 0:
            all_qs.append(qs)
            all_qds.append(qds)
            all_us.append(us)
        else:  # junction sample already emitted by the previous segment
            all_qs.append(qs[1:])
            all_qds.append(qds[1:])
            all_us.append(us[1:])
        q = qs[-1]
        t_total += T
    return Trajectory(
        t0=0.0,
        t1=t_total,
        dt=cfg.dt,
        qs=np.concatenate(all_qs),
        qds=np.concatenate(all_qds),
        us=np.concatenate(all_us),
    )
