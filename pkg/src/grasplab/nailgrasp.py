"""Fingernail grasp analysis.

Sharp-edged objects are scooped by rolling: the object pivots about the gel
contact A while the nail pushes at C and the ground reacts at B.  With the
horizontal balance ``F_sx + R_x - F_fx = 0`` the torque about A is::

    tau = -(l/2) m g + h R_x - (h - d) F_fx + l F_fy            (full)
    tau ~ l F_fy + d F_fx - h F_sx - (l/2) m g                  (reduced)

Round-edged objects let the nail slide underneath when the edge radius
exceeds the nail tip radius; the object then tips into the grasp when
``l F_fy - (l/2) m g > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from scipy.optimize import brentq

from .catalog import (
    EdgeKind,
    Environment,
    FingernailSpec,
    FrictionSet,
    GelSpec,
    RigidObject2D,
)
from .gelcontact import (
    GelContactState,
    Pose2D,
    PoseInput,
    contact_angle,
    gel_pose_for_depth,
)

EQUILIBRIUM_TOL = 1e-9


class EquilibriumError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class EdgeKindError(ValueError):
    pass


class Phase(str, Enum):
    ROTATE = "rotate"
    SLIDE = "slide"
    STUCK = "stuck"


@dataclass(frozen=True)
class ContactForces:
    F_sx: float
    F_sy: float
    R_x: float
    F_fx: float
    F_fy: float
    contact_height_d: float

    @classmethod
    def from_gel(cls, F_sx: float, theta: float, F_fx: float, F_fy: float, d: float) -> "ContactForces":
        """Force set with F_sy tied to F_sx through the contact angle and R_x from equilibrium."""
        return cls(
            F_sx=F_sx,
            F_sy=F_sx * math.tan(theta),
            R_x=F_fx - F_sx,
            F_fx=F_fx,
            F_fy=F_fy,
            contact_height_d=d,
        )

    def scaled(self, lam: float) -> "ContactForces":
        return ContactForces(
            self.F_sx * lam, self.F_sy * lam, self.R_x * lam, self.F_fx * lam, self.F_fy * lam,
            self.contact_height_d,
        )


@dataclass(frozen=True)
class GraspPhasePrediction:
    phase: Phase
    net_torque: float
    transition: str | None = None
    diagnostic: str = ""
    forces: ContactForces | None = None
    full_torque: float | None = None
    gel_state: GelContactState | None = None

    @property
    def residual(self) -> float | None:
        """Difference between the full and reduced torque for the same force set."""
        if self.full_torque is None:
            return None
        return self.full_torque - self.net_torque


def _check(forces: ContactForces, obj: RigidObject2D) -> None:
    residual = forces.F_sx + forces.R_x - forces.F_fx
    if abs(residual) > EQUILIBRIUM_TOL:
        raise EquilibriumError(f"horizontal balance violated by {residual:.3e} N")
    if not 0 <= forces.contact_height_d <= obj.height_h:
        raise GeometryError("nail contact height must lie within the object height")


def _signed_sum(terms) -> float:
    """Sum of products of float factors, relative error below 1e-13.

    Each term is a tuple of factors.  The float path is accepted when its
    rounding error bound is below 1e-13 of the result; heavy cancellation
    falls back to exact rational arithmetic so the sign is always right.
    """
    products = [math.prod(t) for t in terms]
    total = math.fsum(products)
    # each product carries at most two roundings; keep the float result only
    # when that error is below 1e-13 of the total
    bound = 2.0**-52 * math.fsum(abs(p) for p in products)
    if abs(total) > 1e13 * bound:
        return total
    return float(sum((math.prod(Fraction(f) for f in t) for t in terms), Fraction(0)))


def rolling_torque(forces: ContactForces, obj: RigidObject2D, env: Environment) -> float:
    _check(forces, obj)
    l, h, d = obj.length_l, obj.height_h, forces.contact_height_d
    return _signed_sum((
        (-0.5, l, obj.mass, env.gravity_g),
        (h, forces.R_x),
        # (h - d) * F_fx, expanded so no factor is pre-rounded
        (-h, forces.F_fx),
        (d, forces.F_fx),
        (l, forces.F_fy),
    ))


def rolling_torque_reduced(forces: ContactForces, obj: RigidObject2D, env: Environment) -> float:
    _check(forces, obj)
    l, h, d = obj.length_l, obj.height_h, forces.contact_height_d
    return _signed_sum((
        (l, forces.F_fy),
        (d, forces.F_fx),
        (-h, forces.F_sx),
        (-0.5, l, obj.mass, env.gravity_g),
    ))


def sliding_torque(obj: RigidObject2D, F_fy: float, env: Environment) -> float:
    l = obj.length_l
    return _signed_sum(((l, F_fy), (-0.5, l, obj.mass, env.gravity_g)))


def exceeds_half_weight(F_fy: float, mass: float, g: float) -> bool:
    """Exact ``F_fy > mass*g/2`` for float inputs."""
    lhs, rhs = 2.0 * F_fy, mass * g
    gap = lhs - rhs
    if abs(gap) > 8 * math.ulp(max(abs(lhs), abs(rhs), 1e-300)):
        return gap > 0
    return Fraction(F_fy) > Fraction(mass) * Fraction(g) / 2


def sliding_grasp_criterion(obj: RigidObject2D, nail: FingernailSpec, F_fy: float, env: Environment) -> bool:
    if obj.edge.kind is not EdgeKind.ROUND:
        raise EdgeKindError(f"{obj.name} has sharp edges; use the rolling analysis")
    if not obj.edge.radius_R > nail.tip_radius_r:
        return False
    return exceeds_half_weight(F_fy, obj.mass, env.gravity_g)


def nail_contact_height(obj: RigidObject2D, nail: FingernailSpec) -> float:
    # tip circle resting on the ground touches the side face at its centre height
    return min(nail.tip_radius_r, obj.height_h)


def corner_clearance(nail: FingernailSpec) -> float:
    """Height the object's lower corner must rise before the tip gets underneath."""
    return nail.tip_radius_r * (1.0 + math.cos(math.radians(nail.tip_angle)))


def transition_angle(obj: RigidObject2D, nail: FingernailSpec, pivot_height: float) -> float:
    """Rotation about A at which the nail tip clears the lower corner."""
    arm = math.hypot(obj.length_l, pivot_height)
    return math.asin(min(1.0, corner_clearance(nail) / arm))


def rolling_nail_force(magnitude: float, nail: FingernailSpec) -> tuple[float, float]:
    """Nail push against a sharp side face, inclined by the tip angle."""
    a = math.radians(nail.tip_angle)
    return magnitude * math.cos(a), magnitude * math.sin(a)


def sliding_nail_force(magnitude: float, nail: FingernailSpec) -> tuple[float, float]:
    """Nail under the object: load carried by the inclined upper face."""
    a = math.radians(nail.tip_angle)
    return magnitude * math.sin(a), magnitude * math.cos(a)


def predict_rolling_phase(
    pose: PoseInput,
    nail_force: tuple[float, float],
    obj: RigidObject2D,
    gel: GelSpec,
    friction: FrictionSet,
    env: Environment,
    nail: FingernailSpec | None = None,
) -> GraspPhasePrediction:
    """Static phase of a sharp-edged object at one pose.

    Positive reduced torque lifts the object off B and it rotates about A.
    Otherwise it either stays put or slips at B when the ground friction
    cannot supply the reaction that balance demands.
    """
    nail = nail or FingernailSpec()
    if obj.edge.kind is not EdgeKind.SHARP:
        raise EdgeKindError(f"{obj.name} has round edges; use the sliding criterion")
    if not friction.gel_dominant:
        return GraspPhasePrediction(
            Phase.STUCK, 0.0,
            diagnostic="gel friction does not dominate; pivoting at A is not justified",
        )
    F_fx, F_fy = nail_force
    d = nail_contact_height(obj, nail)
    if d > obj.height_h:
        raise GeometryError("nail contact above the object top face")

    state = contact_angle(pose, gel, obj, friction)
    F_sx = state.normal_force * math.cos(state.contact_angle_theta)
    forces = ContactForces.from_gel(F_sx, state.contact_angle_theta, F_fx, F_fy, d)
    tau = rolling_torque_reduced(forces, obj, env)
    full = rolling_torque(forces, obj, env)

    if tau > 0:
        a_y = state.contact_point_A[1] - (pose.object_pose_p_obj.y - obj.height_h / 2)
        phi = transition_angle(obj, nail, max(a_y, 0.0))
        return GraspPhasePrediction(
            Phase.ROTATE, tau, transition="slide",
            diagnostic=f"nail clears the corner after {math.degrees(phi):.2f} deg about A",
            forces=forces, full_torque=full, gel_state=state,
        )
    normal_B = obj.mass * env.gravity_g - forces.F_sy - F_fy
    if normal_B <= 0 or abs(forces.R_x) > friction.mu_surface_object * normal_B:
        return GraspPhasePrediction(
            Phase.SLIDE, tau, diagnostic="slip at B", forces=forces, full_torque=full, gel_state=state,
        )
    return GraspPhasePrediction(Phase.STUCK, tau, forces=forces, full_torque=full, gel_state=state)


@dataclass(frozen=True)
class SequenceStep:
    travel: float
    depth: float
    phase: Phase
    torque: float
    corner_height: float


@dataclass(frozen=True)
class NailSequenceResult:
    grasped: bool
    steps: list = field(default_factory=list)
    reason: str = ""

    @property
    def phases(self) -> list:
        out = []
        for s in self.steps:
            if not out or out[-1] is not s.phase:
                out.append(s.phase)
        return out


def equilibrium_depth(obj: RigidObject2D, gel: GelSpec, F_sx: float, lateral: float) -> float:
    """Gel indentation at which the horizontal gel reaction equals ``F_sx``."""
    if F_sx <= 0:
        return 0.0
    obj_pose = Pose2D(0.0, obj.height_h / 2, 0.0)

    def excess(depth):
        gel_pose = gel_pose_for_depth(obj_pose, obj, gel, depth, lateral)
        st = contact_angle(PoseInput(obj_pose, gel_pose), gel, obj)
        return st.normal_force * math.cos(st.contact_angle_theta) - F_sx

    hi = 1e-6
    while excess(hi) < 0:
        hi *= 2
        if hi > gel.curvature_radius / 2:
            raise GeometryError("gel cannot balance the nail force")
    return brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-12)


def simulate_nail_grasp(
    obj: RigidObject2D,
    nail_force_magnitude: float,
    gel: GelSpec,
    friction: FrictionSet,
    env: Environment,
    nail: FingernailSpec | None = None,
    step: float = 0.1e-3,
    stroke: float = 5e-3,
    gel_lateral: float = 0.2e-3,
) -> NailSequenceResult:
    """Quasi-static scoop of a sharp-edged object.

    The stationary gel balances the horizontal nail push at each step.  Once
    the torque about A turns positive the object pivots (small rotation) and
    every further increment of nail travel lifts the lower corner by
    ``step * tan(tip_angle)``; when the corner clears the tip the nail slides
    underneath and the grasp closes if the sliding torque is positive.
    """
    nail = nail or FingernailSpec()
    F_fx, F_fy = rolling_nail_force(nail_force_magnitude, nail)
    depth = equilibrium_depth(obj, gel, F_fx, gel_lateral)
    obj_pose = Pose2D(0.0, obj.height_h / 2, 0.0)
    pose = PoseInput(obj_pose, gel_pose_for_depth(obj_pose, obj, gel, depth, gel_lateral))
    clearance = corner_clearance(nail)
    rise = step * math.tan(math.radians(nail.tip_angle))

    steps = []
    corner = 0.0
    n_steps = int(round(stroke / step))
    for k in range(1, n_steps + 1):
        pred = predict_rolling_phase(pose, (F_fx, F_fy), obj, gel, friction, env, nail)
        if pred.phase is Phase.ROTATE:
            corner += rise
            phase = Phase.SLIDE if corner >= clearance else Phase.ROTATE
        else:
            phase = pred.phase
        steps.append(SequenceStep(k * step, depth, phase, pred.net_torque, corner))
        if pred.phase is Phase.STUCK and not friction.gel_dominant:
            return NailSequenceResult(False, steps, "friction regime")
        if pred.phase is Phase.SLIDE and corner == 0.0:
            return NailSequenceResult(False, steps, "slip at B")
        if phase is Phase.SLIDE:
            _, lift_fy = sliding_nail_force(nail_force_magnitude, nail)
            ok = sliding_torque(obj, lift_fy, env) > 0
            return NailSequenceResult(ok, steps, "" if ok else "slip")
    return NailSequenceResult(False, steps, "rotation")
