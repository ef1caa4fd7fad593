"""Two-fingertip grasp feasibility (planar antipodal friction-cone closure)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Environment, RigidObject2D

DEFAULT_MAX_APERTURE = 40e-3
# effective friction gain credited to the compliant gel contact
COMPLIANCE_MU_BONUS = 0.2


class ApertureError(ValueError):
    pass


@dataclass(frozen=True)
class Contact:
    point: tuple[float, float]
    normal: tuple[float, float]  # inward, towards the object interior

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = float(np.hypot(*n))
        if not norm > 0:
            raise ValueError("contact normal must be non-zero")
        object.__setattr__(self, "normal", (float(n[0] / norm), float(n[1] / norm)))


@dataclass(frozen=True)
class TwoFingerGrasp:
    contact_left: Contact
    contact_right: Contact
    squeeze_force: float
    friction_mu: float

    def __post_init__(self):
        if not self.squeeze_force > 0:
            raise ValueError("squeeze force must be positive")
        if self.friction_mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        p1 = np.asarray(self.contact_left.point)
        p2 = np.asarray(self.contact_right.point)
        if not (np.dot(self.contact_left.normal, p2 - p1) > 0 and np.dot(self.contact_right.normal, p1 - p2) > 0):
            raise ValueError("contact normals must point into the object")

    @property
    def separation(self) -> float:
        p1 = np.asarray(self.contact_left.point)
        p2 = np.asarray(self.contact_right.point)
        return float(np.linalg.norm(p2 - p1))


def _angle_between(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.acos(max(-1.0, min(1.0, cos)))


def force_closure(grasp: TwoFingerGrasp) -> bool:
    """Segment between the contacts lies strictly inside both friction cones."""
    half_angle = math.atan(grasp.friction_mu)
    p1 = np.asarray(grasp.contact_left.point)
    p2 = np.asarray(grasp.contact_right.point)
    a1 = _angle_between(grasp.contact_left.normal, p2 - p1)
    a2 = _angle_between(grasp.contact_right.normal, p1 - p2)
    return a1 < half_angle and a2 < half_angle


def load_supported(grasp: TwoFingerGrasp, obj: RigidObject2D, env: Environment, accel: float = 0.0) -> bool:
    return 2.0 * grasp.friction_mu * grasp.squeeze_force > obj.mass * (env.gravity_g + accel)


def fingertip_feasible(
    grasp: TwoFingerGrasp,
    obj: RigidObject2D,
    env: Environment,
    max_aperture: float = DEFAULT_MAX_APERTURE,
) -> bool:
    if grasp.separation > max_aperture:
        raise ApertureError(
            f"{obj.name}: contacts {grasp.separation * 1e3:.1f} mm apart exceed the "
            f"{max_aperture * 1e3:.1f} mm aperture"
        )
    return force_closure(grasp) and load_supported(grasp, obj, env)


def antipodal_grasp(
    span: float,
    squeeze_force: float,
    friction_mu: float,
    misalignment: float = 0.0,
) -> TwoFingerGrasp:
    """Grasp across ``span`` with the right normal tilted by ``misalignment`` radians."""
    left = Contact((-span / 2, 0.0), (1.0, 0.0))
    right = Contact((span / 2, 0.0), (-math.cos(misalignment), math.sin(misalignment)))
    return TwoFingerGrasp(left, right, squeeze_force, friction_mu)
