"""Parametric surrogate for the hyperelastic gel contact.

The gel cross-section is a circle of radius ``gel.curvature_radius``.  An
object face that cuts into it by ``delta`` (measured along the face normal)
produces a contact patch on the chord ``|u| <= c``, ``c = sqrt(R**2 - (R-delta)**2)``,
clipped to the extent of the face.  The local pressure is taken
proportional to the penetration ``sqrt(R**2 - u**2) - (R - delta)``; the
contact angle is the direction of the pressure-weighted resultant of the
undeformed surface normals, scaled by a stiffness-dependent bulging factor.

Normal load follows a Hertz-type law ``k1 * delta**1.5`` with
``k1 = 32/3 * C10 * sqrt(R)`` (incompressible, small-strain shear modulus
``2*C10``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import FrictionSet, GelSpec, RigidObject2D


class NoContactError(ValueError):
    pass


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.phi)):
            raise ValueError("pose must be finite")


@dataclass(frozen=True)
class PoseInput:
    object_pose_p_obj: Pose2D
    gel_pose_p_gel: Pose2D


@dataclass(frozen=True)
class GelContactState:
    indentation_depth: float
    contact_angle_theta: float
    contact_point_A: tuple[float, float]
    normal_force: float
    tangential_capacity: float
    face_normal: tuple[float, float] = (1.0, 0.0)


# Bulge gain per unit of (delta/R), normalised to the reference C10 of a 16 Shore A gel.
BULGE_GAIN = 0.5
REFERENCE_C10 = 0.11e6
# Point-A migration per metre of indentation, capped at this fraction of the patch half-width.
MIGRATION_RATE = 1.0
MIGRATION_CAP = 0.3


def hertz_stiffness(gel: GelSpec) -> float:
    c10 = gel.yeoh_coefficients_Cfem[0]
    return 32.0 / 3.0 * c10 * math.sqrt(gel.curvature_radius)


def normal_force_from_indentation(depth: float, gel: GelSpec) -> float:
    if depth < 0:
        raise ValueError(f"indentation depth must be non-negative, got {depth}")
    return hertz_stiffness(gel) * depth**1.5


def normal_force_gradient(depth: float, gel: GelSpec) -> float:
    if depth < 0:
        raise ValueError(f"indentation depth must be non-negative, got {depth}")
    return 1.5 * hertz_stiffness(gel) * math.sqrt(depth)


def bulge_alpha(gel: GelSpec) -> float:
    # softer gel bulges more around the indenter
    return BULGE_GAIN * REFERENCE_C10 / gel.yeoh_coefficients_Cfem[0]


def chord_half_width(radius: float, depth: float) -> float:
    return math.sqrt(max(0.0, radius * radius - (radius - depth) ** 2))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def patch_moments(u_lo: float, u_hi: float, R: float, depth: float) -> tuple[float, float, float]:
    """Integrals of pressure, pressure*u and pressure*n_normal over [u_lo, u_hi].

    The pressure is written as ``(depth*(2R - depth) - u**2) / (sqrt(R**2 - u**2) + R - depth)``,
    which avoids the cancellation of the direct difference at shallow depth; the
    integrand is analytic on the patch so Gauss-Legendre converges to round-off.
    """
    half = 0.5 * (u_hi - u_lo)
    u = 0.5 * (u_hi + u_lo) + half * _GL_X
    w = half * _GL_W
    s = np.sqrt(R * R - u * u)
    p = (depth * (2.0 * R - depth) - u * u) / (s + (R - depth))
    return float(w @ p), float(w @ (p * u)), float(w @ (p * s))


def theta_from_patch(u_lo: float, u_hi: float, R: float, depth: float, alpha: float) -> float:
    """Contact angle magnitude for the clipped patch ``[u_lo, u_hi]`` (face coordinates)."""
    if u_hi - u_lo <= 0.0 or depth == 0.0:
        # point contact: the normal at the touching point
        u = 0.5 * (u_lo + u_hi)
        geo = math.asin(min(1.0, abs(u) / R))
    else:
        m0, mu, mn = patch_moments(u_lo, u_hi, R, depth)
        geo = math.atan2(abs(mu), mn) if m0 > 0 else 0.0
    theta = geo * (1.0 + alpha * depth / R)
    return min(theta, math.pi / 2 - 1e-9)


def _rot(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _faces(obj: RigidObject2D, pose: Pose2D):
    """Yield (outward normal, face centre, tangent, half extent) for the four sides."""
    Rm = _rot(pose.phi)
    centre = np.array([pose.x, pose.y])
    hl, hh = obj.length_l / 2, obj.height_h / 2
    local = [
        ((-1.0, 0.0), (-hl, 0.0), hh),
        ((1.0, 0.0), (hl, 0.0), hh),
        ((0.0, -1.0), (0.0, -hh), hl),
        ((0.0, 1.0), (0.0, hh), hl),
    ]
    for n, c, half in local:
        n_w = Rm @ np.array(n)
        c_w = centre + Rm @ np.array(c)
        t_w = np.array([-n_w[1], n_w[0]])
        yield n_w, c_w, t_w, half


def contact_angle(
    pose: PoseInput,
    gel: GelSpec,
    obj: RigidObject2D,
    friction: FrictionSet | None = None,
) -> GelContactState:
    """Contact state of the gel against the object face that faces it."""
    friction = friction or FrictionSet()
    R = gel.curvature_radius
    g = np.array([pose.gel_pose_p_gel.x, pose.gel_pose_p_gel.y])
    o = np.array([pose.object_pose_p_obj.x, pose.object_pose_p_obj.y])
    towards_gel = g - o
    faces = list(_faces(obj, pose.object_pose_p_obj))
    n, c, t, half = max(faces, key=lambda f: float(f[0] @ towards_gel))

    dist = float((g - c) @ n)
    depth = R - dist
    if depth < -1e-15:
        raise NoContactError(f"gel does not reach the object (gap {-depth:.3e} m)")
    depth = max(depth, 0.0)

    # face coordinate of the gel axis foot and the face extent relative to it
    axis_u = float((g - c) @ t)
    u_lo, u_hi = -half - axis_u, half - axis_u
    chord = chord_half_width(R, depth)
    lo, hi = max(u_lo, -chord), min(u_hi, chord)
    if lo > hi:
        raise NoContactError("gel misses the object face laterally")

    theta = theta_from_patch(lo, hi, R, depth, bulge_alpha(gel))

    # deepest point of the patch, then migration towards the face centre
    u_deep = min(max(0.0, lo), hi)
    face_mid = 0.5 * (u_lo + u_hi)
    shift = min(MIGRATION_RATE * depth, MIGRATION_CAP * 0.5 * (hi - lo), abs(face_mid - u_deep))
    u_A = u_deep + math.copysign(shift, face_mid - u_deep) if shift > 0 else u_deep
    point = c + t * (axis_u + u_A)

    force = normal_force_from_indentation(depth, gel)
    return GelContactState(
        indentation_depth=depth,
        contact_angle_theta=theta,
        contact_point_A=(float(point[0]), float(point[1])),
        normal_force=force,
        tangential_capacity=friction.mu_gel_object * force,
        face_normal=(float(-n[0]), float(-n[1])),
    )


def gel_pose_for_depth(obj_pose: Pose2D, obj: RigidObject2D, gel: GelSpec, depth: float, lateral: float) -> Pose2D:
    """Gel centre pressing the object's left face by ``depth`` with a vertical offset ``lateral``."""
    R = gel.curvature_radius
    Rm = _rot(obj_pose.phi)
    face_c = np.array([obj_pose.x, obj_pose.y]) + Rm @ np.array([-obj.length_l / 2, 0.0])
    n = Rm @ np.array([-1.0, 0.0])
    t = np.array([-n[1], n[0]])
    centre = face_c + n * (R - depth) - t * lateral
    return Pose2D(float(centre[0]), float(centre[1]), 0.0)
