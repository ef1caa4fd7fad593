"""Tap-grasp adhesion physics.

Adhesion between the gel and a small object is the sum of an electrostatic
term ``pi*eps0*R_o*sigma**2/d`` and a sphere-sphere van der Waals term
``A*R_o*R_dt/(6*(R_o+R_dt)*d**2)``; surface tension is zero in the dry
setting.  An object lifts when the adhesion strictly exceeds its weight.

The stochastic part (per-tap jitter of gap, contact area, charge and hold
threshold) is described by :class:`TapModel`.  :func:`expected_tap_rates`
integrates the same model in closed form over the gap and by quadrature over
the rest; the calibration in :mod:`grasplab.harness` relies on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .catalog import (
    EPSILON0,
    Environment,
    GelSpec,
    MaterialClass,
    RigidObject2D,
    SurfaceMaterial,
)

# Conductive objects bleed off surface charge.
METALLIC_CHARGE_FACTOR = 1e-3


class AdhesionDomainError(ValueError):
    pass


class LiftCategory(str, Enum):
    LIFT = "lift"
    SHORT_LIFT = "short_lift"
    NO_LIFT = "no_lift"

    @property
    def success(self) -> bool:
        return self is not LiftCategory.NO_LIFT


@dataclass(frozen=True)
class AdhesionParams:
    charge_density_sigma: float
    hamaker_A: float
    separation_d: float
    sensor_radius_Rdt: float = 15e-3
    contact_area_scale: float = 1.0
    epsilon0: float = EPSILON0

    def __post_init__(self):
        if not self.separation_d > 0:
            raise AdhesionDomainError(f"separation d must be positive, got {self.separation_d}")
        if not self.epsilon0 > 0:
            raise AdhesionDomainError("epsilon0 must be positive")
        if not self.hamaker_A > 0:
            raise AdhesionDomainError("A must be positive")
        if not 0 < self.contact_area_scale <= 1:
            raise AdhesionDomainError(
                f"contact_area_scale must be in (0, 1], got {self.contact_area_scale}"
            )
        if not self.sensor_radius_Rdt > 0:
            raise AdhesionDomainError("R_dt must be positive")


@dataclass(frozen=True)
class LiftOutcome:
    category: LiftCategory
    net_force: float


def _default_sigma_table() -> dict:
    # C/m^2 for non-metallic objects; metallic objects get METALLIC_CHARGE_FACTOR on top.
    return {
        SurfaceMaterial.ACRYLIC: 1.0e-4,
        SurfaceMaterial.WOOD: 4.0e-5,
        SurfaceMaterial.PAPER: 2.5e-5,
    }


@dataclass(frozen=True)
class TapModel:
    """Free parameters of the tap-grasp model.

    ``sigma_table`` maps the support surface to the charge density of a
    non-metallic object resting on it.
    """

    hamaker_A: float = 8.202e-18
    separation_d0: float = 0.4e-9
    sensor_radius_Rdt: float = 15e-3
    sigma_table: dict = field(default_factory=_default_sigma_table)
    margin_threshold: float = 2.582
    gap_log_sigma: float = 0.3
    area_jitter: float = 0.2
    charge_jitter: float = 0.2
    hold_log_sigma: float = 0.25

    def sigma_for(self, env: Environment) -> float:
        return self.sigma_table[env.surface_material]

    def params_for(
        self, obj: RigidObject2D, gel: GelSpec, env: Environment, press: float = 1.0
    ) -> AdhesionParams:
        """Nominal (un-jittered) parameters for one object/gel/surface triple."""
        return AdhesionParams(
            charge_density_sigma=self.sigma_for(env),
            hamaker_A=self.hamaker_A,
            separation_d=self.separation_d0,
            sensor_radius_Rdt=self.sensor_radius_Rdt,
            contact_area_scale=min(1.0, gel.contact_efficiency_eta * press),
        )

    def with_sigma(self, surface: SurfaceMaterial, value: float) -> "TapModel":
        table = dict(self.sigma_table)
        table[surface] = value
        return replace(self, sigma_table=table)


DEFAULT_TAP_MODEL = TapModel()


def _material_factor(obj: RigidObject2D) -> float:
    return METALLIC_CHARGE_FACTOR if obj.material is MaterialClass.METALLIC else 1.0


def electrostatic_force(params: AdhesionParams, obj: RigidObject2D) -> float:
    d = params.separation_d
    if not d > 0:
        raise AdhesionDomainError("separation d must be positive")
    value = math.pi * params.epsilon0 * obj.effective_radius_Ro * params.charge_density_sigma**2 / d
    return value * _material_factor(obj)


def vdw_force(params: AdhesionParams, obj: RigidObject2D) -> float:
    d = params.separation_d
    if not d > 0:
        raise AdhesionDomainError("separation d must be positive")
    Ro, Rdt = obj.effective_radius_Ro, params.sensor_radius_Rdt
    value = params.hamaker_A * Ro * Rdt / (6.0 * (Ro + Rdt) * d**2)
    return value * params.contact_area_scale


def adhesion_force(params: AdhesionParams, obj: RigidObject2D) -> float:
    # F_st is zero for dry contact
    return electrostatic_force(params, obj) + vdw_force(params, obj)


def lift_criterion(
    params: AdhesionParams,
    obj: RigidObject2D,
    env: Environment,
    margin_threshold: float = DEFAULT_TAP_MODEL.margin_threshold,
) -> LiftOutcome:
    """Classify a tap as lift / short lift / no lift from the net force.

    Zero net force does not lift.  A positive margin ``net/(m*g)`` below
    ``margin_threshold`` holds only briefly (short lift).
    """
    weight = obj.mass * env.gravity_g
    net = adhesion_force(params, obj) - weight
    if net <= 0:
        return LiftOutcome(LiftCategory.NO_LIFT, net)
    if weight > 0 and net / weight < margin_threshold:
        return LiftOutcome(LiftCategory.SHORT_LIFT, net)
    return LiftOutcome(LiftCategory.LIFT, net)


def jitter_params(params: AdhesionParams, rng: np.random.Generator, model: TapModel) -> tuple[AdhesionParams, float]:
    """Draw one tap's perturbed parameters and its hold-threshold multiplier.

    The draw order is fixed so that two calls with equally seeded generators
    see identical randomness regardless of the nominal parameters.
    """
    z_gap = rng.standard_normal()
    u_area = rng.uniform(-1.0, 1.0)
    u_charge = rng.uniform(-1.0, 1.0)
    z_hold = rng.standard_normal()
    jittered = replace(
        params,
        separation_d=params.separation_d * math.exp(model.gap_log_sigma * z_gap),
        contact_area_scale=min(1.0, params.contact_area_scale * (1.0 + model.area_jitter * u_area)),
        charge_density_sigma=params.charge_density_sigma * (1.0 + model.charge_jitter * u_charge),
    )
    return jittered, math.exp(model.hold_log_sigma * z_hold)


def sample_tap_trial(
    params: AdhesionParams,
    obj: RigidObject2D,
    env: Environment,
    seed,
    model: TapModel = DEFAULT_TAP_MODEL,
) -> LiftOutcome:
    rng = np.random.default_rng(seed)
    jittered, hold_factor = jitter_params(params, rng, model)
    return lift_criterion(jittered, obj, env, model.margin_threshold * hold_factor)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(24)
_GH_W = _GH_W / _GH_W.sum()


def _prob_force_exceeds(coef_e, coef_v, threshold, d0, log_sigma):
    """P(coef_e/d + coef_v/d**2 > threshold) for d = d0*exp(log_sigma*Z)."""
    coef_e, coef_v, threshold = np.broadcast_arrays(coef_e, coef_v, threshold)
    out = np.ones(threshold.shape)
    pos = threshold > 0
    t = threshold[pos]
    ce, cv = coef_e[pos], coef_v[pos]
    # positive root of cv*x**2 + ce*x - t in x = 1/d, rationalised
    x_star = 2.0 * t / (ce + np.sqrt(ce * ce + 4.0 * cv * t))
    with np.errstate(divide="ignore"):
        out[pos] = ndtr(-np.log(x_star * d0) / log_sigma)
    return out


def expected_tap_rates(
    obj: RigidObject2D,
    gel: GelSpec,
    env: Environment,
    model: TapModel = DEFAULT_TAP_MODEL,
    press: float = 1.0,
) -> tuple[float, float]:
    """Return ``(P(success), P(lift))`` of one jittered tap."""
    p = model.params_for(obj, gel, env, press)
    Ro, Rdt = obj.effective_radius_Ro, p.sensor_radius_Rdt
    ue = _GL_X[:, None]
    ua = _GL_X[None, :]
    w2 = (_GL_W[:, None] * _GL_W[None, :]) / 4.0
    sigma = p.charge_density_sigma * (1.0 + model.charge_jitter * ue)
    coef_e = math.pi * p.epsilon0 * Ro * sigma**2 * _material_factor(obj)
    scale = np.minimum(1.0, p.contact_area_scale * (1.0 + model.area_jitter * ua))
    coef_v = p.hamaker_A * Ro * Rdt / (6.0 * (Ro + Rdt)) * scale
    weight = obj.mass * env.gravity_g
    if weight <= 0:
        return 1.0, 1.0
    d0, ls = p.separation_d, model.gap_log_sigma
    p_success = float(np.sum(w2 * _prob_force_exceeds(coef_e, coef_v, weight, d0, ls)))
    thr = model.margin_threshold * np.exp(model.hold_log_sigma * _GH_X)
    lift_t = weight * (1.0 + thr)[:, None, None]
    p_lift_grid = _prob_force_exceeds(coef_e[None], coef_v[None], lift_t, d0, ls)
    p_lift = float(np.sum(_GH_W[:, None, None] * w2[None] * p_lift_grid))
    return p_success, p_lift
