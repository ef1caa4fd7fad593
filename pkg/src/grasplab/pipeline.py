"""Grasp-evaluation state machine and single-trial driver.

Tap:        Grasp -> Move -> Detect -(+)-> Move -> Ungrasp -> Done
                                    -(-)-> Grasp (regrasp)
Fingernail / fingertip:
            Grasp -(physics ok)-> Move -(hold ok)-> Ungrasp -> Done
            failures at Grasp or Move reset to Grasp (regrasp)

A regrasp beyond the cap ends in Failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .adhesion import LiftCategory, sample_tap_trial
from .catalog import EdgeKind, GelSpec, RigidObject2D
from .config import RoiSpec, SimConfig, Strategy
from .gelcontact import Pose2D
from .nailgrasp import (
    GraspPhasePrediction,
    NailSequenceResult,
    Phase,
    simulate_nail_grasp,
    sliding_grasp_criterion,
    sliding_nail_force,
    sliding_torque,
)
from .sensorsim import (
    RenderConfig,
    add_sensor_noise,
    default_baselines,
    detect_grasp,
    footprint_height_map,
    reference_frame,
    render_frame,
)
from .tipgrasp import ApertureError, antipodal_grasp, fingertip_feasible, load_supported

DEFAULT_REGRASP_CAP = 5
TAP_MAX_PLANAR = 4e-3
TAP_MAX_MASS = 0.2e-3
THIN_MAX_HEIGHT = 4e-3


class PipelinePhase(str, Enum):
    GRASP = "Grasp"
    MOVE = "Move"
    DETECT = "Detect"
    UNGRASP = "Ungrasp"
    DONE = "Done"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (PipelinePhase.DONE, PipelinePhase.FAILED)


class Outcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"


class FailureReason(str, Enum):
    NO_DETECT = "no_detect"
    SLIP = "slip"
    ROTATION = "rotation"
    APERTURE = "aperture"


class InvalidTransitionError(ValueError):
    pass


class PlacementError(ValueError):
    pass


def select_strategy(obj: RigidObject2D) -> Strategy:
    if obj.planar_max <= TAP_MAX_PLANAR and obj.mass <= TAP_MAX_MASS:
        return Strategy.TAP
    if obj.height_h <= THIN_MAX_HEIGHT and obj.planar_max > TAP_MAX_PLANAR:
        return Strategy.FINGERNAIL
    return Strategy.FINGERTIP


# --- transition relation ----------------------------------------------------

P = PipelinePhase
TAP_EDGES = frozenset({
    (P.GRASP, P.MOVE), (P.MOVE, P.DETECT), (P.DETECT, P.MOVE), (P.DETECT, P.GRASP),
    (P.DETECT, P.FAILED), (P.MOVE, P.UNGRASP), (P.UNGRASP, P.DONE),
})
PHYSICS_EDGES = frozenset({
    (P.GRASP, P.MOVE), (P.GRASP, P.GRASP), (P.GRASP, P.FAILED), (P.MOVE, P.UNGRASP),
    (P.MOVE, P.GRASP), (P.MOVE, P.FAILED), (P.UNGRASP, P.DONE),
})


def allowed_edges(strategy: Strategy) -> frozenset:
    return TAP_EDGES if strategy is Strategy.TAP else PHYSICS_EDGES


@dataclass(frozen=True)
class MachineState:
    phase: PipelinePhase = PipelinePhase.GRASP
    regrasps: int = 0
    # tap only: the detector has confirmed the object since the last grasp
    confirmed: bool = False


def _physics_ok(physics) -> bool:
    """Accept a bool, a phase, or a phase/sequence prediction as the physics gate."""
    if isinstance(physics, bool):
        return physics
    if isinstance(physics, Phase):
        return physics is not Phase.STUCK
    if isinstance(physics, NailSequenceResult):
        return physics.grasped
    if isinstance(physics, GraspPhasePrediction):
        return physics.phase is Phase.ROTATE
    raise TypeError(f"unsupported physics signal {physics!r}")


def transition_step(
    state: MachineState | PipelinePhase,
    strategy: Strategy,
    detector: bool | None = None,
    physics=None,
    cap: int = DEFAULT_REGRASP_CAP,
) -> MachineState:
    if isinstance(state, PipelinePhase):
        state = MachineState(state)
    phase = state.phase
    if phase.terminal:
        raise InvalidTransitionError(f"{phase.value} is terminal")

    def reset() -> MachineState:
        if state.regrasps >= cap:
            return MachineState(P.FAILED, state.regrasps)
        return MachineState(P.GRASP, state.regrasps + 1)

    if strategy is Strategy.TAP:
        if phase is P.GRASP:
            return MachineState(P.MOVE, state.regrasps)
        if phase is P.MOVE:
            nxt = P.UNGRASP if state.confirmed else P.DETECT
            return MachineState(nxt, state.regrasps, state.confirmed)
        if phase is P.DETECT:
            if detector is None:
                raise InvalidTransitionError("Detect needs a detector signal")
            return MachineState(P.MOVE, state.regrasps, True) if detector else reset()
        if phase is P.UNGRASP:
            return MachineState(P.DONE, state.regrasps, state.confirmed)
    else:
        if phase is P.DETECT:
            raise InvalidTransitionError(f"{strategy.value} has no Detect phase")
        if phase in (P.GRASP, P.MOVE):
            if physics is None:
                raise InvalidTransitionError(f"{phase.value} needs a physics signal")
            if not _physics_ok(physics):
                return reset()
            return MachineState(P.MOVE if phase is P.GRASP else P.UNGRASP, state.regrasps)
        if phase is P.UNGRASP:
            return MachineState(P.DONE, state.regrasps)
    raise InvalidTransitionError(f"no edge from {phase.value} for {strategy.value}")


# --- trial records --------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    phase_from: PipelinePhase
    phase_to: PipelinePhase
    t_ms: float
    detector: float | None = None
    torque: float | None = None


@dataclass(frozen=True)
class TrialRecord:
    object_name: str
    strategy: Strategy
    placement: Pose2D
    phase_trace: tuple
    regrasp_count: int
    outcome: Outcome
    failure_reason: FailureReason | None = None
    transitions: tuple = ()
    trial_id: int = 0

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def _fmt(value) -> str:
    if value is None:
        return "-"
    return f"{value:.6e}"


def trace_lines(record: TrialRecord) -> list[str]:
    return [
        "\t".join((f"{record.object_name}#{record.trial_id}", t.phase_from.value, t.phase_to.value, f"{t.t_ms:.1f}",
                   _fmt(t.detector), _fmt(t.torque)))
        for t in record.transitions
    ]


def parse_trace_line(line: str) -> tuple:
    tid, a, b, t, det, tq = line.rstrip("\n").split("\t")
    parse = (lambda s: None if s == "-" else float(s))
    return tid, PipelinePhase(a), PipelinePhase(b), float(t), parse(det), parse(tq)


_SUCCESS_TAIL = {
    Strategy.TAP: (P.GRASP, P.MOVE, P.DETECT, P.MOVE, P.UNGRASP, P.DONE),
}
_PHYSICS_TAIL = (P.GRASP, P.MOVE, P.UNGRASP, P.DONE)


def trace_problems(record: TrialRecord, cap: int = DEFAULT_REGRASP_CAP) -> list[str]:
    """Everything wrong with a record's trace (empty list = valid)."""
    problems = []
    phases = [p for p, _ in record.phase_trace]
    times = [t for _, t in record.phase_trace]
    edges = allowed_edges(record.strategy)
    if not phases or phases[0] is not P.GRASP:
        problems.append("trace must start in Grasp")
    if not phases or not phases[-1].terminal:
        problems.append("trace does not terminate")
    for a, b in zip(phases, phases[1:]):
        if (a, b) not in edges:
            problems.append(f"invalid edge {a.value}->{b.value}")
    if any(t1 < t0 for t0, t1 in zip(times, times[1:])):
        problems.append("timestamps decrease")
    if record.strategy is not Strategy.TAP and P.DETECT in phases:
        problems.append("Detect in a non-tap trace")
    if phases.count(P.UNGRASP) > 1:
        problems.append("more than one Ungrasp")
    resets = sum(1 for a, b in zip(phases, phases[1:]) if b is P.GRASP)
    if resets != record.regrasp_count:
        problems.append("regrasp_count does not match the trace")
    if record.regrasp_count > cap:
        problems.append("regrasp cap exceeded")
    tail = _SUCCESS_TAIL.get(record.strategy, _PHYSICS_TAIL)
    ends_well = tuple(phases[-len(tail):]) == tail
    if record.success != ends_well:
        problems.append("outcome disagrees with the trace")
    if record.success == (record.failure_reason is not None):
        problems.append("failure_reason must be set exactly for failures")
    return problems


# --- trial execution -------------------------------------------------------

def edge_factor(placement: Pose2D, roi: RoiSpec) -> float:
    """Normalised distance of the object centre from the ROI centre (0 centre, 1 boundary)."""
    return max(abs(placement.x) / (roi.width / 2), abs(placement.y) / (roi.height / 2))


def reach_quality(e: float, margin: float, aim_noise: float = 0.0) -> float:
    """Fraction of the nominal contact achieved near the ROI boundary."""
    return min(1.0, max(0.0, (1.0 - e) / margin + aim_noise))


# one attempt's aim error, in units of the edge margin
AIM_SIGMA = 0.5


@lru_cache(maxsize=8)
def _baselines(gel: GelSpec, cfg: RenderConfig, threshold: float):
    return default_baselines(gel, cfg, threshold)


@lru_cache(maxsize=64)
def _held_frame(length: float, width: float, gel: GelSpec, cfg: RenderConfig):
    return render_frame(footprint_height_map(length, width, cfg=cfg), gel, cfg=cfg)


def _tap_attempt(obj, q, rng, config: SimConfig):
    pc = config.pipeline
    gel = config.tap_gel
    tm = config.tap_model
    params = tm.params_for(obj, gel, config.env, press=max(q, 1e-3))
    outcome = sample_tap_trial(params, obj, config.env, rng.integers(2**63), tm)
    held = outcome.category is LiftCategory.LIFT
    if outcome.category is LiftCategory.SHORT_LIFT:
        # a short lift drops the object somewhere within 3 s of pickup
        held = rng.uniform(0.0, 3000.0) > pc.move_ms
    cfg = config.render
    frame = _held_frame(obj.length_l, obj.width, gel, cfg) if held else reference_frame(gel, cfg=cfg)
    noisy = add_sensor_noise(frame, rng)
    detected, score = detect_grasp(noisy, _baselines(gel, cfg, pc.detector_threshold))
    return detected, score, outcome.net_force


def _oriented(obj: RigidObject2D, phi: float) -> RigidObject2D:
    c, s = abs(math.cos(phi)), abs(math.sin(phi))
    span = obj.length_l * c + obj.width * s
    other = obj.length_l * s + obj.width * c
    return replace(obj, length_l=span, width=other)


def _nail_attempt(obj, q, rng, config: SimConfig):
    """Returns (grasp ok, hold ok, failure reason, torque)."""
    pc = config.pipeline
    force = pc.nail_force * rng.uniform(1 - pc.nail_force_jitter, 1 + pc.nail_force_jitter) * q
    if force <= 0:
        return False, False, FailureReason.SLIP, 0.0
    gel = config.gels[pc.tap_gel]
    if obj.edge.kind is EdgeKind.SHARP:
        seq = simulate_nail_grasp(obj, force, gel, config.friction, config.env, config.nail)
        torque = seq.steps[-1].torque if seq.steps else 0.0
        if not seq.grasped:
            reason = FailureReason.SLIP if "slip" in seq.reason else FailureReason.ROTATION
            return False, False, reason, torque
    else:
        _, fy = sliding_nail_force(force, config.nail)
        torque = sliding_torque(obj, fy, config.env)
        if not sliding_grasp_criterion(obj, config.nail, fy, config.env):
            return False, False, FailureReason.SLIP, torque
    # hold check while moving: the pinch must also carry the transport acceleration
    _, fy = sliding_nail_force(force, config.nail)
    hold = obj.length_l * fy - 0.5 * obj.length_l * obj.mass * (config.env.gravity_g + pc.move_accel)
    return True, hold > 0, FailureReason.SLIP, torque


def _tip_attempt(obj, q, rng, config: SimConfig):
    pc = config.pipeline
    squeeze = pc.squeeze_force * rng.uniform(1 - pc.squeeze_jitter, 1 + pc.squeeze_jitter) * q
    mis = math.radians(pc.misalignment_sigma_deg * rng.standard_normal() + pc.edge_misalignment_deg * (1 - q))
    mu = config.friction.mu_gel_object + pc.compliance_mu_bonus
    if squeeze <= 0 or abs(mis) >= math.pi / 2:
        # no squeeze, or the finger meets the object side-on and misses the face
        return False, False, FailureReason.SLIP
    grasp = antipodal_grasp(obj.length_l, squeeze, mu, mis)
    ok = fingertip_feasible(grasp, obj, config.env, pc.max_aperture)
    hold = load_supported(grasp, obj, config.env, pc.move_accel)
    return ok, hold, FailureReason.SLIP


def run_trial(
    obj: RigidObject2D,
    placement: Pose2D,
    strategy: Strategy,
    config: SimConfig | None = None,
    seed=0,
    trial_id: int = 0,
) -> TrialRecord:
    config = config or SimConfig()
    pc = config.pipeline
    roi = config.rois[strategy]
    if not (abs(placement.x) < roi.width / 2 and abs(placement.y) < roi.height / 2):
        raise PlacementError(
            f"placement ({placement.x * 1e3:.3f}, {placement.y * 1e3:.3f}) mm outside the "
            f"{roi.width * 1e3:g}x{roi.height * 1e3:g} mm ROI"
        )
    rng = np.random.default_rng(seed)
    e = edge_factor(placement, roi)
    oriented = _oriented(obj, placement.phi)
    durations = {P.GRASP: pc.grasp_ms, P.MOVE: pc.move_ms, P.DETECT: pc.detect_ms, P.UNGRASP: pc.ungrasp_ms}

    state = MachineState()
    t = 0.0
    trace = [(state.phase, t)]
    transitions = []
    reason = None
    pending = None  # tap: detector verdict from the current attempt; others: hold verdict

    while not state.phase.terminal:
        detector = physics = None
        score = torque = None
        phase = state.phase
        if phase is P.GRASP:
            q = reach_quality(e, pc.edge_margin, AIM_SIGMA * rng.standard_normal())
            if strategy is Strategy.TAP:
                pending = _tap_attempt(obj, q, rng, config)
            elif strategy is Strategy.FINGERNAIL:
                ok, hold, why, torque = _nail_attempt(oriented, q, rng, config)
                physics, pending = ok, (hold, why)
                if not ok:
                    reason = why
            else:
                try:
                    ok, hold, why = _tip_attempt(oriented, q, rng, config)
                except ApertureError:
                    state = MachineState(P.FAILED, state.regrasps)
                    reason = FailureReason.APERTURE
                    t += durations[P.GRASP]
                    transitions.append(Transition(P.GRASP, P.FAILED, t))
                    trace.append((P.FAILED, t))
                    break
                physics, pending = ok, (hold, why)
                if not ok:
                    reason = why
        elif phase is P.MOVE and strategy is not Strategy.TAP:
            hold, why = pending
            physics = hold
            if not hold:
                reason = why
        elif phase is P.DETECT:
            detector, score, _ = pending
            if not detector:
                reason = FailureReason.NO_DETECT
        t += durations[phase]
        nxt = transition_step(state, strategy, detector=detector, physics=physics, cap=pc.regrasp_cap)
        transitions.append(Transition(phase, nxt.phase, t, score, torque))
        trace.append((nxt.phase, t))
        state = nxt

    success = state.phase is P.DONE
    return TrialRecord(
        object_name=obj.name,
        strategy=strategy,
        placement=placement,
        phase_trace=tuple(trace),
        regrasp_count=state.regrasps,
        outcome=Outcome.SUCCESS if success else Outcome.FAILURE,
        failure_reason=None if success else reason,
        transitions=tuple(transitions),
        trial_id=trial_id,
    )
