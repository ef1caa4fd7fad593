"""grasplab command line: analyze, experiment, render, calibrate.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adhesion as adh
from .catalog import (
    CatalogError,
    EdgeKind,
    GelFinish,
    builtin_paper_catalog,
    find_object,
    load_catalog,
    milli_to_base,
)
from .config import ConfigError, SimConfig, Strategy, load_config
from .gelcontact import Pose2D, PoseInput, gel_pose_for_depth
from .nailgrasp import (
    corner_clearance,
    equilibrium_depth,
    predict_rolling_phase,
    rolling_nail_force,
    simulate_nail_grasp,
    sliding_grasp_criterion,
    sliding_nail_force,
)
from .harness import calibrate_adhesion, run_experiment
from .pipeline import select_strategy, trace_lines
from .tipgrasp import ApertureError, antipodal_grasp, fingertip_feasible, force_closure, load_supported

log = logging.getLogger("grasplab")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    catalog_path: Path | None
    config_path: Path | None
    master_seed: int
    trials: int
    jobs: int
    out: Path | None
    fmt: str

    def __post_init__(self):
        for p in (self.catalog_path, self.config_path):
            if p is not None and not p.is_file():
                raise UsageError(f"no such file: {p}")
        if self.trials < 1:
            raise UsageError("--trials must be at least 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")

    def catalog(self):
        return load_catalog(self.catalog_path) if self.catalog_path else builtin_paper_catalog()

    def sim_config(self) -> SimConfig:
        return load_config(self.config_path)


def _run_config(args) -> RunConfig:
    return RunConfig(
        catalog_path=Path(args.catalog) if args.catalog else None,
        config_path=Path(args.config) if args.config else None,
        master_seed=args.seed,
        trials=args.trials,
        jobs=args.jobs,
        out=Path(args.out) if args.out else None,
        fmt=args.format,
    )


def _lookup(catalog, name):
    try:
        return find_object(catalog, name)
    except KeyError:
        names = ", ".join(o.name for o in catalog)
        raise UsageError(f"unknown object {name!r}; catalog has: {names}") from None


# --- analyze ----------------------------------------------------------------

def _analyze_tap(obj, cfg: SimConfig, finish: GelFinish, out):
    gel = cfg.gels[finish]
    tm = cfg.tap_model
    p = tm.params_for(obj, gel, cfg.env)
    fe, fv = adh.electrostatic_force(p, obj), adh.vdw_force(p, obj)
    mg = obj.mass * cfg.env.gravity_g
    res = adh.lift_criterion(p, obj, cfg.env, tm.margin_threshold)
    ps, pl = adh.expected_tap_rates(obj, gel, cfg.env, tm)
    print(f"tap grasp, {finish.value} gel (contact efficiency {gel.contact_efficiency_eta:.4g})", file=out)
    print(f"  F_e    electrostatic    {fe:+.6e} N", file=out)
    print(f"  F_vdW  van der Waals    {fv:+.6e} N", file=out)
    print(f"  F_st   surface tension  {0.0:+.6e} N (dry)", file=out)
    print(f"  F_adh  total adhesion   {fe + fv:+.6e} N", file=out)
    print(f"  mg     weight           {mg:+.6e} N", file=out)
    print(f"  sum F  = F_adh - mg     {res.net_force:+.6e} N", file=out)
    print(f"  nominal tap: {res.category.value}", file=out)
    print(f"  jittered taps: P(success) {ps:.3f}, P(lift) {pl:.3f}", file=out)
    return res.category.success


def _analyze_nail(obj, cfg: SimConfig, out):
    nail, env = cfg.nail, cfg.env
    force = cfg.pipeline.nail_force
    mg = obj.mass * env.gravity_g
    gel = cfg.tap_gel
    print(f"fingernail grasp, nominal nail force {force:.4g} N", file=out)
    if obj.edge.kind is EdgeKind.ROUND:
        _, fy = sliding_nail_force(force, nail)
        print(f"  sliding contact: edge radius R {obj.edge.radius_R * 1e3:.3f} mm vs nail tip r "
              f"{nail.tip_radius_r * 1e3:.3f} mm -> {'R > r' if obj.edge.radius_R > nail.tip_radius_r else 'R <= r'}",
              file=out)
        print(f"  F_fy {fy:.6e} N vs mg/2 {mg / 2:.6e} N", file=out)
        print(f"  tipping torque l*F_fy - (l/2)*mg = {obj.length_l * fy - obj.length_l / 2 * mg:+.6e} N*m",
              file=out)
        ok = sliding_grasp_criterion(obj, nail, fy, env)
        print(f"  verdict: {'graspable' if ok else 'not graspable'}", file=out)
        return ok
    seq = simulate_nail_grasp(obj, force, gel, cfg.friction, env, nail)
    fx, fy = rolling_nail_force(force, nail)
    depth = equilibrium_depth(obj, gel, fx, 0.2e-3)
    op = Pose2D(0.0, obj.height_h / 2, 0.0)
    pred = predict_rolling_phase(PoseInput(op, gel_pose_for_depth(op, obj, gel, depth, 0.2e-3)), (fx, fy), obj,
                                 gel, cfg.friction, env, nail)
    f = pred.forces
    l, h = obj.length_l, obj.height_h
    print(f"  rolling contact: gel indentation {depth * 1e6:.3f} um, contact angle "
          f"{math.degrees(pred.gel_state.contact_angle_theta):.3f} deg", file=out)
    print(f"  forces: F_sx {f.F_sx:.6e}  F_sy {f.F_sy:.6e}  R_x {f.R_x:.6e}  F_fx {f.F_fx:.6e}  F_fy {f.F_fy:.6e} N",
          file=out)
    print(f"  torque terms: l*F_fy {l * f.F_fy:+.6e}  d*F_fx {f.contact_height_d * f.F_fx:+.6e}  "
          f"-h*F_sx {-h * f.F_sx:+.6e}  -(l/2)*mg {-(l / 2) * mg:+.6e} N*m", file=out)
    print(f"  net torque about A {pred.net_torque:+.6e} N*m (full form {pred.full_torque:+.6e})", file=out)
    print(f"  phase: {pred.phase.value}{' -> ' + pred.transition if pred.transition else ''}"
          f"{' (' + pred.diagnostic + ')' if pred.diagnostic else ''}", file=out)
    print(f"  corner clearance {corner_clearance(nail) * 1e3:.3f} mm; sequence "
          f"{' -> '.join(p.value for p in seq.phases)}", file=out)
    print(f"  verdict: {'graspable' if seq.grasped else 'not graspable (' + seq.reason + ')'}", file=out)
    return seq.grasped


def _analyze_tip(obj, cfg: SimConfig, out):
    pc = cfg.pipeline
    mu = cfg.friction.mu_gel_object + pc.compliance_mu_bonus
    grasp = antipodal_grasp(obj.length_l, pc.squeeze_force, mu)
    mg = obj.mass * cfg.env.gravity_g
    print(f"fingertip grasp, squeeze {pc.squeeze_force:.4g} N, effective mu {mu:.3g}", file=out)
    print(f"  aperture {grasp.separation * 1e3:.2f} mm (max {pc.max_aperture * 1e3:.1f} mm)", file=out)
    print(f"  friction cone half-angle {math.degrees(math.atan(mu)):.2f} deg; force closure {force_closure(grasp)}",
          file=out)
    print(f"  load: 2*mu*F {2 * mu * pc.squeeze_force:.6e} N vs mg {mg:.6e} N; supported "
          f"{load_supported(grasp, obj, cfg.env)}", file=out)
    try:
        ok = fingertip_feasible(grasp, obj, cfg.env, pc.max_aperture)
    except ApertureError as exc:
        print(f"  verdict: not graspable ({exc})", file=out)
        return False
    print(f"  verdict: {'graspable' if ok else 'not graspable'}", file=out)
    return ok


def cmd_analyze(args, out=sys.stdout) -> int:
    rc = _run_config(args)
    catalog = rc.catalog()
    obj = _lookup(catalog, args.object)
    cfg = rc.sim_config()
    strategy = Strategy(args.strategy) if args.strategy else select_strategy(obj)
    print(f"{obj.name}: {obj.height_h * 1e3:g} x {obj.length_l * 1e3:g} x {obj.width * 1e3:g} mm, "
          f"{obj.mass * 1e3:g} g, {obj.material.value}, {obj.edge.kind.value} edges", file=out)
    print(f"selected strategy: {select_strategy(obj).value}; analysing: {strategy.value}", file=out)
    if strategy is Strategy.TAP:
        finishes = [GelFinish(args.gel)] if args.gel else list(GelFinish)
        for f in finishes:
            _analyze_tap(obj, cfg, f, out)
    elif strategy is Strategy.FINGERNAIL:
        _analyze_nail(obj, cfg, out)
    else:
        _analyze_tip(obj, cfg, out)
    return EXIT_OK


# --- experiment -------------------------------------------------------------

def cmd_experiment(args, out=sys.stdout) -> int:
    rc = _run_config(args)
    catalog = rc.catalog()
    cfg = rc.sim_config()
    report = run_experiment(catalog, cfg, rc.trials, rc.master_seed, rc.jobs, tap_trials=args.tap_trials)
    text = report.render(rc.fmt)
    if rc.out:
        rc.out.mkdir(parents=True, exist_ok=True)
        (rc.out / f"report.{rc.fmt}").write_text(text)
        with open(rc.out / "trace.tsv", "w") as fh:
            for rec in report.records:
                for line in trace_lines(rec):
                    fh.write(line + "\n")
    out.write(report.to_text())
    return EXIT_OK


# --- render -----------------------------------------------------------------

def cmd_render(args, out=sys.stdout) -> int:
    from .sensorsim import (
        add_sensor_noise,
        blob_diameter_px,
        object_height_map,
        reference_frame,
        render_frame,
        write_ppm,
    )

    rc = _run_config(args)
    cfg = rc.sim_config()
    gel = cfg.tap_gel
    rcfg = cfg.render
    target = rc.out or Path("frame.ppm")
    empty = reference_frame(gel, cfg=rcfg)
    if args.no_object:
        frame = empty
        label = "no object"
    else:
        if not args.object:
            raise UsageError("render needs an object name or --no-object")
        obj = _lookup(rc.catalog(), args.object)
        cx, cy = milli_to_base(args.x), milli_to_base(args.y)
        reach = math.hypot(abs(cx) + obj.length_l / 2, abs(cy) + obj.width / 2)
        if reach > rcfg.cap_radius:
            raise UsageError(
                f"pose out of gel reach: footprint extends {reach * 1e3:.2f} mm from the apex "
                f"(cap radius {rcfg.cap_radius * 1e3:.2f} mm)"
            )
        hm = object_height_map(obj, (cx, cy), math.radians(args.phi), milli_to_base(args.depth), rcfg)
        frame = render_frame(hm, gel, cfg=rcfg)
        label = obj.name
    if args.noise:
        frame = add_sensor_noise(frame, np.random.default_rng(rc.master_seed))
    target.parent.mkdir(parents=True, exist_ok=True)
    write_ppm(target, frame)
    empty_path = target.with_name(f"{target.stem}_empty{target.suffix or '.ppm'}")
    write_ppm(empty_path, empty)
    print(f"{label}: wrote {target} and {empty_path}", file=out)
    print(f"changed-pixel blob diameter {blob_diameter_px(frame, empty):.1f} px", file=out)
    return EXIT_OK


# --- calibrate --------------------------------------------------------------

def cmd_calibrate(args, out=sys.stdout) -> int:
    rc = _run_config(args)
    cfg = rc.sim_config()
    result = calibrate_adhesion(config=cfg, catalog=rc.catalog())
    tm = result.tap_model
    lines = [
        "[adhesion]",
        f"hamaker_A = {tm.hamaker_A:.6e}",
        f"margin_threshold = {tm.margin_threshold:.6g}",
        f"sigma_{cfg.env.surface_material.value} = {tm.sigma_for(cfg.env):.6e}",
    ]
    lines += [f"eta_{f.value} = {result.etas[f]:.6g}" for f in GelFinish]
    ini = "\n".join(lines) + "\n"
    print(f"calibration residual {result.residual:.6e} after {result.rounds} rounds", file=out)
    for (name, finish), (ps, pl) in result.rates.items():
        print(f"  {name:<12} {finish.value:<12} success {100 * ps:6.2f} %  lift {100 * pl:6.2f} %", file=out)
    out.write(ini)
    if rc.out:
        rc.out.parent.mkdir(parents=True, exist_ok=True)
        rc.out.write_text(ini)
    if not result.converged:
        print(f"warning: {result.message}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", help="YAML object catalog (default: built-in objects)")
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--trials", type=int, default=51, help="trials per object (default 51)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--format", choices=("csv", "txt"), default="txt", help="report format")
    common.add_argument("--out", help="output directory (experiment) or file (render, calibrate)")

    parser = argparse.ArgumentParser(prog="grasplab", description="Tactile micro-object grasp analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="force/torque breakdown for one object")
    p.add_argument("object")
    p.add_argument("strategy", nargs="?", choices=[s.value for s in Strategy])
    p.add_argument("--gel", choices=[f.value for f in GelFinish], help="gel finish for tap analysis")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("experiment", parents=[common], help="Monte-Carlo success rates for the catalog")
    p.add_argument("--tap-trials", type=int, default=50, help="taps per object and gel finish (0 to skip)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("render", parents=[common], help="render a sensor frame to PPM")
    p.add_argument("object", nargs="?")
    p.add_argument("--x", type=float, default=0.0, help="object centre x on the gel, mm")
    p.add_argument("--y", type=float, default=0.0, help="object centre y on the gel, mm")
    p.add_argument("--phi", type=float, default=0.0, help="object orientation, degrees")
    p.add_argument("--depth", type=float, default=0.3, help="press depth, mm")
    p.add_argument("--no-object", action="store_true", help="render the empty press")
    p.add_argument("--noise", action="store_true", help="add seeded sensor noise")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("calibrate", parents=[common], help="fit adhesion parameters to the lift table")
    p.set_defaults(func=cmd_calibrate)
    return parser


def _setup_logging():
    level = os.environ.get("GRASPLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None, out=None) -> int:
    _setup_logging()
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (UsageError, CatalogError, ConfigError) as exc:
        print(f"grasplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"grasplab: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
