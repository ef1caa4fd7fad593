"""Run configuration: defaults plus INI overrides.

The config file has sections ``[adhesion]``, ``[friction]``, ``[roi]``,
``[pipeline]`` and ``[render]``; every key is optional.  Lengths in the file
are millimetres, forces newtons.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

from .adhesion import DEFAULT_TAP_MODEL, TapModel
from .catalog import (
    DEFAULT_ETA,
    Environment,
    FingernailSpec,
    FrictionSet,
    GelFinish,
    GelSpec,
    SurfaceMaterial,
    milli_to_base,
)
from .sensorsim import RenderConfig


class ConfigError(ValueError):
    pass


class Strategy(str, Enum):
    TAP = "tap"
    FINGERNAIL = "fingernail"
    FINGERTIP = "fingertip"


@dataclass(frozen=True)
class RoiSpec:
    strategy: Strategy
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("ROI sides must be positive")


DEFAULT_ROIS = {
    Strategy.TAP: RoiSpec(Strategy.TAP, 10e-3, 10e-3),
    Strategy.FINGERNAIL: RoiSpec(Strategy.FINGERNAIL, 45e-3, 15e-3),
    Strategy.FINGERTIP: RoiSpec(Strategy.FINGERTIP, 30e-3, 20e-3),
}


@dataclass(frozen=True)
class PipelineConfig:
    regrasp_cap: int = 5
    nail_force: float = 0.05
    nail_force_jitter: float = 0.5
    squeeze_force: float = 0.5
    squeeze_jitter: float = 0.3
    # outer fraction of the ROI (normalised half-extent) where reach degrades to zero
    edge_margin: float = 0.1
    move_accel: float = 2.0
    misalignment_sigma_deg: float = 8.0
    edge_misalignment_deg: float = 90.0
    max_aperture: float = 40e-3
    compliance_mu_bonus: float = 0.2
    grasp_ms: float = 500.0
    move_ms: float = 1500.0
    detect_ms: float = 200.0
    ungrasp_ms: float = 800.0
    tap_gel: GelFinish = GelFinish.GLOSS
    detector_threshold: float = 0.3

    def __post_init__(self):
        if self.regrasp_cap < 0:
            raise ConfigError("regrasp_cap must be non-negative")
        if not 0 < self.edge_margin <= 1:
            raise ConfigError("edge_margin must be in (0, 1]")
        if not (self.nail_force > 0 and self.squeeze_force > 0):
            raise ConfigError("nominal forces must be positive")


def _default_gels() -> dict:
    return {f: GelSpec(finish=f, contact_efficiency_eta=DEFAULT_ETA[f]) for f in GelFinish}


@dataclass(frozen=True)
class SimConfig:
    tap_model: TapModel = DEFAULT_TAP_MODEL
    gels: dict = field(default_factory=_default_gels)
    friction: FrictionSet = field(default_factory=FrictionSet)
    env: Environment = field(default_factory=Environment)
    nail: FingernailSpec = field(default_factory=FingernailSpec)
    rois: dict = field(default_factory=lambda: dict(DEFAULT_ROIS))
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    render: RenderConfig = field(default_factory=RenderConfig)

    @property
    def tap_gel(self) -> GelSpec:
        return self.gels[self.pipeline.tap_gel]

    def with_gels(self, etas: dict) -> "SimConfig":
        gels = {f: replace(self.gels[f], contact_efficiency_eta=etas[f]) for f in GelFinish}
        return replace(self, gels=gels)

    def snapshot(self) -> dict:
        """Flat, deterministic view of every setting (for report headers)."""
        out = {}
        tm = self.tap_model
        for k in ("hamaker_A", "separation_d0", "sensor_radius_Rdt", "margin_threshold",
                  "gap_log_sigma", "area_jitter", "charge_jitter", "hold_log_sigma"):
            out[f"adhesion.{k}"] = getattr(tm, k)
        for s, v in tm.sigma_table.items():
            out[f"adhesion.sigma_{s.value}"] = v
        for f, g in self.gels.items():
            out[f"adhesion.eta_{f.value}"] = g.contact_efficiency_eta
        for k, v in asdict(self.friction).items():
            out[f"friction.{k}"] = v
        out["environment.surface"] = self.env.surface_material.value
        for s, r in self.rois.items():
            out[f"roi.{s.value}"] = f"{r.width * 1e3:g}x{r.height * 1e3:g} mm"
        for f_ in fields(self.pipeline):
            v = getattr(self.pipeline, f_.name)
            out[f"pipeline.{f_.name}"] = v.value if isinstance(v, Enum) else v
        out["render.size"] = f"{self.render.width}x{self.render.height}"
        return out


_FLOAT_MM = {"max_aperture"}


def _parse_roi(text: str) -> tuple[float, float]:
    try:
        w, h = (float(v) for v in text.lower().replace("mm", "").split("x"))
    except ValueError:
        raise ConfigError(f"ROI must look like '10x10', got {text!r}") from None
    return milli_to_base(w), milli_to_base(h)


def load_config(path: str | Path | None = None, base: SimConfig | None = None) -> SimConfig:
    cfg = base or SimConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    unknown = set(parser.sections()) - {"adhesion", "friction", "roi", "pipeline", "render"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    try:
        if parser.has_section("adhesion"):
            sec = parser["adhesion"]
            tm = cfg.tap_model
            updates = {}
            for k in ("hamaker_A", "separation_d0", "sensor_radius_Rdt", "margin_threshold",
                      "gap_log_sigma", "area_jitter", "charge_jitter", "hold_log_sigma"):
                if k.lower() in sec:
                    updates[k] = sec.getfloat(k)
            tm = replace(tm, **updates)
            for s in SurfaceMaterial:
                key = f"sigma_{s.value}"
                if key in sec:
                    tm = tm.with_sigma(s, sec.getfloat(key))
            etas = {f: cfg.gels[f].contact_efficiency_eta for f in GelFinish}
            for f in GelFinish:
                key = f"eta_{f.value}"
                if key in sec:
                    etas[f] = sec.getfloat(key)
            cfg = replace(cfg, tap_model=tm).with_gels(etas)
            if "surface" in sec:
                cfg = replace(cfg, env=replace(cfg.env, surface_material=SurfaceMaterial(sec["surface"])))

        if parser.has_section("friction"):
            sec = parser["friction"]
            vals = {k: sec.getfloat(k) for k in ("mu_gel_object", "mu_surface_object", "mu_nail_object") if k in sec}
            cfg = replace(cfg, friction=replace(cfg.friction, **vals))

        if parser.has_section("roi"):
            rois = dict(cfg.rois)
            for s in Strategy:
                if s.value in parser["roi"]:
                    w, h = _parse_roi(parser["roi"][s.value])
                    rois[s] = RoiSpec(s, w, h)
            cfg = replace(cfg, rois=rois)

        if parser.has_section("pipeline"):
            sec = parser["pipeline"]
            updates = {}
            for f_ in fields(PipelineConfig):
                if f_.name not in sec:
                    continue
                current = getattr(cfg.pipeline, f_.name)
                if isinstance(current, Enum):
                    updates[f_.name] = type(current)(sec[f_.name])
                elif isinstance(current, int) and not isinstance(current, bool):
                    updates[f_.name] = sec.getint(f_.name)
                elif f_.name in _FLOAT_MM:
                    updates[f_.name] = milli_to_base(sec.getfloat(f_.name))
                else:
                    updates[f_.name] = sec.getfloat(f_.name)
            cfg = replace(cfg, pipeline=replace(cfg.pipeline, **updates))

        if parser.has_section("render"):
            sec = parser["render"]
            updates = {k: sec.getint(k) for k in ("width", "height") if k in sec}
            cfg = replace(cfg, render=replace(cfg.render, **updates))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg
