"""Domain types and the object / gel / friction catalogs.

Everything inside the package is SI (m, kg, N, N*m).  Catalog files use
millimetres and grams; conversion happens only in :func:`load_catalog` and
:func:`dump_catalog`.
"""

from __future__ import annotations

import math
from decimal import Decimal
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import yaml

GRAVITY = 9.80665
EPSILON0 = 8.8541878128e-12


def _decimal(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        raise TypeError("expected a number")
    if isinstance(value, int):
        return Decimal(value)
    return Decimal(repr(float(value)))


def milli_to_base(value) -> float:
    """mm -> m or g -> kg, shifted in decimal so 3.9 mm becomes exactly 3.9e-3."""
    return float(_decimal(value).scaleb(-3))


def milli_decimal(value: float) -> Decimal:
    """Exact decimal mm (or g) for an SI float; ``milli_to_base`` inverts it bit-exactly."""
    return _decimal(value).scaleb(3)


def base_to_milli(value: float) -> float:
    return float(milli_decimal(value))


class _CatalogLoader(yaml.SafeLoader):
    """Keeps decimal numbers exact so unit conversion is a pure decimal shift."""


def _construct_decimal(loader, node):
    text = loader.construct_scalar(node).replace("_", "")
    try:
        return Decimal(text)
    except ArithmeticError:
        return loader.construct_yaml_float(node)


_CatalogLoader.add_constructor("tag:yaml.org,2002:float", _construct_decimal)


class _CatalogDumper(yaml.SafeDumper):
    pass


def _represent_decimal(dumper, value):
    text = format(value.normalize(), "f")
    tag = "tag:yaml.org,2002:float" if "." in text else "tag:yaml.org,2002:int"
    return dumper.represent_scalar(tag, text)


_CatalogDumper.add_representer(Decimal, _represent_decimal)


class CatalogError(ValueError):
    """Malformed or invalid catalog entry."""


class MaterialClass(str, Enum):
    METALLIC = "metallic"
    NONMETALLIC = "nonmetallic"


class EdgeKind(str, Enum):
    SHARP = "sharp"
    ROUND = "round"


class GelFinish(str, Enum):
    GLOSS = "gloss"
    MATTE_GLOSS = "matte_gloss"
    MATTE = "matte"


class SurfaceMaterial(str, Enum):
    ACRYLIC = "acrylic"
    WOOD = "wood"
    PAPER = "paper"


@dataclass(frozen=True)
class EdgeGeometry:
    kind: EdgeKind = EdgeKind.SHARP
    radius_R: float | None = None

    def __post_init__(self):
        if self.kind is EdgeKind.ROUND:
            if self.radius_R is None or not self.radius_R > 0:
                raise CatalogError("round edge needs a positive radius")
        elif self.radius_R is not None:
            raise CatalogError("sharp edge must not carry a radius")


@dataclass(frozen=True)
class RigidObject2D:
    """Planar rigid object.

    ``length_l`` is the extent along the grasp axis, ``height_h`` the
    thickness, ``width`` the out-of-plane extent (catalog bookkeeping only).
    """

    name: str
    length_l: float
    height_h: float
    width: float
    mass: float
    edge: EdgeGeometry = field(default_factory=EdgeGeometry)
    material: MaterialClass = MaterialClass.NONMETALLIC
    effective_radius_Ro: float | None = None

    def __post_init__(self):
        for attr in ("length_l", "height_h", "width"):
            v = getattr(self, attr)
            if not (math.isfinite(v) and v > 0):
                raise CatalogError(f"{self.name}: {attr} must be positive, got {v}")
        if not (math.isfinite(self.mass) and self.mass >= 0):
            raise CatalogError(f"{self.name}: mass must be non-negative, got {self.mass}")
        if self.effective_radius_Ro is None:
            object.__setattr__(self, "effective_radius_Ro", 0.5 * max(self.length_l, self.width))
        if not self.effective_radius_Ro > 0:
            raise CatalogError(f"{self.name}: effective_radius_Ro must be positive")
        if self.edge.kind is EdgeKind.ROUND and not self.edge.radius_R < self.length_l / 2:
            raise CatalogError(f"{self.name}: edge radius must be below length/2")

    @property
    def planar_max(self) -> float:
        return max(self.length_l, self.width)

    @property
    def weight(self) -> float:
        return self.mass * GRAVITY


@dataclass(frozen=True)
class GelSpec:
    finish: GelFinish = GelFinish.GLOSS
    curvature_radius: float = 15e-3
    shore_hardness_A: float = 16.0
    contact_efficiency_eta: float | None = None
    yeoh_coefficients_Cfem: tuple[float, float, float] = (0.11e6, 0.02e6, 0.001e6)

    def __post_init__(self):
        if self.contact_efficiency_eta is None:
            object.__setattr__(self, "contact_efficiency_eta", DEFAULT_ETA[self.finish])
        if not 0 < self.contact_efficiency_eta <= 1:
            raise CatalogError("contact_efficiency_eta must be in (0, 1]")
        if len(self.yeoh_coefficients_Cfem) != 3 or not self.yeoh_coefficients_Cfem[0] > 0:
            raise CatalogError("C_fem needs three coefficients with C10 > 0")
        if not self.curvature_radius > 0:
            raise CatalogError("curvature_radius must be positive")


@dataclass(frozen=True)
class FingernailSpec:
    tip_radius_r: float = 0.3e-3
    tip_angle: float = 27.7
    fov_occupancy: float = 10.4

    def __post_init__(self):
        if not self.tip_radius_r > 0:
            raise CatalogError("tip radius must be positive")
        if not 0 < self.tip_angle < 90:
            raise CatalogError("tip angle must be in (0, 90) degrees")


@dataclass(frozen=True)
class FrictionSet:
    mu_gel_object: float = 1.2
    mu_surface_object: float = 0.3
    mu_nail_object: float = 0.3

    def __post_init__(self):
        for name in ("mu_gel_object", "mu_surface_object", "mu_nail_object"):
            v = getattr(self, name)
            if not 0 < v <= 2:
                raise CatalogError(f"{name} must lie in (0, 2]")

    @property
    def gel_dominant(self) -> bool:
        return self.mu_gel_object > max(self.mu_surface_object, self.mu_nail_object)


@dataclass(frozen=True)
class Environment:
    surface_material: SurfaceMaterial = SurfaceMaterial.ACRYLIC
    gravity_g: float = GRAVITY
    humidity: str = "dry"

    def __post_init__(self):
        if not self.gravity_g > 0:
            raise CatalogError("gravity must be positive")
        if self.humidity != "dry":
            raise CatalogError("only dry conditions are modeled")


# Calibrated against the gel-finish lift table (see harness.calibrate_adhesion).
DEFAULT_ETA = {
    GelFinish.GLOSS: 0.5536,
    GelFinish.MATTE_GLOSS: 0.1112,
    GelFinish.MATTE: 0.02192,
}


def _obj(name, h, l, w, mass_g, material, edge="sharp", radius_mm=None):
    edge_geo = EdgeGeometry(EdgeKind(edge), None if radius_mm is None else milli_to_base(radius_mm))
    return RigidObject2D(
        name=name,
        length_l=milli_to_base(l),
        height_h=milli_to_base(h),
        width=milli_to_base(w),
        mass=milli_to_base(mass_g),
        edge=edge_geo,
        material=MaterialClass(material),
    )


def builtin_paper_catalog() -> list[RigidObject2D]:
    """The eight evaluation objects, dimensions as H x L x W mm and grams."""
    return [
        _obj("Basil Seed", 1.0, 1.2, 2.0, 0.0015, "nonmetallic", "round", 0.4),
        _obj("M1.6 Nut", 1.1, 3.2, 3.2, 0.051, "metallic"),
        _obj("M2 Nut", 1.6, 3.9, 3.9, 0.10, "metallic"),
        _obj("Paperclip", 0.8, 6.9, 26.5, 0.31, "metallic"),
        _obj("Small Wrench", 0.9, 7.0, 45.0, 1.95, "metallic"),
        _obj("Dime", 1.3, 17.9, 17.9, 2.24, "metallic", "round", 0.6),
        _obj("CR2032 Battery", 3.2, 20.0, 20.0, 3.00, "metallic", "round", 0.8),
        _obj("Bearing", 16.0, 5.0, 16.0, 4.57, "metallic", "round", 1.0),
    ]


def find_object(catalog: Iterable[RigidObject2D], name: str) -> RigidObject2D:
    for obj in catalog:
        if obj.name.lower() == name.lower():
            return obj
    raise KeyError(name)


def _entry_to_object(doc: dict, index: int) -> RigidObject2D:
    label = doc.get("name", f"entry #{index}") if isinstance(doc, dict) else f"entry #{index}"
    if not isinstance(doc, dict):
        raise CatalogError(f"{label}: expected a mapping")
    try:
        h, l, w = (_decimal(v) for v in doc["dims_mm"])
        mass_g = _decimal(doc["mass_g"])
        name = str(doc["name"])
    except KeyError as exc:
        raise CatalogError(f"{label}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError):
        raise CatalogError(f"{label}: dims_mm must be [H, L, W] and mass_g a number") from None
    try:
        radius = doc.get("edge_radius_mm")
        edge = EdgeGeometry(
            EdgeKind(doc.get("edge", "sharp")),
            None if radius is None else milli_to_base(_decimal(radius)),
        )
        return RigidObject2D(
            name=name,
            length_l=milli_to_base(l),
            height_h=milli_to_base(h),
            width=milli_to_base(w),
            mass=milli_to_base(mass_g),
            edge=edge,
            material=MaterialClass(doc.get("material", "nonmetallic")),
        )
    except CatalogError as exc:
        raise CatalogError(f"{label}: {exc}") from None
    except ValueError as exc:
        raise CatalogError(f"{label}: {exc}") from None


def load_catalog(path: str | Path) -> list[RigidObject2D]:
    """Read a multi-document YAML catalog (one document per object)."""
    text = Path(path).read_text()
    try:
        docs = [d for d in yaml.load_all(text, Loader=_CatalogLoader) if d is not None]
    except yaml.YAMLError as exc:
        raise CatalogError(f"{path}: parse error: {exc}") from None
    return [_entry_to_object(doc, i) for i, doc in enumerate(docs)]


def object_to_entry(obj: RigidObject2D) -> dict:
    entry = {
        "name": obj.name,
        "dims_mm": [milli_decimal(obj.height_h), milli_decimal(obj.length_l), milli_decimal(obj.width)],
        "mass_g": milli_decimal(obj.mass),
        "material": obj.material.value,
        "edge": obj.edge.kind.value,
    }
    if obj.edge.radius_R is not None:
        entry["edge_radius_mm"] = milli_decimal(obj.edge.radius_R)
    return entry


def dump_catalog(objects: Iterable[RigidObject2D], path: str | Path) -> None:
    docs = [object_to_entry(o) for o in objects]
    Path(path).write_text(yaml.dump_all(docs, Dumper=_CatalogDumper, sort_keys=False))
