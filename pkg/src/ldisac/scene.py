"""Physical scenario description, coordinate conventions, and validation.

The coordinate convention throughout the package: a point at polar
``(angle, range)`` sits at Cartesian ``(range*sin(angle), range*cos(angle))``.
Uniform linear arrays lie along the y axis, so ``angle = 90 deg`` is array
broadside and the symmetric element index ``n`` runs over
``-(N-1)/2 .. (N-1)/2``.  Angles are stored in radians internally; scenario
files use degrees.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

SPEED_OF_LIGHT = 299792458.0

__all__ = [
    "SPEED_OF_LIGHT",
    "GeometryError",
    "PolarLocation",
    "ArrayGeometry",
    "SceneConfig",
    "Scenario",
    "polar_to_cartesian",
    "cartesian_to_polar",
    "departure_to_arrival",
    "validate_scene",
    "load_scenario",
    "scenario_from_text",
    "preset_names",
]


class GeometryError(ValueError):
    """Degenerate geometry (coincident points, zero range, ...)."""


@dataclass(frozen=True)
class PolarLocation:
    """Point in the array-centric polar frame: angle in radians, range in meters."""

    angle: float
    range: float

    def is_valid(self) -> bool:
        return self.range > 0.0 and 0.0 < self.angle < math.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Symmetric uniform linear array along the y axis.

    ``element_count`` must be odd so the index set -(N-1)/2 .. (N-1)/2 is
    integer and the center element sits at the array reference point.
    """

    element_count: int
    spacing: float
    wavelength: float

    @property
    def indices(self) -> np.ndarray:
        n = self.element_count
        return np.arange(n) - (n - 1) / 2.0

    @property
    def aperture(self) -> float:
        return (self.element_count - 1) * self.spacing

    @property
    def rayleigh_distance(self) -> float:
        return 2.0 * self.aperture**2 / self.wavelength

    def element_offsets(self) -> np.ndarray:
        """(N, 2) Cartesian offsets of the elements from the array center."""
        off = np.zeros((self.element_count, 2))
        off[:, 1] = self.indices * self.spacing
        return off


@dataclass(frozen=True)
class SceneConfig:
    """Full physical scenario for one simulation.

    ``reference_pathloss`` defaults to wavelength/(4 pi); ``si_norm`` (the
    self-interference normalization) defaults to the value that puts the
    adjacent-element SI entry 40 dB above the noise floor.
    """

    carrier_freq: float
    tx_array: ArrayGeometry
    alice_rx_array: ArrayGeometry
    eve_rx_array: ArrayGeometry
    rf_chains: int
    bobs: tuple[PolarLocation, ...]
    targets: tuple[PolarLocation, ...]
    scatterers: tuple[PolarLocation, ...]
    eve: PolarLocation
    noise_power: float
    power_budget: float
    power_split: float
    snapshots: int
    radar_streams: int
    reference_pathloss: float = None  # type: ignore[assignment]
    si_norm: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.reference_pathloss is None:
            object.__setattr__(self, "reference_pathloss", self.wavelength / (4.0 * math.pi))
        if self.si_norm is None:
            # adjacent-element SI entry magnitude = 100 * sigma_n (40 dB power)
            rho = self.tx_array.spacing * 100.0 * math.sqrt(max(self.noise_power, 0.0))
            object.__setattr__(self, "si_norm", rho)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def reflectors(self) -> tuple[PolarLocation, ...]:
        """Targets followed by scatterers; index order used everywhere."""
        return self.targets + self.scatterers

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_scatterers(self) -> int:
        return len(self.scatterers)

    @property
    def n_bobs(self) -> int:
        return len(self.bobs)

    def with_noise_power(self, noise_power: float) -> "SceneConfig":
        """Copy with a different noise power; si_norm is re-derived."""
        return replace(self, noise_power=noise_power, si_norm=None)


def polar_to_cartesian(loc: PolarLocation) -> tuple[float, float]:
    """(x, y) = (r sin(angle), r cos(angle))."""
    return loc.range * math.sin(loc.angle), loc.range * math.cos(loc.angle)


def cartesian_to_polar(x: float, y: float) -> PolarLocation:
    """Inverse of :func:`polar_to_cartesian`.

    The symmetric ULA manifold cannot distinguish mirror images about the
    array axis, so the bearing is folded into (0, pi) via ``|x|``.
    """
    r = math.hypot(x, y)
    if r == 0.0:
        raise GeometryError("point coincides with the array center")
    ang = math.atan2(abs(x), y)
    if ang <= 0.0 or ang >= math.pi:
        raise GeometryError("point lies on the array axis; bearing undefined")
    return PolarLocation(angle=ang, range=r)


def departure_to_arrival(reflector: PolarLocation, eve: PolarLocation) -> PolarLocation:
    """Reflector location as seen from the eavesdropper's array center.

    The arrival range is the Euclidean distance between the two Cartesian
    points; the arrival bearing uses the same folded convention as
    :func:`cartesian_to_polar` with the eavesdropper's array parallel to the
    transmitter's.
    """
    rx, ry = polar_to_cartesian(reflector)
    ex, ey = polar_to_cartesian(eve)
    dx, dy = rx - ex, ry - ey
    if math.hypot(dx, dy) == 0.0:
        raise GeometryError("reflector coincides with the eavesdropper")
    return cartesian_to_polar(dx, dy)


def _check_location(name: str, loc: PolarLocation, out: list[str]):
    if not loc.range > 0.0:
        out.append(f"{name}: range must be positive (got {loc.range})")
    if not 0.0 < loc.angle < math.pi:
        out.append(f"{name}: angle must lie in (0, pi) (got {loc.angle})")


def validate_scene(cfg: SceneConfig) -> list[str]:
    """Check every scene invariant; returns a list of violations (empty if valid).

    Violations are data, not exceptions: an invalid config can still be
    constructed and inspected.
    """
    v: list[str] = []
    for label, arr in (("tx", cfg.tx_array), ("alice_rx", cfg.alice_rx_array),
                       ("eve_rx", cfg.eve_rx_array)):
        if arr.element_count < 1 or arr.element_count % 2 == 0:
            v.append(f"{label}: array size must be odd (got {arr.element_count})")
        if arr.spacing <= 0:
            v.append(f"{label}: element spacing must be positive")
    if cfg.n_bobs + cfg.radar_streams > cfg.rf_chains:
        v.append(
            f"stream count exceeds RF chains ({cfg.n_bobs}+{cfg.radar_streams} > {cfg.rf_chains})"
        )
    if cfg.radar_streams < 1:
        v.append("radar_streams must be >= 1")
    if cfg.snapshots < 1:
        v.append("snapshots must be >= 1")
    if not 0.0 <= cfg.power_split <= 1.0:
        v.append(f"power_split must lie in [0, 1] (got {cfg.power_split})")
    if cfg.power_budget <= 0:
        v.append("power_budget must be positive")
    if cfg.noise_power <= 0:
        v.append("noise_power must be positive")

    for i, b in enumerate(cfg.bobs):
        _check_location(f"bob[{i}]", b, v)
    for i, t in enumerate(cfg.targets):
        _check_location(f"target[{i}]", t, v)
    for i, s in enumerate(cfg.scatterers):
        _check_location(f"scatterer[{i}]", s, v)
    _check_location("eve", cfg.eve, v)
    if v:
        return v  # geometric checks below assume well-formed locations

    # pairwise-distinct reflectors
    pts = [polar_to_cartesian(l) for l in cfg.reflectors]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if math.dist(pts[i], pts[j]) == 0.0:
                v.append(f"reflectors {i} and {j} are co-located")

    # near-field validity against each array a location actually interacts with
    ray_tx = cfg.tx_array.rayleigh_distance
    ray_rx = cfg.alice_rx_array.rayleigh_distance
    ray_ev = cfg.eve_rx_array.rayleigh_distance
    for i, b in enumerate(cfg.bobs):
        if b.range > ray_tx:
            v.append(f"bob[{i}] outside tx Rayleigh distance ({b.range:.3g} > {ray_tx:.3g} m)")
    if cfg.eve.range > ray_tx:
        v.append(f"eve outside tx Rayleigh distance ({cfg.eve.range:.3g} > {ray_tx:.3g} m)")
    for i, l in enumerate(cfg.reflectors):
        kind = "target" if i < cfg.n_targets else "scatterer"
        if l.range > ray_tx:
            v.append(f"{kind} reflector[{i}] outside tx Rayleigh distance")
        if l.range > ray_rx:
            v.append(f"{kind} reflector[{i}] outside alice_rx Rayleigh distance")
        try:
            arr = departure_to_arrival(l, cfg.eve)
        except GeometryError as exc:
            v.append(f"{kind} reflector[{i}]: {exc}")
            continue
        if arr.range > ray_ev:
            v.append(
                f"{kind} reflector[{i}] outside eve Rayleigh distance "
                f"({arr.range:.3g} > {ray_ev:.3g} m)"
            )
    return v


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------
# Flat key/value text format, one entry per line:
#   key = value            scalars (floats accept 28e9 style)
#   bob = angle_deg range_m        (repeatable)
#   target = angle_deg range_m     (repeatable)
#   scatterer = angle_deg range_m  (repeatable)
#   eve = angle_deg range_m
#   angle_grid_deg = start stop step     (search grid, degrees)
#   range_grid_m  = start stop step      (search grid, meters)
# '#' starts a comment.  Keys: carrier_freq_hz, tx_elements, rx_elements,
# eve_elements, rf_chains, radar_streams, snapshots, power_budget_w,
# noise_power_w, power_split, element_spacing_m (optional, default lambda/2),
# si_norm (optional), reference_pathloss (optional).

_SCALAR_KEYS = {
    "carrier_freq_hz", "tx_elements", "rx_elements", "eve_elements",
    "rf_chains", "radar_streams", "snapshots", "power_budget_w",
    "noise_power_w", "power_split", "element_spacing_m", "si_norm",
    "reference_pathloss",
}
_LOCATION_KEYS = {"bob", "target", "scatterer", "eve"}
_GRID_KEYS = {"angle_grid_deg", "range_grid_m"}


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario file: the scene plus its search-grid bounds."""

    config: SceneConfig
    angle_grid_deg: tuple[float, float, float] = (0.5, 180.0, 0.5)
    range_grid_m: tuple[float, float, float] = (1.0, 15.0, 0.1)
    name: str = "scenario"
    text: str = ""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def with_noise_power(self, noise_power: float) -> "Scenario":
        return replace(self, config=self.config.with_noise_power(noise_power))


def scenario_from_text(text: str, name: str = "scenario") -> Scenario:
    scalars: dict[str, float] = {}
    locs: dict[str, list[PolarLocation]] = {k: [] for k in _LOCATION_KEYS}
    grids: dict[str, tuple[float, float, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        parts = val.split()
        if key in _SCALAR_KEYS:
            scalars[key] = float(parts[0])
        elif key in _LOCATION_KEYS:
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: '{key}' needs 'angle_deg range_m'")
            locs[key].append(PolarLocation(math.radians(float(parts[0])), float(parts[1])))
        elif key in _GRID_KEYS:
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: '{key}' needs 'start stop step'")
            grids[key] = (float(parts[0]), float(parts[1]), float(parts[2]))
        else:
            raise ValueError(f"line {lineno}: unknown key '{key}'")

    required = {"carrier_freq_hz", "tx_elements", "rx_elements", "eve_elements",
                "rf_chains", "radar_streams", "snapshots", "power_budget_w",
                "noise_power_w", "power_split"}
    missing = sorted(required - scalars.keys())
    if missing:
        raise ValueError(f"scenario is missing keys: {', '.join(missing)}")
    if len(locs["eve"]) != 1:
        raise ValueError("scenario must define exactly one 'eve' location")

    lam = SPEED_OF_LIGHT / scalars["carrier_freq_hz"]
    d = scalars.get("element_spacing_m", lam / 2.0)
    mk = lambda n: ArrayGeometry(element_count=int(n), spacing=d, wavelength=lam)
    cfg = SceneConfig(
        carrier_freq=scalars["carrier_freq_hz"],
        tx_array=mk(scalars["tx_elements"]),
        alice_rx_array=mk(scalars["rx_elements"]),
        eve_rx_array=mk(scalars["eve_elements"]),
        rf_chains=int(scalars["rf_chains"]),
        bobs=tuple(locs["bob"]),
        targets=tuple(locs["target"]),
        scatterers=tuple(locs["scatterer"]),
        eve=locs["eve"][0],
        noise_power=scalars["noise_power_w"],
        power_budget=scalars["power_budget_w"],
        power_split=scalars["power_split"],
        snapshots=int(scalars["snapshots"]),
        radar_streams=int(scalars["radar_streams"]),
        reference_pathloss=scalars.get("reference_pathloss"),
        si_norm=scalars.get("si_norm"),
    )
    kwargs = {}
    if "angle_grid_deg" in grids:
        kwargs["angle_grid_deg"] = grids["angle_grid_deg"]
    if "range_grid_m" in grids:
        kwargs["range_grid_m"] = grids["range_grid_m"]
    return Scenario(config=cfg, name=name, text=text, **kwargs)


def preset_names() -> list[str]:
    files = resources.files("ldisac.scenarios")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".txt"))


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario file; bare names resolve to bundled presets."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name, "r", encoding="utf-8") as fh:
            text = fh.read()
        name = os.path.splitext(os.path.basename(path_or_name))[0]
        return scenario_from_text(text, name=name)
    try:
        text = resources.files("ldisac.scenarios").joinpath(f"{path_or_name}.txt").read_text()
    except FileNotFoundError:
        raise FileNotFoundError(
            f"no such scenario file or preset: {path_or_name!r} "
            f"(presets: {', '.join(preset_names())})"
        ) from None
    return scenario_from_text(text, name=path_or_name)
