"""Scene description, plain-text scene files, and particle seeding.

A scene is a box-shaped domain with axis-aligned fluid boxes seeded on a
cubic lattice at the configured spacing, optional static boundary
particle layers lining the walls, and the solver parameters (equation of
state, time-step coefficients, density-error tolerances). Scene files
are line-based ``key = value`` text; unknown keys are errors so typos
cannot silently change a benchmark.

Units are SI throughout: meters, seconds, kg/m^3. Gravity points along
-y in the shipped presets.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

__all__ = [
    "Scene",
    "PRESET_NAMES",
    "load_scene",
    "parse_scene_text",
    "preset_scene",
    "seed_particles",
]

TAIT_GAMMA = 7.0

# Block edge relative to particle spacing: kernel support (2s) for WCSPH,
# slightly overpopulated blocks (2.2s) for PCISPH major steps so the grid
# stays a candidate superset while it goes stale between rebuilds.
SUPPORT_FACTOR = 2.0
WCSPH_BLOCK_FACTOR = 2.0
PCISPH_BLOCK_FACTOR = 2.2

# Largest-step-fraction table for the velocity criterion: beta_1 is
# unbounded, beta_n = 0.4 * 0.2^(n-2) for n >= 2.
BETA_BASE = 0.4
BETA_DECAY = 0.2

# Default base/constant step factors for PCISPH, linear in spacing
# (3.5e-4 s and 1.66e-4 s at the stock 0.02 m spacing).
PCISPH_DT_BASE_FACTOR = 0.0175
PCISPH_DT_CONST_FACTOR = 0.0083

_VEC3_KEYS = {"gravity"}
_BOX_KEYS = {"domain", "fluid_box"}
_FLOAT_KEYS = {
    "spacing",
    "rest_density",
    "sound_speed",
    "viscosity",
    "dt_base",
    "lambda_v",
    "lambda_f",
    "alpha",
    "eta_max",
    "eta_avg",
    "rho_T",
}
_INT_KEYS = {"boundary_layers", "minor_steps"}
_ALL_KEYS = _VEC3_KEYS | _BOX_KEYS | _FLOAT_KEYS | _INT_KEYS | {"preset"}

PRESET_NAMES = ("dam_break", "double_dam_break", "block_drop", "corridor")


@dataclass
class Scene:
    """Validated simulation scene; construct via load_scene/preset_scene."""

    domain_min: tuple[float, float, float]
    domain_max: tuple[float, float, float]
    fluid_boxes: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...]
    spacing: float
    rest_density: float = 1000.0
    sound_speed: float = 30.0
    viscosity: float = 5e-6  # kinematic, m^2/s
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)
    boundary_layers: int = 2
    dt_base: float | None = None  # None: solver-specific default
    minor_steps: int = 4
    lambda_v: float = 0.4
    lambda_f: float = 0.25
    alpha: float | None = None  # None: 0.4 for WCSPH, 1.0 for PCISPH
    eta_max: float = 0.01  # max density error, fraction of rest density
    eta_avg: float = 0.001  # avg density error, fraction of rest density
    rho_T: float = 0.25  # local/global decision threshold, percent of rest density
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        self.domain_min = _tuple3(self.domain_min)
        self.domain_max = _tuple3(self.domain_max)
        self.gravity = _tuple3(self.gravity)
        self.fluid_boxes = tuple(
            (_tuple3(bmin), _tuple3(bmax)) for bmin, bmax in self.fluid_boxes
        )
        self.validate()

    # ------------------------------------------------------------------
    # derived quantities
    # ------------------------------------------------------------------

    @property
    def particle_mass(self) -> float:
        """Lattice particle mass m = rho0 * s^3."""
        return self.rest_density * self.spacing**3

    @property
    def support_radius(self) -> float:
        return SUPPORT_FACTOR * self.spacing

    def block_size(self, mode: str) -> float:
        if mode == "wcsph":
            return WCSPH_BLOCK_FACTOR * self.spacing
        if mode == "pcisph":
            return PCISPH_BLOCK_FACTOR * self.spacing
        raise ValueError(f"unknown solver mode {mode!r}")

    def alpha_for(self, mode: str) -> float:
        if self.alpha is not None:
            return self.alpha
        return 0.4 if mode == "wcsph" else 1.0

    def betas(self, n: int | None = None) -> np.ndarray:
        """beta_n for n = 1..n (default minor_steps); index 0 unused."""
        if n is None:
            n = self.minor_steps
        out = np.empty(n + 1)
        out[0] = np.nan
        out[1] = np.inf
        for i in range(2, n + 1):
            out[i] = BETA_BASE * BETA_DECAY ** (i - 2)
        return out

    def base_dt(self, mode: str) -> float:
        """Base (minor) step for the given solver mode.

        WCSPH defaults to a quarter of the acoustic bound so blocks can
        earn steps up to 4*dt_b under the sound-speed criterion; PCISPH
        scales the reference 3.5e-4 s step linearly with spacing.
        """
        if self.dt_base is not None:
            return self.dt_base
        if mode == "wcsph":
            return 0.25 * (self.lambda_v * self.block_size("wcsph") / self.sound_speed)
        if mode == "pcisph":
            return PCISPH_DT_BASE_FACTOR * self.spacing
        raise ValueError(f"unknown solver mode {mode!r}")

    def const_dt(self) -> float:
        """Constant step for the non-adaptive PCISPH baseline."""
        if self.dt_base is not None:
            return self.dt_base * (PCISPH_DT_CONST_FACTOR / PCISPH_DT_BASE_FACTOR)
        return PCISPH_DT_CONST_FACTOR * self.spacing

    @property
    def domain_diagonal(self) -> float:
        lo = np.asarray(self.domain_min)
        hi = np.asarray(self.domain_max)
        return float(np.linalg.norm(hi - lo))

    # ------------------------------------------------------------------
    # validation / serialization
    # ------------------------------------------------------------------

    def validate(self) -> None:
        if self.spacing <= 0.0:
            raise ConfigError("spacing must be positive")
        if self.rest_density <= 0.0:
            raise ConfigError("rest_density must be positive")
        if self.sound_speed <= 0.0:
            raise ConfigError("sound_speed must be positive")
        if self.viscosity < 0.0:
            raise ConfigError("viscosity must be non-negative")
        lo, hi = self.domain_min, self.domain_max
        if len(lo) != 3 or len(hi) != 3:
            raise ConfigError("domain must have three min and three max components")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigError("domain min must be strictly below domain max on every axis")
        if not self.fluid_boxes:
            raise ConfigError("scene has no fluid_box")
        for bmin, bmax in self.fluid_boxes:
            if any(a >= b for a, b in zip(bmin, bmax)):
                raise ConfigError("fluid_box min must be strictly below its max")
            if any(a < d - 1e-12 for a, d in zip(bmin, lo)) or any(
                b > d + 1e-12 for b, d in zip(bmax, hi)
            ):
                raise ConfigError("fluid_box must lie inside the domain")
        if not 0.0 < self.lambda_v <= 0.4:
            raise ConfigError("lambda_v exceeds 0.4 (stability limit) or is non-positive")
        if not 0.0 < self.lambda_f <= 0.25:
            raise ConfigError("lambda_f exceeds 0.25 (stability limit) or is non-positive")
        if self.minor_steps not in (2, 4):
            raise ConfigError("minor_steps must be 2 or 4")
        if self.boundary_layers < 0:
            raise ConfigError("boundary_layers must be non-negative")
        if self.dt_base is not None and self.dt_base <= 0.0:
            raise ConfigError("dt_base must be positive")
        if self.alpha is not None and self.alpha <= 0.0:
            raise ConfigError("alpha must be positive")
        if self.eta_max <= 0.0 or self.eta_avg <= 0.0:
            raise ConfigError("eta_max and eta_avg must be positive")
        if self.eta_avg > self.eta_max:
            raise ConfigError("eta_avg must not exceed eta_max")
        if self.rho_T <= 0.0:
            raise ConfigError("rho_T must be positive")

    def to_config_text(self) -> str:
        """Canonical scene file text; parsing it back reproduces the Scene."""
        lines = []
        lines.append("domain = " + _fmt_floats(self.domain_min + self.domain_max))
        for bmin, bmax in self.fluid_boxes:
            lines.append("fluid_box = " + _fmt_floats(bmin + bmax))
        lines.append(f"spacing = {self.spacing!r}")
        lines.append(f"rest_density = {self.rest_density!r}")
        lines.append(f"sound_speed = {self.sound_speed!r}")
        lines.append(f"viscosity = {self.viscosity!r}")
        lines.append("gravity = " + _fmt_floats(self.gravity))
        lines.append(f"boundary_layers = {self.boundary_layers}")
        if self.dt_base is not None:
            lines.append(f"dt_base = {self.dt_base!r}")
        lines.append(f"minor_steps = {self.minor_steps}")
        lines.append(f"lambda_v = {self.lambda_v!r}")
        lines.append(f"lambda_f = {self.lambda_f!r}")
        if self.alpha is not None:
            lines.append(f"alpha = {self.alpha!r}")
        lines.append(f"eta_max = {self.eta_max!r}")
        lines.append(f"eta_avg = {self.eta_avg!r}")
        lines.append(f"rho_T = {self.rho_T!r}")
        return "\n".join(lines) + "\n"

    def scene_hash(self) -> str:
        return hashlib.sha1(self.to_config_text().encode()).hexdigest()


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _tuple3(values) -> tuple[float, float, float]:
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise ConfigError(f"expected 3 components, got {len(out)}")
    return out


# ----------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------


def parse_scene_text(text: str, name: str = "custom") -> Scene:
    """Parse ``key = value`` scene text into a validated Scene."""
    pairs: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        pairs.append((lineno, key, value))

    base: dict = {}
    preset_entries = [(ln, v) for ln, k, v in pairs if k == "preset"]
    if preset_entries:
        if len(preset_entries) > 1:
            raise ConfigError(f"line {preset_entries[1][0]}: preset given more than once")
        lineno, preset_name = preset_entries[0]
        if preset_name not in PRESET_NAMES:
            raise ConfigError(
                f"line {lineno}: unknown preset {preset_name!r}; "
                f"choices are {', '.join(PRESET_NAMES)}"
            )
        base = _scene_kwargs(preset_scene(preset_name))
        name = preset_name

    fluid_boxes: list = [] if any(k == "fluid_box" for _, k, _ in pairs) else list(
        base.get("fluid_boxes", ())
    )
    for lineno, key, value in pairs:
        if key == "preset":
            continue
        try:
            if key in _FLOAT_KEYS:
                base[key] = float(value)
            elif key in _INT_KEYS:
                base[key] = int(value)
            elif key in _VEC3_KEYS:
                base[key] = _parse_floats(value, 3)
            elif key == "domain":
                six = _parse_floats(value, 6)
                base["domain_min"], base["domain_max"] = six[:3], six[3:]
            elif key == "fluid_box":
                six = _parse_floats(value, 6)
                fluid_boxes.append((six[:3], six[3:]))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    base["fluid_boxes"] = tuple(fluid_boxes)

    missing = [k for k in ("domain_min", "spacing") if k not in base]
    if missing:
        raise ConfigError("scene is missing required keys: domain and/or spacing")
    return Scene(name=name, **base)


def _parse_floats(value: str, n: int) -> tuple[float, ...]:
    parts = value.split()
    if len(parts) != n:
        raise ConfigError(f"expected {n} numbers, got {len(parts)}")
    return tuple(float(p) for p in parts)


def _scene_kwargs(scene: Scene) -> dict:
    return {
        "domain_min": scene.domain_min,
        "domain_max": scene.domain_max,
        "fluid_boxes": scene.fluid_boxes,
        "spacing": scene.spacing,
        "rest_density": scene.rest_density,
        "sound_speed": scene.sound_speed,
        "viscosity": scene.viscosity,
        "gravity": scene.gravity,
        "boundary_layers": scene.boundary_layers,
        "dt_base": scene.dt_base,
        "minor_steps": scene.minor_steps,
        "lambda_v": scene.lambda_v,
        "lambda_f": scene.lambda_f,
        "alpha": scene.alpha,
        "eta_max": scene.eta_max,
        "eta_avg": scene.eta_avg,
        "rho_T": scene.rho_T,
    }


def load_scene(source: str) -> Scene:
    """Load a scene from a preset name or a scene file path."""
    if source in PRESET_NAMES:
        return preset_scene(source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scene {source!r}: {exc}") from None
    return parse_scene_text(text, name=source)


# ----------------------------------------------------------------------
# presets (desk-scale variants of the benchmark scenes)
# ----------------------------------------------------------------------


def preset_scene(name: str, spacing: float = 0.02) -> Scene:
    """Build one of the shipped scenes at the given particle spacing."""
    s = spacing
    if name == "dam_break":
        # 20x20x20 column released into a narrow tank: 8000 fluid particles.
        return Scene(
            name=name,
            domain_min=(0.0, 0.0, 0.0),
            domain_max=(60 * s, 40 * s, 20 * s),
            fluid_boxes=(((0.0, 0.0, 0.0), (20 * s, 20 * s, 20 * s)),),
            spacing=s,
        )
    if name == "double_dam_break":
        # Two 25x24x25 columns at diagonally opposite floor corners of a
        # square tank collapse into each other: 30000.
        return Scene(
            name=name,
            domain_min=(0.0, 0.0, 0.0),
            domain_max=(60 * s, 40 * s, 60 * s),
            fluid_boxes=(
                ((0.0, 0.0, 0.0), (25 * s, 24 * s, 25 * s)),
                ((35 * s, 0.0, 35 * s), (60 * s, 24 * s, 60 * s)),
            ),
            spacing=s,
        )
    if name == "block_drop":
        # Shallow pool plus a cube dropped from above: 9600 + 4096.
        return Scene(
            name=name,
            domain_min=(0.0, 0.0, 0.0),
            domain_max=(60 * s, 45 * s, 20 * s),
            fluid_boxes=(
                ((0.0, 0.0, 0.0), (60 * s, 8 * s, 20 * s)),
                ((22 * s, 25 * s, 2 * s), (38 * s, 41 * s, 18 * s)),
            ),
            spacing=s,
        )
    if name == "corridor":
        # Tall reservoir draining along a long corridor: 7290.
        return Scene(
            name=name,
            domain_min=(0.0, 0.0, 0.0),
            domain_max=(120 * s, 30 * s, 15 * s),
            fluid_boxes=(((0.0, 0.0, 0.0), (18 * s, 27 * s, 15 * s)),),
            spacing=s,
        )
    raise ConfigError(f"unknown preset {name!r}; choices are {', '.join(PRESET_NAMES)}")


# ----------------------------------------------------------------------
# seeding
# ----------------------------------------------------------------------


def _axis_count(extent: float, s: float) -> int:
    # Half-offset lattice: n cell centers fit when n = round(extent / s),
    # robust against extent/s landing an ulp on either side of an integer.
    return max(0, int(math.floor(extent / s + 0.5)))


def _box_lattice(bmin, bmax, s: float) -> np.ndarray:
    counts = [_axis_count(hi - lo, s) for lo, hi in zip(bmin, bmax)]
    if any(c == 0 for c in counts):
        return np.zeros((0, 3))
    axes = [lo + (np.arange(c) + 0.5) * s for lo, c in zip(bmin, counts)]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)


def seed_particles(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """Seed fluid and boundary positions for a scene.

    Fluid particles sit on a cell-centered cubic lattice inside each
    fluid box; boundary particles form ``boundary_layers`` shells just
    outside the domain walls on the same global lattice, so a fluid
    particle resting against a wall sees boundary neighbors at exactly
    one spacing. Returns (fluid, boundary) float64 arrays of shape
    (n, 3); both are deterministic functions of the scene.
    """
    fluid = [_box_lattice(bmin, bmax, scene.spacing) for bmin, bmax in scene.fluid_boxes]
    fluid_pos = np.concatenate(fluid, axis=0) if fluid else np.zeros((0, 3))

    layers = scene.boundary_layers
    if layers == 0:
        return fluid_pos, np.zeros((0, 3))

    s = scene.spacing
    lo = np.asarray(scene.domain_min)
    hi = np.asarray(scene.domain_max)
    counts = [_axis_count(h - l, s) for l, h in zip(lo, hi)]
    axes = [l + (np.arange(-layers, c + layers) + 0.5) * s for l, c in zip(lo, counts)]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    shell = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    inside = np.all((shell > lo) & (shell < hi), axis=1)
    return fluid_pos, shell[~inside]
