"""Synthetic spectral phantoms, scan simulation and view subsampling.

Scenes live in a normalized field of view [-1, 1]^2 (x right, y up) that
maps onto the N x N reconstruction grid.  Materials follow a two-term
model: a photoelectric part falling as E^-3 plus an energy-flat Compton
part.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import CADMIUM_MAX_ATTENUATION, EnergyGrid, SpectralImage, SpectralSinogram, sinogram_from_counts
from .projector import ScanGeometry, forward_stack

SHAPE_KINDS = ("ellipse", "rectangle", "squircle", "annulus")
REFERENCE_ENERGY_KEV = 60.0
FOV_RADIUS = 0.95
METAL_NAME = "aluminum-like"


@dataclass(frozen=True)
class MaterialSpectrum:
    name: str
    photoelectric: float
    compton: float

    def __post_init__(self):
        if self.photoelectric < 0 or self.compton < 0:
            raise ValueError("material coefficients must be non-negative")

    def attenuation(self, energies_keV) -> np.ndarray:
        e = np.asarray(energies_keV, dtype=np.float64)
        return self.photoelectric * (e / REFERENCE_ENERGY_KEV) ** -3 + self.compton


def build_material_library(count: int = 48, rng_seed: int = 0) -> list[MaterialSpectrum]:
    """Parametric stand-ins for a segmented material database.

    Entry 0 is always the metal-like material used by the metal-artifact
    experiments; the rest span soft (flat, low) to dense (steep, high).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    metal = MaterialSpectrum(METAL_NAME, photoelectric=(6.0 - 0.4) / 27.0, compton=0.4)
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 48]))
    lib = [metal]
    for k in range(1, count):
        p = math.exp(rng.uniform(math.log(2e-3), math.log(0.12)))
        c = rng.uniform(0.1, 0.5)
        # keep mu(20 keV) under the reference scale
        p = min(p, (CADMIUM_MAX_ATTENUATION - c) / 27.0)
        lib.append(MaterialSpectrum(f"material-{k:02d}", p, c))
    return lib


@dataclass(frozen=True)
class Shape2D:
    kind: str
    center: tuple[float, float]
    half_axes: tuple[float, float]
    rotation: float
    material_id: int
    inner_fraction: float = 0.6  # annulus only

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if min(self.half_axes) <= 0:
            raise ValueError("half-axes must be positive")

    def bounding_radius(self) -> float:
        a, b = self.half_axes
        extent = math.hypot(a, b) if self.kind in ("rectangle", "squircle") else max(a, b)
        return math.hypot(*self.center) + extent

    def inside_fov(self, radius: float = FOV_RADIUS) -> bool:
        return self.bounding_radius() <= radius + 1e-12

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        cr, sr = math.cos(self.rotation), math.sin(self.rotation)
        dx, dy = x - self.center[0], y - self.center[1]
        u = (cr * dx + sr * dy) / self.half_axes[0]
        v = (-sr * dx + cr * dy) / self.half_axes[1]
        if self.kind == "ellipse":
            return u * u + v * v <= 1.0
        if self.kind == "rectangle":
            return (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)
        if self.kind == "squircle":
            return u ** 4 + v ** 4 <= 1.0
        r2 = u * u + v * v
        return (r2 <= 1.0) & (r2 >= self.inner_fraction ** 2)


@dataclass(frozen=True)
class SceneConfig:
    min_shapes: int = 2
    max_shapes: int = 6
    min_half_axis: float = 0.08
    max_container_half_axis: float = 0.8
    force_metal: bool = False

    def __post_init__(self):
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ValueError("need 1 <= min_shapes <= max_shapes")
        if not 0 < self.min_half_axis < self.max_container_half_axis <= FOV_RADIUS:
            raise ValueError("invalid half-axis bounds")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class PhantomScene:
    shapes: list[Shape2D] = field(default_factory=list)
    materials: list[MaterialSpectrum] = field(default_factory=list)


def _random_shape(rng: np.random.Generator, max_half: float, min_half: float, n_materials: int,
                  within: Shape2D | None) -> Shape2D:
    kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    a = rng.uniform(min_half, max_half)
    b = rng.uniform(max(min_half, 0.4 * a), a)
    extent = math.hypot(a, b) if kind in ("rectangle", "squircle") else a
    if within is not None:
        # nest inside an earlier shape when there is room, else anywhere
        room = min(within.half_axes) - extent
        if room > 0:
            r = room * math.sqrt(rng.uniform())
            phi = rng.uniform(0, 2 * math.pi)
            cx, cy = within.center[0] + r * math.cos(phi), within.center[1] + r * math.sin(phi)
        else:
            within = None
    if within is None:
        reach = max(FOV_RADIUS - extent, 0.0)
        r = reach * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        cx, cy = r * math.cos(phi), r * math.sin(phi)
    shape = Shape2D(kind, (cx, cy), (a, b), float(rng.uniform(0, math.pi)),
                    int(rng.integers(n_materials)), float(rng.uniform(0.4, 0.8)))
    if not shape.inside_fov():
        # nested placement may poke out for rotated boxes; fall back to a centered copy
        scale = (FOV_RADIUS - math.hypot(cx, cy)) / extent
        shape = Shape2D(kind, (cx, cy), (a * scale, b * scale), shape.rotation,
                        shape.material_id, shape.inner_fraction)
    return shape


def sample_scene(rng_seed: int, scene_cfg: SceneConfig = SceneConfig(),
                 materials: list[MaterialSpectrum] | None = None) -> PhantomScene:
    """Random container scene; later shapes overwrite earlier ones."""
    materials = materials if materials is not None else build_material_library()
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 7]))
    count = int(rng.integers(scene_cfg.min_shapes, scene_cfg.max_shapes + 1))
    shapes: list[Shape2D] = []
    for k in range(count):
        if k == 0:
            shape = _random_shape(rng, scene_cfg.max_container_half_axis,
                                  max(scene_cfg.min_half_axis, 0.45), len(materials), None)
        else:
            parent = shapes[int(rng.integers(len(shapes)))] if rng.uniform() < 0.6 else None
            shape = _random_shape(rng, max(scene_cfg.min_half_axis * 1.5, 0.4),
                                  scene_cfg.min_half_axis, len(materials), parent)
        shapes.append(shape)
    if scene_cfg.force_metal:
        metal = [i for i, m in enumerate(materials) if m.name == METAL_NAME]
        if not metal:
            raise ValueError("material library has no metal entry")
        last = shapes[-1]
        shapes[-1] = Shape2D(last.kind, last.center, last.half_axes, last.rotation, metal[0], last.inner_fraction)
    return PhantomScene(shapes, list(materials))


def rasterize(scene: PhantomScene, image_size: int, grid: EnergyGrid,
              pixel_size_cm: float = 0.1, supersample: int = 4) -> SpectralImage:
    """Topmost-shape material per subsample, averaged over ``supersample``^2 subpixels."""
    n, m = image_size, supersample
    coords = (np.arange(n * m) + 0.5) / (n * m) * 2.0 - 1.0
    x = coords[None, :]
    y = -coords[:, None]
    label = np.full((n * m, n * m), -1, dtype=np.int64)
    for shape in scene.shapes:
        label[np.broadcast_to(shape.contains(x, y), label.shape)] = shape.material_id
    if scene.materials:
        table = np.stack([mat.attenuation(grid.energies) for mat in scene.materials])
    else:
        table = np.zeros((0, grid.num_channels))
    table = np.vstack([table, np.zeros((1, grid.num_channels))])  # background row for label -1
    fine = table[label]  # (nm, nm, S)
    img = fine.reshape(n, m, n, m, grid.num_channels).mean(axis=(1, 3))
    return SpectralImage(np.moveaxis(img, -1, 0).copy(), pixel_size_cm)


NOISE_MODES = ("none", "gaussian", "poisson")


@dataclass(frozen=True)
class NoiseConfig:
    mode: str = "none"
    sigma: float | tuple[float, ...] = 0.0
    incident_counts: float | tuple[float, ...] = 1e5
    target_channels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if np.any(np.asarray(self.sigma) < 0):
            raise ValueError("sigma must be >= 0")
        if np.any(np.asarray(self.incident_counts) < 1):
            raise ValueError("incident_counts must be >= 1")


def _channel_rng(seed: int, channel: int) -> np.random.Generator:
    # counter-based stream per (seed, channel); entries are drawn in (view, bin) order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1013, channel])))


def _per_channel(value, n_ch: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return np.full(n_ch, float(arr)) if arr.ndim == 0 else arr


def add_noise(clean: np.ndarray, noise: NoiseConfig, seed: int) -> np.ndarray:
    if noise.mode == "none":
        return clean.copy()
    n_ch = clean.shape[0]
    targets = range(n_ch) if noise.target_channels is None else noise.target_channels
    out = clean.copy()
    if noise.mode == "gaussian":
        sig = _per_channel(noise.sigma, n_ch)
        for c in targets:
            out[c] += sig[c] * _channel_rng(seed, c).standard_normal(clean.shape[1:])
        return out
    i0 = _per_channel(noise.incident_counts, n_ch)
    for c in targets:
        counts = _channel_rng(seed, c).poisson(i0[c] * np.exp(-clean[c]))
        out[c] = sinogram_from_counts(counts, np.full(counts.shape, i0[c]))
    return out


def simulate_scan(phantom: SpectralImage, geo: ScanGeometry, noise: NoiseConfig = NoiseConfig(),
                  seed: int = 0) -> SpectralSinogram:
    clean = forward_stack(phantom.data, geo)
    return SpectralSinogram(add_noise(clean, noise, seed), geo.angles)


def subsample_indices(v_dense: int, v_sparse: int) -> np.ndarray:
    if not 1 <= v_sparse <= v_dense:
        raise ValueError("need 1 <= v_sparse <= v_dense")
    return (np.arange(v_sparse) * v_dense) // v_sparse


def subsample_views(sino: SpectralSinogram, v_sparse: int) -> SpectralSinogram:
    idx = subsample_indices(sino.views, v_sparse)
    return SpectralSinogram(sino.data[:, idx, :], sino.angles_rad[idx])
