"""Run configuration: dataclass sections, flat ``key = value`` files and presets."""

from __future__ import annotations

import hashlib
import json
import types
import typing
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .core import EnergyGrid
from .dataset import GeometryConfig
from .fbp import FilterConfig
from .iterative import ArtTvConfig, TnvConfig
from .metrics import PatchSpec
from .network.training import TrainConfig
from .network.unet import UNetConfig
from .phantom import NoiseConfig, SceneConfig


@dataclass(frozen=True)
class EnergyConfig:
    num_channels: int = 8
    low_keV: float = 20.0
    high_keV: float = 108.2

    def grid(self) -> EnergyGrid:
        return EnergyGrid.uniform(self.num_channels, self.low_keV, self.high_keV)


@dataclass(frozen=True)
class DataConfig:
    seed: int = 0
    train_count: int = 540
    val_count: int = 60
    test_count: int = 50
    # "phantom" or "art-tv-74"
    target: str = "phantom"
    art_targets: bool = False

    def __post_init__(self):
        if self.target not in ("phantom", "art-tv-74"):
            raise ValueError(f"unknown training target {self.target!r}")
        if min(self.train_count, self.val_count, self.test_count) < 0:
            raise ValueError("slice counts must be >= 0")


@dataclass(frozen=True)
class EvalConfig:
    methods: tuple[str, ...] = ("fbp", "art-tv", "tnv", "dsir")
    # "row,col,height,width,label" entries separated by ';'
    patches: str = ""
    noise_sigmas: tuple[float, ...] = (0.5, 1.0, 1.5)
    noise_energies_keV: tuple[float, ...] = (42.0, 76.2)
    noise_slices: int = 10
    select_lambda: bool = True

    def patch_specs(self) -> list[PatchSpec]:
        specs = []
        for item in filter(None, (p.strip() for p in self.patches.split(";"))):
            parts = [s.strip() for s in item.split(",")]
            if len(parts) not in (4, 5):
                raise ValueError(f"bad patch spec {item!r}; expected row,col,height,width[,label]")
            label = parts[4] if len(parts) == 5 else f"patch{len(specs)}"
            specs.append(PatchSpec(*(int(v) for v in parts[:4]), label))
        return specs


@dataclass(frozen=True)
class BenchConfig:
    repeats: int = 5
    art_outer_iters: int = 200
    tnv_iters: int = 200

    def __post_init__(self):
        if self.repeats < 5:
            raise ValueError("benchmarks need at least 5 repetitions")


# network sizes that follow from the data; echoed, but may not disagree with it
_DERIVED_UNET = ("in_channels", "out_channels", "input_size")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    noise: NoiseConfig = field(default_factory=lambda: NoiseConfig("poisson", incident_counts=1e4))
    scene: SceneConfig = field(default_factory=SceneConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    art: ArtTvConfig = field(default_factory=ArtTvConfig)
    tnv: TnvConfig = field(default_factory=TnvConfig)
    unet: UNetConfig = field(default_factory=lambda: UNetConfig(8, 8, base_filters=8, input_size=64))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=80, batch_size=10, base_lr=1e-3,
                                                                      lr_decay=1e-3, noise_sigma=0.005))
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self):
        s, n = self.energy.num_channels, self.geometry.image_size
        if (self.unet.in_channels, self.unet.out_channels, self.unet.input_size) != (s, s, n):
            object.__setattr__(self, "unet", replace(self.unet, in_channels=s, out_channels=s, input_size=n))

    @property
    def grid(self) -> EnergyGrid:
        return self.energy.grid()

    def to_flat(self) -> dict[str, str]:
        out = {}
        for sec in fields(self):
            section = getattr(self, sec.name)
            for f in fields(section):
                out[f"{sec.name}.{f.name}"] = _format(getattr(section, f.name))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.to_flat().items()))

    def digest(self) -> str:
        return _hash(self.to_flat())

    def geometry_digest(self) -> str:
        """Hash of everything that fixes the image/sinogram grid and channel energies."""
        flat = self.to_flat()
        return _hash({k: v for k, v in flat.items() if k.startswith(("geometry.", "energy."))})

    def with_overrides(self, flat: dict[str, str]) -> "RunConfig":
        sections = {sec.name: getattr(self, sec.name) for sec in fields(self)}
        grouped: dict[str, dict] = {}
        derived = {}
        for key, raw in flat.items():
            sec_name, _, attr = key.partition(".")
            if sec_name not in sections or not attr:
                raise ValueError(f"unknown config key {key!r}")
            section = sections[sec_name]
            hints = typing.get_type_hints(type(section))
            if attr not in hints:
                raise ValueError(f"unknown config key {key!r}")
            if sec_name == "unet" and attr in _DERIVED_UNET:
                derived[key] = _parse(raw, hints[attr], key)
                continue
            grouped.setdefault(sec_name, {})[attr] = _parse(raw, hints[attr], key)
        for name, changes in grouped.items():
            sections[name] = replace(sections[name], **changes)
        cfg = RunConfig(**sections)
        for key, value in derived.items():
            # echoed configs carry these; they must agree with the data shape
            if getattr(cfg.unet, key.split(".")[1]) != value:
                raise ValueError(f"{key} = {value} disagrees with energy.num_channels / geometry.image_size")
        return cfg


def _hash(flat: dict) -> str:
    return hashlib.sha256(json.dumps(flat, sort_keys=True).encode()).hexdigest()[:16]


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _scalar(raw: str, kind, key: str):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind in (int, float):
        try:
            return kind(float(raw)) if kind is int and "e" in raw.lower() else kind(raw)
        except ValueError:
            raise ValueError(f"{key}: expected {kind.__name__}, got {raw!r}") from None
    return raw


def _parse(raw: str, hint, key: str):
    raw = raw.strip()
    if hint in (bool, int, float, str):
        return _scalar(raw, hint, key)
    options = typing.get_args(hint) if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union \
        else (hint,)
    if type(None) in options and raw.lower() in ("none", ""):
        return None
    for opt in options:
        if typing.get_origin(opt) is tuple and ("," in raw or len(options) == 1 or
                                                not any(o in (int, float) for o in options)):
            elem = typing.get_args(opt)[0]
            return tuple(_scalar(v.strip(), elem, key) for v in raw.split(",") if v.strip())
    for opt in options:
        if opt in (bool, int, float, str):
            return _scalar(raw, opt, key)
    raise ValueError(f"{key}: cannot parse {raw!r}")


def parse_config_text(text: str) -> dict[str, str]:
    flat = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected 'section.key = value'")
        flat[key.strip()] = value.strip()
    return flat


PRESETS: dict[str, dict[str, str]] = {
    "ci": {},
    "paper": {
        "geometry.image_size": "96",
        "energy.num_channels": "32",
        "unet.base_filters": "64",
        "train.epochs": "30",
        "train.batch_size": "50",
        "train.base_lr": "1e-4",
        "train.lr_decay": "1e-6",
        "train.noise_sigma": "0.02",
        "data.train_count": "5100",
        "data.val_count": "500",
        "data.test_count": "100",
    },
}


def load_config(path=None, preset: str = "ci", seed: int | None = None) -> RunConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    cfg = RunConfig().with_overrides(PRESETS[preset])
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cfg = cfg.with_overrides(parse_config_text(fh.read()))
    if seed is not None:
        cfg = replace(cfg, data=replace(cfg.data, seed=int(seed)), train=replace(cfg.train, seed=int(seed)))
    return cfg


def slice_seed(base_seed: int, split: str, index: int) -> int:
    split_id = {"train": 0, "val": 1, "test": 2}[split]
    return int(np.random.SeedSequence([base_seed, split_id, index]).generate_state(1)[0])
