"""Run configuration: a TOML document whose sections mirror the modules.

Every field has a default, so an empty file is a valid configuration.  Paths
are resolved relative to the config file's directory.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cnn import CnnArch, TrainSettings
from .errors import ConfigurationError, GridSurrogateError
from .gbm import GbmHyperparams
from .perturb import channel_mask
from .scenarios import SCENARIO_NAMES, stable_hash
from .windows import DEFAULT_INPUTS

CONFIG_ENV = "GRID_SURROGATE_CONFIG"


@dataclass(frozen=True)
class Paths:
    data_dir: Path = Path("data")
    model_dir: Path = Path("models")
    report_dir: Path = Path("reports")


@dataclass(frozen=True)
class SimulationConfig:
    duration: float = 1.0
    dt_out: float = 1e-4
    dt_sim: float = 5e-5
    v_nom_ll: float = 480.0
    load_variation: float = 0.05
    scenarios: tuple[str, ...] = SCENARIO_NAMES
    val_fraction: float = 0.25


@dataclass(frozen=True)
class PipelineConfig:
    window: int = 100
    stride: int = 10
    horizon: int = 0
    inputs: tuple[str, ...] = DEFAULT_INPUTS


@dataclass(frozen=True)
class OodConfig:
    snr_db: float = 40.0
    delay: float = 5e-3
    channel_mask: tuple[str, ...] | None = None


@dataclass(frozen=True)
class BenchConfig:
    repetitions: int = 5
    warmup: int = 1
    scenario: str = "normal"


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    gbm: GbmHyperparams = field(default_factory=GbmHyperparams)
    cnn: TrainSettings = field(default_factory=TrainSettings)
    cnn_arch: CnnArch = field(default_factory=CnnArch)
    ood: OodConfig = field(default_factory=OodConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    seed: int = 42

    # Hashes of the settings each stage depends on; artifacts record them so a
    # stale file is detected instead of silently reused.
    def data_hash(self) -> str:
        return stable_hash({"simulation": _plain(self.simulation), "ood": _plain(self.ood), "seed": self.seed})

    def feature_hash(self) -> str:
        return stable_hash({"data": self.data_hash(), "pipeline": _plain(self.pipeline)})

    def model_hash(self, engine: str) -> str:
        part = {"gbm": _plain(self.gbm), "cnn": [_plain(self.cnn), _plain(self.cnn_arch)]}
        if engine == "hybrid":
            return stable_hash({"features": self.feature_hash(), **part})
        return stable_hash({"features": self.feature_hash(), engine: part[engine]})

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed, gbm=dataclasses.replace(self.gbm, seed=seed),
                                   cnn=dataclasses.replace(self.cnn, seed=seed))


def _plain(obj):
    d = dataclasses.asdict(obj)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _section(cls, data: dict, name: str, **extra):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"[{name}] has unknown keys: {', '.join(sorted(unknown))}")
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    for k, v in kwargs.items():
        if not _type_ok(defaults[k], v):
            raise ConfigurationError(f"[{name}] {k} = {v!r} has the wrong type")
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, GridSurrogateError) as exc:
        raise ConfigurationError(f"[{name}]: {exc}") from None


def _type_ok(default, value) -> bool:
    if isinstance(value, bool) != isinstance(default, bool):
        return default is None or default is dataclasses.MISSING
    if isinstance(default, float):
        return isinstance(value, (int, float))
    if isinstance(default, (int, str, tuple)):
        return isinstance(value, type(default))
    return True


SECTIONS = ("paths", "simulation", "pipeline", "gbm", "cnn", "cnn_arch", "ood", "bench")


def parse_config(data: dict, base_dir: str | os.PathLike = ".") -> RunConfig:
    unknown = set(data) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {', '.join(sorted(unknown))}")
    seed = data.get("seed", 42)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    base = Path(base_dir)
    raw_paths = data.get("paths", {})
    paths = _section(Paths, {k: base / v for k, v in raw_paths.items()}, "paths")
    defaults = Paths()
    paths = Paths(*(getattr(paths, f.name) if f.name in raw_paths else base / getattr(defaults, f.name)
                    for f in dataclasses.fields(Paths)))
    gbm_d = dict(data.get("gbm", {}))
    gbm_d.setdefault("seed", seed)
    cnn_d = dict(data.get("cnn", {}))
    cnn_d.setdefault("seed", seed)
    pipe = _section(PipelineConfig, data.get("pipeline", {}), "pipeline")
    arch_d = dict(data.get("cnn_arch", {}))
    arch_d.setdefault("window", pipe.window)
    arch_d.setdefault("n_inputs", len(pipe.inputs))
    cfg = RunConfig(
        paths=paths,
        simulation=_section(SimulationConfig, data.get("simulation", {}), "simulation"),
        pipeline=pipe,
        gbm=_section(GbmHyperparams, gbm_d, "gbm"),
        cnn=_section(TrainSettings, cnn_d, "cnn"),
        cnn_arch=_section(CnnArch, arch_d, "cnn_arch"),
        ood=_section(OodConfig, data.get("ood", {}), "ood"),
        bench=_section(BenchConfig, data.get("bench", {}), "bench"),
        seed=seed,
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    s, p = cfg.simulation, cfg.pipeline
    if not (s.duration > 0 and s.dt_out > 0 and s.dt_sim > 0):
        raise ConfigurationError("duration, dt_out and dt_sim must be positive")
    if s.dt_sim > s.dt_out:
        raise ConfigurationError("dt_sim must not exceed dt_out")
    bad = set(s.scenarios) - set(SCENARIO_NAMES)
    if bad:
        raise ConfigurationError(f"unknown scenarios: {sorted(bad)}")
    if not 0 < s.val_fraction < 1:
        raise ConfigurationError("val_fraction must lie in (0, 1)")
    if p.window < 1 or p.stride < 1 or p.horizon < 0:
        raise ConfigurationError("pipeline needs window >= 1, stride >= 1, horizon >= 0")
    if cfg.cnn_arch.window != p.window or cfg.cnn_arch.n_inputs != len(p.inputs):
        raise ConfigurationError("cnn_arch window/n_inputs must match the pipeline")
    if not cfg.ood.delay >= 0:
        raise ConfigurationError("ood.delay must be non-negative")
    if cfg.ood.delay >= s.duration:
        raise ConfigurationError("ood.delay must be shorter than the run")
    try:
        channel_mask(cfg.ood.channel_mask)
    except GridSurrogateError as exc:
        raise ConfigurationError(str(exc)) from None
    if cfg.bench.repetitions < 3:
        raise ConfigurationError("bench.repetitions must be at least 3")
    if cfg.bench.scenario not in SCENARIO_NAMES:
        raise ConfigurationError(f"unknown bench scenario {cfg.bench.scenario!r}")


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Read a config file; with no path, fall back to $GRID_SURROGATE_CONFIG, then all defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return parse_config({}, Path.cwd())
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return parse_config(data, path.parent)
