"""Disturbance scenario catalog, event scheduling, runs and corpus splitting."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import simulator as sim
from .dataset import TimeSeriesDataset
from .errors import ConfigurationError, DivergenceError, ParameterError
from .perturb import inject_delay, inject_noise

SCENARIO_NAMES: tuple[str, ...] = (
    "normal",
    "load_step",
    "voltage_sag",
    "load_ramp",
    "frequency_ramp",
    "generator_trip",
    "tieline_open",
    "reactive_disturbance",
    "slg_fault",
    "noise",
    "comm_delay",
)
OOD_SCENARIOS = frozenset({"noise", "comm_delay"})

VARIANTS = (
    "load_step",
    "voltage_sag",
    "load_ramp",
    "frequency_ramp",
    "generator_trip",
    "tieline_open",
    "reactive_disturbance",
    "slg_fault",
    "noise_injection",
    "comm_delay",
    "none",
)
MEASUREMENT_VARIANTS = frozenset({"noise_injection", "comm_delay"})

# Load-profile variability present in every run, sampled on this grid.
LOAD_PROFILE_STEP = 1e-3


@dataclass(frozen=True)
class EventEffect:
    """One scheduled disturbance.

    ``magnitude`` is in W for load events, var for reactive events and Hz for
    frequency ramps; ``target`` is a bus (0 = every bus), DG or line index
    depending on the variant.  ``duration`` is the forcing window for sags and
    faults and the ramp time for ramps.
    """

    variant: str
    time: float = 0.0
    magnitude: float = 0.0
    reactive: float = 0.0
    depth: float = 0.0
    duration: float = 0.0
    target: int = 0
    snr_db: float = math.inf
    delay: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError("variant", f"unknown event variant {self.variant!r}")
        if not math.isfinite(self.time) or self.time < 0:
            raise ParameterError("time", "event time must be finite and non-negative")
        v = self.variant
        if v in ("voltage_sag", "slg_fault"):
            if not 0 < self.depth <= 1:
                raise ParameterError("depth", f"sag depth must lie in (0, 1], got {self.depth!r}")
            if not self.duration > 0:
                raise ParameterError("duration", "sag/fault duration must be positive")
        if v in ("load_ramp", "frequency_ramp") and not self.duration > 0:
            raise ParameterError("duration", "ramp duration must be positive")
        if v == "generator_trip" and not 1 <= self.target <= sim.N_DG:
            raise ParameterError("target", f"DG index must lie in 1..{sim.N_DG}")
        if v == "tieline_open" and not 1 <= self.target <= sim.N_LINES:
            raise ParameterError("target", f"line index must lie in 1..{sim.N_LINES}")
        if v in ("load_step", "load_ramp", "reactive_disturbance") and not 0 <= self.target <= sim.N_DG:
            raise ParameterError("target", f"bus index must lie in 0..{sim.N_DG}")
        if v == "slg_fault" and not 1 <= self.target <= sim.N_DG:
            raise ParameterError("target", f"faulted bus must lie in 1..{sim.N_DG}")
        if v == "comm_delay" and not self.delay >= 0:
            raise ParameterError("delay", "delay must be non-negative")
        if v == "noise_injection" and math.isnan(self.snr_db):
            raise ParameterError("snr_db", "SNR must be a number")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    duration: float = 1.0
    dt_out: float = 1e-4
    events: tuple[EventEffect, ...] = ()
    seed: int = 42
    label: int = 0
    dt_sim: float = 5e-5
    load_variation: float = 0.05  # relative std of per-bus load fluctuation
    load_variation_tau: float = 0.1  # s, correlation time of the fluctuation
    channel_mask: tuple[str, ...] | None = None  # channels perturbed by noise/delay

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ParameterError("name", f"unknown scenario {self.name!r}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ParameterError("duration", "must be positive")
        if not (self.dt_out > 0 and self.dt_sim > 0):
            raise ParameterError("dt_out", "time steps must be positive")
        if self.load_variation < 0 or not self.load_variation_tau > 0:
            raise ParameterError("load_variation", "invalid load variation parameters")
        for ev in self.events:
            if not 0 <= ev.time < self.duration:
                raise ParameterError("events", f"event time {ev.time} outside [0, {self.duration})")

    @property
    def is_ood(self) -> bool:
        return self.name in OOD_SCENARIOS

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["events"] = [_event_dict(e) for e in self.events]
        d["channel_mask"] = list(self.channel_mask) if self.channel_mask is not None else None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        events = tuple(EventEffect(**{k: _float_in(v) if k == "snr_db" else v for k, v in e.items()})
                       for e in data.pop("events", ()))
        mask = data.pop("channel_mask", None)
        return cls(events=events, channel_mask=tuple(mask) if mask is not None else None, **data)


def _event_dict(e: EventEffect) -> dict:
    d = dataclasses.asdict(e)
    if math.isinf(d["snr_db"]):
        d["snr_db"] = "inf"
    return d


def _float_in(v):
    return float(v) if isinstance(v, str) else v


def _default_events(name: str) -> tuple[EventEffect, ...]:
    base = sim.DEFAULT_LOAD
    if name == "load_step":
        return (EventEffect("load_step", time=0.3, magnitude=0.5 * base.real,
                            reactive=0.5 * base.imag, target=0),)
    if name == "voltage_sag":
        return (EventEffect("voltage_sag", time=0.3, depth=0.3, duration=0.1),)
    if name == "load_ramp":
        return (EventEffect("load_ramp", time=0.3, magnitude=5e3 / sim.N_DG, duration=0.5, target=0),)
    if name == "frequency_ramp":
        return (EventEffect("frequency_ramp", time=0.3, magnitude=-0.2, duration=0.5),)
    if name == "generator_trip":
        return (EventEffect("generator_trip", time=0.5, target=5),)
    if name == "tieline_open":
        return (EventEffect("tieline_open", time=0.5, target=5),)
    if name == "reactive_disturbance":
        return (EventEffect("reactive_disturbance", time=0.3, reactive=3e3, target=0),)
    if name == "slg_fault":
        return (EventEffect("slg_fault", time=0.3, depth=0.5, duration=0.08, target=sim.PCC_BUS),)
    if name == "noise":
        return (EventEffect("noise_injection", time=0.0, snr_db=40.0),)
    if name == "comm_delay":
        return (EventEffect("comm_delay", time=0.0, delay=5e-3),)
    return ()


TEMPLATE_DURATION = 1.0


def _rescale(events: tuple[EventEffect, ...], factor: float) -> tuple[EventEffect, ...]:
    if factor == 1.0:
        return events
    return tuple(dataclasses.replace(e, time=e.time * factor, duration=e.duration * factor) for e in events)


def list_scenarios(duration: float = 1.0, dt_out: float = 1e-4, seed: int = 42) -> list[ScenarioSpec]:
    """The eleven scenario templates with default event parameters, catalog order.

    Event timings are written for a 1 s run and stretched to ``duration``, so
    a short smoke-test run still sees every disturbance.
    """
    factor = duration / TEMPLATE_DURATION
    return [ScenarioSpec(name=name, duration=duration, dt_out=dt_out, events=_rescale(_default_events(name), factor),
                         seed=seed, label=label)
            for label, name in enumerate(SCENARIO_NAMES)]


def get_scenario(name: str, **kwargs) -> ScenarioSpec:
    for spec in list_scenarios(**kwargs):
        if spec.name == name:
            return spec
    raise ParameterError("name", f"unknown scenario {name!r}")


class EventSchedule:
    """Maps simulation time to the forcing active at that instant."""

    def __init__(self, spec: ScenarioSpec, net: sim.NetworkModel):
        self.spec = spec
        self.net = net
        self.events = [e for e in spec.events if e.variant not in MEASUREMENT_VARIANTS and e.variant != "none"]
        self._profile = self._load_profile()
        self._fault_y = {}
        nominal = sim._system_matrix(net, sim.Effects())
        z_bus = np.linalg.inv(nominal)
        for e in self.events:
            if e.variant == "slg_fault":
                # Balanced equivalent of a single-phase fault: the positive-sequence
                # voltage at the faulted bus drops by depth/3.
                k = e.target - 1
                drop = e.depth / 3.0
                self._fault_y[e] = (drop / (1.0 - drop)) / z_bus[k, k]

    def _load_profile(self) -> np.ndarray:
        spec = self.spec
        n = int(math.ceil(spec.duration / LOAD_PROFILE_STEP)) + 1
        prof = np.zeros((n, sim.N_DG))
        if spec.load_variation > 0:
            rng = np.random.default_rng(spec.seed)
            a = math.exp(-LOAD_PROFILE_STEP / spec.load_variation_tau)
            kick = spec.load_variation * math.sqrt(1.0 - a * a)
            shocks = rng.standard_normal((n, sim.N_DG))
            for i in range(1, n):
                prof[i] = a * prof[i - 1] + kick * shocks[i]
        return 1.0 + prof

    def __call__(self, t: float) -> sim.Effects:
        idx = min(int(t / LOAD_PROFILE_STEP + 1e-9), self._profile.shape[0] - 1)
        eff = sim.Effects(load_scale=self._profile[idx].copy())
        for e in self.events:
            if t < e.time:
                continue
            v = e.variant
            elapsed = t - e.time
            if v in ("load_step", "reactive_disturbance"):
                _add_load(eff, e.target, complex(e.magnitude, e.reactive))
            elif v == "load_ramp":
                frac = min(elapsed / e.duration, 1.0)
                _add_load(eff, e.target, frac * complex(e.magnitude, e.reactive))
            elif v == "voltage_sag":
                if elapsed < e.duration:
                    eff.grid_voltage_scale *= 1.0 - e.depth
            elif v == "frequency_ramp":
                eff.grid_freq_offset += e.magnitude * min(elapsed / e.duration, 1.0)
            elif v == "generator_trip":
                eff.dg_online[e.target - 1] = False
            elif v == "tieline_open":
                eff.line_online[e.target - 1] = False
            elif v == "slg_fault":
                if elapsed < e.duration:
                    eff.fault_admittance[e.target - 1] += self._fault_y[e]
                    if e.target == sim.PCC_BUS:
                        drop = e.depth / 3.0
                        eff.pcc_phase_scale = np.array([1.0 - e.depth, 1.0, 1.0]) / (1.0 - drop)
        return eff


def _add_load(eff: sim.Effects, target: int, s: complex) -> None:
    if target == 0:
        eff.load_delta += s
    else:
        eff.load_delta[target - 1] += s


def network_to_dict(net: sim.NetworkModel) -> dict:
    d = dataclasses.asdict(net)
    d["loads"] = [[s.real, s.imag] for s in net.loads]
    d["topology"] = [list(e) for e in net.topology]
    return d


def network_from_dict(data: dict) -> sim.NetworkModel:
    return sim.NetworkModel(
        dg_units=tuple(sim.DgParams(**d) for d in data["dg_units"]),
        lines=tuple(sim.LineParams(**d) for d in data["lines"]),
        loads=tuple(complex(re, im) for re, im in data["loads"]),
        grid=sim.GridSource(**data["grid"]),
        topology=tuple((a, b) for a, b in data["topology"]),
        v_nom_ll=data["v_nom_ll"],
    )


def stable_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_scenario(spec: ScenarioSpec, net: sim.NetworkModel, config_hash: str | None = None) -> TimeSeriesDataset:
    """Simulate one scenario and return its labelled measurement record.

    Noise and delay scenarios run the unperturbed physics and corrupt the
    recorded channels afterwards.
    """
    schedule = EventSchedule(spec, net)
    try:
        time, frames = sim.simulate(net, spec.duration, dt=spec.dt_sim, dt_out=spec.dt_out, schedule=schedule)
    except DivergenceError as exc:
        raise DivergenceError(exc.time, exc.channel, f"scenario {spec.name!r}: non-finite state") from exc

    spec_d = spec.to_dict()
    net_d = network_to_dict(net)
    meta = {
        "scenario": spec.name,
        "is_ood": "true" if spec.is_ood else "false",
        "v_nom_ll": repr(net.v_nom_ll),
        "dt_out": repr(spec.dt_out),
        "duration": repr(spec.duration),
        "seed": str(spec.seed),
        "config_hash": config_hash or stable_hash({"scenario": spec_d, "network": net_d}),
        "scenario_spec": json.dumps(spec_d, sort_keys=True),
        "network": json.dumps(net_d, sort_keys=True),
    }
    ds = TimeSeriesDataset(time=time, channels=frames, scenario_label=spec.label,
                           scenario_id=spec.name, metadata=meta)
    for e in spec.events:
        if e.variant == "noise_injection":
            # Separate stream from the load profile, which uses the bare seed.
            ds = inject_noise(ds, e.snr_db, spec.channel_mask, seed=[spec.seed, 1])
        elif e.variant == "comm_delay":
            ds = inject_delay(ds, e.delay, spec.channel_mask)
    return ds


def regenerate(ds: TimeSeriesDataset) -> TimeSeriesDataset:
    """Re-run the simulation described by a dataset's metadata."""
    spec = ScenarioSpec.from_dict(json.loads(ds.metadata["scenario_spec"]))
    net = network_from_dict(json.loads(ds.metadata["network"]))
    return run_scenario(spec, net, config_hash=ds.metadata.get("config_hash"))


def split_corpus(datasets: Iterable[TimeSeriesDataset], val_fraction: float = 0.25, seed: int = 42
                 ) -> tuple[list[TimeSeriesDataset], list[TimeSeriesDataset], list[TimeSeriesDataset]]:
    """Partition runs into (train, validation, OOD test).

    OOD runs go to the test partition only; the rest are assigned to train or
    validation as whole runs by a seeded permutation.
    """
    datasets = list(datasets)
    ood = [d for d in datasets if d.is_ood or d.scenario_id in OOD_SCENARIOS]
    rest = sorted((d for d in datasets if not (d.is_ood or d.scenario_id in OOD_SCENARIOS)),
                  key=lambda d: (d.scenario_id, d.metadata.get("seed", "")))
    if not ood:
        raise ConfigurationError("corpus has no OOD runs for the test partition")
    if not rest:
        raise ConfigurationError("corpus has no in-distribution runs")
    n_val = int(round(val_fraction * len(rest)))
    if n_val < 1 or n_val >= len(rest):
        raise ConfigurationError(
            f"validation fraction {val_fraction} leaves an empty partition for {len(rest)} runs")
    order = np.random.default_rng(seed).permutation(len(rest))
    val_idx = set(order[:n_val].tolist())
    train = [d for i, d in enumerate(rest) if i not in val_idx]
    val = [d for i, d in enumerate(rest) if i in val_idx]
    return train, val, ood
