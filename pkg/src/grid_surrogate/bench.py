"""Wall-clock timing of the simulator against surrogate inference."""

from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError


def speedup(t_ref: float, t_method: float) -> float:
    if not t_method > 0:
        raise ParameterError("t_method", f"wall time must be positive, got {t_method!r}")
    return t_ref / t_method


def rt_ratio(simulated: float, wall: float) -> float:
    """Simulated seconds per wall-clock second; >= 1 is faster than real time."""
    if not wall > 0:
        raise ParameterError("wall", f"wall time must be positive, got {wall!r}")
    return simulated / wall


def hardware_note() -> str:
    threads = os.environ.get("OMP_NUM_THREADS", "default")
    return (f"{platform.machine()} {platform.processor() or 'cpu'}, {os.cpu_count()} logical cores, "
            f"python {platform.python_version()}, numpy {np.__version__}, BLAS threads {threads}")


@dataclass
class RuntimeRecord:
    method: str
    simulated_time: float
    wall_time: float
    speedup: float
    rt_ratio: float
    repetitions: int
    hardware: str
    variant: str = "pure"
    samples: tuple[float, ...] = ()


def time_call(fn: Callable[[], object], repetitions: int = 5, warmup: int = 1) -> tuple[float, list[float]]:
    """Median wall time of ``fn`` over ``repetitions`` calls after ``warmup`` discarded calls."""
    if repetitions < 1:
        raise ParameterError("repetitions", "must be at least 1")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), samples


def time_simulation(spec, net, repetitions: int = 5, warmup: int = 1) -> tuple[float, list[float]]:
    """Median wall time of a full scenario run (simulation plus recording)."""
    from .scenarios import run_scenario

    if repetitions < 3:
        raise ParameterError("repetitions", f"need at least 3 repetitions, got {repetitions}")
    return time_call(lambda: run_scenario(spec, net), repetitions, warmup)


def time_inference(predict: Callable[[object], object], windows, repetitions: int = 5, warmup: int = 1
                   ) -> tuple[float, list[float]]:
    """Median wall time of predicting every window covering the horizon.

    ``windows`` is whatever ``predict`` consumes: a window set for the pure
    variant, or the raw dataset when featurisation is part of the timed call.
    """
    n = len(windows)
    if n == 0:
        raise ParameterError("windows", "no windows to time")
    return time_call(lambda: predict(windows), repetitions, warmup)


def make_records(simulated_time: float, timings: dict[str, tuple[float, Sequence[float]]],
                 reference: str = "simulator", variants: dict[str, str] | None = None) -> list[RuntimeRecord]:
    hw = hardware_note()
    t_ref = timings[reference][0]
    out = []
    for name, (wall, samples) in timings.items():
        out.append(RuntimeRecord(name, simulated_time, wall, speedup(t_ref, wall), rt_ratio(simulated_time, wall),
                                 len(samples), hw, (variants or {}).get(name, "pure"), tuple(samples)))
    return out


def format_table(records: Sequence[RuntimeRecord]) -> str:
    lines = [f"{'Method':<30} {'Sim (s)':>8} {'Time (s)':>12} {'Speedup':>10} {'RT Ratio':>10}"]
    for r in records:
        label = r.method if r.variant == "pure" else f"{r.method} ({r.variant})"
        lines.append(f"{label:<30} {r.simulated_time:>8.2f} {r.wall_time:>12.6f} {r.speedup:>10.2f} "
                     f"{r.rt_ratio:>10.2f}")
    if records:
        lines.append(f"hardware: {records[0].hardware}")
    return "\n".join(lines)


def records_json(records: Sequence[RuntimeRecord], config_hash: str = "") -> str:
    return json.dumps({"config_hash": config_hash, "records": [asdict(r) for r in records]}, indent=1)
