"""Averaged phasor model of the ten-unit droop-controlled microgrid.

Each DG is a voltage source behind its filter/coupling impedance.  Its angle
and magnitude follow P-f / Q-V droop on first-order filtered power
measurements, and the network is re-solved quasi-statically at every
integrator stage.  The grid tie at bus 1 (the PCC) is a voltage source behind
a tie impedance whose frequency responds to exported power with its own droop
coefficient, i.e. a finite-strength upstream grid.

All phasors are per-phase RMS values in a frame rotating at the nominal grid
frequency; powers are three-phase.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .errors import DivergenceError, ParameterError, SolvabilityError, TopologyError

N_DG = 10
N_LINES = 9
PCC_BUS = 1
BASE_POWER = 10e3  # VA, one DG rating; used only for per-unit residuals

CHANNELS: tuple[str, ...] = (
    ("V1", "V2", "V3", "I1", "I2", "I3")
    + tuple(f"P_DG{k}" for k in range(1, N_DG + 1))
    + tuple(f"Q_DG{k}" for k in range(1, N_DG + 1))
    + tuple(f"f_DG{k}" for k in range(1, N_DG + 1))
)
N_CHANNELS = len(CHANNELS)

_P_SLICE = slice(6, 6 + N_DG)
_Q_SLICE = slice(6 + N_DG, 6 + 2 * N_DG)
_F_SLICE = slice(6 + 2 * N_DG, 6 + 3 * N_DG)


def _require_positive(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ParameterError(name, f"must be finite and strictly positive, got {value!r}")


@dataclass(frozen=True)
class DgParams:
    """Electrical and control parameters of one inverter unit (SI units)."""

    filter_resistance: float = 0.1
    filter_inductance: float = 4e-3
    filter_capacitance: float = 200e-6
    coupling_resistance: float = 0.1
    switching_frequency: float = 10e3
    rating: float = 10e3
    droop_p: float = 1e-4  # rad/s per W
    droop_q: float = 1e-4  # V per var
    dc_link: float = 1000.0
    nominal_freq: float = 60.0
    power_filter_cutoff: float = 31.4  # rad/s

    def __post_init__(self):
        _require_positive(self, [f.name for f in fields(self)])

    @property
    def nominal_omega(self) -> float:
        return 2.0 * math.pi * self.nominal_freq


@dataclass(frozen=True)
class LineParams:
    resistance: float
    inductance: float

    def __post_init__(self):
        _require_positive(self, ("resistance", "inductance"))


@dataclass(frozen=True)
class GridSource:
    """Upstream grid equivalent seen from the PCC."""

    v_ll: float = 480.0
    frequency: float = 60.0
    resistance: float = 0.1
    inductance: float = 1.5e-3
    droop: float = 1e-4  # rad/s per W of exported power
    power_filter_cutoff: float = 31.4

    def __post_init__(self):
        _require_positive(self, [f.name for f in fields(self)])

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency


def default_line(index: int) -> LineParams:
    """Line group defaults: even-numbered lines are the long 1.5 mH sections."""
    if index % 2 == 0:
        return LineParams(resistance=0.1, inductance=1.5e-3)
    return LineParams(resistance=0.07, inductance=0.5e-3)


DEFAULT_LOAD = complex(5e3, 1e3)


@dataclass(frozen=True)
class NetworkModel:
    dg_units: tuple[DgParams, ...]
    lines: tuple[LineParams, ...]
    loads: tuple[complex, ...]
    grid: GridSource
    topology: tuple[tuple[int, int], ...]
    v_nom_ll: float = 480.0

    def __post_init__(self):
        if len(self.dg_units) != N_DG:
            raise ParameterError("dg_units", f"expected {N_DG} units, got {len(self.dg_units)}")
        if len(self.lines) != N_LINES:
            raise ParameterError("lines", f"expected {N_LINES} lines, got {len(self.lines)}")
        if len(self.loads) != N_DG:
            raise ParameterError("loads", f"expected {N_DG} bus loads, got {len(self.loads)}")
        if not (math.isfinite(self.v_nom_ll) and self.v_nom_ll > 0):
            raise ParameterError("v_nom_ll", "must be strictly positive")
        check_topology(self.topology)

    @property
    def v_phase(self) -> float:
        return self.v_nom_ll / math.sqrt(3.0)

    @property
    def omega_frame(self) -> float:
        return self.grid.omega

    # Vectorised parameter views used by the integrator.  cached_property
    # writes straight into __dict__, which frozen dataclasses permit.
    @cached_property
    def dg_admittance(self) -> np.ndarray:
        w = self.omega_frame
        z = np.array([complex(d.filter_resistance + d.coupling_resistance, w * d.filter_inductance)
                      for d in self.dg_units])
        return 1.0 / z

    @cached_property
    def line_impedance(self) -> np.ndarray:
        w = self.omega_frame
        return np.array([complex(l.resistance, w * l.inductance) for l in self.lines])

    @cached_property
    def grid_admittance(self) -> complex:
        return 1.0 / complex(self.grid.resistance, self.omega_frame * self.grid.inductance)

    @cached_property
    def droop_p(self) -> np.ndarray:
        return np.array([d.droop_p for d in self.dg_units])

    @cached_property
    def droop_q(self) -> np.ndarray:
        return np.array([d.droop_q for d in self.dg_units])

    @cached_property
    def filter_cutoff(self) -> np.ndarray:
        return np.array([d.power_filter_cutoff for d in self.dg_units])

    @cached_property
    def nominal_omega(self) -> np.ndarray:
        return np.array([d.nominal_omega for d in self.dg_units])

    @cached_property
    def load_array(self) -> np.ndarray:
        return np.array(self.loads, dtype=complex)

    @cached_property
    def line_ends(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([e[0] - 1 for e in self.topology])
        b = np.array([e[1] - 1 for e in self.topology])
        return a, b

    @cached_property
    def _line_ybus_cache(self) -> dict:
        return {}

    def line_ybus(self, line_online: np.ndarray) -> np.ndarray:
        key = tuple(bool(x) for x in line_online)
        cache = self._line_ybus_cache
        if key not in cache:
            y = np.zeros((N_DG, N_DG), dtype=complex)
            a, b = self.line_ends
            yl = np.where(line_online, 1.0 / self.line_impedance, 0.0)
            np.add.at(y, (a, a), yl)
            np.add.at(y, (b, b), yl)
            np.add.at(y, (a, b), -yl)
            np.add.at(y, (b, a), -yl)
            cache[key] = y
        return cache[key]


def chain_topology() -> tuple[tuple[int, int], ...]:
    return tuple((k, k + 1) for k in range(1, N_DG))


def check_topology(edges: Sequence[tuple[int, int]]) -> None:
    """Raise TopologyError unless ``edges`` is 9 valid lines connecting all 10 buses."""
    edges = list(edges)
    if len(edges) != N_LINES:
        raise TopologyError(f"expected {N_LINES} lines, got {len(edges)}")
    adjacency: dict[int, set[int]] = {k: set() for k in range(1, N_DG + 1)}
    for a, b in edges:
        if a not in adjacency or b not in adjacency or a == b:
            raise TopologyError(f"invalid line endpoints ({a}, {b})")
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = {PCC_BUS}
    queue = deque([PCC_BUS])
    while queue:
        for nb in adjacency[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != N_DG:
        missing = sorted(set(adjacency) - seen)
        raise TopologyError(f"buses {missing} are not connected to the PCC")


def build_network(
    dg_overrides: Mapping[int, Mapping[str, float]] | None = None,
    line_overrides: Mapping[int, Mapping[str, float]] | None = None,
    loads: Mapping[int, complex] | Sequence[complex] | None = None,
    grid: GridSource | Mapping[str, float] | None = None,
    topology: str | Sequence[tuple[int, int]] = "chain",
    v_nom_ll: float = 480.0,
) -> NetworkModel:
    """Assemble a validated network with default parameters where not overridden.

    Override mappings are keyed by 1-based DG / line index.
    """
    dg_overrides = dict(dg_overrides or {})
    line_overrides = dict(line_overrides or {})
    for k in dg_overrides:
        if not (isinstance(k, int) and 1 <= k <= N_DG):
            raise ParameterError("dg_overrides", f"DG index {k!r} outside 1..{N_DG}")
    for k in line_overrides:
        if not (isinstance(k, int) and 1 <= k <= N_LINES):
            raise ParameterError("line_overrides", f"line index {k!r} outside 1..{N_LINES}")

    dgs = tuple(DgParams(**dg_overrides.get(k, {})) for k in range(1, N_DG + 1))
    lines = tuple(replace(default_line(k), **line_overrides.get(k, {})) for k in range(1, N_LINES + 1))

    if loads is None:
        load_list = [DEFAULT_LOAD] * N_DG
    elif isinstance(loads, Mapping):
        load_list = [DEFAULT_LOAD] * N_DG
        for k, s in loads.items():
            if not (isinstance(k, int) and 1 <= k <= N_DG):
                raise ParameterError("loads", f"bus index {k!r} outside 1..{N_DG}")
            load_list[k - 1] = complex(s)
    else:
        load_list = [complex(s) for s in loads]

    if grid is None:
        grid = GridSource(v_ll=v_nom_ll)
    elif isinstance(grid, Mapping):
        grid = GridSource(**{"v_ll": v_nom_ll, **grid})

    if isinstance(topology, str):
        if topology != "chain":
            raise TopologyError(f"unknown topology {topology!r}")
        edges = chain_topology()
    else:
        edges = tuple((int(a), int(b)) for a, b in topology)

    return NetworkModel(dg_units=dgs, lines=lines, loads=tuple(load_list), grid=grid,
                        topology=edges, v_nom_ll=v_nom_ll)


def droop_setpoints(p_filt, q_filt, params: DgParams, v_nom: float):
    """Return (omega, voltage magnitude command) from filtered P and Q."""
    omega = params.nominal_omega - params.droop_p * p_filt
    v_cmd = v_nom - params.droop_q * q_filt
    return omega, v_cmd


@dataclass
class Effects:
    """Disturbance forcing active over one integration step."""

    load_scale: np.ndarray = field(default_factory=lambda: np.ones(N_DG))
    load_delta: np.ndarray = field(default_factory=lambda: np.zeros(N_DG, dtype=complex))
    fault_admittance: np.ndarray = field(default_factory=lambda: np.zeros(N_DG, dtype=complex))
    grid_voltage_scale: float = 1.0
    grid_freq_offset: float = 0.0  # Hz, applied to the grid set point
    dg_online: np.ndarray = field(default_factory=lambda: np.ones(N_DG, dtype=bool))
    line_online: np.ndarray = field(default_factory=lambda: np.ones(N_LINES, dtype=bool))
    grid_online: bool = True
    pcc_phase_scale: np.ndarray = field(default_factory=lambda: np.ones(3))


NOMINAL = Effects()


@dataclass
class SimState:
    time: float
    p_filt: np.ndarray
    q_filt: np.ndarray
    theta: np.ndarray
    grid_p_filt: float = 0.0
    grid_theta: float = 0.0
    dg_online: np.ndarray = field(default_factory=lambda: np.ones(N_DG, dtype=bool))
    line_online: np.ndarray = field(default_factory=lambda: np.ones(N_LINES, dtype=bool))
    bus_voltage: np.ndarray | None = None

    @classmethod
    def flat(cls, time: float = 0.0) -> "SimState":
        return cls(time=time, p_filt=np.zeros(N_DG), q_filt=np.zeros(N_DG), theta=np.zeros(N_DG))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.p_filt, self.q_filt, self.theta, [self.grid_p_filt, self.grid_theta]])

    def unpacked(self, x: np.ndarray, time: float, effects: Effects) -> "SimState":
        return SimState(time=time, p_filt=x[:N_DG].copy(), q_filt=x[N_DG:2 * N_DG].copy(),
                        theta=x[2 * N_DG:3 * N_DG].copy(), grid_p_filt=float(x[30]),
                        grid_theta=float(x[31]), dg_online=effects.dg_online.copy(),
                        line_online=effects.line_online.copy())


_STATE_NAMES = ([f"P_filt[DG{k}]" for k in range(1, N_DG + 1)]
                + [f"Q_filt[DG{k}]" for k in range(1, N_DG + 1)]
                + [f"theta[DG{k}]" for k in range(1, N_DG + 1)]
                + ["P_filt[grid]", "theta[grid]"])


@dataclass
class NetworkSolution:
    bus_voltage: np.ndarray
    dg_current: np.ndarray
    grid_current: complex
    p_dg: np.ndarray
    q_dg: np.ndarray
    p_grid: float
    q_grid: float
    line_current: np.ndarray
    p_load: float
    p_loss: float
    residual: float  # max nodal current mismatch, per unit


def branch_current(v_from: complex, v_to: complex, impedance: complex) -> complex:
    return (v_from - v_to) / impedance


def _solve(net: NetworkModel, eff: Effects, q_filt, theta, grid_theta) -> NetworkSolution:
    online = eff.dg_online
    if not online.any() and not eff.grid_online:
        raise SolvabilityError("no source online: grid and all DG units are disconnected")
    v_ph = net.v_phase
    y_dg = np.where(online, net.dg_admittance, 0.0)
    emf = (v_ph - net.droop_q * q_filt) * np.exp(1j * theta)
    s_load = net.load_array * eff.load_scale + eff.load_delta
    y_load = np.conj(s_load) / (3.0 * v_ph * v_ph)

    ybus = net.line_ybus(eff.line_online).copy()
    diag = y_load + eff.fault_admittance + y_dg
    ybus[np.diag_indices(N_DG)] += diag
    inj = emf * y_dg
    y_g = net.grid_admittance if eff.grid_online else 0.0
    e_g = v_ph * eff.grid_voltage_scale * np.exp(1j * grid_theta)
    ybus[0, 0] += y_g
    inj = inj.astype(complex)
    inj[0] += e_g * y_g
    try:
        v = np.linalg.solve(ybus, inj)
    except np.linalg.LinAlgError as exc:
        raise SolvabilityError(f"singular network admittance matrix: {exc}") from None

    i_dg = (emf - v) * y_dg
    s_dg = 3.0 * v * np.conj(i_dg)
    i_g = (e_g - v[0]) * y_g
    s_g = 3.0 * v[0] * np.conj(i_g)
    a, b = net.line_ends
    i_line = np.where(eff.line_online, (v[a] - v[b]) / net.line_impedance, 0.0)
    p_loss = 3.0 * float(np.sum(np.abs(i_line) ** 2 * net.line_impedance.real))
    p_load = 3.0 * float(np.sum(np.abs(v) ** 2 * (y_load + eff.fault_admittance).real))
    i_base = BASE_POWER / (3.0 * v_ph)
    residual = float(np.max(np.abs(ybus @ v - inj))) / i_base
    return NetworkSolution(bus_voltage=v, dg_current=i_dg, grid_current=complex(i_g),
                           p_dg=s_dg.real, q_dg=s_dg.imag, p_grid=float(s_g.real),
                           q_grid=float(s_g.imag), line_current=i_line, p_load=p_load,
                           p_loss=p_loss, residual=residual)


def solve_network(state: SimState, net: NetworkModel, effects: Effects | None = None) -> NetworkSolution:
    """Solve bus phasors and DG/grid injections for the given dynamic state."""
    eff = effects if effects is not None else NOMINAL
    return _solve(net, eff, state.q_filt, state.theta, state.grid_theta)


def _system_matrix(net: NetworkModel, eff: Effects) -> np.ndarray:
    """Nodal admittance including loads, faults and source impedances."""
    v_ph = net.v_phase
    s_load = net.load_array * eff.load_scale + eff.load_delta
    ybus = net.line_ybus(eff.line_online).copy()
    ybus[np.diag_indices(N_DG)] += (np.conj(s_load) / (3.0 * v_ph * v_ph) + eff.fault_admittance
                                    + np.where(eff.dg_online, net.dg_admittance, 0.0))
    if eff.grid_online:
        ybus[0, 0] += net.grid_admittance
    return ybus


def _derivative(net: NetworkModel, eff: Effects, ybus: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Lean re-statement of _solve: only the injections the dynamics need.
    p = x[:N_DG]
    q = x[N_DG:2 * N_DG]
    on = eff.dg_online
    y_dg = net.dg_admittance * on
    emf = (net.v_phase - net.droop_q * q) * np.exp(1j * x[2 * N_DG:3 * N_DG])
    inj = emf * y_dg
    e_g = net.v_phase * eff.grid_voltage_scale * np.exp(1j * x[31])
    y_g = net.grid_admittance if eff.grid_online else 0.0
    inj[0] += e_g * y_g
    try:
        v = np.linalg.solve(ybus, inj)
    except np.linalg.LinAlgError as exc:
        raise SolvabilityError(f"singular network admittance matrix: {exc}") from None
    s_dg = 3.0 * v * np.conj((emf - v) * y_dg)
    p_grid = 3.0 * (v[0] * np.conj((e_g - v[0]) * y_g)).real
    wc = net.filter_cutoff
    dx = np.empty_like(x)
    dx[:N_DG] = wc * (s_dg.real - p) * on
    dx[N_DG:2 * N_DG] = wc * (s_dg.imag - q) * on
    dx[2 * N_DG:3 * N_DG] = (net.nominal_omega - net.droop_p * p - net.omega_frame) * on
    grid = net.grid
    dx[30] = grid.power_filter_cutoff * (p_grid - x[30])
    dx[31] = 2.0 * math.pi * eff.grid_freq_offset - grid.droop * x[30]
    return dx


def step(state: SimState, net: NetworkModel, dt: float, effects: Effects | None = None) -> SimState:
    """Advance the dynamic state by one fixed RK4 step.

    Event effects are held constant over the step.  Units that are offline
    have their filtered powers forced to zero and their angle frozen.
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise ParameterError("dt", f"step size must be positive, got {dt!r}")
    eff = effects if effects is not None else NOMINAL
    x = state.pack()
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise DivergenceError(state.time, _STATE_NAMES[bad])
    off = ~eff.dg_online
    x[:N_DG][off] = 0.0
    x[N_DG:2 * N_DG][off] = 0.0

    if not eff.dg_online.any() and not eff.grid_online:
        raise SolvabilityError("no source online: grid and all DG units are disconnected")
    ybus = _system_matrix(net, eff)
    k1 = _derivative(net, eff, ybus, x)
    k2 = _derivative(net, eff, ybus, x + 0.5 * dt * k1)
    k3 = _derivative(net, eff, ybus, x + 0.5 * dt * k2)
    k4 = _derivative(net, eff, ybus, x + dt * k3)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        bad = int(np.flatnonzero(~np.isfinite(x_new))[0])
        raise DivergenceError(state.time + dt, _STATE_NAMES[bad])
    return state.unpacked(x_new, state.time + dt, eff)


def initial_state(net: NetworkModel, effects: Effects | None = None, time: float = 0.0) -> SimState:
    """Steady operating point for the given (constant) forcing.

    All online sources share a common frequency deviation ``s`` relative to the
    rotating frame; droop then fixes each unit's active power, so the unknowns
    are the DG angles (grid angle is the reference), ``s`` and the DG reactive
    powers.
    """
    eff = effects if effects is not None else NOMINAL
    if not eff.grid_online:
        raise SolvabilityError("steady-state initialisation requires the grid tie")
    on = eff.dg_online
    idx = np.flatnonzero(on)
    n = idx.size
    off_freq = net.nominal_omega - net.omega_frame
    grid = net.grid

    def unpack(z):
        theta = np.zeros(N_DG)
        q = np.zeros(N_DG)
        theta[idx] = z[:n]
        s = z[n]
        q[idx] = z[n + 1:] * BASE_POWER
        return theta, s, q

    def residual(z):
        theta, s, q = unpack(z)
        sol = _solve(net, eff, q, theta, 0.0)
        p_target = (off_freq - s) / net.droop_p
        pg_target = (2.0 * math.pi * eff.grid_freq_offset - s) / grid.droop
        return np.concatenate([
            (sol.p_dg[idx] - p_target[idx]) / BASE_POWER,
            [(sol.p_grid - pg_target) / BASE_POWER],
            (sol.q_dg[idx] - q[idx]) / BASE_POWER,
        ])

    res = optimize.root(residual, np.zeros(2 * n + 1), method="hybr", options={"xtol": 1e-14})
    if not res.success and np.max(np.abs(residual(res.x))) > 1e-10:
        raise SolvabilityError(f"steady-state solve failed: {res.message}")
    theta, s, q = unpack(res.x)
    p = np.where(on, (off_freq - s) / net.droop_p, 0.0)
    pg = (2.0 * math.pi * eff.grid_freq_offset - s) / grid.droop
    return SimState(time=time, p_filt=p, q_filt=q, theta=theta, grid_p_filt=float(pg),
                    grid_theta=0.0, dg_online=on.copy(), line_online=eff.line_online.copy())


@dataclass(frozen=True)
class MeasurementFrame:
    time: float
    values: np.ndarray  # length-36 vector in CHANNELS order

    def __getitem__(self, name: str) -> float:
        return float(self.values[CHANNELS.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(CHANNELS, self.values.tolist()))


_PHASE_SHIFT = np.array([0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0])


def measure(state: SimState, net: NetworkModel, effects: Effects | None = None,
            solution: NetworkSolution | None = None) -> MeasurementFrame:
    """Synthesize the 36 measured channels at the state's time instant.

    V1..V3 / I1..I3 are instantaneous phase quantities at the PCC (bus 1);
    the current is the grid-tie current flowing into the microgrid.
    """
    eff = effects if effects is not None else NOMINAL
    sol = solution if solution is not None else solve_network(state, net, eff)
    out = np.empty(N_CHANNELS)
    wt = net.omega_frame * state.time
    v = sol.bus_voltage[PCC_BUS - 1]
    i = sol.grid_current
    out[0:3] = math.sqrt(2.0) * abs(v) * eff.pcc_phase_scale * np.cos(wt + np.angle(v) + _PHASE_SHIFT)
    out[3:6] = math.sqrt(2.0) * abs(i) * np.cos(wt + np.angle(i) + _PHASE_SHIFT)
    on = eff.dg_online & state.dg_online
    p = np.where(on, state.p_filt, 0.0)
    out[_P_SLICE] = p
    out[_Q_SLICE] = np.where(on, state.q_filt, 0.0)
    out[_F_SLICE] = (net.nominal_omega - net.droop_p * p) / (2.0 * math.pi)
    return MeasurementFrame(time=state.time, values=out)


Schedule = Callable[[float], Effects]


def simulate(net: NetworkModel, duration: float, dt: float = 5e-5, dt_out: float = 1e-4,
             schedule: Schedule | None = None, state: SimState | None = None
             ) -> tuple[np.ndarray, np.ndarray]:
    """Integrate for ``duration`` seconds and return (time, channel matrix).

    Frames are recorded at t = k * dt_out, k = 0 .. round(duration/dt_out) - 1.
    Effects are sampled from ``schedule`` at the start of every step.
    """
    if not dt > 0:
        raise ParameterError("dt", "step size must be positive")
    if not duration > 0:
        raise ParameterError("duration", "must be positive")
    ratio = dt_out / dt
    sub = int(round(ratio))
    if sub < 1 or abs(ratio - sub) > 1e-9 * ratio:
        raise ParameterError("dt_out", "output interval must be an integer multiple of dt")
    n_out = int(round(duration / dt_out))
    sched = schedule if schedule is not None else (lambda t: NOMINAL)
    if state is None:
        state = initial_state(net, sched(0.0))
    times = np.arange(n_out) * dt_out
    frames = np.empty((n_out, N_CHANNELS))
    for k in range(n_out):
        t_k = float(times[k])
        state.time = t_k
        eff = sched(t_k)
        frames[k] = measure(state, net, eff).values
        for j in range(sub):
            t = (k * sub + j) * dt
            state = step(state, net, dt, sched(t) if j else eff)
    return times, frames
