import math

import numpy as np
import pytest

from grid_surrogate import simulator as sim


@pytest.fixture(scope="session")
def net():
    return sim.build_network()


@pytest.fixture(scope="session")
def equilibrium(net):
    return sim.initial_state(net)


def droop_frequency(net, sol, eff=sim.NOMINAL):
    """Common steady-state frequency of droop-sharing sources.

    Every online source settles at one frequency f, with
    P_k = 2*pi*(f0_k - f) / m_k; summing over sources and equating to the
    load plus losses gives f in closed form.
    """
    on = eff.dg_online
    g = net.grid
    weight = np.sum(1.0 / net.droop_p[on]) + 1.0 / g.droop
    pull = (np.sum(net.nominal_omega[on] / net.droop_p[on])
            + (g.omega + 2.0 * math.pi * eff.grid_freq_offset) / g.droop)
    return (pull - (sol.p_load + sol.p_loss)) / weight / (2.0 * math.pi)


def physical_state(state):
    """State vector with the common rotation of all angles removed."""
    x = state.pack().copy()
    x[20:30] -= x[31]
    x[31] = 0.0
    return x


# acceptance criteria verdicts, echoed in the terminal summary
CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion():
    def record(number: int, checks: list[tuple[str, bool, str]]) -> bool:
        ok = all(passed for _, passed, _ in checks)
        detail = "; ".join(f"{name}: {'ok' if passed else 'FAILED'} ({info})" for name, passed, info in checks)
        CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(CRITERIA[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
