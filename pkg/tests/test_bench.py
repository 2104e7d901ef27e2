import json

import pytest

from grid_surrogate import bench
from grid_surrogate import scenarios as sc
from grid_surrogate.errors import ParameterError


def test_ratio_examples():
    assert bench.rt_ratio(1.00, 0.89) == pytest.approx(1.1236, abs=1e-4)
    assert bench.speedup(941.16, 5.09) == pytest.approx(184.9, abs=0.05)
    assert bench.speedup(3.2, 3.2) == 1.0


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_non_positive_denominators_raise(bad):
    with pytest.raises(ParameterError):
        bench.speedup(1.0, bad)
    with pytest.raises(ParameterError):
        bench.rt_ratio(1.0, bad)


def test_time_call_discards_warmup():
    calls = []
    median, samples = bench.time_call(lambda: calls.append(1), repetitions=5, warmup=2)
    assert len(calls) == 7 and len(samples) == 5 and median >= 0


def test_time_inference_needs_windows():
    with pytest.raises(ParameterError):
        bench.time_inference(lambda w: w, [])


def test_time_simulation_needs_three_repetitions(net):
    spec = sc.ScenarioSpec("normal", duration=0.005)
    with pytest.raises(ParameterError):
        bench.time_simulation(spec, net, repetitions=2)
    median, samples = bench.time_simulation(spec, net, repetitions=3, warmup=0)
    assert len(samples) == 3 and median > 0


def test_records_and_table():
    timings = {"simulator": (4.0, [4.0, 4.1, 3.9]), "gbm": (0.01, [0.01] * 3)}
    recs = bench.make_records(1.0, timings, variants={"gbm": "pure"})
    assert recs[0].speedup == 1.0 and recs[0].rt_ratio == 0.25
    assert recs[1].speedup == pytest.approx(400.0) and recs[1].rt_ratio == pytest.approx(100.0)
    table = bench.format_table(recs)
    assert table.splitlines()[0].split()[:2] == ["Method", "Sim"]
    assert "1.00" in table and "hardware:" in table
    data = json.loads(bench.records_json(recs, "h"))
    assert data["config_hash"] == "h" and len(data["records"]) == 2
