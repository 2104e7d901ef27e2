"""Inverter microgrid simulator and learned surrogates for its measurements."""

from .dataset import TimeSeriesDataset, read_dataset, write_dataset
from .errors import GridSurrogateError
from .scenarios import ScenarioSpec, list_scenarios, run_scenario, split_corpus
from .simulator import CHANNELS, build_network, simulate

__version__ = "0.1.0"

__all__ = ["CHANNELS", "GridSurrogateError", "ScenarioSpec", "TimeSeriesDataset", "build_network",
           "list_scenarios", "read_dataset", "run_scenario", "simulate", "split_corpus", "write_dataset"]
