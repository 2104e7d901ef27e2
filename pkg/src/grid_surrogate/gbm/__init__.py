from .booster import GbmHyperparams, GbmModel, fit, load_model, predict, save_model, schema_hash
from .histogram import BinMapper, build_histograms, fit_bins
from .tree import RegressionTree, Split, find_best_split, grow_tree

__all__ = ["BinMapper", "GbmHyperparams", "GbmModel", "RegressionTree", "Split", "build_histograms",
           "find_best_split", "fit", "fit_bins", "grow_tree", "load_model", "predict", "save_model",
           "schema_hash"]
