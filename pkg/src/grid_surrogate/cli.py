"""grid-surrogate command-line entry point.

Exit codes: 0 success, 2 path/environment problem, 3 missing input artifact,
4 validation failure (bad config, stale artifact, schema mismatch).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, cnn, gbm
from . import pipeline as pl
from . import scenarios as sc
from . import simulator as sim
from .config import CONFIG_ENV, RunConfig, load_config
from .dataset import read_dataset, write_dataset
from .errors import ConfigurationError, GridSurrogateError, MissingArtifactError, StaleArtifactError
from .evaluation import HybridModel, MetricsReport, evaluate
from .windows import TARGET_KEYS, Scaler, make_windows

log = logging.getLogger("grid_surrogate")

EXIT_OK, EXIT_PATH, EXIT_MISSING, EXIT_INVALID = 0, 2, 3, 4
ENGINES = ("gbm", "cnn", "hybrid")
FEATURES_FILE = "features.json"


# ---------------------------------------------------------------- helpers

def scenario_specs(cfg: RunConfig, only: str | None = None) -> list[sc.ScenarioSpec]:
    s = cfg.simulation
    specs = []
    for spec in sc.list_scenarios(s.duration, s.dt_out, cfg.seed):
        if spec.name not in s.scenarios:
            continue
        events = tuple(
            dataclasses.replace(e, snr_db=cfg.ood.snr_db) if e.variant == "noise_injection"
            else dataclasses.replace(e, delay=cfg.ood.delay) if e.variant == "comm_delay" else e
            for e in spec.events)
        specs.append(dataclasses.replace(spec, events=events, dt_sim=s.dt_sim, load_variation=s.load_variation,
                                         channel_mask=cfg.ood.channel_mask))
    if only is not None:
        chosen = [sp for sp in specs if sp.name == only or str(sp.label) == only]
        if not chosen:
            raise ConfigurationError(f"scenario {only!r} is not in the configured catalog")
        return chosen
    return specs


def network(cfg: RunConfig) -> sim.NetworkModel:
    return sim.build_network(v_nom_ll=cfg.simulation.v_nom_ll)


def _mkdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def dataset_path(cfg: RunConfig, name: str) -> Path:
    return cfg.paths.data_dir / f"{name}.csv"


def load_datasets(cfg: RunConfig):
    out = []
    for name in cfg.simulation.scenarios:
        path = dataset_path(cfg, name)
        if not path.exists():
            raise MissingArtifactError(f"dataset {path} not found; run `grid-surrogate generate` first")
        ds = read_dataset(path)
        if ds.metadata.get("config_hash") != cfg.data_hash():
            raise StaleArtifactError(f"{path} was generated under a different configuration")
        out.append(ds)
    return out


def window_config(cfg: RunConfig) -> pl.WindowConfig:
    p = cfg.pipeline
    return pl.WindowConfig(p.window, p.stride, p.horizon, tuple(p.inputs))


def load_partitions(cfg: RunConfig) -> pl.Partitions:
    manifest_path = cfg.paths.data_dir / FEATURES_FILE
    if not manifest_path.exists():
        raise MissingArtifactError(f"{manifest_path} not found; run `grid-surrogate featurize` first")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("config_hash") != cfg.feature_hash():
        raise StaleArtifactError(f"{manifest_path} was built under a different configuration")
    parts = pl.build_partitions(load_datasets(cfg), window_config(cfg), cfg.simulation.val_fraction, cfg.seed)
    parts.seq_scaler = Scaler.from_dict(manifest["seq_scaler"])
    parts.target_scaler = Scaler.from_dict(manifest["target_scaler"])
    if parts.runs != manifest["runs"]:
        raise StaleArtifactError("dataset split differs from the feature manifest")
    return parts


def model_path(cfg: RunConfig, engine: str, target: str | None = None) -> Path:
    if engine == "hybrid":
        return cfg.paths.model_dir / "hybrid.json"
    ext = "json" if engine == "gbm" else "npz"
    return cfg.paths.model_dir / f"{engine}_{target}.{ext}"


def load_engine(cfg: RunConfig, engine: str, targets) -> dict:
    loader = gbm.load_model if engine == "gbm" else cnn.load_model
    out = {}
    for t in targets:
        path = model_path(cfg, engine, t)
        if not path.exists():
            raise MissingArtifactError(f"{engine} model for {t} not found at {path}; train it first")
        m = loader(path)
        if m.metadata.get("config_hash") != cfg.model_hash(engine):
            raise StaleArtifactError(f"{path} was trained under a different configuration")
        out[t] = m
    return out


def load_hybrid(cfg: RunConfig, targets) -> HybridModel:
    path = model_path(cfg, "hybrid")
    if not path.exists():
        raise MissingArtifactError(f"hybrid blend weights not found at {path}; train the hybrid first")
    d = json.loads(path.read_text())
    if d.get("config_hash") != cfg.model_hash("hybrid"):
        raise StaleArtifactError(f"{path} was fitted under a different configuration")
    h = HybridModel.from_dict(d)
    missing = [t for t in targets if t not in h.alpha]
    if missing:
        raise MissingArtifactError(f"hybrid has no blend weight for {', '.join(missing)}")
    return h


def _targets(arg: str | None) -> list[str]:
    return list(TARGET_KEYS) if arg in (None, "all") else [arg]


def _engines(arg: str | None) -> list[str]:
    return list(ENGINES) if arg in (None, "all") else [arg]


def write_history(cfg: RunConfig, engine: str, target: str, history: dict) -> None:
    rows = max(len(v) for v in history.values())
    keys = sorted(history)
    lines = [",".join(["step"] + keys)]
    for i in range(rows):
        lines.append(",".join([str(i)] + [repr(history[k][i]) if i < len(history[k]) else "" for k in keys]))
    _mkdir(cfg.paths.report_dir)
    (cfg.paths.report_dir / f"history_{engine}_{target}.csv").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- subcommands

def cmd_generate(cfg: RunConfig, args) -> int:
    _mkdir(cfg.paths.data_dir)
    net = network(cfg)
    for spec in scenario_specs(cfg, args.scenario):
        ds = sc.run_scenario(spec, net, config_hash=cfg.data_hash())
        path = dataset_path(cfg, spec.name)
        write_dataset(ds, path)
        log.info("wrote %s (%d frames)", path, len(ds))
    return EXIT_OK


def cmd_featurize(cfg: RunConfig, args) -> int:
    wc = window_config(cfg)
    parts = pl.build_partitions(load_datasets(cfg), wc, cfg.simulation.val_fraction, cfg.seed)
    sets = {"train": parts.train, "val": parts.val, **parts.ood}
    manifest = {
        "config_hash": cfg.feature_hash(),
        "window": wc.window, "stride": wc.stride, "horizon": wc.horizon, "inputs": list(wc.inputs),
        "runs": parts.runs,
        "counts": {k: len(v) for k, v in sets.items()},
        "seq_scaler": parts.seq_scaler.to_dict(),
        "target_scaler": parts.target_scaler.to_dict(),
    }
    _mkdir(cfg.paths.data_dir)
    np.savez(cfg.paths.data_dir / "features.npz",
             **{f"{k}/{f}": getattr(v, f) for k, v in sets.items() for f in ("stats", "targets", "end_index")},
             **{f"{k}/scenario_ids": v.scenario_ids.astype(str) for k, v in sets.items()},
             feature_names=np.array(pl.feature_names(wc)))
    (cfg.paths.data_dir / FEATURES_FILE).write_text(json.dumps(manifest, indent=1))
    log.info("featurized: %s", ", ".join(f"{k}={len(v)}" for k, v in sets.items()))
    if parts.seq_scaler.flagged or parts.target_scaler.flagged:
        log.warning("zero-variance columns were scaled with std=1")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    targets = _targets(args.target)
    engines = _engines(args.model)
    if "hybrid" in engines:
        # check dependencies before spending time on anything else
        for base in ("gbm", "cnn"):
            if base not in engines:
                load_engine(cfg, base, targets)
    parts = load_partitions(cfg)
    wc = window_config(cfg)
    _mkdir(cfg.paths.model_dir)
    trained: dict[str, dict] = {}
    for engine in [e for e in ("gbm", "cnn") if e in engines]:
        trained[engine] = {}
        for t in targets:
            if engine == "gbm":
                m = pl.train_gbm(parts, t, cfg.gbm, wc)
                m.metadata["config_hash"] = cfg.model_hash("gbm")
                gbm.save_model(m, model_path(cfg, "gbm", t))
            else:
                m = pl.train_cnn(parts, t, cfg.cnn_arch, cfg.cnn)
                m.metadata["config_hash"] = cfg.model_hash("cnn")
                cnn.save_model(m, model_path(cfg, "cnn", t))
            write_history(cfg, engine, t, m.history)
            trained[engine][t] = m
            log.info("trained %s for %s", engine, t)
    if "hybrid" in engines:
        g = trained.get("gbm") or load_engine(cfg, "gbm", targets)
        c = trained.get("cnn") or load_engine(cfg, "cnn", targets)
        h = pl.fit_blend(parts, g, c, wc)
        path = model_path(cfg, "hybrid")
        alpha = {}
        if path.exists():
            old = json.loads(path.read_text())
            if old.get("config_hash") == cfg.model_hash("hybrid"):
                alpha.update(old["alpha"])
        alpha.update(h.alpha)
        path.write_text(json.dumps({"format": "hybrid-model", "config_hash": cfg.model_hash("hybrid"),
                                    "alpha": alpha}, indent=1))
        log.info("hybrid blend weights: %s", {k: round(v, 4) for k, v in h.alpha.items()})
    return EXIT_OK


def _predictors(cfg: RunConfig, parts: pl.Partitions, engines, targets, wc):
    g = load_engine(cfg, "gbm", targets) if {"gbm", "hybrid"} & set(engines) else None
    c = load_engine(cfg, "cnn", targets) if {"cnn", "hybrid"} & set(engines) else None
    h = load_hybrid(cfg, targets) if "hybrid" in engines else None
    preds = {}
    if "gbm" in engines:
        preds["gbm"] = lambda ws: pl.predict_gbm(g, ws, wc)
    if "cnn" in engines:
        preds["cnn"] = lambda ws: pl.predict_cnn(c, ws, parts.seq_scaler, parts.target_scaler)
    if "hybrid" in engines:
        preds["hybrid"] = lambda ws: pl.predict_hybrid(
            h, pl.predict_gbm(g, ws, wc), pl.predict_cnn(c, ws, parts.seq_scaler, parts.target_scaler))
    return preds


def write_plot_data(cfg: RunConfig, tag: str, ws, preds: dict, targets, bins: int = 50) -> None:
    out = _mkdir(cfg.paths.report_dir / "plot_data")
    dt = cfg.simulation.dt_out
    models = list(preds)
    for t in targets:
        j = TARGET_KEYS.index(t)
        y = ws.targets[:, j]
        cols = [ws.scenario_ids.astype(str), ws.end_index, ws.end_index * dt, y] + [preds[m][t] for m in models]
        lines = [",".join(["scenario_id", "end_index", "time", "y_true"] + models)]
        for row in zip(*cols):
            lines.append(",".join([row[0], str(int(row[1]))] + [repr(float(v)) for v in row[2:]]))
        (out / f"{tag}_{t}_series.csv").write_text("\n".join(lines) + "\n")
        resid = {m: preds[m][t] - y for m in models}
        span = max(float(np.max(np.abs(r))) for r in resid.values()) or 1.0
        edges = np.linspace(-span, span, bins + 1)
        counts = {m: np.histogram(r, edges)[0] for m, r in resid.items()}
        lines = [",".join(["bin_left", "bin_right"] + models)]
        for i in range(bins):
            lines.append(",".join([repr(float(edges[i])), repr(float(edges[i + 1]))]
                                  + [str(int(counts[m][i])) for m in models]))
        (out / f"{tag}_{t}_residuals.csv").write_text("\n".join(lines) + "\n")


def cmd_eval(cfg: RunConfig, args) -> int:
    targets = _targets(args.target)
    engines = _engines(args.model)
    wc = window_config(cfg)
    parts = load_partitions(cfg)
    preds = _predictors(cfg, parts, engines, targets, wc)
    sets = parts.evaluation_sets(args.partition)
    report = evaluate(preds, sets, targets, config_hash=cfg.model_hash("hybrid"))
    _mkdir(cfg.paths.report_dir)
    report.save(cfg.paths.report_dir / f"metrics_{args.partition}.json")
    (cfg.paths.report_dir / f"metrics_{args.partition}.txt").write_text(report.table() + "\n")
    for tag, ws in sets.items():
        write_plot_data(cfg, tag, ws, {m: fn(ws) for m, fn in preds.items()}, targets)
    print(report.table())
    return EXIT_OK


def run_benchmark(cfg: RunConfig, gbm_models, cnn_models, hybrid: HybridModel, seq_scaler, target_scaler):
    """Time the simulator and each surrogate over the same simulated horizon."""
    spec = scenario_specs(cfg, cfg.bench.scenario)[0]
    net = network(cfg)
    reps, warm = cfg.bench.repetitions, cfg.bench.warmup
    t_sim, sim_samples = bench.time_simulation(spec, net, reps, warm)
    ds = sc.run_scenario(spec, net)
    p = cfg.pipeline
    wc = window_config(cfg)
    ws = make_windows(ds, p.window, p.stride, p.horizon, wc.inputs)

    def run_gbm(w):
        return pl.predict_gbm(gbm_models, w)

    def run_cnn(w):
        return pl.predict_cnn(cnn_models, w, seq_scaler, target_scaler)

    def run_hybrid(w):
        return pl.predict_hybrid(hybrid, run_gbm(w), run_cnn(w))

    def featurized(fn):
        return lambda d: fn(make_windows(d, p.window, p.stride, p.horizon, wc.inputs))

    timings = {"simulator": (t_sim, sim_samples)}
    variants = {}
    for name, fn in (("gbm", run_gbm), ("cnn", run_cnn), ("hybrid", run_hybrid)):
        timings[name] = bench.time_inference(fn, ws, reps, warm)
    for name, fn in (("gbm", run_gbm), ("cnn", run_cnn), ("hybrid", run_hybrid)):
        key = f"{name}+features"
        timings[key] = bench.time_call(lambda: featurized(fn)(ds), reps, warm)
        variants[key] = "end_to_end"
    return bench.make_records(spec.duration, timings, variants=variants), len(ws)


def cmd_bench(cfg: RunConfig, args) -> int:
    targets = list(TARGET_KEYS)
    g = load_engine(cfg, "gbm", targets)
    c = load_engine(cfg, "cnn", targets)
    h = load_hybrid(cfg, targets)
    manifest_path = cfg.paths.data_dir / FEATURES_FILE
    if not manifest_path.exists():
        raise MissingArtifactError(f"{manifest_path} not found; run `grid-surrogate featurize` first")
    manifest = json.loads(manifest_path.read_text())
    records, n_windows = run_benchmark(cfg, g, c, h, Scaler.from_dict(manifest["seq_scaler"]),
                                       Scaler.from_dict(manifest["target_scaler"]))
    table = bench.format_table(records) + f"\nwindows per horizon: {n_windows}"
    _mkdir(cfg.paths.report_dir)
    (cfg.paths.report_dir / "bench.txt").write_text(table + "\n")
    (cfg.paths.report_dir / "bench.json").write_text(bench.records_json(records, cfg.model_hash("hybrid")))
    print(table)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "featurize": cmd_featurize, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grid-surrogate", description="Microgrid simulator and surrogate models.")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV}, else built-in defaults)")
    parser.add_argument("--scenario", help="generate only this scenario (name or catalog index)")
    parser.add_argument("--model", choices=ENGINES + ("all",), default="all")
    parser.add_argument("--target", choices=TARGET_KEYS + ("all",), default="all")
    parser.add_argument("--partition", choices=("val", "ood", "all"), default="all")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](cfg, args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PATH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PATH
    except (GridSurrogateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
