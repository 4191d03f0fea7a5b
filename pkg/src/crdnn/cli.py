"""Command-line entry point: generate, train, grid, eval, infer, regen.

Configuration is a JSON object with flat dotted keys (``"train.batch_size": 128``);
``--set key=value`` overrides single keys. Exit codes: 0 success, 2 configuration
error, 3 numeric divergence, 4 IO or version error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import WINDOW_SIZES, NormStats, PipelineConfig, prepare, prepare_inference, split_dataset
from .errors import ConfigError, FormatVersionError, NumericError
from .experiment import GridConfig, run_experiment_grid
from .fileformats import read_dataset, read_series, write_dataset
from .loss import LossConfig
from .metrics import ConfusionMatrix, metrics_bundle
from .nn import ARCHITECTURES, ModelConfig, build_model, count_parameters
from .regen import FRICTION_LEVELS, RegenScenario, load_scenario, rows_to_csv, sweep
from .serialize import load_model, save_model
from .synth import generate_dataset
from .training import TrainConfig, train

log = logging.getLogger("crdnn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "CRDNN_OUTPUT_DIR"

_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "loss": LossConfig, "pipeline": PipelineConfig}


def default_config() -> dict:
    """Every tunable as a flat dotted key, with library defaults."""
    cfg: dict = {"seed": 0, "run.arch": "2lstm", "run.window_size": 25, "data.cycles": 119, "data.format": "csv"}
    for section, cls in _SECTIONS.items():
        for k, v in asdict(cls()).items():
            cfg[f"{section}.{k}"] = v.tolist() if isinstance(v, np.ndarray) else (list(v) if isinstance(v, tuple) else v)
    return cfg


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = default_config()
    if path:
        with open(path) as f:
            user = json.load(f)
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or key not in cfg:
            raise ConfigError(f"bad override {item!r}")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    return cfg


def section(cfg: dict, name: str):
    cls = _SECTIONS[name]
    names = {f.name for f in fields(cls)}
    kwargs = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith(name + ".") and k.split(".", 1)[1] in names}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def grid_config(cfg: dict) -> GridConfig:
    seed = int(cfg["seed"])
    return GridConfig(
        model=section(cfg, "model"),
        train=replace(section(cfg, "train"), seed=seed),
        loss=section(cfg, "loss"),
        pipeline=replace(section(cfg, "pipeline"), split_seed=seed),
        model_seed=seed,
    )


def desk_overrides() -> dict:
    return {"train.initial_learning_rate": 3e-3, "train.max_epochs": 12, "train.early_stop_patience": 4}


def out_dir(arg: str | None, default: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / default


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    manifest = {"command": command, "code_version": __version__, "config": cfg, **(extra or {})}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_generate(args, cfg) -> int:
    cycles = args.cycles if args.cycles is not None else int(cfg["data.cycles"])
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    fmt = args.format or cfg["data.format"]
    if cycles < 1:
        raise ConfigError("cycle count must be positive")
    series = generate_dataset(seed=seed, total_cycles=cycles)
    d = out_dir(args.out, "dataset")
    write_dataset(d, series, fmt, manifest_extra={"seed": seed, "requested_cycles": cycles})
    print(f"wrote {len(series)} cycles to {d}")
    return EXIT_OK


def _check_window_size(ws: int) -> None:
    if ws not in WINDOW_SIZES:
        raise ConfigError(f"window size must be one of {WINDOW_SIZES}, got {ws}")


def _train_one(series, arch, ws, gcfg: GridConfig, d: Path, cfg: dict, data_dir: Path):
    train_cycles, test_cycles = split_dataset(series, gcfg.pipeline.split_ratio, gcfg.pipeline.split_seed)
    train_set, test_set = prepare(train_cycles, test_cycles, ws, gcfg.pipeline)
    model = build_model(replace(gcfg.model, arch=arch), seed=gcfg.model_seed)
    report = train(model, train_set, test_set, gcfg.train, gcfg.loss)
    d.mkdir(parents=True, exist_ok=True)
    extra = {
        "window_size": ws,
        "pipeline": asdict(gcfg.pipeline),
        "stats": train_set.stats.to_dict(),
        "split": {
            "train": [int(s.meta.get("cycle_id", -1)) for s in train_cycles],
            "test": [int(s.meta.get("cycle_id", -1)) for s in test_cycles],
        },
    }
    save_model(d / "model.crdnn", model, extra)
    (d / "report.jsonl").write_text(report.dumps())
    (d / "costs.csv").write_text(report.cost_curve_csv())
    (d / "metrics.json").write_text(json.dumps(report.metrics, indent=2, sort_keys=True) + "\n")
    write_manifest(
        d,
        "train",
        {**cfg, "run.arch": arch, "run.window_size": ws},
        {"dataset": str(data_dir), "dataset_manifest_sha256": _digest(data_dir / "manifest.json"),
         "n_params": count_parameters(model)},
    )
    return report


def cmd_train(args, cfg) -> int:
    arch = args.arch or cfg["run.arch"]
    if args.desk:
        cfg.update(desk_overrides())
    if args.seed is not None:
        cfg["seed"] = args.seed
    gcfg = grid_config(cfg)
    if arch == "grid":
        return _grid(args, cfg, gcfg)
    if arch not in ARCHITECTURES:
        raise ConfigError(f"arch must be one of {ARCHITECTURES} or 'grid', got {arch!r}")
    ws = args.ws if args.ws is not None else int(cfg["run.window_size"])
    _check_window_size(ws)
    data_dir = Path(args.data)
    series, _ = read_dataset(data_dir)
    d = out_dir(args.out, f"{arch}_ws{ws}")
    report = _train_one(series, arch, ws, gcfg, d, cfg, data_dir)
    m = report.metrics
    print(f"{arch} ws={ws}: stop epoch {report.stop_epoch} ({report.stop_reason}), best {report.best_epoch}, "
          f"test accuracy {m['accuracy']:.4f}, micro-F1 {m['micro_f1']:.4f}")
    print(ConfusionMatrix(np.array(m["confusion"])).format())
    return EXIT_OK


def _grid(args, cfg, gcfg) -> int:
    data_dir = Path(args.data)
    series, _ = read_dataset(data_dir)
    d = out_dir(args.out, "grid")
    result = run_experiment_grid(series, ARCHITECTURES, WINDOW_SIZES, gcfg)
    d.mkdir(parents=True, exist_ok=True)
    for cell in result.cells:
        if cell.error:
            continue
        cd = d / f"{cell.arch}_ws{cell.window_size}"
        cd.mkdir(exist_ok=True)
        (cd / "report.jsonl").write_text(cell.report.dumps())
        (cd / "costs.csv").write_text(cell.report.cost_curve_csv())
    (d / "grid.txt").write_text(result.table() + "\n")
    write_manifest(d, "grid", cfg, {"dataset": str(data_dir)})
    print(result.table())
    return EXIT_OK if all(c.error is None for c in result.cells) else EXIT_DIVERGED


def cmd_grid(args, cfg) -> int:
    args.arch = "grid"
    return cmd_train(args, cfg)


def _model_pipeline(extra: dict):
    return int(extra["window_size"]), NormStats.from_dict(extra["stats"]), PipelineConfig(**extra["pipeline"])


def cmd_eval(args, cfg) -> int:
    model, extra = load_model(args.model)
    series, _ = read_dataset(args.data)
    ws, stats, pcfg = _model_pipeline(extra)
    if args.split != "all":
        wanted = set(extra["split"][args.split])
        series = [s for s in series if s.meta.get("cycle_id") in wanted]
    batch = prepare_inference(series, ws, stats, pcfg)
    pred = np.argmax(model.predict_proba(batch.windows), axis=1)
    bundle = metrics_bundle(pred, batch.labels)
    text = json.dumps(bundle, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    print(ConfusionMatrix(np.array(bundle["confusion"])).format())
    return EXIT_OK


def infer_rows(model, extra, series):
    """Per-window predictions for one recording, in arrival order."""
    ws, stats, pcfg = _model_pipeline(extra)
    batch = prepare_inference([series], ws, stats, pcfg)
    probs = model.predict_proba(batch.windows)
    for i, (end, p) in enumerate(zip(batch.end_frame, probs)):
        yield i, int(end), float(series.t[end]), int(np.argmax(p)), p


def cmd_infer(args, cfg) -> int:
    model, extra = load_model(args.model)
    series = read_series(args.telemetry)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("window,end_frame,t,prediction,p_travel,p_loading,p_unloading\n")
        for i, end, t, cls, p in infer_rows(model, extra, series):
            out.write(f"{i},{end},{t:.2f},{cls},{p[0]:.6f},{p[1]:.6f},{p[2]:.6f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_regen(args, cfg) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else RegenScenario()
    rows = sweep(scenario, args.mu or FRICTION_LEVELS, args.speeds, args.masses)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crdnn", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of flat dotted keys")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic labeled dataset")
    g.add_argument("--out")
    g.add_argument("--cycles", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=("csv", "bin"))
    g.set_defaults(func=cmd_generate)

    for name, func in (("train", cmd_train), ("grid", cmd_grid)):
        t = sub.add_parser(name, help="train one cell" if name == "train" else "train the 3x3 comparison grid")
        t.add_argument("--data", required=True)
        t.add_argument("--out")
        t.add_argument("--seed", type=int)
        t.add_argument("--desk", action="store_true", help="higher learning rate and capped epochs for CPU runs")
        if name == "train":
            t.add_argument("--arch", help=f"one of {', '.join(ARCHITECTURES)} or 'grid'")
            t.add_argument("--ws", type=int, help=f"window size, one of {WINDOW_SIZES}")
        t.set_defaults(func=func)

    e = sub.add_parser("eval", help="metrics of a saved model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("test", "train", "all"), default="test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="per-window classes for one telemetry file")
    i.add_argument("--model", required=True)
    i.add_argument("--telemetry", required=True)
    i.add_argument("--out")
    i.set_defaults(func=cmd_infer)

    r = sub.add_parser("regen", help="regeneration energy sweep")
    r.add_argument("--scenario", help="JSON scenario file")
    r.add_argument("--mu", type=float, nargs="+")
    r.add_argument("--speeds", type=float, nargs="+", help="cruise speeds in m/s")
    r.add_argument("--masses", type=float, nargs="+", help="material masses in kg")
    r.add_argument("--out")
    r.set_defaults(func=cmd_regen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatVersionError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
