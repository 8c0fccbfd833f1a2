"""Command line entry point: ``mofgcn <command> [options]``.

Every command writes ``manifest.json`` to its output directory before any
result. Options may come from a YAML file (``--config``) holding sections
``synthetic``, ``model``, ``train``, ``ingest``, ``eval`` and ``extract``;
flags given on the command line win over file values.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__, nn
from .extract import align_offset, default_grid, export_curves, export_curves_json, probe, reference_curve
from .graph import AtomTypeVocab, build_graph, read_xyz
from .model import ATTENTION, GraphBatch, ModeError, ModelConfig, MofGCN
from .synthetic import SyntheticSpec, generate, pair_key
from .train import Dataset, TrainConfig, TrainingDiverged, evaluate, fit, loss, read_jsonl, split, write_jsonl

log = logging.getLogger("mofgcn")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOL = 1e-4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping of sections")
    return doc


def section(config: dict, name: str, overrides: dict) -> dict:
    merged = dict(config.get(name) or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def write_manifest(out: Path, args, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "config_path": None if args.config is None else str(args.config),
        "resolved_config": resolved,
        "seed": args.seed,
        "threads": args.threads,
        "out": str(out),
        "tool_version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def build_train_config(cfg: dict, seed) -> TrainConfig:
    if seed is not None:
        cfg["seed"] = seed
    try:
        return TrainConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train config: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_gen_synthetic(args, config: dict) -> int:
    cfg = section(config, "synthetic", {"n_graphs": args.n_graphs, "seed": args.seed,
                                        "normalized": args.normalized})
    try:
        spec = SyntheticSpec.from_dict(cfg)
        spec.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic spec: {exc}") from exc
    out = Path(args.out)
    write_manifest(out, args, {"synthetic": spec.to_dict()})
    dataset = generate(spec)
    write_jsonl(dataset, out / "dataset.jsonl")
    print(f"wrote {len(dataset)} graphs to {out / 'dataset.jsonl'}; "
          f"target mean {dataset.targets.mean():.6g}, std {dataset.targets.std():.6g}")
    return EXIT_OK


def _ingest_file(path: Path, cutoff: float, periodic: bool, vocab: AtomTypeVocab):
    records, problems = [], []
    try:
        frames = read_xyz(path)
    except (OSError, ValueError) as exc:
        return records, [f"{path.name}: {exc}"]
    for k, (structure, info) in enumerate(frames):
        where = f"{path.name}[{k}]" if len(frames) > 1 else path.name
        if "energy" not in info:
            problems.append(f"{where}: missing energy= key in comment line")
            continue
        try:
            g = build_graph(structure, cutoff, vocab, periodic=periodic)
        except (KeyError, ValueError) as exc:
            problems.append(f"{where}: {exc}")
            continue
        records.append((g, info["energy"], where))
    return records, problems


def cmd_ingest(args, config: dict) -> int:
    cfg = section(config, "ingest", {"cutoff": args.cutoff, "periodic": args.periodic or None,
                                     "vocab": args.vocab.split(",") if args.vocab else None,
                                     "units": args.units})
    cfg.setdefault("cutoff", 5.0)
    cfg.setdefault("periodic", False)
    cfg.setdefault("units", "eV")
    if not cfg["cutoff"] > 0:
        raise ConfigError("cutoff must be positive")
    src = Path(args.xyz_dir)
    if not src.is_dir():
        raise ConfigError(f"{src} is not a directory")
    files = sorted(p for p in src.iterdir() if p.suffix in (".xyz", ".extxyz"))
    if "vocab" not in cfg or not cfg["vocab"]:
        species: set[str] = set()
        for p in files:
            try:
                species.update(s for structure, _ in read_xyz(p) for s in structure.species)
            except (OSError, ValueError):
                pass
        cfg["vocab"] = sorted(species)
    vocab = AtomTypeVocab(cfg["vocab"])
    out = Path(args.out)
    write_manifest(out, args, {"ingest": cfg, "xyz_dir": str(src), "files": len(files)})

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(lambda p: _ingest_file(p, cfg["cutoff"], cfg["periodic"], vocab), files))
    graphs, targets, sources, skipped = [], [], [], []
    for records, problems in results:
        for g, y, where in records:
            graphs.append(g)
            targets.append(y)
            sources.append(where)
        skipped.extend(problems)
    (out / "skipped.txt").write_text("".join(s + "\n" for s in skipped))
    for s in skipped:
        log.warning("skipped %s", s)
    if not graphs:
        print(f"error: no parsable structures in {src} ({len(skipped)} skipped)", file=sys.stderr)
        return EXIT_USAGE
    dataset = Dataset(graphs, np.array(targets), vocab, cfg["units"], sources)
    write_jsonl(dataset, out / "dataset.jsonl")
    print(f"ingested {len(graphs)} structures, skipped {len(skipped)}")
    return EXIT_OK


def _read_dataset(path) -> Dataset:
    try:
        return read_jsonl(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load dataset {path}: {exc}") from exc


def _model_config(cfg: dict, vocab) -> ModelConfig:
    cfg = dict(cfg)
    cfg["vocab"] = list(vocab)
    try:
        return ModelConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc


def cmd_train(args, config: dict) -> int:
    dataset = _read_dataset(args.data)
    model_cfg = _model_config(section(config, "model", {"pooling": args.pooling}), dataset.vocab.labels)
    train_cfg = build_train_config(
        section(config, "train", {"epochs": args.epochs, "learning_rate": args.lr,
                                  "batch_size": args.batch_size}),
        args.seed,
    )
    out = Path(args.out)
    write_manifest(out, args, {"model": model_cfg.to_dict(), "train": train_cfg.__dict__,
                               "data": str(args.data)})
    parts = split(dataset, train_cfg)
    model, history = fit(model_cfg, dataset, train_cfg, splits=parts)
    dists = np.concatenate([g.distance for g in parts[0].graphs]) if parts[0].graphs else np.zeros(0)
    r_range = [float(dists.min()), float(dists.max())] if dists.size else None
    model.save(out / "checkpoint.json", train=dict(train_cfg.__dict__, split=list(train_cfg.split)),
               train_r_range=r_range, units=dataset.units)
    history.write_csv(out / "history.csv")
    history.write_timings(out / "timings.csv")
    report = evaluate(model, parts[1])
    print(f"trained {len(history)} epochs, best epoch {history.best_epoch}, "
          f"validation R2 {report.r2:.6f}")
    return EXIT_OK


def _load_model(path):
    try:
        params, meta = nn.load_checkpoint(path)
        return MofGCN.from_state(params, meta), meta
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from exc


def cmd_eval(args, config: dict) -> int:
    model, meta = _load_model(args.checkpoint)
    dataset = _read_dataset(args.data)
    cfg = section(config, "eval", {"split": args.split, "bin_width": args.bin_width})
    cfg.setdefault("split", "test")
    cfg.setdefault("bin_width", 1.0)
    out = Path(args.out)
    write_manifest(out, args, {"eval": cfg, "checkpoint": str(args.checkpoint), "data": str(args.data)})
    if cfg["split"] == "all":
        part = dataset
    else:
        train_cfg = build_train_config(dict(meta.get("train", {})), None)
        names = {"train": 0, "val": 1, "test": 2}
        if cfg["split"] not in names:
            raise ConfigError(f"unknown split {cfg['split']!r}")
        part = split(dataset, train_cfg)[names[cfg["split"]]]
    try:
        report = evaluate(model, part, cfg["bin_width"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report.write_json(out / "report.json")
    report.write_histogram_csv(out / "histogram.csv")
    print(f"{cfg['split']} split: n={report.n} MSE={report.mse:.6g} RMSE={report.rmse:.6g} "
          f"MAE={report.mae:.6g} R2={report.r2:.6f}")
    return EXIT_OK


def cmd_extract(args, config: dict) -> int:
    model, meta = _load_model(args.checkpoint)
    if not model.config.decomposition:
        print("error: extract needs a decomposition checkpoint (sum pooling, scalar convolution output); "
              f"this one uses {model.config.pooling} pooling", file=sys.stderr)
        return EXIT_USAGE
    cfg = section(config, "extract", {"r_min": args.r_min, "r_max": args.r_max, "points": args.points,
                                      "reference": args.reference})
    r_range = meta.get("train_r_range") or [0.01, 1.0]
    cfg.setdefault("r_min", r_range[0])
    cfg.setdefault("r_max", r_range[1])
    cfg.setdefault("points", 512)
    cfg.setdefault("reference", None)
    if not 0 < cfg["r_min"] < cfg["r_max"]:
        raise ConfigError("grid needs 0 < r_min < r_max")
    out = Path(args.out)
    write_manifest(out, args, {"extract": cfg, "checkpoint": str(args.checkpoint)})
    grid = default_grid(cfg["r_min"], cfg["r_max"], int(cfg["points"]))
    spec = None
    if cfg["reference"] == "synthetic":
        spec = SyntheticSpec.from_dict(config.get("synthetic") or {})
    labels = model.vocab.labels
    curves = []
    for a, b in itertools.combinations_with_replacement(labels, 2):
        try:
            curve = probe(model, (a, b), grid)
        except ModeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if spec is not None and pair_key(a, b) in spec.pair_params:
            curve = align_offset(curve, reference_curve(spec, (a, b), grid))
            print(f"{a}-{b}: offset {curve.offset:.6g}, residual RMS {curve.residual_rms:.6g}, "
                  f"peak at r={curve.peak_location():.4g}")
        elif spec is not None:
            continue
        curves.append(curve)
    export_curves(curves, out / "curves.csv")
    export_curves_json(curves, out / "curves.json")
    print(f"wrote {len(curves)} pair curves to {out / 'curves.csv'}")
    return EXIT_OK


def cmd_gradcheck(args, config: dict) -> int:
    if args.checkpoint:
        model, _ = _load_model(args.checkpoint)
    else:
        cfg = section(config, "model", {"pooling": args.pooling})
        vocab = cfg.pop("vocab", None) or list(SyntheticSpec().types)
        model = MofGCN(_model_config(cfg, vocab), seed=args.seed or 0)
    out = Path(args.out)
    write_manifest(out, args, {"model": model.config.to_dict(), "graphs": args.graphs})
    spec = SyntheticSpec(n_graphs=args.graphs, seed=args.seed or 0, types=tuple(model.vocab.labels),
                         pair_params={pair_key(a, b): (0.5, 0.2) for a, b in
                                      itertools.combinations_with_replacement(model.vocab.labels, 2)},
                         n_nodes=3)
    data = generate(spec)
    worst = 0.0
    for g, y in zip(data.graphs, data.targets):
        batch = GraphBatch.collate([g], model.vocab)
        worst = max(worst, nn.gradcheck(lambda p: loss(model.forward(batch), [y]), model.params, eps=1e-5))
    ok = bool(worst < GRADCHECK_TOL)
    (out / "gradcheck.json").write_text(json.dumps({"max_rel_err": worst, "tolerance": GRADCHECK_TOL, "pass": ok}))
    print(f"{'PASS' if ok else 'FAIL'}, max rel err {worst:.3e} {'<' if ok else '>='} {GRADCHECK_TOL:g}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "extract": cmd_extract,
    "gradcheck": cmd_gradcheck,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (ingest only)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mofgcn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write the three-node Gaussian toy dataset")
    p.add_argument("--n-graphs", type=int)
    p.add_argument("--normalized", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("ingest", parents=[common], help="build graphs from a directory of extended-XYZ files")
    p.add_argument("xyz_dir", type=Path)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--vocab", help="comma separated species order")
    p.add_argument("--units")

    p = sub.add_parser("train", parents=[common], help="fit a model to a graph dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--pooling", choices=["sum", ATTENTION])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("eval", parents=[common], help="metrics and error histogram on a split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=["train", "val", "test", "all"])
    p.add_argument("--bin-width", type=float)

    p = sub.add_parser("extract", parents=[common], help="export learned pair curves")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--reference", choices=["synthetic"], help="align against the synthetic generator's bumps")

    p = sub.add_parser("gradcheck", parents=[common], help="compare backprop with central differences")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--pooling", choices=["sum", ATTENTION])
    p.add_argument("--graphs", type=int, default=3)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
