"""Command-line entry point.

Subcommands: train, eval, sample, bench, gen-features, sweep-k.
Training options come from a flat "key = value" config file; command-line
flags override config values, which override built-in defaults. Every run
writes a manifest (resolved config, dataset checksums, seed, artifact
paths, component versions) so it can be replayed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import (FeatureTable, generate_features, load_features, load_graph,
                   write_features)
from .evaluation import EvalConfig, bench_inference, evaluate
from .kernels import available_backends, default_backend
from .model import ScoreMask, load_checkpoint, save_checkpoint
from .sampling import dump_tsv, sample_normal, sample_twins
from .training import STRATEGIES, TrainConfig, train

# config keys handled outside TrainConfig
_PATH_KEYS = ("data", "features", "out")
_BOOL_KEYS = {"per_pair", "twins_decoupled", "normalize_entities", "restore_best"}
_INT_KEYS = {"n_batches", "k", "epochs", "seed", "p", "d_e", "d_m",
             "eval_every", "patience"}
_FLOAT_KEYS = {"margin", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps"}
_STR_KEYS = {"strategy", "mask", "backend"}
_ALL_KEYS = _BOOL_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | set(_PATH_KEYS)


class CliError(Exception):
    pass


def parse_config_file(path: Path) -> dict:
    """Flat "key = value" file; # starts a comment; strings may be quoted."""
    values: dict = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, raw.strip("'\""), where=f"{path}:{lineno}")
    return values


def _convert(key: str, raw: str, where: str = "flag"):
    try:
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true/false")
            return low == "true"
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError as exc:
        raise CliError(f"{where}: bad value for {key!r}: {raw!r} ({exc})") from exc
    return raw


def resolve_train_config(args) -> tuple[TrainConfig, dict]:
    """Defaults < config file < command-line flags."""
    values: dict = {}
    if args.config:
        values.update(parse_config_file(Path(args.config)))
    for key in sorted(_ALL_KEYS):
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            values[key] = _convert(key, str(flag)) if key not in _PATH_KEYS else flag
    paths = {k: values.pop(k, None) for k in _PATH_KEYS}
    if "mask" in values:
        values["mask"] = ScoreMask.from_names(values["mask"])
    try:
        cfg = TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid training config: {exc}") from exc
    if not paths["data"]:
        raise CliError("no dataset directory given (config key 'data' or --data)")
    return cfg, paths


def _file_fingerprint(path: Path) -> dict:
    data = path.read_bytes()
    return {"size": len(data), "sha256": hashlib.sha256(data).hexdigest()}


def dataset_fingerprints(data_dir: Path, features: Path | None) -> dict:
    out = {}
    for name in ("entities.dict", "relations.dict", "train.txt", "valid.txt",
                 "test.txt"):
        p = data_dir / name
        if p.is_file():
            out[name] = _file_fingerprint(p)
    if features and Path(features).is_file():
        out[str(features)] = _file_fingerprint(Path(features))
    return out


def write_manifest(out_dir: Path, command: str, cfg_dict: dict, paths: dict,
                   artifacts: dict, seed) -> Path:
    manifest = {
        "command": command,
        "config": cfg_dict,
        "paths": {k: (str(v) if v else None) for k, v in paths.items()},
        "dataset_fingerprints": dataset_fingerprints(
            Path(paths["data"]), paths.get("features")),
        "seed": seed,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "versions": {
            "mmkge": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "backend": default_backend(),
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _config_dict(cfg: TrainConfig) -> dict:
    out = {}
    for f in dc_fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = ",".join(v.names()) if isinstance(v, ScoreMask) else v
    return out


def _resolve_out(arg_out) -> Path:
    out = Path(arg_out) if arg_out else Path("run") / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(data_dir, features_path, d_m: int, seed: int):
    graph = load_graph(data_dir)
    if features_path:
        features = load_features(features_path, graph)
    else:
        features = generate_features(graph.entity_count, d_m, "xavier", seed)
    return graph, features


def cmd_train(args) -> int:
    cfg, paths = resolve_train_config(args)
    out_dir = _resolve_out(paths.get("out"))
    graph, features = _load_inputs(paths["data"], paths.get("features"),
                                   cfg.d_m, cfg.seed)
    if features.dim != cfg.d_m:
        raise CliError(f"feature dim {features.dim} does not match d_m {cfg.d_m}")

    log_path = out_dir / "train.csv"
    with log_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "active_positives", "valid_mrr"])

        def log(rec):
            writer.writerow([rec.epoch, f"{rec.loss:.6f}", rec.active_positives,
                             "" if math.isnan(rec.valid_mrr)
                             else f"{rec.valid_mrr:.6f}"])

        params, _ = train(graph, features, cfg, log_fn=log)

    ckpt_path = out_dir / "checkpoint.mmkc"
    save_checkpoint(ckpt_path, params)
    write_manifest(out_dir, "train", _config_dict(cfg), paths,
                   {"checkpoint": ckpt_path, "train_log": log_path},
                   cfg.seed)
    print(f"checkpoint written to {ckpt_path}")
    return 0


def _eval_config(args) -> EvalConfig:
    return EvalConfig(
        ks=tuple(int(k) for k in args.ks.split(",")),
        filter_splits=tuple(s for s in args.filter_splits.split(",") if s),
        mask=ScoreMask.from_names(args.mask),
        p=args.p,
        backend=args.backend,
    )


def _print_metric_table(report) -> None:
    ks = sorted(report.hits, reverse=True)
    print("MRR  " + "  ".join(f"Hit@{k}" for k in ks))
    print(f"{report.mrr:.4f}  " + "  ".join(f"{report.hits[k]:.4f}" for k in ks))


def cmd_eval(args) -> int:
    graph = load_graph(args.data)
    params = load_checkpoint(args.checkpoint)
    if params.entity_count != graph.entity_count:
        raise CliError(f"checkpoint has {params.entity_count} entities, "
                       f"dataset has {graph.entity_count}")
    if params.relation_count != graph.relation_count:
        raise CliError(f"checkpoint has {params.relation_count} relations, "
                       f"dataset has {graph.relation_count}")
    if args.features:
        features = load_features(args.features, graph)
    else:
        features = generate_features(graph.entity_count, params.d_m, "xavier",
                                     args.seed)
    if features.dim != params.d_m:
        raise CliError(f"feature dim {features.dim} does not match "
                       f"checkpoint d_m {params.d_m}")
    cfg = _eval_config(args)
    report = evaluate(params, features, graph, cfg, split=args.split)
    _print_metric_table(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                       encoding="utf-8")
        print(f"report written to {out}")
    return 0


def cmd_sample(args) -> int:
    graph = load_graph(args.data)
    batch = graph.split(args.split)[:args.n]
    if args.strategy == "twins":
        entity, modal = sample_twins(graph, batch, args.k, args.seed)
        text = dump_tsv(entity) + dump_tsv(modal)
    else:
        text = dump_tsv(sample_normal(graph, batch, args.k, args.seed))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    graph = load_graph(args.data)
    params = load_checkpoint(args.checkpoint)
    if args.features:
        features = load_features(args.features, graph)
    else:
        features = generate_features(graph.entity_count, params.d_m, "xavier",
                                     args.seed)
    cfg = _eval_config(args)
    results = {}
    stats = bench_inference(params, features, graph, cfg,
                            repeats=args.repeats, limit=args.limit)
    results["cached"] = {k: stats[k] for k in ("median", "min", "max", "seconds")}
    results["mrr"] = stats["report"].mrr
    if args.compare_recompute:
        slow = bench_inference(params, features, graph,
                               EvalConfig(**{**cfg.__dict__,
                                             "cache_projections": False}),
                               repeats=args.repeats, limit=args.limit)
        results["recompute"] = {k: slow[k] for k in ("median", "min", "max")}
    if args.compare_backends:
        for name in available_backends():
            alt = bench_inference(params, features, graph,
                                  EvalConfig(**{**cfg.__dict__, "backend": name}),
                                  repeats=args.repeats, limit=args.limit)
            results[f"backend_{name}"] = {k: alt[k] for k in ("median", "min", "max")}
    print(json.dumps(results, indent=2))
    return 0


def cmd_gen_features(args) -> int:
    graph = load_graph(args.data)
    table = generate_features(graph.entity_count, args.dim, args.mode, args.seed)
    write_features(args.out, table)
    print(f"wrote {graph.entity_count} records of dim {args.dim} to {args.out}")
    return 0


def cmd_sweep_k(args) -> int:
    cfg, paths = resolve_train_config(args)
    out_dir = _resolve_out(paths.get("out"))
    graph, features = _load_inputs(paths["data"], paths.get("features"),
                                   cfg.d_m, cfg.seed)
    ks = [int(k) for k in args.k_list.split(",")]
    strategies = [s for s in args.strategies.split(",") if s]
    for s in strategies:
        if s not in STRATEGIES:
            raise CliError(f"unknown strategy {s!r}")
    rows = []
    for k in ks:
        for strategy in strategies:
            run_cfg = cfg.with_overrides(k=k, strategy=strategy)
            params, _ = train(graph, features, run_cfg)
            eval_cfg = EvalConfig(filter_splits=("train", "valid"),
                                  mask=cfg.mask, p=cfg.p, backend=cfg.backend)
            mrr = evaluate(params, features, graph, eval_cfg, split="valid").mrr
            rows.append((k, strategy, mrr))
            print(f"k={k} strategy={strategy} valid_mrr={mrr:.4f}")
    csv_path = out_dir / "sweep_k.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "strategy", "valid_mrr"])
        for k, strategy, mrr in rows:
            writer.writerow([k, strategy, f"{mrr:.6f}"])
    write_manifest(out_dir, "sweep-k", _config_dict(cfg), paths,
                   {"sweep_csv": csv_path}, cfg.seed)
    print(f"sweep written to {csv_path}")
    return 0


def _add_train_flags(sp) -> None:
    sp.add_argument("--config", help="flat key = value config file")
    for key in sorted(_ALL_KEYS):
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                        help=f"override config key {key}")


def _add_eval_flags(sp) -> None:
    sp.add_argument("--mask", default="ss,mm,sm,ms,all")
    sp.add_argument("--p", type=int, default=1, choices=(1, 2))
    sp.add_argument("--ks", default="1,3,10")
    sp.add_argument("--filter-splits", default="train,valid,test")
    sp.add_argument("--backend", default=None, choices=available_backends())
    sp.add_argument("--seed", type=int, default=0,
                    help="seed for synthetic features when --features is absent")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmkge",
        description="Multimodal KG embedding: train, evaluate and inspect.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a model from a config file")
    _add_train_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint (filtered ranks)")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--features")
    sp.add_argument("--split", default="test")
    sp.add_argument("--out", help="write a JSON report here")
    _add_eval_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sample", help="dump negative samples as TSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="train")
    sp.add_argument("--n", type=int, default=10, help="positives to sample for")
    sp.add_argument("--k", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--strategy", default="normal", choices=STRATEGIES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("bench", help="time full evaluation passes")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--features")
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--limit", type=int, default=None,
                    help="only the first N test triples")
    sp.add_argument("--compare-recompute", action="store_true",
                    help="also time the projection-recompute path")
    sp.add_argument("--compare-backends", action="store_true",
                    help="also time each kernel backend")
    _add_eval_flags(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gen-features", help="write a synthetic MMKF file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--dim", type=int, default=768)
    sp.add_argument("--mode", default="xavier", choices=("xavier", "zeros"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_features)

    sp = sub.add_parser("sweep-k", help="train per (k, strategy), record valid MRR")
    _add_train_flags(sp)
    sp.add_argument("--k-list", default="1,16")
    sp.add_argument("--strategies", default="normal,twins")
    sp.set_defaults(func=cmd_sweep_k)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
