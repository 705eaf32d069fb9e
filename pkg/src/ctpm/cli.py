"""Command line driver: ``ctpm {synth,train,eval,predict} CONFIG``.

Every command reads one YAML experiment config and writes into the run
directory ``<output.directory>/run-<config digest>`` (``--output``
overrides it).  Files are written atomically and ``manifest.json`` lists
the sha256 of every artifact in the directory; nothing written contains a
timestamp, so reruns are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 data or checkpoint error,
4 numeric failure (training diverged, degenerate weights, undefined curve).
The log level comes from ``-v`` or the ``CTPM_LOG_LEVEL`` environment
variable.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import (
    CheckpointError,
    atomic_write_text,
    export_embeddings,
    load_checkpoint,
    save_checkpoint,
)
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import DataError, TableSchema, apply_normalizer, load_table, write_ground_truth, write_table
from .evaluation import EvaluationError, render_svg
from .experiment import (
    evaluate_models,
    fit_propensity,
    load_dataset,
    prepare_splits,
    score_dataset,
    train_models,
)
from .model import CtpmModel, TrainingError

log = logging.getLogger("ctpm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# artifact helpers


def _atomic_file(path: Path, write) -> Path:
    """Call ``write(tmp_path)`` and rename the result over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir: Path, cfg: ExperimentConfig) -> Path:
    files = sorted(
        p for p in run_dir.rglob("*")
        if p.is_file() and p.name != MANIFEST and not p.name.startswith(".")
    )
    doc = {
        "package_version": __version__,
        "config_digest": cfg.digest(),
        "files": [
            {"path": p.relative_to(run_dir).as_posix(), "bytes": p.stat().st_size, "sha256": _sha256(p)}
            for p in files
        ],
    }
    return atomic_write_text(run_dir / MANIFEST, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_config(run_dir: Path, cfg: ExperimentConfig) -> None:
    atomic_write_text(run_dir / "config.json", json.dumps(cfg.canonical(), indent=2, sort_keys=True) + "\n")


def _run_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.output) if args.output else cfg.run_dir()


def _checkpoint_paths(args, run_dir: Path):
    return [Path(p) for p in args.checkpoint] if args.checkpoint else [run_dir / "checkpoint.json"]


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    if cfg.data.synthetic is None:
        raise ConfigError("synth needs a 'data.synthetic' section")
    run_dir = _run_dir(cfg, args)
    ds, truth = load_dataset(cfg)
    _atomic_file(run_dir / "data.csv", lambda p: write_table(ds, p))
    _atomic_file(run_dir / "truth.csv", lambda p: write_ground_truth(truth, p))
    _write_config(run_dir, cfg)
    write_manifest(run_dir, cfg)
    log.info("wrote %d records to %s", len(ds), run_dir)
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    run_dir = _run_dir(cfg, args)
    splits = prepare_splits(cfg)
    log.info("split sizes: train %d, val %d, test %d", len(splits.train), len(splits.val), len(splits.test))
    fitted = train_models(cfg, splits)
    features = {"subject": splits.train.subject_features, "candidate": splits.train.candidate_features}
    save_checkpoint(run_dir / "checkpoint.json", fitted.models, cfg.objective_spec(), splits.stats,
                    fitted.propensity, features)
    history = {name: [h.to_dict() for h in hs] for name, hs in fitted.histories.items()}
    atomic_write_text(run_dir / "history.json", json.dumps(history, indent=1, sort_keys=True) + "\n")
    _write_config(run_dir, cfg)
    write_manifest(run_dir, cfg)
    for name, hs in fitted.histories.items():
        sel = [h for h in hs if h.selected]
        if sel:
            log.info("%s: selected restart %d (val loss %.6g)", name, sel[0].restart, sel[0].final_val_loss)
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    run_dir = _run_dir(cfg, args)
    ckpts = [load_checkpoint(p) for p in _checkpoint_paths(args, run_dir)]
    ds, truth = load_dataset(cfg)
    splits = prepare_splits(cfg, ds, truth, stats=ckpts[0].normalization)
    models = {}
    for i, ck in enumerate(ckpts):
        for name, m in ck.models.items():
            models[name if name not in models else f"{name}@{i}"] = m
    propensity = ckpts[0].propensity or fit_propensity(cfg, splits.train)
    report = evaluate_models(cfg, models, splits.test, propensity)

    atomic_write_text(run_dir / "report.json", report.to_json())
    atomic_write_text(run_dir / "report.txt", report.to_text())
    for res in report.results:
        for curve in (res.atetp, res.cost):
            _atomic_file(run_dir / "curves" / f"{res.name}.{curve.kind}.tsv", curve.write_tsv)
    if cfg.evaluation.svg:
        for kind in ("atetp", "cost"):
            curves = {r.name: (r.atetp if kind == "atetp" else r.cost) for r in report.results}
            atomic_write_text(run_dir / f"{kind}.svg", render_svg(curves))
    if cfg.evaluation.export_embeddings:
        for name, m in models.items():
            if isinstance(m, CtpmModel):
                _atomic_file(run_dir / f"embeddings.{name}.csv", lambda p, m=m: export_embeddings(m, splits.test, p))
    _write_config(run_dir, cfg)
    write_manifest(run_dir, cfg)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _predict_schema(cfg: ExperimentConfig, ckpt) -> TableSchema:
    if cfg.data.table is not None:
        base = cfg.data.table_source().table_schema()
        return TableSchema(base.subject_features, base.candidate_features, outcomes={},
                           intensity=base.intensity, treatment=None, subject_id=base.subject_id,
                           candidate_id=base.candidate_id, delimiter=base.delimiter)
    if not ckpt.features:
        raise CheckpointError("checkpoint has no feature names; give a table schema in the config")
    return TableSchema(list(ckpt.features["subject"]), list(ckpt.features["candidate"]), outcomes={}, treatment=None)


def cmd_predict(cfg: ExperimentConfig, args) -> int:
    if not args.input:
        raise ConfigError("predict needs --input")
    run_dir = _run_dir(cfg, args)
    paths = _checkpoint_paths(args, run_dir)
    if len(paths) != 1:
        raise ConfigError("predict takes exactly one --checkpoint")
    ckpt = load_checkpoint(paths[0])
    if args.model not in ckpt.models:
        raise CheckpointError(f"checkpoint has no model {args.model!r} (has {sorted(ckpt.models)})")
    model = ckpt[args.model]
    ds = load_table(args.input, _predict_schema(cfg, ckpt))
    if ckpt.normalization is not None:
        ds = apply_normalizer(ckpt.normalization, ds)
    at = cfg.evaluation.score_intensity
    log_s = score_dataset(model, ds, at)
    score = np.exp(log_s)
    opt = model.optimal_intensity(ds.x, ds.y) if isinstance(model, CtpmModel) else None

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", "candidate_id", "score", "log_score", "optimal_intensity"])
    for i in range(len(ds)):
        writer.writerow([ds.subject_ids[i], ds.candidate_ids[i], repr(float(score[i])), repr(float(log_s[i])),
                         "" if opt is None else repr(float(opt[i]))])
    out = run_dir / "predictions.csv"
    atomic_write_text(out, buf.getvalue())
    _write_config(run_dir, cfg)
    write_manifest(run_dir, cfg)
    log.info("wrote %d predictions to %s", len(ds), out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctpm", description="Continuous treatment policy matching experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a planted synthetic dataset and its ground truth",
        "train": "train the matching model and baselines; write checkpoint and history",
        "eval": "score the test split; write report, curves, plots and embeddings",
        "predict": "score an input table; write per-record scores and optimal intensities",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config (YAML)")
        p.add_argument("-o", "--output", help="run directory (default: derived from the config digest)")
        p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
        if name in ("eval", "predict"):
            p.add_argument("-c", "--checkpoint", action="append",
                           help="checkpoint file (default: <run dir>/checkpoint.json); repeatable for eval")
        if name == "predict":
            p.add_argument("-i", "--input", help="match table to score")
            p.add_argument("--model", default="ctpm", help="model name inside the checkpoint (default: ctpm)")
    return parser


def _setup_logging(verbose: int) -> None:
    level = os.environ.get("CTPM_LOG_LEVEL", "WARNING").upper()
    if verbose:
        level = "INFO" if verbose == 1 else "DEBUG"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"ctpm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"ctpm: evaluation error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError) as exc:
        print(f"ctpm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, FloatingPointError) as exc:
        print(f"ctpm: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
