"""Command-line entry point: ``survicl <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunConfig
from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    GenerationError,
    ParseError,
    SchemaError,
    ShapeError,
    TrainingAborted,
    UndefinedMetricError,
)

logger = logging.getLogger("survicl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--config", default=d(None), help="run config JSON (prior, model, stages, train, cv)")
    p.add_argument("--threads", type=int, default=d(None), help="BLAS thread limit")
    p.add_argument("--deterministic", action="store_true", default=d(False),
                   help="single-threaded, bit-reproducible execution")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survicl", description="Synthetic survival prior, in-context model and evaluation tools.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    g = sub.add_parser("generate", parents=[common], help="sample datasets from the prior")
    g.add_argument("--n", type=int, required=True, help="number of datasets")
    g.add_argument("--rows", type=int, default=1024)
    g.add_argument("--out", required=True, help="output directory")

    d = sub.add_parser("diagnose", parents=[common], help="C-index histogram and KM bundle of the prior")
    d.add_argument("--n", type=int, default=512)
    d.add_argument("--rows", type=int, default=1024)
    d.add_argument("--out", default="diagnostics")
    d.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("pretrain", parents=[common], help="run the curriculum and write a checkpoint")
    t.add_argument("--out", required=True, help="final checkpoint path")
    t.add_argument("--checkpoint-dir", default=None, help="directory for periodic checkpoints")
    t.add_argument("--resume", default=None, help="training checkpoint to continue from")
    t.add_argument("--init", default=None, help="warm-start weights from this checkpoint")
    t.add_argument("--max-steps", type=int, default=None, help="stop after this many steps")

    pr = sub.add_parser("predict", parents=[common], help="survival curves for query rows")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--context", required=True, help="labelled context CSV")
    pr.add_argument("--query", required=True, help="query CSV (labels, if present, are ignored)")
    pr.add_argument("--schema", default=None, help="schema JSON for raw (non-generated) files")
    pr.add_argument("--out", required=True)

    c = sub.add_parser("cv", parents=[common], help="k-fold cross-validated C-index")
    c.add_argument("--model", choices=["coxph", "sic"], required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--schema", default=None)
    c.add_argument("--checkpoint", default=None)
    c.add_argument("--folds", type=int, default=None)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", default=None, help="report CSV (default: <data>.cv.csv)")

    e = sub.add_parser("evaluate", parents=[common], help="C-index of a prediction file")
    e.add_argument("--pred", required=True, help="CSV written by predict")
    e.add_argument("--labels", required=True, help="dataset CSV holding time/event of the query rows")
    e.add_argument("--schema", default=None)
    e.add_argument("--out", default=None, help="optional JSON result")
    return parser


# ---------------------------------------------------------------- commands

def _load_table(path, schema_path, categories=None):
    from .io import DatasetSchema, ingest_real, read_dataset

    if schema_path:
        return ingest_real(path, DatasetSchema.load(schema_path), categories=categories)
    return read_dataset(path)


def _read_features(path, schema_path, categories=None) -> np.ndarray:
    """Feature matrix of a query file; time/event columns are optional."""
    from .io import DatasetSchema, ingest_real

    if schema_path:
        return ingest_real(path, DatasetSchema.load(schema_path), categories=categories).X
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError("empty query file", row=0)
    header = [h.strip() for h in rows[0]]
    cols = [j for j, h in enumerate(header) if h.startswith("x")]
    if [header[j] for j in cols] != [f"x{k}" for k in range(len(cols))]:
        raise ParseError(f"malformed header {rows[0]!r}", row=0)
    X = np.empty((len(rows) - 1, len(cols)))
    for i, r in enumerate(rows[1:], start=1):
        for k, j in enumerate(cols):
            try:
                X[i - 1, k] = float(r[j])
            except (ValueError, IndexError):
                raise ParseError(f"non-numeric value {r[j] if j < len(r) else ''!r}", row=i, column=header[j]) from None
    return X


def cmd_generate(args, cfg: RunConfig) -> int:
    from .io import write_dataset
    from .prior import derive_seed, generate_dataset

    if args.n < 1 or args.rows < 8:
        raise UsageError("generate: --n must be >= 1 and --rows >= 8")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(args.n - 1)))
    for i in range(args.n):
        ds = generate_dataset(cfg.prior, args.rows, derive_seed(args.seed, i))
        ds.manifest["index"] = i
        write_dataset(ds, out / f"dataset_{i:0{width}d}.csv")
    print(f"wrote {args.n} datasets to {out}")
    return EXIT_OK


def cmd_diagnose(args, cfg: RunConfig) -> int:
    from .diagnostics import diagnose_prior

    report = diagnose_prior(cfg.prior, args.n, args.seed, n_rows=args.rows, workers=args.workers)
    paths = report.write(args.out)
    print(json.dumps(report.summary(), sort_keys=True))
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_pretrain(args, cfg: RunConfig) -> int:
    from .model import pretrain, save_checkpoint
    from .model.optim import AdamW

    ck = pretrain(cfg.stages, cfg.prior, args.seed, model_config=cfg.model, train=cfg.train,
                  checkpoint_dir=args.checkpoint_dir, resume=args.resume, init_from=args.init,
                  max_steps=args.max_steps, deterministic=args.deterministic)
    opt = AdamW.for_model(ck.model)
    opt.load_state_arrays(ck.optimizer, ck.train_state["optimizer_t"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ck.model, out, ck.train_state, opt)
    print(f"wrote checkpoint {out} after {ck.train_state['global_step']} steps")
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    from .io import impute_median
    from .model import load_checkpoint, predict

    model = load_checkpoint(args.checkpoint).model
    ctx = _load_table(args.context, args.schema)
    X_q = _read_features(args.query, args.schema, categories=ctx.manifest.get("categories"))
    X_c, X_q = impute_median(ctx.X, X_q)
    pred = predict(model, replace(ctx, X=X_c), X_q)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lower = pred.bins.edges[:-1]
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["row"] + [repr(float(v)) for v in lower])
        for i, s in enumerate(pred.survival):
            w.writerow([i] + [repr(float(v)) for v in s])
    print(f"wrote {X_q.shape[0]} survival curves ({pred.bins.n_bins} bins) to {out}")
    return EXIT_OK


def read_predictions(path):
    """``(grid, curves)`` from a predict CSV; column headers are bin lower edges."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "row":
        raise ParseError("prediction file must start with a 'row' header", row=0)
    try:
        grid = np.array([float(v) for v in rows[0][1:]])
        curves = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ParseError(f"non-numeric prediction value: {exc}") from None
    return grid, curves.reshape(len(rows) - 1, grid.size)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .stats import c_index_td_curves

    grid, curves = read_predictions(args.pred)
    labels = _load_table(args.labels, args.schema)
    if labels.n != curves.shape[0]:
        raise DomainError(f"{curves.shape[0]} predictions but {labels.n} labelled rows")
    c = c_index_td_curves(curves, grid, labels.time, labels.event)
    result = {"c_index_td": c, "n": labels.n, "n_events": int(labels.event.sum())}
    if args.out:
        Path(args.out).write_text(json.dumps(result, sort_keys=True) + "\n")
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_cv(args, cfg: RunConfig) -> int:
    import dataclasses

    from .cv import run_cv

    data = _load_table(args.data, args.schema)
    plan = cfg.cv if args.folds is None else dataclasses.replace(cfg.cv, n_folds=args.folds)
    plan = dataclasses.replace(plan, seed=args.seed)
    model = None
    if args.model == "sic":
        if not args.checkpoint:
            raise UsageError("cv --model sic requires --checkpoint")
        from .model import load_checkpoint

        model = load_checkpoint(args.checkpoint).model
    report = run_cv(data, args.model, plan, model=model, workers=args.workers)
    out = Path(args.out) if args.out else Path(args.data).with_suffix(".cv.csv")
    report.write(out)
    print(f"{args.model}: mean C-index {report.mean:.4f} (std {report.std:.4f}) over "
          f"{len(report.defined_scores)} folds; report {out}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "diagnose": cmd_diagnose,
    "pretrain": cmd_pretrain,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig.load(args.config)
        threads = 1 if args.deterministic else args.threads
        if threads is not None and threads < 1:
            raise UsageError("--threads must be >= 1")
        limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
        with limits:
            return COMMANDS[args.command](args, cfg)
    except SystemExit as exc:  # --help exits 0, argparse errors exit 2
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"{exc}\n", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SchemaError, CheckpointError, ShapeError, DomainError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingAborted, GenerationError, UndefinedMetricError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
