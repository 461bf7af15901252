"""Command-line entry point: ``hyperpred <subcommand> [options]``.

Exit codes: 0 success, 1 usage or invalid parameters, 2 I/O, format or
checkpoint-version problems, 3 numerical failure, 4 threshold failure.
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
import time
from typing import Sequence

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, parse_assignments
from .errors import (
    FormatError,
    HyperpredError,
    NumericalError,
    ParameterError,
    ReferentialError,
    VersionError,
)
from .evaluation import EvalReport, build_eval_sets, evaluate, write_eval_sets
from .generator import generate_batch
from .gradcheck import TOLERANCE, available_checks, run_gradcheck
from .hypergraph import Hypergraph, parse_hypergraph, read_edges, read_features, read_split, split_dataset, write_edges, write_split
from .rng import substream
from .sampler import METHODS, SizeDistribution, sample_negatives
from .synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from .training import train, write_history

logger = logging.getLogger("hyperpred")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3, 4

# grid of the sensitivity sweep: k in 0, 0.1, ..., 1.0 and p in 1..5
DEFAULT_K_GRID = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_P_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)


class UsageError(HyperpredError):
    pass


class ThresholdFailure(HyperpredError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which we reserve for I/O
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def sha256_file(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Run:
    """Collects what a subcommand read and wrote, then emits ``manifest.json``."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = args.out
        self.start = time.perf_counter()
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.config: dict | None = None
        self.extra: dict = {}
        if self.out:
            os.makedirs(self.out, exist_ok=True)

    def read(self, path: str | os.PathLike) -> str:
        path = os.fspath(path)
        self.inputs[path] = sha256_file(path)
        return path

    def path(self, name: str) -> str:
        if not self.out:
            raise UsageError(f"{self.args.command} needs --out to write {name}")
        full = os.path.join(self.out, name)
        self.outputs[name] = full
        return full

    def write_manifest(self) -> None:
        if not self.out:
            return
        manifest = {
            "command": self.args.command,
            "argv": self.args.argv,
            "version": __version__,
            "seed": self.args.seed,
            "workers": self.args.workers,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_seconds": round(time.perf_counter() - self.start, 3),
            **self.extra,
        }
        with open(os.path.join(self.out, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def resolve_config(args: argparse.Namespace, run: Run | None = None) -> TrainConfig:
    """Defaults, then ``--config`` file, then ``--set`` pairs, then ``--seed``."""
    config = TrainConfig()
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        config = TrainConfig.from_file(run.read(args.config) if run else args.config, config)
    if args.set:
        config = TrainConfig.from_mapping(parse_assignments(args.set), config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def _seed(args: argparse.Namespace) -> int:
    return 0 if args.seed is None else args.seed


def _synthetic_spec(value: str, run: Run) -> SyntheticSpec:
    return SyntheticSpec() if value == "default" else SyntheticSpec.from_file(run.read(value))


def _node_features(num_nodes: int, mode: str, seed: int) -> np.ndarray:
    if mode == "identity":
        return np.eye(num_nodes)
    return substream(seed, "features").normal(size=(num_nodes, num_nodes))


def load_data(args: argparse.Namespace, run: Run) -> tuple[Hypergraph, str | None]:
    """Hypergraph from ``--synthetic``, ``--data`` or ``--edges``/``--features``.

    Returns the hypergraph and the directory holding a ``split.txt`` if any.
    """
    if args.synthetic:
        spec = _synthetic_spec(args.synthetic, run)
        h, labels = generate_synthetic(spec)
        run.extra["synthetic_spec"] = {**vars(spec), "size_range": list(spec.size_range)}
        if args.out and args.command in ("train", "sweep"):
            paths = write_synthetic(os.path.join(args.out, "data"), h, labels)
            run.outputs.update({f"data/{os.path.basename(p)}": p for p in paths.values()})
        return h, None

    split_dir = None
    if args.data:
        edges = os.path.join(args.data, "edges.txt")
        features = os.path.join(args.data, "features.txt")
        split_dir = args.data
    elif args.edges:
        edges, features = args.edges, args.features
    else:
        raise UsageError("give a dataset with --data DIR, --edges FILE or --synthetic [SPEC]")

    if features and os.path.exists(features):
        return parse_hypergraph(run.read(edges), run.read(features)), split_dir
    if args.feature_mode == "file":
        raise FileNotFoundError(f"feature file not found: {features} (or pass --feature-mode identity|random)")
    raw = read_edges(run.read(edges))
    num_nodes = args.num_nodes or 1 + max(max(e) for e in raw)
    return Hypergraph.from_edges(num_nodes, raw, _node_features(num_nodes, args.feature_mode, _seed(args))), split_dir


def load_split(args: argparse.Namespace, run: Run, h: Hypergraph, seed: int, split_dir: str | None = None):
    path = args.split or (os.path.join(split_dir, "split.txt") if split_dir else None)
    if path and os.path.exists(path):
        split = read_split(run.read(path))
        if max((max(split[p], default=-1) for p in ("train", "valid", "test")), default=-1) >= h.num_edges:
            raise ReferentialError(f"{path}: split references hyperedges beyond the {h.num_edges} loaded")
        return split
    if args.split:
        raise FileNotFoundError(f"split file not found: {args.split}")
    return split_dataset(h, seed)


def _print(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _edges_text(edges) -> str:
    return "".join(",".join(str(v) for v in e) + "\n" for e in edges)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    run = Run(args)
    if not args.out:
        raise UsageError("train needs --out DIR")
    config = resolve_config(args, run)
    run.config = config.to_dict()
    h, split_dir = load_data(args, run)
    split = load_split(args, run, h, config.seed, split_dir)
    write_split(run.path("split.txt"), split)

    valid_sets = build_eval_sets(h, split.valid, config.seed, "valid", args.workers) if split.valid else None

    def progress(row):
        logger.info("epoch %d  L_D %.4f  L_G %.4f  L_reg %.4g  theta %.3f  valid %s", row["epoch"],
                    row["loss_d"], row["loss_g"], row["loss_reg"], row["mean_theta"],
                    "-" if row["valid_avg_auroc"] is None else f"{row['valid_avg_auroc']:.4f}")  # fmt: skip

    result = train(h, split, config, valid_sets=valid_sets, on_epoch=progress)
    save_checkpoint(run.path("checkpoint.npz"), result.checkpoint)
    write_history(run.path("metrics.csv"), result.history)
    run.extra["best_epoch"] = result.checkpoint.epoch
    run.extra["best_valid"] = result.checkpoint.best_valid
    run.write_manifest()
    _print(json.dumps({"best_epoch": result.checkpoint.epoch, "best_valid": result.checkpoint.best_valid},
                      sort_keys=True))  # fmt: skip
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    run = Run(args)
    ckpt = load_checkpoint(run.read(args.checkpoint))
    run.config = ckpt.config.to_dict()
    seed = ckpt.config.seed if args.seed is None else args.seed
    h, split_dir = load_data(args, run)
    split = load_split(args, run, h, ckpt.config.seed, split_dir or os.path.dirname(args.checkpoint) or ".")
    if not split[args.part]:
        raise ParameterError(f"split part {args.part!r} is empty")
    sets = build_eval_sets(h, split[args.part], seed, args.part, args.workers)
    report = evaluate(ckpt, h, split, seed, args.part, sets=sets)
    csv_text = EvalReport.csv_header() + "\n" + report.csv_row() + "\n"
    _print(report.to_json())
    _print(csv_text)
    if args.out:
        with open(run.path("report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        with open(run.path("report.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
        write_eval_sets(os.path.join(args.out, "sets"), args.part, sets)
        run.outputs["sets"] = os.path.join(args.out, "sets")
    run.write_manifest()
    if args.min_auroc is not None and (report.avg_auroc or 0.0) < args.min_auroc:
        raise ThresholdFailure(f"avg AUROC {report.avg_auroc} below --min-auroc {args.min_auroc}")
    return EXIT_OK


def cmd_sample_negatives(args: argparse.Namespace) -> int:
    run = Run(args)
    h, _ = load_data(args, run)
    if args.count < 0:
        raise ParameterError("--count must be >= 0")
    rng = substream(_seed(args), "sampler")
    negatives = sample_negatives(h, args.method, args.count, rng, dedup_positives=args.dedup_positives)
    if args.out:
        write_edges(run.path("negatives.txt"), negatives)
    else:
        sys.stdout.write(_edges_text(negatives))
    run.write_manifest()
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    run = Run(args)
    ckpt = load_checkpoint(run.read(args.checkpoint))
    run.config = ckpt.config.to_dict()
    if args.count < 0:
        raise ParameterError("--count must be >= 0")
    model = ckpt.model()
    sizes = SizeDistribution.from_sizes((len(e) for e in ckpt.train_edges), ckpt.config.min_size)
    seed = _seed(args)
    pick = substream(seed, "sampler").integers(len(ckpt.train_edges), size=args.count)
    guides = [ckpt.train_edges[i] for i in pick]
    negatives, membership = [], np.zeros((0, ckpt.num_nodes))
    if guides:
        negatives, c = generate_batch(guides, model.generator, substream(seed, "noise"), sizes)
        membership = c.data
    if args.out:
        write_edges(run.path("negatives.txt"), negatives)
        write_edges(run.path("guides.txt"), guides)
        with open(run.path("membership.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"node{i}" for i in range(ckpt.num_nodes)])
            writer.writerows([[repr(float(x)) for x in row] for row in membership])
    else:
        sys.stdout.write(_edges_text(negatives))
    run.write_manifest()
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    run = Run(args)
    ckpt = load_checkpoint(run.read(args.checkpoint))
    run.config = ckpt.config.to_dict()
    if args.features:
        h_train = Hypergraph(ckpt.num_nodes, tuple(ckpt.train_edges), read_features(run.read(args.features)))
    else:
        h_train = ckpt.training_hypergraph()
    candidates = read_edges(run.read(args.candidates))
    for c in candidates:
        if min(c) < 0 or max(c) >= ckpt.num_nodes:
            raise ReferentialError(f"candidate {c} references nodes outside [0, {ckpt.num_nodes})")
    scores = ckpt.model().score(h_train, candidates)
    text = "".join(f"{s!r}\n" for s in scores.tolist())
    if args.out:
        with open(run.path("scores.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    run.write_manifest()
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    run = Run(args)
    if not args.out:
        raise UsageError("synth needs --out DIR")
    spec = SyntheticSpec() if args.spec is None else SyntheticSpec.from_file(run.read(args.spec))
    h, labels = generate_synthetic(spec)
    for name, path in write_synthetic(args.out, h, labels).items():
        run.outputs[os.path.basename(path)] = path
    run.extra["synthetic_spec"] = {**vars(spec), "size_range": list(spec.size_range)}
    run.write_manifest()
    _print(f"{h.num_nodes} nodes, {h.num_edges} hyperedges -> {args.out}")
    return EXIT_OK


def _grid(text: str | None, default: tuple[float, ...]) -> list[float]:
    if text is None:
        return list(default)
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None


SWEEP_COLUMNS = ("k", "p", "avg_auroc", "status", "detail")


def sweep_cells(h, split, base: TrainConfig, ks, ps, workers: int = 1, on_cell=None) -> list[dict]:
    """Train and test one model per (k, p); invalid cells are recorded, not raised."""
    valid_sets = build_eval_sets(h, split.valid, base.seed, "valid", workers) if split.valid else None
    test_sets = build_eval_sets(h, split.test, base.seed, "test", workers)
    rows = []
    for k in ks:
        for p in ps:
            row = {"k": k, "p": p, "avg_auroc": None, "status": "ok", "detail": ""}
            try:
                config = base.replace(k=k, p=p)
                result = train(h, split, config, valid_sets=valid_sets)
                row["avg_auroc"] = evaluate(result.checkpoint, h, split, base.seed, "test", sets=test_sets).avg_auroc
            except (ParameterError, NumericalError) as exc:
                row.update(status="failed", detail=str(exc))
            rows.append(row)
            if on_cell is not None:
                on_cell(row)
    return rows


def sweep_summary(rows: Sequence[dict], threshold: float = 0.4) -> dict:
    ok = [r for r in rows if r["status"] == "ok" and r["avg_auroc"] is not None]
    hi = [r["avg_auroc"] for r in ok if r["k"] >= threshold]
    lo = [r["avg_auroc"] for r in ok if r["k"] < threshold]
    return {
        "cells": len(rows),
        "failed": len(rows) - len(ok),
        f"mean_avg_auroc_k_ge_{threshold}": float(np.mean(hi)) if hi else None,
        f"mean_avg_auroc_k_lt_{threshold}": float(np.mean(lo)) if lo else None,
    }


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([repr(r["k"]), repr(r["p"]), "" if r["avg_auroc"] is None else repr(r["avg_auroc"]),
                         r["status"], r["detail"]])  # fmt: skip
    return buf.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    run = Run(args)
    if not args.out:
        raise UsageError("sweep needs --out DIR")
    base = resolve_config(args, run)
    run.config = base.to_dict()
    h, split_dir = load_data(args, run)
    split = load_split(args, run, h, base.seed, split_dir)
    ks, ps = _grid(args.k_grid, DEFAULT_K_GRID), _grid(args.p_grid, DEFAULT_P_GRID)

    def progress(row):
        logger.info("k=%g p=%g -> %s %s", row["k"], row["p"], row["status"], row["avg_auroc"])

    rows = sweep_cells(h, split, base, ks, ps, args.workers, progress)
    with open(run.path("sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(sweep_csv(rows))
    summary = sweep_summary(rows)
    run.extra["summary"] = summary
    run.write_manifest()
    _print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    run = Run(args)
    names = None
    if args.ops:
        names = [n.strip() for item in args.ops for n in item.split(",") if n.strip()]
    try:
        results = run_gradcheck(names, points=args.points, seed=_seed(args))
    except KeyError as exc:
        raise UsageError(f"{exc.args[0]}; known: {', '.join(available_checks())}") from None
    lines = [f"{r.name:<20} max_rel_err={r.max_error:.3e}  {'ok' if r.passed else 'FAIL'}" for r in results]
    _print("\n".join(lines))
    failed = [r.name for r in results if not r.passed]
    if args.out:
        with open(run.path("gradcheck.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        run.extra["results"] = {r.name: r.max_error for r in results}
    run.write_manifest()
    if failed:
        raise ThresholdFailure(f"gradient check above {TOLERANCE:g}: {', '.join(failed)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


def _add_data_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data", metavar="DIR", help="directory with edges.txt, features.txt and optionally split.txt")
    g.add_argument("--edges", metavar="FILE", help="edge file (one comma-separated hyperedge per line)")
    g.add_argument("--features", metavar="FILE", help="feature file (one space-separated row per node)")
    g.add_argument("--synthetic", nargs="?", const="default", metavar="SPEC",
                   help="generate a planted-community benchmark (default spec, or key=value SPEC file)")
    g.add_argument("--feature-mode", choices=("file", "identity", "random"), default="file",
                   help="synthesise node features when no feature file is given")
    g.add_argument("--num-nodes", type=int, help="node count when features are synthesised")
    g.add_argument("--split", metavar="FILE", help="split file (train:/valid:/test: lines)")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value training config")
    common.add_argument("--seed", type=int, help="master seed for every random substream")
    common.add_argument("--out", metavar="DIR", help="output directory (nothing is written outside it)")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel evaluation-set sampling; >1 gives up bitwise reproducibility")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="hyperpred", description="Hyperedge prediction with adversarially generated negatives.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", parents=[common], help="train a model and keep the best validation checkpoint")
    _add_data_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="AUROC/AP against SNS, MNS and CNS negatives")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--part", choices=("test", "valid"), default="test")
    p.add_argument("--min-auroc", type=float, help="exit 4 if the average AUROC is lower")
    _add_data_options(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample-negatives", parents=[common], help="heuristic negatives in edge-file format")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--dedup-positives", action="store_true", help="CNS: reject outputs that are existing hyperedges")
    _add_data_options(p)
    p.set_defaults(func=cmd_sample_negatives)

    p = sub.add_parser("generate", parents=[common], help="negatives from a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", parents=[common], help="score candidate hyperedges, one per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--candidates", required=True, metavar="FILE")
    p.add_argument("--features", metavar="FILE", help="override the node features stored in the checkpoint")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic benchmark")
    p.add_argument("--spec", metavar="FILE", help="key=value synthetic spec (defaults otherwise)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", parents=[common], help="train/test over a (k, p) grid")
    p.add_argument("--k-grid", metavar="LIST", help="comma-separated k values (default 0,0.1,...,1.0)")
    p.add_argument("--p-grid", metavar="LIST", help="comma-separated p values (default 1,...,5)")
    _add_data_options(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--ops", action="append", metavar="NAMES", help="comma-separated checks to run (default all)")
    p.add_argument("--points", type=int, default=10, help="random points per op")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ThresholdFailure):
        return EXIT_THRESHOLD
    if isinstance(exc, (NumericalError, FloatingPointError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (OSError, FormatError, ReferentialError, VersionError)):
        return EXIT_IO
    return EXIT_USAGE


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.argv = argv
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (HyperpredError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
