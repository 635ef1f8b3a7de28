"""Command-line interface.

Results go to stdout as JSON (tables to CSV files); every result carries a
run manifest with the resolved configuration, so a run can be repeated
exactly. Errors are a single ``lotus: error: ...`` line on stderr, with
exit status 2 for usage errors and 1 for failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import FAMILIES, generate_synthetic, read_csv, write_csv
from .detectors import DETECTORS, PipelineConfig
from .evaluation import (LOTUS_COLUMN, ScoreTable, average_rank, loo_evaluate,
                         rope_test)
from .meta_store import add_entry, load_store
from .meta_trainer import SearchBudget, search
from .ot import SolverConfig, gw_lowrank
from .selector import lotus_select
from .transform import TransformConfig, phi

logger = logging.getLogger("lotus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _manifest(command, args, inputs, **configs):
    out = {"command": command, "tool_version": __version__,
           "seed": getattr(args, "seed", None), "threads": args.threads,
           "inputs": {k: str(v) for k, v in inputs.items()}, "configs": {}}
    for name, cfg in configs.items():
        out["configs"][name] = asdict(cfg)
    return out


def _emit(payload):
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _tcfg(args):
    return TransformConfig(max_rows=args.max_rows, seed=args.seed)


def _scfg(args):
    return SolverConfig(rank=args.rank)


# --- commands --------------------------------------------------------------

def cmd_meta_train(args):
    ds = read_csv(args.data, label_col=args.label_col)
    if ds.labels is None:
        raise ValueError(f"{args.data}: no label column {args.label_col!r}")
    budget = SearchBudget(args.max_evals, args.wall_clock_cap, args.seed)
    result = search(ds.features, ds.labels, budget, threads=args.threads)
    tcfg = TransformConfig(max_rows=args.max_rows, seed=args.transform_seed)
    entry = add_entry(args.store, ds, result.best, result.best_auc, args.id,
                      tcfg.fingerprint())
    manifest = _manifest("meta-train", args, {"data": args.data, "store": args.store},
                         budget=budget, transform=tcfg)
    manifest_dir = Path(args.store) / "manifests"
    manifest_dir.mkdir(exist_ok=True)
    _write_json(manifest_dir / f"{entry.id}.json", manifest)
    _emit({"id": entry.id, "result": result.to_dict(), "manifest": manifest})


def cmd_distance(args):
    tcfg, scfg = _tcfg(args), _scfg(args)
    xa = phi(read_csv(args.a), tcfg)
    xb = phi(read_csv(args.b), tcfg)
    res = gw_lowrank(xa, xb, scfg)
    _emit({"distance": res.cost, "iterations": res.iterations,
           "converged": res.converged, "rank": scfg.rank,
           "g": res.coupling.g.tolist(), "n_a": xa.size, "n_b": xb.size,
           "manifest": _manifest("distance", args, {"a": args.a, "b": args.b},
                                 transform=tcfg, solver=scfg)})


def cmd_select(args):
    tcfg, scfg = _tcfg(args), _scfg(args)
    report = lotus_select(read_csv(args.data), load_store(args.store), tcfg, scfg,
                          exclude=args.exclude, threads=args.threads)
    payload = report.to_dict()
    payload["manifest"] = _manifest("select", args,
                                    {"data": args.data, "store": args.store},
                                    transform=tcfg, solver=scfg)
    _emit(payload)


def cmd_evaluate(args):
    tcfg, scfg = _tcfg(args), _scfg(args)
    if args.baselines == "defaults":
        baselines = [PipelineConfig.default(d) for d in DETECTORS]
    else:
        baselines = [PipelineConfig.default(d.strip()) for d in args.baselines.split(",")]
    table, reports = loo_evaluate(args.store, tcfg, scfg, baselines, threads=args.threads)
    out = Path(args.out)
    table.to_csv(out)
    manifest = _manifest("evaluate", args, {"store": args.store, "out": out},
                         transform=tcfg, solver=scfg)
    manifest["baselines"] = [b.to_dict() for b in baselines]
    _write_json(out.with_name(out.name + ".manifest.json"), manifest)
    _write_json(out.with_name(out.name + ".selections.json"),
                {k: (None if r is None else r.to_dict()) for k, r in reports.items()})
    means = {m: (None if np.isnan(v) else float(v))
             for m, v in zip(table.methods, np.nanmean(table.values, axis=0))}
    _emit({"out": str(out), "datasets": len(table.datasets), "mean_auc": means,
           "manifest": manifest})


def cmd_rope(args):
    table = ScoreTable.from_csv(args.scores)
    sub, dropped = table.complete([args.a, args.b])
    res = rope_test(sub.column(args.a), sub.column(args.b), args.rope, args.samples,
                    args.seed, keep_masses=args.samples_out is not None)
    if args.samples_out is not None:
        pick = np.argmax(res.masses, axis=1)
        with open(args.samples_out, "w") as fh:
            fh.write("left,rope,right,region\n")
            names = ("left", "rope", "right")
            for row, k in zip(res.masses, pick):
                fh.write(f"{row[0]:.6f},{row[1]:.6f},{row[2]:.6f},{names[k]}\n")
    payload = res.to_dict()
    payload.update({"a": args.a, "b": args.b, "dropped": dropped,
                    "n_datasets": len(sub.datasets),
                    "manifest": _manifest("rope", args, {"scores": args.scores})})
    _emit(payload)


def cmd_rank(args):
    table = ScoreTable.from_csv(args.scores)
    sub, dropped = table.complete()
    _emit({"average_rank": average_rank(sub), "dropped": dropped,
           "n_datasets": len(sub.datasets),
           "manifest": _manifest("rank", args, {"scores": args.scores})})


def cmd_synth(args):
    ds = generate_synthetic(args.family, args.n, args.d, args.contamination, args.seed)
    out = Path(args.out)
    write_csv(ds, out)
    manifest = _manifest("synth", args, {"out": out})
    manifest["params"] = {"family": args.family, "n": args.n, "d": args.d,
                          "contamination": args.contamination}
    _write_json(out.with_name(out.name + ".manifest.json"), manifest)
    _emit({"out": str(out), "rows": ds.shape[0], "outliers": int(ds.labels.sum()),
           "manifest": manifest})


# --- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="lotus", description="Zero-shot outlier-detector selection.")
    p.add_argument("--version", action="version", version=f"lotus {__version__}")
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="worker cap for concurrent evaluations / distances")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def transform_flags(sp):
        sp.add_argument("--max-rows", type=_positive_int, default=2000)
        sp.add_argument("--rank", type=_positive_int, default=6)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("meta-train", help="tune a pipeline and store it")
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-col", default="label")
    sp.add_argument("--store", required=True)
    sp.add_argument("--id", required=True)
    sp.add_argument("--max-evals", type=_positive_int, default=60)
    sp.add_argument("--wall-clock-cap", type=_positive_float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-rows", type=_positive_int, default=2000)
    sp.add_argument("--transform-seed", type=int, default=0)
    sp.set_defaults(func=cmd_meta_train)

    sp = sub.add_parser("distance", help="low-rank GW distance of two datasets")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    transform_flags(sp)
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("select", help="recommend a pipeline for a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--store", required=True)
    sp.add_argument("--exclude", action="append", default=[])
    transform_flags(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("evaluate", help="leave-one-out evaluation of a store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--baselines", default="defaults",
                    help="'defaults' or a comma list of detectors at default settings")
    transform_flags(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("rope", help="Bayesian signed-rank test of two columns")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--a", default=LOTUS_COLUMN)
    sp.add_argument("--b", required=True)
    sp.add_argument("--rope", type=_positive_float, default=0.01)
    sp.add_argument("--samples", type=_positive_int, default=50000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples-out", default=None,
                    help="CSV of per-sample region masses, for simplex plots")
    sp.set_defaults(func=cmd_rope)

    sp = sub.add_parser("rank", help="average rank of every method")
    sp.add_argument("--scores", required=True)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("synth", help="write a labeled synthetic dataset")
    sp.add_argument("--family", required=True, choices=FAMILIES)
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--d", type=_positive_int, required=True)
    sp.add_argument("--contamination", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)
    return p


def _one_line(text):
    return " ".join(str(text).split())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"lotus: error: usage: {_one_line(exc)}\n")
        return 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        sys.stderr.write(f"lotus: error: {type(exc).__name__}: {_one_line(exc)}\n")
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
