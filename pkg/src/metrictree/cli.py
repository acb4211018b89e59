"""Command-line interface: build, query, update, tune, and gen.

Results go to --out (or stdout); the run report goes to stderr, as JSON
when --json is set.  Exit codes: 0 success, 1 usage/validation/format
errors, 2 engine answers disagreeing with the exhaustive reference,
3 I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import cost as costmod
from . import data as datamod
from . import io as iomod
from . import metrics
from .metrics import MetricMismatchError
from .oracle import OracleMismatch, answers_match, brute_knn, brute_range
from .runtime import BudgetError, ParallelRuntime
from .search import BatchSearcher
from .tree import ConfigError, TreeConfig, build
from .updates import StreamingIndex, UpdateError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISMATCH = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser():
    top = _Parser(prog="metrictree", description=__doc__)
    top.add_argument("--workers", type=int, default=1, help="worker thread count")
    top.add_argument("--seed", type=int, default=0, help="seed for pivot draws and generators")
    top.add_argument("--memory-units", type=int, default=None, help="search-time row budget")
    top.add_argument("--json", action="store_true", help="emit the report as JSON")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[], help="index a dataset file into a snapshot")
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=datamod.DATASET_FORMATS)
    p.add_argument("--metric", choices=metrics.METRIC_KINDS)
    p.add_argument("--node-capacity", type=int, default=20)
    p.add_argument("--keep-levels", action="store_true", help="retain per-level tables")
    p.add_argument("--out", required=True, help="snapshot output path")

    p = sub.add_parser("query", help="answer R/K workload lines from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--workload", required=True)
    p.add_argument("--out", help="results path (default stdout)")
    p.add_argument("--batch-sizes", default="128", help="comma list; one timing row each")
    p.add_argument("--check", action="store_true", help="verify against the exhaustive reference")
    p.add_argument("--no-prune", action="store_true", help="verify every live entry")

    p = sub.add_parser("update", help="apply I/D (and interleaved R/K) lines")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--updates", required=True)
    p.add_argument("--out", help="results path for interleaved queries (default stdout)")
    p.add_argument("--out-snapshot", help="write the updated snapshot here")
    p.add_argument("--cache-capacity", type=int, default=512)

    p = sub.add_parser("tune", help="recommend a fan-out from the cost model")
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=datamod.DATASET_FORMATS)
    p.add_argument("--metric", choices=metrics.METRIC_KINDS)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--concurrency", type=int, default=4096)
    p.add_argument("--sample-pairs", type=int, default=10000)
    p.add_argument("--candidates", default="10,20,40,80,160,320")

    p = sub.add_parser("gen", help="generate a synthetic dataset (and workload)")
    p.add_argument("--kind", required=True, choices=("uniform", "clustered", "sequences"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--out", required=True, help="dataset output path")
    p.add_argument("--workload", help="also emit a workload file here")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--op", default="range", choices=("range", "knn", "mixed"))
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument(
        "--radius-mode",
        default="absolute",
        choices=("absolute", "relative-diameter", "relative-range"),
    )
    p.add_argument("--k", type=int, default=8)
    return top


def _report(args, payload):
    if args.json:
        print(json.dumps(payload, separators=(", ", ": ")), file=sys.stderr)
        return
    for key, value in payload.items():
        print(f"{key}: {value}", file=sys.stderr)


def _open_out(path):
    if path:
        return open(path, "w", encoding="utf-8"), True
    return sys.stdout, False


# -- subcommands ------------------------------------------------------------


def cmd_build(args):
    dataset = datamod.load_dataset(args.data, args.format, args.metric)
    config = TreeConfig(
        node_capacity=args.node_capacity,
        seed=args.seed,
        store_leaf_only=not args.keep_levels,
    )
    runtime = ParallelRuntime(workers=args.workers)
    started = time.perf_counter()
    tree = build(dataset, config, runtime)
    seconds = time.perf_counter() - started
    iomod.save_snapshot(tree, args.out)
    _report(
        args,
        {
            "command": "build",
            "n": dataset.n,
            "metric": dataset.metric,
            "node_capacity": config.node_capacity,
            "levels": tree.levels,
            "node_count": tree.node_count,
            "build_seconds": round(seconds, 6),
            "snapshot": args.out,
            "sha256": iomod.file_sha256(args.out),
        },
    )
    return EXIT_OK


def cmd_query(args):
    tree = iomod.load_snapshot(args.snapshot)
    ops = iomod.parse_workload(args.workload, tree.dataset.metric)
    for op, _, _ in ops:
        if op in (iomod.OP_INSERT, iomod.OP_DELETE):
            raise ValueError("query accepts only R and K workload lines; use update")
    try:
        batch_sizes = [int(b) for b in args.batch_sizes.split(",") if b]
    except ValueError as exc:
        raise ValueError(f"bad batch size list {args.batch_sizes!r}") from exc
    if not batch_sizes or any(b < 1 for b in batch_sizes):
        raise ValueError("batch sizes must be positive integers")

    runtime = ParallelRuntime(workers=args.workers)
    searcher = BatchSearcher(
        tree,
        runtime=runtime,
        memory_units=args.memory_units,
        pruning=not args.no_prune,
    )
    timings = []
    records = []
    for batch in batch_sizes:
        records = []
        started = time.perf_counter()
        for lo in range(0, len(ops), batch):
            chunk = ops[lo : lo + batch]
            records.extend(_run_query_chunk(searcher, chunk, lo))
        seconds = time.perf_counter() - started
        timings.append(
            {
                "batch_size": batch,
                "queries": len(ops),
                "seconds": round(seconds, 6),
                "qps": round(len(ops) / seconds, 3) if seconds > 0 else None,
            }
        )
    if args.check:
        _check_against_reference(tree, ops, records)
    fh, close = _open_out(args.out)
    try:
        iomod.write_results(records, fh)
    finally:
        if close:
            fh.close()
    _report(
        args,
        {
            "command": "query",
            "snapshot": args.snapshot,
            "queries": len(ops),
            "pruning": not args.no_prune,
            "checked": bool(args.check),
            "total_verified": sum(r["verified_count"] for r in records),
            "total_pruned_nodes": sum(r["pruned_nodes"] for r in records),
            "timings": timings,
        },
    )
    return EXIT_OK


def _run_query_chunk(searcher, chunk, base_index):
    records = []
    range_ops = [(i, v, p) for i, (op, v, p) in enumerate(chunk) if op == iomod.OP_RANGE]
    knn_ops = [(i, v, p) for i, (op, v, p) in enumerate(chunk) if op == iomod.OP_KNN]
    partial = {}
    if range_ops:
        answers, stats = searcher.range_batch(
            [p for _, _, p in range_ops], [v for _, v, _ in range_ops]
        )
        for t, (i, _, _) in enumerate(range_ops):
            partial[i] = ("range", answers[t], int(stats.verified[t]), int(stats.pruned_nodes[t]))
    if knn_ops:
        answers, stats = searcher.knn_batch(
            [p for _, _, p in knn_ops], [v for _, v, _ in knn_ops]
        )
        for t, (i, _, _) in enumerate(knn_ops):
            partial[i] = ("knn", answers[t], int(stats.verified[t]), int(stats.pruned_nodes[t]))
    for i in sorted(partial):
        kind, (ids, d), verified, pruned = partial[i]
        records.append(iomod.result_record(base_index + i, kind, ids, d, verified, pruned))
    return records


def _check_against_reference(tree, ops, records):
    ds = tree.dataset
    excluded = frozenset(int(i) for i in ds.ids[tree.rows[tree.tombstone == 1]])
    for rec, (op, value, payload) in zip(records, ops):
        got = (
            np.array([a["id"] for a in rec["answers"]], dtype=np.int64),
            np.array([a["distance"] for a in rec["answers"]], dtype=np.float64),
        )
        if op == iomod.OP_RANGE:
            want = brute_range(ds, payload, value, excluded)
        else:
            want = brute_knn(ds, payload, int(value), excluded)
        if not answers_match(rec["kind"], got, want):
            raise OracleMismatch(
                f"query {rec['query_index']} ({rec['kind']}) disagrees with the reference"
            )


def cmd_update(args):
    tree = iomod.load_snapshot(args.snapshot)
    ops = iomod.parse_workload(args.updates, tree.dataset.metric)
    runtime = ParallelRuntime(workers=args.workers)
    index = StreamingIndex.from_tree(
        tree,
        runtime=runtime,
        cache_capacity=args.cache_capacity,
        memory_units=args.memory_units,
    )
    records = []
    counts = {"insert": 0, "delete": 0, "range": 0, "knn": 0}
    for i, (op, value, payload) in enumerate(ops):
        if op == iomod.OP_INSERT:
            index.insert(value, payload)
            counts["insert"] += 1
        elif op == iomod.OP_DELETE:
            index.delete(value)
            counts["delete"] += 1
        elif op == iomod.OP_RANGE:
            answers, stats = index.query_range([payload], value)
            ids, d = answers[0]
            records.append(
                iomod.result_record(i, "range", ids, d, int(stats.verified[0]), int(stats.pruned_nodes[0]))
            )
            counts["range"] += 1
        else:
            answers, stats = index.query_knn([payload], int(value))
            ids, d = answers[0]
            records.append(
                iomod.result_record(i, "knn", ids, d, int(stats.verified[0]), int(stats.pruned_nodes[0]))
            )
            counts["knn"] += 1
    if args.out_snapshot:
        if index.pending:
            index.flush_rebuild()
        iomod.save_snapshot(index.tree, args.out_snapshot)
    if records:
        fh, close = _open_out(args.out)
        try:
            iomod.write_results(records, fh)
        finally:
            if close:
                fh.close()
    _report(
        args,
        {
            "command": "update",
            "ops": len(ops),
            **counts,
            "rebuilds": index.rebuild_count,
            "live_objects": index.n_live,
            "out_snapshot": args.out_snapshot,
        },
    )
    return EXIT_OK


def cmd_tune(args):
    dataset = datamod.load_dataset(args.data, args.format, args.metric)
    try:
        candidates = tuple(int(c) for c in args.candidates.split(",") if c)
    except ValueError as exc:
        raise ValueError(f"bad candidate list {args.candidates!r}") from exc
    sigma2 = costmod.estimate_variance(dataset, sample_pairs=args.sample_pairs, seed=args.seed)
    best, costs = costmod.recommend_node_capacity(
        max(dataset.n, 1), args.concurrency, sigma2, args.radius, candidates
    )
    _report(
        args,
        {
            "command": "tune",
            "n": dataset.n,
            "metric": dataset.metric,
            "radius": args.radius,
            "concurrency": args.concurrency,
            "variance": sigma2,
            "costs": {str(k): costs[k] for k in sorted(costs)},
            "recommended_node_capacity": best,
        },
    )
    return EXIT_OK


def cmd_gen(args):
    if args.n < 0:
        raise ValueError("n must be >= 0")
    if args.kind == "sequences":
        payloads = datamod.generate_sequences(args.n, args.seed)
        dataset = datamod.Dataset.from_strings(payloads, metrics.EDIT)
        fmt = datamod.FORMAT_SEQUENCES
    else:
        if args.kind == "uniform":
            mat = datamod.generate_uniform(args.n, args.dim, args.seed)
        else:
            mat = datamod.generate_clustered(args.n, args.dim, args.clusters, args.seed)
        dataset = datamod.Dataset.from_vectors(mat, metrics.L2)
        fmt = datamod.FORMAT_VECTORS
    datamod.save_dataset(dataset, args.out, fmt)
    report = {
        "command": "gen",
        "kind": args.kind,
        "n": dataset.n,
        "dataset": args.out,
    }
    if args.workload:
        radius = datamod.resolve_radius(dataset, args.radius, args.radius_mode, seed=args.seed)
        _write_gen_workload(args, dataset, radius)
        report.update(
            {
                "workload": args.workload,
                "queries": args.queries,
                "radius": radius,
            }
        )
    _report(args, report)
    return EXIT_OK


def _write_gen_workload(args, dataset, radius):
    qseed = args.seed + 1
    if args.kind == "sequences":
        payloads = datamod.generate_sequences(args.queries, qseed)
        fmt_payload = lambda p: p
    else:
        if args.kind == "uniform":
            mat = datamod.generate_uniform(args.queries, args.dim, qseed)
        else:
            mat = datamod.generate_clustered(args.queries, args.dim, args.clusters, qseed)
        payloads = [mat[i] for i in range(args.queries)]
        fmt_payload = lambda p: " ".join(repr(float(x)) for x in p)
    with open(args.workload, "w", encoding="utf-8") as fh:
        for i, p in enumerate(payloads):
            if args.op == "range" or (args.op == "mixed" and i % 2 == 0):
                fh.write(f"R {radius!r} {fmt_payload(p)}\n")
            else:
                fh.write(f"K {args.k} {fmt_payload(p)}\n")


_COMMANDS = {
    "build": cmd_build,
    "query": cmd_query,
    "update": cmd_update,
    "tune": cmd_tune,
    "gen": cmd_gen,
}


def main(argv=None):
    """CLI entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except OracleMismatch as exc:
        print(f"metrictree: reference mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (
        datamod.DatasetFormatError,
        iomod.SnapshotFormatError,
        MetricMismatchError,
        ConfigError,
        BudgetError,
        UpdateError,
        ValueError,
    ) as exc:
        print(f"metrictree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"metrictree: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
