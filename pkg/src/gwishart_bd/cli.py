"""Command-line interface.

Every subcommand writes its result to ``--out`` (stdout when omitted).  A
file output is paired with ``<out>.manifest.json`` recording the arguments,
resolved seed, library version and wall-clock time; stdout JSON carries the
manifest inline.  Exit status is 0 on success, 2 on usage errors and 1 on
runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bdmcmc import PROVIDER_MODES, PosteriorSummary, RunConfig, edge_posteriors, run, select_graph
from .errors import GWError
from .graph import Graph, PathProfile, generate, path_profile
from .gwishart import (
    error_bound,
    exact_log_norm_decomposable,
    mc_log_norm,
    mc_ratio,
    ratio_approx,
    theorem_gap_mc,
)
from .simharness import EXPERIMENT_KINDS, Dataset, metrics, roc, simulate_dataset
from .special import big_r

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def resolve_seed(seed: int | None) -> int:
    """Use the given seed or draw a fresh 64-bit one from system entropy."""
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def _manifest(args, seed, started: float) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {
        "schema_version": SCHEMA_VERSION,
        "subcommand": args.command,
        "flags": flags,
        "seed": seed,
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    }


def _emit_text(args, text: str, manifest: dict) -> None:
    if args.out:
        Path(args.out).write_text(text)
        Path(str(args.out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict, manifest: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    if not args.out:
        payload["manifest"] = manifest
    _emit_text(args, json.dumps(payload, indent=2) + "\n", manifest)


def _read_graph(path) -> Graph:
    return Graph.from_json(Path(path).read_text())


def _parse_edge(s: str) -> tuple[int, int]:
    try:
        i, j = (int(t) for t in s.replace(" ", "").split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"edge must look like 'i,j', got {s!r}") from exc
    return i, j


def _int_list(s: str) -> list[int]:
    try:
        return [int(t) for t in s.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from exc


def parse_count_config(s: str) -> PathProfile:
    """Digit at 1-based position ``j`` counts paths with ``j`` interior vertices
    (``j + 1`` edges); e.g. ``"41"`` is four length-2 paths plus one with two
    interior vertices."""
    if not s or not s.isdigit():
        raise UsageError(f"config must be a string of digits, got {s!r}")
    counts = [int(c) for c in s]
    long_lengths = tuple(ell for ell, c in enumerate(counts[1:], start=2) for _ in range(c))
    return PathProfile(counts[0], long_lengths, False)


def parse_length_config(s: str) -> PathProfile:
    """One digit per path giving its number of interior vertices, e.g. ``"11122"``."""
    if not s or not s.isdigit() or "0" in s:
        raise UsageError(f"lengths must be digits 1-9, got {s!r}")
    ells = [int(c) for c in s]
    return PathProfile(ells.count(1), tuple(sorted(e for e in ells if e > 1)), False)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_graph(args, started):
    seed = resolve_seed(args.seed)
    g = Graph.cycle(args.p) if args.kind == "cycle" else generate(args.kind, args.p, seed)
    man = _manifest(args, seed, started)
    _emit_json(args, g.to_dict(), man)


def cmd_gen_data(args, started):
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    seed = resolve_seed(args.seed)
    g = _read_graph(args.graph)
    ds = simulate_dataset(g, args.delta, args.n, seed)
    buf = io.StringIO()
    np.savetxt(buf, ds.X, delimiter=",", fmt="%.17g")
    man = _manifest(args, seed, started)
    _emit_text(args, buf.getvalue(), man)
    if args.k_out:
        Path(args.k_out).write_text(json.dumps(
            {"schema_version": SCHEMA_VERSION, "K": ds.gen_K.tolist(), "graph": g.to_dict()}) + "\n")


def cmd_const(args, started):
    g = _read_graph(args.graph)
    if args.exact:
        seed = None
        payload = {"log_value": exact_log_norm_decomposable(g, args.delta), "std_error": 0.0,
                   "n_samples": 0, "method": "exact"}
    else:
        seed = resolve_seed(args.seed)
        est = mc_log_norm(g, args.delta, args.mc, seed, threads=args.threads)
        payload = {"log_value": est.log_value, "std_error": est.std_error,
                   "n_samples": est.n_samples, "method": "mc"}
    _emit_json(args, payload, _manifest(args, seed, started))


def cmd_ratio(args, started):
    g = _read_graph(args.graph)
    i, j = args.edge
    if not g.has_edge(i, j):
        raise UsageError(f"edge {(i, j)} is not in the graph")
    prof = path_profile(g.without_edge(i, j), i, j)
    bound = error_bound(args.delta, prof)
    seed = None
    if args.mc:
        seed = resolve_seed(args.seed)
        est = mc_ratio(g, (i, j), args.delta, args.mc, seed, threads=args.threads)
        value, se, method = est.value, est.value * est.std_error, "mc"
    else:
        value, se, method = ratio_approx(args.delta, prof.d), 0.0, "approx"
    payload = {"value": value, "std_error": se, "method": method, "B": bound, "d": prof.d,
               "long_lengths": list(prof.long_lengths), "truncated": prof.truncated}
    _emit_json(args, payload, _manifest(args, seed, started))


def cmd_bdmcmc(args, started):
    if args.iterations <= args.burn_in or args.burn_in < 0:
        raise UsageError("need --iterations > --burn-in >= 0")
    seed = resolve_seed(args.seed)
    X = Dataset.read_csv(args.data)
    cfg = RunConfig(args.delta, args.iterations, args.burn_in, args.provider, args.mc_samples,
                    seed, False, args.threads)
    trace = run(X, cfg)
    summary = edge_posteriors(trace)
    man = _manifest(args, seed, started)
    if args.trace_out:
        trace.to_jsonl(args.trace_out)
        Path(str(args.trace_out) + ".manifest.json").write_text(json.dumps(man, indent=2) + "\n")
    _emit_json(args, summary.to_dict(), man)


def cmd_evaluate(args, started):
    if not 0 < args.threshold < 1:
        raise UsageError("--threshold must lie in (0, 1)")
    summary = PosteriorSummary.from_dict(json.loads(Path(args.summary).read_text()))
    truth = _read_graph(args.truth)
    est = select_graph(summary, args.threshold)
    m = metrics(truth, est)
    try:
        _, auc = roc(summary, truth)
    except GWError:
        auc = math.nan
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["tp", "tn", "fp", "fn", "sensitivity", "specificity", "mcc", "auc"])
    w.writerow([m.tp, m.tn, m.fp, m.fn, m.sensitivity, m.specificity, m.mcc, auc])
    _emit_text(args, buf.getvalue(), _manifest(args, None, started))


def cmd_table1(args, started):
    if (args.config is None) == (args.lengths is None):
        raise UsageError("give exactly one of --config or --lengths")
    prof = parse_count_config(args.config) if args.config else parse_length_config(args.lengths)
    seed = resolve_seed(args.seed)
    B = error_bound(args.delta, prof)
    gap = theorem_gap_mc(args.delta, prof.d, prof.long_lengths, args.samples, seed)
    payload = {
        "delta": args.delta, "d": prof.d, "long_lengths": list(prof.long_lengths),
        "R_delta_d_minus_1": big_r(args.delta + prof.d - 1),
        "sum_R_delta_ell": math.fsum(big_r(args.delta) ** ell for ell in prof.long_lengths),
        "B": B, "gap": gap.value, "gap_std_error": gap.std_error, "n_samples": gap.n_samples,
    }
    _emit_json(args, payload, _manifest(args, seed, started))


def cmd_bench(args, started):
    seed = resolve_seed(args.seed)
    if args.iterations < 2:
        raise UsageError("--iterations must be >= 2")
    rows = []
    for p in args.p:
        g = Graph.cycle(p)
        X = simulate_dataset(g, args.delta, args.n, [seed, p]).X
        for prov in args.providers:
            cfg = RunConfig(args.delta, args.iterations, args.iterations // 2, prov,
                            args.mc_samples, seed, False, args.threads)
            t0 = time.perf_counter()
            run(X, cfg)
            rows.append((p, prov, (time.perf_counter() - t0) * 1000.0 / args.iterations))
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["p", "provider", "seconds_per_1k_iters"])
    w.writerows(rows)
    _emit_text(args, buf.getvalue(), _manifest(args, seed, started))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _providers(s: str) -> list[str]:
    out = [t for t in s.split(",") if t]
    bad = [t for t in out if t not in PROVIDER_MODES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown provider(s) {bad}")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gwishart-bd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=1)
        return sp

    sp = add("gen-graph", cmd_gen_graph, "generate a random graph as JSON")
    sp.add_argument("--kind", choices=EXPERIMENT_KINDS, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--seed", type=int)

    sp = add("gen-data", cmd_gen_data, "simulate Gaussian data from a graph (CSV)")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--delta", type=float, default=3.0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k-out", help="also write the generating precision matrix (JSON)")

    sp = add("const", cmd_const, "log normalizing constant of the G-Wishart prior")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--delta", type=float, default=3.0)
    m = sp.add_mutually_exclusive_group(required=True)
    m.add_argument("--mc", type=int, metavar="N")
    m.add_argument("--exact", action="store_true")
    sp.add_argument("--seed", type=int)

    sp = add("ratio", cmd_ratio, "I(G-e)/I(G) with the error bound B")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--edge", type=_parse_edge, required=True)
    sp.add_argument("--delta", type=float, default=3.0)
    m = sp.add_mutually_exclusive_group(required=True)
    m.add_argument("--approx", action="store_true")
    m.add_argument("--mc", type=int, metavar="N")
    sp.add_argument("--seed", type=int)

    sp = add("bdmcmc", cmd_bdmcmc, "run the birth-death sampler on CSV data")
    sp.add_argument("--data", required=True)
    sp.add_argument("--delta", type=float, default=3.0)
    sp.add_argument("--iterations", type=int, required=True)
    sp.add_argument("--burn-in", type=int, required=True)
    sp.add_argument("--provider", choices=PROVIDER_MODES, default="approximation")
    sp.add_argument("--mc-samples", type=int, default=1000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace-out", help="JSON-lines trace file")

    sp = add("evaluate", cmd_evaluate, "score a posterior summary against a true graph (CSV)")
    sp.add_argument("--summary", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)

    sp = add("table1", cmd_table1, "error bound and simulated gap for a path configuration")
    sp.add_argument("--delta", type=float, default=3.0)
    sp.add_argument("--config", help="path counts by size, e.g. 41 = four 2-edge paths, one 3-edge path")
    sp.add_argument("--lengths", help="interior-vertex count per path, e.g. 11122")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int)

    sp = add("bench", cmd_bench, "seconds per 1000 iterations by dimension and provider (CSV)")
    sp.add_argument("--p", type=_int_list, default=[10, 30])
    sp.add_argument("--providers", type=_providers, default=["approximation", "mc_ratio"])
    sp.add_argument("--delta", type=float, default=3.0)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--iterations", type=int, default=200)
    sp.add_argument("--mc-samples", type=int, default=1000)
    sp.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    started = time.perf_counter()
    try:
        args.func(args, started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GWError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
