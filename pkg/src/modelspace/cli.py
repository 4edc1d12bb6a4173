"""Command-line surface: expand, gibbs, exact, compare.

Reports are machine-readable JSON validating against the schemas shipped in
``modelspace/schemas``; Bayes-factor masses are reported in decimal log.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import exact as exact_mod
from .bayesfactor import GPriorSpec
from .errors import DataError, NumericalError, UsageError
from .estimators import (
    EstimateWithSE,
    PosteriorSummary,
    dedupe_models,
    find_hpm,
    find_mpm,
    rank_models,
    renormalized_estimate,
    indicator_of_variable,
    summarize_trace,
    topk_mass_log10,
)
from .linmodel import Dataset, ModelIndex, expand_design, load_csv
from .sampler import ChainTrace, SamplerConfig, run_chain

SCHEMA_VERSION = 1
LOG10 = math.log(10.0)


# ---------------------------------------------------------------------------
# trace files: one line per draw, "hex-bitmask<TAB>g<TAB>log_bf"

def write_trace(path, trace: ChainTrace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m, g, lbf in zip(trace.models, trace.g_draws, trace.log_bfs):
            fh.write(f"{m.to_hex()}\t{float(g)!r}\t{float(lbf)!r}\n")


def read_trace(path) -> list[tuple[ModelIndex, float, float]]:
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(f"{path}:{i}: expected 3 tab-separated fields")
                try:
                    m = ModelIndex.from_hex(parts[0])
                    g = float(parts[1])
                    lbf = float(parts[2])
                except ValueError:
                    raise DataError(f"{path}:{i}: unparseable trace record") from None
                out.append((m, g, lbf))
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if not out:
        raise DataError(f"{path}: empty trace")
    return out


# ---------------------------------------------------------------------------
# report assembly

def _names_of(model: ModelIndex, data: Dataset) -> list[str]:
    return [data.names[j] for j in model.indices()]


def _est_json(name: str, est: EstimateWithSE) -> dict:
    return {
        "name": name,
        "value": est.value,
        "se": est.se,
        "method": est.method,
    }


def summary_to_json(
    summary: PosteriorSummary, data: Dataset, top_k: int
) -> dict:
    n_used = summary.inclusion[0].n_used
    return {
        "method": "gibbs",
        "p": data.p,
        "names": list(data.names),
        "n_used": n_used,
        "inclusion": [
            _est_json(name, est) for name, est in zip(data.names, summary.inclusion)
        ],
        "inclusion_renormalized": [
            {"name": name, "value": est.value}
            for name, est in zip(data.names, summary.inclusion_renormalized)
        ],
        "dimension": [
            {"k": k, "value": est.value, "se": est.se}
            for k, est in enumerate(summary.dimension)
        ],
        "hpm": {
            "bits_hex": summary.hpm.to_hex(),
            "variables": _names_of(summary.hpm, data),
            "log_bf": summary.hpm_log_bf,
            "log10_bf": summary.hpm_log_bf / LOG10,
            "posterior": None,
        },
        "mpm": {
            "bits_hex": summary.mpm.to_hex(),
            "variables": _names_of(summary.mpm, data),
        },
        "top_models": [
            {"bits_hex": m.to_hex(), "log_bf": lbf} for m, lbf in summary.top_models
        ],
        "top_k": top_k,
        "topk_mass_log10": summary.mass_log10,
        "log10_total_bf": None,
        "excluded_count": None,
    }


def exact_to_json(res: exact_mod.ExactResult, data: Dataset, top_k: int) -> dict:
    mpm = find_mpm(
        [
            EstimateWithSE(float(v), 0.0, "exact", res.model_count)
            for v in res.inclusion_exact
        ]
    )
    return {
        "method": "exact",
        "p": data.p,
        "names": list(data.names),
        "n_used": res.model_count,
        "inclusion": [
            {"name": name, "value": float(v), "se": 0.0, "method": "exact"}
            for name, v in zip(data.names, res.inclusion_exact)
        ],
        "inclusion_renormalized": None,
        "dimension": [
            {"k": k, "value": float(v), "se": 0.0}
            for k, v in enumerate(res.dimension_exact)
        ],
        "hpm": {
            "bits_hex": res.hpm.to_hex(),
            "variables": _names_of(res.hpm, data),
            "log_bf": res.hpm_log_bf,
            "log10_bf": res.hpm_log_bf / LOG10,
            "posterior": res.hpm_posterior,
        },
        "mpm": {
            "bits_hex": mpm.to_hex(),
            "variables": _names_of(mpm, data),
        },
        "top_models": [
            {"bits_hex": m.to_hex(), "log_bf": lbf} for m, lbf in res.top_models
        ],
        "top_k": top_k,
        "topk_mass_log10": topk_mass_log10(res.top_models, top_k),
        "log10_total_bf": res.log_total_bf / LOG10,
        "excluded_count": res.excluded_count,
    }


def build_run_report(command, data, config_echo, summary, diagnostics, timing):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "run",
        "command": command,
        "dataset_digest": data.digest(),
        "config": config_echo,
        "summary": summary,
        "diagnostics": diagnostics,
        "timing": timing,
    }


def write_report(path, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


# ---------------------------------------------------------------------------
# subcommands

def _load(args) -> Dataset:
    data = load_csv(args.data, args.response)
    if getattr(args, "mains", None):
        data = expand_design(data, args.mains.split(","))
    return data


def _prior_from_args(args, data: Dataset) -> GPriorSpec:
    if args.zellner_siow and args.g is not None:
        raise UsageError("--g and --zellner-siow are mutually exclusive")
    if args.zellner_siow:
        return GPriorSpec.zellner_siow(data.N)
    if args.g is None:
        raise UsageError("one of --g or --zellner-siow is required")
    return GPriorSpec.fixed(args.g)


def cmd_expand(args) -> int:
    data = load_csv(args.data, args.response)
    expanded = expand_design(data, args.mains.split(","))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([args.response] + expanded.names)
        for i in range(expanded.N):
            writer.writerow(
                [repr(float(expanded.y[i]))]
                + [repr(float(v)) for v in expanded.X[i]]
            )
    return 0


def cmd_gibbs(args) -> int:
    t0 = time.perf_counter()
    data = _load(args)
    prior = _prior_from_args(args, data)
    config = SamplerConfig(
        iterations=args.iterations,
        prior=prior,
        burn=args.burn,
        thin=args.thin,
        seed=args.seed,
        start=args.start,
    )
    t1 = time.perf_counter()
    trace = run_chain(data, config)
    t2 = time.perf_counter()
    if args.trace:
        write_trace(args.trace, trace)
    summary = summarize_trace(trace, data, prior, top_k=args.top_k)
    t3 = time.perf_counter()
    report = build_run_report(
        "gibbs",
        data,
        {
            "data": str(args.data),
            "response": args.response,
            "mains": args.mains,
            "g": args.g,
            "zellner_siow": args.zellner_siow,
            "iterations": args.iterations,
            "burn": args.burn,
            "thin": args.thin,
            "seed": args.seed,
            "start": args.start,
            "top_k": args.top_k,
        },
        summary_to_json(summary, data, args.top_k),
        {
            "g_accept_rate": trace.meta["g_accept_rate"],
            "sse_spot_check_max_rel": trace.meta["sse_spot_check_max_rel"],
            "distinct_models": len(dedupe_models(trace)),
        },
        {
            "load_seconds": t1 - t0,
            "sample_seconds": t2 - t1,
            "summarize_seconds": t3 - t2,
        },
    )
    write_report(args.out, report)
    return 0


def cmd_exact(args) -> int:
    t0 = time.perf_counter()
    data = _load(args)
    prior = GPriorSpec.fixed(args.g)
    t1 = time.perf_counter()
    res = exact_mod.enumerate_exact(
        data,
        args.g,
        prior,
        K=args.top_k,
        workers=args.workers,
        shard_bits=args.shard_bits,
        force=args.force,
    )
    t2 = time.perf_counter()
    report = build_run_report(
        "exact",
        data,
        {
            "data": str(args.data),
            "response": args.response,
            "mains": args.mains,
            "g": args.g,
            "workers": args.workers,
            "shard_bits": args.shard_bits,
            "top_k": args.top_k,
            "force": args.force,
        },
        exact_to_json(res, data, args.top_k),
        {"excluded_count": res.excluded_count},
        {"load_seconds": t1 - t0, "enumerate_seconds": t2 - t1},
    )
    write_report(args.out, report)
    return 0


def _compare_worker(job):
    data, config, top_k = job
    trace = run_chain(data, config)
    distinct = dedupe_models(trace)
    from .estimators import hh_inclusion

    incl = hh_inclusion(trace, data.p)
    return {
        "inclusion": [e.value for e in incl],
        "inclusion_se": [e.se for e in incl],
        "mpm_bits": find_mpm(incl).bits,
        "hpm_bits": find_hpm(distinct).bits,
        "visited_bits": [m.bits for m, _ in distinct],
        "topk_mass_log10": topk_mass_log10(distinct, top_k),
    }


def compare_runs(
    data: Dataset,
    prior: GPriorSpec,
    runs: int,
    iterations: int,
    base_seed: int,
    top_k: int = 1000,
    start: str = "null_model",
    workers: int | None = None,
    exact_report: dict | None = None,
) -> dict:
    """Execute R seeded chains in parallel and aggregate the comparison axes:
    per-variable mean estimate / mean estimated SE / cross-run observed SD,
    HPM and MPM hit counts against an exact result, and top-K mass stability."""
    if runs < 2:
        raise UsageError("compare needs at least 2 runs")
    seeds = np.random.SeedSequence(base_seed).generate_state(runs, dtype=np.uint64)
    configs = [
        SamplerConfig(iterations=iterations, prior=prior, seed=int(s), start=start)
        for s in seeds
    ]
    jobs = [(data, c, top_k) for c in configs]
    workers = exact_mod.default_workers() if workers is None else max(1, workers)
    if workers == 1:
        results = [_compare_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, runs)) as pool:
            results = list(pool.map(_compare_worker, jobs))

    incl = np.array([r["inclusion"] for r in results])  # runs x p
    ses = np.array([r["inclusion_se"] for r in results], dtype=np.float64)
    masses = np.array([r["topk_mass_log10"] for r in results])
    variables = [
        {
            "name": name,
            "mean_estimate": float(incl[:, l].mean()),
            "mean_se": float(ses[:, l].mean()),
            "observed_sd": float(incl[:, l].std(ddof=1)),
        }
        for l, name in enumerate(data.names)
    ]

    hpm_hits = mpm_hits = hpm_visited = None
    if exact_report is not None:
        if exact_report.get("dataset_digest") != data.digest():
            raise DataError("exact-result file does not match this dataset")
        ex = exact_report["summary"]
        exact_hpm = int(ex["hpm"]["bits_hex"], 16)
        exact_mpm = int(ex["mpm"]["bits_hex"], 16)
        hpm_hits = sum(r["hpm_bits"] == exact_hpm for r in results)
        mpm_hits = sum(r["mpm_bits"] == exact_mpm for r in results)
        hpm_visited = sum(exact_hpm in set(r["visited_bits"]) for r in results)

    return {
        "runs": runs,
        "iterations": iterations,
        "variables": variables,
        "topk_mass_log10": {
            "per_run": [float(m) for m in masses],
            "mean": float(masses.mean()),
            "sd": float(masses.std(ddof=1)),
        },
        "hpm_hits": hpm_hits,
        "mpm_hits": mpm_hits,
        "hpm_visited": hpm_visited,
    }


def score_external_trace(path, data: Dataset, prior: GPriorSpec, top_k: int) -> dict:
    """Score a third-party searcher's visited-model file with the
    renormalized estimators."""
    records = read_trace(path)
    seen: dict[int, tuple[ModelIndex, float]] = {}
    for m, _, lbf in records:
        if m.bits not in seen:
            seen[m.bits] = (m, lbf)
    distinct = list(seen.values())
    incl = [
        renormalized_estimate(distinct, indicator_of_variable(l), prior).value
        for l in range(data.p)
    ]
    return {
        "label": str(path),
        "method": "renormalized",
        "distinct_models": len(distinct),
        "inclusion": [
            {"name": name, "value": v} for name, v in zip(data.names, incl)
        ],
        "hpm_bits_hex": find_hpm(distinct).to_hex(),
        "topk_mass_log10": topk_mass_log10(distinct, top_k),
    }


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    data = _load(args)
    prior = _prior_from_args(args, data)
    exact_report = None
    if args.exact:
        try:
            with open(args.exact, encoding="utf-8") as fh:
                exact_report = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"{args.exact}: file not found") from None
    methods = args.methods.split(",") if args.methods else ["gibbs"]
    for m in methods:
        if m != "gibbs":
            raise UsageError(
                f"unknown method {m!r}; external searchers are scored via --trace-file"
            )
    body = compare_runs(
        data,
        prior,
        runs=args.runs,
        iterations=args.iterations,
        base_seed=args.seed,
        top_k=args.top_k,
        start=args.start,
        workers=args.workers,
        exact_report=exact_report,
    )
    external = [
        score_external_trace(path, data, prior, args.top_k)
        for path in (args.trace_file or [])
    ]
    t1 = time.perf_counter()
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "compare",
        "dataset_digest": data.digest(),
        "config": {
            "data": str(args.data),
            "response": args.response,
            "mains": args.mains,
            "g": args.g,
            "zellner_siow": args.zellner_siow,
            "runs": args.runs,
            "iterations": args.iterations,
            "seed": args.seed,
            "start": args.start,
            "top_k": args.top_k,
            "methods": methods,
        },
        **body,
        "external": external,
        "timing": {"total_seconds": t1 - t0},
    }
    write_report(args.out, report)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelspace",
        description="Bayesian variable selection under Zellner g-priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("data", help="input CSV (header row, '.' decimals)")
        sp.add_argument("--response", required=True, help="response column name")
        sp.add_argument(
            "--mains",
            default=None,
            help="comma-separated main effects; expands to mains + squares + interactions",
        )
        sp.add_argument("--out", default="-", help="output JSON path (- for stdout)")
        sp.add_argument("--top-k", type=int, default=1000)

    sp = sub.add_parser("expand", help="write an expanded-design CSV")
    sp.add_argument("data")
    sp.add_argument("--response", required=True)
    sp.add_argument("--mains", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_expand)

    sp = sub.add_parser("gibbs", help="run one Gibbs chain and summarize")
    add_common(sp)
    sp.add_argument("--g", type=float, default=None, help="fixed g (e.g. N)")
    sp.add_argument(
        "--zellner-siow", action="store_true", help="hierarchical Zellner-Siow prior on g"
    )
    sp.add_argument("--iterations", type=int, required=True)
    sp.add_argument("--burn", type=int, default=0)
    sp.add_argument("--thin", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument(
        "--start", choices=["null_model", "full_model", "random"], default="null_model"
    )
    sp.add_argument("--trace", default=None, help="optional trace-file dump path")
    sp.set_defaults(func=cmd_gibbs)

    sp = sub.add_parser("exact", help="exact enumeration of the model space")
    add_common(sp)
    sp.add_argument("--g", type=float, required=True)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--shard-bits", type=int, default=None)
    sp.add_argument(
        "--force",
        action="store_true",
        help=f"override the p-guard (p > {exact_mod.P_GUARD} is a long job)",
    )
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("compare", help="multi-run comparison harness")
    add_common(sp)
    sp.add_argument("--g", type=float, default=None)
    sp.add_argument("--zellner-siow", action="store_true")
    sp.add_argument("--runs", type=int, required=True)
    sp.add_argument("--iterations", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0, help="base seed for child chains")
    sp.add_argument(
        "--start", choices=["null_model", "full_model", "random"], default="null_model"
    )
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--methods", default="gibbs")
    sp.add_argument(
        "--exact", default=None, help="exact-result JSON to score hits against"
    )
    sp.add_argument(
        "--trace-file",
        action="append",
        default=None,
        help="external visited-model trace to score with renormalized estimators",
    )
    sp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
