#!/usr/bin/env python3
"""Offline end-to-end benchmark demo.

Drives the whole pipeline against a synthetic dataset with the mock
generation backend: ingest, score (both methods, timed), select nested
subsets, augment with both prompt regimes, splice in a placeholder
training-results CSV, and emit the mAP-vs-time report. Shared scoring cost
is charged to every subset size of a filtering method; augmentation cost is
charged to the subset it ran on.

    python scripts/make_demo_dataset.py --out demo --pool-size 600
    python scripts/run_benchmark_demo.py --data demo --out demo_run

Swap --mock for --backend http://host:port (see backend/) to run against a
real generation service, and replace the placeholder results CSV with real
detector numbers via `simcurate ingest-results`.
"""

import argparse
import sys
import time
from pathlib import Path

from simcurate import cli
from simcurate.report import TimingLedger


def run(*argv) -> float:
    started = time.perf_counter()
    code = cli.main([str(a) for a in argv])
    if code != 0:
        sys.exit(code)
    return time.perf_counter() - started


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", type=Path, required=True, help="demo dataset root (pool/ ref/)")
    parser.add_argument("--out", type=Path, required=True, help="run output directory")
    parser.add_argument("--plan", default="200:200:600")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=4)
    parser.add_argument("--backend", help="generation backend URL (default: mock)")
    parser.add_argument("--hardware", default="demo rig", help="hardware descriptor for the report")
    args = parser.parse_args()

    pool_manifest = args.data / "pool" / "manifest.json"
    ref_manifest = args.data / "ref" / "manifest.json"
    args.out.mkdir(parents=True, exist_ok=True)
    ledger = TimingLedger(args.out / "ledger.ndjson")
    ledger.record_hardware(args.hardware)

    seed_size, step, max_size = (int(s) for s in args.plan.split(":"))
    sizes = list(range(seed_size, max_size + 1, step))

    run("ingest", "--dir", args.data / "pool", "--out", pool_manifest)
    run("ingest", "--dir", args.data / "ref", "--out", ref_manifest, "--role", "ref")

    for method, ledger_method in (("brightness", "fil_brightness"), ("phash", "fil_phash")):
        score_seconds = run(
            "score", "--method", method,
            "--pool", pool_manifest, "--ref", ref_manifest,
            "--out", args.out / f"scores_{method}.csv",
            "--cache", args.out / "feature_cache.json",
            "--jobs", args.jobs,
        )
        run(
            "select", "--pool", pool_manifest,
            "--scores", args.out / f"scores_{method}.csv",
            "--plan", args.plan, "--out", args.out / f"subsets_{method}",
        )
        for n in sizes:
            ledger.record_timing(ledger_method, n, "filtering", score_seconds)

    subset = args.out / "subsets_phash" / f"subset_{seed_size:06d}" / "manifest.json"
    backend_args = ["--backend", args.backend] if args.backend else ["--mock"]
    for mode, ledger_method in (("random_pool", "aug_random"), ("file", "aug_context")):
        extra = list(backend_args)
        if mode == "file":
            prompts = args.out / "prompts.txt"
            prompts.write_text("a bright workshop hall\na cluttered storage room\n")
            extra += ["--prompts", prompts]
        augment_seconds = run(
            "augment", "--pool", subset, "--mode", mode, *extra,
            "--seed", args.seed, "--jobs", args.jobs,
            "--out", args.out / f"augmented_{mode}",
        )
        ledger.record_timing(ledger_method, seed_size, "generation", augment_seconds)

    run(
        "split", "--manifest", pool_manifest, "--fraction", "0.8",
        "--seed", args.seed, "--out", args.out / "splits",
    )

    # Placeholder detector numbers; replace with real training output.
    results = args.out / "training_results.csv"
    lines = ["method,n_images,map50,training_seconds"]
    for i, n in enumerate(sizes):
        lines.append(f"fil_phash,{n},{0.80 + 0.03 * i:.2f},{300 + n}")
        lines.append(f"fil_brightness,{n},{0.76 + 0.03 * i:.2f},{300 + n}")
    lines.append(f"aug_random,{seed_size},0.70,900")
    lines.append(f"aug_context,{seed_size},0.68,950")
    results.write_text("\n".join(lines) + "\n")

    run("ingest-results", "--ledger", ledger.path, "--results", results)
    run("report", "--ledger", ledger.path, "--out", args.out / "report")
    print(f"report written to {args.out / 'report'}")


if __name__ == "__main__":
    main()
