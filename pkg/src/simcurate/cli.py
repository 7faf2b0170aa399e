"""Command-line entry point.

One subcommand per pipeline stage; every run is reproducible from its seed
and writes its fully resolved configuration next to its outputs. Exit codes:
0 success, 1 contract/user error, 2 I/O or backend error, 64 usage.

A flat TOML-style config file (`key = value` lines) can pre-fill any long
flag, including paths; explicit flags win. SIMCURATE_BACKEND_URL overrides
the default backend URL.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import curation, dataset, evaluation, features, genai, report
from .errors import BackendError, ContractError, DataError

log = logging.getLogger("simcurate")

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_ENVIRONMENT = 2
EXIT_USAGE = 64

ENV_BACKEND_URL = "SIMCURATE_BACKEND_URL"


class UsageError(Exception):
    """Bad invocation: missing flags or malformed flag values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def read_flat_toml(path: Path) -> dict:
    """Minimal flat `key = value` reader: strings, numbers, booleans."""
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{lineno}: expected key = value")
        key, _, text = line.partition("=")
        key, text = key.strip().replace("-", "_"), text.strip()
        if text.startswith('"') and text.endswith('"') and len(text) >= 2:
            values[key] = text[1:-1]
        elif text in ("true", "false"):
            values[key] = text == "true"
        else:
            try:
                values[key] = int(text)
            except ValueError:
                try:
                    values[key] = float(text)
                except ValueError:
                    raise ContractError(f"{path}:{lineno}: unquoted value {text!r}")
    return values


def _apply_config(command_parser: _Parser, config: dict) -> None:
    for action in command_parser._actions:
        if action.dest in config:
            value = config[action.dest]
            if action.type and isinstance(value, str):
                value = action.type(value)
            if action.choices and value not in action.choices:
                raise UsageError(
                    f"config value {value!r} for {action.dest} not in {list(action.choices)}"
                )
            command_parser.set_defaults(**{action.dest: value})


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        flags = ", ".join(f"--{n}" for n in missing)
        raise UsageError(f"{args.command}: missing required option(s): {flags}")


def _dump_config(args: argparse.Namespace, anchor: Path) -> None:
    resolved = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and not k.startswith("_")
    }
    if anchor.suffix:
        target = anchor.with_name(anchor.name + ".config.json")
    else:
        anchor.mkdir(parents=True, exist_ok=True)
        target = anchor / "resolved_config.json"
    target.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="simcurate", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="flat TOML config file with flag defaults")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands: dict[str, _Parser] = {}

    def add_command(name: str, help: str) -> _Parser:
        command = sub.add_parser(name, help=help)
        command.add_argument("--config", type=Path, help="flat TOML config file with flag defaults")
        commands[name] = command
        return command

    p = add_command("ingest", "build a manifest from an image directory")
    p.add_argument("--dir", type=Path, help="directory with images/ labels/ masks/ depth/")
    p.add_argument("--out", type=Path, help="manifest path to write")
    p.add_argument("--name", help="dataset name (default: directory name)")
    p.add_argument("--role", choices=dataset.ROLES, default="train")
    p.add_argument("--depth-scale", type=float, default=1.0, help="depth units per raw value")
    p.set_defaults(func=cmd_ingest)

    p = add_command("score", "score a pool against the reference set")
    p.add_argument("--pool", type=Path, help="pool manifest")
    p.add_argument("--ref", type=Path, help="reference manifest")
    p.add_argument("--method", choices=curation.METHODS, default="phash")
    p.add_argument("--aggregation", choices=curation.AGGREGATIONS, default="min")
    p.add_argument("--algorithm", choices=features.HASH_ALGORITHMS, default="dct_phash")
    p.add_argument("--bits", type=int, choices=features.HASH_BIT_DEPTHS, default=64)
    p.add_argument("--out", type=Path, help="scores CSV to write")
    p.add_argument("--cache", type=Path, help="feature cache sidecar (JSON)")
    p.add_argument("--jobs", type=int, default=1, help="parallel scoring workers")
    p.add_argument("--ledger", type=Path, help="timing ledger to append the filtering stage to")
    p.set_defaults(func=cmd_score)

    p = add_command("select", "emit nested top-N subsets from scores")
    p.add_argument("--pool", type=Path, help="pool manifest")
    p.add_argument("--scores", type=Path, help="scores CSV from `score`")
    p.add_argument("--plan", default="400:200:2000", help="seed:step:max subset sizes")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--copy", action="store_true", help="copy media instead of referencing")
    p.add_argument(
        "--seed-selection", choices=("first", "random"), default="first",
        help="seed subset policy: first N by id (default) or a seeded random sample",
    )
    p.add_argument("--seed", type=int, default=0, help="selection seed for --seed-selection random")
    p.set_defaults(func=cmd_select)

    p = add_command("split", "seeded train/val split of a manifest")
    p.add_argument("--manifest", type=Path, help="dataset manifest")
    p.add_argument("--fraction", type=float, default=0.8, help="train fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--copy", action="store_true", help="copy media instead of referencing")
    p.set_defaults(func=cmd_split)

    p = add_command("augment", "background-randomize a dataset via a backend")
    p.add_argument("--pool", type=Path, help="pool manifest")
    p.add_argument("--mode", choices=genai.PROMPT_MODES, default="random_pool")
    p.add_argument("--ref", type=Path, help="reference manifest (context_aware mode)")
    p.add_argument("--prompts", type=Path, help="prompt file (file mode)")
    p.add_argument("--negative", help="override the negative prompt")
    p.add_argument("--backend", help="backend base URL")
    p.add_argument("--mock", action="store_true", help="use the deterministic offline backend")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed; per-image seeds derive from it")
    p.add_argument("--jobs", type=int, default=1, help="in-flight backend requests")
    p.add_argument("--control-scale", type=float, default=0.5)
    p.add_argument("--guidance", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--canny-low", type=float, default=features.CANNY_LOW_DEFAULT)
    p.add_argument("--canny-high", type=float, default=features.CANNY_HIGH_DEFAULT)
    p.add_argument("--canny-sigma", type=float, default=features.CANNY_SIGMA_DEFAULT)
    p.add_argument("--retries", type=int, default=2, help="retries per record on transient failure")
    p.add_argument("--timeout", type=float, default=120.0, help="backend request timeout (s)")
    p.add_argument("--debug-raw", action="store_true", help="also keep pre-composite images")
    p.add_argument("--ledger", type=Path, help="timing ledger to append the generation stage to")
    p.set_defaults(func=cmd_augment)

    p = add_command("canny", "write edge maps for images or a whole manifest")
    p.add_argument("--image", type=Path, nargs="*", default=[], help="image file(s)")
    p.add_argument("--manifest", type=Path, help="dataset manifest")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--low", type=float, default=features.CANNY_LOW_DEFAULT)
    p.add_argument("--high", type=float, default=features.CANNY_HIGH_DEFAULT)
    p.add_argument("--sigma", type=float, default=features.CANNY_SIGMA_DEFAULT)
    p.set_defaults(func=cmd_canny)

    p = add_command("eval", "mAP50 of predictions against ground truth")
    p.add_argument("--preds", type=Path, help="predictions CSV")
    p.add_argument("--truth", type=Path, help="ground-truth manifest")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", type=Path, help="write the JSON result here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = add_command("ingest-results", "merge external training results into a ledger")
    p.add_argument("--ledger", type=Path, help="timing ledger (NDJSON)")
    p.add_argument("--results", type=Path, help="CSV: method,n_images,map50,training_seconds")
    p.set_defaults(func=cmd_ingest_results)

    p = add_command("report", "emit report.csv and report.svg from a ledger")
    p.add_argument("--ledger", type=Path, help="timing ledger (NDJSON)")
    p.add_argument("--out", type=Path, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser, commands


def cmd_ingest(args) -> int:
    _require(args, "dir", "out")
    ds = dataset.ingest_directory(
        args.dir, name=args.name, role=args.role, depth_scale=args.depth_scale
    )
    dataset.write_manifest(ds, args.out)
    _dump_config(args, args.out)
    log.info("ingested %d records -> %s", len(ds), args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    _require(args, "pool", "ref", "out")
    pool = dataset.load_dataset(args.pool, jobs=args.jobs)
    ref = dataset.load_dataset(args.ref, jobs=args.jobs)
    cache = curation.FeatureCache(args.cache) if args.cache else None
    started = time.perf_counter()
    scores = curation.score_against_ref(
        pool,
        ref,
        method=args.method,
        aggregation=args.aggregation,
        hash_algorithm=args.algorithm,
        bit_depth=args.bits,
        jobs=args.jobs,
        cache=cache,
    )
    elapsed = time.perf_counter() - started
    curation.write_scores_csv(scores, args.out)
    _dump_config(args, args.out)
    if args.ledger:
        method = "fil_phash" if args.method == "phash" else "fil_brightness"
        report.TimingLedger(args.ledger).record_timing(
            method, len(pool), "filtering", elapsed
        )
    log.info("scored %d images in %.2fs -> %s", len(scores), elapsed, args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    _require(args, "pool", "scores", "out")
    pool = dataset.load_dataset(args.pool)
    scores = curation.read_scores_csv(args.scores)
    plan = curation.SubsetPlan.parse(args.plan)
    subsets = curation.rank_and_select(
        scores, pool, plan, seed_selection=args.seed_selection, selection_seed=args.seed
    )
    for subset in subsets:
        subset_dir = args.out / f"subset_{len(subset):06d}"
        dataset.write_dataset(subset, subset_dir, copy_files=args.copy)
    _dump_config(args, args.out)
    log.info("wrote %d subsets under %s", len(subsets), args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    _require(args, "manifest", "out")
    ds = dataset.load_dataset(args.manifest)
    spec = dataset.SplitSpec(train_fraction=args.fraction, seed=args.seed)
    train, val = dataset.split_dataset(ds, spec)
    dataset.write_dataset(train, args.out / "train", copy_files=args.copy)
    dataset.write_dataset(val, args.out / "val", copy_files=args.copy)
    _dump_config(args, args.out)
    log.info("split %d -> %d train / %d val", len(ds), len(train), len(val))
    return EXIT_OK


def cmd_augment(args) -> int:
    _require(args, "pool", "out")
    pool = dataset.load_dataset(args.pool)
    ref = dataset.load_dataset(args.ref) if args.ref else None

    backend_url = args.backend or os.environ.get(ENV_BACKEND_URL)
    if args.mock:
        backend = genai.MockBackend()
    elif backend_url:
        backend = genai.HttpBackend(backend_url, timeout=args.timeout)
    else:
        raise ContractError(
            "augment needs --backend URL (or SIMCURATE_BACKEND_URL) or --mock"
        )

    if args.mode == "random_pool":
        provider = genai.PromptProvider.random_pool(negative=args.negative)
    elif args.mode == "file":
        if not args.prompts:
            raise ContractError("file mode needs --prompts")
        provider = genai.PromptProvider.from_file(args.prompts, negative=args.negative)
    else:
        if ref is None:
            raise ContractError("context_aware mode needs --ref")
        provider = genai.PromptProvider.context_aware(
            captioner=backend.caption, negative=args.negative
        )

    params = genai.AugmentParams(
        control_scale=args.control_scale,
        guidance_scale=args.guidance,
        steps=args.steps,
        canny_low=args.canny_low,
        canny_high=args.canny_high,
        canny_sigma=args.canny_sigma,
        retries=args.retries,
        save_raw=args.debug_raw,
    )
    augmented, run = genai.augment_dataset(
        pool,
        provider,
        backend,
        args.out,
        ref=ref,
        master_seed=args.seed,
        jobs=args.jobs,
        params=params,
    )
    _dump_config(args, args.out)
    if args.ledger:
        method = "aug_random" if args.mode == "random_pool" else "aug_context"
        report.TimingLedger(args.ledger).record_timing(
            method, len(pool), "generation", run.total_seconds
        )
    log.info(
        "augmented %d records (%d skipped, %d rejected) in %.2fs -> %s",
        len(augmented),
        len(run.skipped),
        len(run.rejected),
        run.total_seconds,
        args.out,
    )
    if run.skipped and not augmented.records:
        sys.stderr.write("error: every admitted record failed at the backend\n")
        return EXIT_ENVIRONMENT
    return EXIT_OK


def cmd_canny(args) -> int:
    _require(args, "out")
    paths = list(args.image)
    if args.manifest:
        ds = dataset.load_dataset(args.manifest)
        paths.extend(r.image_path for r in ds.records)
    if not paths:
        raise ContractError("canny needs --image files or a --manifest")
    args.out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        with Image.open(path) as im:
            gray = features.to_gray(np.asarray(im.convert("RGB")))
        edge_map = features.canny(gray, t_low=args.low, t_high=args.high, sigma=args.sigma)
        Image.fromarray(edge_map.to_image()).save(args.out / f"{Path(path).stem}_edges.png")
    _dump_config(args, args.out)
    log.info("wrote %d edge maps -> %s", len(paths), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "preds", "truth")
    preds = evaluation.load_predictions_csv(args.preds)
    truth = dataset.load_dataset(args.truth)
    result = evaluation.evaluate(preds, truth, iou_threshold=args.iou_threshold)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(result.to_json())
        _dump_config(args, args.out)
        log.info("map50=%.4f -> %s", result.map50, args.out)
    else:
        sys.stdout.write(result.to_json())
    return EXIT_OK


def cmd_ingest_results(args) -> int:
    _require(args, "ledger", "results")
    ledger = report.TimingLedger(args.ledger)
    records, issues = report.ingest_training_results(ledger, args.results)
    for issue in issues:
        sys.stderr.write(f"warning: {issue}\n")
    merged = sum(1 for r in records if r.complete)
    log.info("ledger now holds %d records (%d with results)", len(records), merged)
    return EXIT_OK


def cmd_report(args) -> int:
    _require(args, "ledger", "out")
    ledger = report.TimingLedger(args.ledger)
    rows = ledger.rows()
    records = report.build_records(rows)
    csv_path, svg_path = report.emit_report(
        records, args.out, hardware=report.hardware_description(rows)
    )
    _dump_config(args, args.out)
    log.info("wrote %s and %s", csv_path, svg_path)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser, commands = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    try:
        config_path = _peek_config(argv)
        if config_path:
            config = read_flat_toml(config_path)
            for command_parser in commands.values():
                _apply_config(command_parser, config)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except ContractError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONTRACT

    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_USAGE

    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except ContractError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONTRACT
    except (DataError, BackendError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ENVIRONMENT


def _peek_config(argv: list[str]) -> Path | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if token.startswith("--config="):
            return Path(token.split("=", 1)[1])
    return None


if __name__ == "__main__":
    sys.exit(main())
