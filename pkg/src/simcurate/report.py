"""Timing ledger and the mAP50-versus-time-overhead report.

Stage wall times land in an append-only newline-delimited JSON ledger; mAP
values from external detector training are merged in by (method, n_images).
The report is a CSV table plus a hand-emitted SVG scatter/line plot, both
byte-deterministic for a given ledger.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, DataError

log = logging.getLogger(__name__)

METHODS = ("aug_context", "aug_random", "base_render", "fil_brightness", "fil_phash")
STAGES = ("generation", "filtering", "training")

SERIES_COLORS = {
    "aug_context": "#d62728",
    "aug_random": "#ff7f0e",
    "base_render": "#7f7f7f",
    "fil_brightness": "#2ca02c",
    "fil_phash": "#1f77b4",
}


@dataclass
class ExperimentRecord:
    """One (method, subset size) point: stage times and, once known, mAP50."""

    method: str
    n_images: int
    stage_times: dict[str, float] = field(default_factory=dict)
    map50: float | None = None

    @property
    def total_seconds(self) -> float:
        return sum(self.stage_times.values())

    @property
    def complete(self) -> bool:
        return self.map50 is not None


class TimingLedger:
    """Append-only NDJSON ledger of stage timings and ingested results."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def record_timing(self, method: str, n_images: int, stage: str, seconds: float) -> None:
        if method not in METHODS:
            raise ContractError(f"unknown method {method!r}, expected one of {METHODS}")
        if stage not in STAGES:
            raise ContractError(f"unknown stage {stage!r}, expected one of {STAGES}")
        if seconds < 0:
            raise ContractError(f"negative duration {seconds}")
        self._append(
            {
                "kind": "timing",
                "method": method,
                "n_images": int(n_images),
                "stage": stage,
                "seconds": float(seconds),
            }
        )

    def record_map50(
        self, method: str, n_images: int, map50: float, training_seconds: float | None = None
    ) -> None:
        if method not in METHODS:
            raise ContractError(f"unknown method {method!r}")
        if not 0.0 <= map50 <= 1.0:
            raise ContractError(f"map50 must be in [0, 1], got {map50}")
        row = {
            "kind": "result",
            "method": method,
            "n_images": int(n_images),
            "map50": float(map50),
        }
        if training_seconds is not None:
            row["training_seconds"] = float(training_seconds)
        self._append(row)

    def record_hardware(self, description: str) -> None:
        self._append({"kind": "hardware", "description": description})

    def _append(self, row: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    def rows(self) -> list[dict]:
        if not self.path.is_file():
            return []
        rows = []
        for lineno, line in enumerate(self.path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{self.path}:{lineno}: bad ledger row: {exc}") from exc
        return rows


def build_records(rows: list[dict]) -> list[ExperimentRecord]:
    """Fold ledger rows into per-(method, n_images) experiment records.

    Repeated timing rows for the same stage accumulate; repeated result rows
    are last-wins, mirroring the ingest merge rule.
    """
    records: dict[tuple[str, int], ExperimentRecord] = {}

    def get(method: str, n_images: int) -> ExperimentRecord:
        key = (method, n_images)
        if key not in records:
            records[key] = ExperimentRecord(method=method, n_images=n_images)
        return records[key]

    for row in rows:
        kind = row.get("kind")
        if kind == "timing":
            rec = get(row["method"], int(row["n_images"]))
            stage = row["stage"]
            rec.stage_times[stage] = rec.stage_times.get(stage, 0.0) + float(row["seconds"])
        elif kind == "result":
            rec = get(row["method"], int(row["n_images"]))
            rec.map50 = float(row["map50"])
            if "training_seconds" in row:
                rec.stage_times["training"] = float(row["training_seconds"])
    return sorted(records.values(), key=lambda r: (r.method, r.n_images))


def hardware_description(rows: list[dict]) -> str | None:
    descriptions = [r["description"] for r in rows if r.get("kind") == "hardware"]
    return descriptions[-1] if descriptions else None


def ingest_training_results(
    ledger: TimingLedger, csv_path: str | Path
) -> tuple[list[ExperimentRecord], list[str]]:
    """Merge externally produced (method, n_images, map50, training_seconds) rows.

    Unknown methods and rows without a matching timed record are reported but
    do not stop the run; duplicate (method, n_images) rows are last-wins.
    """
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise DataError(f"results file not found: {csv_path}")

    existing = {(r.method, r.n_images) for r in build_records(ledger.rows())}
    issues: list[str] = []
    seen: dict[tuple[str, int], int] = {}
    with csv_path.open(newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            method = (row.get("method") or "").strip()
            if method not in METHODS:
                issues.append(f"{csv_path}:{lineno}: unknown method {method!r}")
                continue
            try:
                n_images = int(row["n_images"])
                map50 = float(row["map50"])
                training_seconds = float(row["training_seconds"])
            except (KeyError, ValueError) as exc:
                issues.append(f"{csv_path}:{lineno}: bad row: {exc}")
                continue
            key = (method, n_images)
            if key in seen:
                issues.append(
                    f"{csv_path}:{lineno}: duplicate row for {key}, last wins"
                )
            if key not in existing:
                issues.append(f"{csv_path}:{lineno}: no timed record for {key}")
            seen[key] = lineno
            ledger.record_map50(method, n_images, map50, training_seconds)

    for issue in issues:
        log.warning("%s", issue)
    return build_records(ledger.rows()), issues


def emit_report(
    records: list[ExperimentRecord],
    out_dir: str | Path,
    hardware: str | None = None,
) -> tuple[Path, Path]:
    """Write report.csv and report.svg; incomplete records chart as pending."""
    complete = [r for r in records if r.complete]
    if not complete:
        raise ContractError("no complete experiment records to report")
    for record in records:
        total = record.total_seconds
        assert all(0.0 <= s <= total for s in record.stage_times.values()), (
            f"stage times of {record.method}/{record.n_images} are inconsistent"
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: (r.method, r.n_images))

    csv_path = out_dir / "report.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "n_images", "generation_s", "filtering_s", "training_s", "total_s", "map50"]
        )
        for r in ordered:
            writer.writerow(
                [
                    r.method,
                    r.n_images,
                    f"{r.stage_times.get('generation', 0.0):.3f}",
                    f"{r.stage_times.get('filtering', 0.0):.3f}",
                    f"{r.stage_times.get('training', 0.0):.3f}",
                    f"{r.total_seconds:.3f}",
                    f"{r.map50:.4f}" if r.complete else "pending",
                ]
            )

    svg_path = out_dir / "report.svg"
    svg_path.write_text(_render_svg(complete, hardware))
    return csv_path, svg_path


_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 180, 40, 60


def _render_svg(records: list[ExperimentRecord], hardware: str | None) -> str:
    """Scatter/line plot: x total seconds, y mAP50, one series per method."""
    x_max = max(r.total_seconds for r in records) * 1.08 or 1.0
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(seconds: float) -> float:
        return _ML + plot_w * seconds / x_max

    def sy(map50: float) -> float:
        return _MT + plot_h * (1.0 - map50)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="24" font-family="sans-serif" font-size="15" '
        f'font-weight="bold">mAP50 vs time overhead</text>',
    ]
    if hardware:
        parts.append(
            f'<text x="{_ML}" y="{_H - 12}" font-family="sans-serif" '
            f'font-size="10" fill="#666">{_escape(hardware)}</text>'
        )

    # Axes and ticks.
    parts.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + plot_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_ML + plot_w}" y2="{_MT + plot_h}" '
        f'stroke="black"/>'
    )
    for i in range(6):
        yv = i / 5.0
        y = sy(yv)
        parts.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.1f}" font-family="sans-serif" font-size="11" '
            f'text-anchor="end">{yv:.1f}</text>'
        )
        xv = x_max * i / 5.0
        x = sx(xv)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_MT + plot_h}" x2="{x:.1f}" y2="{_MT + plot_h + 4}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_MT + plot_h + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{xv:.0f}</text>'
        )
    parts.append(
        f'<text x="{_ML + plot_w / 2:.1f}" y="{_MT + plot_h + 38}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">total time (s)</text>'
    )
    parts.append(
        f'<text x="20" y="{_MT + plot_h / 2:.1f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 20 {_MT + plot_h / 2:.1f})">mAP50</text>'
    )

    methods = sorted({r.method for r in records})
    for series_idx, method in enumerate(methods):
        color = SERIES_COLORS.get(method, "#000000")
        points = sorted(
            (r for r in records if r.method == method), key=lambda r: r.n_images
        )
        coords = [(sx(r.total_seconds), sy(r.map50)) for r in points]
        if len(coords) > 1:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in coords)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for (x, y), r in zip(coords, points):
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3.5" fill="{color}"/>')
            parts.append(
                f'<text x="{x + 5:.1f}" y="{y - 5:.1f}" font-family="sans-serif" '
                f'font-size="9" fill="#444">{r.n_images}</text>'
            )
        ly = _MT + 14 + 18 * series_idx
        lx = _ML + plot_w + 16
        parts.append(
            f'<rect x="{lx}" y="{ly - 9}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{lx + 18}" y="{ly + 2}" font-family="sans-serif" '
            f'font-size="11">{_escape(method)}</text>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
