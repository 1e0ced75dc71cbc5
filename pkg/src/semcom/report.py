"""Evaluation report: per-scene records plus recomputable aggregates.

The structured record stream (.jsonl, one scene per line, fixed key order)
is the canonical artifact and contains only deterministic fields, so two
identically-seeded runs write byte-identical files. Wall-clock runtime and
other provenance live in the human-readable text rendering only.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

# Fixed field order of one scene record.
RECORD_FIELDS = (
    "scene",
    "status",
    "raw_onehot_bytes",
    "packed_bytes",
    "compressed_bytes",
    "frame_bytes",
    "ratio_onehot",
    "ratio_packed",
    "rgb_psnr",
    "rgb_mse",
    "rgb_pixel_accuracy",
    "rgb_miou",
    "rgb_classification_accuracy",
    "ir_psnr",
    "ir_mse",
    "ir_pixel_accuracy",
    "ir_miou",
    "ir_classification_accuracy",
)

METRIC_FIELDS = RECORD_FIELDS[2:]

STATUS_OK = "ok"


@dataclass
class SceneRecord:
    scene: int
    status: str = STATUS_OK  # "ok", "dropped", or a decoder error name
    raw_onehot_bytes: int | None = None
    packed_bytes: int | None = None
    compressed_bytes: int | None = None
    frame_bytes: int | None = None
    ratio_onehot: float | None = None
    ratio_packed: float | None = None
    rgb_psnr: float | None = None
    rgb_mse: float | None = None
    rgb_pixel_accuracy: float | None = None
    rgb_miou: float | None = None
    rgb_classification_accuracy: float | None = None
    ir_psnr: float | None = None
    ir_mse: float | None = None
    ir_pixel_accuracy: float | None = None
    ir_miou: float | None = None
    ir_classification_accuracy: float | None = None


@dataclass
class EvalReport:
    records: list[SceneRecord]
    aggregates: dict
    seeds: dict
    runtime_seconds: float = 0.0
    config_text: str = ""
    failures: list[str] = field(default_factory=list)


def aggregate(records: list[SceneRecord]) -> dict:
    """Mean of every metric over successfully evaluated scenes, plus counts.

    This is the only aggregation routine; tests recompute through it from
    parsed records and must match the report exactly.
    """
    ok = [r for r in records if r.status == STATUS_OK]
    agg: dict = {
        "scenes": len(records),
        "evaluated": len(ok),
        "transmission_failures": len(records) - len(ok),
    }
    for name in METRIC_FIELDS:
        values = [getattr(r, name) for r in ok if getattr(r, name) is not None]
        agg["mean_" + name] = sum(values) / len(values) if values else None
    return agg


def record_to_json(record: SceneRecord) -> str:
    data = asdict(record)
    ordered = {k: data[k] for k in RECORD_FIELDS}
    return json.dumps(ordered)


def record_from_json(line: str) -> SceneRecord:
    return SceneRecord(**json.loads(line))


def write_records(report: EvalReport, path) -> None:
    lines = [record_to_json(r) for r in report.records]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")


def read_records(path) -> list[SceneRecord]:
    lines = Path(path).read_text().splitlines()
    return [record_from_json(line) for line in lines if line.strip()]


def render_text(report: EvalReport) -> str:
    out = ["evaluation report", "================="]
    out.append(f"scenes evaluated: {report.aggregates['evaluated']}/{report.aggregates['scenes']}")
    out.append(f"transmission failures: {report.aggregates['transmission_failures']}")
    for name in METRIC_FIELDS:
        value = report.aggregates.get("mean_" + name)
        if value is not None:
            out.append(f"mean {name}: {value:.4f}")
    if report.failures:
        out.append("failures:")
        out.extend(f"  {f}" for f in report.failures)
    out.append(f"seeds: {json.dumps(report.seeds)}")
    out.append(f"runtime: {report.runtime_seconds:.2f}s")
    return "\n".join(out) + "\n"


def write_text(report: EvalReport, path) -> None:
    Path(path).write_text(render_text(report))
