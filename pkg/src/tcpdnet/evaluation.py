"""CPSNR / AoP-error metrics and multi-method reports.

Conventions:

* intensities I0..I135: CPSNR over the RGB triple, peak 1
* S0 is evaluated as S0 / 2 (range [0, 1]) with peak 1
* S1 and S2 use their raw values (range [-1, 1]) with peak 2
* DoP: CPSNR over the three per-color DoP maps, peak 1
* AoP: mean angle error of the green channel's AoP (``aop_source="luma"`` uses Y instead)
* dataset aggregates are means of per-scene values
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from . import files
from .errors import InvalidInputError
from .mosaic import synthesize_cpfa
from .polar import angle_difference, compute_aop_dop, compute_stokes, rgb_to_ycbcr, visualize_aop_dop

REPORT_SCHEMA = "tcpdnet-metrics"
REPORT_VERSION = 1
METRIC_COLUMNS = ("I0", "I45", "I90", "I135", "S0", "S1", "S2", "DoP", "AoP")


def cpsnr(pred, truth, peak: float = 1.0) -> float:
    """PSNR with the MSE pooled over every channel and pixel; ``inf`` for an exact match."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise InvalidInputError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if peak <= 0:
        raise InvalidInputError(f"peak must be positive, got {peak}")
    mse = float(np.mean((pred - truth) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass
class MetricsRecord:
    scene: str
    method: str
    I0: float
    I45: float
    I90: float
    I135: float
    S0: float
    S1: float
    S2: float
    DoP: float
    AoP: float  # mean angle error, degrees

    def metrics(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


def _polarization_maps(cube: np.ndarray):
    """Per-color Stokes ``(3, 3, H, W)`` and DoP ``(3, H, W)`` from a 12-channel cube."""
    quads = cube.reshape(4, 3, *cube.shape[-2:]).transpose(1, 0, 2, 3)  # (color, angle, H, W)
    stokes = compute_stokes(quads)
    _, dop = compute_aop_dop(stokes)
    return stokes, dop


def _aop(cube: np.ndarray, source: str) -> np.ndarray:
    if source == "green":
        quad = cube[1::3]
    elif source == "luma":
        quad = rgb_to_ycbcr(cube)[0::3]
    else:
        raise ValueError(f"aop_source must be 'green' or 'luma', got {source!r}")
    return compute_aop_dop(compute_stokes(quad))[0]


def evaluate_scene(pred, truth, scene: str = "", method: str = "", aop_source: str = "green") -> MetricsRecord:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[0] != 12:
        raise InvalidInputError(f"expected two (12, H, W) cubes, got {pred.shape} and {truth.shape}")
    intensity = [cpsnr(pred[3 * k : 3 * k + 3], truth[3 * k : 3 * k + 3]) for k in range(4)]
    sp, dp = _polarization_maps(pred)
    st, dt = _polarization_maps(truth)
    aop_err = float(np.mean(angle_difference(_aop(pred, aop_source), _aop(truth, aop_source))))
    return MetricsRecord(
        scene,
        method,
        *intensity,
        S0=cpsnr(sp[:, 0] / 2, st[:, 0] / 2, 1.0),
        S1=cpsnr(sp[:, 1], st[:, 1], 2.0),
        S2=cpsnr(sp[:, 2], st[:, 2], 2.0),
        DoP=cpsnr(dp, dt, 1.0),
        AoP=aop_err,
    )


def mean_record(records: list[MetricsRecord], scene: str = "mean") -> MetricsRecord:
    if not records:
        raise InvalidInputError("no records to average")
    means = {k: float(np.mean([getattr(r, k) for r in records])) for k in METRIC_COLUMNS}
    return MetricsRecord(scene=scene, method=records[0].method, **means)


# A method maps (raw frame, pattern) to a (12, H, W) cube in [0, 1].
Method = Callable[[np.ndarray, object], np.ndarray]


def evaluate_dataset(
    method: Method, scenes: Mapping[str, np.ndarray], name: str, pattern, aop_source="green", on_prediction=None
):
    """Run ``method`` on every scene; returns ``(per_scene_records, mean_record)``.

    ``on_prediction(scene_id, pred, truth)`` is called after each scene if given.
    """
    records = []
    for sid, truth in scenes.items():
        truth = np.asarray(truth, dtype=np.float64)
        raw = synthesize_cpfa(truth, pattern)
        pred = np.clip(np.asarray(method(raw, pattern), dtype=np.float64), 0.0, 1.0)
        records.append(evaluate_scene(pred, truth, sid, name, aop_source))
        if on_prediction is not None:
            on_prediction(sid, pred, truth)
    return records, mean_record(records)


def average_runs(means: list[MetricsRecord]) -> MetricsRecord:
    """Average the dataset means of repeated training runs of one method."""
    return mean_record(means, scene="mean")


def _json_value(v):
    if isinstance(v, float) and math.isinf(v):
        return None
    return v


def record_to_json(r: MetricsRecord) -> dict:
    d = {k: _json_value(v) for k, v in asdict(r).items()}
    infinite = [k for k in METRIC_COLUMNS if isinstance(getattr(r, k), float) and math.isinf(getattr(r, k))]
    if infinite:
        d["infinite"] = infinite
    return d


def record_from_json(d: dict) -> MetricsRecord:
    vals = dict(d)
    for k in vals.pop("infinite", []):
        vals[k] = math.inf
    return MetricsRecord(**{f.name: vals[f.name] for f in fields(MetricsRecord)})


def write_csv(path, records: Iterable[MetricsRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "method", *METRIC_COLUMNS])
        for r in records:
            row = [r.scene, r.method]
            for k in METRIC_COLUMNS:
                v = getattr(r, k)
                row.append("inf" if math.isinf(v) else f"{v:.4f}")
            w.writerow(row)


def write_json(path, results: Mapping[str, tuple[list[MetricsRecord], MetricsRecord]]) -> None:
    doc = {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "columns": list(METRIC_COLUMNS),
        "methods": {
            name: {"scenes": [record_to_json(r) for r in recs], "mean": record_to_json(mean)}
            for name, (recs, mean) in results.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def format_table(means: Iterable[MetricsRecord]) -> str:
    head = f"{'method':<22}" + "".join(f"{c:>8}" for c in METRIC_COLUMNS)
    lines = [head, "-" * len(head)]
    for r in sorted(means, key=lambda r: r.method):
        lines.append(f"{r.method:<22}" + "".join(f"{getattr(r, c):>8.2f}" for c in METRIC_COLUMNS))
    return "\n".join(lines)


def save_visuals(out_dir, cube: np.ndarray, prefix: str, truth: np.ndarray | None = None) -> None:
    """S0, DoP, AoP, AoP-DoP and (if ``truth`` is given) error-map PNGs for one cube."""
    out_dir = Path(out_dir)
    stokes, dop = _polarization_maps(cube)
    aop_g, dop_g = compute_aop_dop(stokes[1])
    files.write_png16(out_dir / f"{prefix}s0.png", (stokes[:, 0] / 2).transpose(1, 2, 0))
    files.write_png16(out_dir / f"{prefix}dop.png", dop_g)
    files.write_png16(out_dir / f"{prefix}aop.png", aop_g / 180.0)
    files.write_png16(out_dir / f"{prefix}aop_dop.png", visualize_aop_dop(aop_g, dop_g))
    if truth is not None:
        # mean absolute error over the 12 channels, amplified 10x
        err = np.abs(cube - truth).mean(axis=0) * 10.0
        files.write_png16(out_dir / f"{prefix}error.png", err)


def compare_methods(
    methods: Mapping[str, Method],
    scenes: Mapping[str, np.ndarray],
    pattern,
    out_dir=None,
    save_images: bool = True,
    aop_source: str = "green",
):
    """Evaluate several methods on the same scenes and optionally write the report.

    Writes ``metrics.csv`` (per-scene rows and one ``mean`` row per method),
    ``metrics.json``, ``summary.txt`` and, per scene, visualizations under
    ``images/<scene>/``.
    """
    results = {}
    for name in sorted(methods):
        hook = None
        if out_dir is not None and save_images:
            hook = lambda sid, pred, truth, name=name: save_visuals(Path(out_dir) / "images" / sid, pred, f"{name}_", truth)
        results[name] = evaluate_dataset(methods[name], scenes, name, pattern, aop_source, on_prediction=hook)
    if out_dir is not None:
        out_dir = Path(out_dir)
        if save_images:
            for sid, truth in scenes.items():
                save_visuals(out_dir / "images" / sid, np.asarray(truth, dtype=np.float64), "truth_")
        rows = [r for recs, mean in results.values() for r in [*recs, mean]]
        write_csv(out_dir / "metrics.csv", rows)
        write_json(out_dir / "metrics.json", results)
        (out_dir / "summary.txt").write_text(format_table(m for _, m in results.values()) + "\n")
    return results
