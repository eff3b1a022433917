"""Artifact files: trace CSV, metrics JSON, wait heatmaps (CSV matrix and PGM)."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

from .grid_map import GridMap
from .sim_engine import SimMetrics, TraceRow

TRACE_HEADER = ["tick", "agent", "status", "row", "col", "action", "lock_event"]

WHITE = 255
OBSTACLE_GRAY = 128


class FormatError(ValueError):
    pass


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.tick, r.agent, r.status, r.row, r.col, r.action, r.lock_event])


def read_trace(path) -> list[TraceRow]:
    text = Path(path).read_text()
    if not text.strip():
        raise FormatError(f"{path}: empty trace file")
    reader = csv.reader(text.splitlines())
    header = next(reader)
    if header != TRACE_HEADER:
        raise FormatError(f"{path}: bad trace header {header}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(TRACE_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields")
        try:
            rows.append(TraceRow(int(rec[0]), int(rec[1]), rec[2], int(rec[3]), int(rec[4]), rec[5], rec[6]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def metrics_json(metrics: SimMetrics, extra: Optional[dict] = None) -> str:
    d = metrics.to_dict()
    if extra:
        d["run"] = extra
    return json.dumps(d, indent=1, sort_keys=True) + "\n"


def write_metrics(metrics: SimMetrics, path, extra: Optional[dict] = None) -> None:
    Path(path).write_text(metrics_json(metrics, extra))


def read_metrics(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid metrics JSON ({exc})") from exc


def wait_counts_from_trace(rows, height: int, width: int) -> list[list[int]]:
    counts = [[0] * width for _ in range(height)]
    for r in rows:
        if r.action == "wait":
            counts[r.row][r.col] += 1
    return counts


def heatmap_pixels(counts: list[list[int]], grid: Optional[GridMap] = None) -> list[list[int]]:
    """Linear 8-bit scale: no waits is white (255), the busiest cell black (0)."""
    peak = max((max(row) for row in counts), default=0)
    out = []
    for r, row in enumerate(counts):
        line = []
        for c, n in enumerate(row):
            if grid is not None and not grid.passable((r, c)):
                line.append(OBSTACLE_GRAY)
            elif peak == 0:
                line.append(WHITE)
            else:
                line.append(WHITE - round(WHITE * n / peak))
        out.append(line)
    return out


def pgm_bytes(pixels: list[list[int]]) -> bytes:
    height, width = len(pixels), len(pixels[0])
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + bytes(v for row in pixels for v in row)


def read_pgm(path) -> list[list[int]]:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    width, height, maxval = (int(x) for x in fields[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    raster = data[pos + 1:]  # exactly one whitespace byte follows maxval
    return [list(raster[r * width:(r + 1) * width]) for r in range(height)]


def write_heatmap(counts, out_stem, grid: Optional[GridMap] = None) -> tuple[Path, Path]:
    """Write ``<stem>.pgm`` and ``<stem>.csv``; returns both paths."""
    stem = Path(out_stem)
    pgm = stem.with_suffix(".pgm")
    matrix = stem.with_suffix(".csv")
    pgm.write_bytes(pgm_bytes(heatmap_pixels(counts, grid)))
    with open(matrix, "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(counts)
    return pgm, matrix
