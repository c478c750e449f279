"""File formats: scan files, basket tables, manifests, predictions, reports.

Formats are deliberately small and exact:

- scans: ``xyz`` (whitespace-separated ``x y z`` per line), ``csv``
  (header ``x,y,z``), or minimal ASCII PLY (``ply-ascii``). Binary PLY is
  out of scope.
- baskets: csv with header ``id,<product...>`` and integer quantities.
- manifest: csv ``id,scan_path`` with a sibling baskets csv
  (``<name>.baskets.csv`` next to ``<name>.csv`` unless given explicitly);
  scan paths are resolved relative to the manifest's directory.
- predictions: csv ``id,neighbor_id,distance,<product...>``.
- score reports: csv ``predictor,s_z,one_minus_dH,one_minus_dHplus,s_pre,
  s_pro,s_pro_x_pre,n`` with fixed 4-decimal scores, or json mirroring the
  same field names.

Cloud coordinates are written with shortest round-trip decimal formatting,
so a write/load cycle reproduces the numbers exactly. Parsers never skip a
malformed row; every defect is a hard error naming the file and line.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import InvalidInputError, ParseError
from .geometry import PointCloud
from .metrics import ScoreReport
from .predictor import LogRecord, ProductBasket

SCAN_FORMATS = ("xyz", "csv", "ply-ascii")

_PLY_FLOAT_TYPES = {"float", "float32", "float64", "double"}

REPORT_COLUMNS = ("predictor", "s_z", "one_minus_dH", "one_minus_dHplus",
                  "s_pre", "s_pro", "s_pro_x_pre", "n")


# ---------------------------------------------------------------------------
# scans


def scan_format_for(path) -> str:
    """Infer a scan format from a file extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".xyz":
        return "xyz"
    if suffix == ".csv":
        return "csv"
    if suffix == ".ply":
        return "ply-ascii"
    raise InvalidInputError(f"cannot infer scan format from {str(path)!r}; pass one of {SCAN_FORMATS}")


def load_scan(path, format: str | None = None) -> PointCloud:
    """Read a point cloud, preserving point order exactly as on disk."""
    fmt = format if format is not None else scan_format_for(path)
    if fmt not in SCAN_FORMATS:
        raise InvalidInputError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, f"cannot read file: {exc}") from exc
    lines = text.splitlines()
    if fmt == "xyz":
        points = _parse_xyz(path, lines)
    elif fmt == "csv":
        points = _parse_csv_scan(path, lines)
    else:
        points = _parse_ply(path, lines)
    if not points:
        raise ParseError(path, "scan contains no points")
    return PointCloud(np.array(points, dtype=np.float64))


def _parse_float(path, lineno: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, f"non-numeric value {token!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(path, f"non-finite value {token!r}", lineno)
    return value


def _parse_xyz(path, lines: list[str]) -> list[tuple[float, float, float]]:
    points = []
    for lineno, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts:
            continue  # blank lines carry no data
        if len(parts) != 3:
            raise ParseError(path, f"expected 3 coordinates, got {len(parts)}", lineno)
        x, y, z = (_parse_float(path, lineno, tok) for tok in parts)
        points.append((x, y, z))
    return points


def _parse_csv_scan(path, lines: list[str]) -> list[tuple[float, float, float]]:
    rows = list(csv.reader(lines))
    if not rows:
        raise ParseError(path, "missing header", 1)
    header = [cell.strip() for cell in rows[0]]
    if header != ["x", "y", "z"]:
        raise ParseError(path, f"expected header x,y,z, got {','.join(header)!r}", 1)
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(path, f"expected 3 columns, got {len(row)}", lineno)
        x, y, z = (_parse_float(path, lineno, cell.strip()) for cell in row)
        points.append((x, y, z))
    return points


def _parse_ply(path, lines: list[str]) -> list[tuple[float, float, float]]:
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, "not a PLY file (missing 'ply' magic)", 1)

    elements: list[tuple[str, int, list[tuple[str, str]]]] = []  # (name, count, [(type, prop)])
    saw_format = False
    data_start = None
    lineno = 1
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        keyword = parts[0]
        if keyword == "comment":
            continue
        if keyword == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError(path, "only ASCII PLY is supported", lineno)
            saw_format = True
        elif keyword == "element":
            if len(parts) != 3:
                raise ParseError(path, f"malformed element declaration {raw.strip()!r}", lineno)
            try:
                count = int(parts[2])
            except ValueError:
                raise ParseError(path, f"bad element count {parts[2]!r}", lineno) from None
            if count < 0:
                raise ParseError(path, f"negative element count {count}", lineno)
            elements.append((parts[1], count, []))
        elif keyword == "property":
            if not elements:
                raise ParseError(path, "property before any element", lineno)
            if len(parts) >= 2 and parts[1] == "list":
                if elements[-1][0] == "vertex":
                    raise ParseError(path, "list properties on the vertex element are unsupported", lineno)
                elements[-1][2].append(("list", parts[-1]))
            elif len(parts) == 3:
                elements[-1][2].append((parts[1], parts[2]))
            else:
                raise ParseError(path, f"malformed property declaration {raw.strip()!r}", lineno)
        elif keyword == "end_header":
            data_start = lineno
            break
        else:
            raise ParseError(path, f"unknown header keyword {keyword!r}", lineno)
    if data_start is None:
        raise ParseError(path, "missing end_header", lineno)
    if not saw_format:
        raise ParseError(path, "missing format declaration", data_start)

    vertex = [(i, count, props) for i, (name, count, props) in enumerate(elements) if name == "vertex"]
    if not vertex:
        raise ParseError(path, "missing vertex element", data_start)
    vertex_pos, vertex_count, vertex_props = vertex[0]
    columns = {}
    for col, (ptype, pname) in enumerate(vertex_props):
        if pname in ("x", "y", "z"):
            if ptype not in _PLY_FLOAT_TYPES:
                raise ParseError(path, f"vertex property {pname} must be float-typed, is {ptype}", data_start)
            columns[pname] = col
    missing = [name for name in ("x", "y", "z") if name not in columns]
    if missing:
        raise ParseError(path, f"vertex element lacks float properties {missing}", data_start)

    data = [
        (no, raw.split())
        for no, raw in enumerate(lines[data_start:], start=data_start + 1)
        if raw.split()
    ]
    cursor = 0
    points: list[tuple[float, float, float]] = []
    for index, (name, count, props) in enumerate(elements):
        if cursor + count > len(data):
            raise ParseError(
                path, f"element {name!r} declares {count} rows but only {len(data) - cursor} remain",
                data[-1][0] if data else data_start,
            )
        if index == vertex_pos:
            for no, parts in data[cursor:cursor + count]:
                if len(parts) != len(vertex_props):
                    raise ParseError(path, f"expected {len(vertex_props)} values, got {len(parts)}", no)
                points.append(tuple(_parse_float(path, no, parts[columns[axis]]) for axis in ("x", "y", "z")))
        cursor += count
    if cursor < len(data):
        raise ParseError(path, "trailing data after the declared elements", data[cursor][0])
    if len(points) != vertex_count:
        raise ParseError(path, f"vertex count mismatch: header says {vertex_count}, found {len(points)}")
    return points


def write_scan(cloud: PointCloud, path, format: str | None = None) -> None:
    """Write a point cloud with shortest round-trip decimal coordinates."""
    fmt = format if format is not None else scan_format_for(path)
    if fmt not in SCAN_FORMATS:
        raise InvalidInputError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")
    rows = [f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in cloud.xyz]
    if fmt == "xyz":
        text = "\n".join(rows) + "\n"
    elif fmt == "csv":
        text = "x,y,z\n" + "\n".join(row.replace(" ", ",") for row in rows) + "\n"
    else:
        header = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(cloud)}",
            "property double x",
            "property double y",
            "property double z",
            "end_header",
        ]
        text = "\n".join(header + rows) + "\n"
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# baskets


def load_baskets(path) -> dict[str, ProductBasket]:
    """Integer baskets keyed by log id, from a csv with header id,<product...>."""
    _, table = _read_basket_table(path)
    return table


def _read_basket_table(path) -> tuple[tuple[str, ...], dict[str, ProductBasket]]:
    rows = _read_csv_rows(path)
    if not rows:
        raise ParseError(path, "missing header", 1)
    lineno, header = rows[0]
    header = [cell.strip() for cell in header]
    if len(header) < 2 or header[0] != "id":
        raise ParseError(path, "expected header id,<product columns>", lineno)
    names = tuple(header[1:])
    width = len(names)
    table: dict[str, ProductBasket] = {}
    for lineno, row in rows[1:]:
        if len(row) != width + 1:
            raise ParseError(path, f"expected {width + 1} columns, got {len(row)}", lineno)
        log_id = row[0].strip()
        if not log_id:
            raise ParseError(path, "empty id", lineno)
        if log_id in table:
            raise ParseError(path, f"duplicate id {log_id!r}", lineno)
        quantities = []
        for cell in row[1:]:
            token = cell.strip()
            try:
                value = int(token)
            except ValueError:
                raise ParseError(path, f"non-integer quantity {token!r}", lineno) from None
            if value < 0:
                raise ParseError(path, f"negative quantity {value}", lineno)
            quantities.append(value)
        table[log_id] = ProductBasket(tuple(quantities))
    return names, table


def _read_csv_rows(path) -> list[tuple[int, list[str]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, f"cannot read file: {exc}") from exc
    reader = csv.reader(text.splitlines())
    return [(reader.line_num, row) for row in reader if row]


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row: the log id, its scan file, its basket row key."""

    id: str
    scan_path: Path
    basket_id: str


@dataclass(frozen=True, eq=False)
class Manifest:
    """A validated list of scans with baskets; all referenced files exist."""

    product_count: int
    entries: tuple[ManifestEntry, ...]


def default_baskets_path(manifest_path) -> Path:
    """Sibling baskets table of a manifest: <name>.baskets.csv."""
    return Path(manifest_path).with_suffix(".baskets.csv")


def _read_manifest_rows(path) -> list[tuple[str, Path]]:
    rows = _read_csv_rows(path)
    if not rows:
        raise ParseError(path, "missing header", 1)
    lineno, header = rows[0]
    if [cell.strip() for cell in header] != ["id", "scan_path"]:
        raise ParseError(path, "expected header id,scan_path", lineno)
    base = Path(path).parent
    out: list[tuple[str, Path]] = []
    seen = set()
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(path, f"expected 2 columns, got {len(row)}", lineno)
        log_id = row[0].strip()
        if not log_id:
            raise ParseError(path, "empty id", lineno)
        if log_id in seen:
            raise ParseError(path, f"duplicate id {log_id!r}", lineno)
        seen.add(log_id)
        scan_path = Path(row[1].strip())
        if not scan_path.is_absolute():
            scan_path = base / scan_path
        if not scan_path.is_file():
            raise ParseError(path, f"scan file does not exist: {scan_path}", lineno)
        out.append((log_id, scan_path))
    return out


def load_manifest(manifest_path, baskets_path=None) -> Manifest:
    """Validate a manifest against its baskets table without loading scans."""
    rows = _read_manifest_rows(manifest_path)
    baskets = default_baskets_path(manifest_path) if baskets_path is None else Path(baskets_path)
    names, table = _read_basket_table(baskets)
    entries = []
    for log_id, scan_path in rows:
        if log_id not in table:
            raise ParseError(manifest_path, f"id {log_id!r} has no row in {baskets}")
        entries.append(ManifestEntry(log_id, scan_path, log_id))
    return Manifest(len(names), tuple(entries))


def load_scans(manifest_path) -> list[tuple[str, PointCloud]]:
    """Load (id, scan) pairs from a manifest, without requiring baskets."""
    return [(log_id, load_scan(scan_path)) for log_id, scan_path in _read_manifest_rows(manifest_path)]


def load_dataset(manifest_path, baskets_path=None) -> Dataset:
    """Assemble a full dataset: manifest rows, scans, and baskets."""
    baskets = default_baskets_path(manifest_path) if baskets_path is None else Path(baskets_path)
    manifest = load_manifest(manifest_path, baskets)
    names, table = _read_basket_table(baskets)
    records = tuple(
        LogRecord(entry.id, load_scan(entry.scan_path), table[entry.basket_id])
        for entry in manifest.entries
    )
    return Dataset(records, manifest.product_count, names)


# ---------------------------------------------------------------------------
# predictions


@dataclass(frozen=True)
class PredictionRow:
    """A predicted basket for one test log, with its neighbour when known."""

    id: str
    neighbor_id: str | None
    distance: float | None
    basket: ProductBasket


@contextmanager
def _open_out(path):
    if str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle


def write_predictions(rows: Sequence[PredictionRow], product_names: Sequence[str], path) -> None:
    """Write predictions as csv: id,neighbor_id,distance,<product...>."""
    with _open_out(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "neighbor_id", "distance", *product_names])
        for row in rows:
            if len(row.basket) != len(product_names):
                raise InvalidInputError(
                    f"prediction for {row.id!r} has {len(row.basket)} products, expected {len(product_names)}"
                )
            writer.writerow([
                row.id,
                row.neighbor_id if row.neighbor_id is not None else "",
                repr(float(row.distance)) if row.distance is not None else "",
                *row.basket.quantities,
            ])


def load_predictions(path) -> list[PredictionRow]:
    """Read a predictions csv back into rows."""
    rows = _read_csv_rows(path)
    if not rows:
        raise ParseError(path, "missing header", 1)
    lineno, header = rows[0]
    header = [cell.strip() for cell in header]
    if header[:3] != ["id", "neighbor_id", "distance"] or len(header) < 4:
        raise ParseError(path, "expected header id,neighbor_id,distance,<product columns>", lineno)
    width = len(header) - 3
    out = []
    seen = set()
    for lineno, row in rows[1:]:
        if len(row) != width + 3:
            raise ParseError(path, f"expected {width + 3} columns, got {len(row)}", lineno)
        log_id = row[0].strip()
        if not log_id:
            raise ParseError(path, "empty id", lineno)
        if log_id in seen:
            raise ParseError(path, f"duplicate id {log_id!r}", lineno)
        seen.add(log_id)
        neighbor = row[1].strip() or None
        distance = _parse_float(path, lineno, row[2].strip()) if row[2].strip() else None
        quantities = []
        for cell in row[3:]:
            try:
                value = int(cell.strip())
            except ValueError:
                raise ParseError(path, f"non-integer quantity {cell.strip()!r}", lineno) from None
            if value < 0:
                raise ParseError(path, f"negative quantity {value}", lineno)
            quantities.append(value)
        out.append(PredictionRow(log_id, neighbor, distance, ProductBasket(tuple(quantities))))
    return out


# ---------------------------------------------------------------------------
# score reports


def write_report(
    reports: ScoreReport | Sequence[ScoreReport],
    path,
    format: str = "csv",
    labels: str | Sequence[str] | None = None,
) -> None:
    """Serialize score reports with fixed 4-decimal scores.

    csv columns: predictor,s_z,one_minus_dH,one_minus_dHplus,s_pre,s_pro,
    s_pro_x_pre,n; one row per report in input order. json mirrors the same
    field names (an object for a single report, an array for a sequence).
    The labels fill the predictor column.
    """
    single = isinstance(reports, ScoreReport)
    items: list[ScoreReport] = [reports] if single else list(reports)
    if labels is None:
        names = [""] * len(items)
    elif isinstance(labels, str):
        names = [labels] * len(items)
    else:
        names = [str(label) for label in labels]
    if len(names) != len(items):
        raise InvalidInputError(f"{len(names)} labels for {len(items)} reports")

    if format == "csv":
        with _open_out(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for label, report in zip(names, items):
                writer.writerow([
                    label,
                    *(f"{value:.4f}" for value in report.values()),
                    report.n_evaluated,
                ])
    elif format == "json":
        payload: object = [
            {
                "predictor": label,
                "s_z": round(report.s_z, 4),
                "one_minus_dH": round(report.one_minus_dH, 4),
                "one_minus_dHplus": round(report.one_minus_dHplus, 4),
                "s_pre": round(report.s_pre, 4),
                "s_pro": round(report.s_pro, 4),
                "s_pro_x_pre": round(report.s_pro_x_pre, 4),
                "n": report.n_evaluated,
            }
            for label, report in zip(names, items)
        ]
        if single:
            payload = payload[0]
        with _open_out(path) as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    else:
        raise InvalidInputError(f"unknown report format {format!r}; expected 'csv' or 'json'")
