"""Versioned JSON instance and report files, plain-text tables and CSV output.

Instance file (``format = "pqsmooth-instance"``, ``version = 1``)::

    {
      "format": "pqsmooth-instance", "version": 1,
      "x_breaks": [...], "y_breaks": [...],
      "pieces": [[[alpha, beta, gamma, delta, mu, nu], [...]], ...],   # cell id = j * nx + i
      "m": 0.4 | null, "m_provenance": "user-asserted",
      "lambda": 0.64,                                                   # optional, cross-checked
      "generator": {...}                                                # optional provenance
    }

Coefficients multiply ``x1^2, x1 x2, x2^2, x1, x2, 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .errors import InstanceFormatError
from .partition import Partition, build_grid_partition
from .quadmap import QuadraticMap2

INSTANCE_FORMAT = "pqsmooth-instance"
REPORT_FORMAT = "pqsmooth-report"
FORMAT_VERSION = 1
LAMBDA_RTOL = 1e-12


@dataclass(frozen=True)
class InstanceData:
    partition: Partition
    pieces: Tuple[QuadraticMap2, ...]
    m: Optional[float]
    m_provenance: str
    lam: Optional[float]
    generator: Optional[Dict[str, Any]]


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise InstanceFormatError(f"missing field {key!r}", location=where)
    return doc[key]


def _number_list(value, where: str) -> List[float]:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                              for v in value):
        raise InstanceFormatError("expected a list of numbers", location=where)
    out = [float(v) for v in value]
    if not all(math.isfinite(v) for v in out):
        raise InstanceFormatError("non-finite number", location=where)
    return out


def parse_instance(text: str, source: str = "<string>") -> InstanceData:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(exc.msg, location=f"{source}:{exc.lineno}:{exc.colno}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be an object", location=source)
    if doc.get("format") != INSTANCE_FORMAT:
        raise InstanceFormatError(f"format must be {INSTANCE_FORMAT!r}", location=f"{source}:format")
    if doc.get("version") != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported version {doc.get('version')!r}",
                                  location=f"{source}:version")
    xb = _number_list(_require(doc, "x_breaks", source), f"{source}:x_breaks")
    yb = _number_list(_require(doc, "y_breaks", source), f"{source}:y_breaks")
    try:
        partition = build_grid_partition(xb, yb)
    except ValueError as exc:
        raise InstanceFormatError(str(exc), location=f"{source}:breaks") from exc
    raw = _require(doc, "pieces", source)
    if not isinstance(raw, list) or len(raw) != len(partition.cells):
        raise InstanceFormatError(f"expected {len(partition.cells)} pieces", location=f"{source}:pieces")
    pieces = []
    for c, p in enumerate(raw):
        where = f"{source}:pieces[{c}]"
        if not isinstance(p, list) or len(p) != 2:
            raise InstanceFormatError("a piece is two coefficient rows", location=where)
        rows = [_number_list(r, f"{where}[{k}]") for k, r in enumerate(p)]
        if any(len(r) != 6 for r in rows):
            raise InstanceFormatError("each coefficient row has 6 entries", location=where)
        pieces.append(QuadraticMap2(rows))
    m = doc.get("m")
    if m is not None and (not isinstance(m, (int, float)) or isinstance(m, bool) or not m > 0):
        raise InstanceFormatError("m must be a positive number or null", location=f"{source}:m")
    lam = doc.get("lambda")
    if lam is not None and (not isinstance(lam, (int, float)) or isinstance(lam, bool)):
        raise InstanceFormatError("lambda must be a number", location=f"{source}:lambda")
    return InstanceData(partition, tuple(pieces), None if m is None else float(m),
                        str(doc.get("m_provenance", "user-asserted")),
                        None if lam is None else float(lam), doc.get("generator"))


def load_instance(path) -> InstanceData:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceFormatError(f"cannot read instance file: {exc.strerror}", location=str(path)) from exc
    return parse_instance(text, str(path))


def instance_document(partition: Partition, pieces: Sequence[QuadraticMap2], m: Optional[float],
                      m_provenance: str = "user-asserted", lam: Optional[float] = None,
                      generator: Optional[dict] = None) -> dict:
    doc = {"format": INSTANCE_FORMAT, "version": FORMAT_VERSION,
           "x_breaks": [float(v) for v in partition.x_breaks],
           "y_breaks": [float(v) for v in partition.y_breaks],
           "pieces": [p.coef.tolist() for p in pieces],
           "m": m, "m_provenance": m_provenance}
    if lam is not None:
        doc["lambda"] = lam
    if generator is not None:
        doc["generator"] = generator
    return doc


def dumps(doc: dict) -> str:
    """Canonical JSON: sorted keys, shortest round-trip float repr, trailing newline.

    Infinite values are written as ``Infinity``, which the json module reads back.
    """
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    return obj


def write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InstanceFormatError(f"cannot write file: {exc.strerror}", location=str(path)) from exc


def report_document(command: str, parameters: dict, body: dict, version: str) -> dict:
    return {"format": REPORT_FORMAT, "version": FORMAT_VERSION, "tool_version": version,
            "command": command, "parameters": parameters, **body}


def load_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"cannot read report: {exc}", location=str(path)) from exc
    if doc.get("format") != REPORT_FORMAT:
        raise InstanceFormatError("not a report file", location=str(path))
    return doc


# -- human-readable output ---------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Left-aligned first column, right-aligned others."""
    cells = [list(map(str, header))] + [[fmt(v) for v in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    lines = []
    for n, r in enumerate(cells):
        parts = [r[0].ljust(widths[0])] + [r[k].rjust(widths[k]) for k in range(1, len(r))]
        lines.append("  ".join(parts).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def key_values(pairs: Sequence[Tuple[str, Any]]) -> str:
    w = max(len(k) for k, _ in pairs)
    return "".join(f"{k.ljust(w)}  {fmt(v)}\n" for k, v in pairs)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """CSV with '.' decimals and 17 significant digits, independent of locale."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()
