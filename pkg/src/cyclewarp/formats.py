"""CSV and JSON readers and writers.

Floats are written with 17 significant digits so that reading a file back
reproduces the written values exactly. Column types are recovered on read:
integers, floats (always written with a decimal point or exponent),
booleans (``true``/``false``) and plain strings.
"""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonEquidistantError
from .model import Signal


class ParseError(ConfigError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def format_float(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = format(v, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if v is None:
        return ""
    return str(v)


def write_table(path, columns: dict):
    """Write equal-length columns with a header row."""
    names = list(columns)
    cols = [list(columns[k]) for k in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns differ in length: {sorted(lengths)}")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([format_cell(v) for v in row])
    return path


_INT = re.compile(r"^[+-]?\d+$")


def _convert(name, cells):
    if cells and all(_INT.match(c) for c in cells):
        return np.array([int(c) for c in cells], dtype=np.int64)
    if cells and all(c in ("true", "false") for c in cells):
        return np.array([c == "true" for c in cells], dtype=bool)
    try:
        return np.array([float(c) for c in cells], dtype=float)
    except ValueError:
        return np.array(cells, dtype=object)


def read_table(path) -> dict:
    """Inverse of :func:`write_table`."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing file {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    header = rows[0]
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(path, i, f"expected {len(header)} fields, found {len(row)}")
    return {name: _convert(name, [r[j] for r in rows[1:]]) for j, name in enumerate(header)}


def write_json(path, obj):
    path = Path(path)
    text = json.dumps(_plain(obj), indent=2, sort_keys=False, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing file {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from exc


def _plain(obj):
    # numpy scalars and arrays to built-ins; json writes floats via repr (exact)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _parse_number(path, line, text, what):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, line, f"{what} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"{what} is not finite: {text!r}")
    return v


def read_segments(path):
    """Segments from a ``x,y`` or ``segment,x,y`` CSV, in file order.

    Returns a list of ``(label, Signal)``. Each segment must be a contiguous
    block with equidistant ``x``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing input file {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header == ["x", "y"]:
        multi = False
    elif header == ["segment", "x", "y"]:
        multi = True
    else:
        raise ParseError(path, 1, f"header must be 'x,y' or 'segment,x,y', found {','.join(rows[0])!r}")
    blocks = {}
    order = []
    first_line = {}
    current = None
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(path, i, f"expected {len(header)} fields, found {len(row)}")
        label = row[0].strip() if multi else "0"
        if multi and not label:
            raise ParseError(path, i, "empty segment label")
        if label != current:
            if label in blocks:
                raise ParseError(path, i, f"segment {label!r} is not a contiguous block")
            blocks[label] = ([], [])
            order.append(label)
            first_line[label] = i
            current = label
        xs, ys = blocks[label]
        xs.append(_parse_number(path, i, row[-2].strip(), "x"))
        ys.append(_parse_number(path, i, row[-1].strip(), "y"))
    if not order:
        raise ParseError(path, 2, "no data rows")
    out = []
    for label in order:
        xs, ys = blocks[label]
        try:
            sig = Signal.from_arrays(np.array(xs), np.array(ys))
        except NonEquidistantError as exc:
            raise NonEquidistantError(
                exc.index, f"{path}: segment {label!r}: x not equidistant at sample {exc.index} "
                           f"(line {first_line[label] + exc.index})") from None
        except ConfigError as exc:
            raise ParseError(path, first_line[label], f"segment {label!r}: {exc}") from None
        out.append((label, sig))
    return out


def write_segments(path, segments):
    """Write ``[(label, Signal)]``; a single segment labelled ``0`` gets the ``x,y`` header."""
    if len(segments) == 1 and segments[0][0] == "0":
        sig = segments[0][1]
        return write_table(path, {"x": sig.x, "y": sig.y})
    labels, xs, ys = [], [], []
    for label, sig in segments:
        labels += [label] * sig.y.size
        xs += list(sig.x)
        ys += list(sig.y)
    return write_table(path, {"segment": labels, "x": xs, "y": ys})


def safe_label(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(label))
