"""CSV sample matrices: one observation per row, one dimension per column.

A single header row is allowed and is detected by any non-numeric cell in
the first row. Values are written with 17 significant digits so a
write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

__all__ = ["DataError", "read_samples", "write_samples", "format_float"]


class DataError(ValueError):
    """Malformed input data; ``row`` and ``column`` are 1-based file positions."""

    def __init__(self, message: str, path=None, row: int | None = None, column: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.path, self.row, self.column = path, row, column


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_samples(path) -> np.ndarray:
    """Read an ``n x d`` float matrix, raising ``DataError`` with the offending cell."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read file ({exc.strerror})", path) from exc
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text))) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c.strip()) for c in rows[0][1]):
        header = rows.pop(0)
        width = len(header[1])
    else:
        width = len(rows[0][1]) if rows else 0
    if not rows:
        raise DataError("no observations", path)
    out = np.empty((len(rows), width))
    for k, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise DataError(f"expected {width} columns, found {len(cells)}", path, lineno)
        for j, cell in enumerate(cells):
            try:
                value = float(cell.strip())
            except ValueError:
                raise DataError(f"non-numeric value {cell!r}", path, lineno, j + 1) from None
            if not math.isfinite(value):
                raise DataError(f"non-finite value {cell!r}", path, lineno, j + 1)
            out[k, j] = value
    return out


def write_samples(path, X, header: list[str] | None = None) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in X:
            w.writerow([format_float(v) for v in row])
