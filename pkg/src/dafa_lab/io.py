"""CSV helpers shared by every module that writes files.

All writes go through a temp file in the target directory followed by
``os.replace`` so concurrent runs never observe half-written outputs.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value, sig: int) -> str:
    """Format numbers with ``sig`` significant digits, pass other values through."""
    if isinstance(value, (bool, str)) or value is None:
        return "" if value is None else str(value)
    if isinstance(value, int):
        return str(value)
    return f"{float(value):.{sig}g}"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def render_csv(header: Sequence[str] | None, rows: Iterable[Sequence], sig: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v, sig) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str] | None, rows: Iterable[Sequence], sig: int) -> Path:
    return atomic_write_text(path, render_csv(header, rows, sig))


def read_csv_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row]
