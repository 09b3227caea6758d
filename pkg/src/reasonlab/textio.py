"""Plain-text matrix blocks shared by problem files and weight snapshots.

A file is a sequence of sections. A section header is a line holding a
single identifier; the rows under it are whitespace-separated numbers
(``inf``/``-inf`` allowed). ``#`` starts a comment. An optional first line
``schema 1`` versions the format.
"""

from __future__ import annotations

import math
import re

from .core import ReasonlabError

SCHEMA = 1
_HEADER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class FormatError(ReasonlabError):
    pass


def parse_blocks(text: str) -> dict[str, list[list[float]]]:
    blocks: dict[str, list[list[float]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "schema":
            if len(parts) != 2 or parts[1] != str(SCHEMA):
                raise FormatError(f"line {lineno}: unsupported schema {line!r}")
            continue
        if len(parts) == 1 and _HEADER.match(parts[0]) and parts[0].lower() not in ("inf", "nan"):
            current = parts[0]
            if current in blocks:
                raise FormatError(f"line {lineno}: duplicate section {current!r}")
            blocks[current] = []
            continue
        if current is None:
            raise FormatError(f"line {lineno}: numbers before any section header")
        try:
            blocks[current].append([float(v) for v in parts])
        except ValueError:
            raise FormatError(f"line {lineno}: not a numeric row: {line!r}") from None
    return blocks


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def format_blocks(blocks: dict) -> str:
    lines = [f"schema {SCHEMA}"]
    for name, rows in blocks.items():
        lines.append(name)
        for row in rows:
            lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
