"""Trace file format: one JSON object per line.

Each record carries {"id": str, "h": [floats], "b": [0/1 ints]} plus an
optional "domain" string. ``h`` holds next-position surprisal in nats,
aligned so that h_t is the surprisal of the position predicted from t
(a boundary at t funds the prediction of t+1); ``h`` may be one entry
shorter than ``b`` when the final position has no next target. Lines
starting with ``#`` are comments; writers emit one stating the alignment
convention.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

from .metrics import Trace

__all__ = ["read_traces", "write_traces", "TraceFormatError", "HEADER_COMMENT"]

HEADER_COMMENT = (
    "# chunklab trace v1: one JSON object per line with fields id, h, b, domain?;"
    " h_t is the next-position surprisal s_{t+1} in nats, so h may have length len(b)-1"
)


class TraceFormatError(ValueError):
    """A trace line could not be parsed into a valid record."""


def _parse_line(line: str, where: str) -> Trace:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"{where}: invalid JSON ({e})") from e
    if not isinstance(obj, dict):
        raise TraceFormatError(f"{where}: expected a JSON object")
    missing = {"id", "h", "b"} - obj.keys()
    if missing:
        raise TraceFormatError(f"{where}: missing fields {sorted(missing)}")
    unknown = obj.keys() - {"id", "h", "b", "domain"}
    if unknown:
        raise TraceFormatError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        return Trace(id=str(obj["id"]), h=obj["h"], b=obj["b"], domain=obj.get("domain"))
    except (ValueError, TypeError) as e:
        raise TraceFormatError(f"{where}: {e}") from e


def read_traces(path: str | Path, strict: bool = True) -> Iterator[Trace | TraceFormatError]:
    """Yield traces from a JSONL file, skipping comments and blank lines.

    With ``strict=False`` malformed records are yielded as TraceFormatError
    values instead of raised, so callers can skip-and-count.
    """
    path = Path(path)
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                yield _parse_line(line, f"{path.name}:{lineno}")
            except TraceFormatError as err:
                if strict:
                    raise
                yield err


def write_traces(path: str | Path, traces: list[Trace]) -> None:
    """Write traces as JSONL with the format header comment."""
    with open(path, "w") as fh:
        fh.write(HEADER_COMMENT + "\n")
        for t in traces:
            rec: dict = {"id": t.id, "h": [float(v) for v in t.h], "b": [int(v) for v in t.b]}
            if t.domain is not None:
                rec["domain"] = t.domain
            fh.write(json.dumps(rec) + "\n")
