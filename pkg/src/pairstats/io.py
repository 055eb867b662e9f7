"""File formats: click records, timetags, setup files, reports and curves.

Click records are CSV lines ``a,b,h`` of 0/1 flags, one per retained window,
with an optional ``a,b,h`` header.  Timetags are CSV lines
``channel,timestamp_ps`` with channel one of CLOCK, H, A, B.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import InvalidParameterError, ParseError
from .model import CODE_TO_INDEX, N_OUTCOMES, DetectorOutcome, SetupModel
from .montecarlo import ClickCounts

PathLike = Union[str, Path]

CLICK_HEADER = ("a", "b", "h")
TIMETAG_HEADER = ("channel", "timestamp_ps")
CHANNELS = ("CLOCK", "H", "A", "B")
SETUP_KEYS = ("eta_h", "eta_a", "eta_b", "d_h", "d_a", "d_b", "c")


def _open_text(source):
    if hasattr(source, "read"):
        return source, False
    return open(source, newline=""), True


# ---------------------------------------------------------------------------
# click records


def ingest_click_records(source) -> ClickCounts:
    """Accumulate the 8-bin outcome histogram of a click-record file."""
    fh, close = _open_text(source)
    counts = np.zeros(N_OUTCOMES, dtype=np.int64)
    n = 0
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if lineno == 1 and tuple(f.lower() for f in fields) == CLICK_HEADER:
                continue
            if len(fields) != 3 or any(f not in ("0", "1") for f in fields):
                raise ParseError(f"expected three 0/1 fields 'a,b,h', got {line!r}", lineno)
            a, b, h = (f == "1" for f in fields)
            counts[DetectorOutcome(a, b, h).index] += 1
            n += 1
    finally:
        if close:
            fh.close()
    if n == 0:
        raise ParseError("click-record file contains no windows")
    return ClickCounts(n, counts)


def write_click_records(outcomes: Iterable[int], dest, header: bool = True) -> None:
    """Write one ``a,b,h`` line per window outcome index."""
    rows = [",".join("1" if f else "0" for f in _flags(int(i))) for i in outcomes]
    text = ("a,b,h\n" if header else "") + "".join(r + "\n" for r in rows)
    _write_text(dest, text)


def write_click_counts(counts: ClickCounts, dest, header: bool = True) -> None:
    """Serialize a histogram as click records in canonical outcome order."""
    write_click_records(np.repeat(np.arange(N_OUTCOMES), counts.outcome_counts), dest, header)


def _flags(index):
    o = DetectorOutcome.from_index(index)
    return o.a_clicked, o.b_clicked, o.h_clicked


def _write_text(dest, text):
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


# ---------------------------------------------------------------------------
# timetags


@dataclass(frozen=True)
class WindowSpec:
    """Acceptance window relative to each clock tag, in picoseconds."""

    period: float
    width: float
    offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.width <= self.period:
            raise InvalidParameterError("window width must satisfy 0 < width <= period")


def read_timetags(source) -> dict:
    """Per-channel sorted int64 timestamp arrays."""
    fh, close = _open_text(source)
    tags = {ch: [] for ch in CHANNELS}
    last = {}
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if lineno == 1 and tuple(f.lower() for f in fields) == TIMETAG_HEADER:
                continue
            if len(fields) != 2:
                raise ParseError(f"expected 'channel,timestamp_ps', got {line!r}", lineno)
            ch = fields[0].upper()
            if ch not in tags:
                raise ParseError(f"unknown channel {fields[0]!r}", lineno)
            try:
                t = int(fields[1])
            except ValueError:
                raise ParseError(f"timestamp {fields[1]!r} is not an integer", lineno) from None
            if ch in last and t < last[ch]:
                raise ParseError(f"timestamp on channel {ch} decreases ({t} < {last[ch]})", lineno)
            last[ch] = t
            tags[ch].append(t)
    finally:
        if close:
            fh.close()
    return {ch: np.array(v, dtype=np.int64) for ch, v in tags.items()}


def _window_hits(lo, hi, t):
    """Number of tags in each window ``[lo[k], hi[k]]``."""
    left = np.searchsorted(t, lo, side="left")
    right = np.searchsorted(t, hi, side="right")
    return right - left


def _dead(starts, t, dead_time):
    if dead_time <= 0 or t.size == 0:
        return np.zeros(starts.size, dtype=bool)
    j = np.searchsorted(t, starts, side="left") - 1
    prev = t[np.maximum(j, 0)]
    return (j >= 0) & (starts - prev < dead_time)


def bin_timetags(tags: dict, spec: WindowSpec, dead_time_a=0.0, dead_time_b=0.0, dead_time_h=0.0) -> ClickCounts:
    """Window binning and dead-time gating of per-channel timestamps.

    A detector clicks in a clock period when at least one of its tags falls in
    ``[clock + offset - width/2, clock + offset + width/2]``.  A period is
    discarded when a gated detector fired less than its dead time before the
    window opened.
    """
    clocks = tags.get("CLOCK")
    if clocks is None or clocks.size == 0:
        raise ParseError("timetag stream has no CLOCK tags")
    lo = clocks + spec.offset - spec.width / 2.0
    hi = clocks + spec.offset + spec.width / 2.0
    empty = np.array([], dtype=np.int64)
    hits = {ch: _window_hits(lo, hi, tags.get(ch, empty)) for ch in ("A", "B", "H")}
    code = (
        (hits["A"] > 0).astype(np.uint8)
        | ((hits["B"] > 0).astype(np.uint8) << 1)
        | ((hits["H"] > 0).astype(np.uint8) << 2)
    )
    outcomes = CODE_TO_INDEX[code]
    discard = (
        _dead(lo, tags.get("A", empty), dead_time_a)
        | _dead(lo, tags.get("B", empty), dead_time_b)
        | _dead(lo, tags.get("H", empty), dead_time_h)
    )
    keep = ~discard
    multi = int(np.count_nonzero(keep & ((hits["A"] > 1) | (hits["B"] > 1) | (hits["H"] > 1))))
    kept = outcomes[keep]
    return ClickCounts(
        int(kept.size),
        np.bincount(kept, minlength=N_OUTCOMES),
        discarded=int(np.count_nonzero(discard)),
        multi_tag_windows=multi,
    )


def ingest_timetags(source, spec: WindowSpec, dead_time_a=0.0, dead_time_b=0.0, dead_time_h=0.0) -> ClickCounts:
    counts = bin_timetags(read_timetags(source), spec, dead_time_a, dead_time_b, dead_time_h)
    if counts.n_windows == 0:
        raise ParseError("no windows retained after dead-time gating")
    return counts


def outcomes_to_timetags(outcomes, spec: WindowSpec, start_time: int = 0) -> list:
    """Timetag rows placing each click at the window centre of its clock period."""
    rows = []
    centre = int(round(spec.offset))
    for k, idx in enumerate(outcomes):
        clock = start_time + int(round(k * spec.period))
        rows.append(("CLOCK", clock))
        a, b, h = _flags(int(idx))
        for flag, ch in ((h, "H"), (a, "A"), (b, "B")):
            if flag:
                rows.append((ch, clock + centre))
    return rows


def write_timetags(rows, dest) -> None:
    buf = io.StringIO()
    buf.write("channel,timestamp_ps\n")
    for ch, t in rows:
        buf.write(f"{ch},{int(t)}\n")
    _write_text(dest, buf.getvalue())


# ---------------------------------------------------------------------------
# setup files


def read_setup_file(path: PathLike) -> dict:
    """Flat ``key = value`` (or ``key: value``) pairs; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":", None):
                parts = line.split(sep, 1) if sep else line.split(None, 1)
                if len(parts) == 2:
                    break
            else:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
            key, value = parts[0].strip().lower(), parts[1].strip()
            if key not in SETUP_KEYS:
                raise ParseError(f"unknown setup key {key!r}", lineno)
            try:
                values[key] = float(value)
            except ValueError:
                raise ParseError(f"value {value!r} for {key} is not a number", lineno) from None
    return values


def write_setup_file(setup: SetupModel, path: PathLike) -> None:
    t, d = setup.transmissions, setup.darks
    lines = [
        f"eta_h = {t.eta_h!r}",
        f"eta_a = {t.eta_a!r}",
        f"eta_b = {t.eta_b!r}",
        f"d_h = {d.d_h!r}",
        f"d_a = {d.d_a!r}",
        f"d_b = {d.d_b!r}",
        f"c = {setup.c!r}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# reports and curves


def exact(value) -> dict:
    return {"value": _num(value), "exact": True}


def measured(value, stderr: Optional[float]) -> dict:
    if stderr is None:
        return exact(value)
    return {"value": _num(value), "stderr": _num(stderr)}


def _num(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    x = float(x) if not isinstance(x, int) else x
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def dump_report(report: dict, dest=None) -> str:
    """Serialize a report deterministically (sorted keys, repr floats)."""
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if dest is not None:
        _write_text(dest, text)
    return text


def write_curve(columns: tuple, rows, dest) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    _write_text(dest, buf.getvalue())
