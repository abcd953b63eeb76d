"""Reading and writing LTRC data files.

Two formats are understood:

* the transformer field-failure extract, header
  ``serial,year_installed,year_exit,nu,k``;
* a generic LTRC table, header ``L,T,delta,cause`` with ``cause`` left blank
  on censored rows.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import LtrcSample, StepFunction
from .errors import InvariantViolation, ParseError

STUDY_START = 1980
STUDY_END = 2008
TRANSFORMER_HEADER = ("serial", "year_installed", "year_exit", "nu", "k")
LTRC_HEADER = ("L", "T", "delta", "cause")


@dataclass(frozen=True)
class TransformerRecord:
    serial: int
    year_installed: int
    year_exit: int
    nu: int
    k: int

    def check(self, line: int) -> None:
        if self.year_exit < self.year_installed:
            raise InvariantViolation(line, "year_exit precedes year_installed")
        if self.nu not in (0, 1):
            raise InvariantViolation(line, f"nu must be 0 or 1, got {self.nu}")
        if self.k not in (0, 1, 2):
            raise InvariantViolation(line, f"k must be 0, 1 or 2, got {self.k}")
        if (self.nu == 1) != (self.year_installed >= STUDY_START):
            raise InvariantViolation(
                line, f"nu={self.nu} inconsistent with installation in {self.year_installed}")
        if self.k == 0 and self.year_exit != STUDY_END:
            raise InvariantViolation(line, f"censored unit must exit in {STUDY_END}")

    def to_ltrc(self) -> tuple[float, float, bool, int]:
        """(L, T, event, cause) measured in years since installation.

        Units installed before the study window are seen only if they survive
        to it, so their truncation time is the age at the window start.
        """
        trunc = max(0, STUDY_START - self.year_installed)
        return float(trunc), float(self.year_exit - self.year_installed), self.k != 0, self.k


def _open_text(source):
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_text(encoding="utf-8")


def _rows(text, header):
    if not text.strip():
        raise ParseError(1, "empty input")
    reader = csv.reader(io.StringIO(text))
    first = next(reader)
    if tuple(h.strip() for h in first) != header:
        raise ParseError(1, f"expected header {','.join(header)}")
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
        yield line, [c.strip() for c in row]


def _int(line, name, value):
    try:
        return int(value)
    except ValueError:
        raise ParseError(line, f"{name} is not an integer: {value!r}") from None


def read_transformer_records(source) -> list[TransformerRecord]:
    recs = []
    for line, row in _rows(_open_text(source), TRANSFORMER_HEADER):
        rec = TransformerRecord(*(_int(line, h, v) for h, v in zip(TRANSFORMER_HEADER, row)))
        rec.check(line)
        recs.append(rec)
    if not recs:
        raise ParseError(2, "no data rows")
    return recs


def ingest_transformer(source) -> LtrcSample:
    """Transformer extract (path or file object) to an LTRC sample."""
    recs = read_transformer_records(source)
    cols = list(zip(*(r.to_ltrc() for r in recs)))
    return LtrcSample.from_arrays(*(np.array(c) for c in cols))


def transformer_path():
    """Location of the bundled 100-unit transformer extract."""
    return resources.files("ltrc_ustat") / "data" / "transformer.csv"


def load_transformer() -> LtrcSample:
    with resources.as_file(transformer_path()) as p:
        return ingest_transformer(p)


def _float(line, name, value):
    try:
        out = float(value)
    except ValueError:
        raise ParseError(line, f"{name} is not a number: {value!r}") from None
    if not math.isfinite(out):
        raise ParseError(line, f"{name} must be finite")
    return out


def read_ltrc_csv(source) -> LtrcSample:
    """Generic ``L,T,delta,cause`` table to an LTRC sample."""
    trunc, time, event, cause = [], [], [], []
    for line, (l, t, d, c) in _rows(_open_text(source), LTRC_HEADER):
        trunc.append(_float(line, "L", l))
        time.append(_float(line, "T", t))
        if d not in ("0", "1"):
            raise ParseError(line, f"delta must be 0 or 1, got {d!r}")
        event.append(d == "1")
        if c == "":
            cause.append(0)
        elif c in ("1", "2"):
            cause.append(int(c))
        else:
            raise ParseError(line, f"cause must be blank, 1 or 2, got {c!r}")
    if not time:
        raise ParseError(2, "no data rows")
    return LtrcSample.from_arrays(np.array(trunc), np.array(time),
                                  np.array(event), np.array(cause))


def write_ltrc_csv(sample: LtrcSample, dest=None) -> str:
    """Serialise ``sample``; floats use ``repr`` so a re-read is exact."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LTRC_HEADER)
    for l, t, d, c in zip(sample.trunc, sample.time, sample.event, sample.cause):
        w.writerow([repr(float(l)), repr(float(t)), int(d), int(c) if c else ""])
    text = buf.getvalue()
    if dest is not None:
        Path(dest).write_text(text, encoding="utf-8")
    return text


def step_csv(fn: StepFunction, value_name: str = "value") -> str:
    """(time, value) table of a step function; first row is the initial value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", value_name])
    for t, v in fn.table():
        w.writerow([repr(t) if math.isfinite(t) else "-inf", repr(v)])
    return buf.getvalue()
