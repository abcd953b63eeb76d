"""Observation model, risk sets and counting processes for LTRC samples.

A stored row is always an *observed* unit: its entry (truncation) time ``L``
is strictly below its exit time ``T = min(X, C)``.  Units truncated away never
enter a sample, so the truncation indicator is implicitly 1 for every row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptySample, InvariantViolation

CAUSES = (1, 2)


@dataclass(frozen=True)
class LtrcObservation:
    """One observed unit.

    ``cause`` is 1 or 2 for a failure whose cause was recorded, otherwise
    ``None``.
    """

    trunc_time: float
    obs_time: float
    event: bool
    cause: int | None = None


def _row_fields(row, i):
    if isinstance(row, LtrcObservation):
        return row.trunc_time, row.obs_time, row.event, row.cause
    if isinstance(row, Mapping):
        try:
            if "obs_time" in row:
                return (row.get("trunc_time", 0.0), row["obs_time"],
                        row["event"], row.get("cause"))
            return row.get("L", 0.0), row["T"], row["delta"], row.get("cause")
        except KeyError as exc:
            raise InvariantViolation(i, f"missing field {exc.args[0]!r}") from None
    try:
        fields = tuple(row)
    except TypeError:
        raise InvariantViolation(i, f"unrecognised record {row!r}") from None
    if len(fields) == 3:
        return fields + (None,)
    if len(fields) == 4:
        return fields
    raise InvariantViolation(i, f"expected 3 or 4 fields, got {len(fields)}")


def _check_row(i, trunc, time, event, cause):
    try:
        trunc = float(trunc)
        time = float(time)
    except (TypeError, ValueError):
        raise InvariantViolation(i, "times must be real numbers") from None
    if not (math.isfinite(trunc) and math.isfinite(time)):
        raise InvariantViolation(i, "times must be finite")
    if time <= 0:
        raise InvariantViolation(i, f"obs_time must be positive (T={time})")
    if trunc < 0:
        raise InvariantViolation(i, f"trunc_time must be nonnegative (L={trunc})")
    if time <= trunc:
        raise InvariantViolation(i, f"obs_time must exceed trunc_time (T={time} <= L={trunc})")
    if isinstance(event, (bool, np.bool_)):
        event = bool(event)
    elif event in (0, 1):
        event = bool(event)
    else:
        raise InvariantViolation(i, f"event must be 0/1 or boolean, got {event!r}")
    if cause is not None and not (isinstance(cause, float) and math.isnan(cause)):
        if not event:
            raise InvariantViolation(i, "censored row carries a cause label")
        if cause not in CAUSES:
            raise InvariantViolation(i, f"cause must be 1 or 2, got {cause!r}")
        cause = int(cause)
    else:
        cause = 0
    return trunc, time, event, cause


class LtrcSample:
    """Validated, immutable collection of LTRC observations.

    Data are held column-wise in read-only numpy arrays; ``cause`` uses 0 for
    "no label".  Build instances with :func:`validate_sample` or
    :meth:`from_arrays` rather than calling the constructor directly.
    """

    def __init__(self, trunc, time, event, cause):
        self.trunc = _frozen(np.asarray(trunc, dtype=float))
        self.time = _frozen(np.asarray(time, dtype=float))
        self.event = _frozen(np.asarray(event, dtype=bool))
        self.cause = _frozen(np.asarray(cause, dtype=np.int8))
        self.sorted_index = _frozen(np.argsort(self.time, kind="stable"))

    @classmethod
    def from_arrays(cls, trunc, time, event, cause=None) -> "LtrcSample":
        """Vectorised construction with the same checks as :func:`validate_sample`."""
        time = np.asarray(time, dtype=float)
        n = time.shape[0] if time.ndim else 0
        if n == 0:
            raise EmptySample()
        trunc = np.zeros(n) if trunc is None else np.asarray(trunc, dtype=float)
        event = np.asarray(event)
        if cause is None:
            cause = np.zeros(n, dtype=np.int8)
        cause = np.asarray(cause)
        if not (trunc.shape == time.shape == event.shape == cause.shape):
            raise InvariantViolation(0, "column lengths differ")
        bad = ~np.isfinite(time) | ~np.isfinite(trunc) | (time <= 0) | (trunc < 0) | (time <= trunc)
        bad |= ~np.isin(event, (0, 1))
        bad |= ~np.isin(cause, (0, 1, 2))
        bad |= (cause != 0) & (event == 0)
        if bad.any():
            i = int(np.argmax(bad))
            c = None if cause[i] == 0 else cause[i]
            _check_row(i, trunc[i], time[i], event[i], c)
            raise InvariantViolation(i, "invalid record")
        return cls(trunc, time, event.astype(bool), cause)

    def __len__(self):
        return self.time.shape[0]

    def __iter__(self):
        return iter(self.observations)

    def __eq__(self, other):
        if not isinstance(other, LtrcSample):
            return NotImplemented
        return (len(self) == len(other)
                and np.array_equal(self.trunc, other.trunc)
                and np.array_equal(self.time, other.time)
                and np.array_equal(self.event, other.event)
                and np.array_equal(self.cause, other.cause))

    def __repr__(self):
        return (f"LtrcSample(n={len(self)}, failures={self.n_failures}, "
                f"censored={self.n_censored})")

    @cached_property
    def observations(self) -> tuple[LtrcObservation, ...]:
        return tuple(
            LtrcObservation(float(l), float(t), bool(e), int(c) if c else None)
            for l, t, e, c in zip(self.trunc, self.time, self.event, self.cause)
        )

    @property
    def n_failures(self) -> int:
        return int(self.event.sum())

    @property
    def n_censored(self) -> int:
        return len(self) - self.n_failures

    @property
    def has_causes(self) -> bool:
        """True when every failure row carries a cause label."""
        return bool(np.all(self.cause[self.event] != 0))

    @property
    def truncated(self) -> bool:
        return bool(np.any(self.trunc > 0))

    # sorted views used by the counting functions
    @cached_property
    def _time_sorted(self):
        return np.sort(self.time)

    @cached_property
    def _trunc_sorted(self):
        return np.sort(self.trunc)

    @cached_property
    def _fail_sorted(self):
        return np.sort(self.time[self.event])

    @cached_property
    def _cens_sorted(self):
        return np.sort(self.time[~self.event])

    def take(self, index) -> "LtrcSample":
        """Row subset or reordering (used by permutation checks)."""
        index = np.asarray(index)
        return LtrcSample(self.trunc[index], self.time[index],
                          self.event[index], self.cause[index])

    def relabel_causes(self) -> "LtrcSample":
        """Copy with cause labels 1 and 2 swapped on every failure row."""
        swapped = np.where(self.cause == 0, 0, 3 - self.cause)
        return LtrcSample(self.trunc, self.time, self.event, swapped)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def validate_sample(rows: Iterable) -> LtrcSample:
    """Check raw records and build an :class:`LtrcSample`.

    Records may be :class:`LtrcObservation` instances, tuples
    ``(L, T, event[, cause])``, or mappings keyed either
    ``trunc_time/obs_time/event/cause`` or ``L/T/delta/cause``.  An existing
    sample is accepted too, which makes the function idempotent.
    """
    if isinstance(rows, LtrcSample):
        rows = rows.observations
    rows = list(rows)
    if not rows:
        raise EmptySample()
    cols = [_check_row(i, *_row_fields(r, i)) for i, r in enumerate(rows)]
    trunc, time, event, cause = (np.array(c) for c in zip(*cols))
    return LtrcSample(trunc, time, event, cause)


def risk_set_size(sample: LtrcSample, t):
    """Y(t) = #{i : L_i <= t <= T_i}; accepts a scalar or an array of times."""
    t_arr = np.asarray(t, dtype=float)
    n = len(sample)
    at_or_after = n - np.searchsorted(sample._time_sorted, t_arr, side="left")
    # every unit with L > t also has T > t, so it is removed exactly once
    not_entered = n - np.searchsorted(sample._trunc_sorted, t_arr, side="right")
    out = at_or_after - not_entered
    return int(out) if out.ndim == 0 else out


def failure_count(sample: LtrcSample, t):
    """N(t) = #{i : T_i <= t, failure}."""
    out = np.searchsorted(sample._fail_sorted, np.asarray(t, dtype=float), side="right")
    return int(out) if np.ndim(out) == 0 else out


def censor_count(sample: LtrcSample, t):
    """N^c(t) = #{i : T_i <= t, censored}."""
    out = np.searchsorted(sample._cens_sorted, np.asarray(t, dtype=float), side="right")
    return int(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function.

    ``values[i]`` holds on ``[jump_times[i], jump_times[i+1])`` and
    ``initial_value`` before the first jump.
    """

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0

    def __post_init__(self):
        jt = _frozen(np.asarray(self.jump_times, dtype=float).reshape(-1))
        vals = _frozen(np.asarray(self.values, dtype=float).reshape(-1))
        if jt.shape != vals.shape:
            raise ValueError("jump_times and values must have equal length")
        if jt.size > 1 and not np.all(np.diff(jt) > 0):
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    @cached_property
    def _padded(self):
        return np.concatenate([[self.initial_value], self.values])

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        out = self._padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, t):
        """f(t-), the value just before ``t``."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="left")
        out = self._padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    def __len__(self):
        return self.jump_times.size

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (self.initial_value == other.initial_value
                and np.array_equal(self.jump_times, other.jump_times)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def table(self) -> list[tuple[float, float]]:
        """(time, value) rows; the first row carries the initial value at -inf."""
        rows = [(-math.inf, self.initial_value)]
        rows.extend(zip(self.jump_times.tolist(), self.values.tolist()))
        return rows
