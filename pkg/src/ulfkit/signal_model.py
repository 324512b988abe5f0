"""Core data types: sampled realizations, frequency grids, process
complexes and event series, plus CSV ingestion and event binning.

All containers are immutable after construction and safe to share between
threads; every operation in this module is a pure function.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, FormatError

SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0
# Calendar formatting below uses the 365-day year of the harmonic tables.
SECONDS_PER_YEAR = 365.0 * SECONDS_PER_DAY


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got shape {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real-valued realization.

    Parameters
    ----------
    values : array-like of float
        Samples; must be non-empty and finite.
    dt : float
        Sampling interval in seconds, > 0.
    t0 : float
        Epoch of the first sample, seconds.
    label : str
        Channel name used in reports.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0
    label: str = ""

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.size == 0:
            raise ValueError("time series must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("time series contains non-finite samples")
        if not (self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        """Time spanned by the samples, (len - 1) * dt."""
        return (self.values.size - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.values.size) * self.dt

    def with_values(self, values, label: str | None = None) -> "TimeSeries":
        """Same axis, new samples (used by the conditioning steps)."""
        return TimeSeries(values, self.dt, self.t0,
                          self.label if label is None else label)


@dataclass(frozen=True)
class FrequencyGrid:
    """One-sided frequency axis of a length-``2 * n_bins`` transform.

    ``fmax = df * n_bins`` holds exactly; the axis carries ``n_bins + 1``
    points, 0 (DC) through fmax (Nyquist) inclusive.
    """

    df: float
    fmax: float
    n_bins: int

    def __post_init__(self):
        if not (self.df > 0):
            raise ValueError(f"df must be > 0, got {self.df}")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if not math.isclose(self.fmax, self.df * self.n_bins, rel_tol=1e-12):
            raise ValueError("fmax must equal df * n_bins")

    @property
    def frequencies(self) -> np.ndarray:
        """All one-sided bin frequencies, DC and Nyquist included."""
        return np.arange(self.n_bins + 1) * self.df

    def index_of(self, frequency: float) -> int:
        """Nearest bin index for a frequency inside [0, fmax]."""
        if frequency < -0.5 * self.df or frequency > self.fmax + 0.5 * self.df:
            raise ValueError(f"frequency {frequency} outside grid [0, {self.fmax}]")
        return int(round(frequency / self.df))


def frequency_grid(n_fft: int, dt: float) -> FrequencyGrid:
    """Grid of an ``n_fft``-point transform of a series sampled at ``dt``.

    fmax = 1 / (2 dt), df = 1 / (n_fft dt), n_bins = n_fft / 2.
    """
    if n_fft < 4 or not is_power_of_two(n_fft):
        raise ValueError(f"n_fft must be a power of two >= 4, got {n_fft}")
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    fmax = 1.0 / (2.0 * dt)
    n_bins = n_fft // 2
    return FrequencyGrid(df=fmax / n_bins, fmax=fmax, n_bins=n_bins)


def period_of(frequency: float) -> float:
    """Period in seconds of a strictly positive frequency."""
    if not (frequency > 0):
        raise ValueError(f"frequency must be > 0, got {frequency}")
    return 1.0 / frequency


def format_period(seconds: float) -> str:
    """Human-readable period: years above one year, days down to three
    days, hours below that, then minutes and seconds."""
    if not (seconds > 0):
        raise ValueError(f"period must be > 0, got {seconds}")
    if seconds >= SECONDS_PER_YEAR:
        return f"{seconds / SECONDS_PER_YEAR:.5f} yr"
    if seconds >= 3 * SECONDS_PER_DAY:
        return f"{seconds / SECONDS_PER_DAY:.5f} d"
    if seconds >= SECONDS_PER_HOUR:
        return f"{seconds / SECONDS_PER_HOUR:.5f} h"
    if seconds >= 60:
        return f"{seconds / 60:.5f} min"
    return f"{seconds:.6g} s"


@dataclass(frozen=True)
class ProcessComplex:
    """One output realization plus the ordered input realizations that are
    assumed to drive it.

    All members must share the sampling step; they are truncated to the
    common time window on construction (no resampling is ever done).
    """

    output: TimeSeries
    inputs: tuple[TimeSeries, ...]

    def __post_init__(self):
        inputs = tuple(self.inputs)
        if not inputs:
            raise ValueError("a process complex needs at least one input")
        members = (self.output,) + inputs
        dt = self.output.dt
        for s in members[1:]:
            if not math.isclose(s.dt, dt, rel_tol=1e-9):
                raise ValueError(
                    f"sampling steps differ: {s.dt} vs {dt} "
                    f"(channel {s.label!r}); resampling is not supported")
        aligned = _align(members)
        object.__setattr__(self, "output", aligned[0])
        object.__setattr__(self, "inputs", tuple(aligned[1:]))

    @property
    def channels(self) -> tuple[TimeSeries, ...]:
        return (self.output,) + self.inputs

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.channels)

    @property
    def dt(self) -> float:
        return self.output.dt


def _align(members: tuple[TimeSeries, ...]) -> list[TimeSeries]:
    """Truncate all members to the overlapping span; start offsets must be
    integer multiples of dt."""
    dt = members[0].dt
    t_start = max(s.t0 for s in members)
    t_end = min(s.t0 + (len(s) - 1) * s.dt for s in members)
    if t_end < t_start:
        raise ValueError("channels have no overlapping time window")
    aligned = []
    for s in members:
        shift = (t_start - s.t0) / dt
        k0 = int(round(shift))
        if abs(shift - k0) > 1e-6:
            raise ValueError(
                f"channel {s.label!r} start offset is not a multiple of dt")
        n = int(round((t_end - t_start) / dt)) + 1
        aligned.append(TimeSeries(s.values[k0:k0 + n], dt, t_start, s.label))
    return aligned


@dataclass(frozen=True)
class EventSeries:
    """Timestamped event list plus its binned telegraph-wave realization.

    ``mode`` is ``"binary"`` ("event present" / "no event" per bin) or
    ``"count"`` (events per bin).
    """

    timestamps: np.ndarray
    bin_width: float
    mode: str
    realization: TimeSeries

    def __post_init__(self):
        ts = _frozen_array(self.timestamps)
        if np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if self.mode not in ("binary", "count"):
            raise ValueError(f"mode must be 'binary' or 'count', got {self.mode!r}")
        if not math.isclose(self.realization.dt, self.bin_width, rel_tol=1e-12):
            raise ValueError("realization.dt must equal bin_width")
        vals = self.realization.values
        if self.mode == "binary" and not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("binary realization must contain only 0 and 1")
        if self.mode == "count" and (np.any(vals < 0) or np.any(vals != np.round(vals))):
            raise ValueError("count realization must hold non-negative integers")
        object.__setattr__(self, "timestamps", ts)

    @property
    def n_events(self) -> int:
        return self.timestamps.size


def bin_events(timestamps, bin_width: float = SECONDS_PER_HOUR,
               mode: str = "binary",
               span: tuple[float, float] | None = None) -> EventSeries:
    """Bin event epochs onto a uniform grid.

    Bin ``k`` covers ``[t_start + k w, t_start + (k+1) w)``; the span is
    half-open on the right, so an event exactly at ``t_end`` is rejected.
    When ``span`` is omitted it defaults to ``[first event,
    last event + bin_width)``.
    """
    if not (bin_width > 0):
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    if mode not in ("binary", "count"):
        raise ValueError(f"mode must be 'binary' or 'count', got {mode!r}")
    ts = np.sort(np.asarray(timestamps, dtype=float))
    if ts.size == 0:
        raise DegenerateInputError("no events to bin")
    if span is None:
        span = (float(ts[0]), float(ts[-1]) + bin_width)
    t_start, t_end = float(span[0]), float(span[1])
    if t_end <= t_start:
        raise ValueError(f"empty span [{t_start}, {t_end})")
    outside = ts[(ts < t_start) | (ts >= t_end)]
    if outside.size:
        raise ValueError(
            f"{outside.size} event(s) outside span [{t_start}, {t_end}): "
            f"first offender {outside[0]}")
    n_bins = int(math.ceil((t_end - t_start) / bin_width - 1e-9))
    idx = np.floor((ts - t_start) / bin_width).astype(int)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    values = np.minimum(counts, 1.0) if mode == "binary" else counts
    realization = TimeSeries(values, dt=bin_width, t0=t_start, label="events")
    return EventSeries(ts, bin_width, mode, realization)


def _parse_time_cell(cell: str) -> float:
    """Seconds-as-float or ISO-8601; naive stamps are taken as UTC."""
    try:
        return float(cell)
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(cell.strip())
    except ValueError as exc:
        raise FormatError(f"cannot parse time value {cell!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            yield row


def load_series(path) -> list[TimeSeries]:
    """Load one TimeSeries per value column from a CSV file.

    Layout: header row; first column is time (seconds as float, or
    ISO-8601); remaining columns are channels.  The time step must be
    uniform to within 1e-9 relative.  Lines starting with ``#`` are
    skipped, so the toolkit's own CSV reports can be re-read.
    """
    path = Path(path)
    rows = list(_read_rows(path))
    if len(rows) < 3:
        raise FormatError(f"{path}: need a header plus at least two data rows")
    header = rows[0]
    n_cols = len(header)
    if n_cols < 2:
        raise FormatError(f"{path}: need a time column plus at least one channel")
    times = np.empty(len(rows) - 1)
    data = np.empty((len(rows) - 1, n_cols - 1))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != n_cols:
            raise FormatError(f"{path}: row {r} has {len(row)} cells, expected {n_cols}")
        times[r - 1] = _parse_time_cell(row[0])
        for c, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError as exc:
                raise FormatError(
                    f"{path}: row {r}, column {header[c + 1]!r}: "
                    f"not a number: {cell!r}") from exc
            if not math.isfinite(v):
                raise FormatError(
                    f"{path}: row {r}, column {header[c + 1]!r}: non-finite value")
            data[r - 1, c] = v
    dt = times[1] - times[0]
    if not (dt > 0):
        raise FormatError(f"{path}: time column is not increasing at row 2")
    steps = np.diff(times)
    bad = np.nonzero(np.abs(steps - dt) > 1e-9 * abs(dt))[0]
    if bad.size:
        raise FormatError(f"{path}: non-uniform step at row {bad[0] + 2}")
    return [
        TimeSeries(data[:, c], dt=dt, t0=times[0], label=header[c + 1].strip())
        for c in range(n_cols - 1)
    ]


def load_events(path) -> np.ndarray:
    """Load event epochs from a one-column CSV (optionally headed)."""
    path = Path(path)
    epochs = []
    for r, row in enumerate(_read_rows(path)):
        cell = row[0].strip()
        if r == 0:
            try:
                epochs.append(_parse_time_cell(cell))
            except FormatError:
                continue  # header line
        else:
            epochs.append(_parse_time_cell(cell))
    if not epochs:
        raise FormatError(f"{path}: no event timestamps found")
    arr = np.sort(np.asarray(epochs, dtype=float))
    return arr
