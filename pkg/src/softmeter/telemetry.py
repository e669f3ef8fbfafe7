"""Resource samples, feature normalization, trace CSV I/O and alignment.

A trace is a sequence of resource snapshots taken on a fixed interval grid
(3000 ms by default).  CPU and memory are fractions of machine capacity;
disk and network are operation rates that :func:`normalize` divides by a
configured capacity so every regressor lives in the unit interval.

Trace CSV layout::

    ts_ms,cpu,mem,disk,net[,watts]

with six fractional digits per value, LF line endings and UTF-8 text.  The
``watts`` column is written only when at least one sample carries a PDU
reading; an empty cell means no reading for that interval.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from softmeter.errors import TraceFormatError, TraceValidationError

DEFAULT_INTERVAL_MS = 3000
DEFAULT_DISK_OPS_CAP = 10_000.0
DEFAULT_NET_OPS_CAP = 100_000.0

HEADER = ("ts_ms", "cpu", "mem", "disk", "net")
HEADER_WITH_WATTS = HEADER + ("watts",)

MEM_MODES = ("occupancy", "churn")


def _check_fraction(name, value):
    if not (0.0 <= value <= 1.0):
        raise TraceValidationError(f"{name}={value!r} outside [0, 1]")


@dataclass(frozen=True)
class RawSample:
    """One resource snapshot, optionally paired with the PDU reading
    stamped at the same instant."""

    ts_ms: int
    cpu_frac: float
    mem_frac: float
    disk_ops: float
    net_ops: float
    watts: float | None = None

    def __post_init__(self):
        if self.ts_ms < 0:
            raise TraceValidationError(f"negative timestamp {self.ts_ms}")
        _check_fraction("cpu_frac", self.cpu_frac)
        _check_fraction("mem_frac", self.mem_frac)
        if not (self.disk_ops >= 0.0 and math.isfinite(self.disk_ops)):
            raise TraceValidationError(f"disk_ops={self.disk_ops!r} must be >= 0")
        if not (self.net_ops >= 0.0 and math.isfinite(self.net_ops)):
            raise TraceValidationError(f"net_ops={self.net_ops!r} must be >= 0")
        if self.watts is not None and not (self.watts > 0.0 and math.isfinite(self.watts)):
            raise TraceValidationError(f"watts={self.watts!r} must be > 0")


@dataclass(frozen=True)
class ResourceCapacity:
    disk_ops_cap: float = DEFAULT_DISK_OPS_CAP
    net_ops_cap: float = DEFAULT_NET_OPS_CAP

    def __post_init__(self):
        if not (self.disk_ops_cap > 0 and self.net_ops_cap > 0):
            raise TraceValidationError("resource capacities must be strictly positive")


UNIT_CAPS = ResourceCapacity(1.0, 1.0)


@dataclass(frozen=True)
class FeatureVector:
    cpu: float = 0.0
    mem: float = 0.0
    disk: float = 0.0
    net: float = 0.0

    def __post_init__(self):
        for name in ("cpu", "mem", "disk", "net"):
            _check_fraction(name, getattr(self, name))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.mem, self.disk, self.net)

    @classmethod
    def clamped(cls, cpu, mem, disk, net) -> "FeatureVector":
        """Build a vector, clipping each component into [0, 1]."""
        return cls(*(min(max(float(v), 0.0), 1.0) for v in (cpu, mem, disk, net)))


@dataclass(frozen=True)
class TraceSeries:
    interval_ms: int = DEFAULT_INTERVAL_MS
    samples: tuple[RawSample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.interval_ms <= 0:
            raise TraceValidationError(f"interval_ms must be positive, got {self.interval_ms}")
        check_grid([s.ts_ms for s in self.samples], self.interval_ms)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def has_watts(self) -> bool:
        return any(s.watts is not None for s in self.samples)


@dataclass(frozen=True)
class PduReading:
    """Average active power over the window that ends at ``ts_ms``."""

    ts_ms: int
    watts: float
    window_ms: int = DEFAULT_INTERVAL_MS

    def __post_init__(self):
        if not (self.watts > 0.0 and math.isfinite(self.watts)):
            raise TraceValidationError(f"PDU reading must be > 0 W, got {self.watts!r}")


@dataclass(frozen=True)
class AlignedSeries:
    rows: tuple[tuple[FeatureVector, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        for _, watts in self.rows:
            if not watts > 0.0:
                raise TraceValidationError(f"aligned watts must be > 0, got {watts!r}")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def features(self) -> list[FeatureVector]:
        return [f for f, _ in self.rows]

    @property
    def watts(self) -> list[float]:
        return [w for _, w in self.rows]


def check_grid(timestamps: Sequence[int], interval_ms: int) -> None:
    for i in range(1, len(timestamps)):
        step = timestamps[i] - timestamps[i - 1]
        if step <= 0:
            raise TraceValidationError(
                f"timestamps not strictly increasing at sample {i}: "
                f"{timestamps[i - 1]} -> {timestamps[i]}"
            )
        if step != interval_ms:
            raise TraceValidationError(
                f"sample {i} is {step} ms after its predecessor, expected {interval_ms}"
            )


def normalize(raw: RawSample, caps: ResourceCapacity) -> FeatureVector:
    return FeatureVector(
        cpu=raw.cpu_frac,
        mem=raw.mem_frac,
        disk=min(raw.disk_ops / caps.disk_ops_cap, 1.0),
        net=min(raw.net_ops / caps.net_ops_cap, 1.0),
    )


def feature_series(
    series: TraceSeries | Iterable[RawSample],
    caps: ResourceCapacity,
    mem_mode: str = "occupancy",
) -> list[tuple[int, FeatureVector]]:
    """Normalize a whole trace.

    ``mem_mode="churn"`` replaces the memory occupancy with its absolute
    change since the previous interval (0 for the first sample).
    """
    if mem_mode not in MEM_MODES:
        raise ValueError(f"mem_mode must be one of {MEM_MODES}, got {mem_mode!r}")
    out = []
    prev_mem = None
    for raw in series:
        f = normalize(raw, caps)
        if mem_mode == "churn":
            churn = 0.0 if prev_mem is None else abs(raw.mem_frac - prev_mem)
            prev_mem = raw.mem_frac
            f = FeatureVector(f.cpu, churn, f.disk, f.net)
        out.append((raw.ts_ms, f))
    return out


def power_readings(series: TraceSeries) -> list[PduReading]:
    """PDU readings carried in the trace's ``watts`` column."""
    return [
        PduReading(s.ts_ms, s.watts, series.interval_ms)
        for s in series.samples
        if s.watts is not None
    ]


def align(
    features: Sequence[tuple[int, FeatureVector]],
    power: Sequence[PduReading],
    lag_intervals: int = 0,
    interval_ms: int = DEFAULT_INTERVAL_MS,
) -> AlignedSeries:
    """Pair the features at ``t`` with the PDU reading at
    ``t + lag_intervals * interval_ms``; rows without a partner are dropped."""
    if lag_intervals < 0:
        raise ValueError("lag_intervals must be >= 0")
    by_ts = {p.ts_ms: p.watts for p in power}
    shift = lag_intervals * interval_ms
    rows = []
    for ts, f in features:
        watts = by_ts.get(ts + shift)
        if watts is not None:
            rows.append((f, watts))
    return AlignedSeries(rows)


# -- CSV ------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def format_row(ts_ms, values, watts=None, with_watts=False) -> str:
    cells = [str(int(ts_ms))] + [_fmt(v) for v in values]
    if with_watts:
        cells.append("" if watts is None else _fmt(watts))
    return ",".join(cells)


def parse_row(line: str, lineno: int, with_watts: bool):
    """Parse one data row into ``(ts_ms, (cpu, mem, disk, net), watts)``."""
    cells = line.rstrip("\r\n").split(",")
    expected = len(HEADER_WITH_WATTS) if with_watts else len(HEADER)
    if len(cells) != expected:
        raise TraceFormatError(f"expected {expected} columns, found {len(cells)}", lineno)
    try:
        ts = int(cells[0])
        values = tuple(float(c) for c in cells[1:5])
        watts = None
        if with_watts and cells[5] != "":
            watts = float(cells[5])
    except ValueError as exc:
        raise TraceFormatError(f"unparsable field ({exc})", lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise TraceFormatError("non-finite value", lineno)
    return ts, values, watts


def parse_header(line: str) -> bool:
    """Return whether the header carries a watts column."""
    cells = tuple(line.rstrip("\r\n").split(","))
    if cells == HEADER_WITH_WATTS:
        return True
    if cells == HEADER:
        return False
    raise TraceFormatError(f"unexpected header {line.rstrip()!r}", 1)


def iter_rows(lines: Iterable[str]) -> Iterator[tuple[int, int, tuple, float | None]]:
    """Yield ``(lineno, ts_ms, values, watts)`` for every data row."""
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise TraceFormatError("missing header", 1) from None
    with_watts = parse_header(header)
    for lineno, line in enumerate(it, start=2):
        if not line.strip():
            continue
        ts, values, watts = parse_row(line, lineno, with_watts)
        yield lineno, ts, values, watts


def _to_sample(lineno, ts, values, watts) -> RawSample:
    try:
        return RawSample(ts, *values, watts=watts)
    except TraceValidationError as exc:
        raise TraceFormatError(str(exc), lineno) from None


def read_trace(path, interval_ms: int | None = None) -> TraceSeries:
    """Load a trace CSV.

    The interval is taken from ``interval_ms`` when given, otherwise from
    the spacing of the first two rows (default 3000 ms for shorter files).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        samples = [_to_sample(*row) for row in iter_rows(fh)]
    if interval_ms is None:
        if len(samples) >= 2 and samples[1].ts_ms > samples[0].ts_ms:
            interval_ms = samples[1].ts_ms - samples[0].ts_ms
        else:
            interval_ms = DEFAULT_INTERVAL_MS
    return TraceSeries(interval_ms, samples)


def write_trace(series: TraceSeries, path) -> None:
    with_watts = series.has_watts
    header = HEADER_WITH_WATTS if with_watts else HEADER
    lines = [",".join(header)]
    for s in series.samples:
        lines.append(
            format_row(
                s.ts_ms,
                (s.cpu_frac, s.mem_frac, s.disk_ops, s.net_ops),
                s.watts,
                with_watts,
            )
        )
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
