"""Central collector for agent reports.

Agents send one line per interval::

    RPT <host_id> <ts_ms> <cpu> <mem> <disk> <net> [<watts>]

and the controller answers ``OK``, ``OK dup`` (already stored, ignored) or
``ERR <code>``.  Records are appended to ``<store>/<host_id>.csv`` in the
trace CSV layout; an in-memory index, rebuilt on startup, serves
time-ordered range queries.
"""

from __future__ import annotations

import bisect
import logging
import math
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from softmeter.errors import ProtocolError, TraceFormatError, TraceValidationError
from softmeter.netio import LineServer, request_lines
from softmeter.telemetry import HEADER_WITH_WATTS, FeatureVector, format_row, iter_rows

log = logging.getLogger(__name__)

HOST_ID_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.-]*")


@dataclass(frozen=True)
class Record:
    host_id: str
    ts_ms: int
    features: FeatureVector
    watts: float | None = None

    def __post_init__(self):
        if not HOST_ID_RE.fullmatch(self.host_id):
            raise ProtocolError(f"invalid host id {self.host_id!r}")
        if self.ts_ms < 0:
            raise ProtocolError(f"negative timestamp {self.ts_ms}")
        if self.watts is not None and not (self.watts > 0 and math.isfinite(self.watts)):
            raise ProtocolError(f"watts must be > 0, got {self.watts!r}")


def encode_record(r: Record) -> str:
    fields = ["RPT", r.host_id, str(r.ts_ms)] + [f"{v:.6f}" for v in r.features.as_tuple()]
    if r.watts is not None:
        fields.append(f"{r.watts:.6f}")
    return " ".join(fields)


def decode_record(line: str) -> Record:
    parts = line.split()
    if not parts or parts[0] != "RPT":
        raise ProtocolError("expected RPT message")
    if len(parts) not in (7, 8):
        raise ProtocolError(f"RPT takes 6 or 7 fields, got {len(parts) - 1}")
    try:
        ts = int(parts[2])
        values = [float(p) for p in parts[3:]]
    except ValueError:
        raise ProtocolError(f"non-numeric field in {line.strip()!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ProtocolError("non-finite field")
    try:
        features = FeatureVector(*values[:4])
    except TraceValidationError as exc:
        raise ProtocolError(str(exc)) from None
    watts = values[4] if len(values) == 5 else None
    return Record(parts[1], ts, features, watts)


class _HostSeries:
    def __init__(self, path: Path):
        self.path = path
        self.lock = threading.Lock()
        self.ts: list[int] = []
        self.records: list[Record] = []

    def insert(self, record: Record) -> None:
        i = bisect.bisect_left(self.ts, record.ts_ms)
        self.ts.insert(i, record.ts_ms)
        self.records.insert(i, record)

    def contains(self, ts_ms: int) -> bool:
        i = bisect.bisect_left(self.ts, ts_ms)
        return i < len(self.ts) and self.ts[i] == ts_ms


class Store:
    """Append-only per-host record logs with an in-memory time index.

    Appends for one host are serialized; a record becomes visible to
    queries only after its line has been written (and fsynced when
    ``fsync`` is set).
    """

    def __init__(self, directory, fsync: bool = True):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._hosts: dict[str, _HostSeries] = {}
        self._lock = threading.Lock()
        for path in sorted(self.directory.glob("*.csv")):
            if HOST_ID_RE.fullmatch(path.stem):
                self._load(path)

    def _load(self, path: Path) -> None:
        series = _HostSeries(path)
        self._hosts[path.stem] = series
        _drop_torn_tail(path)
        if path.stat().st_size == 0:
            return
        with open(path, encoding="utf-8", newline="") as fh:
            try:
                for lineno, ts, values, watts in iter_rows(fh):
                    if series.contains(ts):
                        continue
                    try:
                        record = Record(path.stem, ts, FeatureVector(*values), watts)
                    except (ProtocolError, TraceValidationError) as exc:
                        raise TraceFormatError(str(exc), lineno) from None
                    series.insert(record)
            except TraceFormatError as exc:
                raise TraceFormatError(f"{path}: {exc}") from None

    def _series(self, host_id: str, create: bool) -> _HostSeries | None:
        with self._lock:
            series = self._hosts.get(host_id)
            if series is None and create:
                series = _HostSeries(self.directory / f"{host_id}.csv")
                self._hosts[host_id] = series
            return series

    def ingest(self, record: Record) -> str:
        series = self._series(record.host_id, create=True)
        with series.lock:
            if series.contains(record.ts_ms):
                return "OK dup"
            line = format_row(
                record.ts_ms, record.features.as_tuple(), record.watts, with_watts=True
            )
            fresh = not series.path.exists() or series.path.stat().st_size == 0
            with open(series.path, "a", encoding="utf-8", newline="\n") as fh:
                if fresh:
                    fh.write(",".join(HEADER_WITH_WATTS) + "\n")
                fh.write(line + "\n")
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            series.insert(record)
        return "OK"

    def query_range(self, host_id: str, t0_ms: int, t1_ms: int) -> list[Record]:
        """Records with ``t0_ms <= ts < t1_ms`` in time order."""
        if t0_ms > t1_ms:
            raise ValueError("t0_ms must not exceed t1_ms")
        series = self._series(host_id, create=False)
        if series is None:
            return []
        with series.lock:
            lo = bisect.bisect_left(series.ts, t0_ms)
            hi = bisect.bisect_left(series.ts, t1_ms)
            return series.records[lo:hi]

    def all_records(self, host_id: str) -> list[Record]:
        series = self._series(host_id, create=False)
        if series is None:
            return []
        with series.lock:
            return list(series.records)

    def hosts(self) -> list[str]:
        with self._lock:
            return sorted(self._hosts)

    def __len__(self):
        with self._lock:
            hosts = list(self._hosts.values())
        return sum(len(s.ts) for s in hosts)


def _drop_torn_tail(path: Path) -> None:
    """Truncate a trailing partial line left by an interrupted append."""
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            log.warning("%s: dropping %d byte torn record", path, len(data) - cut)
            fh.truncate(cut)


class Controller:
    def __init__(self, store: Store):
        self.store = store

    def ingest(self, record: Record) -> str:
        try:
            return self.store.ingest(record)
        except OSError:
            log.exception("append failed for %s", record.host_id)
            return "ERR store"

    def handle_line(self, line: str) -> str:
        try:
            record = decode_record(line)
        except ProtocolError as exc:
            log.debug("rejected %r: %s", line, exc)
            return "ERR bad-request"
        return self.ingest(record)

    def serve(self, address) -> LineServer:
        return LineServer(address, self.handle_line)


def send_reports(address, records) -> list[str]:
    """Agent side: push records over one connection, return the acks."""
    return request_lines(address, [encode_record(r) for r in records])
