"""Simulated host power plant and PDU.

A hidden linear ground-truth model turns features into instantaneous watts
(plus seeded Gaussian noise).  The simulated PDU samples that power on a
fine sub-grid and publishes, at each window boundary, the arithmetic mean
over the trailing window, so its readings trail the load by one window.

A small line protocol stands in for the vendor SNMP agent::

    GET power.active <outlet>   ->   VAL <watts, 2 decimals>
                                     ERR no-such-outlet | ERR bad-request
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from softmeter._kv import parse_kv
from softmeter.errors import ConfigError
from softmeter.netio import LineServer
from softmeter.telemetry import (
    DEFAULT_INTERVAL_MS,
    FeatureVector,
    PduReading,
    ResourceCapacity,
    TraceSeries,
    feature_series,
)

DEFAULT_SUBSTEP_MS = 100
MIN_WATTS = 1.0

CONFIG_KEYS = (
    "alpha_w",
    "beta_cpu_w",
    "beta_mem_w",
    "beta_disk_w",
    "beta_net_w",
    "noise_sigma_w",
    "seed",
    "window_ms",
)


@dataclass(frozen=True)
class GroundTruthModel:
    alpha_w: float = 100.0
    beta_cpu_w: float = 90.0
    beta_mem_w: float = 40.0
    beta_disk_w: float = 20.0
    beta_net_w: float = 15.0
    noise_sigma_w: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.alpha_w > 0:
            raise ConfigError("alpha_w must be > 0")
        if min(self.betas) < 0:
            raise ConfigError("beta coefficients must be >= 0")
        if not self.noise_sigma_w >= 0:
            raise ConfigError("noise_sigma_w must be >= 0")

    @property
    def betas(self) -> tuple[float, float, float, float]:
        return (self.beta_cpu_w, self.beta_mem_w, self.beta_disk_w, self.beta_net_w)

    def noiseless(self) -> "GroundTruthModel":
        return replace(self, noise_sigma_w=0.0)

    def formula(self, f: FeatureVector) -> float:
        return self.alpha_w + sum(b * x for b, x in zip(self.betas, f.as_tuple()))


def instantaneous_power(
    model: GroundTruthModel, f: FeatureVector, rng: np.random.Generator | None = None
) -> float:
    """Formula value plus one noise draw, floored at 1 W.

    Without ``rng`` a generator seeded from ``model.seed`` is used, so
    repeated calls see the same draw.
    """
    watts = model.formula(f)
    if model.noise_sigma_w > 0:
        if rng is None:
            rng = np.random.default_rng(model.seed)
        watts += float(rng.normal(0.0, model.noise_sigma_w))
    return max(watts, MIN_WATTS)


def interval_average(
    instant: Sequence[tuple[int, float]], window_ms: int = DEFAULT_INTERVAL_MS, origin_ms: int = 0
) -> list[PduReading]:
    """Trailing-window means of instantaneous samples.

    Windows are ``[T - window_ms, T)`` with boundaries ``T`` on the grid
    ``origin_ms + k * window_ms``.  A reading is stamped at ``T`` and is
    emitted only when its window holds at least one sample; the input is
    taken to cover every window it touches.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    readings = []
    bucket = None
    total = 0.0
    count = 0
    for ts, watts in instant:
        k = (ts - origin_ms) // window_ms
        if bucket is not None and k < bucket:
            raise ValueError("instantaneous samples must be time-ordered")
        if k != bucket:
            if count:
                readings.append(_reading(bucket, total, count, window_ms, origin_ms))
            bucket, total, count = k, 0.0, 0
        total += watts
        count += 1
    if count:
        readings.append(_reading(bucket, total, count, window_ms, origin_ms))
    return readings


def _reading(bucket, total, count, window_ms, origin_ms):
    return PduReading(origin_ms + (bucket + 1) * window_ms, total / count, window_ms)


class PowerPlant:
    """Host whose draw follows ``model`` for snapshot features held
    constant across each trace interval."""

    def __init__(self, model: GroundTruthModel, substep_ms: int = DEFAULT_SUBSTEP_MS):
        if substep_ms <= 0:
            raise ValueError("substep_ms must be positive")
        self.model = model
        self.substep_ms = substep_ms
        self.rng = np.random.default_rng(model.seed)

    def instantaneous(
        self, features: Iterable[tuple[int, FeatureVector]], interval_ms: int
    ) -> list[tuple[int, float]]:
        if interval_ms % self.substep_ms:
            raise ValueError("interval_ms must be a multiple of substep_ms")
        steps = interval_ms // self.substep_ms
        out = []
        for ts, f in features:
            base = self.model.formula(f)
            if self.model.noise_sigma_w > 0:
                noise = self.rng.normal(0.0, self.model.noise_sigma_w, steps)
            else:
                noise = np.zeros(steps)
            for j in range(steps):
                out.append((ts + j * self.substep_ms, max(base + float(noise[j]), MIN_WATTS)))
        return out


def simulate_readings(
    series: TraceSeries,
    model: GroundTruthModel = GroundTruthModel(),
    caps: ResourceCapacity = ResourceCapacity(),
    window_ms: int | None = None,
    substep_ms: int = DEFAULT_SUBSTEP_MS,
) -> list[PduReading]:
    """PDU readings produced while the host runs ``series``."""
    if not series.samples:
        return []
    window_ms = window_ms or series.interval_ms
    plant = PowerPlant(model, substep_ms)
    instant = plant.instantaneous(feature_series(series, caps), series.interval_ms)
    return interval_average(instant, window_ms, origin_ms=series.samples[0].ts_ms)


def attach_power(
    series: TraceSeries,
    model: GroundTruthModel = GroundTruthModel(),
    caps: ResourceCapacity = ResourceCapacity(),
    window_ms: int | None = None,
    substep_ms: int = DEFAULT_SUBSTEP_MS,
) -> TraceSeries:
    """Copy of ``series`` whose ``watts`` column holds the PDU reading
    published at each row's timestamp.

    The first row has no completed window and stays empty.  Readings are
    rounded to six decimals to match the trace format.
    """
    readings = {
        r.ts_ms: r.watts for r in simulate_readings(series, model, caps, window_ms, substep_ms)
    }
    samples = []
    for s in series.samples:
        watts = readings.get(s.ts_ms)
        samples.append(replace(s, watts=None if watts is None else round(watts, 6)))
    return TraceSeries(series.interval_ms, samples)


def load_config(path) -> tuple[GroundTruthModel, int]:
    """Read a PDU simulator config; absent keys keep their defaults."""
    with open(path, encoding="utf-8") as fh:
        values = parse_kv(fh.read(), ConfigError, CONFIG_KEYS)
    window_ms = int(values.pop("window_ms", DEFAULT_INTERVAL_MS))
    if window_ms <= 0:
        raise ConfigError("window_ms must be positive")
    if "seed" in values:
        if values["seed"] != math.floor(values["seed"]):
            raise ConfigError("seed must be an integer")
        values["seed"] = int(values["seed"])
    return GroundTruthModel(**values), window_ms


def write_config(model: GroundTruthModel, path, window_ms: int = DEFAULT_INTERVAL_MS) -> None:
    lines = [
        f"alpha_w={model.alpha_w!r}",
        f"beta_cpu_w={model.beta_cpu_w!r}",
        f"beta_mem_w={model.beta_mem_w!r}",
        f"beta_disk_w={model.beta_disk_w!r}",
        f"beta_net_w={model.beta_net_w!r}",
        f"noise_sigma_w={model.noise_sigma_w!r}",
        f"seed={model.seed}",
        f"window_ms={window_ms}",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class PduAgent:
    """Latest-reading table per outlet plus the query handler.

    One producer calls :meth:`publish`; any number of clients query.
    Queries never change state.
    """

    def __init__(self, outlets: Iterable[str | int]):
        self._latest: dict[str, PduReading | None] = {str(o): None for o in outlets}
        self._lock = threading.Lock()

    @property
    def outlets(self) -> tuple[str, ...]:
        return tuple(self._latest)

    def publish(self, outlet, reading: PduReading) -> None:
        key = str(outlet)
        with self._lock:
            if key not in self._latest:
                raise KeyError(f"outlet {key} not configured")
            self._latest[key] = reading

    def latest(self, outlet) -> PduReading | None:
        with self._lock:
            return self._latest.get(str(outlet))

    def handle_query(self, request_line: str) -> str:
        parts = request_line.strip().split()
        if len(parts) != 3 or parts[0] != "GET" or parts[1] != "power.active":
            return "ERR bad-request"
        outlet = parts[2]
        with self._lock:
            if outlet not in self._latest:
                return "ERR no-such-outlet"
            reading = self._latest[outlet]
        if reading is None:
            return "ERR no-reading"
        return f"VAL {reading.watts:.2f}"

    def serve(self, address) -> LineServer:
        return LineServer(address, self.handle_query)


def replay(
    agent: PduAgent,
    outlet,
    readings: Sequence[PduReading],
    speedup: float = 1.0,
    stop: threading.Event | None = None,
    loop: bool = False,
) -> None:
    """Publish ``readings`` to ``outlet`` paced by their timestamps."""
    stop = stop or threading.Event()
    while not stop.is_set():
        prev = None
        for r in readings:
            if prev is not None:
                if stop.wait((r.ts_ms - prev) / 1000.0 / speedup):
                    return
            agent.publish(outlet, r)
            prev = r.ts_ms
        if not loop or not readings:
            return
