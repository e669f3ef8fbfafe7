"""Deterministic synthetic workload traces.

Each generator reproduces the qualitative resource signature of one
benchmark family (compression bound by CPU or by memory, disk stress,
loopback networking) plus an idle baseline.  Waveforms are a sinusoid or
surge schedule with seeded Gaussian noise; the envelopes below are
calibration choices since only plotted shapes are available to match.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from softmeter.telemetry import (
    DEFAULT_INTERVAL_MS,
    RawSample,
    ResourceCapacity,
    TraceSeries,
    feature_series,
)


class WorkloadKind(enum.Enum):
    CpuCompress = "cpu-compress"
    MemCompress = "mem-compress"
    DiskStress = "disk-stress"
    NetLoopback = "net-loopback"
    Idle = "idle"

    @classmethod
    def parse(cls, name: str) -> "WorkloadKind":
        for kind in cls:
            if name in (kind.value, kind.name, kind.name.lower()):
                return kind
        raise ValueError(f"unknown workload kind {name!r}")


BENCHMARK_KINDS = (
    WorkloadKind.CpuCompress,
    WorkloadKind.MemCompress,
    WorkloadKind.DiskStress,
    WorkloadKind.NetLoopback,
)

_KIND_SALT = {kind: i for i, kind in enumerate(WorkloadKind)}


def _wave(rng, t, mean, amplitude, min_period, max_period):
    period = rng.uniform(min_period, max_period)
    phase = rng.uniform(0.0, 2 * np.pi)
    return mean + amplitude * np.sin(2 * np.pi * t / period + phase)


def _cpu_compress(rng, t):
    cpu = np.clip(0.975 + rng.normal(0, 0.01, t.size), 0.93, 1.0)
    mem = np.clip(_wave(rng, t, 0.5, 0.3, 20, 40) + rng.normal(0, 0.03, t.size), 0.05, 0.95)
    disk = np.clip(0.03 + rng.normal(0, 0.01, t.size), 0.0, 0.1)
    net = np.clip(0.005 + rng.normal(0, 0.002, t.size), 0.0, 0.02)
    return cpu, mem, disk, net


def _mem_compress(rng, t):
    cpu = np.clip(_wave(rng, t, 0.4, 0.2, 15, 30) + rng.normal(0, 0.05, t.size), 0.1, 0.8)
    mem = np.clip(0.8 + rng.normal(0, 0.005, t.size), 0.78, 0.82)
    disk = np.clip(0.05 + rng.normal(0, 0.02, t.size), 0.0, 0.15)
    net = np.clip(0.01 + rng.normal(0, 0.003, t.size), 0.0, 0.03)
    return cpu, mem, disk, net


def _disk_stress(rng, t):
    period = int(rng.integers(12, 21))
    offset = int(rng.integers(0, period))
    surge = ((t.astype(int) + offset) % period) < 2
    cpu = 0.1 + rng.normal(0, 0.02, t.size) + surge * rng.uniform(0.2, 0.4, t.size)
    cpu = np.clip(cpu, 0.02, 0.6)
    mem = np.clip(0.25 + rng.normal(0, 0.01, t.size), 0.2, 0.3)
    disk = np.clip(0.9 + rng.normal(0, 0.01, t.size), 0.85, 0.95)
    net = np.clip(0.01 + rng.normal(0, 0.003, t.size), 0.0, 0.03)
    return cpu, mem, disk, net


def _net_loopback(rng, t):
    cpu = np.clip(0.7 + rng.normal(0, 0.03, t.size), 0.6, 0.8)
    mem = np.clip(0.15 + rng.normal(0, 0.003, t.size), 0.14, 0.16)
    disk = np.clip(0.01 + rng.normal(0, 0.003, t.size), 0.0, 0.03)
    net = np.clip(0.92 + rng.normal(0, 0.02, t.size), 0.85, 1.0)
    return cpu, mem, disk, net


def _idle(rng, t):
    return (
        rng.uniform(0.005, 0.04, t.size),
        rng.uniform(0.02, 0.045, t.size),
        rng.uniform(0.0, 0.01, t.size),
        rng.uniform(0.0, 0.01, t.size),
    )


_GENERATORS = {
    WorkloadKind.CpuCompress: _cpu_compress,
    WorkloadKind.MemCompress: _mem_compress,
    WorkloadKind.DiskStress: _disk_stress,
    WorkloadKind.NetLoopback: _net_loopback,
    WorkloadKind.Idle: _idle,
}


def _samples(kind, n_intervals, seed, caps, start_ms, interval_ms):
    rng = np.random.default_rng([seed & 0xFFFFFFFF, _KIND_SALT[kind]])
    t = np.arange(n_intervals, dtype=float)
    cpu, mem, disk, net = _GENERATORS[kind](rng, t)
    # Six decimals keep generated traces bit-exact through the CSV format.
    cpu = np.round(cpu, 6)
    mem = np.round(mem, 6)
    disk_ops = np.round(disk * caps.disk_ops_cap, 6)
    net_ops = np.round(net * caps.net_ops_cap, 6)
    return [
        RawSample(
            start_ms + i * interval_ms,
            float(cpu[i]),
            float(mem[i]),
            float(disk_ops[i]),
            float(net_ops[i]),
        )
        for i in range(n_intervals)
    ]


def generate(
    kind: WorkloadKind,
    n_intervals: int,
    seed: int,
    caps: ResourceCapacity = ResourceCapacity(),
    *,
    start_ms: int = 0,
    interval_ms: int = DEFAULT_INTERVAL_MS,
) -> TraceSeries:
    if n_intervals <= 0:
        raise ValueError("n_intervals must be positive")
    return TraceSeries(
        interval_ms, _samples(kind, n_intervals, seed, caps, start_ms, interval_ms)
    )


def corpus(
    n_intervals: int,
    seed: int,
    caps: ResourceCapacity = ResourceCapacity(),
    kinds: Sequence[WorkloadKind] = BENCHMARK_KINDS,
    *,
    interval_ms: int = DEFAULT_INTERVAL_MS,
) -> TraceSeries:
    """Back-to-back segments of ``kinds`` sharing one continuous time grid.

    ``n_intervals`` is split as evenly as possible; earlier kinds get the
    remainder.
    """
    if n_intervals < len(kinds):
        raise ValueError("need at least one interval per kind")
    base, extra = divmod(n_intervals, len(kinds))
    samples = []
    for i, kind in enumerate(kinds):
        n = base + (1 if i < extra else 0)
        samples.extend(
            _samples(kind, n, seed + i, caps, len(samples) * interval_ms, interval_ms)
        )
    return TraceSeries(interval_ms, samples)


def matches_signature(kind: WorkloadKind, series: TraceSeries, caps: ResourceCapacity) -> bool:
    """Check the mean/variance envelope that characterizes ``kind``."""
    rows = np.array([f.as_tuple() for _, f in feature_series(series, caps)])
    cpu, mem, disk, net = rows.T
    if kind is WorkloadKind.CpuCompress:
        return cpu.mean() >= 0.95 and cpu.std() <= 0.05 and mem.std() >= 0.1
    if kind is WorkloadKind.MemCompress:
        return (
            mem.std() <= 0.02
            and mem.mean() >= 0.6
            and 0.2 <= cpu.mean() <= 0.7
            and cpu.std() >= 0.05
        )
    if kind is WorkloadKind.DiskStress:
        return (
            disk.mean() >= 0.8
            and disk.std() <= 0.05
            and cpu.mean() <= 0.3
            and cpu.max() >= cpu.mean() + 0.15
        )
    if kind is WorkloadKind.NetLoopback:
        return net.mean() >= 0.85 and cpu.mean() >= 0.5 and mem.std() <= 0.02
    return bool((rows < 0.05).all())
