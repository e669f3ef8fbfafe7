"""Dominant-resource workload profiles and their XML metadata files.

A profile labels a VM by the resource with the highest mean normalized
utilization.  When the runner-up is within a relative margin ``epsilon``
of the leader (``top - second < epsilon * top``) the label is ``Mixed``.
The margin is relative so the label depends only on the ranking and ratio
of the means, not on their absolute scale.

XML form::

    <profile vm="ID" dominant="cpu|mem|disk|net|mixed" epsilon="0.1">
      <intensity cpu="0.92" mem="0.40" disk="0.05" net="0.01"/>
    </profile>
"""

from __future__ import annotations

import enum
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from softmeter.errors import InsufficientData, ProfileFormatError, TraceValidationError
from softmeter.telemetry import FeatureVector, ResourceCapacity, TraceSeries, feature_series

DEFAULT_EPSILON = 0.1
DEFAULT_MIN_INTERVALS = 10


class Dominant(enum.Enum):
    Cpu = "cpu"
    Mem = "mem"
    Disk = "disk"
    Net = "net"
    Mixed = "mixed"


# Argmax tie order.
RESOURCE_ORDER = (Dominant.Cpu, Dominant.Mem, Dominant.Disk, Dominant.Net)


@dataclass(frozen=True)
class WorkloadProfile:
    vm_id: str
    dominant: Dominant
    intensity: FeatureVector
    epsilon: float = DEFAULT_EPSILON

    @property
    def dominant_intensity(self) -> float:
        """Mean utilization of the dominant resource (the maximum for Mixed)."""
        values = self.intensity.as_tuple()
        if self.dominant is Dominant.Mixed:
            return max(values)
        return values[RESOURCE_ORDER.index(self.dominant)]


def dominant_of(intensity: FeatureVector, epsilon: float = DEFAULT_EPSILON) -> Dominant:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    values = intensity.as_tuple()
    # sorted() is stable, so equal means keep RESOURCE_ORDER.
    ranked = sorted(range(4), key=lambda r: -values[r])
    top, second = values[ranked[0]], values[ranked[1]]
    if top == 0.0 or top - second < epsilon * top:
        return Dominant.Mixed
    return RESOURCE_ORDER[ranked[0]]


def mean_intensity(trace: TraceSeries, caps: ResourceCapacity) -> FeatureVector:
    rows = [f.as_tuple() for _, f in feature_series(trace, caps)]
    n = len(rows)
    means = [math.fsum(row[r] for row in rows) / n for r in range(4)]
    return FeatureVector.clamped(*means)


def classify(
    trace: TraceSeries,
    caps: ResourceCapacity = ResourceCapacity(),
    epsilon: float = DEFAULT_EPSILON,
    min_intervals: int = DEFAULT_MIN_INTERVALS,
    vm_id: str = "vm",
) -> WorkloadProfile:
    if min_intervals < 1:
        raise ValueError("min_intervals must be >= 1")
    if len(trace) < min_intervals:
        raise InsufficientData(
            f"trace has {len(trace)} interval(s), need at least {min_intervals}"
        )
    intensity = mean_intensity(trace, caps)
    return WorkloadProfile(vm_id, dominant_of(intensity, epsilon), intensity, epsilon)


def profile_to_xml(profile: WorkloadProfile) -> str:
    root = ET.Element(
        "profile",
        {
            "vm": profile.vm_id,
            "dominant": profile.dominant.value,
            "epsilon": repr(profile.epsilon),
        },
    )
    f = profile.intensity
    ET.SubElement(
        root,
        "intensity",
        {"cpu": repr(f.cpu), "mem": repr(f.mem), "disk": repr(f.disk), "net": repr(f.net)},
    )
    return ET.tostring(root, encoding="unicode")


def write_profile_xml(profile: WorkloadProfile, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        fh.write(profile_to_xml(profile) + "\n")
    os.replace(tmp, path)


def _number(element, name) -> float:
    raw = element.get(name)
    if raw is None:
        raise ProfileFormatError(f"<{element.tag}> missing attribute {name!r}")
    try:
        value = float(raw)
    except ValueError:
        raise ProfileFormatError(f"{name}={raw!r} is not a number") from None
    if not math.isfinite(value):
        raise ProfileFormatError(f"{name}={raw!r} is not finite")
    return value


def parse_profile_xml(text: str | bytes) -> WorkloadProfile:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ProfileFormatError(f"malformed XML: {exc}") from None
    if root.tag != "profile":
        raise ProfileFormatError(f"root element must be <profile>, got <{root.tag}>")
    vm_id = root.get("vm")
    if not vm_id:
        raise ProfileFormatError("<profile> missing vm attribute")
    try:
        declared = Dominant(root.get("dominant", ""))
    except ValueError:
        raise ProfileFormatError(f"unknown dominant value {root.get('dominant')!r}") from None
    epsilon = _number(root, "epsilon") if "epsilon" in root.attrib else DEFAULT_EPSILON
    if not 0.0 < epsilon < 1.0:
        raise ProfileFormatError(f"epsilon={epsilon} outside (0, 1)")
    elements = root.findall("intensity")
    if len(elements) != 1 or len(root) != 1:
        raise ProfileFormatError("<profile> must contain exactly one <intensity> element")
    values = [_number(elements[0], name) for name in ("cpu", "mem", "disk", "net")]
    try:
        intensity = FeatureVector(*values)
    except TraceValidationError as exc:
        raise ProfileFormatError(f"intensity out of range: {exc}") from None
    computed = dominant_of(intensity, epsilon)
    if computed is not declared:
        raise ProfileFormatError(
            f"declared dominant={declared.value!r} but intensities imply {computed.value!r}"
        )
    return WorkloadProfile(vm_id, declared, intensity, epsilon)


def read_profile_xml(path) -> WorkloadProfile:
    with open(path, "rb") as fh:
        return parse_profile_xml(fh.read())
