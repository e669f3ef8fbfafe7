"""Offline energy-aware VM placement.

Contention model: co-located VMs add up their mean intensities per
resource.  When any resource load exceeds 1.0 every VM on that host runs
``stretch = max(1, max_r load_r)`` times longer, while the host's power
saturates at full utilization.  Longer runtime accrues more baseline
watt-hours, which is what makes complementary (different dominant
resource) pairings cheaper than same-resource ones under this model.

Hosts never power down: a host that finishes early idles at ``alpha``
until the placement horizon (the longest effective runtime across hosts).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

from softmeter.errors import Infeasible
from softmeter.powermodel import LinearPowerModel, predict
from softmeter.profiler import WorkloadProfile
from softmeter.telemetry import FeatureVector, ResourceCapacity

DEFAULT_OVERCOMMIT = 2.0


class Policy(enum.Enum):
    Complementary = "complementary"
    FirstFit = "firstfit"
    RoundRobin = "roundrobin"
    BruteForce = "bruteforce"


@dataclass(frozen=True)
class Host:
    host_id: str
    model: LinearPowerModel
    caps: ResourceCapacity = ResourceCapacity()


@dataclass(frozen=True)
class VmRequest:
    vm_id: str
    profile: WorkloadProfile
    duration_s: float

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"{self.vm_id}: duration_s must be > 0")

    @property
    def demand(self) -> FeatureVector:
        return self.profile.intensity


@dataclass(frozen=True)
class Placement:
    assignments: dict[str, str]
    per_host_energy_wh: dict[str, float]
    total_energy_wh: float
    horizon_s: float = 0.0
    policy: Policy | None = None
    per_host_stretch: dict[str, float] = field(default_factory=dict)

    def residents(self, host_id: str) -> list[str]:
        return sorted(vm for vm, h in self.assignments.items() if h == host_id)


def resource_loads(demands: Sequence[FeatureVector]) -> tuple[float, float, float, float]:
    totals = [0.0, 0.0, 0.0, 0.0]
    for d in demands:
        for r, x in enumerate(d.as_tuple()):
            totals[r] += x
    return tuple(totals)


def contention_stretch(demands: Sequence[FeatureVector]) -> float:
    if not demands:
        raise ValueError("contention_stretch needs at least one demand")
    return max(1.0, max(resource_loads(demands)))


def effective_runtime_s(resident: Sequence[VmRequest]) -> float:
    if not resident:
        return 0.0
    return max(vm.duration_s for vm in resident) * contention_stretch([vm.demand for vm in resident])


def host_energy(host: Host, resident: Sequence[VmRequest], horizon_s: float | None = None) -> float:
    """Watt-hours drawn by ``host`` running ``resident`` to completion and
    then idling until ``horizon_s`` (defaults to the effective runtime)."""
    runtime = effective_runtime_s(resident)
    horizon = runtime if horizon_s is None else max(horizon_s, runtime)
    if not resident:
        return host.model.alpha * horizon / 3600.0
    aggregate = FeatureVector.clamped(*resource_loads([vm.demand for vm in resident]))
    busy = predict(host.model, aggregate) * runtime
    idle = host.model.alpha * (horizon - runtime)
    return (busy + idle) / 3600.0


def _feasible(loads, demand: FeatureVector, limit: float) -> bool:
    return all(l + d <= limit for l, d in zip(loads, demand.as_tuple()))


def _add(loads, demand: FeatureVector):
    return tuple(l + d for l, d in zip(loads, demand.as_tuple()))


def complementary_order(requests: Sequence[VmRequest]) -> list[VmRequest]:
    """Descending dominant intensity, ties by vm_id."""
    return sorted(requests, key=lambda vm: (-vm.profile.dominant_intensity, vm.vm_id))


def _complementary(requests, hosts, limit):
    loads = {h.host_id: (0.0, 0.0, 0.0, 0.0) for h in hosts}
    assignments, unplaced = {}, []
    for vm in complementary_order(requests):
        best = None
        for h in hosts:
            current = loads[h.host_id]
            if not _feasible(current, vm.demand, limit):
                continue
            score = max(_add(current, vm.demand))
            if best is None or score < best[0]:
                best = (score, h.host_id)
        if best is None:
            unplaced.append(vm.vm_id)
            continue
        assignments[vm.vm_id] = best[1]
        loads[best[1]] = _add(loads[best[1]], vm.demand)
    return assignments, unplaced


def _first_fit(requests, hosts, limit):
    loads = {h.host_id: (0.0, 0.0, 0.0, 0.0) for h in hosts}
    assignments, unplaced = {}, []
    for vm in requests:
        for h in hosts:
            if _feasible(loads[h.host_id], vm.demand, limit):
                assignments[vm.vm_id] = h.host_id
                loads[h.host_id] = _add(loads[h.host_id], vm.demand)
                break
        else:
            unplaced.append(vm.vm_id)
    return assignments, unplaced


def _round_robin(requests, hosts, limit):
    loads = {h.host_id: (0.0, 0.0, 0.0, 0.0) for h in hosts}
    assignments, unplaced = {}, []
    cursor = 0
    for vm in requests:
        for step in range(len(hosts)):
            h = hosts[(cursor + step) % len(hosts)]
            if _feasible(loads[h.host_id], vm.demand, limit):
                assignments[vm.vm_id] = h.host_id
                loads[h.host_id] = _add(loads[h.host_id], vm.demand)
                cursor = (cursor + step + 1) % len(hosts)
                break
        else:
            unplaced.append(vm.vm_id)
    return assignments, unplaced


def _brute_force(requests, hosts, limit):
    best = None
    for combo in itertools.product(range(len(hosts)), repeat=len(requests)):
        loads = [(0.0, 0.0, 0.0, 0.0)] * len(hosts)
        ok = True
        for vm, h in zip(requests, combo):
            if not _feasible(loads[h], vm.demand, limit):
                ok = False
                break
            loads[h] = _add(loads[h], vm.demand)
        if not ok:
            continue
        assignments = {vm.vm_id: hosts[h].host_id for vm, h in zip(requests, combo)}
        total = evaluate_assignment(requests, hosts, assignments).total_energy_wh
        # Strict comparison keeps the first optimum in enumeration order.
        if best is None or total < best[0]:
            best = (total, assignments)
    if best is None:
        return {}, [vm.vm_id for vm in requests]
    return best[1], []


_POLICIES = {
    Policy.Complementary: _complementary,
    Policy.FirstFit: _first_fit,
    Policy.RoundRobin: _round_robin,
    Policy.BruteForce: _brute_force,
}


def evaluate_assignment(
    requests: Sequence[VmRequest],
    hosts: Sequence[Host],
    assignments: dict[str, str],
    policy: Policy | None = None,
    horizon_s: float | None = None,
) -> Placement:
    """Energy accounting for a fixed assignment over the common horizon."""
    by_host = {h.host_id: [] for h in hosts}
    for vm in requests:
        by_host[assignments[vm.vm_id]].append(vm)
    runtimes = {hid: effective_runtime_s(vms) for hid, vms in by_host.items()}
    horizon = max(runtimes.values(), default=0.0)
    if horizon_s is not None:
        horizon = max(horizon, horizon_s)
    energy = {h.host_id: host_energy(h, by_host[h.host_id], horizon) for h in hosts}
    stretch = {
        hid: contention_stretch([vm.demand for vm in vms]) if vms else 1.0
        for hid, vms in by_host.items()
    }
    return Placement(
        assignments=dict(assignments),
        per_host_energy_wh=energy,
        total_energy_wh=sum(energy.values()),
        horizon_s=horizon,
        policy=policy,
        per_host_stretch=stretch,
    )


def place(
    requests: Sequence[VmRequest],
    hosts: Sequence[Host],
    policy: Policy = Policy.Complementary,
    overcommit: float = DEFAULT_OVERCOMMIT,
    horizon_s: float | None = None,
) -> Placement:
    """Assign every request to a host under ``policy``.

    A host accepts a VM only while every per-resource load stays within
    ``overcommit``.  Hosts are considered in ``host_id`` order, which also
    breaks ties.  Raises :class:`Infeasible` listing the VMs that could not
    be placed.
    """
    ids = [vm.vm_id for vm in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate vm_id in requests")
    hosts = sorted(hosts, key=lambda h: h.host_id)
    if len({h.host_id for h in hosts}) != len(hosts):
        raise ValueError("duplicate host_id")
    if requests and not hosts:
        raise Infeasible(ids, "no hosts to place on")
    assignments, unplaced = _POLICIES[policy](list(requests), hosts, overcommit)
    if unplaced:
        raise Infeasible(unplaced, f"{policy.value}: exceeds overcommit limit {overcommit}")
    return evaluate_assignment(requests, hosts, assignments, policy, horizon_s)
