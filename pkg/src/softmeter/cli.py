"""Command-line entry point: ``softmeter <command> ...``.

Data goes to files or stdout; diagnostics go to stderr.  Exit status is 0
on success, 1 on an operational error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import threading
from pathlib import Path

from softmeter import pdusim, powermodel, profiler, scheduler, telemetry, workloads
from softmeter.controller import Controller, Store
from softmeter.errors import SoftmeterError
from softmeter.netio import parse_address

log = logging.getLogger("softmeter")

KIND_CHOICES = [k.value for k in workloads.WorkloadKind] + ["mixed"]


def _caps(args) -> telemetry.ResourceCapacity:
    return telemetry.ResourceCapacity(args.disk_cap, args.net_cap)


def _ground_truth(args) -> tuple[pdusim.GroundTruthModel, int]:
    if args.model_config:
        return pdusim.load_config(args.model_config)
    return pdusim.GroundTruthModel(), telemetry.DEFAULT_INTERVAL_MS


def _aligned(args) -> telemetry.AlignedSeries:
    trace = telemetry.read_trace(args.trace)
    feats = telemetry.feature_series(trace, _caps(args), args.mem_mode)
    return telemetry.align(feats, telemetry.power_readings(trace), args.lag, trace.interval_ms)


def cmd_simulate(args) -> int:
    caps = _caps(args)
    if args.kind == "mixed":
        trace = workloads.corpus(args.intervals, args.seed, caps)
    else:
        kind = workloads.WorkloadKind(args.kind)
        trace = workloads.generate(kind, args.intervals, args.seed, caps)
    if args.with_power:
        model, window_ms = _ground_truth(args)
        trace = pdusim.attach_power(trace, model, caps, window_ms)
    telemetry.write_trace(trace, args.out)
    log.info("wrote %d interval(s) to %s", len(trace), args.out)
    return 0


def cmd_train(args) -> int:
    data = _aligned(args)
    model = powermodel.fit(data)
    powermodel.save_model(model, args.out)
    print(
        " ".join(f"{k}={v:.6f}" for k, v in zip(powermodel.MODEL_KEYS, model.coefficients))
    )
    return 0


def cmd_predict(args) -> int:
    model = powermodel.load_model(args.model)
    trace = telemetry.read_trace(args.trace)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("ts_ms,predicted_w\n")
        for ts, f in telemetry.feature_series(trace, _caps(args), args.mem_mode):
            fh.write(f"{ts},{powermodel.predict(model, f):.6f}\n")
    return 0


def cmd_evaluate(args) -> int:
    model = powermodel.load_model(args.model)
    report = powermodel.evaluate(model, _aligned(args))
    print("\n".join(report.lines()))
    return 0


def cmd_classify(args) -> int:
    trace = telemetry.read_trace(args.trace)
    profile = profiler.classify(
        trace, _caps(args), args.epsilon, args.min_intervals, vm_id=args.vm_id
    )
    profiler.write_profile_xml(profile, args.out)
    print(profile.dominant.value)
    return 0


def read_scenario(path) -> tuple[list[scheduler.Host], list[scheduler.VmRequest]]:
    """Scenario CSV with header ``type,id,path,duration_s``.

    ``host`` rows point at a model file, ``vm`` rows at a profile XML plus
    a nominal duration.  Relative paths resolve against the scenario file.
    """
    base = Path(path).parent
    hosts, vms = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["type", "id", "path", "duration_s"]:
            raise SoftmeterError(f"{path}: header must be type,id,path,duration_s")
        for lineno, row in enumerate(reader, start=2):
            target = base / row["path"]
            if row["type"] == "host":
                hosts.append(scheduler.Host(row["id"], powermodel.load_model(target)))
            elif row["type"] == "vm":
                try:
                    duration = float(row["duration_s"])
                except (TypeError, ValueError):
                    raise SoftmeterError(f"{path}:{lineno}: bad duration_s") from None
                vms.append(
                    scheduler.VmRequest(row["id"], profiler.read_profile_xml(target), duration)
                )
            else:
                raise SoftmeterError(f"{path}:{lineno}: unknown row type {row['type']!r}")
    return hosts, vms


def write_placement(placement: scheduler.Placement, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("vm_id,host_id\n")
        for vm_id in sorted(placement.assignments):
            fh.write(f"{vm_id},{placement.assignments[vm_id]}\n")
        fh.write("\n")
        fh.write(_energy_block(placement))


def _energy_block(placement: scheduler.Placement) -> str:
    lines = ["host_id,energy_wh"]
    for host_id in sorted(placement.per_host_energy_wh):
        lines.append(f"{host_id},{placement.per_host_energy_wh[host_id]:.6f}")
    lines.append(f"total,{placement.total_energy_wh:.6f}")
    lines.append(f"horizon_s,{placement.horizon_s:.6f}")
    return "\n".join(lines) + "\n"


def cmd_schedule(args) -> int:
    hosts, vms = read_scenario(args.scenario)
    placement = scheduler.place(vms, hosts, scheduler.Policy(args.policy), args.overcommit)
    write_placement(placement, args.out)
    sys.stdout.write(_energy_block(placement))
    return 0


def cmd_serve(args) -> int:
    controller = Controller(Store(args.store))
    server = controller.serve(parse_address(args.listen))
    log.info("controller listening on %s:%d", *server.server_address[:2])
    with server:
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


def cmd_pdu_serve(args) -> int:
    model, window_ms = _ground_truth(args)
    caps = _caps(args)
    if args.trace:
        trace = telemetry.read_trace(args.trace)
    else:
        trace = workloads.generate(workloads.WorkloadKind.Idle, 100, model.seed, caps)
    readings = pdusim.simulate_readings(trace, model, caps, window_ms)
    agent = pdusim.PduAgent([args.outlet])
    stop = threading.Event()
    producer = threading.Thread(
        target=pdusim.replay,
        args=(agent, args.outlet, readings, args.speedup, stop, True),
        daemon=True,
    )
    server = agent.serve(parse_address(args.listen))
    log.info("PDU outlet %s listening on %s:%d", args.outlet, *server.server_address[:2])
    producer.start()
    with server:
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            stop.set()
    return 0


def _read_series(path, column) -> dict[int, float]:
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "ts_ms" not in reader.fieldnames or column not in reader.fieldnames:
            raise SoftmeterError(f"{path}: needs ts_ms and {column} columns")
        for lineno, row in enumerate(reader, start=2):
            if row[column] in ("", None):
                continue
            try:
                out[int(row["ts_ms"])] = float(row[column])
            except ValueError:
                raise SoftmeterError(f"{path}:{lineno}: unparsable row") from None
    return out


def cmd_report(args) -> int:
    pred = _read_series(args.pred, "predicted_w")
    actual = _read_series(args.actual, "watts")
    trace_interval = telemetry.read_trace(args.actual).interval_ms
    shift = args.lag * trace_interval
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("ts_ms,predicted_w,actual_w\n")
        for ts in sorted(pred):
            if ts + shift in actual:
                fh.write(f"{ts + shift},{pred[ts]:.6f},{actual[ts + shift]:.6f}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softmeter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def caps_flags(p):
        p.add_argument("--disk-cap", type=float, default=telemetry.DEFAULT_DISK_OPS_CAP,
                       help="disk operations/s treated as full utilization")
        p.add_argument("--net-cap", type=float, default=telemetry.DEFAULT_NET_OPS_CAP,
                       help="network operations/s treated as full utilization")

    def feature_flags(p):
        caps_flags(p)
        p.add_argument("--mem-mode", choices=telemetry.MEM_MODES, default="occupancy")

    p = sub.add_parser("simulate", help="generate a synthetic workload trace")
    p.add_argument("--kind", required=True, choices=KIND_CHOICES)
    p.add_argument("--intervals", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--with-power", action="store_true", help="attach simulated PDU readings")
    p.add_argument("--model-config", help="ground-truth model for the simulated PDU")
    caps_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a power model from a trace with watts")
    p.add_argument("--trace", required=True)
    p.add_argument("--lag", type=int, default=1, help="PDU lag in intervals")
    p.add_argument("--out", required=True)
    feature_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict watts for every interval of a trace")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    feature_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="prediction error against a trace's PDU readings")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--lag", type=int, default=1)
    feature_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="dominant-resource profile of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--epsilon", type=float, default=profiler.DEFAULT_EPSILON)
    p.add_argument("--min-intervals", type=int, default=profiler.DEFAULT_MIN_INTERVALS)
    p.add_argument("--vm-id", default="vm")
    p.add_argument("--out", required=True)
    caps_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("schedule", help="plan VM placement for a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--policy", choices=[x.value for x in scheduler.Policy], default="complementary")
    p.add_argument("--overcommit", type=float, default=scheduler.DEFAULT_OVERCOMMIT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("serve", help="run the collector controller")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--store", required=True, help="storage directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("pdu-serve", help="run the mock PDU query server")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--model-config")
    p.add_argument("--trace", help="trace driving the simulated load (default: idle)")
    p.add_argument("--outlet", default="1")
    p.add_argument("--speedup", type=float, default=1.0)
    caps_flags(p)
    p.set_defaults(func=cmd_pdu_serve)

    p = sub.add_parser("report", help="predicted vs actual series for plotting")
    p.add_argument("--pred", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--lag", type=int, default=0,
                   help="compare prediction at t with the reading at t + lag intervals")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (SoftmeterError, OSError, ValueError) as exc:
        print(f"softmeter {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
