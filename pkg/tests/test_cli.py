import socket
import subprocess
import sys
import time

import pytest

from scenarios import REF_MODEL, canonical
from softmeter import cli, pdusim
from softmeter.netio import request_lines
from softmeter.powermodel import load_model, save_model
from softmeter.profiler import write_profile_xml


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def quiet_cfg(tmp_path):
    path = tmp_path / "quiet.cfg"
    pdusim.write_config(pdusim.GroundTruthModel(noise_sigma_w=0.0), path)
    return path


def _report(capsys):
    out = capsys.readouterr().out
    return {k: float(v) for k, v in (line.split("=") for line in out.strip().splitlines())}


def test_idle_pipeline_noise_free(tmp_path, quiet_cfg, capsys):
    trace, model = tmp_path / "idle.csv", tmp_path / "m.txt"
    assert run("simulate", "--kind", "idle", "--intervals", 10, "--seed", 1, "--out", trace, "--with-power", "--model-config", quiet_cfg) == 0
    assert run("train", "--trace", trace, "--lag", 1, "--out", model) == 0
    capsys.readouterr()
    assert run("evaluate", "--model", model, "--trace", trace, "--lag", 1) == 0
    report = _report(capsys)
    assert report["n"] == 9
    assert report["mape_pct"] < 1e-4


def test_mixed_corpus_pipeline(tmp_path, capsys):
    trace, model = tmp_path / "mix.csv", tmp_path / "m.txt"
    assert run("simulate", "--kind", "mixed", "--intervals", 320, "--seed", 4, "--out", trace, "--with-power") == 0
    assert run("train", "--trace", trace, "--out", model) == 0
    capsys.readouterr()
    assert run("evaluate", "--model", model, "--trace", trace) == 0
    report = _report(capsys)
    assert report["n"] >= 291
    assert report["mape_pct"] <= 5.0
    fitted = load_model(model)
    assert fitted.alpha == pytest.approx(100, rel=0.05)


def test_predict_and_report(tmp_path, quiet_cfg):
    trace, model, pred, series = (tmp_path / n for n in ("t.csv", "m.txt", "p.csv", "s.csv"))
    run("simulate", "--kind", "cpu-compress", "--intervals", 30, "--seed", 2, "--out", trace, "--with-power", "--model-config", quiet_cfg)
    save_model(REF_MODEL, model)
    assert run("predict", "--model", model, "--trace", trace, "--out", pred) == 0
    lines = pred.read_text().splitlines()
    assert lines[0] == "ts_ms,predicted_w" and len(lines) == 31
    assert run("report", "--pred", pred, "--actual", trace, "--lag", 1, "--out", series) == 0
    rows = [r.split(",") for r in series.read_text().splitlines()[1:]]
    assert len(rows) == 29
    # Noise-free ground truth equals the reference model, shifted by the PDU lag.
    for _, p, a in rows:
        assert float(p) == pytest.approx(float(a), abs=1e-5)


def test_classify(tmp_path, capsys):
    trace, out = tmp_path / "t.csv", tmp_path / "p.xml"
    run("simulate", "--kind", "disk-stress", "--intervals", 50, "--seed", 3, "--out", trace)
    capsys.readouterr()
    assert run("classify", "--trace", trace, "--epsilon", 0.1, "--vm-id", "db", "--out", out) == 0
    assert capsys.readouterr().out.strip() == "disk"
    assert 'dominant="disk"' in out.read_text()


def _scenario(tmp_path):
    vms, hosts = canonical()
    for h in hosts:
        save_model(h.model, tmp_path / f"{h.host_id}.txt")
    rows = ["type,id,path,duration_s"] + [f"host,{h.host_id},{h.host_id}.txt," for h in hosts]
    for v in vms:
        write_profile_xml(v.profile, tmp_path / f"{v.vm_id}.xml")
        rows.append(f"vm,{v.vm_id},{v.vm_id}.xml,{v.duration_s}")
    path = tmp_path / "scenario.csv"
    path.write_text("\n".join(rows) + "\n")
    return path


def _total(path):
    for line in path.read_text().splitlines():
        if line.startswith("total,"):
            return float(line.split(",")[1])


def test_schedule_bruteforce_equals_complementary(tmp_path, capsys):
    scenario = _scenario(tmp_path)
    assert run("schedule", "--scenario", scenario, "--policy", "complementary", "--out", tmp_path / "c.csv") == 0
    assert run("schedule", "--scenario", scenario, "--policy", "bruteforce", "--out", tmp_path / "b.csv") == 0
    assert run("schedule", "--scenario", scenario, "--policy", "firstfit", "--out", tmp_path / "f.csv") == 0
    assert _total(tmp_path / "c.csv") == pytest.approx(_total(tmp_path / "b.csv"), abs=1e-6)
    assert _total(tmp_path / "f.csv") > _total(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[:5] == ["vm_id,host_id", "cpu-A,h1", "cpu-B,h2", "disk-C,h1", "disk-D,h2"]
    assert "total," in capsys.readouterr().out


def test_usage_and_operational_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("train", "--trace", "x.csv", "--out", "m.txt", "--bogus")
    assert exc.value.code == 2
    capsys.readouterr()
    assert run("train", "--trace", tmp_path / "missing.csv", "--out", tmp_path / "m.txt") == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("alpha=1\n")
    assert run("evaluate", "--model", bad, "--trace", tmp_path / "missing.csv") == 1
    err = capsys.readouterr()
    assert err.out == ""
    assert "softmeter evaluate" in err.err


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for(port, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
            return
        except OSError:
            time.sleep(0.05)
    raise AssertionError("server did not start")


def test_serve_and_pdu_serve_subprocesses(tmp_path):
    port_c, port_p = _free_port(), _free_port()
    store = tmp_path / "store"
    procs = [
        subprocess.Popen([sys.executable, "-m", "softmeter", "serve", "--listen", f"127.0.0.1:{port_c}", "--store", store]),
        subprocess.Popen([sys.executable, "-m", "softmeter", "pdu-serve", "--listen", f"127.0.0.1:{port_p}", "--outlet", "3", "--speedup", "1000"]),
    ]
    try:
        _wait_for(port_c)
        _wait_for(port_p)
        replies = request_lines(("127.0.0.1", port_c), ["RPT h1 0 0.1 0.2 0.3 0.4 120.0", "RPT h1 0 0.1 0.2 0.3 0.4", "nonsense"])
        assert replies == ["OK", "OK dup", "ERR bad-request"]
        assert (store / "h1.csv").exists()
        time.sleep(0.1)
        reply = request_lines(("127.0.0.1", port_p), ["GET power.active 3", "GET power.active 4"])
        assert reply[0].startswith("VAL ") and 90 < float(reply[0].split()[1]) < 115
        assert reply[1] == "ERR no-such-outlet"
    finally:
        for p in procs:
            p.terminate()
            p.wait(timeout=10)
