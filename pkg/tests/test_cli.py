from __future__ import annotations

import io
import json
import shutil
import subprocess
import sys

import pytest

from sleec.cli import main, parse_checks, parse_quantum
from sleec.core import Duration, TimeUnit
from sleec.wellformedness import CheckKind

STAGE5 = ("MealTime, userOccupied.false, InformUser, tock, FetchingIngredients, HumanOnFloor, tock, tock, "
          "tock, AbandonFetchingIngredients, tock, tock, humanAssents.true, CallEmergencySupport")


def run(*argv, stdin=""):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err, io.StringIO(stdin))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture()
def v1(corpus):
    return corpus / "almi_v1.sleec"


@pytest.fixture()
def v2(corpus):
    return corpus / "almi_v2.sleec"


def test_parse_quantum():
    assert parse_quantum("30s").quantum == Duration(30, TimeUnit.SECONDS)
    assert parse_quantum("1 minute").quantum == Duration(1)
    with pytest.raises(ValueError):
        parse_quantum("soon")


def test_parse_checks():
    assert parse_checks("conflict") == {CheckKind.CONFLICT}
    assert len(parse_checks("all")) == 4
    with pytest.raises(ValueError):
        parse_checks("conflict,nonsense")


def test_check_ok(v1):
    code, out, _ = run("check", v1)
    assert code == 0 and out.endswith("ok (3 rules, 3 annotations)\n")


def test_check_parse_error_position(tmp_path):
    bad = tmp_path / "bad.sleec"
    bad.write_text("event A\nevent B\nR1 when A B\n")
    code, _, err = run("check", bad)
    assert code == 2
    assert err.startswith(f"{bad}:3:11: error[syntax]")


def test_check_json_diagnostics(tmp_path):
    bad = tmp_path / "bad.sleec"
    bad.write_text("event A\nR1 when Foo then A\n")
    code, out, _ = run("check", bad, "--json")
    (d,) = json.loads(out)
    assert code == 2 and d["code"] == "unresolved" and d["span"]["line"] == 2


def test_missing_file_is_usage_error(tmp_path):
    assert run("check", tmp_path / "nope.sleec")[0] == 2


def test_analyze_table1(v1):
    code, out, _ = run("analyze", v1)
    assert code == 1
    assert "conflict: R2, R3" in out and "over-restrictiveness" in out
    assert "2 finding(s)" in out


def test_analyze_table2_is_clean(v2):
    code, out, _ = run("analyze", v2)
    assert code == 0 and out.startswith("0 finding(s)")


def test_analyze_check_filter_json(v1):
    code, out, _ = run("analyze", v1, "--checks", "conflict", "--json")
    items = json.loads(out)
    assert code == 1
    assert [f["kind"] for f in items if f["kind"] != "warning"] == ["conflict"]
    assert set(items[0]) == {"kind", "rules", "annotation", "witness", "horizon", "message"}


def test_analyze_json_is_stable(v1):
    assert run("analyze", v1, "--json")[1] == run("analyze", v1, "--json")[1]


def test_witness_reingests_through_monitor(v1, tmp_path):
    items = json.loads(run("analyze", v1, "--checks", "conflict", "--json")[1])
    witness = tmp_path / "w.trace"
    witness.write_text(items[0]["witness"])
    # with no agent actions the witness leaves R2 unanswered
    code, out, _ = run("monitor", v1, "--trace", witness, "--strict")
    assert code == 1 and "R2" in out


def test_bad_horizon_and_quantum(v1):
    assert run("analyze", v1, "--horizon", "0")[0] == 2
    assert run("analyze", v1, "--quantum", "7s")[0] == 2


def test_monitor_stage5_batch(v1, corpus):
    code, out, _ = run("monitor", v1, "--trace", corpus / "stage5.trace")
    assert code == 1 and "R3" in out and out.endswith("1 violation(s) over 6 tock(s)\n")


def test_monitor_batch_json(v1, corpus):
    code, out, _ = run("monitor", v1, "--trace", corpus / "stage5.trace", "--json")
    (f,) = json.loads(out)
    assert (f["kind"], f["rules"]) == ("violation", ["R3"])


def test_monitor_empty_trace(v1, corpus):
    assert run("monitor", v1, "--trace", corpus / "empty.trace")[0] == 0


def test_monitor_stream(v1):
    code, out, _ = run("monitor", v1, stdin=STAGE5.replace(", ", "\n") + "\n")
    lines = [json.loads(x) for x in out.splitlines()]
    assert code == 1 and len(lines) == 14
    hit = [i for i, x in enumerate(lines) if x["violations"]]
    assert hit == [11] and lines[11]["violations"][0]["rules"] == ["R3"]


def test_monitor_stream_strict_end_line(v1):
    code, out, _ = run("monitor", v1, "--strict", stdin="SmokeDetectorAlarm\ntock\n")
    last = json.loads(out.splitlines()[-1])
    assert code == 1 and last["end"] is True and last["violations"][0]["rules"] == ["R2"]


def test_monitor_stream_bad_token(v1):
    code, _, err = run("monitor", v1, stdin="tock\nDance\n")
    assert code == 2 and err.startswith("<stdin>:2:")


def test_verify_counterexample(v1, corpus):
    code, out, _ = run("verify", v1, "--model", corpus / "delayed_fetch.smodel")
    assert code == 1
    assert out.splitlines()[:2] == ["counterexample: violates R3", STAGE5]


def test_verify_json(v1, corpus):
    code, out, _ = run("verify", v1, "--model", corpus / "delayed_fetch.smodel", "--json")
    body = json.loads(out)
    assert body["trace"] == STAGE5 and body["rules"] == ["R3"] and body["conformant"] is False


def test_verify_conformant(v2, corpus):
    code, out, err = run("verify", v2, "--model", corpus / "prompt_responder.smodel")
    assert code == 0
    assert out == "Conformant at horizon 8 (bounded exploration, not a proof)\n"
    assert "HorizonTooSmall" in err


def test_verify_requires_model(v1):
    assert run("verify", v1)[0] == 2


def test_fmt_round_trip(v1, tmp_path):
    code, out, _ = run("fmt", v1)
    assert code == 0 and out == v1.read_text()
    messy = tmp_path / "m.sleec"
    messy.write_text(v1.read_text().replace("\n", "   \n").replace(" then", "   then"))
    assert run("fmt", messy, "--check")[0] == 1
    assert run("fmt", messy, "--write")[0] == 0
    assert messy.read_text() == v1.read_text()


def test_fmt_write_and_check_exclusive(v1):
    assert run("fmt", v1, "--write", "--check")[0] == 2


def test_no_color_in_pipes(v1, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    assert "\x1b[" not in run("analyze", v1)[1]


@pytest.mark.skipif(shutil.which("sleec") is None, reason="console script not installed")
def test_console_script(v1):
    proc = subprocess.run(["sleec", "check", str(v1)], capture_output=True, text=True)
    assert proc.returncode == 0


def test_module_entry_point(v1):
    proc = subprocess.run([sys.executable, "-m", "sleec.cli", "check", str(v1)], capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout
