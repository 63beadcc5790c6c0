import json

import pytest

from main import cli


def run(capsys, *argv):
    code = cli(list(argv) + ["--quiet"])
    return code, capsys.readouterr().out


def test_schedule_construction(capsys):
    code, out = run(capsys, "construct", "--kind", "schedule", "--cuts", "0", "3", "7")
    assert code == 0
    data = json.loads(out)
    assert data["cuts"] == [0, 3, 7]
    assert data["u_sq"][0] == "49/36"
    assert data["growth_ok"]


def test_bad_schedule_is_a_usage_error(capsys):
    code, _ = run(capsys, "construct", "--kind", "schedule", "--cuts", "0", "3", "30", "300")
    assert code == 2


def test_carving_construction(capsys):
    code, out = run(capsys, "construct", "--kind", "carving", "--sigma", "01", "--i", "1", "--kmax", "4")
    assert code == 0
    data = json.loads(out)
    assert [(s["sigma"], s["i"]) for s in data["sets"]] == [("01", 1)]


def test_carving_audit(capsys):
    code, out = run(capsys, "construct", "--kind", "carving", "--kmax", "8", "--audit-paths", "3")
    assert code == 0
    assert json.loads(out)["status"] == "pass"


def test_function_json_with_negative_weight(capsys, tmp_path):
    target = tmp_path / "f.json"
    code, _ = run(
        capsys, "construct", "--kind", "function", "--slopes", "1/3", "1/2", "2/3", "--weights", "1", "1/4", "-1/8",
        "--kmax", "10", "--out", str(target),
    )
    assert code == 0
    data = json.loads(target.read_text())
    assert [t["weight"] for t in data["scheme"]["terms"]] == ["1/1", "1/4", "-1/8"]

    code, out = run(capsys, "integrate", "--f", str(target), "--at", "1/3")
    assert code == 0
    assert json.loads(out)["interval"] == ["0/1", "1/3"]


def test_integrate_with_certificates(capsys):
    code, out = run(capsys, "integrate", "--slopes", "1/3", "--kmax", "2", "--certify")
    assert code == 0
    data = json.loads(out)
    assert data["integral"]["norm_sq"] == "49/36"
    assert data["pettis"]["tail_bound"] == "1/3"
    assert data["bochner"]["divergent"] is False


def test_verify_single_lemma(capsys):
    code, out = run(capsys, "verify", "--lemma", "restricted-norm", "--kmax", "6", "--timing")
    assert code == 0
    data = json.loads(out)
    assert data["status"] == "pass"
    assert "ms" in data


def test_verify_params_file(capsys, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"kmax": 5, "depth": 2, "samples": 5}))
    code, out = run(capsys, "verify", "--lemma", "interval-monotone", "--params", str(params), "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "lemma,name,status,checked,failed"
    assert out.splitlines()[1].startswith("3.1-2,interval-monotone,pass,")


def test_verify_numbered_lemma(capsys):
    code, out = run(capsys, "verify", "--lemma", "3.2", "--kmax", "10")
    assert code == 0
    data = json.loads(out)
    assert (data["lemma"], data["name"], data["status"]) == ("3.2", "restricted-norm", "pass")


def test_verify_output_is_reproducible(capsys):
    argv = ["verify", "--lemma", "3.1-2", "--kmax", "6", "--samples", "20", "--seed", "7"]
    first = run(capsys, *argv)
    second = run(capsys, *argv)
    pooled = run(capsys, *argv, "--workers", "2")
    assert first[0] == 0
    assert first == second == pooled

    argv = ["blowup", "--slopes", "1/3", "--x", "0", "1/3", "--M", "4", "--kmax", "20", "--seed", "11"]
    assert run(capsys, *argv) == run(capsys, *argv)


def test_unknown_lemma_exits_two(capsys):
    assert cli(["verify", "--lemma", "nope", "--quiet"]) == 2


def test_infeasible_blowup_reports_minimal_kmax(capsys):
    code, out = run(
        capsys, "blowup", "--weights", "1", "1/4", "-1/8", "--slopes", "1/3", "1/2", "2/3", "--x", "0", "--M", "50",
        "--kmax", "10",
    )
    assert code == 1
    data = json.loads(out)
    assert data["status"] == "infeasible"
    assert data["minimal_kmax"] > 10


def test_blowup_pass(capsys):
    code, out = run(capsys, "blowup", "--slopes", "1/3", "--x", "0", "1/2", "--M", "4", "--kmax", "20")
    assert code == 0
    assert [w["status"] for w in json.loads(out)["witnesses"]] == ["pass", "pass"]


def test_family_csv(capsys):
    code, out = run(capsys, "family", "--check-ad", "--ts", "1/2", "1/3", "--depth", "30", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0].startswith("s,t,bound")


def test_family_witness(capsys):
    code, out = run(capsys, "family", "--witness", "--ts", "1/3", "1/2", "--weights", "1", "-1", "--depth", "12")
    assert code == 0
    assert json.loads(out)["horizon"] == 6


def test_quotient_table_csv(capsys):
    code, out = run(capsys, "table", "--slopes", "1/3", "--x", "0", "--hmin", "2^-6", "--kmax", "8", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "x,h,quot_sq_lo,quot_sq_hi,quot_sq_exact"
    assert len(lines) == 6


def test_csv_without_table_is_a_usage_error(capsys):
    code, _ = run(capsys, "integrate", "--slopes", "1/3", "--kmax", "2", "--format", "csv")
    assert code == 2


def test_missing_function_is_a_usage_error(capsys):
    code, _ = run(capsys, "integrate", "--at", "1/2")
    assert code == 2


@pytest.mark.parametrize("backend", ["linf", "banana"])
def test_bad_backend_exits_two(capsys, backend):
    code, _ = run(capsys, "table", "--slopes", "1/3", "--x", "0", "--backend", backend)
    assert code == 2


def test_environment_sets_the_depth(capsys, monkeypatch):
    monkeypatch.setenv("PETTIS_KMAX", "2")
    code, out = run(capsys, "integrate", "--slopes", "1/3")
    assert code == 0
    assert json.loads(out)["integral"]["norm_sq"] == "49/36"


def test_general_blowup_on_identity_frames(capsys):
    code, out = run(
        capsys, "blowup", "--mode", "general", "--slopes", "1/3", "2/3", "--weights", "1", "1/2", "--x", "0",
        "--M", "1/5", "--kmax", "4", "--backend", "l2",
    )
    assert code == 0
    witness = json.loads(out)["witnesses"][0]
    assert witness["mode"] == "general"
    assert witness["tau"] == "000"


def test_general_blowup_needs_cuts_past_kmax(capsys):
    code, _ = run(capsys, "blowup", "--mode", "general", "--slopes", "1/3", "--x", "0", "--M", "1", "--kmax", "9")
    assert code == 2
