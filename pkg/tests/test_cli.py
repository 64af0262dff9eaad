import csv
import io
import json
import subprocess
import sys

import pytest

from compatpriors.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_csv_to_stdout(capsys):
    code, out, err = _run(capsys, "analyze", "--data", "hald", "--g", "13", "--d", "25", "--a", "125")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert ",".join(rows[0]) == "model,procedure,mean_choice,g,d,a,log_marginal,post_prob,gg_D,gg_G,gg_P"
    assert len(rows) == 17
    probs = {r[0]: float(r[7]) for r in rows[1:]}
    assert probs["{1,2}"] == pytest.approx(0.340, abs=0.005)


def test_analyze_json_file_and_summary(capsys, tmp_path):
    out_path = tmp_path / "r.json"
    code, out, err = _run(capsys, "analyze", "--data", "hald", "--procedure", "KL", "--procedure", "UC",
                          "--mean", "b0", "--prediction", "hald", "--format", "json", "--out", str(out_path),
                          "--summary")
    assert code == 0 and out == ""
    recs = json.loads(out_path.read_text())
    assert len(recs) == 16 * 2 * 2
    assert "KL" in err and "prediction" in err


def test_analyze_byte_identical(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["analyze", "--data", "hald", "--procedure", "KL", "--mean", "bbar", "--mean", "bhat",
                     "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_analyze_byte_identical_across_processes(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"run{i}.csv"
        subprocess.run([sys.executable, "-m", "compatpriors.cli", "analyze", "--data", "hald", "--procedure", "KL",
                        "--out", str(p)], check=True, env={"OMP_NUM_THREADS": str(i + 1), "PATH": ""})
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_usage_errors(capsys):
    assert _run(capsys, "analyze")[0] == 1
    assert _run(capsys, "analyze", "--data", "hald", "--procedure", "XYZ")[0] == 1
    assert _run(capsys, "analyze", "--data", "hald", "--g", "-2")[0] == 1
    assert _run(capsys, "illustrate", "--hyper", "5")[0] == 1
    assert _run(capsys, "illustrate", "--mu-grid", "1:2")[0] == 1
    assert _run(capsys, "frobnicate")[0] == 1
    assert _run(capsys, "derive-prior", "--data", "hald", "--model", "7")[0] == 1


def test_data_errors(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n1,2\n2,oops\n")
    code, _, err = _run(capsys, "analyze", "--data", str(bad))
    assert code == 2 and "row 3, column 2" in err
    assert _run(capsys, "analyze", "--data", str(tmp_path / "nope.csv"))[0] == 2
    dup = tmp_path / "dup.csv"
    dup.write_text("y,x,c\n1,0,1\n2,1,1\n3,5,1\n4,2,1\n")
    assert _run(capsys, "analyze", "--data", str(dup))[0] == 2


def test_simulate(capsys):
    code, out, _ = _run(capsys, "simulate", "--truth", "M1", "--replicates", "3", "--hyper", "10:1", "--seed", "4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "truth,d,a,procedure,mean_choice,frequency"
    assert len(lines) == 10


def test_illustrate(capsys, tmp_path):
    p = tmp_path / "ill.csv"
    code, out, _ = _run(capsys, "illustrate", "--hyper", "5:1", "--hyper", "3:25", "--mu-grid=-1:1:5",
                        "--out", str(p))
    assert code == 0
    lines = p.read_text().splitlines()
    assert lines[0] == "mu,procedure,d,a,prob"
    assert len(lines) == 1 + 2 * 4 * 5


def test_derive_prior_mean_model_kl(capsys, tmp_path):
    data = tmp_path / "m.csv"
    data.write_text("y,x\n" + "".join(f"{i % 3},{i}\n" for i in range(12)))
    code, out, _ = _run(capsys, "derive-prior", "--data", str(data), "--model", "", "--procedure", "KL",
                        "--mean", "b0", "--d", "5", "--a", "1")
    assert code == 0
    rec = json.loads(out)
    assert rec["model"] == "{}"
    assert rec["d"] < 5 and abs(rec["diagnostics"]["solver_residual"]) <= 1e-10


def test_derive_prior_hald(capsys):
    code, out, _ = _run(capsys, "derive-prior", "--data", "hald", "--model", "1,2", "--procedure", "UC",
                        "--g", "13", "--d", "25", "--a", "125")
    assert code == 0
    rec = json.loads(out)
    assert rec["model"] == "{1,2}" and rec["d"] == 27.0 and len(rec["b"]) == 3


def test_check_command(capsys):
    code, out, _ = _run(capsys, "check")
    assert code == 0
    assert out.count("PASS") == 11 and "FAIL" not in out
