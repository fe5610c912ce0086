import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from homwave.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_function(path, values, ids=("p0", "p1", "p2", "p3")):
    path.write_text("point_id,value\n" + "".join(f"{i},{v!r}\n" for i, v in zip(ids, values)))
    return str(path)


def test_gen_space_roundtrips(capsys, tmp_path):
    code, out, _ = run(capsys, "gen-space", "--fixture", "line4")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "space/v1" and len(doc["points"]) == 4
    (tmp_path / "s.json").write_text(out)
    code, out2, _ = run(capsys, "gen-space", "--space", str(tmp_path / "s.json"))
    assert code == 0 and json.loads(out2)["points"] == doc["points"]


def test_dump_dyadic(capsys, tmp_path):
    code, out, _ = run(capsys, "dump-dyadic", "--fixture", "line4", "--delta", "0.5")
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["level", "center_id", "point_id"]
    assert ["-1", "p2", "p3"] in rows
    assert run(capsys, "dump-dyadic", "--fixture", "ring:16", "--out", str(tmp_path))[0] == 0
    assert (tmp_path / "cubes.csv").exists() and (tmp_path / "nets.csv").exists()


def test_dump_dyadic_random_is_seeded(capsys):
    a = run(capsys, "dump-dyadic", "--fixture", "line4", "--delta", "0.5", "--tiebreak", "random", "--seed", "4")[1]
    b = run(capsys, "dump-dyadic", "--fixture", "line4", "--delta", "0.5", "--tiebreak", "random", "--seed", "4")[1]
    assert a == b


def test_build_outputs(capsys, tmp_path):
    code, _, _ = run(capsys, "build", "--fixture", "cloud:32:2:1", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "build.json").read_text())
    assert doc["schema"] == "build/v1" and doc["wavelets"]["count"] == 31
    assert (tmp_path / "splines.csv").exists() and (tmp_path / "decay.csv").exists()


def test_build_smoothed(capsys):
    code, out, _ = run(capsys, "build", "--fixture", "line4", "--mode", "smoothed", "--samples", "8")
    assert code == 0 and json.loads(out)["params"]["mode"] == "smoothed"


def test_check_ok_and_failure(capsys):
    code, out, _ = run(capsys, "check", "--fixture", "line4")
    assert code == 0 and json.loads(out)["ok"]
    code, _, err = run(capsys, "check", "--fixture", "cloud:64:2:7", "--tol", "parseval=2.3e-16")
    assert code == 1
    assert json.loads(err)["error"] == "check_failed"


def test_transform_roundtrip(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [0.0, 1.0, 2.0, 3.0])
    code, out, _ = run(capsys, "transform", "--fixture", "line4", "--delta", "0.5", "--function", f)
    assert code == 0
    assert out.splitlines()[0] == "kind,level,beta_id,value"
    (tmp_path / "c.csv").write_text(out)
    code, out, _ = run(capsys, "transform", "--fixture", "line4", "--delta", "0.5", "--inverse", "--coeffs", str(tmp_path / "c.csv"))
    vals = [float(r["value"]) for r in csv.DictReader(out.splitlines())]
    assert code == 0 and np.allclose(vals, [0, 1, 2, 3], atol=1e-12)


def test_transform_json(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [0.0, 1.0, 2.0, 3.0])
    code, out, _ = run(capsys, "transform", "--fixture", "line4", "--function", f, "--format", "json")
    assert code == 0 and json.loads(out)["schema"] == "coeffs/v1"


def test_norms(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [0.0, 0.0, 1.0, 1.0])
    code, out, _ = run(capsys, "norms", "--fixture", "line4", "--delta", "0.5", "--function", f, "--norm", "bmo")
    assert code == 0 and json.loads(out)["value"] == 0.5
    code, out, _ = run(capsys, "norms", "--fixture", "line4", "--delta", "0.5", "--function", f)
    names = {v["norm"] for v in json.loads(out)["norms"]}
    assert {"bmo", "carleson", "h1_iv", "llog", "grand_maximal_l1"} <= names


def test_norms_grand_maximal_csv(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [1.0, 0.0, 0.0, 0.0])
    code, out, _ = run(capsys, "norms", "--fixture", "line4", "--function", f, "--norm", "grand_maximal", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "point_id,value"


def test_norms_atomic_rejects_nonzero_mean(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [1.0, 0.0, 0.0, 0.0])
    code, _, err = run(capsys, "norms", "--fixture", "line4", "--function", f, "--norm", "atomic")
    assert code == 2 and "message" in json.loads(err)


def test_decompose(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [0.0, 1.0, 2.0, 3.0])
    code, out, _ = run(capsys, "decompose", "--fixture", "line4", "--delta", "0.5", "--f", f, "--g", f)
    doc = json.loads(out)
    assert code == 0
    assert doc["pi3"] == pytest.approx({p: 1.25 for p in ("p0", "p1", "p2", "p3")}, abs=1e-12)
    assert doc["coarse_term"]["p0"] == pytest.approx(2.25, abs=1e-12)


def test_experiment_and_report(capsys, tmp_path):
    for n in (16, 32):
        out = tmp_path / f"run{n}"
        code, _, _ = run(capsys, "experiment", "--fixture", f"cloud:{n}:2:1", "--atoms", "3", "--functions", "2", "--out", str(out))
        assert code == 0
        assert (out / "experiment.json").exists() and (out / "experiment.csv").exists()
    rep = tmp_path / "rep"
    code, _, _ = run(capsys, "report", str(tmp_path / "run16"), str(tmp_path / "run32"), "--out", str(rep))
    assert code == 0
    rows = list(csv.DictReader((rep / "plots" / "ratios_vs_n.csv").read_text().splitlines()))
    assert [(r["quantile"], r["n"]) for r in rows if r["quantile"] == "max"] == [("max", "16"), ("max", "32")]
    assert len(rows) == 6
    assert (rep / "plots" / "ratios_vs_n.png").exists() and (rep / "report.json").exists()


def test_report_no_figures(capsys, tmp_path):
    code, _, _ = run(capsys, "build", "--fixture", "line4", "--out", str(tmp_path))
    code, _, _ = run(capsys, "report", "--out", str(tmp_path), "--no-figures")
    assert code == 0
    assert (tmp_path / "plots" / "decay.csv").exists()
    assert not (tmp_path / "plots" / "decay.png").exists()


def test_report_empty_dir_warns(capsys, tmp_path):
    code, _, err = run(capsys, "report", "--out", str(tmp_path), "--no-figures")
    assert code == 0 and "warning" in json.loads(err)


def test_report_corrupt_input(capsys, tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    code, _, err = run(capsys, "report", "--out", str(tmp_path), "--no-figures")
    assert code == 2 and json.loads(err)["error"] == "FormatError"


@pytest.mark.parametrize(
    "argv",
    [
        ["build", "--fixture", "torus:3"],
        ["build", "--fixture", "line4", "--delta", "0.75"],
        ["check", "--fixture", "line4", "--tol", "parseval"],
        ["check", "--fixture", "line4", "--tol", "parseval=1e-30"],
        ["build", "--fixture", "line4", "--samples", "0"],
        ["build", "--space", "/nonexistent/space.json"],
        ["transform", "--fixture", "line4", "--inverse"],
        ["frobnicate"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    doc = json.loads(err.strip().splitlines()[-1])
    assert set(doc) == {"error", "message"}


def test_bad_function_file(capsys, tmp_path):
    f = write_function(tmp_path / "f.csv", [0.0, 1.0, 2.0], ids=("p0", "p1", "p9"))
    code, _, err = run(capsys, "norms", "--fixture", "line4", "--function", f, "--norm", "bmo")
    assert code == 2 and "p9" in json.loads(err)["message"]


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"fixture": "line4", "delta": 0.5}))
    code, out, _ = run(capsys, "build", "--config", str(cfg))
    doc = json.loads(out)
    assert code == 0 and doc["params"]["delta"] == 0.5 and doc["k_min"] == -2
    # explicit flags beat the config
    code, out, _ = run(capsys, "build", "--config", str(cfg), "--delta", "0.25")
    assert json.loads(out)["params"]["delta"] == 0.25
    cfg.write_text(json.dumps({"fixture": "line4", "colour": "red"}))
    assert run(capsys, "build", "--config", str(cfg))[0] == 2


def test_outputs_are_byte_identical(tmp_path):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        assert main(["build", "--fixture", "cloud:24:2:5", "--out", str(d)]) == 0
        assert main(["experiment", "--fixture", "line4", "--atoms", "2", "--functions", "2", "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "homwave.cli", "norms", "--fixture", "line4", "--norm", "lp"], capture_output=True, text=True)
    assert r.returncode == 2  # no --function given
    r = subprocess.run([sys.executable, "-m", "homwave.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
