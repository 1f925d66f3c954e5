import csv
import json

import numpy as np
import pytest

from pqsmooth.cli import EXIT_IO, EXIT_OK, EXIT_PIPELINE, EXIT_VALIDATION, main
from pqsmooth.compat import certify_jacobian_floor
from pqsmooth.io import load_instance, load_report
from pqsmooth.compat import PiecewiseQuadMap


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture()
def identity_file(tmp_path, capsys):
    path = tmp_path / "identity.json"
    assert run(capsys, "generate", "--preset", "two-cell", "--a", "0,0", "--m", "0.5", "--out", path)[0] == 0
    return path


@pytest.fixture()
def quadrant_file(tmp_path, capsys):
    path = tmp_path / "quadrant.json"
    assert run(capsys, "generate", "--preset", "four-quadrant", "--a2", "0.1,0", "--a4", "0,0.1",
               "--m", "0.4", "--out", path)[0] == 0
    return path


# -- check -------------------------------------------------------------------------------


def test_check_identity_passes(identity_file, capsys, tmp_path):
    out = tmp_path / "rep.json"
    code, text, _ = run(capsys, "check", identity_file, "--out", out)
    assert code == EXIT_OK
    assert "PASS" in text
    rep = load_report(out)
    assert rep["ok"] and rep["lambda"] == 1.0
    assert (tmp_path / "rep.txt").read_text() == text


def test_check_broken_beta_names_coefficient(identity_file, capsys, tmp_path):
    doc = json.loads(identity_file.read_text())
    doc["pieces"][1][0][1] = 0.5
    doc.pop("lambda")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, text, _ = run(capsys, "check", bad)
    assert code == EXIT_VALIDATION
    assert "C1 violation at edge 0" in text
    assert "beta[0]" in text


def test_check_generated_lambda_matches_rerun(tmp_path, capsys):
    path = tmp_path / "g.json"
    run(capsys, "generate", "--grid", "3x3", "--amplitude", "0.05", "--seed", "7", "--out", path)
    out = tmp_path / "rep.json"
    assert run(capsys, "check", path, "--out", out)[0] == EXIT_OK
    data = load_instance(path)
    lam = certify_jacobian_floor(PiecewiseQuadMap.build(data.partition, data.pieces, data.m))
    assert abs(load_report(out)["lambda"] - lam) <= 1e-12


@pytest.mark.parametrize("text, where", [("{bad", ":1:2"), ('{"format": "x"}', "format"),
                                         ('{"format": "pqsmooth-instance", "version": 1, "x_breaks": [0, 1]}',
                                          "y_breaks")])
def test_check_parse_errors_have_context(tmp_path, capsys, text, where):
    path = tmp_path / "p.json"
    path.write_text(text)
    code, _, err = run(capsys, "check", path)
    assert code == EXIT_IO
    assert where in err


def test_check_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "check", tmp_path / "nope.json")
    assert code == EXIT_IO and "cannot read" in err


def test_check_stale_lambda_flagged(identity_file, capsys, tmp_path):
    doc = json.loads(identity_file.read_text())
    doc["lambda"] = 0.9
    path = tmp_path / "stale.json"
    path.write_text(json.dumps(doc))
    code, text, _ = run(capsys, "check", path)
    assert code == EXIT_VALIDATION and "stored lambda" in text


# -- smooth ------------------------------------------------------------------------------


def test_smooth_identity_trivial(identity_file, capsys, tmp_path):
    out = tmp_path / "s.json"
    code, _, _ = run(capsys, "smooth", identity_file, "--delta", "1e-3", "--out", out)
    assert code == EXIT_OK
    rep = load_report(out)
    assert rep["report"]["w21_error"] == 0.0
    assert rep["budget"]["total_sup_grad"] == 0.0


def test_smooth_quadrant_deterministic(quadrant_file, capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "smooth", quadrant_file, "--delta", "1e-2", "--out", a)[0] == EXIT_OK
    assert run(capsys, "smooth", quadrant_file, "--delta", "1e-2", "--out", b)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rep = load_report(a)
    assert rep["report"]["w21_error"] <= 1e-2
    assert rep["report"]["jacobian_floor"] >= 0.5 * rep["lambda"]
    assert rep["parameters"]["profile"] == "flat-exponential"


def test_smooth_machine_scale_delta_fails(quadrant_file, capsys, tmp_path):
    out = tmp_path / "f.json"
    code, text, _ = run(capsys, "smooth", quadrant_file, "--delta", "1e-30", "--out", out)
    assert code == EXIT_PIPELINE
    assert "budget unreachable" in text
    rep = load_report(out)
    assert not rep["ok"] and rep["diagnostics"]["trials"]


def test_smooth_invalid_instance_exit_1(identity_file, capsys, tmp_path):
    doc = json.loads(identity_file.read_text())
    doc["pieces"][1][1][5] = 1.0
    doc.pop("lambda")
    path = tmp_path / "c0.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "smooth", path, "--delta", "1e-2")
    assert code == EXIT_VALIDATION and "C0" in err


def test_smooth_rejects_nonpositive_delta(identity_file, capsys):
    with pytest.raises(SystemExit):
        main(["smooth", str(identity_file), "--delta", "0"])


# -- converge ----------------------------------------------------------------------------


def _fits(path):
    with open(path.with_name(path.stem + ".fit.csv")) as fh:
        return {r["metric"]: r["slope"] for r in csv.DictReader(fh)}


def test_converge_zero_feature_na(identity_file, capsys, tmp_path):
    out = tmp_path / "z.csv"
    assert run(capsys, "converge", identity_file, "--feature", "edge:0", "--out", out)[0] == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert all(float(r[k]) == 0.0 for r in rows for k in r if k != "eps")
    assert set(_fits(out).values()) == {"N/A"}


def test_converge_strip_slopes(tmp_path, capsys):
    inst = tmp_path / "strip.json"
    run(capsys, "generate", "--preset", "two-cell", "--a", "1,0", "--out", inst)
    out = tmp_path / "s.csv"
    assert run(capsys, "converge", inst, "--feature", "edge:0", "--out", out)[0] == EXIT_OK
    f = {k: float(v) for k, v in _fits(out).items()}
    assert 0.9 <= f["w21_total"] <= 1.1
    assert 0.9 <= f["sup_grad"] <= 1.1
    assert 1.8 <= f["sup_val"] <= 2.2


def test_converge_vertex_slopes(quadrant_file, capsys, tmp_path):
    out = tmp_path / "v.csv"
    assert run(capsys, "converge", quadrant_file, "--feature", "vertex:0", "--out", out)[0] == EXIT_OK
    f = {k: float(v) for k, v in _fits(out).items()}
    # the disk has area of order eps^2, so the integral error drops one order faster
    assert 1.9 <= f["w21_total"] <= 2.1
    assert 0.9 <= f["sup_grad"] <= 1.1
    assert 1.8 <= f["sup_val"] <= 2.2


def test_converge_csv_full_precision(quadrant_file, capsys, tmp_path):
    out = tmp_path / "v.csv"
    run(capsys, "converge", quadrant_file, "--feature", "vertex:0", "--out", out)
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["eps", "w21_total", "w21_hess", "sup_grad", "sup_val"]
    for r in rows:
        for v in r.values():
            assert float(repr(float(v))) == float(v)
    rep = load_report(out.with_suffix(".json"))
    assert [r["w21_total"] for r in rep["rows"]] == [float(r["w21_total"]) for r in rows]


def test_converge_unknown_feature(quadrant_file, capsys):
    code, _, err = run(capsys, "converge", quadrant_file, "--feature", "edge:9")
    assert code == EXIT_VALIDATION and "does not exist" in err


# -- generate ----------------------------------------------------------------------------


def test_generate_zero_amplitude_replicates_one_quadratic(tmp_path, capsys):
    path = tmp_path / "z.json"
    run(capsys, "generate", "--grid", "2x3", "--amplitude", "0", "--out", path)
    pieces = np.array(json.loads(path.read_text())["pieces"])
    assert pieces.shape == (6, 2, 6)
    assert (pieces == pieces[0]).all()


def test_generate_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(capsys, "generate", "--grid", "3x3", "--amplitude", "0.05", "--seed", "11", "--out", p)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_generated_file_checks(tmp_path, capsys, seed):
    path = tmp_path / "g.json"
    run(capsys, "generate", "--grid", "3x2", "--amplitude", "0.1", "--seed", seed, "--out", path)
    assert run(capsys, "check", path)[0] == EXIT_OK
    gen = json.loads(path.read_text())["generator"]
    assert gen["prng"] == "splitmix64" and gen["seed"] == seed


def test_generate_bad_grid(capsys, tmp_path):
    with pytest.raises(SystemExit):
        main(["generate", "--grid", "3by3", "--out", str(tmp_path / "x.json")])
