import csv
import json

import numpy as np
import pytest

from sturmspec.cli import main
from sturmspec.config import (PRESETS, ConfigError, config_from_dict, dump_config, load_config, preset)
from sturmspec.potentials import FourierSeries, matrix_to_json


def read_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def problem_doc(T, H, Q, **extra):
    doc = {"schema_version": 1, "name": "t", "max_band": 6,
           "problem": {"T": matrix_to_json(T), "H": matrix_to_json(H), "Q": Q.to_json()}}
    doc.update(extra)
    return doc


@pytest.mark.parametrize("name", ["q0", "diag2", "star-delta", "star-deltaprime"])
def test_verify_presets_pass(name, tmp_path, capsys):
    assert main(["verify", "--preset", name, "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"]
    assert all(c["status"] == "pass" for c in summary["checks"])


def test_negative_control(tmp_path, capsys):
    assert main(["verify", "--preset", "negative-control", "--out", str(tmp_path)]) == 0
    checks = {c["id"]: c for c in json.loads((tmp_path / "summary.json").read_text())["checks"]}
    assert checks["reconstruction-shuffled"]["status"] == "expected-fail-pass"
    assert checks["reconstruction"]["status"] == "pass"
    assert "expected-fail-pass" in capsys.readouterr().out


def test_q0_spectrum_rows(tmp_path, capsys):
    assert main(["spectrum", "--preset", "q0", "--max-band", "10", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "eigenvalues.csv")
    assert len(rows) == 30
    assert all(float(r["kappa"]) == pytest.approx(0.0, abs=1e-10) for r in rows)
    assert "z_pred" not in rows[0]


def test_q0_deviations_vanish(tmp_path, capsys):
    assert main(["weights", "--preset", "q0", "--max-band", "10", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "deviations.csv")
    assert len(rows) == 10
    assert all(abs(float(v)) < 1e-9 for r in rows for k, v in r.items() if k != "n")


def test_star_spectrum_has_predictions(tmp_path, capsys):
    assert main(["spectrum", "--preset", "star-delta", "--max-band", "5", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "eigenvalues.csv")
    assert all(float(r["z"]) == pytest.approx(float(r["z_pred"]), abs=1e-10) for r in rows)
    rem = json.loads((tmp_path / "remainders.json").read_text())
    assert "partial_l2_alt" in rem


def test_json_format(tmp_path, capsys):
    assert main(["spectrum", "--preset", "diag2", "--max-band", "4", "--format", "json",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "eigenvalues.json").read_text())
    assert len(doc["rows"]) == 8 and doc["columns"][2] == "lambda"


def test_non_hermitian_h_is_invalid_input(tmp_path, capsys):
    H = np.array([[0.0, 1.0j], [0.0, 0.0]])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(problem_doc(np.diag([1.0, 0.0]), H, FourierSeries([np.zeros((2, 2))]))))
    assert main(["spectrum", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "H" in capsys.readouterr().err


def test_syntax_error_reports_position(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"schema_version": 1,\n  "name": }')
    assert main(["spectrum", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("schema_version"), "schema_version"),
    (lambda d: d.update(schema_version=7), "schema_version"),
    (lambda d: d["problem"].pop("T"), "problem.T"),
    (lambda d: d.update(max_band=0), "max_band"),
    (lambda d: d.update(graph={"edges": []}), None),
])
def test_config_field_errors(mutate, where):
    doc = problem_doc(np.diag([1.0, 0]), np.zeros((2, 2)), FourierSeries([np.eye(2)]))
    mutate(doc)
    with pytest.raises(ConfigError) as exc:
        config_from_dict(doc)
    if where:
        assert where in str(exc.value)


def test_bad_max_band_flag(capsys):
    assert main(["spectrum", "--preset", "q0", "--max-band", "0"]) == 2


@pytest.mark.parametrize("name", PRESETS)
def test_config_round_trip(name, tmp_path):
    cfg = preset(name)
    path = tmp_path / "c.json"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    assert dump_config(again) == dump_config(cfg)


def test_emitted_problem_reproduces_table(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectrum", "--preset", "coupled3", "--max-band", "6", "--out", str(a)]) == 0
    assert main(["spectrum", "--config", str(a / "problem.json"), "--out", str(b)]) == 0
    assert (a / "eigenvalues.csv").read_bytes() == (b / "eigenvalues.csv").read_bytes()


def test_determinism(tmp_path, capsys):
    outs = []
    for i, workers in enumerate(("1", "4")):
        d = tmp_path / str(i)
        assert main(["weights", "--preset", "star-delta", "--max-band", "6", "--workers", workers,
                     "--out", str(d)]) == 0
        outs.append([(d / f).read_bytes() for f in ("weights.json", "deviations.csv", "reconstruction.json")])
    assert outs[0] == outs[1]


def test_overlap_warning_record(tmp_path, capsys):
    a = 3.0
    zero = np.zeros((3, 3))
    Q = FourierSeries([zero, zero, np.diag([0.0, a, -a])])
    path = tmp_path / "ov.json"
    path.write_text(json.dumps(problem_doc(np.diag([1.0, 0, 0]), zero, Q)))
    assert main(["weights", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    w = json.loads((tmp_path / "o" / "warnings.json").read_text())
    assert w["bands_skipped"] == [1]
    assert w["records"][0]["kind"] == "contour-overlap" and w["records"][0]["band"] == 1
    weights = json.loads((tmp_path / "o" / "weights.json").read_text())
    assert [e["n"] for e in weights["bandI"]] == [2, 3, 4, 5, 6]
