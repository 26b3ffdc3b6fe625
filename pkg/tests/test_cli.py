import csv
import json
from pathlib import Path

import pytest

from iqc_lmi.cli import EXIT_CERTIFIED, EXIT_ERROR, EXIT_NOT_CERTIFIED, main

GOLDEN = Path(__file__).parent / "golden"


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.mark.slow
def test_example_writes_outputs(tmp_path, capsys):
    rc = main(["example", "--nu", "1", "--samples", "10", "--out", str(tmp_path)])
    assert rc == EXIT_CERTIFIED
    assert "gamma=0.572" in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["certified"] and report["gamma"] == 0.572
    eig = _rows(tmp_path / "eigenvalues.csv")
    assert eig[0] == ["re", "im", "instance_id"] and len(eig) == 1 + 12 * 20
    bnd = _rows(tmp_path / "boundary.csv")
    assert bnd[0] == ["re", "im"] and len(bnd) > 1
    assert (tmp_path / "problem.dat-s").read_text().strip()
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["gamma"] == pytest.approx(report["gamma_exact"])


@pytest.mark.slow
def test_example_disk_not_certified(tmp_path):
    rc = main(["example", "--covering", "disk", "--samples", "2", "--out", str(tmp_path)])
    assert rc == EXIT_NOT_CERTIFIED
    assert not (tmp_path / "certificate.json").exists()
    assert json.loads((tmp_path / "report.json").read_text())["certified"] is False


def test_example_alias(tmp_path):
    rc = main(["example", "--nu", "0", "--test", "lmi-region-static", "--samples", "2", "--out", str(tmp_path)])
    assert rc == EXIT_CERTIFIED
    assert json.loads((tmp_path / "report.json").read_text())["config"]["test_kind"] == "LmiRegionStatic"


def test_analyze_golden(tmp_path, capsys):
    rc = main(["analyze", "--plant", str(GOLDEN / "plant.json"), "--set", str(GOLDEN / "valueset.json"),
               "--recipe", str(GOLDEN / "recipe.json"), "--performance", "--out", str(tmp_path)])
    assert rc == EXIT_CERTIFIED
    summary = json.loads(capsys.readouterr().out)
    assert summary["certified"]
    assert (tmp_path / "certificate.json").exists()


def test_missing_file_is_error(tmp_path):
    rc = main(["analyze", "--plant", str(tmp_path / "nope.json"), "--set", str(GOLDEN / "valueset.json"),
               "--recipe", str(GOLDEN / "recipe.json")])
    assert rc == EXIT_ERROR


def test_bad_static_filter_is_error(tmp_path):
    assert main(["example", "--nu", "2", "--test", "LmiRegionStatic", "--out", str(tmp_path)]) == EXIT_ERROR


def test_usage_error():
    with pytest.raises(SystemExit):
        main(["example"])
