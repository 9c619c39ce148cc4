import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from hormlab import cli, runs

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SCHEMAS = ROOT / "docs" / "schemas"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def schema(name):
    return json.loads((SCHEMAS / f"{name}.v1.json").read_text())


@pytest.mark.parametrize("command, config, code", [
    ("check-hormander", "grushin.ini", 0),
    ("check-hormander", "single_field.ini", 1),
    ("check-hormander", "malformed.ini", 2),
    ("bch", "grushin.ini", 0),
    ("bch", "commuting.ini", 0),
    ("bch", "bch_order7.ini", 2),
    ("flow", "grushin.ini", 0),
    ("subell", "elliptic.ini", 0),
    ("subell", "single_field.ini", 1),
    ("subell", "bad_thresholds.ini", 2),
])
def test_exit_codes(capsys, command, config, code):
    got, out, err = run(capsys, command, "--config", str(CONFIGS / config))
    assert got == code, err
    if code == 0:
        jsonschema.validate(json.loads(out), schema(command))


def test_malformed_reports_position(capsys):
    _, _, err = run(capsys, "check-hormander", "--config", str(CONFIGS / "malformed.ini"))
    assert "position 8" in err and err.count("position") == 1


def test_missing_config(capsys, tmp_path):
    code, _, _ = run(capsys, "bch", "--config", str(tmp_path / "nope.ini"))
    assert code == 2


def test_bad_jobs(capsys):
    code, _, _ = run(capsys, "bch", "--config", str(CONFIGS / "grushin.ini"), "--jobs", "0")
    assert code == 2


def test_bch_payload(capsys):
    _, out, _ = run(capsys, "bch", "--config", str(CONFIGS / "grushin.ini"))
    data = json.loads(out)
    assert data["free_residual_vanishes"]
    assert data["slope"] >= data["target_slope"] == 2.8 and not data["exact"]


def test_csv_and_out_dir(capsys, tmp_path):
    code = cli.main(["bch", "--config", str(CONFIGS / "grushin.ini"), "--format", "csv", "--out", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "bch.csv").read_text()
    header, first = text.splitlines()[:2]
    assert "," in header and len(first.split(",")) == len(header.split(","))


def test_seed_override_recorded(capsys):
    _, out, _ = run(capsys, "check-hormander", "--config", str(CONFIGS / "grushin.ini"), "--seed", "7")
    assert json.loads(out)["seed"] == 7


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["report", "--config", str(CONFIGS / "acc10_determinism.ini"), "--out", str(d)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    jsonschema.validate(json.loads((a / "report.json").read_text()), schema("report"))


def test_report_requires_sections(tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("[run]\nseed = 0\n")
    assert cli.main(["report", "--config", str(cfg)]) == 2


class TestConfigParsing:
    def test_fields_and_names(self):
        cfg = runs.parse_config_text(
            '[system]\nname = demo\ndimension = 2\nX1 = "1", "0"\nX2 = "0", "sin(x1)"\n')
        assert cfg.field_names == ["X1", "X2"] and cfg.system.count == 2

    @pytest.mark.parametrize("text", [
        '[system]\ndimension = 2\nX1 = "1"\n',
        '[system]\ndimension = two\nX1 = "1", "0"\n',
        '[system]\ndimension = 2\nX1 = "1", "x3"\n',
        '[run]\nseed = abc\n',
    ])
    def test_errors(self, text):
        with pytest.raises(runs.ConfigError):
            runs.parse_config_text(text)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hormlab", "check-hormander", "--config",
                           str(CONFIGS / "elliptic.ini")], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    jsonschema.validate(json.loads(proc.stdout), schema("check-hormander"))
