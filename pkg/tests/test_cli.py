import json

import pytest

from poissoncluster.cli import main


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_sample_is_byte_identical_for_a_fixed_seed(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sample", "--seed", "7", "--out", str(a), "--quick"]) == 0
    assert main(["sample", "--seed", "7", "--out", str(b), "--quick"]) == 0
    assert _files(a) == _files(b)
    assert "SCHEMA.md" in _files(a)
    assert "manifest.json" in _files(a)


def test_floats_written_with_full_precision(tmp_path, capsys):
    main(["laplace", "--out", str(tmp_path), "--quick"])
    csvs = [p for p in tmp_path.iterdir() if p.suffix == ".csv"]
    assert csvs
    body = csvs[0].read_text().splitlines()[1:]
    fields = [x for row in body for x in row.split(",")]
    floats = [x for x in fields if "." in x and "e" not in x.lower()]
    assert any(len(x.lstrip("-").replace(".", "").lstrip("0")) >= 15 for x in floats)


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "model": {"dimension": 0}}))
    assert main(["sample", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_blowup_properness_fails(tmp_path, capsys):
    assert main(["properness", "--config", "blowup", "--out", str(tmp_path), "--quick"]) == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert any(e["type"] == "divergence" for e in manifest["errors"])


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
