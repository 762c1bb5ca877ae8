import json

import pytest

from conftest import small_profile
from vppsim import cli
from vppsim.campaign import CampaignConfig, ConfigError, run_campaign
from vppsim.profile import save_profile
from vppsim.records import RecordError, read_records


def _cfg(tmp_path, **kw):
    base = dict(profiles=[small_profile(module_id="T0"), small_profile(module_id="T1", manufacturer_id="B")],
                rows=8, iterations=2, vpp_grid=(2.5, 2.0), tests=("rowhammer", "retention"),
                retention_vpps=(1.5,), out=tmp_path)
    base.update(kw)
    return CampaignConfig(**base)


def test_same_seed_byte_identical(tmp_path):
    run_campaign(_cfg(tmp_path / "a"))
    run_campaign(_cfg(tmp_path / "b"))
    assert (tmp_path / "a/records.jsonl").read_bytes() == (tmp_path / "b/records.jsonl").read_bytes()


def test_different_seed_differs(tmp_path):
    run_campaign(_cfg(tmp_path / "a"))
    run_campaign(_cfg(tmp_path / "b", seed=1))
    assert (tmp_path / "a/records.jsonl").read_bytes() != (tmp_path / "b/records.jsonl").read_bytes()


def test_interrupted_resume_matches(tmp_path):
    run_campaign(_cfg(tmp_path / "full"))
    with pytest.raises(InterruptedError):
        run_campaign(_cfg(tmp_path / "part"), stop_after=3)
    assert not (tmp_path / "part/records.jsonl").exists()
    run_campaign(_cfg(tmp_path / "part"), resume=True)
    assert (tmp_path / "full/records.jsonl").read_bytes() == (tmp_path / "part/records.jsonl").read_bytes()


def test_resume_discards_truncated_unit(tmp_path):
    run_campaign(_cfg(tmp_path / "full"))
    with pytest.raises(InterruptedError):
        run_campaign(_cfg(tmp_path / "part"), stop_after=2)
    units = sorted((tmp_path / "part/units").rglob("*.jsonl"))
    victim = units[-1]
    lines = victim.read_text().splitlines(True)
    victim.write_text("".join(lines[:-1]))  # drop the completion marker
    run_campaign(_cfg(tmp_path / "part"), resume=True)
    assert (tmp_path / "full/records.jsonl").read_bytes() == (tmp_path / "part/records.jsonl").read_bytes()


def test_record_kinds_and_provenance(tmp_path):
    recs = run_campaign(_cfg(tmp_path))
    kinds = {r["kind"] for r in recs}
    assert {"campaign", "module", "wcdp", "rowhammer", "retention"} <= kinds
    assert recs[0]["kind"] == "campaign"
    mods = [r for r in recs if r["kind"] == "module"]
    assert [m["module_id"] for m in mods] == ["T0", "T1"]
    assert mods[0]["vpps"] == [2.5, 2.0, 1.6]


@pytest.mark.parametrize("kw", [dict(tests=()), dict(tests=("bogus",)), dict(vpp_grid=()),
                                dict(vpp_grid=(0.5,)), dict(iterations=0), dict(rows=7)])
def test_bad_config(tmp_path, kw):
    with pytest.raises(ConfigError):
        run_campaign(_cfg(tmp_path, **kw))


def _yaml(tmp_path):
    path = tmp_path / "T0.yaml"
    save_profile(small_profile(module_id="T0"), path)
    return str(path)


def test_cli_empty_tests_exit_2(tmp_path, capsys):
    assert cli.main(["characterize", "--profile", _yaml(tmp_path), "--tests", "", "--out", str(tmp_path / "o")]) == 2


def test_cli_env_out_and_report(tmp_path, monkeypatch):
    monkeypatch.setenv("VPPSIM_OUT", str(tmp_path / "env"))
    args = ["characterize", "--profile", _yaml(tmp_path), "--rows", "8", "--iterations", "1", "--vpp-grid", "2.5,2.0"]
    assert cli.main(args) == 0
    assert (tmp_path / "env/records.jsonl").exists()
    assert cli.main(["report"]) == 0
    summary = json.loads((tmp_path / "env/report/summary.json").read_text())
    assert "normalized_at_vpp_min" in summary
    assert (tmp_path / "env/report/fig2.csv").exists()


def test_cli_report_rejects_tampered(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["characterize", "--profile", _yaml(tmp_path), "--rows", "8", "--iterations", "1",
                     "--vpp-grid", "2.5", "--out", str(out)]) == 0
    p = out / "records.jsonl"
    lines = p.read_text().splitlines(True)
    lines[3] = lines[3].replace('"row":', '"row": 1,"x":', 1) if '"row":' in lines[3] else lines[3][:-3] + "0}\n"
    p.write_text("".join(lines))
    with pytest.raises(RecordError):
        list(read_records(p))
    assert cli.main(["report", str(out)]) == 3
    assert "records.jsonl:4" in capsys.readouterr().err


def test_cli_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    ids = capsys.readouterr().out.split()
    assert {"A0", "B9", "C9"} <= set(ids)


def test_cli_validate_profile(tmp_path, capsys):
    good = _yaml(tmp_path)
    bad = tmp_path / "bad.yaml"
    bad.write_text("module_id: X\nvpp_min: 3.0\n")
    assert cli.main(["validate-profile", good]) == 0
    assert cli.main(["validate-profile", str(bad)]) == 1
