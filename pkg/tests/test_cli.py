import json
from pathlib import Path

import pytest

from asvattack.campaign.records import read_records
from asvattack.cli import build_parser, main
from conftest import tiny_config, write_config

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = ["attack", "replay", "detect", "report", "run", "manifest", "toy-init", "toy-build"]


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err.strip().splitlines()[-1]) if err.strip() else None)


@pytest.mark.parametrize("command", [None] + COMMANDS)
def test_help_matches_golden(capsys, monkeypatch, command):
    monkeypatch.setenv("COLUMNS", "100")
    with pytest.raises(SystemExit) as ex:
        main(([command] if command else []) + ["--help"])
    assert ex.value.code == 0
    text = capsys.readouterr().out
    assert text == (GOLDEN / f"help_{command or 'main'}.txt").read_text()


def test_help_lists_every_flag(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)


def test_invalid_key_exits_2_without_output(tmp_path, capsys, monkeypatch_env):
    cfg = write_config(tmp_path, tiny_config(attack={"stepz": 3}))
    code, _, err = _run(capsys, "attack", cfg, "--method", "pgd")
    assert code == 2 and err["exit_code"] == 2 and err["error"] == "ConfigError"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["campaign.yaml"]


def test_missing_trial_list_exits_3(tmp_path, capsys, monkeypatch_env):
    cfg = tiny_config()
    cfg["data"]["trial_list"] = str(tmp_path / "nope.txt")
    code, _, err = _run(capsys, "attack", write_config(tmp_path, cfg), "--method", "pgd")
    assert code == 3 and err["exit_code"] == 3


def test_missing_model_exits_3(tmp_path, capsys, monkeypatch_env):
    cfg = tiny_config()
    cfg["models"][1]["path"] = str(tmp_path / "gone.asvm")
    code, _, err = _run(capsys, "attack", write_config(tmp_path, cfg), "--method", "pgd", "--surrogates", "xvec")
    assert code == 3


def test_report_before_attack_exits_3(tmp_path, capsys, monkeypatch_env):
    code, _, _ = _run(capsys, "report", write_config(tmp_path, tiny_config()))
    assert code == 3


def test_surrogate_count_checked(tmp_path, capsys, monkeypatch_env):
    cfg = write_config(tmp_path, tiny_config())
    assert _run(capsys, "attack", cfg, "--method", "pgd", "--surrogates", "xvec,ecapa")[0] == 2
    assert _run(capsys, "attack", cfg, "--method", "ensemble", "--surrogates", "xvec")[0] == 2
    assert _run(capsys, "attack", cfg, "--method", "pgd", "--surrogates", "wav2vec")[0] == 2


def test_manifest_accounting_only(tmp_path, capsys, monkeypatch_env):
    cfg = tiny_config(models=("xvec", "ecapa", "resnet", "rawnet"),
                      speakers=("speaker_high", "speaker_medium", "speaker_low"),
                      mics=("mic_ios", "mic_android_high", "mic_android_low"))
    code, out, _ = _run(capsys, "manifest", write_config(tmp_path, cfg), "--base-count", 4368)
    assert code == 0 and out["expected_total"] == 314496


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny campaign on the full 3 x 3 grid, driven stage by stage through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root, tiny_config(speakers=("speaker_high", "speaker_medium", "speaker_low"),
                                         mics=("mic_ios", "mic_android_high", "mic_android_low")))
    results = {}
    for name, argv in [
        ("pgd", ["attack", cfg, "--method", "pgd", "--surrogates", "xvec"]),
        ("ensemble", ["attack", cfg, "--method", "ensemble", "--surrogates", "ecapa,resnet"]),
        ("replay", ["replay", cfg]),
        ("report", ["report", cfg]),
        ("detect", ["detect", cfg, "--train-condition", "ota-bonafide"]),
    ]:
        results[name] = main([str(a) for a in argv])
    return root / "out", results


def test_stages_succeed(workspace):
    _, results = workspace
    assert results == {k: 0 for k in results}


def test_pgd_dispatch(workspace):
    out, _ = workspace
    recs = [r for r in read_records(out / "records.jsonl") if r.device == "digital" and r.method == "pgd"]
    assert recs and {r.surrogates for r in recs} == {("xvec",)}
    assert {r.victim for r in recs} == {"xvec", "ecapa", "resnet"}
    assert all(r.audio.startswith("audio/digital/pgd/s-xvec/") for r in recs)


def test_ensemble_is_a_leave_one_out_row(workspace):
    out, _ = workspace
    recs = [r for r in read_records(out / "records.jsonl") if r.method == "ensemble_pgd"]
    assert {r.row for r in recs} == {"w/o xvec"}
    assert {r.surrogates for r in recs} == {("ecapa", "resnet")}
    tags = {r.victim: r.tag for r in recs}
    assert tags == {"xvec": "ensemble-transfer", "ecapa": "ensemble-surrogate", "resnet": "ensemble-surrogate"}


def test_replay_expands_nine_times(workspace):
    out, _ = workspace
    recs = read_records(out / "records.jsonl")
    digital = [r for r in recs if r.device == "digital"]
    ota = [r for r in recs if r.device != "digital"]
    assert len(ota) == 9 * len(digital)
    assert len({r.device for r in ota}) == 9
    per = {}
    for r in ota:
        per.setdefault((r.trial, r.method, r.surrogates, r.victim), set()).add(r.device)
    assert all(len(v) == 9 for v in per.values())


def test_report_shapes(workspace):
    out, _ = workspace
    digital = (out / "table_digital.txt").read_text().splitlines()
    assert digital[0].split() == ["Attack", "S", "\\", "V", "xvec", "ecapa", "resnet"]
    assert digital[1].split()[:2] == ["PGD", "xvec"]
    assert any("w/o xvec" in line for line in digital)
    ota = (out / "table_ota.txt").read_text().splitlines()
    assert ota[0].split()[:3] == ["Victim", "xvec", "ecapa"] or "Victim" in ota[0]
    assert "ios" in ota[1] and "android_low" in ota[1]
    mats = json.loads((out / "matrices.json").read_text())
    assert mats["models"] == ["xvec", "ecapa", "resnet"] and len(mats["devices"]) == 9


def test_detect_ota_condition_gives_rows_4(workspace):
    out, _ = workspace
    doc = json.loads((out / "detection" / "eer.json").read_text())
    assert sorted(doc["rows"]) == ["4a", "4b"]
    for row in doc["rows"].values():
        assert row["train"] == "bonafide-ota" and len(row["cells"]) == 9
        assert 0.0 <= row["overall"] <= 100.0
    assert (out / "detection" / "scores" / "row4a.txt").exists()
