import json
from pathlib import Path

import numpy as np
import pytest

from ttsforge import dsp
from ttsforge.cli import main
from ttsforge.embfile import write_emb

GOLDEN = Path(__file__).parent / "golden" / "filter_report.jsonl"


@pytest.fixture(scope="module")
def fixtures_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx")
    assert main(["--quiet", "make-fixtures", "--out", str(out), "--seed", "3"]) == 0
    return out


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]


class TestFilter:
    def test_golden(self, fixtures_dir, tmp_path):
        code = main([
            "--quiet", "filter", "--manifest", str(fixtures_dir / "manifest.jsonl"),
            "--policy", str(fixtures_dir / "policy.cfg"),
            "--out-accepted", str(tmp_path / "a.jsonl"), "--out-report", str(tmp_path / "r.jsonl"),
        ])
        assert code == 0
        assert (tmp_path / "r.jsonl").read_bytes() == GOLDEN.read_bytes()
        assert [r["id"] for r in read_jsonl(tmp_path / "a.jsonl")] == ["r6-pass"]

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("")
        code = main(["--quiet", "filter", "--manifest", str(tmp_path / "m.jsonl"),
                     "--out-accepted", str(tmp_path / "a"), "--out-report", str(tmp_path / "r")])
        assert code == 0
        assert (tmp_path / "a").read_text() == "" and (tmp_path / "r").read_text() == ""

    def test_unreadable_audio(self, tmp_path):
        (tmp_path / "m.jsonl").write_text('{"id": "u", "audio": "missing.wav", "text": "x"}\n')
        code = main(["--quiet", "filter", "--manifest", str(tmp_path / "m.jsonl"),
                     "--out-accepted", str(tmp_path / "a"), "--out-report", str(tmp_path / "r")])
        assert code == 0
        assert read_jsonl(tmp_path / "r") == [{"id": "u", "status": "reject", "rule": "unreadable", "value": None}]

    def test_malformed_manifest(self, tmp_path, capsys):
        (tmp_path / "m.jsonl").write_text('{"id": "u", "audio": "x.wav", "text": "x"}\n{"id": "v"}\n')
        code = main(["--quiet", "filter", "--manifest", str(tmp_path / "m.jsonl"),
                     "--out-accepted", str(tmp_path / "a"), "--out-report", str(tmp_path / "r")])
        assert code == 2
        assert "line 2" in capsys.readouterr().err

    def test_all_rejected_is_success(self, tmp_path):
        (tmp_path / "m.jsonl").write_text('{"id": "u", "audio": "x.wav", "text": "x", "duration": 0.1}\n')
        code = main(["--quiet", "filter", "--manifest", str(tmp_path / "m.jsonl"),
                     "--out-accepted", str(tmp_path / "a"), "--out-report", str(tmp_path / "r")])
        assert code == 0
        assert read_jsonl(tmp_path / "r")[0]["rule"] == "duration-min"


class TestEval:
    def test_fixture_pairs(self, fixtures_dir, tmp_path):
        out = tmp_path / "e.jsonl"
        assert main(["--quiet", "eval", "--pairs", str(fixtures_dir / "pairs.jsonl"),
                     "--metrics", "cer,secs,sbs,de,mos", "--out", str(out)]) == 0
        rows = {r["id"]: r for r in read_jsonl(out)}
        assert rows["identical-text"]["cer"] == 0.0
        assert rows["half-duration"]["duration_equality"] == 0.5
        assert rows["same-embeddings"]["speech_bert"] == pytest.approx(1.0, abs=1e-9)
        assert "cer" not in rows["same-embeddings"]
        assert rows["file-embeddings"]["smos"] == 4.25
        assert all("errors" not in r for r in rows.values())

    def test_missing_inputs_are_absent(self, tmp_path):
        (tmp_path / "p.jsonl").write_text('{"id": "a", "hypothesis": "ab", "reference": "abc"}\n')
        assert main(["--quiet", "eval", "--pairs", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "o")]) == 0
        assert read_jsonl(tmp_path / "o") == [{"id": "a", "cer": 1 / 3}]

    def test_bad_files_recorded_not_fatal(self, tmp_path):
        write_emb(np.ones((2, 3)), tmp_path / "a.emb")
        write_emb(np.ones((2, 4)), tmp_path / "b.emb")
        (tmp_path / "p.jsonl").write_text(
            '{"id": "a", "gen_emb": "a.emb", "ref_emb": "b.emb", "gen_audio": "nope.wav", "ref_duration": 1.0}\n'
        )
        assert main(["--quiet", "eval", "--pairs", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "o")]) == 0
        row = read_jsonl(tmp_path / "o")[0]
        assert len(row["errors"]) == 2 and set(row) == {"id", "errors"}

    def test_baseline_embeddings_from_audio(self, tmp_path):
        clip = dsp.tone(440.0, 1.0, 16000)
        dsp.write_wav(clip, tmp_path / "a.wav")
        (tmp_path / "p.jsonl").write_text('{"id": "a", "gen_audio": "a.wav", "ref_audio": "a.wav"}\n')
        assert main(["--quiet", "eval", "--pairs", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "o")]) == 0
        row = read_jsonl(tmp_path / "o")[0]
        assert row["secs"] == pytest.approx(1.0) and row["speech_bert"] == pytest.approx(1.0)
        assert row["duration_equality"] == 1.0

    @pytest.mark.parametrize(
        "line",
        ['{"hypothesis": "a"}', '{"id": "a", "gen_duration": "2"}', "nope", '{"id": "a", "ratings": [1, "x"]}'],
    )
    def test_schema_violation(self, tmp_path, line):
        (tmp_path / "p.jsonl").write_text(line + "\n")
        assert main(["--quiet", "eval", "--pairs", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "o")]) == 2

    def test_unknown_metric(self, tmp_path):
        (tmp_path / "p.jsonl").write_text('{"id": "a"}\n')
        assert main(["--quiet", "eval", "--pairs", str(tmp_path / "p.jsonl"), "--metrics", "wer",
                     "--out", str(tmp_path / "o")]) == 2


class TestSelftestAndLosses:
    @pytest.mark.parametrize("argv", [["kernel", "selftest"], ["losses", "selftest"]])
    def test_selftests_pass(self, argv, capsys):
        assert main(["--quiet", *argv]) == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        assert lines[-1]["ok"] is True
        assert all(x["status"] == "pass" for x in lines[:-1])

    def test_losses_eval(self, fixtures_dir, capsys):
        code = main(["--quiet", "losses", "eval", "--trace", str(fixtures_dir / "traces.jsonl"),
                     "--weights", str(fixtures_dir / "weights.cfg"),
                     "--mel-real", str(fixtures_dir / "emb" / "mel_real.emb"),
                     "--mel-fake", str(fixtures_dir / "emb" / "mel_fake.emb")])
        assert code == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        rows, summary = lines[:-1], lines[-1]
        assert len(rows) == 3
        expected = sum(r["adv_g"] + 2.0 * r["fm"] for r in rows) + 45.0 * summary["mel"]
        assert summary["generator_total"] == pytest.approx(expected, rel=1e-12)
        assert summary["discriminator_total"] == pytest.approx(sum(r["adv_d"] for r in rows), rel=1e-12)


class TestConfigHandling:
    def test_config_file_and_precedence(self, fixtures_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"manifest = {fixtures_dir / 'manifest.jsonl'}\n"
            f"out-accepted = {tmp_path / 'from_file_a'}\n"
            f"out_report = {tmp_path / 'from_file_r'}\n"
        )
        code = main(["--quiet", "--config", str(cfg), "filter", "--out-report", str(tmp_path / "flag_r")])
        assert code == 0
        assert (tmp_path / "from_file_a").exists()
        assert (tmp_path / "flag_r").exists() and not (tmp_path / "from_file_r").exists()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("colour = blue\n")
        assert main(["--quiet", "--config", str(cfg), "make-fixtures", "--out", str(tmp_path / "x")]) == 2

    def test_unknown_flag(self):
        assert main(["--quiet", "filter", "--bogus", "1"]) == 2

    def test_missing_required(self, capsys):
        assert main(["--quiet", "eval", "--pairs", "p.jsonl"]) == 2
        assert "--out" in capsys.readouterr().err

    def test_echoes_resolved_config(self, tmp_path, capsys):
        assert main(["make-fixtures", "--out", str(tmp_path / "fx"), "--seed", "5"]) == 0
        err = capsys.readouterr().err
        assert '"seed": 5' in err and "resolved config" in err

    def test_quiet_suppresses_echo(self, tmp_path, capsys):
        assert main(["--quiet", "make-fixtures", "--out", str(tmp_path / "fx")]) == 0
        assert capsys.readouterr().err == ""


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_make_fixtures_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["--quiet", "--seed", "11", "make-fixtures", "--out", str(tmp_path / name)]) == 0
    assert main(["--quiet", "--seed", "12", "make-fixtures", "--out", str(tmp_path / "c")]) == 0
    a, b, c = (tree_bytes(tmp_path / n) for n in "abc")
    assert a == b
    assert a != c
