import csv
import json
from types import SimpleNamespace

import pytest

from uttgenre import cli

SMALL = ["--n-sessions", "30", "--utterances-mean", "60"]
FAST = ["--n-max", "3", "--restarts", "1", "--jobs", "1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--out-dir", d, "--seed", 2, *SMALL,
               "--transcript-turns", 12) == 0
    return d


def test_defaults_match_published_thresholds():
    c = cli.PipelineConfig()
    assert (c.q, c.n_max, c.rf_min, c.rg_min, c.pv_max) == (3, 20, 0.5, 0.05, 0.05)


def test_config_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# settings\nq = 4\nn-max = 7  # inline\nseed=9\n")
    args = cli.build_parser().parse_args(["mine", "--config", str(f), "--q", "5"])
    cfg = cli.resolve_config(args)
    assert (cfg.q, cfg.n_max, cfg.seed, cfg.pv_max) == (5, 7, 9, 0.05)


@pytest.mark.parametrize("text", ["q 3\n", "bogus = 1\n", "q = three\n"])
def test_bad_config_file(tmp_path, text, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    assert run("ingest", "--config", f, "--out-dir", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_conflicting_cutoffs(tmp_path, capsys):
    assert run("ingest", "--high-cutoff", 30, "--low-cutoff", 40, "--out-dir", tmp_path) == 1
    assert "below high_cutoff" in capsys.readouterr().err


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        run("frobnicate")
    assert e.value.code != 0


def test_missing_corpus(tmp_path, capsys):
    assert run("features", "--out-dir", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_config_hash_changes_with_settings():
    assert cli.PipelineConfig().digest() != cli.PipelineConfig(q=4).digest()


def test_ingest_and_features(sim, tmp_path):
    assert run("ingest", "--corpus", sim, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "validation.json").read_text())
    assert rep["artifact"] == "validation-report" and rep["config"]["seed"] == 0
    assert run("features", "--corpus", sim, "--out-dir", tmp_path) == 0
    lines = (tmp_path / "features.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    header = next(csv.reader([lines[2]]))
    assert header == ["utterance_id", "session_id", "d", "sr", "p_mu", "p_std", "p_iqr",
                      "i_mu", "i_std", "i_iqr"]


def test_mine_without_salient_genres_warns(sim, tmp_path, capsys):
    assert run("mine", "--corpus", sim, "--out-dir", tmp_path, "--pv-max", 1e-12, *FAST) == 0
    out = json.loads((tmp_path / "genres.json").read_text())
    assert out["genres"] == []
    assert "no salient genres" in capsys.readouterr().err


def test_classify_with_mined_genres(sim, tmp_path):
    assert run("mine", "--corpus", sim, "--out-dir", tmp_path, *FAST) == 0
    assert run("classify", "--corpus", sim, "--out-dir", tmp_path, *FAST,
               "--genres", tmp_path / "genres.json") == 0
    rep = json.loads((tmp_path / "cv_report.json").read_text())
    assert [m["method"] for m in rep["methods"]] == ["genre", "pattern-baseline"]
    assert "genres" in rep["inputs"]


def test_sweep_q_layout(sim, tmp_path):
    assert run("sweep-q", "--corpus", sim, "--out-dir", tmp_path, "--qs", "2,3", *FAST) == 0
    rows = list(csv.reader((tmp_path / "sweep_q.csv").read_text().splitlines()[1:]))
    assert rows[0][:2] == ["Q", "method"]
    assert [(r[0], r[1]) for r in rows[1:]] == [
        ("2", "genre"), ("2", "pattern-baseline"), ("3", "genre"), ("3", "pattern-baseline")]


def test_align_command(sim, tmp_path):
    assert run("align", "--reference", sim / "reference.json",
               "--hypothesis", sim / "hypothesis.jsonl", "--out-dir", tmp_path) == 0
    out = json.loads((tmp_path / "turns.json").read_text())
    assert out["a_min"] == 5 and out["turns"]


def test_pipeline_is_byte_identical(tmp_path):
    blobs = []
    for k, jobs in enumerate((1, 2)):
        d = tmp_path / f"run{k}"
        assert run("simulate", "--out-dir", d, *SMALL) == 0
        j = ["--n-max", "3", "--restarts", "1", "--jobs", jobs]
        assert run("mine", "--corpus", d, "--out-dir", d, *j) == 0
        assert run("classify", "--corpus", d, "--out-dir", d, *j) == 0
        blobs.append([(d / n).read_bytes() for n in
                      ("utterances.jsonl", "ground_truth.json", "genres.json", "cv_report.json")])
    assert blobs[0] == blobs[1]
