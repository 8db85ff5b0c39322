import json

import numpy as np
import pytest

from uttgenre import corpus as cm
from uttgenre.corpus import CorpusError, IngestionConfig, assemble_corpus

from conftest import make_utt


def _write(tmp_path, utts, sessions, raw_lines=None):
    uf = tmp_path / "u.jsonl"
    sf = tmp_path / "s.csv"
    with open(uf, "w") as fh:
        for u in utts:
            fh.write(json.dumps(cm.utterance_record(u)) + "\n")
        for line in raw_lines or []:
            fh.write(line + "\n")
    with open(sf, "w") as fh:
        fh.write("session_id,therapist_id,empathy_rating\n")
        for row in sessions:
            fh.write(",".join(map(str, row)) + "\n")
    return uf, sf


def test_short_utterance_dropped_and_counted(tmp_path):
    u = make_utt("u1", "s1", 0.4, 3, [100, 120, 0])
    c = cm.load_corpus(*_write(tmp_path, [u], [("s1", "t1", 45)]))
    assert c.n_utterances == 0
    assert c.provenance["dropped_short"] == 1


def test_empty_file_is_an_error(tmp_path):
    with pytest.raises(CorpusError, match="no analyzable utterances"):
        cm.load_corpus(*_write(tmp_path, [], [("s1", "t1", 45)]))


def test_malformed_line_reports_line_number(tmp_path):
    u = make_utt("u1", "s1", 1.0, 3, [100, 120, 0])
    with pytest.raises(CorpusError, match="line 2"):
        cm.load_corpus(*_write(tmp_path, [u], [("s1", "t1", 45)], ["{not json"]))


def test_dangling_session_and_bad_hop(tmp_path):
    u = make_utt("u1", "nope", 1.0, 3, [100, 120, 0])
    with pytest.raises(CorpusError, match="unknown session_id"):
        cm.load_corpus(*_write(tmp_path, [u], [("s1", "t1", 45)]))
    rec = cm.utterance_record(make_utt("u1", "s1", 1.0, 3, [100, 120]))
    rec["hop_s"] = 0
    with pytest.raises(CorpusError, match="hop"):
        cm.load_corpus(*_write(tmp_path, [], [("s1", "t1", 45)], [json.dumps(rec)]))


def test_client_utterances_ignored():
    t = make_utt("u1", "s1", 1.0, 3, [100, 120])
    c_ = make_utt("u2", "s1", 1.0, 3, [100, 120], speaker="client")
    c = assemble_corpus([t, c_], [("s1", "t1", 45)])
    assert c.n_utterances == 1
    assert c.provenance["ignored_client"] == 1


def test_labels_follow_cutoffs():
    cfg = IngestionConfig()
    assert [cfg.label_for(r) for r in (42, 41.9, 36.1, 36, 9)] == \
        ["high", "excluded", "excluded", "low", "low"]
    with pytest.raises(CorpusError):
        IngestionConfig(high_cutoff=36, low_cutoff=40)


def test_rating_range_checked():
    with pytest.raises(CorpusError):
        assemble_corpus([], [("s1", "t1", 70)])


def test_label_split_on_synthetic_table_scale():
    from uttgenre import synth
    spec = synth.PlantSpec(genres=(), utterances_mean=3, utterances_sd=0, utterances_min=3)
    c, _ = synth.generate(spec, seed=0)
    assert c.label_counts() == {"high": 61, "low": 57, "excluded": 0}


def test_validation_report_flags_unvoiced():
    utts = [make_utt(f"u{i}", "s1", 1.0, 4, [100, 110, 120]) for i in range(197)]
    utts += [make_utt(f"x{i}", "s1", 1.0, 4, [0, 0, 0]) for i in range(3)]
    c = assemble_corpus(utts, [("s1", "t1", 50)])
    rep = cm.validate_corpus(c)
    assert rep.sessions[0]["n_utterances"] == 200
    assert rep.sessions[0]["n_pitch_analyzable"] == 197
    assert rep.flagged_unvoiced == ("x0", "x1", "x2")


def test_validation_means_on_table_scale_corpus(small_corpus):
    from uttgenre import synth
    c, truth = synth.generate(synth.preset("standard"), seed=4)
    rep = cm.validate_corpus(c)
    assert rep.mean_utterances_per_session == pytest.approx(211, abs=12)
    assert rep.mean_duration_s == pytest.approx(3.62, abs=0.15)


def test_round_trip_is_byte_identical(tmp_path, small_corpus):
    c, _ = small_corpus
    a = (tmp_path / "a.jsonl", tmp_path / "a.csv")
    b = (tmp_path / "b.jsonl", tmp_path / "b.csv")
    cm.write_corpus(c, *a)
    c2 = cm.load_corpus(*a)
    cm.write_corpus(c2, *b)
    assert a[0].read_bytes() == b[0].read_bytes()
    assert a[1].read_bytes() == b[1].read_bytes()
    assert cm.validate_corpus(c2).as_dict()["sessions"] == cm.validate_corpus(c).as_dict()["sessions"]


def test_frame_track_does_not_freeze_caller_array():
    arr = np.array([1.0, 2.0])
    cm.FrameTrack(arr)
    arr[0] = 5.0  # still writeable
    with pytest.raises(CorpusError):
        cm.FrameTrack(arr, hop_s=0)
