import json

import numpy as np
import pytest

from uttgenre import align as A
from uttgenre.synth import generate_transcripts


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def _replay(script, ref, hyp):
    """Apply the edit script; it must consume both sides and reproduce hyp."""
    out, r, h = [], 0, 0
    for op, ri, hi in zip(script.ops, script.ref_index, script.hyp_index):
        if op in (A.MATCH, A.SUB):
            assert ri == r and hi == h
            assert (ref[r] == hyp[h]) == (op == A.MATCH)
            out.append(hyp[h])
            r += 1
            h += 1
        elif op == A.DEL:
            assert ri == r and hi == -1
            r += 1
        else:
            assert ri == -1 and hi == h
            out.append(hyp[h])
            h += 1
    assert r == len(ref) and h == len(hyp)
    return out


def test_identity_alignment():
    s = A.align_sequences("abcdef", "abcdef")
    assert s.distance == 0 and s.text == "MMMMMM"


def test_single_substitution_and_tie_order():
    s = A.align_sequences("abcde", "abXde")
    assert s.distance == 1 and s.text == "MMSMM"
    # "ab" vs "b": deletion of a, then match
    assert A.align_sequences("ab", "b").text == "DM"
    assert A.align_sequences("b", "ab").text == "IM"


def test_kitten_sitting():
    s = A.align_sequences(list("kitten"), list("sitting"))
    assert s.distance == 3
    assert s.text == "SMMMSMI"


def test_distance_matches_reference_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(60):
        a = rng.integers(0, 4, rng.integers(1, 40)).tolist()
        b = rng.integers(0, 4, rng.integers(1, 40)).tolist()
        s = A.align_sequences(a, b)
        assert s.distance == levenshtein(a, b)
        assert _replay(s, a, b) == b
        assert s.distance == int(np.sum(s.ops != A.MATCH))


def test_empty_sequence_rejected():
    with pytest.raises(A.AlignmentError):
        A.align_sequences([], ["a"])


def test_anchor_selection_by_run_length():
    # match runs of length 3, 7 and 12 separated by substitutions
    ref = list("abc") + ["x"] + list("defghij") + ["y"] + list("klmnopqrstuv")
    hyp = list("abc") + ["X"] + list("defghij") + ["Y"] + list("klmnopqrstuv")
    s = A.align_sequences(ref, hyp)
    assert [a.length for a in A.select_anchors(s, 5)] == [7, 12]
    assert [a.length for a in A.select_anchors(s, 1)] == [3, 7, 12]
    assert A.select_anchors(s, 13) == []
    an = A.select_anchors(s, 5)[0]
    assert an.ref_span == (4, 11) and an.hyp_span == (4, 11)


def test_partition_covers_session():
    ref, hyp, _ = generate_transcripts(20, error_rate=0.1, seed=2)
    s = A.align_sequences(ref.symbols, hyp.symbols)
    segs = A.partition(s, A.select_anchors(s, 5), hyp, len(ref.symbols))
    assert segs[0].ref_start == 0 and segs[0].hyp_start == 0
    assert segs[-1].ref_end == len(ref.symbols) and segs[-1].hyp_end == len(hyp)
    for a, b in zip(segs, segs[1:]):
        assert a.ref_end == b.ref_start and a.hyp_end == b.hyp_start and a.end_s == b.start_s


@pytest.mark.parametrize("times, expected", [
    ([(0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (1.4, 1.6), (1.6, 1.8)], [(0.0, 0.6)]),
    ([(0.0, 0.3), (0.3, 0.6), (1.2, 1.5), (1.5, 1.8)], [(0.0, 0.6), (1.2, 1.8)]),
    ([(0.0, 0.3), (0.3, 0.6), (1.0, 1.3), (1.3, 1.6)], [(0.0, 1.6)]),   # 0.4 s gap kept
    ([(0.0, 0.2)], []),
    ([], []),
])
def test_segment_turns(times, expected):
    assert A.segment_turns(times) == pytest.approx(expected)


def test_exact_pause_threshold_splits():
    assert A.segment_turns([(0.0, 0.5), (1.0, 1.5)]) == [(0.0, 0.5), (1.0, 1.5)]


def test_deleted_turn_is_omitted_with_diagnostic():
    ref = A.Transcript((A.Turn("therapist", tuple("abcdefg")), A.Turn("client", ("q", "r")),
                        A.Turn("therapist", tuple("hijklmn"))))
    hyp_sym = list("abcdefg") + list("hijklmn")
    hyp = A.SyllableSeq(hyp_sym, [(0.2 * k, 0.2 * k + 0.2) for k in range(14)])
    loc = A.locate_turns(ref, hyp)
    assert loc.omitted == (1,)
    assert [s.turn_index for s in loc.spans] == [0, 2]
    assert loc.spans[0].start_s == 0.0 and loc.spans[0].end_s == pytest.approx(1.4)
    assert "turn 1" in loc.diagnostics[0]


def test_boundary_syllables_snap_inward():
    ref = A.Transcript((A.Turn("therapist", tuple("abcd")),))
    hyp = A.SyllableSeq(tuple("bc"), [(1.0, 1.2), (1.2, 1.4)])
    (span,) = A.locate_turns(ref, hyp).spans
    assert (span.start_s, span.end_s) == (1.0, pytest.approx(1.4))


def test_times_must_be_ordered():
    with pytest.raises(A.AlignmentError):
        A.SyllableSeq(("a", "b"), [(1.0, 1.2), (0.0, 0.2)])


def test_noiseless_session_recovers_exact_turns():
    ref, hyp, truth = generate_transcripts(30, error_rate=0.0, seed=5)
    loc = A.locate_turns(ref, hyp)
    got = [(s.start_s, s.end_s) for s in loc.spans]
    assert got == pytest.approx(list(truth.turn_spans))


def test_substitution_noise_turn_boundaries():
    ref, hyp, truth = generate_transcripts(
        45, error_rate=0.1, seed=7,
        error_mix={"substitution": 1.0, "insertion": 0.0, "deletion": 0.0})
    assert 900 <= len(ref.symbols) <= 1200
    loc = A.locate_turns(ref, hyp)
    ok = total = 0
    for s in loc.spans:
        t0, t1 = truth.turn_spans[s.turn_index]
        ok += (abs(s.start_s - t0) <= 0.5) + (abs(s.end_s - t1) <= 0.5)
        total += 2
    total += 2 * len(loc.omitted)
    assert ok / total >= 0.9


def test_session_round_trip_files(tmp_path):
    ref, hyp, _ = generate_transcripts(6, error_rate=0.05, seed=1)
    A.write_reference(ref, tmp_path / "ref.json")
    A.write_hypothesis(hyp, tmp_path / "hyp.jsonl")
    r2, h2 = A.read_reference(tmp_path / "ref.json"), A.read_hypothesis(tmp_path / "hyp.jsonl")
    assert r2.symbols == ref.symbols and h2 == hyp
    out = A.align_session(r2, h2)
    json.dumps(out)
    assert out["n_ref"] == len(ref.symbols)
    for t in out["turns"]:
        for a, b in t["utterances"]:
            assert b - a >= 0.5


def test_malformed_hypothesis_line(tmp_path):
    p = tmp_path / "h.jsonl"
    p.write_text('{"token": "a", "start_s": 0, "end_s": 0.2}\n{"token": "b"}\n')
    with pytest.raises(A.AlignmentError, match=":2:"):
        A.read_hypothesis(p)
