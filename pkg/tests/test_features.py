import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uttgenre import features as F
from uttgenre.corpus import assemble_corpus

from conftest import make_utt


def test_speech_rate_example():
    u = make_utt("u", "s", 3.62, 17, [200, 210, 190])
    assert F.extract_raw_features(u).sr == pytest.approx(17 / 3.62)
    assert round(F.extract_raw_features(u).sr, 3) == 4.696


def test_constant_pitch():
    r = F.extract_raw_features(make_utt("u", "s", 1.0, 5, [200] * 8))
    assert (r.p_mu, r.p_std, r.p_iqr) == (200, 0, 0)


def test_voiced_only_quartiles():
    r = F.extract_raw_features(make_utt("u", "s", 1.0, 5, [0, 100, 200, 0, 300, 400, 0]))
    assert r.p_mu == 250
    assert r.p_iqr == 150
    assert r.p_std == pytest.approx(np.std([100, 200, 300, 400]))


def test_too_few_voiced_frames():
    with pytest.raises(F.FeatureError):
        F.extract_raw_features(make_utt("u", "s", 1.0, 5, [0, 0, 120, 0]))


def test_session_profile_examples():
    a = make_utt("a", "s", 2.0, 10, [100, 200])
    b = make_utt("b", "s", 4.0, 30, [300, 400])
    prof = F.session_profile([a, b])
    assert prof.d_T == 3.0
    assert prof.p_mu_T == 250
    assert prof.sr_T == pytest.approx(40 / 6)
    single = F.session_profile([a])
    assert single.p_std_T == F.extract_raw_features(a).p_std
    with pytest.raises(F.FeatureError):
        F.session_profile([])


def test_normalize_examples():
    raw = F.RawFeatures(1.8, 4.0, 200, 12, 20, 60, 5, 8)
    prof = F.SessionProfile(3.6, 4.0, 200, 24, 20, 60, 5, 8)
    n = F.normalize(raw, prof)
    assert n.d == 0.5 and n.p_std == 0.5
    with pytest.raises(F.FeatureError):
        F.normalize(raw, F.SessionProfile(3.6, 4.0, 200, 0, 20, 60, 5, 8))


def test_single_utterance_session_normalizes_to_one():
    u = make_utt("u", "s", 2.5, 9, [0, 110, 150, 170, 0, 220], [50, 52, 60, 61, 66, 70])
    c = assemble_corpus([u], [("s", "t", 50)])
    t = F.compute_features(c)
    assert np.allclose(t.values, 1.0)


def _session(rng, n=25, scale_p=1.0, scale_i=1.0):
    utts = []
    for k in range(n):
        m = int(rng.integers(6, 30))
        pitch = rng.uniform(80, 300, m) * (rng.random(m) > 0.2)
        pitch[:2] = [150, 160]
        inten = rng.uniform(40, 80, m)
        utts.append(make_utt(f"u{k}", "s", float(rng.uniform(0.6, 6)), int(rng.integers(1, 40)),
                             pitch * scale_p, inten * scale_i))
    return utts


def test_vectorized_table_matches_scalar_path():
    rng = np.random.default_rng(0)
    utts = _session(rng)
    t = F.compute_features(assemble_corpus(utts, [("s", "t", 50)]))
    prof = F.session_profile(utts)
    for row, u in enumerate(utts):
        ref = F.normalize(F.extract_raw_features(u), prof).as_array()
        assert np.allclose(t.values[row], ref, rtol=1e-12)


def test_pooled_normalized_statistics_equal_one():
    rng = np.random.default_rng(1)
    utts = _session(rng)
    prof = F.session_profile(utts)
    # the whole session as one utterance
    pooled = make_utt("all", "s", 1.0, 1,
                      np.concatenate([u.pitch.values for u in utts]),
                      np.concatenate([u.intensity.values for u in utts]))
    n = F.normalize(F.extract_raw_features(pooled), prof)
    for name in ("p_mu", "p_std", "p_iqr", "i_mu", "i_std", "i_iqr"):
        assert getattr(n, name) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 20), st.floats(0.1, 20))
def test_scale_invariance(seed, cp, ci):
    rng = np.random.default_rng(seed)
    base = _session(np.random.default_rng(seed), n=6)
    scaled = _session(np.random.default_rng(seed), n=6, scale_p=cp, scale_i=ci)
    t1 = F.compute_features(assemble_corpus(base, [("s", "t", 50)]))
    t2 = F.compute_features(assemble_corpus(scaled, [("s", "t", 50)]))
    assert np.allclose(t1.values, t2.values, rtol=1e-9)
    del rng


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_frame_order_irrelevant(seed):
    rng = np.random.default_rng(seed)
    u = _session(rng, n=1)[0]
    perm = rng.permutation(len(u.pitch))
    v = make_utt("u", "s", u.duration_s, u.char_count, u.pitch.values[perm],
                 u.intensity.values[perm])
    assert np.allclose(F.extract_raw_features(u).as_array(),
                       F.extract_raw_features(v).as_array(), rtol=1e-12)


def test_unanalyzable_utterances_leave_the_population():
    good = [make_utt(f"g{k}", "s", 1.0 + k, 5, [100 + k, 150, 200], [50, 60, 70 + k])
            for k in range(3)]
    bad = make_utt("bad", "s", 1.0, 5, [0, 0, 500], [50, 60, 70])
    t = F.compute_features(assemble_corpus(good + [bad], [("s", "t", 50)]))
    assert t.utterance_ids == ("g0", "g1", "g2")
    assert t.excluded_utterances == ("bad",)
    # bad's frames do not enter the session profile
    assert t.profiles[0, 2] == pytest.approx(np.mean([100, 150, 200, 101, 150, 200, 102, 150, 200]))


def test_excluded_sessions_skipped_and_subset(small_table):
    t = small_table
    assert set(t.labels) <= {"high", "low"}
    mask = np.arange(t.n_sessions) % 2 == 0
    sub = t.subset(mask)
    assert sub.n_sessions == mask.sum()
    assert sub.n_utterances == t.session_sizes[mask].sum()
    assert np.array_equal(sub.values, t.values[mask[t.session_index]])
