"""
Utterance-level prosodic parameters and per-session speaker normalization.

Eight parameters describe an utterance: duration ``d``, speech rate ``sr``
(characters per second of utterance duration), and mean / standard deviation
/ interquartile range of pitch (voiced frames only) and of intensity (all
frames). Each is divided by the matching statistic of the therapist's whole
speech in the session:

* pitch and intensity statistics by the same statistic over the pooled frames
  of every utterance in the session,
* ``d`` by the session's mean utterance duration,
* ``sr`` by total characters over total utterance duration.

Standard deviations are population (``ddof=0``); quartiles use the linear
interpolation convention of :mod:`uttgenre.stats`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numba
import numpy as np

from .corpus import MIN_VOICED_FRAMES

FEATURE_NAMES = ("d", "sr", "p_mu", "p_std", "p_iqr", "i_mu", "i_std", "i_iqr")
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# Recorded in outputs; the source gives no explicit rule for d and sr.
NORMALIZATION_CONVENTION = {
    "d": "utterance duration / session mean utterance duration",
    "sr": "utterance chars-per-second / (session total chars / session total duration)",
    "pitch": "voiced frames only (value > 0); statistic / pooled session statistic",
    "intensity": "all frames; statistic / pooled session statistic",
    "std_ddof": 0,
    "percentile": "linear",
}


class FeatureError(ValueError):
    """Utterance or session cannot be characterized (too few frames, zero normalizer)."""


@dataclass(frozen=True)
class RawFeatures:
    d: float
    sr: float
    p_mu: float
    p_std: float
    p_iqr: float
    i_mu: float
    i_std: float
    i_iqr: float

    def as_array(self):
        return np.array([getattr(self, n) for n in FEATURE_NAMES])


@dataclass(frozen=True)
class NormFeatures(RawFeatures):
    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class SessionProfile:
    d_T: float
    sr_T: float
    p_mu_T: float
    p_std_T: float
    p_iqr_T: float
    i_mu_T: float
    i_std_T: float
    i_iqr_T: float

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)])


@numba.njit(cache=True)
def _segment_stats(values, offsets):
    """mean, population std, p25, p75 of each ``values[offsets[k]:offsets[k+1]]``."""
    nseg = offsets.size - 1
    out = np.empty((nseg, 4))
    for k in range(nseg):
        seg = np.sort(values[offsets[k]:offsets[k + 1]])
        m = seg.size
        if m == 0:
            out[k, :] = np.nan
            continue
        s = 0.0
        for v in seg:
            s += v
        mu = s / m
        ss = 0.0
        for v in seg:
            ss += (v - mu) * (v - mu)
        out[k, 0] = mu
        out[k, 1] = np.sqrt(ss / m)
        for j, q in enumerate((0.25, 0.75)):
            pos = (m - 1) * q
            lo = int(np.floor(pos))
            frac = pos - lo
            if frac == 0.0 or lo + 1 >= m:
                out[k, 2 + j] = seg[lo]
            else:
                out[k, 2 + j] = seg[lo] + frac * (seg[lo + 1] - seg[lo])
    return out


def _offsets(lengths):
    off = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=off[1:])
    return off


def _frame_stats(utterances):
    """Per-utterance (voiced pitch, intensity) statistics: two (n, 4) arrays."""
    pitch = [u.pitch.values for u in utterances]
    voiced = [p[p > 0] for p in pitch]
    inten = [u.intensity.values for u in utterances]
    vp = np.concatenate(voiced) if voiced else np.empty(0)
    vi = np.concatenate(inten) if inten else np.empty(0)
    return (_segment_stats(vp, _offsets([v.size for v in voiced])),
            _segment_stats(vi, _offsets([v.size for v in inten])),
            vp, vi, [v.size for v in voiced], [v.size for v in inten])


def _check_frames(u):
    if int(np.count_nonzero(u.pitch.values > 0)) < MIN_VOICED_FRAMES:
        raise FeatureError(f"utterance {u.utterance_id}: fewer than "
                           f"{MIN_VOICED_FRAMES} voiced pitch frames")
    if len(u.intensity) < MIN_VOICED_FRAMES:
        raise FeatureError(f"utterance {u.utterance_id}: fewer than "
                           f"{MIN_VOICED_FRAMES} intensity frames")
    if not u.duration_s > 0:
        raise FeatureError(f"utterance {u.utterance_id}: non-positive duration")


def extract_raw_features(u):
    """
    Raw (unnormalized) prosodic parameters of one utterance.

    Raises
    ------
    FeatureError
        Fewer than two voiced pitch frames or intensity frames; callers
        treat this as "exclude the utterance".
    """
    _check_frames(u)
    p, i, *_ = _frame_stats([u])
    vals = (u.duration_s, u.char_count / u.duration_s,
            p[0, 0], p[0, 1], p[0, 3] - p[0, 2],
            i[0, 0], i[0, 1], i[0, 3] - i[0, 2])
    return RawFeatures(*(float(v) for v in vals))


def session_profile(utterances):
    """Session-level normalizers pooled over every frame of every utterance."""
    utterances = list(utterances)
    if not utterances:
        raise FeatureError("empty session")
    _, _, vp, vi, _, _ = _frame_stats(utterances)
    if vp.size < MIN_VOICED_FRAMES:
        raise FeatureError("session has fewer than 2 voiced pitch frames")
    sp = _segment_stats(vp, np.array([0, vp.size]))[0]
    si = _segment_stats(vi, np.array([0, vi.size]))[0]
    dur = np.array([u.duration_s for u in utterances], dtype=float)
    chars = sum(u.char_count for u in utterances)
    vals = (dur.mean(), chars / dur.sum(),
            sp[0], sp[1], sp[3] - sp[2],
            si[0], si[1], si[3] - si[2])
    return SessionProfile(*(float(v) for v in vals))


def normalize(raw, profile):
    """
    Divide each raw parameter by its session counterpart.

    Raises
    ------
    FeatureError
        If any normalizer is not strictly positive (degenerate session).
    """
    den = profile.as_array()
    if not np.all(den > 0):
        bad = [f.name for f, v in zip(fields(profile), den) if not v > 0]
        raise FeatureError(f"degenerate session: zero normalizer(s) {bad}")
    return NormFeatures.from_array(raw.as_array() / den)


@dataclass(frozen=True)
class FeatureTable:
    """
    Normalized features of every analyzed utterance, one row per utterance.

    Rows are grouped by session in session order. ``session_index[i]`` points
    into the per-session arrays (``session_ids``, ``ratings``, ...).
    """

    values: np.ndarray
    raw: np.ndarray
    utterance_ids: tuple
    session_index: np.ndarray
    session_ids: tuple
    therapist_ids: tuple
    ratings: np.ndarray
    labels: tuple
    profiles: np.ndarray
    excluded_utterances: tuple = ()

    @property
    def n_utterances(self):
        return self.values.shape[0]

    @property
    def n_sessions(self):
        return len(self.session_ids)

    @property
    def session_sizes(self):
        return np.bincount(self.session_index, minlength=self.n_sessions)

    @property
    def binary_labels(self):
        """+1 for high, -1 for low."""
        return np.array([1 if lab == "high" else -1 for lab in self.labels])

    def columns(self, names):
        return self.values[:, [FEATURE_INDEX[n] for n in names]]

    def norm_features(self, row):
        return NormFeatures.from_array(self.values[row])

    def subset(self, session_mask):
        """Restrict to a subset of sessions; normalization is per-session so rows are unchanged."""
        session_mask = np.asarray(session_mask, dtype=bool)
        keep_sessions = np.flatnonzero(session_mask)
        remap = np.full(self.n_sessions, -1)
        remap[keep_sessions] = np.arange(keep_sessions.size)
        rows = session_mask[self.session_index]
        pick = lambda seq: tuple(seq[i] for i in keep_sessions)
        return FeatureTable(
            values=self.values[rows], raw=self.raw[rows],
            utterance_ids=tuple(u for u, r in zip(self.utterance_ids, rows) if r),
            session_index=remap[self.session_index[rows]],
            session_ids=pick(self.session_ids),
            therapist_ids=pick(self.therapist_ids),
            ratings=self.ratings[keep_sessions], labels=pick(self.labels),
            profiles=self.profiles[keep_sessions])


def compute_features(corpus, sessions="analyzed"):
    """
    Build the :class:`FeatureTable` of a corpus.

    Utterances with fewer than two voiced pitch frames (or no characters) are
    removed from the analysis set before session profiles are computed, so
    every downstream count uses one utterance population.

    Parameters
    ----------
    corpus : Corpus
    sessions : {"analyzed", "all"}
        ``"analyzed"`` skips sessions labelled excluded.
    """
    chosen = corpus.analyzed_sessions if sessions == "analyzed" else corpus.sessions
    utts, sess_idx, kept_sessions, excluded = [], [], [], []
    for s in chosen:
        good = []
        for u in s.utterances:
            if u.analyzable and u.duration_s > 0:
                good.append(u)
            else:
                excluded.append(u.utterance_id)
        if not good:
            continue
        k = len(kept_sessions)
        kept_sessions.append(s)
        utts.extend(good)
        sess_idx.extend([k] * len(good))
    if not utts:
        raise FeatureError("no analyzable utterances")
    sess_idx = np.asarray(sess_idx, dtype=np.int64)
    n_sess = len(kept_sessions)

    p, i, vp, vi, nv, ni = _frame_stats(utts)
    dur = np.array([u.duration_s for u in utts], dtype=float)
    chars = np.array([u.char_count for u in utts], dtype=float)
    raw = np.column_stack([
        dur, chars / dur,
        p[:, 0], p[:, 1], p[:, 3] - p[:, 2],
        i[:, 0], i[:, 1], i[:, 3] - i[:, 2],
    ])

    # utterances are contiguous per session, so session frame blocks are too
    sess_bounds = _offsets(np.bincount(sess_idx, minlength=n_sess))
    pv_off = _offsets(nv)[sess_bounds]
    iv_off = _offsets(ni)[sess_bounds]
    sp = _segment_stats(vp, pv_off)
    si = _segment_stats(vi, iv_off)
    dsum = np.bincount(sess_idx, weights=dur, minlength=n_sess)
    csum = np.bincount(sess_idx, weights=chars, minlength=n_sess)
    counts = np.bincount(sess_idx, minlength=n_sess)
    profiles = np.column_stack([
        dsum / counts, csum / dsum,
        sp[:, 0], sp[:, 1], sp[:, 3] - sp[:, 2],
        si[:, 0], si[:, 1], si[:, 3] - si[:, 2],
    ])
    bad = ~np.all(profiles > 0, axis=1)
    if bad.any():
        names = [kept_sessions[k].session_id for k in np.flatnonzero(bad)]
        raise FeatureError(f"degenerate session(s), zero normalizer: {names}")
    values = raw / profiles[sess_idx]
    return FeatureTable(
        values=values, raw=raw,
        utterance_ids=tuple(u.utterance_id for u in utts),
        session_index=sess_idx,
        session_ids=tuple(s.session_id for s in kept_sessions),
        therapist_ids=tuple(s.therapist_id for s in kept_sessions),
        ratings=np.array([s.empathy_rating for s in kept_sessions], dtype=float),
        labels=tuple(s.label for s in kept_sessions),
        profiles=profiles,
        excluded_utterances=tuple(excluded))
