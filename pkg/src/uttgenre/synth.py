"""
Seeded synthetic corpora with planted utterance genres.

A generated corpus mimics the scale of a clinical therapy corpus (118
sessions, about 211 therapist utterances per session, 3.62 s mean
duration, about 17 characters per utterance). Each planted genre is a
(combination, pattern) region of normalized-feature space; per session a
share of utterances is placed inside that region, and the shares are
constructed to correlate with the session ratings at exactly
``rho_true`` in-sample before rounding to whole utterances.

Frame tracks are built, not fitted: every utterance's pitch and intensity
track reproduces its intended mean, population standard deviation and
interquartile range to rounding error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import NormalDist

import numba
import numpy as np

from . import stats
from .combos import FeatureCombo
from .corpus import (CLIENT, THERAPIST, FrameTrack, IngestionConfig, Utterance,
                     assemble_corpus)
from .features import FEATURE_INDEX, FEATURE_NAMES
from .quantize import FeaturePattern

HIGH_RATINGS = (46.34, 3.58, 42.0, 56.5)   # mean, sd, lower, upper
LOW_RATINGS = (30.40, 4.79, 18.0, 36.0)

# Background normalized-feature targets: log-normal scatter around 1.
# d uses a shifted log-normal so no utterance falls under 0.5 s.
_LOG_SD = {"d": 0.55, "sr": 0.25, "p_mu": 0.12, "p_std": 0.35,
           "i_mu": 0.15, "i_std": 0.30}
_D_SHIFT = 0.2
_IQR_RATIO = 1.35        # iqr / std of a normal distribution
_IQR_LOG_SD = 0.12
_IQR_RATIO_MAX = 2.3     # track template needs iqr <= ~2.45 std
_PLANT_SPREAD = 0.04

_VOICED = 9              # voiced pitch frames per utterance (4k + 1)
_UNVOICED = 4
_FRAMES = _VOICED + _UNVOICED   # = 13 = 4*3 + 1, intensity frames


class InfeasibleSpecError(ValueError):
    """The requested contribution ratios cannot stay inside [0, 1]."""


@dataclass(frozen=True)
class PlantedGenre:
    combo: FeatureCombo
    pattern: tuple                 # display labels, e.g. ("L", "H")
    rho_true: float
    base_contribution: float = 0.10
    spread: float = 0.028
    tail: float = 0.07             # background quantile of L (H uses 1 - tail)

    def __post_init__(self):
        if not -1.0 < self.rho_true < 1.0:
            raise ValueError("rho_true must lie in (-1, 1)")
        if len(self.pattern) != len(self.combo):
            raise ValueError("pattern length must match combo length")
        if any(p not in ("L", "M", "H") for p in self.pattern):
            raise ValueError("planted pattern labels must be L, M or H")
        if not 0.0 < self.tail < 0.5:
            raise ValueError("tail must lie in (0, 0.5)")

    def quantile(self, label):
        return {"L": self.tail, "M": 0.5, "H": 1.0 - self.tail}[label]

    def feature_pattern(self, q=3):
        return FeaturePattern.parse(",".join(self.pattern), q)

    def as_dict(self):
        return {"combo": self.combo.name, "pattern": list(self.pattern),
                "rho_true": self.rho_true,
                "base_contribution": self.base_contribution,
                "spread": self.spread, "tail": self.tail}


@dataclass(frozen=True)
class PlantSpec:
    """
    Generator parameters.

    ``genres`` are planted on disjoint utterance sets. ``n_high`` sessions
    draw ratings from the high-empathy range and the rest from the low
    range.
    """

    genres: tuple = ()
    sessions: int = 118
    n_high: int = 61
    therapists: int = 39
    utterances_mean: float = 211.0
    utterances_sd: float = 45.0
    utterances_min: int = 40
    duration_mean: float = 3.62
    chars_per_s: float = 4.7
    session_jitter: float = 0.08
    noise: dict = field(default_factory=lambda: dict(_LOG_SD))

    def __post_init__(self):
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        if not 0 <= self.n_high <= self.sessions:
            raise ValueError("n_high must lie in [0, sessions]")

    def as_dict(self):
        return {"genres": [g.as_dict() for g in self.genres],
                "sessions": self.sessions, "n_high": self.n_high,
                "therapists": self.therapists,
                "utterances_mean": self.utterances_mean,
                "utterances_sd": self.utterances_sd,
                "utterances_min": self.utterances_min,
                "duration_mean": self.duration_mean,
                "chars_per_s": self.chars_per_s,
                "session_jitter": self.session_jitter,
                "noise": dict(sorted(self.noise.items()))}


def _combo(name):
    return FeatureCombo.parse(name)


def preset(name):
    """
    Named generator specs.

    ``standard``: one genre, short and fast utterances (d, sr) = (L, H),
    planted at rho = -0.4. ``null``: the same plant at rho = 0.
    ``moderate``: four two-feature genres at |rho| = 0.85, planted further
    into the tails, a spec under which session labels are separable enough
    for classification checks. Single-feature plants are avoided there: session
    normalization pushes the neighbouring background of a one-dimensional plant
    the opposite way, and merging by (combination, pattern) then mixes the
    two clusters.
    """
    if name == "standard":
        return PlantSpec(genres=(PlantedGenre(_combo("d+sr"), ("L", "H"), -0.4),))
    if name == "null":
        return PlantSpec(genres=(PlantedGenre(_combo("d+sr"), ("L", "H"), 0.0),))
    if name == "moderate":
        return PlantSpec(genres=(
            PlantedGenre(_combo("d+sr"), ("L", "H"), -0.85, 0.10, 0.028, 0.03),
            PlantedGenre(_combo("p_mu+i_mu"), ("H", "L"), 0.85, 0.10, 0.028, 0.03),
            PlantedGenre(_combo("d+p_mu"), ("H", "L"), -0.85, 0.10, 0.028, 0.03),
            PlantedGenre(_combo("sr+i_mu"), ("L", "H"), 0.85, 0.10, 0.028, 0.03),
        ))
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("standard", "moderate", "null")


@dataclass(frozen=True)
class GroundTruth:
    """What the generator planted; ``raw`` holds intended raw statistics per utterance."""

    spec: PlantSpec
    seed: int
    session_ids: tuple
    ratings: np.ndarray
    utterance_counts: np.ndarray
    planted_counts: np.ndarray            # (n_genres, n_sessions)
    planted_ratio: np.ndarray             # planted_counts / utterance_counts
    achieved: tuple                       # CorrelationResult per genre (or None)
    planted_utterances: tuple             # per genre, tuple of utterance ids
    utterance_ids: tuple = field(repr=False, default=())
    raw: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        genres = []
        for g, spec in enumerate(self.spec.genres):
            ach = self.achieved[g]
            genres.append({
                **spec.as_dict(),
                "achieved_rho": None if ach is None else ach.rho,
                "achieved_p_value": None if ach is None else ach.p_value,
                "planted_counts": self.planted_counts[g].tolist(),
                "planted_ratio": self.planted_ratio[g].tolist(),
                "planted_utterances": list(self.planted_utterances[g]),
            })
        return {"seed": self.seed, "spec": self.spec.as_dict(),
                "session_ids": list(self.session_ids),
                "ratings": self.ratings.tolist(),
                "utterance_counts": self.utterance_counts.tolist(),
                "genres": genres}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=1)


def truncated_normal(rng, mean, sd, lo, hi, size):
    """Rejection sampler; exact truncation, deterministic under ``rng``."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(mean, sd, size=2 * (size - filled) + 8)
        draw = draw[(draw >= lo) & (draw <= hi)][: size - filled]
        out[filled:filled + draw.size] = draw
        filled += draw.size
    return out


def sample_ratings(rng, n, n_high):
    high = truncated_normal(rng, *HIGH_RATINGS, n_high)
    low = truncated_normal(rng, *LOW_RATINGS, n - n_high)
    ratings = np.concatenate([high, low])
    return ratings[rng.permutation(n)]


def correlated_ratios(rng, ratings, rho, base, spread):
    """
    Ratios whose in-sample Pearson correlation with ``ratings`` is exactly ``rho``.

    The noise component is truncated at 2 sd and orthogonalized against the
    ratings, so the result is bounded and deterministic under ``rng``.

    Raises
    ------
    InfeasibleSpecError
        A constructed ratio falls outside [0, 1].
    """
    n = ratings.size
    if n < 3:
        return np.full(n, float(base))
    zr = stats.zscore(ratings)
    noise = truncated_normal(rng, 0.0, 1.0, -2.0, 2.0, n)
    noise = noise - noise.mean()
    noise -= (noise @ zr) / (zr @ zr) * zr
    zn = noise / noise.std()
    r = base + spread * (rho * zr + np.sqrt(1.0 - rho * rho) * zn)
    if r.min() < 0.0 or r.max() > 1.0:
        raise InfeasibleSpecError(
            f"contribution ratios span [{r.min():.3f}, {r.max():.3f}], outside [0, 1]")
    return r


def _lognormal_quantile(log_sd, q, log_mean=0.0):
    return float(np.exp(log_mean + log_sd * NormalDist().inv_cdf(q)))


def _plant_value(name, q, noise):
    """Normalized-feature target (before session scaling) at background quantile ``q``."""
    if name == "d":
        return _D_SHIFT + (1 - _D_SHIFT) * _lognormal_quantile(noise["d"], q)
    if name in ("p_iqr", "i_iqr"):
        base = name.replace("iqr", "std")
        sd = np.hypot(noise[base], _IQR_LOG_SD)
        return _lognormal_quantile(sd, q, np.log(_IQR_RATIO))
    return _lognormal_quantile(noise[name], q)


def _background(rng, n, noise):
    """Normalized-feature targets, shape (n, 8), independent across features."""
    t = np.empty((n, len(FEATURE_NAMES)))
    z = rng.standard_normal((n, 8))
    t[:, 0] = _D_SHIFT + (1 - _D_SHIFT) * np.exp(noise["d"] * z[:, 0])
    t[:, 1] = np.exp(noise["sr"] * z[:, 1])
    t[:, 2] = np.exp(noise["p_mu"] * z[:, 2])
    t[:, 3] = np.exp(noise["p_std"] * z[:, 3])
    t[:, 4] = t[:, 3] * _IQR_RATIO * np.exp(_IQR_LOG_SD * z[:, 4])
    t[:, 5] = np.exp(noise["i_mu"] * z[:, 5])
    t[:, 6] = np.exp(noise["i_std"] * z[:, 6])
    t[:, 7] = t[:, 6] * _IQR_RATIO * np.exp(_IQR_LOG_SD * z[:, 7])
    return t


@numba.njit(cache=True)
def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


@numba.njit(cache=True)
def _fill_tracks(mu, sd, iqr, m, perm_seed, out):
    """
    Write ``m = 4k + 1`` samples per row with exactly the given mean,
    population std and linear-interpolation IQR.

    Sorted template: k samples at mu - a, one at mu - b, 2k - 1 at mu, one at
    mu + b, k at mu + a, with b = iqr / 2 and a chosen to hit the variance.
    Rows are then permuted with a fixed stride so frame order is not sorted.
    """
    k = (m - 1) // 4
    for r in range(mu.size):
        b = 0.5 * iqr[r]
        a = np.sqrt((m * sd[r] * sd[r] - 2.0 * b * b) / (2.0 * k))
        stride = 1 + 2 * ((perm_seed[r] % (m - 1)) // 2)
        while stride > 1 and _gcd(stride, m) != 1:
            stride -= 1
        for j in range(m):
            if j < k:
                v = mu[r] - a
            elif j == k:
                v = mu[r] - b
            elif j < 3 * k:
                v = mu[r]
            elif j == 3 * k:
                v = mu[r] + b
            else:
                v = mu[r] + a
            out[r, (j * stride) % m] = v


def build_tracks(mu, sd, iqr, m, rng):
    """Frame matrix (n, m) reproducing (mu, sd, iqr) per row; see :func:`_fill_tracks`."""
    if (m - 1) % 4 or m < 5:
        raise ValueError("track length must be 4k + 1 with k >= 1")
    k = (m - 1) // 4
    if np.any(iqr > 2.0 * sd * np.sqrt(m / (2.0 * k + 2.0)) + 1e-12):
        raise InfeasibleSpecError("iqr too large relative to std for the track template")
    out = np.empty((mu.size, m))
    _fill_tracks(np.ascontiguousarray(mu, dtype=float), np.ascontiguousarray(sd, dtype=float),
                 np.ascontiguousarray(iqr, dtype=float), m,
                 rng.integers(0, 1 << 30, size=mu.size), out)
    return out


def _session_sizes(rng, spec):
    sizes = np.rint(rng.normal(spec.utterances_mean, spec.utterances_sd, spec.sessions))
    return np.maximum(sizes, spec.utterances_min).astype(np.int64)


def generate(spec, seed=0, config=None):
    """
    Draw a synthetic corpus with planted genres.

    Parameters
    ----------
    spec : PlantSpec
    seed : int
    config : IngestionConfig, optional
        Label cutoffs used when assembling the corpus.

    Returns
    -------
    corpus : Corpus
    truth : GroundTruth

    Raises
    ------
    InfeasibleSpecError
        Planted ratios escape [0, 1] or planted genres overfill a session.
    """
    rng = np.random.default_rng(seed)
    S = spec.sessions
    ratings = sample_ratings(rng, S, spec.n_high)
    sizes = _session_sizes(rng, spec)
    G = len(spec.genres)
    ratios = np.array([correlated_ratios(rng, ratings, g.rho_true, g.base_contribution,
                                         g.spread) for g in spec.genres]).reshape(G, S)
    counts = np.rint(ratios * sizes).astype(np.int64)
    if G and np.any(counts.sum(axis=0) > sizes):
        raise InfeasibleSpecError("planted genres exceed the session's utterance count")

    therapist_of = rng.permutation(np.arange(S) % max(spec.therapists, 1))
    session_ids = tuple(f"S{i + 1:03d}" for i in range(S))

    n = int(sizes.sum())
    sess_idx = np.repeat(np.arange(S), sizes)
    target = _background(rng, n, spec.noise)
    genre_of = np.full(n, -1)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for s in range(S):
        rows = offsets[s] + rng.permutation(sizes[s])
        start = 0
        for g in range(G):
            genre_of[rows[start:start + counts[g, s]]] = g
            start += counts[g, s]
    for g, pg in enumerate(spec.genres):
        rows = np.flatnonzero(genre_of == g)
        for name, label in zip(pg.combo.members, pg.pattern):
            j = FEATURE_INDEX[name]
            jitter = np.exp(_PLANT_SPREAD * rng.standard_normal(rows.size))
            target[rows, j] = _plant_value(name, pg.quantile(label), spec.noise) * jitter
            if name in ("p_std", "i_std") and f"{name[0]}_iqr" not in pg.combo.members:
                target[rows, j + 1] = target[rows, j] * _IQR_RATIO
    # keep the iqr/std ratio feasible for the track template
    for js, ji in ((3, 4), (6, 7)):
        target[:, ji] = np.minimum(target[:, ji], _IQR_RATIO_MAX * target[:, js])

    # session-level scales
    jit = lambda: np.exp(spec.session_jitter * rng.standard_normal(S))[sess_idx]
    d_scale = spec.duration_mean / (_D_SHIFT + (1 - _D_SHIFT) * np.exp(spec.noise["d"] ** 2 / 2))
    dur = target[:, 0] * d_scale * jit()
    dur = np.maximum(dur, 0.55)
    chars = np.maximum(1, np.rint(target[:, 1] * spec.chars_per_s * dur * jit())).astype(np.int64)
    p_base = 190.0 * jit()
    p_mu = target[:, 2] * p_base
    p_std = target[:, 3] * 0.08 * p_base
    p_iqr = target[:, 4] * 0.08 * p_base
    i_base = 60.0 * jit()
    i_mu = target[:, 5] * i_base
    i_std = target[:, 6] * 0.10 * i_base
    i_iqr = target[:, 7] * 0.10 * i_base
    # the lowest template sample must stay positive (voiced pitch, intensity)
    for mu, sd, iqr in ((p_mu, p_std, p_iqr), (i_mu, i_std, i_iqr)):
        cap = 0.6 * mu / 1.6
        scale = np.minimum(1.0, cap / np.maximum(sd, 1e-300))
        sd *= scale
        iqr *= scale

    voiced = build_tracks(p_mu, p_std, p_iqr, _VOICED, rng)
    inten = build_tracks(i_mu, i_std, i_iqr, _FRAMES, rng)
    pitch = np.zeros((n, _FRAMES))
    slots = np.linspace(0, _FRAMES - 1, _VOICED).round().astype(int)
    pitch[:, slots] = voiced

    raw = np.column_stack([dur, chars / dur, p_mu, p_std, p_iqr, i_mu, i_std, i_iqr])
    utt_ids = []
    utts = []
    local = np.arange(n) - offsets[sess_idx]
    for r in range(n):
        sid = session_ids[sess_idx[r]]
        uid = f"{sid}_u{local[r]:04d}"
        utt_ids.append(uid)
        hop = dur[r] / _FRAMES
        utts.append(Utterance(
            utterance_id=uid, session_id=sid, speaker=THERAPIST,
            duration_s=float(dur[r]), char_count=int(chars[r]),
            pitch=FrameTrack(pitch[r], hop), intensity=FrameTrack(inten[r], hop)))

    rows = [(sid, f"T{int(therapist_of[i]) + 1:02d}", float(ratings[i]))
            for i, sid in enumerate(session_ids)]
    corpus = assemble_corpus(utts, rows, config or IngestionConfig(),
                             provenance={"source": "synthetic", "seed": seed})
    planted_ratio = counts / sizes
    achieved = tuple(_achieved(planted_ratio[g], ratings) for g in range(G))
    truth = GroundTruth(
        spec=spec, seed=seed, session_ids=session_ids, ratings=ratings,
        utterance_counts=sizes, planted_counts=counts, planted_ratio=planted_ratio,
        achieved=achieved,
        planted_utterances=tuple(tuple(utt_ids[i] for i in np.flatnonzero(genre_of == g))
                                 for g in range(G)),
        utterance_ids=tuple(utt_ids), raw=raw)
    return corpus, truth


def _achieved(x, y):
    try:
        return stats.pearson(x, y)
    except stats.StatsError:
        return None


# ---------------------------------------------------------------- transcripts

@dataclass(frozen=True)
class TranscriptTruth:
    """Ground truth of a generated session: turn spans and planned intra-turn splits."""

    speakers: tuple
    turn_spans: tuple          # (start_s, end_s) per turn
    split_points: tuple        # per turn, tuple of pause start times (>= split gap)
    utterance_spans: tuple     # per turn, tuple of (start_s, end_s)
    n_edits: int
    edits: dict


def generate_transcripts(n_turns, vocab=200, error_rate=0.1, seed=0,
                         error_mix=None, syllable_s=0.2, turn_len=(8, 40),
                         pause_s=0.8, pause_prob=0.15, turn_gap=(0.3, 1.0)):
    """
    Reference turns, a noisy timed hypothesis, and the true turn spans.

    Parameters
    ----------
    n_turns : int
    vocab : int or sequence of str
        Token inventory; an integer ``V`` means tokens ``"s0" .. "s{V-1}"``.
    error_rate : float in [0, 1)
        Per-token probability of an edit in the hypothesis.
    error_mix : dict, optional
        Relative weights of ``substitution``, ``insertion`` and ``deletion``;
        equal weights by default.
    syllable_s : float
        Constant syllable duration.
    pause_s, pause_prob : float
        Intra-turn pause length and per-syllable probability; the turn's
        utterance boundaries are the planned pauses.
    turn_gap : (float, float)
        Uniform range of silence between turns.

    Returns
    -------
    reference : Transcript
    hypothesis : SyllableSeq
    truth : TranscriptTruth
    """
    from .align import SyllableSeq, Transcript, Turn

    if not 0.0 <= error_rate < 1.0:
        raise ValueError("error_rate must lie in [0, 1)")
    tokens = [f"s{i}" for i in range(vocab)] if isinstance(vocab, int) else list(vocab)
    if len(tokens) < 2:
        raise ValueError("vocabulary needs at least two tokens")
    mix = {"substitution": 1.0, "insertion": 1.0, "deletion": 1.0}
    mix.update(error_mix or {})
    kinds = ("substitution", "insertion", "deletion")
    w = np.array([mix[k] for k in kinds], dtype=float)
    w /= w.sum()
    rng = np.random.default_rng(seed)

    turns, spans, splits, utt_spans = [], [], [], []
    ref_tok, ref_times = [], []
    t = 0.0
    for ti in range(n_turns):
        speaker = (THERAPIST, CLIENT)[ti % 2]
        L = int(rng.integers(turn_len[0], turn_len[1] + 1))
        syl = [tokens[i] for i in rng.integers(0, len(tokens), L)]
        start = t
        cuts = []
        seg_start = t
        segs = []
        for j in range(L):
            ref_tok.append(syl[j])
            ref_times.append((t, t + syllable_s))
            t += syllable_s
            if j < L - 1 and rng.random() < pause_prob:
                cuts.append(t)
                segs.append((seg_start, t))
                t += pause_s
                seg_start = t
        segs.append((seg_start, t))
        turns.append(Turn(speaker, tuple(syl)))
        spans.append((start, t))
        splits.append(tuple(cuts))
        utt_spans.append(tuple(s for s in segs if s[1] - s[0] >= 0.5))
        t += float(rng.uniform(*turn_gap))

    hyp_tok, hyp_times = [], []
    counts = dict.fromkeys(kinds, 0)
    for tok, (a, b) in zip(ref_tok, ref_times):
        if rng.random() >= error_rate:
            hyp_tok.append(tok)
            hyp_times.append((a, b))
            continue
        kind = kinds[int(rng.choice(3, p=w))]
        counts[kind] += 1
        if kind == "substitution":
            alt = tokens[int(rng.integers(len(tokens) - 1))]
            if alt == tok:
                alt = tokens[-1]
            hyp_tok.append(alt)
            hyp_times.append((a, b))
        elif kind == "insertion":
            mid = 0.5 * (a + b)
            hyp_tok.extend([tok, tokens[int(rng.integers(len(tokens)))]])
            hyp_times.extend([(a, mid), (mid, b)])
        # deletion: drop the token

    reference = Transcript(tuple(turns), times=tuple(ref_times))
    hypothesis = SyllableSeq(tuple(hyp_tok), tuple(hyp_times))
    truth = TranscriptTruth(
        speakers=tuple(tr.speaker for tr in turns), turn_spans=tuple(spans),
        split_points=tuple(splits), utterance_spans=tuple(utt_spans),
        n_edits=sum(counts.values()), edits=counts)
    return reference, hypothesis, truth
