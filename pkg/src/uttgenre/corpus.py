"""
Corpus data model and ingestion.

Utterances arrive as JSON Lines (one object per utterance, frame-level pitch
and intensity inline) and session metadata as a CSV with header
``session_id,therapist_id,empathy_rating``. Loading validates both files,
drops utterances shorter than the minimum duration, and assigns each session
a high/low/excluded label from the rating cutoffs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

THERAPIST = "therapist"
CLIENT = "client"
SPEAKERS = (THERAPIST, CLIENT)

HIGH = "high"
LOW = "low"
EXCLUDED = "excluded"

RATING_MIN, RATING_MAX = 9.0, 63.0
MIN_UTTERANCE_S = 0.5
MIN_VOICED_FRAMES = 2

_UTTERANCE_KEYS = ("session_id", "utterance_id", "speaker", "duration_s",
                   "char_count", "hop_s", "pitch", "intensity")
_SESSION_HEADER = ["session_id", "therapist_id", "empathy_rating"]


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class FrameTrack:
    values: np.ndarray
    hop_s: float = 0.01

    def __post_init__(self):
        if not self.hop_s > 0:
            raise CorpusError(f"non-positive hop_s: {self.hop_s}")
        arr = np.asarray(self.values, dtype=float).view()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    @property
    def span_s(self):
        return self.values.size * self.hop_s

    @property
    def voiced(self):
        """Samples with value > 0; for pitch tracks these are the voiced frames."""
        return self.values[self.values > 0]


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    session_id: str
    speaker: str
    duration_s: float
    char_count: int
    pitch: FrameTrack
    intensity: FrameTrack

    @property
    def n_voiced(self):
        return int(np.count_nonzero(self.pitch.values > 0))

    @property
    def analyzable(self):
        """Enough voiced pitch and intensity frames, and at least one character."""
        return (self.n_voiced >= MIN_VOICED_FRAMES
                and len(self.intensity) >= MIN_VOICED_FRAMES
                and self.char_count >= 1)


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    therapist_id: str
    empathy_rating: float
    label: str
    utterances: tuple = ()

    @property
    def analyzed(self):
        return self.label != EXCLUDED


@dataclass(frozen=True)
class IngestionConfig:
    high_cutoff: float = 42.0
    low_cutoff: float = 36.0
    min_duration_s: float = MIN_UTTERANCE_S

    def __post_init__(self):
        if self.low_cutoff >= self.high_cutoff:
            raise CorpusError("low_cutoff must be below high_cutoff")

    def label_for(self, rating):
        if rating >= self.high_cutoff:
            return HIGH
        if rating <= self.low_cutoff:
            return LOW
        return EXCLUDED


@dataclass(frozen=True)
class Corpus:
    sessions: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.session_id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate session_id in corpus")
        for s in self.sessions:
            for u in s.utterances:
                if u.session_id != s.session_id:
                    raise CorpusError(
                        f"utterance {u.utterance_id} filed under {s.session_id} "
                        f"but belongs to {u.session_id}")

    def __iter__(self):
        return iter(self.sessions)

    def __len__(self):
        return len(self.sessions)

    def session(self, session_id):
        for s in self.sessions:
            if s.session_id == session_id:
                return s
        raise KeyError(session_id)

    @property
    def analyzed_sessions(self):
        return tuple(s for s in self.sessions if s.analyzed)

    @property
    def n_utterances(self):
        return sum(len(s.utterances) for s in self.sessions)

    def label_counts(self):
        counts = {HIGH: 0, LOW: 0, EXCLUDED: 0}
        for s in self.sessions:
            counts[s.label] += 1
        return counts


def assemble_corpus(utterances, session_rows, config=None, provenance=None):
    """
    Build a validated :class:`Corpus` from in-memory records.

    ``session_rows`` is an iterable of ``(session_id, therapist_id, rating)``.
    Client utterances are ignored and utterances shorter than
    ``config.min_duration_s`` are dropped; both are counted in provenance.
    """
    config = config or IngestionConfig()
    prov = dict(provenance or {})
    order = []
    meta = {}
    for sid, tid, rating in session_rows:
        sid = str(sid)
        if sid in meta:
            raise CorpusError(f"duplicate session_id {sid!r} in session table")
        rating = float(rating)
        if not (RATING_MIN <= rating <= RATING_MAX):
            raise CorpusError(f"session {sid}: rating {rating} outside [9, 63]")
        meta[sid] = (str(tid), rating)
        order.append(sid)

    grouped = {sid: [] for sid in order}
    dropped_short = 0
    client = 0
    for u in utterances:
        if u.session_id not in grouped:
            raise CorpusError(
                f"utterance {u.utterance_id}: unknown session_id {u.session_id!r}")
        if u.speaker == CLIENT:
            client += 1
            continue
        if u.duration_s < config.min_duration_s:
            dropped_short += 1
            continue
        grouped[u.session_id].append(u)

    sessions = []
    for sid in order:
        tid, rating = meta[sid]
        sessions.append(SessionRecord(
            session_id=sid, therapist_id=tid, empathy_rating=rating,
            label=config.label_for(rating), utterances=tuple(grouped[sid])))
    prov.update({
        "dropped_short": dropped_short,
        "ignored_client": client,
        "high_cutoff": config.high_cutoff,
        "low_cutoff": config.low_cutoff,
        "min_duration_s": config.min_duration_s,
    })
    return Corpus(sessions=tuple(sessions), provenance=prov)


def _parse_utterance(obj, lineno):
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    missing = [k for k in _UTTERANCE_KEYS if k not in obj]
    if missing:
        raise CorpusError(f"line {lineno}: missing keys {missing}")
    speaker = obj["speaker"]
    if speaker not in SPEAKERS:
        raise CorpusError(f"line {lineno}: unknown speaker {speaker!r}")
    try:
        hop = float(obj["hop_s"])
        duration = float(obj["duration_s"])
        chars = obj["char_count"]
        if isinstance(chars, bool) or int(chars) != chars:
            raise CorpusError(f"line {lineno}: char_count must be an integer")
        chars = int(chars)
        pitch = np.asarray(obj["pitch"], dtype=float)
        intensity = np.asarray(obj["intensity"], dtype=float)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CorpusError):
            raise
        raise CorpusError(f"line {lineno}: {exc}") from None
    if not hop > 0:
        raise CorpusError(f"line {lineno}: non-positive hop_s {hop}")
    if not (math.isfinite(duration) and duration >= 0):
        raise CorpusError(f"line {lineno}: invalid duration_s {duration}")
    if chars < 0:
        raise CorpusError(f"line {lineno}: negative char_count")
    if pitch.ndim != 1 or intensity.ndim != 1:
        raise CorpusError(f"line {lineno}: pitch/intensity must be flat arrays")
    if not (np.isfinite(pitch).all() and np.isfinite(intensity).all()):
        raise CorpusError(f"line {lineno}: non-finite frame value")
    if (intensity < 0).any():
        raise CorpusError(f"line {lineno}: negative intensity sample")
    return Utterance(
        utterance_id=str(obj["utterance_id"]), session_id=str(obj["session_id"]),
        speaker=speaker, duration_s=duration, char_count=chars,
        pitch=FrameTrack(pitch, hop), intensity=FrameTrack(intensity, hop))


def read_utterances(path):
    """Parse a JSON Lines utterance file; blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            out.append(_parse_utterance(obj, lineno))
    return out


def read_sessions(path):
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _SESSION_HEADER:
            raise CorpusError(f"{path}: header must be {','.join(_SESSION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise CorpusError(f"{path} line {lineno}: expected 3 fields")
            try:
                rating = float(row[2])
            except ValueError:
                raise CorpusError(f"{path} line {lineno}: bad rating {row[2]!r}") from None
            rows.append((row[0].strip(), row[1].strip(), rating))
    return rows


def load_corpus(utterance_file, session_file, config=None):
    """
    Load and validate a corpus from disk.

    Raises
    ------
    CorpusError
        Malformed records (with line number), dangling session ids,
        non-positive hops, or an utterance file without any record. A file
        whose records are all dropped (too short, client speech) still loads;
        the drops are counted in provenance.
    """
    utterance_file, session_file = Path(utterance_file), Path(session_file)
    utterances = read_utterances(utterance_file)
    if not utterances:
        raise CorpusError("no analyzable utterances: empty utterance file")
    rows = read_sessions(session_file)
    corpus = assemble_corpus(
        utterances, rows, config,
        provenance={"utterance_file": utterance_file.name,
                    "session_file": session_file.name})
    return corpus


@dataclass(frozen=True)
class ValidationReport:
    sessions: tuple
    n_sessions: int
    mean_utterances_per_session: float
    mean_duration_s: float
    flagged_unvoiced: tuple
    label_counts: dict
    provenance: dict

    def as_dict(self):
        return {
            "n_sessions": self.n_sessions,
            "mean_utterances_per_session": self.mean_utterances_per_session,
            "mean_duration_s": self.mean_duration_s,
            "label_counts": self.label_counts,
            "flagged_unvoiced": list(self.flagged_unvoiced),
            "provenance": self.provenance,
            "sessions": list(self.sessions),
        }


def validate_corpus(corpus):
    """Summarize a corpus and flag utterances with too few voiced pitch frames."""
    per_session = []
    flagged = []
    durations = []
    for s in corpus.sessions:
        n_flag = 0
        voiced = 0
        frames = 0
        for u in s.utterances:
            durations.append(u.duration_s)
            frames += len(u.pitch)
            voiced += u.n_voiced
            if not u.analyzable:
                n_flag += 1
                flagged.append(u.utterance_id)
        n = len(s.utterances)
        per_session.append({
            "session_id": s.session_id,
            "label": s.label,
            "n_utterances": n,
            "n_pitch_analyzable": n - n_flag,
            "mean_duration_s": (float(np.mean([u.duration_s for u in s.utterances]))
                                if n else 0.0),
            "voiced_coverage": voiced / frames if frames else 0.0,
        })
    n_sessions = len(corpus.sessions)
    return ValidationReport(
        sessions=tuple(per_session),
        n_sessions=n_sessions,
        mean_utterances_per_session=(corpus.n_utterances / n_sessions
                                     if n_sessions else 0.0),
        mean_duration_s=float(np.mean(durations)) if durations else 0.0,
        flagged_unvoiced=tuple(flagged),
        label_counts=corpus.label_counts(),
        provenance=dict(corpus.provenance),
    )


def utterance_record(u):
    """Inverse of the JSON Lines parser for one utterance."""
    return {
        "session_id": u.session_id,
        "utterance_id": u.utterance_id,
        "speaker": u.speaker,
        "duration_s": u.duration_s,
        "char_count": u.char_count,
        "hop_s": u.pitch.hop_s,
        "pitch": u.pitch.values.tolist(),
        "intensity": u.intensity.values.tolist(),
    }


def write_corpus(corpus, utterance_file, session_file):
    """Write a corpus back to the JSON Lines / CSV pair that :func:`load_corpus` reads."""
    with open(utterance_file, "w", encoding="utf-8") as fh:
        for s in corpus.sessions:
            for u in s.utterances:
                fh.write(json.dumps(utterance_record(u), separators=(",", ":")))
                fh.write("\n")
    with open(session_file, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_SESSION_HEADER)
        for s in corpus.sessions:
            w.writerow([s.session_id, s.therapist_id, repr(float(s.empathy_rating))])
