"""
Symbol-level alignment of a reference transcript with a timed hypothesis.

The reference is a list of speaker turns, each a syllable list; the
hypothesis is a recognizer output with per-syllable times. A global
unit-cost edit alignment links the two, long runs of exact matches serve as
anchors, and each turn's first and last aligned syllables give its time
span. Turns are finally cut into utterances at long pauses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

MATCH, SUB, DEL, INS = 0, 1, 2, 3
OP_NAMES = ("M", "S", "D", "I")
DEFAULT_A_MIN = 5
MIN_PAUSE_S = 0.5
MIN_UTTERANCE_S = 0.5


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SyllableSeq:
    symbols: tuple
    times: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if self.times is not None:
            t = tuple((float(a), float(b)) for a, b in self.times)
            if len(t) != len(self.symbols):
                raise AlignmentError("times and symbols differ in length")
            prev = -np.inf
            for a, b in t:
                if b < a or a < prev - 1e-9:
                    raise AlignmentError("syllable times must be ordered and non-overlapping")
                prev = b
            object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.symbols)


@dataclass(frozen=True)
class Turn:
    speaker: str
    syllables: tuple


@dataclass(frozen=True)
class Transcript:
    """Reference transcript: speaker turns in order."""

    turns: tuple
    times: tuple | None = None

    @property
    def symbols(self):
        return tuple(s for t in self.turns for s in t.syllables)

    @property
    def turn_bounds(self):
        """Half-open ``[start, end)`` symbol index range of each turn."""
        out, pos = [], 0
        for t in self.turns:
            out.append((pos, pos + len(t.syllables)))
            pos += len(t.syllables)
        return out

    def as_seq(self):
        return SyllableSeq(self.symbols, self.times)


@dataclass(frozen=True)
class EditScript:
    """
    Alignment path. ``ops[k]`` is one of M/S/D/I; ``ref_index[k]`` and
    ``hyp_index[k]`` are the consumed positions (-1 when the step does not
    consume that side).
    """

    ops: np.ndarray
    ref_index: np.ndarray
    hyp_index: np.ndarray
    distance: int

    def __len__(self):
        return self.ops.size

    @property
    def text(self):
        return "".join(OP_NAMES[o] for o in self.ops)

    def ref_to_hyp(self, n_ref):
        """Hypothesis position aligned (match or substitution) to each reference symbol, else -1."""
        out = np.full(n_ref, -1, dtype=np.int64)
        paired = self.ops <= SUB
        out[self.ref_index[paired]] = self.hyp_index[paired]
        return out


@dataclass(frozen=True)
class AlignmentAnchor:
    ref_start: int
    ref_end: int
    hyp_start: int
    hyp_end: int

    @property
    def length(self):
        return self.ref_end - self.ref_start

    @property
    def ref_span(self):
        return (self.ref_start, self.ref_end)

    @property
    def hyp_span(self):
        return (self.hyp_start, self.hyp_end)


@dataclass(frozen=True)
class Segment:
    """One partition of the session between consecutive anchor centers."""

    ref_start: int
    ref_end: int
    hyp_start: int
    hyp_end: int
    start_s: float
    end_s: float


@dataclass(frozen=True)
class TurnSpan:
    speaker: str
    start_s: float
    end_s: float
    turn_index: int

    def as_dict(self):
        return {"turn_index": self.turn_index, "speaker": self.speaker,
                "start_s": self.start_s, "end_s": self.end_s}


@dataclass(frozen=True)
class TurnLocation:
    spans: tuple
    omitted: tuple = ()
    diagnostics: tuple = field(default=())


@numba.njit(cache=True)
def _dp(a, b):
    n = a.size
    m = b.size
    back = np.empty((n + 1, m + 1), dtype=np.uint8)
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for j in range(m + 1):
        prev[j] = j
        back[0, j] = 3
    for i in range(1, n + 1):
        cur[0] = i
        back[i, 0] = 2
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                best = prev[j - 1]
                op = 0
            else:
                best = prev[j - 1] + 1
                op = 1
            c = prev[j] + 1
            if c < best:
                best = c
                op = 2
            c = cur[j - 1] + 1
            if c < best:
                best = c
                op = 3
            cur[j] = best
            back[i, j] = op
        for j in range(m + 1):
            prev[j] = cur[j]
    dist = prev[m]
    ops = np.empty(n + m, dtype=np.uint8)
    ri = np.empty(n + m, dtype=np.int64)
    hi = np.empty(n + m, dtype=np.int64)
    k = 0
    i = n
    j = m
    while i > 0 or j > 0:
        op = back[i, j]
        ops[k] = op
        if op <= 1:
            i -= 1
            j -= 1
            ri[k] = i
            hi[k] = j
        elif op == 2:
            i -= 1
            ri[k] = i
            hi[k] = -1
        else:
            j -= 1
            ri[k] = -1
            hi[k] = j
        k += 1
    return ops[:k][::-1].copy(), ri[:k][::-1].copy(), hi[:k][::-1].copy(), dist


def _symbols(x):
    if isinstance(x, Transcript):
        return x.symbols
    if isinstance(x, SyllableSeq):
        return x.symbols
    return tuple(x)


def _encode(ref, hyp):
    vocab = {}
    enc = lambda seq: np.array([vocab.setdefault(s, len(vocab)) for s in seq], dtype=np.int64)
    return enc(ref), enc(hyp)


def align_sequences(ref, hyp):
    """
    Globally optimal unit-cost alignment of two symbol sequences.

    On equal cost the step preference is match, substitution, deletion
    (reference symbol missing from the hypothesis), insertion.

    Raises
    ------
    AlignmentError
        Either sequence is empty.
    """
    r, h = _symbols(ref), _symbols(hyp)
    if not r or not h:
        raise AlignmentError("cannot align an empty sequence")
    a, b = _encode(r, h)
    ops, ri, hi, dist = _dp(a, b)
    return EditScript(ops=ops, ref_index=ri, hyp_index=hi, distance=int(dist))


def select_anchors(script, a_min=DEFAULT_A_MIN):
    """Maximal runs of consecutive matches with length >= ``a_min``, in order."""
    if a_min < 1:
        raise ValueError("a_min must be >= 1")
    is_match = np.concatenate([[False], script.ops == MATCH, [False]])
    edges = np.flatnonzero(np.diff(is_match.astype(np.int8)))
    anchors = []
    for s, e in zip(edges[::2], edges[1::2]):
        if e - s >= a_min:
            anchors.append(AlignmentAnchor(
                int(script.ref_index[s]), int(script.ref_index[e - 1]) + 1,
                int(script.hyp_index[s]), int(script.hyp_index[e - 1]) + 1))
    return anchors


def partition(script, anchors, hyp, n_ref=None):
    """
    Split the session at the temporal center of every anchor.

    The cut inside an anchor falls before the first anchor syllable starting
    at or after the anchor's center time, so both sides stay aligned.
    """
    if hyp.times is None:
        raise AlignmentError("hypothesis needs syllable times")
    n_ref = n_ref if n_ref is not None else int(script.ref_index.max()) + 1
    n_hyp = len(hyp)
    cuts = []
    for an in anchors:
        t0 = hyp.times[an.hyp_start][0]
        t1 = hyp.times[an.hyp_end - 1][1]
        center = 0.5 * (t0 + t1)
        off = next(k for k in range(an.length)
                   if hyp.times[an.hyp_start + k][0] >= center or k == an.length - 1)
        cuts.append((an.ref_start + off, an.hyp_start + off, center))
    segs = []
    r0, h0 = 0, 0
    s0 = hyp.times[0][0]
    for r, h, t in cuts + [(n_ref, n_hyp, hyp.times[-1][1])]:
        if r > r0 or h > h0:
            segs.append(Segment(r0, r, h0, h, s0, t))
        r0, h0, s0 = r, h, t
    return segs


def locate_turns(ref, hyp, script=None):
    """
    Time span of every reference turn.

    Each turn's first and last reference syllables that are aligned (match
    or substitution) to a hypothesis syllable give its start and end times;
    unaligned boundary syllables are therefore snapped inward to the nearest
    aligned syllable of the same turn. Turns without any aligned syllable
    are omitted and listed in ``diagnostics``.
    """
    if hyp.times is None:
        raise AlignmentError("hypothesis needs syllable times")
    script = script if script is not None else align_sequences(ref, hyp)
    bounds = ref.turn_bounds
    mapped = script.ref_to_hyp(bounds[-1][1] if bounds else 0)
    spans, omitted, diag = [], [], []
    for ti, ((a, b), turn) in enumerate(zip(bounds, ref.turns)):
        aligned = np.flatnonzero(mapped[a:b] >= 0)
        if aligned.size == 0:
            omitted.append(ti)
            diag.append(f"turn {ti} ({turn.speaker}): no aligned syllables, span omitted")
            continue
        h_first = mapped[a + aligned[0]]
        h_last = mapped[a + aligned[-1]]
        spans.append(TurnSpan(turn.speaker, hyp.times[h_first][0],
                              hyp.times[h_last][1], ti))
    return TurnLocation(tuple(spans), tuple(omitted), tuple(diag))


def turn_syllable_times(span, hyp):
    """Hypothesis syllable times lying inside a located turn span."""
    return [t for t in hyp.times if t[0] >= span.start_s - 1e-9 and t[1] <= span.end_s + 1e-9]


def segment_turns(times, min_pause=MIN_PAUSE_S, min_duration=MIN_UTTERANCE_S):
    """
    Cut one turn into utterances at pauses of at least ``min_pause`` seconds.

    Parameters
    ----------
    times : sequence of (start_s, end_s)
        The turn's syllable times, in order.

    Returns
    -------
    list of (start_s, end_s)
        Utterances of at least ``min_duration`` seconds; shorter fragments
        are dropped.
    """
    if not len(times):
        return []
    out = []
    start, end = times[0]
    for a, b in times[1:]:
        if a - end >= min_pause:
            out.append((start, end))
            start = a
        end = max(end, b)
    out.append((start, end))
    return [(float(a), float(b)) for a, b in out if b - a >= min_duration]


# ---------------------------------------------------------------- file I/O

def read_reference(path):
    """Reference transcript JSON: ``{"turns": [{"speaker": .., "syllables": [..]}]}``."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        turns = tuple(Turn(str(t["speaker"]), tuple(str(s) for s in t["syllables"]))
                      for t in obj["turns"])
    except (KeyError, TypeError) as exc:
        raise AlignmentError(f"{path}: malformed reference transcript ({exc})") from None
    return Transcript(turns)


def read_hypothesis(path):
    """Hypothesis JSON Lines, one ``{"token", "start_s", "end_s"}`` object per line."""
    toks, times = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                toks.append(str(rec["token"]))
                times.append((float(rec["start_s"]), float(rec["end_s"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise AlignmentError(f"{path}:{lineno}: malformed hypothesis record ({exc})") from None
    return SyllableSeq(tuple(toks), tuple(times))


def write_reference(ref, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"turns": [{"speaker": t.speaker, "syllables": list(t.syllables)}
                             for t in ref.turns]}, fh, indent=1)


def write_hypothesis(hyp, path):
    with open(path, "w", encoding="utf-8") as fh:
        for tok, (a, b) in zip(hyp.symbols, hyp.times):
            fh.write(json.dumps({"token": tok, "start_s": a, "end_s": b}) + "\n")


def align_session(ref, hyp, a_min=DEFAULT_A_MIN, min_pause=MIN_PAUSE_S):
    """Full pass: alignment, anchors, partition, turn spans, utterance spans."""
    script = align_sequences(ref, hyp)
    anchors = select_anchors(script, a_min)
    segments = partition(script, anchors, hyp, len(ref.symbols))
    loc = locate_turns(ref, hyp, script)
    utts = [segment_turns(turn_syllable_times(s, hyp), min_pause) for s in loc.spans]
    return {
        "a_min": a_min,
        "min_pause_s": min_pause,
        "distance": script.distance,
        "n_ref": len(ref.symbols),
        "n_hyp": len(hyp),
        "anchors": [{"ref_span": list(a.ref_span), "hyp_span": list(a.hyp_span),
                     "length": a.length} for a in anchors],
        "segments": [{"ref_span": [s.ref_start, s.ref_end], "hyp_span": [s.hyp_start, s.hyp_end],
                      "start_s": s.start_s, "end_s": s.end_s} for s in segments],
        "turns": [{**s.as_dict(), "utterances": [list(u) for u in us]}
                  for s, us in zip(loc.spans, utts)],
        "omitted_turns": list(loc.omitted),
        "diagnostics": list(loc.diagnostics),
    }
