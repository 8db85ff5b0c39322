"""
Equal-population quantization of normalized features into feature patterns.

Each feature of a combination gets ``Q - 1`` cut points at the
``100 k / Q`` percentiles of its corpus-wide distribution. A value goes to
the bin whose half-open interval ``(lower, upper]`` contains it, so values
equal to a cut point fall in the lower bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import stats
from .combos import FeatureCombo
from .features import FEATURE_INDEX, FeatureTable, NormFeatures

ALIASES = {2: ("L", "H"), 3: ("L", "M", "H")}


class QuantizerError(ValueError):
    """A feature has too few distinct values to be split into Q bins."""


def label_names(q):
    return ALIASES.get(q, tuple(str(i) for i in range(q)))


@dataclass(frozen=True, order=True)
class FeaturePattern:
    labels: tuple
    q: int

    def __len__(self):
        return len(self.labels)

    @property
    def display(self):
        names = label_names(self.q)
        return tuple(names[b] for b in self.labels)

    @property
    def code(self):
        return pattern_code(self.labels, self.q)

    def describe(self, combo):
        return " & ".join(f"{f}={v}" for f, v in zip(combo.members, self.display))

    @classmethod
    def from_code(cls, code, q, m):
        labels = []
        for _ in range(m):
            labels.append(int(code % q))
            code //= q
        return cls(tuple(reversed(labels)), q)

    @classmethod
    def parse(cls, text, q):
        """Accept either display aliases (``"L,H"``) or bin indices (``"0,2"``)."""
        names = label_names(q)
        out = []
        for tok in text.replace("(", "").replace(")", "").split(","):
            tok = tok.strip()
            out.append(names.index(tok) if tok in names else int(tok))
        return cls(tuple(out), q)


def pattern_code(labels, q):
    """Integer code whose ordering matches lexicographic order of the bin labels."""
    code = 0
    for b in labels:
        code = code * q + int(b)
    return code


def n_patterns(combo, q):
    return q ** len(combo)


@dataclass(frozen=True)
class QuantizerSpec:
    combo: FeatureCombo
    q: int
    boundaries: tuple
    convention: str = stats.PERCENTILE_CONVENTION

    def bins(self, X):
        """Bin indices for rows of ``X`` (columns in combo order), shape (n, m)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape, dtype=np.int64)
        for j, cuts in enumerate(self.boundaries):
            out[:, j] = np.searchsorted(np.asarray(cuts), X[:, j], side="left")
        return out

    def codes(self, X):
        b = self.bins(X)
        weights = self.q ** np.arange(b.shape[1] - 1, -1, -1)
        return b @ weights

    def as_dict(self):
        return {
            "combo": self.combo.name,
            "group": self.combo.group,
            "members": list(self.combo.members),
            "Q": self.q,
            "boundaries": {f: list(c) for f, c in zip(self.combo.members, self.boundaries)},
            "convention": self.convention,
        }

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj):
        combo = FeatureCombo(obj["group"], tuple(obj["members"]))
        return cls(combo=combo, q=int(obj["Q"]),
                   boundaries=tuple(tuple(float(v) for v in obj["boundaries"][f])
                                    for f in combo.members),
                   convention=obj.get("convention", stats.PERCENTILE_CONVENTION))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _combo_matrix(features, combo):
    if isinstance(features, FeatureTable):
        return features.columns(combo.members)
    if len(features) and isinstance(features[0], NormFeatures):
        return np.array([[getattr(f, m) for m in combo.members] for f in features])
    arr = np.asarray(features, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == len(FEATURE_INDEX):
        return arr[:, [FEATURE_INDEX[m] for m in combo.members]]
    return arr.reshape(len(arr), -1)


def fit_quantizer(features, combo, q):
    """
    Fit equal-population cut points for every feature of ``combo``.

    Parameters
    ----------
    features : FeatureTable, sequence of NormFeatures, or array
        An (n, 8) array is read in feature-name order; an (n, m) array is
        taken as already restricted to the combo's columns.
    combo : FeatureCombo
    q : int
        Number of bins, at least 2.
    """
    if q < 2:
        raise QuantizerError("Q must be at least 2")
    X = _combo_matrix(features, combo)
    pct = 100.0 * np.arange(1, q) / q
    bounds = []
    for j, name in enumerate(combo.members):
        col = X[:, j]
        if np.unique(col).size < q:
            raise QuantizerError(f"feature {name}: fewer than {q} distinct values")
        cuts = np.atleast_1d(stats.percentile(col, pct))
        if np.any(np.diff(cuts) <= 0):
            raise QuantizerError(f"feature {name}: tied cut points {cuts.tolist()}")
        bounds.append(tuple(float(c) for c in cuts))
    return QuantizerSpec(combo=combo, q=q, boundaries=tuple(bounds))


def quantize(f, spec):
    """Map one utterance's NormFeatures to its feature pattern under ``spec``."""
    x = np.array([[getattr(f, m) for m in spec.combo.members]])
    return FeaturePattern(tuple(int(b) for b in spec.bins(x)[0]), spec.q)
