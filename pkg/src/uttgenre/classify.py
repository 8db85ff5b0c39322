"""
Session-level empathy classification.

Sessions are described either by the contribution ratios of salient
utterance genres (share of the session's utterances inside each genre's
aggregated value range) or, for the baseline, by the occurrence ratios of
individually prominent feature patterns. A linear max-margin classifier is
trained by deterministic dual coordinate descent and evaluated with
stratified 5-fold cross-validation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import stats
from .combos import FeatureCombo, enumerate_combos
from .genres import MiningConfig, contribution_ratios, in_range_mask, mine
from .quantize import FeaturePattern, fit_quantizer

HIGH, LOW = 1, -1
METHODS = ("genre", "pattern-baseline")
CV_MODES = ("faithful", "nested")
FOLDS_BY = ("session", "therapist")


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class SessionFeatureMatrix:
    """One row per session, one column per genre (or pattern)."""

    values: np.ndarray
    session_ids: tuple
    labels: np.ndarray          # +1 high, -1 low
    columns: tuple

    @property
    def dimension(self):
        return self.values.shape[1]

    def rows(self):
        lab = {HIGH: "high", LOW: "low"}
        return [{"session_id": s, "values": v.tolist(), "label": lab[int(y)]}
                for s, v, y in zip(self.session_ids, self.values, self.labels)]

    def to_csv(self, path, header=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header:
                for line in header:
                    fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["session_id", "label", *self.columns])
            for s, v, y in zip(self.session_ids, self.values, self.labels):
                w.writerow([s, "high" if y == HIGH else "low", *(repr(float(x)) for x in v)])


def _key_name(combo, pattern):
    return f"{combo.name}={'/'.join(pattern.display)}"


def session_features(table, genres):
    """
    Contribution ratio of every merged genre in every session.

    An utterance counts for a genre when its normalized features lie inside
    the genre's aggregated range on every feature of the combination
    (inclusive bounds).

    Raises
    ------
    ClassifierError
        The genre set is empty.
    """
    genres = list(genres)
    if not genres:
        raise ClassifierError("empty salient genre set: no classifiable features")
    X = np.column_stack([
        contribution_ratios(in_range_mask(table.columns(g.combo.members), g.aggregated_range), table)
        for g in genres])
    return SessionFeatureMatrix(X, tuple(table.session_ids), table.binary_labels,
                                tuple(_key_name(g.combo, g.pattern) for g in genres))


@dataclass(frozen=True)
class ProminentPattern:
    combo: FeatureCombo
    pattern: FeaturePattern
    correlation: stats.CorrelationResult

    @property
    def name(self):
        return _key_name(self.combo, self.pattern)

    def as_dict(self):
        return {"combo": self.combo.name, "pattern": list(self.pattern.display),
                **self.correlation.as_dict()}


def pattern_ratios(table, combo, spec):
    """Per-session occurrence ratio of every pattern of ``combo``, shape (S, Q^m)."""
    codes = spec.codes(table.columns(combo.members))
    P = spec.q ** len(combo)
    S = table.n_sessions
    cnt = np.bincount(table.session_index * P + codes, minlength=S * P).reshape(S, P)
    return cnt / table.session_sizes[:, None]


def mine_prominent_patterns(table, q=3, pv_max=0.05, quantizers=None, combos=None):
    """
    Feature patterns whose per-session occurrence ratio correlates with rating.

    Every pattern of every combination is tested; patterns with p below
    ``pv_max`` are kept. Patterns with a constant ratio have no defined
    correlation and are skipped.

    Returns
    -------
    patterns : list of ProminentPattern
    quantizers : dict
        The fitted (or supplied) quantizer per combination.
    """
    quantizers = dict(quantizers or {})
    out = []
    for combo in combos or enumerate_combos():
        spec = quantizers.get(combo)
        if spec is None or spec.q != q:
            spec = quantizers[combo] = fit_quantizer(table, combo, q)
        R = pattern_ratios(table, combo, spec)
        rho, p = stats.pearson_rows(R.T, table.ratings)
        for code in np.flatnonzero(p < pv_max):
            out.append(ProminentPattern(
                combo, FeaturePattern.from_code(int(code), q, len(combo)),
                stats.CorrelationResult(float(rho[code]), float(p[code]), table.n_sessions)))
    return out, quantizers


def pattern_features(table, patterns, quantizers):
    cols = []
    cache = {}
    for pp in patterns:
        if pp.combo not in cache:
            cache[pp.combo] = pattern_ratios(table, pp.combo, quantizers[pp.combo])
        cols.append(cache[pp.combo][:, pp.pattern.code])
    X = np.column_stack(cols) if cols else np.zeros((table.n_sessions, 0))
    return SessionFeatureMatrix(X, tuple(table.session_ids), table.binary_labels,
                                tuple(pp.name for pp in patterns))


# ---------------------------------------------------------------- linear SVM

@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-6
    max_epochs: int = 5000
    standardize: bool = True


@dataclass(frozen=True)
class LinearModel:
    """Decision ``w . ((x - mean) / scale) + b``; ``>= 0`` predicts high."""

    w: np.ndarray
    b: float
    mean: np.ndarray
    scale: np.ndarray
    epochs: int = 0
    converged: bool = True

    def decision_function(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.w.size)
        return ((X - self.mean) / self.scale) @ self.w + self.b

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, HIGH, LOW)


@numba.njit(cache=True)
def _dual_cd(X, y, C, tol, max_epochs):
    """
    Dual coordinate descent for the L1-loss linear SVM, cyclic order.

    The bias is a constant feature appended to every row (so it is
    regularized). Stops when the projected-gradient spread falls below tol.
    """
    n, d = X.shape
    w = np.zeros(d + 1)
    alpha = np.zeros(n)
    qii = np.empty(n)
    for i in range(n):
        s = 1.0
        for j in range(d):
            s += X[i, j] * X[i, j]
        qii[i] = s
    epoch = 0
    converged = False
    while epoch < max_epochs:
        pg_max = -np.inf
        pg_min = np.inf
        for i in range(n):
            g = w[d]
            for j in range(d):
                g += w[j] * X[i, j]
            g = y[i] * g - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                old = alpha[i]
                a = old - g / qii[i]
                alpha[i] = min(max(a, 0.0), C)
                delta = (alpha[i] - old) * y[i]
                for j in range(d):
                    w[j] += delta * X[i, j]
                w[d] += delta
        epoch += 1
        if pg_max - pg_min < tol:
            converged = True
            break
    return w, epoch, converged


def train_svm(X, y, config=None):
    """
    Fit a linear max-margin classifier (hinge loss, L2 penalty, C = 1 by default).

    Features are standardized with statistics of ``X`` only; constant
    columns map to 0. Training is deterministic (cyclic coordinate order).

    Raises
    ------
    ClassifierError
        Fewer than two classes, or non-finite features.
    """
    config = config or SvmConfig()
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ClassifierError("training labels must contain both classes")
    if not np.isfinite(X).all():
        raise ClassifierError("non-finite features")
    d = X.shape[1]
    if config.standardize and d:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        const = scale == 0
        scale = np.where(const, 1.0, scale)
        Z = (X - mean) / scale
        Z[:, const] = 0.0
    else:
        mean, scale, Z = np.zeros(d), np.ones(d), X
    w, epochs, conv = _dual_cd(np.ascontiguousarray(Z), y, float(config.C),
                               float(config.tol), int(config.max_epochs))
    return LinearModel(w=w[:d].copy(), b=float(w[d]), mean=mean, scale=scale,
                       epochs=int(epochs), converged=bool(conv))


# ---------------------------------------------------------------- folds

def stratified_folds(labels, k=5, seed=0, groups=None):
    """
    Fold index of every sample.

    Without ``groups``: each class is shuffled and dealt round-robin, with
    the second class continuing where the first stopped, so fold sizes
    differ by at most one. With ``groups`` (e.g. therapist ids), whole
    groups are dealt: groups are shuffled, ordered by size (largest first)
    and each goes to the fold currently holding the fewest samples of the
    group's majority class, ties to the smaller fold, then the lower index.
    """
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=np.int64)
    if groups is None:
        pos = 0
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            idx = idx[rng.permutation(idx.size)]
            fold[idx] = (pos + np.arange(idx.size)) % k
            pos += idx.size
        return fold
    groups = np.asarray(groups)
    names = np.unique(groups)
    names = names[rng.permutation(names.size)]
    members = {g: np.flatnonzero(groups == g) for g in names}
    order = sorted(names, key=lambda g: -members[g].size)  # stable: shuffled ties
    classes = np.unique(labels)
    per_class = np.zeros((k, classes.size), dtype=np.int64)
    for g in order:
        idx = members[g]
        cls = np.array([np.count_nonzero(labels[idx] == c) for c in classes])
        major = int(np.argmax(cls))
        sizes = per_class.sum(axis=1)
        f = min(range(k), key=lambda f: (per_class[f, major], sizes[f], f))
        fold[idx] = f
        per_class[f] += cls
    return fold


# ---------------------------------------------------------------- CV

@dataclass(frozen=True)
class ClassifierConfig:
    folds: int = 5
    mode: str = "faithful"
    folds_by: str = "session"
    seed: int = 0
    svm: SvmConfig = field(default_factory=SvmConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)

    def __post_init__(self):
        if self.mode not in CV_MODES:
            raise ValueError(f"cv mode must be one of {CV_MODES}")
        if self.folds_by not in FOLDS_BY:
            raise ValueError(f"folds_by must be one of {FOLDS_BY}")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")

    def as_dict(self):
        return {"folds": self.folds, "mode": self.mode, "folds_by": self.folds_by,
                "seed": self.seed, "C": self.svm.C, "svm_tol": self.svm.tol,
                "svm_max_epochs": self.svm.max_epochs,
                "standardize": self.svm.standardize}


@dataclass(frozen=True)
class CvReport:
    method: str
    mode: str
    seed: int
    fold_accuracies: tuple
    dimensions: tuple
    confusion: dict
    folds: np.ndarray = field(repr=False, default=None)
    predictions: np.ndarray = field(repr=False, default=None)

    @property
    def mean_accuracy(self):
        return float(np.mean(self.fold_accuracies))

    @property
    def dimension(self):
        """Feature dimension (the common value, or the per-fold mean in nested mode)."""
        dims = set(self.dimensions)
        return self.dimensions[0] if len(dims) == 1 else float(np.mean(self.dimensions))

    def as_dict(self):
        return {"method": self.method, "mode": self.mode, "seed": self.seed,
                "fold_accuracies": list(self.fold_accuracies),
                "mean_accuracy": self.mean_accuracy,
                "dimension": self.dimension,
                "fold_dimensions": list(self.dimensions),
                "confusion": dict(self.confusion)}


def _fit_predict(Xtr, ytr, Xte, svm):
    if Xtr.shape[1] == 0:
        # no features: bias-only model, i.e. the training majority class
        return np.full(Xte.shape[0], HIGH if np.sum(ytr == HIGH) >= np.sum(ytr == LOW) else LOW)
    return train_svm(Xtr, ytr, svm).predict(Xte)


def _genre_matrix(table, gset):
    if not len(gset):
        return np.zeros((table.n_sessions, 0))
    return session_features(table, gset.genres).values


def _report(method, config, fold, y, pred, dims):
    accs = tuple(float(np.mean(pred[fold == f] == y[fold == f])) for f in range(config.folds))
    conf = {"tp": int(np.sum((pred == HIGH) & (y == HIGH))),
            "tn": int(np.sum((pred == LOW) & (y == LOW))),
            "fp": int(np.sum((pred == HIGH) & (y == LOW))),
            "fn": int(np.sum((pred == LOW) & (y == HIGH)))}
    return CvReport(method=method, mode=config.mode, seed=config.seed,
                    fold_accuracies=accs, dimensions=tuple(dims), confusion=conf,
                    folds=fold, predictions=pred)


def make_folds(table, config):
    y = table.binary_labels
    for c in (HIGH, LOW):
        if np.sum(y == c) < config.folds:
            raise ClassifierError(
                f"need at least {config.folds} sessions per class, "
                f"have {int(np.sum(y == HIGH))} high / {int(np.sum(y == LOW))} low")
    groups = table.therapist_ids if config.folds_by == "therapist" else None
    fold = stratified_folds(y, config.folds, config.seed, groups)
    if len(np.unique(fold)) != config.folds:
        raise ClassifierError("too few groups to fill every fold")
    return fold


def cross_validate(table, config=None, genres=None, labels=None):
    """
    Cross-validated accuracy of the genre method and the pattern baseline.

    Parameters
    ----------
    table : FeatureTable
    config : ClassifierConfig, optional
    genres : SalientGenreSet, optional
        Used in faithful mode; mined from ``table`` with ``config.mining``
        when omitted. Ignored in nested mode, where mining reruns on every
        training fold.
    labels : array of +1/-1, optional
        Override of the session labels (e.g. shuffled for a null check).
        Ratings used for mining are left untouched.

    Returns
    -------
    dict mapping method name to CvReport
    """
    config = config or ClassifierConfig()
    y = np.asarray(table.binary_labels if labels is None else labels)
    if labels is not None:
        table = replace(table, labels=tuple("high" if v == HIGH else "low" for v in y))
    fold = make_folds(table, config)
    mc = config.mining
    pred = {m: np.zeros(y.size, dtype=np.int64) for m in METHODS}
    dims = {m: [] for m in METHODS}

    if config.mode == "faithful":
        gset = genres if genres is not None else mine(table, mc)
        Xg = _genre_matrix(table, gset)
        pats, quant = mine_prominent_patterns(table, mc.q, mc.pv_max,
                                              quantizers=dict(gset.quantizers) or None)
        Xb = pattern_features(table, pats, quant).values
    for f in range(config.folds):
        te = fold == f
        tr = ~te
        if config.mode == "nested":
            sub = table.subset(tr)
            gset = mine(sub, mc)
            Xg = _genre_matrix(table, gset)
            pats, quant = mine_prominent_patterns(sub, mc.q, mc.pv_max,
                                                  quantizers=dict(gset.quantizers) or None)
            Xb = pattern_features(table, pats, quant).values
        for m, X in (("genre", Xg), ("pattern-baseline", Xb)):
            pred[m][te] = _fit_predict(X[tr], y[tr], X[te], config.svm)
            dims[m].append(X.shape[1])
    return {m: _report(m, config, fold, y, pred[m], dims[m]) for m in METHODS}


def cv_report_json(reports, **extra):
    return json.dumps({**extra, "methods": [reports[m].as_dict() for m in METHODS]}, indent=1)
