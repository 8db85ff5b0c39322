"""
Utterance-genre mining.

For every feature combination the miner fits a corpus-wide quantizer, runs
K-means for ``K = 2 .. N``, and labels each cluster with its dominant
feature pattern (its *genre*). A genre's per-session contribution is the
share of the session's utterances that sit in the cluster and carry the
pattern; its correlation with empathy ratings screens it for salience.

Salient genres that share a (combination, pattern) key across clusters are
merged: the merged value range takes the median of the per-cluster lower
bounds and the median of the per-cluster upper bounds, and the merged
contribution counts utterances whose features fall inside that range.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .cluster import KMeansConfig, kmeans
from .combos import FeatureCombo, enumerate_combos
from .quantize import FeaturePattern, QuantizerSpec, fit_quantizer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MiningConfig:
    q: int = 3
    n_max: int = 20
    rf_min: float = 0.5
    rg_min: float = 0.05
    pv_max: float = 0.05
    seed: int = 0
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    combos: tuple | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2")
        if self.q < 2:
            raise ValueError("Q must be >= 2")

    @property
    def combo_list(self):
        return list(self.combos) if self.combos else enumerate_combos()

    @property
    def k_values(self):
        return list(range(2, self.n_max + 1))

    @property
    def n_trials(self):
        return len(self.combo_list) * len(self.k_values)

    def thresholds(self):
        return {"N": self.n_max, "rf_min": self.rf_min, "rg_min": self.rg_min,
                "pv_max": self.pv_max, "Q": self.q}

    def as_dict(self):
        return {
            **self.thresholds(),
            "seed": self.seed,
            "kmeans": {"restarts": self.kmeans.restarts, "tol": self.kmeans.tol,
                       "max_iter": self.kmeans.max_iter,
                       "standardize": self.kmeans.standardize,
                       "algorithm": self.kmeans.algorithm},
            "combos": [c.name for c in self.combo_list],
        }


@dataclass(frozen=True)
class UtteranceGenre:
    """Genre of one cluster in one clustering trial."""

    combo: FeatureCombo
    pattern: FeaturePattern
    K: int
    cluster: int
    seed: int
    size: int
    occurrence_ratio: float
    contribution: np.ndarray = field(repr=False)
    correlation: stats.CorrelationResult | None
    value_range: tuple

    @property
    def key(self):
        return (self.combo, self.pattern)

    @property
    def mean_contribution(self):
        return float(self.contribution.mean())

    @property
    def p_value(self):
        return self.correlation.p_value if self.correlation else float("nan")

    @property
    def rho(self):
        return self.correlation.rho if self.correlation else float("nan")

    def as_dict(self):
        return {
            "combo": self.combo.name,
            "pattern": list(self.pattern.display),
            "K": self.K, "cluster": self.cluster, "seed": self.seed,
            "size": self.size,
            "occurrence_ratio": self.occurrence_ratio,
            "mean_contribution": self.mean_contribution,
            "rho": _num(self.rho), "p_value": _num(self.p_value),
            "value_range": [list(r) for r in self.value_range],
        }


@dataclass(frozen=True)
class SalientGenre:
    """A (combination, pattern) key merged over every salient cluster carrying it."""

    combo: FeatureCombo
    pattern: FeaturePattern
    sources: tuple
    aggregated_range: tuple
    contribution: np.ndarray = field(repr=False)
    correlation: stats.CorrelationResult | None

    @property
    def key(self):
        return (self.combo, self.pattern)

    @property
    def mean_contribution(self):
        return float(self.contribution.mean())

    @property
    def occurrence_ratio(self):
        return float(np.mean([s.occurrence_ratio for s in self.sources]))

    @property
    def rho(self):
        return self.correlation.rho if self.correlation else float("nan")

    @property
    def p_value(self):
        return self.correlation.p_value if self.correlation else float("nan")

    def describe(self):
        return self.pattern.describe(self.combo)

    def as_dict(self):
        return {
            "combo": self.combo.name,
            "group": self.combo.group,
            "pattern": list(self.pattern.display),
            "pattern_bins": list(self.pattern.labels),
            "source_trials": [{"K": s.K, "cluster": s.cluster, "seed": s.seed,
                               "occurrence_ratio": s.occurrence_ratio,
                               "mean_contribution": s.mean_contribution,
                               "rho": _num(s.rho), "p_value": _num(s.p_value)}
                              for s in self.sources],
            "occurrence_ratio": self.occurrence_ratio,
            "mean_contribution": self.mean_contribution,
            "rho": _num(self.rho),
            "p_value": _num(self.p_value),
            "value_range": [[list(r) for r in s.value_range] for s in self.sources],
            "aggregated_range": [list(r) for r in self.aggregated_range],
        }


@dataclass(frozen=True)
class SalientGenreSet:
    genres: tuple
    thresholds: dict
    quantizers: dict = field(default_factory=dict, repr=False)
    candidates: tuple = field(default=(), repr=False)
    session_ids: tuple = ()

    def __len__(self):
        return len(self.genres)

    def __iter__(self):
        return iter(self.genres)

    def find(self, combo, pattern):
        for g in self.genres:
            if g.combo == combo and g.pattern == pattern:
                return g
        return None

    def report(self):
        """Genres sorted by merged p-value ascending (undefined p last)."""
        def order(g):
            p = g.p_value
            return (np.isnan(p), p if not np.isnan(p) else 0.0)
        return [g.as_dict() for g in sorted(self.genres, key=order)]

    def as_dict(self):
        return {
            "thresholds": self.thresholds,
            "n_candidates": len(self.candidates),
            "n_salient_clusters": sum(len(g.sources) for g in self.genres),
            "genres": self.report(),
            "quantizers": [self.quantizers[c].as_dict()
                           for c in sorted(self.quantizers)],
        }

    def to_json(self, **extra):
        return json.dumps({**extra, **self.as_dict()}, indent=1)

    @classmethod
    def from_dict(cls, obj):
        """Rebuild the merged genres (ranges and keys) from a genre report."""
        q = obj["thresholds"]["Q"]
        genres = []
        for g in obj["genres"]:
            combo = FeatureCombo(g["group"], tuple(g["combo"].split("+")))
            genres.append(SalientGenre(
                combo=combo, pattern=FeaturePattern(tuple(g["pattern_bins"]), q),
                sources=(), aggregated_range=tuple(tuple(r) for r in g["aggregated_range"]),
                contribution=np.zeros(0), correlation=None))
        genres.sort(key=_canonical)
        quantizers = {}
        for spec in obj.get("quantizers", []):
            qs = QuantizerSpec.from_dict(spec)
            quantizers[qs.combo] = qs
        return cls(genres=tuple(genres), thresholds=obj["thresholds"],
                   quantizers=quantizers)


def _num(x):
    return None if x is None or (isinstance(x, float) and np.isnan(x)) else float(x)


def _canonical(g):
    order = {c: i for i, c in enumerate(enumerate_combos())}
    return (order.get(g.combo, len(order)), g.pattern.code)


def trial_seed(seed, combo_idx, K):
    """Deterministic per-trial seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, combo_idx, K]).generate_state(1)[0])


def derive_genre(members, spec):
    """
    Dominant pattern of one cluster.

    Parameters
    ----------
    members : array, shape (n, m)
        The cluster's features in ``spec.combo`` order (unscaled).
    spec : QuantizerSpec

    Returns
    -------
    pattern : FeaturePattern
    occurrence_ratio : float
    value_range : tuple of (min, max) per feature, over pattern carriers only
    carriers : bool array marking members that carry the pattern
    """
    members = np.atleast_2d(np.asarray(members, dtype=float))
    if members.shape[0] == 0:
        raise ValueError("empty cluster")
    codes = spec.codes(members)
    counts = np.bincount(codes, minlength=spec.q ** len(spec.combo))
    dom = int(np.argmax(counts))  # first maximum = lexicographically smallest
    carriers = codes == dom
    sub = members[carriers]
    vr = tuple((float(sub[:, j].min()), float(sub[:, j].max()))
               for j in range(members.shape[1]))
    pattern = FeaturePattern.from_code(dom, spec.q, len(spec.combo))
    return pattern, counts[dom] / members.shape[0], vr, carriers


def contribution_ratios(carrier_rows, table):
    """
    Per-session share of utterances among ``carrier_rows``.

    ``carrier_rows`` marks (bool mask or index array over the table rows) the
    utterances that sit in the cluster and carry its pattern. Sessions with
    no such utterance get 0.
    """
    rows = np.asarray(carrier_rows)
    idx = np.flatnonzero(rows) if rows.dtype == bool else rows
    counts = np.bincount(table.session_index[idx], minlength=table.n_sessions)
    return counts / table.session_sizes


def in_range_mask(X, value_range):
    lo = np.array([r[0] for r in value_range])
    hi = np.array([r[1] for r in value_range])
    return np.all((X >= lo) & (X <= hi), axis=1)


def _safe_corr(x, y):
    try:
        return stats.pearson(x, y)
    except stats.StatsError:
        return None


def _clustering_genres(combo, spec, X, codes, labels, K, seed, sess_idx,
                       sizes, ratings):
    P = spec.q ** len(combo)
    S = sizes.size
    cnt = np.bincount(labels * P + codes, minlength=K * P).reshape(K, P)
    dom = cnt.argmax(axis=1)
    csize = cnt.sum(axis=1)
    occ = cnt[np.arange(K), dom] / csize
    carry = codes == dom[labels]
    cl = labels[carry]
    contrib = (np.bincount(cl * S + sess_idx[carry], minlength=K * S)
               .reshape(K, S) / sizes)
    rho, p = stats.pearson_rows(contrib, ratings)
    m = X.shape[1]
    mins = np.full((K, m), np.inf)
    maxs = np.full((K, m), -np.inf)
    Xc = X[carry]
    for j in range(m):
        np.minimum.at(mins[:, j], cl, Xc[:, j])
        np.maximum.at(maxs[:, j], cl, Xc[:, j])
    out = []
    for c in range(K):
        corr = None if np.isnan(rho[c]) else stats.CorrelationResult(
            float(rho[c]), float(p[c]), S)
        out.append(UtteranceGenre(
            combo=combo, pattern=FeaturePattern.from_code(int(dom[c]), spec.q, m),
            K=K, cluster=c, seed=seed, size=int(csize[c]),
            occurrence_ratio=float(occ[c]), contribution=contrib[c],
            correlation=corr,
            value_range=tuple((float(mins[c, j]), float(maxs[c, j])) for j in range(m))))
    return out


def _mine_combo(args):
    combo, combo_idx, table, config = args
    X = np.ascontiguousarray(table.columns(combo.members))
    spec = fit_quantizer(X, combo, config.q)
    codes = spec.codes(X)
    sizes = table.session_sizes
    candidates = []
    for K in config.k_values:
        seed = trial_seed(config.seed, combo_idx, K)
        cl = kmeans(X, K, seed=seed, config=config.kmeans)
        candidates.extend(_clustering_genres(
            combo, spec, X, codes, cl.labels, K, seed, table.session_index,
            sizes, table.ratings))
    return spec, candidates


def is_salient(genre, config):
    """Screening conditions: dominance, mean contribution, and correlation p-value."""
    return (genre.occurrence_ratio > config.rf_min
            and genre.mean_contribution > config.rg_min
            and genre.correlation is not None
            and genre.correlation.p_value < config.pv_max)


def merge_genres(salient, table):
    """Merge per-cluster salient genres sharing a (combo, pattern) key."""
    groups = {}
    for g in salient:
        groups.setdefault(g.key, []).append(g)
    merged = []
    for (combo, pattern), members in groups.items():
        m = len(combo)
        agg = tuple(
            (stats.median([s.value_range[j][0] for s in members]),
             stats.median([s.value_range[j][1] for s in members]))
            for j in range(m))
        X = table.columns(combo.members)
        contrib = contribution_ratios(in_range_mask(X, agg), table)
        merged.append(SalientGenre(
            combo=combo, pattern=pattern,
            sources=tuple(sorted(members, key=lambda s: (s.K, s.cluster))),
            aggregated_range=agg, contribution=contrib,
            correlation=_safe_corr(contrib, table.ratings)))
    merged.sort(key=_canonical)
    return merged


def select_salient(genres, config, table, quantizers=None):
    """
    Screen per-cluster genres and merge the survivors.

    A genre is kept iff its occurrence ratio exceeds ``rf_min``, its mean
    contribution exceeds ``rg_min`` and its correlation p-value is below
    ``pv_max``.
    """
    kept = [g for g in genres if is_salient(g, config)]
    return SalientGenreSet(
        genres=tuple(merge_genres(kept, table)),
        thresholds=config.thresholds(),
        quantizers=dict(quantizers or {}),
        candidates=tuple(genres),
        session_ids=tuple(table.session_ids))


def mine(table, config=None):
    """
    Run every clustering trial and return the salient genre set.

    Parameters
    ----------
    table : FeatureTable
        Normalized features of the analyzed sessions.
    config : MiningConfig, optional

    Returns
    -------
    SalientGenreSet
        ``candidates`` holds every per-cluster genre with its statistics.
    """
    config = config or MiningConfig()
    if table.n_sessions < 3:
        raise ValueError("mining needs at least 3 sessions")
    index = {c: i for i, c in enumerate(enumerate_combos())}
    jobs = [(c, index[c], table, config) for c in config.combo_list]
    n_jobs = config.n_jobs if config.n_jobs > 0 else (os.cpu_count() or 1)
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            results = list(pool.map(_mine_combo, jobs))
    else:
        results = [_mine_combo(j) for j in jobs]
    quantizers = {}
    candidates = []
    for (combo, *_), (spec, cands) in zip(jobs, results):
        quantizers[combo] = spec
        candidates.extend(cands)
    out = select_salient(candidates, config, table, quantizers)
    log.info("mined %d candidates over %d trials, %d salient keys",
             len(candidates), config.n_trials, len(out.genres))
    return out
