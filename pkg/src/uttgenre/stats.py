"""
Shared numerical statistics.

Percentiles use linear interpolation between closest order statistics
(position ``(n - 1) * q / 100`` in the sorted sample). Every percentile,
median and interquartile range in the package goes through this module so
the convention is applied uniformly.

Correlation p-values are two-tailed, from the t-transform of the Pearson
coefficient. The t-distribution tail is evaluated through the regularized
incomplete beta function, computed here with a modified-Lentz continued
fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PERCENTILE_CONVENTION = "linear"

_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300
_BETACF_MAXITER = 500


class StatsError(ValueError):
    """Raised for statistically undefined inputs (empty, constant, mismatched)."""


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int

    def as_dict(self):
        return {"rho": self.rho, "p_value": self.p_value, "n": self.n}


def percentile(values, q):
    """
    Linear-interpolation percentile.

    Parameters
    ----------
    values : array-like
        Non-empty sample.
    q : float or array-like
        Percentile(s) in [0, 100].

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise StatsError("percentile of an empty sample")
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 100)):
        raise StatsError("percentile q must lie in [0, 100]")
    out = np.percentile(arr, q, method=PERCENTILE_CONVENTION)
    return float(out) if out.ndim == 0 else out


def median(values):
    return percentile(values, 50.0)


def iqr(values):
    lo, hi = percentile(values, [25.0, 75.0])
    return float(hi - lo)


def zscore(x, axis=0):
    """Center and scale to unit population variance; zero-variance axes get scale 1."""
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=axis, keepdims=True)
    sd = x.std(axis=axis, keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - mu) / sd


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function, elementwise."""
    a, b, x = np.broadcast_arrays(
        np.asarray(a, float), np.asarray(b, float), np.asarray(x, float))
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _BETACF_TINY, _BETACF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, _BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _BETACF_TINY, _BETACF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _BETACF_TINY, _BETACF_TINY, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _BETACF_TINY, _BETACF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _BETACF_TINY, _BETACF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _BETACF_EPS
        if done.all():
            break
    return h


def betainc(a, b, x):
    """
    Regularized incomplete beta function I_x(a, b), elementwise.

    Uses the symmetry I_x(a, b) = 1 - I_{1-x}(b, a) to keep the continued
    fraction in its fast-converging region ``x < (a + 1) / (a + b + 2)``.
    """
    a, b, x = np.broadcast_arrays(
        np.asarray(a, float), np.asarray(b, float), np.asarray(x, float))
    if np.any((x < 0) | (x > 1)):
        raise StatsError("betainc argument x must lie in [0, 1]")
    out = np.empty(x.shape, dtype=float)
    interior = (x > 0) & (x < 1)
    out[x <= 0] = 0.0
    out[x >= 1] = 1.0
    if interior.any():
        ai, bi, xi = a[interior], b[interior], x[interior]
        lgam = np.vectorize(math.lgamma, otypes=[float])
        lbt = (lgam(ai + bi) - lgam(ai) - lgam(bi)
               + ai * np.log(xi) + bi * np.log1p(-xi))
        front = np.exp(lbt)
        direct = xi < (ai + 1.0) / (ai + bi + 2.0)
        res = np.empty(xi.shape)
        if direct.any():
            res[direct] = (front[direct]
                           * _betacf(ai[direct], bi[direct], xi[direct])
                           / ai[direct])
        flip = ~direct
        if flip.any():
            res[flip] = 1.0 - (front[flip]
                               * _betacf(bi[flip], ai[flip], 1.0 - xi[flip])
                               / bi[flip])
        out[interior] = res
    return out if out.ndim else float(out)


def t_two_sided_p(t, df):
    """Two-tailed p-value P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    df = np.asarray(df, dtype=float)
    x = df / (df + t * t)
    p = betainc(df / 2.0, 0.5, np.where(np.isfinite(x), x, 0.0))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if np.ndim(p) == 0 else p


def rho_p_value(rho, n):
    """Two-tailed p-value of Pearson ``rho`` at sample size ``n`` via the t-transform."""
    rho = np.asarray(rho, dtype=float)
    df = n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = np.maximum(1.0 - rho * rho, 0.0)
        t = np.where(denom > 0, rho * np.sqrt(df / np.where(denom > 0, denom, 1.0)),
                     np.copysign(np.inf, rho))
    p = np.where(np.isfinite(t), t_two_sided_p(np.where(np.isfinite(t), t, 0.0), df), 0.0)
    p = np.where(np.isnan(rho), np.nan, p)
    return float(p) if p.ndim == 0 else p


def pearson(x, y):
    """
    Pearson product-moment correlation with a two-tailed t-based p-value.

    Raises
    ------
    StatsError
        On length mismatch, fewer than 3 samples, or a constant input.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 3:
        raise StatsError("pearson needs at least 3 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("pearson correlation undefined for a constant input")
    rho = float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
    return CorrelationResult(rho=rho, p_value=rho_p_value(rho, n), n=n)


def pearson_rows(X, y):
    """
    Row-wise Pearson correlation of each row of ``X`` against ``y``.

    Rows with zero variance get ``rho = nan`` and ``p = nan``.

    Returns
    -------
    rho, p : ndarray
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if X.shape[1] != n:
        raise StatsError(f"length mismatch: {X.shape[1]} vs {n}")
    if n < 3:
        raise StatsError("pearson needs at least 3 samples")
    yc = y - y.mean()
    syy = yc @ yc
    if syy == 0:
        raise StatsError("pearson correlation undefined for a constant target")
    Xc = X - X.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", Xc, Xc)
    # Rows that are constant up to rounding count as constant.
    scale = np.maximum(np.abs(X).max(axis=1), 1e-300)
    const = sxx <= (1e-12 * scale) ** 2 * n
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = (Xc @ yc) / np.sqrt(sxx * syy)
    rho = np.where(const, np.nan, np.clip(rho, -1.0, 1.0))
    p = np.full(rho.shape, np.nan)
    ok = ~const
    if ok.any():
        p[ok] = rho_p_value(rho[ok], n)
    return rho, p
