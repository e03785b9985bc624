"""Curve indicators and distribution distances between curve sets.

Five indicators characterize a curve: mean, coefficient of variation,
max/mean ratio, skewness and kurtosis. Two curve sets are compared by the
1-D earth mover's distance between their indicator distributions, each
indicator scaled to unit pooled variance, then averaged (the Average
Indicator Distance, AID).

Conventions: central moments use divisor n and kurtosis is non-excess
(m4 / m2**2). A zero-mean curve reports ``inf`` for cv and max/mean ratio;
a constant curve reports skewness and kurtosis 0.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curves import Curve, Scale
from .errors import DomainError

logger = logging.getLogger(__name__)

INDICATOR_NAMES = ("mean", "cv", "max_mean_ratio", "skewness", "kurtosis")


@dataclass(frozen=True)
class IndicatorVector:
    mean: float
    cv: float
    max_mean_ratio: float
    skewness: float
    kurtosis: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mean, self.cv, self.max_mean_ratio, self.skewness, self.kurtosis)


def _values(curve) -> np.ndarray:
    if isinstance(curve, Curve):
        return curve.values
    return np.asarray(curve, dtype=np.float64)


def _indicator_row(x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        raise DomainError("indicators need a non-empty curve")
    m1 = x.mean()
    if np.ptp(x) == 0:
        m2 = m3 = m4 = 0.0
    else:
        d = x - m1
        d2 = d * d
        m2, m3, m4 = d2.mean(), (d2 * d).mean(), (d2 * d2).mean()
    if m1 == 0:
        cv = mmr = math.inf
    else:
        cv = math.sqrt(m2) / m1
        mmr = x.max() / m1
    if m2 == 0:
        skew = kurt = 0.0
    else:
        skew = m3 / m2**1.5
        kurt = m4 / (m2 * m2)
    return np.array([m1, cv, mmr, skew, kurt])


def indicators(curve) -> IndicatorVector:
    return IndicatorVector(*(float(v) for v in _indicator_row(_values(curve))))


def indicator_matrix(curves: Sequence) -> np.ndarray:
    """(n, 5) array of indicators, columns ordered as ``INDICATOR_NAMES``."""
    if len(curves) == 0:
        return np.zeros((0, len(INDICATOR_NAMES)))
    return np.stack([_indicator_row(_values(c)) for c in curves])


def emd_1d(a, b) -> float:
    """Exact Wasserstein-1 distance between two empirical distributions on the line.

    Integrates ``|F_a - F_b|`` over the merged support.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("emd_1d needs two non-empty samples")
    support = np.sort(np.concatenate([a, b]))
    widths = np.diff(support)
    cdf_a = np.searchsorted(a, support[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * widths))


@dataclass(frozen=True)
class IndicatorDistance:
    indicator: str
    emd_raw: float
    pooled_variance: float
    emd_normalized: float
    # "" when fine; otherwise why the distance is degenerate
    flag: str = ""
    excluded: int = 0


@dataclass(frozen=True)
class AIDResult:
    value: float
    breakdown: tuple[IndicatorDistance, ...]

    def __float__(self) -> float:
        return self.value


def _check_raw(curves) -> None:
    for c in curves:
        if isinstance(c, Curve) and c.scale is not Scale.RAW:
            raise DomainError("indicator distances expect raw_kwh curves; denormalize first")


def average_indicator_distance(natural: Sequence, artificial: Sequence) -> AIDResult:
    """Mean over the five indicators of the unit-variance-normalized EMD.

    Variance is pooled over both sets. Non-finite indicator values are
    excluded (with a warning); an indicator with zero pooled variance
    contributes 0 and is flagged.
    """
    if len(natural) == 0 or len(artificial) == 0:
        raise DomainError("average_indicator_distance needs two non-empty curve sets")
    _check_raw(natural)
    _check_raw(artificial)
    nat = indicator_matrix(natural)
    art = indicator_matrix(artificial)
    rows = []
    for j, name in enumerate(INDICATOR_NAMES):
        a, b = nat[:, j], art[:, j]
        fa, fb = np.isfinite(a), np.isfinite(b)
        excluded = int((~fa).sum() + (~fb).sum())
        if excluded:
            logger.warning("%s: excluding %d non-finite indicator values", name, excluded)
        a, b = a[fa], b[fb]
        if a.size == 0 or b.size == 0:
            rows.append(IndicatorDistance(name, math.nan, math.nan, math.nan, "no finite values", excluded))
            continue
        pooled = float(np.var(np.sort(np.concatenate([a, b]))))
        raw = emd_1d(a, b)
        if pooled == 0:
            rows.append(IndicatorDistance(name, raw, 0.0, 0.0, "zero pooled variance", excluded))
        else:
            rows.append(IndicatorDistance(name, raw, pooled, raw / math.sqrt(pooled), "", excluded))
    usable = [r.emd_normalized for r in rows if not math.isnan(r.emd_normalized)]
    value = float(np.mean(usable)) if usable else math.nan
    return AIDResult(value, tuple(rows))


def write_report_csv(path, result: AIDResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["indicator", "emd_raw", "pooled_variance", "emd_normalized"])
        for r in result.breakdown:
            w.writerow([r.indicator, repr(r.emd_raw), repr(r.pooled_variance), repr(r.emd_normalized)])
        w.writerow(["AID", "", "", repr(result.value)])
