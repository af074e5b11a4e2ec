"""Evaluation metrics: regression scores, vegetation-deficit classes, AUROC.

The headline R-squared everywhere in this package is the squared Pearson
correlation between predictions and actuals. The 1 - RSS/TSS variant is
also computed for the detailed report, together with the sign of the
correlation so anti-correlated cells stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DataError, NumericalError

DROUGHT_CLASS_BOUNDS = (10.0, 20.0, 35.0, 50.0)  # lower bounds of classes 2..5


class DroughtClass(IntEnum):
    EXTREME_DEFICIT = 1
    SEVERE_DEFICIT = 2
    MODERATE_DEFICIT = 3
    NORMAL = 4
    ABOVE_NORMAL = 5

    @property
    def label(self) -> str:
        return {
            1: "Extreme vegetation deficit",
            2: "Severe vegetation deficit",
            3: "Moderate vegetation deficit",
            4: "Normal vegetation conditions",
            5: "Above normal vegetation conditions",
        }[int(self)]


@dataclass
class MetricsRecord:
    group: str  # unit name or "OVERALL"
    n: int
    r2: float
    r2_rss: float
    corr_sign: int
    rmse: float
    mae: float
    mape: float
    mape_skipped: int
    accuracy: float
    auroc: float
    moderate_extreme_recall: float
    drought_class_agreement: float


def _check_pair(predicted, actual, min_n=1):
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise DataError(f"length mismatch: {p.shape} vs {a.shape}")
    if len(p) < min_n:
        raise DataError(f"need at least {min_n} rows, got {len(p)}")
    return p, a


def pearson(x, y) -> float:
    x, y = _check_pair(x, y, min_n=3)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        raise NumericalError("correlation undefined for a constant vector")
    return float(np.sum(xc * yc) / (sx * sy))


def r2(predicted, actual) -> float:
    """Squared Pearson correlation between predictions and actuals."""
    return pearson(predicted, actual) ** 2


def r2_rss(predicted, actual) -> float:
    """1 - RSS/TSS (can be negative for a bad predictor)."""
    p, a = _check_pair(predicted, actual, min_n=2)
    tss = float(np.sum((a - a.mean()) ** 2))
    if tss == 0.0:
        raise NumericalError("TSS is zero, targets are constant")
    return 1.0 - float(np.sum((a - p) ** 2)) / tss


@dataclass
class ErrorMetrics:
    rmse: float
    mae: float
    mape: float  # percent; NaN if every row was skipped
    mape_skipped: int


def error_metrics(predicted, actual, mape_floor: float = 1e-9) -> ErrorMetrics:
    p, a = _check_pair(predicted, actual, min_n=1)
    err = p - a
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    usable = np.abs(a) >= mape_floor
    skipped = int(len(a) - usable.sum())
    if usable.any():
        mape = float(np.mean(np.abs(err[usable] / a[usable]))) * 100.0
    else:
        mape = float("nan")
    return ErrorMetrics(rmse, mae, mape, skipped)


def classify_vci3m(value) -> int:
    """Map a VCI value to its vegetation-deficit class (1 worst .. 5 best).

    Values below 0 fall in class 1 and values at or above 100 in class 5:
    the end classes are open-ended because relative-range scaling can leave
    the 0-100 band when a new extreme occurs.
    """
    v = float(value)
    if not np.isfinite(v):
        raise DataError(f"cannot classify non-finite value {value!r}")
    c = 1 + int(np.searchsorted(DROUGHT_CLASS_BOUNDS, v, side="right"))
    return c


def classify_vci3m_array(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise DataError("cannot classify non-finite values")
    return 1 + np.searchsorted(DROUGHT_CLASS_BOUNDS, values, side="right")


def accuracy(predicted_classes, actual_classes) -> float:
    p = np.asarray(predicted_classes)
    a = np.asarray(actual_classes)
    if p.shape != a.shape or len(p) == 0:
        raise DataError("class vectors must be aligned and non-empty")
    return float(np.mean(p == a))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc_binary(scores, events) -> float:
    """Rank-based (Mann-Whitney) AUROC with tie correction.

    `events` flags the positive rows; `scores` should be higher for rows
    believed positive.
    """
    s = np.asarray(scores, dtype=float)
    e = np.asarray(events, dtype=bool)
    if s.shape != e.shape:
        raise DataError("scores and events must be aligned")
    n_pos = int(e.sum())
    n_neg = int(len(e) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs at least one positive and one negative row")
    ranks = _average_ranks(s)
    rank_sum = float(ranks[e].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


DROUGHT_EVENT_MAX_CLASS = 3  # classes 1..3 = moderate to extreme deficit


def moderate_extreme_recall(predicted_classes, actual_classes) -> float:
    """Among months actually in a deficit class (<=3), the fraction predicted so."""
    p = np.asarray(predicted_classes)
    a = np.asarray(actual_classes)
    if p.shape != a.shape:
        raise DataError("class vectors must be aligned")
    drought = a <= DROUGHT_EVENT_MAX_CLASS
    if not drought.any():
        raise DataError("no moderate-to-extreme months in actuals")
    return float(np.mean(p[drought] <= DROUGHT_EVENT_MAX_CLASS))


def drought_class_agreement(predicted_classes, actual_classes) -> float:
    """Exact class agreement restricted to actual deficit months (<=3)."""
    p = np.asarray(predicted_classes)
    a = np.asarray(actual_classes)
    drought = a <= DROUGHT_EVENT_MAX_CLASS
    if not drought.any():
        raise DataError("no moderate-to-extreme months in actuals")
    return float(np.mean(p[drought] == a[drought]))


def compute_record(group: str, predicted, actual) -> MetricsRecord:
    """Full metrics bundle for one (approach, group) cell."""
    p, a = _check_pair(predicted, actual, min_n=3)
    corr = pearson(p, a)
    em = error_metrics(p, a)
    pc = classify_vci3m_array(p)
    ac = classify_vci3m_array(a)
    has_drought = (ac <= DROUGHT_EVENT_MAX_CLASS).any()
    has_both = has_drought and (ac > DROUGHT_EVENT_MAX_CLASS).any()
    return MetricsRecord(
        group=group,
        n=len(p),
        r2=corr**2,
        r2_rss=r2_rss(p, a),
        corr_sign=int(np.sign(corr)) if corr != 0 else 0,
        rmse=em.rmse,
        mae=em.mae,
        mape=em.mape,
        mape_skipped=em.mape_skipped,
        accuracy=accuracy(pc, ac),
        auroc=auroc_binary(-p, ac <= DROUGHT_EVENT_MAX_CLASS) if has_both else float("nan"),
        moderate_extreme_recall=moderate_extreme_recall(pc, ac) if has_drought else float("nan"),
        drought_class_agreement=drought_class_agreement(pc, ac) if has_drought else float("nan"),
    )
