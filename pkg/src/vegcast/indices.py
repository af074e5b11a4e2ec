"""Derivation of the 16 modeling variables and the supervised dataset.

Three transform families feed the catalog:

* scaled relative range, 100*(x - min)/(max - min), with per-calendar-month
  or global reference extremes fitted on a restricted window;
* gamma-standardized precipitation (mixed zero handling, Thom's approximate
  maximum likelihood for the gamma parameters);
* log-logistic standardization of the rainfall/evapotranspiration balance,
  fitted with unbiased probability-weighted moments.

Reference extremes and distribution parameters are only ever fitted on the
given fit window, so holdout months cannot leak into any derived value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special, stats

from .catalog import Category, Derivation, VariableCatalog
from .data import TimeSeriesTable, calendar_month, ym_str
from .errors import DataError, NumericalError

STANDARDIZED_CLAMP = 3.5


class Slotting(Enum):
    GLOBAL = "global"
    PER_CALENDAR_MONTH = "per_calendar_month"


class IndexDistribution(Enum):
    GAMMA = "gamma"
    LOG_LOGISTIC = "log_logistic"


# ---------------------------------------------------------------------------
# elementary series ops


def scaled_relative_range(x, lo, hi):
    """100*(x - lo)/(hi - lo); may leave [0, 100] when x exceeds the extremes."""
    return 100.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo)


def rolling_mean(series, window: int) -> np.ndarray:
    """Trailing mean over `window` months; the first window-1 values are NaN."""
    series = np.asarray(series, dtype=float)
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    if window > len(series):
        raise DataError(f"window {window} exceeds series length {len(series)}")
    if window == 1:
        return series.copy()
    out = np.full(len(series), np.nan)
    kernel = np.ones(window) / window
    out[window - 1 :] = np.convolve(series, kernel, mode="valid")
    return out


def lag(series, k: int) -> np.ndarray:
    """Shift a series forward by k months; the first k values are NaN."""
    series = np.asarray(series, dtype=float)
    if k < 0:
        raise DataError(f"lag must be >= 0, got {k}")
    if k == 0:
        return series.copy()
    out = np.full(len(series), np.nan)
    if k < len(series):
        out[k:] = series[:-k]
    return out


# ---------------------------------------------------------------------------
# relative range


@dataclass(frozen=True)
class RelativeRangeParams:
    """Reference extremes for one unit's series."""

    slotting: Slotting
    fit_start: int
    fit_end: int
    ref_min: np.ndarray  # per slot (12 entries, or 1 for GLOBAL)
    ref_max: np.ndarray

    def slot_of(self, yms: np.ndarray) -> np.ndarray:
        if self.slotting == Slotting.GLOBAL:
            return np.zeros(len(yms), dtype=int)
        return calendar_month(np.asarray(yms))


def fit_relative_range(
    values, yms, fit_start: int, fit_end: int, slotting: Slotting = Slotting.PER_CALENDAR_MONTH
) -> RelativeRangeParams:
    """Fit per-slot extremes from the fit window only."""
    values = np.asarray(values, dtype=float)
    yms = np.asarray(yms)
    in_window = (yms >= fit_start) & (yms <= fit_end) & ~np.isnan(values)
    if not in_window.any():
        raise DataError("empty fit window for relative range extremes")
    n_slots = 1 if slotting == Slotting.GLOBAL else 12
    ref_min = np.full(n_slots, np.nan)
    ref_max = np.full(n_slots, np.nan)
    slots = np.zeros(len(yms), dtype=int) if n_slots == 1 else calendar_month(yms)
    for s in range(n_slots):
        sel = in_window & (slots == s)
        if sel.any():
            ref_min[s] = float(np.min(values[sel]))
            ref_max[s] = float(np.max(values[sel]))
    return RelativeRangeParams(slotting, fit_start, fit_end, ref_min, ref_max)


def apply_relative_range(values, yms, params: RelativeRangeParams) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    slots = params.slot_of(np.asarray(yms))
    lo = params.ref_min[slots]
    hi = params.ref_max[slots]
    used = ~np.isnan(values)
    degenerate = used & (hi - lo <= 0)
    if degenerate.any():
        s = int(slots[np.flatnonzero(degenerate)[0]])
        label = "global" if params.slotting == Slotting.GLOBAL else f"calendar month {s + 1}"
        raise NumericalError(f"degenerate relative-range slot ({label}): max == min")
    missing_slot = used & np.isnan(lo)
    if missing_slot.any():
        s = int(slots[np.flatnonzero(missing_slot)[0]])
        raise DataError(f"no fitted extremes for calendar month {s + 1}")
    out = np.full(len(values), np.nan)
    out[used] = scaled_relative_range(values[used], lo[used], hi[used])
    return out


# ---------------------------------------------------------------------------
# standardized indices


@dataclass(frozen=True)
class SpiFit:
    """Fitted standardization for one unit's series.

    params maps slot -> (q, shape, scale) for the gamma path or
    slot -> (location, scale, shape) for the log-logistic path.
    """

    distribution: IndexDistribution
    per_calendar_month: bool
    fit_start: int
    fit_end: int
    params: dict = field(default_factory=dict)
    clamp: float = STANDARDIZED_CLAMP

    def slot_of(self, yms: np.ndarray) -> np.ndarray:
        if not self.per_calendar_month:
            return np.zeros(len(yms), dtype=int)
        return calendar_month(np.asarray(yms))


def _fit_gamma_mixed(sample: np.ndarray, label: str):
    """Thom's approximate-ML gamma fit with a point mass at zero."""
    if len(sample) == 0:
        raise DataError(f"no observations to fit ({label})")
    zeros = sample <= 0
    q = float(np.mean(zeros))
    positives = sample[~zeros]
    if len(positives) == 0:
        raise NumericalError(f"all-zero sample, cannot fit gamma ({label})")
    mean = float(np.mean(positives))
    a = float(np.log(mean) - np.mean(np.log(positives)))
    if not np.isfinite(a) or a <= 1e-12:
        raise NumericalError(f"degenerate gamma fit, near-constant positives ({label})")
    shape = (1.0 + np.sqrt(1.0 + 4.0 * a / 3.0)) / (4.0 * a)
    scale = mean / shape
    if not (np.isfinite(shape) and np.isfinite(scale) and scale > 0):
        raise NumericalError(f"gamma fit produced non-finite parameters ({label})")
    return q, float(shape), float(scale)


def _gamma_mixed_cdf(x: np.ndarray, q: float, shape: float, scale: float) -> np.ndarray:
    return q + (1.0 - q) * stats.gamma.cdf(x, shape, scale=scale)


def _unbiased_pwm(sample: np.ndarray):
    """First three descending-weight probability-weighted moments."""
    x = np.sort(sample)
    n = len(x)
    i = np.arange(1, n + 1)
    a0 = float(np.mean(x))
    a1 = float(np.sum((n - i) / (n - 1) * x) / n)
    a2 = float(np.sum((n - i) * (n - i - 1) / ((n - 1) * (n - 2)) * x) / n)
    return a0, a1, a2


def _fit_log_logistic(sample: np.ndarray, label: str):
    """Three-parameter log-logistic fit via unbiased PWMs."""
    if len(sample) < 4:
        raise DataError(f"need at least 4 observations for a log-logistic fit ({label})")
    a0, a1, a2 = _unbiased_pwm(sample)
    denom = 6.0 * a1 - a0 - 6.0 * a2
    if abs(denom) < 1e-12:
        raise NumericalError(f"PWM fit divergence: degenerate moments ({label})")
    shape = (2.0 * a1 - a0) / denom
    if not np.isfinite(shape) or shape <= 1.02:
        raise NumericalError(f"PWM fit divergence: shape {shape!r} out of range ({label})")
    g = special.gamma(1.0 + 1.0 / shape) * special.gamma(1.0 - 1.0 / shape)
    scale = (a0 - 2.0 * a1) * shape / g
    location = a0 - scale * g
    if not (np.isfinite(scale) and scale > 0 and np.isfinite(location)):
        raise NumericalError(f"PWM fit divergence: non-finite parameters ({label})")
    return float(location), float(scale), float(shape)


def _log_logistic_cdf(x: np.ndarray, location: float, scale: float, shape: float) -> np.ndarray:
    out = np.zeros(len(x))
    above = x > location
    out[above] = (1.0 + (scale / (x[above] - location)) ** shape) ** -1.0
    return out


def standardize_from_cdf(h: np.ndarray, clamp: float = STANDARDIZED_CLAMP) -> np.ndarray:
    z = stats.norm.ppf(np.clip(h, 1e-12, 1.0 - 1e-12))
    return np.clip(z, -clamp, clamp)


def fit_standardized_index(
    values,
    yms,
    distribution: IndexDistribution,
    fit_start: int,
    fit_end: int,
    per_calendar_month: bool = True,
    min_obs: int = 10,
    clamp: float = STANDARDIZED_CLAMP,
):
    """Fit the standardization on the fit window and transform the whole series.

    Returns (SpiFit, transformed). The gamma path uses the mixed model
    H(x) = q + (1 - q) * GammaCDF(x); the log-logistic path fits directly on
    the (possibly negative) balance series. Output is Phi^-1(H(x)) clamped
    to +-clamp.
    """
    values = np.asarray(values, dtype=float)
    yms = np.asarray(yms)
    in_window = (yms >= fit_start) & (yms <= fit_end) & ~np.isnan(values)
    slots = (
        calendar_month(yms) if per_calendar_month else np.zeros(len(yms), dtype=int)
    )
    params = {}
    for s in sorted(set(slots[in_window].tolist())):
        sample = values[in_window & (slots == s)]
        label = f"calendar month {s + 1}" if per_calendar_month else "pooled"
        if len(sample) < min_obs:
            raise DataError(
                f"only {len(sample)} fit observations for {label}, need >= {min_obs}"
            )
        if distribution == IndexDistribution.GAMMA:
            params[s] = _fit_gamma_mixed(sample, label)
        else:
            params[s] = _fit_log_logistic(sample, label)
    fit = SpiFit(distribution, per_calendar_month, fit_start, fit_end, params, clamp)
    return fit, apply_standardized_index(values, yms, fit)


def apply_standardized_index(values, yms, fit: SpiFit) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    slots = fit.slot_of(np.asarray(yms))
    out = np.full(len(values), np.nan)
    for s, p in fit.params.items():
        sel = (slots == s) & ~np.isnan(values)
        if not sel.any():
            continue
        if fit.distribution == IndexDistribution.GAMMA:
            h = _gamma_mixed_cdf(values[sel], *p)
        else:
            h = _log_logistic_cdf(values[sel], *p)
        out[sel] = standardize_from_cdf(h, fit.clamp)
    used = ~np.isnan(values)
    unfitted = used & np.isnan(out)
    if unfitted.any():
        s = int(slots[np.flatnonzero(unfitted)[0]])
        raise DataError(f"no fitted distribution for calendar slot {s + 1}")
    return out


# ---------------------------------------------------------------------------
# catalog-driven variable construction


@dataclass
class IndexFits:
    """Per (variable, unit) fitted transform parameters."""

    fit_start: int
    fit_end: int
    slotting: Slotting
    spi_per_month: bool
    spi_min_obs: int
    spei_rain: str
    spei_pet: str
    params: dict = field(default_factory=dict)  # (variable name, unit) -> params


def _entry_base_series(table: TimeSeriesTable, entry, sl, spei_rain: str, spei_pet: str):
    if entry.derivation == Derivation.SPEI:
        return table.column(spei_rain)[sl] - table.column(spei_pet)[sl]
    return table.column(entry.base)[sl]


def fit_index_params(
    table: TimeSeriesTable,
    catalog: VariableCatalog,
    fit_start: int,
    fit_end: int,
    slotting: Slotting = Slotting.PER_CALENDAR_MONTH,
    spi_per_month: bool = True,
    spi_min_obs: int = 10,
    spei_rain: str = "RFE",
    spei_pet: str = "PET",
) -> IndexFits:
    """Fit every transform the catalog needs, strictly on the fit window."""
    fits = IndexFits(
        fit_start, fit_end, slotting, spi_per_month, spi_min_obs, spei_rain, spei_pet
    )
    for entry in catalog:
        if entry.derivation == Derivation.RAW:
            continue
        for unit, sl in table.unit_slices().items():
            series = _entry_base_series(table, entry, sl, spei_rain, spei_pet)
            windowed = rolling_mean(series, entry.window)
            yms = table.ym[sl]
            key = (entry.name, unit)
            try:
                if entry.derivation == Derivation.RELATIVE_RANGE:
                    fits.params[key] = fit_relative_range(
                        windowed, yms, fit_start, fit_end, slotting
                    )
                elif entry.derivation == Derivation.SPI:
                    fits.params[key], _ = fit_standardized_index(
                        windowed,
                        yms,
                        IndexDistribution.GAMMA,
                        fit_start,
                        fit_end,
                        per_calendar_month=spi_per_month,
                        min_obs=spi_min_obs,
                    )
                else:
                    fits.params[key], _ = fit_standardized_index(
                        windowed,
                        yms,
                        IndexDistribution.LOG_LOGISTIC,
                        fit_start,
                        fit_end,
                        per_calendar_month=spi_per_month,
                        min_obs=spi_min_obs,
                    )
            except (DataError, NumericalError) as exc:
                raise type(exc)(f"{entry.name} ({unit}): {exc}") from None
    return fits


def build_variable_set(
    table: TimeSeriesTable, catalog: VariableCatalog, fits: IndexFits
) -> TimeSeriesTable:
    """Append every catalog variable to the table using prefitted parameters."""
    new_columns = {}
    for entry in catalog:
        out = np.full(table.n_rows, np.nan)
        for unit, sl in table.unit_slices().items():
            series = _entry_base_series(table, entry, sl, fits.spei_rain, fits.spei_pet)
            windowed = rolling_mean(series, entry.window)
            if entry.derivation == Derivation.RAW:
                out[sl] = windowed
                continue
            params = fits.params.get((entry.name, unit))
            if params is None:
                raise DataError(f"no fitted parameters for {entry.name} in unit {unit}")
            if entry.derivation == Derivation.RELATIVE_RANGE:
                out[sl] = apply_relative_range(windowed, table.ym[sl], params)
            else:
                out[sl] = apply_standardized_index(windowed, table.ym[sl], params)
        new_columns[entry.name] = out
    return table.with_columns(new_columns)


# ---------------------------------------------------------------------------
# supervised dataset


@dataclass(frozen=True)
class SupervisedDataset:
    """Feature rows at month t paired with the target at month t+lead."""

    feature_names: tuple
    target_name: str
    lead: int
    units: tuple
    unit_index: np.ndarray
    feature_ym: np.ndarray
    target_ym: np.ndarray
    X: np.ndarray
    y: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def feature_columns(self, names) -> np.ndarray:
        idx = [self.feature_names.index(n) for n in names]
        return self.X[:, idx]

    def select(self, mask: np.ndarray) -> "SupervisedDataset":
        return SupervisedDataset(
            self.feature_names,
            self.target_name,
            self.lead,
            self.units,
            self.unit_index[mask],
            self.feature_ym[mask],
            self.target_ym[mask],
            self.X[mask],
            self.y[mask],
        )

    def row_keys(self):
        return [
            (self.units[u], int(m)) for u, m in zip(self.unit_index, self.feature_ym)
        ]


def build_supervised(
    table: TimeSeriesTable,
    catalog: VariableCatalog,
    lead: int = 1,
    target_variable: str = "VCI3M",
) -> SupervisedDataset:
    """One row per (unit, t) with every variable present at t and a target at t+lead."""
    if lead < 1:
        raise DataError(f"lead must be >= 1, got {lead}")
    names = list(catalog.names)
    if target_variable not in table.columns:
        raise DataError(f"target variable {target_variable!r} not in table")
    unit_idx_rows, f_ym, t_ym = [], [], []
    X_rows, y_rows = [], []
    feature_matrix = np.column_stack([table.column(n) for n in names])
    target = table.column(target_variable)
    slices = table.unit_slices()
    for unit, sl in slices.items():
        u = table.units.index(unit)
        n = sl.stop - sl.start
        for i in range(n - lead):
            row = sl.start + i
            tgt = target[row + lead]
            feats = feature_matrix[row]
            if np.isnan(tgt) or np.isnan(feats).any():
                continue
            unit_idx_rows.append(u)
            f_ym.append(int(table.ym[row]))
            t_ym.append(int(table.ym[row + lead]))
            X_rows.append(feats)
            y_rows.append(float(tgt))
    if not y_rows:
        raise DataError("supervised dataset is empty after filtering missing features")
    feature_names = tuple(f"{n}_lag{lead}" for n in names)
    return SupervisedDataset(
        feature_names,
        f"{target_variable}_lead{lead}",
        lead,
        table.units,
        np.array(unit_idx_rows, dtype=int),
        np.array(f_ym, dtype=int),
        np.array(t_ym, dtype=int),
        np.array(X_rows, dtype=float),
        np.array(y_rows, dtype=float),
    )
