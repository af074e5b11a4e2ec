"""Seeded synthetic panel generator for desk-scale runs.

Emits the base columns the index builder expects: RFE (bimodal seasonal
rainfall with gamma-like noise, mm), LST (anti-phase seasonal, Kelvin),
EVT and PET (mm), and NDVI as a lag-1 autoregressive response to soil
moisture so vegetation follows precipitation. An optional second rainfall
column (RFE_B) is the same truth observed with extra noise, giving the
source-comparison stage a meaningful decision.

Everything is a pure function of the seed: each unit draws from its own
generator keyed by (seed, unit name), so the unit list and month count can
change without reshuffling other units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesTable, stable_seed, table_from_arrays, ym_parse
from .errors import DataError

MIN_MONTHS = 48


@dataclass(frozen=True)
class SynthConfig:
    units: int = 4
    months: int = 204
    seed: int = 0
    start: str = "2001-03"
    rain_shape: float = 2.2
    ndvi_noise: float = 0.035
    lst_noise: float = 0.6
    alt_source: bool = True
    alt_noise: float = 0.35
    unit_names: tuple = field(default=())

    def names(self) -> tuple:
        if self.unit_names:
            if len(self.unit_names) != self.units:
                raise DataError("unit_names length does not match units")
            return tuple(self.unit_names)
        return tuple(f"unit{i + 1}" for i in range(self.units))


def _circular_gauss(c: np.ndarray, mu: float, width: float) -> np.ndarray:
    d = np.abs(c - mu)
    d = np.minimum(d, 12.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def _rain_profile(c: np.ndarray, scale: float) -> np.ndarray:
    # two wet seasons: long rains around April, short rains around November
    return scale * (4.0 + 115.0 * _circular_gauss(c, 3.5, 1.25) + 85.0 * _circular_gauss(c, 10.3, 1.1))


def generate_synthetic(config: SynthConfig) -> TimeSeriesTable:
    """Generate a deterministic synthetic panel per the config."""
    if config.months < MIN_MONTHS:
        raise DataError(
            f"months must be >= {MIN_MONTHS} to leave room for aggregates, lags "
            f"and a holdout, got {config.months}"
        )
    start_ym = ym_parse(config.start)
    months = np.arange(start_ym, start_ym + config.months)
    cal = (months % 12).astype(float)

    units_raw, ym_raw = [], []
    base_names = ["RFE", "LST", "EVT", "PET", "NDVI"]
    if config.alt_source:
        base_names.append("RFE_B")
    data = {name: [] for name in base_names}

    for k, unit in enumerate(config.names()):
        rng = np.random.default_rng(stable_seed(config.seed, "synth", unit))
        unit_scale = [1.0, 1.45, 0.8, 1.2][k % 4] * (1.0 + 0.1 * rng.standard_normal())
        unit_scale = max(0.4, unit_scale)

        prof = _rain_profile(cal, unit_scale)
        shape = config.rain_shape
        rain = rng.gamma(shape, prof / shape)
        rain[rain < 0.5] = 0.0

        # soil moisture memory drives both vegetation and evapotranspiration
        s_ref = float(np.mean(prof) / (1.0 - 0.55))
        soil = np.empty_like(rain)
        carry = s_ref
        for t in range(len(rain)):
            carry = 0.55 * carry + rain[t]
            soil[t] = carry
        wet = soil / (soil + s_ref)

        lst = (
            302.0
            + 3.0 * _circular_gauss(cal, 1.5, 2.0)
            + 2.0 * _circular_gauss(cal, 7.5, 1.8)
            - 6.0 * (wet - 0.5)
            + config.lst_noise * rng.standard_normal(len(rain))
        )
        pet = np.maximum(60.0, 112.0 + 4.0 * (lst - 302.0) + 3.0 * rng.standard_normal(len(rain)))
        evt = np.maximum(
            1.0,
            np.minimum(pet, 12.0 + 0.40 * soil) + 2.0 * rng.standard_normal(len(rain)),
        )

        ndvi = np.empty_like(rain)
        v = 0.12 + 0.62 * wet[0]
        noise = config.ndvi_noise * rng.standard_normal(len(rain))
        for t in range(len(rain)):
            drive = 0.12 + 0.62 * (wet[t - 1] if t > 0 else wet[0])
            v = np.clip(0.5 * v + 0.5 * drive + noise[t], 0.02, 0.98)
            ndvi[t] = v

        units_raw.extend([unit] * len(months))
        ym_raw.extend(int(m) for m in months)
        data["RFE"].extend(rain.tolist())
        data["LST"].extend(lst.tolist())
        data["EVT"].extend(evt.tolist())
        data["PET"].extend(pet.tolist())
        data["NDVI"].extend(ndvi.tolist())
        if config.alt_source:
            alt = rain * (1.0 + config.alt_noise * rng.standard_normal(len(rain)))
            alt = np.maximum(0.0, alt + 2.5 * rng.standard_normal(len(rain)))
            data["RFE_B"].extend(alt.tolist())

    return table_from_arrays(units_raw, ym_raw, data, allow_missing=False)
