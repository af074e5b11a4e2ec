"""Min-max scaling fitted on the training fold only.

Training values map into [0, 1]; validation and test rows may land outside
that band and are deliberately not clamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.size == 0:
            raise NumericalError("cannot fit a scaler on an empty fold")
        lo = arr.min(axis=0)
        hi = arr.max(axis=0)
        flat = hi - lo <= 0
        if flat.any():
            raise NumericalError(
                f"constant feature(s) at column index {np.flatnonzero(flat).tolist()}, range is 0"
            )
        return cls(lo, hi)

    def transform(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        squeeze = arr.ndim == 1
        if squeeze:
            arr = arr[:, None]
        out = (arr - self.lo) / (self.hi - self.lo)
        return out[:, 0] if squeeze else out

    def inverse(self, scaled) -> np.ndarray:
        arr = np.asarray(scaled, dtype=float)
        squeeze = arr.ndim == 1
        if squeeze:
            arr = arr[:, None]
        out = arr * (self.hi - self.lo) + self.lo
        return out[:, 0] if squeeze else out
