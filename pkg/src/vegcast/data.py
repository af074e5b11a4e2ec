"""Unit-level monthly panel data: loading, validation, splitting, seeding.

The central carrier is :class:`TimeSeriesTable`, an immutable panel of named
real-valued series keyed by (unit, month). Rows are always stored sorted by
(unit, month) and months are contiguous within each unit after validation.
Missing cells are NaN.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

TRAIN = "TRAIN"
VALIDATION = "VALIDATION"


def ym_from_parts(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise DataError(f"month out of range: {year}-{month:02d}")
    return year * 12 + (month - 1)


def ym_parse(text: str) -> int:
    """Parse 'YYYY-MM' into a linear month index."""
    parts = text.strip().split("-")
    if len(parts) != 2 or not (parts[0].isdigit() and parts[1].isdigit()):
        raise DataError(f"unparseable date {text!r}, expected YYYY-MM")
    return ym_from_parts(int(parts[0]), int(parts[1]))


def ym_str(ym: int) -> str:
    return f"{ym // 12:04d}-{ym % 12 + 1:02d}"


def calendar_month(ym) -> "np.ndarray | int":
    """0-based calendar slot (0 = January)."""
    return ym % 12


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from arbitrary labelled parts.

    Stable across runs, platforms, and process boundaries, so parallel
    execution order cannot change any seeded result.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _unit_hash(seed: int, repeat: int, unit: str, ym: int) -> float:
    """Uniform [0, 1) value keyed by (seed, repeat, unit, month)."""
    return stable_seed(seed, repeat, unit, ym) / 2.0**64


@dataclass(frozen=True)
class TimeSeriesTable:
    """Immutable per-unit monthly panel.

    Attributes
    ----------
    units : tuple of unit identifiers, sorted
    unit_index : int array, per-row index into ``units``
    ym : int array, linear month index per row (year*12 + month-1)
    columns : mapping column name -> float array (NaN marks missing)
    """

    units: tuple
    unit_index: np.ndarray
    ym: np.ndarray
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unit_index.flags.writeable = False
        self.ym.flags.writeable = False
        for arr in self.columns.values():
            arr.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return len(self.ym)

    @property
    def column_names(self) -> tuple:
        return tuple(self.columns)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"missing column {name!r}")
        return self.columns[name]

    def unit_slices(self) -> dict:
        """Per-unit row slices; rows are contiguous and sorted per unit."""
        out = {}
        for i, unit in enumerate(self.units):
            idx = np.flatnonzero(self.unit_index == i)
            if idx.size:
                out[unit] = slice(int(idx[0]), int(idx[-1]) + 1)
        return out

    def unit_of_row(self, row: int) -> str:
        return self.units[self.unit_index[row]]

    def row_keys(self):
        """(unit, ym) per row, aligned with storage order."""
        return [(self.units[u], int(m)) for u, m in zip(self.unit_index, self.ym)]

    def with_columns(self, new_columns: dict) -> "TimeSeriesTable":
        merged = dict(self.columns)
        for name, values in new_columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != self.ym.shape:
                raise DataError(f"column {name!r} has {arr.size} rows, table has {self.n_rows}")
            merged[name] = arr.copy()
        return TimeSeriesTable(self.units, self.unit_index, self.ym, merged)

    def select_columns(self, names) -> "TimeSeriesTable":
        return TimeSeriesTable(
            self.units, self.unit_index, self.ym, {n: self.columns[n] for n in names}
        )

    def take_rows(self, mask: np.ndarray) -> "TimeSeriesTable":
        unit_index = self.unit_index[mask]
        kept = sorted(set(unit_index.tolist()))
        remap = {old: new for new, old in enumerate(kept)}
        units = tuple(self.units[i] for i in kept)
        unit_index = np.array([remap[u] for u in unit_index], dtype=int)
        return TimeSeriesTable(
            units,
            unit_index,
            self.ym[mask].copy(),
            {n: c[mask].copy() for n, c in self.columns.items()},
        )


def _validate_and_build(units_raw, ym_raw, data, allow_missing=False, interpolate_gaps=0):
    order = sorted(range(len(ym_raw)), key=lambda i: (units_raw[i], ym_raw[i]))
    units = tuple(sorted(set(units_raw)))
    unit_pos = {u: i for i, u in enumerate(units)}
    unit_index = np.array([unit_pos[units_raw[i]] for i in order], dtype=int)
    ym = np.array([ym_raw[i] for i in order], dtype=int)

    seen = set()
    for u, m in zip(unit_index, ym):
        key = (int(u), int(m))
        if key in seen:
            raise DataError(f"duplicate (unit, month): {units[u]}/{ym_str(int(m))}")
        seen.add(key)
    for i in range(1, len(ym)):
        if unit_index[i] == unit_index[i - 1] and ym[i] != ym[i - 1] + 1:
            raise DataError(
                f"calendar gap in unit {units[unit_index[i]]}: "
                f"{ym_str(int(ym[i - 1]))} is followed by {ym_str(int(ym[i]))}"
            )

    columns = {}
    for name, raw in data.items():
        arr = np.array([raw[i] for i in order], dtype=float)
        if interpolate_gaps > 0:
            arr = _interpolate_short_gaps(arr, unit_index, interpolate_gaps)
        if not allow_missing and np.isnan(arr).any():
            row = int(np.flatnonzero(np.isnan(arr))[0])
            raise DataError(
                f"missing value in column {name!r} at "
                f"{units[unit_index[row]]}/{ym_str(int(ym[row]))}"
            )
        columns[name] = arr
    return TimeSeriesTable(units, unit_index, ym, columns)


def _interpolate_short_gaps(values: np.ndarray, unit_index: np.ndarray, max_gap: int) -> np.ndarray:
    """Linearly fill interior NaN runs of length <= max_gap, per unit."""
    out = values.copy()
    for u in np.unique(unit_index):
        idx = np.flatnonzero(unit_index == u)
        seg = out[idx]
        isnan = np.isnan(seg)
        if not isnan.any():
            continue
        i = 0
        n = len(seg)
        while i < n:
            if not isnan[i]:
                i += 1
                continue
            j = i
            while j < n and isnan[j]:
                j += 1
            run = j - i
            if 0 < i and j < n and run <= max_gap:
                left, right = seg[i - 1], seg[j]
                for k in range(run):
                    seg[i + k] = left + (right - left) * (k + 1) / (run + 1)
            i = j
        out[idx] = seg
    return out


def load_table(source, numeric_columns=None, interpolate_gaps=0, allow_missing=False) -> TimeSeriesTable:
    """Load a delimited panel: header ``unit,date,<var1>,...``, date as YYYY-MM.

    ``source`` is a path, text-file object, or string of CSV content.
    Missing cells are rejected unless ``interpolate_gaps`` > 0 (interior gaps
    up to that many months are filled linearly) or ``allow_missing`` is set
    (used for derived tables whose warm-up months are legitimately empty).
    """
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = str(source)
        if "\n" not in text:
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input, no header row") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0] != "unit" or header[1] != "date":
        raise DataError(f"header must start with 'unit,date', got {header[:2]}")
    var_names = header[2:]
    if len(set(var_names)) != len(var_names):
        raise DataError("duplicate column names in header")
    if numeric_columns is not None:
        missing = [c for c in numeric_columns if c not in var_names]
        if missing:
            raise DataError(f"declared columns absent from input: {missing}")

    units_raw, ym_raw = [], []
    data = {name: [] for name in var_names}
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DataError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
        units_raw.append(row[0].strip())
        ym_raw.append(ym_parse(row[1]))
        for name, cell in zip(var_names, row[2:]):
            cell = cell.strip()
            if cell == "":
                data[name].append(np.nan)
                continue
            try:
                data[name].append(float(cell))
            except ValueError:
                raise DataError(
                    f"line {line_no}: non-numeric value {cell!r} in column {name!r}"
                ) from None
    if not units_raw:
        raise DataError("no data rows")
    return _validate_and_build(
        units_raw, ym_raw, data, allow_missing=allow_missing, interpolate_gaps=interpolate_gaps
    )


def table_from_arrays(units_raw, ym_raw, data, allow_missing=True) -> TimeSeriesTable:
    """Build a validated table from parallel arrays (internal constructor)."""
    return _validate_and_build(list(units_raw), list(ym_raw), data, allow_missing=allow_missing)


def emit_table(table: TimeSeriesTable, sink=None) -> str:
    """Serialize a table to CSV in the load_table format.

    Floats are written with repr so that a load/emit round trip is exact.
    Returns the CSV text; also writes it to ``sink`` (path or file) if given.
    """
    buf = io.StringIO()
    names = list(table.columns)
    buf.write(",".join(["unit", "date"] + names) + "\n")
    for row in range(table.n_rows):
        cells = [table.units[table.unit_index[row]], ym_str(int(table.ym[row]))]
        for name in names:
            v = table.columns[name][row]
            cells.append("" if np.isnan(v) else repr(float(v)))
        buf.write(",".join(cells) + "\n")
    text = buf.getvalue()
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text


@dataclass(frozen=True)
class SplitPlan:
    """How the panel is partitioned for model building.

    holdout_months trailing months per unit are reserved out-of-sample;
    the remainder is repeatedly split train/validation at ``ratio``.
    """

    holdout_months: int = 24
    ratio: float = 0.7
    repeats: int = 5
    seed: int = 0

    def validate(self, table: TimeSeriesTable | None = None):
        if not 0 < self.ratio < 1:
            raise DataError(f"ratio must be in (0,1), got {self.ratio}")
        if self.repeats < 1:
            raise DataError(f"repeats must be >= 1, got {self.repeats}")
        if self.holdout_months < 1:
            raise DataError(f"holdout_months must be >= 1, got {self.holdout_months}")
        if table is not None:
            for unit, sl in table.unit_slices().items():
                n = sl.stop - sl.start
                if self.holdout_months >= n:
                    raise DataError(
                        f"holdout of {self.holdout_months} months >= series length {n} "
                        f"for unit {unit}"
                    )


def split_in_out(table: TimeSeriesTable, plan: SplitPlan):
    """Split off the trailing ``plan.holdout_months`` months of every unit.

    Returns (in_sample, out_sample); their union is the original table.
    """
    plan.validate(table)
    out_mask = np.zeros(table.n_rows, dtype=bool)
    for _, sl in table.unit_slices().items():
        out_mask[sl.stop - plan.holdout_months : sl.stop] = True
    return table.take_rows(~out_mask), table.take_rows(out_mask)


def assign_labels(units, yms, ratio: float, seed: int, repeat: int) -> np.ndarray:
    """Deterministic 70:30-style row labelling keyed by (unit, month).

    Returns a boolean array, True = TRAIN, with exactly floor(ratio*n) TRAIN
    rows. Pure function of (seed, repeat, row key): independent of row order.
    """
    n = len(yms)
    u = np.array([_unit_hash(seed, repeat, unit, int(m)) for unit, m in zip(units, yms)])
    n_train = int(np.floor(ratio * n))
    order = np.argsort(u, kind="stable")
    is_train = np.zeros(n, dtype=bool)
    is_train[order[:n_train]] = True
    return is_train


def assign_train_validation(in_sample: TimeSeriesTable, plan: SplitPlan, repeat: int) -> dict:
    """Label every (unit, month) row of the in-sample table TRAIN or VALIDATION."""
    plan.validate()
    if repeat >= plan.repeats:
        raise DataError(f"repeat {repeat} out of range, plan has {plan.repeats}")
    units = [in_sample.units[i] for i in in_sample.unit_index]
    is_train = assign_labels(units, in_sample.ym, plan.ratio, plan.seed, repeat)
    return {
        (unit, int(m)): (TRAIN if t else VALIDATION)
        for unit, m, t in zip(units, in_sample.ym, is_train)
    }
