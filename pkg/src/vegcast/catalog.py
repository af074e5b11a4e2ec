"""Variable catalog: the named, categorised series the models draw from.

Each entry records how a variable is derived from a base column: raw
monthly value, trailing window mean, scaled relative range, or a
distribution-standardized index. The catalog fixes the canonical variable
order (vegetation, precipitation, influencer) used everywhere downstream:
model enumeration, registries, and reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import DataError


class Category(Enum):
    VEGETATION = "vegetation"
    PRECIPITATION = "precipitation"
    INFLUENCER = "influencer"


class Derivation(Enum):
    RAW = "raw"
    RELATIVE_RANGE = "relative_range"
    SPI = "spi"
    SPEI = "spei"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    category: Category
    source: str  # rainfall source tag ("TAMSAT", "CHIRPS") or "" for none
    base: str  # base column the derivation starts from ("" for SPEI: P-PET)
    window: int  # trailing months aggregated before the transform
    derivation: Derivation
    aliased: bool = False  # dekadal variable served by its monthly series

    @property
    def lineage(self) -> str:
        inner = self.base if self.window == 1 else f"rolling_mean({self.base},{self.window})"
        if self.derivation == Derivation.RAW:
            chain = inner
        elif self.derivation == Derivation.RELATIVE_RANGE:
            chain = f"relative_range({inner})"
        elif self.derivation == Derivation.SPI:
            chain = f"spi({inner})"
        else:
            chain = f"spei({inner})"
        if self.aliased:
            chain += " [aliased to monthly]"
        return chain


class VariableCatalog:
    def __init__(self, entries):
        entries = list(entries)
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise DataError("catalog has duplicate variable names")
        self.entries = tuple(entries)
        self._by_name = {e.name: e for e in entries}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self._by_name

    def entry(self, name: str) -> CatalogEntry:
        if name not in self._by_name:
            raise DataError(f"variable {name!r} not in catalog")
        return self._by_name[name]

    @property
    def names(self) -> tuple:
        return tuple(e.name for e in self.entries)

    def by_category(self, category: Category) -> tuple:
        return tuple(e for e in self.entries if e.category == category)

    def category_counts(self) -> dict:
        return {c: len(self.by_category(c)) for c in Category}

    def restrict_source(self, source: str) -> "VariableCatalog":
        """Keep vegetation and influencer entries plus one rainfall source."""
        kept = [e for e in self.entries if e.source in ("", source)]
        return VariableCatalog(kept)

    def validate_modeling(self):
        counts = self.category_counts()
        expected = {Category.VEGETATION: 4, Category.PRECIPITATION: 6, Category.INFLUENCER: 6}
        if counts != expected:
            raise DataError(
                "modeling catalog must partition 4 vegetation / 6 precipitation / "
                f"6 influencer, got {{{', '.join(f'{c.value}: {n}' for c, n in counts.items())}}}"
            )


def _vegetation_entries(ndvi_column: str, dekadal_column: str | None):
    dekad_base = dekadal_column if dekadal_column else ndvi_column
    aliased = dekadal_column is None
    V = Category.VEGETATION
    return [
        CatalogEntry("VCI3M", V, "", ndvi_column, 3, Derivation.RELATIVE_RANGE),
        CatalogEntry("NDVIDekad", V, "", dekad_base, 1, Derivation.RAW, aliased=aliased),
        CatalogEntry("VCI1M", V, "", ndvi_column, 1, Derivation.RELATIVE_RANGE),
        CatalogEntry("VCIdekad", V, "", dekad_base, 1, Derivation.RELATIVE_RANGE, aliased=aliased),
    ]


def _precipitation_entries(source: str, rain_column: str):
    P = Category.PRECIPITATION
    return [
        CatalogEntry(f"{source}_RFE1M", P, source, rain_column, 1, Derivation.RAW),
        CatalogEntry(f"{source}_RFE3M", P, source, rain_column, 3, Derivation.RAW),
        CatalogEntry(f"{source}_RCI1M", P, source, rain_column, 1, Derivation.RELATIVE_RANGE),
        CatalogEntry(f"{source}_RCI3M", P, source, rain_column, 3, Derivation.RELATIVE_RANGE),
        CatalogEntry(f"{source}_SPI1M", P, source, rain_column, 1, Derivation.SPI),
        CatalogEntry(f"{source}_SPI3M", P, source, rain_column, 3, Derivation.SPI),
    ]


def _influencer_entries(lst_column: str, evt_column: str, pet_column: str):
    I = Category.INFLUENCER
    return [
        CatalogEntry("LST1M", I, "", lst_column, 1, Derivation.RAW),
        CatalogEntry("EVT1M", I, "", evt_column, 1, Derivation.RAW),
        CatalogEntry("PET1M", I, "", pet_column, 1, Derivation.RAW),
        CatalogEntry("TCI1M", I, "", lst_column, 1, Derivation.RELATIVE_RANGE),
        CatalogEntry("SPEI1M", I, "", "", 1, Derivation.SPEI),
        CatalogEntry("SPEI3M", I, "", "", 3, Derivation.SPEI),
    ]


def modeling_catalog(
    source: str = "TAMSAT",
    rain_column: str = "RFE",
    ndvi_column: str = "NDVI",
    lst_column: str = "LST",
    evt_column: str = "EVT",
    pet_column: str = "PET",
    dekadal_column: str | None = None,
) -> VariableCatalog:
    """The 16 modeling variables: 4 vegetation, 6 precipitation, 6 influencer."""
    cat = VariableCatalog(
        _vegetation_entries(ndvi_column, dekadal_column)
        + _precipitation_entries(source, rain_column)
        + _influencer_entries(lst_column, evt_column, pet_column)
    )
    cat.validate_modeling()
    return cat


def selection_catalog(
    sources=(("TAMSAT", "RFE"), ("CHIRPS", "RFE_B")),
    ndvi_column: str = "NDVI",
    lst_column: str = "LST",
    evt_column: str = "EVT",
    pet_column: str = "PET",
    dekadal_column: str | None = None,
) -> VariableCatalog:
    """Pre-decision catalog holding every rainfall source side by side."""
    entries = _vegetation_entries(ndvi_column, dekadal_column)
    for source, rain_column in sources:
        entries.extend(_precipitation_entries(source, rain_column))
    entries.extend(_influencer_entries(lst_column, evt_column, pet_column))
    return VariableCatalog(entries)
