"""Candidate model formulas over the lagged predictor variables.

The unconstrained space over n predictors has 2^n - 1 non-empty subsets.
Restricting every model to at most one variable per category (vegetation,
precipitation, influencer) collapses a 16-variable space to
(4+1)*(6+1)*(6+1) - 1 = 244 formulas of one to three predictors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .catalog import Category, VariableCatalog
from .errors import DataError

CATEGORY_ORDER = (Category.VEGETATION, Category.PRECIPITATION, Category.INFLUENCER)


@dataclass(frozen=True)
class ModelFormula:
    """Target plus an ordered predictor subset (one per category at most).

    Predictors are stored in canonical category order (vegetation,
    precipitation, influencer); formulas with the same predictor set are
    equal regardless of construction order.
    """

    target: str
    predictors: tuple
    categories: tuple

    def __post_init__(self):
        if not 1 <= len(self.predictors) <= len(CATEGORY_ORDER):
            raise DataError(f"formula must have 1..3 predictors, got {len(self.predictors)}")
        if len(set(self.categories)) != len(self.categories):
            raise DataError("at most one predictor per category")

    @property
    def n_predictors(self) -> int:
        return len(self.predictors)


def formula_id(formula: ModelFormula) -> str:
    """Stable identifier derived from the sorted predictor names."""
    return "+".join(sorted(formula.predictors))


def format_formula(formula: ModelFormula) -> str:
    return f"{formula.target} ~ " + " + ".join(formula.predictors)


def parse_formula(line: str, catalog: VariableCatalog, lead: int = 1) -> ModelFormula:
    if "~" not in line:
        raise DataError(f"not a formula line: {line!r}")
    target, rhs = (part.strip() for part in line.split("~", 1))
    predictors = [p.strip() for p in rhs.split("+") if p.strip()]
    return make_formula(predictors, catalog, target=target, lead=lead)


def _strip_lag(name: str) -> str:
    return name.rsplit("_lag", 1)[0] if "_lag" in name else name


def make_formula(predictors, catalog: VariableCatalog, target=None, lead: int = 1) -> ModelFormula:
    """Canonicalize a predictor list against the catalog."""
    if target is None:
        target = f"VCI3M_lead{lead}"
    entries = []
    for name in predictors:
        base = _strip_lag(name)
        entry = catalog.entry(base)
        entries.append((CATEGORY_ORDER.index(entry.category), catalog.names.index(base), name, entry))
    entries.sort(key=lambda t: (t[0], t[1]))
    return ModelFormula(
        target,
        tuple(name for _, _, name, _ in entries),
        tuple(e.category.value for _, _, _, e in entries),
    )


def count_unconstrained(n_vars: int):
    """(total, per-length) model counts with no category constraint."""
    if n_vars < 1:
        raise DataError(f"need at least one variable, got {n_vars}")
    per_length = {k: math.comb(n_vars, k) for k in range(1, n_vars + 1)}
    return 2**n_vars - 1, per_length


def enumerate_constrained(catalog: VariableCatalog, lead: int = 1) -> list:
    """All non-empty selections of at most one variable per category.

    Deterministic order: vegetation option changes slowest, influencer
    fastest, each cycling through catalog order with 'absent' first.
    """
    if len(catalog) == 0:
        raise DataError("catalog is empty, nothing to enumerate")
    groups = [catalog.by_category(c) for c in CATEGORY_ORDER]
    target = f"VCI3M_lead{lead}"
    formulas = []
    for veg in (None, *groups[0]):
        for precip in (None, *groups[1]):
            for infl in (None, *groups[2]):
                chosen = [e for e in (veg, precip, infl) if e is not None]
                if not chosen:
                    continue
                formulas.append(
                    ModelFormula(
                        target,
                        tuple(f"{e.name}_lag{lead}" for e in chosen),
                        tuple(e.category.value for e in chosen),
                    )
                )
    return formulas
