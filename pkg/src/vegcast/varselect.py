"""Dataset-selection statistics: normality, rank correlation, stepwise AIC,
and R-squared decomposition, feeding the rainfall-source decision.

The Shapiro-Wilk test follows Royston's AS R94 approximation (valid for
3 <= n <= 5000). Rejection uses the standard rule: p < alpha rejects
normality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import DataError, NumericalError

SOURCE_ROLES = ("RFE1M", "RFE3M", "RCI1M", "RCI3M", "SPI1M", "SPI3M")


# ---------------------------------------------------------------------------
# Shapiro-Wilk (AS R94)

_SW_C1 = (-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0)
_SW_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0)
_SW_SMALL_MU = (-0.0006714, 0.025054, -0.39978, 0.544)
_SW_SMALL_LNS = (-0.0020322, 0.062767, -0.77857, 1.3822)
_SW_BIG_MU = (0.0038915, -0.083751, -0.31082, -1.5861)
_SW_BIG_LNS = (0.0030302, -0.082676, -0.4803)


@dataclass(frozen=True)
class NormalityResult:
    statistic: float  # W, in (0, 1]
    p_value: float
    n: int

    def rejects_normality(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def _sw_coefficients(n: int) -> np.ndarray:
    m = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    msq = float(np.sum(m * m))
    if n == 3:
        a = np.zeros(3)
        a[0] = -math.sqrt(0.5)
        a[2] = math.sqrt(0.5)
        return a
    u = 1.0 / math.sqrt(n)
    c = m / math.sqrt(msq)
    a = np.empty(n)
    a_n = float(np.polyval(_SW_C1, u)) + c[-1]
    if n > 5:
        a_n1 = float(np.polyval(_SW_C2, u)) + c[-2]
        phi = (msq - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * a_n**2 - 2 * a_n1**2)
        a[2:-2] = m[2:-2] / math.sqrt(phi)
        a[-2], a[1] = a_n1, -a_n1
    else:
        phi = (msq - 2 * m[-1] ** 2) / (1 - 2 * a_n**2)
        a[1:-1] = m[1:-1] / math.sqrt(phi)
    a[-1], a[0] = a_n, -a_n
    return a


def shapiro_wilk(sample) -> NormalityResult:
    """Shapiro-Wilk W and p-value per the AS R94 approximation."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 3 or n > 5000:
        raise DataError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if not np.isfinite(x).all():
        raise DataError("sample contains non-finite values")
    if x[-1] - x[0] <= 0:
        raise NumericalError("sample is constant, W undefined")
    a = _sw_coefficients(n)
    ssq = float(np.sum((x - x.mean()) ** 2))
    w = min(float(np.dot(a, x)) ** 2 / ssq, 1.0)

    if n == 3:
        p = 1.909859 * (math.asin(math.sqrt(w)) - 1.047198)
        return NormalityResult(w, min(max(p, 0.0), 1.0), n)
    one_minus_w = max(1.0 - w, 1e-300)
    if n <= 11:
        gamma = 0.459 * n - 2.273
        if gamma - math.log(one_minus_w) <= 0:
            return NormalityResult(w, 1e-19, n)
        y = -math.log(gamma - math.log(one_minus_w))
        mu = float(np.polyval(_SW_SMALL_MU, n))
        sigma = math.exp(float(np.polyval(_SW_SMALL_LNS, n)))
    else:
        ln_n = math.log(n)
        y = math.log(one_minus_w)
        mu = float(np.polyval(_SW_BIG_MU, ln_n))
        sigma = math.exp(float(np.polyval(_SW_BIG_LNS, ln_n)))
    p = float(stats.norm.sf((y - mu) / sigma))
    return NormalityResult(w, p, n)


# ---------------------------------------------------------------------------
# rank correlation


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of average-ranked data (ties get the mean rank)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 3:
        raise DataError(f"need at least 3 pairs, got {len(x)}")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rxc = rx - rx.mean()
    ryc = ry - ry.mean()
    sx = float(np.sqrt(np.sum(rxc * rxc)))
    sy = float(np.sqrt(np.sum(ryc * ryc)))
    if sx == 0.0 or sy == 0.0:
        raise NumericalError("rank correlation undefined for constant input")
    return float(np.clip(np.sum(rxc * ryc) / (sx * sy), -1.0, 1.0))


# ---------------------------------------------------------------------------
# OLS machinery on centered cross-products


class _GramFitter:
    """Shared centered cross-products for many small OLS fits."""

    def __init__(self, variables: dict, target, ridge: float = 1e-8):
        self.names = list(variables)
        y = np.asarray(target, dtype=float)
        cols = []
        for name in self.names:
            col = np.asarray(variables[name], dtype=float)
            if col.shape != y.shape:
                raise DataError(f"variable {name!r} is not aligned with the target")
            cols.append(col - col.mean())
        self.n = len(y)
        yc = y - y.mean()
        self.X = np.column_stack(cols) if cols else np.empty((self.n, 0))
        self.G = self.X.T @ self.X
        self.g = self.X.T @ yc
        self.tss = float(yc @ yc)
        self.ridge = ridge
        if self.tss <= 0:
            raise NumericalError("constant target, nothing to fit")

    def rss(self, idx) -> float:
        idx = list(idx)
        if not idx:
            return self.tss
        G = self.G[np.ix_(idx, idx)]
        g = self.g[idx]
        try:
            beta = np.linalg.solve(G, g)
            if not np.isfinite(beta).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            beta = np.linalg.solve(G + self.ridge * np.eye(len(idx)), g)
        return max(float(self.tss - g @ beta), 0.0)

    def r2(self, idx) -> float:
        return 1.0 - self.rss(idx) / self.tss


def aic_linear(X, y) -> float:
    """AIC of an OLS fit with intercept: n*ln(RSS/n) + 2*(k+2).

    The parameter count is k slopes + intercept + error variance; only AIC
    differences are meaningful under this convention. Rank-deficient designs
    are fit by least squares (a redundant column cannot reduce the RSS, it
    only pays the 2-point penalty).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n != len(y):
        raise DataError("X and y are not aligned")
    if n <= k + 2:
        raise DataError(f"need n > k+2 rows, got n={n}, k={k}")
    design = np.column_stack([np.ones(n), X])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    rss = float(np.sum((y - design @ coef) ** 2))
    if rss < 1e-12:
        raise NumericalError("perfect fit: RSS below 1e-12, AIC undefined")
    return n * math.log(rss / n) + 2.0 * (k + 2)


def _aic_from_rss(rss: float, n: int, k: int) -> float:
    if rss < 1e-12:
        raise NumericalError("perfect fit: RSS below 1e-12, AIC undefined")
    return n * math.log(rss / n) + 2.0 * (k + 2)


def stepwise_bidirectional(variables: dict, target, candidates=None) -> tuple:
    """Bidirectional stepwise selection minimizing AIC.

    Starts from the empty model; at each iteration every single add and
    every single drop compete in one pool and the move with the lowest AIC
    is applied if it improves on the current AIC. Ties break toward the
    earliest move in candidate order (adds enumerated before drops).
    """
    if candidates is None:
        candidates = list(variables)
    if len(candidates) > 20:
        raise DataError(f"stepwise is desk-scale, at most 20 candidates ({len(candidates)} given)")
    fitter = _GramFitter({name: variables[name] for name in candidates}, target)
    selected: list[int] = []
    current_aic = _aic_from_rss(fitter.rss([]), fitter.n, 0)
    while True:
        moves = []
        for i in range(len(candidates)):
            if i not in selected:
                moves.append(selected + [i])
        for i in selected:
            moves.append([j for j in selected if j != i])
        best = None
        for move in moves:
            try:
                a = _aic_from_rss(fitter.rss(move), fitter.n, len(move))
            except NumericalError:
                continue
            if best is None or a < best[0]:
                best = (a, move)
        if best is None or best[0] >= current_aic - 1e-10:
            break
        current_aic, selected = best[0], sorted(best[1])
    return tuple(candidates[i] for i in selected)


def lmg_importance(variables: dict, target, names=None) -> dict:
    """LMG relative importance: each variable's R-squared share averaged
    over all orderings. Shares sum to the full-model R-squared."""
    if names is None:
        names = list(variables)
    k = len(names)
    if k == 0:
        raise DataError("no variables given")
    if k > 12:
        raise DataError(f"LMG enumerates all subsets, at most 12 variables ({k} given)")
    fitter = _GramFitter({n: variables[n] for n in names}, target)
    r2_cache = {}
    for size in range(k + 1):
        for subset in combinations(range(k), size):
            r2_cache[subset] = fitter.r2(list(subset))
    fact = [math.factorial(i) for i in range(k + 1)]
    shares = {}
    for v in range(k):
        total = 0.0
        others = [i for i in range(k) if i != v]
        for size in range(k):
            weight = fact[size] * fact[k - size - 1] / fact[k]
            for subset in combinations(others, size):
                with_v = tuple(sorted(subset + (v,)))
                total += weight * (r2_cache[with_v] - r2_cache[subset])
        shares[names[v]] = total
    return shares


# ---------------------------------------------------------------------------
# rainfall-source decision


@dataclass
class SourceDecision:
    sources: tuple
    roles: tuple
    spearman_table: dict  # source -> {role: rho}
    mean_rho: dict  # source -> mean over roles
    stepwise_selected: tuple
    aic_by_variable: dict
    importance_shares: dict
    full_model_r2: float
    chosen: str
    tie: bool
    alpha: float = 0.05
    normality: dict = field(default_factory=dict)  # variable -> NormalityResult


def compare_sources(
    variables: dict,
    target,
    sources=("TAMSAT", "CHIRPS"),
    roles: tuple = SOURCE_ROLES,
    name_of=lambda source, role: f"{source}_{role}",
    run_normality: bool = True,
) -> SourceDecision:
    """Choose between two rainfall sources providing the same variable roles.

    The decision rule is the higher mean Spearman correlation against the
    target; the full evidence table (rank correlations, stepwise selection
    over the union, per-variable AIC, importance shares) is reported
    alongside. An exact tie falls to the first source, flagged.
    """
    if len(sources) != 2:
        raise DataError("compare_sources expects exactly two sources")
    for source in sources:
        for role in roles:
            if name_of(source, role) not in variables:
                raise DataError(f"source {source} is missing role {role}")
    target = np.asarray(target, dtype=float)

    spearman_table = {}
    mean_rho = {}
    for source in sources:
        row = {role: spearman(variables[name_of(source, role)], target) for role in roles}
        spearman_table[source] = row
        mean_rho[source] = float(np.mean(list(row.values())))

    union = [name_of(s, r) for s in sources for r in roles]
    union_vars = {name: variables[name] for name in union}
    stepwise_selected = stepwise_bidirectional(union_vars, target, union)
    aic_by_variable = {
        name: aic_linear(np.asarray(variables[name], dtype=float), target) for name in union
    }
    importance_shares = lmg_importance(union_vars, target, union)
    full_model_r2 = float(sum(importance_shares.values()))

    normality = {}
    if run_normality:
        for source in sources:
            for role in roles:
                if role.startswith("SPI"):
                    continue  # standardized by construction
                name = name_of(source, role)
                normality[name] = shapiro_wilk(variables[name])

    if mean_rho[sources[0]] >= mean_rho[sources[1]]:
        chosen = sources[0]
        tie = mean_rho[sources[0]] == mean_rho[sources[1]]
    else:
        chosen, tie = sources[1], False
    return SourceDecision(
        tuple(sources),
        tuple(roles),
        spearman_table,
        mean_rho,
        stepwise_selected,
        aic_by_variable,
        importance_shares,
        full_model_r2,
        chosen,
        tie,
        normality=normality,
    )
