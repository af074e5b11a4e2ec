"""Ensemble assembly: overfit gating, backward-forward member selection,
and the three combination strategies (simple average, range-weighted
average, stacked meta-model).

Member selection and all combiner fitting run on pooled out-of-fold
validation predictions from the in-sample window; out-of-sample rows are
never an accepted input here, so holdout data cannot influence membership
or weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, NumericalError
from .learners.ann import AnnHyper, AnnParams, forward, init_params, rprop_fit
from .metrics import r2


@dataclass(frozen=True)
class GateConfig:
    r2_min: float = 0.7
    overfit_tolerance: float = 0.03

    def validate(self):
        if not 0 < self.r2_min < 1:
            raise DataError(f"r2_min must be in (0,1), got {self.r2_min}")
        if self.overfit_tolerance < 0:
            raise DataError(f"overfit_tolerance must be >= 0, got {self.overfit_tolerance}")


def overfit_index(r2_train: float, r2_val: float, tolerance: float = 0.03):
    """(validation minus training R-squared, overfit flag).

    A model is overfit when training R-squared exceeds validation by more
    than the tolerance (default 3 points).
    """
    return r2_val - r2_train, (r2_train - r2_val) > tolerance


@dataclass
class GateResult:
    survivors: tuple  # formula ids, ranked by descending reference validation R2
    dropped: dict  # formula id -> reason
    reference_technique: str
    scores: dict  # formula id -> reference validation R2 (survivors only)


def gate_models(metrics_by_formula: dict, config: GateConfig, reference: str = "ANN") -> GateResult:
    """Keep formulas whose reference-technique model clears the quality gate.

    `metrics_by_formula` maps formula id -> {technique: (train_r2, val_r2)}.
    Gating looks at the reference technique only (its paired models under
    other techniques are admitted by formula). Survivors come back ranked
    by descending validation R-squared, ties broken by formula id.
    """
    config.validate()
    survivors = []
    dropped = {}
    scores = {}
    for fid, by_tech in metrics_by_formula.items():
        if reference not in by_tech:
            raise DataError(f"formula {fid} has no {reference} metrics")
        train_r2, val_r2 = by_tech[reference]
        if not np.isfinite(val_r2):
            dropped[fid] = "validation R2 undefined"
            continue
        if val_r2 < config.r2_min:
            dropped[fid] = f"validation R2 {val_r2:.4f} below cutoff {config.r2_min}"
            continue
        _, is_overfit = overfit_index(train_r2, val_r2, config.overfit_tolerance)
        if is_overfit:
            dropped[fid] = (
                f"overfit: training R2 {train_r2:.4f} exceeds validation "
                f"{val_r2:.4f} by more than {config.overfit_tolerance}"
            )
            continue
        survivors.append(fid)
        scores[fid] = val_r2
    if not survivors:
        raise DataError(
            f"no formula survived the gate (R2 >= {config.r2_min}, "
            f"overfit tolerance {config.overfit_tolerance})"
        )
    survivors.sort(key=lambda f: (-scores[f], f))
    return GateResult(tuple(survivors), dropped, reference, scores)


# ---------------------------------------------------------------------------
# combination strategies


def combine_simple(predictions: np.ndarray) -> np.ndarray:
    """Arithmetic mean across member columns."""
    P = np.asarray(predictions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[1] < 1:
        raise DataError("need at least one member column")
    return P.mean(axis=1)


def normalized_weights(scores) -> np.ndarray:
    """Min-max stretched scores renormalized to sum to one.

    All-equal scores fall back to equal weights (the stretched values are
    all zero, carrying no ranking information).
    """
    s = np.asarray(scores, dtype=float)
    if len(s) == 0:
        raise DataError("no member scores")
    s_min, s_max = float(s.min()), float(s.max())
    if s_max - s_min <= 0:
        return np.full(len(s), 1.0 / len(s))
    raw = (s - s_min) / (s_max - s_min)
    return raw / raw.sum()


def combine_weighted(predictions: np.ndarray, scores) -> np.ndarray:
    """Score-weighted mean across member columns (weights sum to one)."""
    P = np.asarray(predictions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    w = normalized_weights(scores)
    if P.shape[1] != len(w):
        raise DataError(f"{P.shape[1]} member columns but {len(w)} scores")
    return P @ w


# ---------------------------------------------------------------------------
# backward-forward member selection


@dataclass(frozen=True)
class AuditStep:
    step: int
    phase: str  # "initial" | "backward" | "forward"
    action: str
    n_members: int
    r2: float
    accepted: bool
    members: tuple


@dataclass
class SelectionResult:
    members: tuple
    r2: float
    audit: tuple


def _pool_r2(P: np.ndarray, y: np.ndarray, idx) -> float:
    try:
        return r2(P[:, idx].mean(axis=1), y)
    except NumericalError:
        return 0.0


def select_members(member_ids, predictions: np.ndarray, targets, batch: int = 5) -> SelectionResult:
    """Backward-forward pruning of a ranked member pool.

    Backward phase: repeatedly drop the `batch` lowest-ranked members and
    re-score the simple-average ensemble; a removal that scores at or above
    the running best is accepted. The first drop below the running best
    stops the phase and triggers the forward phase: the just-removed batch
    is offered back one member at a time in descending rank, each kept only
    if the score does not decrease. The returned membership is the
    best-scoring state visited (ties favoring fewer members, then the later
    state), so the audit log never shows an accepted state beating the
    returned one.
    """
    member_ids = list(member_ids)
    P = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if P.ndim != 2 or P.shape[1] != len(member_ids):
        raise DataError(f"prediction matrix must be rows x {len(member_ids)} members")
    if P.shape[0] != len(y):
        raise DataError("prediction rows and targets are not aligned")
    if batch < 1:
        raise DataError(f"batch must be >= 1, got {batch}")
    if not member_ids:
        raise DataError("empty member pool")

    audit = []
    candidates = []  # (r2, n_members, step, members tuple)
    step = 0

    current = list(range(len(member_ids)))
    current_r2 = _pool_r2(P, y, current)
    audit.append(
        AuditStep(step, "initial", "full pool", len(current), current_r2, True,
                  tuple(member_ids[i] for i in current))
    )
    candidates.append((current_r2, len(current), step, tuple(current)))
    running_best = current_r2

    while len(current) > batch:
        step += 1
        trial = current[:-batch]
        trial_r2 = _pool_r2(P, y, trial)
        accepted = trial_r2 >= running_best
        audit.append(
            AuditStep(step, "backward", f"drop bottom {batch}", len(trial), trial_r2,
                      accepted, tuple(member_ids[i] for i in trial))
        )
        if not accepted:
            # forward phase over the batch whose removal caused the drop
            removed = current[-batch:]
            base = trial
            base_r2 = trial_r2
            for m in removed:  # already in descending rank order
                step += 1
                attempt = sorted(base + [m])
                attempt_r2 = _pool_r2(P, y, attempt)
                keep = attempt_r2 >= base_r2
                audit.append(
                    AuditStep(step, "forward", f"offer back {member_ids[m]}",
                              len(attempt), attempt_r2, keep,
                              tuple(member_ids[i] for i in sorted(attempt)))
                )
                if keep:
                    base, base_r2 = attempt, attempt_r2
            candidates.append((base_r2, len(base), step, tuple(base)))
            break
        current = trial
        running_best = trial_r2
        candidates.append((running_best, len(current), step, tuple(current)))

    best = min(candidates, key=lambda c: (-c[0], c[1], -c[2]))
    members = tuple(member_ids[i] for i in best[3])
    return SelectionResult(members, best[0], tuple(audit))


# ---------------------------------------------------------------------------
# stacked meta-model


DEFAULT_STACKER_HYPER = AnnHyper(
    hidden=(), max_epochs=2000, patience=100, restart_on_stall=False
)


@dataclass
class StackerModel:
    params: AnnParams
    columns: tuple  # (formula id, technique) per input column
    train_r2: float

    def predict(self, member_predictions: np.ndarray) -> np.ndarray:
        P = np.asarray(member_predictions, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.shape[1] != len(self.columns):
            raise DataError(
                f"stacker expects {len(self.columns)} member columns, got {P.shape[1]}"
            )
        return forward(self.params, P)


def train_stacker(
    member_predictions: np.ndarray,
    targets,
    seed: int,
    columns=None,
    hidden: tuple = (),
    hyper: AnnHyper = DEFAULT_STACKER_HYPER,
) -> StackerModel:
    """Fit the meta-model on out-of-fold member predictions.

    The default meta-model is a single linear unit over the member columns,
    initialized at the simple average so training can only improve on it;
    an optional hidden layer turns it into a small network (seeded init).
    Trained by the same resilient-backpropagation loop as the base networks.
    """
    P = np.asarray(member_predictions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    y = np.asarray(targets, dtype=float)
    if P.shape[0] != len(y):
        raise DataError("member predictions and targets are not aligned")
    if np.isnan(P).any() or np.isnan(y).any():
        raise DataError("stacker inputs contain missing values")
    n, m = P.shape
    hyper = replace(hyper, hidden=tuple(hidden))
    if hidden:
        rng = np.random.default_rng(seed)
        params0 = init_params(m, tuple(hidden), rng, hyper.init_scale)
    else:
        params0 = AnnParams([np.full((1, m), 1.0 / m)], [np.zeros(1)])
    params, _ = rprop_fit(params0, P, y, hyper)
    fit = forward(params, P)
    try:
        train_score = r2(fit, y)
    except NumericalError:
        train_score = 0.0
    if columns is None:
        columns = tuple((f"member{i}", "") for i in range(m))
    return StackerModel(params, tuple(columns), train_score)


# ---------------------------------------------------------------------------
# ensemble specification and prediction


COMBINER_SIMPLE = "simple"
COMBINER_WEIGHTED = "weighted"
COMBINER_STACKED = "stacked"
COMBINERS = (COMBINER_SIMPLE, COMBINER_WEIGHTED, COMBINER_STACKED)


@dataclass
class EnsembleSpec:
    members: tuple  # formula ids, descending validation R2
    techniques: tuple  # ("ANN",), ("SVR",) or ("ANN", "SVR")
    combiner: str
    member_scores: dict = field(default_factory=dict)  # (fid, technique) -> val R2
    weights: np.ndarray | None = None
    stacker: StackerModel | None = None

    def columns(self) -> tuple:
        """Member-major column order: every technique of member 1, then member 2, ..."""
        return tuple((fid, tech) for fid in self.members for tech in self.techniques)

    def validate(self):
        if self.combiner not in COMBINERS:
            raise DataError(f"unknown combiner {self.combiner!r}")
        if not self.members:
            raise DataError("ensemble has no members")
        if self.combiner == COMBINER_WEIGHTED:
            if self.weights is None or len(self.weights) != len(self.columns()):
                raise DataError("weighted ensemble needs one weight per member column")
            if abs(float(np.sum(self.weights)) - 1.0) > 1e-9 or (self.weights < 0).any():
                raise DataError("weights must be nonnegative and sum to one")
        if self.combiner == COMBINER_STACKED and self.stacker is None:
            raise DataError("stacked ensemble needs a trained meta-model")


def fit_combiner(spec: EnsembleSpec, oof_predictions: dict, targets, seed: int,
                 stacker_hidden: tuple = (), stacker_hyper: AnnHyper = DEFAULT_STACKER_HYPER) -> EnsembleSpec:
    """Attach fitted weights or a trained stacker to a bare spec.

    `oof_predictions` maps (formula id, technique) to the pooled out-of-fold
    prediction vector over the in-sample rows.
    """
    cols = spec.columns()
    if spec.combiner == COMBINER_SIMPLE:
        return spec
    if spec.combiner == COMBINER_WEIGHTED:
        missing = [c for c in cols if c not in spec.member_scores]
        if missing:
            raise DataError(f"missing member scores for {missing[:3]}...")
        scores = np.array([spec.member_scores[c] for c in cols])
        return replace(spec, weights=normalized_weights(scores))
    P = _gather_columns(cols, oof_predictions)
    stacker = train_stacker(
        P, targets, seed, columns=cols, hidden=stacker_hidden, hyper=stacker_hyper
    )
    return replace(spec, stacker=stacker)


def _gather_columns(cols, predictions: dict) -> np.ndarray:
    missing = [c for c in cols if c not in predictions]
    if missing:
        raise DataError(f"missing predictions for member {missing[0]}")
    return np.column_stack([np.asarray(predictions[c], dtype=float) for c in cols])


def ensemble_predict(spec: EnsembleSpec, predictions: dict) -> np.ndarray:
    """Combine per-member prediction vectors per the spec's strategy."""
    spec.validate()
    P = _gather_columns(spec.columns(), predictions)
    if spec.combiner == COMBINER_SIMPLE:
        return combine_simple(P)
    if spec.combiner == COMBINER_WEIGHTED:
        return P @ spec.weights
    return spec.stacker.predict(P)


def predict_ensemble(spec: EnsembleSpec, models: dict, dataset) -> np.ndarray:
    """Registry-driven prediction: gather bagged predictions then combine.

    `models` maps (formula id, technique) to a BaggedModel; rows come from
    the dataset's feature columns.
    """
    from .learners.bagging import bagged_predict  # local import, avoids a cycle

    preds = {}
    for fid, tech in spec.columns():
        model = models.get((fid, tech))
        if model is None:
            raise DataError(f"model {fid}.{tech} missing from registry")
        X = dataset.feature_columns(model.predictors)
        preds[(fid, tech)] = bagged_predict(model, X)
    return ensemble_predict(spec, preds)
