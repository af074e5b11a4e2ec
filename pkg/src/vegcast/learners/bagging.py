"""Bagged model fitting under the shared 70:30 repeat protocol.

Every repeat reuses the panel-wide train/validation assignment (a pure
function of the split seed and repeat index), fits the feature scaler on
the training fold only, trains the technique, and records train and
validation R-squared. The bagged prediction is the mean of the replicate
predictions, each mapped back to target units.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from ..data import SplitPlan, assign_labels, stable_seed
from ..errors import DataError, NumericalError, VegcastError
from ..indices import SupervisedDataset
from ..metrics import r2
from ..modelspace import ModelFormula, formula_id
from .ann import AnnHyper, train_ann, forward
from .scaling import MinMaxScaler
from .svr import SvrHyper, train_svr, svr_predict

TECH_ANN = "ANN"
TECH_SVR = "SVR"
TECHNIQUES = (TECH_ANN, TECH_SVR)


@dataclass
class Replicate:
    repeat: int
    seed: int
    scaler: MinMaxScaler
    target_scaler: "MinMaxScaler | None"
    model: object
    train_r2: float
    val_r2: float


@dataclass
class BaggedModel:
    formula_id: str
    technique: str
    predictors: tuple
    replicates: tuple
    train_r2: float
    val_r2: float

    @property
    def overfit_index(self) -> float:
        return self.val_r2 - self.train_r2


def _safe_r2(pred, actual) -> float:
    """Squared correlation, scored 0 when degenerate (constant predictions)."""
    try:
        return r2(pred, actual)
    except (NumericalError, DataError):
        return 0.0


def replicate_predict(rep: Replicate, X_raw: np.ndarray, technique: str) -> np.ndarray:
    Xs = rep.scaler.transform(X_raw)
    if technique == TECH_ANN:
        out = forward(rep.model, Xs)
        return rep.target_scaler.inverse(out)
    return svr_predict(rep.model, Xs)


def bagged_predict(model: BaggedModel, X_raw: np.ndarray) -> np.ndarray:
    """Mean of the replicate predictions in target units."""
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw[:, None]
    if X_raw.shape[1] != len(model.predictors):
        raise DataError(
            f"expected {len(model.predictors)} feature columns, got {X_raw.shape[1]}"
        )
    total = np.zeros(len(X_raw))
    for rep in model.replicates:
        total += replicate_predict(rep, X_raw, model.technique)
    return total / len(model.replicates)


def _fold_masks(dataset: SupervisedDataset, plan: SplitPlan, repeat: int) -> np.ndarray:
    units = [dataset.units[i] for i in dataset.unit_index]
    return assign_labels(units, dataset.feature_ym, plan.ratio, plan.seed, repeat)


def bagged_fit(
    formula: ModelFormula,
    technique: str,
    dataset: SupervisedDataset,
    plan: SplitPlan,
    global_seed: int,
    ann_hyper: AnnHyper = AnnHyper(),
    svr_hyper: SvrHyper = SvrHyper(),
) -> BaggedModel:
    """Fit K replicates of one (formula, technique) pair and aggregate."""
    if technique not in TECHNIQUES:
        raise DataError(f"unknown technique {technique!r}")
    plan.validate()
    fid = formula_id(formula)
    X_all = dataset.feature_columns(formula.predictors)
    y_all = dataset.y
    replicates = []
    for repeat in range(plan.repeats):
        seed = stable_seed(global_seed, "train", fid, technique, repeat)
        is_train = _fold_masks(dataset, plan, repeat)
        X_tr, y_tr = X_all[is_train], y_all[is_train]
        X_va, y_va = X_all[~is_train], y_all[~is_train]
        if len(y_tr) < 8:
            raise DataError(f"{fid}/{technique}: training fold has {len(y_tr)} rows, need >= 8")
        try:
            scaler = MinMaxScaler.fit(X_tr)
            Xs_tr = scaler.transform(X_tr)
            Xs_va = scaler.transform(X_va)
            if technique == TECH_ANN:
                t_scaler = MinMaxScaler.fit(y_tr)
                model, _ = train_ann(
                    Xs_tr,
                    t_scaler.transform(y_tr),
                    ann_hyper,
                    seed,
                    X_val=Xs_va,
                    y_val=t_scaler.transform(y_va) if len(y_va) else None,
                )
                pred_tr = t_scaler.inverse(forward(model, Xs_tr))
                pred_va = t_scaler.inverse(forward(model, Xs_va)) if len(y_va) else np.empty(0)
            else:
                t_scaler = None
                model = train_svr(Xs_tr, y_tr, svr_hyper)
                pred_tr = svr_predict(model, Xs_tr)
                pred_va = svr_predict(model, Xs_va) if len(y_va) else np.empty(0)
        except VegcastError as exc:
            raise type(exc)(f"{fid}/{technique} repeat {repeat}: {exc}") from None
        replicates.append(
            Replicate(
                repeat=repeat,
                seed=seed,
                scaler=scaler,
                target_scaler=t_scaler,
                model=model,
                train_r2=_safe_r2(pred_tr, y_tr),
                val_r2=_safe_r2(pred_va, y_va) if len(y_va) >= 3 else float("nan"),
            )
        )
    val_scores = [rep.val_r2 for rep in replicates if np.isfinite(rep.val_r2)]
    return BaggedModel(
        formula_id=fid,
        technique=technique,
        predictors=formula.predictors,
        replicates=tuple(replicates),
        train_r2=float(np.mean([rep.train_r2 for rep in replicates])),
        val_r2=float(np.mean(val_scores)) if val_scores else float("nan"),
    )


def oof_predictions(
    model: BaggedModel, dataset: SupervisedDataset, plan: SplitPlan
) -> np.ndarray:
    """Pooled out-of-fold predictions over the in-sample rows.

    Each row's value is the mean prediction over the repeats in which the
    row sat in the validation fold; rows that were always in training are
    NaN. Never touches out-of-sample data by construction: the input is the
    in-sample dataset.
    """
    X_all = dataset.feature_columns(model.predictors)
    total = np.zeros(dataset.n_rows)
    count = np.zeros(dataset.n_rows)
    for rep in model.replicates:
        is_train = _fold_masks(dataset, plan, rep.repeat)
        val = ~is_train
        if not val.any():
            continue
        total[val] += replicate_predict(rep, X_all[val], model.technique)
        count[val] += 1.0
    out = np.full(dataset.n_rows, np.nan)
    seen = count > 0
    out[seen] = total[seen] / count[seen]
    return out


def default_svr_grid(n_features: int):
    """Grid-search candidates: C in 2^-2..2^6, eps in 5 steps, gamma around 1/d."""
    cs = [2.0**k for k in range(-2, 7)]
    epsilons = [0.05, 0.1, 0.2, 0.3, 0.4]
    gammas = [1.0 / n_features, 2.0 / n_features, 0.5 / n_features]
    return [(c, e, g) for c, e, g in product(cs, epsilons, gammas)]


def grid_search_svr(
    dataset: SupervisedDataset,
    formulas,
    plan: SplitPlan,
    global_seed: int,
    grid=None,
    base_hyper: SvrHyper = SvrHyper(),
):
    """Pick the (C, epsilon, gamma) with the best mean validation R-squared.

    Scores each grid point over the given formulas (the caller's fixed
    evaluation set); training failures score minus infinity. Ties break
    toward the earlier grid point.
    """
    formulas = list(formulas)
    if not formulas:
        raise DataError("grid search needs at least one formula")
    if grid is None:
        grid = default_svr_grid(len(formulas[0].predictors))
    if not grid:
        raise DataError("empty grid")
    table = []
    best = None
    for point in grid:
        c, eps, gamma = point
        hyper = replace(base_hyper, C=c, epsilon=eps, gamma=gamma)
        scores = []
        try:
            for formula in formulas:
                fit = bagged_fit(
                    formula, TECH_SVR, dataset, plan, global_seed, svr_hyper=hyper
                )
                scores.append(fit.val_r2)
            score = float(np.mean(scores))
        except VegcastError:
            score = float("-inf")
        table.append((point, score))
        if best is None or score > best[1]:
            best = (point, score)
    return best[0], table
