"""Staged pipeline: data -> indices -> select-vars -> enumerate -> train ->
gate -> prune -> ensemble -> evaluate -> report.

Each stage writes its outputs plus a completion marker carrying a
fingerprint of (config digest, input digest, upstream fingerprint); a
rerun skips stages whose marker still matches. Only the evaluation stage
ever reads holdout rows: index fitting, training, gating, pruning, and
combiner fitting all run on the in-sample window.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .catalog import modeling_catalog, selection_catalog
from .config import RunConfig, config_digest, to_ini
from .data import (
    SplitPlan,
    TimeSeriesTable,
    emit_table,
    load_table,
    split_in_out,
    stable_seed,
    ym_str,
)
from .ensemble import (
    COMBINER_STACKED,
    COMBINER_WEIGHTED,
    EnsembleSpec,
    GateResult,
    fit_combiner,
    gate_models,
    select_members,
)
from .errors import ConfigError, DataError, VegcastError
from .indices import Slotting, build_supervised, build_variable_set, fit_index_params
from .learners.ann import AnnHyper
from .learners.bagging import TECH_ANN, TECH_SVR, bagged_fit, bagged_predict, oof_predictions
from .learners import registry as registry_io
from .metrics import compute_record
from .modelspace import ModelFormula, enumerate_constrained, format_formula, formula_id, parse_formula
from .report import APPROACH_ORDER, emit_report, serialize_spec, deserialize_spec
from .varselect import compare_sources

STAGES = (
    "data",
    "indices",
    "select_vars",
    "enumerate",
    "train",
    "gate",
    "prune",
    "ensemble",
    "evaluate",
    "report",
)

_FLOAT_FMT = "%.17g"


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RunContext:
    """Shared state for one run directory; loads stage outputs lazily."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.run_dir = config.out
        self.digest = config_digest(config)
        self._cache = {}

    # -- paths ------------------------------------------------------------
    def path(self, *parts) -> str:
        return os.path.join(self.run_dir, *parts)

    def marker_path(self, stage: str) -> str:
        return self.path("stages", f"{stage}.done")

    # -- fingerprints ------------------------------------------------------
    def input_digest(self) -> str:
        if "input_digest" not in self._cache:
            if self.config.input_path is None:
                self._cache["input_digest"] = _sha256("synth:" + to_ini(self.config))
            else:
                with open(self.config.input_path, "rb") as fh:
                    self._cache["input_digest"] = hashlib.sha256(fh.read()).hexdigest()
        return self._cache["input_digest"]

    def fingerprint(self, stage: str) -> str:
        chain = self.digest + self.input_digest()
        for name in STAGES:
            chain = _sha256(chain + name)
            if name == stage:
                return chain
        raise ConfigError(f"unknown stage {stage!r}")

    # -- lazy artifacts ----------------------------------------------------
    def _memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def plan(self) -> SplitPlan:
        return self.config.plan()

    @property
    def base_table(self) -> TimeSeriesTable:
        return self._memo(
            "base_table", lambda: load_table(_read(self.path("data", "base.csv")))
        )

    @property
    def derived_table(self) -> TimeSeriesTable:
        def build():
            text = _read(self.path("data", "derived.csv"))
            return load_table(text, allow_missing=True)

        return self._memo("derived_table", build)

    @property
    def first_holdout_ym(self) -> dict:
        def build():
            table = self.base_table
            out = {}
            for unit, sl in table.unit_slices().items():
                out[unit] = int(table.ym[sl.stop - self.plan.holdout_months])
            return out

        return self._memo("first_holdout", build)

    @property
    def chosen_source(self) -> str:
        def build():
            path = self.path("varselect", "chosen_source.txt")
            if os.path.exists(path):
                return _read(path).strip()
            return self.config.source_a

        return self._memo("chosen_source", build)

    @property
    def catalog(self):
        def build():
            source = self.chosen_source
            column = (
                self.config.source_a_column
                if source == self.config.source_a
                else self.config.source_b_column
            )
            return modeling_catalog(
                source=source,
                rain_column=column,
                dekadal_column=self.config.dekadal_column,
            )

        return self._memo("catalog", build)

    @property
    def supervised(self):
        def build():
            return build_supervised(self.derived_table, self.catalog, self.config.lead)

        return self._memo("supervised", build)

    def _split_masks(self):
        ds = self.supervised
        first = self.first_holdout_ym
        boundary = np.array([first[ds.units[u]] for u in ds.unit_index])
        out_mask = ds.target_ym >= boundary
        return ~out_mask, out_mask

    @property
    def insample_ds(self):
        return self._memo("insample_ds", lambda: self.supervised.select(self._split_masks()[0]))

    @property
    def eval_ds(self):
        return self._memo("eval_ds", lambda: self.supervised.select(self._split_masks()[1]))

    @property
    def formulas(self) -> list:
        def build():
            lines = _read(self.path("formulas.txt")).splitlines()
            return [parse_formula(line, self.catalog, self.config.lead) for line in lines if line.strip()]

        return self._memo("formulas", build)

    @property
    def index_rows(self) -> list:
        return self._memo("index_rows", lambda: registry_io.read_index(self.path("registry")))

    def prediction_matrix(self, which: str):
        """(row keys dataframe-ish, column keys, matrix) for 'oof' or 'holdout'."""

        def build():
            return _load_matrix(self.path("predictions", f"{which}.csv"))

        return self._memo(f"matrix_{which}", build)

    @property
    def survivors(self) -> list:
        return self._memo(
            "survivors",
            lambda: [l.strip() for l in _read(self.path("gate", "survivors.txt")).splitlines() if l.strip()],
        )

    @property
    def members(self) -> list:
        return self._memo(
            "members",
            lambda: [l.strip() for l in _read(self.path("prune", "members.txt")).splitlines() if l.strip()],
        )

    def ensemble_specs(self) -> dict:
        def build():
            specs = {}
            scopes = _scopes(self.config)
            for scope, _ in scopes:
                for combiner in self.config.combiners:
                    path = self.path("ensemble", f"{scope}_{combiner}.spec")
                    if os.path.exists(path):
                        specs[(scope, combiner)] = deserialize_spec(_read(path))
            return specs

        return self._memo("specs", build)


def _scopes(config: RunConfig):
    scopes = []
    for tech in config.techniques:
        scopes.append((tech, (tech,)))
    if len(config.techniques) > 1:
        scopes.append(("HET", tuple(config.techniques)))
    return scopes


# ---------------------------------------------------------------------------
# prediction matrix round trip


def _save_matrix(path, dataset, columns, matrix):
    header = ["unit", "feature_date", "target_date", "actual"] + [f"{f}.{t}" for f, t in columns]
    lines = [",".join(header)]
    for i in range(dataset.n_rows):
        cells = [
            dataset.units[dataset.unit_index[i]],
            ym_str(int(dataset.feature_ym[i])),
            ym_str(int(dataset.target_ym[i])),
            _FLOAT_FMT % dataset.y[i],
        ]
        cells.extend("" if np.isnan(v) else _FLOAT_FMT % v for v in matrix[i])
        lines.append(",".join(cells))
    _write(path, "\n".join(lines) + "\n")


@dataclass
class PredictionMatrix:
    units: list
    feature_ym: np.ndarray
    target_ym: np.ndarray
    actual: np.ndarray
    columns: list  # (formula id, technique)
    values: np.ndarray  # rows x columns, NaN for undefined cells

    def column(self, fid: str, technique: str) -> np.ndarray:
        try:
            idx = self.columns.index((fid, technique))
        except ValueError:
            raise DataError(f"prediction matrix has no column {fid}.{technique}") from None
        return self.values[:, idx]


def _load_matrix(path: str) -> PredictionMatrix:
    lines = _read(path).splitlines()
    header = lines[0].split(",")
    columns = []
    for name in header[4:]:
        fid, tech = name.rsplit(".", 1)
        columns.append((fid, tech))
    units, f_ym, t_ym, actual, rows = [], [], [], [], []
    from .data import ym_parse

    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        units.append(cells[0])
        f_ym.append(ym_parse(cells[1]))
        t_ym.append(ym_parse(cells[2]))
        actual.append(float(cells[3]))
        rows.append([float(c) if c != "" else np.nan for c in cells[4:]])
    return PredictionMatrix(
        units,
        np.array(f_ym),
        np.array(t_ym),
        np.array(actual),
        columns,
        np.array(rows, dtype=float),
    )


# ---------------------------------------------------------------------------
# stages


def stage_data(ctx: RunContext):
    config = ctx.config
    if config.input_path is None:
        from .synth import generate_synthetic

        table = generate_synthetic(config.synth)
    else:
        table = load_table(config.input_path, interpolate_gaps=config.interpolate_gaps)
    config.plan().validate(table)
    emit_table(table, ctx.path("data", "base.csv"))


def stage_indices(ctx: RunContext):
    config = ctx.config
    table = ctx.base_table
    in_table, _ = split_in_out(table, ctx.plan)
    sources = [(config.source_a, config.source_a_column)]
    if config.compare_sources and config.source_b_column in table.columns:
        sources.append((config.source_b, config.source_b_column))
    catalog = selection_catalog(
        sources=tuple(sources), dekadal_column=config.dekadal_column
    )
    slotting = (
        Slotting.PER_CALENDAR_MONTH
        if config.slotting == "per_calendar_month"
        else Slotting.GLOBAL
    )
    fits = fit_index_params(
        in_table,
        catalog,
        fit_start=int(in_table.ym.min()),
        fit_end=int(in_table.ym.max()),
        slotting=slotting,
        spi_per_month=config.spi_per_month,
        spi_min_obs=config.spi_min_obs,
        spei_rain=config.source_a_column,
    )
    derived = build_variable_set(table, catalog, fits)
    _write(ctx.path("data", "derived.csv"), emit_table(derived))
    lineage = ["variable,category,source,window,lineage"]
    for entry in catalog:
        lineage.append(
            f"{entry.name},{entry.category.value},{entry.source},{entry.window},\"{entry.lineage}\""
        )
    _write(ctx.path("data", "lineage.csv"), "\n".join(lineage) + "\n")


def stage_select_vars(ctx: RunContext):
    config = ctx.config
    table = ctx.derived_table
    both = (
        config.compare_sources
        and any(e.source == config.source_b for e in _selection_entries(ctx))
    )
    if not both:
        _write(ctx.path("varselect", "chosen_source.txt"), config.source_a + "\n")
        _write(
            ctx.path("varselect", "evidence.csv"),
            "note\nsingle rainfall source configured; comparison skipped\n",
        )
        return
    # align: features at t, target at t+lead, in-sample target months only
    catalog = selection_catalog(
        sources=((config.source_a, config.source_a_column), (config.source_b, config.source_b_column)),
        dekadal_column=config.dekadal_column,
    )
    ds = build_supervised(table, catalog, config.lead)
    first = ctx.first_holdout_ym
    boundary = np.array([first[ds.units[u]] for u in ds.unit_index])
    ds = ds.select(ds.target_ym < boundary)
    variables = {
        name.rsplit("_lag", 1)[0]: ds.X[:, i] for i, name in enumerate(ds.feature_names)
    }
    decision = compare_sources(
        variables,
        ds.y,
        sources=(config.source_a, config.source_b),
    )
    _write(ctx.path("varselect", "chosen_source.txt"), decision.chosen + "\n")
    lines = ["table,key,value"]
    for name, res in decision.normality.items():
        lines.append(f"shapiro_wilk,{name},W={res.statistic!r} p={res.p_value!r} n={res.n}")
    for source, row in decision.spearman_table.items():
        for role, rho in row.items():
            lines.append(f"spearman,{source}_{role},{rho!r}")
        lines.append(f"spearman_mean,{source},{decision.mean_rho[source]!r}")
    lines.append(f"stepwise,selected,{'+'.join(decision.stepwise_selected)}")
    for name, a in decision.aic_by_variable.items():
        lines.append(f"aic,{name},{a!r}")
    for name, share in decision.importance_shares.items():
        lines.append(f"importance,{name},{share!r}")
    lines.append(f"importance,full_model_r2,{decision.full_model_r2!r}")
    lines.append(f"decision,chosen,{decision.chosen}")
    lines.append(f"decision,tie,{decision.tie}")
    _write(ctx.path("varselect", "evidence.csv"), "\n".join(lines) + "\n")


def _selection_entries(ctx: RunContext):
    config = ctx.config
    sources = [(config.source_a, config.source_a_column)]
    if config.source_b_column in ctx.base_table.columns:
        sources.append((config.source_b, config.source_b_column))
    return selection_catalog(sources=tuple(sources), dekadal_column=config.dekadal_column)


def stage_enumerate(ctx: RunContext):
    formulas = enumerate_constrained(ctx.catalog, ctx.config.lead)
    if ctx.config.max_formulas is not None:
        formulas = formulas[: ctx.config.max_formulas]
    _write(
        ctx.path("formulas.txt"),
        "\n".join(format_formula(f) for f in formulas) + "\n",
    )


@dataclass
class _TrainTask:
    formula: ModelFormula
    technique: str


_WORKER_STATE = {}


def _worker_init(insample_ds, eval_ds, plan, seed, ann_hyper, svr_hyper):
    _WORKER_STATE["args"] = (insample_ds, eval_ds, plan, seed, ann_hyper, svr_hyper)


def _run_task(task: _TrainTask):
    insample_ds, eval_ds, plan, seed, ann_hyper, svr_hyper = _WORKER_STATE["args"]
    return _train_one(task, insample_ds, eval_ds, plan, seed, ann_hyper, svr_hyper)


def _train_one(task, insample_ds, eval_ds, plan, seed, ann_hyper, svr_hyper):
    model = bagged_fit(
        task.formula,
        task.technique,
        insample_ds,
        plan,
        seed,
        ann_hyper=ann_hyper,
        svr_hyper=svr_hyper,
    )
    oof = oof_predictions(model, insample_ds, plan)
    holdout = bagged_predict(model, eval_ds.feature_columns(model.predictors))
    return model, oof, holdout


def stage_train(ctx: RunContext):
    config = ctx.config
    tasks = [
        _TrainTask(formula, tech)
        for formula in ctx.formulas
        for tech in config.techniques
    ]
    insample, evalds = ctx.insample_ds, ctx.eval_ds
    args = (insample, evalds, ctx.plan, config.seed, config.ann, config.svr)
    results = []
    if config.threads > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=config.threads,
            initializer=_worker_init,
            initargs=args,
        ) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=8))
    else:
        results = [_train_one(t, *args) for t in tasks]

    os.makedirs(ctx.path("registry"), exist_ok=True)
    models = []
    columns = []
    oof_cols = []
    holdout_cols = []
    for task, (model, oof, holdout) in zip(tasks, results):
        registry_io.save_model(model, ctx.path("registry"))
        models.append(model)
        columns.append((model.formula_id, model.technique))
        oof_cols.append(oof)
        holdout_cols.append(holdout)
    registry_io.write_index(models, ctx.path("registry"))
    _save_matrix(
        ctx.path("predictions", "oof.csv"), insample, columns, np.column_stack(oof_cols)
    )
    _save_matrix(
        ctx.path("predictions", "holdout.csv"), evalds, columns, np.column_stack(holdout_cols)
    )


def stage_gate(ctx: RunContext):
    config = ctx.config
    metrics = {}
    for row in ctx.index_rows:
        metrics.setdefault(row["formula_id"], {})[row["technique"]] = (
            row["train_r2"],
            row["val_r2"],
        )
    result = gate_models(metrics, config.gate, reference=config.gate_reference)
    _write(ctx.path("gate", "survivors.txt"), "\n".join(result.survivors) + "\n")
    dropped = ["formula_id,reason"]
    for fid in sorted(result.dropped):
        dropped.append(f"{fid},\"{result.dropped[fid]}\"")
    _write(ctx.path("gate", "dropped.csv"), "\n".join(dropped) + "\n")
    summary = (
        f"total,{len(metrics)}\n"
        f"survivors,{len(result.survivors)}\n"
        f"dropped,{len(result.dropped)}\n"
        f"reference,{result.reference_technique}\n"
    )
    _write(ctx.path("gate", "summary.csv"), summary)


def _oof_rows_and_columns(ctx: RunContext, fids, techniques):
    matrix = ctx.prediction_matrix("oof")
    cols = [(f, t) for f in fids for t in techniques]
    values = np.column_stack([matrix.column(f, t) for f, t in cols])
    defined = ~np.isnan(values).any(axis=1)
    return matrix, cols, values[defined], matrix.actual[defined], defined


def stage_prune(ctx: RunContext):
    config = ctx.config
    survivors = ctx.survivors
    reference = config.gate_reference
    _, _, values, actual, _ = _oof_rows_and_columns(ctx, survivors, (reference,))
    result = select_members(survivors, values, actual, batch=config.batch)
    _write(ctx.path("prune", "members.txt"), "\n".join(result.members) + "\n")
    lines = ["step,phase,action,n_members,r2,accepted"]
    for s in result.audit:
        lines.append(f"{s.step},{s.phase},\"{s.action}\",{s.n_members},{s.r2!r},{int(s.accepted)}")
    _write(ctx.path("prune", "audit.csv"), "\n".join(lines) + "\n")
    _write(
        ctx.path("prune", "summary.csv"),
        f"pool,{len(survivors)}\nselected,{len(result.members)}\nscored_r2,{result.r2!r}\n",
    )


def stage_ensemble(ctx: RunContext):
    config = ctx.config
    members = ctx.members
    val_scores = {
        (row["formula_id"], row["technique"]): row["val_r2"] for row in ctx.index_rows
    }
    for scope, techniques in _scopes(config):
        matrix, cols, values, actual, _ = _oof_rows_and_columns(ctx, members, techniques)
        oof_map = {c: values[:, i] for i, c in enumerate(cols)}
        for combiner in config.combiners:
            spec = EnsembleSpec(
                members=tuple(members),
                techniques=techniques,
                combiner=combiner,
                member_scores={c: val_scores[c] for c in cols},
            )
            fitted = fit_combiner(
                spec,
                oof_map,
                actual,
                seed=stable_seed(config.seed, "stacker", scope),
                stacker_hidden=config.stacker_hidden,
            )
            fitted.validate()
            _write(
                ctx.path("ensemble", f"{scope}_{combiner}.spec"),
                serialize_spec(fitted, scope),
            )


def stage_evaluate(ctx: RunContext):
    config = ctx.config
    holdout = ctx.prediction_matrix("holdout")
    index_rows = ctx.index_rows
    approaches = {}

    def champion(technique: str) -> str:
        rows = [r for r in index_rows if r["technique"] == technique]
        if not rows:
            raise DataError(f"no {technique} models in registry index")
        rows.sort(key=lambda r: (-r["val_r2"], r["n_predictors"], r["formula_id"]))
        return rows[0]["formula_id"]

    for tech in config.techniques:
        fid = champion(tech)
        approaches[f"{tech}_champion"] = holdout.column(fid, tech)
        _write(ctx.path("evaluate", f"champion_{tech}.txt"), fid + "\n")

    specs = ctx.ensemble_specs()
    for (scope, combiner), spec in sorted(specs.items()):
        preds = {c: holdout.column(*c) for c in spec.columns()}
        from .ensemble import ensemble_predict

        approaches[f"{scope}_{combiner}"] = ensemble_predict(spec, preds)

    order = [a for a in APPROACH_ORDER if a in approaches]
    header = ["unit", "target_date", "actual"] + order
    lines = [",".join(header)]
    for i in range(len(holdout.actual)):
        cells = [
            holdout.units[i],
            ym_str(int(holdout.target_ym[i])),
            _FLOAT_FMT % holdout.actual[i],
        ]
        cells.extend(_FLOAT_FMT % approaches[a][i] for a in order)
        lines.append(",".join(cells))
    _write(ctx.path("evaluate", "predictions.csv"), "\n".join(lines) + "\n")

    records = []
    unit_names = sorted(set(holdout.units))
    units_arr = np.array(holdout.units)
    for approach in order:
        pred = approaches[approach]
        for unit in unit_names:
            mask = units_arr == unit
            records.append((approach, compute_record(unit, pred[mask], holdout.actual[mask])))
        records.append((approach, compute_record("OVERALL", pred, holdout.actual)))
    header = (
        "approach,group,n,r2,r2_rss,corr_sign,rmse,mae,mape,mape_skipped,"
        "accuracy,auroc,moderate_extreme_recall,drought_class_agreement"
    )
    lines = [header]
    for approach, rec in records:
        lines.append(
            ",".join(
                [
                    approach,
                    rec.group,
                    str(rec.n),
                    repr(rec.r2),
                    repr(rec.r2_rss),
                    str(rec.corr_sign),
                    repr(rec.rmse),
                    repr(rec.mae),
                    repr(rec.mape),
                    str(rec.mape_skipped),
                    repr(rec.accuracy),
                    repr(rec.auroc),
                    repr(rec.moderate_extreme_recall),
                    repr(rec.drought_class_agreement),
                ]
            )
        )
    _write(ctx.path("evaluate", "metrics.csv"), "\n".join(lines) + "\n")


def stage_report(ctx: RunContext):
    emit_report(ctx)


_STAGE_FUNCS = {
    "data": stage_data,
    "indices": stage_indices,
    "select_vars": stage_select_vars,
    "enumerate": stage_enumerate,
    "train": stage_train,
    "gate": stage_gate,
    "prune": stage_prune,
    "ensemble": stage_ensemble,
    "evaluate": stage_evaluate,
    "report": stage_report,
}

_STAGE_OUTPUTS = {
    "data": ("data/base.csv",),
    "indices": ("data/derived.csv",),
    "select_vars": ("varselect/chosen_source.txt",),
    "enumerate": ("formulas.txt",),
    "train": ("registry/index.csv", "predictions/oof.csv", "predictions/holdout.csv"),
    "gate": ("gate/survivors.txt",),
    "prune": ("prune/members.txt", "prune/audit.csv"),
    "ensemble": (),
    "evaluate": ("evaluate/predictions.csv", "evaluate/metrics.csv"),
    "report": ("reports/manifest.txt",),
}


def _stage_complete(ctx: RunContext, stage: str) -> bool:
    marker = ctx.marker_path(stage)
    if not os.path.exists(marker):
        return False
    if _read(marker).strip() != ctx.fingerprint(stage):
        return False
    return all(os.path.exists(ctx.path(*out.split("/"))) for out in _STAGE_OUTPUTS[stage])


def run_stage(ctx: RunContext, stage: str, force: bool = False) -> bool:
    """Execute one stage if needed; returns True if it actually ran."""
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}; stages are {', '.join(STAGES)}")
    for upstream in STAGES[: STAGES.index(stage)]:
        if not _stage_complete(ctx, upstream):
            raise DataError(
                f"stage '{stage}' needs '{upstream}' first; "
                f"resume with: vegcast run --out {ctx.run_dir}"
            )
    if not force and _stage_complete(ctx, stage):
        return False
    try:
        _STAGE_FUNCS[stage](ctx)
    except VegcastError as exc:
        raise type(exc)(
            f"stage '{stage}' failed: {exc}\n"
            f"fix the cause, then resume with: vegcast run --out {ctx.run_dir}"
        ) from None
    _write(ctx.marker_path(stage), ctx.fingerprint(stage) + "\n")
    return True


def run_pipeline(config: RunConfig, echo=None) -> RunContext:
    """Execute every stage in order, skipping stages already complete."""
    ctx = RunContext(config)
    os.makedirs(ctx.run_dir, exist_ok=True)
    _write(ctx.path("config.ini"), to_ini(config))
    _write(
        ctx.path("manifest.txt"),
        "run_identity: "
        + _sha256(ctx.digest + ctx.input_digest())
        + f"\nconfig_digest: {ctx.digest}\ninput_digest: {ctx.input_digest()}"
        + f"\nseed: {config.seed}\nversion: {__version__}\n",
    )
    for stage in STAGES:
        ran = run_stage(ctx, stage)
        if echo:
            echo(f"[{stage}] {'done' if ran else 'skipped (up to date)'}")
    return ctx
