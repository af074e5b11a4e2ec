"""Report emission: delimited tables per approach and unit, agreement
strips, drought-event recall, the selection audit, and a reproducibility
manifest with content hashes. Everything written here is byte-deterministic
for a given run (no timestamps, fixed float formatting)."""

from __future__ import annotations

import hashlib
import os
import sys

import numpy as np

from .ensemble import EnsembleSpec, StackerModel
from .errors import DataError
from .learners.ann import AnnParams
from .metrics import classify_vci3m_array

APPROACH_ORDER = (
    "ANN_champion",
    "SVR_champion",
    "ANN_simple",
    "ANN_weighted",
    "ANN_stacked",
    "SVR_simple",
    "SVR_weighted",
    "SVR_stacked",
    "HET_simple",
    "HET_weighted",
    "HET_stacked",
)

APPROACH_LABELS = {
    "ANN_champion": "ANN champion",
    "SVR_champion": "SVR champion",
    "ANN_simple": "ANN homogenous simple average",
    "ANN_weighted": "ANN homogenous weighted average",
    "ANN_stacked": "ANN homogenous stacked",
    "SVR_simple": "SVR homogenous simple average",
    "SVR_weighted": "SVR homogenous weighted average",
    "SVR_stacked": "SVR homogenous stacked",
    "HET_simple": "Heterogenous simple average",
    "HET_weighted": "Heterogenous weighted average",
    "HET_stacked": "Heterogenous stacked",
}


# ---------------------------------------------------------------------------
# ensemble spec round trip

SPEC_FORMAT = "vegcast-ensemble 1"


def _fmt_arr(arr) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(arr, dtype=float).ravel())


def _parse_arr(text: str) -> np.ndarray:
    text = text.strip()
    return np.array([float(t) for t in text.split()]) if text else np.empty(0)


def serialize_spec(spec: EnsembleSpec, scope: str) -> str:
    lines = [SPEC_FORMAT]
    lines.append(f"scope: {scope}")
    lines.append(f"combiner: {spec.combiner}")
    lines.append(f"techniques: {','.join(spec.techniques)}")
    lines.append(f"members: {' '.join(spec.members)}")
    for fid, tech in spec.columns():
        lines.append(f"score: {fid}|{tech}|{spec.member_scores[(fid, tech)]!r}")
    if spec.weights is not None:
        lines.append(f"weights: {_fmt_arr(spec.weights)}")
    if spec.stacker is not None:
        st = spec.stacker
        lines.append(f"stacker_columns: {','.join(f'{f}|{t}' for f, t in st.columns)}")
        lines.append(f"stacker_train_r2: {st.train_r2!r}")
        lines.append(f"stacker_layers: {' '.join(str(s) for s in st.params.layer_sizes)}")
        for li, (W, b) in enumerate(zip(st.params.weights, st.params.biases)):
            lines.append(f"stacker_W{li}: {_fmt_arr(W)}")
            lines.append(f"stacker_b{li}: {_fmt_arr(b)}")
    return "\n".join(lines) + "\n"


def deserialize_spec(text: str) -> EnsembleSpec:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != SPEC_FORMAT:
        raise DataError(f"not an ensemble spec (missing '{SPEC_FORMAT}')")
    kv = {}
    scores = {}
    for line in lines[1:]:
        key, value = line.split(":", 1)
        key, value = key.strip(), value.strip()
        if key == "score":
            fid, tech, raw = value.split("|")
            scores[(fid, tech)] = float(raw)
        else:
            kv[key] = value
    members = tuple(kv["members"].split())
    techniques = tuple(kv["techniques"].split(","))
    combiner = kv["combiner"]
    weights = _parse_arr(kv["weights"]) if "weights" in kv else None
    stacker = None
    if "stacker_layers" in kv:
        sizes = [int(s) for s in kv["stacker_layers"].split()]
        weights_list, biases = [], []
        for li in range(len(sizes) - 1):
            weights_list.append(_parse_arr(kv[f"stacker_W{li}"]).reshape(sizes[li + 1], sizes[li]))
            biases.append(_parse_arr(kv[f"stacker_b{li}"]))
        columns = tuple(
            tuple(pair.split("|")) for pair in kv["stacker_columns"].split(",")
        )
        stacker = StackerModel(
            AnnParams(weights_list, biases), columns, float(kv["stacker_train_r2"])
        )
    return EnsembleSpec(
        members=members,
        techniques=techniques,
        combiner=combiner,
        member_scores=scores,
        weights=weights,
        stacker=stacker,
    )


# ---------------------------------------------------------------------------
# report tables


def _warn(message: str):
    print(f"warning: {message}", file=sys.stderr)


def _load_metrics(ctx):
    lines = [l for l in open(ctx.path("evaluate", "metrics.csv"), encoding="utf-8")]
    header = lines[0].strip().split(",")
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rows.append(dict(zip(header, line.strip().split(","))))
    return rows


def _load_predictions(ctx):
    lines = [l.rstrip("\n") for l in open(ctx.path("evaluate", "predictions.csv"), encoding="utf-8")]
    header = lines[0].split(",")
    approaches = header[3:]
    units, dates, actual = [], [], []
    preds = {a: [] for a in approaches}
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        units.append(cells[0])
        dates.append(cells[1])
        actual.append(float(cells[2]))
        for a, cell in zip(approaches, cells[3:]):
            preds[a].append(float(cell))
    return units, dates, np.array(actual), {a: np.array(v) for a, v in preds.items()}


def _metric_table(rows, metric: str, approaches, groups) -> str:
    by_key = {(r["approach"], r["group"]): r for r in rows}
    out = ["approach," + ",".join(groups)]
    for approach in approaches:
        cells = [APPROACH_LABELS.get(approach, approach)]
        for group in groups:
            row = by_key.get((approach, group))
            if row is None or row[metric] in ("nan", ""):
                _warn(f"missing {metric} cell for {approach}/{group}, left blank")
                cells.append("")
            else:
                cells.append(f"{float(row[metric]):.6f}")
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def emit_report(ctx):
    """Write every report table plus the reproducibility manifest."""
    rows = _load_metrics(ctx)
    units, dates, actual, preds = _load_predictions(ctx)
    approaches = [a for a in APPROACH_ORDER if any(r["approach"] == a for r in rows)]
    unit_names = sorted(set(units))
    groups = unit_names + ["OVERALL"]
    outdir = ctx.path("reports")
    os.makedirs(outdir, exist_ok=True)

    written = {}

    def emit(name: str, text: str):
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    emit("regression_r2.csv", _metric_table(rows, "r2", approaches, groups))
    emit("classification_accuracy.csv", _metric_table(rows, "accuracy", approaches, groups))

    # monthly class-agreement strips
    units_arr = np.array(units)
    strip = ["approach,unit,month_no,target_date,actual_class,predicted_class,match"]
    actual_cls = classify_vci3m_array(actual)
    for approach in approaches:
        pred_cls = classify_vci3m_array(preds[approach])
        for unit in unit_names:
            idx = np.flatnonzero(units_arr == unit)
            for month_no, i in enumerate(idx, start=1):
                strip.append(
                    f"{APPROACH_LABELS.get(approach, approach)},{unit},{month_no},"
                    f"{dates[i]},{actual_cls[i]},{pred_cls[i]},{int(actual_cls[i] == pred_cls[i])}"
                )
    emit("agreement_strips.csv", "\n".join(strip) + "\n")

    # drought-event tables (recall and exact-class agreement on deficit months)
    recall_approaches = [
        a for a in ("ANN_champion", "SVR_champion", "HET_stacked") if a in approaches
    ]
    emit(
        "drought_recall.csv",
        _metric_table(rows, "moderate_extreme_recall", recall_approaches, groups),
    )
    emit(
        "drought_agreement.csv",
        _metric_table(rows, "drought_class_agreement", recall_approaches, groups),
    )

    with open(ctx.path("evaluate", "metrics.csv"), encoding="utf-8") as fh:
        emit("detailed_metrics.csv", fh.read())
    audit_path = ctx.path("prune", "audit.csv")
    if os.path.exists(audit_path):
        with open(audit_path, encoding="utf-8") as fh:
            emit("selection_audit.csv", fh.read())

    manifest = [
        "run_identity: "
        + hashlib.sha256((ctx.digest + ctx.input_digest()).encode()).hexdigest(),
        f"config_digest: {ctx.digest}",
        f"input_digest: {ctx.input_digest()}",
        f"seed: {ctx.config.seed}",
    ]
    for name in sorted(written):
        manifest.append(f"sha256 {name}: {written[name]}")
    with open(os.path.join(outdir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
