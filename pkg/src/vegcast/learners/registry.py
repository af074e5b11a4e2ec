"""Model registry: one self-describing text file per bagged model.

The format is versioned key-value lines with whitespace-separated float
arrays written via repr, so files round-trip exactly and diff cleanly.
Filenames are `<formula_id>.<technique>.model`; `index.csv` lists every
model with its aggregate metrics.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import DataError
from .ann import AnnParams
from .bagging import BaggedModel, Replicate, TECH_ANN
from .scaling import MinMaxScaler
from .svr import SvrModel

FORMAT_LINE = "vegcast-model 1"
INDEX_NAME = "index.csv"


def _fmt_array(arr) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(arr, dtype=float).ravel())


def _parse_array(text: str) -> np.ndarray:
    text = text.strip()
    return np.array([float(t) for t in text.split()]) if text else np.empty(0)


def model_filename(fid: str, technique: str) -> str:
    return f"{fid}.{technique}.model"


def save_model(model: BaggedModel, directory: str) -> str:
    lines = [FORMAT_LINE]
    lines.append(f"formula_id: {model.formula_id}")
    lines.append(f"technique: {model.technique}")
    lines.append(f"predictors: {','.join(model.predictors)}")
    lines.append(f"train_r2: {model.train_r2!r}")
    lines.append(f"val_r2: {model.val_r2!r}")
    lines.append(f"repeats: {len(model.replicates)}")
    for rep in model.replicates:
        lines.append(f"replicate: {rep.repeat}")
        lines.append(f"seed: {rep.seed}")
        lines.append(f"rep_train_r2: {rep.train_r2!r}")
        lines.append(f"rep_val_r2: {rep.val_r2!r}")
        lines.append(f"scaler_lo: {_fmt_array(rep.scaler.lo)}")
        lines.append(f"scaler_hi: {_fmt_array(rep.scaler.hi)}")
        if rep.target_scaler is not None:
            lines.append(f"target_lo: {_fmt_array(rep.target_scaler.lo)}")
            lines.append(f"target_hi: {_fmt_array(rep.target_scaler.hi)}")
        if model.technique == TECH_ANN:
            ann: AnnParams = rep.model
            lines.append(f"layers: {' '.join(str(s) for s in ann.layer_sizes)}")
            for li, (W, b) in enumerate(zip(ann.weights, ann.biases)):
                lines.append(f"W{li}: {_fmt_array(W)}")
                lines.append(f"b{li}: {_fmt_array(b)}")
        else:
            svr: SvrModel = rep.model
            lines.append(f"svr_gamma: {svr.gamma!r}")
            lines.append(f"svr_C: {svr.C!r}")
            lines.append(f"svr_epsilon: {svr.epsilon!r}")
            lines.append(f"svr_bias: {svr.bias!r}")
            lines.append(f"svr_n_support: {len(svr.support_beta)}")
            lines.append(f"svr_n_features: {svr.support_X.shape[1] if svr.support_X.size else len(model.predictors)}")
            lines.append(f"svr_beta: {_fmt_array(svr.support_beta)}")
            lines.append(f"svr_support: {_fmt_array(svr.support_X)}")
    path = os.path.join(directory, model_filename(model.formula_id, model.technique))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


class _LineReader:
    def __init__(self, lines):
        self.lines = lines
        self.pos = 0

    def next(self, key: str) -> str:
        if self.pos >= len(self.lines):
            raise DataError(f"model file truncated, expected {key!r}")
        line = self.lines[self.pos]
        self.pos += 1
        if not line.startswith(key + ":"):
            raise DataError(f"expected {key!r}, found {line.split(':')[0]!r}")
        return line[len(key) + 1 :].strip()

    def peek_key(self) -> str:
        if self.pos >= len(self.lines):
            return ""
        return self.lines[self.pos].split(":", 1)[0]


def load_model(path: str) -> BaggedModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != FORMAT_LINE:
        raise DataError(f"{path}: not a model file (missing '{FORMAT_LINE}')")
    r = _LineReader(lines[1:])
    fid = r.next("formula_id")
    technique = r.next("technique")
    predictors = tuple(r.next("predictors").split(","))
    train_r2 = float(r.next("train_r2"))
    val_r2 = float(r.next("val_r2"))
    repeats = int(r.next("repeats"))
    replicates = []
    for _ in range(repeats):
        repeat = int(r.next("replicate"))
        seed = int(r.next("seed"))
        rep_train = float(r.next("rep_train_r2"))
        rep_val = float(r.next("rep_val_r2"))
        scaler = MinMaxScaler(_parse_array(r.next("scaler_lo")), _parse_array(r.next("scaler_hi")))
        target_scaler = None
        if r.peek_key() == "target_lo":
            target_scaler = MinMaxScaler(
                _parse_array(r.next("target_lo")), _parse_array(r.next("target_hi"))
            )
        if technique == TECH_ANN:
            sizes = [int(s) for s in r.next("layers").split()]
            weights, biases = [], []
            for li in range(len(sizes) - 1):
                W = _parse_array(r.next(f"W{li}")).reshape(sizes[li + 1], sizes[li])
                b = _parse_array(r.next(f"b{li}"))
                weights.append(W)
                biases.append(b)
            model = AnnParams(weights, biases)
        else:
            gamma = float(r.next("svr_gamma"))
            C = float(r.next("svr_C"))
            epsilon = float(r.next("svr_epsilon"))
            bias = float(r.next("svr_bias"))
            n_support = int(r.next("svr_n_support"))
            n_features = int(r.next("svr_n_features"))
            beta = _parse_array(r.next("svr_beta"))
            support = _parse_array(r.next("svr_support"))
            support = support.reshape(n_support, n_features) if n_support else np.empty((0, n_features))
            model = SvrModel(
                support_X=support,
                support_beta=beta,
                bias=bias,
                gamma=gamma,
                C=C,
                epsilon=epsilon,
                iterations=0,
                violation=0.0,
            )
        replicates.append(
            Replicate(
                repeat=repeat,
                seed=seed,
                scaler=scaler,
                target_scaler=target_scaler,
                model=model,
                train_r2=rep_train,
                val_r2=rep_val,
            )
        )
    return BaggedModel(
        formula_id=fid,
        technique=technique,
        predictors=predictors,
        replicates=tuple(replicates),
        train_r2=train_r2,
        val_r2=val_r2,
    )


def write_index(models, directory: str) -> str:
    """index.csv: one row per bagged model with aggregate metrics."""
    rows = ["formula_id,technique,n_predictors,predictors,train_r2,val_r2,overfit_index,file"]
    for m in sorted(models, key=lambda m: (m.formula_id, m.technique)):
        rows.append(
            ",".join(
                [
                    m.formula_id,
                    m.technique,
                    str(len(m.predictors)),
                    "+".join(m.predictors),
                    repr(m.train_r2),
                    repr(m.val_r2),
                    repr(m.overfit_index),
                    model_filename(m.formula_id, m.technique),
                ]
            )
        )
    path = os.path.join(directory, INDEX_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    return path


def read_index(directory: str):
    """Rows of index.csv as dicts (metrics parsed to float)."""
    path = os.path.join(directory, INDEX_NAME)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key in ("train_r2", "val_r2", "overfit_index"):
            row[key] = float(row[key])
        row["n_predictors"] = int(row["n_predictors"])
        out.append(row)
    return out
