"""Run configuration: one INI-style file drives a whole reproducible run.

A run is a pure function of (config, input bytes). The config digest
excludes execution-only settings (output directory, worker count) so the
same scientific configuration always has the same identity no matter how
or where it executes.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace

from .data import SplitPlan
from .ensemble import COMBINERS, GateConfig
from .errors import ConfigError
from .learners.ann import AnnHyper
from .learners.bagging import TECHNIQUES
from .learners.svr import SvrHyper
from .synth import SynthConfig


@dataclass(frozen=True)
class RunConfig:
    # data
    input_path: str | None = None  # None -> synthesize
    synth: SynthConfig = field(default_factory=SynthConfig)
    interpolate_gaps: int = 0
    # indices
    lead: int = 1
    slotting: str = "per_calendar_month"  # or "global"
    spi_per_month: bool = True
    spi_min_obs: int = 10
    source_a: str = "TAMSAT"
    source_a_column: str = "RFE"
    source_b: str = "CHIRPS"
    source_b_column: str = "RFE_B"
    compare_sources: bool = True
    dekadal_column: str | None = None
    # split
    holdout_months: int = 24
    ratio: float = 0.7
    repeats: int = 5
    # gate
    gate: GateConfig = field(default_factory=GateConfig)
    gate_reference: str = "ANN"
    # learners
    ann: AnnHyper = field(default_factory=AnnHyper)
    svr: SvrHyper = field(default_factory=SvrHyper)
    stacker_hidden: tuple = ()
    # ensemble
    batch: int = 5
    combiners: tuple = COMBINERS
    techniques: tuple = TECHNIQUES
    # execution
    seed: int = 0
    max_formulas: int | None = None  # cap for smoke runs; None = all
    out: str = "run"
    threads: int = 1

    def plan(self) -> SplitPlan:
        return SplitPlan(
            holdout_months=self.holdout_months,
            ratio=self.ratio,
            repeats=self.repeats,
            seed=self.seed,
        )

    def validate(self):
        if self.lead < 1:
            raise ConfigError(f"lead must be >= 1, got {self.lead}")
        if self.slotting not in ("per_calendar_month", "global"):
            raise ConfigError(f"unknown slotting {self.slotting!r}")
        for c in self.combiners:
            if c not in COMBINERS:
                raise ConfigError(f"unknown combiner {c!r}")
        for t in self.techniques:
            if t not in TECHNIQUES:
                raise ConfigError(f"unknown technique {t!r}")
        if self.gate_reference not in self.techniques:
            raise ConfigError(
                f"gate reference {self.gate_reference!r} not among techniques {self.techniques}"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        try:
            self.gate.validate()
            self.plan().validate()
        except Exception as exc:
            raise ConfigError(str(exc)) from None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def to_ini(config: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp["data"] = {
        "input_path": _fmt(config.input_path),
        "interpolate_gaps": _fmt(config.interpolate_gaps),
        "synth_units": _fmt(config.synth.units),
        "synth_months": _fmt(config.synth.months),
        "synth_start": config.synth.start,
        "synth_rain_shape": _fmt(config.synth.rain_shape),
        "synth_ndvi_noise": _fmt(config.synth.ndvi_noise),
        "synth_lst_noise": _fmt(config.synth.lst_noise),
        "synth_alt_source": _fmt(config.synth.alt_source),
        "synth_alt_noise": _fmt(config.synth.alt_noise),
    }
    cp["indices"] = {
        "lead": _fmt(config.lead),
        "slotting": config.slotting,
        "spi_per_month": _fmt(config.spi_per_month),
        "spi_min_obs": _fmt(config.spi_min_obs),
        "source_a": config.source_a,
        "source_a_column": config.source_a_column,
        "source_b": config.source_b,
        "source_b_column": config.source_b_column,
        "compare_sources": _fmt(config.compare_sources),
        "dekadal_column": _fmt(config.dekadal_column),
    }
    cp["split"] = {
        "holdout_months": _fmt(config.holdout_months),
        "ratio": _fmt(config.ratio),
        "repeats": _fmt(config.repeats),
    }
    cp["gate"] = {
        "r2_min": _fmt(config.gate.r2_min),
        "overfit_tolerance": _fmt(config.gate.overfit_tolerance),
        "reference": config.gate_reference,
    }
    cp["ann"] = {
        "hidden": _fmt(config.ann.hidden if config.ann.hidden is not None else ""),
        "delta0": _fmt(config.ann.delta0),
        "delta_min": _fmt(config.ann.delta_min),
        "delta_max": _fmt(config.ann.delta_max),
        "eta_plus": _fmt(config.ann.eta_plus),
        "eta_minus": _fmt(config.ann.eta_minus),
        "max_epochs": _fmt(config.ann.max_epochs),
        "patience": _fmt(config.ann.patience),
        "init_scale": _fmt(config.ann.init_scale),
    }
    cp["svr"] = {
        "c": _fmt(config.svr.C),
        "epsilon": _fmt(config.svr.epsilon),
        "gamma": _fmt(config.svr.gamma),
        "tol": _fmt(config.svr.tol),
        "max_iter": _fmt(config.svr.max_iter),
    }
    cp["ensemble"] = {
        "batch": _fmt(config.batch),
        "combiners": _fmt(config.combiners),
        "techniques": _fmt(config.techniques),
        "stacker_hidden": _fmt(config.stacker_hidden),
    }
    cp["run"] = {
        "seed": _fmt(config.seed),
        "max_formulas": _fmt(config.max_formulas),
        "out": config.out,
        "threads": _fmt(config.threads),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _get(cp, section, key, cast, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return None if default is None or cast in (_opt_int, _opt_float, str) else default
    try:
        return cast(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _opt_int(raw: str):
    return int(raw)


def _opt_float(raw: str):
    return float(raw)


def _int_tuple(raw: str) -> tuple:
    return tuple(int(t) for t in raw.split(",") if t.strip())


def _str_tuple(raw: str) -> tuple:
    return tuple(t.strip() for t in raw.split(",") if t.strip())


def from_ini(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    base = RunConfig()
    synth = SynthConfig(
        units=_get(cp, "data", "synth_units", int, base.synth.units),
        months=_get(cp, "data", "synth_months", int, base.synth.months),
        seed=_get(cp, "run", "seed", int, base.seed),
        start=_get(cp, "data", "synth_start", str, base.synth.start),
        rain_shape=_get(cp, "data", "synth_rain_shape", float, base.synth.rain_shape),
        ndvi_noise=_get(cp, "data", "synth_ndvi_noise", float, base.synth.ndvi_noise),
        lst_noise=_get(cp, "data", "synth_lst_noise", float, base.synth.lst_noise),
        alt_source=_get(cp, "data", "synth_alt_source", _bool, base.synth.alt_source),
        alt_noise=_get(cp, "data", "synth_alt_noise", float, base.synth.alt_noise),
    )
    ann_hidden = _get(cp, "ann", "hidden", _int_tuple, base.ann.hidden)
    ann = AnnHyper(
        hidden=ann_hidden if ann_hidden else None,
        delta0=_get(cp, "ann", "delta0", float, base.ann.delta0),
        delta_min=_get(cp, "ann", "delta_min", float, base.ann.delta_min),
        delta_max=_get(cp, "ann", "delta_max", float, base.ann.delta_max),
        eta_plus=_get(cp, "ann", "eta_plus", float, base.ann.eta_plus),
        eta_minus=_get(cp, "ann", "eta_minus", float, base.ann.eta_minus),
        max_epochs=_get(cp, "ann", "max_epochs", int, base.ann.max_epochs),
        patience=_get(cp, "ann", "patience", int, base.ann.patience),
        init_scale=_get(cp, "ann", "init_scale", float, base.ann.init_scale),
    )
    svr = SvrHyper(
        C=_get(cp, "svr", "c", float, base.svr.C),
        epsilon=_get(cp, "svr", "epsilon", float, base.svr.epsilon),
        gamma=_get(cp, "svr", "gamma", _opt_float, base.svr.gamma),
        tol=_get(cp, "svr", "tol", float, base.svr.tol),
        max_iter=_get(cp, "svr", "max_iter", _opt_int, base.svr.max_iter),
    )
    gate = GateConfig(
        r2_min=_get(cp, "gate", "r2_min", float, base.gate.r2_min),
        overfit_tolerance=_get(cp, "gate", "overfit_tolerance", float, base.gate.overfit_tolerance),
    )
    config = RunConfig(
        input_path=_get(cp, "data", "input_path", str, base.input_path) or None,
        synth=synth,
        interpolate_gaps=_get(cp, "data", "interpolate_gaps", int, base.interpolate_gaps),
        lead=_get(cp, "indices", "lead", int, base.lead),
        slotting=_get(cp, "indices", "slotting", str, base.slotting),
        spi_per_month=_get(cp, "indices", "spi_per_month", _bool, base.spi_per_month),
        spi_min_obs=_get(cp, "indices", "spi_min_obs", int, base.spi_min_obs),
        source_a=_get(cp, "indices", "source_a", str, base.source_a),
        source_a_column=_get(cp, "indices", "source_a_column", str, base.source_a_column),
        source_b=_get(cp, "indices", "source_b", str, base.source_b),
        source_b_column=_get(cp, "indices", "source_b_column", str, base.source_b_column),
        compare_sources=_get(cp, "indices", "compare_sources", _bool, base.compare_sources),
        dekadal_column=_get(cp, "indices", "dekadal_column", str, base.dekadal_column) or None,
        holdout_months=_get(cp, "split", "holdout_months", int, base.holdout_months),
        ratio=_get(cp, "split", "ratio", float, base.ratio),
        repeats=_get(cp, "split", "repeats", int, base.repeats),
        gate=gate,
        gate_reference=_get(cp, "gate", "reference", str, base.gate_reference),
        ann=ann,
        svr=svr,
        stacker_hidden=_get(cp, "ensemble", "stacker_hidden", _int_tuple, base.stacker_hidden) or (),
        batch=_get(cp, "ensemble", "batch", int, base.batch),
        combiners=_get(cp, "ensemble", "combiners", _str_tuple, base.combiners),
        techniques=_get(cp, "ensemble", "techniques", _str_tuple, base.techniques),
        seed=_get(cp, "run", "seed", int, base.seed),
        max_formulas=_get(cp, "run", "max_formulas", _opt_int, base.max_formulas),
        out=_get(cp, "run", "out", str, base.out),
        threads=_get(cp, "run", "threads", int, base.threads),
    )
    config.validate()
    return config


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply `section.key=value` command-line overrides on top of a config."""
    if not overrides:
        return config
    text = to_ini(config)
    cp = configparser.ConfigParser()
    cp.read_string(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key must be section.key, got {key!r}")
        section, option = key.split(".", 1)
        if not cp.has_section(section.strip()):
            raise ConfigError(f"unknown config section {section!r}")
        cp.set(section.strip(), option.strip(), value.strip())
    buf = io.StringIO()
    cp.write(buf)
    return from_ini(buf.getvalue())


def config_digest(config: RunConfig) -> str:
    """Digest of the scientific configuration (out/threads excluded)."""
    neutral = replace(config, out="", threads=1)
    return hashlib.sha256(to_ini(neutral).encode("utf-8")).hexdigest()


def replace_config(config: RunConfig, **kwargs) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    bad = set(kwargs) - known
    if bad:
        raise ConfigError(f"unknown config fields: {sorted(bad)}")
    updated = replace(config, **kwargs)
    if "seed" in kwargs:
        updated = replace(updated, synth=replace(updated.synth, seed=kwargs["seed"]))
    updated.validate()
    return updated
