"""Repeated-simulation experiments, evaluation metrics and result tables."""

from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd

from .categories import subset_mask
from .config import canonical_json
from .dgp import AXES, ConfigError, LotConfig, OperatorPolicy, oracle_effect, simulate_panel, smooth_sharp_panel
from .estimation import DirectionWarning, sharp_estimate, fuzzy_estimate
from .learners import LearnerError, LearnerSpec, resolve_learner

# units excluded for the subset estimators; all of them are nevertakers
# for the axis in question under every shipped policy
SUBSET_RULES = {"D": "x_y <= 0", "Y": "x_d <= 0"}
DESIGNS = ("fuzzy", "sharp")
DGPS = ("led", "smooth")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothConfig:
    jump: float = 0.2
    noise_sd: float = 0.2
    covariate_signal: float = 0.0
    n_covariates: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    r: int = 250
    n_lots: int = 10_000
    policy: str = "cautious"
    axes: tuple[str, ...] = ("D",)
    designs: tuple[str, ...] = DESIGNS
    subsets: tuple[bool, ...] = (False, True)
    learners: tuple[LearnerSpec, ...] = (LearnerSpec(),)
    kernel: str = "triangular"
    bandwidth: str | float = "mse"
    dgp: str = "led"
    lot: LotConfig = field(default_factory=LotConfig)
    smooth: SmoothConfig = field(default_factory=SmoothConfig)

    def __post_init__(self):
        if self.r < 1:
            raise ConfigError("experiment.r: must be at least 1")
        if self.n_lots < 1:
            raise ConfigError("experiment.n_lots: must be at least 1")
        if self.dgp not in DGPS:
            raise ConfigError(f"experiment.dgp: expected one of {DGPS}, got {self.dgp!r}")
        OperatorPolicy.parse(self.policy)
        if not self.axes or any(a not in AXES for a in self.axes):
            raise ConfigError(f"experiment.axes: expected a non-empty subset of {sorted(AXES)}")
        if not self.designs or any(d not in DESIGNS for d in self.designs):
            raise ConfigError(f"experiment.designs: expected a non-empty subset of {DESIGNS}")
        if not self.subsets or not self.learners:
            raise ConfigError("experiment: estimator grid is empty")
        if self.dgp == "smooth" and any(self.subsets):
            raise ConfigError("experiment.subsets: the smooth design has no exclusion set")

    @property
    def cells(self) -> list[tuple[str, str, bool, LearnerSpec]]:
        axes = ("X",) if self.dgp == "smooth" else self.axes
        return [(a, d, s, l) for a in axes for d in self.designs for s in self.subsets for l in self.learners]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["axes"] = list(self.axes)
        d["designs"] = list(self.designs)
        d["subsets"] = list(self.subsets)
        d["learners"] = [_learner_dict(l) for l in self.learners]
        d["lot"] = self.lot.to_dict()
        d["smooth"] = asdict(self.smooth)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"experiment.{unknown[0]}: unknown field")
        try:
            for key in ("axes", "designs"):
                if key in d:
                    d[key] = tuple(str(v) for v in _as_list(d[key]))
            if "subsets" in d:
                d["subsets"] = tuple(bool(v) for v in _as_list(d["subsets"]))
            if "learners" in d:
                d["learners"] = tuple(resolve_learner(l) for l in _as_list(d["learners"]))
            for key in ("seed", "r", "n_lots"):
                if key in d:
                    d[key] = int(d[key])
            if "bandwidth" in d and not isinstance(d["bandwidth"], str):
                d["bandwidth"] = float(d["bandwidth"])
        except LearnerError as exc:
            raise ConfigError(f"experiment.learners: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment: {exc}") from None
        d["lot"] = LotConfig.from_dict(d.get("lot"))
        smooth = dict(d.get("smooth") or {})
        bad = sorted(set(smooth) - {f.name for f in fields(SmoothConfig)})
        if bad:
            raise ConfigError(f"experiment.smooth.{bad[0]}: unknown field")
        d["smooth"] = SmoothConfig(**smooth)
        return cls(**d)


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _learner_dict(spec: LearnerSpec) -> dict:
    default = LearnerSpec(kind=spec.kind)
    out = {"kind": spec.kind}
    for f in fields(spec):
        val = getattr(spec, f.name)
        if f.name != "kind" and val != getattr(default, f.name):
            out[f.name] = list(val) if isinstance(val, tuple) else val
    return out


def rep_seed(master: int, rep: int) -> int:
    """Seed of one repetition, split from the master seed by counter."""
    return int(np.random.SeedSequence([master, rep]).generate_state(1, np.uint32)[0])


def setting_name(design: str, subset: bool) -> str:
    return design.title() + (" Subset" if subset else "")


def simulate_rep(cfg: ExperimentConfig, rep: int) -> pd.DataFrame:
    seed = rep_seed(cfg.seed, rep)
    if cfg.dgp == "smooth":
        s = cfg.smooth
        return smooth_sharp_panel(seed, cfg.n_lots, s.jump, s.noise_sd, s.covariate_signal, s.n_covariates)
    return simulate_panel(seed, cfg.n_lots, cfg.lot, cfg.policy)


def _oracle(cfg, panel, axis, design, keep) -> float:
    if cfg.dgp == "smooth":
        return cfg.smooth.jump
    estimand = "complier" if design == "fuzzy" else "itt"
    return oracle_effect(panel, axis, estimand, cfg.policy, cfg.kernel, mask=keep)


def run_rep(cfg: ExperimentConfig, rep: int) -> list[dict]:
    """Every estimator of the grid on one simulated panel."""
    seed = rep_seed(cfg.seed, rep)
    panel = simulate_rep(cfg, rep)
    rows = []
    oracles: dict = {}
    masks: dict = {}
    for cell, (axis, design, subset, spec) in enumerate(cfg.cells):
        col = "x" if axis == "X" else AXES[axis][0]
        row = {"rep": rep, "cell": cell, "axis": axis, "setting": setting_name(design, subset),
               "method": spec.label, "status": "ok", "error": ""}
        try:
            if (axis, subset) not in masks:
                masks[axis, subset] = subset_mask(panel, SUBSET_RULES[axis] if subset else None)
            keep = masks[axis, subset]
            key = (axis, design, subset)
            if key not in oracles:
                try:
                    oracles[key] = _oracle(cfg, panel, axis, design, keep)
                except Exception as exc:  # recorded, then reraised per cell
                    oracles[key] = exc
            if isinstance(oracles[key], Exception):
                raise oracles[key]
            est_fn = fuzzy_estimate if design == "fuzzy" else sharp_estimate
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DirectionWarning)
                est = est_fn(panel.loc[keep] if subset else panel, col, kernel=cfg.kernel,
                             bandwidth=cfg.bandwidth, learner=spec, seed=seed, subset=subset)
            fs = est.as_row()
            row.update(coef=est.coef, se=est.se, ci_low=est.ci_low, ci_high=est.ci_high, h=est.h,
                       n_left=est.n_left, n_right=est.n_right, jump_d=est.jump_d, oracle=oracles[key],
                       rmse_left=fs["rmse_left"], logloss_left=fs["logloss_left"],
                       rmse_right=fs["rmse_right"], logloss_right=fs["logloss_right"])
        except Exception as exc:
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


RAW_COLUMNS = ["rep", "cell", "axis", "setting", "method", "status", "error", "coef", "se", "ci_low", "ci_high",
               "h", "n_left", "n_right", "jump_d", "oracle", "rmse_left", "logloss_left", "rmse_right",
               "logloss_right"]


@dataclass(frozen=True)
class MetricsRow:
    axis: str
    setting: str
    method: str
    mean_bias: float
    se_est_mean: float
    se_empirical: float
    coverage: float
    rmse_left: float | None
    logloss_left: float | None
    rmse_right: float | None
    logloss_right: float | None
    coverage_grand: float
    mean_estimate: float
    mean_oracle: float
    n_ok: int
    n_failed: int


METRIC_COLUMNS = [f.name for f in fields(MetricsRow)]


def _mean_or_none(cell: pd.DataFrame, col: str):
    if col not in cell:
        return None
    vals = pd.to_numeric(cell[col], errors="coerce").dropna()
    return float(vals.mean()) if len(vals) else None


def compute_metrics(cell: pd.DataFrame, axis: str = "", setting: str = "", method: str = "") -> MetricsRow:
    """Aggregate one (axis, setting, method) cell; failed reps are counted, not used."""
    status = cell["status"] if "status" in cell else pd.Series("ok", index=cell.index)
    ok = cell[status == "ok"]
    n_failed = int(len(cell) - len(ok))
    if ok.empty:
        raise MetricsError(f"all {len(cell)} repetitions failed")
    est = ok["coef"].to_numpy(float)
    orc = ok["oracle"].to_numpy(float)
    if est.shape != orc.shape:
        raise MetricsError("estimates and oracles differ in length")
    lo, hi = ok["ci_low"].to_numpy(float), ok["ci_high"].to_numpy(float)
    grand = orc.mean()
    return MetricsRow(
        axis=axis,
        setting=setting,
        method=method,
        mean_bias=float(np.mean(est - orc)),
        se_est_mean=float(ok["se"].to_numpy(float).mean()),
        # centering on one draw keeps the sd of identical estimates exactly 0
        se_empirical=float((est - est[0]).std(ddof=1)) if est.size > 1 else float("nan"),
        coverage=float(np.mean((lo <= orc) & (orc <= hi))),
        rmse_left=_mean_or_none(ok, "rmse_left"),
        logloss_left=_mean_or_none(ok, "logloss_left"),
        rmse_right=_mean_or_none(ok, "rmse_right"),
        logloss_right=_mean_or_none(ok, "logloss_right"),
        coverage_grand=float(np.mean((lo <= grand) & (grand <= hi))),
        mean_estimate=float(est.mean()),
        mean_oracle=float(grand),
        n_ok=int(est.size),
        n_failed=n_failed,
    )


def summarize(raw: pd.DataFrame) -> list[MetricsRow]:
    """Metrics per cell; rows are put in (cell, rep) order first, so the
    input order (e.g. worker completion order) cannot change the result."""
    keys = [k for k in ("cell", "rep") if k in raw]
    if keys:
        raw = raw.sort_values(keys, kind="stable")
    out = []
    for (axis, setting, method), cell in raw.groupby(["axis", "setting", "method"], sort=False):
        try:
            out.append(compute_metrics(cell, axis, setting, method))
        except MetricsError:
            nan = float("nan")
            out.append(MetricsRow(axis, setting, method, nan, nan, nan, nan, None, None, None, None,
                                  nan, nan, nan, 0, len(cell)))
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    metrics: list[MetricsRow]
    raw: pd.DataFrame

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(m) for m in self.metrics], columns=METRIC_COLUMNS)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run all repetitions; results do not depend on ``workers``."""
    job = partial(run_rep, cfg)
    if workers > 1 and cfg.r > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.r)) as pool:
            chunks = list(pool.map(job, range(cfg.r), chunksize=max(1, cfg.r // (4 * workers))))
    else:
        chunks = [job(rep) for rep in range(cfg.r)]
    rows = [row for chunk in chunks for row in chunk]
    raw = pd.DataFrame(rows).reindex(columns=RAW_COLUMNS)
    raw = raw.sort_values(["rep", "cell"], kind="stable").reset_index(drop=True)
    return ExperimentReport(cfg, summarize(raw), raw)


def _blank(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _fmt(v, digits: int = 4) -> str:
    if _blank(v):
        return ""
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def emit_table(report, fmt: str = "csv") -> bytes:
    """Render metrics as csv, json or markdown with a fixed column order."""
    metrics = report.metrics if isinstance(report, ExperimentReport) else list(report)
    records = [asdict(m) for m in metrics]
    if fmt == "csv":
        frame = pd.DataFrame(records, columns=METRIC_COLUMNS)
        buf = io.StringIO()
        frame.to_csv(buf, index=False, na_rep="", lineterminator="\n")
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        return canonical_json(records).encode("utf-8")
    if fmt == "markdown":
        lines = ["| " + " | ".join(METRIC_COLUMNS) + " |", "|" + "---|" * len(METRIC_COLUMNS)]
        for rec in records:
            lines.append("| " + " | ".join(_fmt(rec[c]) for c in METRIC_COLUMNS) + " |")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown table format {fmt!r}; choose csv, json or markdown")


def write_report(report: ExperimentReport, out_dir, plot: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "raw": out / "estimates_raw.csv"}
    paths["metrics"].write_bytes(emit_table(report, "csv"))
    buf = io.StringIO()
    report.raw.to_csv(buf, index=False, na_rep="", lineterminator="\n")
    paths["raw"].write_text(buf.getvalue(), encoding="utf-8")
    if plot:
        from .plotting import plot_mc_errors

        paths["plot"] = plot_mc_errors(report.raw, out / "mc_errors.png")
    return paths
