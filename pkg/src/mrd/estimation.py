"""Local-polynomial RD estimation along one score axis.

All functions take centered scores: the cutoff sits at 0, the treated side
is ``x > 0`` and the untreated side is ``x <= 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .learners import (
    FitReport,
    LearnerSpec,
    crossfit_classifier,
    crossfit_regression,
    resolve_learner,
)

Z_95 = float(norm.ppf(0.975))
WEAK_DENOMINATOR = 0.01
PILOT_MIN_OBS = 50


class EstimationError(RuntimeError):
    pass


class InsufficientDataError(EstimationError):
    pass


class BandwidthError(EstimationError):
    pass


class WeakIdentificationError(EstimationError):
    def __init__(self, jump_y: float, jump_d: float):
        self.jump_y = jump_y
        self.jump_d = jump_d
        super().__init__(
            f"weak identification: treatment jump {jump_d:.6g} below {WEAK_DENOMINATOR} "
            f"(outcome jump {jump_y:.6g})"
        )


class DirectionWarning(UserWarning):
    pass


def _triangular(u):
    return np.clip(1.0 - np.abs(u), 0.0, None)


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


KERNELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "triangular": _triangular,
    "uniform": _uniform,
    "epanechnikov": _epanechnikov,
}


def kernel_weights(x: np.ndarray, h: float, kernel: str = "triangular") -> np.ndarray:
    if h <= 0 or not np.isfinite(h):
        raise ValueError(f"bandwidth must be positive, got {h}")
    try:
        fn = KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None
    return fn(np.asarray(x, dtype=float) / h)


# ---------------------------------------------------------------------------
# weighted least squares with side-specific polynomials


@dataclass
class _SideFit:
    """Weighted polynomial fit with separate intercept/slope terms per side.

    ``rows`` maps each coefficient to its linear weights over the window
    rows, so every coefficient estimate is ``rows[j] @ v``.
    """

    idx: np.ndarray
    x: np.ndarray
    design: np.ndarray
    rows: np.ndarray
    p: int
    n_z: int

    def coef_row(self, side: str, power: int) -> np.ndarray:
        offset = 0 if side == "left" else self.p + 1
        return self.rows[offset + power]

    def jump_row(self) -> np.ndarray:
        return self.coef_row("right", 0) - self.coef_row("left", 0)

    def residuals(self, v: np.ndarray) -> np.ndarray:
        return v - self.design @ (self.rows @ v)

    @property
    def hc1(self) -> float:
        n, q = self.design.shape
        return n / (n - q) if n > q else 1.0


def _fit_sides(x: np.ndarray, k: np.ndarray, p: int, scale: float, z: np.ndarray | None = None) -> _SideFit:
    idx = np.flatnonzero(k > 0)
    xs = x[idx]
    right = xs > 0
    for name, mask in (("left", ~right), ("right", right)):
        if np.unique(xs[mask]).size < p + 1:
            raise InsufficientDataError(
                f"need at least {p + 1} distinct scores with positive kernel weight on the {name} side"
            )
    u = xs / scale
    cols = [np.where(~right, u**j, 0.0) for j in range(p + 1)]
    cols += [np.where(right, u**j, 0.0) for j in range(p + 1)]
    n_z = 0
    if z is not None and z.shape[1]:
        zw = z[idx]
        zw = zw - zw.mean(axis=0)
        keep = _independent_columns(np.column_stack(cols), zw, np.sqrt(k[idx]))
        zw = zw[:, keep]
        cols += list(zw.T)
        n_z = zw.shape[1]
    design = np.column_stack(cols)
    sw = np.sqrt(k[idx])
    q, r = np.linalg.qr(design * sw[:, None])
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise InsufficientDataError("local design is numerically singular")
    rows = linalg.solve_triangular(r, q.T) * sw[None, :]
    # coefficient rows are in u units; convert polynomial terms back to x units
    for j in range(p + 1):
        rows[j] /= scale**j
        rows[p + 1 + j] /= scale**j
    design = design.copy()
    for j in range(p + 1):
        design[:, j] *= scale**j
        design[:, p + 1 + j] *= scale**j
    return _SideFit(idx=idx, x=xs, design=design, rows=rows, p=p, n_z=n_z)


def _independent_columns(base: np.ndarray, z: np.ndarray, sw: np.ndarray) -> list[int]:
    keep: list[int] = []
    current = base * sw[:, None]
    tol = 1e-9
    for j in range(z.shape[1]):
        col = z[:, j] * sw
        norm_col = np.linalg.norm(col)
        if norm_col == 0:
            continue
        coef, *_ = np.linalg.lstsq(current, col, rcond=None)
        if np.linalg.norm(col - current @ coef) > tol * norm_col:
            keep.append(j)
            current = np.column_stack([current, col])
    return keep


@dataclass(frozen=True)
class LocalJump:
    jump: float
    se: float
    weights: np.ndarray
    residuals: np.ndarray
    n_left: int
    n_right: int


def local_linear_jump(x, v, kernel: str = "triangular", h: float = 1.0) -> LocalJump:
    """Jump at 0 between separate local-linear fits on each side.

    ``weights`` covers every input row (zero outside the window) and is
    signed, so ``jump == weights @ v``; within each side the weights sum
    to +1 (right) or -1 (left) and are orthogonal to ``x``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    k = kernel_weights(x, h, kernel)
    fit = _fit_sides(x, k, 1, h)
    w_local = fit.jump_row()
    resid = fit.residuals(v[fit.idx])
    weights = np.zeros_like(x)
    weights[fit.idx] = w_local
    residuals = np.zeros_like(x)
    residuals[fit.idx] = resid
    var = fit.hc1 * float(np.sum(w_local**2 * resid**2))
    right = fit.x > 0
    return LocalJump(
        jump=float(w_local @ v[fit.idx]),
        se=float(np.sqrt(var)),
        weights=weights,
        residuals=residuals,
        n_left=int((~right).sum()),
        n_right=int(right.sum()),
    )


def side_intercepts(x, v, kernel: str = "triangular", h: float = 1.0) -> tuple[float, float]:
    """Local-linear intercepts at 0 from the left and right samples."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    fit = _fit_sides(x, kernel_weights(x, h, kernel), 1, h)
    vw = v[fit.idx]
    return float(fit.coef_row("left", 0) @ vw), float(fit.coef_row("right", 0) @ vw)


# ---------------------------------------------------------------------------
# bias-corrected jumps shared by the sharp and fuzzy estimators


@dataclass
class _Core:
    h: float
    b: float
    w_h: np.ndarray
    w_bc: np.ndarray
    idx_h: np.ndarray
    idx_b: np.ndarray
    fit_h: _SideFit
    fit_b: _SideFit
    n_left: int
    n_right: int

    def conventional(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        vh = v[self.fit_h.idx]
        return float(self.w_h @ vh), self.fit_h.residuals(vh)

    def robust(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        vb = v[self.fit_b.idx]
        return float(self.w_bc @ vb), self.fit_b.residuals(vb)


def _core(x: np.ndarray, kernel: str, h: float, b: float, z: np.ndarray | None = None) -> _Core:
    fit_h = _fit_sides(x, kernel_weights(x, h, kernel), 1, h, z)
    fit_b = _fit_sides(x, kernel_weights(x, b, kernel), 2, b, z)
    w_h = fit_h.jump_row()
    # conventional weights expressed on the b-window rows
    pos = np.searchsorted(fit_b.idx, fit_h.idx)
    if not np.array_equal(fit_b.idx[pos], fit_h.idx):
        raise EstimationError("bias-correction window must contain the estimation window")
    w_on_b = np.zeros(fit_b.idx.size)
    w_on_b[pos] = w_h
    xb = fit_b.x
    right = xb > 0
    w_bc = w_on_b.copy()
    for side, mask in (("left", ~right), ("right", right)):
        moment = float(np.sum(w_on_b[mask] * xb[mask] ** 2))
        w_bc -= moment * fit_b.coef_row(side, 2)
    side_h = fit_h.x > 0
    return _Core(
        h=h,
        b=b,
        w_h=w_h,
        w_bc=w_bc,
        idx_h=fit_h.idx,
        idx_b=fit_b.idx,
        fit_h=fit_h,
        fit_b=fit_b,
        n_left=int((~side_h).sum()),
        n_right=int(side_h.sum()),
    )


# ---------------------------------------------------------------------------
# bandwidth


def _ll_weights_closed(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    s0, s1, s2 = k.sum(), (k * x).sum(), (k * x * x).sum()
    det = s0 * s2 - s1 * s1
    if not det > 1e-12 * s0 * s2:
        return np.full_like(x, np.nan)
    return k * (s2 - s1 * x) / det


def _pilot_poly(x: np.ndarray, v: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray, float]:
    scale = np.max(np.abs(x))
    design = np.vander(x / scale, p + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    resid = v - design @ coef
    bread = np.linalg.pinv(design.T @ design)
    meat = design.T @ (design * resid[:, None] ** 2)
    n, q = design.shape
    cov = bread @ meat @ bread * (n / max(n - q, 1))
    scales = scale ** np.arange(p + 1)
    return coef / scales, np.diag(cov) / scales**2, float(resid @ resid / max(n - q, 1))


def select_bandwidth(x, v, kernel: str = "triangular", spec: str | float = "mse") -> tuple[float, float]:
    """Return ``(h, b)`` with ``b = 1.5 h``.

    ``spec`` is either a fixed positive bandwidth or ``"mse"``, which
    minimises an exact-design MSE: squared bias from side-wise quadratic
    curvature, a penalty for the uncertainty of that curvature, and a
    variance built from side-wise residual variances.
    """
    if not isinstance(spec, str):
        h = float(spec)
        if not h > 0:
            raise BandwidthError(f"fixed bandwidth must be positive, got {spec}")
        return h, 1.5 * h
    if spec != "mse":
        raise BandwidthError(f"unknown bandwidth spec {spec!r}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    sd = float(np.std(x))
    if not sd > 0:
        raise BandwidthError("degenerate score distribution (zero spread)")
    n = x.size
    h_pilot = 1.84 * sd * n ** (-0.2)
    in_pilot = np.abs(x) <= h_pilot
    if in_pilot.sum() < PILOT_MIN_OBS:
        raise BandwidthError(
            f"only {int(in_pilot.sum())} observations in the pilot window; need {PILOT_MIN_OBS}"
        )
    sides = {"left": x <= 0, "right": x > 0}
    sigma2, curv, curv_var, side_x = {}, {}, {}, {}
    for name, mask in sides.items():
        near = mask & in_pilot
        wide = mask & (np.abs(x) <= 2 * h_pilot)
        if np.unique(x[near]).size < 3 or np.unique(x[wide]).size < 4:
            raise BandwidthError(f"too few distinct scores near the cutoff on the {name} side")
        _, _, sigma2[name] = _pilot_poly(x[near], v[near], 1)
        coef, var, _ = _pilot_poly(x[wide], v[wide], 2)
        curv[name], curv_var[name] = coef[2], var[2]
        side_x[name] = np.abs(x[mask])

    def mse(log_h: float) -> float:
        h = sd * np.exp(log_h)
        total_bias = total_var = reg = 0.0
        for name, mask in sides.items():
            xs = x[mask]
            k = kernel_weights(xs, h, kernel)
            keep = k > 0
            w = _ll_weights_closed(xs[keep], k[keep])
            moment = float(np.sum(w * xs[keep] ** 2))
            sign = 1.0 if name == "right" else -1.0
            total_bias += sign * moment * curv[name]
            reg += moment**2 * curv_var[name]
            total_var += sigma2[name] * float(np.sum(w * w))
        value = total_bias**2 + reg + total_var
        return value if np.isfinite(value) else np.inf

    def smallest_window(s):
        distinct = np.unique(s)
        return max(np.sort(s)[min(9, s.size - 1)], distinct[min(2, distinct.size - 1)])

    lo = max(smallest_window(s) for s in side_x.values()) * 1.01
    hi = min(s.max() for s in side_x.values())
    if not lo < hi:
        raise BandwidthError("score support too thin on one side of the cutoff")
    grid = np.linspace(np.log(lo / sd), np.log(hi / sd), 60)
    values = np.array([mse(g) for g in grid])
    best = int(np.argmin(values))
    left_edge, right_edge = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    res = minimize_scalar(mse, bounds=(left_edge, right_edge), method="bounded", options={"xatol": 1e-7})
    log_h = res.x if res.fun <= values[best] else grid[best]
    h = float(sd * np.exp(log_h))
    return h, 1.5 * h


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class RdEstimate:
    coef: float
    se: float
    ci_low: float
    ci_high: float
    h: float
    b: float
    n_left: int
    n_right: int
    design: str
    subset: bool = False
    coef_conventional: float = float("nan")
    se_conventional: float = float("nan")
    jump_d: float | None = None
    method: str = ""
    first_stage: FitReport | None = None

    def as_row(self) -> dict:
        row = asdict(self)
        fs = row.pop("first_stage") or {}
        for key in ("rmse_left", "logloss_left", "rmse_right", "logloss_right"):
            row[key] = fs.get(key) if fs else None
        return row


def _covariate_columns(panel: pd.DataFrame, covariates: Sequence[str] | None) -> list[str]:
    if covariates is not None:
        return list(covariates)
    return [c for c in panel.columns if c.startswith("z_")]


def _check_direction(panel: pd.DataFrame, axis: str, h: float) -> None:
    if "t" not in panel.columns:
        return
    x = panel[axis].to_numpy(float)
    t = panel["t"].to_numpy(float)
    above = t[(x > 0) & (x < h)]
    below = t[(x > -h) & (x <= 0)]
    if above.size and below.size and not above.mean() > below.mean():
        warnings.warn(
            f"assignment does not increase across the cutoff on axis {axis!r} "
            f"({below.mean():.3f} below vs {above.mean():.3f} above)",
            DirectionWarning,
            stacklevel=3,
        )


def _ci(coef: float, se: float) -> tuple[float, float]:
    return coef - Z_95 * se, coef + Z_95 * se


def _estimate(
    panel: pd.DataFrame,
    axis: str,
    design: str,
    outcome: str,
    treatment: str,
    kernel: str,
    bandwidth,
    learner,
    covariates,
    seed: int,
    id_column: str,
    check_direction: bool,
    subset: bool,
) -> RdEstimate:
    spec = resolve_learner(learner)
    x = panel[axis].to_numpy(float)
    y = panel[outcome].to_numpy(float)
    d = panel[treatment].to_numpy(float) if design == "fuzzy" else None
    h, b = select_bandwidth(x, y, kernel, bandwidth)
    if check_direction:
        _check_direction(panel, axis, h)
    zcols = _covariate_columns(panel, covariates)
    z = panel[zcols].to_numpy(float) if zcols else np.empty((len(panel), 0))
    report = None
    z_linear = None
    if spec.kind == "linear":
        z_linear = z
    elif spec.kind != "none":
        ids = panel[id_column].to_numpy() if id_column in panel.columns else np.arange(len(panel))
        feats = np.column_stack([z, x]) if spec.include_score else z
        window = np.abs(x) <= b if spec.local else np.ones(x.size, bool)
        eta, report = crossfit_regression(feats, y, spec, ids=ids, side=x > 0, window=window, seed=seed)
        y = y - eta
        if d is not None:
            p_hat, report_d = crossfit_classifier(feats, d, spec, ids=ids, side=x > 0, window=window, seed=seed)
            d = d - p_hat
            report = replace(report, logloss_left=report_d.logloss_left, logloss_right=report_d.logloss_right)
    core = _core(x, kernel, h, b, z_linear)
    jy_conv, ey_h = core.conventional(y)
    jy_bc, ey_b = core.robust(y)
    if d is None:
        coef, coef_conv = jy_bc, jy_conv
        se = np.sqrt(core.fit_b.hc1 * np.sum(core.w_bc**2 * ey_b**2))
        se_conv = np.sqrt(core.fit_h.hc1 * np.sum(core.w_h**2 * ey_h**2))
        jump_d = None
    else:
        jd_conv, ed_h = core.conventional(d)
        jd_bc, ed_b = core.robust(d)
        if abs(jd_bc) < WEAK_DENOMINATOR or abs(jd_conv) < WEAK_DENOMINATOR:
            raise WeakIdentificationError(jy_bc, jd_bc)
        coef, coef_conv = jy_bc / jd_bc, jy_conv / jd_conv
        infl_b = (ey_b - coef * ed_b) / jd_bc
        infl_h = (ey_h - coef_conv * ed_h) / jd_conv
        se = np.sqrt(core.fit_b.hc1 * np.sum(core.w_bc**2 * infl_b**2))
        se_conv = np.sqrt(core.fit_h.hc1 * np.sum(core.w_h**2 * infl_h**2))
        jump_d = jd_bc
    lo, hi = _ci(coef, float(se))
    return RdEstimate(
        coef=float(coef),
        se=float(se),
        ci_low=float(lo),
        ci_high=float(hi),
        h=h,
        b=b,
        n_left=core.n_left,
        n_right=core.n_right,
        design=design,
        subset=subset,
        coef_conventional=float(coef_conv),
        se_conventional=float(se_conv),
        jump_d=jump_d,
        method=spec.label,
        first_stage=report,
    )


def sharp_estimate(
    panel: pd.DataFrame,
    axis: str = "x_d",
    *,
    outcome: str = "y",
    kernel: str = "triangular",
    bandwidth: str | float = "mse",
    learner: LearnerSpec | str | None = None,
    covariates: Sequence[str] | None = None,
    seed: int = 0,
    id_column: str = "lot_id",
    check_direction: bool = True,
    subset: bool = False,
) -> RdEstimate:
    """Outcome jump at the cutoff with a robust bias-corrected CI.

    ``coef`` is the bias-corrected jump and ``se`` its robust standard
    error; the uncorrected values are kept as ``coef_conventional`` and
    ``se_conventional``.
    """
    return _estimate(
        panel, axis, "sharp", outcome, "d", kernel, bandwidth, learner,
        covariates, seed, id_column, check_direction, subset,
    )


def fuzzy_estimate(
    panel: pd.DataFrame,
    axis: str = "x_d",
    *,
    outcome: str = "y",
    treatment: str = "d",
    kernel: str = "triangular",
    bandwidth: str | float = "mse",
    learner: LearnerSpec | str | None = None,
    covariates: Sequence[str] | None = None,
    seed: int = 0,
    id_column: str = "lot_id",
    check_direction: bool = True,
    subset: bool = False,
) -> RdEstimate:
    """Wald ratio of the outcome jump to the treatment jump.

    Both jumps share one bandwidth, chosen on the outcome, so the ratio
    collapses to the sharp estimate when treatment jumps by exactly one.
    """
    return _estimate(
        panel, axis, "fuzzy", outcome, treatment, kernel, bandwidth, learner,
        covariates, seed, id_column, check_direction, subset,
    )


def subset_estimate(panel: pd.DataFrame, axis: str, mask, design: str = "fuzzy", **kwargs) -> RdEstimate:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(panel),):
        raise ValueError("subset mask must have one entry per panel row")
    fn = {"sharp": sharp_estimate, "fuzzy": fuzzy_estimate}.get(design)
    if fn is None:
        raise ValueError(f"unknown design {design!r}")
    sub = panel.loc[mask] if not mask.all() else panel
    return fn(sub, axis, subset=not mask.all(), **kwargs)


# ---------------------------------------------------------------------------
# two-dimensional reductions


def binding_score(
    panel: pd.DataFrame,
    columns: Sequence[str] = ("x_d", "x_y"),
    rule: str = "and",
    scale: Sequence[float] | None = None,
) -> pd.Series:
    """Collapse centered scores to one axis: min for AND rules, max for OR."""
    values = panel[list(columns)].to_numpy(float)
    if scale is None:
        scale = values.std(axis=0)
    scale = np.asarray(scale, dtype=float)
    if np.any(scale == 0):
        raise ValueError("zero normalizer in binding score")
    normed = values / scale
    if rule == "and":
        out = normed.min(axis=1)
    elif rule == "or":
        out = normed.max(axis=1)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return pd.Series(out, index=panel.index, name="x_bind")


def euclidean_score(
    panel: pd.DataFrame,
    columns: Sequence[str] = ("x_d", "x_y"),
    point: Sequence[float] = (0.0, 0.0),
    rule: str = "and",
) -> pd.Series:
    """Signed distance to a frontier point, positive on the treated side."""
    offset = panel[list(columns)].to_numpy(float) - np.asarray(point, dtype=float)
    dist = np.sqrt((offset**2).sum(axis=1))
    treated = offset.min(axis=1) > 0 if rule == "and" else offset.max(axis=1) > 0
    return pd.Series(np.where(treated, dist, -dist), index=panel.index, name="x_euclid")


# ---------------------------------------------------------------------------
# validation and plot data


def pseudo_cutoff_test(
    panel: pd.DataFrame,
    axis: str,
    shifts: Sequence[float],
    design: str = "sharp",
    **kwargs,
) -> pd.DataFrame:
    """Estimates at shifted cutoffs using only the sample on the shift's side.

    A shift of 0 reproduces the main estimate on the full sample.
    """
    fn = sharp_estimate if design == "sharp" else fuzzy_estimate
    rows = []
    for s in sorted(float(v) for v in shifts):
        if s == 0:
            est = fn(panel, axis, **kwargs)
        else:
            side = panel[axis] > 0 if s > 0 else panel[axis] <= 0
            sub = panel.loc[side].copy()
            sub[axis] = sub[axis] - s
            est = fn(sub, axis, check_direction=False, **kwargs)
        rows.append({"cutoff": s, "coef": est.coef, "ci_low": est.ci_low, "ci_high": est.ci_high,
                     "se": est.se, "h": est.h})
    return pd.DataFrame(rows)


def rd_plot_data(
    panel: pd.DataFrame,
    axis: str = "x_d",
    outcome: str = "y",
    bins: int = 20,
    kernel: str = "triangular",
    h: float | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Binned means per side within ``[-h, h]`` plus the two fitted lines."""
    if bins < 2:
        raise ValueError("need at least 2 bins per side")
    x = panel[axis].to_numpy(float)
    y = panel[outcome].to_numpy(float)
    if h is None:
        h, _ = select_bandwidth(x, y, kernel)
    edges = np.linspace(0.0, h, bins + 1)
    rows = []
    for side in ("left", "right"):
        for j in range(bins):
            if side == "right":
                lo, hi = edges[j], edges[j + 1]
                mask = (x > lo) & (x <= hi)
            else:
                lo, hi = -edges[bins - j], -edges[bins - j - 1]
                mask = (x >= lo) & (x < hi) if j < bins - 1 else (x >= lo) & (x <= hi)
            count = int(mask.sum())
            rows.append({
                "side": side,
                "bin_low": lo,
                "bin_high": hi,
                "center": 0.5 * (lo + hi),
                "count": count,
                "mean": float(y[mask].mean()) if count else np.nan,
            })
    fit = _fit_sides(x, kernel_weights(x, h, kernel), 1, h)
    yw = y[fit.idx]
    lines = []
    for side, x0, x1 in (("left", -h, 0.0), ("right", 0.0, h)):
        a = float(fit.coef_row(side, 0) @ yw)
        s = float(fit.coef_row(side, 1) @ yw)
        lines.append({"side": side, "x_start": x0, "x_end": x1, "y_start": a + s * x0, "y_end": a + s * x1})
    return pd.DataFrame(rows), pd.DataFrame(lines)
