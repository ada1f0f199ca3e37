"""Semi-synthetic wLED rework process with operator policies and oracles.

Color points live in a 2D plane. A lot's items scatter around a lot mean
that falls short of the target along the conversion direction; rework
shifts every item along that direction. Yield is the share of items in an
axis-aligned box around the target.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
import pandas as pd

from .categories import classify_cutoff_many, classify_general_many
from .estimation import kernel_weights, select_bandwidth, side_intercepts
from .rules import parse_rule


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class OperatorPolicy(str, enum.Enum):
    ACKNOWLEDGING = "acknowledging"
    CAUTIOUS = "cautious"
    REASONABLE = "reasonable"

    @classmethod
    def parse(cls, value) -> "OperatorPolicy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise ConfigError(f"policy: unknown operator policy {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class LotConfig:
    n_items: int = 784
    m: int = 8
    target: tuple[float, float] = (0.0, 0.0)
    spec_halfwidths: tuple[float, float] = (1.0, 1.0)
    conversion_slope: tuple[float, float] = (0.6, 0.8)
    mean_shortfall: float = 0.6
    lot_mean_spread: float = 0.6
    off_curve_spread: float = 0.35
    within_lot_spread: float = 0.45
    within_spread_cv: float = 0.3
    rework_noise_sd: float = 0.4
    dispersion_inflation: float = 1.15
    max_shift: float | None = None
    c_d: float = 0.45
    c_y: float = 0.045

    def __post_init__(self):
        def fail(name, msg):
            raise ConfigError(f"lot.{name}: {msg}")

        if self.n_items < 1:
            fail("n_items", "must be at least 1")
        if not 1 <= self.m <= self.n_items:
            fail("m", "must satisfy 1 <= m <= n_items")
        for name in ("lot_mean_spread", "off_curve_spread", "within_lot_spread", "within_spread_cv",
                     "rework_noise_sd"):
            if getattr(self, name) < 0:
                fail(name, "must be non-negative")
        if self.dispersion_inflation < 0:
            fail("dispersion_inflation", "must be non-negative")
        if any(w <= 0 for w in self.spec_halfwidths):
            fail("spec_halfwidths", "must be positive")
        if len(self.target) != 2 or len(self.spec_halfwidths) != 2 or len(self.conversion_slope) != 2:
            fail("target", "target, spec_halfwidths and conversion_slope must be 2D")
        if np.hypot(*self.conversion_slope) == 0:
            fail("conversion_slope", "must be a nonzero vector")
        if self.max_shift is not None and self.max_shift < 0:
            fail("max_shift", "must be non-negative")

    @property
    def direction(self) -> np.ndarray:
        u = np.asarray(self.conversion_slope, dtype=float)
        return u / np.linalg.norm(u)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("target", "spec_halfwidths", "conversion_slope"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "LotConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"lot.{unknown[0]}: unknown field")
        for key in ("target", "spec_halfwidths", "conversion_slope"):
            if key in d:
                try:
                    d[key] = tuple(float(v) for v in d[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"lot.{key}: expected a pair of numbers") from None
        for key, val in d.items():
            if key in ("target", "spec_halfwidths", "conversion_slope") or val is None:
                continue
            try:
                d[key] = int(val) if key in ("n_items", "m") else float(val)
            except (TypeError, ValueError):
                raise ConfigError(f"lot.{key}: expected a number, got {val!r}") from None
        return cls(**d)


@dataclass(frozen=True)
class Lot:
    color_points: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.color_points.mean(axis=0)


def generate_lot(rng: np.random.Generator, cfg: LotConfig) -> Lot:
    u = cfg.direction
    perp = np.array([-u[1], u[0]])
    shortfall = cfg.mean_shortfall + cfg.lot_mean_spread * rng.standard_normal()
    off = cfg.off_curve_spread * rng.standard_normal()
    center = np.asarray(cfg.target, dtype=float) - shortfall * u + off * perp
    spread = cfg.within_lot_spread * np.exp(cfg.within_spread_cv * rng.standard_normal())
    points = center + spread * rng.standard_normal((cfg.n_items, 2))
    return Lot(points)


def distance_score(lot: Lot, cfg: LotConfig) -> float:
    """Signed distance from the lot mean to the closest reachable target point.

    Positive values mean the lot still falls short along the conversion
    direction, so larger scores indicate rework.
    """
    return float((np.asarray(cfg.target) - lot.mean) @ cfg.direction)


def _inside_counts(points: np.ndarray, cfg: LotConfig) -> np.ndarray:
    dev = np.abs(points - np.asarray(cfg.target))
    inside = (dev[..., 0] <= cfg.spec_halfwidths[0]) & (dev[..., 1] <= cfg.spec_halfwidths[1])
    return inside.sum(axis=-1)


def yield_criteria(points, cfg: LotConfig) -> float:
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] == 0:
        return 0.0
    return float(_inside_counts(pts, cfg) / pts.shape[0])


def _shift_intervals(points: np.ndarray, cfg: LotConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per item, the range of shifts s along the direction that lands it in the box."""
    u = cfg.direction
    lo = np.full(points.shape[:-1], -np.inf)
    hi = np.full(points.shape[:-1], np.inf)
    for c in range(2):
        a = cfg.target[c] - cfg.spec_halfwidths[c] - points[..., c]
        b = cfg.target[c] + cfg.spec_halfwidths[c] - points[..., c]
        if u[c] == 0:
            bad = (a > 0) | (b < 0)
            lo[bad], hi[bad] = np.inf, -np.inf
        else:
            s1, s2 = a / u[c], b / u[c]
            lo = np.maximum(lo, np.minimum(s1, s2))
            hi = np.minimum(hi, np.maximum(s1, s2))
    return lo, hi


def _optimal_shifts(points: np.ndarray, cfg: LotConfig) -> np.ndarray:
    """Batched sweep over lots of shape (lots, items, 2)."""
    cap = np.inf if cfg.max_shift is None else cfg.max_shift
    lo, hi = _shift_intervals(points, cfg)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, cap)
    ok = lo <= hi
    # start events precede end events at equal positions (stable sort)
    pos = np.concatenate([np.where(ok, lo, np.inf), np.where(ok, hi, np.inf)], axis=1)
    sign = np.concatenate([ok.astype(np.int64), -ok.astype(np.int64)], axis=1)
    order = np.argsort(pos, axis=1, kind="stable")
    pos = np.take_along_axis(pos, order, axis=1)
    cover = np.cumsum(np.take_along_axis(sign, order, axis=1), axis=1)
    j = np.argmax(cover, axis=1)
    rows = np.arange(points.shape[0])
    a = pos[rows, j]
    e = pos[rows, np.minimum(j + 1, pos.shape[1] - 1)]
    shifts = np.where(np.isfinite(e), 0.5 * (a + e), a)
    # no item can reach the box: move the mean as far as the direction allows
    fallback = np.clip((np.asarray(cfg.target) - points.mean(axis=1)) @ cfg.direction, 0.0, cap)
    return np.where(ok.any(axis=1), shifts, fallback)


def optimal_shift(lot: Lot, cfg: LotConfig) -> float:
    """Yield-maximizing shift along the conversion direction.

    Exact sweep over item intervals; the lowest maximal-coverage segment
    is chosen and its midpoint returned.
    """
    return float(_optimal_shifts(lot.color_points[None], cfg)[0])


def optimal_rework(lot: Lot, cfg: LotConfig) -> Lot:
    return Lot(lot.color_points + optimal_shift(lot, cfg) * cfg.direction)


def _realize(points: np.ndarray, shift, jitter: np.ndarray, cfg: LotConfig) -> np.ndarray:
    mean = points.mean(axis=-2, keepdims=True)
    move = np.asarray(shift)[..., None, None] * cfg.direction + jitter[..., None, :]
    return mean + move + cfg.dispersion_inflation * (points - mean)


def noisy_rework(lot: Lot, rng: np.random.Generator, cfg: LotConfig, shift: float | None = None) -> Lot:
    """Realized rework: noisy shift vector and inflated within-lot spread."""
    s = optimal_shift(lot, cfg) if shift is None else shift
    jitter = cfg.rework_noise_sd * rng.standard_normal(2)
    return Lot(_realize(lot.color_points, s, jitter, cfg))


def _gain(before: np.ndarray, after: np.ndarray, cfg: LotConfig) -> np.ndarray:
    # integer counts keep equal gains bit-identical across lots
    return (_inside_counts(after, cfg) - _inside_counts(before, cfg)) / before.shape[-2]


def improvement_scores(lot: Lot, reworked: Lot, cfg: LotConfig) -> tuple[float, float, float]:
    """Raw ``(x_y, x_e, x_r)``: measured-subsample and full-lot yield gains."""
    before, after = lot.color_points, reworked.color_points
    x_y = float(_gain(before[:: cfg.m], after[:: cfg.m], cfg))
    x_e = float(_gain(before, after, cfg))
    return x_y, x_e, x_e - x_y


def operator_decision(policy, i_d, x_y, x_e, c_y: float = 0.0):
    """Actual rework decision given the distance indicator and yield scores."""
    policy = OperatorPolicy.parse(policy)
    i_d = np.asarray(i_d, dtype=bool)
    i_y = np.asarray(x_y) > c_y
    i_e = np.asarray(x_e) > c_y
    if policy is OperatorPolicy.ACKNOWLEDGING:
        out = i_d & i_y
    elif policy is OperatorPolicy.CAUTIOUS:
        out = i_d & i_y & i_e
    else:
        out = i_d & i_e
    return out if out.ndim else bool(out)


# ---------------------------------------------------------------------------
# panels


def _lot_draws(seed: int, index: int, cfg: LotConfig) -> tuple[np.ndarray, np.ndarray, float]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    points = generate_lot(rng, cfg).color_points
    jitter = cfg.rework_noise_sd * rng.standard_normal(2)
    return points, jitter, float(rng.standard_normal())


def _lot_records(seed: int, indices: range, cfg: LotConfig) -> np.ndarray:
    draws = [_lot_draws(seed, i, cfg) for i in indices]
    points = np.stack([d[0] for d in draws])
    jitter = np.stack([d[1] for d in draws])
    workload = np.array([d[2] for d in draws])
    shifts = _optimal_shifts(points, cfg)
    best = points + shifts[:, None, None] * cfg.direction
    realized = _realize(points, shifts, jitter, cfg)
    target = np.asarray(cfg.target)
    measured = points[:, :: cfg.m]
    x_d = (target - points.mean(axis=1)) @ cfg.direction
    x_y = _gain(measured, best[:, :: cfg.m], cfg)
    x_e = _gain(points, best, cfg)
    y0 = _inside_counts(points, cfg) / cfg.n_items
    y1 = _inside_counts(realized, cfg) / cfg.n_items
    offset = measured.mean(axis=1) - target
    excess = np.maximum(np.abs(measured - target) - np.asarray(cfg.spec_halfwidths), 0.0)
    z = np.column_stack([
        measured.std(axis=1).mean(axis=1),
        _inside_counts(measured, cfg) / measured.shape[1],
        np.sqrt((excess**2).sum(axis=2)).mean(axis=1),
        offset,
        workload,
    ])
    return np.column_stack([x_d, x_y, x_e, y0, y1, z])


POLICY_RULES = {
    # scores (x_d, x_y, x_e); T = I_D & I_Y
    OperatorPolicy.ACKNOWLEDGING: "I1 & I2",
    OperatorPolicy.CAUTIOUS: "I1 & I2 & I3",
}


def _reasonable_decision(u: np.ndarray) -> np.ndarray:
    # scores (x_d, x_y, x_r): the estimate x_e = x_y + x_r drives the decision
    return (u[:, 0] > 0) & (u[:, 1] + u[:, 2] > 0)


def policy_categories(panel: pd.DataFrame, policy) -> dict[str, np.ndarray]:
    """Categories of (T, D), (I_D, D) and (I_Y, D) for every row."""
    policy = OperatorPolicy.parse(policy)
    rules = {"category": "I1 & I2", "category_d": "I1", "category_y": "I2"}
    out = {}
    if policy is OperatorPolicy.REASONABLE:
        x = panel[["x_d", "x_y", "x_r"]].to_numpy(float)
        for col, text in rules.items():
            out[col] = classify_general_many(parse_rule(text, 3), _reasonable_decision, x)
    else:
        x = panel[["x_d", "x_y", "x_e"]].to_numpy(float)
        d = parse_rule(POLICY_RULES[policy], 3)
        for col, text in rules.items():
            out[col] = classify_cutoff_many(parse_rule(text, 3), d, x)
    return out


N_COVARIATES = 6


def simulate_panel(seed: int, n_lots: int, cfg: LotConfig | None = None, policy="cautious",
                   classify: bool = True) -> pd.DataFrame:
    """Run the rework process for ``n_lots`` lots with centered scores.

    Each lot draws from its own stream keyed by ``(seed, lot index)``, so
    a longer panel extends a shorter one with the same seed.
    """
    cfg = cfg or LotConfig()
    policy = OperatorPolicy.parse(policy)
    if n_lots < 1:
        raise ConfigError("n_lots: must be at least 1")
    chunk = 256
    recs = np.vstack([_lot_records(seed, range(i, min(i + chunk, n_lots)), cfg)
                      for i in range(0, n_lots, chunk)])
    x_d = recs[:, 0] - cfg.c_d
    x_y = recs[:, 1] - cfg.c_y
    x_e = recs[:, 2] - cfg.c_y
    y0, y1 = recs[:, 3], recs[:, 4]
    i_d = x_d > 0
    t = i_d & (x_y > 0)
    d = operator_decision(policy, i_d, x_y, x_e)
    panel = pd.DataFrame({
        "lot_id": np.arange(n_lots),
        "x_d": x_d,
        "x_y": x_y,
        "x_e": x_e,
        "x_r": x_e - x_y,
        "t": t.astype(int),
        "d": d.astype(int),
        "y": np.where(d, y1, y0),
        "y0": y0,
        "y1": y1,
    })
    cats = policy_categories(panel, policy) if classify else {}
    panel["category"] = cats.get("category", "")
    for j in range(N_COVARIATES):
        panel[f"z_{j + 1}"] = recs[:, 5 + j]
    panel["category_d"] = cats.get("category_d", "")
    panel["category_y"] = cats.get("category_y", "")
    return panel


def smooth_sharp_panel(seed: int, n: int, jump: float = 0.0, noise_sd: float = 0.2,
                       covariate_signal: float = 0.0, n_covariates: int = 3) -> pd.DataFrame:
    """Sharp design with a smooth conditional mean and optional covariate-driven noise."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    x = rng.uniform(-1.0, 1.0, n)
    z = rng.standard_normal((n, n_covariates))
    mu = 0.5 + 0.4 * x - 0.3 * x**2 + 0.2 * np.sin(2 * x)
    signal = covariate_signal * (z[:, 0] + 0.5 * z[:, min(1, n_covariates - 1)]) if n_covariates else 0.0
    t = (x > 0).astype(int)
    y = mu + jump * t + signal + noise_sd * rng.standard_normal(n)
    panel = pd.DataFrame({"lot_id": np.arange(n), "x": x, "t": t, "d": t, "y": y})
    for j in range(n_covariates):
        panel[f"z_{j + 1}"] = z[:, j]
    return panel


# ---------------------------------------------------------------------------
# oracles

AXES = {"D": ("x_d", "category_d"), "Y": ("x_y", "category_y")}


def _axis(axis: str) -> tuple[str, str]:
    try:
        return AXES[axis.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown axis {axis!r}; expected 'D' or 'Y'") from None


def itt_contrast(panel: pd.DataFrame, axis: str, policy) -> np.ndarray:
    """Per-lot difference in realized treatment between the two assignment arms."""
    x_d, x_y, x_e = (panel[c].to_numpy(float) for c in ("x_d", "x_y", "x_e"))
    if axis.upper() == "D":
        d1 = operator_decision(policy, np.ones(x_d.size, bool), x_y, x_e)
        d0 = operator_decision(policy, np.zeros(x_d.size, bool), x_y, x_e)
    else:
        i_d = x_d > 0
        d1 = operator_decision(policy, i_d, np.full(x_y.size, np.inf), x_e)
        d0 = operator_decision(policy, i_d, np.full(x_y.size, -np.inf), x_e)
    return d1.astype(float) - d0.astype(float)


def oracle_effect(panel: pd.DataFrame, axis: str = "D", estimand: str = "complier", policy=None,
                  kernel: str = "triangular", h: float | None = None, mask=None) -> float:
    """Effect at the cutoff from the true potential outcomes.

    The value is the average of the left and right local-linear intercepts,
    which reproduces any function that is continuous and linear on each
    side of the cutoff.
    """
    col, cat_col = _axis(axis)
    keep = np.ones(len(panel), bool) if mask is None else np.asarray(mask, bool)
    effect = (panel["y1"] - panel["y0"]).to_numpy(float)
    if estimand == "complier":
        keep = keep & (panel[cat_col].to_numpy() == "C")
        v = effect
    elif estimand == "itt":
        if policy is None:
            raise ValueError("the ITT oracle needs the operator policy")
        v = itt_contrast(panel, axis, policy) * effect
    else:
        raise ValueError(f"unknown estimand {estimand!r}")
    x = panel[col].to_numpy(float)[keep]
    v = v[keep]
    if not ((x > 0).any() and (x <= 0).any()):
        raise ValueError("oracle needs observations on both sides of the cutoff")
    if h is None:
        h, _ = select_bandwidth(x, v, kernel)
    left, right = side_intercepts(x, v, kernel, h)
    return 0.5 * (left + right)


def oracle_defier_correction(panel: pd.DataFrame, axis: str = "D", kernel: str = "triangular",
                             h: float | None = None) -> float:
    """Defier correction ``(p_DF / p_C) * E[Y0 - Y1 | DF]`` near the cutoff.

    Shares and the defier contrast are kernel-weighted averages within
    the window; the result is 0 when no defier carries weight.
    """
    col, cat_col = _axis(axis)
    x = panel[col].to_numpy(float)
    if h is None:
        h, _ = select_bandwidth(x, panel["y"].to_numpy(float), kernel)
    k = kernel_weights(x, h, kernel)
    cats = panel[cat_col].to_numpy()
    w_df = k * (cats == "DF")
    w_c = k * (cats == "C")
    if w_df.sum() == 0:
        return 0.0
    if w_c.sum() == 0:
        raise ValueError("no compliers near the cutoff; correction undefined")
    contrast = (panel["y0"] - panel["y1"]).to_numpy(float)
    delta = float(w_df @ contrast / w_df.sum())
    return float(w_df.sum() / w_c.sum() * delta)


PANEL_COLUMNS = ["lot_id", "x_d", "x_y", "x_e", "x_r", "t", "d", "y", "y0", "y1", "category"]
