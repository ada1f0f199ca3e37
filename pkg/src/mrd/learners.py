"""First-stage learners and cross-fitting for covariate adjustment.

The adjustment is ``eta(z) = (mu_plus(z) + mu_minus(z)) / 2`` where each
``mu`` is trained on one side of the cutoff and evaluated out of fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

PROB_CLIP = 1e-6

METHOD_LABELS = {
    "none": "RDD Without Covs",
    "linear": "RDD Conventional Covs",
    "lasso_local": "RDFlex Lasso",
    "lasso_global": "RDFlex Global Lasso",
    "boosting": "RDFlex Boosting",
    "stacking": "RDFlex Stacking",
}
LOCAL_KINDS = {"lasso_local", "boosting", "stacking"}


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "none"
    folds: int = 5
    n_lambda: int = 50
    lambda_ratio: float = 1e-4
    lambda_grid: tuple[float, ...] | None = None
    depth: int = 2
    rounds: int = 200
    shrinkage: float = 0.1
    validation: float = 0.2
    patience: int = 20
    n_bins: int = 32
    include_score: bool = False

    def __post_init__(self):
        if self.kind not in METHOD_LABELS:
            raise LearnerError(f"unknown learner kind {self.kind!r}; choose from {sorted(METHOD_LABELS)}")
        if self.folds < 2:
            raise LearnerError("folds must be at least 2")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise LearnerError("lambda grid must not be empty")
        if self.n_lambda < 1 or self.rounds < 1 or self.depth < 1:
            raise LearnerError("grids must be non-empty")

    @property
    def local(self) -> bool:
        return self.kind in LOCAL_KINDS

    @property
    def label(self) -> str:
        return METHOD_LABELS[self.kind]

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise LearnerError(f"unknown learner option(s): {sorted(unknown)}")
        d = dict(d)
        if d.get("lambda_grid") is not None:
            d["lambda_grid"] = tuple(float(v) for v in d["lambda_grid"])
        return cls(**d)


def resolve_learner(learner) -> LearnerSpec:
    if learner is None:
        return LearnerSpec()
    if isinstance(learner, LearnerSpec):
        return learner
    if isinstance(learner, dict):
        return LearnerSpec.from_dict(learner)
    if isinstance(learner, str):
        if learner in METHOD_LABELS:
            return LearnerSpec(kind=learner)
        for kind, label in METHOD_LABELS.items():
            if label == learner:
                return LearnerSpec(kind=kind)
    raise LearnerError(f"unknown learner {learner!r}")


@dataclass(frozen=True)
class FitReport:
    rmse_left: float
    rmse_right: float
    logloss_left: float | None = None
    logloss_right: float | None = None
    ridge_fallback: bool = False


# ---------------------------------------------------------------------------
# fold assignment


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def fold_ids(ids, seed: int, k: int) -> np.ndarray:
    """Fold index per unit as a pure function of (unit id, seed)."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        import zlib

        ids = np.array([zlib.crc32(str(v).encode()) for v in ids], dtype=np.uint64)
    key = _splitmix64(np.array([seed], dtype=np.uint64).astype(np.uint64))[0]
    with np.errstate(over="ignore"):
        h = _splitmix64(ids.astype(np.uint64) ^ key)
    return (h % np.uint64(k)).astype(np.int64)


def residualize(y, eta) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.shape != eta.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {eta.shape}")
    return y - eta


# ---------------------------------------------------------------------------
# lasso


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (x - mean) / scale, mean, scale


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise LearnerError("non-finite values in learner input")


def _cd_lasso(gram: np.ndarray, corr: np.ndarray, yy: float, lam: float, beta: np.ndarray,
              tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Coordinate descent on the Gram form of (1/2n)|y - Xb|^2 + lam |b|_1.

    Designs here have a handful of columns, so the sweep runs on Python
    floats with an incrementally updated gradient ``corr - gram @ beta``.
    """
    p = beta.size
    g = gram.tolist()
    b = beta.tolist()
    grad = (corr - gram @ beta).tolist()
    active = [j for j in range(p) if g[j][j] > 0]
    c = corr.tolist()
    gap = np.inf
    for sweep in range(max_iter):
        for j in active:
            gjj = g[j][j]
            rho = grad[j] + gjj * b[j]
            new = (rho - lam if rho > lam else rho + lam if rho < -lam else 0.0) / gjj
            delta = new - b[j]
            if delta != 0.0:
                b[j] = new
                row = g[j]
                for k in range(p):
                    grad[k] -= delta * row[k]
        if sweep % 4 != 3 and sweep + 1 < max_iter:
            continue
        l1 = sum(abs(v) for v in b)
        bc = sum(bv * cv for bv, cv in zip(b, c))
        bgrad = sum(bv * gv for bv, gv in zip(b, grad))
        ry = yy - bc
        r2 = ry - bgrad  # yy - 2 b.c + b'Gb
        dual_norm = max((abs(v) for v in grad), default=0.0)
        if dual_norm > lam:
            const = lam / dual_norm
            gap = 0.5 * r2 * (1 + const**2) + lam * l1 - const * ry
        else:
            gap = lam * l1 - bgrad
        if gap <= tol * max(yy, 1e-300):
            break
    return np.array(b), float(gap)


@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    coef_std: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    lam: float
    gap: float

    def predict(self, x) -> np.ndarray:
        return self.intercept + np.asarray(x, dtype=float) @ self.coef


def lasso_path(x, y, lambdas=None, n_lambda: int = 50, ratio: float = 1e-4,
               tol: float = 1e-8, max_iter: int = 100_000) -> list[LassoFit]:
    """Lasso fits over a decreasing penalty path with warm starts.

    Features are standardized internally and the intercept is unpenalized.
    A zero penalty is solved directly as least squares.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(x, y)
    n, p = x.shape
    xs, mean, scale = _standardize(x)
    ybar = y.mean()
    yc = y - ybar
    gram = xs.T @ xs / n
    corr = xs.T @ yc / n
    yy = float(yc @ yc / n)
    lam_max = float(np.max(np.abs(corr))) if p else 0.0
    if lambdas is None:
        lambdas = lam_max * np.logspace(0, np.log10(ratio), n_lambda) if lam_max > 0 else np.zeros(1)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    beta = np.zeros(p)
    out = []
    for lam in lambdas:
        if lam <= 0:
            beta = np.linalg.lstsq(xs, yc, rcond=None)[0] if p else beta
            gap = 0.0
        else:
            beta, gap = _cd_lasso(gram, corr, yy, float(lam), beta.copy(), tol, max_iter)
        coef = beta / scale
        out.append(LassoFit(coef=coef, intercept=float(ybar - mean @ coef), coef_std=beta.copy(),
                            mean=mean, scale=scale, lam=float(lam), gap=gap))
    return out


def lasso_fit(x, y, lam: float, tol: float = 1e-8) -> LassoFit:
    return lasso_path(x, y, lambdas=[lam], tol=tol)[0]


@dataclass
class LogisticLassoFit:
    coef: np.ndarray
    intercept: float
    lam: float

    def predict(self, x) -> np.ndarray:
        eta = np.clip(self.intercept + np.asarray(x, dtype=float) @ self.coef, -30, 30)
        return expit(eta)


def logistic_lasso_path(x, y, lambdas=None, n_lambda: int = 50, ratio: float = 1e-4,
                        max_outer: int = 50, tol: float = 1e-8) -> list[LogisticLassoFit]:
    """L1-penalized logistic regression by IRLS with coordinate descent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(x, y)
    n, p = x.shape
    xs, mean, scale = _standardize(x)
    ybar = float(np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP))
    lam_max = float(np.max(np.abs(xs.T @ (y - ybar) / n))) if p else 0.0
    if lambdas is None:
        lambdas = lam_max * np.logspace(0, np.log10(ratio), n_lambda) if lam_max > 0 else np.zeros(1)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    beta = np.zeros(p)
    b0 = float(np.log(ybar / (1 - ybar)))
    out = []
    for lam in lambdas:
        for _ in range(max_outer):
            eta = np.clip(b0 + xs @ beta, -30, 30)
            prob = expit(eta)
            w = np.clip(prob * (1 - prob), 1e-5, None)
            z = eta + (y - prob) / w
            sw = w.sum()
            xbar = w @ xs / sw
            zbar = w @ z / sw
            xc = xs - xbar
            zc = z - zbar
            gram = (xc * w[:, None]).T @ xc / n
            corr = (xc * w[:, None]).T @ zc / n
            zz = float(w @ zc**2 / n)
            old = beta.copy()
            if lam > 0:
                beta, _ = _cd_lasso(gram, corr, zz, float(lam), beta.copy(), tol, 1000)
            elif p:
                beta = np.linalg.lstsq(gram + 1e-8 * np.eye(p), corr, rcond=None)[0]
            b0 = float(zbar - xbar @ beta)
            if np.max(np.abs(beta - old), initial=0.0) < 1e-7:
                break
        coef = beta / scale
        out.append(LogisticLassoFit(coef=coef, intercept=float(b0 - mean @ coef), lam=float(lam)))
    return out


# ---------------------------------------------------------------------------
# gradient boosting with shallow histogram trees


def _bin_edges(x: np.ndarray, n_bins: int) -> list[np.ndarray]:
    edges = []
    for j in range(x.shape[1]):
        qs = np.quantile(x[:, j], np.linspace(0, 1, n_bins + 1)[1:-1])
        edges.append(np.unique(qs))
    return edges


def _apply_bins(x: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(x.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, x[:, j], side="left")
    return out


@dataclass
class _Node:
    value: float = 0.0
    feature: int = -1
    bin: int = -1
    left: "_Node | None" = None
    right: "_Node | None" = None


def _best_split(bins: np.ndarray, g: np.ndarray, h: np.ndarray, n_bins: int, reg: float,
                min_leaf: int) -> tuple[float, int, int]:
    g_tot, h_tot = g.sum(), h.sum()
    parent = g_tot**2 / (h_tot + reg)
    best = (0.0, -1, -1)
    for j in range(bins.shape[1]):
        col = bins[:, j]
        gb = np.bincount(col, weights=g, minlength=n_bins)
        hb = np.bincount(col, weights=h, minlength=n_bins)
        cb = np.bincount(col, minlength=n_bins)
        gl, hl, cl = np.cumsum(gb)[:-1], np.cumsum(hb)[:-1], np.cumsum(cb)[:-1]
        ok = (cl >= min_leaf) & (cl <= col.size - min_leaf)
        if not ok.any():
            continue
        gain = gl**2 / (hl + reg) + (g_tot - gl) ** 2 / (h_tot - hl + reg) - parent
        gain = np.where(ok, gain, -np.inf)
        t = int(np.argmax(gain))
        if gain[t] > best[0] + 1e-12:
            best = (float(gain[t]), j, t)
    return best


def _grow(bins, g, h, depth, n_bins, reg, min_leaf) -> _Node:
    node = _Node(value=float(-g.sum() / (h.sum() + reg)))
    if depth == 0 or g.size < 2 * min_leaf:
        return node
    gain, j, t = _best_split(bins, g, h, n_bins, reg, min_leaf)
    if j < 0:
        return node
    mask = bins[:, j] <= t
    node.feature, node.bin = j, t
    node.left = _grow(bins[mask], g[mask], h[mask], depth - 1, n_bins, reg, min_leaf)
    node.right = _grow(bins[~mask], g[~mask], h[~mask], depth - 1, n_bins, reg, min_leaf)
    return node


def _predict_node(node: _Node, bins: np.ndarray) -> np.ndarray:
    if node.feature < 0:
        return np.full(bins.shape[0], node.value)
    mask = bins[:, node.feature] <= node.bin
    out = np.empty(bins.shape[0])
    out[mask] = _predict_node(node.left, bins[mask])
    out[~mask] = _predict_node(node.right, bins[~mask])
    return out


def _loss(kind: str, y: np.ndarray, f: np.ndarray) -> float:
    if kind == "squared":
        return float(0.5 * np.mean((y - f) ** 2))
    p = np.clip(expit(f), PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


@dataclass
class BoostModel:
    loss: str
    base: float
    edges: list
    trees: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)

    def decision(self, x) -> np.ndarray:
        bins = _apply_bins(np.asarray(x, dtype=float), self.edges)
        f = np.full(bins.shape[0], self.base)
        for tree, step in zip(self.trees, self.steps):
            f += step * _predict_node(tree, bins)
        return f

    def predict(self, x) -> np.ndarray:
        f = self.decision(x)
        return expit(f) if self.loss == "logistic" else f


def boost_fit(x, y, spec: LearnerSpec | None = None, loss: str = "squared", seed: int = 0,
              reg: float = 1.0, min_leaf: int = 5) -> BoostModel:
    """Newton boosting of depth-limited trees with early stopping.

    A step that would raise the training loss is halved until it does
    not, so the recorded training loss never increases.
    """
    spec = spec or LearnerSpec(kind="boosting")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(x, y)
    n = x.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(spec.validation * n)) if n >= 20 else 0
    val, tr = order[:n_val], order[n_val:]
    xt, yt = x[tr], y[tr]
    edges = _bin_edges(xt, spec.n_bins)
    bt = _apply_bins(xt, edges)
    bv = _apply_bins(x[val], edges)
    if loss == "squared":
        base = float(yt.mean())
    else:
        p0 = float(np.clip(yt.mean(), PROB_CLIP, 1 - PROB_CLIP))
        base = float(np.log(p0 / (1 - p0)))
    model = BoostModel(loss=loss, base=base, edges=edges)
    ft = np.full(tr.size, base)
    fv = np.full(val.size, base)
    model.train_loss.append(_loss(loss, yt, ft))
    best_val, best_round, since = (_loss(loss, y[val], fv) if n_val else np.inf), 0, 0
    n_bins = spec.n_bins + 1
    for _ in range(spec.rounds):
        if loss == "squared":
            g, h = ft - yt, np.ones_like(yt)
        else:
            p = expit(ft)
            g, h = p - yt, np.maximum(p * (1 - p), 1e-12)
        tree = _grow(bt, g, h, spec.depth, n_bins, reg, min_leaf)
        upd = _predict_node(tree, bt)
        step = spec.shrinkage
        current = model.train_loss[-1]
        for _ in range(8):
            cand = _loss(loss, yt, ft + step * upd)
            if cand <= current:
                break
            step *= 0.5
        else:
            break
        ft = ft + step * upd
        model.trees.append(tree)
        model.steps.append(step)
        model.train_loss.append(cand)
        if n_val:
            fv = fv + step * _predict_node(tree, bv)
            v = _loss(loss, y[val], fv)
            model.valid_loss.append(v)
            if v < best_val - 1e-12:
                best_val, best_round, since = v, len(model.trees), 0
            else:
                since += 1
                if since >= spec.patience:
                    break
    if n_val:
        model.trees = model.trees[:best_round]
        model.steps = model.steps[:best_round]
    return model


# ---------------------------------------------------------------------------
# stacking


def stack(predictions, y, loss: str = "squared") -> np.ndarray:
    """Convex weights over base predictions minimising held-out loss."""
    preds = np.asarray(predictions, dtype=float)
    y = np.asarray(y, dtype=float)
    m = preds.shape[1]

    def objective(w):
        combo = preds @ w
        if loss == "squared":
            return float(np.mean((y - combo) ** 2))
        p = np.clip(combo, PROB_CLIP, 1 - PROB_CLIP)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))

    vertex_losses = [objective(np.eye(m)[j]) for j in range(m)]
    best_vertex = int(np.argmin(vertex_losses))
    res = minimize(
        objective,
        np.full(m, 1.0 / m),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * m,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
        options={"ftol": 1e-12, "maxiter": 200},
    )
    if res.success:
        w = np.clip(res.x, 0.0, None)
        w = w / w.sum()
        if objective(w) <= vertex_losses[best_vertex]:
            return w
    return np.eye(m)[best_vertex]


# ---------------------------------------------------------------------------
# cross-fitting


def _oof_matrix(kind: str, z, y, folds, train_side, spec, seed, classify) -> np.ndarray:
    """Out-of-fold predictions, one column per candidate (lasso path points)."""
    n = z.shape[0]
    k = spec.folds
    cols = None
    out = None
    for f in range(k):
        test = folds == f
        train = (~test) & train_side
        yt = y[train]
        if kind == "lasso":
            if yt.size == 0:
                raise LearnerError(f"fold {f} leaves no training rows")
            if classify:
                path = logistic_lasso_path(z[train], yt, spec.lambda_grid, spec.n_lambda, spec.lambda_ratio) \
                    if 0 < yt.mean() < 1 else None
            else:
                path = lasso_path(z[train], yt, spec.lambda_grid, spec.n_lambda, spec.lambda_ratio)
            if cols is None:
                cols = len(spec.lambda_grid) if spec.lambda_grid is not None else spec.n_lambda
                out = np.empty((n, cols))
            if path is None:
                out[test] = np.clip(yt.mean(), PROB_CLIP, 1 - PROB_CLIP)
                continue
            preds = np.column_stack([m.predict(z[test]) for m in path])
            if preds.shape[1] < cols:
                preds = np.column_stack([preds] + [preds[:, -1:]] * (cols - preds.shape[1]))
            out[test] = preds
        else:
            if out is None:
                out = np.empty((n, 1))
            if yt.size == 0:
                raise LearnerError(f"fold {f} leaves no training rows")
            if classify and not 0 < yt.mean() < 1:
                out[test, 0] = np.clip(yt.mean(), PROB_CLIP, 1 - PROB_CLIP)
                continue
            model = boost_fit(z[train], yt, spec, "logistic" if classify else "squared", seed=seed + f)
            out[test, 0] = model.predict(z[test])
    return out


def _choose(oof: np.ndarray, y: np.ndarray, mask: np.ndarray, classify: bool) -> np.ndarray:
    if oof.shape[1] == 1 or not mask.any():
        return oof[:, 0] if oof.shape[1] == 1 else oof[:, -1]
    if classify:
        p = np.clip(oof[mask], PROB_CLIP, 1 - PROB_CLIP)
        yy = y[mask][:, None]
        losses = -np.mean(yy * np.log(p) + (1 - yy) * np.log(1 - p), axis=0)
    else:
        losses = np.mean((y[mask][:, None] - oof[mask]) ** 2, axis=0)
    return oof[:, int(np.argmin(losses))]


def _side_model(spec, z, y, folds, train_side, seed, classify) -> np.ndarray:
    if spec.kind in ("lasso_local", "lasso_global"):
        return _choose(_oof_matrix("lasso", z, y, folds, train_side, spec, seed, classify), y, train_side, classify)
    if spec.kind == "boosting":
        return _oof_matrix("boost", z, y, folds, train_side, spec, seed, classify)[:, 0]
    if spec.kind == "stacking":
        lasso = _choose(_oof_matrix("lasso", z, y, folds, train_side, spec, seed, classify), y, train_side, classify)
        boost = _oof_matrix("boost", z, y, folds, train_side, spec, seed, classify)[:, 0]
        base = np.column_stack([lasso, boost])
        w = stack(base[train_side], y[train_side], "logistic" if classify else "squared") \
            if train_side.any() else np.array([0.5, 0.5])
        return base @ w
    raise LearnerError(f"learner {spec.kind!r} does not produce an adjustment function")


def _crossfit(z, target, spec, ids, side, window, seed, classify):
    z = np.asarray(z, dtype=float)
    target = np.asarray(target, dtype=float)
    n = target.size
    if z.ndim == 1:
        z = z[:, None]
    _check_finite(z, target)
    ids = np.arange(n) if ids is None else np.asarray(ids)
    split_sides = side is not None
    side = np.zeros(n, bool) if side is None else np.asarray(side, bool)
    window = np.ones(n, bool) if window is None else np.asarray(window, bool)
    out = np.zeros(n)
    rows = np.flatnonzero(window)
    if spec.kind == "none" or rows.size == 0:
        return out, np.zeros(n), side
    # process in id order so predictions do not depend on row order
    rows = rows[np.argsort(ids[rows], kind="stable")]
    zw, tw, sw = z[rows], target[rows], side[rows]
    folds = fold_ids(ids[rows], seed, spec.folds)
    present = np.bincount(folds, minlength=spec.folds)
    if (present == 0).any():
        raise LearnerError(f"empty cross-fitting fold among {spec.folds} (window has {rows.size} rows)")
    own = np.zeros(n)
    if not split_sides:
        out[rows] = own[rows] = _side_model(spec, zw, tw, folds, np.ones(rows.size, bool), seed, classify)
        return out, own, window
    mu = {}
    for name, mask in (("right", sw), ("left", ~sw)):
        if not mask.any():
            raise LearnerError(f"no training rows on the {name} side of the cutoff")
        mu[name] = _side_model(spec, zw, tw, folds, mask, seed, classify)
    out[rows] = 0.5 * (mu["left"] + mu["right"])
    own[rows] = np.where(sw, mu["right"], mu["left"])
    return out, own, window


def crossfit_regression(z, y, spec: LearnerSpec, ids=None, side=None, window=None,
                        seed: int = 0) -> tuple[np.ndarray, FitReport]:
    """Out-of-fold adjustment ``eta`` for the outcome.

    Rows outside ``window`` get ``eta = 0``. RMSE is reported per side from
    each side's own model.
    """
    spec = resolve_learner(spec)
    y = np.asarray(y, dtype=float)
    if spec.kind == "none":
        return np.zeros_like(y), FitReport(rmse_left=float("nan"), rmse_right=float("nan"))
    eta, own, win = _crossfit(z, y, spec, ids, side, window, seed, classify=False)
    right = np.asarray(side, bool) if side is not None else np.zeros(y.size, bool)
    rmse = {}
    for name, mask in (("left", win & ~right), ("right", win & right)):
        rmse[name] = float(np.sqrt(np.mean((y[mask] - own[mask]) ** 2))) if mask.any() else float("nan")
    return eta, FitReport(rmse_left=rmse["left"], rmse_right=rmse["right"])


def crossfit_classifier(z, d, spec: LearnerSpec, ids=None, side=None, window=None,
                        seed: int = 0) -> tuple[np.ndarray, FitReport]:
    """Out-of-fold treatment probabilities, averaged over side models."""
    spec = resolve_learner(spec)
    d = np.asarray(d, dtype=float)
    if spec.kind == "none":
        return np.zeros_like(d), FitReport(rmse_left=float("nan"), rmse_right=float("nan"))
    p, own, win = _crossfit(z, d, spec, ids, side, window, seed, classify=True)
    p = np.where(win, np.clip(p, PROB_CLIP, 1 - PROB_CLIP), 0.0)
    own = np.clip(own, PROB_CLIP, 1 - PROB_CLIP)
    right = np.asarray(side, bool) if side is not None else np.zeros(d.size, bool)
    ll = {}
    for name, mask in (("left", win & ~right), ("right", win & right)):
        if mask.any():
            dm, pm = d[mask], own[mask]
            ll[name] = float(-np.mean(dm * np.log(pm) + (1 - dm) * np.log(1 - pm)))
        else:
            ll[name] = float("nan")
    return p, FitReport(rmse_left=float("nan"), rmse_right=float("nan"),
                        logloss_left=ll["left"], logloss_right=ll["right"])


def log_loss(d, p) -> float:
    d = np.asarray(d, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(d * np.log(p) + (1 - d) * np.log(1 - p)))
