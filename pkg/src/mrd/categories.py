"""Unit behaviour categories of a decision rule D relative to a cutoff rule T.

A unit is classified by imagining every cutoff shift ``c`` in supp(T): the
rule T then responds with ``T(x | c)`` and the decision with ``D(x - c)``.
Compliers follow T for every shift, defiers oppose it for every shift,
never-/alwaystakers ignore it, and the remaining units are indecisive.

For cutoff-rule decisions the shifts only matter through the atom bits on
S(T), so exact classification enumerates ``2^|S(T)|`` atom configurations.
General decision functions are probed on a finite grid of shifts instead.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
import pandas as pd

from .rules import (
    CutoffRule,
    RuleError,
    _Columns,
    eval_bits,
    evaluate,
    support_directions,
    supports_direct_sum,
)

MAX_CLASSIFY_SUPPORT = 20


class UnitCategory(str, enum.Enum):
    COMPLIER = "C"
    NEVERTAKER = "NT"
    ALWAYSTAKER = "AT"
    DEFIER = "DF"
    INDECISIVE = "IND"

    def __str__(self) -> str:
        return self.value


C, NT, AT, DF, IND = (
    UnitCategory.COMPLIER,
    UnitCategory.NEVERTAKER,
    UnitCategory.ALWAYSTAKER,
    UnitCategory.DEFIER,
    UnitCategory.INDECISIVE,
)
ALL_CATEGORIES = frozenset(UnitCategory)


class DegenerateRuleError(RuleError):
    def __init__(self, rule: CutoffRule):
        super().__init__(f"degenerate rule: {rule} is constant (empty support)")


class SubsetError(ValueError):
    """An exclusion set would drop units that respond to the assignment."""


@dataclass(frozen=True)
class ClassificationResult:
    category: UnitCategory
    # (assignment over the support directions, T-bit, D-bit)
    witness_configs: tuple[tuple[tuple[int, ...], bool, bool], ...]
    approximate: bool = False


def _categorize(all_d0, all_d1, all_agree, all_disagree):
    """Vectorized decision table; inputs are boolean arrays of equal shape."""
    out = np.full(np.shape(all_d0), IND.value, dtype=object)
    out[all_disagree] = DF.value
    out[all_agree] = C.value
    out[all_d1] = AT.value
    out[all_d0] = NT.value
    return out


def _check_pair(t: CutoffRule, d: CutoffRule) -> tuple[int, ...]:
    if t.dim != d.dim:
        raise RuleError(f"dimension mismatch: T has {t.dim}, D has {d.dim}")
    if any(t.cutoff) or any(d.cutoff):
        raise RuleError("classification needs rules with zero cutoff; call normalize_cutoff first")
    supp = tuple(sorted(support_directions(t)))
    if not supp:
        raise DegenerateRuleError(t)
    if len(supp) > MAX_CLASSIFY_SUPPORT:
        raise RuleError(f"|S(T)| = {len(supp)} exceeds the enumeration cap {MAX_CLASSIFY_SUPPORT}")
    return supp


def _scores_2d(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != dim:
        raise RuleError(f"score vectors have dimension {arr.shape[1]}, rules expect {dim}")
    return arr


def _cutoff_tables(t: CutoffRule, d: CutoffRule, x: np.ndarray):
    """Yield ``(config, t_bit, d_bits)`` for every atom configuration on S(T)."""
    supp = _check_pair(t, d)
    base = x > 0.0
    for config in itertools.product((0, 1), repeat=len(supp)):
        bits = base.copy()
        for k, b in zip(supp, config):
            bits[:, k - 1] = bool(b)
        cols = _Columns(bits)
        t_bit = np.broadcast_to(eval_bits(t.expr, cols), (len(x),))
        d_bit = np.broadcast_to(eval_bits(d.expr, cols), (len(x),))
        yield config, t_bit, d_bit


def _fold(tables, n: int):
    all_d0 = np.ones(n, bool)
    all_d1 = np.ones(n, bool)
    all_agree = np.ones(n, bool)
    all_disagree = np.ones(n, bool)
    for _, t_bit, d_bit in tables:
        all_d0 &= ~d_bit
        all_d1 &= d_bit
        all_agree &= t_bit == d_bit
        all_disagree &= t_bit != d_bit
    return _categorize(all_d0, all_d1, all_agree, all_disagree)


def classify_cutoff(t: CutoffRule, d: CutoffRule, x) -> ClassificationResult:
    """Exact category of one unit for a cutoff-rule decision ``d``."""
    arr = _scores_2d(x, t.dim)
    if len(arr) != 1:
        raise RuleError("classify_cutoff expects a single score vector")
    tables = list(_cutoff_tables(t, d, arr))
    cat = UnitCategory(_fold(tables, 1)[0])
    witnesses = tuple((cfg, bool(tb[0]), bool(db[0])) for cfg, tb, db in tables)
    return ClassificationResult(cat, witnesses)


def classify_cutoff_many(t: CutoffRule, d: CutoffRule, x) -> np.ndarray:
    """Category codes (``"C"``, ``"NT"``, ...) for a batch of score vectors."""
    arr = _scores_2d(x, t.dim)
    return _fold(_cutoff_tables(t, d, arr), len(arr))


# --------------------------------------------------------------------------
# general decision functions


@dataclass(frozen=True)
class GridSpec:
    """Cutoff shifts probed per support direction.

    ``offsets`` maps a 1-based direction to explicit cutoff values; directions
    without an entry use the bracketing default around the unit's own score:
    ``x_k - (|x_k| + 1)``, ``x_k - eps``, ``x_k + eps``, ``x_k + (|x_k| + 1)``
    with ``eps = rel_eps * scale``.
    """

    offsets: Mapping[int, tuple[float, ...]] = field(default_factory=dict)
    scale: float = 1.0
    rel_eps: float = 1e-6

    def shifted_values(self, k: int, xk: np.ndarray) -> np.ndarray:
        """Evaluation points ``x_k - c_k``; shape ``(n, m)``."""
        if k in self.offsets:
            cs = np.asarray(self.offsets[k], dtype=float)
            if cs.size == 0:
                raise ValueError(f"empty grid for direction {k}")
            if np.any(cs.min() >= xk) or np.any(cs.max() <= xk):
                raise ValueError(f"grid for direction {k} does not bracket every unit's score")
            return xk[:, None] - cs[None, :]
        eps = self.rel_eps * self.scale
        wide = np.abs(xk) + 1.0
        return np.stack([wide, np.full_like(xk, eps), np.full_like(xk, -eps), -wide], axis=1)


DecisionFn = Callable[[np.ndarray], np.ndarray]


def _general_tables(t: CutoffRule, d_fn: DecisionFn, x: np.ndarray, grid: GridSpec):
    if any(t.cutoff):
        raise RuleError("classification needs T with zero cutoff; call normalize_cutoff first")
    supp = tuple(sorted(support_directions(t)))
    if not supp:
        raise DegenerateRuleError(t)
    values = [grid.shifted_values(k, x[:, k - 1]) for k in supp]
    n = len(x)
    for combo in itertools.product(*(range(v.shape[1]) for v in values)):
        u = x.copy()
        for k, v, j in zip(supp, values, combo):
            u[:, k - 1] = v[:, j]
        t_bit = np.broadcast_to(eval_bits(t.expr, _Columns(u > 0.0)), (n,))
        d_bit = np.broadcast_to(np.asarray(d_fn(u), dtype=bool), (n,))
        yield combo, t_bit, d_bit


def classify_general(
    t: CutoffRule, d_fn: DecisionFn, x, grid: GridSpec | None = None
) -> ClassificationResult:
    """Grid-approximate category for an arbitrary decision function.

    ``d_fn`` receives an ``(n, K)`` array of shifted scores ``x - c`` and must
    return ``n`` bits.
    """
    grid = grid or GridSpec()
    arr = _scores_2d(x, t.dim)
    if len(arr) != 1:
        raise RuleError("classify_general expects a single score vector")
    tables = list(_general_tables(t, d_fn, arr, grid))
    cat = UnitCategory(_fold(tables, 1)[0])
    witnesses = tuple((cfg, bool(tb[0]), bool(db[0])) for cfg, tb, db in tables)
    return ClassificationResult(cat, witnesses, approximate=True)


def classify_general_many(t: CutoffRule, d_fn: DecisionFn, x, grid: GridSpec | None = None) -> np.ndarray:
    arr = _scores_2d(x, t.dim)
    return _fold(_general_tables(t, d_fn, arr, grid or GridSpec()), len(arr))


# --------------------------------------------------------------------------
# inheritance between rule hierarchies


def simple_rule_categories(g: CutoffRule, h: CutoffRule, op: str, x) -> UnitCategory:
    """Category of G w.r.t. T = G op H when the supports form a direct sum.

    Under AND a unit is a complier iff H holds at its score, otherwise a
    nevertaker; under OR it is a complier iff H fails, otherwise an alwaystaker.
    """
    if not support_directions(g):
        raise DegenerateRuleError(g)
    if not supports_direct_sum(g, h, op):
        raise RuleError("supp(G) and supp(H) must be disjoint and span supp(T)")
    h_bit = bool(evaluate(h, np.asarray(x, dtype=float)))
    if op == "and":
        return C if h_bit else NT
    return AT if h_bit else C


# (cat of (G,T), cat of (T,D)) -> possible cats of (G,D)
_INHERIT = {
    "and": {
        (C, C): {C},
        (NT, C): {NT},
        (C, DF): {DF},
        (NT, DF): {AT},
    },
    "or": {
        (C, C): {C},
        (AT, C): {AT},
        (C, DF): {DF},
        (AT, DF): {NT},
    },
}
_BOUND = {"and": {C: {C, NT}, DF: {DF, AT}}, "or": {C: {C, AT}, DF: {DF, NT}}}


def inherited_category(cat_gt: UnitCategory, cat_td: UnitCategory, op: str) -> frozenset[UnitCategory]:
    """Categories of (G, D) compatible with known categories of (G, T) and (T, D).

    Returns the empty set when ``cat_gt`` cannot occur for ``T = G op H``
    (e.g. an alwaystaker of an AND factor), and all categories when nothing
    can be inferred (indecisive units of (T, D)).
    """
    cat_gt, cat_td = UnitCategory(cat_gt), UnitCategory(cat_td)
    if op not in _INHERIT:
        raise ValueError(f"unknown operator {op!r}")
    if cat_td in (NT, AT):
        return frozenset({cat_td})
    if cat_td is IND:
        return ALL_CATEGORIES
    hit = _INHERIT[op].get((cat_gt, cat_td))
    if hit is not None:
        return frozenset(hit)
    allowed_gt = {C, NT} if op == "and" else {C, AT}
    if cat_gt in allowed_gt:
        return frozenset(_BOUND[op][cat_td])
    return frozenset()


# --------------------------------------------------------------------------
# datasets


def category_counts(codes: Iterable[str]) -> dict[str, int]:
    counts = {c.value: 0 for c in UnitCategory}
    for code in codes:
        counts[str(code)] += 1
    return counts


def classify_dataset(
    t: CutoffRule,
    d: CutoffRule | DecisionFn,
    scores,
    grid: GridSpec | None = None,
) -> tuple[np.ndarray, dict[str, int]]:
    """Classify every row of ``scores`` (array or DataFrame); returns codes and counts."""
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        return np.empty(0, dtype=object), category_counts([])
    if isinstance(d, CutoffRule):
        codes = classify_cutoff_many(t, d, arr)
    else:
        codes = classify_general_many(t, d, arr, grid)
    return codes, category_counts(codes)


def subset_mask(panel: pd.DataFrame, omega: str | None, category_column: str | None = None) -> np.ndarray:
    """Keep-mask for a panel after excluding the units selected by ``omega``.

    ``omega`` is a pandas expression over panel columns such as ``"x_y <= 0"``.
    When ``category_column`` is given, every excluded unit must be a
    nevertaker or alwaystaker.
    """
    n = len(panel)
    if omega is None or not str(omega).strip():
        return np.ones(n, dtype=bool)
    try:
        drop = np.asarray(panel.eval(omega), dtype=bool)
    except Exception as exc:  # pandas raises a zoo of types here
        raise ValueError(f"cannot evaluate exclusion set {omega!r}: {exc}") from None
    if drop.shape != (n,):
        raise ValueError(f"exclusion set {omega!r} must yield one boolean per row")
    if category_column is not None and category_column in panel:
        dropped = panel.loc[drop, category_column].astype(str)
        bad = dropped[~dropped.isin([NT.value, AT.value])]
        if len(bad):
            raise SubsetError(
                f"exclusion set {omega!r} contains {len(bad)} unit(s) that are not "
                f"nevertakers/alwaystakers (first: row {bad.index[0]}, category {bad.iloc[0]})"
            )
    return ~drop
