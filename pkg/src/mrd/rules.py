"""Boolean cutoff rules over a K-dimensional score space.

A cutoff rule combines indicator atoms ``I_k = 1[x_k > c_k]`` with AND, OR and
negation.  Rules are immutable values; combinators return new rules.

The rule DSL::

    expr    := or
    or      := and ('|' and)*
    and     := unary ('&' unary)*
    unary   := '!' unary | '(' or ')' | 'I<k>' | '0' | '1'
    rule    := expr ['@' 'c' '=' '(' num (',' num)* ')']

Example: ``"(I1 & I2) | !I3 @ c=(0.5, 0, -1)"``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

MAX_SUPPORT_ATOMS = 24


class RuleError(ValueError):
    """Raised for malformed rules, dimension mismatches and unsupported sizes."""


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


# --------------------------------------------------------------------------
# expression tree


@dataclass(frozen=True)
class Atom:
    k: int


@dataclass(frozen=True)
class Const:
    bit: bool


@dataclass(frozen=True)
class Not:
    child: "BoolExpr"


@dataclass(frozen=True)
class And:
    children: tuple["BoolExpr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["BoolExpr", ...]


BoolExpr = Union[Atom, Const, Not, And, Or]


def atoms(expr: BoolExpr) -> frozenset[int]:
    """Indices of all atoms appearing in ``expr``."""
    if isinstance(expr, Atom):
        return frozenset((expr.k,))
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Not):
        return atoms(expr.child)
    out: frozenset[int] = frozenset()
    for c in expr.children:
        out |= atoms(c)
    return out


def eval_bits(expr: BoolExpr, bits) -> np.ndarray:
    """Evaluate ``expr`` on atom bits.

    ``bits`` maps atom index ``k`` (1-based) to a boolean array (or scalar);
    any object supporting ``bits[k]`` works, e.g. a dict or a callable wrapper.
    """
    if isinstance(expr, Atom):
        return np.asarray(bits[expr.k], dtype=bool)
    if isinstance(expr, Const):
        return np.asarray(expr.bit, dtype=bool)
    if isinstance(expr, Not):
        return ~eval_bits(expr.child, bits)
    vals = [eval_bits(c, bits) for c in expr.children]
    out = vals[0]
    if isinstance(expr, And):
        for v in vals[1:]:
            out = out & v
    else:
        for v in vals[1:]:
            out = out | v
    return out


def to_text(expr: BoolExpr) -> str:
    """Canonical DSL text; ``parse_expr(to_text(e)) == e`` holds structurally."""
    if isinstance(expr, Atom):
        return f"I{expr.k}"
    if isinstance(expr, Const):
        return "1" if expr.bit else "0"
    if isinstance(expr, Not):
        inner = to_text(expr.child)
        if isinstance(expr.child, (And, Or)):
            inner = f"({inner})"
        return "!" + inner
    sep = " & " if isinstance(expr, And) else " | "
    parts = []
    for c in expr.children:
        s = to_text(c)
        # nested n-ary nodes are always parenthesized so the tree shape survives
        if isinstance(c, (And, Or)):
            s = f"({s})"
        parts.append(s)
    return sep.join(parts)


# --------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\s*(?:(I)(\d+)|([01])|(&)|(\|)|(!)|(\()|(\)))")


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0
        self.tokens: list[tuple[str, object, int]] = []
        self._lex()
        self.i = 0

    def _lex(self) -> None:
        text, n, pos = self.text, len(self.text), 0
        while pos < n:
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(text, pos)
            if m is None:
                raise RuleSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
            start = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
            if m.group(1):
                self.tokens.append(("atom", int(m.group(2)), start))
            elif m.group(3):
                self.tokens.append(("const", m.group(3) == "1", start))
            else:
                tok = next(g for g in m.groups()[3:] if g)
                self.tokens.append((tok, None, start))
            pos = m.end()
        self.tokens.append(("end", None, n))

    def peek(self) -> tuple[str, object, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, object, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> BoolExpr:
        expr = self.parse_or()
        kind, _, pos = self.peek()
        if kind != "end":
            raise RuleSyntaxError(f"unexpected token {kind!r}", self.text, pos)
        return expr

    def parse_or(self) -> BoolExpr:
        items = [self.parse_and()]
        while self.peek()[0] == "|":
            self.take()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> BoolExpr:
        items = [self.parse_unary()]
        while self.peek()[0] == "&":
            self.take()
            items.append(self.parse_unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_unary(self) -> BoolExpr:
        kind, val, pos = self.take()
        if kind == "!":
            return Not(self.parse_unary())
        if kind == "(":
            inner = self.parse_or()
            k2, _, p2 = self.take()
            if k2 != ")":
                raise RuleSyntaxError("expected ')'", self.text, p2)
            return inner
        if kind == "atom":
            k = int(val)  # type: ignore[arg-type]
            if not 1 <= k <= self.dim:
                raise RuleError(f"atom I{k} out of range for dim={self.dim} (position {pos})")
            return Atom(k)
        if kind == "const":
            return Const(bool(val))
        what = "end of input" if kind == "end" else repr(kind)
        raise RuleSyntaxError(f"unexpected {what}", self.text, pos)


def parse_expr(text: str, dim: int) -> BoolExpr:
    return _Parser(text, dim).parse()


_CUTOFF_CLAUSE = re.compile(r"^\s*c\s*=\s*\((.*)\)\s*$")


# --------------------------------------------------------------------------
# cutoff rules


@dataclass(frozen=True)
class CutoffRule:
    """A Boolean rule ``g`` applied to the atoms ``1[x_k > cutoff_k]``."""

    expr: BoolExpr
    cutoff: tuple[float, ...]
    dim: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cutoff", tuple(float(c) for c in self.cutoff))
        object.__setattr__(self, "dim", len(self.cutoff))
        if self.dim < 1:
            raise RuleError("rule dimension must be at least 1")
        bad = [k for k in atoms(self.expr) if not 1 <= k <= self.dim]
        if bad:
            raise RuleError(f"atom index {bad[0]} out of range for dim={self.dim}")

    @classmethod
    def of(cls, expr: BoolExpr, dim: int, cutoff=None) -> "CutoffRule":
        if cutoff is None:
            cutoff = (0.0,) * dim
        if len(cutoff) != dim:
            raise RuleError(f"cutoff has length {len(cutoff)}, expected {dim}")
        return cls(expr, tuple(cutoff))

    def __str__(self) -> str:
        text = to_text(self.expr)
        if any(c != 0.0 for c in self.cutoff):
            text += " @ c=(" + ", ".join(repr(c) for c in self.cutoff) + ")"
        return text

    def to_dict(self) -> dict:
        return {"expr": to_text(self.expr), "cutoff": list(self.cutoff), "dim": self.dim}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CutoffRule":
        dim = int(d["dim"])
        return cls.of(parse_expr(d["expr"], dim), dim, d.get("cutoff"))

    @classmethod
    def from_json(cls, s: str) -> "CutoffRule":
        return cls.from_dict(json.loads(s))

    # operator sugar
    def __and__(self, other: "CutoffRule") -> "CutoffRule":
        return combine(self, other, "and")

    def __or__(self, other: "CutoffRule") -> "CutoffRule":
        return combine(self, other, "or")

    def __invert__(self) -> "CutoffRule":
        return negate(self)


def parse_rule(text: str, dim: int) -> CutoffRule:
    """Parse the rule DSL; the cutoff defaults to the zero vector."""
    expr_text, _, clause = text.partition("@")
    expr = parse_expr(expr_text, dim)
    cutoff = None
    if clause:
        m = _CUTOFF_CLAUSE.match(clause)
        if m is None:
            raise RuleSyntaxError("malformed cutoff clause", text, len(expr_text) + 1)
        try:
            cutoff = tuple(float(v) for v in m.group(1).split(","))
        except ValueError as exc:
            raise RuleSyntaxError(f"bad cutoff value ({exc})", text, len(expr_text) + 1) from None
        if len(cutoff) != dim:
            raise RuleError(f"cutoff clause has {len(cutoff)} entries, expected {dim}")
    return CutoffRule.of(expr, dim, cutoff)


def evaluate(rule: CutoffRule, x) -> np.ndarray | bool:
    """Apply ``rule`` to a score vector (shape ``(K,)``) or a batch (shape ``(n, K)``)."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (rule.dim,):
        raise RuleError(f"score vector has dimension {arr.shape[-1:]}, rule expects {rule.dim}")
    above = arr > np.asarray(rule.cutoff)
    out = eval_bits(rule.expr, _Columns(above))
    if arr.ndim == 1:
        return bool(out)
    return np.broadcast_to(out, arr.shape[:-1]).copy()


class _Columns:
    """1-based column access to a boolean array of atom bits."""

    def __init__(self, bits: np.ndarray):
        self.bits = bits

    def __getitem__(self, k: int) -> np.ndarray:
        return self.bits[..., k - 1]


def normalize_cutoff(rule: CutoffRule) -> tuple[CutoffRule, np.ndarray]:
    """Move the cutoff to zero; scores must then be shifted by the returned vector."""
    shift = np.asarray(rule.cutoff, dtype=float)
    return CutoffRule.of(rule.expr, rule.dim), shift


@lru_cache(maxsize=4096)
def _support(expr: BoolExpr) -> frozenset[int]:
    present = sorted(atoms(expr))
    m = len(present)
    if m > MAX_SUPPORT_ATOMS:
        raise RuleError(
            f"rule uses {m} distinct atoms; exact support enumeration is limited to {MAX_SUPPORT_ATOMS}"
        )
    if m == 0:
        return frozenset()
    idx = np.arange(1 << m, dtype=np.uint32)
    bits = {k: ((idx >> j) & 1).astype(bool) for j, k in enumerate(present)}
    table = np.broadcast_to(eval_bits(expr, bits), idx.shape)
    out = set()
    for j, k in enumerate(present):
        if np.any(table != table[idx ^ np.uint32(1 << j)]):
            out.add(k)
    return frozenset(out)


def support_directions(rule: CutoffRule) -> frozenset[int]:
    """The set S(T) of coordinates along which a cutoff change can flip the rule.

    At the origin, moving ``c_k`` toggles atom ``k`` freely, so ``k`` is a
    support direction exactly when the Boolean function depends on atom ``k``.
    """
    return _support(rule.expr)


def is_constant(rule: CutoffRule) -> bool | None:
    """The constant value of a degenerate rule, or ``None`` if the rule varies."""
    if support_directions(rule):
        return None
    bits = _Columns(np.zeros(rule.dim, dtype=bool))
    return bool(eval_bits(rule.expr, bits))


@dataclass(frozen=True)
class Decomposition:
    x_supp: np.ndarray
    x_perp: np.ndarray


def support_mask(rule: CutoffRule) -> np.ndarray:
    mask = np.zeros(rule.dim, dtype=bool)
    for k in support_directions(rule):
        mask[k - 1] = True
    return mask


def decompose(x, rule: CutoffRule) -> Decomposition:
    """Split ``x`` into its projection on supp(T) and the remainder in N^T."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (rule.dim,):
        raise RuleError(f"score vector has dimension {arr.shape[-1:]}, rule expects {rule.dim}")
    mask = support_mask(rule)
    return Decomposition(np.where(mask, arr, 0.0), np.where(mask, 0.0, arr))


def _check_compatible(a: CutoffRule, b: CutoffRule) -> None:
    if a.dim != b.dim:
        raise RuleError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.cutoff != b.cutoff:
        raise RuleError("cutoff mismatch; normalize both rules first")


def combine(a: CutoffRule, b: CutoffRule, op: str) -> CutoffRule:
    _check_compatible(a, b)
    if op == "and":
        return CutoffRule(And((a.expr, b.expr)), a.cutoff)
    if op == "or":
        return CutoffRule(Or((a.expr, b.expr)), a.cutoff)
    raise RuleError(f"unknown operator {op!r}; expected 'and' or 'or'")


def negate(a: CutoffRule) -> CutoffRule:
    return CutoffRule(Not(a.expr), a.cutoff)


def supports_direct_sum(g: CutoffRule, h: CutoffRule, op: str = "and") -> bool:
    """True iff supp(G) and supp(H) are disjoint and span supp(G op H)."""
    sg, sh = support_directions(g), support_directions(h)
    if sg & sh:
        return False
    return (sg | sh) == support_directions(combine(g, h, op))
