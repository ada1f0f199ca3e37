"""Shared generators for randomized rule tests."""

import itertools

import numpy as np

from mrd.rules import And, Atom, Const, CutoffRule, Not, Or, eval_bits


def random_expr(rng, atoms, depth=3):
    """Random Boolean tree over the given atom indices."""
    atoms = list(atoms)
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.05:
            return Const(bool(rng.integers(2)))
        return Atom(int(rng.choice(atoms)))
    r = rng.random()
    if r < 0.2:
        return Not(random_expr(rng, atoms, depth - 1))
    n = int(rng.integers(2, 4))
    kids = tuple(random_expr(rng, atoms, depth - 1) for _ in range(n))
    return And(kids) if r < 0.6 else Or(kids)


def random_rule(rng, dim, atoms=None, depth=3):
    atoms = range(1, dim + 1) if atoms is None else atoms
    return CutoffRule.of(random_expr(rng, atoms, depth), dim)


def random_scores(rng, n, dim):
    # include exact zeros so strict-inequality ties get exercised
    x = rng.normal(size=(n, dim))
    x[rng.random((n, dim)) < 0.1] = 0.0
    return x


def brute_support(rule):
    """Dependence of the truth table on each atom, by full enumeration over all K atoms."""
    K = rule.dim
    out = set()
    for bits in itertools.product((False, True), repeat=K):
        base = bool(eval_bits(rule.expr, {k + 1: bits[k] for k in range(K)}))
        for k in range(K):
            flipped = list(bits)
            flipped[k] = not flipped[k]
            if bool(eval_bits(rule.expr, {j + 1: flipped[j] for j in range(K)})) != base:
                out.add(k + 1)
    return out
