"""Reference systems and random generators for property checks."""

from __future__ import annotations

import random
from fractions import Fraction

from . import expr as ex
from .coframe import OdeSystem, choose_normalizer, torsion_matrix
from .equivalence import WebMap
from .errors import WebCartanError
from .expr import Expr

CATALOG = {
    "product": ("x1*x2", "x2"),
    "square": ("x2^2", "1"),
    "exp": ("exp(x2)", "1"),
    "gauss": ("exp(x2^2)", "1"),
}

N1_PAIRS = [
    # f(x), F(X), anchor (x0, X0), interval
    ("1", "2", (0.0, 0.0), (0.0, 1.0)),
    ("x", "X", (1.0, 1.0), (1.0, 2.0)),
    ("1+x^2", "1", (0.0, 0.0), (0.0, 1.0)),
    ("exp(x)", "1", (0.0, 0.0), (0.0, 1.0)),
    ("2+sin(x)", "3", (0.0, 0.0), (0.0, 1.0)),
]


def catalog_system(name: str) -> OdeSystem:
    return OdeSystem.from_strings(CATALOG[name])


def _rational(rng: random.Random, choices=(1, 2, 3), dens=(1, 2)) -> Fraction:
    return Fraction(rng.choice(choices), rng.choice(dens))


def _positive_poly(rng: random.Random, xs: list[Expr], terms: int) -> Expr:
    """Sum of monomials of degree <= 2 with positive coefficients."""
    out = []
    for _ in range(terms):
        deg = rng.randint(0, 2)
        mono = [rng.choice(xs) for _ in range(deg)]
        out.append(ex.mul(ex.Const(_rational(rng)), *mono))
    return ex.add(*out)


def random_rational_system(n: int, rng: random.Random) -> OdeSystem:
    """Rational right-hand sides positive on [1, 2]^n with nonflat torsion."""
    xs = [ex.Var(f"x{i}") for i in range(1, n + 1)]
    for _ in range(100):
        f = [ex.quotient(_positive_poly(rng, xs, rng.randint(1, 3)), _positive_poly(rng, xs, rng.randint(1, 2)))
             for _ in range(n)]
        sys = OdeSystem(tuple(f))
        try:
            choose_normalizer(torsion_matrix(sys), sys)
        except WebCartanError:
            continue
        return sys
    raise RuntimeError("could not draw a system with nonflat torsion")


def _piece(rng: random.Random, u: Expr, kind: str) -> Expr:
    if kind == "affine":
        a = _rational(rng, (1, 2, 3), (1, 2)) * rng.choice((1, -1))
        b = Fraction(rng.randint(-2, 2), 2)
        return ex.add(ex.mul(ex.Const(a), u), ex.Const(b))
    if kind == "exp":
        return ex.func("exp", ex.mul(ex.Const(Fraction(1, rng.choice((1, 2)))), u))
    if kind == "cubic":
        return ex.add(ex.power(u, ex.Const(3)), ex.mul(ex.Const(_rational(rng)), u))
    raise ValueError(kind)


def random_web_map(sys: OdeSystem, rng: random.Random, kinds=("affine", "exp", "cubic")) -> WebMap:
    """phi0 affine in t; each phi_i a composition of one or two monotone pieces."""
    a0 = _rational(rng) * rng.choice((1, -1))
    phi = [ex.add(ex.mul(ex.Const(a0), ex.Var(sys.time)), ex.Const(Fraction(rng.randint(-2, 2))))]
    for name, (lo, hi) in zip(sys.names, sys.box):
        while True:
            u: Expr = ex.Var(name)
            for _ in range(rng.randint(1, 2)):
                u = _piece(rng, u, rng.choice(kinds))
            vals = [abs(ex.evaluate(u, {name: v})) for v in (lo, hi)]
            if max(vals) < 1e3 and ex.evaluate(u, {name: lo}) != ex.evaluate(u, {name: hi}):
                break
        phi.append(u)
    return WebMap(tuple(phi), sys.names, sys.time)


_UNARY = ("ln", "exp", "sin", "cos", "sqrt")


def random_expression(rng: random.Random, names, depth: int = 3) -> Expr:
    """Draw from a bounded grammar: + - * / ^k and the unary functions."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return ex.Var(rng.choice(list(names)))
        return ex.Const(Fraction(rng.randint(1, 5), rng.choice((1, 2, 3))))
    r = rng.random()
    if r < 0.55:
        a = random_expression(rng, names, depth - 1)
        b = random_expression(rng, names, depth - 1)
        op = rng.choice("+-*/")
        return {"+": ex.add, "-": ex.sub, "*": ex.mul, "/": ex.quotient}[op](a, b)
    if r < 0.7:
        base = random_expression(rng, names, depth - 1)
        return ex.power(base, ex.Const(rng.choice((2, 3, -1, -2, Fraction(1, 2)))))
    return ex.func(rng.choice(_UNARY), random_expression(rng, names, depth - 1))
