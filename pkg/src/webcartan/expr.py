"""Immutable symbolic expressions over t, x_1..x_n.

Every public constructor returns a canonical tree: sums and products are
flattened with sorted operands, constants are folded, like terms and like
powers are merged.  Subtraction and division have no nodes of their own;
``a - b`` is ``a + (-1)*b`` and ``a / b`` is ``a * b^(-1)``.

Constants are exact :class:`fractions.Fraction` values until evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Mapping, Union

from .errors import DomainFault

Number = Union[int, Fraction]

FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt", "abs")

# Largest integer exponent folded exactly for constant bases.
_MAX_FOLD_EXPONENT = 64


class Expr:
    """Base class of all expression nodes.

    Equality and hashing are structural.  Nodes never change after
    construction, so they can be shared freely between threads.
    """

    _rank = -1

    @cached_property
    def key(self) -> tuple:
        return (self._rank,) + self._payload()

    def _payload(self) -> tuple:
        raise NotImplementedError

    @cached_property
    def _hash(self) -> int:
        return hash(self.key)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self._hash == other._hash and self.key == other.key

    def __setattr__(self, name, value):
        # cached_property writes go through __dict__ and bypass this
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _set(self, **fields) -> None:
        for name, value in fields.items():
            object.__setattr__(self, name, value)

    def __repr__(self) -> str:
        return f"Expr({to_str(self)!r})"

    def __str__(self) -> str:
        return to_str(self)

    @cached_property
    def free_vars(self) -> frozenset:
        return frozenset()

    # operator sugar, mostly for tests and catalog construction
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return quotient(self, as_expr(other))

    def __rtruediv__(self, other):
        return quotient(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)


class Const(Expr):
    _rank = 0

    def __init__(self, value: Number):
        self._set(value=Fraction(value))

    def _payload(self):
        return (self.value,)


class Var(Expr):
    _rank = 1

    def __init__(self, name: str):
        self._set(name=name)

    def _payload(self):
        return (self.name,)

    @cached_property
    def free_vars(self):
        return frozenset((self.name,))


class Pow(Expr):
    _rank = 2

    def __init__(self, base: Expr, exponent: Expr):
        self._set(base=base, exponent=exponent)

    def _payload(self):
        return (self.base.key, self.exponent.key)

    @cached_property
    def free_vars(self):
        return self.base.free_vars | self.exponent.free_vars


class Mul(Expr):
    _rank = 3

    def __init__(self, factors: tuple):
        self._set(factors=tuple(factors))

    def _payload(self):
        return tuple(f.key for f in self.factors)

    @cached_property
    def free_vars(self):
        return frozenset().union(*(f.free_vars for f in self.factors))


class Add(Expr):
    _rank = 4

    def __init__(self, terms: tuple):
        self._set(terms=tuple(terms))

    def _payload(self):
        return tuple(t.key for t in self.terms)

    @cached_property
    def free_vars(self):
        return frozenset().union(*(t.free_vars for t in self.terms))


class Func(Expr):
    _rank = 5

    def __init__(self, name: str, arg: Expr):
        self._set(name=name, arg=arg)

    def _payload(self):
        return (self.name, self.arg.key)

    @cached_property
    def free_vars(self):
        return self.arg.free_vars


class Inverse(Expr):
    """Numeric inverse of a monotone univariate function.

    Represents the y in [lo, hi] with ``fn(y) = arg``, where ``fn`` is an
    expression in the bound variable ``var``.  Used when a web map has no
    closed-form inverse.
    """

    _rank = 6

    def __init__(self, fn: Expr, var: str, arg: Expr, lo: float, hi: float):
        self._set(fn=fn, var=var, arg=arg, lo=float(lo), hi=float(hi))

    def _payload(self):
        return (self.fn.key, self.var, self.arg.key, self.lo, self.hi)

    @cached_property
    def free_vars(self):
        return self.arg.free_vars


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)
HALF = Const(Fraction(1, 2))


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, Fraction)):
        return Const(value)
    if isinstance(value, float):
        return Const(Fraction(value))
    if isinstance(value, str):
        return Var(value)
    raise TypeError(f"cannot convert {value!r} to an expression")


def is_const(e: Expr, value: Number | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _is_integer(v: Fraction) -> bool:
    return v.denominator == 1


# ---------------------------------------------------------------------------
# canonical constructors


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        return e.factors[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return Fraction(1), e


def _with_coeff(c: Fraction, rest: Expr) -> Expr:
    if c == 1:
        return rest
    if isinstance(rest, Mul):
        return Mul((Const(c),) + rest.factors)
    return Mul((Const(c), rest))


def add(*terms: Expr) -> Expr:
    const = Fraction(0)
    collected: dict[Expr, list] = {}
    stack = list(terms)
    flat: list[Expr] = []
    while stack:
        t = stack.pop(0)
        if isinstance(t, Add):
            stack[:0] = t.terms
        else:
            flat.append(t)
    for t in flat:
        if isinstance(t, Const):
            const += t.value
            continue
        c, rest = _split_coeff(t)
        slot = collected.get(rest)
        if slot is None:
            collected[rest] = [c, rest]
        else:
            slot[0] += c
    out = [_with_coeff(c, rest) for c, rest in collected.values() if c != 0]
    out.sort(key=lambda e: e.key)
    if const != 0:
        out.append(Const(const))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Add(tuple(out))


def mul(*factors: Expr) -> Expr:
    coeff = Fraction(1)
    bases: dict[Expr, list] = {}
    exp_args: list[Expr] = []
    stack = list(factors)
    while stack:
        f = stack.pop(0)
        if isinstance(f, Mul):
            stack[:0] = f.factors
            continue
        if isinstance(f, Const):
            coeff *= f.value
            continue
        if isinstance(f, Func) and f.name == "exp":
            exp_args.append(f.arg)
            continue
        if isinstance(f, Pow):
            base, exponent = f.base, f.exponent
        else:
            base, exponent = f, ONE
        slot = bases.get(base)
        if slot is None:
            bases[base] = [base, [exponent]]
        else:
            slot[1].append(exponent)
    if coeff == 0:
        return ZERO
    out: list[Expr] = []
    regroup = False
    if exp_args:
        # exp(a)*exp(b) = exp(a+b), so exp(u)/exp(u) cancels
        merged = func("exp", add(*exp_args)) if len(exp_args) > 1 else Func("exp", exp_args[0])
        if isinstance(merged, Func) and merged.name == "exp":
            out.append(merged)
        else:
            regroup = True
            out.append(merged)
    for base, exps in bases.values():
        p = power(base, exps[0] if len(exps) == 1 else add(*exps))
        if isinstance(p, Const):
            coeff *= p.value
        elif isinstance(p, Mul):
            regroup = True
            out.append(p)
        else:
            out.append(p)
    if regroup:
        return mul(Const(coeff), *out)
    if coeff == 0:
        return ZERO
    out.sort(key=_factor_order)
    if not out:
        return Const(coeff)
    if coeff != 1:
        out.insert(0, Const(coeff))
    if len(out) == 1:
        return out[0]
    return Mul(tuple(out))


def _factor_order(f: Expr) -> tuple:
    if isinstance(f, Pow):
        return (f.base.key, f.exponent.key)
    return (f.key, ONE.key)


def power(base: Expr, exponent: Expr) -> Expr:
    if isinstance(exponent, Const):
        v = exponent.value
        if v == 0:
            return ONE
        if v == 1:
            return base
        if isinstance(base, Const):
            b = base.value
            if b == 1:
                return ONE
            if b == 0 and v < 0:
                # undefined; one representative keeps the form canonical
                return Pow(ZERO, MINUS_ONE)
            if b == 0:
                return ZERO
            if _is_integer(v) and abs(v) <= _MAX_FOLD_EXPONENT:
                return Const(b ** int(v))
            return Pow(base, exponent)
        if _is_integer(v):
            # (a^b)^k = a^(b*k) and (a*b)^k = a^k*b^k hold for integer k
            if isinstance(base, Pow):
                return power(base.base, mul(base.exponent, exponent))
            if isinstance(base, Mul):
                return mul(*(power(f, exponent) for f in base.factors))
    elif is_const(base, 1):
        return ONE
    if isinstance(base, Func) and base.name == "exp":
        return func("exp", mul(base.arg, exponent))
    return Pow(base, exponent)


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if name == "sqrt":
        return power(arg, HALF)
    if name == "ln":
        if is_const(arg, 1):
            return ZERO
        if isinstance(arg, Func) and arg.name == "exp":
            return arg.arg
    elif name == "exp":
        if is_const(arg, 0):
            return ONE
        # exp(ln u) = u wherever the left side is defined
        if isinstance(arg, Func) and arg.name == "ln":
            return arg.arg
    elif name == "sin":
        if is_const(arg, 0):
            return ZERO
    elif name == "cos":
        if is_const(arg, 0):
            return ONE
    elif name == "abs":
        if isinstance(arg, Const):
            return Const(abs(arg.value))
        if isinstance(arg, Func) and arg.name in ("abs", "exp"):
            return arg
    return Func(name, arg)


def neg(e: Expr) -> Expr:
    return mul(MINUS_ONE, e)


def quotient(num: Expr, den: Expr) -> Expr:
    """``num / den``; ``u/u`` collapses to 1, valid only where ``u != 0``."""
    return mul(num, power(den, MINUS_ONE))


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def inverse(fn: Expr, var: str, arg: Expr, lo: float, hi: float) -> Expr:
    return Inverse(fn, var, arg, lo, hi)


def canonical(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the canonical constructors."""
    return _rebuild(e, lambda v: None)


def _rebuild(e: Expr, leaf: Callable[[Var], Expr | None]) -> Expr:
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        repl = leaf(e)
        return e if repl is None else repl
    if isinstance(e, Add):
        return add(*(_rebuild(t, leaf) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(_rebuild(f, leaf) for f in e.factors))
    if isinstance(e, Pow):
        return power(_rebuild(e.base, leaf), _rebuild(e.exponent, leaf))
    if isinstance(e, Func):
        return func(e.name, _rebuild(e.arg, leaf))
    if isinstance(e, Inverse):
        return Inverse(canonical(e.fn), e.var, _rebuild(e.arg, leaf), e.lo, e.hi)
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expr, bindings: Mapping[str, Expr]) -> Expr:
    """Simultaneous substitution of variables, followed by canonicalization."""
    if not bindings:
        return e
    bound = {k: as_expr(v) for k, v in bindings.items()}
    return _rebuild(e, lambda v: bound.get(v.name))


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, var: str) -> Expr:
    """Canonical partial derivative of ``e`` with respect to ``var``.

    Logarithms follow the logarithmic-derivative rule d(ln u) = du/u, which
    is also the derivative of ln|u|; ``ln(abs(u))`` is handled the same way
    so no ``abs`` node appears in the result.
    """
    return _diff(e, var, {})


def _diff(e: Expr, var: str, memo: dict) -> Expr:
    if var not in e.free_vars:
        return ZERO
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Var):
        out = ONE
    elif isinstance(e, Add):
        out = add(*(_diff(t, var, memo) for t in e.terms))
    elif isinstance(e, Mul):
        parts = []
        for i, f in enumerate(e.factors):
            df = _diff(f, var, memo)
            if not is_const(df, 0):
                parts.append(mul(df, *e.factors[:i], *e.factors[i + 1:]))
        out = add(*parts)
    elif isinstance(e, Pow):
        b, x = e.base, e.exponent
        db = _diff(b, var, memo)
        if var not in x.free_vars:
            out = mul(x, power(b, add(x, MINUS_ONE)), db)
        else:
            dx = _diff(x, var, memo)
            out = mul(e, add(mul(dx, func("ln", b)), mul(x, db, power(b, MINUS_ONE))))
    elif isinstance(e, Func):
        u = e.arg
        if e.name == "ln" and isinstance(u, Func) and u.name == "abs":
            u = u.arg
            out = mul(_diff(u, var, memo), power(u, MINUS_ONE))
        else:
            du = _diff(u, var, memo)
            if e.name == "ln":
                out = mul(du, power(u, MINUS_ONE))
            elif e.name == "exp":
                out = mul(e, du)
            elif e.name == "sin":
                out = mul(func("cos", u), du)
            elif e.name == "cos":
                out = neg(mul(func("sin", u), du))
            elif e.name == "abs":
                out = mul(du, u, power(e, MINUS_ONE))
            else:  # pragma: no cover - sqrt never survives canonicalization
                raise AssertionError(e.name)
    elif isinstance(e, Inverse):
        # d/dv fn^{-1}(arg) = arg' / fn'(fn^{-1}(arg))
        dfn = substitute(differentiate(e.fn, e.var), {e.var: e})
        out = mul(_diff(e.arg, var, memo), power(dfn, MINUS_ONE))
    else:
        raise TypeError(f"not an expression node: {e!r}")
    memo[e] = out
    return out


# ---------------------------------------------------------------------------
# numeric evaluation


@dataclass(frozen=True)
class Point:
    """A point (t, x_1, ..., x_n) of the ambient space."""

    t: float
    x: tuple

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if not all(math.isfinite(v) for v in (self.t, *self.x)):
            raise ValueError(f"non-finite coordinate in {self}")

    @property
    def dim(self) -> int:
        return len(self.x) + 1

    def env(self, names: Iterable[str], time: str = "t") -> dict:
        names = list(names)
        if len(names) != len(self.x):
            raise ValueError(f"point has {len(self.x)} space coordinates, expected {len(names)}")
        env = dict(zip(names, self.x))
        env[time] = self.t
        return env


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """IEEE double value of ``e`` at ``point`` (a name -> value mapping).

    Raises DomainFault for logarithms of non-positive numbers, division by
    zero, 0 to a negative power, and other out-of-domain operations.
    """
    missing = e.free_vars - set(point)
    if missing:
        raise KeyError(f"no value for {sorted(missing)}")
    return compile_expr(e)(point)


def compile_expr(e: Expr) -> Callable[[Mapping[str, float]], float]:
    """Return a closure evaluating ``e``; cached per node."""
    return _compiled(e)


@lru_cache(maxsize=8192)
def _compiled(e: Expr):
    return _compile(e)


def _guard(node: Expr, op):
    def run(env, *args):
        try:
            v = op(*args)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainFault(node, env, str(exc)) from None
        if isinstance(v, complex) or not math.isfinite(v):
            raise DomainFault(node, env, "non-finite result")
        return v

    return run


def _real_pow(b: float, x: float) -> float:
    if b == 0.0 and x < 0:
        raise ZeroDivisionError("0 to a negative power")
    if b < 0 and not float(x).is_integer():
        raise ValueError("negative base with non-integer exponent")
    return math.pow(b, x)


def _ln(u: float) -> float:
    if u <= 0:
        raise ValueError("logarithm of a non-positive number")
    return math.log(u)


_UNARY = {"ln": _ln, "exp": math.exp, "sin": math.sin, "cos": math.cos, "abs": abs}


def _compile(e: Expr):
    if isinstance(e, Const):
        v = float(e.value)
        return lambda env: v
    if isinstance(e, Var):
        name = e.name
        return lambda env: float(env[name])
    if isinstance(e, Add):
        parts = [_compiled(t) for t in e.terms]
        check = _guard(e, math.fsum)
        return lambda env: check(env, [p(env) for p in parts])
    if isinstance(e, Mul):
        parts = [_compiled(f) for f in e.factors]
        check = _guard(e, lambda s: s)

        def run_mul(env):
            acc = 1.0
            for p in parts:
                acc *= p(env)
            return check(env, acc)

        return run_mul
    if isinstance(e, Pow):
        fb, fx = _compiled(e.base), _compiled(e.exponent)
        if isinstance(e.exponent, Const) and _is_integer(e.exponent.value):
            k = int(e.exponent.value)
            op = _guard(e, lambda b: _real_pow(b, k) if k < 0 else b ** k)
            return lambda env: op(env, fb(env))
        op = _guard(e, _real_pow)
        return lambda env: op(env, fb(env), fx(env))
    if isinstance(e, Func):
        fa = _compiled(e.arg)
        op = _guard(e, _UNARY[e.name])
        return lambda env: op(env, fa(env))
    if isinstance(e, Inverse):
        fa = _compiled(e.arg)
        solve = _inverse_solver(e)
        return lambda env: solve(env, fa(env))
    raise TypeError(f"not an expression node: {e!r}")


def _inverse_solver(e: Inverse):
    from scipy.optimize import brentq

    g = _compiled(e.fn)
    var = e.var

    def resid(y, target):
        return g({var: y}) - target

    @lru_cache(maxsize=4096)
    def solve_value(target: float) -> float:
        lo, hi = e.lo, e.hi
        flo, fhi = resid(lo, target), resid(hi, target)
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        if (flo > 0) == (fhi > 0):
            raise ValueError(f"{target!r} outside the range of the inverted map on [{lo}, {hi}]")
        return brentq(resid, lo, hi, args=(target,), xtol=1e-300, rtol=4 * 2.220446049250313e-16, maxiter=200)

    def run(env, target):
        try:
            return solve_value(target)
        except (ValueError, ZeroDivisionError, OverflowError, DomainFault) as exc:
            raise DomainFault(e, env, str(exc)) from None

    return run


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def to_str(e: Expr) -> str:
    """Infix text that :func:`webcartan.parser.parse` maps back to ``e``.

    ``Inverse`` nodes print in a readable but non-parseable form.
    """
    return _fmt(e)[0]


def _wrap(text_prec: tuple[str, int], min_prec: int) -> str:
    text, prec = text_prec
    return text if prec >= min_prec else f"({text})"


def _fmt_fraction(v: Fraction) -> tuple[str, int]:
    if v.denominator == 1:
        return str(v.numerator), (_PREC_ATOM if v >= 0 else _PREC_NEG)
    if v < 0:
        return f"-{-v.numerator}/{v.denominator}", _PREC_NEG
    return f"{v.numerator}/{v.denominator}", _PREC_MUL


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value < 0
    c, _ = _split_coeff(e)
    return c < 0


def _fmt(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        return _fmt_fraction(e.value)
    if isinstance(e, Var):
        return e.name, _PREC_ATOM
    if isinstance(e, Func):
        return f"{e.name}({_fmt(e.arg)[0]})", _PREC_ATOM
    if isinstance(e, Inverse):
        return f"inv[{e.var} -> {to_str(e.fn)}; {e.lo!r}, {e.hi!r}]({to_str(e.arg)})", _PREC_ATOM
    if isinstance(e, Add):
        out = _wrap(_fmt(e.terms[0]), _PREC_ADD)
        for t in e.terms[1:]:
            if _is_negative(t):
                out += " - " + _wrap(_fmt(neg(t)), _PREC_MUL)
            else:
                out += " + " + _wrap(_fmt(t), _PREC_MUL)
        return out, _PREC_ADD
    if isinstance(e, (Mul, Pow)):
        return _fmt_product(e)
    raise TypeError(f"not an expression node: {e!r}")


def _fmt_power(b: Expr, x: Expr) -> str:
    base = _wrap(_fmt(b), _PREC_ATOM)
    if isinstance(x, Const) and x.value > 0 and _is_integer(x.value):
        return f"{base}^{x.value.numerator}"
    if isinstance(x, Var):
        return f"{base}^{x.name}"
    return f"{base}^({_fmt(x)[0]})"


def _fmt_product(e: Expr) -> tuple[str, int]:
    factors = e.factors if isinstance(e, Mul) else (e,)
    coeff = Fraction(1)
    num: list[str] = []
    den: list[str] = []
    for f in factors:
        if isinstance(f, Const):
            coeff = f.value
            continue
        if isinstance(f, Pow) and is_const(f.base, 0) and is_const(f.exponent, -1):
            num.append("0^(-1)")
        elif isinstance(f, Pow) and isinstance(f.exponent, Const) and f.exponent.value < 0:
            flipped = -f.exponent.value
            den.append(_wrap(_fmt(f.base), _PREC_POW) if flipped == 1 else _fmt_power(f.base, Const(flipped)))
        elif isinstance(f, Pow):
            num.append(_fmt_power(f.base, f.exponent))
        else:
            num.append(_wrap(_fmt(f), _PREC_POW if isinstance(f, Add) else _PREC_MUL))
    sign = "-" if coeff < 0 else ""
    coeff = abs(coeff)
    if coeff.numerator != 1:
        num.insert(0, str(coeff.numerator))
    if coeff.denominator != 1:
        den.insert(0, str(coeff.denominator))
    text = "*".join(num) if num else "1"
    if den:
        text += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
    if sign:
        return sign + text, _PREC_NEG
    if not den and len(num) == 1 and isinstance(e, Pow):
        return text, _PREC_POW
    return text, _PREC_MUL
