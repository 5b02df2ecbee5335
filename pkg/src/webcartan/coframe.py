"""Torsion, invariant coframe and structure functions of an autonomous system.

For dx_i/dt = f_i(x) the coframe adapted to web transformations is
``theta^0 = l*dt`` and ``theta^i = (l/f_i)*dx_i`` where ``l`` is a
nonvanishing torsion coefficient ``l_pq = f_q * d(ln|f_p|)/dx_q``.  Its
exterior derivatives, written in the coframe itself, give the structure
functions ``c^k_ij`` with ``d theta^k = sum_{i<j} c^k_ij theta^i ^ theta^j``.
"""

from __future__ import annotations

import itertools
import math
import random
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from . import expr as ex
from .errors import DimensionError, DomainFault, FlatTorsion, InvalidSystem
from .expr import Expr, Point
from .parser import parse

DEFAULT_INTERVAL = (1.0, 2.0)
DEFAULT_T_INTERVAL = (0.0, 1.0)

# Number of random box points used (besides the center) to test whether a
# torsion coefficient vanishes.
ZERO_TEST_POINTS = 8
ZERO_TOL = 1e-12


class VanishingWarning(UserWarning):
    """A right-hand side vanishes at a spot-check point of the box."""


@dataclass(frozen=True)
class OdeSystem:
    """dx_i/dt = f_i(x_1, ..., x_n) with a sampling box for the x_i.

    ``names`` default to x1..xn, ``box`` to [1, 2] per variable.  The time
    variable only matters for sampling, through ``t_box``.
    """

    f: tuple
    names: tuple = None
    box: tuple = None
    time: str = "t"
    t_box: tuple = DEFAULT_T_INTERVAL

    def __post_init__(self):
        f = tuple(ex.as_expr(e) for e in self.f)
        n = len(f)
        if n < 1:
            raise InvalidSystem("a system needs at least one equation")
        names = tuple(self.names) if self.names is not None else tuple(f"x{i}" for i in range(1, n + 1))
        box = tuple(tuple(map(float, b)) for b in self.box) if self.box is not None else (DEFAULT_INTERVAL,) * n
        if len(names) != n or len(box) != n:
            raise InvalidSystem(f"{n} right-hand sides but {len(names)} names and {len(box)} intervals")
        if self.time in names or len(set(names)) != n:
            raise InvalidSystem(f"variable names must be distinct and differ from {self.time!r}")
        for name, (lo, hi) in zip(names, box):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidSystem(f"bad interval [{lo}, {hi}] for {name}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "t_box", tuple(map(float, self.t_box)))
        report = _spot_check(self)
        for i, p in report:
            warnings.warn(f"f{i} vanishes or is undefined at {p}", VanishingWarning, stacklevel=3)

    @classmethod
    def from_strings(cls, rhs: Sequence[str], names: Sequence[str] | None = None, box=None, **kw) -> "OdeSystem":
        names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(1, len(rhs) + 1))
        time = kw.get("time", "t")
        f = tuple(parse(s, (*names, time)) for s in rhs)
        return cls(f, names, box, **kw)

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def coords(self) -> tuple:
        """Coordinate names (t, x_1, ..., x_n); index 0 is time."""
        return (self.time,) + self.names

    def center(self) -> Point:
        return Point(sum(self.t_box) / 2, [(lo + hi) / 2 for lo, hi in self.box])

    def corners(self) -> Iterator[Point]:
        t = sum(self.t_box) / 2
        for xs in itertools.product(*self.box):
            yield Point(t, xs)

    def env(self, p: Point) -> dict:
        return p.env(self.names, self.time)

    def contains(self, p: Point, tol: float = 1e-9) -> bool:
        return all(lo - tol * (hi - lo) <= v <= hi + tol * (hi - lo) for v, (lo, hi) in zip(p.x, self.box))

    def random_points(self, count: int, rng: random.Random, margin: float = 0.0) -> list[Point]:
        """Uniform points of the box, kept ``margin`` (relative width) from its faces."""
        pts = []
        for _ in range(count):
            xs = [lo + (hi - lo) * (margin + (1 - 2 * margin) * rng.random()) for lo, hi in self.box]
            t0, t1 = self.t_box
            pts.append(Point(t0 + (t1 - t0) * rng.random(), xs))
        return pts


def _spot_check(sys: OdeSystem) -> list:
    bad = []
    for p in itertools.chain([sys.center()], sys.corners()):
        env = sys.env(p)
        for i, fi in enumerate(sys.f, start=1):
            if sys.time in fi.free_vars:
                continue
            try:
                v = ex.evaluate(fi, env)
            except DomainFault:
                v = 0.0
            if v == 0.0:
                bad.append((i, p))
    return bad


@dataclass
class ValidationReport:
    n: int
    autonomy_violations: list = field(default_factory=list)
    vanishing: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.autonomy_violations and not self.vanishing

    def messages(self) -> list[str]:
        out = [f"f{i} depends on time (system is not autonomous)" for i in self.autonomy_violations]
        out += [f"f{i} vanishes or is undefined at {tuple(p.x)}" for i, p in self.vanishing]
        return out


def validate_system(sys: OdeSystem) -> ValidationReport:
    """Check autonomy and nonvanishing of every f_i at the box center and corners."""
    report = ValidationReport(sys.n)
    report.autonomy_violations = [i for i, fi in enumerate(sys.f, start=1) if sys.time in fi.free_vars]
    report.vanishing = _spot_check(sys)
    return report


def require_valid(sys: OdeSystem) -> None:
    report = validate_system(sys)
    if not report.valid:
        raise InvalidSystem("; ".join(report.messages()))


# ---------------------------------------------------------------------------
# torsion and normalization


@dataclass(frozen=True)
class TorsionMatrix:
    """Off-diagonal torsion coefficients, indexed 1-based as ``T[i, j]``."""

    n: int
    entries: dict

    def __getitem__(self, ij: tuple) -> Expr:
        i, j = ij
        if i == j:
            raise KeyError("the torsion matrix has no diagonal")
        return self.entries[(i, j)]

    def pairs(self) -> list:
        return sorted(self.entries)


def torsion_matrix(sys: OdeSystem) -> TorsionMatrix:
    """l_ij = f_j * (df_i/dx_j) / f_i for i != j."""
    require_valid(sys)
    if sys.n < 2:
        raise DimensionError("torsion is empty for a single equation; use the n=1 solver")
    entries = {}
    for i, j in itertools.permutations(range(1, sys.n + 1), 2):
        fi, fj = sys.f[i - 1], sys.f[j - 1]
        dfi = ex.differentiate(fi, sys.names[j - 1])
        entries[(i, j)] = ex.mul(fj, dfi, ex.power(fi, ex.MINUS_ONE))
    return TorsionMatrix(sys.n, entries)


def vanishes(e: Expr, sys: OdeSystem, seed: int = 0) -> bool:
    """Heuristic zero test: canonical zero, or numerically zero at the box
    center and a few random box points."""
    if ex.is_const(e, 0):
        return True
    if isinstance(e, ex.Const):
        return False
    rng = random.Random(seed)
    pts = [sys.center()] + sys.random_points(ZERO_TEST_POINTS, rng)
    for p in pts:
        try:
            v = ex.evaluate(e, sys.env(p))
        except DomainFault:
            return False
        if abs(v) > ZERO_TOL:
            return False
    return True


@dataclass(frozen=True)
class NormalizerChoice:
    """The torsion coefficient l_pq used as the group parameter a."""

    pair: tuple
    ell: Expr

    @property
    def label(self) -> str:
        p, q = self.pair
        return f"l{p}{q}" if max(p, q) < 10 else f"l{p},{q}"


def choose_normalizer(T: TorsionMatrix, sys: OdeSystem) -> NormalizerChoice:
    """First row-major pair whose torsion is not identically zero and is
    nonzero at the box center."""
    if T.n < 2:
        raise DimensionError("normalization needs n >= 2")
    env = sys.env(sys.center())
    for pair in T.pairs():
        ell = T[pair]
        if vanishes(ell, sys):
            continue
        try:
            at_center = ex.evaluate(ell, env)
        except DomainFault:
            continue
        if at_center != 0.0:
            return NormalizerChoice(pair, ell)
    raise FlatTorsion("all torsion vanishes; normalization unavailable")


# ---------------------------------------------------------------------------
# coframe and structure functions


@dataclass(frozen=True)
class InvariantCoframe:
    """theta^0 = s[0]*dt and theta^i = s[i]*dx_i."""

    s: tuple
    choice: NormalizerChoice

    @property
    def n(self) -> int:
        return len(self.s) - 1

    def values(self, env) -> list[float]:
        return [ex.evaluate(sk, env) for sk in self.s]


def invariant_coframe(sys: OdeSystem, choice: NormalizerChoice) -> InvariantCoframe:
    ell = choice.ell
    s = (ell,) + tuple(ex.quotient(ell, fi) for fi in sys.f)
    cf = InvariantCoframe(s, choice)
    env = sys.env(sys.center())
    for k, sk in enumerate(s):
        if ex.evaluate(sk, env) == 0.0:
            raise InvalidSystem(f"coframe coefficient s{k} vanishes at the box center")
    return cf


def structure_slots(n: int) -> list:
    """Index triples (k, i, j), i < j, that may be nonzero for a diagonal coframe."""
    slots = [(0, 0, j) for j in range(1, n + 1)]
    for k in range(1, n + 1):
        slots += [(k, min(j, k), max(j, k)) for j in range(n + 1) if j != k]
    return slots


def structure_label(k: int, i: int, j: int) -> str:
    if max(k, i, j) < 10:
        return f"c^{k}_{{{i}{j}}}"
    return f"c^{k}_{{{i},{j}}}"


@dataclass(frozen=True)
class StructureFunctions:
    """c^k_ij as expressions, keyed by (k, i, j) with i < j; index 0 is time.

    ``coeffs`` holds exactly the entries of :func:`structure_slots`.
    """

    n: int
    coeffs: dict
    choice: NormalizerChoice | None = None

    def __post_init__(self):
        for k, i, j in self.coeffs:
            if k == 0:
                assert i == 0, f"dtheta^0 has a term theta^{i}^theta^{j}"
            else:
                assert k in (i, j), f"dtheta^{k} has a term theta^{i}^theta^{j}"

    def __getitem__(self, kij: tuple) -> Expr:
        k, i, j = kij
        if i > j:
            return ex.neg(self[k, j, i])
        return self.coeffs.get((k, i, j), ex.ZERO)

    @property
    def slots(self) -> list:
        return structure_slots(self.n)

    @property
    def labels(self) -> list[str]:
        return [structure_label(*s) for s in self.slots]

    def vector(self) -> list[Expr]:
        return [self.coeffs[s] for s in self.slots]

    def evaluate(self, env) -> list[float]:
        return [ex.evaluate(e, env) for e in self.vector()]


def exterior_derivative(oneform: Sequence[Expr], coords: Sequence[str]) -> dict:
    """d of sum_a w_a dx^a as {(a, b): coefficient of dx^a ^ dx^b}, a < b."""
    out = {}
    for a, b in itertools.combinations(range(len(coords)), 2):
        term = ex.sub(ex.differentiate(oneform[b], coords[a]), ex.differentiate(oneform[a], coords[b]))
        if not ex.is_const(term, 0):
            out[(a, b)] = term
    return out


def structure_functions(sys: OdeSystem, cf: InvariantCoframe) -> StructureFunctions:
    """Exterior-differentiate each theta^k and rewrite dx_a = theta^a / s_a."""
    coords = sys.coords
    dim = len(coords)
    coeffs = {}
    allowed = set(structure_slots(sys.n))
    for k in range(dim):
        oneform = [cf.s[k] if a == k else ex.ZERO for a in range(dim)]
        two = exterior_derivative(oneform, coords)
        for (a, b), w in two.items():
            c = ex.mul(w, ex.power(cf.s[a], ex.MINUS_ONE), ex.power(cf.s[b], ex.MINUS_ONE))
            if ex.is_const(c, 0):
                continue
            if (k, a, b) not in allowed:
                raise AssertionError(f"structure function c^{k}_{a}{b} = {c} breaks diagonal sparsity")
            coeffs[(k, a, b)] = c
    for slot in allowed:
        coeffs.setdefault(slot, ex.ZERO)
    return StructureFunctions(sys.n, coeffs, cf.choice)


def numeric_structure_oracle(sys: OdeSystem, cf: InvariantCoframe, p: Point, h: float = 1e-5) -> dict:
    """The structure functions at ``p`` with central differences in place of
    symbolic derivatives of the coframe coefficients."""
    for v, (lo, hi) in zip(p.x, sys.box):
        if not (lo + h <= v <= hi - h):
            raise ValueError(f"{p} is not interior to the box with margin {h}")
    coords = sys.coords
    base = [p.t, *p.x]

    def at(vals):
        return dict(zip(coords, vals))

    s = [ex.evaluate(sk, at(base)) for sk in cf.s]
    out = {}
    for k, i, j in structure_slots(sys.n):
        # d(s_k dx_k) = sum_a ds_k/dx_a dx_a ^ dx_k
        other = i if j == k else j
        sign = 1.0 if other < k else -1.0
        up, down = list(base), list(base)
        up[other] += h
        down[other] -= h
        deriv = (ex.evaluate(cf.s[k], at(up)) - ex.evaluate(cf.s[k], at(down))) / (2 * h)
        out[(k, i, j)] = sign * deriv / (s[i] * s[j])
    return out


def invariants(sys: OdeSystem):
    """Torsion, normalizer, coframe and structure functions in one call."""
    T = torsion_matrix(sys)
    choice = choose_normalizer(T, sys)
    cf = invariant_coframe(sys, choice)
    return T, choice, cf, structure_functions(sys, cf)
