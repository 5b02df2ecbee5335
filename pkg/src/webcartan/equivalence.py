"""Web maps, pullback verification, signature screening and symmetry dimension.

A web map is Phi(t, x) = (phi_0(t), phi_1(x_1), ..., phi_n(x_n)).  Two
systems are web equivalent when some web map carries the invariant coframe
of one onto the invariant coframe of the other; structure functions are
then transported pointwise.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from .coframe import OdeSystem, invariants, require_valid
from .errors import (
    DimensionError,
    DomainFault,
    IllConditionedNormalizer,
    InsufficientProbes,
    InversionFailure,
    NonAutonomousResult,
    PolicyMismatch,
    SignMismatch,
)
from .expr import Expr, Point
from .quadrature import Quadrature

PULLBACK_TOL = 1e-6
SIGNATURE_TOL = 1e-6
MAX_SKIPPED_FRACTION = 0.2
RANK_RELATIVE_TOL = 1e-8
# Singular values of the width-scaled Jacobian below this are treated as
# finite-difference noise.
RANK_NOISE_FLOOR = 1e-6
N1_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class WebMap:
    """phi[0] is a function of time, phi[i] a function of the i-th space variable."""

    phi: tuple
    names: tuple
    time: str = "t"

    def __post_init__(self):
        phi = tuple(ex.as_expr(p) for p in self.phi)
        names = tuple(self.names)
        if len(phi) != len(names) + 1:
            raise DimensionError(f"{len(phi)} components for {len(names)} space variables")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "names", names)
        for k, (p, coord) in enumerate(zip(phi, self.coords)):
            extra = p.free_vars - {coord}
            if extra:
                raise InversionFailure(f"phi{k} may depend on {coord} only, found {sorted(extra)}")

    @classmethod
    def identity(cls, sys: OdeSystem) -> "WebMap":
        return cls(tuple(ex.Var(c) for c in sys.coords), sys.names, sys.time)

    @property
    def coords(self) -> tuple:
        return (self.time,) + self.names

    @property
    def n(self) -> int:
        return len(self.names)

    def derivatives(self) -> tuple:
        return tuple(ex.differentiate(p, c) for p, c in zip(self.phi, self.coords))

    def apply(self, p: Point) -> Point:
        vals = [ex.evaluate(phi, {c: v}) for phi, c, v in zip(self.phi, self.coords, (p.t, *p.x))]
        return Point(vals[0], vals[1:])

    def intervals(self, sys: OdeSystem) -> list:
        return [sys.t_box, *sys.box]

    def orientation(self, sys: OdeSystem) -> tuple:
        """Sign of each component's derivative at the center of its interval."""
        out = []
        for d, c, (lo, hi) in zip(self.derivatives(), self.coords, self.intervals(sys)):
            out.append(1 if ex.evaluate(d, {c: (lo + hi) / 2}) > 0 else -1)
        return tuple(out)

    def check_monotone(self, sys: OdeSystem, samples: int = 65) -> None:
        """Raise InversionFailure unless every component has a derivative of
        one strict sign on a grid of its interval."""
        for k, (d, c, (lo, hi)) in enumerate(zip(self.derivatives(), self.coords, self.intervals(sys))):
            signs = set()
            for v in np.linspace(lo, hi, samples):
                try:
                    dv = ex.evaluate(d, {c: float(v)})
                except DomainFault as exc:
                    raise InversionFailure(f"phi{k} is not differentiable at {c}={v}: {exc}") from None
                signs.add(0 if dv == 0 else (1 if dv > 0 else -1))
            if 0 in signs or len(signs) > 1:
                raise InversionFailure(f"phi{k} is not strictly monotone on [{lo}, {hi}]")


def _symbolic_inverse(g: Expr, var: str, target: Expr) -> Expr | None:
    if g == ex.Var(var):
        return target
    if var not in g.free_vars:
        return None
    if isinstance(g, (ex.Add, ex.Mul)):
        parts = g.terms if isinstance(g, ex.Add) else g.factors
        dep = [p for p in parts if var in p.free_vars]
        if len(dep) != 1:
            return None
        rest = [p for p in parts if var not in p.free_vars]
        if isinstance(g, ex.Add):
            return _symbolic_inverse(dep[0], var, ex.sub(target, ex.add(*rest)))
        return _symbolic_inverse(dep[0], var, ex.quotient(target, ex.mul(*rest)))
    if isinstance(g, ex.Pow):
        if var not in g.exponent.free_vars:
            return _symbolic_inverse(g.base, var, ex.power(target, ex.quotient(ex.ONE, g.exponent)))
        if isinstance(g.base, ex.Const) and g.base.value > 0:
            return _symbolic_inverse(g.exponent, var, ex.quotient(ex.func("ln", target), ex.func("ln", g.base)))
        return None
    if isinstance(g, ex.Func) and g.name == "exp":
        return _symbolic_inverse(g.arg, var, ex.func("ln", target))
    if isinstance(g, ex.Func) and g.name == "ln":
        return _symbolic_inverse(g.arg, var, ex.func("exp", target))
    return None


def inverse_expr(g: Expr, var: str, lo: float, hi: float) -> Expr:
    """An expression in ``var`` for the inverse of the monotone map ``g`` on [lo, hi].

    Closed forms are tried first and accepted only if they round-trip
    numerically; otherwise an :class:`~webcartan.expr.Inverse` node with a
    bracketing interval slightly wider than [lo, hi] is returned.
    """
    y = ex.Var(var)
    cand = _symbolic_inverse(g, var, y)
    if cand is not None:
        try:
            for v in np.linspace(lo, hi, 7):
                gv = ex.evaluate(g, {var: float(v)})
                back = ex.evaluate(cand, {var: gv})
                if abs(back - v) > 1e-11 * (1 + abs(v)):
                    break
            else:
                return cand
        except DomainFault:
            pass
    dg = ex.differentiate(g, var)
    width = hi - lo
    blo, bhi = lo, hi
    for pad in (0.05, 1e-3, 1e-9):
        try:
            ends = [ex.evaluate(dg, {var: lo - pad * width}), ex.evaluate(dg, {var: hi + pad * width})]
            mid = ex.evaluate(dg, {var: (lo + hi) / 2})
        except DomainFault:
            continue
        if all((d > 0) == (mid > 0) and d != 0 for d in ends):
            blo, bhi = lo - pad * width, hi + pad * width
            break
    return ex.Inverse(g, var, y, blo, bhi)


def pushforward(sys: OdeSystem, m: WebMap) -> OdeSystem:
    """Transport the system through ``m``: F_i = phi_i'(x_i) f_i(x) / phi_0'
    with x_i = phi_i^{-1}(X_i).  The new coordinates reuse the old names."""
    if m.names != sys.names or m.time != sys.time:
        raise DimensionError("map and system use different coordinates")
    derivs = m.derivatives()
    d0 = derivs[0]
    if not isinstance(d0, ex.Const):
        raise NonAutonomousResult(f"phi0' = {d0} is not constant; the image is not autonomous")
    if d0.value == 0:
        raise InversionFailure("phi0 is constant")
    m.check_monotone(sys)
    scale = ex.Const(1 / d0.value)
    back = {}
    box = []
    for name, phi, (lo, hi) in zip(sys.names, m.phi[1:], sys.box):
        back[name] = inverse_expr(phi, name, lo, hi)
        a, b = ex.evaluate(phi, {name: lo}), ex.evaluate(phi, {name: hi})
        box.append((min(a, b), max(a, b)))
    f = tuple(ex.substitute(ex.mul(d, fi, scale), back) for d, fi in zip(derivs[1:], sys.f))
    t_img = [ex.evaluate(m.phi[0], {sys.time: v}) for v in sys.t_box]
    return OdeSystem(f, sys.names, tuple(box), sys.time, (min(t_img), max(t_img)))


class VerdictKind(str, enum.Enum):
    REFUTED = "RefutedByInvariant"
    NOT_REFUTED = "NotRefuted"
    VERIFIED = "VerifiedByMap"


@dataclass
class EquivVerdict:
    kind: VerdictKind
    residual: float | None = None
    witness: dict | None = None
    stats: dict = field(default_factory=dict)

    @property
    def refuted(self) -> bool:
        return self.kind is VerdictKind.REFUTED

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "residual": self.residual, "witness": self.witness, "stats": self.stats}


def _first_divergent(labels, a_vals, b_vals, tol) -> dict | None:
    """First invariant (in label order) whose paired values differ by more than tol."""
    a = np.asarray(a_vals)
    b = np.asarray(b_vals)
    for idx, label in enumerate(labels):
        gap = np.abs(a[:, idx] - b[:, idx])
        if np.any(gap > tol * (1 + np.abs(a[:, idx]))):
            return {
                "invariant": label,
                "index": idx,
                "a_range": [float(a[:, idx].min()), float(a[:, idx].max())],
                "b_range": [float(b[:, idx].min()), float(b[:, idx].max())],
                "max_gap": float(gap.max()),
            }
    return None


def verify_pullback(src: OdeSystem, dst: OdeSystem, m: WebMap, samples: int = 100, seed: int = 0,
                    tol: float = PULLBACK_TOL) -> EquivVerdict:
    """Check S_k(Phi(p)) * phi_k'(p) = s_k(p) for every coframe slot at random
    points p of the source box."""
    if src.n != dst.n:
        raise DimensionError(f"systems have {src.n} and {dst.n} equations")
    _, choice_a, cf_a, sf_a = invariants(src)
    _, choice_b, cf_b, sf_b = invariants(dst)
    if choice_a.pair != choice_b.pair:
        raise PolicyMismatch(f"normalizer pairs differ: {choice_a.pair} vs {choice_b.pair}")
    derivs = m.derivatives()
    pts = src.random_points(samples, random.Random(seed))
    worst = 0.0
    worst_slot = 0
    inv_a, inv_b = [], []
    for p in pts:
        q = m.apply(p)
        if not dst.contains(q):
            raise DomainFault(ex.Var("Phi"), dst.env(q), "image point lies outside the target box")
        env_p, env_q = src.env(p), dst.env(q)
        s = cf_a.values(env_p)
        S = cf_b.values(env_q)
        for k, d in enumerate(derivs):
            dphi = ex.evaluate(d, env_p)
            r = abs(S[k] * dphi - s[k]) / abs(s[k])
            if r > worst:
                worst, worst_slot = r, k
        inv_a.append(sf_a.evaluate(env_p))
        inv_b.append(sf_b.evaluate(env_q))
    stats = {"samples": samples, "pair": list(choice_a.pair)}
    if worst <= tol:
        return EquivVerdict(VerdictKind.VERIFIED, residual=worst, stats=stats)
    witness = _first_divergent(sf_a.labels, inv_a, inv_b, tol)
    if witness is None:
        witness = {"invariant": f"coframe s{worst_slot}", "index": None, "max_gap": worst}
    return EquivVerdict(VerdictKind.REFUTED, residual=worst, witness=witness, stats=stats)


def transport_error(src: OdeSystem, dst: OdeSystem, m: WebMap, samples: int = 100, seed: int = 0) -> float:
    """Max over sampled p of |c(dst)(Phi(p)) - c(src)(p)| / (1 + |c(src)(p)|)."""
    sf_a = invariants(src)[3]
    sf_b = invariants(dst)[3]
    worst = 0.0
    for p in src.random_points(samples, random.Random(seed)):
        a = sf_a.evaluate(src.env(p))
        b = sf_b.evaluate(dst.env(m.apply(p)))
        worst = max(worst, max(abs(x - y) / (1 + abs(x)) for x, y in zip(a, b)))
    return worst


@dataclass
class SignatureSample:
    points: list
    values: list
    labels: list
    pair: tuple
    skipped: int = 0

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float).reshape(len(self.values), len(self.labels))


def _box_sampler(sys: OdeSystem, count: int, seed: int, margin: float = 0.0) -> list[Point]:
    """Scrambled Halton points of the box; time is held at the t-box center."""
    unit = qmc.Halton(d=sys.n, scramble=True, seed=seed).random(count)
    t = sum(sys.t_box) / 2
    pts = []
    for row in unit:
        xs = [lo + (hi - lo) * (margin + (1 - 2 * margin) * u) for u, (lo, hi) in zip(row, sys.box)]
        pts.append(Point(t, xs))
    return pts


def signature_sample(sys: OdeSystem, grid: int, seed: int = 0) -> SignatureSample:
    _, choice, _, sf = invariants(sys)
    pts, vals = [], []
    skipped = 0
    for p in _box_sampler(sys, grid, seed):
        try:
            v = sf.evaluate(sys.env(p))
        except DomainFault:
            skipped += 1
            continue
        pts.append(p)
        vals.append(v)
    if skipped > MAX_SKIPPED_FRACTION * grid:
        raise IllConditionedNormalizer(
            f"{skipped} of {grid} sample points could not be evaluated; l{choice.pair} vanishes too often")
    return SignatureSample(pts, vals, sf.labels, choice.pair, skipped)


def compare_signatures(a: SignatureSample, b: SignatureSample, tol: float = SIGNATURE_TOL) -> EquivVerdict:
    """Refutation-only screen.  Never returns VerifiedByMap."""
    if tuple(a.pair) != tuple(b.pair):
        raise PolicyMismatch(f"normalizer pairs differ: {tuple(a.pair)} vs {tuple(b.pair)}")
    if a.labels != b.labels:
        raise DimensionError("signatures have different invariant sets")
    A, B = a.array(), b.array()
    lo_a, hi_a = A.min(axis=0), A.max(axis=0)
    lo_b, hi_b = B.min(axis=0), B.max(axis=0)
    scale = 1 + np.maximum(np.abs(A).max(axis=0), np.abs(B).max(axis=0))
    const_a = bool(np.all(hi_a - lo_a <= tol * scale))
    const_b = bool(np.all(hi_b - lo_b <= tol * scale))
    for idx, label in enumerate(a.labels):
        if const_a and const_b:
            disjoint = abs(A[:, idx].mean() - B[:, idx].mean()) > tol * scale[idx]
        else:
            disjoint = lo_a[idx] > hi_b[idx] + tol * scale[idx] or lo_b[idx] > hi_a[idx] + tol * scale[idx]
        if disjoint:
            witness = {
                "invariant": label,
                "index": idx,
                "a_range": [float(lo_a[idx]), float(hi_a[idx])],
                "b_range": [float(lo_b[idx]), float(hi_b[idx])],
                "gap": float(max(lo_a[idx] - hi_b[idx], lo_b[idx] - hi_a[idx])),
            }
            return EquivVerdict(VerdictKind.REFUTED, witness=witness, stats={"constant": [const_a, const_b]})
    overlap = []
    for idx in range(len(a.labels)):
        inter = min(hi_a[idx], hi_b[idx]) - max(lo_a[idx], lo_b[idx])
        union = max(hi_a[idx], hi_b[idx]) - min(lo_a[idx], lo_b[idx])
        overlap.append(1.0 if union <= tol * scale[idx] else float(max(inter, 0.0) / union))
    stats = {"constant": [const_a, const_b], "overlap": dict(zip(a.labels, overlap)),
             "points": [len(A), len(B)]}
    return EquivVerdict(VerdictKind.NOT_REFUTED, stats=stats)


@dataclass
class SymmetryEstimate:
    dimension: int
    rank: int
    ranks: list
    singular_values: list
    evaluated: int
    skipped: int

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "rank": self.rank, "ranks": self.ranks,
                "singular_values": self.singular_values, "evaluated": self.evaluated, "skipped": self.skipped}


def symmetry_dimension(sys: OdeSystem, probes: int = 12, seed: int = 0, h: float = 1e-4) -> SymmetryEstimate:
    """n + 1 minus the numerical rank of the classifying map p -> c(p).

    The Jacobian is taken by central differences in (t, x_1..x_n), with each
    column scaled by its box width and each row by 1 + |c|.
    """
    if sys.n < 2:
        raise DimensionError("symmetry dimension is estimated for n >= 2")
    require_valid(sys)
    sf = invariants(sys)[3]
    fns = [ex.compile_expr(e) for e in sf.vector()]
    widths = [sys.t_box[1] - sys.t_box[0]] + [hi - lo for lo, hi in sys.box]
    coords = sys.coords

    def vec(vals):
        env = dict(zip(coords, vals))
        return np.array([fn(env) for fn in fns])

    ranks, svals = [], []
    skipped = 0
    for p in _box_sampler(sys, probes, seed, margin=2 * h):
        base = [p.t, *p.x]
        try:
            c0 = vec(base)
            cols = []
            for j, w in enumerate(widths):
                step = h * w
                up, down = list(base), list(base)
                up[j] += step
                down[j] -= step
                cols.append((vec(up) - vec(down)) / (2 * step) * w)
        except DomainFault:
            skipped += 1
            continue
        J = np.column_stack(cols) / (1 + np.abs(c0))[:, None]
        sv = np.linalg.svd(J, compute_uv=False)
        top = sv[0] if sv.size else 0.0
        thresh = max(RANK_RELATIVE_TOL * max(top, 1e-12), RANK_NOISE_FLOOR)
        ranks.append(int(np.sum(sv > thresh)))
        svals.append([float(s) for s in sv])
    if len(ranks) < 3:
        raise InsufficientProbes(f"only {len(ranks)} of {probes} probe points could be evaluated")
    rank = max(ranks)
    dim = min(max(sys.n + 1 - rank, 0), sys.n + 1)
    return SymmetryEstimate(dim, rank, ranks, svals, len(ranks), skipped)


# ---------------------------------------------------------------------------
# the scalar case


@dataclass
class N1Map:
    """phi_0 = identity and phi_1 = M^{-1}(L(x)), where L and M integrate
    1/f from x0 and 1/F from X0."""

    f: Callable[[float], float]
    F: Callable[[float], float]
    L: Quadrature
    M: Quadrature
    anchor: tuple
    interval: tuple

    def phi0(self, t: float) -> float:
        return t

    def phi1(self, x: float) -> float:
        return self.M.inverse(self.L(x))

    def residual(self, x: float, h: float | None = None) -> float:
        """|F(phi1(x)) - phi1'(x) f(x)| / (1 + |F(phi1(x))|), phi1' by central difference."""
        h = h if h is not None else 1e-5 * max(1.0, abs(x))
        d = (self.phi1(x + h) - self.phi1(x - h)) / (2 * h)
        Fx = self.F(self.phi1(x))
        return abs(Fx - d * self.f(x)) / (1 + abs(Fx))

    def table(self, points: int = 101) -> list[tuple]:
        a, b = self.interval
        return [(float(x), self.phi1(float(x)), self.residual(float(x))) for x in np.linspace(a, b, points)]

    def max_residual(self, points: int = 101) -> float:
        return max(r for _, _, r in self.table(points))


def _scalar(e: Expr, var: str) -> Callable[[float], float]:
    extra = e.free_vars - {var}
    if extra:
        raise DimensionError(f"{e} depends on {sorted(extra)} besides {var}")
    fn = ex.compile_expr(e)
    return lambda v: fn({var: v})


def solve_n1(f: Expr, F: Expr, anchor: Sequence[float], interval: Sequence[float],
             var: str = "x", target_var: str = "X") -> N1Map:
    """Web map taking dx/dt = f(x) to dX/dT = F(X) with phi_1(x0) = X0."""
    x0, X0 = map(float, anchor)
    a, b = sorted(map(float, interval))
    fx, FX = _scalar(f, var), _scalar(F, target_var)
    try:
        sf, sF = fx(x0), FX(X0)
    except DomainFault as exc:
        raise SignMismatch(f"right-hand side undefined at the anchor: {exc}") from None
    if sf == 0 or sF == 0:
        raise SignMismatch("a right-hand side vanishes at the anchor")
    if (sf > 0) != (sF > 0):
        raise SignMismatch(f"1/f and 1/F have opposite signs at the anchor ({sf} vs {sF})")
    width = b - a
    pad = 1e-3 * max(width, 1.0)
    L = Quadrature(lambda v: 1.0 / fx(v), x0, min(a, x0) - pad, max(b, x0) + pad)
    M = Quadrature(lambda v: 1.0 / FX(v), X0, X0 - width / 2, X0 + width / 2)
    return N1Map(fx, FX, L, M, (x0, X0), (a, b))
