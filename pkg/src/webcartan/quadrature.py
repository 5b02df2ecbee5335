"""Monotone antiderivatives with a cached table for fast inversion."""

from __future__ import annotations

import bisect
import math
import warnings
from typing import Callable

from scipy import integrate, optimize

from .errors import DomainFault, QuadratureFailure

ABS_TOL = 1e-10


class Quadrature:
    """L(x) = integral of ``integrand`` from ``x0`` to ``x``.

    The integrand must keep one strict sign, which makes L strictly
    monotone.  Values at table nodes are cached; other points integrate
    from the nearest node.  The table grows on demand (``extend``/``cover``)
    and is only appended to, so lookups never see a half-built entry.
    """

    def __init__(self, integrand: Callable[[float], float], x0: float, lo: float, hi: float, nodes: int = 32):
        self.integrand = integrand
        self.x0 = float(x0)
        self.sign = self._sign_at(self.x0)
        self.xs = [self.x0]
        self.ys = [0.0]
        self.spacing = (hi - lo) / nodes if hi > lo else 1.0
        self.extend(min(lo, self.x0), max(hi, self.x0))

    def _sign_at(self, x: float) -> int:
        try:
            v = self.integrand(x)
        except DomainFault as exc:
            raise QuadratureFailure(f"integrand undefined at {x}: {exc}") from None
        if not math.isfinite(v) or v == 0.0:
            raise QuadratureFailure(f"integrand is {v} at {x}")
        return 1 if v > 0 else -1

    def _segment(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(self.integrand, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)
            except (integrate.IntegrationWarning, DomainFault, ZeroDivisionError) as exc:
                raise QuadratureFailure(f"integration over [{a}, {b}] failed: {exc}") from None
        if not math.isfinite(val) or err > ABS_TOL:
            raise QuadratureFailure(f"integration over [{a}, {b}] did not converge (error estimate {err})")
        return val

    @property
    def lo(self) -> float:
        return self.xs[0]

    @property
    def hi(self) -> float:
        return self.xs[-1]

    def _push(self, x: float) -> None:
        if self._sign_at(x) != self.sign:
            raise QuadratureFailure(f"integrand changes sign between {self.x0} and {x}")
        if x > self.hi:
            y = self.ys[-1] + self._segment(self.hi, x)
            self.xs.append(x)
            self.ys.append(y)
        else:
            y = self.ys[0] + self._segment(self.lo, x)
            self.xs.insert(0, x)
            self.ys.insert(0, y)

    def extend(self, lo: float, hi: float) -> None:
        while self.hi < hi:
            self._push(min(hi, self.hi + self.spacing))
        while self.lo > lo:
            self._push(max(lo, self.lo - self.spacing))

    def __call__(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            self.extend(min(x, self.lo), max(x, self.hi))
        k = bisect.bisect_left(self.xs, x)
        if k == len(self.xs) or (k > 0 and x - self.xs[k - 1] < self.xs[k] - x):
            k -= 1
        return self.ys[k] + self._segment(self.xs[k], x)

    def cover(self, y: float, max_steps: int = 60) -> None:
        """Grow the table (doubling the step) until its range contains ``y``."""
        step = self.spacing
        for _ in range(max_steps):
            ylo, yhi = sorted((self.ys[0], self.ys[-1]))
            if ylo <= y <= yhi:
                return
            up = (y > yhi) == (self.sign > 0)
            try:
                if up:
                    self._push(self.hi + step)
                else:
                    self._push(self.lo - step)
            except QuadratureFailure as exc:
                raise QuadratureFailure(f"value {y} is outside the reachable range: {exc}") from None
            step *= 2
        raise QuadratureFailure(f"value {y} is outside the reachable range")

    def inverse(self, y: float) -> float:
        """The x with L(x) = y, by bracketed root finding on the table."""
        self.cover(y)
        ys = self.ys if self.sign > 0 else self.ys[::-1]
        xs = self.xs if self.sign > 0 else self.xs[::-1]
        k = bisect.bisect_left(ys, y)
        if k < len(ys) and ys[k] == y:
            return xs[k]
        a, b = sorted((xs[k - 1], xs[k]))
        return optimize.brentq(lambda x: self(x) - y, a, b, xtol=1e-300, rtol=8.9e-16, maxiter=200)
