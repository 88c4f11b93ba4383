"""Radial test densities and the R transform calculus.

R^m xi(s) = s^m xi(s) + m * int_s^inf r^(m-1) xi(r) dr for any integer m.
Piecewise-linear densities get exact closed forms through the equivalent
representation R^m xi(s) = -int_s^inf r^m xi'(r) dr (xi' is piecewise
constant); everything else is evaluated literally with Gauss-Legendre panels
split at the known breakpoints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .numerics import tail_integral


class RequestedClassViolated(ValueError):
    pass


class ClassCertificationError(ValueError):
    pass


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def power_antiderivative(r, p: int):
    """An antiderivative of r^p (log for p = -1)."""
    r = _arr(r)
    if p == -1:
        return np.log(r)
    return r ** (p + 1) / (p + 1)


class RadialDensity:
    """A continuous function on (0, inf) vanishing beyond `support_upper`."""

    support_upper: float = 0.0
    singular_order: float = 0.0  # |xi(r)| <= C r^-order |log r| near 0
    tags: frozenset = frozenset()

    def __call__(self, r):
        raise NotImplementedError

    @property
    def breaks(self) -> tuple:
        return ()

    def with_tags(self, tags: Iterable) -> "RadialDensity":
        obj = _copy(self)
        obj.tags = frozenset(self.tags) | frozenset(tags)
        return obj

    def tail_moment(self, s, p: int):
        """int_s^inf r^p xi(r) dr."""
        s = _arr(s)
        out = tail_integral(lambda r: r**p * self(r), s, self.support_upper, self.breaks)
        return _out(out.reshape(s.shape))


def _copy(obj):
    new = object.__new__(type(obj))
    new.__dict__.update(obj.__dict__)
    return new


class PiecewiseLinear(RadialDensity):
    """Linear interpolation of (knots, values); constant below the first knot."""

    def __init__(self, knots, values, tags=()):
        k = _arr(knots)
        v = _arr(values)
        if k.ndim != 1 or k.shape != v.shape or len(k) < 2:
            raise ValueError("knots and values must be equal-length lists with at least 2 entries")
        if np.any(k < 0) or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be nonnegative and strictly increasing")
        if v[-1] != 0.0:
            raise ValueError("bounded support violated: the last value must be 0 "
                             "(the density vanishes beyond its last knot)")
        self.knots = k
        self.values = v
        self.support_upper = float(k[-1])
        self.slopes = np.diff(v) / np.diff(k)
        self.singular_order = 0.0
        self.tags = frozenset(tags)

    @property
    def breaks(self):
        return tuple(float(x) for x in self.knots if x > 0)

    def __call__(self, r):
        r = _arr(r)
        out = np.interp(r, self.knots, self.values, left=self.values[0], right=0.0)
        return _out(out)

    def derivative(self, r):
        r = _arr(r)
        idx = np.searchsorted(self.knots, r, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.slopes))
        return np.where(inside, self.slopes[np.clip(idx, 0, len(self.slopes) - 1)], 0.0)

    def tail_moment(self, s, p: int):
        """Exact int_s^inf r^p xi(r) dr from piecewise antiderivatives."""
        s = _arr(s)
        total = np.zeros(s.shape)
        k, v = self.knots, self.values
        # constant piece below the first knot
        if k[0] > 0 and v[0] != 0:
            lo = s
            hi = np.full(s.shape, k[0])
            m = lo < hi
            total += np.where(m, v[0] * (power_antiderivative(hi, p) - power_antiderivative(np.where(m, lo, hi), p)), 0.0)
        for i, b in enumerate(self.slopes):
            a = v[i] - b * k[i]  # xi(r) = a + b r on [k_i, k_{i+1}]
            lo = np.maximum(s, k[i])
            hi = k[i + 1]
            m = lo < hi
            lo = np.where(m, lo, hi)
            piece = a * (power_antiderivative(hi, p) - power_antiderivative(lo, p)) + \
                b * (power_antiderivative(hi, p + 1) - power_antiderivative(lo, p + 1))
            total += np.where(m, piece, 0.0)
        return _out(total)

    def to_dict(self):
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}


def tent(c: float, height: float | None = None) -> PiecewiseLinear:
    """r -> max(0, c - r), optionally rescaled to value `height` at 0."""
    h = c if height is None else height
    return PiecewiseLinear([0.0, c], [h, 0.0])


class TransformedPL(RadialDensity):
    """Exact R^m of a piecewise-linear density (any integer m)."""

    def __init__(self, base: PiecewiseLinear, m: int, tags=()):
        self.base = base
        self.m = int(m)
        self.support_upper = base.support_upper
        self.singular_order = float(max(0, -self.m))
        self.tags = frozenset(tags)

    @property
    def breaks(self):
        return self.base.breaks

    def __call__(self, s):
        s = _arr(s)
        if self.m == 0:
            return self.base(s)
        total = np.zeros(s.shape)
        k = self.base.knots
        for i, b in enumerate(self.base.slopes):
            if b == 0:
                continue
            lo = np.maximum(s, k[i])
            hi = k[i + 1]
            mask = lo < hi
            lo = np.where(mask, lo, hi)
            total -= np.where(mask, b * (power_antiderivative(hi, self.m) - power_antiderivative(lo, self.m)), 0.0)
        return _out(total)


class GenericDensity(RadialDensity):
    """Density given by a vectorized callable, with declared support and breaks."""

    def __init__(self, func: Callable, support_upper: float, breaks=(), name: str = "",
                 singular_order: float = 0.0, tags=()):
        self.func = func
        self.support_upper = float(support_upper)
        self._breaks = tuple(float(b) for b in breaks)
        self.name = name
        self.singular_order = singular_order
        self.tags = frozenset(tags)

    @property
    def breaks(self):
        return self._breaks

    def __call__(self, r):
        r = _arr(r)
        out = np.where(r < self.support_upper, self.func(np.where(r < self.support_upper, r, 0.5 * self.support_upper)), 0.0)
        return _out(out)


class TransformedGeneric(RadialDensity):
    """R^m of an arbitrary density, evaluated by the literal formula."""

    def __init__(self, base: RadialDensity, m: int, tags=(), order: int = 24):
        self.base = base
        self.m = int(m)
        self.order = order
        self.support_upper = base.support_upper
        self.singular_order = base.singular_order + max(0, -self.m)
        self.tags = frozenset(tags)

    @property
    def breaks(self):
        return self.base.breaks

    def __call__(self, s):
        s = _arr(s)
        flat = np.atleast_1d(s).ravel()
        m = self.m
        if m == 0:
            return self.base(s)
        base = self.base
        head = flat**m * base(flat)
        tail = tail_integral(lambda r: r ** (m - 1) * base(r), flat, self.support_upper,
                             self.breaks, order=self.order)
        out = np.where(flat < self.support_upper, head + m * tail, 0.0)
        return _out(out.reshape(s.shape))


ANALYTIC = {
    # -ln r on (0, 1], 0 beyond
    "neglog": lambda: GenericDensity(lambda r: -np.log(r), 1.0, (1.0,), name="neglog",
                                     singular_order=0.0),
}


def analytic(name: str) -> RadialDensity:
    try:
        return ANALYTIC[name]()
    except KeyError:
        raise ValueError(f"unknown analytic density {name!r}") from None


def density_from_dict(d: dict) -> RadialDensity:
    if "analytic" in d:
        return analytic(d["analytic"])
    if "tent" in d:
        return tent(float(d["tent"]), d.get("height"))
    if "knots" not in d or "values" not in d:
        raise ValueError("density needs 'knots' and 'values' (bounded support on (0, inf))")
    return PiecewiseLinear(d["knots"], d["values"])


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def R_apply(xi: RadialDensity) -> RadialDensity:
    return R_power(xi, 1)


def _transport(tags, m):
    out = set()
    for cls, n, j in tags:
        if cls == "T":
            if n - m >= j and n - m >= 1:
                out.add(("T", n - m, j))
    return out


def R_power(xi: RadialDensity, m: int, require=(), check: bool = True) -> RadialDensity:
    """R^m xi with class tags transported T^n_k -> T^(n-m)_k.

    Every transported or `require`d tag is certified on the result;
    failure raises RequestedClassViolated.
    """
    m = int(m)
    tags = _transport(xi.tags, m) | set(require)
    if m == 0:
        out = _copy(xi)
        out.tags = frozenset(xi.tags) | frozenset(require)
        return out
    if isinstance(xi, PiecewiseLinear):
        out = TransformedPL(xi, m)
    else:
        out = TransformedGeneric(xi, m)
    if check:
        for tag in sorted(tags):
            try:
                ok = certify(out, tag)
            except ClassCertificationError as exc:
                raise RequestedClassViolated(f"R^{m}: {exc}") from None
            if not ok:
                raise RequestedClassViolated(f"R^{m} result fails certification of {tag}")
    out.tags = frozenset(tags)
    return out


def compose_exact(xi: RadialDensity, m: int) -> RadialDensity:
    """R^m applied to R^k xi0 for piecewise-linear xi0 as the single exact R^(k+m)."""
    if isinstance(xi, TransformedPL):
        return TransformedPL(xi.base, xi.m + m)
    if isinstance(xi, PiecewiseLinear):
        return TransformedPL(xi, m)
    raise TypeError("exact composition needs a piecewise-linear base")


@dataclass
class Certificate:
    tag: tuple
    radii: np.ndarray
    values: np.ndarray
    passed: bool
    note: str = ""


def _limit_check(func, kmax=40, tol=1e-6):
    radii = 2.0 ** -np.arange(1, kmax + 1)
    vals = np.abs(_arr(func(radii)))
    if not np.all(np.isfinite(vals)):
        raise ClassCertificationError("non-finite value on the certification grid")
    ratios = vals[1:] / np.maximum(vals[:-1], 1e-300)
    grow = ratios >= 2.0
    run = 0
    for g, v in zip(grow, vals[1:]):
        run = run + 1 if (g and v > tol) else 0
        if run >= 3:
            raise ClassCertificationError("limit at 0+ diverges (three consecutive increases by 2x or more)")
    scale = max(1.0, float(np.max(vals)))
    passed = bool(vals[-1] <= tol * scale)
    return radii, vals, passed


def certify_report(xi: RadialDensity, tag) -> Certificate:
    cls, n, j = tag
    if cls == "C_b":
        radii, vals, _ = _limit_check(lambda r: xi(r), tol=np.inf)
        return Certificate(tag, radii, vals, bool(np.max(vals) < np.inf))
    if cls == "T":
        p = n - j + 1
        radii, vals, passed = _limit_check(lambda r: r**p * xi(r))
        return Certificate(tag, radii, vals, passed)
    if cls == "D":
        if j >= n:
            raise ValueError("D^n_j tags are defined for j < n")
        p = n - j
        radii, vals, passed = _limit_check(lambda r: r**p * xi(r))
        if passed:
            # int_r^inf p^(n-j-1) xi must settle as r -> 0
            tails = _arr(xi.tail_moment(radii, n - j - 1))
            diffs = np.abs(np.diff(tails))
            passed = bool(np.all(np.isfinite(tails)) and diffs[-1] <= 1e-6 * max(1.0, abs(tails[-1])))
        return Certificate(tag, radii, vals, passed)
    raise ValueError(f"unknown class {cls!r}")


def certify(xi: RadialDensity, tag) -> bool:
    rep = certify_report(xi, tag)
    if not rep.passed:
        warnings.warn(f"class tag {tag} not certified (last grid value {rep.values[-1]:.3e})")
    return rep.passed


def certify_T(xi, n, j) -> bool:
    return certify(xi, ("T", n, j))


def certify_D(xi, n, j) -> bool:
    return certify(xi, ("D", n, j))


def tagged(xi: RadialDensity, *tags) -> RadialDensity:
    """Certify and attach class tags; raises RequestedClassViolated on failure."""
    for tag in tags:
        try:
            ok = certify(xi, tag)
        except ClassCertificationError as exc:
            raise RequestedClassViolated(str(exc)) from None
        if not ok:
            raise RequestedClassViolated(f"density fails certification of {tag}")
    return xi.with_tags(tags)


# --------------------------------------------------------------------------
# bivariate transforms and the kinematic kernel
# --------------------------------------------------------------------------

class BivariateDensity:
    """gamma(s, t) with bounded support in the transformed axis."""

    def __init__(self, func: Callable, support_upper: float, breaks=(), diagonal_break=True):
        self.func = func
        self.support_upper = float(support_upper)
        self.breaks = tuple(breaks)
        self.diagonal_break = diagonal_break

    def __call__(self, s, t):
        return self.func(_arr(s), _arr(t))


def R_partial(gamma: BivariateDensity, axis: int, m: int, order: int = 24) -> BivariateDensity:
    """m-fold partial transform in the first (axis=1) or second (axis=2) variable."""
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if m < 1:
        raise ValueError("partial transforms need m >= 1")

    def along_first(s, t, g):
        s, t = np.broadcast_arrays(_arr(s), _arr(t))
        shape = s.shape
        s, t = s.ravel(), t.ravel()
        head = s**m * g(s, t)
        tail = tail_integral(lambda r: r ** (m - 1) * g(r, t[:, None]), s, gamma.support_upper,
                             gamma.breaks, order=order,
                             extra_break=t if gamma.diagonal_break else None)
        return _out(np.where(s < gamma.support_upper, head + m * tail, 0.0).reshape(shape))

    if axis == 1:
        return BivariateDensity(lambda s, t: along_first(s, t, gamma.func), gamma.support_upper,
                                gamma.breaks, gamma.diagonal_break)
    swapped = lambda a, b: gamma.func(b, a)
    return BivariateDensity(lambda s, t: along_first(t, s, swapped), gamma.support_upper,
                            gamma.breaks, gamma.diagonal_break)


class KinematicKernel:
    """(s, t) -> R_1^(n-k) [ (r, t) -> g(max(r, t)) ](s) with g = R^-(n-k) alpha.

    Evaluated literally by default; `collapsed` gives alpha(max(s, t)).
    """

    def __init__(self, alpha: RadialDensity, n: int, k: int, order: int = 24):
        if not 1 <= k <= n:
            raise ValueError("kernel needs 1 <= k <= n")
        self.alpha = alpha
        self.n = n
        self.k = k
        self.m = n - k
        self.g = R_power(alpha, -self.m, check=False) if self.m else alpha
        g = self.g
        gamma = BivariateDensity(lambda r, t: g(np.maximum(r, t)), alpha.support_upper, alpha.breaks)
        self._literal = R_partial(gamma, 1, self.m, order) if self.m else gamma

    def __call__(self, s, t):
        return self._literal(s, t)

    def collapsed(self, s, t):
        return _out(self.alpha(np.maximum(_arr(s), _arr(t))))


def kernel_make(alpha: RadialDensity, n: int, k: int, check: bool = True,
                order: int = 24) -> KinematicKernel:
    """Build the kernel; alpha must satisfy lim_{s->0+} s alpha(s) = 0."""
    if check:
        try:
            ok = certify(alpha, ("T", n, n))
        except ClassCertificationError as exc:
            raise RequestedClassViolated(str(exc)) from None
        if not ok:
            raise RequestedClassViolated("kernel density violates lim s*alpha(s) = 0")
    return KinematicKernel(alpha, n, k, order)


def R_power_at(func: Callable, m: int, s, support_upper: float, breaks=(), order: int = 24):
    """Literal R^m of a plain callable, evaluated at the points s."""
    s = np.atleast_1d(_arr(s))
    head = s**m * func(s)
    tail = tail_integral(lambda r: r ** (m - 1) * func(r), s, support_upper, breaks, order=order)
    return np.where(s < support_upper, head + m * tail, 0.0)
