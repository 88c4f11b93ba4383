"""Finite convex functions on R^n: evaluation, derivatives, subdifferentials, prox.

Every function object is immutable and works on single points (shape (n,))
or stacks of points (shape (..., n)).  Derivatives raise when the function
is not (twice) differentiable at a requested point instead of silently
returning one element of the subdifferential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls, brentq


class NotDifferentiable(ValueError):
    pass


class NotTwiceDifferentiable(ValueError):
    pass


class UnsupportedVariant(TypeError):
    pass


# points this close (relative) to a kink set get the full subdifferential there
KINK_TOL = 1e-9


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= KINK_TOL * max(1.0, abs(b))


class NonConvergence(RuntimeError):
    pass


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _norm(x) -> np.ndarray:
    return np.sqrt(np.sum(np.square(x), axis=-1))


def _out(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def _eye_like(x) -> np.ndarray:
    n = x.shape[-1]
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def _radial_hessian(x, r) -> np.ndarray:
    """(I - x x^T / r^2) / r, the Hessian of the Euclidean norm."""
    u = x / r[..., None]
    return (_eye_like(x) - u[..., :, None] * u[..., None, :]) / r[..., None, None]


# --------------------------------------------------------------------------
# subdifferential sets
# --------------------------------------------------------------------------

class SubdiffSet:
    def distance(self, y) -> float:
        raise NotImplementedError

    def contains(self, y, tol: float = 1e-9) -> bool:
        return self.distance(y) <= tol


@dataclass(frozen=True)
class Point(SubdiffSet):
    g: tuple

    def distance(self, y):
        return float(np.linalg.norm(_arr(y) - _arr(self.g)))

    def vertices(self):
        return [_arr(self.g)]


@dataclass(frozen=True)
class Segment(SubdiffSet):
    g0: tuple
    g1: tuple

    def distance(self, y):
        a, b, y = _arr(self.g0), _arr(self.g1), _arr(y)
        d = b - a
        dd = float(d @ d)
        lam = 0.0 if dd == 0 else min(1.0, max(0.0, float((y - a) @ d) / dd))
        return float(np.linalg.norm(a + lam * d - y))

    def vertices(self):
        return [_arr(self.g0), _arr(self.g1)]


@dataclass(frozen=True)
class ConvexHullOfPoints(SubdiffSet):
    points: tuple

    def distance(self, y):
        return _hull_distance(np.array([_arr(p) for p in self.points]), _arr(y))

    def vertices(self):
        return [_arr(p) for p in self.points]


@dataclass(frozen=True)
class Ellipsoid(SubdiffSet):
    """{center + L u : |u| <= 1} with L symmetric positive semidefinite."""

    center: tuple
    shape: tuple

    def distance(self, y):
        L = _arr(self.shape)
        d = _arr(y) - _arr(self.center)
        # project onto {L u : |u| <= 1} = {w : w^T (L L)^-1 w <= 1}
        return float(np.linalg.norm(d - _project_ellipsoid(L @ L, d)))


@dataclass(frozen=True)
class MinkowskiSum(SubdiffSet):
    parts: tuple

    def simplify(self) -> SubdiffSet:
        polys, ells = [], []
        for p in self.parts:
            p = p.simplify() if isinstance(p, MinkowskiSum) else p
            if isinstance(p, MinkowskiSum):
                for q in p.parts:
                    (ells if isinstance(q, Ellipsoid) else polys).append(q)
            else:
                (ells if isinstance(p, Ellipsoid) else polys).append(p)
        verts = None
        for p in polys:
            v = np.array(p.vertices())
            verts = v if verts is None else (verts[:, None, :] + v[None, :, :]).reshape(-1, v.shape[-1])
            verts = np.unique(np.round(verts, 14), axis=0)
        if not ells:
            if len(verts) == 1:
                return Point(tuple(verts[0]))
            if len(verts) == 2:
                return Segment(tuple(verts[0]), tuple(verts[1]))
            return ConvexHullOfPoints(tuple(tuple(v) for v in verts))
        if len(ells) == 1 and (verts is None or len(verts) == 1):
            shift = 0 if verts is None else verts[0]
            e = ells[0]
            return Ellipsoid(tuple(_arr(e.center) + shift), e.shape)
        return MinkowskiSum(tuple(polys + ells))

    def distance(self, y):
        s = self.simplify()
        if not isinstance(s, MinkowskiSum):
            return s.distance(y)
        # general case: polytope + ellipsoids, solved as a small convex program
        from scipy.optimize import minimize

        polys = [p for p in s.parts if not isinstance(p, Ellipsoid)]
        ells = [p for p in s.parts if isinstance(p, Ellipsoid)]
        verts = np.array(MinkowskiSum(tuple(polys)).simplify().vertices()) if polys else np.zeros((1, len(y)))
        y = _arr(y)
        n = len(y)
        k, m = len(verts), len(ells)

        def point(w):
            lam = w[:k]
            out = lam @ verts
            for i, e in enumerate(ells):
                out = out + _arr(e.center) + _arr(e.shape) @ w[k + i * n:k + (i + 1) * n]
            return out

        cons = [{"type": "eq", "fun": lambda w: np.sum(w[:k]) - 1.0}]
        for i in range(m):
            cons.append({"type": "ineq", "fun": lambda w, i=i: 1.0 - np.sum(w[k + i * n:k + (i + 1) * n] ** 2)})
        w0 = np.concatenate([np.full(k, 1.0 / k), np.zeros(m * n)])
        res = minimize(lambda w: np.sum((point(w) - y) ** 2), w0, constraints=cons,
                       bounds=[(0, None)] * k + [(None, None)] * (m * n), method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        return float(np.linalg.norm(point(res.x) - y))


def _hull_distance(V: np.ndarray, y: np.ndarray) -> float:
    # min |V^T lam - y| with lam >= 0, sum lam = 1, via nnls with a heavy row
    big = 1e6 * (1.0 + np.max(np.abs(V)) + np.max(np.abs(y)))
    A = np.vstack([V.T, big * np.ones(len(V))])
    b = np.concatenate([y, [big]])
    lam, _ = nnls(A, b)
    lam = lam / lam.sum()
    return float(np.linalg.norm(lam @ V - y))


def _project_ellipsoid(Q: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Projection of d onto {w : w^T Q^-1 w <= 1} for PSD Q (eigen-decomposed)."""
    lam, U = np.linalg.eigh(Q)
    lam = np.maximum(lam, 0.0)
    c = U.T @ d
    pos = lam > 1e-300
    if np.all(~pos):
        return np.zeros_like(d)
    # components along null directions must be dropped
    if np.sum(c[pos] ** 2 / lam[pos]) <= 1.0 and np.allclose(c[~pos], 0.0):
        return d

    def g(mu):
        w = lam[pos] * c[pos] / (lam[pos] + mu)
        return np.sum(w**2 / lam[pos]) - 1.0

    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
    if g(0.0) <= 0:
        mu = 0.0
    else:
        mu = brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-15)
    w = np.zeros_like(c)
    w[pos] = lam[pos] * c[pos] / (lam[pos] + mu)
    return U @ w


# --------------------------------------------------------------------------
# function variants
# --------------------------------------------------------------------------

class ConvexFunction:
    """Base class.  Subclasses implement value, gradient and hessian."""

    n: int

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def subdiff(self, x) -> SubdiffSet:
        raise UnsupportedVariant(type(self).__name__)

    def lipschitz(self, radius: float) -> float:
        raise NotImplementedError

    # radial functions expose their profile phi with f(x) = phi(|x|)
    radial = False

    def profile(self, r):
        raise UnsupportedVariant(f"{type(self).__name__} is not radial")

    def profile_slope_jumps(self):
        """Radii where the profile derivative jumps, and the jump sizes."""
        return []

    def profile_slope(self, r):
        """Right derivative of the radial profile."""
        raise UnsupportedVariant(f"{type(self).__name__} is not radial")

    def profile_curvature(self, r):
        """Second derivative of the profile away from its slope jumps."""
        raise UnsupportedVariant(f"{type(self).__name__} is not radial")

    # C^2 away from the origin (support functions and smooth functions)
    smooth_off_origin = False

    def __add__(self, other):
        return NonnegCombination.of(self, other)

    def __rmul__(self, c):
        return NonnegCombination(((float(c), self),))

    def rotated(self, R) -> "ConvexFunction":
        return Rotated(self, tuple(map(tuple, _arr(R))))


@dataclass(frozen=True)
class Quadratic(ConvexFunction):
    """x -> scale * |x - center|^2."""

    center: tuple
    scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    @property
    def n(self):
        return len(self.center)

    @property
    def radial(self):
        return not any(self.center)

    def value(self, x):
        d = _arr(x) - _arr(self.center)
        return _out(self.scale * np.sum(d * d, axis=-1))

    def gradient(self, x):
        return 2 * self.scale * (_arr(x) - _arr(self.center))

    def hessian(self, x):
        return 2 * self.scale * _eye_like(_arr(x))

    def subdiff(self, x):
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return 2 * self.scale * (radius + float(np.linalg.norm(self.center)))

    smooth_off_origin = True

    def profile(self, r):
        return self.scale * _arr(r) ** 2

    def profile_slope(self, r):
        return 2 * self.scale * _arr(r)

    def profile_curvature(self, r):
        return np.full(np.shape(r), 2 * self.scale)


@dataclass(frozen=True)
class QuarticNorm(ConvexFunction):
    """x -> |x - center|^4."""

    center: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def n(self):
        return len(self.center)

    @property
    def radial(self):
        return not any(self.center)

    def value(self, x):
        d = _arr(x) - _arr(self.center)
        return _out(np.sum(d * d, axis=-1) ** 2)

    def gradient(self, x):
        d = _arr(x) - _arr(self.center)
        return 4 * np.sum(d * d, axis=-1)[..., None] * d

    def hessian(self, x):
        d = _arr(x) - _arr(self.center)
        q = np.sum(d * d, axis=-1)
        return 4 * q[..., None, None] * _eye_like(d) + 8 * d[..., :, None] * d[..., None, :]

    def subdiff(self, x):
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return 4 * (radius + float(np.linalg.norm(self.center))) ** 3

    smooth_off_origin = True

    def profile(self, r):
        return _arr(r) ** 4

    def profile_slope(self, r):
        return 4 * _arr(r) ** 3

    def profile_curvature(self, r):
        return 12 * _arr(r) ** 2


@dataclass(frozen=True)
class Cone(ConvexFunction):
    """v_t(x) = max(0, |x| - t), t > 0."""

    t: float
    n: int = 2
    radial = True

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("Cone requires t > 0 (use Norm for t = 0)")

    def value(self, x):
        return _out(np.maximum(0.0, _norm(_arr(x)) - self.t))

    def gradient(self, x):
        x = _arr(x)
        r = _norm(x)
        if np.any(r == self.t):
            raise NotDifferentiable(f"Cone({self.t}) is not differentiable on |x| = t")
        safe = np.where(r > 0, r, 1.0)
        return np.where((r > self.t)[..., None], x / safe[..., None], 0.0)

    def hessian(self, x):
        x = _arr(x)
        r = _norm(x)
        if np.any(r == self.t):
            raise NotTwiceDifferentiable(f"Cone({self.t}) is singular on |x| = t")
        safe = np.where(r > 0, r, 1.0)
        return np.where((r > self.t)[..., None, None], _radial_hessian(x, safe), 0.0)

    def subdiff(self, x):
        x = _arr(x)
        r = float(np.linalg.norm(x))
        if _near(r, self.t):
            return Segment(tuple(np.zeros(self.n)), tuple(x / r))
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return 1.0

    def profile(self, r):
        return np.maximum(0.0, _arr(r) - self.t)

    def profile_slope_jumps(self):
        return [(self.t, 1.0)]

    def profile_slope(self, r):
        return (_arr(r) >= self.t).astype(float)

    def profile_curvature(self, r):
        return np.zeros(np.shape(r))


@dataclass(frozen=True)
class Norm(ConvexFunction):
    """x -> |x|, the support function of the unit ball."""

    n: int = 2
    radial = True

    def value(self, x):
        return _out(_norm(_arr(x)))

    def gradient(self, x):
        x = _arr(x)
        r = _norm(x)
        if np.any(r == 0):
            raise NotDifferentiable("Norm is not differentiable at 0")
        return x / r[..., None]

    def hessian(self, x):
        x = _arr(x)
        r = _norm(x)
        if np.any(r == 0):
            raise NotTwiceDifferentiable("Norm is singular at 0")
        return _radial_hessian(x, r)

    def subdiff(self, x):
        x = _arr(x)
        if _near(float(np.linalg.norm(x)), 0.0):
            return Ellipsoid(tuple(np.zeros(self.n)), tuple(map(tuple, np.eye(self.n))))
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return 1.0

    smooth_off_origin = True

    def profile(self, r):
        return _arr(r).copy()

    def profile_slope_jumps(self):
        return [(0.0, 1.0)]

    def profile_slope(self, r):
        return np.ones(np.shape(r))

    def profile_curvature(self, r):
        return np.zeros(np.shape(r))


@dataclass(frozen=True)
class HalfCone(ConvexFunction):
    """w_s: distance to {|x| <= s, x_n >= 0} union {|x'| <= s, x_n < 0}.

    Here x' = (x_1, ..., x_{n-1}).  The value is |x| - s above the
    hyperplane x_n = 0 and |x'| - s below it (clamped at 0).
    """

    s: float
    n: int = 2

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("HalfCone requires s > 0")
        if self.n < 2:
            raise ValueError("HalfCone requires n >= 2")

    def value(self, x):
        x = _arr(x)
        r = _norm(x)
        rho = _norm(x[..., :-1])
        up = x[..., -1] >= 0
        out = np.where(up, np.maximum(0.0, r - self.s), np.maximum(0.0, rho - self.s))
        return _out(out)

    def _check(self, x, err):
        r = _norm(x)
        rho = _norm(x[..., :-1])
        h = x[..., -1]
        bad = ((h >= 0) & (r == self.s)) | ((h < 0) & (rho == self.s)) | ((h == 0) & (rho > self.s))
        if np.any(bad):
            raise err(f"HalfCone({self.s}) is not smooth at the requested point")
        return r, rho, h

    def gradient(self, x):
        x = _arr(x)
        r = _norm(x)
        rho = _norm(x[..., :-1])
        h = x[..., -1]
        bad = ((h >= 0) & (r == self.s)) | ((h < 0) & (rho == self.s))
        if np.any(bad):
            raise NotDifferentiable(f"HalfCone({self.s}) is not differentiable on the boundary of its zero set")
        up = (h >= 0) & (r > self.s)
        low = (h < 0) & (rho > self.s)
        g = np.zeros_like(x)
        g = np.where(up[..., None], x / np.where(r > 0, r, 1.0)[..., None], g)
        gl = x.copy()
        gl[..., -1] = 0.0
        g = np.where(low[..., None], gl / np.where(rho > 0, rho, 1.0)[..., None], g)
        return g

    def hessian(self, x):
        x = _arr(x)
        r, rho, h = self._check(x, NotTwiceDifferentiable)
        up = (h > 0) & (r > self.s)
        low = (h < 0) & (rho > self.s)
        H = np.zeros(x.shape + (x.shape[-1],))
        H = np.where(up[..., None, None], _radial_hessian(x, np.where(r > 0, r, 1.0)), H)
        xl = x.copy()
        xl[..., -1] = 0.0
        safe = np.where(rho > 0, rho, 1.0)
        u = xl / safe[..., None]
        P = _eye_like(x)
        P[..., -1, -1] = 0.0
        Hl = (P - u[..., :, None] * u[..., None, :]) / safe[..., None, None]
        return np.where(low[..., None, None], Hl, H)

    def subdiff(self, x):
        x = _arr(x)
        r = float(np.linalg.norm(x))
        rho = float(np.linalg.norm(x[:-1]))
        h = x[-1]
        if h >= 0 and _near(r, self.s):
            return Segment(tuple(np.zeros(self.n)), tuple(x / r))
        if h < 0 and _near(rho, self.s):
            e = x.copy()
            e[-1] = 0.0
            return Segment(tuple(np.zeros(self.n)), tuple(e / rho))
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return 1.0

    def project_zero_set(self, x):
        """Nearest point of the zero set (the convex set whose distance this is)."""
        x = _arr(x)
        r = _norm(x)
        rho = _norm(x[..., :-1])
        h = x[..., -1]
        p = x.copy()
        up_out = (h >= 0) & (r > self.s)
        p = np.where(up_out[..., None], self.s * x / np.where(r > 0, r, 1.0)[..., None], p)
        low_out = (h < 0) & (rho > self.s)
        pl = x.copy()
        pl[..., :-1] *= (self.s / np.where(rho > 0, rho, 1.0))[..., None]
        return np.where(low_out[..., None], pl, p)


@dataclass(frozen=True)
class SupportBall(ConvexFunction):
    """Support function of the ball of radius r around c: r|x| + <x, c>."""

    r: float
    center: tuple
    smooth_off_origin = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.r < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def n(self):
        return len(self.center)

    def value(self, x):
        x = _arr(x)
        return _out(self.r * _norm(x) + x @ _arr(self.center))

    def gradient(self, x):
        return self.r * Norm(self.n).gradient(x) + _arr(self.center)

    def hessian(self, x):
        return self.r * Norm(self.n).hessian(x)

    def subdiff(self, x):
        x = _arr(x)
        if _near(float(np.linalg.norm(x)), 0.0):
            return Ellipsoid(self.center, tuple(map(tuple, self.r * np.eye(self.n))))
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return self.r + float(np.linalg.norm(self.center))


@dataclass(frozen=True)
class SupportEllipse(ConvexFunction):
    """sqrt(x^T M x): support function of {y : y^T M^-1 y <= 1}."""

    M: tuple
    smooth_off_origin = True

    def __post_init__(self):
        M = _arr(self.M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("M must be square")
        if not np.allclose(M, M.T, rtol=1e-12, atol=1e-14):
            raise ValueError("M must be symmetric")
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            raise ValueError("M must be positive definite")
        object.__setattr__(self, "M", tuple(map(tuple, M)))

    @property
    def n(self):
        return len(self.M)

    @property
    def semi_axes(self):
        return np.sqrt(np.linalg.eigvalsh(_arr(self.M)))

    def value(self, x):
        x = _arr(x)
        return _out(np.sqrt(np.einsum("...i,ij,...j->...", x, _arr(self.M), x)))

    def gradient(self, x):
        x = _arr(x)
        h = np.sqrt(np.einsum("...i,ij,...j->...", x, _arr(self.M), x))
        if np.any(h == 0):
            raise NotDifferentiable("support function is not differentiable at 0")
        return (x @ _arr(self.M)) / h[..., None]

    def hessian(self, x):
        x = _arr(x)
        M = _arr(self.M)
        h = np.sqrt(np.einsum("...i,ij,...j->...", x, M, x))
        if np.any(h == 0):
            raise NotTwiceDifferentiable("support function is singular at 0")
        Mx = x @ M
        return (M - Mx[..., :, None] * Mx[..., None, :] / (h**2)[..., None, None]) / h[..., None, None]

    def subdiff(self, x):
        x = _arr(x)
        if not np.any(x):
            lam, U = np.linalg.eigh(_arr(self.M))
            L = U @ np.diag(np.sqrt(lam)) @ U.T
            return Ellipsoid(tuple(np.zeros(self.n)), tuple(map(tuple, L)))
        return Point(tuple(self.gradient(x)))

    def lipschitz(self, radius):
        return float(np.sqrt(np.max(np.linalg.eigvalsh(_arr(self.M)))))


@dataclass(frozen=True)
class Affine(ConvexFunction):
    """x -> <c, x> + b."""

    c: tuple
    b: float = 0.0
    smooth_off_origin = True

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))

    @property
    def n(self):
        return len(self.c)

    def value(self, x):
        return _out(_arr(x) @ _arr(self.c) + self.b)

    def gradient(self, x):
        x = _arr(x)
        return np.broadcast_to(_arr(self.c), x.shape).copy()

    def hessian(self, x):
        x = _arr(x)
        return np.zeros(x.shape + (x.shape[-1],))

    def subdiff(self, x):
        return Point(self.c)

    def lipschitz(self, radius):
        return float(np.linalg.norm(self.c))


@dataclass(frozen=True)
class Ridge(ConvexFunction):
    """x -> g(x_1) with g(u) = slope * u + sum_i w_i max(0, u - b_i), w_i >= 0."""

    breaks: tuple
    weights: tuple
    slope: float = 0.0
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.breaks) != len(self.weights) or any(w < 0 for w in self.weights):
            raise ValueError("need one nonnegative weight per break")

    def g(self, u):
        u = _arr(u)
        out = self.slope * u
        for b, w in zip(self.breaks, self.weights):
            out = out + w * np.maximum(0.0, u - b)
        return out

    def g_slope(self, u):
        u = _arr(u)
        out = np.full(u.shape, self.slope)
        for b, w in zip(self.breaks, self.weights):
            out = out + w * (u > b)
        return out

    def value(self, x):
        return _out(self.g(_arr(x)[..., 0]))

    def gradient(self, x):
        x = _arr(x)
        if np.any(np.isin(x[..., 0], self.breaks)):
            raise NotDifferentiable("ridge function has a kink at the requested point")
        g = np.zeros_like(x)
        g[..., 0] = self.g_slope(x[..., 0])
        return g

    def hessian(self, x):
        x = _arr(x)
        if np.any(np.isin(x[..., 0], self.breaks)):
            raise NotTwiceDifferentiable("ridge function has a kink at the requested point")
        return np.zeros(x.shape + (x.shape[-1],))

    def subdiff(self, x):
        x = _arr(x)
        at = [_near(x[0], b) for b in self.breaks]
        lo = self.slope + sum(w for b, w, k in zip(self.breaks, self.weights, at) if x[0] > b and not k)
        hi = lo + sum(w for w, k in zip(self.weights, at) if k)
        e = np.zeros(self.n)
        e[0] = 1.0
        if hi == lo:
            return Point(tuple(lo * e))
        return Segment(tuple(lo * e), tuple(hi * e))

    def lipschitz(self, radius):
        return max(abs(self.slope), abs(self.slope + sum(self.weights)))


@dataclass(frozen=True)
class Rotated(ConvexFunction):
    """x -> f(R^T x), i.e. f composed with the inverse rotation."""

    f: ConvexFunction
    R: tuple

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(map(tuple, _arr(self.R))))

    @property
    def n(self):
        return self.f.n

    @property
    def radial(self):
        return self.f.radial

    def profile(self, r):
        return self.f.profile(r)

    def profile_slope_jumps(self):
        return self.f.profile_slope_jumps()

    def profile_slope(self, r):
        return self.f.profile_slope(r)

    def profile_curvature(self, r):
        return self.f.profile_curvature(r)

    @property
    def smooth_off_origin(self):
        return self.f.smooth_off_origin

    def _pull(self, x):
        return _arr(x) @ _arr(self.R)  # rows of x times R == (R^T x)^T

    def value(self, x):
        return self.f.value(self._pull(x))

    def gradient(self, x):
        return self.f.gradient(self._pull(x)) @ _arr(self.R).T

    def hessian(self, x):
        R = _arr(self.R)
        return R @ self.f.hessian(self._pull(x)) @ R.T

    def subdiff(self, x):
        R = _arr(self.R)
        return _map_set(self.f.subdiff(self._pull(x)), R)

    def lipschitz(self, radius):
        return self.f.lipschitz(radius)


def _map_set(S: SubdiffSet, R: np.ndarray) -> SubdiffSet:
    if isinstance(S, Point):
        return Point(tuple(R @ _arr(S.g)))
    if isinstance(S, Segment):
        return Segment(tuple(R @ _arr(S.g0)), tuple(R @ _arr(S.g1)))
    if isinstance(S, ConvexHullOfPoints):
        return ConvexHullOfPoints(tuple(tuple(R @ _arr(p)) for p in S.points))
    if isinstance(S, Ellipsoid):
        return Ellipsoid(tuple(R @ _arr(S.center)), tuple(map(tuple, R @ _arr(S.shape) @ R.T)))
    if isinstance(S, MinkowskiSum):
        return MinkowskiSum(tuple(_map_set(p, R) for p in S.parts))
    raise UnsupportedVariant(type(S).__name__)


@dataclass(frozen=True)
class NonnegCombination(ConvexFunction):
    terms: tuple  # of (coefficient, ConvexFunction)

    def __post_init__(self):
        terms = tuple((float(c), f) for c, f in self.terms)
        if not terms:
            raise ValueError("empty combination")
        if any(c < 0 for c, _ in terms):
            raise ValueError("combination coefficients must be nonnegative")
        if len({f.n for _, f in terms}) != 1:
            raise ValueError("all terms must share the dimension")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def of(cls, *fs) -> "NonnegCombination":
        terms = []
        for f in fs:
            if isinstance(f, NonnegCombination):
                terms.extend(f.terms)
            else:
                terms.append((1.0, f))
        return cls(tuple(terms))

    def __rmul__(self, c):
        return NonnegCombination(tuple((float(c) * a, f) for a, f in self.terms))

    @property
    def n(self):
        return self.terms[0][1].n

    @property
    def radial(self):
        return all(f.radial or c == 0 for c, f in self.terms)

    def profile(self, r):
        return sum(c * f.profile(r) for c, f in self.terms if c)

    def profile_slope_jumps(self):
        return [(r, c * j) for c, f in self.terms if c for r, j in f.profile_slope_jumps()]

    def profile_slope(self, r):
        return sum(c * f.profile_slope(r) for c, f in self.terms if c)

    def profile_curvature(self, r):
        return sum(c * f.profile_curvature(r) for c, f in self.terms if c)

    @property
    def smooth_off_origin(self):
        return all(f.smooth_off_origin for c, f in self.terms if c)

    def value(self, x):
        return _out(sum(c * np.asarray(f.value(x)) for c, f in self.terms))

    def gradient(self, x):
        return sum(c * f.gradient(x) for c, f in self.terms if c)

    def hessian(self, x):
        return sum(c * f.hessian(x) for c, f in self.terms if c)

    def subdiff(self, x):
        parts = []
        for c, f in self.terms:
            if c == 0:
                continue
            parts.append(_scale_set(f.subdiff(x), c))
        return MinkowskiSum(tuple(parts)).simplify()

    def lipschitz(self, radius):
        return sum(c * f.lipschitz(radius) for c, f in self.terms)


def _scale_set(S: SubdiffSet, c: float) -> SubdiffSet:
    return _map_set(S, c * np.eye(len(_first_vec(S))))


def _first_vec(S):
    if isinstance(S, Point):
        return S.g
    if isinstance(S, Segment):
        return S.g0
    if isinstance(S, ConvexHullOfPoints):
        return S.points[0]
    if isinstance(S, Ellipsoid):
        return S.center
    return _first_vec(S.parts[0])


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------

def evaluate(f: ConvexFunction, x):
    return f.value(x)


def gradient(f: ConvexFunction, x):
    return f.gradient(x)


def hessian(f: ConvexFunction, x):
    return f.hessian(x)


def subdiff(f: ConvexFunction, x) -> SubdiffSet:
    return f.subdiff(x)


def eval_sum_cases(mu: float, s: float, lam: float, t: float, x) -> float:
    """mu * w_s + lam * v_t by explicit case analysis on x."""
    x = _arr(x)
    r = float(np.linalg.norm(x))
    rho = float(np.linalg.norm(x[:-1]))
    up = x[-1] >= 0
    if s <= t:
        if up:
            if r <= s:
                return 0.0
            if r <= t:
                return mu * (r - s)
            return mu * (r - s) + lam * (r - t)
        if rho <= s:
            return 0.0 if r <= t else lam * (r - t)
        if r <= t:
            return mu * (rho - s)
        return mu * (rho - s) + lam * (r - t)
    if up:
        if r <= t:
            return 0.0
        if r <= s:
            return lam * (r - t)
        return mu * (r - s) + lam * (r - t)
    if r <= t:
        return 0.0
    if rho <= s:
        return lam * (r - t)
    return mu * (rho - s) + lam * (r - t)


# --------------------------------------------------------------------------
# proximal maps
# --------------------------------------------------------------------------

def _flatten(f: ConvexFunction, c: float = 1.0, out=None):
    out = [] if out is None else out
    if isinstance(f, NonnegCombination):
        for a, g in f.terms:
            _flatten(g, c * a, out)
    elif c != 0:
        out.append((c, f))
    return out


def _golden_radial(phi, hi, tol, max_iter):
    """Vectorized golden-section minimization of phi(r) on [0, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    a = np.zeros_like(hi)
    b = hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol * (1.0 + b)):
            break
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        p = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        fp = phi(p)
        c, d, fc, fd = (np.where(left, p, d), np.where(left, c, p),
                        np.where(left, fp, fd), np.where(left, fc, fp))
    else:
        if np.any(b - a > 1e3 * tol * (1.0 + b)):
            raise NonConvergence("golden-section search did not converge")
    cand = np.stack([0.5 * (a + b), np.zeros_like(a), hi], axis=-1)
    vals = np.stack([phi(cand[..., i]) for i in range(3)], axis=-1)
    return np.take_along_axis(cand, np.argmin(vals, axis=-1)[..., None], axis=-1)[..., 0]


def _prox_radial(terms, sigma, z, tol, max_iter):
    R = _norm(z)

    def phi(r):
        return sigma * sum(c * f.profile(r) for c, f in terms) + 0.5 * (r - R) ** 2

    r = _golden_radial(phi, R, tol, max_iter)
    safe = np.where(R > 0, R, 1.0)
    return z * (r / safe)[..., None]


def _prox_smooth(terms, sigma, z, tol, max_iter):
    x = z.copy()
    f = NonnegCombination(tuple(terms))

    def obj(y):
        return sigma * np.asarray(f.value(y)) + 0.5 * np.sum((y - z) ** 2, axis=-1)

    for _ in range(max_iter):
        g = sigma * f.gradient(x) + (x - z)
        if np.max(np.abs(g)) <= tol:
            return x
        H = sigma * f.hessian(x) + _eye_like(x)
        step = np.linalg.solve(H, g[..., None])[..., 0]
        t = np.ones(x.shape[:-1])
        f0 = obj(x)
        for _ in range(30):
            trial = x - t[..., None] * step
            worse = obj(trial) > f0 + 1e-15 * (1 + np.abs(f0))
            if not np.any(worse):
                break
            t = np.where(worse, 0.5 * t, t)
        x = x - t[..., None] * step
    g = sigma * f.gradient(x) + (x - z)
    if np.max(np.abs(g)) > 1e3 * tol:
        raise NonConvergence("Newton iteration for the prox did not converge")
    return x


def _prox_halfcone_cone(mu, s, lam, t, sigma, z):
    """Exact prox of mu*w_s + lam*v_t (t = 0 allowed) by candidate enumeration.

    The problem reduces to the half plane of (rho, h) = (|z'|, z_n).  The
    minimizer lies in the interior of a smooth piece, on a kink curve, or at
    a kink intersection; every such candidate is generated in closed form and
    the one with the smallest objective wins.
    """
    z = _arr(z)
    n = z.shape[-1]
    zp = z[..., :-1]
    rz = _norm(zp)
    hz = z[..., -1]
    Rz = np.sqrt(rz**2 + hz**2)
    m = sigma * mu
    l = sigma * lam
    eps = 1e-300

    def radial(Rt):
        Rt = np.maximum(Rt, 0.0)
        k = Rt / np.maximum(Rz, eps)
        return k * rz, k * hz

    cands = [(rz, hz)]  # f vanishes at z
    # upper half: mu(R-s), mu(R-s)+lam(R-t), lam(R-t) radial shrinks
    cands += [radial(Rz - m), radial(Rz - m - l), radial(Rz - l)]
    # lower half: mu(rho - s) shifts rho; with lam(R - t) as well
    cands.append((np.maximum(rz - m, 0.0), hz))
    Qr, Qh = rz - m, hz
    Qn = np.sqrt(Qr**2 + Qh**2)
    k = np.maximum(Qn - l, 0.0) / np.maximum(Qn, eps)
    cands.append((k * Qr, k * Qh))
    # lower half, v_t only, w_s = 0 (|x'| <= s): lam(R - t)
    cands.append(radial(Rz - l))
    # arc R = s (upper): nearest point
    cands.append(radial(np.full_like(Rz, s)))
    # ray rho = s, h < 0: h = hz, or h + l h / sqrt(s^2 + h^2) = hz
    cands.append((np.full_like(rz, s), hz))
    cands.append((np.full_like(rz, s), _solve_ray(s, l, hz)))
    # circle R = t: nearest point, or pulled by the w_s slope
    if t > 0:
        cands.append(radial(np.full_like(Rz, t)))
        kq = t / np.maximum(Qn, eps)
        cands.append((kq * Qr, kq * Qh))
        cands.append((np.full_like(rz, t), np.zeros_like(hz)))
        if t > s:
            cands.append((np.full_like(rz, s), np.full_like(hz, -math.sqrt(t * t - s * s))))
    cands.append((np.full_like(rz, s), np.zeros_like(hz)))
    cands.append((np.zeros_like(rz), np.zeros_like(hz)))

    rho_c = np.stack([c[0] for c in cands], axis=-1)
    h_c = np.stack([c[1] for c in cands], axis=-1)
    # objective in the reduced plane; the x' direction follows z'
    R_c = np.sqrt(rho_c**2 + h_c**2)
    w = np.where(h_c >= 0, np.maximum(0.0, R_c - s), np.maximum(0.0, np.abs(rho_c) - s))
    v = np.maximum(0.0, R_c - t)
    F = sigma * (mu * w + lam * v) + 0.5 * ((rho_c - rz[..., None]) ** 2 + (h_c - hz[..., None]) ** 2)
    best = np.argmin(F, axis=-1)
    rho = np.take_along_axis(rho_c, best[..., None], axis=-1)[..., 0]
    h = np.take_along_axis(h_c, best[..., None], axis=-1)[..., 0]
    direction = np.where(rz[..., None] > 0, zp / np.maximum(rz, eps)[..., None], 0.0)
    if n > 1:
        first = np.zeros(n - 1)
        first[0] = 1.0
        direction = np.where(rz[..., None] > 0, direction, first)
    x = np.empty_like(z)
    x[..., :-1] = rho[..., None] * direction
    x[..., -1] = h
    return x


def _solve_ray(s, l, hz):
    """Root of h + l h / sqrt(s^2 + h^2) = hz (monotone increasing in h)."""
    hz = _arr(hz)
    if l == 0:
        return hz.copy()
    lo = np.minimum(hz, 0.0) - 1.0
    hi = np.maximum(hz, 0.0) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = mid + l * mid / np.sqrt(s * s + mid * mid) - hz
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g < 0, hi, mid)
        if np.all(hi - lo < 1e-15 * (1 + np.abs(hz))):
            break
    return 0.5 * (lo + hi)


def _halfcone_cone_terms(terms):
    """Match terms against mu*w_s + lam*v_t (or + lam*|x|); None if no match."""
    mu, s, lam, t = 0.0, None, 0.0, None
    for c, f in terms:
        if isinstance(f, HalfCone):
            if s is not None and f.s != s:
                return None
            mu, s = mu + c, f.s
        elif isinstance(f, Cone):
            if t is not None and t != f.t:
                return None
            lam, t = lam + c, f.t
        elif isinstance(f, Norm):
            if t is not None and t != 0.0:
                return None
            lam, t = lam + c, 0.0
        else:
            return None
    if s is None:
        return None
    return mu, s, lam, (1.0 if t is None else t)


def prox(f: ConvexFunction, sigma: float, z, tol: float = 1e-10, max_iter: int = 200):
    """argmin_x sigma * f(x) + |x - z|^2 / 2, vectorized over leading axes of z."""
    if not sigma > 0:
        raise ValueError("prox step must be positive")
    z = _arr(z)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    terms = _flatten(f)
    # affine pieces shift the target
    shift = np.zeros(z.shape[-1])
    rest = []
    for c, g in terms:
        if isinstance(g, Affine):
            shift += c * _arr(g.c)
        elif isinstance(g, SupportBall):
            shift += c * _arr(g.center)
            if g.r:
                rest.append((c * g.r, Norm(g.n)))
        else:
            rest.append((c, g))
    z = z - sigma * shift
    x = _prox_terms(rest, sigma, z, tol, max_iter)
    return x[0] if single else x


def _prox_terms(terms, sigma, z, tol, max_iter):
    if not terms:
        return z.copy()
    if all(isinstance(g, Quadratic) for _, g in terms):
        C = sum(c * g.scale for c, g in terms)
        a = sum(c * g.scale * _arr(g.center) for c, g in terms) / C if C else 0.0
        return (z + 2 * sigma * C * a) / (1 + 2 * sigma * C)
    if len(terms) == 1:
        c, g = terms[0]
        if isinstance(g, Norm):
            R = _norm(z)
            k = np.maximum(0.0, 1.0 - sigma * c / np.maximum(R, 1e-300))
            return z * k[..., None]
        if isinstance(g, Cone):
            R = _norm(z)
            Rn = np.where(R <= g.t, R, np.where(R <= g.t + sigma * c, g.t, R - sigma * c))
            return z * (Rn / np.maximum(R, 1e-300))[..., None]
        if isinstance(g, SupportEllipse):
            Q = (sigma * c) ** 2 * _arr(g.M)
            return np.array([zz - _project_ellipsoid(Q, zz) for zz in z.reshape(-1, z.shape[-1])]).reshape(z.shape)
        if isinstance(g, Rotated):
            R = _arr(g.R)
            return prox(c * g.f, sigma, z @ R, tol, max_iter) @ R.T
        if isinstance(g, Ridge):
            return _prox_ridge(g, sigma * c, z)
    match = _halfcone_cone_terms(terms)
    if match is not None:
        return _prox_halfcone_cone(*match, sigma, z)
    if all(g.radial for _, g in terms):
        return _prox_radial(terms, sigma, z, tol, max_iter)
    if all(isinstance(g, (Quadratic, QuarticNorm)) or
           (isinstance(g, Rotated) and isinstance(g.f, (Quadratic, QuarticNorm))) for _, g in terms):
        return _prox_smooth(terms, sigma, z, tol, max_iter)
    return _prox_subgradient(NonnegCombination(tuple(terms)), sigma, z, tol, max_iter)


def _prox_ridge(g: Ridge, step, z):
    u = z[..., 0]
    # piecewise: u_new = u - step * slope_on_piece, or a break point
    edges = sorted(g.breaks)
    cands = [u - step * g.slope]
    acc = g.slope
    for b, w in sorted(zip(g.breaks, g.weights)):
        acc += w
        cands.append(u - step * acc)
    cands += [np.full_like(u, b) for b in edges]
    C = np.stack(cands, axis=-1)
    F = step * g.g(C) + 0.5 * (C - u[..., None]) ** 2
    best = np.take_along_axis(C, np.argmin(F, axis=-1)[..., None], axis=-1)[..., 0]
    x = z.copy()
    x[..., 0] = best
    return x


def _prox_subgradient(f, sigma, z, tol, max_iter):
    # diminishing-step subgradient descent; last resort for unsupported sums
    out = []
    for zz in z.reshape(-1, z.shape[-1]):
        x = zz.copy()
        best, best_val = x.copy(), sigma * f.value(x) + 0.0
        for k in range(1, 50 * max_iter + 1):
            try:
                g = f.gradient(x)
            except NotDifferentiable:
                g = np.zeros_like(x)
            d = sigma * g + (x - zz)
            x = x - d / (k + 1)
            val = sigma * f.value(x) + 0.5 * np.sum((x - zz) ** 2)
            if val < best_val:
                best, best_val = x.copy(), val
        try:
            res = f.subdiff(best).distance((zz - best) / sigma)
        except UnsupportedVariant:
            res = np.inf
        if res > tol:
            raise NonConvergence(f"subgradient prox residual {res:.2e} above tolerance {tol:.1e}")
        out.append(best)
    return np.array(out).reshape(z.shape)


def prox_residual(f: ConvexFunction, sigma: float, z, x) -> float:
    """dist((z - x)/sigma, subdiff f(x)): zero exactly at the prox point."""
    return f.subdiff(_arr(x)).distance((_arr(z) - _arr(x)) / sigma)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def to_dict(f: ConvexFunction) -> dict:
    if isinstance(f, Quadratic):
        return {"variant": "quadratic", "center": list(f.center), "scale": f.scale}
    if isinstance(f, QuarticNorm):
        return {"variant": "quartic_norm", "center": list(f.center)}
    if isinstance(f, Cone):
        return {"variant": "cone", "t": f.t, "n": f.n}
    if isinstance(f, HalfCone):
        return {"variant": "half_cone", "s": f.s, "n": f.n}
    if isinstance(f, Norm):
        return {"variant": "norm", "n": f.n}
    if isinstance(f, SupportBall):
        return {"variant": "support_ball", "r": f.r, "center": list(f.center)}
    if isinstance(f, SupportEllipse):
        return {"variant": "support_ellipse", "M": [list(r) for r in f.M]}
    if isinstance(f, Affine):
        return {"variant": "affine", "c": list(f.c), "b": f.b}
    if isinstance(f, Ridge):
        return {"variant": "ridge", "breaks": list(f.breaks), "weights": list(f.weights),
                "slope": f.slope, "n": f.n}
    if isinstance(f, Rotated):
        return {"variant": "rotated", "R": [list(r) for r in f.R], "function": to_dict(f.f)}
    if isinstance(f, NonnegCombination):
        return {"variant": "combination",
                "terms": [{"coef": c, "function": to_dict(g)} for c, g in f.terms]}
    raise UnsupportedVariant(type(f).__name__)


def from_dict(d: dict) -> ConvexFunction:
    kind = d.get("variant")
    try:
        if kind == "quadratic":
            return Quadratic(tuple(d["center"]), float(d.get("scale", 0.5)))
        if kind == "quartic_norm":
            return QuarticNorm(tuple(d["center"]))
        if kind == "cone":
            return Cone(float(d["t"]), int(d.get("n", 2)))
        if kind == "half_cone":
            return HalfCone(float(d["s"]), int(d.get("n", 2)))
        if kind == "norm":
            return Norm(int(d.get("n", 2)))
        if kind == "support_ball":
            return SupportBall(float(d["r"]), tuple(d["center"]))
        if kind == "support_ellipse":
            return SupportEllipse(tuple(map(tuple, d["M"])))
        if kind == "affine":
            return Affine(tuple(d["c"]), float(d.get("b", 0.0)))
        if kind == "ridge":
            return Ridge(tuple(d["breaks"]), tuple(d["weights"]), float(d.get("slope", 0.0)),
                         int(d.get("n", 2)))
        if kind == "rotated":
            return Rotated(from_dict(d["function"]), tuple(map(tuple, d["R"])))
        if kind == "combination":
            return NonnegCombination(tuple((float(t["coef"]), from_dict(t["function"]))
                                           for t in d["terms"]))
    except KeyError as exc:
        raise ValueError(f"function {kind!r} is missing field {exc}") from None
    raise ValueError(f"unknown function variant {kind!r}")
