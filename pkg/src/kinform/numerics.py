"""Low-level numerical kernels.

Elementary symmetric functions, mixed discriminants of two matrices, Haar
sampling on SO(n), Steiner polynomial fits, Gauss-Legendre panels and the
radial x spherical product quadrature used by every measure computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_gegenbauer, roots_legendre


class QuadratureError(ValueError):
    """A quadrature integrand produced a non-finite value at a node."""


def kappa(n: int) -> float:
    """Volume of the n-dimensional unit ball (kappa_0 = 1)."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def omega(n: int) -> float:
    """(n-1)-dimensional measure of the unit sphere in R^n."""
    return n * kappa(n)


@dataclass
class WeightedIntegral:
    """Scalar or vector value of a measure integral with provenance."""

    value: float | np.ndarray
    method: str
    error_estimate: float = 0.0
    samples: int = 0
    notes: str = ""

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise ValueError("error_estimate must be nonnegative")

    @property
    def is_vector(self) -> bool:
        return np.ndim(self.value) > 0


# --------------------------------------------------------------------------
# symmetric functions and mixed discriminants
# --------------------------------------------------------------------------

def elem_sym(eigenvalues, j: int):
    """j-th elementary symmetric function of the last axis of `eigenvalues`.

    Works on a single list of n values or on a stacked array (..., n).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[-1]
    if not 0 <= j <= n:
        raise ValueError(f"j={j} out of range 0..{n}")
    # e[k] after processing all eigenvalues; standard one-pass recurrence
    e = [np.ones(lam.shape[:-1])] + [np.zeros(lam.shape[:-1]) for _ in range(j)]
    for i in range(n):
        li = lam[..., i]
        for k in range(min(i + 1, j), 0, -1):
            e[k] = e[k] + li * e[k - 1]
    out = e[j]
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _bernstein_inverse(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Chebyshev nodes on the segment s + t = 1
    i = np.arange(n + 1)
    s = 0.5 * (1.0 + np.cos(np.pi * (2 * i + 1) / (2 * (n + 1))))
    t = 1.0 - s
    jj = np.arange(n + 1)
    binom = np.array([math.comb(n, k) for k in jj], dtype=float)
    vander = binom[None, :] * s[:, None] ** jj[None, :] * t[:, None] ** (n - jj)[None, :]
    return s, t, np.linalg.inv(vander)


def mixed_dets(A, B) -> np.ndarray:
    """All normalized mixed discriminants D(A[j], B[n-j]), j = 0..n.

    Normalization: det(sA + tB) = sum_j C(n,j) D_j s^j t^(n-j).  The
    coefficients are recovered from n+1 determinant evaluations at
    Chebyshev nodes on s + t = 1.  A and B may be stacked (..., n, n).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-2:] != B.shape[-2:] or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    n = A.shape[-1]
    s, t, inv = _bernstein_inverse(n)
    A, B = np.broadcast_arrays(A, B)
    mats = s[:, None, None] * A[..., None, :, :] + t[:, None, None] * B[..., None, :, :]
    dets = np.linalg.det(mats)
    return dets @ inv.T


def mixed_det_two(A, B, j: int):
    """D(A[j], B[n-j]) for a pair of symmetric matrices (or stacks of them)."""
    n = np.shape(A)[-1]
    if not 0 <= j <= n:
        raise ValueError(f"j={j} out of range 0..{n}")
    out = mixed_dets(A, B)[..., j]
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# random streams and Haar rotations
# --------------------------------------------------------------------------

def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for stream `stream` of master seed `seed`."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def haar_rotations(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """`count` independent Haar-distributed elements of SO(n), shape (count, n, n)."""
    g = rng.standard_normal((count, n, n))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    q = q * d[:, None, :]
    neg = np.linalg.det(q) < 0
    q[neg, :, 0] *= -1.0
    return q


def haar_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    return haar_rotations(rng, n, 1)[0]


def is_rotation(R, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    return bool(
        np.all(np.abs(R @ R.T - np.eye(n)) <= tol) and abs(np.linalg.det(R) - 1.0) <= tol
    )


# --------------------------------------------------------------------------
# Steiner polynomial fit
# --------------------------------------------------------------------------

def steiner_fit(s_values, values, degree: int) -> np.ndarray:
    """Least-squares coefficients c_0..c_degree of sum_j c_j s^j.

    `values` may be scalar per node (shape (m,)) or vector per node
    (shape (m, d)); the result then has shape (degree+1,) or (degree+1, d).
    """
    s = np.asarray(s_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(np.unique(s)) < degree + 1:
        raise ValueError(
            f"need at least {degree + 1} distinct nodes, got {len(np.unique(s))}"
        )
    V = s[:, None] ** np.arange(degree + 1)[None, :]
    # column scaling keeps the normal equations tame for small s
    scale = np.max(np.abs(V), axis=0)
    coef, *_ = np.linalg.lstsq(V / scale, y, rcond=None)
    return (coef.T / scale).T


# --------------------------------------------------------------------------
# Gauss-Legendre panels
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(order)
    return x, w


# a panel [a, b] with b/a above this ratio is integrated in log(r)
LOG_RATIO = 4.0


def panel_rule(a: float, b: float, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int_a^b, switching to r = exp(u) when b/a is large."""
    x, w = _gl(order)
    if b <= a:
        return np.empty(0), np.empty(0)
    if a > 0 and b / a > LOG_RATIO:
        pieces = max(1, math.ceil(math.log(b / a) / math.log(16.0)))
        edges = np.geomspace(a, b, pieces + 1)
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            ul, uh = math.log(lo), math.log(hi)
            u = 0.5 * (uh - ul) * x + 0.5 * (uh + ul)
            r = np.exp(u)
            nodes.append(r)
            weights.append(0.5 * (uh - ul) * w * r)
        return np.concatenate(nodes), np.concatenate(weights)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def radial_rule(lo: float, hi: float, breaks: Sequence[float] = (), order: int = 32):
    """Composite rule on [lo, hi] with panel edges at every break inside."""
    edges = sorted({float(lo), float(hi)} | {float(b) for b in breaks if lo < b < hi})
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r, w = panel_rule(a, b, order)
        nodes.append(r)
        weights.append(w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def batched_panels(a, b, order: int = 24, log_map=None):
    """Gauss-Legendre nodes for many intervals [a_i, b_i] at once.

    Returns nodes and weights of shape (len(a), order).  Empty intervals
    (b <= a) get zero weights.  With `log_map` true (per interval, or
    decided from b/a) the rule is taken in log(r).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = _gl(order)
    empty = ~(b > a)
    bb = np.where(empty, a + 1.0, b)
    if log_map is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_map = (a > 0) & (bb / np.where(a > 0, a, 1.0) > LOG_RATIO)
    log_map = np.broadcast_to(log_map, a.shape)
    # linear map
    lin_r = 0.5 * (bb - a)[..., None] * x + 0.5 * (bb + a)[..., None]
    lin_w = 0.5 * (bb - a)[..., None] * w
    # log map (only meaningful where a > 0)
    la = np.log(np.where(a > 0, a, 1.0))
    lb = np.log(np.where(a > 0, bb, 2.0))
    u = 0.5 * (lb - la)[..., None] * x + 0.5 * (lb + la)[..., None]
    log_r = np.exp(u)
    log_w = 0.5 * (lb - la)[..., None] * w * log_r
    r = np.where(log_map[..., None], log_r, lin_r)
    wt = np.where(log_map[..., None], log_w, lin_w)
    wt = np.where(empty[..., None], 0.0, wt)
    return r, wt


def tail_integral(func: Callable, s, upper: float, breaks: Sequence[float] = (),
                  order: int = 24, extra_break=None):
    """int_s^upper func(r) dr for an array of lower limits s.

    The interval is split at every break (and at `extra_break`, which may be
    an array aligned with s); each piece uses `batched_panels`.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    pts = [float(b) for b in breaks if 0 < b < upper] + [upper]
    cols = [np.broadcast_to(np.asarray(p, dtype=float), s.shape) for p in pts]
    if extra_break is not None:
        cols.append(np.broadcast_to(np.asarray(extra_break, dtype=float), s.shape))
    edges = np.sort(np.stack([s] + [np.maximum(c, s) for c in cols], axis=-1), axis=-1)
    edges = np.minimum(edges, max(upper, 0.0))
    total = np.zeros(s.shape)
    for k in range(edges.shape[-1] - 1):
        lo, hi = edges[..., k], edges[..., k + 1]
        if not np.any(hi > lo):
            continue
        r, w = batched_panels(lo, hi, order)
        # func sees the full (len(s), order) node array so it can broadcast
        # per-row parameters; rows with empty intervals carry zero weight
        vals = np.asarray(func(r), dtype=float)
        total += np.sum(np.where(w > 0, vals * w, 0.0), axis=-1)
    return total


# --------------------------------------------------------------------------
# sphere nodes and product quadrature
# --------------------------------------------------------------------------

def sphere_rule(n: int, count: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Angular nodes (m, n) and positive weights summing to omega_n.

    n = 2: `count` equispaced angles.  n >= 3: recursive product of a
    Gauss-Gegenbauer rule in the last coordinate with the rule on S^(n-2).
    """
    if n < 2:
        raise ValueError("sphere rule needs n >= 2")
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(count, 2 * np.pi / count)
    m_lat = max(8, int(round(count ** (1.0 / (n - 1)))))
    if n == 3:
        tn, tw = roots_legendre(m_lat)
    else:
        tn, tw = roots_gegenbauer(m_lat, (n - 2) / 2.0)
    sub_u, sub_w = sphere_rule(n - 1, max(8, count // m_lat))
    scale = np.sqrt(1.0 - tn**2)
    pts = np.concatenate(
        [scale[:, None, None] * sub_u[None, :, :], np.broadcast_to(tn[:, None, None], (m_lat, len(sub_w), 1))],
        axis=-1,
    ).reshape(-1, n)
    wts = (tw[:, None] * sub_w[None, :]).reshape(-1)
    return pts, wts


@dataclass
class QuadratureGrid:
    """Radial Gauss-Legendre nodes on [eps, r_max] times a sphere rule."""

    n: int
    radial_nodes: np.ndarray
    radial_weights: np.ndarray
    angular_nodes: np.ndarray
    angular_weights: np.ndarray
    eps: float
    r_max: float
    breaks: tuple = field(default_factory=tuple)
    radial_order: int = 32

    def __post_init__(self):
        if np.any(self.radial_weights <= 0) or np.any(self.angular_weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.angular_weights.sum() - omega(self.n)) > 1e-8:
            raise ValueError("angular weights do not sum to the sphere measure")

    def points(self) -> np.ndarray:
        """All nodes, shape (n_radial, n_angular, n)."""
        return self.radial_nodes[:, None, None] * self.angular_nodes[None, :, :]

    def volume_weights(self) -> np.ndarray:
        """Lebesgue weights including the r^(n-1) Jacobian, (n_radial, n_angular)."""
        rw = self.radial_weights * self.radial_nodes ** (self.n - 1)
        return rw[:, None] * self.angular_weights[None, :]


def make_grid(n: int, r_max: float, eps: float | None = None, breaks: Sequence[float] = (),
              radial_order: int = 32, angular: int | None = None) -> QuadratureGrid:
    """Product grid on eps <= |x| <= r_max with radial panel edges at `breaks`."""
    if eps is None:
        eps = 1e-7 * r_max
    if angular is None:
        angular = 512 if n == 2 else 48 * 96
    r, w = radial_rule(eps, r_max, breaks, radial_order)
    u, uw = sphere_rule(n, angular)
    return QuadratureGrid(n, r, w, u, uw, eps, r_max, tuple(sorted(breaks)), radial_order)


def product_quadrature(integrand: Callable, grid: QuadratureGrid, weight: str = "scalar",
                       estimate_error: bool = False, radial: Callable | None = None) -> WeightedIntegral:
    """Tensor quadrature of int integrand(x) dx (times x for vector weight).

    `integrand` receives points of shape (..., n) and returns values of
    shape (...).  An optional `radial` factor is evaluated once per radial
    node and multiplies the integrand; use it for expensive functions of |x|.
    """
    if weight not in ("scalar", "vector"):
        raise ValueError(f"unknown weight {weight!r}")
    pts = grid.points()
    vals = np.asarray(integrand(pts), dtype=float)
    if radial is not None:
        vals = vals * np.asarray(radial(grid.radial_nodes), dtype=float)[:, None]
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite integrand value at a quadrature node")
    vw = grid.volume_weights()
    if weight == "vector":
        value = np.einsum("ra,ra,rak->k", vals, vw, pts)
    else:
        value = float(np.sum(vals * vw))
    err = 0.0
    if estimate_error:
        coarse = make_grid(grid.n, grid.r_max, grid.eps, grid.breaks,
                           radial_order=max(8, grid.radial_order // 2),
                           angular=max(16, len(grid.angular_weights) // 2))
        other = product_quadrature(integrand, coarse, weight, radial=radial).value
        err = float(np.max(np.abs(np.asarray(value) - np.asarray(other))))
    return WeightedIntegral(value, "smooth_quadrature", err, samples=vals.size)
