"""Integrals against Hessian measures Phi_j and Monge-Ampere measures MA_j.

Independent routes:

* smooth quadrature of the densities [Hess f]_j and D(Hess f[j], Hess|x|[n-j]),
* the prox-Steiner oracle, which only uses the proximal map: the push-forward
  of Lebesgue measure under z -> prox(f, s, z) equals sum_j s^j Phi_j, so
  int psi(prox(f, s, z)) dz is a polynomial in s whose coefficients are the
  Phi_j integrals of psi,
* closed forms for radial functions and for multiples of the half-cone w_s,
* analytic Dirac terms (MA_0 and support functions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ellipe
from scipy.stats import qmc

from . import convexfn as cf
from .numerics import (WeightedIntegral, elem_sym, kappa, make_grid, mixed_dets,
                       product_quadrature, rng_stream, steiner_fit)
from .transforms import (GenericDensity, RadialDensity, R_power, R_power_at)


class RouteMismatch(RuntimeError):
    pass


STEINER_NODES = tuple(np.round(np.arange(1, 11) * 0.1, 10))


@dataclass
class MeasureQuery:
    function: cf.ConvexFunction
    j: int
    density: RadialDensity
    weight: str = "scalar"
    region: float | None = None  # origin-centred ball radius; None = density support

    def __post_init__(self):
        if self.weight not in ("scalar", "vector"):
            raise ValueError(f"weight must be 'scalar' or 'vector', got {self.weight!r}")
        if not 0 <= self.j <= self.function.n:
            raise ValueError(f"j={self.j} out of range 0..{self.function.n}")

    @property
    def n(self) -> int:
        return self.function.n

    @property
    def radius(self) -> float:
        R = self.density.support_upper
        return R if self.region is None else min(R, float(self.region))


def as_density(beta, support_upper: float, breaks=()) -> RadialDensity:
    if isinstance(beta, RadialDensity):
        return beta
    return GenericDensity(beta, support_upper, breaks)


def singular_radii(f: cf.ConvexFunction) -> list[float]:
    return sorted({float(r) for r, _ in _jumps(f) if r > 0})


def _jumps(f):
    try:
        return f.profile_slope_jumps()
    except cf.UnsupportedVariant:
        return []


def _grid(q: MeasureQuery, radial_order=32, angular=None, extra_breaks=()):
    breaks = list(q.density.breaks) + singular_radii(q.function) + list(extra_breaks)
    return make_grid(q.n, q.radius, breaks=breaks, radial_order=radial_order, angular=angular)


# --------------------------------------------------------------------------
# smooth routes
# --------------------------------------------------------------------------

def phi_integral_smooth(q: MeasureQuery, radial_order: int = 32, angular: int | None = None,
                        estimate_error: bool = True) -> WeightedIntegral:
    """Quadrature of int xi(|x|) [Hess f(x)]_j dx (times x for vector weight)."""
    f, xi, j = q.function, q.density, q.j

    def integrand(x):
        return elem_sym(np.linalg.eigvalsh(f.hessian(x)), j)

    grid = _grid(q, radial_order, angular)
    return product_quadrature(integrand, grid, q.weight, estimate_error=estimate_error, radial=xi)


def _norm_hessian(x):
    r = np.linalg.norm(x, axis=-1)
    u = x / r[..., None]
    n = x.shape[-1]
    return (np.eye(n) - u[..., :, None] * u[..., None, :]) / r[..., None, None]


def ma_density(f: cf.ConvexFunction, j: int, x):
    """D(Hess f(x)[j], Hess|x|[n-j]) at points x != 0."""
    return mixed_dets(f.hessian(x), _norm_hessian(x))[..., j]


def ma_smooth(q: MeasureQuery, radial_order: int = 32, angular: int | None = None,
              estimate_error: bool = True, extra_breaks=()) -> WeightedIntegral:
    """Quadrature of int alpha(|x|) D(Hess f[j], Hess|x|[n-j]) dx (j >= 1)."""
    f, alpha, j = q.function, q.density, q.j
    if j == 0:
        return ma0_integral(alpha, q.weight, q.n)

    def integrand(x):
        return ma_density(f, j, x)

    grid = _grid(q, radial_order, angular, extra_breaks)
    return product_quadrature(integrand, grid, q.weight, estimate_error=estimate_error, radial=alpha)


# --------------------------------------------------------------------------
# prox-Steiner oracle
# --------------------------------------------------------------------------

@dataclass
class SteinerSampler:
    """Point sets for the prox-volume oracle.

    kind: "sobol" (scrambled Sobol, one independent scrambling per
    replicate), "uniform" (plain Monte Carlo) or "grid" (midpoint lattice,
    deterministic, replicates ignored).
    """

    points: int = 2**14
    replicates: int = 8
    seed: int = 0
    kind: str = "sobol"
    nodes: tuple = STEINER_NODES

    def batches(self, n: int):
        if self.kind == "grid":
            m = int(round(self.points ** (1.0 / n)))
            ax = (np.arange(m) + 0.5) / m
            yield np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
            return
        for i in range(self.replicates):
            rng = rng_stream(self.seed, i)
            if self.kind == "sobol":
                eng = qmc.Sobol(d=n, scramble=True, seed=rng)
                yield eng.random(self.points)
            elif self.kind == "uniform":
                yield rng.random((self.points, n))
            else:
                raise ValueError(f"unknown sampler {self.kind!r}")


def _oracle_box(f, radius, nodes):
    return radius + max(nodes) * f.lipschitz(radius)


def _fit_increments(nodes, incr, n):
    """Fit sum_{j=1..n} c_j s^j (no intercept) to increments, per column."""
    s = np.asarray(nodes, dtype=float)
    V = s[:, None] ** np.arange(1, n + 1)[None, :]
    coef, *_ = np.linalg.lstsq(V, incr.reshape(len(s), -1), rcond=None)
    return coef.reshape((n,) + incr.shape[1:])


def _oracle_run(f, psi, radius, sampler: SteinerSampler, width: int):
    """Per-replicate Steiner coefficients of int psi(prox(f, s, z)) dz.

    psi maps points (m, n) to values (m, width).  Returns an array of shape
    (replicates, n + 1, width); column 0 is the s^0 coefficient.
    """
    n = f.n
    L = _oracle_box(f, radius, sampler.nodes)
    vol = (2 * L) ** n
    out = []
    for u in sampler.batches(n):
        z = L * (2 * u - 1)
        base = psi(z)
        incr = np.empty((len(sampler.nodes), width))
        for i, s in enumerate(sampler.nodes):
            x = cf.prox(f, s, z)
            incr[i] = vol * np.mean(psi(x) - base, axis=0)
        coef = np.empty((n + 1, width))
        coef[0] = vol * np.mean(base, axis=0)
        coef[1:] = _fit_increments(sampler.nodes, incr, n)
        out.append(coef)
    return np.array(out)


def _summarize(reps):
    mean = reps.mean(axis=0)
    if len(reps) > 1:
        err = reps.std(axis=0, ddof=1) / math.sqrt(len(reps))
    else:
        err = np.zeros_like(mean)
    return mean, err


def phi_region_oracle(f: cf.ConvexFunction, j: int, region=("ball", 1.0),
                      sampler: SteinerSampler | None = None) -> WeightedIntegral:
    """Phi_j(f, B) for a ball ("ball", R[, center]) or box ("box", lo, hi)."""
    sampler = sampler or SteinerSampler()
    kind = region[0]
    if kind == "ball":
        R = float(region[1])
        c = np.zeros(f.n) if len(region) < 3 else np.asarray(region[2], dtype=float)
        radius = R + float(np.linalg.norm(c))

        def psi(x):
            return (np.linalg.norm(x - c, axis=-1) <= R).astype(float)[:, None]
    elif kind == "box":
        lo, hi = np.asarray(region[1], float), np.asarray(region[2], float)
        radius = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

        def psi(x):
            return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)[:, None]
    else:
        raise ValueError(f"unknown region {kind!r}")
    reps = _oracle_run(f, psi, radius, sampler, 1)[:, j, 0]
    err = reps.std(ddof=1) / math.sqrt(len(reps)) if len(reps) > 1 else 0.0
    return WeightedIntegral(float(reps.mean()), "prox_steiner", float(err),
                            samples=sampler.points * max(1, sampler.replicates) * len(sampler.nodes))


def phi_weighted_oracle(q: MeasureQuery, sampler: SteinerSampler | None = None,
                        cells: bool = False, max_levels: int = 4) -> WeightedIntegral:
    """Oracle estimate of int xi(|x|) dPhi_j (times x for vector weight).

    Pointwise mode integrates psi = xi(|x|)[x] directly, which is exact in the
    limit of infinitely fine cells.  Cell mode partitions the region into
    radial shells (and angular sectors of at most 15 degrees for the vector
    weight), weights each cell's Phi_j mass with xi at the cell centroid and
    refines until the estimate moves by less than 1%.
    """
    sampler = sampler or SteinerSampler()
    f, xi, n = q.function, q.density, q.n
    R = q.radius
    vec = q.weight == "vector"
    width = n if vec else 1
    samples = sampler.points * max(1, sampler.replicates) * len(sampler.nodes)
    if not cells:
        def psi(x):
            r = np.linalg.norm(x, axis=-1)
            w = np.where(r < R, xi(np.minimum(r, R)), 0.0)
            return w[:, None] * x if vec else w[:, None]

        reps = _oracle_run(f, psi, R, sampler, width)[:, q.j, :]
        mean, err = _summarize(reps)
        value = mean if vec else float(mean[0])
        return WeightedIntegral(value, "prox_steiner", float(np.max(err)), samples=samples,
                                notes="pointwise weight")
    return _cell_oracle(q, sampler, max_levels)


def _cell_oracle(q, sampler, max_levels):
    f, xi, n = q.function, q.density, q.n
    R = q.radius
    vec = q.weight == "vector"
    if vec and n != 2:
        raise NotImplementedError("vector cell partition is implemented for n = 2")
    kinks = sorted({b for b in list(xi.breaks) + singular_radii(f) if 0 < b < R} | {R})
    L = _oracle_box(f, R, sampler.nodes)
    vol = (2 * L) ** n
    # cache prox outputs once; every partition reuses them
    cache = []
    for u in sampler.batches(n):
        z = L * (2 * u - 1)
        cache.append((z, [cf.prox(f, s, z) for s in sampler.nodes]))

    def estimate(shells_per_piece):
        edges = [0.0]
        for a, b in zip([0.0] + kinks[:-1], kinks):
            edges.extend(np.linspace(a, b, shells_per_piece + 1)[1:])
        edges = np.array(edges)
        nsec = 24 if vec else 1
        ncell = (len(edges) - 1) * nsec

        def cell_index(x):
            r = np.linalg.norm(x, axis=-1)
            shell = np.searchsorted(edges, r, side="right") - 1
            ok = (r < R)
            if vec:
                th = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
                sec = np.minimum((th / (2 * np.pi / nsec)).astype(int), nsec - 1)
                idx = shell * nsec + sec
            else:
                idx = shell
            return np.where(ok, idx, ncell)

        # representatives: area centroids of annular sectors
        a, b = edges[:-1], edges[1:]
        rc = (n / (n + 1)) * (b ** (n + 1) - a ** (n + 1)) / (b**n - a**n)
        reps = []
        for z, xs in cache:
            base = np.bincount(cell_index(z), minlength=ncell + 1)[:ncell]
            incr = np.array([np.bincount(cell_index(x), minlength=ncell + 1)[:ncell] - base for x in xs])
            coef = _fit_increments(sampler.nodes, vol * incr / len(z), n)
            mass = vol * base / len(z) if q.j == 0 else coef[q.j - 1]
            if vec:
                dth = 2 * np.pi / nsec
                mid = (np.arange(nsec) + 0.5) * dth
                shrink = math.sin(dth / 2) / (dth / 2)
                # centroid radius of an annular sector
                rsec = (2.0 / 3.0) * (b**3 - a**3) / (b**2 - a**2) * shrink
                cx = rsec[:, None] * np.cos(mid)[None, :]
                cy = rsec[:, None] * np.sin(mid)[None, :]
                w = xi(np.hypot(cx, cy)).ravel()
                val = np.array([np.sum(w * mass * cx.ravel()), np.sum(w * mass * cy.ravel())])
            else:
                val = np.array([np.sum(xi(rc) * mass)])
            reps.append(val)
        return np.array(reps)

    level, prev, reps = 0, None, None
    k = 2
    while level < max_levels:
        reps = estimate(k)
        cur = reps.mean(axis=0)
        if prev is not None and np.linalg.norm(cur - prev) <= 0.01 * max(np.linalg.norm(cur), 1e-12):
            break
        prev, k, level = cur, 2 * k, level + 1
    mean, err = _summarize(reps)
    samples = sampler.points * max(1, sampler.replicates) * len(sampler.nodes)
    value = mean if vec else float(mean[0])
    return WeightedIntegral(value, "prox_steiner", float(np.max(err)), samples=samples,
                            notes=f"cell partition, {k} shells per piece")


# --------------------------------------------------------------------------
# closed forms and Dirac terms
# --------------------------------------------------------------------------

def alpha_at_zero(alpha: RadialDensity) -> float:
    r = 2.0 ** -np.arange(30, 45)
    v = np.asarray(alpha(r), dtype=float)
    if not np.all(np.isfinite(v)) or np.ptp(v) > 1e-6 * max(1.0, abs(v[-1])):
        raise ValueError("density has no finite limit at 0")
    return float(v[-1])


def ma0_integral(alpha: RadialDensity, weight: str = "scalar", n: int = 2,
                 region: tuple | float | None = None) -> WeightedIntegral:
    """MA_0 = kappa_n delta_0: kappa_n alpha(0+) if the region holds 0."""
    if weight == "vector":
        return WeightedIntegral(np.zeros(n), "analytic_dirac", 0.0)
    if region is not None:
        if isinstance(region, (int, float)):
            center, radius = np.zeros(n), float(region)
        else:
            center, radius = np.asarray(region[0], float), float(region[1])
        if np.linalg.norm(center) > radius:
            return WeightedIntegral(0.0, "analytic_dirac", 0.0)
    return WeightedIntegral(kappa(n) * alpha_at_zero(alpha), "analytic_dirac", 0.0)


def intrinsic_volume(K, n: int, j: int) -> float:
    """V_j of ("ball", r), ("ellipse", M) (n = 2) or ("segment", L)."""
    kind = K[0]
    if not 0 <= j <= n:
        raise ValueError("j out of range")
    if j == 0:
        return 1.0
    if kind == "ball":
        r = float(K[1])
        return math.comb(n, j) * kappa(n) / kappa(n - j) * r**j
    if kind == "segment":
        return float(K[1]) if j == 1 else 0.0
    if kind == "ellipse":
        if n != 2:
            raise ValueError("ellipse bodies are supported in the plane only")
        ax = np.sqrt(np.linalg.eigvalsh(np.asarray(K[1], float)))
        b, a = float(ax[0]), float(ax[1])
        if j == 2:
            return math.pi * a * b
        return 2.0 * a * ellipe(1.0 - (b / a) ** 2)  # half the perimeter
    raise ValueError(f"unsupported body {kind!r}")


def ma_support_mass(K, n: int, j: int) -> float:
    """Total mass of MA(h_K[j], h_B[n-j]), all of it sitting at the origin."""
    return kappa(n - j) * intrinsic_volume(K, n, j) / math.comb(n, j)


def radial_ma_marginal(f: cf.ConvexFunction, j: int):
    """Radial marginal of MA_j(f) for radial f: atoms and a density in r.

    With profile phi, the marginal is kappa_n d(phi'^j): atoms where phi'
    jumps and density kappa_n j phi'^(j-1) phi'' elsewhere.
    """
    n = f.n
    k = kappa(n)
    if j == 0:
        return [(0.0, k)], lambda r: np.zeros(np.shape(r))
    atoms = {}
    for r0, jump in _jumps(f):
        atoms[r0] = atoms.get(r0, 0.0) + jump
    out = []
    for r0, jump in sorted(atoms.items()):
        right = float(f.profile_slope(np.array(r0)))
        left = right - jump
        mass = k * (right**j - max(left, 0.0) ** j)
        if mass:
            out.append((r0, mass))

    def density(r):
        r = np.asarray(r, dtype=float)
        return k * j * f.profile_slope(r) ** (j - 1) * f.profile_curvature(r)

    return out, density


def radial_ma_marginal_smooth(f: cf.ConvexFunction, j: int, radii, angular: int | None = None):
    """Radial marginal density of MA_j(f) for smooth f by angular quadrature."""
    from .numerics import sphere_rule

    n = f.n
    u, w = sphere_rule(n, 512 if angular is None and n == 2 else (angular or 48 * 96))
    radii = np.asarray(radii, dtype=float)
    x = radii[:, None, None] * u[None, :, :]
    D = ma_density(f, j, x)
    return radii ** (n - 1) * (D @ w)


def halfcone_parts(f: cf.ConvexFunction):
    """Return (mu, s, rotation) if f = mu * w_s (possibly rotated), else None."""
    R = None
    g = f
    mu = 1.0
    while True:
        if isinstance(g, cf.NonnegCombination) and len(g.terms) == 1:
            mu *= g.terms[0][0]
            g = g.terms[0][1]
        elif isinstance(g, cf.Rotated):
            Rg = np.asarray(g.R, dtype=float)
            R = Rg if R is None else R @ Rg
            g = g.f
        else:
            break
    if isinstance(g, cf.HalfCone):
        return mu, g.s, (np.eye(g.n) if R is None else R)
    return None


def ma_closed_form(q: MeasureQuery) -> WeightedIntegral:
    """Closed forms: radial f (Stieltjes in the profile slope) and mu * w_s (vector)."""
    f, alpha, j, n = q.function, q.density, q.j, q.n
    if j == 0:
        return ma0_integral(alpha, q.weight, n)
    hc = halfcone_parts(f)
    if hc is not None and q.weight == "vector":
        mu, s, R = hc
        m = n - j
        beta = R_power(alpha, -m, check=False) if m else alpha
        coef = mu**j * kappa(n - 1) / n * s ** (n - j + 1) * float(beta(np.array(s)))
        e = np.zeros(n)
        e[-1] = 1.0
        return WeightedIntegral(coef * (R @ e), "closed_form", 0.0)
    if getattr(f, "radial", False):
        if q.weight == "vector":
            return WeightedIntegral(np.zeros(n), "closed_form", 0.0)
        atoms, dens = radial_ma_marginal(f, j)
        total = 0.0
        for r0, mass in atoms:
            if r0 < q.radius:
                total += mass * (alpha_at_zero(alpha) if r0 == 0 else float(alpha(np.array(r0))))
        from .numerics import radial_rule

        brk = list(alpha.breaks) + [r for r, _ in atoms]
        r, w = radial_rule(1e-9 * q.radius, q.radius, brk, order=48)
        total += float(np.sum(w * alpha(r) * dens(r)))
        return WeightedIntegral(total, "closed_form", 1e-10 * max(1.0, abs(total)))
    raise cf.UnsupportedVariant("no closed form for this function")


def ma_transform(q: MeasureQuery, sampler: SteinerSampler | None = None,
                 **kw) -> WeightedIntegral:
    """MA_j integral through Phi_j with xi = R^-(n-j) alpha / C(n, j)."""
    n, j = q.n, q.j
    if j == 0:
        return ma0_integral(q.density, q.weight, n)
    m = n - j
    base = R_power(q.density, -m, check=False) if m else q.density
    c = math.comb(n, j)
    xi = GenericDensity(lambda r: base(r) / c, q.density.support_upper, q.density.breaks,
                        singular_order=getattr(base, "singular_order", 0.0))
    pq = MeasureQuery(q.function, j, xi, q.weight, q.region)
    if q.function.smooth_off_origin:
        res = phi_integral_smooth(pq, **kw)
    else:
        res = phi_weighted_oracle(pq, sampler)
    return WeightedIntegral(res.value, res.method, res.error_estimate, res.samples,
                            notes=f"transform route via {res.method}")


def ma_j_integral(q: MeasureQuery, route: str = "auto", sampler: SteinerSampler | None = None,
                  tolerance: float = 0.01) -> WeightedIntegral:
    """int alpha(|x|) [x] dMA_j(f; x) by the requested route.

    auto: smooth functions use the smooth route and are cross-checked against
    the transform route; other functions use a closed form when one exists,
    else the transform route through the oracle.
    """
    if route == "smooth":
        return ma_smooth(q)
    if route == "transform":
        return ma_transform(q, sampler)
    if route == "closed_form":
        return ma_closed_form(q)
    if route != "auto":
        raise ValueError(f"unknown route {route!r}")
    if q.function.smooth_off_origin:
        a = ma_smooth(q)
        b = ma_transform(q, sampler)
        check_routes(a, b, tolerance)
        return a
    try:
        return ma_closed_form(q)
    except cf.UnsupportedVariant:
        return ma_transform(q, sampler)


def check_routes(a: WeightedIntegral, b: WeightedIntegral, tolerance: float = 0.01,
                 floor: float = 1e-8):
    va, vb = np.atleast_1d(a.value), np.atleast_1d(b.value)
    diff = float(np.linalg.norm(va - vb))
    scale = float(np.linalg.norm(vb))
    if diff > max(tolerance * scale, floor + 3 * (a.error_estimate + b.error_estimate)):
        raise RouteMismatch(f"routes {a.method} and {b.method} disagree: {va} vs {vb}")
    return diff / scale if scale else diff


def vector_ma_weighted(f: cf.ConvexFunction, k: int, beta: Callable, support_upper: float,
                       breaks=()) -> WeightedIntegral:
    """int beta(|x|) x dMA_k(f; x) for a plain radial weight callable beta."""
    dens = GenericDensity(beta, support_upper, breaks)
    q = MeasureQuery(f, k, dens, "vector")
    hc = halfcone_parts(f)
    if hc is not None:
        mu, s, R = hc
        n = f.n
        m = n - k
        val = float(R_power_at(beta, -m, np.array([s]), support_upper, breaks)[0]) if m else float(beta(np.array([s]))[0])
        e = np.zeros(n)
        e[-1] = 1.0
        coef = mu**k * kappa(n - 1) / n * s ** (n - k + 1) * val
        return WeightedIntegral(coef * (R @ e), "closed_form", 0.0)
    if getattr(f, "radial", False):
        return WeightedIntegral(np.zeros(f.n), "closed_form", 0.0)
    return ma_smooth(q, estimate_error=True)
