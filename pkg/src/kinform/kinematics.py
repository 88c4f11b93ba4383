"""Both sides of the additive kinematic formulas and their closed forms.

LHS  kappa_n int_SO(n) int alpha(|y|) y dMA_j(u + v o theta^-1; y) dtheta
RHS  sum_{k=1..j} C(j,k) int int K_k(|x|,|y|) x dMA_{j-k}(v; y) dMA_k(u; x)

with the kernel K_k(s,t) = R_1^(n-k)(R^-(n-k) alpha)(max(s,t)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import convexfn as cf
from .measures import (MeasureQuery, SteinerSampler, alpha_at_zero,
                       intrinsic_volume, ma_closed_form, ma_smooth,
                       ma_support_mass, ma_transform, radial_ma_marginal,
                       radial_ma_marginal_smooth, vector_ma_weighted)
from .numerics import (WeightedIntegral, haar_rotations, kappa, radial_rule, rng_stream,
                       tail_integral)
from .reports import VerificationReport, make_report
from .transforms import (PiecewiseLinear, RadialDensity, R_power, TransformedPL, kernel_make,
                         tagged)


@dataclass
class KinematicExperiment:
    n: int
    j: int
    alpha: RadialDensity
    u: cf.ConvexFunction
    v: cf.ConvexFunction
    rotations: int = 200
    seed: int = 0
    radial_order: int = 32
    angular: int | None = None
    sampler: SteinerSampler | None = None
    label: str = ""

    def __post_init__(self):
        if not 1 <= self.j <= self.n:
            raise ValueError("kinematic formula needs 1 <= j <= n")
        if self.u.n != self.n or self.v.n != self.n:
            raise ValueError("function dimensions must equal n")
        # lim s alpha(s) = 0 at 0+
        self.alpha = tagged(self.alpha, ("T", self.n, self.n))


@dataclass
class SideResult:
    value: np.ndarray
    mc_stderr: float
    quad_error: float
    samples: int
    notes: str = ""
    trace: np.ndarray | None = None  # per-rotation values, when sampled

    @property
    def stderr(self) -> float:
        return math.hypot(self.mc_stderr, self.quad_error)


def rotation_invariant(f: cf.ConvexFunction) -> bool:
    if isinstance(f, cf.Affine):
        return not any(f.c)
    if isinstance(f, cf.SupportBall):
        return not any(f.center)
    if isinstance(f, cf.Rotated):
        return rotation_invariant(f.f)
    if isinstance(f, cf.NonnegCombination):
        return all(rotation_invariant(g) or c == 0 for c, g in f.terms)
    return bool(getattr(f, "radial", False))


def _is_zero(f) -> bool:
    if isinstance(f, cf.Affine):
        return True
    if isinstance(f, cf.NonnegCombination):
        return all(_is_zero(g) or c == 0 for c, g in f.terms)
    return False


def _ma_value(f, j, alpha, weight, exp: KinematicExperiment, estimate_error: bool):
    q = MeasureQuery(f, j, alpha, weight)
    if f.smooth_off_origin:
        return ma_smooth(q, exp.radial_order, exp.angular, estimate_error=estimate_error)
    try:
        return ma_closed_form(q)
    except cf.UnsupportedVariant:
        return ma_transform(q, exp.sampler)


def _lhs(exp: KinematicExperiment, weight: str) -> SideResult:
    k = kappa(exp.n)
    if rotation_invariant(exp.v):
        res = _ma_value(exp.u + exp.v, exp.j, exp.alpha, weight, exp, True)
        mc = res.error_estimate if res.method == "prox_steiner" else 0.0
        quad = 0.0 if res.method == "prox_steiner" else res.error_estimate
        return SideResult(k * np.atleast_1d(res.value), k * mc, k * quad, res.samples,
                          notes=f"v is rotation invariant: SO(n) average skipped ({res.method})")
    vals = []
    quad = 0.0
    method = ""
    for i in range(exp.rotations):
        R = haar_rotations(rng_stream(exp.seed, i), exp.n, 1)[0]
        f = exp.u + cf.Rotated(exp.v, R)
        res = _ma_value(f, exp.j, exp.alpha, weight, exp, estimate_error=(i == 0))
        if i == 0:
            quad = res.error_estimate
            method = res.method
        vals.append(np.atleast_1d(res.value))
    vals = np.array(vals)
    mean = vals.mean(axis=0)
    se = float(np.max(vals.std(axis=0, ddof=1))) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return SideResult(k * mean, k * se, k * quad, exp.rotations,
                      notes=f"Haar average over {exp.rotations} rotations ({method})",
                      trace=k * vals)


def lhs_vector(exp: KinematicExperiment) -> SideResult:
    return _lhs(exp, "vector")


# --------------------------------------------------------------------------
# radial marginals of MA_i
# --------------------------------------------------------------------------

def _support_body(f):
    """The body K if f is a support function (plus affine terms), else None."""
    terms = cf._flatten(f)
    body = None
    for c, g in terms:
        if isinstance(g, cf.Affine):
            continue
        if body is not None:
            return None
        if isinstance(g, cf.Norm):
            body = ("ball", c)
        elif isinstance(g, cf.SupportBall):
            body = ("ball", c * g.r)
        elif isinstance(g, cf.SupportEllipse):
            body = ("ellipse", c * c * np.asarray(g.M, float))
        else:
            return None
    return body if body is not None else ("point",)


def ma_marginal(f: cf.ConvexFunction, i: int, angular: int = 64):
    """(atoms, density) of the radial marginal of MA_i(f); density may be None."""
    n = f.n
    if i == 0:
        return [(0.0, kappa(n))], None
    if _is_zero(f):
        return [], None
    body = _support_body(f)
    if body is not None:
        if body[0] == "point":
            return [], None
        return [(0.0, ma_support_mass(body, n, i))], None
    if getattr(f, "radial", False):
        atoms, dens = radial_ma_marginal(f, i)
        return atoms, dens
    if f.smooth_off_origin:
        def dens(r):
            r = np.asarray(r, dtype=float)
            return radial_ma_marginal_smooth(f, i, r.ravel(), angular).reshape(r.shape)
        return [], dens
    raise cf.UnsupportedVariant("radial marginal not available for this function")


def _alpha_at(alpha, r):
    r = np.asarray(r, dtype=float)
    if np.any(r == 0):
        a0 = alpha_at_zero(alpha)
        return np.where(r == 0, a0, alpha(np.where(r == 0, 1.0, r)))
    return alpha(r)


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------

def rhs_terms(exp: KinematicExperiment, kernel_order: int = 24) -> dict:
    """The k-th summands C(j,k) int int K_k x dMA_{j-k}(v) dMA_k(u), keyed by k."""
    n, j, alpha = exp.n, exp.j, exp.alpha
    supp = alpha.support_upper
    out = {}
    for k in range(1, j + 1):
        K = kernel_make(alpha, n, k, check=False, order=kernel_order)
        atoms, dens = ma_marginal(exp.v, j - k)
        if not atoms and dens is None:
            out[k] = WeightedIntegral(np.zeros(n), "analytic_dirac", 0.0, notes="MA vanishes")
            continue
        brk = tuple(sorted(set(alpha.breaks) | {a for a, _ in atoms if a > 0}))

        def beta(r, atoms=atoms, dens=dens, K=K):
            r = np.asarray(r, dtype=float)
            flat = r.ravel()
            total = np.zeros(flat.shape)
            for a, mass in atoms:
                total += mass * K(flat, np.full(flat.shape, a))
            if dens is not None:
                # inner radial integral with the |x| = |y| breakpoint
                total += tail_integral(lambda rho: K(flat[:, None], rho) * dens(rho),
                                       np.full(flat.shape, 1e-14 * supp), supp, alpha.breaks,
                                       order=kernel_order, extra_break=flat)
            return total.reshape(r.shape)

        res = vector_ma_weighted(exp.u, k, beta, supp, brk)
        out[k] = WeightedIntegral(math.comb(j, k) * np.asarray(res.value), res.method,
                                  math.comb(j, k) * res.error_estimate)
    return out


def rhs_vector(exp: KinematicExperiment) -> SideResult:
    terms = rhs_terms(exp)
    value = sum(np.asarray(t.value) for t in terms.values())
    quad = float(sum(t.error_estimate for t in terms.values()))
    if exp.j > 1 or not all(t.method == "closed_form" for t in terms.values()):
        # the kernel and inner radial integrals are Gauss-Legendre rules;
        # a lower-order rerun bounds their error
        coarse = sum(np.asarray(t.value) for t in rhs_terms(exp, kernel_order=16).values())
        quad += float(np.linalg.norm(np.asarray(value) - coarse))
    methods = ", ".join(f"k={k}:{t.method}" for k, t in sorted(terms.items()))
    return SideResult(np.atleast_1d(value), 0.0, quad, 0, notes=methods)


def _marginal_pair_integral(alpha, mu_atoms, mu_dens, nu_atoms, nu_dens, supp):
    """int int alpha(max(a, b)) dmu(a) dnu(b) over radial marginals."""

    def inner(a):
        a = np.asarray(a, dtype=float)
        total = np.zeros(a.shape)
        for b, mass in nu_atoms:
            total += mass * _alpha_at(alpha, np.maximum(a, b))
        if nu_dens is not None:
            total += tail_integral(lambda b: alpha(np.maximum(a[:, None], b)) * nu_dens(b),
                                   np.full(a.shape, 1e-14 * supp), supp, alpha.breaks,
                                   extra_break=a)
        return total

    total = 0.0
    for a, mass in mu_atoms:
        total += mass * float(inner(np.array([a]))[0])
    if mu_dens is not None:
        r, w = radial_rule(1e-14 * supp, supp, alpha.breaks, order=48)
        total += float(np.sum(w * mu_dens(r) * inner(r)))
    return total


def scalar_kinematic(exp: KinematicExperiment, tolerance: float = 0.01) -> VerificationReport:
    """Scalar formula: LHS kappa_n E int alpha dMA_j(u + v o theta^-1) against
    sum_{i=0..j} C(j,i) int int alpha(max(|x|,|y|)) dMA_{j-i}(v) dMA_i(u)."""
    lhs = _lhs(exp, "scalar")
    supp = exp.alpha.support_upper
    rhs = 0.0
    for i in range(exp.j + 1):
        ua, ud = ma_marginal(exp.u, i)
        va, vd = ma_marginal(exp.v, exp.j - i)
        if (not ua and ud is None) or (not va and vd is None):
            continue
        rhs += math.comb(exp.j, i) * _marginal_pair_integral(exp.alpha, ua, ud, va, vd, supp)
    return make_report("scalar_kinematic", lhs.value, [rhs], tolerance,
                       abs_floor=1e-12,
                       stderr=lhs.stderr, samples=lhs.samples, seed=exp.seed,
                       n=exp.n, j=exp.j, notes=lhs.notes)


def main_theorem_report(exp: KinematicExperiment, tolerance: float = 0.03,
                        abs_floor: float = 1e-3) -> VerificationReport:
    lhs = lhs_vector(exp)
    rhs = rhs_vector(exp)
    # floor at roundoff level so exact agreement is not judged against zero
    stderr = max(math.hypot(lhs.stderr, rhs.stderr), 1e-12 * float(np.linalg.norm(rhs.value)))
    name = "main_theorem" + (f"[{exp.label}]" if exp.label else "")
    return make_report(name, lhs.value, rhs.value, tolerance, abs_floor=abs_floor,
                       stderr=stderr, samples=lhs.samples, seed=exp.seed, n=exp.n, j=exp.j,
                       notes=f"lhs: {lhs.notes}; rhs: {rhs.notes}")


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def _chain(xi: RadialDensity, a: int, b: int) -> RadialDensity:
    """R^b R^a xi, exact for piecewise-linear xi."""
    if isinstance(xi, PiecewiseLinear):
        return TransformedPL(xi, a + b) if a + b else xi
    first = R_power(xi, a, check=False) if a else xi
    return R_power(first, b, check=False) if b else first


def z_closed_form(n: int, j: int, xi: RadialDensity, mu: float, s: float,
                  lam: float, t: float) -> np.ndarray:
    """z_{j,xi}(mu w_s, lam v_t): a multiple of e_n.

    (1/n) kappa_{n-1} [mu^j s^(n-j+1) R^(j-n) alpha(s)
      + sum_{k=1}^{j-1} C(j,k) lam^(j-k) mu^k s^(n-k+1) R^(k-n) alpha(max(s,t))]
    with alpha = C(n,j) R^(n-j) xi.
    """
    c = math.comb(n, j)
    val = mu**j * s ** (n - j + 1) * c * float(_chain(xi, n - j, j - n)(np.array(s)))
    m = max(s, t)
    for k in range(1, j):
        val += math.comb(j, k) * lam ** (j - k) * mu**k * s ** (n - k + 1) * \
            c * float(_chain(xi, n - j, k - n)(np.array(m)))
    e = np.zeros(n)
    e[-1] = kappa(n - 1) / n * val
    return e


def corollary_rhs(n: int, j: int, alpha: RadialDensity, u: cf.ConvexFunction, K) -> np.ndarray:
    """sum_k C(j,k)/C(n,j-k) kappa_{n-j+k} V_{j-k}(K) int alpha(|x|) x dMA_k(u; x)."""
    total = np.zeros(n)
    for k in range(1, j + 1):
        if K[0] == "point":
            V = 1.0 if j == k else 0.0
        else:
            V = intrinsic_volume(K, n, j - k)
        if V == 0.0:
            continue
        res = vector_ma_weighted(u, k, alpha, alpha.support_upper, alpha.breaks)
        total += math.comb(j, k) / math.comb(n, j - k) * kappa(n - j + k) * V * np.asarray(res.value)
    return total


def classical_coefficient(n: int, j: int, k: int) -> float:
    return (math.comb(2 * n - j, n - j) * kappa(n - k) * kappa(n + k - j)) / \
        (math.comb(2 * n - j, n - k) * kappa(n) * kappa(n - j))


def classical_balls(n: int, j: int, r1: float, r2: float, tolerance: float = 1e-12) -> VerificationReport:
    """V_j(r1 B + theta r2 B) against the coefficient sum over k = 0..j."""
    lhs = intrinsic_volume(("ball", r1 + r2), n, j)
    rhs = sum(classical_coefficient(n, j, k) * intrinsic_volume(("ball", r1), n, k) *
              intrinsic_volume(("ball", r2), n, j - k) for k in range(j + 1))
    rep = make_report(f"classical_balls[n={n},j={j}]", [lhs], [rhs], 0.0, abs_floor=tolerance,
                      n=n, j=j, notes="sum index read as k = 0..j")
    return rep
