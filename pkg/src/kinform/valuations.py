"""Functional intrinsic volumes V*_{j,xi} and Minkowski vectors t*_{j,xi}.

V*_{j,xi}(f) = int xi(|x|) dPhi_j(f; x) and t*_{j,xi}(f) = int xi(|x|) x dPhi_j(f; x),
equivalently integrals of alpha = C(n,j) R^(n-j) xi against MA_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convexfn as cf
from .measures import (MeasureQuery, RouteMismatch, SteinerSampler, check_routes,
                       halfcone_parts, ma_closed_form, ma_smooth, phi_integral_smooth,
                       phi_weighted_oracle)
from .numerics import WeightedIntegral, kappa
from .reports import make_report, VerificationReport
from .transforms import RadialDensity, R_power, tagged


@dataclass
class ValuationSpec:
    kind: str  # "scalar" or "vector"
    n: int
    j: int
    density: RadialDensity

    def __post_init__(self):
        if self.kind not in ("scalar", "vector"):
            raise ValueError("kind must be 'scalar' or 'vector'")
        lo = 0 if self.kind == "scalar" else 1
        if not lo <= self.j <= self.n:
            raise ValueError(f"degree {self.j} out of range {lo}..{self.n}")
        if self.kind == "vector":
            tag = ("T", self.n, self.j)
        elif self.j < self.n:
            tag = ("D", self.n, self.j)
        else:
            tag = ("C_b", 0, 0)
        self.density = tagged(self.density, tag)

    @property
    def weight(self):
        return self.kind

    def alpha(self) -> RadialDensity:
        """The MA-side density C(n,j) R^(n-j) xi."""
        m = self.n - self.j
        base = R_power(self.density, m, check=False) if m else self.density
        c = math.comb(self.n, self.j)
        from .transforms import GenericDensity

        return GenericDensity(lambda r: c * base(r), self.density.support_upper,
                              self.density.breaks)


def closed_form_v_t(n: int, j: int, xi: RadialDensity, t: float) -> float:
    """kappa_n C(n,j) [t^(n-j) xi(t) + (n-j) int_t^inf r^(n-j-1) xi(r) dr]."""
    if not 1 <= j <= n - 1:
        raise ValueError("closed form holds for 1 <= j <= n-1")
    m = n - j
    inner = t**m * float(xi(np.array(t))) + m * float(xi.tail_moment(np.array(t), m - 1))
    return kappa(n) * math.comb(n, j) * inner


def closed_form_w_s(n: int, j: int, xi: RadialDensity, s: float) -> np.ndarray:
    """(1/n) C(n,j) kappa_{n-1} s^(n-j+1) xi(s) e_n."""
    if not 1 <= j <= n:
        raise ValueError("closed form holds for 1 <= j <= n")
    e = np.zeros(n)
    e[-1] = math.comb(n, j) * kappa(n - 1) / n * s ** (n - j + 1) * float(xi(np.array(s)))
    return e


def _cone_parts(f):
    """(lam, t) if f = lam * v_t, else None."""
    lam, g = 1.0, f
    while isinstance(g, cf.NonnegCombination) and len(g.terms) == 1:
        lam *= g.terms[0][0]
        g = g.terms[0][1]
    if isinstance(g, cf.Rotated):
        g = g.f
    if isinstance(g, cf.Cone):
        return lam, g.t
    return None


def valuation_routes(spec: ValuationSpec, f: cf.ConvexFunction, oracle: bool = False,
                     sampler: SteinerSampler | None = None) -> dict:
    """Every available route for the valuation, keyed by route name."""
    n, j = spec.n, spec.j
    q = MeasureQuery(f, j, spec.density, spec.weight)
    routes = {}
    cone = _cone_parts(f)
    if spec.kind == "scalar" and cone is not None and 1 <= j <= n - 1:
        lam, t = cone
        routes["closed_form"] = WeightedIntegral(lam**j * closed_form_v_t(n, j, spec.density, t),
                                                 "closed_form", 0.0)
    hc = halfcone_parts(f)
    if spec.kind == "vector" and hc is not None:
        mu, s, R = hc
        routes["closed_form"] = WeightedIntegral(mu**j * R @ closed_form_w_s(n, j, spec.density, s),
                                                 "closed_form", 0.0)
    if spec.kind == "vector" and getattr(f, "radial", False):
        routes["symmetry"] = WeightedIntegral(np.zeros(n), "closed_form", 0.0)
    if f.smooth_off_origin:
        routes["phi_smooth"] = phi_integral_smooth(q)
        if j >= 1:
            routes["ma_smooth"] = ma_smooth(MeasureQuery(f, j, spec.alpha(), spec.weight))
    elif j >= 1:
        try:
            routes["ma_closed_form"] = ma_closed_form(MeasureQuery(f, j, spec.alpha(), spec.weight))
        except cf.UnsupportedVariant:
            pass
    if oracle or not routes:
        routes["oracle"] = phi_weighted_oracle(q, sampler)
    return routes


_PREFERENCE = ("closed_form", "ma_closed_form", "phi_smooth", "ma_smooth", "symmetry", "oracle")


def _evaluate(spec, f, oracle, sampler, tolerance, oracle_tolerance):
    routes = valuation_routes(spec, f, oracle, sampler)
    best_name = next(k for k in _PREFERENCE if k in routes)
    best = routes[best_name]
    for name, res in routes.items():
        if name == best_name:
            continue
        tol = oracle_tolerance if "oracle" in (name, best_name) else tolerance
        check_routes(res, best, tol, floor=1e-6 if spec.kind == "vector" else 1e-8)
    checked = ", ".join(sorted(routes))
    return WeightedIntegral(best.value, best.method, best.error_estimate, best.samples,
                            notes=f"routes: {checked}")


def v_star(spec: ValuationSpec, f: cf.ConvexFunction, oracle: bool = False,
           sampler: SteinerSampler | None = None, tolerance: float = 0.01,
           oracle_tolerance: float = 0.03) -> WeightedIntegral:
    if spec.kind != "scalar":
        raise ValueError("v_star needs a scalar spec")
    return _evaluate(spec, f, oracle, sampler, tolerance, oracle_tolerance)


def t_star(spec: ValuationSpec, f: cf.ConvexFunction, oracle: bool = False,
           sampler: SteinerSampler | None = None, tolerance: float = 0.01,
           oracle_tolerance: float = 0.03) -> WeightedIntegral:
    if spec.kind != "vector":
        raise ValueError("t_star needs a vector spec")
    return _evaluate(spec, f, oracle, sampler, tolerance, oracle_tolerance)


def support_function(K) -> cf.ConvexFunction:
    kind = K[0]
    if kind == "ball":
        r = float(K[1])
        c = tuple(K[2]) if len(K) > 2 else (0.0, 0.0)
        return cf.SupportBall(r, c)
    if kind == "ellipse":
        return cf.SupportEllipse(tuple(map(tuple, K[1])))
    raise ValueError(f"unsupported body {kind!r}")


def minkowski_vanishing(K, n: int, j: int, alpha: RadialDensity,
                        tolerance: float | None = None) -> VerificationReport:
    """int alpha(|x|) x dMA(h_K[j], h_B[n-j]; x) by smooth quadrature; should vanish.

    Away from the origin both Hessians annihilate x, so the density of the
    mixed measure is identically zero there; the whole mass is a Dirac at
    the origin, which the weight x removes.
    """
    h = support_function(K)
    if h.n != n:
        raise ValueError("body dimension does not match n")
    res = ma_smooth(MeasureQuery(h, j, alpha, "vector"))
    tol = 10 * res.error_estimate if tolerance is None else tolerance
    tol = max(tol, 1e-14)
    return make_report(f"minkowski_vanishing[{K[0]}]", res.value, np.zeros(n), 0.0,
                       abs_floor=tol, n=n, j=j, stderr=res.error_estimate,
                       notes="density vanishes off the origin; tolerance is 10x the quadrature error estimate"
                       if tolerance is None else "")
