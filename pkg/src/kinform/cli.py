"""Config-driven verification runner.

    kinform verify config.json [--suite NAME] [--parallel] [--out DIR]
    kinform kernel-plot --n 2 --k 1 --density tent.json --t 0.6
    kinform measure --function f.json --j 1 --density tent.json --weight vector

Exit codes: 0 when every report passes, 1 when a verification fails, 2 when
the config or an input file is invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convexfn as cf
from .kinematics import (KinematicExperiment, classical_balls, corollary_rhs, lhs_vector,
                         main_theorem_report, rhs_vector, scalar_kinematic, z_closed_form)
from .measures import (MeasureQuery, SteinerSampler, ma_j_integral, ma_smooth, ma_transform,
                       phi_region_oracle, phi_weighted_oracle)
from .numerics import haar_rotations, kappa, rng_stream
from .reports import VerificationReport, make_report
from .transforms import (ClassCertificationError, PiecewiseLinear, RequestedClassViolated,
                         R_power, TransformedPL, certify_report, density_from_dict, kernel_make,
                         tent)
from .valuations import (ValuationSpec, closed_form_v_t, closed_form_w_s, minkowski_vanishing,
                         t_star, v_star)

log = logging.getLogger("kinform")

SUITES = ("transforms", "measures", "valuations", "appendix", "kinematic", "corollary",
          "scalar", "classical")

DEFAULT_TOLERANCES = {
    "transforms": 1e-8,
    "measures": 0.01,
    "oracle": 0.03,
    "valuations": 0.01,
    "appendix": 0.02,
    "kinematic_closed": 0.02,
    "kinematic_mc": 0.03,
    "corollary": 0.03,
    "scalar": 0.01,
    "classical": 1e-12,
    "vanishing": 1e-4,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    suites: list
    n: int = 2
    j_list: list = field(default_factory=lambda: [1, 2])
    rotations: int = 200
    densities: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: str = "kinform-out"
    plots: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    seed_source: str = "config"
    raw: dict = field(default_factory=dict)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def density(self, name: str):
        if name not in self.densities:
            raise ConfigError(f"unknown density {name!r}")
        return self.densities[name]

    def function(self, name: str):
        if name not in self.functions:
            raise ConfigError(f"unknown function {name!r}")
        return self.functions[name]


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def parse_config(raw: dict, suite_override: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    seed = raw.get("seed")
    source = "config"
    env = os.environ.get("SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"SEED environment variable is not an integer: {env!r}") from None
        source = "env"
    if seed is None:
        raise ConfigError("seed is mandatory")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    suite = suite_override or raw.get("suite", "all")
    names = [suite] if isinstance(suite, str) else list(suite)
    suites = []
    for s in names:
        if s == "all":
            suites.extend(SUITES)
        elif s in SUITES:
            suites.append(s)
        else:
            raise ConfigError(f"unknown suite {s!r}")
    suites = list(dict.fromkeys(suites))

    n = raw.get("n", 2)
    if n not in (2, 3):
        raise ConfigError("n must be 2 or 3")
    j_list = raw.get("j", [1, 2])
    j_list = [j_list] if isinstance(j_list, int) else list(j_list)
    if any(not 1 <= j <= n for j in j_list):
        raise ConfigError(f"every j must lie in 1..{n}")

    densities = {}
    for name, d in raw.get("densities", {}).items():
        try:
            xi = density_from_dict(d)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"density {name!r}: {exc}") from None
        densities[name] = xi
        # class tags are certified up front: every density must be in T^n_j
        for j in j_list:
            try:
                cert = certify_report(xi, ("T", n, j))
            except ClassCertificationError as exc:
                raise ConfigError(f"density {name!r}: class T^{n}_{j} violated: {exc}") from None
            if not cert.passed:
                raise ConfigError(f"density {name!r}: class T^{n}_{j} violated "
                                  f"(r^{n - j + 1} xi(r) does not vanish at 0+)")
    functions = {}
    for name, d in raw.get("functions", {}).items():
        try:
            functions[name] = cf.from_dict(d)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"function {name!r}: {exc}") from None

    tolerances = dict(raw.get("tolerances", {}))
    unknown = set(tolerances) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")
    rotations = int(raw.get("rotations", 200 if n == 2 else 500))
    if rotations < 2:
        raise ConfigError("rotations must be at least 2")
    plots = list(raw.get("plots", []))
    for p in plots:
        if not isinstance(p, dict) or p.get("kind") not in ("density", "kernel", "convergence"):
            raise ConfigError(f"bad plot request {p!r}")
    return RunConfig(seed=seed, suites=suites, n=n, j_list=j_list, rotations=rotations,
                     densities=densities, functions=functions, tolerances=tolerances,
                     output=str(raw.get("output", "kinform-out")), plots=plots,
                     params=dict(raw.get("params", {})), seed_source=source, raw=raw)


def load_config(path, suite_override: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, suite_override)


# --------------------------------------------------------------------------
# jobs
# --------------------------------------------------------------------------
# A job is (suite, name, kwargs) with JSON-like kwargs, so it can be shipped
# to a worker process together with the raw config.

def _param(cfg: RunConfig, key: str, default):
    return cfg.params.get(key, default)


def _density_or_tent(cfg: RunConfig, name, c: float):
    return cfg.density(name) if name else tent(c)


def _job_list(cfg: RunConfig) -> list:
    jobs = []
    n = cfg.n
    for suite in cfg.suites:
        if suite == "transforms":
            names = _param(cfg, "transform_densities", None)
            for m in (1, 2, 3):
                jobs.append((suite, "round_trip", {"m": m, "densities": names}))
            for a, b in ((1, 1), (1, 2), (2, 1)):
                jobs.append((suite, "semigroup", {"a": a, "b": b}))
            for nn, k in ((2, 1), (3, 1), (3, 2)):
                jobs.append((suite, "kernel_collapse", {"n": nn, "k": k}))
        elif suite == "measures":
            jobs.append((suite, "route_consistency", {}))
            jobs.append((suite, "quadratic_analytic", {}))
            for kw in ({"f": "quadratic", "R": 1.0, "j": 1, "expected": 2 * math.pi},
                       {"f": "cone", "R": 2.0, "j": 1, "expected": 4 * math.pi},
                       {"f": "cone", "R": 2.0, "j": 2, "expected": math.pi}):
                jobs.append((suite, "region_oracle", kw))
            jobs.append((suite, "cone_oracle", {}))
            jobs.append((suite, "halfcone_oracle", {"j": 1}))
            jobs.append((suite, "halfcone_oracle", {"j": 2}))
        elif suite == "valuations":
            jobs.append((suite, "valuation_examples", {}))
            for K in (["ball", 1.0], ["ball", 1.0, [0.3, 0.0]], ["ellipse", [[1.0, 0.0], [0.0, 4.0]]]):
                jobs.append((suite, "vanishing", {"K": K}))
        elif suite == "appendix":
            for j in cfg.j_list:
                for p in _param(cfg, "appendix_params", [[1, 0.5, 1, 1], [1, 1, 1, 0.5],
                                                          [2, 0.5, 0.5, 1], [2, 1, 0.5, 0.5]]):
                    jobs.append((suite, "appendix", {"j": j, "p": p}))
        elif suite == "kinematic":
            for j in cfg.j_list:
                for p in _param(cfg, "kinematic_pairs", [[1, 0.5, 1, 1], [1, 1, 1, 0.5],
                                                          [2, 0.5, 0.5, 1], [2, 1, 0.5, 0.5]]):
                    jobs.append((suite, "kinematic_closed", {"j": j, "p": p}))
                jobs.append((suite, "kinematic_mc", {"j": j}))
        elif suite == "corollary":
            jobs.append((suite, "corollary", {}))
            jobs.append((suite, "corollary_reduction", {}))
        elif suite == "scalar":
            jobs.append((suite, "scalar_quadratic", {}))
            jobs.append((suite, "scalar_cones", {}))
        elif suite == "classical":
            for j in range(0, n + 1):
                jobs.append((suite, "classical", {"j": j}))
    return jobs


def _kin_alpha(cfg):
    name = _param(cfg, "alpha", None)
    return _density_or_tent(cfg, name, 1.5)


def _job_round_trip(cfg, m, densities):
    xis = ([(nm, cfg.density(nm)) for nm in densities] if densities else
           [(f"tent{c:g}", tent(c)) for c in (0.5, 1.0, 1.5, 2.0, 3.0)])
    out = []
    for name, xi in xis:
        # scale-relative grid: the literal inverse cancels terms of size s^-m near 0
        grid = np.linspace(xi.support_upper / 100, 1.2 * xi.support_upper, 200)
        back = R_power(R_power(xi, m, check=False), -m, check=False)
        err = float(np.max(np.abs(back(grid) - xi(grid))))
        out.append(make_report(f"round_trip[m={m},{name}]", [err], [0.0], 0.0,
                               abs_floor=cfg.tol("transforms"), notes="sup-grid error"))
    return out


def _job_semigroup(cfg, a, b):
    xi = tent(1.5)
    grid = np.linspace(0.01, 1.6, 200)
    exact = TransformedPL(xi, a + b)(grid)
    stepwise = R_power(R_power(xi, a, check=False), b, check=False)(grid)
    err = float(np.max(np.abs(exact - stepwise)))
    return [make_report(f"semigroup[a={a},b={b}]", [err], [0.0], 0.0,
                        abs_floor=cfg.tol("transforms"))]


def _job_kernel_collapse(cfg, n, k):
    alpha = tent(1.0)
    K = kernel_make(alpha, n, k)
    s = np.linspace(0.02, 1.5, 50)
    S, T = np.meshgrid(s, s, indexing="ij")
    err = float(np.max(np.abs(K(S, T) - K.collapsed(S, T))))
    rep = make_report(f"kernel_collapse[n={n},k={k}]", [err], [0.0], 0.0,
                      abs_floor=cfg.tol("transforms"),
                      notes="tested conjecture: failure is flagged, not fatal")
    rep.advisory = True
    return [rep]


def _route_queries():
    tent1, tent15 = tent(1.0), tent(1.5)
    fs = [cf.Quadratic((0.0, 0.0), 0.5), cf.Quadratic((0.3, -0.2), 1.0),
          cf.QuarticNorm((0.5, 0.0)), cf.QuarticNorm((0.0, 0.7))]
    out = []
    for f in fs:
        for j in (1, 2):
            for weight, alpha in (("scalar", tent1), ("vector", tent15)):
                out.append(MeasureQuery(f, j, alpha, weight))
    return out


def _job_route_consistency(cfg):
    out = []
    for i, q in enumerate(_route_queries()):
        a = ma_smooth(q)
        b = ma_transform(q)
        name = type(q.function).__name__
        out.append(make_report(f"route_consistency[{i}:{name},j={q.j},{q.weight}]",
                               a.value, b.value, cfg.tol("measures"),
                               abs_floor=1e-8 + 3 * (a.error_estimate + b.error_estimate),
                               n=q.n, j=q.j, notes="smooth MA route vs transform route"))
    return out


def _job_quadratic_analytic(cfg):
    q = MeasureQuery(cf.Quadratic((0.0, 0.0), 0.5), 1, tent(1.0))
    res = ma_j_integral(q)
    return [make_report("ma_quadratic_analytic", [res.value], [math.pi / 2], 0.0, abs_floor=1e-3,
                        n=2, j=1, stderr=res.error_estimate, notes="pi * int alpha")]


def _job_region_oracle(cfg, f, R, j, expected):
    fn = cf.Quadratic((0.0, 0.0), 0.5) if f == "quadratic" else cf.Cone(1.0)
    sampler = SteinerSampler(seed=cfg.seed)
    res = phi_region_oracle(fn, j, ("ball", R), sampler)
    return [make_report(f"region_oracle[{f},R={R:g},j={j}]", [res.value], [expected], 0.02,
                        n=2, j=j, stderr=res.error_estimate, samples=res.samples, seed=cfg.seed)]


def _job_cone_oracle(cfg):
    xi = tent(1.5)
    res = phi_weighted_oracle(MeasureQuery(cf.Cone(1.0), 1, xi), SteinerSampler(seed=cfg.seed))
    return [make_report("cone_density_recovery", [res.value], [closed_form_v_t(2, 1, xi, 1.0)],
                        cfg.tol("oracle"), n=2, j=1, stderr=res.error_estimate,
                        samples=res.samples, seed=cfg.seed, notes="oracle vs closed form on v_1")]


def _job_halfcone_oracle(cfg, j):
    xi = tent(2.0)  # xi(1) = 1
    res = phi_weighted_oracle(MeasureQuery(cf.HalfCone(1.0), j, xi, "vector"),
                              SteinerSampler(seed=cfg.seed))
    exact = closed_form_w_s(2, j, xi, 1.0)
    rep = make_report(f"halfcone_density_recovery[j={j}]", res.value, exact, cfg.tol("oracle"),
                      n=2, j=j, stderr=res.error_estimate, samples=res.samples, seed=cfg.seed,
                      notes="j = n is outside the stated range; tested" if j == 2 else "")
    off = abs(float(res.value[0]))
    off_rep = make_report(f"halfcone_off_axis[j={j}]", [off], [0.0], 0.0, abs_floor=1e-2,
                          n=2, j=j, seed=cfg.seed)
    return [rep, off_rep]


def _job_valuation_examples(cfg):
    out = []
    xi15 = tent(1.5)
    spec = ValuationSpec("scalar", 2, 1, xi15)
    cone = v_star(spec, cf.Cone(1.0))
    out.append(make_report("v_star[cone]", [cone.value], [1.25 * math.pi],
                           cfg.tol("valuations"), n=2, j=1, notes=cone.notes))
    quad = v_star(ValuationSpec("scalar", 2, 1, tent(1.0)), cf.Quadratic((0.0, 0.0), 0.5))
    out.append(make_report("v_star[quadratic]", [quad.value], [2 * math.pi / 3],
                           cfg.tol("valuations"), n=2, j=1, notes=quad.notes))
    shifted = v_star(ValuationSpec("scalar", 2, 1, tent(1.0)),
                     cf.Quadratic((0.0, 0.0), 0.5) + cf.Affine((0.4, -1.0), 2.0))
    out.append(make_report("v_star[affine_invariance]", [shifted.value], [quad.value],
                           cfg.tol("valuations"), n=2, j=1))
    vspec = ValuationSpec("vector", 2, 1, tent(2.0))
    hc = t_star(vspec, cf.HalfCone(1.0))
    out.append(make_report("t_star[half_cone]", hc.value, [0.0, 2.0], cfg.tol("valuations"),
                           n=2, j=1, notes=hc.notes))
    R = haar_rotations(rng_stream(cfg.seed, 0), 2, 1)[0]
    rot = t_star(vspec, cf.Rotated(cf.HalfCone(1.0), R))
    out.append(make_report("t_star[rotation_equivariance]", rot.value, R @ np.array([0.0, 2.0]),
                           cfg.tol("valuations"), n=2, j=1, seed=cfg.seed))
    return out


def _job_vanishing(cfg, K):
    K = tuple(K)
    rep = minkowski_vanishing(K, 2, 1, tent(1.5))
    if K[0] == "ellipse":
        # 1e-4 of the scale of the half-cone vector (0, 2)
        rep = make_report(rep.identity, rep.lhs, rep.rhs, 0.0, abs_floor=cfg.tol("vanishing") * 2.0,
                          n=2, j=1, stderr=rep.stderr, notes="absolute floor 1e-4 * |(0, 2)|")
    return [rep]


def _appendix_function(mu, s, lam, t):
    return mu * cf.HalfCone(s) + lam * cf.Cone(t)


def _job_appendix(cfg, j, p):
    mu, s, lam, t = p
    xi = _kin_alpha(cfg)
    f = _appendix_function(mu, s, lam, t)
    res = phi_weighted_oracle(MeasureQuery(f, j, xi, "vector"), SteinerSampler(seed=cfg.seed))
    z = z_closed_form(2, j, xi, mu, s, lam, t)
    case = "s<=t" if s <= t else "s>t"
    return [make_report(f"appendix[j={j},mu={mu:g},s={s:g},lam={lam:g},t={t:g}]", res.value, z,
                        cfg.tol("appendix"), n=2, j=j, stderr=res.error_estimate,
                        samples=res.samples, seed=cfg.seed, notes=f"case {case}; oracle route")]


def _job_kinematic_closed(cfg, j, p):
    mu, s, lam, t = p
    xi = _kin_alpha(cfg)
    # with alpha = C(n, j) R^(n-j) xi the left side equals kappa_n z
    alpha = TransformedPL(xi, 2 - j) if j < 2 else xi
    alpha_pl = _scaled(alpha, math.comb(2, j))
    exp = KinematicExperiment(2, j, alpha_pl, mu * cf.HalfCone(s), lam * cf.Cone(t),
                              seed=cfg.seed, sampler=SteinerSampler(seed=cfg.seed),
                              label=f"mu={mu:g},s={s:g},lam={lam:g},t={t:g}")
    rep = main_theorem_report(exp, cfg.tol("kinematic_closed"))
    z = kappa(2) * z_closed_form(2, j, xi, mu, s, lam, t)
    zrep = make_report(f"main_theorem_vs_appendix[j={j},{exp.label}]", rep.rhs, z,
                       cfg.tol("kinematic_closed"), n=2, j=j, notes="rhs vs kappa_n z")
    return [rep, zrep]


def _scaled(xi, c):
    from .transforms import GenericDensity

    return GenericDensity(lambda r: c * xi(r), xi.support_upper, xi.breaks)


def _job_kinematic_mc(cfg, j):
    u = cfg.functions.get("u", cf.QuarticNorm((0.5, 0.0)))
    v = cfg.functions.get("v", cf.Quadratic((0.0, 0.7), 0.5))
    exp = KinematicExperiment(cfg.n, j, _kin_alpha(cfg), u, v, rotations=cfg.rotations,
                              seed=cfg.seed, label=f"mc,j={j}")
    lhs = lhs_vector(exp)
    rhs = rhs_vector(exp)
    stderr = max(math.hypot(lhs.stderr, rhs.stderr), 1e-12 * float(np.linalg.norm(rhs.value)))
    rep = make_report(f"main_theorem[{exp.label}]", lhs.value, rhs.value,
                      cfg.tol("kinematic_mc"), abs_floor=1e-3, stderr=stderr,
                      samples=lhs.samples, seed=cfg.seed, n=cfg.n, j=j,
                      notes=f"lhs: {lhs.notes}; rhs: {rhs.notes}")
    if rep.abs_err > 3 * stderr:
        rep.passed = False
        rep.notes += "; outside 3 standard errors"
    trace = None if lhs.trace is None else lhs.trace.tolist()
    return [rep], {"trace": trace, "rhs": list(map(float, rhs.value)), "j": j}


def _job_corollary(cfg):
    alpha = _kin_alpha(cfg)
    u = cf.HalfCone(1.0)
    exp = KinematicExperiment(2, 2, alpha, u, cf.SupportBall(1.0, (0.0, 0.0)), seed=cfg.seed,
                              sampler=SteinerSampler(seed=cfg.seed), label="corollary")
    lhs = lhs_vector(exp)
    rhs = corollary_rhs(2, 2, alpha, u, ("ball", 1.0))
    return [make_report("corollary[half_cone,unit_disk]", lhs.value, rhs, cfg.tol("corollary"),
                        n=2, j=2, stderr=lhs.stderr, samples=lhs.samples, seed=cfg.seed,
                        notes=lhs.notes)]


def _job_corollary_reduction(cfg):
    alpha = _kin_alpha(cfg)
    u = cf.HalfCone(1.0)
    exp = KinematicExperiment(2, 2, alpha, u, cf.SupportBall(1.0, (0.0, 0.0)), seed=cfg.seed)
    rhs = rhs_vector(exp)
    return [make_report("corollary_reduction", rhs.value,
                        corollary_rhs(2, 2, alpha, u, ("ball", 1.0)), 0.01, n=2, j=2,
                        notes="kernel at t = 0 collapses to alpha")]


def _job_scalar_quadratic(cfg):
    q = cf.Quadratic((0.0, 0.0), 0.5)
    exp = KinematicExperiment(2, 1, tent(1.0), q, q, seed=cfg.seed)
    rep = scalar_kinematic(exp, cfg.tol("scalar"))
    exact = make_report("scalar_kinematic[quadratic,exact]", rep.lhs, [math.pi**2],
                        cfg.tol("scalar"), n=2, j=1)
    return [rep, exact]


def _job_scalar_cones(cfg):
    exp = KinematicExperiment(2, 1, tent(2.5), cf.Cone(1.0), cf.Cone(2.0), seed=cfg.seed,
                              sampler=SteinerSampler(seed=cfg.seed))
    return [scalar_kinematic(exp, 0.03)]


def _job_classical(cfg, j):
    r1 = float(_param(cfg, "r1", 1.0))
    r2 = float(_param(cfg, "r2", 1.0))
    rep = classical_balls(cfg.n, j, r1, r2, cfg.tol("classical"))
    return [rep]


JOBS = {name[5:]: fn for name, fn in globals().items() if name.startswith("_job_")}


def run_job(job, raw, suite_override=None):
    """Run one job; returns (suite, reports, extras).  Used by worker processes."""
    suite, name, kwargs = job
    cfg = parse_config(raw, suite_override)
    result = JOBS[name](cfg, **kwargs)
    reports, extras = (result if isinstance(result, tuple) else (result, None))
    for rep in reports:
        rep.seed = cfg.seed if rep.seed is None else rep.seed
        if cfg.seed_source == "env":
            rep.notes = (rep.notes + "; " if rep.notes else "") + "seed from SEED environment variable"
    return suite, reports, extras


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_reports(reports: list, out_dir) -> list:
    if not reports:
        raise ValueError("no reports to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(max(len(r.lhs), len(r.rhs)) for r in reports)
    header = (["identity", "n", "j"] + [f"lhs_{i}" for i in range(width)] +
              [f"rhs_{i}" for i in range(width)] +
              ["abs_err", "rel_err", "stderr", "samples", "seed", "pass"])
    csv_path = out / "report.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in reports:
            lhs = [_num(x) for x in r.lhs] + [""] * (width - len(r.lhs))
            rhs = [_num(x) for x in r.rhs] + [""] * (width - len(r.rhs))
            w.writerow([r.identity, "" if r.n is None else r.n, "" if r.j is None else r.j,
                        *lhs, *rhs, _num(r.abs_err), _num(r.rel_err), _num(r.stderr),
                        r.samples, "" if r.seed is None else r.seed,
                        "true" if r.passed else "false"])
    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([_jsonable(r.to_dict()) for r in reports], fh, indent=2)
        fh.write("\n")
    return [csv_path, json_path]


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = str(v)
        else:
            out[k] = v
    return out


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")


def svg_lines(path, series, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 400):
    """Write a line plot of [(label, xs, ys, dashed)] as a standalone SVG."""
    pad = 50
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ok = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys[ok].min()), float(ys[ok].max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
             f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
             f'text-anchor="middle">{ylabel}</text>',
             f'<text x="{pad}" y="{height - pad + 16}" text-anchor="middle">{x0:.3g}</text>',
             f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="middle">{x1:.3g}</text>',
             f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end">{y0:.3g}</text>',
             f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end">{y1:.3g}</text>']
    for i, (label, sx, sy, dashed) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(sx, sy) if math.isfinite(b))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        lines.append(f'<text x="{width - pad - 4}" y="{pad + 16 * i}" text-anchor="end" '
                     f'fill="{color}">{label}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return Path(path)


def kernel_svg(path, alpha, n: int, k: int, t: float):
    K = kernel_make(alpha, n, k)
    s = np.linspace(1.5 / 300, 1.5, 300)
    lit = K(s, np.full_like(s, t))
    col = K.collapsed(s, np.full_like(s, t))
    svg_lines(path, [(f"kernel(s, {t:g})", s, lit, False), (f"alpha(max(s, {t:g}))", s, col, True)],
              title=f"kernel n={n} k={k}", xlabel="s", ylabel="value")
    return float(np.max(np.abs(lit - col)))


def _write_plots(cfg: RunConfig, extras: list, out: Path) -> list:
    written = []
    for i, p in enumerate(cfg.plots):
        kind = p["kind"]
        if kind == "density":
            xi = cfg.density(p["density"])
            r = np.linspace(1e-3, 1.2 * xi.support_upper, 300)
            written.append(svg_lines(out / f"density_{p['density']}.svg",
                                     [(p["density"], r, xi(r), False)],
                                     title=f"density {p['density']}", xlabel="r"))
        elif kind == "kernel":
            alpha = cfg.density(p["density"]) if "density" in p else tent(1.0)
            path = out / f"kernel_n{p.get('n', 2)}_k{p.get('k', 1)}.svg"
            kernel_svg(path, alpha, int(p.get("n", 2)), int(p.get("k", 1)), float(p.get("t", 0.6)))
            written.append(path)
        elif kind == "convergence":
            for ex in extras:
                if not ex or ex.get("trace") is None:
                    continue
                tr = np.asarray(ex["trace"], float)
                counts = np.arange(1, len(tr) + 1)
                running = np.cumsum(tr, axis=0) / counts[:, None]
                coord = int(np.argmax(np.abs(ex["rhs"])))
                written.append(svg_lines(
                    out / f"convergence_j{ex['j']}.svg",
                    [("LHS running mean", counts, running[:, coord], False),
                     ("RHS", counts, np.full(len(tr), ex["rhs"][coord]), True)],
                    title=f"Haar average, coordinate {coord}", xlabel="rotations"))
    return written


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def run(config_path, suite: str | None = None, parallel: bool = False,
        out_dir: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path, suite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    jobs = _job_list(cfg)
    raw = cfg.raw
    t0 = time.time()
    try:
        if parallel and len(jobs) > 1:
            with ProcessPoolExecutor() as pool:
                results = list(pool.map(run_job, jobs, [raw] * len(jobs), [suite] * len(jobs)))
        else:
            results = [run_job(job, raw, suite) for job in jobs]
    except (RequestedClassViolated, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    reports = [r for _, reps, _ in results for r in reps]
    extras = [ex for _, _, ex in results if ex]
    out = Path(out_dir or cfg.output)
    try:
        write_reports(reports, out)
        _write_plots(cfg, extras, out)
    except OSError as exc:
        print(f"cannot write reports: {exc}", file=sys.stderr)
        return 1
    for r in reports:
        flag = " (advisory)" if getattr(r, "advisory", False) else ""
        print(r.line() + flag, file=stream)
    failed = [r for r in reports if not r.passed and not getattr(r, "advisory", False)]
    seed_note = " (seed from SEED)" if cfg.seed_source == "env" else ""
    print(f"{len(reports) - len(failed)}/{len(reports)} passed in {time.time() - t0:.1f}s, "
          f"seed {cfg.seed}{seed_note}; reports in {out}", file=stream)
    return 1 if failed else 0


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} file: {exc}") from None


def cmd_kernel_plot(args) -> int:
    try:
        alpha = density_from_dict(_read_json(args.density, "density"))
        out = args.out or f"kernel_n{args.n}_k{args.k}.svg"
        diff = kernel_svg(out, alpha, args.n, args.k, args.t)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"svg": str(out), "max_abs_diff": diff}))
    return 0


def cmd_measure(args) -> int:
    try:
        f = cf.from_dict(_read_json(args.function, "function"))
        alpha = density_from_dict(_read_json(args.density, "density"))
        q = MeasureQuery(f, args.j, alpha, args.weight)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    res = ma_j_integral(q, route=args.route, sampler=SteinerSampler(seed=args.seed))
    value = np.atleast_1d(res.value).tolist()
    print(json.dumps({"value": value if args.weight == "vector" else value[0],
                      "method": res.method, "error_estimate": res.error_estimate,
                      "samples": res.samples, "notes": res.notes}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinform", description="Numerical checks of kinematic formulas "
                                "for functional Minkowski vectors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run verification suites from a JSON config")
    v.add_argument("config")
    v.add_argument("--suite", choices=SUITES + ("all",))
    v.add_argument("--parallel", action="store_true", help="fan jobs out over processes")
    v.add_argument("--out", help="output directory (overrides the config)")

    k = sub.add_parser("kernel-plot", help="plot the kinematic kernel against alpha(max(s, t))")
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--density", required=True, help="JSON density file")
    k.add_argument("--t", type=float, required=True)
    k.add_argument("--out")

    m = sub.add_parser("measure", help="integrate a radial density against MA_j")
    m.add_argument("--function", required=True, help="JSON function file")
    m.add_argument("--j", type=int, required=True)
    m.add_argument("--density", required=True, help="JSON density file")
    m.add_argument("--weight", choices=("scalar", "vector"), default="scalar")
    m.add_argument("--route", choices=("auto", "smooth", "transform", "closed_form"), default="auto")
    m.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return run(args.config, args.suite, args.parallel, args.out)
    if args.command == "kernel-plot":
        return cmd_kernel_plot(args)
    return cmd_measure(args)


if __name__ == "__main__":
    sys.exit(main())
