"""The acceptance battery, one function per criterion, with pinned seeds.

Each function returns a list of :class:`CheckReport`.  Keys ending in
``-mc`` are Monte Carlo checks; the others are exact or deterministic.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from math import comb

import numpy as np

from . import inequalities as ineq
from .duality import (
    boundary_relation_residual,
    diffusion_scale_factor,
    max_duality_residual,
)
from .engine import build_sector_generator, detailed_balance_check
from .inequalities import CheckReport
from .measures import (
    Binomial,
    DiscreteGamma,
    certify_site_moment,
    chi_square_pvalue,
    convolve_check,
    nu_weight,
    sample_site,
)
from .model import (
    BEP,
    BMP,
    SEP,
    SIP,
    BoundaryDrivenSIP,
    SiteGraph,
    configurations_up_to,
    occupations,
)
from .montecarlo import (
    estimate_K,
    replica_rng,
    simulate_bep,
    simulate_bmp,
    simulate_ctmc,
    simulate_labeled,
    stationary_time_average,
    boundary_density_observable,
)

M_VALUES = (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(7, 3))
TIMES = (0.1, 0.5, 1.0, 5.0)
SEED = 20240611


def small_graphs() -> dict:
    return {
        "path2": SiteGraph.path(2),
        "path3": SiteGraph.path(3),
        "path4": SiteGraph.path(4),
        "triangle": SiteGraph.complete(3),
    }


def _label(spec) -> str:
    """Short process name such as ``SIP(7/3)``."""
    name = type(spec).__name__
    param = getattr(spec, "m", getattr(spec, "n", None))
    return name if param is None else f"{name}({param})"


def _exact_report(name: str, worst, cases: int, rows=(), details=None) -> CheckReport:
    return CheckReport(name, cases, -worst, 0.0, None, list(rows), details or {})


def _self_duality(spec, cap_eta: int, cap_xi=None) -> CheckReport:
    rows, worst, cases = [], Fraction(0), 0
    for gname, g in small_graphs().items():
        xis = configurations_up_to(g.size, 3, cap_xi)
        etas = list(occupations(g.size, cap_eta))
        res, count = max_duality_residual(spec, xis, etas, g)
        rows.append({"graph": gname, "residual": res, "pairs": count})
        worst, cases = max(worst, res), cases + count
    return _exact_report(f"self-duality {_label(spec)}", worst, cases, rows)


def criterion_1() -> list:
    return [_self_duality(SIP(m), 4) for m in M_VALUES]


def criterion_2() -> list:
    return [_self_duality(SEP(n), min(4, n), n) for n in (1, 2, 3)]


def criterion_3() -> list:
    graphs = dict(small_graphs(), cycle4=SiteGraph.cycle(4), complete4=SiteGraph.complete(4))
    out = []
    for family in [BMP()] + [BEP(m) for m in M_VALUES]:
        rows, worst, cases, scales = [], Fraction(0), 0, set()
        for gname, g in graphs.items():
            xis = configurations_up_to(g.size, 3)
            res, count = max_duality_residual(family, xis, None, g)
            for xi in xis:
                c = diffusion_scale_factor(xi, g, family)
                if c is not None and sum(xi) > 0:
                    scales.add(c)
            rows.append({"graph": gname, "residual": res, "polynomials": count})
            worst, cases = max(worst, res), cases + count
        details = {"scale_factors": sorted(str(s) for s in scales)}
        rep = _exact_report(f"diffusion duality {_label(family)}", worst, cases, rows, details)
        if scales != {Fraction(1)}:
            rep.worst_margin = min(rep.worst_margin, Fraction(-1))
        out.append(rep)
    return out


def criterion_4() -> list:
    out = []
    for N, m in itertools.product((2, 3, 4), (Fraction(1, 2), Fraction(1), Fraction(2))):
        spec = BoundaryDrivenSIP(m, Fraction(1, 3), Fraction(3, 5), N)
        res, count = max_duality_residual(spec, configurations_up_to(N + 2, 3), list(occupations(N, 3)))
        out.append(_exact_report(f"boundary duality N={N} m={m}", res, count))
    worst, cases = Fraction(0), 0
    for m in (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(7, 3)):
        for lam in (Fraction(1, 3), Fraction(3, 5)):
            for n in range(11):
                for k in range(n + 1):
                    worst = max(worst, abs(boundary_relation_residual(k, n, m, lam)))
                    cases += 1
    out.append(_exact_report("reservoir identity k <= n <= 10", worst, cases))
    return out


def criterion_5(functions: int = 100) -> list:
    rng = np.random.default_rng(SEED)
    out = []
    for gname, g in small_graphs().items():
        for n in (2, 3):
            fs = [ineq.random_pd_function(rng, g.size, n) for _ in range(functions)]
            pos, neg = [], []
            for t in TIMES:
                for m in (Fraction(1, 2), Fraction(1), Fraction(2)):
                    pos.append(ineq.comparison_batch(g, n, 2 * m, 4, fs, t))
                for cap in (1, 2, 3):
                    if cap * g.size >= n:
                        neg.append(ineq.comparison_batch(g, n, cap, -1, fs, t))
            out.append(ineq.merge_reports(f"comparison b>0 {gname} n={n}", pos))
            out.append(ineq.merge_reports(f"comparison b<0 {gname} n={n}", neg))
    return out


def criterion_6() -> list:
    lam, rho = Fraction(1, 3), Fraction(2, 5)
    out = []
    for gname, g in dict(small_graphs(), cycle4=SiteGraph.cycle(4)).items():
        worst, cases = Fraction(0), 0
        for m in M_VALUES:
            for K in range(0, 30):
                if comb(K + g.size - 1, g.size - 1) > 200:
                    break
                G = build_sector_generator(SIP(m), g, K)
                w = lambda s, m=m: math.prod(nu_weight(k, m, lam) for k in s)
                worst = max(worst, detailed_balance_check(G, w))
                cases += len(G)
        out.append(_exact_report(f"SIP detailed balance {gname}", worst, cases))
        worst, cases = Fraction(0), 0
        for n in (1, 2, 3):
            for K in range(0, n * g.size + 1):
                G = build_sector_generator(SEP(n), g, K)
                if len(G) > 200:
                    continue
                w = lambda s, n=n: math.prod(comb(n, k) * rho**k * (1 - rho) ** (n - k) for k in s)
                worst = max(worst, detailed_balance_check(G, w))
                cases += len(G)
        out.append(_exact_report(f"SEP detailed balance {gname}", worst, cases))
    return out


def _graph_pool() -> list:
    return [SiteGraph.path(3), SiteGraph.complete(3), SiteGraph.path(4), SiteGraph.cycle(4), SiteGraph.complete(4)]


def criterion_7_exact(cases: int = 100) -> list:
    rng = np.random.default_rng(SEED + 7)
    graphs = _graph_pool()
    sip, sep, diff = [], [], []
    for _ in range(cases):
        g = graphs[int(rng.integers(len(graphs)))]
        n = int(rng.integers(2, 4))
        t = float(rng.choice(TIMES))
        m = M_VALUES[int(rng.integers(len(M_VALUES)))]
        lams = [Fraction(int(v), 20) for v in rng.integers(0, 19, size=g.size)]
        points = tuple(int(x) for x in rng.integers(0, g.size, size=n))
        sip.append(ineq.sip_correlation_check(g, m, lams, points, t))
        cap = int(rng.integers(1, 4))
        pts = tuple(int(x) for x in rng.choice(np.repeat(np.arange(g.size), cap), size=min(n, cap * g.size), replace=False))
        rhos = [Fraction(int(v), 20) for v in rng.integers(0, 21, size=g.size)]
        sep.append(ineq.sep_correlation_check(g, cap, rhos, pts, t))
        scales = [Fraction(int(v), 4) for v in rng.integers(1, 13, size=g.size)]
        family = BMP() if rng.random() < 0.5 else BEP(m)
        diff.append(ineq.diffusion_correlation_check(family, g, scales, points, t))
    return [
        ineq.merge_reports("SIP positive correlations", sip),
        ineq.merge_reports("SEP negative correlations", sep),
        ineq.merge_reports("diffusion positive correlations", diff),
    ]


def criterion_7_mc(replicas: int = 10_000) -> list:
    g = SiteGraph.path(3)
    out = []
    benches = [
        (SIP(1), DiscreteGamma(1, [Fraction(1, 4), Fraction(1, 2), Fraction(2, 3)]), (0, 2), 0.5),
        (SIP(Fraction(1, 2)), DiscreteGamma(Fraction(1, 2), [Fraction(1, 3), Fraction(1, 5), Fraction(1, 2)]), (1, 1), 0.3),
        (SEP(2), Binomial(2, [Fraction(1, 5), Fraction(1, 2), Fraction(4, 5)]), (0, 1), 0.5),
    ]
    for k, (spec, measure, points, t) in enumerate(benches):
        xi = [points.count(x) for x in range(g.size)]
        est = estimate_K(spec, measure, xi, t, replicas, SEED + k, g)
        exact = ineq.dual_moment(spec, measure, points, t, g)
        margin = 3 * est.stderr - abs(est.mean - exact)
        out.append(CheckReport(f"estimate_K {_label(spec)} points={points}", replicas, margin, 0.0, points,
                               [{"mean": est.mean, "stderr": est.stderr, "exact": exact}],
                               {"estimate": est.to_json(), "exact": exact}))
    return out


LAMBDA_PAIRS = ((Fraction(1, 3), Fraction(3, 5)), (Fraction(1, 2), Fraction(1, 5)), (Fraction(0), Fraction(1, 2)))


def criterion_8_exact() -> list:
    out = []
    worst, cases, deviations = Fraction(0), 0, {}
    for N in range(1, 7):
        for m in (Fraction(1, 2), Fraction(1), Fraction(2)):
            for lam_l, lam_r in LAMBDA_PAIRS:
                prof = ineq.density_profile(N, m, lam_l, lam_r)
                worst = max([worst] + [abs(d) for d in prof.second_differences])
                cases += 1
                deviations.setdefault(str(m), Fraction(0))
                deviations[str(m)] = max(deviations[str(m)], prof.max_deviation)
    out.append(_exact_report("profile affinity", worst, cases, details={
        "max_deviation_from_interpolation_by_m": {k: float(v) for k, v in deviations.items()},
    }))
    reps, equal, single = [], [], []
    for N in range(1, 7):
        for m in (Fraction(1, 2), Fraction(1), Fraction(2)):
            for lam_l, lam_r in LAMBDA_PAIRS:
                for k in (2, 3):
                    for pts in itertools.combinations_with_replacement(range(1, N + 1), k):
                        rep = ineq.boundary_correlation_check(N, m, lam_l, lam_r, pts)
                        if N == 1:
                            # one site sees a single merged reservoir: product law, zero correlation
                            single.append(rep)
                            continue
                        if rep.worst_margin == 0:
                            rep.worst_margin = Fraction(-1)  # equality is reserved for equilibrium
                        reps.append(rep)
            for k in (2, 3):
                for pts in itertools.combinations_with_replacement(range(1, N + 1), k):
                    equal.append(ineq.boundary_correlation_check(N, m, Fraction(2, 5), Fraction(2, 5), pts))
    out.append(ineq.merge_reports("boundary correlations (strict off equilibrium, N >= 2)", reps))
    out.append(ineq.merge_reports("boundary correlations (N = 1)", single))
    worst_eq = max(abs(r.worst_margin) for r in equal)
    out.append(_exact_report("boundary equality at equilibrium", worst_eq, len(equal)))
    return out


def criterion_8_mc(horizon: float = 20_000.0) -> list:
    out = []
    benches = [
        BoundaryDrivenSIP(1, Fraction(1, 3), Fraction(2, 3), 3),
        BoundaryDrivenSIP(Fraction(1, 2), Fraction(1, 4), Fraction(1, 2), 3),
        BoundaryDrivenSIP(1, Fraction(1, 3), Fraction(1, 3), 3),
    ]
    for b, spec in enumerate(benches):
        for site in range(spec.N):
            exact = ineq.steady_state_moment(spec.N, spec.m, spec.lam_left, spec.lam_right, (site + 1,))
            est = stationary_time_average(spec, boundary_density_observable(spec, site), 100.0, horizon,
                                          SEED + 10 * b + site)
            margin = 3 * est.stderr - abs(est.mean - float(exact))
            out.append(CheckReport(f"stationary average N={spec.N} m={spec.m} lam=({spec.lam_left},{spec.lam_right}) "
                                   f"site={site + 1}", est.replicas, margin, 0.0, site + 1,
                                   [{"mean": est.mean, "stderr": est.stderr, "exact": exact}]))
    return out


def criterion_9_exact() -> list:
    conv = Fraction(0)
    cases = 0
    for m, l, lam in ((Fraction(1, 2), Fraction(1, 2), Fraction(1, 3)), (Fraction(1), Fraction(2), Fraction(1, 2)),
                      (Fraction(7, 3), Fraction(1), Fraction(2, 5)), (Fraction(2), Fraction(2), Fraction(9, 10))):
        conv = max(conv, abs(convolve_check(m, l, lam, 50)))
        cases += 51
    out = [_exact_report("convolution of discrete gamma laws", conv, cases)]
    rows, ok = [], True
    for m in M_VALUES:
        for lam in (Fraction(1, 5), Fraction(1, 3), Fraction(1, 2)):
            for k in range(0, 4):
                c = certify_site_moment(k, m, lam, 1e-12)
                rows.append({"m": m, "lam": lam, "k": k, "tail_bound": c.tail_bound, "certified": c.certified})
                ok = ok and c.certified
    out.append(CheckReport("certified site moments", len(rows), 0.0 if ok else -1.0, 0.0, None, rows))
    return out


def criterion_9_mc(samples: int = 100_000) -> list:
    benches = [
        ("discrete_gamma", Fraction(1, 3), {"m": Fraction(1)}),
        ("discrete_gamma", Fraction(1, 2), {"m": Fraction(7, 3)}),
        ("discrete_gamma", Fraction(1, 4), {"m": Fraction(1, 2)}),
        ("binomial", Fraction(2, 5), {"n": 3}),
        ("gaussian", Fraction(2), {}),
        ("gamma", Fraction(3, 2), {"m": Fraction(2)}),
        ("gamma", Fraction(1), {"m": Fraction(1, 2)}),
    ]
    rows, worst = [], 1.0
    for k, (family, param, kw) in enumerate(benches):
        s = sample_site(family, param, replica_rng(SEED, k), samples, **kw)
        p = chi_square_pvalue(family, param, s, **kw)
        rows.append({"family": family, "param": param, "pvalue": p})
        worst = min(worst, p)
    return [CheckReport("sampler chi-square", len(rows), worst - 1e-3, 0.0, None, rows)]


def criterion_10() -> list:
    out = []
    g = SiteGraph.path(4)
    drift = 0.0
    for r in range(10):
        tr = simulate_bmp([1.0, -2.0, 0.5, 3.0], 10.0, 0.01, replica_rng(SEED, r), g)
        q = (tr.states**2).sum(axis=1)
        drift = max(drift, float(np.max(np.abs(q - q[0])) / q[0]))
    out.append(CheckReport("BMP conserves sum of squares", 10, -drift, 1e-12))
    worst = 0
    for r in range(10):
        start = [1.0, 0.25, 2.0, 0.0]
        tr = simulate_bep(start, 2, 10.0, 0.01, replica_rng(SEED, r), g)
        worst = max(worst, abs(sum(tr.quanta) - sum(round(v * 2**40) for v in start)))
        totals = tr.states.sum(axis=1)
        worst = max(worst, int(np.max(np.abs(totals - totals[0])) > 0))
    out.append(CheckReport("BEP conserves total energy", 10, -worst, 0.0))
    clamps = []
    for dt in (0.1, 0.01, 0.001):
        c = sum(simulate_bep([1.0, 1.0, 1.0], 2, 1.0, dt, replica_rng(SEED, r), SiteGraph.path(3),
                             record=False).clamped for r in range(20))
        clamps.append(c / (20 * 2 * round(1 / dt)))
    decreasing = all(b < a for a, b in zip(clamps, clamps[1:]))
    out.append(CheckReport("BEP clamp frequency decreases with dt", 3, 0.0 if decreasing else -1.0, 0.0, None,
                           [{"dt": dt, "frequency": f} for dt, f in zip((0.1, 0.01, 0.001), clamps)]))
    worst = 0
    for spec, start in ((SIP(1), (3, 0, 1, 2)), (SEP(2), (2, 1, 0, 2)), (SIP(Fraction(7, 3)), (0, 0, 5, 0))):
        for r in range(10):
            tr = simulate_ctmc(spec, start, 5.0, replica_rng(SEED, r), g)
            worst = max([worst] + [abs(sum(s) - sum(start)) for s in tr.states])
    for r in range(10):
        tr = simulate_labeled(2, 4, (0, 0, 3), 5.0, replica_rng(SEED, r), g)
        worst = max([worst] + [abs(len(s) - 3) for s in tr.states])
    out.append(CheckReport("jump simulators conserve particle number", 40, -worst, 0.0))
    same = True
    for r in range(3):
        a = simulate_ctmc(SIP(1), (3, 0, 1, 2), 5.0, replica_rng(SEED, r), g)
        b = simulate_ctmc(SIP(1), (3, 0, 1, 2), 5.0, replica_rng(SEED, r), g)
        same &= repr((a.times, a.states)) == repr((b.times, b.states))
        x = simulate_bmp([1.0, 2.0, 0.0, 1.0], 2.0, 0.01, replica_rng(SEED, r), g)
        y = simulate_bmp([1.0, 2.0, 0.0, 1.0], 2.0, 0.01, replica_rng(SEED, r), g)
        same &= x.states.tobytes() == y.states.tobytes()
        x = simulate_bep([1.0, 2.0, 0.0, 1.0], 1, 2.0, 0.01, replica_rng(SEED, r), g)
        y = simulate_bep([1.0, 2.0, 0.0, 1.0], 1, 2.0, 0.01, replica_rng(SEED, r), g)
        same &= x.states.tobytes() == y.states.tobytes()
    out.append(CheckReport("seeded reruns are identical", 9, 0.0 if same else -1.0, 0.0))
    return out


CRITERIA = {
    "1": ("SIP self-duality", criterion_1, "exact"),
    "2": ("SEP self-duality", criterion_2, "exact"),
    "3": ("diffusion dualities", criterion_3, "exact"),
    "4": ("boundary duality", criterion_4, "exact"),
    "5": ("comparison inequality", criterion_5, "exact"),
    "6": ("detailed balance", criterion_6, "exact"),
    "7-exact": ("correlation inequalities", criterion_7_exact, "exact"),
    "7-mc": ("Monte Carlo duality moments", criterion_7_mc, "stochastic"),
    "8-exact": ("boundary-driven steady state", criterion_8_exact, "exact"),
    "8-mc": ("stationary time averages", criterion_8_mc, "stochastic"),
    "9-exact": ("discrete gamma identities", criterion_9_exact, "exact"),
    "9-mc": ("sampler goodness of fit", criterion_9_mc, "stochastic"),
    "10": ("conservation and reproducibility", criterion_10, "stochastic"),
}

PRESETS = {
    "paper-exact": [k for k, v in CRITERIA.items() if v[2] == "exact"],
    "paper-stochastic": [k for k, v in CRITERIA.items() if v[2] == "stochastic"],
    "all": list(CRITERIA),
}


def _run_key(key: str):
    return key, CRITERIA[key][1]()


def run_preset(preset: str, jobs: int = 1) -> list:
    """``[(criterion key, reports)]`` in a fixed order."""
    keys = PRESETS[preset]
    if jobs <= 1:
        return [_run_key(k) for k in keys]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_key, keys))
