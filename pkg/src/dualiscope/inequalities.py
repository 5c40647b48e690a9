"""Executable forms of the comparison and correlation inequalities.

Every check returns a :class:`CheckReport` whose margin is oriented so that
the inequality under test reads ``margin >= 0``; it passes when the worst
margin is at least ``-tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from typing import Callable, Sequence

import numpy as np

from .duality import duality_product, sip_d
from .engine import (
    STATE_GUARD,
    absorption_probabilities,
    build_absorbing_dual_generator,
    build_labeled_generator,
    semigroup_apply,
)
from .errors import InvalidConfig, InvalidPairing, InvalidParameter, PreconditionError, ResourceLimit
from .measures import Binomial, DiscreteGamma, GammaProduct, Gaussian, ProductMeasureSpec
from .model import BEP, BMP, SEP, SIP, SiteGraph, rational

PSD_TOL = 1e-10


@dataclass
class CheckReport:
    name: str
    cases: int
    worst_margin: object
    tolerance: float
    worst_case: object = None
    rows: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return self.worst_margin >= -self.tolerance

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "cases": self.cases,
            "worst_margin": float(self.worst_margin),
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "worst_case": _jsonable(self.worst_case),
        }
        if isinstance(self.worst_margin, Fraction):
            out["worst_margin_exact"] = str(self.worst_margin)
        if self.details:
            out["details"] = _jsonable(self.details)
        return out


def _jsonable(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def merge_reports(name: str, reports: Sequence[CheckReport]) -> CheckReport:
    """Combine reports; the worst case is tagged with the sub-report name."""
    if not reports:
        raise InvalidParameter("nothing to merge")
    worst = min(reports, key=lambda r: r.worst_margin + r.tolerance)
    rows = [dict(r, check=rep.name) for rep in reports for r in rep.rows]
    return CheckReport(
        name,
        sum(r.cases for r in reports),
        worst.worst_margin,
        worst.tolerance,
        (worst.name, worst.worst_case),
        rows,
    )


# --------------------------------------------------------------------------
# Positive definite functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PDFunction:
    """A function on ``S^n`` tabulated as an array of shape ``(|S|,) * n``."""

    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim == 0 or len(set(vals.shape)) != 1:
            raise InvalidParameter("table must have shape (|S|,) * n")
        object.__setattr__(self, "values", vals)
        if self.symmetric and not self._is_symmetric():
            raise InvalidParameter("table flagged symmetric is not permutation invariant")

    @classmethod
    def from_callable(cls, fn: Callable, num_sites: int, n: int, guard: int = STATE_GUARD) -> "PDFunction":
        if num_sites**n > guard:
            raise ResourceLimit(f"table of size {num_sites ** n} exceeds guard {guard}")
        cells = {}
        for x in product(range(num_sites), repeat=n):
            cells[x] = fn(x)
        exact = all(isinstance(v, (int, Fraction)) for v in cells.values())
        arr = np.empty((num_sites,) * n, dtype=object if exact else float)
        for x, v in cells.items():
            arr[x] = Fraction(v) if exact else float(v)
        f = cls(arr)
        return cls(arr, f._is_symmetric())

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def num_sites(self) -> int:
        return self.values.shape[0]

    @property
    def exact(self) -> bool:
        return self.values.dtype == object

    def __call__(self, x):
        return self.values[tuple(x)]

    def _is_symmetric(self) -> bool:
        base = self.values
        for i, j in combinations(range(base.ndim), 2):
            sw = np.swapaxes(base, i, j)
            if self.exact:
                if not np.all(sw == base):
                    return False
            elif not np.allclose(sw, base, rtol=0, atol=1e-12):
                return False
        return True

    def vector(self, states: Sequence) -> np.ndarray:
        return np.array([float(self.values[s]) for s in states])


@dataclass(frozen=True)
class PDVerdict:
    ok: bool
    min_eigenvalue: float
    exact: bool
    where: object = None

    def __bool__(self) -> bool:
        return self.ok


def _exact_psd(M: list) -> bool:
    """Positive semidefiniteness of a symmetric rational matrix by pivoted LDL^T."""
    M = [list(r) for r in M]
    while M:
        k = max(range(len(M)), key=lambda i: M[i][i])
        piv = M[k][k]
        if piv < 0:
            return False
        if piv == 0:
            return all(v == 0 for r in M for v in r)
        col = [M[i][k] for i in range(len(M))]
        keep = [i for i in range(len(M)) if i != k]
        M = [[M[i][j] - col[i] * col[j] / piv for j in keep] for i in keep]
    return True


def _pair_blocks(values: np.ndarray, i: int, j: int):
    """Matrices ``(x_i, x_j) -> f`` for every fixing of the other coordinates."""
    S = values.shape[0]
    moved = np.moveaxis(values, (i, j), (-2, -1))
    others = moved.shape[:-2]
    blocks = moved.reshape(-1, S, S)
    fixings = list(product(range(S), repeat=len(others)))
    return blocks, fixings


def is_positive_definite(f: PDFunction, graph: SiteGraph | None = None, n: int | None = None,
                         guard: int = STATE_GUARD) -> PDVerdict:
    """Positive semidefiniteness in every pair of variables, others held fixed.

    Float tables are accepted when the smallest eigenvalue is at least
    ``-1e-10``; rational tables are decided exactly.
    """
    if graph is not None and graph.size != f.num_sites:
        raise InvalidConfig("function and graph have different site counts")
    if n is not None and n != f.n:
        raise InvalidConfig(f"function has {f.n} coordinates, expected {n}")
    if f.values.size > guard:
        raise ResourceLimit(f"table of size {f.values.size} exceeds guard {guard}")
    worst, where, ok = math.inf, None, True
    for i, j in combinations(range(f.n), 2):
        blocks, fixings = _pair_blocks(f.values, i, j)
        fl = blocks.astype(float)
        if not np.allclose(fl, np.swapaxes(fl, 1, 2), rtol=0, atol=1e-12):
            return PDVerdict(False, -math.inf, f.exact, ((i, j), "asymmetric"))
        eig = np.linalg.eigvalsh(fl).min(axis=1)
        b = int(np.argmin(eig))
        if eig[b] < worst:
            worst, where = float(eig[b]), ((i, j), fixings[b])
        if f.exact:
            for blk, fix in zip(blocks, fixings):
                if not _exact_psd(blk.tolist()):
                    ok, where = False, ((i, j), fix)
        elif eig[b] < -PSD_TOL:
            ok = False
    return PDVerdict(ok, worst, f.exact, where)


# random test functions ------------------------------------------------------


def gram_indicator_function(beta: Sequence, n: int) -> PDFunction:
    """``sum_u beta(u) prod_i I(x_i = u)`` with ``beta >= 0``."""
    S = len(beta)
    arr = np.zeros((S,) * n)
    for u, b in enumerate(beta):
        arr[(u,) * n] = float(b)
    return PDFunction(arr, True)


def product_function(g: Sequence, n: int) -> PDFunction:
    """``prod_i g(x_i)``; rational ``g`` gives an exact table."""
    exact = all(isinstance(v, (int, Fraction)) for v in g)
    S = len(g)
    arr = np.empty((S,) * n, dtype=object if exact else float)
    for x in product(range(S), repeat=n):
        v = Fraction(1) if exact else 1.0
        for xi in x:
            v = v * (Fraction(g[xi]) if exact else float(g[xi]))
        arr[x] = v
    return PDFunction(arr, True)


def mixture_function(weights: Sequence[float], gs: Sequence[Sequence[float]], n: int) -> PDFunction:
    """Nonnegative mixture of product functions, e.g. a K-function of a mixture of product measures."""
    S = len(gs[0])
    arr = np.zeros((S,) * n)
    for w, g in zip(weights, gs):
        arr = arr + float(w) * product_function([float(v) for v in g], n).values
    return PDFunction(arr, True)


def pairwise_kernel_function(M: np.ndarray, n: int) -> PDFunction:
    """``prod_{i<j} M(x_i, x_j)`` for ``M`` positive semidefinite with nonnegative entries."""
    M = np.asarray(M, dtype=float)
    S = M.shape[0]
    arr = np.ones((S,) * n)
    for x in product(range(S), repeat=n):
        v = 1.0
        for i, j in combinations(range(n), 2):
            v *= M[x[i], x[j]]
        arr[x] = v
    return PDFunction(arr, True)


def random_pd_function(rng: np.random.Generator, num_sites: int, n: int) -> PDFunction:
    """Draw from the test family; each draw is validated before it is returned."""
    S = num_sites
    kinds = ["gram", "product", "mixture", "kernel"] + (["matrix"] if n == 2 else [])
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "gram":
        f = gram_indicator_function(rng.exponential(size=S), n)
    elif kind == "product":
        f = product_function(list(rng.exponential(size=S)), n)
    elif kind == "mixture":
        k = int(rng.integers(1, 4))
        f = mixture_function(rng.exponential(size=k), rng.exponential(size=(k, S)), n)
    elif kind == "kernel":
        B = rng.exponential(size=(S, S))
        f = pairwise_kernel_function(B @ B.T / S, n)
    else:
        A = rng.normal(size=(S, S))
        f = PDFunction(A @ A.T, True)
    if not is_positive_definite(f):
        raise AssertionError(f"generated {kind} function is not positive definite")
    return f


# --------------------------------------------------------------------------
# Comparison inequality
# --------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _labeled(graph: SiteGraph, n: int, a, b):
    return build_labeled_generator(graph, n, a, b)


def _require_pd(f: PDFunction, graph: SiteGraph, n: int) -> None:
    if f.n != n or f.num_sites != graph.size:
        raise InvalidConfig("test function does not live on S^n")
    if not f.symmetric:
        raise PreconditionError("test function is not symmetric")
    pd = is_positive_definite(f, graph, n)
    if not pd:
        raise PreconditionError(f"test function is not positive definite (min eigenvalue {pd.min_eigenvalue:.3g})")


def comparison_batch(graph: SiteGraph, n: int, a, b, fs: Sequence[PDFunction], t: float,
                     eps: float = 1e-12) -> CheckReport:
    """``sign(b) (T^{a,b}_n(t) f - U^a_n(t) f)`` minimised over starts and test functions.

    All functions share one uniformization pass per semigroup.  For ``b < 0``
    the starts range over tuples with at most ``a/(-b)`` walkers per site.
    """
    a, b = rational(a), rational(b)
    if not fs:
        raise InvalidParameter("no test functions")
    for f in fs:
        _require_pd(f, graph, n)
    T = _labeled(graph, n, a, b)
    U = _labeled(graph, n, a, Fraction(0))
    tf = semigroup_apply(T, np.column_stack([f.vector(T.states) for f in fs]), t, eps).values
    uf = semigroup_apply(U, np.column_stack([f.vector(U.states) for f in fs]), t, eps).values
    uf = uf[[U.index[s] for s in T.states]]
    sign = 1 if b >= 0 else -1
    margins = sign * (tf - uf)
    rows = []
    for k in range(len(fs)):
        i = int(np.argmin(margins[:, k]))
        rows.append({"function": k, "t": t, "start": T.states[i], "interacting": float(tf[i, k]),
                     "independent": float(uf[i, k]), "margin": float(margins[i, k])})
    i, k = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return CheckReport(f"comparison(a={a}, b={b}, n={n}, t={t})", int(margins.size), float(margins[i, k]),
                       2 * eps + 1e-10, (int(k), T.states[i]), rows)


def comparison_check(graph: SiteGraph, n: int, a, b, f: PDFunction, t: float, eps: float = 1e-12) -> CheckReport:
    """``sign(b) (T^{a,b}_n(t) f - U^a_n(t) f)`` minimised over starting tuples."""
    rep = comparison_batch(graph, n, a, b, [f], t, eps)
    rep.worst_case = rep.worst_case[1]
    return rep


# --------------------------------------------------------------------------
# Correlation inequalities via the dual walkers
# --------------------------------------------------------------------------


def _dual_correlation(name, graph, a, b, rho, points, t, eps, sign):
    points = tuple(int(x) for x in points)
    n = len(points)
    if n < 1:
        raise InvalidParameter("need at least one point")
    if any(not 0 <= x < graph.size for x in points):
        raise InvalidConfig(f"points {points} outside the graph")
    rho = [float(r) for r in rho]
    G = _labeled(graph, n, a, b)
    prod_rho = np.array([math.prod(rho[y] for y in s) for s in G.states])
    joint = semigroup_apply(G, prod_rho, t, eps)
    G1 = _labeled(graph, 1, a, b)
    single = semigroup_apply(G1, np.array([rho[s[0]] for s in G1.states]), t, eps)
    one = {s[0]: float(single.values[i]) for i, s in enumerate(G1.states)}
    lhs = float(joint.values[G.index[points]])
    rhs = math.prod(one[x] for x in points)
    margin = sign * (lhs - rhs)
    tol = joint.error_bound + n * max(rho + [1.0]) ** (n - 1) * single.error_bound + 1e-10
    row = {"points": points, "t": t, "joint": lhs, "product": rhs, "margin": margin}
    return CheckReport(name, 1, margin, tol, points, [row], {"joint": lhs, "product": rhs, "one_point": one})


def dual_walk_rates(family) -> tuple:
    """``(a, b)`` of the labeled dual walkers for a self-dual or diffusion family."""
    if isinstance(family, SIP):
        return 2 * family.m, Fraction(4)
    if isinstance(family, SEP):
        return Fraction(family.n), Fraction(-1)
    if isinstance(family, (BMP, BEP)):
        return 2 * family.dual.m, Fraction(4)
    raise InvalidPairing(f"no dual walkers for {family!r}")


def dual_moment(family, measure: ProductMeasureSpec, points: Sequence[int], t: float, graph: SiteGraph,
                eps: float = 1e-12) -> float:
    """``E D(sum_i delta_{x_i}, eta_t)`` from the product measure, via the dual walkers."""
    if not measure.pairs_with(family):
        raise InvalidPairing(f"{measure.family} measure does not pair with {family!r}")
    points = tuple(int(x) for x in points)
    if not points:
        return 1.0
    a, b = dual_walk_rates(family)
    rho = [float(r) for r in measure.densities()]
    G = _labeled(graph, len(points), a, b)
    f = np.array([math.prod(rho[y] for y in s) for s in G.states])
    return float(semigroup_apply(G, f, t, eps).values[G.index[points]])


def stirling2(j: int, k: int) -> int:
    if j == k:
        return 1
    if k == 0 or k > j:
        return 0
    return k * stirling2(j - 1, k) + stirling2(j - 1, k - 1)


def power_in_duality_basis(j: int, m) -> dict:
    """Coefficients ``c_k`` with ``l^j = sum_k c_k d(k, l)`` for the inclusion duality."""
    half = rational(m) / 2
    out = {}
    for k in range(1, j + 1):
        rf = Fraction(1)
        for i in range(k):
            rf *= half + i
        out[k] = stirling2(j, k) * rf
    return out


def _occupation_covariance(graph, m, rho, x, y, t, eps):
    """``Cov(eta_t(x), eta_t(y))`` from one- and two-point dual values."""
    a, b = 2 * rational(m), Fraction(4)
    G2 = _labeled(graph, 2, a, b)
    vals = semigroup_apply(G2, np.array([rho[s[0]] * rho[s[1]] for s in G2.states]), t, eps).values
    G1 = _labeled(graph, 1, a, b)
    one = semigroup_apply(G1, np.array([rho[s[0]] for s in G1.states]), t, eps).values
    K1 = {s[0]: float(one[i]) for i, s in enumerate(G1.states)}
    c1 = {k: float(v) for k, v in power_in_duality_basis(1, m).items()}
    c2 = {k: float(v) for k, v in power_in_duality_basis(2, m).items()}
    mean_x, mean_y = c1[1] * K1[x], c1[1] * K1[y]
    if x == y:
        second = c2[1] * K1[x] + c2[2] * float(vals[G2.index[(x, x)]])
    else:
        second = c1[1] ** 2 * float(vals[G2.index[(x, y)]])
    return second - mean_x * mean_y


def sip_correlation_check(graph: SiteGraph, m, profile: Sequence, points: Sequence[int], t: float,
                          eps: float = 1e-12) -> CheckReport:
    """``K(x_1..x_n) >= prod K(x_i)`` at time ``t`` from the local stationary measure.

    ``profile`` holds the per-site ``lambda`` values of the discrete gamma product.
    """
    spec = DiscreteGamma(m, profile)
    if spec.size != graph.size:
        raise InvalidConfig("profile and graph have different site counts")
    rho = [float(r) for r in spec.densities()]
    rep = _dual_correlation(f"sip-correlation(m={rational(m)})", graph, 2 * rational(m), 4, rho, points, t, eps, 1)
    if len(points) == 2:
        rep.details["covariance"] = _occupation_covariance(graph, m, rho, int(points[0]), int(points[1]), t, eps)
    return rep


def sep_correlation_check(graph: SiteGraph, n_cap: int, profile: Sequence, points: Sequence[int], t: float,
                          eps: float = 1e-12) -> CheckReport:
    """``K(x_1..x_n) <= prod K(x_i)`` for the binomial product with densities ``profile``."""
    spec = Binomial(n_cap, profile)
    if spec.size != graph.size:
        raise InvalidConfig("profile and graph have different site counts")
    if max(list(points).count(x) for x in points) > n_cap:
        raise InvalidConfig(f"more than {n_cap} dual particles on a site")
    return _dual_correlation(f"sep-correlation(n={n_cap})", graph, n_cap, -1, spec.densities(), points, t, eps, -1)


def diffusion_correlation_check(family, graph: SiteGraph, profile: Sequence, points: Sequence[int], t: float,
                                eps: float = 1e-12) -> CheckReport:
    """Correlation inequality for BMP (Gaussian variances) or BEP(m) (Gamma scales)."""
    if isinstance(family, BMP):
        spec: ProductMeasureSpec = Gaussian(profile)
    elif isinstance(family, BEP):
        spec = GammaProduct(family.m, profile)
    else:
        raise InvalidPairing(f"{family!r} is not a diffusion family")
    if spec.size != graph.size:
        raise InvalidConfig("profile and graph have different site counts")
    dual = family.dual
    return _dual_correlation(f"diffusion-correlation({type(family).__name__})", graph, 2 * dual.m, 4,
                             spec.densities(), points, t, eps, 1)


# --------------------------------------------------------------------------
# Boundary-driven steady state
# --------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _absorption(N: int, m, n: int):
    G = build_absorbing_dual_generator(N, m, n)
    return absorption_probabilities(G)


def steady_state_moment(N: int, m, lam_left, lam_right, points: Sequence[int]) -> Fraction:
    """``int D(sum_i delta_{x_i}, .) d mu_{L,R}`` for points in ``1..N``, exactly."""
    lam_left, lam_right, m = rational(lam_left), rational(lam_right), rational(m)
    points = tuple(points)
    if not points:
        return Fraction(1)
    if any(not 1 <= x <= N for x in points):
        raise InvalidConfig(f"points {points} outside 1..{N}")
    if len(points) > 3:
        raise ResourceLimit("at most three dual particles are supported")
    rl, rr = lam_left / (1 - lam_left), lam_right / (1 - lam_right)
    start = [0] * (N + 2)
    for x in points:
        start[x] += 1
    dist = _absorption(N, m, len(points))[tuple(start)]
    return sum((Fraction(p) * rl ** s[0] * rr ** s[-1] for s, p in dist.items()), Fraction(0))


def boundary_correlation_check(N: int, m, lam_left, lam_right, points: Sequence[int]) -> CheckReport:
    """Steady-state ``K(x_1..x_n) >= prod K(x_i)``, decided in exact arithmetic."""
    joint = steady_state_moment(N, m, lam_left, lam_right, points)
    prod_ = Fraction(1)
    for x in points:
        prod_ *= steady_state_moment(N, m, lam_left, lam_right, (x,))
    margin = joint - prod_
    row = {"points": tuple(points), "joint": joint, "product": prod_, "margin": margin}
    return CheckReport(f"boundary-correlation(N={N}, m={rational(m)})", 1, margin, 1e-12, tuple(points), [row],
                       {"joint": joint, "product": prod_, "equality": margin == 0})


@dataclass
class ProfileReport:
    values: list
    second_differences: list
    reference: list
    deviation: list

    @property
    def affine(self) -> bool:
        return all(d == 0 for d in self.second_differences)

    @property
    def max_deviation(self):
        return max((abs(d) for d in self.deviation), default=Fraction(0))

    def to_json(self) -> dict:
        return {
            "values": [str(v) for v in self.values],
            "second_differences": [str(v) for v in self.second_differences],
            "affine": self.affine,
            "reference": [str(v) for v in self.reference],
            "deviation": [str(v) for v in self.deviation],
            "max_deviation": float(self.max_deviation),
        }


def density_profile(N: int, m, lam_left, lam_right) -> ProfileReport:
    """Exact steady-state density, its second differences, and the deviation from
    the interpolation ``rho_L (1 - i/(N+1)) + rho_R i/(N+1)``.
    """
    lam_left, lam_right = rational(lam_left), rational(lam_right)
    rl, rr = lam_left / (1 - lam_left), lam_right / (1 - lam_right)
    values = [steady_state_moment(N, m, lam_left, lam_right, (i,)) for i in range(1, N + 1)]
    second = [values[i - 1] - 2 * values[i] + values[i + 1] for i in range(1, N - 1)]
    ref = [rl * (1 - Fraction(i, N + 1)) + rr * Fraction(i, N + 1) for i in range(1, N + 1)]
    return ProfileReport(values, second, ref, [v - r for v, r in zip(values, ref)])


# --------------------------------------------------------------------------
# Meeting probabilities
# --------------------------------------------------------------------------


MEETING_COLUMNS = (
    "t",
    "collision",
    "second_factorial",
    "d2_moment",
    "two_particle_dual",
    "pair_product_bound",
    "indicator_sum",
    "meeting_bound",
)


def second_factorial_residual(m, l: int) -> Fraction:
    """``l^2 - l - (m/2)(m/2+1) d(2, l)``, which vanishes identically."""
    half = rational(m) / 2
    return l * l - l - half * (half + 1) * sip_d(2, l, m)


def meeting_probability_report(graph: SiteGraph, m, starts: Sequence[int], times: Sequence[float],
                               eps: float = 1e-12) -> CheckReport:
    """Evaluate each link of the vanishing-collision bound at finite times.

    Starting from particles at ``starts``, the chain is
    ``P(collision) <= sum_z E[eta(z)^2 - eta(z)] = c2 sum_z E D(2 delta_z, eta_t)
    = c2 sum_z E_{z,z} D(delta_X + delta_Y, eta) <= c sum_z E_{z,z} eta(X) eta(Y)
    = c sum_z sum_{i,j} P_{z,z}(X = x_i, Y = x_j) <= c n^2 sup P_{x,y}(X_t = Y_t)``
    with ``c2 = (m/2)(m/2+1)`` and ``c = 1 + 2/m``.  The margin is the smallest
    slack over all links and times.
    """
    m = rational(m)
    starts = tuple(int(x) for x in starts)
    n = len(starts)
    if n < 2:
        raise InvalidParameter("need at least two particles")
    if not times:
        raise InvalidParameter("empty time grid")
    half = m / 2
    c2, c = float(half * (half + 1)), float(1 + 2 / m)
    sip = SIP(m)
    a, b = 2 * m, Fraction(4)
    Gn = _labeled(graph, n, a, b)
    G2 = _labeled(graph, 2, a, b)
    eta0 = [starts.count(z) for z in range(graph.size)]

    def occ(s):
        return [s.count(z) for z in range(graph.size)]

    collide = np.array([1.0 if len(set(s)) < n else 0.0 for s in Gn.states])
    fact2 = np.array([float(sum(k * k - k for k in occ(s))) for s in Gn.states])
    d2 = np.array([float(sum(sip_d(2, k, m) for k in occ(s))) for s in Gn.states])
    dual_pair = np.array([float(duality_product(occ(s), eta0, sip)) for s in G2.states])
    pair_prod = np.array([float(eta0[s[0]] * eta0[s[1]]) for s in G2.states])
    meet = np.array([1.0 if s[0] == s[1] else 0.0 for s in G2.states])
    diag = [G2.index[(z, z)] for z in range(graph.size)]
    start_idx = Gn.index[starts]

    rows, worst, worst_t, tol = [], math.inf, None, 0.0
    for t in times:
        ev = semigroup_apply(Gn, np.column_stack([collide, fact2, d2]), t, eps)
        ev2 = semigroup_apply(G2, np.column_stack([dual_pair, pair_prod, meet]), t, eps)
        q0, q1, q2 = (float(v) for v in ev.values[start_idx])
        q2 *= c2
        q3 = c2 * float(sum(ev2.values[i, 0] for i in diag))
        q4 = c * float(sum(ev2.values[i, 1] for i in diag))
        q5 = 0.0
        for i, j in product(starts, repeat=2):
            e = np.zeros(len(G2))
            e[G2.index[(i, j)]] = 1.0
            pr = semigroup_apply(G2, e, t, eps).values
            q5 += c * float(sum(pr[k] for k in diag))
        q6 = c * n * n * float(ev2.values[:, 2].max())
        rows.append(dict(zip(MEETING_COLUMNS, (t, q0, q1, q2, q3, q4, q5, q6))))
        slack = min(q1 - q0, -abs(q2 - q1), -abs(q3 - q2), q4 - q3, -abs(q5 - q4), q6 - q5)
        tol = max(tol, 1e-9 * max(1.0, q6))
        if slack < worst:
            worst, worst_t = slack, t
    return CheckReport(f"meeting(m={m}, n={n})", len(rows), worst, tol, worst_t, rows,
                       {"columns": list(MEETING_COLUMNS)})
