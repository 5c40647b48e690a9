"""Duality functions and exact checks of the duality relations.

Single-site duality functions (``k`` dual particles, ``l`` particles or the
continuous variable):

* inclusion:  ``l!/(l-k)! / (m/2)_k``
* exclusion:  ``C(l, k) / C(n, k)``
* momentum:   ``z^(2k) / (2k-1)!!``
* energy:     ``y^k / (2^k (m/2)_k)``

where ``(x)_k`` is the rising factorial.  Gamma ratios are always evaluated
as rising-factorial products of rationals.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

from .errors import InvalidConfig, InvalidDual, InvalidPairing
from .model import (
    BEP,
    BMP,
    SEP,
    SIP,
    AbsorbingDualSIP,
    BoundaryDrivenSIP,
    SiteGraph,
    apply_generator,
    enumerate_moves,
    rational,
)
from .polynomial import SitePolynomial


def rising(x, k: int):
    """Rising factorial ``x (x+1) ... (x+k-1)``."""
    out = Fraction(1) if isinstance(x, (int, Fraction)) else 1.0
    for j in range(k):
        out *= x + j
    return out


def falling(l: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= l - j
    return out


def odd_double_factorial(k: int) -> int:
    """``(2k-1)!!`` with ``(-1)!! = 1``."""
    out = 1
    for j in range(1, 2 * k, 2):
        out *= j
    return out


def sip_d(k: int, l: int, m) -> Fraction:
    if k < 0 or l < 0:
        raise InvalidDual(f"negative occupation in d({k}, {l})")
    if k > l:
        return Fraction(0)
    return falling(l, k) / rising(rational(m) / 2, k)


def sep_d(k: int, l: int, n: int) -> Fraction:
    if k < 0 or k > n:
        raise InvalidDual(f"dual occupation {k} outside 0..{n}")
    if l < 0 or l > n:
        raise InvalidConfig(f"occupation {l} outside 0..{n}")
    return Fraction(comb(l, k), comb(n, k))


def bmp_d(k: int) -> SitePolynomial:
    """``z^(2k)/(2k-1)!!`` as a one-variable polynomial."""
    return SitePolynomial.monomial((2 * k,), Fraction(1, odd_double_factorial(k)))


def bep_d(k: int, m) -> SitePolynomial:
    """``y^k / (2^k (m/2)_k)`` as a one-variable polynomial."""
    return SitePolynomial.monomial((k,), 1 / (2**k * rising(rational(m) / 2, k)))


def site_duality(family, k: int, value):
    """Single-site duality function of ``family`` evaluated at ``value``."""
    if isinstance(family, SIP):
        return sip_d(k, value, family.m)
    if isinstance(family, SEP):
        return sep_d(k, value, family.n)
    if isinstance(family, BMP):
        return value ** (2 * k) / odd_double_factorial(k)
    if isinstance(family, BEP):
        return value**k / (2**k * rising(family.m / 2, k))
    raise InvalidPairing(f"no duality function for {family!r}")


def duality_product(xi: Sequence[int], eta: Sequence, family) -> Fraction:
    """``D(xi, eta) = prod_x d(xi_x, eta_x)``; equals 1 for empty ``xi``."""
    if len(xi) != len(eta):
        raise InvalidConfig("dual and primal configurations live on different site sets")
    if isinstance(family, SEP) and any(v > family.n for v in eta):
        raise InvalidConfig(f"occupancy above cap {family.n}")
    out = Fraction(1)
    for k, l in zip(xi, eta):
        if k:
            out = out * site_duality(family, k, l)
            if out == 0:
                return out
    return out


def duality_polynomial(xi: Sequence[int], family) -> SitePolynomial:
    """``D(xi, .)`` as a polynomial in the site variables (diffusion families)."""
    n = len(xi)
    coeff = Fraction(1)
    exps = []
    for k in xi:
        if isinstance(family, BMP):
            coeff /= odd_double_factorial(k)
            exps.append(2 * k)
        elif isinstance(family, BEP):
            coeff /= 2**k * rising(family.m / 2, k)
            exps.append(k)
        else:
            raise InvalidPairing(f"{family!r} is not a diffusion family")
    return SitePolynomial(n, {tuple(exps): coeff})


def boundary_duality(xi: Sequence[int], eta: Sequence[int], m, rho_left, rho_right) -> Fraction:
    """``rho_L^xi_0 * D(xi restricted to 1..N, eta) * rho_R^xi_{N+1}``."""
    if len(xi) != len(eta) + 2:
        raise InvalidConfig("boundary dual configuration must have N + 2 entries")
    bulk = duality_product(xi[1:-1], eta, SIP(m))
    return rational(rho_left) ** xi[0] * bulk * rational(rho_right) ** xi[-1]


def factorization_defect(xi: Sequence[int], eta: Sequence, family) -> Fraction:
    """``|D(sum_i delta_{x_i}, eta) - prod_i D(delta_{x_i}, eta)|``."""
    joint = duality_product(xi, eta, family)
    split = Fraction(1)
    for k, l in zip(xi, eta):
        if k:
            split = split * site_duality(family, 1, l) ** k
    return abs(joint - split)


# --------------------------------------------------------------------------
# Diffusion generators on polynomials
# --------------------------------------------------------------------------


def _bmp_edge(f: SitePolynomial, x: int, y: int) -> SitePolynomial:
    def rot(g):
        return g.diff(y).times_var(x) - g.diff(x).times_var(y)

    return rot(rot(f))


def _bep_edge(f: SitePolynomial, x: int, y: int, m) -> SitePolynomial:
    d1 = f.diff(x) - f.diff(y)
    d2 = d1.diff(x) - d1.diff(y)
    second = d2.times_var(x).times_var(y) * 4
    first = (d1.times_var(x) - d1.times_var(y)) * (2 * m)
    return second - first


def apply_diffusion_generator(f: SitePolynomial, graph: SiteGraph, family) -> SitePolynomial:
    """Image of ``f`` under the BMP or BEP(m) generator, summed over unordered edges."""
    if f.nvars != graph.size:
        raise InvalidConfig("polynomial and graph have different site counts")
    out = SitePolynomial(f.nvars)
    for x, y, p in graph.edges:
        if isinstance(family, BMP):
            out = out + _bmp_edge(f, x, y) * p
        elif isinstance(family, BEP):
            out = out + _bep_edge(f, x, y, family.m) * p
        else:
            raise InvalidPairing(f"{family!r} is not a diffusion family")
    return out


# --------------------------------------------------------------------------
# Duality identities
# --------------------------------------------------------------------------


def _dual_generator_polynomial(xi, family, graph) -> SitePolynomial:
    dual = family.dual
    base = duality_polynomial(xi, family)
    out = SitePolynomial(graph.size)
    for target, rate in enumerate_moves(dual, xi, graph):
        out = out + (duality_polynomial(target, family) - base) * rate
    return out


def diffusion_duality_residual(xi: Sequence[int], graph: SiteGraph, family) -> SitePolynomial:
    """``L_diffusion D(xi, .) - (L_SIP D(., eta))(xi)`` as a polynomial."""
    lhs = apply_diffusion_generator(duality_polynomial(xi, family), graph, family)
    return lhs - _dual_generator_polynomial(xi, family, graph)


def diffusion_scale_factor(xi: Sequence[int], graph: SiteGraph, family):
    """The constant ``c`` with ``L_diffusion D = c * L_SIP D`` if one exists, else ``None``.

    Used to report a uniform rate mismatch instead of silently absorbing it.
    """
    lhs = apply_diffusion_generator(duality_polynomial(xi, family), graph, family)
    rhs = _dual_generator_polynomial(xi, family, graph)
    if rhs.is_zero():
        return Fraction(1) if lhs.is_zero() else None
    e0, c0 = next(iter(rhs.terms.items()))
    c = lhs.terms.get(e0, Fraction(0)) / c0
    return c if (lhs - rhs * c).is_zero() else None


def check_duality_identity(spec, xi: Sequence[int], eta: Sequence | None = None, graph: SiteGraph | None = None):
    """Exact residual of the duality relation at ``(xi, eta)``.

    * SIP(m), SEP(n): self-duality, both generators on ``graph``.
    * BoundaryDrivenSIP: the primal chain against the absorbing dual.
    * BMP, BEP(m): ``eta`` is symbolic; the residual is the largest absolute
      coefficient of the polynomial difference.
    """
    xi = tuple(xi)
    if isinstance(spec, (BMP, BEP)):
        if graph is None or len(xi) != graph.size:
            raise InvalidConfig("dual configuration does not match the graph")
        return diffusion_duality_residual(xi, graph, spec).max_abs_coefficient()
    eta = tuple(eta)
    if isinstance(spec, (SIP, SEP)):
        if graph is None or len(xi) != graph.size or len(eta) != graph.size:
            raise InvalidConfig("configurations do not match the graph")
        lhs = apply_generator(spec, lambda e: duality_product(xi, e, spec), eta, graph)
        rhs = apply_generator(spec, lambda x: duality_product(x, eta, spec), xi, graph)
        return lhs - rhs
    if isinstance(spec, BoundaryDrivenSIP):
        if len(eta) != spec.N or len(xi) != spec.N + 2:
            raise InvalidConfig("boundary configurations must have N and N + 2 entries")
        dual = AbsorbingDualSIP(spec.m, spec.N)
        rl, rr = spec.rho_left, spec.rho_right

        def D(x, e):
            return boundary_duality(x, e, spec.m, rl, rr)

        lhs = apply_generator(spec, lambda e: D(xi, e), eta)
        rhs = apply_generator(dual, lambda x: D(x, eta), xi)
        return lhs - rhs
    raise InvalidPairing(f"no duality relation for {spec!r}")


def max_duality_residual(spec, xis: Iterable, etas: Iterable | None = None, graph: SiteGraph | None = None):
    """Largest ``|residual|`` over all pairs, plus the number of cases checked.

    Evaluations of ``D`` are memoised, which keeps exhaustive sweeps cheap.
    """
    xis = [tuple(x) for x in xis]
    if isinstance(spec, (BMP, BEP)):
        worst = max((check_duality_identity(spec, x, None, graph) for x in xis), default=Fraction(0))
        return worst, len(xis)

    etas = [tuple(e) for e in etas]
    if isinstance(spec, BoundaryDrivenSIP):
        dual = AbsorbingDualSIP(spec.m, spec.N)
        rl, rr = spec.rho_left, spec.rho_right

        def D(x, e):
            return boundary_duality(x, e, spec.m, rl, rr)

        primal, dual_spec, g = spec, dual, None
    else:
        def D(x, e):
            return duality_product(x, e, spec)

        primal, dual_spec, g = spec, spec, graph

    memo: dict = {}

    def Dm(x, e):
        key = (x, e)
        v = memo.get(key)
        if v is None:
            v = memo[key] = D(x, e)
        return v

    worst = Fraction(0)
    count = 0
    for e in etas:
        e_moves = enumerate_moves(primal, e, g)
        for x in xis:
            d0 = Dm(x, e)
            lhs = sum((r * (Dm(x, e2) - d0) for e2, r in e_moves), Fraction(0))
            rhs = sum((r * (Dm(x2, e) - d0) for x2, r in enumerate_moves(dual_spec, x, g)), Fraction(0))
            res = abs(lhs - rhs)
            if res > worst:
                worst = res
            count += 1
    return worst, count


def boundary_relation_residual(k: int, n: int, m, lam) -> Fraction:
    """Residual of the reservoir identity

    ``b(n)(D(k,n+1)-D(k,n)) + d(n)(D(k,n-1)-D(k,n)) = k(D(k-1,n) rho - D(k,n))``.
    """
    from .model import boundary_birth_rate, boundary_death_rate

    lam = rational(lam)
    rho = lam / (1 - lam)

    def D(kk, nn):
        if kk < 0 or nn < 0:
            return Fraction(0)
        return sip_d(kk, nn, m)

    lhs = boundary_birth_rate(n, m, lam) * (D(k, n + 1) - D(k, n))
    if n > 0:
        lhs += boundary_death_rate(n, lam) * (D(k, n - 1) - D(k, n))
    rhs = k * (D(k - 1, n) * rho - D(k, n))
    return lhs - rhs


def solve_boundary_rates(n: int, m, lam) -> tuple:
    """Solve the reservoir identity at ``k = 1, 2`` for ``(b(n), d(n))``.

    The two equations are linearly independent for ``n >= 1``, so the
    duality constraint pins both rates; for ``n = 0`` only ``b(0)`` enters.
    """
    lam = rational(lam)
    rho = lam / (1 - lam)

    def D(kk, nn):
        return Fraction(0) if kk < 0 or nn < 0 else sip_d(kk, nn, m)

    def coeffs(k):
        cb = D(k, n + 1) - D(k, n)
        cd = (D(k, n - 1) - D(k, n)) if n > 0 else Fraction(0)
        return cb, cd, k * (D(k - 1, n) * rho - D(k, n))

    b1, d1, r1 = coeffs(1)
    if n == 0:
        return r1 / b1, Fraction(0)
    b2, d2, r2 = coeffs(2)
    det = b1 * d2 - b2 * d1
    return (r1 * d2 - r2 * d1) / det, (b1 * r2 - b2 * r1) / det
