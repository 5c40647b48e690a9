"""Product measures, their samplers and closed-form duality moments.

Four single-site families, each paired with one duality family:

=================  ==================  ===============================
family             site parameter       ``int D(delta_x, .)``
=================  ==================  ===============================
discrete gamma     lambda in [0, 1)     lambda / (1 - lambda)   (SIP)
binomial           rho in [0, 1]        rho                     (SEP)
gaussian           variance >= 0        variance                (BMP)
gamma (shape m/2)  scale theta >= 0     theta / 2               (BEP)
=================  ==================  ===============================

The moment of ``D(xi, .)`` under a product measure is the product over
dual particles of the right-hand column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .duality import rising, sip_d
from .errors import InvalidPairing, InvalidParameter
from .model import BEP, BMP, SEP, SIP, rational

FAMILIES = ("discrete_gamma", "binomial", "gaussian", "gamma")


@dataclass(frozen=True)
class ProductMeasureSpec:
    family: str
    profile: tuple
    m: Any = None
    n: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown measure family {self.family!r}")
        prof = tuple(rational(v) for v in self.profile)
        object.__setattr__(self, "profile", prof)
        if self.family in ("discrete_gamma", "gamma"):
            if self.m is None:
                raise InvalidParameter(f"{self.family} needs m")
            object.__setattr__(self, "m", rational(self.m))
            if not self.m > 0:
                raise InvalidParameter("m must be positive")
        if self.family == "binomial":
            if self.n is None or int(self.n) != self.n or self.n < 1:
                raise InvalidParameter("binomial needs an integer n >= 1")
        for v in prof:
            if not math.isfinite(v):
                raise InvalidParameter(f"non-finite profile value {v}")
            if self.family == "discrete_gamma" and not (0 <= v < 1):
                raise InvalidParameter(f"lambda must lie in [0, 1), got {v}")
            if self.family == "binomial" and not (0 <= v <= 1):
                raise InvalidParameter(f"rho must lie in [0, 1], got {v}")
            if self.family in ("gaussian", "gamma") and v < 0:
                raise InvalidParameter(f"{self.family} parameter must be >= 0, got {v}")

    @property
    def size(self) -> int:
        return len(self.profile)

    def densities(self) -> tuple:
        """Per-site value of ``int D(delta_x, .) d mu``."""
        if self.family == "discrete_gamma":
            return tuple(v / (1 - v) for v in self.profile)
        if self.family == "gamma":
            return tuple(v / 2 for v in self.profile)
        return self.profile

    def pairs_with(self, family) -> bool:
        if self.family == "discrete_gamma":
            return isinstance(family, SIP) and family.m == self.m
        if self.family == "binomial":
            return isinstance(family, SEP) and family.n == self.n
        if self.family == "gaussian":
            return isinstance(family, BMP)
        return isinstance(family, BEP) and family.m == self.m


def DiscreteGamma(m, lambdas: Sequence) -> ProductMeasureSpec:
    return ProductMeasureSpec("discrete_gamma", tuple(lambdas), m=m)


def Binomial(n: int, rhos: Sequence) -> ProductMeasureSpec:
    return ProductMeasureSpec("binomial", tuple(rhos), n=n)


def Gaussian(variances: Sequence) -> ProductMeasureSpec:
    return ProductMeasureSpec("gaussian", tuple(variances))


def GammaProduct(m, thetas: Sequence) -> ProductMeasureSpec:
    return ProductMeasureSpec("gamma", tuple(thetas), m=m)


def local_stationary(family, densities: Sequence) -> ProductMeasureSpec:
    """The product measure of ``family`` whose duality densities are ``densities``."""
    rho = [rational(v) for v in densities]
    if isinstance(family, SIP):
        return DiscreteGamma(family.m, [r / (1 + r) for r in rho])
    if isinstance(family, SEP):
        return Binomial(family.n, rho)
    if isinstance(family, BMP):
        return Gaussian(rho)
    if isinstance(family, BEP):
        return GammaProduct(family.m, [2 * r for r in rho])
    raise InvalidPairing(f"no product measure for {family!r}")


# --------------------------------------------------------------------------
# Discrete gamma distribution
# --------------------------------------------------------------------------


def nu_weight(k: int, m, lam) -> Fraction:
    """Unnormalised ``lam^k (m/2)_k / k!``."""
    m, lam = rational(m), rational(lam)
    return lam**k * rising(m / 2, k) / math.factorial(k)


def nu_normalizer(m, lam):
    """``(1 - lam)^(m/2)``, exact when ``m/2`` is an integer or ``lam = 0``."""
    m, lam = rational(m), rational(lam)
    half = m / 2
    if lam == 0:
        return Fraction(1)
    if isinstance(half, Fraction) and half.denominator == 1 and isinstance(lam, Fraction):
        return (1 - lam) ** int(half)
    return float(1 - lam) ** float(half)


def nu_pmf(k: int, m, lam):
    """Discrete gamma probability ``(1-lam)^(m/2) lam^k (m/2)_k / k!``."""
    m, lam = rational(m), rational(lam)
    if not (0 <= lam < 1):
        raise InvalidParameter(f"lambda must lie in [0, 1), got {lam}")
    if not m > 0:
        raise InvalidParameter("m must be positive")
    if k < 0:
        return Fraction(0)
    return nu_weight(k, m, lam) * nu_normalizer(m, lam)


def nu_tail_bound(K: int, m, lam) -> float:
    """Upper bound on ``sum_{k > K} nu(k)`` from the ratio of consecutive terms."""
    m, lam = rational(m), rational(lam)
    if lam == 0:
        return 0.0
    first = nu_pmf(K + 1, m, lam)
    q = max(lam * (m / 2 + K + 1) / (K + 2), lam)
    if q >= 1:
        return math.inf
    return float(first / (1 - q))


def _power_compare_le(x: Fraction, y_num_pow: Fraction, q: int) -> bool:
    """``x <= y`` for positive ``x`` given ``y**(2q)`` exactly."""
    return x ** (2 * q) <= y_num_pow


@dataclass(frozen=True)
class MomentCertificate:
    """Bracket for ``int d(k, .) d nu^m_lambda``: ``partial <= target <= partial + tail``."""

    k: int
    terms: int
    partial: Any  # truncated sum in units of the normaliser
    tail_bound: float
    lower_holds: bool
    upper_holds: bool

    @property
    def certified(self) -> bool:
        return self.lower_holds and self.upper_holds


def certify_site_moment(k: int, m, lam, tol: float = 1e-12) -> MomentCertificate:
    """Certify ``sum_l d(k, l) nu(l) = (lam/(1-lam))^k`` by truncated exact summation.

    Work is done with the unnormalised weights ``w`` (``nu = c w`` with
    ``c = (1-lam)^(m/2) <= 1``); the target ``rho^k / c`` is compared after
    raising both sides to the power ``2q`` where ``m = p/q``, so the
    comparison stays rational even when ``c`` is irrational.  The reported
    tail bound is for the unnormalised sum, hence also for the normalised
    one.
    """
    m, lam = rational(m), rational(lam)
    if not (isinstance(m, Fraction) and isinstance(lam, Fraction)):
        raise InvalidParameter("certification needs rational m and lambda")
    rho = lam / (1 - lam)
    if lam == 0:
        return MomentCertificate(k, 1, Fraction(1 if k == 0 else 0), 0.0, True, True)

    def term(l):
        return sip_d(k, l, m) * nu_weight(l, m, lam)

    def ratio(l):  # term(l+1)/term(l), valid for l >= k
        return lam * (m / 2 + l) / (l + 1 - k)

    partial = Fraction(0)
    l = 0
    while True:
        partial += term(l)
        if l >= k:
            q = max(ratio(l + 1), lam)
            if q < 1:
                tail = term(l + 1) / (1 - q)
                if tail < tol:
                    break
        l += 1
    p, qd = m.numerator, m.denominator
    # target^(2q) = rho^(2qk) * (1-lam)^(-p)
    target_pow = rho ** (2 * qd * k) / (1 - lam) ** p
    lower = _power_compare_le(partial, target_pow, qd)
    upper = (partial + tail) ** (2 * qd) >= target_pow
    return MomentCertificate(k, l + 1, partial, float(tail), lower, upper)


def convolve_check(m, l, lam, k_max: int):
    """Largest deviation between ``nu^m * nu^l`` and ``nu^(m+l)`` on ``0..k_max``.

    The normalisers multiply exactly, so the comparison is made on the
    unnormalised weights and rescaled.
    """
    m, l, lam = rational(m), rational(l), rational(lam)
    wm = [nu_weight(k, m, lam) for k in range(k_max + 1)]
    wl = [nu_weight(k, l, lam) for k in range(k_max + 1)]
    worst = Fraction(0)
    for k in range(k_max + 1):
        conv = sum((wm[j] * wl[k - j] for j in range(k + 1)), Fraction(0))
        dev = abs(conv - nu_weight(k, m + l, lam))
        worst = max(worst, dev)
    return worst * nu_normalizer(m + l, lam) if worst else Fraction(0)


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------


def d_moment(xi: Sequence[int], spec: ProductMeasureSpec, family=None):
    """``int D(xi, .) d mu`` for a product measure ``mu``: ``prod_x rho(x)^xi_x``."""
    if family is not None and not spec.pairs_with(family):
        raise InvalidPairing(f"{spec.family} measure does not pair with {family!r}")
    if len(xi) != spec.size:
        raise InvalidParameter("dual configuration does not match the profile")
    if spec.family == "binomial" and any(k > spec.n for k in xi):
        raise InvalidParameter(f"dual occupation above {spec.n}")
    out = Fraction(1)
    for k, r in zip(xi, spec.densities()):
        if k:
            out = out * r**k
    return out


def uniform_moment_bound(spec: ProductMeasureSpec, n: int):
    """``sup_{|xi| = n} int D(xi, .) d mu = (max_x rho(x))^n``."""
    dens = spec.densities()
    if not dens:
        raise InvalidParameter("empty profile")
    top = max(dens)
    if not math.isfinite(top):
        raise InvalidParameter("unbounded profile")
    return top**n


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def sample_site(family: str, param, rng: np.random.Generator, size=None, m=None, n=None):
    """Independent draws from one site marginal."""
    param = float(param)
    if family == "discrete_gamma":
        if param == 0:
            return np.zeros(size, dtype=np.int64) if size is not None else 0
        half = rational(m) / 2
        if isinstance(half, Fraction) and half.denominator == 1:
            return rng.negative_binomial(int(half), 1 - param, size=size)
        # Gamma-mixed Poisson: exact in law for any positive shape
        intensity = rng.gamma(float(half), param / (1 - param), size=size)
        return rng.poisson(intensity)
    if family == "binomial":
        return rng.binomial(int(n), param, size=size)
    if family == "gaussian":
        return rng.normal(0.0, math.sqrt(param), size=size)
    if family == "gamma":
        if param == 0:
            return np.zeros(size) if size is not None else 0.0
        return rng.gamma(float(rational(m)) / 2, param, size=size)
    raise InvalidParameter(f"unknown family {family!r}")


def sample_product(spec: ProductMeasureSpec, rng: np.random.Generator) -> np.ndarray:
    """One configuration with independent site draws."""
    vals = [sample_site(spec.family, v, rng, m=spec.m, n=spec.n) for v in spec.profile]
    dtype = np.int64 if spec.family in ("discrete_gamma", "binomial") else float
    return np.array(vals, dtype=dtype)


def chi_square_pvalue(family: str, param, samples: np.ndarray, m=None, n=None, bins: int = 40) -> float:
    """Chi-square goodness of fit of ``samples`` against one site marginal.

    Discrete families pool the upper tail until every expected count is at
    least 5; continuous ones use ``bins`` equiprobable cells.
    """
    samples = np.asarray(samples)
    N = samples.size
    param = rational(param)
    if family in ("discrete_gamma", "binomial"):
        if family == "discrete_gamma":
            pmf = lambda k: float(nu_pmf(k, m, param))  # noqa: E731
            kmax = int(samples.max()) + 1
        else:
            pmf = lambda k: float(stats.binom.pmf(k, n, float(param)))  # noqa: E731
            kmax = int(n)
        probs = [pmf(k) for k in range(kmax + 1)]
        counts = np.bincount(samples.astype(np.int64), minlength=kmax + 1)[: kmax + 1]
        # pool from the right while expected counts are small
        obs, exp = [], []
        acc_o = 0
        acc_p = max(0.0, 1.0 - sum(probs))
        for c, pr in reversed(list(zip(counts, probs))):
            acc_o += c
            acc_p += pr
            if acc_p * N >= 5:
                obs.append(acc_o)
                exp.append(acc_p * N)
                acc_o, acc_p = 0, 0.0
        if not obs:
            return 1.0
        if acc_o or acc_p:
            obs[-1] += acc_o
            exp[-1] += acc_p * N
        obs, exp = np.array(obs, float), np.array(exp, float)
        exp *= obs.sum() / exp.sum()
        if len(obs) < 2:
            return 1.0
        return float(stats.chisquare(obs, exp).pvalue)
    if family == "gaussian":
        dist = stats.norm(0.0, math.sqrt(float(param)))
    elif family == "gamma":
        dist = stats.gamma(float(rational(m)) / 2, scale=float(param))
    else:
        raise InvalidParameter(f"unknown family {family!r}")
    edges = dist.ppf(np.linspace(0, 1, bins + 1))
    counts, _ = np.histogram(samples, bins=edges)
    return float(stats.chisquare(counts, np.full(bins, N / bins)).pvalue)
