from fractions import Fraction as F
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dualiscope.duality import duality_product, sip_d
from dualiscope.errors import InvalidPairing, InvalidParameter
from dualiscope.measures import (
    Binomial,
    DiscreteGamma,
    Gaussian,
    GammaProduct,
    certify_site_moment,
    chi_square_pvalue,
    convolve_check,
    d_moment,
    local_stationary,
    nu_pmf,
    nu_tail_bound,
    sample_product,
    sample_site,
    uniform_moment_bound,
)
from dualiscope.model import BEP, BMP, SEP, SIP


def test_nu_pmf_examples():
    assert nu_pmf(0, 2, F(1, 2)) == F(1, 2)
    assert nu_pmf(1, 2, F(1, 2)) == F(1, 4)
    assert nu_pmf(0, 1, 0) == 1 and nu_pmf(3, 1, 0) == 0
    assert nu_pmf(-1, 1, F(1, 3)) == 0
    with pytest.raises(InvalidParameter):
        nu_pmf(0, 1, 1)


@pytest.mark.parametrize("m", [F(1, 2), F(1), F(2), F(7, 3)])
def test_nu_pmf_sums_to_one(m):
    lam = F(1, 3)
    K = 80
    total = sum(float(nu_pmf(k, m, lam)) for k in range(K + 1))
    assert abs(total - 1) <= nu_tail_bound(K, m, lam) + 1e-14


def test_nu_matches_negative_binomial():
    for k in range(10):
        assert float(nu_pmf(k, 6, F(2, 5))) == pytest.approx(stats.nbinom.pmf(k, 3, 0.6), rel=1e-12)


@pytest.mark.parametrize("m,l", [(F(1, 2), F(1, 2)), (1, 2), (F(7, 3), F(1, 3))])
def test_convolution_identity(m, l):
    assert convolve_check(m, l, F(2, 5), 40) == 0


@pytest.mark.parametrize("k", range(5))
@pytest.mark.parametrize("m", [F(1, 2), F(2), F(7, 3)])
def test_site_moment_certificate(k, m):
    cert = certify_site_moment(k, m, F(1, 3))
    assert cert.certified
    assert 0 <= cert.tail_bound < 1e-12


def test_site_moment_float_check():
    # int d(k, .) d nu = rho^k against a direct sum
    m, lam = F(7, 3), F(1, 4)
    rho = lam / (1 - lam)
    for k in range(4):
        s = sum(float(sip_d(k, l, m) * nu_pmf(l, m, lam)) for l in range(200))
        assert s == pytest.approx(float(rho**k), rel=1e-12)


def test_d_moment_examples():
    spec = DiscreteGamma(1, [F(1, 2), F(2, 3)])
    assert spec.densities() == (1, 2)
    assert d_moment((1, 1), spec) == 2
    assert d_moment((0, 0), spec) == 1
    assert d_moment((2, 1), Binomial(2, [F(1, 2), F(1, 3)]), SEP(2)) == F(1, 12)
    assert GammaProduct(2, [3]).densities() == (F(3, 2),)
    with pytest.raises(InvalidPairing):
        d_moment((1, 1), spec, SIP(2))
    with pytest.raises(InvalidParameter):
        d_moment((3, 0), Binomial(2, [0, 0]))


def test_d_moment_matches_binomial_expectation():
    spec = Binomial(3, [F(1, 4), F(2, 3)])
    for xi in [(1, 0), (2, 1), (3, 3)]:
        direct = F(0)
        for a in range(4):
            for b in range(4):
                w = math.comb(3, a) * spec.profile[0] ** a * (1 - spec.profile[0]) ** (3 - a)
                w *= math.comb(3, b) * spec.profile[1] ** b * (1 - spec.profile[1]) ** (3 - b)
                direct += w * duality_product(xi, (a, b), SEP(3))
        assert direct == d_moment(xi, spec)


def test_uniform_moment_bound_examples():
    assert uniform_moment_bound(DiscreteGamma(1, [F(1, 3), F(1, 5)]), 3) == F(1, 8)
    assert uniform_moment_bound(Binomial(2, [1, F(1, 2)]), 4) == 1
    assert uniform_moment_bound(Gaussian([2, 1]), 2) == 4


def test_local_stationary_pairs():
    for fam, dens in [(SIP(F(1, 2)), [1, 2]), (SEP(2), [F(1, 3)]), (BMP(), [3]), (BEP(2), [F(1, 2)])]:
        spec = local_stationary(fam, dens)
        assert spec.pairs_with(fam)
        assert list(spec.densities()) == [F(d) for d in dens]


def test_measure_validation():
    with pytest.raises(InvalidParameter):
        DiscreteGamma(1, [1])
    with pytest.raises(InvalidParameter):
        Binomial(0, [F(1, 2)])
    with pytest.raises(InvalidParameter):
        Gaussian([-1])
    with pytest.raises(InvalidParameter):
        GammaProduct(None, [1])


# sampling --------------------------------------------------------------------


def test_sampler_means():
    rng = np.random.default_rng(11)
    draws = sample_site("discrete_gamma", F(1, 2), rng, size=100_000, m=2)
    assert abs(draws.mean() - 1) < 4 * draws.std() / math.sqrt(draws.size)
    assert np.all(sample_site("binomial", 1, rng, size=50, n=3) == 3)
    assert np.all(sample_site("discrete_gamma", 0, rng, size=5, m=1) == 0)
    g = sample_site("gamma", 2, rng, size=100_000, m=3)
    assert abs(g.mean() - 3) < 4 * g.std() / math.sqrt(g.size)


@pytest.mark.parametrize(
    "family,param,kw",
    [
        ("discrete_gamma", F(1, 3), {"m": F(1, 2)}),
        ("discrete_gamma", F(2, 5), {"m": 4}),
        ("binomial", F(1, 3), {"n": 4}),
        ("gaussian", 2, {}),
        ("gamma", F(1, 2), {"m": F(7, 3)}),
    ],
)
def test_samplers_pass_goodness_of_fit(family, param, kw):
    rng = np.random.default_rng(2024)
    draws = sample_site(family, param, rng, size=100_000, **kw)
    assert chi_square_pvalue(family, param, draws, **kw) > 1e-3


def test_chi_square_rejects_wrong_law():
    rng = np.random.default_rng(5)
    draws = rng.poisson(1.0, size=50_000)
    assert chi_square_pvalue("discrete_gamma", F(1, 2), draws, m=2) < 1e-6


def test_sample_product_shape():
    rng = np.random.default_rng(0)
    x = sample_product(Binomial(2, [0, 1, F(1, 2)]), rng)
    assert x.dtype == np.int64 and x[0] == 0 and x[1] == 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=3), st.sampled_from([F(1, 2), F(1), F(7, 3)]))
def test_d_moment_is_product_of_powers(xi, m):
    lams = [F(1, 5), F(1, 3), F(1, 2)][: len(xi)]
    spec = DiscreteGamma(m, lams)
    assert d_moment(xi, spec) == math.prod((l / (1 - l)) ** k for l, k in zip(lams, xi))
