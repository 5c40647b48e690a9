from fractions import Fraction as F
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualiscope.engine import build_sector_generator, semigroup_apply
from dualiscope.errors import InvalidConfig, InvalidParameter, PreconditionError
from dualiscope.inequalities import (
    PDFunction,
    boundary_correlation_check,
    comparison_batch,
    comparison_check,
    density_profile,
    diffusion_correlation_check,
    dual_moment,
    gram_indicator_function,
    is_positive_definite,
    meeting_probability_report,
    merge_reports,
    pairwise_kernel_function,
    power_in_duality_basis,
    product_function,
    random_pd_function,
    second_factorial_residual,
    sep_correlation_check,
    sip_correlation_check,
    steady_state_moment,
)
from dualiscope.measures import DiscreteGamma, nu_pmf
from dualiscope.model import BEP, BMP, SIP, SiteGraph

ONE = SiteGraph((0, 1), [[0, 1], [1, 0]])
P3 = SiteGraph.path(3)


# positive definiteness -------------------------------------------------------


def test_pd_examples():
    I = PDFunction(np.eye(3), True)
    assert is_positive_definite(I)
    assert not is_positive_definite(PDFunction(-np.eye(3), True))
    exact = PDFunction.from_callable(lambda x: 1 if x[0] == x[1] else 0, 3, 2)
    v = is_positive_definite(exact)
    assert v and v.exact


def test_exact_pd_catches_tiny_negative():
    eps = F(1, 10**30)
    f = PDFunction.from_callable(lambda x: [[1, 1], [1, 1 - eps]][x[0]][x[1]], 2, 2)
    assert not is_positive_definite(f)


def test_asymmetric_table_is_not_pd():
    f = PDFunction(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert not f.symmetric
    assert not is_positive_definite(f)
    with pytest.raises(InvalidParameter):
        PDFunction(np.array([[1.0, 0.5], [0.0, 1.0]]), True)


def test_pd_shape_checks():
    with pytest.raises(InvalidConfig):
        is_positive_definite(PDFunction(np.eye(2), True), P3)
    with pytest.raises(InvalidConfig):
        is_positive_definite(PDFunction(np.eye(3), True), n=3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3))
def test_random_functions_are_pd(seed, S, n):
    f = random_pd_function(np.random.default_rng(seed), S, n)
    assert f.symmetric and f.n == n and f.num_sites == S
    assert is_positive_definite(f)


def test_builders():
    assert gram_indicator_function([1, 2], 3).values[1, 1, 1] == 2
    assert product_function([F(1, 2), 3], 2).values[0, 1] == F(3, 2)
    k = pairwise_kernel_function(np.array([[2.0, 1.0], [1.0, 2.0]]), 3)
    assert k.values[0, 0, 1] == 2.0 * 1.0 * 1.0


# comparison ------------------------------------------------------------------


def test_comparison_at_time_zero_is_equality():
    f = product_function([1.0, 2.0, 3.0], 2)
    rep = comparison_check(P3, 2, 2, 4, f, 0.0)
    assert rep.worst_margin == 0 and rep.verdict


@pytest.mark.parametrize("a,b", [(1, 4), (2, 4), (4, 4), (1, -1), (2, -1), (3, -1)])
def test_comparison_holds_for_random_functions(a, b):
    rng = np.random.default_rng(a * 10 + b)
    fs = [random_pd_function(rng, 3, 2) for _ in range(20)]
    for t in (0.1, 1.0):
        rep = comparison_batch(P3, 2, a, b, fs, t)
        assert rep.verdict, rep.worst_margin


def test_comparison_is_strict_for_meeting_indicator():
    f = gram_indicator_function([1, 1, 1], 2)
    up = comparison_check(P3, 2, 2, 4, f, 0.5)
    down = comparison_check(P3, 2, 1, -1, f, 0.5)
    assert up.worst_margin > 0 and down.worst_margin >= 0


def test_comparison_rejects_non_pd():
    f = PDFunction(-np.eye(3), True)
    with pytest.raises(PreconditionError):
        comparison_check(P3, 2, 1, 1, f, 1.0)
    with pytest.raises(PreconditionError):
        comparison_check(P3, 2, 1, 1, PDFunction(np.array([[1.0, 0, 0], [0.5, 1, 0], [0, 0, 1]])), 1.0)


# correlations ----------------------------------------------------------------


def test_sip_correlation_examples():
    rep = sip_correlation_check(P3, 1, [F(1, 5), F(1, 3), F(1, 2)], (0, 2), 0.5)
    assert rep.verdict and rep.worst_margin > 0
    flat = sip_correlation_check(P3, 1, [F(1, 3)] * 3, (0, 2), 0.5)
    assert abs(flat.worst_margin) <= 1e-10


def test_sep_correlation_examples():
    rep = sep_correlation_check(P3, 1, [F(1, 5), F(1, 2), F(4, 5)], (0, 2), 0.5)
    assert rep.verdict and rep.worst_margin > 0
    with pytest.raises(InvalidConfig):
        sep_correlation_check(P3, 1, [F(1, 2)] * 3, (0, 0), 0.5)


@pytest.mark.parametrize("family", [BMP(), BEP(F(1, 2)), BEP(2)])
def test_diffusion_correlation(family):
    rep = diffusion_correlation_check(family, P3, [1, 2, 5], (0, 1, 2), 0.3)
    assert rep.verdict


def test_variance_at_time_zero():
    # the discrete gamma variance is (m/2) lam / (1 - lam)^2
    m, lam = F(7, 3), F(1, 4)
    rep = sip_correlation_check(ONE, m, [lam, lam], (0, 0), 0.0)
    assert rep.details["covariance"] == pytest.approx(float(m / 2 * lam / (1 - lam) ** 2), rel=1e-12)


def test_covariance_against_forward_evolution():
    m, lams, t = F(1), [F(1, 10), F(1, 3)], 0.4
    rep = sip_correlation_check(ONE, m, lams, (0, 1), t)
    # forward oracle: average over initial states truncated at 40 particles
    total_xy = total_x = total_y = 0.0
    for K in range(41):
        G = build_sector_generator(SIP(m), ONE, K)
        ev = semigroup_apply(G, np.column_stack([G.vector(lambda s: s[0] * s[1]), G.vector(lambda s: s[0]),
                                                 G.vector(lambda s: s[1])]), t).values
        for i, s in enumerate(G.states):
            w = float(nu_pmf(s[0], m, lams[0]) * nu_pmf(s[1], m, lams[1]))
            total_xy += w * ev[i, 0]
            total_x += w * ev[i, 1]
            total_y += w * ev[i, 2]
    assert rep.details["covariance"] == pytest.approx(total_xy - total_x * total_y, abs=1e-9)
    assert rep.details["covariance"] > 0


def test_power_basis_examples():
    assert power_in_duality_basis(1, 2) == {1: 1}
    assert power_in_duality_basis(2, 2) == {1: 1, 2: 2}


def test_dual_moment_examples():
    spec = DiscreteGamma(1, [F(1, 3)] * 3)
    assert dual_moment(SIP(1), spec, (), 1.0, P3) == 1.0
    assert dual_moment(SIP(1), spec, (0, 1), 2.0, P3) == pytest.approx(0.25, abs=1e-12)


# boundary-driven steady state ------------------------------------------------


def test_boundary_equilibrium_gives_equality():
    rep = boundary_correlation_check(3, 1, F(1, 3), F(1, 3), (1, 3))
    assert rep.worst_margin == 0 and rep.details["equality"]


@pytest.mark.parametrize("m", [F(1, 2), F(1), F(2)])
def test_boundary_off_equilibrium_is_strict(m):
    rep = boundary_correlation_check(3, m, F(1, 5), F(2, 3), (1, 2))
    assert rep.worst_margin > 0


def test_steady_state_single_site():
    # N = 1: the two reservoirs combine
    v = steady_state_moment(1, F(1, 2), F(1, 3), F(1, 2), (1,))
    assert min(F(1, 2), F(1)) < v < max(F(1, 2), F(1))
    with pytest.raises(InvalidConfig):
        steady_state_moment(2, 1, F(1, 3), F(1, 2), (3,))


def test_profile_examples():
    half = density_profile(4, F(1, 2), F(1, 3), F(1, 2))
    assert half.affine and half.max_deviation == 0
    one = density_profile(2, F(1), 0, F(1, 2))
    assert one.affine
    assert one.values == [F(2, 5), F(3, 5)]
    assert one.reference == [F(1, 3), F(2, 3)]


@pytest.mark.parametrize("m", [F(1, 2), F(1), F(2), F(7, 3)])
def test_profile_matches_closed_form(m):
    N = 4
    rep = density_profile(N, m, 0, F(1, 2))
    assert rep.values == [(2 * m - 1 + i) / (N + 4 * m - 1) for i in range(1, N + 1)]


# meeting probabilities -------------------------------------------------------


@pytest.mark.parametrize("l", range(8))
@pytest.mark.parametrize("m", [F(1, 2), F(1), F(7, 3)])
def test_second_factorial_identity(m, l):
    assert second_factorial_residual(m, l) == 0


def test_meeting_chain_holds():
    rep = meeting_probability_report(SiteGraph.cycle(4), F(1), (0, 2), [0.1, 1.0])
    assert rep.verdict
    for row in rep.rows:
        assert row["collision"] <= row["meeting_bound"] + 1e-12
    with pytest.raises(InvalidParameter):
        meeting_probability_report(P3, 1, (0,), [1.0])


def test_merge_reports():
    a = boundary_correlation_check(2, 1, F(1, 3), F(1, 2), (1, 2))
    b = boundary_correlation_check(2, 1, F(1, 3), F(1, 3), (1, 2))
    merged = merge_reports("both", [a, b])
    assert merged.cases == 2 and merged.worst_margin == 0 and merged.verdict
    assert math.isfinite(float(merged.worst_margin))
