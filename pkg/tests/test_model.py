from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from dualiscope.errors import InvalidConfig, InvalidMove, InvalidSpec
from dualiscope.model import (
    BEP,
    BMP,
    IRW,
    SEP,
    SIP,
    BoundaryDrivenSIP,
    GeneralizedAB,
    SiteGraph,
    apply_move,
    boundary_birth_rate,
    boundary_death_rate,
    enumerate_moves,
    graph_from_json,
    labeled_jump_rate,
    sector,
    process_from_json,
    process_to_json,
    sep_jump_rate,
    sip_jump_rate,
    validate_kernel,
)
from dualiscope.measures import nu_pmf

TWO = SiteGraph.path(2)


def kernel_graph(rows):
    return SiteGraph(tuple(range(len(rows))), rows)


# kernels -------------------------------------------------------------------


def test_two_site_kernel_is_valid():
    assert validate_kernel(kernel_graph([[0, 1], [1, 0]])) == []


def test_asymmetric_kernel_reports_symmetry():
    v = validate_kernel(kernel_graph([[0, 1], [F(1, 2), 0]]))
    assert [x.kind for x in v] == ["symmetry"]
    assert str(v[0]).startswith("symmetry violation at (0, 1)")


def test_diagonal_entry_reported():
    h = F(1, 2)
    v = validate_kernel(kernel_graph([[F(1, 10), h, 0], [h, 0, h], [0, h, 0]]))
    assert [(x.kind, x.where) for x in v] == [("diagonal", (0,))]


def test_disconnected_and_oversized_rows():
    v = validate_kernel(kernel_graph([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))
    assert [x.kind for x in v] == ["connectivity"]
    v = validate_kernel(kernel_graph([[0, 2], [2, 0]]))
    assert {x.kind for x in v} == {"row-sum"}


@pytest.mark.parametrize("g", [SiteGraph.path(2), SiteGraph.path(5), SiteGraph.cycle(6), SiteGraph.complete(4)])
def test_builtin_graphs_are_valid(g):
    assert validate_kernel(g) == []


def test_graph_json_forms():
    g = graph_from_json({"kernel": [["0", "1/2"], ["1/2", "0"]]})
    assert g.p(0, 1) == F(1, 2)
    assert graph_from_json({"graph": {"kind": "triangle"}}).size == 3
    with pytest.raises(InvalidConfig):
        graph_from_json({"graph": {"kind": "star", "size": 3}})


# rates ---------------------------------------------------------------------


def test_sip_rate_examples():
    half = kernel_graph([[0, F(1, 2)], [F(1, 2), 0]])
    assert sip_jump_rate((1, 0), 0, 1, 2, half) == 2
    assert sip_jump_rate((0, 3), 0, 1, 1, TWO) == 0
    assert sip_jump_rate((2, 3), 0, 1, 1, kernel_graph([[0, 1], [1, 0]])) == 28
    with pytest.raises(InvalidMove):
        sip_jump_rate((1, 0), 0, 0, 1, TWO)


def test_sep_rate_examples():
    one = kernel_graph([[0, 1], [1, 0]])
    half = kernel_graph([[0, F(1, 2)], [F(1, 2), 0]])
    quarter = kernel_graph([[0, F(1, 4)], [F(1, 4), 0]])
    assert sep_jump_rate((1, 2), 0, 1, 2, one) == 0
    assert sep_jump_rate((1, 0), 0, 1, 1, half) == F(1, 2)
    assert sep_jump_rate((2, 1), 0, 1, 3, quarter) == 1
    with pytest.raises(InvalidConfig):
        sep_jump_rate((4, 0), 0, 1, 3, one)


def test_labeled_rate_examples():
    one = kernel_graph([[0, 1], [1, 0]])
    assert labeled_jump_rate((0, 0), 0, 1, 2, 4, one) == 2
    assert labeled_jump_rate((0, 1), 0, 1, 2, 4, one) == 6
    assert labeled_jump_rate((0, 1), 0, 1, 1, -1, one) == 0
    with pytest.raises(InvalidSpec):
        labeled_jump_rate((0, 1, 1), 0, 1, 1, -1, one)


def test_boundary_rates():
    assert boundary_death_rate(0, F(1, 3)) == 0
    assert boundary_birth_rate(0, 2, F(1, 2)) == 1
    assert boundary_death_rate(1, F(1, 2)) == 2
    lam = F(1, 2)
    assert boundary_birth_rate(0, 2, lam) * nu_pmf(0, 2, lam) == boundary_death_rate(1, lam) * nu_pmf(1, 2, lam) == F(1, 2)
    with pytest.raises(InvalidSpec):
        boundary_birth_rate(0, 1, 1)


def test_apply_move():
    assert apply_move((2, 0), 0, 1) == (1, 1)
    assert apply_move((1, 1), 0, 1) == (0, 2)
    assert apply_move(apply_move((3, 1), 0, 1), 1, 0) == (3, 1)
    with pytest.raises(InvalidMove):
        apply_move((0, 1), 0, 1)


# specs ---------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        SIP(0)
    with pytest.raises(InvalidSpec):
        SEP(0)
    with pytest.raises(InvalidSpec):
        GeneralizedAB(3, -2)
    GeneralizedAB(4, -2)
    with pytest.raises(InvalidSpec):
        BoundaryDrivenSIP(1, F(1, 2), 1, 3)


def test_process_json_roundtrip():
    for spec in (SIP(F(1, 2)), SEP(3), GeneralizedAB(2, 4), IRW(2), BoundaryDrivenSIP(1, F(1, 3), F(1, 2), 4), BEP(2)):
        assert process_from_json(process_to_json(spec)) == spec
    assert process_from_json({"variant": "BMP"}) == BMP()
    with pytest.raises(InvalidConfig, match="m"):
        process_from_json({"variant": "SIP"})


# moves ---------------------------------------------------------------------


def test_enumerate_moves_examples():
    one = kernel_graph([[0, 1], [1, 0]])
    assert list(enumerate_moves(SIP(1), (1, 0), one)) == [((0, 1), 2)]
    assert not enumerate_moves(SEP(1), (1, 1), one)
    assert not enumerate_moves(BoundaryDrivenSIP(1, 0, 0, 2), (0, 0))
    with pytest.raises(InvalidConfig):
        enumerate_moves(SEP(1), (2, 0), one)


def test_boundary_moves_touch_only_ends():
    spec = BoundaryDrivenSIP(1, F(1, 3), F(1, 2), 4)
    eta = (1, 2, 0, 3)
    for target, rate in enumerate_moves(spec, eta):
        assert rate > 0
        diff = [b - a for a, b in zip(eta, target)]
        if sum(diff) != 0:
            (site,) = [i for i, d in enumerate(diff) if d]
            assert site in (0, 3) and abs(diff[site]) == 1


states = st.lists(st.integers(0, 4), min_size=3, max_size=4)


@settings(max_examples=60, deadline=None)
@given(states, st.sampled_from([F(1, 2), F(1), F(2), F(7, 3)]))
def test_sip_moves_conserve_and_match_labeled_rates(eta, m):
    g = SiteGraph.path(len(eta))
    eta = tuple(eta)
    moves = enumerate_moves(SIP(m), eta, g)
    assert all(r > 0 and sum(t) == sum(eta) for t, r in moves)
    positions = [x for x, k in enumerate(eta) for _ in range(k)]
    for target, rate in moves:
        x = next(i for i in range(len(eta)) if target[i] < eta[i])
        y = next(i for i in range(len(eta)) if target[i] > eta[i])
        labeled = sum(labeled_jump_rate(positions, i, y, 2 * m, 4, g) for i, p in enumerate(positions) if p == x)
        assert labeled == rate == sip_jump_rate(eta, x, y, m, g)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.sampled_from([F(1, 2), F(1), F(3), F(7, 3)]))
def test_sip_rate_is_sep_form_with_sign_flip(kx, ky, m):
    # 2 k_x (m + 2 k_y) = 4 k_x (m/2 + k_y)
    g = kernel_graph([[0, 1], [1, 0]])
    assert sip_jump_rate((kx, ky), 0, 1, m, g) == 4 * kx * (m / 2 + ky)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=4), st.integers(1, 3))
def test_sep_labeled_rate_sign(positions, n):
    g = SiteGraph.complete(3)
    positions = [p % 3 for p in positions]
    for i, x in enumerate(positions):
        for y in range(3):
            if y == x:
                continue
            if positions.count(y) > n:
                with pytest.raises(InvalidSpec):
                    labeled_jump_rate(positions, i, y, n, -1, g)
            else:
                assert labeled_jump_rate(positions, i, y, n, -1, g) >= 0


def test_sector_enumeration():
    assert sorted(sector(2, 2)) == [(0, 2), (1, 1), (2, 0)]
    assert sector(3, 4, cap=1) == []
