import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from virasoro_ext.algebra import ModuleParams, VermaVector, basis, conformal_vector, vacuum_params
from virasoro_ext.correlators import (
    CorrelatorError,
    MultiLaurent,
    RationalCorrelator,
    RegionSpec,
    central_sum,
    check_n_weight_degree,
    expand_rational,
    matrix_coefficient,
    min_recentered_degree,
    projected_omega_action,
    projected_omega_product,
    projected_product_oracle,
    shifted_geometric_sum,
    truncated_series,
)
from virasoro_ext.structure import projection_split

F = Fraction
P = ModuleParams(F(1), F(1, 4))
SPLIT = projection_split(P)
VAC = vacuum_params(F(1))
INSERTIONS = {
    "1": VermaVector.lowest(VAC),
    "omega": conformal_vector(F(1)),
    "L3": VermaVector(VAC, {(3,): 1}),
    "L4": VermaVector(VAC, {(4,): 1}),
}


def gen_binom(a, k):
    """Generalised binomial coefficient binom(a, k) for integer a."""
    out = F(1)
    for i in range(k):
        out *= F(a - i, i + 1)
    return out


def window(series, cap):
    return {e: a for e, a in series.items() if all(abs(x) <= cap for x in e) and a}


@pytest.mark.parametrize("m_prime", [-5, -3, -2, 0, 1, 4])
@pytest.mark.parametrize("lower", ["m'+2", "0", "-1", 3, -4])
def test_shifted_geometric_sum_matches_series(m_prime, lower):
    cap = 12
    L = {"m'+2": m_prime + 2, "0": 0, "-1": -1}.get(lower, lower)
    direct = {}
    for n in range(L, cap + 1):
        if 2 * n - m_prime:
            direct[(-n - 2, n)] = F(2 * n - m_prime)
    got = expand_rational(shifted_geometric_sum(m_prime, lower), None, cap)
    assert window(got, cap) == window(direct, cap)


@pytest.mark.parametrize("c", [F(1), F(-22, 5), F(0), F(26)])
def test_central_sum_matches_series(c):
    cap = 14
    direct = {}
    for m in range(-1, cap + 3):
        val = F(m ** 3 - m, 12) * c
        if val:
            direct[(-m - 2, m - 2)] = val
    assert window(expand_rational(central_sum(c), None, cap), cap) == window(direct, cap)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_pair_pole_expansions_both_regions(p):
    r = RationalCorrelator.pair_pole(("z1", "z2"), 0, 1, p)
    cap = 10
    outer = {(-p - k, k): F(math.comb(p + k - 1, k)) for k in range(cap + 1)}
    inner = {(k, -p - k): F((-1) ** p * math.comb(p + k - 1, k)) for k in range(cap + 1)}
    assert window(expand_rational(r, RegionSpec((0, 1)), cap), cap) == window(outer, cap)
    assert window(expand_rational(r, RegionSpec((1, 0)), cap), cap) == window(inner, cap)


@pytest.mark.parametrize("a,b,p", [(0, 0, 2), (1, 0, 1), (2, 3, 4), (3, 1, 0), (1, 2, 3)])
def test_recentered_expansion_closed_form(a, b, p):
    # 1/(z1^a z2^b (z1 - z2)^p) with z1 = u + z2, |z2| > |u|
    num = MultiLaurent.monomial(("z1", "z2"), (-a, -b))
    r = RationalCorrelator(num, {(0, 1): p} if p else {})
    cap = 10
    expected = {(k - p, -a - b - k): gen_binom(-a, k) for k in range(2 * cap + 1)}
    got = expand_rational(r, RegionSpec.standard(2, recenter=1), cap)
    assert window(got, cap) == window(expected, cap)


def test_two_point_function_of_conformal_vector():
    for c in (F(1), F(1, 2), F(-2)):
        vac = ModuleParams(c, F(0))
        one = VermaVector.lowest(vac)
        om = conformal_vector(c)
        assert matrix_coefficient(one, [om, om], None, one, variables=("x1", "x2")) == central_sum(c).canonical()


def test_rational_correlator_json_and_evaluation():
    r = RationalCorrelator.pair_pole(("z1", "z2"), 0, 1, 3, F(2, 3))
    assert RationalCorrelator.from_json(r.to_json()) == r
    assert r.evaluate((F(3), F(1))) == F(2, 3) / 8


insertion_names = st.sampled_from(sorted(INSERTIONS))


@given(
    names=st.lists(insertion_names, min_size=1, max_size=2),
    w_level=st.integers(0, 3),
    dual_level=st.integers(0, 5),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_engine_matches_mode_sums(names, w_level, dual_level, data):
    w = VermaVector.monomial(P, data.draw(st.sampled_from(basis(w_level))))
    dual = VermaVector.monomial(P, data.draw(st.sampled_from(basis(dual_level))))
    pi = data.draw(st.one_of(st.none(), st.integers(0, len(names))))
    pairing = data.draw(st.sampled_from(["coordinate", "gram"]))
    ins = [INSERTIONS[n] for n in names]
    r = matrix_coefficient(dual, ins, pi, w, SPLIT, pairing=pairing)
    cap = 7
    assert expand_rational(r, None, cap) == truncated_series(dual, ins, pi, w, SPLIT, cap, pairing=pairing)


def test_engine_matches_mode_sums_three_insertions():
    ins = [INSERTIONS["omega"], INSERTIONS["L3"], INSERTIONS["omega"]]
    for w_mono in [(), (1,), (2,)]:
        w = VermaVector.monomial(P, w_mono)
        for d_mono in [(1, 1), (3,), (2, 1, 1)]:
            dual = VermaVector.monomial(P, d_mono)
            for pi in (None, 0, 2, 3):
                r = matrix_coefficient(dual, ins, pi, w, SPLIT)
                assert expand_rational(r, None, 5) == truncated_series(dual, ins, pi, w, SPLIT, 5)


def test_spectator_insertion_does_not_raise_pair_pole():
    om, l4 = INSERTIONS["omega"], INSERTIONS["L4"]
    for w_mono in [(), (1,), (2, 1)]:
        w = VermaVector.monomial(P, w_mono)
        for d_mono in basis(4):
            dual = VermaVector.monomial(P, d_mono)
            r = matrix_coefficient(dual, [om, om, l4], 2, w, SPLIT)
            assert r.pair_orders.get((0, 1), 0) <= 4


def test_projected_omega_action_base_case():
    lau = projected_omega_action(SPLIT, VermaVector.monomial(P, (1,)))
    assert dict(lau.terms) == {(-1,): SPLIT.s}
    with pytest.raises(CorrelatorError):
        projected_omega_action(SPLIT, VermaVector.monomial(P, (1, 1)))


@pytest.mark.parametrize("l,cap", [(1, 8), (2, 6), (3, 3)])
def test_projected_product_matches_oracle(l, cap):
    for lv in range(3):
        for mono in SPLIT.w1_basis(lv):
            w1 = VermaVector.monomial(P, mono)
            got = projected_omega_product(SPLIT, l, w1).expand(cap)
            assert got == projected_product_oracle(SPLIT, l, w1, cap)


def test_min_recentered_degree_matches_expansion():
    om, l3 = INSERTIONS["omega"], INSERTIONS["L3"]
    seen = 0
    for w_mono in SPLIT.w1_basis(1) + SPLIT.w1_basis(2):
        w = VermaVector.monomial(P, w_mono)
        for d_mono in basis(3) + basis(5):
            dual = VermaVector.monomial(P, d_mono)
            for ins in ([om, om], [l3, om]):
                r = matrix_coefficient(dual, ins, 1, w, SPLIT)
                if r.is_zero():
                    assert min_recentered_degree(r) is None
                    continue
                seen += 1
                series = expand_rational(r, RegionSpec.standard(2, recenter=1), 16)
                low = min(e[0] for e, a in series.items() if a)
                assert min_recentered_degree(r) == low
    assert seen > 0


def test_weight_degree_check():
    zero = RationalCorrelator.zero(("z1", "z2"))
    assert check_n_weight_degree(zero, 2, [2], 2)
    mild = RationalCorrelator.pair_pole(("z1", "z2"), 0, 1, 2)
    assert min_recentered_degree(mild) == -2
    assert check_n_weight_degree(mild, 2, [2], 2)
    harsh = RationalCorrelator.pair_pole(("z1", "z2"), 0, 1, 3)
    assert not check_n_weight_degree(harsh, 2, [2], 2)


def test_input_validation():
    one = VermaVector.lowest(P)
    om = INSERTIONS["omega"]
    with pytest.raises(CorrelatorError):
        matrix_coefficient(one, [om] * 4, None, one)
    with pytest.raises(CorrelatorError):
        matrix_coefficient(one, [om], 0, one)
    with pytest.raises(CorrelatorError):
        matrix_coefficient(one, [VermaVector(VAC, {(2, 2): 1})], None, one)
    other = VermaVector.lowest(ModuleParams(F(2), F(0)))
    with pytest.raises(CorrelatorError):
        matrix_coefficient(other, [om], None, one)
