from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from virasoro_ext.algebra import ModuleParams, VermaVector, apply_mode, basis, index
from virasoro_ext.structure import (
    DirectSum,
    StructureError,
    Submodule,
    build_pi_W,
    classify_block,
    classify_direct_sum_submodule,
    find_singular,
    gram_matrix,
    is_singular,
    kac_determinant,
    kac_determinant_nonzero,
    projection_split,
    quotient_split,
    restrict_split,
    singular_levels,
)

F = Fraction
rationals = st.fractions(min_value=-4, max_value=4, max_denominator=9)


def partitions(n):
    return len(basis(n)) if n >= 0 else 0


def test_level_two_gram_closed_form():
    c, h = F(5, 3), F(-2, 7)
    g = gram_matrix(ModuleParams(c, h), 2)
    assert g.monomials == ((2,), (1, 1))
    assert [list(r) for r in g.entries] == [[4 * h + c / 2, 6 * h], [6 * h, 4 * h * (2 * h + 1)]]


@given(c=rationals, h=rationals, level=st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_gram_is_symmetric(c, h, level):
    e = gram_matrix(ModuleParams(c, h), level).entries
    assert all(e[i][j] == e[j][i] for i in range(len(e)) for j in range(len(e)))


def kac_product(t, h, level):
    """prod over rs <= level of (h - h_{r,s})^{p(level - rs)} with the standard t-parametrisation."""
    out = F(1)
    for r in range(1, level + 1):
        for s in range(1, level // r + 1):
            hrs = F(r * r - 1, 4) * t - F(r * s - 1, 2) + F(s * s - 1, 4) / t
            out *= (h - hrs) ** partitions(level - r * s)
    return out


@pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
def test_kac_determinant_matches_product_formula(level):
    ratios = set()
    for t in (F(2), F(3, 5), F(-7, 2), F(11, 3)):
        c = 13 - 6 * (t + 1 / t)
        for h in (F(1, 3), F(-5, 2), F(7)):
            prod = kac_product(t, h, level)
            assert prod != 0
            ratios.add(kac_determinant(ModuleParams(c, h), level) / prod)
    assert len(ratios) == 1 and ratios.pop() != 0


@given(c=rationals, level=st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_singular_vector_iff_determinant_vanishes(c, level):
    for h in (F(0), F(1, 2), c / 24):
        p = ModuleParams(c, h)
        zero = kac_determinant(p, level) == 0
        assert zero == any(find_singular(p, m) for m in range(1, level + 1))


def test_level_two_singular_vector_formula():
    t = F(3, 2)
    c = 13 - 6 * (t + 1 / t)
    for h in (F(3, 4) * t - F(1, 2), F(3, 4) / t - F(1, 2)):
        p = ModuleParams(c, h)
        found = find_singular(p, 2)
        assert len(found) == 1
        expected = VermaVector(p, {(1, 1): 1, (2,): -F(2) * (2 * h + 1) / 3})
        assert found[0].vector == expected


def test_reference_singular_vectors():
    p = ModuleParams(F(1), F(1, 4))
    assert find_singular(p, 2)[0].vector == VermaVector(p, {(1, 1): 1, (2,): -1})
    assert singular_levels(p, 6) == [2, 6]
    for sv in find_singular(p, 6):
        assert is_singular(sv.vector)
        assert sv.vector.coeff((1,) * 6) == 1


def test_determinant_certificate_seven_three():
    p = ModuleParams(F(7), F(3))
    assert classify_block(p, 20).case == "A"
    assert all(kac_determinant_nonzero(p, lv) for lv in range(1, 21))


def test_certificate_agrees_with_exact_determinant():
    for c, h in [(1, F(1, 4)), (F(1, 2), F(1, 16)), (7, 3), (F(-2), F(-1, 8))]:
        p = ModuleParams(F(c), F(h))
        for lv in range(1, 7):
            assert kac_determinant_nonzero(p, lv) == (kac_determinant(p, lv) != 0)


FROZEN_BLOCKS = {
    ("1", "1/4"): ("C", ["1/4", "9/4", "25/4", "49/4"]),
    ("1/2", "1/2"): ("D", ["1/2", "5/2", "7/2", "15/2"]),
    ("25", "0"): ("C", ["-8", "-3", "0", "1"]),
    ("1", "9/4"): ("C", ["1/4", "9/4", "25/4", "49/4"]),
    ("7", "3"): ("A", ["3"]),
    ("0", "0"): ("D", ["0", "1", "2", "5", "7", "12"]),
    ("-2", "0"): ("C", ["0", "1", "3", "6", "10"]),
    ("1/2", "1/16"): ("D", ["1/16", "33/16", "65/16", "161/16", "225/16"]),
    ("26", "1"): ("D", ["-11", "-1", "0", "1"]),
}


@pytest.mark.parametrize("c,h", sorted(FROZEN_BLOCKS))
def test_block_classification_frozen(c, h):
    report = classify_block(ModuleParams(F(c), F(h)), 12)
    case, members = FROZEN_BLOCKS[(c, h)]
    assert report.case == case
    assert list(report.members) == [F(m) for m in members]


@pytest.mark.parametrize("c,h", sorted(FROZEN_BLOCKS))
def test_block_members_match_singular_levels(c, h):
    # members above h within reach are exactly the weights of singular vectors
    p = ModuleParams(F(c), F(h))
    report = classify_block(p, 12)
    predicted = sorted(int(m - p.h) for m in report.members if 0 < m - p.h <= 6)
    assert singular_levels(p, 6) == predicted


def test_case_d_labelling():
    report = classify_block(ModuleParams(F(1, 2), F(1, 2)), 12)
    assert report.integer_points == ((-2, -1), (1, 3))
    assert report.h_odd_even == {0: F(1, 2), 1: F(5, 2)}
    assert report.h_prime == {0: F(15, 2), 1: F(7, 2)}
    assert all(not (r == 0 or s == 0) for r, s in report.integer_points)


def test_block_stable_under_cap():
    for c, h in FROZEN_BLOCKS:
        p = ModuleParams(F(c), F(h))
        assert classify_block(p, 12).case == classify_block(p, 20).case


def test_irrational_line_cases():
    # c = 2: nu irrational; generic h gives no integer point
    assert classify_block(ModuleParams(F(2), F(1, 3)), 12).case == "A"
    # h = 0 always has a point with rs = 1; its sign follows the branch of beta
    r = classify_block(ModuleParams(F(2), F(0)), 12)
    assert r.case == "B" and [a * b for a, b in r.integer_points] == [1] and r.members == (F(0), F(1))
    assert singular_levels(ModuleParams(F(2), F(0)), 4) == [1]


def test_block_d_rejected_by_split():
    with pytest.raises(StructureError):
        projection_split(ModuleParams(F(1, 2), F(1, 16)))


SPLIT_POINTS = [("1", "0", 1), ("1", "1/4", 2), ("1", "1", 3), ("1", "9/4", 4), ("-2", "-1/8", 2)]


@pytest.mark.parametrize("c,h,N", SPLIT_POINTS)
def test_split_dimensions(c, h, N):
    split = projection_split(ModuleParams(F(c), F(h)))
    assert split.N == N
    for lv in range(9):
        assert split.dims(lv) == (partitions(lv) - partitions(lv - N), partitions(lv - N))


@pytest.mark.parametrize("c,h,N", SPLIT_POINTS[:4])
def test_projection_properties_random(c, h, N):
    split = projection_split(ModuleParams(F(c), F(h)))
    p = split.params
    W2 = split.w2_submodule(7)

    @given(level=st.integers(0, 5), data=st.data())
    @settings(max_examples=25, deadline=None)
    def check(level, data):
        monos = basis(level)
        coeffs = data.draw(st.lists(rationals, min_size=len(monos), max_size=len(monos)))
        v = VermaVector(p, dict(zip(monos, coeffs)))
        pv = split.project(v)
        assert split.project(pv) == pv
        assert W2.contains(pv)
        assert split.in_w1(v - pv)
        for m in (2, 3):
            assert split.project(apply_mode(-m, v)) == apply_mode(-m, pv)

    check()


def test_projection_does_not_commute_with_raising_unit_mode():
    split = projection_split(ModuleParams(F(1), F(1, 4)))
    v = VermaVector.monomial(split.params, (1,))
    assert split.project(v).is_zero()
    assert not split.project(apply_mode(-1, v)).is_zero()


def test_projection_vanishes_below_split_index():
    split = projection_split(ModuleParams(F(1), F(1)))
    for lv in range(7):
        for mono in basis(lv):
            v = VermaVector.monomial(split.params, mono)
            if index(v) < split.N:
                assert split.project(v).is_zero()


class TestSubmoduleSplits:
    split = projection_split(ModuleParams(F(1), F(1, 4)))
    amb = DirectSum([split.params])
    top = split.params.h + 8

    def test_restrict_to_w2(self):
        r = restrict_split(self.split, self.split.w2_submodule(8))
        for lv in range(9):
            assert r.dims(lv) == (0, partitions(lv - 2), partitions(lv - 2))

    def test_restrict_to_whole(self):
        r = restrict_split(self.split, Submodule.whole(self.amb, self.top))
        for lv in range(9):
            assert r.dims(lv) == (partitions(lv) - partitions(lv - 2), partitions(lv - 2), partitions(lv))

    def test_quotient_by_w2(self):
        q = quotient_split(self.split, self.split.w2_submodule(8))
        for lv in range(9):
            d = partitions(lv) - partitions(lv - 2)
            assert q.dims(lv) == (d, 0, d)

    def test_quotient_by_level_six_submodule(self):
        t6 = find_singular(self.split.params, 6)[0].vector
        T = Submodule.generated(self.amb, [t6], self.top)
        q = quotient_split(self.split, T)
        for lv in range(9):
            t = partitions(lv - 6)
            assert q.dims(lv) == (partitions(lv) - partitions(lv - 2), partitions(lv - 2) - t, partitions(lv) - t)

    def test_non_submodule_rejected(self):
        p = self.split.params
        with pytest.raises(StructureError):
            Submodule.from_spans(self.amb, {p.h + 1: [VermaVector.monomial(p, (1,))]}, self.top)


class TestDirectSum:
    p0 = ModuleParams(F(1), F(1, 4))
    p1 = ModuleParams(F(1), F(9, 4))
    amb = DirectSum([p0, p1])

    def gens(self):
        s = find_singular(self.p0, 2)[0].vector
        one1 = VermaVector.lowest(self.p1)
        return s, one1

    def test_diagonal_submodule(self):
        s, one1 = self.gens()
        ech = classify_direct_sum_submodule(self.amb, [(s, one1)], 8)
        # both components carry weight 9/4; ties go to the smaller index
        assert ech.order[0] == 0 and ech.levels[0] == 2
        assert ech.levels[1] is None

    def test_block_diagonal_projection_is_componentwise(self):
        s, _ = self.gens()
        t = find_singular(self.p1, 4)[0].vector
        z0, z1 = VermaVector.zero(self.p0), VermaVector.zero(self.p1)
        ech = classify_direct_sum_submodule(self.amb, [(s, z1), (z0, t)], 8)
        P = build_pi_W(ech)
        split0 = projection_split(self.p0)
        split1 = projection_split(self.p1)
        for lv in range(5):
            for mono in basis(lv):
                v0 = VermaVector.monomial(self.p0, mono)
                v1 = VermaVector.monomial(self.p1, mono)
                assert P.project((v0, v1)) == (split0.project(v0), split1.project(v1))

    def test_random_projection_is_idempotent(self):
        s, one1 = self.gens()
        ech = classify_direct_sum_submodule(self.amb, [(s, one1)], 8)
        P = build_pi_W(ech)
        S = Submodule.generated(self.amb, [(s, one1)], self.amb.min_weight + 8)

        @given(l0=st.integers(0, 4), data=st.data())
        @settings(max_examples=25, deadline=None)
        def check(l0, data):
            m0 = basis(l0 + 2)
            m1 = basis(l0)
            c0 = data.draw(st.lists(rationals, min_size=len(m0), max_size=len(m0)))
            c1 = data.draw(st.lists(rationals, min_size=len(m1), max_size=len(m1)))
            v = (VermaVector(self.p0, dict(zip(m0, c0))), VermaVector(self.p1, dict(zip(m1, c1))))
            pv = P.project(v)
            assert P.project(pv) == pv
            assert S.contains(pv)
            for m in (2, 3):
                assert P.project(self.amb.apply_mode(-m, v)) == self.amb.apply_mode(-m, pv)

        check()
