from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from virasoro_ext.algebra import (
    ModuleParams,
    QuadScalar,
    VermaVector,
    apply_mode,
    apply_word,
    as_scalar,
    basis,
    bracket,
    conformal_vector,
    index,
    split_monomial,
    standard_form,
    reassemble,
    vacuum,
    vacuum_basis,
    vacuum_params,
    y_mode,
)

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=12)


def partition_counts(n):
    """Partition numbers by Euler's pentagonal recurrence (independent of basis())."""
    p = [1] + [0] * n
    for m in range(1, n + 1):
        k, total = 1, 0
        while True:
            for g in (k * (3 * k - 1) // 2, k * (3 * k + 1) // 2):
                if g > m:
                    break
                total += (-1) ** (k + 1) * p[m - g]
            if k * (3 * k - 1) // 2 > m:
                break
            k += 1
        p[m] = total
    return p


def test_basis_sizes_match_partition_numbers():
    counts = partition_counts(12)
    assert [len(basis(n)) for n in range(13)] == counts


def test_basis_order_is_descending_lex():
    assert basis(3) == [(3,), (2, 1), (1, 1, 1)]


def test_vacuum_basis_has_no_unit_modes():
    assert vacuum_basis(4) == [(4,), (2, 2)]


@given(c=rationals, h=rationals, m=st.integers(-4, 4), n=st.integers(-4, 4), level=st.integers(0, 4), data=st.data())
@settings(max_examples=60, deadline=None)
def test_virasoro_relations_on_random_vectors(c, h, m, n, level, data):
    p = ModuleParams(c, h)
    monos = basis(level)
    coeffs = data.draw(st.lists(rationals, min_size=len(monos), max_size=len(monos)))
    v = VermaVector(p, dict(zip(monos, coeffs)))
    lhs = apply_mode(m, apply_mode(n, v)) - apply_mode(n, apply_mode(m, v))
    k, central = bracket(m, n, c)
    assert lhs == apply_mode(m + n, v).scale(k) + v.scale(central)


def test_lowest_vector_annihilated_and_weight():
    p = ModuleParams(Fraction(1), Fraction(1, 4))
    one = VermaVector.lowest(p)
    for m in range(1, 5):
        assert apply_mode(m, one).is_zero()
    assert apply_mode(0, one) == one.scale(Fraction(1, 4))


def test_level_two_norms():
    c, h = Fraction(3, 2), Fraction(2, 7)
    p = ModuleParams(c, h)
    v = VermaVector.monomial(p, (2,))
    assert apply_mode(2, v) == VermaVector.lowest(p).scale(4 * h + c / 2)


def test_apply_word_rightmost_first():
    p = ModuleParams(Fraction(1), Fraction(0))
    one = VermaVector.lowest(p)
    assert apply_word([-2, -1], one) == VermaVector.monomial(p, (2, 1))
    assert apply_word([-1, -2], one) == VermaVector(p, {(2, 1): 1, (3,): 1})


@given(c=rationals, h=rationals, data=st.data())
@settings(max_examples=30, deadline=None)
def test_json_roundtrip(c, h, data):
    p = ModuleParams(c, h)
    monos = basis(3) + basis(1)
    coeffs = data.draw(st.lists(rationals, min_size=len(monos), max_size=len(monos)))
    v = VermaVector(p, dict(zip(monos, coeffs)))
    assert VermaVector.from_json(v.to_json()) == v


def test_standard_form_and_index():
    p = ModuleParams(Fraction(1), Fraction(1, 4))
    v = VermaVector(p, {(3, 1, 1): 2, (2, 2): -1, (1,): 5})
    assert index(v) == 2
    assert index(VermaVector.zero(p)) == -1
    assert split_monomial((3, 2, 1, 1)) == ((3, 2), 2)
    assert reassemble(p, standard_form(v)) == v


def test_index_invariant_under_lowering_by_two_or_more():
    p = ModuleParams(Fraction(1), Fraction(1, 4))
    for mono in basis(4):
        v = VermaVector.monomial(p, mono)
        for m in (2, 3, 4):
            assert index(apply_mode(-m, v)) == index(v)


def test_as_scalar_parses_exactly():
    assert as_scalar("3/4") == Fraction(3, 4)
    assert as_scalar("-2") == Fraction(-2)
    with pytest.raises((ValueError, TypeError)):
        as_scalar(0.5)


@given(a=rationals, b=rationals, a2=rationals, b2=rationals, d=st.sampled_from([2, 3, 5, -1, -3, 7]))
@settings(max_examples=60, deadline=None)
def test_quadratic_field_arithmetic(a, b, a2, b2, d):
    x = QuadScalar(a, b, Fraction(d))
    y = QuadScalar(a2, b2, Fraction(d))
    assert (x * y) == QuadScalar(a * a2 + b * b2 * d, a * b2 + a2 * b, Fraction(d))
    assert x * x.conjugate() == QuadScalar(a * a - b * b * d, Fraction(0), Fraction(d))
    if not x.is_zero():
        assert (y / x) * x == y


def test_quadratic_sqrt():
    r = QuadScalar.sqrt_of(Fraction(8, 9))
    assert r * r == QuadScalar(Fraction(8, 9), Fraction(0), Fraction(2))
    assert QuadScalar.sqrt_of(Fraction(9, 4)).is_rational


class TestVertexModes:
    c = Fraction(1)
    p = ModuleParams(Fraction(1), Fraction(1, 4))

    def vectors(self):
        return [VermaVector.monomial(self.p, m) for lv in range(4) for m in basis(lv)]

    def test_identity_mode(self):
        one = vacuum(self.c)
        for w in self.vectors():
            assert y_mode(one, -1, w) == w
            assert y_mode(one, 0, w).is_zero()

    def test_omega_modes_are_virasoro_modes(self):
        om = conformal_vector(self.c)
        for w in self.vectors():
            for k in range(-3, 5):
                assert y_mode(om, k, w) == apply_mode(k - 1, w)

    def test_derivative_field(self):
        # Y(L(-1)omega, x) = d/dx Y(omega, x): (L(-3)1)_k = -k L(k-2)
        v = VermaVector(vacuum_params(self.c), {(3,): 1})
        for w in self.vectors():
            for k in range(-3, 5):
                assert y_mode(v, k, w) == apply_mode(k - 2, w).scale(-k)

    def test_normal_ordered_square(self):
        # (L(-2)L(-2)1)_k = sum over normal-ordered pairs L(a)L(b), a + b = k - 3
        v = VermaVector(vacuum_params(self.c), {(2, 2): 1})
        for w in self.vectors():
            for k in range(-2, 4):
                expected = VermaVector.zero(self.p)
                top = sum(w.levels()) + 8
                for a in range(-top, top + 1):
                    b = k - 3 - a
                    if a <= -2:
                        expected = expected + apply_mode(a, apply_mode(b, w))
                    else:
                        expected = expected + apply_mode(b, apply_mode(a, w))
                assert y_mode(v, k, w) == expected

    def test_rejects_unit_tail(self):
        with pytest.raises(ValueError):
            y_mode(VermaVector(vacuum_params(self.c), {(2, 1): 1}), 0, VermaVector.lowest(self.p))
