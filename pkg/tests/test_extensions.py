from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from virasoro_ext import extensions as ext
from virasoro_ext.algebra import ModuleParams, VermaVector, basis, y_mode
from virasoro_ext.structure import projection_split

F = Fraction
CAP = 6
C = F(1)
OMEGA = VermaVector.monomial(ModuleParams(C, F(0)), (2,))
L3 = VermaVector.monomial(ModuleParams(C, F(0)), (3,))
L22 = VermaVector.monomial(ModuleParams(C, F(0)), (2, 2))
SAMPLES = [OMEGA, L3, L22]


@pytest.fixture(scope="module")
def split():
    return projection_split(ModuleParams(C, F(1, 4)))


@pytest.fixture(scope="module")
def nonsplit(split):
    return ext.verma_extension(split, "split", CAP)


@pytest.fixture(scope="module")
def nonsplit_F(nonsplit):
    return ext.extension_to_derivation(nonsplit, CAP)


@pytest.fixture(scope="module")
def compatible(split):
    return ext.verma_extension(split, "derivative-compatible", CAP)


@pytest.fixture(scope="module")
def compatible_F(compatible):
    return ext.extension_to_derivation(compatible, CAP)


def partitions(n):
    return len(basis(n)) if n >= 0 else 0


def test_base_mode_of_nonsplit_derivation(nonsplit_F):
    assert nonsplit_F.F(-1, (1,)) == {(): 1}
    assert nonsplit_F.F(-1, ()) == {}


def test_nonsplit_derivation_is_not_inner(nonsplit_F):
    assert ext.is_inner(nonsplit_F) is None


def test_split_extension_has_zero_derivation():
    F0 = ext.extension_to_derivation(ext.split_scenario(), CAP)
    assert F0.omega_modes == {}
    wit = ext.is_inner(F0)
    assert wit is not None and wit.is_zero()


def test_glued_dimensions(nonsplit_F):
    G = nonsplit_F.glued()
    for lv in range(CAP + 1):
        assert len(G.keys(lv)) == partitions(lv)
        assert len(nonsplit_F.w2.keys(lv - 2)) == partitions(lv - 2)


def test_glued_module_satisfies_brackets(nonsplit_F):
    assert ext.bracket_defects(nonsplit_F.glued(), 3, range(-3, 4)) == []
    assert ext.bracket_defects(nonsplit_F.w1, 4, range(-3, 4)) == []


def test_random_inner_derivations_are_detected(split):
    W1 = ext.QuotientModel(split)
    W2 = ext.VermaModel(ModuleParams(C, F(9, 4)))
    cap = 4
    coeff = st.fractions(min_value=-3, max_value=3, max_denominator=5)

    @given(data=st.data())
    @settings(max_examples=8, deadline=None)
    def check(data):
        phi = {}
        for lv in range(2, cap + 1):
            for key in W1.keys(lv):
                targets = W2.keys(lv - 2)
                vals = data.draw(st.lists(coeff, min_size=len(targets), max_size=len(targets)))
                phi[key] = dict(zip(targets, vals))
        Fi = ext.inner_derivation(W1, W2, phi, cap)
        wit = ext.is_inner(Fi)
        assert wit is not None
        assert ext.inner_derivation(W1, W2, wit.phi, cap).same_modes(Fi)

    check()


def test_shift_by_inner_stays_outer(split, nonsplit):
    cap = 4
    F_small = ext.extension_to_derivation(nonsplit, cap)
    W1, W2 = F_small.w1, F_small.w2
    phi = {key: {t: F(1) for t in W2.keys(lv - 2)} for lv in range(2, cap + 1) for key in W1.keys(lv)}
    shifted = F_small + ext.inner_derivation(W1, W2, phi, cap)
    assert not shifted.same_modes(F_small)
    assert ext.is_inner(shifted) is None
    assert ext.verify_cocycle(shifted, weak_associativity=False)["passed"]


def test_sections_are_equivalent(split, nonsplit, compatible):
    W1 = ext.QuotientModel(split)
    W2 = ext.VermaModel(ModuleParams(C, F(9, 4)))
    chi = ext.derivative_compatible_correction(split, W1, W2, nonsplit.iota, CAP)
    assert chi, "the split section is not derivative compatible, so chi must be nonzero"
    eq = ext.equivalence(nonsplit, compatible, CAP)
    assert eq is not None
    expected = {k: {t: -a for t, a in v.items()} for k, v in chi.items()}
    got = {k: v for k, v in eq.off_diagonal.phi.items() if v}
    assert got == expected


def test_self_equivalence_is_identity(nonsplit):
    eq = ext.equivalence(nonsplit, nonsplit, 4)
    assert eq is not None and eq.off_diagonal.is_zero()


def test_split_and_nonsplit_are_inequivalent(nonsplit):
    assert ext.equivalence(nonsplit, ext.split_scenario(), 4) is None


def test_compatible_section_modes(compatible_F, nonsplit_F):
    assert compatible_F.F(-2, ()) == {(): -1}
    assert all(not compatible_F.F(-1, k) for lv in range(CAP) for k in compatible_F.w1.keys(lv))
    assert ext.is_inner(compatible_F - nonsplit_F) is not None


@pytest.mark.parametrize("v", SAMPLES, ids=["omega", "L3", "L22"])
def test_glued_hom_matches_direct_route(nonsplit, nonsplit_F, v):
    src_cap = 2
    hom = nonsplit_F.hom(v, src_cap)
    ks = range(-6, 8)
    direct = ext.direct_hom(nonsplit, v, src_cap, ks)
    compared = 0
    for k in ks:
        for lv in range(src_cap + 1):
            for key in nonsplit_F.w1.keys(lv):
                if lv + v.level - k - 1 > CAP - 2:
                    continue
                compared += 1
                assert hom.apply(k, {key: F(1)}) == direct.get(k, {}).get(key, {})
    assert compared > 0


def delta(F_):
    return lambda key: F_.F(-1, key)


@pytest.mark.parametrize("v", [OMEGA, L3], ids=["omega", "L3"])
def test_derivative_identity(nonsplit_F, compatible_F, v):
    assert ext.d_derivative_defects(nonsplit_F, v, 3) != []
    assert ext.d_derivative_defects(nonsplit_F, v, 3, correction=delta(nonsplit_F)) == []
    assert ext.d_derivative_defects(compatible_F, v, 3) == []


def test_direct_sum_axioms():
    report = ext.verify_module_axioms(ext.split_scenario(), level_cap=4, w_levels=1)
    assert report["passed"], report["failures"][:3]


def test_glued_axioms_and_lowest_pole_orders(nonsplit_F):
    U = ext.derivation_to_extension(nonsplit_F)
    report = ext.verify_module_axioms(U, level_cap=4, w_levels=1)
    assert report["passed"], report["failures"][:3]
    lowest = [t for t in report["triples"] if t["w"] == repr(("1", ()))]
    assert lowest and all(t["p"] is not None and t["p"] <= 4 for t in lowest)


def pole_order_oracle(module, u, w):
    """1 + largest k with u_k w != 0, computed from vertex modes on the Verma vector."""
    top = None
    vec = VermaVector(module.params, w)
    for k in range(0, 12):
        if not y_mode(u, k, vec).is_zero():
            top = k
    return 0 if top is None else top + 1


@pytest.mark.parametrize("u", SAMPLES, ids=["omega", "L3", "L22"])
@pytest.mark.parametrize("v", SAMPLES, ids=["omega", "L3", "L22"])
@pytest.mark.parametrize("w", [(), (1,), (2,)])
def test_associativity_order_is_pole_order(u, v, w):
    M = ext.VermaModel(ModuleParams(C, F(1, 4)))
    wvec = {w: F(1)}
    assert ext.find_pole_order(M, u, v, wvec) == pole_order_oracle(M, u, wvec)


def corrupted(F_):
    modes = {k: dict(v) for k, v in F_.omega_modes.items()}
    key = (-2, (1,))
    modes.setdefault(key, {})
    modes[key][(1,)] = modes[key].get((1,), 0) + 1
    return ext.DerivationData(F_.w1, F_.w2, F_.level_cap, modes)


def test_corrupted_derivation_is_rejected(nonsplit_F):
    bad = corrupted(nonsplit_F)
    assert ext.verify_cocycle(bad, weak_associativity=False)["cocycle_identity_failures"]
    assert not ext.verify_cocycle(bad, w_levels=1)["passed"]
    with pytest.raises(ext.ExtensionError):
        ext.derivation_to_extension(bad)
    U = ext.derivation_to_extension(bad, check=False)
    assert not ext.verify_module_axioms(U, level_cap=3, w_levels=1)["passed"]


def test_cocycle_and_roundtrip(nonsplit, nonsplit_F, compatible, compatible_F):
    report = ext.verify_cocycle(nonsplit_F, w_levels=1)
    assert report["passed"] and not report["cocycle_identity_failures"]
    assert ext.roundtrip_check(F=nonsplit_F, ext=nonsplit, level_cap=CAP)["passed"]
    assert ext.roundtrip_check(F=compatible_F, ext=compatible, level_cap=CAP)["passed"]


def test_derivation_json_blocks(nonsplit_F):
    data = nonsplit_F.to_json()
    assert data["level_cap"] == CAP
    base = [b for b in data["omega_modes"] if b["m"] == -1 and b["source_level"] == 1]
    assert base and base[0]["source_basis"] == [[1]] and base[0]["target_basis"] == [[]]
    assert base[0]["matrix"] == [["1/1"]]
    for b in data["omega_modes"]:
        assert len(b["matrix"]) == len(b["target_basis"])
        assert all(len(row) == len(b["source_basis"]) for row in b["matrix"])


def test_mismatched_modules_rejected(nonsplit):
    other = projection_split(ModuleParams(F(1), F(1)))
    U2 = ext.verma_extension(other, "split", 3)
    with pytest.raises(ext.ExtensionError):
        ext.equivalence(nonsplit, U2, 3)
    with pytest.raises(ext.ExtensionError):
        ext.verma_extension(other, "bogus", 3)
