"""Acceptance suites: exact property checks shared by the test-suite and the CLI."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

from . import extensions as ext
from .algebra import (
    ModuleParams,
    VermaVector,
    apply_mode,
    apply_word,
    basis,
    bracket,
    conformal_vector,
    index,
    vacuum_params,
    vacuum_reduce,
)
from .correlators import (
    RationalCorrelator,
    check_n_weight_degree,
    expand_rational,
    matrix_coefficients,
    min_recentered_degree,
    projected_omega_action,
    truncated_series_family,
)
from .structure import (
    DirectSum,
    Submodule,
    build_pi_W,
    classify_direct_sum_submodule,
    find_singular,
    kac_determinant,
    projection_split,
    quotient_split,
    restrict_split,
)

REFERENCE_MODULE = ModuleParams(Fraction(1), Fraction(1, 4))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float = 0.0
    details: Dict[str, object] = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.name} ({self.seconds:.1f}s)"

    def to_json(self) -> Dict[str, object]:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "seconds": round(self.seconds, 3), "details": self.details}


def _split():
    return projection_split(REFERENCE_MODULE)


def _vector_bracket_ok(m: int, n: int, v: VermaVector) -> bool:
    lhs = apply_mode(m, apply_mode(n, v)) - apply_mode(n, apply_mode(m, v))
    coef, central = bracket(m, n, v.params.c)
    rhs = apply_mode(m + n, v).scale(coef) + v.scale(central)
    return lhs == rhs


def criterion_1(max_level: int = 8, mode_range: int = 6) -> CriterionResult:
    p = REFERENCE_MODULE
    failures = []
    checked = 0
    for lv in range(max_level + 1):
        for mono in basis(lv):
            v = VermaVector.monomial(p, mono)
            for m in range(-mode_range, mode_range + 1):
                for n in range(-mode_range, mode_range + 1):
                    checked += 1
                    if not _vector_bracket_ok(m, n, v):
                        failures.append([m, n, list(mono)])
    return CriterionResult(1, "Virasoro relations on M(1,1/4)", not failures, details={
        "checked": checked, "failures": failures[:10]})


def criterion_2() -> CriterionResult:
    p = REFERENCE_MODULE
    found = find_singular(p, 2)
    expected = VermaVector(p, {(1, 1): 1, (2,): -1})
    ok_vec = len(found) == 1 and found[0].vector == expected
    empty = {lv: find_singular(p, lv) == [] for lv in (1, 3)}
    det = kac_determinant(p, 2)
    passed = ok_vec and all(empty.values()) and det == 0
    return CriterionResult(2, "level-2 singular vector of M(1,1/4)", passed, details={
        "singular": [f.vector.to_json() for f in found], "empty_levels": empty, "kac_determinant_2": str(det)})


KAC_GRID = [
    ("1", "1/4"), ("1", "0"), ("1", "1"), ("1", "9/4"), ("1/2", "1/2"), ("1/2", "1/16"), ("1/2", "0"),
    ("0", "0"), ("0", "1"), ("0", "2"), ("-2", "0"), ("-2", "-1/8"), ("25", "0"), ("25", "-1"),
    ("7", "3"), ("2", "1/3"), ("3/2", "5/7"), ("-1/2", "1/5"), ("26", "1"), ("1", "3/5"),
]


def criterion_3(max_level: int = 6) -> CriterionResult:
    rows = []
    passed = True
    for c, h in KAC_GRID:
        p = ModuleParams(Fraction(c), Fraction(h))
        first_singular: Optional[int] = None
        for lv in range(1, max_level + 1):
            if first_singular is None and find_singular(p, lv):
                first_singular = lv
            zero = kac_determinant(p, lv) == 0
            consistent = zero == (first_singular is not None)
            passed &= consistent
            if not consistent:
                rows.append({"c": c, "h": h, "level": lv, "det_zero": zero, "first_singular": first_singular})
        rows.append({"c": c, "h": h, "first_singular": first_singular})
    return CriterionResult(3, "Kac determinant vs singular vectors on 20 points", passed, details={"grid": rows})


def criterion_4(max_level: int = 8) -> CriterionResult:
    split = _split()
    p = split.params
    bad: List[str] = []
    for lv in range(max_level + 1):
        for mono in basis(lv):
            v = VermaVector.monomial(p, mono)
            pv = split.project(v)
            if split.project(pv) != pv:
                bad.append(f"idempotence {mono}")
            if index(v) < split.N and not pv.is_zero():
                bad.append(f"index {mono}")
            for m in range(2, 7):
                if split.project(apply_mode(-m, v)) != apply_mode(-m, pv):
                    bad.append(f"L(-{m}) {mono}")
    return CriterionResult(4, "projection laws at (1,1/4)", not bad, details={"N": split.N, "failures": bad[:10]})


def criterion_5(max_level: int = 8) -> CriterionResult:
    split = _split()
    p = split.params
    bad = []
    nonzero = 0
    for lv in range(max_level + 1):
        for mono in split.w1_basis(lv):
            w1 = VermaVector.monomial(p, mono)
            lau = projected_omega_action(split, w1)
            # finiteness: the modes m <= -2 and m > level contribute nothing after projecting
            for m in list(range(-8, -1)) + list(range(lv + 1, lv + 4)):
                if not split.project(apply_mode(m, w1)).is_zero():
                    bad.append(f"mode {m} on {mono}")
            is_nonzero = not lau.is_zero()
            nonzero += is_nonzero
            if is_nonzero != (index(w1) == split.N - 1):
                bad.append(f"nonzero pattern {mono}")
    base = projected_omega_action(split, VermaVector.monomial(p, (1,)))
    base_ok = dict(base.terms) == {(-1,): split.s}
    return CriterionResult(5, "projected omega action on W1 (base case)", not bad and base_ok, details={
        "nonzero_vectors": nonzero, "failures": bad[:10], "L(-1)1": {str(k): v.to_json() for k, v in base.terms.items()}})


def criterion_6(max_l: int = 3, max_w_level: int = 4, negative_modes=(-2, -3), margin: int = 3) -> CriterionResult:
    """Index bound and finiteness of nonzero projected images, enumerated on W1 vectors prefix * L(-1)^n, n < N."""
    split = _split()
    p = split.params
    bad = []
    patterns = 0
    hits = 0
    for lw in range(max_w_level + 1):
        for mono in split.w1_basis(lw):
            w = VermaVector.monomial(p, mono)
            n = index(w)
            for l in range(1, max_l + 1):
                for pattern in itertools.product((True, False), repeat=l):
                    npos = sum(pattern)
                    if npos == 0:
                        continue
                    for negs in itertools.product(negative_modes, repeat=l - npos):
                        patterns += 1
                        a_priori = lw + sum(-m for m in negs) + npos
                        found = set()
                        for pos in itertools.product(range(-1, a_priori + margin + 1), repeat=npos):
                            it_pos, it_neg = iter(pos), iter(negs)
                            word = [next(it_pos) if flag else next(it_neg) for flag in pattern]
                            v = apply_word(word, w)
                            if v.is_zero():
                                continue
                            if index(v) > n + npos:
                                bad.append(f"index bound: {word} on {mono}")
                            if not split.project(v).is_zero():
                                found.add(pos)
                        hits += len(found)
                        if any(max(t) > a_priori for t in found):
                            bad.append(f"nonzero beyond the a-priori bound: pattern {pattern} negs {negs} on {mono}")
    return CriterionResult(6, "finite-sum bound by exhaustive enumeration", not bad, details={
        "patterns": patterns, "nonzero_tuples": hits, "failures": bad[:10]})


def criterion_7(max_level: int = 6, degree: int = 10) -> CriterionResult:
    split = _split()
    p = split.params
    c = p.c
    omega = conformal_vector(c)
    l3 = VermaVector(vacuum_params(c), {(3,): 1})
    duals = [VermaVector.monomial(p, m) for lv in range(max_level + 1) for m in basis(lv)]
    configs = [list(t) for k in (1, 2) for t in itertools.product((omega, l3), repeat=k)]
    bad = []
    compared = 0
    pole_ok = True
    for lw in range(max_level + 1):
        for mono in basis(lw):
            w = VermaVector.monomial(p, mono)
            for ins in configs:
                for pi in range(len(ins) + 1):
                    rs = matrix_coefficients(duals, ins, pi, w, split)
                    series = truncated_series_family(duals, ins, pi, w, split, degree)
                    for d, r, s in zip(duals, rs, series):
                        pole_ok &= all(0 <= i < j < r.n for (i, j) in r.pair_orders)
                        compared += 1
                        if expand_rational(r, None, degree) != s:
                            bad.append({"w": list(mono), "dual": [list(k) for k in d.terms], "pi": pi})
    # the central constant: two-point function of omega in the vacuum Verma module
    vac = ModuleParams(c, Fraction(0))
    one = VermaVector.lowest(vac)
    two_point = matrix_coefficients([one], [omega, omega], None, one)[0]
    oracle = truncated_series_family([one], [omega, omega], None, one, None, degree)[0]
    constant = two_point.numerator.terms.get((0, 0))
    central_ok = two_point.pair_orders == {(0, 1): 4} and constant == c / 2 and expand_rational(two_point, None, degree) == oracle
    return CriterionResult(7, "correlator engine vs brute-force mode sums", not bad and pole_ok and central_ok, details={
        "compared": compared, "mismatches": bad[:5], "poles_only_on_diagonals": pole_ok,
        "central_constant": str(constant), "central_constant_matches_c_over_2": central_ok})


def criterion_8(max_w_level: int = 3, max_dual_level: int = 6) -> CriterionResult:
    split = _split()
    p = split.params
    c = p.c
    omega = conformal_vector(c)
    l3 = VermaVector(vacuum_params(c), {(3,): 1})
    N = split.N
    duals = [VermaVector.monomial(p, m) for lv in range(max_dual_level + 1) for m in basis(lv)]
    checked = 0
    failures = []
    sample: Optional[RationalCorrelator] = None
    sample_slack = None
    for lw in range(max_w_level + 1):
        for mono in split.w1_basis(lw):
            w = VermaVector.monomial(p, mono)
            for ins in ([omega, omega], [l3, omega], [omega, omega, omega]):
                weights = [vacuum_reduce(v).level for v in ins[:-1]]
                phi_weight = ins[-1].level
                for r in matrix_coefficients(duals, ins, len(ins) - 1, w, split):
                    if r.is_zero():
                        continue
                    checked += 1
                    if not check_n_weight_degree(r, N, weights, phi_weight):
                        failures.append(list(mono))
                    slack = min_recentered_degree(r) - (N - sum(weights) - phi_weight)
                    if len(ins) == 2 and (sample is None or slack < sample_slack):
                        sample, sample_slack = r, slack
    violation_fails = None
    if sample is not None:
        bad = sample * RationalCorrelator.pair_pole(sample.variables, 0, 1, sample_slack + 1)
        violation_fails = not check_n_weight_degree(bad, N, [2], 2)
    passed = not failures and checked > 0 and violation_fails is True
    return CriterionResult(8, "N-weight-degree condition with N = 2", passed, details={
        "checked": checked, "failures": failures[:5], "violation_detected": violation_fails,
        "violation_base": sample.to_json() if sample is not None else None, "base_slack": sample_slack})


def criterion_9(level_cap: int = 8) -> CriterionResult:
    nonsplit, _ = ext.nonsplit_scenario(level_cap=level_cap)
    F = ext.extension_to_derivation(nonsplit, level_cap)
    cocycle = ext.verify_cocycle(F, w_levels=1)
    witness = ext.is_inner(F, level_cap)
    round_trip = ext.roundtrip_check(F=F, ext=nonsplit, level_cap=level_cap)
    split_ext = ext.split_scenario()
    F0 = ext.extension_to_derivation(split_ext, level_cap)
    w0 = ext.is_inner(F0, level_cap)
    split_ok = not F0.omega_modes and w0 is not None and w0.is_zero()
    base = F.F(-1, (1,))
    passed = bool(cocycle["passed"]) and witness is None and bool(round_trip["passed"]) and split_ok and base == {(): 1}
    return CriterionResult(9, "extensions and derivations round trip", passed, details={
        "cocycle": cocycle["passed"], "pole_orders": sorted({t["p"] for t in cocycle["triples"]}),
        "nonsplit_inner_witness": witness is not None, "roundtrip": round_trip,
        "split_F_zero_and_inner": split_ok})


def criterion_10(max_level: int = 8) -> CriterionResult:
    split = _split()
    p = split.params
    amb = DirectSum([p])
    top = p.h + max_level
    t6 = find_singular(p, 6)
    choices = {
        "zero": Submodule.zero(amb, top),
        "t6": Submodule.generated(amb, [t6[0].vector], top) if t6 else None,
        "W2": split.w2_submodule(max_level),
        "M": Submodule.whole(amb, top),
    }
    details: Dict[str, object] = {}
    passed = True
    for name, T in choices.items():
        if T is None:
            passed = False
            details[name] = "no level-6 singular vector"
            continue
        entry: Dict[str, object] = {}
        try:
            r = restrict_split(split, T)
            dims_ok = True
            laws_ok = True
            for lv in range(max_level + 1):
                t1, t2, t = r.dims(lv)
                dims_ok &= t1 + t2 == t
                for vec in T.basis_vectors(p.h + lv):
                    v = vec[0]
                    pv = r.project(v)
                    laws_ok &= r.project(pv) == pv and T.contains(pv)
                    if index(v) < split.N:
                        laws_ok &= pv.is_zero()
                    for m in range(2, 7):
                        if lv + m <= max_level:
                            laws_ok &= r.project(apply_mode(-m, v)) == apply_mode(-m, pv)
            entry["restrict"] = {"dims_sum": dims_ok, "pi_laws": laws_ok}
            passed &= dims_ok and laws_ok
        except Exception as exc:
            entry["restrict"] = f"rejected: {exc}"
            passed = False
        try:
            q = quotient_split(split, T)
            dims_ok = True
            laws_ok = True
            for lv in range(max_level + 1):
                q1, q2, d = q.dims(lv)
                dims_ok &= q1 + q2 == d
                for mono in basis(lv):
                    v = q.reduce(VermaVector.monomial(p, mono))
                    pv = q.project(v)
                    laws_ok &= q.project(pv) == pv
                    for m in range(2, 7):
                        if lv + m <= max_level:
                            laws_ok &= q.project(apply_mode(-m, v)) == q.reduce(apply_mode(-m, pv))
            entry["quotient"] = {"dims_sum": dims_ok, "pi_laws": laws_ok}
            passed &= dims_ok and laws_ok
        except Exception as exc:
            entry["quotient"] = f"rejected: {exc}"
            passed = False
        details[name] = entry
    return CriterionResult(10, "restricted and quotient splits", passed, details=details)


def criterion_11(level_cap: int = 8) -> CriterionResult:
    p0 = REFERENCE_MODULE
    p1 = ModuleParams(Fraction(1), Fraction(9, 4))
    amb = DirectSum([p0, p1])
    s = find_singular(p0, 2)[0].vector
    t = find_singular(p1, 4)[0].vector
    one0, one1 = VermaVector.lowest(p0), VermaVector.lowest(p1)
    z0, z1 = VermaVector.zero(p0), VermaVector.zero(p1)
    cases = {"(1,0)": [(one0, z1)], "(s,1')": [(s, one1)], "(s,0)+(0,t)": [(s, z1), (z0, t)]}
    top = amb.min_weight + level_cap
    details: Dict[str, object] = {}
    passed = True
    for name, gens in cases.items():
        ech = classify_direct_sum_submodule(amb, gens, level_cap)
        P = build_pi_W(ech)
        S = Submodule.generated(amb, gens, top)
        S_echelon = Submodule.generated(amb, ech.generator_list(), top)
        dims_ok = S.dims() == S_echelon.dims()
        bad = 0
        for wgt in amb.weights(top):
            for key in amb.basis_keys(wgt):
                v = amb.from_coords({key: Fraction(1)})
                pv = P.project(v)
                if P.project(pv) != pv or not S.contains(pv):
                    bad += 1
                for m in range(2, 7):
                    if wgt + m <= top:
                        if P.project(amb.apply_mode(-m, v)) != amb.apply_mode(-m, pv):
                            bad += 1
            for v in S.basis_vectors(wgt):
                if P.project(v) != v:
                    bad += 1
        ok = dims_ok and bad == 0
        passed &= ok
        details[name] = {"order": list(ech.order), "graded_dims_match": dims_ok, "law_failures": bad}
    return CriterionResult(11, "direct-sum echelon and projection", passed, details=details)


CRITERIA: Dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}

SUITES = {
    "all": list(CRITERIA),
    "algebra": [1, 2, 3],
    "projection": [4, 5, 6, 10, 11],
    "correlators": [7, 8],
    "ext": [9],
}


def run_criterion(number: int) -> CriterionResult:
    start = time.perf_counter()
    try:
        result = CRITERIA[number]()
    except Exception as exc:
        result = CriterionResult(number, f"criterion {number}", False, details={"error": repr(exc)})
    result.seconds = time.perf_counter() - start
    return result


def suite_numbers(name: str) -> List[int]:
    if name in SUITES:
        return SUITES[name]
    try:
        nums = [int(x) for x in name.split(",")]
    except ValueError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or a comma list of numbers")
    for n in nums:
        if n not in CRITERIA:
            raise ValueError(f"no criterion {n}")
    return nums
