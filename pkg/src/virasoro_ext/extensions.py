"""Extensions of Virasoro modules, derivations and inner derivations.

V(c, 0) is generated by omega, so a module structure on W2 + W1 extending
W1 by W2 is the same as a block upper-triangular family

    L_U(m) = [[L_2(m), F_m], [0, L_1(m)]]

satisfying the Virasoro relations. The off-diagonal modes F_m (the modes
of F(omega)) determine the derivation F; F(v) for every v in V follows
from the iterate formula applied on the glued module. The two maps of
the correspondence are

    extension_to_derivation: (U, section psi) -> F(v) = pi_2 Y_U(v, .) psi
    derivation_to_extension: F -> the glued module with the block action.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import linalg
from .algebra import (
    ModuleParams,
    Monomial,
    VermaVector,
    apply_mode,
    as_scalar,
    basis,
    binomial,
    is_vacuum_representative,
    vacuum_reduce,
    scalar_to_str,
    y_mode,
)
from .structure import ProjectionSplit

Key = Hashable
Vec = Dict[Key, Fraction]


class TruncationError(RuntimeError):
    """A computation needed data beyond the stored level cap."""


class ExtensionError(ValueError):
    """Invalid extension data."""


def _acc(out: Vec, vec: Mapping[Key, Fraction], k: Fraction = Fraction(1)) -> None:
    for key, a in vec.items():
        val = out.get(key, 0) + k * a
        if val:
            out[key] = val
        else:
            out.pop(key, None)


def _clean(vec: Mapping[Key, Fraction]) -> Vec:
    return {k: Fraction(a) for k, a in vec.items() if a}


# Graded modules --------------------------------------------------------------


class GradedModule:
    """A lower-bounded graded Virasoro module with an explicit homogeneous basis.

    Levels are measured from min_weight. max_level (None when unbounded)
    limits which basis vectors the model can act on and produce.
    """

    c: Fraction
    min_weight: Fraction
    max_level: Optional[int] = None

    def keys(self, level: int) -> List[Key]:
        raise NotImplementedError

    def key_weight(self, key: Key) -> Fraction:
        raise NotImplementedError

    def _mode_key(self, m: int, key: Key) -> Vec:
        raise NotImplementedError

    def key_level(self, key: Key) -> int:
        lv = self.key_weight(key) - self.min_weight
        return int(lv)

    def weight_keys(self, weight: Fraction) -> List[Key]:
        lv = weight - self.min_weight
        if lv < 0 or lv.denominator != 1:
            return []
        return self.keys(int(lv))

    def mode(self, m: int, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        cache = self.__dict__.setdefault("_mode_cache", {})
        for key, a in vec.items():
            lv = self.key_level(key)
            if lv - m < 0:
                continue
            if self.max_level is not None and (lv > self.max_level or lv - m > self.max_level):
                raise TruncationError(f"L({m}) on a level-{lv} vector leaves the stored range")
            ck = (m, key)
            img = cache.get(ck)
            if img is None:
                img = _clean(self._mode_key(m, key))
                cache[ck] = img
            _acc(out, img, a)
        return out

    def word(self, word: Sequence[int], vec: Mapping[Key, Fraction]) -> Vec:
        out = dict(vec)
        for m in reversed(word):
            out = self.mode(m, out)
        return out

    def vertex_mode(self, v: VermaVector, k: int, vec: Mapping[Key, Fraction]) -> Vec:
        """v_k acting on vec, for v a representative of V(c, 0)."""
        if v.params.h != 0 or v.params.c != self.c:
            raise ExtensionError("v must lie in the vacuum module with the module's central charge")
        if not is_vacuum_representative(v):
            raise ExtensionError("v has an L(-1) tail")
        out: Vec = {}
        for vm, a in v.terms.items():
            for key, b in vec.items():
                _acc(out, self._y_key(vm, k, key), a * b)
        return out

    def _y_key(self, vmono: Monomial, k: int, key: Key) -> Vec:
        """Iterate formula with u = omega, u_j = L(j - 1), as for Verma modules."""
        cache = self.__dict__.setdefault("_y_cache", {})
        ck = (vmono, k, key)
        if ck in cache:
            return cache[ck]
        if not vmono:
            res = {key: Fraction(1)} if k == -1 else {}
            cache[ck] = res
            return res
        n = 1 - vmono[0]
        rest = vmono[1:]
        wt_rest = sum(rest)
        lvl = self.key_level(key)
        out: Vec = {}
        for j in range(0, max(-1, lvl + wt_rest - 1 - k) + 1):
            coef = binomial(n, j) * (-1) ** j
            if not coef:
                continue
            inner = self._y_key(rest, k + j, key)
            if inner:
                _acc(out, self.mode(n - j - 1, inner), coef)
        sign_n = -1 if n % 2 else 1
        for j in range(0, lvl + 2):
            coef = -binomial(n, j) * (-1) ** j * sign_n
            if not coef:
                continue
            for k2, a in self.mode(j - 1, {key: Fraction(1)}).items():
                _acc(out, self._y_key(rest, n + k - j, k2), coef * a)
        cache[ck] = out
        return out

    def vector_level(self, vec: Mapping[Key, Fraction]) -> Optional[int]:
        lv = {self.key_level(k) for k in vec}
        return lv.pop() if len(lv) == 1 else None


class VermaModel(GradedModule):
    """M(c, h) with the PBW monomial basis."""

    def __init__(self, params: ModuleParams) -> None:
        self.params = params
        self.c = params.c
        self.min_weight = params.h

    def keys(self, level: int) -> List[Key]:
        return list(basis(level)) if level >= 0 else []

    def key_weight(self, key: Key) -> Fraction:
        return self.params.h + sum(key)

    def _mode_key(self, m: int, key: Key) -> Vec:
        return dict(apply_mode(m, VermaVector.monomial(self.params, key)).terms)

    def to_vector(self, vec: Mapping[Key, Fraction]) -> VermaVector:
        return VermaVector(self.params, vec)


class QuotientModel(GradedModule):
    """M(c, h) / <s> with basis the W1 monomials prefix * L(-1)^q, q < N."""

    def __init__(self, split: ProjectionSplit) -> None:
        self.split = split
        self.params = split.params
        self.c = split.params.c
        self.min_weight = split.params.h

    def keys(self, level: int) -> List[Key]:
        return self.split.w1_basis(level) if level >= 0 else []

    def key_weight(self, key: Key) -> Fraction:
        return self.params.h + sum(key)

    def _mode_key(self, m: int, key: Key) -> Vec:
        _, rest = self.split.decompose(apply_mode(m, VermaVector.monomial(self.params, key)))
        return dict(rest.terms)


class GluedModule(GradedModule):
    """W2 + W1 with the block action (L_2(m) w2 + F_m w1, L_1(m) w1).

    Keys are ("2", key) and ("1", key). The off-diagonal modes come from a
    callable F(m, w1_key) -> W2 vector, which may raise TruncationError.
    """

    def __init__(self, w2: GradedModule, w1: GradedModule, off_diagonal: Callable[[int, Key], Vec],
                 max_level: Optional[int] = None) -> None:
        if w1.c != w2.c:
            raise ExtensionError("central charges differ")
        self.w2, self.w1 = w2, w1
        self.c = w1.c
        self.min_weight = min(w1.min_weight, w2.min_weight)
        self.off_diagonal = off_diagonal
        self.max_level = max_level

    def keys(self, level: int) -> List[Key]:
        w = self.min_weight + level
        return [("2", k) for k in self.w2.weight_keys(w)] + [("1", k) for k in self.w1.weight_keys(w)]

    def key_weight(self, key: Key) -> Fraction:
        part, k = key
        return (self.w2 if part == "2" else self.w1).key_weight(k)

    def _mode_key(self, m: int, key: Key) -> Vec:
        part, k = key
        if part == "2":
            return {("2", k2): a for k2, a in self.w2.mode(m, {k: Fraction(1)}).items()}
        out = {("1", k2): a for k2, a in self.w1.mode(m, {k: Fraction(1)}).items()}
        out.update({("2", k2): a for k2, a in self.off_diagonal(m, k).items()})
        return out

    @staticmethod
    def component(vec: Mapping[Key, Fraction], part: str) -> Vec:
        return {k[1]: a for k, a in vec.items() if k[0] == part}

    @staticmethod
    def embed(vec: Mapping[Key, Fraction], part: str) -> Vec:
        return {(part, k): a for k, a in vec.items()}


# Extensions with a section ------------------------------------------------------


@dataclass
class Extension:
    """A module U with submodule W2 (via iota) and quotient W1 (via proj), plus a section.

    pi2 = iota^{-1} o (1 - section o proj) sends U to W2 coordinates.
    """

    U: GradedModule
    w2: GradedModule
    w1: GradedModule
    iota: Callable[[Key], Vec]
    proj: Callable[[Mapping[Key, Fraction]], Vec]
    section: Callable[[Key], Vec]
    pi2: Callable[[Mapping[Key, Fraction]], Vec]
    name: str = "extension"

    def section_vec(self, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        for k, a in vec.items():
            _acc(out, self.section(k), a)
        return out

    def iota_vec(self, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        for k, a in vec.items():
            _acc(out, self.iota(k), a)
        return out


def _w2_key(split: ProjectionSplit, prefix: Monomial, q: int) -> Monomial:
    return prefix + (1,) * (q - split.N)


def verma_extension(split: ProjectionSplit, section: str = "split", level_cap: int = 8) -> Extension:
    """M(c, h) as an extension of W1 = M/<s> by W2 = <s> (modelled as M(c, h + N)).

    section "split" uses the monomial complement W1 of the projection split;
    "derivative-compatible" corrects it by a map chi: W1 -> W2 so that the
    section commutes with L(-1) (built level by level up to level_cap).
    """
    p = split.params
    U = VermaModel(p)
    W2 = VermaModel(ModuleParams(p.c, p.h + split.N))
    W1 = QuotientModel(split)

    def iota(key: Key) -> Vec:
        return dict(_apply_word_vec(p, tuple(-n for n in key), split.s).terms)

    def proj(vec: Mapping[Key, Fraction]) -> Vec:
        _, rest = split.decompose(VermaVector(p, vec))
        return dict(rest.terms)

    def pi2_split(vec: Mapping[Key, Fraction]) -> Vec:
        coeffs, _ = split.decompose(VermaVector(p, vec))
        return _clean({_w2_key(split, prefix, q): a for (prefix, q), a in coeffs.items()})

    if section == "split":
        return Extension(U, W2, W1, iota, proj, lambda k: {k: Fraction(1)}, pi2_split, "verma-split")
    if section != "derivative-compatible":
        raise ExtensionError("section must be 'split' or 'derivative-compatible'")
    chi = derivative_compatible_correction(split, W1, W2, iota, level_cap)

    def section_dc(key: Key) -> Vec:
        if W1.key_level(key) > level_cap:
            raise TruncationError("section correction stored only up to the level cap")
        out = {key: Fraction(1)}
        for k2, a in chi.get(key, {}).items():
            _acc(out, iota(k2), a)
        return out

    def pi2_dc(vec: Mapping[Key, Fraction]) -> Vec:
        out = pi2_split(vec)
        for k, a in proj(vec).items():
            _acc(out, chi.get(k, {}), -a)
        return out

    return Extension(U, W2, W1, iota, proj, section_dc, pi2_dc, "verma-derivative-compatible")


def _apply_word_vec(params: ModuleParams, word: Sequence[int], v: VermaVector) -> VermaVector:
    out = v
    for m in reversed(word):
        out = apply_mode(m, out)
    return out


def derivative_compatible_correction(split: ProjectionSplit, W1: QuotientModel, W2: VermaModel,
                                     iota: Callable[[Key], Vec], level_cap: int) -> Dict[Key, Vec]:
    """chi: W1 -> W2 with psi' = psi + iota chi satisfying psi' L_1(-1) = L(-1) psi'.

    On the image of L_1(-1) the section is forced; on a complement spanned by
    W1 basis vectors it agrees with the split section. Requires L_1(-1)
    injective, which holds for positive lowest weight.
    """
    p = split.params
    sec: Dict[Key, VermaVector] = {k: VermaVector.monomial(p, k) for k in W1.keys(0)}
    for lv in range(0, level_cap):
        lower = W1.keys(lv)
        upper = W1.keys(lv + 1)
        idx = {k: i for i, k in enumerate(upper)}
        images = []
        for k in lower:
            img = W1.mode(-1, {k: Fraction(1)})
            row = [Fraction(0)] * len(upper)
            for k2, a in img.items():
                row[idx[k2]] = a
            images.append(row)
        if images and linalg.rank(images) != len(lower):
            raise ExtensionError(f"L(-1) is not injective on W1 at level {lv}")
        spanning = list(images)
        complement = []
        for i, k in enumerate(upper):
            unit = [Fraction(int(j == i)) for j in range(len(upper))]
            if linalg.rank(spanning + [unit]) > len(spanning):
                spanning.append(unit)
                complement.append(k)
        cols = spanning
        targets = [apply_mode(-1, sec[k]) for k in lower] + [VermaVector.monomial(p, k) for k in complement]
        matrix = [[cols[j][i] for j in range(len(cols))] for i in range(len(upper))]
        for i, k in enumerate(upper):
            rhs = [Fraction(int(r == i)) for r in range(len(upper))]
            coeffs = linalg.solve(matrix, rhs)
            vec = VermaVector.zero(p)
            for a, t in zip(coeffs, targets):
                if a:
                    vec = vec + t.scale(a)
            sec[k] = vec
    chi: Dict[Key, Vec] = {}
    for k, vec in sec.items():
        coeffs, rest = split.decompose(vec)
        if rest != VermaVector.monomial(p, k):
            raise ExtensionError("corrected section does not lift the basis vector")
        c = _clean({_w2_key(split, prefix, q): a for (prefix, q), a in coeffs.items()})
        if c:
            chi[k] = c
    return chi


def direct_sum_extension(w1: GradedModule, w2: GradedModule) -> Extension:
    """The module direct sum W2 + W1 with the inclusion section."""
    U = GluedModule(w2, w1, lambda m, k: {})
    return Extension(
        U, w2, w1,
        iota=lambda k: {("2", k): Fraction(1)},
        proj=lambda vec: GluedModule.component(vec, "1"),
        section=lambda k: {("1", k): Fraction(1)},
        pi2=lambda vec: GluedModule.component(vec, "2"),
        name="direct-sum",
    )


# Derivations ----------------------------------------------------------------------


@dataclass
class TruncatedHom:
    """Modes phi_k: W1 -> W2 of F(v) stored on W1 basis vectors up to level_cap.

    phi(zeta) w1 = sum_k phi_k w1 zeta^{-k-1}; phi_k shifts weight by wt(v) - k - 1.
    """

    weight: int
    level_cap: int
    modes: Dict[int, Dict[Key, Vec]]

    def apply(self, k: int, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        table = self.modes.get(k, {})
        for key, a in vec.items():
            _acc(out, table.get(key, {}), a)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruncatedHom):
            return False
        ks = set(self.modes) | set(other.modes)
        return self.weight == other.weight and all(
            {k: v for k, v in self.modes.get(i, {}).items() if v} == {k: v for k, v in other.modes.get(i, {}).items() if v}
            for i in ks)


class DerivationData:
    """A derivation F: V -> maps W1 -> W2, generated from the modes of F(omega).

    omega_modes[(m, key)] is F_m applied to the W1 basis vector key, where
    F(omega)(zeta) = sum_m F_m zeta^{-m-2}. Stored for W1 levels <= level_cap
    and every m whose target lies at relative level <= level_cap.
    """

    def __init__(self, w1: GradedModule, w2: GradedModule, level_cap: int,
                 omega_modes: Mapping[Tuple[int, Key], Mapping[Key, Fraction]], generated: bool = True) -> None:
        if w1.c != w2.c:
            raise ExtensionError("central charges differ")
        self.w1, self.w2 = w1, w2
        self.level_cap = level_cap
        self.c = w1.c
        self.min_weight = min(w1.min_weight, w2.min_weight)
        self.omega_modes: Dict[Tuple[int, Key], Vec] = {k: _clean(v) for k, v in omega_modes.items() if _clean(v)}
        self.generated = generated
        self._glued: Optional[GluedModule] = None

    # stored range
    def rel_level(self, weight: Fraction) -> int:
        return int(weight - self.min_weight)

    def mode_range(self, key: Key) -> range:
        wt = self.w1.key_weight(key)
        lo = self.rel_level(wt) - self.level_cap
        hi = int(wt - self.w2.min_weight)
        return range(lo, hi + 1)

    def stored(self, m: int, key: Key) -> bool:
        return self.w1.key_level(key) <= self.level_cap and m in self.mode_range(key)

    def F(self, m: int, key: Key) -> Vec:
        if self.w1.key_level(key) > self.level_cap:
            raise TruncationError("F(omega) is stored only up to the level cap")
        wt = self.w1.key_weight(key)
        if wt - m < self.w2.min_weight:
            return {}
        if m not in self.mode_range(key):
            raise TruncationError("F(omega) mode outside the stored range")
        return dict(self.omega_modes.get((m, key), {}))

    def F_vec(self, m: int, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        for k, a in vec.items():
            _acc(out, self.F(m, k), a)
        return out

    def glued(self) -> GluedModule:
        if self._glued is None:
            self._glued = GluedModule(self.w2, self.w1, self.F, max_level=None)
        return self._glued

    def hom(self, v: VermaVector, level_cap: Optional[int] = None) -> TruncatedHom:
        """F(v) as a TruncatedHom, from the off-diagonal block of v_k on the glued module."""
        cap = self.level_cap - 1 if level_cap is None else level_cap
        G = self.glued()
        wt_v = v.level
        modes: Dict[int, Dict[Key, Vec]] = {}
        for lv in range(cap + 1):
            for key in self.w1.keys(lv):
                wt = self.w1.key_weight(key)
                k_hi = int(wt + wt_v - 1 - self.w2.min_weight)
                k_lo = k_hi - (self.level_cap + 1)
                for k in range(k_lo, k_hi + 1):
                    try:
                        out = G.vertex_mode(v, k, {("1", key): Fraction(1)})
                    except TruncationError:
                        continue
                    comp = GluedModule.component(out, "2")
                    if comp:
                        modes.setdefault(k, {})[key] = comp
        return TruncatedHom(wt_v, cap, modes)

    def __sub__(self, other: "DerivationData") -> "DerivationData":
        return self._combine(other, -1)

    def __add__(self, other: "DerivationData") -> "DerivationData":
        return self._combine(other, 1)

    def _combine(self, other: "DerivationData", sign: int) -> "DerivationData":
        if self.level_cap != other.level_cap:
            raise ExtensionError("level caps differ")
        out: Dict[Tuple[int, Key], Vec] = {k: dict(v) for k, v in self.omega_modes.items()}
        for k, v in other.omega_modes.items():
            acc = out.setdefault(k, {})
            _acc(acc, v, Fraction(sign))
        return DerivationData(self.w1, self.w2, self.level_cap, out, self.generated and other.generated)

    def same_modes(self, other: "DerivationData") -> bool:
        return self.omega_modes == other.omega_modes

    def to_json(self) -> Dict[str, object]:
        entries = []
        by_block: Dict[Tuple[int, int], List] = {}
        for (m, key), vec in sorted(self.omega_modes.items(), key=lambda t: (t[0][0], repr(t[0][1]))):
            lv = self.w1.key_level(key)
            by_block.setdefault((m, lv), []).append((key, vec))
        for (m, lv), items in sorted(by_block.items()):
            src = self.w1.keys(lv)
            tgt_weight = self.w1.key_weight(src[0]) - m if src else None
            tgt = self.w2.weight_keys(tgt_weight) if src else []
            matrix = []
            lookup = dict(items)
            for t in tgt:
                matrix.append([scalar_to_str(lookup.get(s, {}).get(t, Fraction(0))) for s in src])
            entries.append({"m": m, "source_level": lv, "source_basis": [list(k) for k in src],
                            "target_basis": [list(k) for k in tgt], "matrix": matrix})
        return {"level_cap": self.level_cap, "generated": self.generated, "omega_modes": entries}


def zero_derivation(w1: GradedModule, w2: GradedModule, level_cap: int) -> DerivationData:
    return DerivationData(w1, w2, level_cap, {}, True)


def extension_to_derivation(ext: Extension, level_cap: int) -> DerivationData:
    """F_m = pi_2 L_U(m) psi on W1 basis vectors up to level_cap."""
    modes: Dict[Tuple[int, Key], Vec] = {}
    skeleton = DerivationData(ext.w1, ext.w2, level_cap, {})
    for lv in range(level_cap + 1):
        for key in ext.w1.keys(lv):
            lifted = ext.section(key)
            for m in skeleton.mode_range(key):
                img = ext.pi2(ext.U.mode(m, lifted))
                if img:
                    modes[(m, key)] = img
    return DerivationData(ext.w1, ext.w2, level_cap, modes, generated=True)


def direct_hom(ext: Extension, v: VermaVector, level_cap: int, k_range: Iterable[int]) -> Dict[int, Dict[Key, Vec]]:
    """pi_2 v_k^U psi computed directly on U (no gluing), for comparison."""
    out: Dict[int, Dict[Key, Vec]] = {}
    for lv in range(level_cap + 1):
        for key in ext.w1.keys(lv):
            lifted = ext.section(key)
            for k in k_range:
                img = ext.pi2(ext.U.vertex_mode(v, k, lifted))
                if img:
                    out.setdefault(k, {})[key] = img
    return out


def derivation_to_extension(F: DerivationData, check: bool = True) -> Extension:
    """The glued module W2 + W1 with the canonical section; optionally cocycle-checked."""
    if check:
        report = verify_cocycle(F, weak_associativity=False)
        if not report["passed"]:
            raise ExtensionError("F fails the cocycle identity")
    G = F.glued()
    return Extension(
        G, F.w2, F.w1,
        iota=lambda k: {("2", k): Fraction(1)},
        proj=lambda vec: GluedModule.component(vec, "1"),
        section=lambda k: {("1", k): Fraction(1)},
        pi2=lambda vec: GluedModule.component(vec, "2"),
        name="glued",
    )


# Inner derivations --------------------------------------------------------------------


@dataclass
class InnerWitness:
    """phi_{-1}: W1 -> W2, weight preserving, with F_m = L_2(m) phi - phi L_1(m)."""

    phi: Dict[Key, Vec]

    def apply(self, vec: Mapping[Key, Fraction]) -> Vec:
        out: Vec = {}
        for k, a in vec.items():
            _acc(out, self.phi.get(k, {}), a)
        return out

    def is_zero(self) -> bool:
        return not any(self.phi.values())


def inner_derivation(w1: GradedModule, w2: GradedModule, phi: Mapping[Key, Mapping[Key, Fraction]],
                     level_cap: int) -> DerivationData:
    """F_m = L_2(m) phi - phi L_1(m) for a weight-preserving phi given up to level_cap."""
    wit = InnerWitness({k: _clean(v) for k, v in phi.items()})
    skeleton = DerivationData(w1, w2, level_cap, {})
    modes: Dict[Tuple[int, Key], Vec] = {}
    for lv in range(level_cap + 1):
        for key in w1.keys(lv):
            for m in skeleton.mode_range(key):
                if lv - m > level_cap:
                    raise TruncationError("phi needed above the level cap")
                val = w2.mode(m, wit.apply({key: Fraction(1)}))
                _acc(val, wit.apply(w1.mode(m, {key: Fraction(1)})), Fraction(-1))
                if val:
                    modes[(m, key)] = val
    return DerivationData(w1, w2, level_cap, modes, generated=True)


def is_inner(F: DerivationData, level_cap: Optional[int] = None) -> Optional[InnerWitness]:
    """Solve F_m = L_2(m) phi - phi L_1(m) for phi on W1 levels <= cap, all stored m.

    Returns a witness or None when the exact system is inconsistent.
    """
    cap = F.level_cap if level_cap is None else min(level_cap, F.level_cap)
    w1, w2 = F.w1, F.w2
    equations = []
    for lv in range(cap + 1):
        for key in w1.keys(lv):
            wt = w1.key_weight(key)
            for m in F.mode_range(key):
                if lv - m > cap:
                    continue
                target = F.F(m, key) if wt - m >= w2.min_weight else {}
                # unknowns x[(b, t)]: coefficient of W2 key t in phi(b)
                rows: Dict[Key, Dict[Key, Fraction]] = {}
                for t in w2.weight_keys(wt):
                    for t2, a in w2.mode(m, {t: Fraction(1)}).items():
                        rows.setdefault(t2, {})[(key, t)] = rows.setdefault(t2, {}).get((key, t), 0) + a
                if lv - m >= 0:
                    for b2, a in w1.mode(m, {key: Fraction(1)}).items():
                        for t in w2.weight_keys(w1.key_weight(b2)):
                            d = rows.setdefault(t, {})
                            d[(b2, t)] = d.get((b2, t), 0) - a
                for t in set(rows) | set(target):
                    equations.append((rows.get(t, {}), target.get(t, Fraction(0))))
    sol = linalg.sparse_solve(equations)
    if sol is None:
        return None
    phi: Dict[Key, Vec] = {}
    for (b, t), a in sol.items():
        if a:
            phi.setdefault(b, {})[t] = a
    return InnerWitness(phi)


# Equivalence of extensions ----------------------------------------------------------------


@dataclass
class EquivalenceMap:
    """T(w2, w1) = (w2 + A w1, w1) between the glued forms of two extensions."""

    off_diagonal: InnerWitness
    verified_levels: int


def equivalence(U1: Extension, U2: Extension, level_cap: int) -> Optional[EquivalenceMap]:
    F1 = extension_to_derivation(U1, level_cap)
    F2 = extension_to_derivation(U2, level_cap)
    if type(F1.w1) is not type(F2.w1) or F1.w1.min_weight != F2.w1.min_weight or F1.w2.min_weight != F2.w2.min_weight:
        raise ExtensionError("extensions of different modules")
    wit = is_inner(F1 - F2, level_cap)
    if wit is None:
        return None
    G1, G2 = F1.glued(), F2.glued()
    for lv in range(level_cap + 1):
        for key in F1.w1.keys(lv):
            for m in F1.mode_range(key):
                if lv - m > level_cap or lv - m < 0:
                    continue
                x = {("1", key): Fraction(1)}
                lhs = _apply_T(wit, G1.mode(m, x))
                rhs = G2.mode(m, _apply_T(wit, x))
                if _clean(lhs) != _clean(rhs):
                    raise ExtensionError("solved map does not intertwine; solver inconsistency")
    return EquivalenceMap(wit, level_cap)


def _apply_T(wit: InnerWitness, vec: Mapping[Key, Fraction]) -> Vec:
    out = dict(vec)
    _acc(out, GluedModule.embed(wit.apply(GluedModule.component(vec, "1")), "2"))
    return _clean(out)


# Verification ---------------------------------------------------------------------------------


def _vacuum_vec(c: Fraction, mono: Monomial) -> VermaVector:
    return VermaVector.monomial(ModuleParams(c, Fraction(0)), mono)


def _vac_mode(u: VermaVector, j: int, v: VermaVector) -> VermaVector:
    return vacuum_reduce(y_mode(u, j, v))


def weak_associativity(module: GradedModule, u: VermaVector, v: VermaVector, w: Mapping[Key, Fraction], p: int,
                       a_range: Iterable[int], b_range: Iterable[int],
                       project: Optional[Callable[[Vec], Vec]] = None) -> Tuple[bool, int]:
    """Compare coefficients of x0^a x2^b in
    (x0+x2)^p Y(u, x0+x2) Y(v, x2) w  and  (x0+x2)^p Y(Y(u, x0) v, x2) w.

    Returns (all compared coefficients agree, number compared). Coefficients
    needing data beyond the module's stored range are skipped.
    """
    wl = module.vector_level(w)
    if wl is None:
        raise ExtensionError("w must be homogeneous")
    wt_u, wt_v = u.level, v.level
    proj = project or (lambda x: x)
    compared = 0
    for a in a_range:
        for b in b_range:
            try:
                lhs: Vec = {}
                # k runs over modes of u with i = p - k - 1 - a >= 0 and l = i - b - 1
                k_hi = p - 1 - a
                k_lo = k_hi - (wl + wt_v + wt_u + abs(b) + p + 4) - 4
                for k in range(k_lo, k_hi + 1):
                    i = p - k - 1 - a
                    l = i - b - 1
                    coef = binomial(p - k - 1, i)
                    if not coef:
                        continue
                    inner = module.vertex_mode(v, l, w)
                    if not inner:
                        continue
                    _acc(lhs, module.vertex_mode(u, k, inner), coef)
                rhs: Vec = {}
                for i in range(p + 1):
                    j = p - i - a - 1
                    l = i - b - 1
                    uv = _vac_mode(u, j, v)
                    if uv.is_zero():
                        continue
                    _acc(rhs, module.vertex_mode(uv, l, w), binomial(p, i))
            except TruncationError:
                continue
            compared += 1
            if _clean(proj(lhs)) != _clean(proj(rhs)):
                return False, compared
    return True, compared


def _default_samples(c: Fraction) -> List[VermaVector]:
    return [_vacuum_vec(c, (2,)), _vacuum_vec(c, (3,)), _vacuum_vec(c, (2, 2))]


def find_pole_order(module: GradedModule, u: VermaVector, v: VermaVector, w: Mapping[Key, Fraction], p_max: int = 8,
                    a_range=range(-3, 3), b_range=range(-4, 3),
                    project: Optional[Callable[[Vec], Vec]] = None) -> Optional[int]:
    """Smallest p <= p_max for which the compared weak-associativity coefficients agree."""
    for p in range(p_max + 1):
        ok, n = weak_associativity(module, u, v, w, p, a_range, b_range, project)
        if ok and n:
            return p
    return None


def bracket_defects(module: GradedModule, max_level: int, m_range: Iterable[int]) -> List[str]:
    """Virasoro relations [L(m), L(n)] on basis vectors up to max_level."""
    out = []
    ms = list(m_range)
    for lv in range(max_level + 1):
        for key in module.keys(lv):
            x = {key: Fraction(1)}
            for m in ms:
                for n in ms:
                    try:
                        lhs = module.mode(m, module.mode(n, x))
                        _acc(lhs, module.mode(n, module.mode(m, x)), Fraction(-1))
                        rhs = {k: (m - n) * a for k, a in module.mode(m + n, x).items()}
                    except TruncationError:
                        continue
                    if m + n == 0:
                        _acc(rhs, x, Fraction(m ** 3 - m, 12) * module.c)
                    if _clean(lhs) != _clean(rhs):
                        out.append(f"[L({m}),L({n})] fails on {key}")
    return out


def verify_cocycle(F: DerivationData, weak_associativity: bool = True, samples: Optional[Sequence[VermaVector]] = None,
                   w_levels: int = 2, p_max: int = 8) -> Dict[str, object]:
    """Cocycle identity of the off-diagonal modes, plus the pole-cleared
    derivation identity (off-diagonal weak associativity) on sampled triples."""
    G = F.glued()
    lie = []
    cap = F.level_cap
    for lv in range(cap + 1):
        for key in F.w1.keys(lv):
            x = {("1", key): Fraction(1)}
            for m in range(-3, 4):
                for n in range(-3, 4):
                    if m >= n:
                        continue
                    try:
                        lhs = G.mode(m, G.mode(n, x))
                        _acc(lhs, G.mode(n, G.mode(m, x)), Fraction(-1))
                        rhs = {k: (m - n) * a for k, a in G.mode(m + n, x).items()}
                    except TruncationError:
                        continue
                    if m + n == 0:
                        _acc(rhs, x, Fraction(m ** 3 - m, 12) * F.c)
                    l2 = GluedModule.component(_clean(lhs), "2")
                    r2 = GluedModule.component(_clean(rhs), "2")
                    if l2 != r2:
                        lie.append(f"m={m} n={n} on {key}")
    report: Dict[str, object] = {"cocycle_identity_failures": lie, "triples": []}
    passed = not lie
    if weak_associativity:
        samples = list(samples or _default_samples(F.c))
        for lv in range(w_levels + 1):
            for key in F.w1.keys(lv):
                w = {("1", key): Fraction(1)}
                for u in samples:
                    for v in samples:
                        p = find_pole_order(G, u, v, w, p_max, project=lambda x: GluedModule.component(x, "2"))
                        report["triples"].append({"u": repr(u), "v": repr(v), "w": list(key), "p": p})
                        if p is None:
                            passed = False
    report["passed"] = passed
    return report


def verify_module_axioms(ext: Extension, level_cap: int = 6, samples: Optional[Sequence[VermaVector]] = None,
                         w_levels: int = 2, p_max: int = 8) -> Dict[str, object]:
    """d-commutator, D-commutator, identity property and weak associativity on U."""
    U = ext.U
    c = U.c
    samples = list(samples or _default_samples(c))
    failures: List[str] = []
    for lv in range(level_cap + 1):
        for key in U.keys(lv):
            x = {key: Fraction(1)}
            try:
                if _clean(U.vertex_mode(_vacuum_vec(c, ()), -1, x)) != _clean(x):
                    failures.append(f"identity property fails on {key}")
                for v in samples:
                    for k in range(-2, lv + v.level + 1):
                        vk = U.vertex_mode(v, k, x)
                        # [L(0), v_k] = (wt v - k - 1) v_k
                        d_lhs = U.mode(0, vk)
                        _acc(d_lhs, U.vertex_mode(v, k, U.mode(0, x)), Fraction(-1))
                        if _clean(d_lhs) != _clean({kk: (v.level - k - 1) * a for kk, a in vk.items()}):
                            failures.append(f"d-commutator fails for {v} mode {k} on {key}")
                        # [L(-1), v_k] = -k v_{k-1}
                        D_lhs = U.mode(-1, vk)
                        _acc(D_lhs, U.vertex_mode(v, k, U.mode(-1, x)), Fraction(-1))
                        D_rhs = {kk: -k * a for kk, a in U.vertex_mode(v, k - 1, x).items()}
                        if _clean(D_lhs) != _clean(D_rhs):
                            failures.append(f"D-commutator fails for {v} mode {k} on {key}")
            except TruncationError:
                continue
    triples = []
    for lv in range(w_levels + 1):
        for key in U.keys(lv):
            w = {key: Fraction(1)}
            for u in samples:
                for v in samples:
                    p = find_pole_order(U, u, v, w, p_max)
                    triples.append({"u": repr(u), "v": repr(v), "w": repr(key), "p": p})
                    if p is None:
                        failures.append(f"weak associativity: no p <= {p_max} for {u}, {v}, {key}")
    return {"passed": not failures, "failures": failures, "triples": triples}


def d_derivative_defects(F: DerivationData, v: VermaVector, level_cap: Optional[int] = None,
                         correction: Optional[Callable[[Key], Vec]] = None) -> List[str]:
    """Check -k phi_{k-1} = L_2(-1) phi_k - phi_k L_1(-1) for phi = F(v).

    With correction = delta (the W2 part of L_U(-1) on the section), the
    identity acquires the extra term delta v_k^{(1)} - v_k^{(2)} delta.
    """
    cap = (F.level_cap - 2) if level_cap is None else level_cap
    hom = F.hom(v, cap + 1)
    out = []
    w1, w2 = F.w1, F.w2
    for lv in range(cap + 1):
        for key in w1.keys(lv):
            x = {key: Fraction(1)}
            for k in sorted(set(hom.modes) | {kk + 1 for kk in hom.modes}):
                lhs = {t: -k * a for t, a in hom.apply(k - 1, x).items()}
                rhs = w2.mode(-1, hom.apply(k, x))
                _acc(rhs, hom.apply(k, w1.mode(-1, x)), Fraction(-1))
                if correction is not None:
                    d = {}
                    for kk, a in w1.vertex_mode(v, k, x).items():
                        _acc(d, correction(kk), a)
                    _acc(rhs, d)
                    _acc(rhs, w2.vertex_mode(v, k, correction(key)), Fraction(-1))
                if _clean(lhs) != _clean(rhs):
                    out.append(f"k={k} on {key}")
    return out


def roundtrip_check(F: Optional[DerivationData] = None, ext: Optional[Extension] = None,
                    level_cap: int = 8) -> Dict[str, object]:
    """F(G(F)) = F as stored modes, and G(F(U)) equivalent to U via (w2, w1) -> iota w2 + psi w1."""
    report: Dict[str, object] = {}
    if F is not None:
        back = extension_to_derivation(derivation_to_extension(F, check=False), F.level_cap)
        report["F_G_identity"] = back.same_modes(F)
    if ext is not None:
        Fu = extension_to_derivation(ext, level_cap)
        G = Fu.glued()
        ok = True
        for lv in range(level_cap + 1):
            for key in G.keys(lv):
                for m in range(lv - level_cap, lv + 1):
                    x = {key: Fraction(1)}
                    try:
                        lhs = _glued_to_U(ext, G.mode(m, x))
                        rhs = ext.U.mode(m, _glued_to_U(ext, x))
                    except TruncationError:
                        continue
                    if _clean(lhs) != _clean(rhs):
                        ok = False
        dims_ok = all(len(G.keys(lv)) == len(ext.U.keys(lv)) for lv in range(level_cap + 1))
        report["G_F_equivalent"] = ok and dims_ok
    report["passed"] = all(v for v in report.values())
    return report


def _glued_to_U(ext: Extension, vec: Mapping[Key, Fraction]) -> Vec:
    out: Vec = {}
    _acc(out, ext.iota_vec(GluedModule.component(vec, "2")))
    _acc(out, ext.section_vec(GluedModule.component(vec, "1")))
    return out


def nonsplit_scenario(c="1", h="1/4", level_cap: int = 8, section: str = "split") -> Tuple[Extension, ProjectionSplit]:
    from .structure import projection_split
    split = projection_split(ModuleParams(as_scalar(c), as_scalar(h)))
    return verma_extension(split, section, level_cap), split


def split_scenario(c="1", h="1/4") -> Extension:
    from .structure import projection_split
    split = projection_split(ModuleParams(as_scalar(c), as_scalar(h)))
    W1 = QuotientModel(split)
    W2 = VermaModel(ModuleParams(split.params.c, split.params.h + split.N))
    return direct_sum_extension(W1, W2)
