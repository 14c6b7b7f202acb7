"""Reducibility, block classification, projection splits and direct-sum submodules."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from . import linalg
from .algebra import (
    ModuleParams,
    Monomial,
    QuadScalar,
    VermaVector,
    apply_mode,
    apply_word,
    as_scalar,
    basis,
    monomial_key,
    scalar_to_str,
    split_monomial,
)


class StructureError(ValueError):
    """Raised when an input violates the structural assumptions of an operation."""


# Gram matrices and singular vectors ----------------------------------------


@dataclass(frozen=True)
class GramMatrix:
    level: int
    monomials: Tuple[Monomial, ...]
    entries: Tuple[Tuple[Fraction, ...], ...]

    def to_json(self) -> Dict[str, object]:
        return {
            "level": self.level,
            "basis": [list(m) for m in self.monomials],
            "entries": [[scalar_to_str(x) for x in row] for row in self.entries],
        }


def _coords(v: VermaVector, monos: Sequence[Monomial]) -> List[Fraction]:
    return [v.coeff(m) for m in monos]


@lru_cache(maxsize=None)
def _gram_rows(c: Fraction, h: Fraction, level: int) -> Tuple[Tuple[Fraction, ...], ...]:
    params = ModuleParams(c, h)
    monos = basis(level)
    if level == 0:
        return ((Fraction(1),),)
    rows = []
    for lam in monos:
        lead, rest = lam[0], lam[1:]
        lower = basis(level - lead)
        pos = lower.index(rest)
        lower_gram = _gram_rows(c, h, level - lead)
        row = []
        for mu in monos:
            image = apply_mode(lead, VermaVector.monomial(params, mu))
            row.append(sum((a * lower_gram[pos][lower.index(nu)] for nu, a in image.terms.items()), Fraction(0)))
        rows.append(tuple(row))
    return tuple(rows)


def gram_matrix(params: ModuleParams, level: int) -> GramMatrix:
    """Contravariant form on the level subspace, in the basis() order.

    The entry for (lam, mu) is the coefficient of 1 in L(ns)...L(n1) L(-mu)1,
    computed recursively through the lower levels.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    return GramMatrix(level, tuple(basis(level)), _gram_rows(params.c, params.h, level))


def kac_determinant(params: ModuleParams, level: int) -> Fraction:
    return linalg.determinant(gram_matrix(params, level).entries)


CERTIFICATE_PRIMES = (2147483647, 2147483629, 2147483587)


def kac_determinant_nonzero(params: ModuleParams, level: int) -> bool:
    """Exact decision of kac_determinant(params, level) != 0.

    A nonzero determinant modulo some prime certifies nonvanishing; if every
    certificate prime gives 0 the exact determinant decides.
    """
    entries = gram_matrix(params, level).entries
    for prime in CERTIFICATE_PRIMES:
        try:
            if linalg.determinant_mod(entries, prime):
                return True
        except ZeroDivisionError:
            continue
    return linalg.determinant(entries) != 0


def mode_matrix(params: ModuleParams, m: int, level: int) -> List[List[Fraction]]:
    """Matrix of L(m) from the level subspace to level - m (rows index the target)."""
    src = basis(level)
    tgt = basis(level - m) if level - m >= 0 else []
    cols = [apply_mode(m, VermaVector.monomial(params, mu)) for mu in src]
    return [[col.coeff(nu) for col in cols] for nu in tgt]


@dataclass(frozen=True)
class SingularVector:
    level: int
    vector: VermaVector

    def to_json(self) -> Dict[str, object]:
        return {"level": self.level, "vector": self.vector.to_json()}


def is_singular(v: VermaVector) -> bool:
    return apply_mode(1, v).is_zero() and apply_mode(2, v).is_zero()


def normalize_singular(v: VermaVector) -> VermaVector:
    n = v.level
    lead = v.coeff((1,) * n)
    if lead == 0:
        raise StructureError(f"singular vector {v} has zero L(-1)^{n} coefficient")
    return v.scale(1 / lead)


def find_singular(params: ModuleParams, level: int) -> List[SingularVector]:
    """Joint kernel of L(1) and L(2) on the level subspace, normalized."""
    if level < 1:
        raise ValueError("level must be >= 1")
    monos = basis(level)
    rows = mode_matrix(params, 1, level) + mode_matrix(params, 2, level)
    ker = linalg.kernel(rows, len(monos))
    if len(ker) > 1:
        raise StructureError(f"kernel of dimension {len(ker)} at level {level}; expected at most 1")
    out = []
    for k in ker:
        vec = VermaVector(params, dict(zip(monos, k)))
        out.append(SingularVector(level, normalize_singular(vec)))
    return out


def singular_levels(params: ModuleParams, max_level: int) -> List[int]:
    return [lv for lv in range(1, max_level + 1) if find_singular(params, lv)]


# Feigin-Fuchs line and blocks ----------------------------------------------


@dataclass(frozen=True)
class FFLineData:
    nu: QuadScalar
    beta: Optional[QuadScalar]

    @property
    def outside_tower(self) -> bool:
        return self.beta is None

    def to_json(self) -> Dict[str, object]:
        return {"nu": self.nu.to_json(), "beta": self.beta.to_json() if self.beta is not None else "outside"}


def ff_line(params: ModuleParams) -> FFLineData:
    """nu = (c - 13 + sqrt((c-1)(c-25)))/12 and beta = sqrt(-4 nu h + (nu+1)^2)."""
    c, h = params.c, params.h
    root = QuadScalar.sqrt_of((c - 1) * (c - 25))
    nu = (root + (c - 13)) / 12
    radicand = nu * (-4 * h) + (nu + 1) * (nu + 1)
    beta = radicand.sqrt()
    return FFLineData(nu, beta)


BLOCK_CASES = ("A", "B", "C", "D", "Undetermined")


@dataclass(frozen=True)
class BlockReport:
    case: str
    level_cap: int
    integer_points: Tuple[Tuple[int, int], ...]
    members: Tuple[Fraction, ...]
    line: FFLineData
    h_odd_even: Optional[Dict[int, Fraction]] = None
    h_prime: Optional[Dict[int, Fraction]] = None

    def to_json(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "case": self.case if self.case != "Undetermined" else f"Undetermined({self.level_cap})",
            "level_cap": self.level_cap,
            "integer_points": [[r, s] for r, s in self.integer_points],
            "members": [scalar_to_str(m) for m in self.members],
            "line": self.line.to_json(),
        }
        if self.h_odd_even is not None:
            out["h_i"] = {str(i): scalar_to_str(v) for i, v in sorted(self.h_odd_even.items())}
            out["h_prime_i"] = {str(i): scalar_to_str(v) for i, v in sorted(self.h_prime.items())}
        return out


def _rational_line_points(nu: Fraction, beta: Fraction, cap: int) -> List[Tuple[int, int]]:
    """Integer points of r + nu*s + beta = 0 with |rs| <= cap."""
    pts = set()
    for s in range(-cap, cap + 1):
        r = -nu * s - beta
        if r.denominator == 1 and abs(int(r) * s) <= cap:
            pts.add((int(r), s))
    s0 = -beta / nu
    if s0.denominator == 1:
        pts.add((0, int(s0)))
    return sorted(pts, key=lambda p: (p[0] * p[1], p[0]))


def _has_rational_points(nu: Fraction, beta: Fraction) -> bool:
    period = nu.denominator
    return any((-nu * s - beta).denominator == 1 for s in range(period))


def _label_points(points: Sequence[Tuple[int, int]], axis_free: bool) -> Dict[int, Tuple[int, int]]:
    """Label points by increasing rs; positive rs get indices 1, 2, ... in order."""
    ordered = sorted(points, key=lambda p: (p[0] * p[1], p[0]))
    pos = [p for p in ordered if p[0] * p[1] > 0]
    nonpos = [p for p in ordered if p[0] * p[1] <= 0]
    labels: Dict[int, Tuple[int, int]] = {}
    for i, p in enumerate(pos, start=1):
        labels[i] = p
    for i, p in enumerate(reversed(nonpos)):
        labels[-i] = p
    return labels


def classify_block(params: ModuleParams, level_cap: int) -> BlockReport:
    """Classify M(c, h) by the integer points of the line r + nu s + beta = 0."""
    if level_cap < 1:
        raise ValueError("level_cap must be >= 1")
    line = ff_line(params)
    nu, beta, h = line.nu, line.beta, params.h
    if beta is None:
        return BlockReport("A", level_cap, (), (h,), line)
    if not nu.is_rational:
        if not beta.is_rational and beta.d != nu.d:
            return BlockReport("A", level_cap, (), (h,), line)
        s = -beta.b / nu.b
        r = -beta.a - nu.a * s
        if s.denominator != 1 or r.denominator != 1:
            return BlockReport("A", level_cap, (), (h,), line)
        r, s = int(r), int(s)
        pts = ((r, s),) if abs(r * s) <= level_cap else ()
        if r * s == 0:
            return BlockReport("A", level_cap, pts, (h,), line)
        return BlockReport("B", level_cap, pts, tuple(sorted({h, h + r * s})), line)
    if not beta.is_rational:
        return BlockReport("A", level_cap, (), (h,), line)
    nu_q, beta_q = nu.rational(), beta.rational()
    if not _has_rational_points(nu_q, beta_q):
        return BlockReport("A", level_cap, (), (h,), line)
    pts = _rational_line_points(nu_q, beta_q, level_cap)
    crosses = (-beta_q).denominator == 1 or (-beta_q / nu_q).denominator == 1
    if crosses:
        members = tuple(sorted({h + r * s for r, s in pts}))
        return BlockReport("C", level_cap, tuple(pts), members, line)
    labels = _label_points(pts, True)
    if 1 not in labels:
        # every point has rs < 0: M(c, h) is the bottom of its chain and the
        # auxiliary-line labelling is undefined; report the points' weights only
        members = tuple(sorted({h} | {h + r * s for r, s in pts}))
        return BlockReport("D", level_cap, tuple(pts), members, line)
    r1, s1 = labels[1]
    aux_beta = -(-r1) - nu_q * s1
    aux_pts = _rational_line_points(nu_q, aux_beta, level_cap)
    aux = _label_points(aux_pts, False)
    rs = {i: p[0] * p[1] for i, p in labels.items()}
    rs_aux = {i: p[0] * p[1] for i, p in aux.items()}
    h_i: Dict[int, Fraction] = {}
    h_p: Dict[int, Fraction] = {}
    for i in sorted(set(rs) | set(rs_aux)):
        if i % 2:
            if i in rs:
                h_i[i] = h + rs[i]
            if i + 1 in rs:
                h_p[i] = h + rs[i + 1]
        else:
            if i in rs_aux:
                h_i[i] = h + rs[1] + rs_aux[i]
            if i + 1 in rs_aux:
                h_p[i] = h + rs[1] + rs_aux[i + 1]
    members = tuple(sorted(set(h_i.values()) | set(h_p.values()) | {h}))
    return BlockReport("D", level_cap, tuple(pts), members, line, h_i, h_p)


# Graded ambient spaces and submodules --------------------------------------

Key = Tuple[int, Monomial]
DSVector = Tuple[VermaVector, ...]


def _key_order(k: Key):
    return (k[0],) + monomial_key(k[1])


class DirectSum:
    """The module M(c, h_1) + ... + M(c, h_n), graded by conformal weight."""

    def __init__(self, components: Sequence[ModuleParams]) -> None:
        if not components:
            raise ValueError("need at least one component")
        cs = {p.c for p in components}
        if len(cs) != 1:
            raise ValueError("all components must share the central charge")
        self.components: Tuple[ModuleParams, ...] = tuple(components)
        self.c = components[0].c

    def __len__(self) -> int:
        return len(self.components)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DirectSum) and self.components == other.components

    def __hash__(self) -> int:
        return hash(self.components)

    @property
    def min_weight(self) -> Fraction:
        return min(p.h for p in self.components)

    def zero(self) -> DSVector:
        return tuple(VermaVector.zero(p) for p in self.components)

    def embed(self, i: int, v: VermaVector) -> DSVector:
        if v.params != self.components[i]:
            raise ValueError("vector does not belong to this component")
        out = list(self.zero())
        out[i] = v
        return tuple(out)

    def coerce(self, vec: Union[VermaVector, Sequence[VermaVector]]) -> DSVector:
        if isinstance(vec, VermaVector):
            if len(self.components) != 1:
                raise ValueError("bare vectors only coerce into one-component sums")
            vec = (vec,)
        vec = tuple(vec)
        if len(vec) != len(self.components) or any(v.params != p for v, p in zip(vec, self.components)):
            raise ValueError("vector does not match the direct sum")
        return vec

    def coords(self, vec: DSVector) -> Dict[Key, Fraction]:
        return {(i, m): a for i, v in enumerate(vec) for m, a in v.terms.items()}

    def from_coords(self, coords: Mapping[Key, Fraction]) -> DSVector:
        parts: List[Dict[Monomial, Fraction]] = [{} for _ in self.components]
        for (i, m), a in coords.items():
            if a:
                parts[i][m] = a
        return tuple(VermaVector(p, t) for p, t in zip(self.components, parts))

    def apply_mode(self, m: int, vec: DSVector) -> DSVector:
        return tuple(apply_mode(m, v) for v in vec)

    def apply_word(self, word: Sequence[int], vec: DSVector) -> DSVector:
        return tuple(apply_word(word, v) for v in vec)

    def add(self, a: DSVector, b: DSVector) -> DSVector:
        return tuple(x + y for x, y in zip(a, b))

    def sub(self, a: DSVector, b: DSVector) -> DSVector:
        return tuple(x - y for x, y in zip(a, b))

    def scale(self, a: DSVector, k) -> DSVector:
        return tuple(x.scale(k) for x in a)

    def is_zero(self, vec: DSVector) -> bool:
        return all(v.is_zero() for v in vec)

    def weights(self, max_weight: Fraction) -> List[Fraction]:
        """All conformal weights <= max_weight that carry a nonzero graded piece."""
        ws = set()
        for p in self.components:
            n = 0
            while p.h + n <= max_weight:
                ws.add(p.h + n)
                n += 1
        return sorted(ws)

    def basis_keys(self, weight: Fraction) -> List[Key]:
        keys: List[Key] = []
        for i, p in enumerate(self.components):
            lv = weight - p.h
            if lv >= 0 and lv.denominator == 1:
                keys.extend((i, m) for m in basis(int(lv)))
        return keys

    def dim(self, weight: Fraction) -> int:
        return len(self.basis_keys(weight))

    def weight_components(self, vec: DSVector) -> Dict[Fraction, DSVector]:
        by_w: Dict[Fraction, Dict[Key, Fraction]] = {}
        for i, v in enumerate(vec):
            for m, a in v.terms.items():
                by_w.setdefault(self.components[i].h + sum(m), {})[(i, m)] = a
        return {w: self.from_coords(c) for w, c in sorted(by_w.items())}

    def vector_weight(self, vec: DSVector) -> Fraction:
        ws = list(self.weight_components(vec))
        if len(ws) != 1:
            raise ValueError("vector is not weight-homogeneous")
        return ws[0]


class Submodule:
    """A graded subspace of a direct sum, stored weight by weight up to max_weight."""

    def __init__(self, ambient: DirectSum, max_weight: Fraction, spaces: Dict[Fraction, linalg.SparseEchelon]) -> None:
        self.ambient = ambient
        self.max_weight = as_scalar(max_weight)
        self._spaces = spaces

    # construction
    @classmethod
    def _empty_spaces(cls, ambient: DirectSum, max_weight: Fraction) -> Dict[Fraction, linalg.SparseEchelon]:
        return {w: linalg.SparseEchelon(order=_key_order) for w in ambient.weights(max_weight)}

    @classmethod
    def generated(cls, ambient: DirectSum, generators: Iterable, max_weight) -> "Submodule":
        """Submodule generated by the given vectors, truncated at max_weight.

        First closes the generators under L(1) and L(2) (which generate all
        positive modes), then applies L(-1) and L(-2) weight by weight.
        """
        max_weight = as_scalar(max_weight)
        lower = cls._empty_spaces(ambient, max_weight)
        queue: List[Tuple[Fraction, DSVector]] = []
        for g in generators:
            for w, part in ambient.weight_components(ambient.coerce(g)).items():
                if w <= max_weight:
                    queue.append((w, part))
        while queue:
            w, vec = queue.pop()
            if not lower[w].add(ambient.coords(vec)):
                continue
            for m in (1, 2):
                img = ambient.apply_mode(m, vec)
                if not ambient.is_zero(img):
                    queue.append((w - m, img))
        spaces = cls._empty_spaces(ambient, max_weight)
        for w in sorted(spaces):
            space = spaces[w]
            for row in lower[w].rows.values():
                space.add(row)
            for m in (1, 2):
                prev = spaces.get(w - m)
                if prev is None:
                    continue
                for row in list(prev.rows.values()):
                    space.add(ambient.coords(ambient.apply_mode(-m, ambient.from_coords(row))))
        return cls(ambient, max_weight, spaces)

    @classmethod
    def whole(cls, ambient: DirectSum, max_weight) -> "Submodule":
        max_weight = as_scalar(max_weight)
        spaces = cls._empty_spaces(ambient, max_weight)
        for w, sp in spaces.items():
            for k in ambient.basis_keys(w):
                sp.add({k: Fraction(1)})
        return cls(ambient, max_weight, spaces)

    @classmethod
    def zero(cls, ambient: DirectSum, max_weight) -> "Submodule":
        max_weight = as_scalar(max_weight)
        return cls(ambient, max_weight, cls._empty_spaces(ambient, max_weight))

    @classmethod
    def from_spans(cls, ambient: DirectSum, spans: Mapping[Fraction, Iterable], max_weight,
                   validate: bool = True) -> "Submodule":
        """Build from explicit per-weight spanning sets; rejects non-submodules."""
        max_weight = as_scalar(max_weight)
        spaces = cls._empty_spaces(ambient, max_weight)
        for w, vecs in spans.items():
            w = as_scalar(w)
            if w not in spaces:
                continue
            for v in vecs:
                v = ambient.coerce(v)
                if ambient.vector_weight(v) != w:
                    raise StructureError("spanning vector has the wrong weight")
                spaces[w].add(ambient.coords(v))
        sub = cls(ambient, max_weight, spaces)
        if validate:
            bad = sub.closure_failures()
            if bad:
                raise StructureError(f"not a submodule: {bad[0]}")
        return sub

    # queries
    def weights(self) -> List[Fraction]:
        return sorted(self._spaces)

    def dim(self, weight) -> int:
        sp = self._spaces.get(as_scalar(weight))
        return len(sp) if sp is not None else 0

    def dims(self) -> Dict[Fraction, int]:
        return {w: len(sp) for w, sp in sorted(self._spaces.items())}

    def basis_vectors(self, weight) -> List[DSVector]:
        sp = self._spaces.get(as_scalar(weight))
        if sp is None:
            return []
        return [self.ambient.from_coords(sp.rows[p]) for p in sp.pivots()]

    def contains(self, vec) -> bool:
        vec = self.ambient.coerce(vec)
        for w, part in self.ambient.weight_components(vec).items():
            if w > self.max_weight:
                raise ValueError("vector exceeds the stored weight range")
            if not self._spaces[w].contains(self.ambient.coords(part)):
                return False
        return True

    def reduce(self, vec) -> DSVector:
        """Canonical representative of vec modulo this subspace."""
        vec = self.ambient.coerce(vec)
        out: Dict[Key, Fraction] = {}
        for w, part in self.ambient.weight_components(vec).items():
            sp = self._spaces.get(w)
            red = sp.reduce(self.ambient.coords(part)) if sp is not None else self.ambient.coords(part)
            out.update(red)
        return self.ambient.from_coords(out)

    def lowest_weight(self) -> Optional[Fraction]:
        return next((w for w in self.weights() if self.dim(w)), None)

    def closure_failures(self, modes: Sequence[int] = (1, 2, -1, -2)) -> List[str]:
        out = []
        for w in self.weights():
            for vec in self.basis_vectors(w):
                for m in modes:
                    if w - m > self.max_weight:
                        continue
                    img = self.ambient.apply_mode(m, vec)
                    if not self.ambient.is_zero(img) and not self.contains(img):
                        out.append(f"L({m}) leaves the subspace at weight {w}")
                        break
        return out

    def is_submodule(self) -> bool:
        return not self.closure_failures()

    def __le__(self, other: "Submodule") -> bool:
        return all(other.contains(v) for w in self.weights() for v in self.basis_vectors(w))


def sum_dimension(a: Submodule, b: Submodule, weight) -> int:
    sp = linalg.SparseEchelon(order=_key_order)
    for sub in (a, b):
        for v in sub.basis_vectors(weight):
            sp.add(sub.ambient.coords(v))
    return len(sp)


# Projection split -----------------------------------------------------------


class ProjectionSplit:
    """The decomposition M = W1 + W2 with W2 generated by one singular vector.

    W1 is spanned by prefix*L(-1)^q with all prefix modes >= 2 and q < N.
    W2 has the basis prefix*L(-1)^(q-N)*s for q >= N, which is unitriangular
    against the monomials prefix*L(-1)^q, so projecting is a descent on q.
    """

    def __init__(self, params: ModuleParams, singular: VermaVector) -> None:
        if singular.params != params:
            raise ValueError("singular vector belongs to another module")
        if not singular or not singular.is_homogeneous():
            raise ValueError("singular vector must be nonzero and homogeneous")
        if not is_singular(singular):
            raise StructureError("generator is not annihilated by L(1) and L(2)")
        self.params = params
        self.s = normalize_singular(singular) if singular.level else singular.scale(1 / singular.coeff(()))
        self.N = self.s.level
        self._w2_cache: Dict[Tuple[Monomial, int], VermaVector] = {}

    @property
    def singular(self) -> SingularVector:
        return SingularVector(self.N, self.s)

    def w2_vector(self, prefix: Monomial, q: int) -> VermaVector:
        """prefix * L(-1)^(q-N) * s, the W2 basis vector led by prefix*L(-1)^q."""
        key = (prefix, q)
        vec = self._w2_cache.get(key)
        if vec is None:
            word = [-n for n in prefix] + [-1] * (q - self.N)
            vec = apply_word(word, self.s)
            self._w2_cache[key] = vec
        return vec

    def decompose(self, v: VermaVector) -> Tuple[Dict[Tuple[Monomial, int], Fraction], VermaVector]:
        """Return (W2 coordinates keyed by (prefix, q), W1 remainder)."""
        if v.params != self.params:
            raise ValueError("vector belongs to another module")
        rest = dict(v.terms)
        coeffs: Dict[Tuple[Monomial, int], Fraction] = {}
        while True:
            best = None
            for mono in rest:
                prefix, q = split_monomial(mono)
                if q >= self.N and (best is None or q > best[1]):
                    best = (prefix, q, mono)
            if best is None:
                break
            prefix, q, mono = best
            a = rest[mono]
            coeffs[(prefix, q)] = coeffs.get((prefix, q), 0) + a
            for m2, b in self.w2_vector(prefix, q).terms.items():
                val = rest.get(m2, 0) - a * b
                if val:
                    rest[m2] = val
                else:
                    rest.pop(m2, None)
        return coeffs, VermaVector(self.params, rest)

    def project(self, v: VermaVector) -> VermaVector:
        """pi_{W2}(v)."""
        coeffs, rest = self.decompose(v)
        return v - rest

    def generator_word(self, v: VermaVector) -> List[Tuple[Fraction, Tuple[int, ...]]]:
        """Words u with pi(v) = sum coeff * L(u) s; each word is prefix then L(-1) powers."""
        coeffs, _ = self.decompose(v)
        return [(a, tuple(-n for n in prefix) + (-1,) * (q - self.N)) for (prefix, q), a in sorted(coeffs.items())]

    def w1_basis(self, level: int) -> List[Monomial]:
        return [m for m in basis(level) if split_monomial(m)[1] < self.N]

    def w2_basis(self, level: int) -> List[VermaVector]:
        out = []
        for m in basis(level):
            prefix, q = split_monomial(m)
            if q >= self.N:
                out.append(self.w2_vector(prefix, q))
        return out

    def dims(self, level: int) -> Tuple[int, int]:
        return len(self.w1_basis(level)), len(self.w2_basis(level))

    def in_w1(self, v: VermaVector) -> bool:
        return all(split_monomial(m)[1] < self.N for m in v.terms)

    def w2_submodule(self, max_level: int) -> Submodule:
        return Submodule.generated(DirectSum([self.params]), [self.s], self.params.h + max_level)

    def to_json(self) -> Dict[str, object]:
        return {"params": self.params.to_json(), "N": self.N, "s": self.s.to_json()}


def projection_split(params: ModuleParams, search_level: int = 12) -> ProjectionSplit:
    """Split of M(c, h) along the submodule generated by its lowest singular vector.

    Block D inputs (two independent singular generators) are rejected.
    """
    report = classify_block(params, max(search_level, 1))
    if report.case == "D":
        raise StructureError("block D modules have two singular generators; no split is available")
    for lv in range(1, search_level + 1):
        found = find_singular(params, lv)
        if found:
            return ProjectionSplit(params, found[0].vector)
    raise StructureError(f"no singular vector up to level {search_level}")


def apply_projection(split: ProjectionSplit, v: VermaVector) -> VermaVector:
    return split.project(v)


class RestrictedSplit:
    """The split induced on a submodule T with T inside W2 or W2 inside T.

    T1 = W1 & T, T2 = W2 & T and pi restricted to T.
    """

    def __init__(self, split: ProjectionSplit, T: Submodule) -> None:
        self.split = split
        self.T = T

    def project(self, v: VermaVector) -> VermaVector:
        if not self.T.contains(v):
            raise ValueError("vector is not in the submodule")
        return self.split.project(v)

    def dims(self, level: int) -> Tuple[int, int, int]:
        """(dim T1, dim T2, dim T) at the level; T1 = ker pi|T, T2 = W2 & T."""
        w = self.split.params.h + level
        vecs = [v[0] for v in self.T.basis_vectors(w)]
        dim_t = len(vecs)
        monos = basis(level)
        images = [[self.split.project(v).coeff(m) for m in monos] for v in vecs]
        dim_t1 = dim_t - linalg.rank(images) if images else 0
        w2 = [[b.coeff(m) for m in monos] for b in self.split.w2_basis(level)]
        tv = [[v.coeff(m) for m in monos] for v in vecs]
        dim_sum = linalg.rank(w2 + tv) if (w2 or tv) else 0
        dim_t2 = len(w2) + dim_t - dim_sum
        return dim_t1, dim_t2, dim_t


class QuotientSplit:
    """The split induced on M/T for a submodule T with pi(T) inside T.

    Classes are represented by vectors reduced modulo T; the induced
    projection is reduce o pi.
    """

    def __init__(self, split: ProjectionSplit, T: Submodule) -> None:
        self.split = split
        self.T = T

    def reduce(self, v: VermaVector) -> VermaVector:
        return self.T.reduce(v)[0]

    def project(self, v: VermaVector) -> VermaVector:
        return self.reduce(self.split.project(v))

    def dims(self, level: int) -> Tuple[int, int, int]:
        """(dim Q1, dim Q2, dim M/T) at the level with Q1 = (W1+T)/T, Q2 = (W2+T)/T."""
        w = self.split.params.h + level
        monos = basis(level)
        tv = [[v[0].coeff(m) for m in monos] for v in self.T.basis_vectors(w)]
        w1 = [[Fraction(int(m == b)) for m in monos] for b in self.split.w1_basis(level)]
        w2 = [[b.coeff(m) for m in monos] for b in self.split.w2_basis(level)]
        rt = len(tv)

        def rk(rows):
            return linalg.rank(rows) if rows else 0

        return rk(w1 + tv) - rt, rk(w2 + tv) - rt, len(monos) - rt


def _check_compatible(split: ProjectionSplit, T: Submodule) -> None:
    if T.ambient != DirectSum([split.params]):
        raise ValueError("submodule lives in a different module")
    bad = T.closure_failures()
    if bad:
        raise StructureError(f"T is not a submodule: {bad[0]}")


def restrict_split(split: ProjectionSplit, T: Submodule) -> RestrictedSplit:
    _check_compatible(split, T)
    levels = [int(w - split.params.h) for w in T.weights()]
    sub_w2 = all(split.project(v[0]) == v[0] for w in T.weights() for v in T.basis_vectors(w))
    sup_w2 = all(T.contains(b) for lv in levels for b in split.w2_basis(lv))
    if not (sub_w2 or sup_w2):
        raise StructureError("T must contain W2 or lie inside W2")
    return RestrictedSplit(split, T)


def quotient_split(split: ProjectionSplit, T: Submodule) -> QuotientSplit:
    _check_compatible(split, T)
    for w in T.weights():
        for v in T.basis_vectors(w):
            if not T.contains(split.project(v[0])):
                raise StructureError("pi does not preserve T; the quotient split is undefined")
    return QuotientSplit(split, T)


# Direct sums: echelon generators and the projection onto a submodule --------


@dataclass
class EchelonGenerators:
    """Echelon data of a submodule of a direct sum of Verma modules.

    order lists component indices in processing order. generators maps a
    component index to a singular vector of the submodule whose components
    before it (in order) vanish and whose own component is nonzero.
    levels[i] is the level of the leading component, or None when N_i = 0.
    """

    ambient: DirectSum
    order: List[int]
    generators: Dict[int, DSVector]
    levels: Dict[int, Optional[int]]
    max_weight: Fraction

    def generator_list(self) -> List[DSVector]:
        return [self.generators[i] for i in self.order if i in self.generators]

    def to_json(self) -> Dict[str, object]:
        return {
            "components": [p.to_json() for p in self.ambient.components],
            "order": self.order,
            "generators": [
                {"component": i, "vector": [v.to_json() for v in self.generators[i]]}
                for i in self.order if i in self.generators
            ],
            "levels": {str(i): self.levels[i] for i in self.order},
        }


def _restrict_kernel(ambient: DirectSum, vecs: List[DSVector], killed: Sequence[int]) -> List[DSVector]:
    """Basis of the combinations of vecs whose components in `killed` vanish."""
    if not vecs:
        return []
    if not killed:
        return list(vecs)
    keys = sorted({k for v in vecs for k in ambient.coords(v) if k[0] in killed}, key=_key_order)
    if not keys:
        return list(vecs)
    coords = [ambient.coords(v) for v in vecs]
    rows = [[c.get(k, Fraction(0)) for c in coords] for k in keys]
    out = []
    for comb in linalg.kernel(rows, len(vecs)):
        acc: Dict[Key, Fraction] = {}
        for a, c in zip(comb, coords):
            if a:
                for k, b in c.items():
                    acc[k] = acc.get(k, 0) + a * b
        out.append(ambient.from_coords(acc))
    return out


def classify_direct_sum_submodule(ambient: DirectSum, generators: Iterable, level_cap: int) -> EchelonGenerators:
    """Echelon singular generators of the submodule generated by `generators`.

    Weights are truncated at (lowest weight of the sum) + level_cap. Components
    whose projection of the remaining kernel vanishes are appended with
    N_i = 0; otherwise the component with minimal lowest weight (smallest
    index on ties) is chosen and a singular generator is extracted.
    """
    max_weight = ambient.min_weight + level_cap
    gens = list(generators)
    S = Submodule.generated(ambient, gens, max_weight)
    weights = S.weights()
    base = {w: S.basis_vectors(w) for w in weights}
    order: List[int] = []
    chosen: Dict[int, DSVector] = {}
    levels: Dict[int, Optional[int]] = {}
    remaining = list(range(len(ambient)))
    while remaining:
        kernel = {w: _restrict_kernel(ambient, base[w], order) for w in weights}
        lowest: Dict[int, Tuple[Fraction, DSVector]] = {}
        for j in remaining:
            for w in weights:
                hit = next((v for v in kernel[w] if not v[j].is_zero()), None)
                if hit is not None:
                    lowest[j] = (w, hit)
                    break
        zero = [j for j in remaining if j not in lowest]
        for j in zero:
            order.append(j)
            levels[j] = None
            remaining.remove(j)
        if not lowest:
            break
        j = min(lowest, key=lambda i: (lowest[i][0], i))
        w, vec = lowest[j]
        lead = vec[j]
        if not (is_singular(lead) and all(is_singular(x) for x in vec)):
            raise StructureError("extracted generator is not singular; the submodule is outside blocks A-C")
        scale = 1 / (lead.coeff((1,) * lead.level) if lead.level else lead.coeff(()))
        chosen[j] = ambient.scale(vec, scale)
        levels[j] = lead.level
        order.append(j)
        remaining.remove(j)
    ech = EchelonGenerators(ambient, order, chosen, levels, max_weight)
    check = Submodule.generated(ambient, ech.generator_list(), max_weight)
    for w in weights:
        if check.dim(w) != S.dim(w):
            raise StructureError(
                f"singular generators found below the cap do not exhaust the submodule at weight {w}; raise level_cap")
    return ech


class DirectSumProjection:
    """pi_W = rho o pi_N o rho^{-1} on a direct sum, evaluated componentwise.

    Components are processed in echelon order: the W2-coordinates u_i of the
    current component (after subtracting the images of earlier generators)
    determine the contribution u_i * w_i of generator w_i.
    """

    def __init__(self, echelon: EchelonGenerators, splits: Mapping[int, ProjectionSplit]) -> None:
        self.echelon = echelon
        self.ambient = echelon.ambient
        self.splits = dict(splits)

    def _words(self, i: int, v: VermaVector) -> List[Tuple[Fraction, Tuple[int, ...]]]:
        return self.splits[i].generator_word(v)

    def project(self, vec) -> DSVector:
        amb = self.ambient
        vec = amb.coerce(vec)
        residual = list(vec)
        out = amb.zero()
        for i in self.echelon.order:
            gen = self.echelon.generators.get(i)
            if gen is None:
                continue
            words = self._words(i, residual[i])
            if not words:
                continue
            image = amb.zero()
            for a, word in words:
                image = amb.add(image, amb.scale(amb.apply_word(word, gen), a))
            out = amb.add(out, image)
            residual = [r - x for r, x in zip(residual, image)]
        return out

    def rho(self, vec) -> DSVector:
        """The unitriangular map: identity on the complements, N_i -> W along generators."""
        amb = self.ambient
        vec = amb.coerce(vec)
        out = list(vec)
        for i in self.echelon.order:
            gen = self.echelon.generators.get(i)
            if gen is None:
                continue
            words = self._words(i, vec[i])
            for a, word in words:
                for k in range(len(amb)):
                    if k != i:
                        out[k] = out[k] + apply_word(word, gen[k]).scale(a)
        return tuple(out)

    def pi_n(self, vec) -> DSVector:
        amb = self.ambient
        vec = amb.coerce(vec)
        return tuple(self.splits[i].project(v) if i in self.splits else VermaVector.zero(v.params)
                     for i, v in enumerate(vec))


def build_pi_W(echelon: EchelonGenerators, splits: Optional[Mapping[int, ProjectionSplit]] = None) -> DirectSumProjection:
    made: Dict[int, ProjectionSplit] = {}
    for i, gen in echelon.generators.items():
        if splits is not None and i in splits:
            sp = splits[i]
            if sp.s != gen[i]:
                raise StructureError(f"split for component {i} does not match the echelon generator")
            made[i] = sp
        else:
            made[i] = ProjectionSplit(echelon.ambient.components[i], gen[i])
    return DirectSumProjection(echelon, made)
