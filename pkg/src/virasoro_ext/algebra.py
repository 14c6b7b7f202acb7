"""Exact scalars, PBW vectors of Virasoro Verma modules, and the mode action."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

Monomial = Tuple[int, ...]
Scalar = Fraction
ScalarLike = Union[int, str, Fraction]


def as_scalar(value: ScalarLike) -> Fraction:
    """Parse an exact rational from an int, a Fraction or a "p/q" string.

    Floats are rejected so that no rounding can ever enter a computation.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not scalars")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if not text or any(ch in text for ch in ".eE"):
            raise ValueError(f"not an exact rational: {value!r}")
        return Fraction(text)
    raise TypeError(f"cannot use {type(value).__name__} as an exact scalar")


def scalar_to_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def bracket(m: int, n: int, c: ScalarLike) -> Tuple[int, Fraction]:
    """Return (coefficient of L(m+n), central term) of [L(m), L(n)]."""
    c = as_scalar(c)
    central = Fraction(m**3 - m, 12) * c if m + n == 0 else Fraction(0)
    return m - n, central


# Quadratic scalars ----------------------------------------------------------


def _squarefree_split(n: int) -> Tuple[int, int]:
    """Write n > 0 as f*f*r with r squarefree (up to very large prime factors)."""
    f, r = 1, 1
    p = 2
    while p * p <= n and p < 100000:
        while n % (p * p) == 0:
            n //= p * p
            f *= p
        if n % p == 0:
            n //= p
            r *= p
        p += 1 if p == 2 else 2
    root = math.isqrt(n)
    if root * root == n:
        f *= root
    else:
        r *= n
    return f, r


def rational_sqrt(x: Fraction) -> "Fraction | None":
    """Exact square root of a non-negative rational, or None if irrational."""
    if x < 0:
        return None
    a, b = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if a * a == x.numerator and b * b == x.denominator:
        return Fraction(a, b)
    return None


def canonical_radicand(d: Fraction) -> Tuple[Fraction, int]:
    """Return (k, r) with sqrt(d) = k * sqrt(r) and r a squarefree integer (r may be negative)."""
    if d == 0:
        return Fraction(0), 1
    sign = -1 if d < 0 else 1
    num = abs(d.numerator) * d.denominator
    f, r = _squarefree_split(num)
    return Fraction(f, d.denominator), sign * r


@dataclass(frozen=True)
class QuadScalar:
    """The number a + b*sqrt(d) with a, b rational and d a squarefree integer.

    A rational value is stored with b = 0 and d = 1, so that equality is
    structural. d may be negative.
    """

    a: Fraction
    b: Fraction = Fraction(0)
    d: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", as_scalar(self.a))
        object.__setattr__(self, "b", as_scalar(self.b))
        b, d = self.b, int(self.d)
        if b != 0 and d not in (0, 1):
            k, d = canonical_radicand(Fraction(d))
            b *= k
        if b == 0 or d == 0:
            b, d = Fraction(0), 1
        if d == 1:
            object.__setattr__(self, "a", self.a + b)
            b = Fraction(0)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)

    @staticmethod
    def sqrt_of(x: ScalarLike) -> "QuadScalar":
        """Square root of a rational; principal branch (i*sqrt(|x|) for x < 0)."""
        x = as_scalar(x)
        k, r = canonical_radicand(x)
        if r == 1:
            return QuadScalar(k)
        return QuadScalar(Fraction(0), k, r)

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def rational(self) -> Fraction:
        if self.b != 0:
            raise ValueError(f"{self} is not rational")
        return self.a

    def _field(self, other: "QuadScalar") -> int:
        if self.d == 1:
            return other.d
        if other.d == 1 or other.d == self.d:
            return self.d
        raise ValueError(f"radicands {self.d} and {other.d} differ")

    @staticmethod
    def _coerce(x: "QuadScalar | ScalarLike") -> "QuadScalar":
        return x if isinstance(x, QuadScalar) else QuadScalar(as_scalar(x))

    def __add__(self, other):
        o = self._coerce(other)
        return QuadScalar(self.a + o.a, self.b + o.b, self._field(o))

    __radd__ = __add__

    def __neg__(self):
        return QuadScalar(-self.a, -self.b, self.d)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        d = self._field(o)
        return QuadScalar(self.a * o.a + self.b * o.b * d, self.a * o.b + self.b * o.a, d)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadScalar":
        return QuadScalar(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.d * self.b * self.b

    def __truediv__(self, other):
        o = self._coerce(other)
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero quadratic scalar")
        num = self * o.conjugate()
        return QuadScalar(num.a / n, num.b / n, num.d)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.b == 0 and self.a == other
        if isinstance(other, QuadScalar):
            return (self.a, self.b, self.d) == (other.a, other.b, other.d)
        return NotImplemented

    def __hash__(self):
        return hash((self.a, self.b, self.d)) if self.b else hash(self.a)

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def is_integer(self) -> bool:
        return self.b == 0 and self.a.denominator == 1

    def sqrt(self) -> "QuadScalar | None":
        """Exact square root inside Q(sqrt(d)), or None if there is none.

        For a rational value the root may open a new radicand. The returned
        root is the one with x > 0, or x == 0 and y > 0, writing x + y*sqrt(d).
        """
        if self.b == 0:
            return QuadScalar.sqrt_of(self.a)
        n = rational_sqrt(self.norm()) if self.norm() >= 0 else None
        if n is None:
            return None
        for half in ((self.a + n) / 2, (self.a - n) / 2):
            x = rational_sqrt(half)
            if x:
                return QuadScalar(x, self.b / (2 * x), self.d)
        return None

    def to_json(self) -> Dict[str, str]:
        return {"a": scalar_to_str(self.a), "b": scalar_to_str(self.b), "d": scalar_to_str(Fraction(self.d))}

    @staticmethod
    def from_json(data: Mapping[str, str]) -> "QuadScalar":
        d = as_scalar(data["d"])
        if d.denominator != 1:
            raise ValueError("radicand must be an integer")
        return QuadScalar(as_scalar(data["a"]), as_scalar(data["b"]), int(d))

    def __repr__(self) -> str:
        if self.b == 0:
            return f"QuadScalar({self.a})"
        return f"QuadScalar({self.a} + {self.b}*sqrt({self.d}))"


# Module parameters and vectors ---------------------------------------------


@dataclass(frozen=True)
class ModuleParams:
    c: Fraction
    h: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", as_scalar(self.c))
        object.__setattr__(self, "h", as_scalar(self.h))

    def to_json(self) -> Dict[str, str]:
        return {"c": scalar_to_str(self.c), "h": scalar_to_str(self.h)}

    @staticmethod
    def from_json(data: Mapping[str, str]) -> "ModuleParams":
        return ModuleParams(as_scalar(data["c"]), as_scalar(data["h"]))


def _check_monomial(mono: Sequence[int]) -> Monomial:
    mono = tuple(int(n) for n in mono)
    if any(n < 1 for n in mono) or any(mono[i] < mono[i + 1] for i in range(len(mono) - 1)):
        raise ValueError(f"not a weakly decreasing positive mode sequence: {mono}")
    return mono


def monomial_key(mono: Monomial) -> Tuple[int, Tuple[int, ...]]:
    """Sort key: by level, then lexicographically descending as in basis()."""
    return (sum(mono), tuple(-n for n in mono) + (0,))


class VermaVector:
    """An exact finite combination of PBW monomials L(-n1)...L(-ns)1 in M(c, h)."""

    __slots__ = ("params", "_terms", "_hash")

    def __init__(self, params: ModuleParams, terms: Mapping[Sequence[int], ScalarLike] | None = None,
                 *, _trusted: bool = False) -> None:
        self.params = params
        if _trusted:
            self._terms = terms  # type: ignore[assignment]
        else:
            clean: Dict[Monomial, Fraction] = {}
            for mono, coeff in (terms or {}).items():
                key = _check_monomial(mono)
                value = clean.get(key, Fraction(0)) + as_scalar(coeff)
                if value:
                    clean[key] = value
                else:
                    clean.pop(key, None)
            self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, params: ModuleParams, terms: Dict[Monomial, Fraction]) -> "VermaVector":
        return cls(params, terms, _trusted=True)

    @classmethod
    def lowest(cls, params: ModuleParams) -> "VermaVector":
        return cls._raw(params, {(): Fraction(1)})

    @classmethod
    def monomial(cls, params: ModuleParams, modes: Sequence[int], coeff: ScalarLike = 1) -> "VermaVector":
        return cls(params, {tuple(modes): coeff})

    @classmethod
    def zero(cls, params: ModuleParams) -> "VermaVector":
        return cls._raw(params, {})

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return self._terms

    def items(self) -> List[Tuple[Monomial, Fraction]]:
        return sorted(self._terms.items(), key=lambda kv: monomial_key(kv[0]))

    def coeff(self, mono: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(mono), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def levels(self) -> List[int]:
        return sorted({sum(m) for m in self._terms})

    @property
    def level(self) -> int:
        lv = self.levels()
        if len(lv) != 1:
            raise ValueError("vector is not homogeneous" if lv else "zero vector has no level")
        return lv[0]

    def is_homogeneous(self) -> bool:
        return len(self.levels()) <= 1

    def component(self, level: int) -> "VermaVector":
        return VermaVector._raw(self.params, {m: a for m, a in self._terms.items() if sum(m) == level})

    def _same(self, other: "VermaVector") -> None:
        if self.params != other.params:
            raise ValueError(f"vectors live in different modules: {self.params} vs {other.params}")

    def __add__(self, other: "VermaVector") -> "VermaVector":
        self._same(other)
        out = dict(self._terms)
        for m, a in other._terms.items():
            v = out.get(m, 0) + a
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return VermaVector._raw(self.params, out)

    def __neg__(self) -> "VermaVector":
        return VermaVector._raw(self.params, {m: -a for m, a in self._terms.items()})

    def __sub__(self, other: "VermaVector") -> "VermaVector":
        return self + (-other)

    def scale(self, k: ScalarLike) -> "VermaVector":
        k = as_scalar(k)
        if k == 0:
            return VermaVector.zero(self.params)
        return VermaVector._raw(self.params, {m: a * k for m, a in self._terms.items()})

    def __mul__(self, k: ScalarLike) -> "VermaVector":
        return self.scale(k)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VermaVector):
            return NotImplemented
        return self.params == other.params and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.params, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for mono, a in self.items():
            word = "".join(f"L(-{n})" for n in mono) or "1"
            parts.append(f"{a}*{word}")
        return " + ".join(parts)

    def to_json(self) -> Dict[str, object]:
        return {
            "params": self.params.to_json(),
            "terms": [{"modes": list(m), "coeff": scalar_to_str(a)} for m, a in self.items()],
        }

    @staticmethod
    def from_json(data: Mapping[str, object]) -> "VermaVector":
        params = ModuleParams.from_json(data["params"])  # type: ignore[arg-type]
        terms: Dict[Tuple[int, ...], Fraction] = {}
        for t in data["terms"]:  # type: ignore[union-attr]
            key = _check_monomial(t["modes"])
            if key in terms:
                raise ValueError(f"duplicate monomial {key}")
            terms[key] = as_scalar(t["coeff"])
        return VermaVector(params, terms)


def linear_combination(params: ModuleParams, pairs: Iterable[Tuple[ScalarLike, VermaVector]]) -> VermaVector:
    out: Dict[Monomial, Fraction] = {}
    for k, v in pairs:
        k = as_scalar(k)
        if not k:
            continue
        for m, a in v.terms.items():
            val = out.get(m, 0) + k * a
            if val:
                out[m] = val
            else:
                out.pop(m, None)
    return VermaVector._raw(params, out)


# Mode action ---------------------------------------------------------------


def _accumulate(out: Dict[Monomial, Fraction], items: Iterable[Tuple[Monomial, Fraction]], k: Fraction) -> None:
    for m, a in items:
        v = out.get(m, 0) + k * a
        if v:
            out[m] = v
        else:
            out.pop(m, None)


@lru_cache(maxsize=None)
def _mode_on_monomial(c: Fraction, h: Fraction, m: int, mono: Monomial) -> Tuple[Tuple[Monomial, Fraction], ...]:
    """L(m) applied to a PBW monomial, returned as sorted (monomial, coeff) pairs."""
    if not mono:
        if m > 0:
            return ()
        if m == 0:
            return (((), h),) if h else ()
        return (((-m,), Fraction(1)),)
    if m == 0:
        weight = h + sum(mono)
        return ((mono, weight),) if weight else ()
    lead, rest = mono[0], mono[1:]
    if m < 0 and -m >= lead:
        return (((-m,) + mono, Fraction(1)),)
    # L(m) L(-lead) rest = L(-lead) L(m) rest + (m + lead) L(m - lead) rest + central
    out: Dict[Monomial, Fraction] = {}
    for m2, a in _mode_on_monomial(c, h, m, rest):
        _accumulate(out, _mode_on_monomial(c, h, -lead, m2), a)
    if m + lead:
        _accumulate(out, _mode_on_monomial(c, h, m - lead, rest), Fraction(m + lead))
    if m == lead:
        central = Fraction(m**3 - m, 12) * c
        if central:
            _accumulate(out, ((rest, Fraction(1)),), central)
    return tuple(sorted(out.items()))


def apply_mode(m: int, v: VermaVector) -> VermaVector:
    """The action of L(m) on a Verma vector, result in PBW normal order."""
    c, h = v.params.c, v.params.h
    out: Dict[Monomial, Fraction] = {}
    for mono, a in v.terms.items():
        _accumulate(out, _mode_on_monomial(c, h, m, mono), a)
    return VermaVector._raw(v.params, out)


def apply_word(word: Sequence[int], v: VermaVector) -> VermaVector:
    """Apply L(m1)...L(ml) to v (the rightmost mode acts first)."""
    for m in reversed(tuple(word)):
        v = apply_mode(m, v)
    return v


def monomial_vector(params: ModuleParams, word: Sequence[int]) -> VermaVector:
    """L(-n1)...L(-ns)1 for an arbitrary (not necessarily ordered) list of positive n."""
    return apply_word([-n for n in word], VermaVector.lowest(params))


# Bases, standard form and index --------------------------------------------


@lru_cache(maxsize=None)
def _partitions(n: int, largest: int) -> Tuple[Monomial, ...]:
    if n == 0:
        return ((),)
    out: List[Monomial] = []
    for first in range(min(n, largest), 0, -1):
        out.extend((first,) + rest for rest in _partitions(n - first, first))
    return tuple(out)


def basis(level: int) -> List[Monomial]:
    """All partitions of level, lexicographically descending: (3), (2,1), (1,1,1)."""
    if level < 0:
        raise ValueError("level must be non-negative")
    return list(_partitions(level, level))


def partitions_min_part(level: int, smallest: int) -> List[Monomial]:
    """Partitions of level all of whose parts are >= smallest."""
    return [p for p in _partitions(level, level) if not p or p[-1] >= smallest]


def split_monomial(mono: Monomial) -> Tuple[Monomial, int]:
    """Separate a monomial into its prefix of modes >= 2 and its trailing L(-1) power."""
    q = 0
    while q < len(mono) and mono[len(mono) - 1 - q] == 1:
        q += 1
    return mono[: len(mono) - q], q


@dataclass(frozen=True)
class StandardEntry:
    prefix: Monomial
    q: int
    coeff: Fraction


def standard_form(v: VermaVector) -> List[StandardEntry]:
    entries = []
    for mono, a in v.items():
        prefix, q = split_monomial(mono)
        entries.append(StandardEntry(prefix, q, a))
    return entries


def reassemble(params: ModuleParams, entries: Iterable[StandardEntry]) -> VermaVector:
    terms: Dict[Monomial, Fraction] = {}
    for e in entries:
        key = tuple(e.prefix) + (1,) * e.q
        if key in terms:
            raise ValueError(f"repeated standard-form entry {e.prefix}, {e.q}")
        terms[key] = e.coeff
    return VermaVector(params, terms)


def index(v: VermaVector) -> int:
    """Largest trailing L(-1) power in the standard form; -1 for the zero vector."""
    return max((split_monomial(m)[1] for m in v.terms), default=-1)


# Vacuum module and vertex operator modes -----------------------------------


def vacuum_params(c: ScalarLike) -> ModuleParams:
    return ModuleParams(as_scalar(c), Fraction(0))


def vacuum(c: ScalarLike) -> VermaVector:
    return VermaVector.lowest(vacuum_params(c))


def conformal_vector(c: ScalarLike) -> VermaVector:
    return VermaVector.monomial(vacuum_params(c), (2,))


def vacuum_reduce(v: VermaVector) -> VermaVector:
    """Image in V(c,0) = M(c,0)/<L(-1)1>: drop monomials that end with L(-1)."""
    if v.params.h != 0:
        raise ValueError("vacuum reduction needs h = 0")
    return VermaVector._raw(v.params, {m: a for m, a in v.terms.items() if not m or m[-1] >= 2})


def is_vacuum_representative(v: VermaVector) -> bool:
    return v.params.h == 0 and all(not m or m[-1] >= 2 for m in v.terms)


def vacuum_basis(level: int) -> List[Monomial]:
    """PBW basis of V(c,0) at a given level: partitions with all parts >= 2."""
    return partitions_min_part(level, 2)


def binomial(n: int, j: int) -> Fraction:
    """Generalized binomial coefficient n(n-1)...(n-j+1)/j! for any integer n."""
    if j < 0:
        return Fraction(0)
    num = 1
    for t in range(j):
        num *= n - t
    return Fraction(num, math.factorial(j))


@lru_cache(maxsize=None)
def _y_on_monomial(c: Fraction, h: Fraction, vmono: Monomial, k: int,
                   wmono: Monomial) -> Tuple[Tuple[Monomial, Fraction], ...]:
    """k-th mode of Y(L(-n1)...L(-ns)1, x) on a PBW monomial of M(c, h).

    Uses the iterate formula with u = omega, u_j = L(j - 1):
    (u_n v)_k = sum_j (-1)^j C(n, j) [u_{n-j} v_{k+j} - (-1)^n v_{n+k-j} u_j].
    """
    if not vmono:
        return ((wmono, Fraction(1)),) if k == -1 else ()
    n = 1 - vmono[0]
    rest = vmono[1:]
    wt_rest = sum(rest)
    wlevel = sum(wmono)
    out: Dict[Monomial, Fraction] = {}
    # first family: v'_{k+j} w is zero once k + j > wlevel + wt_rest - 1
    for j in range(0, max(-1, wlevel + wt_rest - 1 - k) + 1):
        coef = binomial(n, j) * (-1) ** j
        if not coef:
            continue
        inner = _y_on_monomial(c, h, rest, k + j, wmono)
        for m2, a in inner:
            _accumulate(out, _mode_on_monomial(c, h, n - j - 1, m2), coef * a)
    # second family: u_j w = L(j-1) w vanishes once j - 1 > wlevel
    sign_n = -1 if n % 2 else 1
    for j in range(0, wlevel + 2):
        coef = -binomial(n, j) * (-1) ** j * sign_n
        if not coef:
            continue
        for m2, a in _mode_on_monomial(c, h, j - 1, wmono):
            _accumulate(out, _y_on_monomial(c, h, rest, n + k - j, m2), coef * a)
    return tuple(sorted(out.items()))


def y_mode(v: VermaVector, k: int, w: VermaVector) -> VermaVector:
    """The mode v_k of Y(v, x) = sum_k v_k x^{-k-1} acting on w.

    v must be a representative of the vacuum module V(c, 0): no monomial may
    end with L(-1). With this convention 1_{-1} is the identity and the
    k-th mode of omega = L(-2)1 is L(k - 1).
    """
    if v.params.h != 0 or v.params.c != w.params.c:
        raise ValueError("v must lie in the vacuum module with the same central charge as w")
    if not is_vacuum_representative(v):
        raise ValueError("v has an L(-1) tail; it is not a vacuum-module representative")
    c, h = w.params.c, w.params.h
    out: Dict[Monomial, Fraction] = {}
    for vm, a in v.terms.items():
        for wm, b in w.terms.items():
            _accumulate(out, _y_on_monomial(c, h, vm, k, wm), a * b)
    return VermaVector._raw(w.params, out)


def weight(v: VermaVector) -> Fraction:
    """Conformal weight h + level of a homogeneous vector."""
    return v.params.h + v.level


def iter_basis_vectors(params: ModuleParams, max_level: int) -> Iterator[VermaVector]:
    for lv in range(max_level + 1):
        for mono in basis(lv):
            yield VermaVector._raw(params, {mono: Fraction(1)})
