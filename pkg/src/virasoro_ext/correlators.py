"""Exact rational correlators with poles at z_i = 0 and z_i = z_j.

Products of vertex operators of the conformal vector (and its derivatives)
are put in normal order by commuting annihilation parts Y-(x) (modes m >= -1)
to the right of creation parts Y+(y) (modes m <= -2) with the closed-form
commutator kernel. The projection onto W2 commutes with every creation mode,
so after normal ordering all mode sums acting on a fixed vector are finite
and the correlator is an exact rational function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .algebra import (
    ModuleParams,
    VermaVector,
    apply_mode,
    as_scalar,
    scalar_to_str,
    vacuum_reduce,
    y_mode,
)
from .structure import ProjectionSplit, gram_matrix

Exps = Tuple[int, ...]
Coeff = Union[Fraction, VermaVector]

DEFAULT_INSERTION_CAP = 3


class CorrelatorError(ValueError):
    """Raised for unsupported insertions or exceeded caps."""


def _is_zero(x: Coeff) -> bool:
    return x.is_zero() if isinstance(x, VermaVector) else x == 0


def _mul(a: Coeff, b: Coeff) -> Coeff:
    if isinstance(a, VermaVector):
        if isinstance(b, VermaVector):
            raise TypeError("cannot multiply two vectors")
        return a.scale(b)
    if isinstance(b, VermaVector):
        return b.scale(a)
    return a * b


def _binom(n: int, k: int) -> Fraction:
    """Generalized binomial coefficient C(n, k) for integer n and k >= 0."""
    out = Fraction(1)
    for i in range(k):
        out = out * (n - i) / (i + 1)
    return out


def _falling(a: int, q: int) -> int:
    out = 1
    for i in range(q):
        out *= a - i
    return out


# Laurent polynomials ---------------------------------------------------------


class MultiLaurent:
    """Finite Laurent polynomial in named variables with scalar or vector coefficients."""

    __slots__ = ("variables", "terms")

    def __init__(self, variables: Sequence[str], terms: Optional[Mapping[Exps, Coeff]] = None) -> None:
        self.variables: Tuple[str, ...] = tuple(variables)
        clean: Dict[Exps, Coeff] = {}
        for e, a in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != len(self.variables):
                raise ValueError("exponent tuple length does not match the variables")
            if not isinstance(a, VermaVector):
                a = as_scalar(a)
            if not _is_zero(a):
                clean[e] = a
        self.terms: Dict[Exps, Coeff] = clean

    @classmethod
    def monomial(cls, variables: Sequence[str], exps: Sequence[int], coeff: Coeff = Fraction(1)) -> "MultiLaurent":
        return cls(variables, {tuple(exps): coeff})

    @classmethod
    def constant(cls, variables: Sequence[str], coeff: Coeff = Fraction(1)) -> "MultiLaurent":
        return cls(variables, {(0,) * len(variables): coeff})

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def _same(self, other: "MultiLaurent") -> None:
        if self.variables != other.variables:
            raise ValueError("variable lists differ")

    def __add__(self, other: "MultiLaurent") -> "MultiLaurent":
        self._same(other)
        out = dict(self.terms)
        for e, a in other.terms.items():
            out[e] = out[e] + a if e in out else a
        return MultiLaurent(self.variables, out)

    def __neg__(self) -> "MultiLaurent":
        return self.scale(-1)

    def __sub__(self, other: "MultiLaurent") -> "MultiLaurent":
        return self + (-other)

    def scale(self, k) -> "MultiLaurent":
        k = as_scalar(k)
        return MultiLaurent(self.variables, {e: _mul(a, k) for e, a in self.terms.items()})

    def __mul__(self, other: "MultiLaurent") -> "MultiLaurent":
        self._same(other)
        out: Dict[Exps, Coeff] = {}
        for e1, a in self.terms.items():
            for e2, b in other.terms.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                p = _mul(a, b)
                out[e] = out[e] + p if e in out else p
        return MultiLaurent(self.variables, out)

    def shift(self, exps: Sequence[int]) -> "MultiLaurent":
        return MultiLaurent(self.variables, {tuple(x + y for x, y in zip(e, exps)): a for e, a in self.terms.items()})

    def min_exponents(self) -> Exps:
        if not self.terms:
            return (0,) * len(self.variables)
        return tuple(min(e[i] for e in self.terms) for i in range(len(self.variables)))

    def max_exponents(self) -> Exps:
        if not self.terms:
            return (0,) * len(self.variables)
        return tuple(max(e[i] for e in self.terms) for i in range(len(self.variables)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MultiLaurent) and self.variables == other.variables and self.terms == other.terms

    def __repr__(self) -> str:
        parts = []
        for e, a in sorted(self.terms.items()):
            mono = "*".join(f"{v}^{k}" for v, k in zip(self.variables, e) if k)
            parts.append(f"({a})" + (f"*{mono}" if mono else ""))
        return " + ".join(parts) if parts else "0"

    def to_json(self) -> List[Dict[str, object]]:
        out = []
        for e, a in sorted(self.terms.items()):
            coeff = a.to_json() if isinstance(a, VermaVector) else scalar_to_str(a)
            out.append({"exps": list(e), "coeff": coeff})
        return out


def _difference_power(n: int, i: int, j: int, power: int) -> Dict[Exps, Fraction]:
    """(x_i - x_j)^power for power >= 0 as an exponent dict."""
    out: Dict[Exps, Fraction] = {}
    for k in range(power + 1):
        e = [0] * n
        e[i] = power - k
        e[j] = k
        out[tuple(e)] = Fraction(math.comb(power, k) * (-1) ** k)
    return out


# Rational correlators ----------------------------------------------------------


@dataclass(frozen=True)
class PoleStructure:
    origin_orders: Dict[str, int]
    pair_orders: Dict[Tuple[str, str], int]


class RationalCorrelator:
    """numerator / prod_{i<j} (x_i - x_j)^{p_ij} with a Laurent numerator.

    Negative numerator exponents encode the poles at x_i = 0.
    """

    __slots__ = ("variables", "numerator", "pair_orders")

    def __init__(self, numerator: MultiLaurent, pair_orders: Optional[Mapping[Tuple[int, int], int]] = None) -> None:
        self.variables = numerator.variables
        self.numerator = numerator
        orders: Dict[Tuple[int, int], int] = {}
        for (i, j), p in (pair_orders or {}).items():
            if i == j:
                raise ValueError("pair factor needs two distinct variables")
            if p < 0:
                raise ValueError("pair orders must be non-negative")
            if i > j:
                i, j = j, i
                if p % 2:
                    numerator = numerator.scale(-1)
            if p:
                orders[(i, j)] = orders.get((i, j), 0) + p
        self.numerator = numerator
        self.pair_orders: Dict[Tuple[int, int], int] = orders

    # construction
    @classmethod
    def zero(cls, variables: Sequence[str]) -> "RationalCorrelator":
        return cls(MultiLaurent(variables))

    @classmethod
    def constant(cls, variables: Sequence[str], value) -> "RationalCorrelator":
        return cls(MultiLaurent.constant(variables, as_scalar(value)))

    @classmethod
    def pair_pole(cls, variables: Sequence[str], i: int, j: int, power: int, coeff=1) -> "RationalCorrelator":
        """coeff / (x_i - x_j)^power."""
        return cls(MultiLaurent.constant(variables, as_scalar(coeff)), {(i, j): power})

    # structure
    @property
    def n(self) -> int:
        return len(self.variables)

    def is_zero(self) -> bool:
        return self.numerator.is_zero()

    def origin_orders(self) -> Tuple[int, ...]:
        return tuple(max(0, -e) for e in self.numerator.min_exponents())

    def poles(self) -> PoleStructure:
        return PoleStructure(
            {v: o for v, o in zip(self.variables, self.origin_orders())},
            {(self.variables[i], self.variables[j]): p for (i, j), p in sorted(self.pair_orders.items())},
        )

    def polynomial_numerator(self) -> MultiLaurent:
        """numerator * prod x_i^{origin order}, a genuine polynomial."""
        return self.numerator.shift(self.origin_orders())

    # arithmetic
    def _lift(self, orders: Mapping[Tuple[int, int], int]) -> MultiLaurent:
        num = self.numerator
        for (i, j), p in orders.items():
            extra = p - self.pair_orders.get((i, j), 0)
            if extra < 0:
                raise ValueError("cannot lift to smaller pair orders")
            if extra:
                num = num * MultiLaurent(self.variables, _difference_power(self.n, i, j, extra))
        return num

    def _common(self, other: "RationalCorrelator") -> Dict[Tuple[int, int], int]:
        if self.variables != other.variables:
            raise ValueError("variable lists differ")
        keys = set(self.pair_orders) | set(other.pair_orders)
        return {k: max(self.pair_orders.get(k, 0), other.pair_orders.get(k, 0)) for k in keys}

    def __add__(self, other: "RationalCorrelator") -> "RationalCorrelator":
        orders = self._common(other)
        return RationalCorrelator(self._lift(orders) + other._lift(orders), orders)

    def __neg__(self) -> "RationalCorrelator":
        return RationalCorrelator(-self.numerator, self.pair_orders)

    def __sub__(self, other: "RationalCorrelator") -> "RationalCorrelator":
        return self + (-other)

    def __mul__(self, other: Union["RationalCorrelator", int, Fraction]) -> "RationalCorrelator":
        if not isinstance(other, RationalCorrelator):
            return RationalCorrelator(self.numerator.scale(other), self.pair_orders)
        if self.variables != other.variables:
            raise ValueError("variable lists differ")
        orders = dict(self.pair_orders)
        for k, p in other.pair_orders.items():
            orders[k] = orders.get(k, 0) + p
        return RationalCorrelator(self.numerator * other.numerator, orders)

    __rmul__ = __mul__

    def times_laurent(self, laurent: MultiLaurent) -> "RationalCorrelator":
        return RationalCorrelator(self.numerator * laurent, self.pair_orders)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RationalCorrelator) or other.variables != self.variables:
            return False
        orders = self._common(other)
        return self._lift(orders) == other._lift(orders)

    def __hash__(self) -> int:
        c = self.canonical()
        return hash((c.variables, tuple(sorted(c.numerator.terms.items())), tuple(sorted(c.pair_orders.items()))))

    def canonical(self) -> "RationalCorrelator":
        """Divide out every factor (x_i - x_j) shared by numerator and denominator."""
        num = self.numerator
        orders = dict(self.pair_orders)
        for (i, j) in sorted(orders):
            while orders[(i, j)] > 0:
                q = _divide_by_difference(num, i, j)
                if q is None:
                    break
                num = q
                orders[(i, j)] -= 1
        return RationalCorrelator(num, {k: p for k, p in orders.items() if p})

    def evaluate(self, point: Sequence) -> Fraction:
        """Exact value at a rational point away from the poles."""
        pt = [as_scalar(x) for x in point]
        if any(x == 0 for x, o in zip(pt, self.origin_orders()) if o):
            raise ZeroDivisionError("point on the pole x_i = 0")
        val = Fraction(0)
        for e, a in self.numerator.terms.items():
            term = Fraction(a)
            for x, k in zip(pt, e):
                term *= x ** k
            val += term
        for (i, j), p in self.pair_orders.items():
            d = pt[i] - pt[j]
            if d == 0:
                raise ZeroDivisionError("point on the pole x_i = x_j")
            val /= d ** p
        return val

    def __repr__(self) -> str:
        den = " ".join(f"({self.variables[i]}-{self.variables[j]})^{p}" for (i, j), p in sorted(self.pair_orders.items()))
        return f"[{self.numerator}]" + (f" / {den}" if den else "")

    def to_json(self) -> Dict[str, object]:
        c = self.canonical()
        poly = c.polynomial_numerator()
        return {
            "variables": list(c.variables),
            "numerator": [{"exps": list(e), "coeff": scalar_to_str(a)} for e, a in sorted(poly.terms.items())],
            "origin_orders": {v: o for v, o in zip(c.variables, c.origin_orders())},
            "pair_orders": {f"{c.variables[i]},{c.variables[j]}": p for (i, j), p in sorted(c.pair_orders.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> "RationalCorrelator":
        variables = list(data["variables"])
        origin = [int(data["origin_orders"].get(v, 0)) for v in variables]
        terms = {tuple(int(x) - o for x, o in zip(t["exps"], origin)): as_scalar(t["coeff"]) for t in data["numerator"]}
        orders = {}
        for key, p in data["pair_orders"].items():
            a, b = key.split(",")
            orders[(variables.index(a), variables.index(b))] = int(p)
        return cls(MultiLaurent(variables, terms), orders)


def _divide_by_difference(num: MultiLaurent, i: int, j: int) -> Optional[MultiLaurent]:
    """Exact quotient num / (x_i - x_j), or None if not divisible."""
    if num.is_zero():
        return num
    by_power: Dict[int, Dict[Exps, Fraction]] = {}
    for e, a in num.terms.items():
        rest = e[:i] + (0,) + e[i + 1:]
        by_power.setdefault(e[i], {})[rest] = a
    kmin, kmax = min(by_power), max(by_power)

    def times_xj(d: Mapping[Exps, Fraction]) -> Dict[Exps, Fraction]:
        return {e[:j] + (e[j] + 1,) + e[j + 1:]: a for e, a in d.items()}

    def add(a: Mapping[Exps, Fraction], b: Mapping[Exps, Fraction]) -> Dict[Exps, Fraction]:
        out = dict(a)
        for e, x in b.items():
            v = out.get(e, 0) + x
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return out

    quotient: Dict[int, Dict[Exps, Fraction]] = {}
    carry: Dict[Exps, Fraction] = {}
    for k in range(kmax, kmin, -1):
        carry = add(by_power.get(k, {}), times_xj(carry))
        quotient[k - 1] = carry
    remainder = add(by_power.get(kmin, {}), times_xj(carry))
    if remainder:
        return None
    terms: Dict[Exps, Fraction] = {}
    for k, d in quotient.items():
        for e, a in d.items():
            terms[e[:i] + (k,) + e[i + 1:]] = a
    return MultiLaurent(num.variables, terms)


# Region expansions -------------------------------------------------------------


@dataclass(frozen=True)
class RegionSpec:
    """|x_{order[0]}| > |x_{order[1]}| > ... > 0, optionally recentered.

    With recenter = k the expansion variables are x_i - x_k (i != k) and x_k,
    in the region |x_k| > |x_i - x_k| ordered among themselves by `order`.
    """

    order: Tuple[int, ...]
    recenter: Optional[int] = None

    def __post_init__(self) -> None:
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("region order must be a permutation of the variable indices")
        if self.recenter is not None and not 0 <= self.recenter < len(self.order):
            raise ValueError("recentering variable out of range")

    @classmethod
    def standard(cls, n: int, recenter: Optional[int] = None) -> "RegionSpec":
        return cls(tuple(range(n)), recenter)


def _kbounds(n: int, order: Sequence[int], emin: Sequence[int], pairs: Mapping[Tuple[int, int], int],
             cap: int) -> Dict[int, int]:
    """Per-variable bounds on the total growth an expansion may add to it.

    A variable's final exponent is its numerator exponent plus the k's of
    factors where it is the smaller variable, minus (p + k) of factors where
    it is the larger one. Processing from the innermost variable outward
    gives bounds beyond which every term leaves the window.
    """
    rank = {v: r for r, v in enumerate(order)}
    bound: Dict[int, int] = {}
    for v in reversed(order):
        b = cap - emin[v]
        for (i, j), p in pairs.items():
            if v in (i, j):
                other = j if v == i else i
                if rank[other] > rank[v]:
                    b += p + bound[other]
        bound[v] = max(b, -1)
    return bound


def _expand_core(numerator: MultiLaurent, pairs: Mapping[Tuple[int, int], int], order: Sequence[int],
                 cap: int, extra_factors: Sequence[Tuple[int, int, int]] = ()) -> Dict[Exps, Coeff]:
    """Expand numerator * prod (x_i - x_j)^{-p} in the region given by order.

    extra_factors lists (i, j, p) with p > 0 meaning (x_i + x_j)^{-p} where
    x_i is the larger variable (used for recentered origin factors).
    """
    n = len(numerator.variables)
    rank = {v: r for r, v in enumerate(order)}
    emin = numerator.min_exponents()
    pair_list = dict(pairs)
    all_pairs = dict(pair_list)
    for i, j, p in extra_factors:
        all_pairs[(i, j)] = all_pairs.get((i, j), 0) + p
    bound = _kbounds(n, order, emin, all_pairs, cap)
    series: List[Dict[Exps, Fraction]] = []
    for (i, j), p in pair_list.items():
        big, small = (i, j) if rank[i] < rank[j] else (j, i)
        sign = Fraction(1) if big == i else Fraction((-1) ** p)
        s: Dict[Exps, Fraction] = {}
        for k in range(bound[small] + 1):
            e = [0] * n
            e[big] = -p - k
            e[small] = k
            s[tuple(e)] = sign * math.comb(p + k - 1, k)
        series.append(s)
    for big, small, p in extra_factors:
        s = {}
        for k in range(bound[small] + 1):
            e = [0] * n
            e[big] = -p - k
            e[small] = k
            s[tuple(e)] = _binom(-p, k)
        series.append(s)
    current: Dict[Exps, Coeff] = dict(numerator.terms)
    for s in series:
        nxt: Dict[Exps, Coeff] = {}
        for e1, a in current.items():
            for e2, b in s.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                val = _mul(a, b)
                nxt[e] = nxt[e] + val if e in nxt else val
        current = {e: a for e, a in nxt.items() if not _is_zero(a)}
    return {e: a for e, a in current.items() if all(abs(x) <= cap for x in e)}


def expand_rational(r: RationalCorrelator, region: Optional[RegionSpec] = None, degree_cap: int = 10) -> Dict[Exps, Fraction]:
    """Coefficients with every exponent in [-degree_cap, degree_cap] of the region expansion.

    Without recentering, each (x_i - x_j)^{-p} is expanded in nonnegative
    powers of the smaller variable. With recentering at x_k, keys give the
    exponents of x_i - x_k for i != k and of x_k in position k.
    """
    region = region or RegionSpec.standard(r.n)
    if len(region.order) != r.n:
        raise ValueError("region does not match the number of variables")
    if region.recenter is None:
        return _expand_core(r.numerator, r.pair_orders, region.order, degree_cap)
    return _expand_recentered(r, region, degree_cap)


def _expand_recentered(r: RationalCorrelator, region: RegionSpec, cap: int) -> Dict[Exps, Fraction]:
    k = region.recenter
    n = r.n
    origin = r.origin_orders()
    poly = r.polynomial_numerator()
    # substitute x_i = u_i + x_k in the polynomial numerator
    sub: Dict[Exps, Fraction] = {}
    for e, a in poly.terms.items():
        partial: Dict[Exps, Fraction] = {tuple(e[k] if v == k else 0 for v in range(n)): Fraction(a)}
        for i in range(n):
            if i == k or e[i] == 0:
                continue
            nxt: Dict[Exps, Fraction] = {}
            for pe, pa in partial.items():
                for t in range(e[i] + 1):
                    ne = list(pe)
                    ne[i] += t
                    ne[k] += e[i] - t
                    key = tuple(ne)
                    nxt[key] = nxt.get(key, 0) + pa * math.comb(e[i], t)
            partial = nxt
        for pe, pa in partial.items():
            sub[pe] = sub.get(pe, 0) + pa
    shift = [0] * n
    shift[k] = -origin[k]
    pairs: Dict[Tuple[int, int], int] = {}
    for (i, j), p in r.pair_orders.items():
        if k in (i, j):
            other = j if i == k else i
            shift[other] -= p
            if other > k and p % 2:
                sub = {e: -a for e, a in sub.items()}
        else:
            pairs[(i, j)] = p
    numerator = MultiLaurent(r.variables, sub).shift(shift)
    order = [k] + [v for v in region.order if v != k]
    extra = [(k, i, origin[i]) for i in range(n) if i != k and origin[i]]
    return _expand_core(numerator, pairs, order, cap, extra)


# Closed-form sums ---------------------------------------------------------------


def shifted_geometric_sum(m_prime: int, lower: Union[int, str]) -> RationalCorrelator:
    """Closed form of sum_{n >= lower} (2n - m') y1^{-n-2} y2^n in |y1| > |y2|.

    lower may be an integer or one of the named variants "m'+2", "0", "-1".
    The value is y1^{-L-2} y2^L [(2L - m') y1/(y1 - y2) + 2 y1 y2/(y1 - y2)^2].
    """
    if isinstance(lower, str):
        lower = {"m'+2": m_prime + 2, "0": 0, "-1": -1}[lower]
    L = int(lower)
    vars2 = ("y1", "y2")
    num = MultiLaurent(vars2, {
        (-L, L): Fraction(2 * L - m_prime),
        (-L - 1, L + 1): Fraction(2 - (2 * L - m_prime)),
    })
    return RationalCorrelator(num, {(0, 1): 2}).canonical()


def central_sum(c) -> RationalCorrelator:
    """Closed form of sum_{m >= -1} (m^3 - m)/12 * c * x1^{-m-2} x2^{m-2}.

    The summand vanishes for m in {-1, 0, 1}; with k = m - 2 it is
    (c/12) (k+1)(k+2)(k+3) x1^{-k-4} x2^k, which sums to (c/2) (x1 - x2)^{-4}.
    """
    c = as_scalar(c)
    if c == 0:
        return RationalCorrelator.zero(("x1", "x2"))
    return RationalCorrelator.pair_pole(("x1", "x2"), 0, 1, 4, c / 2)


# Fields and normal ordering -----------------------------------------------------

# A field is (part, var, q): part "+" (modes <= -2) or "-" (modes >= -1) of the
# q-th derivative of Y(omega, x_var). The projection is the token PI.
PI = ("pi",)
Field = Tuple[str, int, int]
Op = Tuple


@lru_cache(maxsize=None)
def _kernel(c: Fraction, a: int, b: int) -> Tuple[Tuple[Fraction, int, Optional[Tuple[str, int]]], ...]:
    """[d^a Y-(x), d^b Y+(y)] as terms (coeff, p, field) meaning coeff (x-y)^{-p} * field.

    field is ("+", q) for d^q Y+(y), ("-", q) for d^q Y-(x), or None for the
    central scalar. The base case is
      dY+(y)/(x-y) + 2Y+(y)/(x-y)^2 - dY-(x)/(x-y) + 2Y-(x)/(x-y)^2 + (c/2)/(x-y)^4.
    """
    terms: Dict[Tuple[int, Optional[Tuple[str, int]]], Fraction] = {
        (1, ("+", 1)): Fraction(1),
        (2, ("+", 0)): Fraction(2),
        (1, ("-", 1)): Fraction(-1),
        (2, ("-", 0)): Fraction(2),
    }
    if c:
        terms[(4, None)] = c / 2

    def differentiate(terms, wrt):
        out: Dict[Tuple[int, Optional[Tuple[str, int]]], Fraction] = {}
        for (p, fld), k in terms.items():
            dp = Fraction(-p) if wrt == "x" else Fraction(p)
            key = (p + 1, fld)
            out[key] = out.get(key, 0) + k * dp
            if fld is not None and ((fld[0] == "-") == (wrt == "x")):
                key = (p, (fld[0], fld[1] + 1))
                out[key] = out.get(key, 0) + k
        return {key: v for key, v in out.items() if v}

    for _ in range(a):
        terms = differentiate(terms, "x")
    for _ in range(b):
        terms = differentiate(terms, "y")
    return tuple((k, p, fld) for (p, fld), k in sorted(terms.items(), key=lambda t: (t[0][0], str(t[0][1]))))


@dataclass(frozen=True)
class OrderedTerm:
    """coeff * prod (x_i - x_j)^{-p_ij} * ops, with ops in normal order."""

    coeff: Fraction
    pairs: Tuple[Tuple[Tuple[int, int], int], ...]
    ops: Tuple[Op, ...]
    commutations: int


def _add_pair(pairs: Tuple[Tuple[Tuple[int, int], int], ...], key: Tuple[int, int], p: int):
    d = dict(pairs)
    d[key] = d.get(key, 0) + p
    return tuple(sorted(d.items()))


@lru_cache(maxsize=None)
def normal_order(ops: Tuple[Op, ...], c: Fraction) -> Tuple[OrderedTerm, ...]:
    """Rewrite a product of fields (and at most one PI) in normal order.

    The result is a sum of terms whose ops read: creation fields, then
    annihilation fields and PI, with no creation field right of a non-creation
    op. Each annihilation field left of a creation field has the smaller
    variable index, so the kernel is expanded in the correct region.
    """
    stack = [(Fraction(1), (), tuple(ops), 0)]
    done: Dict[Tuple, Tuple[Fraction, int]] = {}
    while stack:
        coeff, pairs, cur, count = stack.pop()
        pos = None
        for idx in range(1, len(cur)):
            if cur[idx][0] == "+" and cur[idx - 1][0] != "+":
                pos = idx
                break
        if pos is None:
            key = (pairs, cur)
            old = done.get(key)
            if old is None:
                done[key] = (coeff, count)
            else:
                done[key] = (old[0] + coeff, max(old[1], count))
            continue
        left, right = cur[pos - 1], cur[pos]
        swapped = cur[:pos - 1] + (right, left) + cur[pos + 1:]
        stack.append((coeff, pairs, swapped, count))
        if left == PI:
            continue
        _, xi, a = left
        _, yi, b = right
        if xi >= yi:
            raise AssertionError("annihilation field left of a creation field with a larger index")
        for k, p, fld in _kernel(c, a, b):
            new_pairs = _add_pair(pairs, (xi, yi), p)
            if fld is None:
                repl: Tuple[Op, ...] = ()
            elif fld[0] == "+":
                repl = (("+", yi, fld[1]),)
            else:
                repl = (("-", xi, fld[1]),)
            stack.append((coeff * k, new_pairs, cur[:pos - 1] + repl + cur[pos + 1:], count + 1))
    return tuple(OrderedTerm(k, pairs, ops, count) for (pairs, ops), (k, count) in sorted(done.items(), key=repr) if k)


# Applying normally ordered operators ----------------------------------------------


def _apply_annihilation(field: Field, vec_laurent: MultiLaurent) -> MultiLaurent:
    _, var, q = field
    out: Dict[Exps, VermaVector] = {}
    for e, v in vec_laurent.terms.items():
        top = max(v.levels()) if v.terms else -1
        for m in range(-1, top + 1):
            f = _falling(-m - 2, q)
            if not f:
                continue
            img = apply_mode(m, v)
            if img.is_zero():
                continue
            ne = list(e)
            ne[var] += -m - 2 - q
            key = tuple(ne)
            img = img.scale(f)
            out[key] = out[key] + img if key in out else img
    return MultiLaurent(vec_laurent.variables, out)


def _apply_creation(field: Field, vec_laurent: MultiLaurent, max_level: Optional[int], max_exp: Optional[int] = None
                    ) -> MultiLaurent:
    """Apply d^q Y+(x) keeping only levels <= max_level or exponents <= max_exp."""
    _, var, q = field
    out: Dict[Exps, VermaVector] = {}
    for e, v in vec_laurent.terms.items():
        if v.is_zero():
            continue
        low = min(v.levels())
        m = -2
        while True:
            power = -m - 2 - q
            if max_level is not None and low - m > max_level:
                break
            if max_exp is not None and e[var] + power > max_exp:
                break
            f = _falling(-m - 2, q)
            if f:
                img = apply_mode(m, v).scale(f)
                if max_level is not None:
                    img = VermaVector(img.params, {mono: a for mono, a in img.terms.items() if sum(mono) <= max_level})
                if not img.is_zero():
                    ne = list(e)
                    ne[var] += power
                    key = tuple(ne)
                    out[key] = out[key] + img if key in out else img
            m -= 1
    return MultiLaurent(vec_laurent.variables, out)


# Insertions -----------------------------------------------------------------------


def insertion_fields(v: VermaVector, var: int) -> List[Tuple[Fraction, Optional[int]]]:
    """Write Y(v, x) as sum coeff * d^q Y(omega, x) (q None for the identity).

    Supported vectors are combinations of the vacuum and L(-n)1 (n >= 2), using
    L(-n)1 = L(-1)^{n-2} omega / (n-2)!.
    """
    if v.params.h != 0:
        raise CorrelatorError("insertions must lie in the vacuum module")
    v = vacuum_reduce(v)
    out: List[Tuple[Fraction, Optional[int]]] = []
    for mono, a in v.items():
        if mono == ():
            out.append((a, None))
        elif len(mono) == 1 and mono[0] >= 2:
            q = mono[0] - 2
            out.append((a / math.factorial(q), q))
        else:
            raise CorrelatorError(f"unsupported insertion monomial {mono}; use the vacuum or L(-n)1")
    return out


def _field_products(insertions: Sequence[VermaVector], pi_position: Optional[int]):
    """Expand the insertion product into (coeff, ops) with each Y split into Y+ + Y-."""
    per_slot = []
    for idx, v in enumerate(insertions):
        choices = []
        for a, q in insertion_fields(v, idx):
            if q is None:
                choices.append((a, ()))
            else:
                choices.append((a, (("+", idx, q),)))
                choices.append((a, (("-", idx, q),)))
        per_slot.append(choices)
    combos = [(Fraction(1), ())]
    for idx, choices in enumerate(per_slot):
        if pi_position is not None and idx == pi_position:
            combos = [(a, ops + (PI,)) for a, ops in combos]
        combos = [(a * b, ops + extra) for a, ops in combos for b, extra in choices]
    if pi_position is not None and pi_position == len(per_slot):
        combos = [(a, ops + (PI,)) for a, ops in combos]
    return combos


def _pair_value(w_dual: VermaVector, v: VermaVector, pairing: str) -> Fraction:
    if pairing == "coordinate":
        return sum((a * v.coeff(m) for m, a in w_dual.terms.items()), Fraction(0))
    if pairing == "gram":
        total = Fraction(0)
        for lv in set(w_dual.levels()) & set(v.levels()):
            g = gram_matrix(v.params, lv)
            idx = {m: i for i, m in enumerate(g.monomials)}
            for m1, a in w_dual.terms.items():
                if sum(m1) != lv:
                    continue
                for m2, b in v.terms.items():
                    if sum(m2) == lv:
                        total += a * b * g.entries[idx[m1]][idx[m2]]
        return total
    raise ValueError("pairing must be 'coordinate' or 'gram'")


def _evaluate_ops(ops: Sequence[Op], w: VermaVector, variables: Sequence[str], split: Optional[ProjectionSplit],
                  max_level: Optional[int], max_exp: Optional[int] = None) -> MultiLaurent:
    cur = MultiLaurent.constant(variables, w)
    for op in reversed(ops):
        if op == PI:
            cur = MultiLaurent(variables, {e: split.project(v) for e, v in cur.terms.items()})
        elif op[0] == "-":
            cur = _apply_annihilation(op, cur)
        else:
            cur = _apply_creation(op, cur, max_level, max_exp)
        if cur.is_zero():
            break
    return cur


def _pairs_correlator(variables, coeff: Fraction, pairs) -> RationalCorrelator:
    return RationalCorrelator(MultiLaurent.constant(variables, coeff), dict(pairs))


def matrix_coefficient(w_dual: VermaVector, insertions: Sequence[VermaVector], pi_position: Optional[int],
                       w: VermaVector, split: Optional[ProjectionSplit] = None, *, pairing: str = "coordinate",
                       variables: Optional[Sequence[str]] = None, cap: int = DEFAULT_INSERTION_CAP
                       ) -> RationalCorrelator:
    """<w', Y(v_1, z_1) ... Y(v_p, z_p) pi Y(v_{p+1}, z_{p+1}) ... Y(v_n, z_n) w> as a rational function.

    pi_position = p places the projection after the first p insertions;
    None means no projection. The pairing is coordinatewise in the monomial
    basis by default ("gram" uses the contravariant form instead).
    """
    return matrix_coefficients([w_dual], insertions, pi_position, w, split, pairing=pairing,
                               variables=variables, cap=cap)[0]


def matrix_coefficients(w_duals: Sequence[VermaVector], insertions: Sequence[VermaVector], pi_position: Optional[int],
                        w: VermaVector, split: Optional[ProjectionSplit] = None, *, pairing: str = "coordinate",
                        variables: Optional[Sequence[str]] = None, cap: int = DEFAULT_INSERTION_CAP
                        ) -> List[RationalCorrelator]:
    """matrix_coefficient for several dual vectors, sharing the operator evaluation."""
    n = len(insertions)
    if n > cap:
        raise CorrelatorError(f"{n} insertions exceed the cap {cap}")
    if pi_position is not None:
        if split is None:
            raise CorrelatorError("a projection needs a split")
        if not 0 <= pi_position <= n:
            raise CorrelatorError("pi_position out of range")
        if split.params != w.params:
            raise CorrelatorError("split and vector live in different modules")
    for w_dual in w_duals:
        if w_dual.params != w.params:
            raise CorrelatorError("dual vector and vector live in different modules")
    for v in insertions:
        if v.params.c != w.params.c:
            raise CorrelatorError("insertion central charge differs from the module")
    variables = tuple(variables or [f"z{i + 1}" for i in range(n)])
    max_level = max((lv for d in w_duals for lv in d.levels()), default=-1)
    totals = [RationalCorrelator.zero(variables) for _ in w_duals]
    if max_level < 0:
        return totals
    c = w.params.c
    for a, ops in _field_products(insertions, pi_position):
        for term in normal_order(ops, c):
            vec = _evaluate_ops(term.ops, w, variables, split, max_level)
            if vec.is_zero():
                continue
            base = _pairs_correlator(variables, a * term.coeff, term.pairs)
            for i, w_dual in enumerate(w_duals):
                scalar = {e: _pair_value(w_dual, v, pairing) for e, v in vec.terms.items()}
                lau = MultiLaurent(variables, scalar)
                if not lau.is_zero():
                    totals[i] = totals[i] + base.times_laurent(lau)
    return [t.canonical() for t in totals]


def truncated_series(w_dual: VermaVector, insertions: Sequence[VermaVector], pi_position: Optional[int],
                     w: VermaVector, split: Optional[ProjectionSplit] = None, degree_cap: int = 10, *,
                     pairing: str = "coordinate") -> Dict[Exps, Fraction]:
    """Brute-force mode sum: the coefficient of z^e is <w', v1_{k1} ... pi ... vn_{kn} w> with k_i = -e_i - 1.

    Uses the vertex-operator modes of the vacuum module directly, independent
    of the normal-ordering engine. Only exponents in [-degree_cap, degree_cap]
    compatible with the weight balance are evaluated.
    """
    return truncated_series_family([w_dual], insertions, pi_position, w, split, degree_cap, pairing=pairing)[0]


def truncated_series_family(w_duals: Sequence[VermaVector], insertions: Sequence[VermaVector],
                            pi_position: Optional[int], w: VermaVector, split: Optional[ProjectionSplit] = None,
                            degree_cap: int = 10, *, pairing: str = "coordinate") -> List[Dict[Exps, Fraction]]:
    """truncated_series for several dual vectors, sharing the mode evaluation."""
    n = len(insertions)
    if pi_position is not None and split is None:
        raise CorrelatorError("a projection needs a split")
    outs: List[Dict[Exps, Fraction]] = [{} for _ in w_duals]
    dual_levels = {lv for d in w_duals for lv in d.levels()}
    if not dual_levels:
        return outs
    ins_weights = [set(vacuum_reduce(v).levels()) for v in insertions]

    def act(exps: Exps) -> VermaVector:
        vec = w
        for idx in range(n - 1, -1, -1):
            if pi_position == idx + 1:
                vec = split.project(vec)
            vec = y_mode(insertions[idx], -exps[idx] - 1, vec)
            if vec.is_zero():
                return vec
        if pi_position == 0:
            vec = split.project(vec)
        return vec

    w_levels = set(w.levels())
    rng = range(-degree_cap, degree_cap + 1)
    for exps in itertools.product(rng, repeat=n):
        # weight balance: level(out) = level(w) + sum (wt v_i - k_i - 1) = level(w) + sum (wt v_i + e_i)
        if not any(lw + sum(combo) + sum(exps) in dual_levels
                   for lw in w_levels for combo in _weight_combos(ins_weights)):
            continue
        vec = act(exps)
        if vec.is_zero():
            continue
        for i, w_dual in enumerate(w_duals):
            val = _pair_value(w_dual, vec, pairing)
            if val:
                outs[i][exps] = val
    return outs


def _weight_combos(levels: Sequence[set]):
    if not levels:
        yield ()
        return
    for first in levels[0]:
        for rest in _weight_combos(levels[1:]):
            yield (first,) + rest


# Projected products -----------------------------------------------------------------


def projected_omega_action(split: ProjectionSplit, w1: VermaVector, variable: str = "x") -> MultiLaurent:
    """pi_{W2} Y(omega, x) w1 for w1 in W1, a finite Laurent polynomial.

    pi commutes with L(m) for m <= -2 and kills W1, so only modes -1 <= m <= level survive.
    """
    if not split.in_w1(w1):
        raise CorrelatorError("vector is not in W1 of the split")
    out: Dict[Exps, VermaVector] = {}
    top = max(w1.levels()) if w1.terms else -1
    for m in range(-1, top + 1):
        img = split.project(apply_mode(m, w1))
        if not img.is_zero():
            out[(-m - 2,)] = img
    return MultiLaurent((variable,), out)


@dataclass(frozen=True)
class ProjectedTerm:
    """regular_ops (creation fields d^q Y+(x_var), leftmost first) applied to
    coeff * prod (x_i - x_j)^{-p_ij} * laurent, with laurent W2-valued."""

    regular_ops: Tuple[Tuple[int, int], ...]
    coeff: Fraction
    pair_orders: Tuple[Tuple[Tuple[int, int], int], ...]
    laurent: MultiLaurent
    commutations: int


@dataclass
class ProjectedProduct:
    variables: Tuple[str, ...]
    terms: List[ProjectedTerm]

    def expand(self, degree_cap: int) -> Dict[Exps, VermaVector]:
        """Coefficients (exponents in [-cap, cap]) of the expansion in |x_1| > ... > |x_l|."""
        out: Dict[Exps, VermaVector] = {}
        order = tuple(range(len(self.variables)))
        for t in self.terms:
            base = _expand_core(t.laurent.scale(t.coeff), dict(t.pair_orders), order, degree_cap)
            cur = MultiLaurent(self.variables, base)
            for var, q in reversed(t.regular_ops):
                cur = _apply_creation(("+", var, q), cur, None, degree_cap)
            for e, v in cur.terms.items():
                if all(abs(x) <= degree_cap for x in e):
                    out[e] = out[e] + v if e in out else v
        return {e: v for e, v in out.items() if not v.is_zero()}


def projected_omega_product(split: ProjectionSplit, l: int, w1: VermaVector, cap: int = DEFAULT_INSERTION_CAP,
                            variables: Optional[Sequence[str]] = None) -> ProjectedProduct:
    """pi_{W2} Y(omega, x_1) ... Y(omega, x_l) w1 for w1 in W1 in closed form.

    Each term is a product of regular parts Y+ of derivatives of Y(omega)
    applied to a rational function in the pair differences times a finite
    W2-valued Laurent polynomial pi Y-(..)...Y-(..) w1.
    """
    if l < 1:
        raise CorrelatorError("l must be positive")
    if l > cap:
        raise CorrelatorError(f"l = {l} exceeds the cap {cap}")
    if not split.in_w1(w1):
        raise CorrelatorError("vector is not in W1 of the split")
    variables = tuple(variables or [f"x{i + 1}" for i in range(l)])
    c = split.params.c
    grouped: Dict[Tuple, Tuple[Fraction, MultiLaurent, int]] = {}
    for a, ops in _field_products([_omega(c)] * l, 0):
        for term in normal_order(ops, c):
            pi_at = term.ops.index(PI)
            regular = tuple((op[1], op[2]) for op in term.ops[:pi_at])
            lau = _evaluate_ops(term.ops[pi_at:], w1, variables, split, None)
            if lau.is_zero():
                continue
            lau = lau.scale(a * term.coeff)
            key = (regular, term.pairs)
            if key in grouped:
                old = grouped[key]
                grouped[key] = (Fraction(1), old[1] + lau, max(old[2], term.commutations))
            else:
                grouped[key] = (Fraction(1), lau, term.commutations)
    terms = [ProjectedTerm(reg, k, pairs, lau, cnt) for (reg, pairs), (k, lau, cnt) in grouped.items() if not lau.is_zero()]
    return ProjectedProduct(variables, terms)


def _omega(c) -> VermaVector:
    return VermaVector(ModuleParams(as_scalar(c), Fraction(0)), {(2,): 1})


def projected_product_oracle(split: ProjectionSplit, l: int, w1: VermaVector, degree_cap: int) -> Dict[Exps, VermaVector]:
    """Direct mode sum: the coefficient of x^e is pi L(-e_1-2) ... L(-e_l-2) w1."""
    out: Dict[Exps, VermaVector] = {}

    def rec(idx, exps):
        if idx == l:
            yield exps
            return
        for e in range(-degree_cap, degree_cap + 1):
            yield from rec(idx + 1, exps + (e,))

    for exps in rec(0, ()):
        vec = w1
        for e in reversed(exps):
            vec = apply_mode(-e - 2, vec)
            if vec.is_zero():
                break
        if vec.is_zero():
            continue
        vec = split.project(vec)
        if not vec.is_zero():
            out[exps] = vec
    return out


# N-weight-degree -----------------------------------------------------------------------


def min_recentered_degree(r: RationalCorrelator, center: Optional[int] = None) -> Optional[int]:
    """Lowest total degree in the x_i - x_center of the recentered expansion (None for r = 0).

    With x_i = u_i + x_center, pair factors become homogeneous of degree one
    in u, origin factors expand with a nonzero constant term, so the lowest
    degree equals the lowest u-degree of the substituted polynomial numerator
    minus the total pair order.
    """
    if r.is_zero():
        return None
    n = r.n
    k = n - 1 if center is None else center
    poly = r.polynomial_numerator()
    by_degree: Dict[int, Dict[Exps, Fraction]] = {}
    for e, a in poly.terms.items():
        partial = {tuple(e[k] if v == k else 0 for v in range(n)): Fraction(a)}
        for i in range(n):
            if i == k or e[i] == 0:
                continue
            nxt: Dict[Exps, Fraction] = {}
            for pe, pa in partial.items():
                for t in range(e[i] + 1):
                    ne = list(pe)
                    ne[i] += t
                    ne[k] += e[i] - t
                    key = tuple(ne)
                    nxt[key] = nxt.get(key, 0) + pa * math.comb(e[i], t)
            partial = nxt
        for pe, pa in partial.items():
            deg = sum(pe) - pe[k]
            bucket = by_degree.setdefault(deg, {})
            bucket[pe] = bucket.get(pe, 0) + pa
    low = min((d for d, b in by_degree.items() if any(b.values())), default=None)
    if low is None:
        return None
    return low - sum(r.pair_orders.values())


def check_n_weight_degree(r: RationalCorrelator, N: int, weights: Sequence, phi_weight) -> bool:
    """Every monomial of the expansion recentered at the last variable has total
    degree >= N - sum(weights) - phi_weight."""
    low = min_recentered_degree(r)
    if low is None:
        return True
    return low >= N - sum(as_scalar(w) for w in weights) - as_scalar(phi_weight)
