"""Exact rational linear algebra over Fractions (dense and sparse rows)."""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

Row = Dict[int, Fraction]


def rref(rows: Sequence[Sequence[Fraction]]) -> Tuple[List[List[Fraction]], List[int]]:
    """Reduced row echelon form of a dense matrix; returns (matrix, pivot columns)."""
    m = [[Fraction(x) for x in r] for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots: List[int] = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][col]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][col] != 0:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    return len(rref(rows)[1])


def kernel(rows: Sequence[Sequence[Fraction]], ncols: Optional[int] = None) -> List[List[Fraction]]:
    """Basis of the right null space {x : A x = 0}, one vector per free column."""
    if not rows:
        n = ncols or 0
        return [[Fraction(int(i == j)) for i in range(n)] for j in range(n)]
    n = len(rows[0])
    red, pivots = rref(rows)
    free = [j for j in range(n) if j not in set(pivots)]
    basis = []
    for f in free:
        x = [Fraction(0)] * n
        x[f] = Fraction(1)
        for i, p in enumerate(pivots):
            x[p] = -red[i][f]
        basis.append(x)
    return basis


def determinant(rows: Sequence[Sequence[Fraction]]) -> Fraction:
    m = [[Fraction(x) for x in r] for r in rows]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        piv = next((i for i in range(col, n) if m[i][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        inv = 1 / m[col][col]
        for i in range(col + 1, n):
            if m[i][col] != 0:
                f = m[i][col] * inv
                m[i] = [a - f * b for a, b in zip(m[i], m[col])]
    return det


def solve(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> Optional[List[Fraction]]:
    """One exact solution of A x = b (free variables set to 0), or None."""
    aug = [list(r) + [Fraction(b)] for r, b in zip(rows, rhs)]
    if not aug:
        return []
    n = len(aug[0]) - 1
    red, pivots = rref(aug)
    if n in pivots:
        return None
    x = [Fraction(0)] * n
    for i, p in enumerate(pivots):
        x[p] = red[i][n]
    return x


class SparseEchelon:
    """Incremental echelon basis of sparse vectors keyed by hashable coordinates.

    Each stored row has a pivot key whose coefficient is 1 and which appears in
    no other stored row (fully reduced). Coordinates are ordered by the given
    key function; the pivot of a row is its smallest coordinate in that order.
    """

    def __init__(self, order=None) -> None:
        self.rows: Dict[Hashable, Dict[Hashable, Fraction]] = {}
        self._order = order or (lambda k: k)

    def __len__(self) -> int:
        return len(self.rows)

    def reduce(self, vec: Mapping[Hashable, Fraction]) -> Dict[Hashable, Fraction]:
        out = {k: Fraction(v) for k, v in vec.items() if v}
        for piv in [k for k in out if k in self.rows]:
            a = out.get(piv)
            if not a:
                continue
            for k, b in self.rows[piv].items():
                val = out.get(k, 0) - a * b
                if val:
                    out[k] = val
                else:
                    out.pop(k, None)
        return out

    def add(self, vec: Mapping[Hashable, Fraction]) -> bool:
        """Insert a vector; return True if it enlarged the span."""
        red = self.reduce(vec)
        if not red:
            return False
        piv = min(red, key=self._order)
        inv = 1 / red[piv]
        red = {k: v * inv for k, v in red.items()}
        for p, row in self.rows.items():
            a = row.get(piv)
            if a:
                for k, b in red.items():
                    val = row.get(k, 0) - a * b
                    if val:
                        row[k] = val
                    else:
                        row.pop(k, None)
        self.rows[piv] = red
        return True

    def contains(self, vec: Mapping[Hashable, Fraction]) -> bool:
        return not self.reduce(vec)

    def pivots(self) -> List[Hashable]:
        return sorted(self.rows, key=self._order)


def sparse_solve(equations: Iterable[Tuple[Mapping[Hashable, Fraction], Fraction]]
                 ) -> Optional[Dict[Hashable, Fraction]]:
    """Solve a sparse system sum_k a_k x_k = b exactly.

    Returns one solution (free unknowns set to 0) or None when inconsistent.
    The right-hand side is carried under the reserved key None.
    """
    ech = SparseEchelon(order=lambda k: (k is None, repr(k)))
    for coeffs, b in equations:
        vec = {k: Fraction(v) for k, v in coeffs.items() if v}
        if b:
            vec[None] = -Fraction(b)
        red = ech.reduce(vec)
        if not red:
            continue
        if set(red) == {None}:
            return None
        ech.add(red)
    solution: Dict[Hashable, Fraction] = {}
    for piv, row in ech.rows.items():
        if piv is None:
            return None
        solution[piv] = -row.get(None, Fraction(0))
    return solution


def determinant_mod(rows: Sequence[Sequence[Fraction]], prime: int) -> int:
    """Determinant reduced modulo a prime not dividing any entry denominator."""
    m = []
    for r in rows:
        row = []
        for x in r:
            x = Fraction(x)
            if x.denominator % prime == 0:
                raise ZeroDivisionError(f"denominator divisible by {prime}")
            row.append(x.numerator * pow(x.denominator, -1, prime) % prime)
        m.append(row)
    n = len(m)
    det = 1
    for col in range(n):
        piv = next((i for i in range(col, n) if m[i][col]), None)
        if piv is None:
            return 0
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        pivot_row = m[col]
        det = det * pivot_row[col] % prime
        inv = pow(pivot_row[col], -1, prime)
        tail = pivot_row[col + 1:]
        for i in range(col + 1, n):
            row = m[i]
            a = row[col]
            if a:
                f = a * inv % prime
                row[col + 1:] = [(x - f * y) % prime for x, y in zip(row[col + 1:], tail)]
    return det % prime
