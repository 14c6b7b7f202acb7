"""A short walk through the library on M(1, 1/4)."""

from fractions import Fraction

from virasoro_ext import extensions as ext
from virasoro_ext.algebra import ModuleParams, VermaVector, conformal_vector
from virasoro_ext.correlators import expand_rational, matrix_coefficient
from virasoro_ext.structure import classify_block, find_singular, projection_split


def main() -> None:
    p = ModuleParams(Fraction(1), Fraction(1, 4))
    print("singular vector at level 2:", find_singular(p, 2)[0].vector)
    report = classify_block(p, 12)
    print("block case:", report.case, "members:", [str(m) for m in report.members])

    split = projection_split(p)
    v = VermaVector(p, {(1, 1, 1): 1, (3,): 2})
    print("projection of", v, "->", split.project(v))

    omega = conformal_vector(p.c)
    w = VermaVector.monomial(p, (1,))
    dual = VermaVector.monomial(p, (2, 1, 1))
    r = matrix_coefficient(dual, [omega, omega], 1, w, split)
    print("projected correlator:", r)
    print("a few expansion coefficients:", sorted(expand_rational(r, None, 4).items())[:4])

    U = ext.verma_extension(split, "split", 6)
    F = ext.extension_to_derivation(U, 6)
    print("derivation is inner:", ext.is_inner(F) is not None)
    print("cocycle check passed:", ext.verify_cocycle(F, w_levels=1)["passed"])


if __name__ == "__main__":
    main()
