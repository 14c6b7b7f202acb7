"""Command-line interface. All numbers cross the boundary as exact strings."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import List, Optional, Sequence

from . import extensions as ext
from .algebra import ModuleParams, VermaVector, as_scalar, scalar_to_str, vacuum_params
from .correlators import CorrelatorError, RegionSpec, expand_rational, matrix_coefficient
from .structure import StructureError, classify_block, find_singular, gram_matrix, projection_split
from .suites import run_criterion, suite_numbers

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


class InvalidInput(ValueError):
    pass


def _scalar(text: str) -> Fraction:
    try:
        return as_scalar(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise InvalidInput(f"malformed rational {text!r}: {exc}")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError("caps must be at least 1")
    return value


def _modes(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        modes = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise InvalidInput(f"malformed mode list {text!r}")
    if any(m < 1 for m in modes) or list(modes) != sorted(modes, reverse=True):
        raise InvalidInput(f"mode list {text!r} must be weakly decreasing positive integers")
    return modes


def _params(args) -> ModuleParams:
    return ModuleParams(_scalar(args.c), _scalar(args.h))


def _threads() -> int:
    raw = os.environ.get("VIRASORO_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInput(f"VIRASORO_THREADS must be an integer, got {raw!r}")


def _emit(payload, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_singular(args) -> int:
    p = _params(args)
    found = []
    for lv in range(1, args.max_level + 1):
        found.extend(sv.to_json() for sv in find_singular(p, lv))
    _emit(found, args.out)
    return EXIT_OK


def cmd_gram(args) -> int:
    p = _params(args)
    _emit([gram_matrix(p, lv).to_json() for lv in range(args.max_level + 1)], args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    _emit(classify_block(_params(args), args.cap).to_json(), args.out)
    return EXIT_OK


def _read_json(path: str):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidInput(f"missing file {path}")
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"invalid JSON in {path}: {exc}")


def cmd_project(args) -> int:
    data = _read_json(args.input)
    try:
        v = VermaVector.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"not a vector: {exc}")
    split = projection_split(v.params, args.max_level)
    projected = split.project(v)
    _emit({"split": split.to_json(), "input": v.to_json(), "projected": projected.to_json()}, args.out)
    return EXIT_OK


def cmd_correlator(args) -> int:
    p = _params(args)
    vac = vacuum_params(p.c)
    insertions = []
    for item in args.insertions.split(","):
        n = int(item)
        if n == 0:
            insertions.append(VermaVector.lowest(vac))
        elif n >= 2:
            insertions.append(VermaVector.monomial(vac, (n,)))
        else:
            raise InvalidInput("insertions are 0 (vacuum) or n >= 2 (L(-n)1)")
    pi = None if args.pi in (None, "none") else int(args.pi)
    split = projection_split(p) if pi is not None else None
    w = VermaVector.monomial(p, _modes(args.source))
    dual = VermaVector.monomial(p, _modes(args.dual))
    r = matrix_coefficient(dual, insertions, pi, w, split, pairing=args.pairing)
    payload = {"correlator": r.to_json(), "poles": {
        "origin": list(r.origin_orders()), "pairs": {f"{i},{j}": k for (i, j), k in sorted(r.pair_orders.items())}}}
    if args.degree is not None:
        recenter = None if args.recenter is None else args.recenter - 1
        series = expand_rational(r, RegionSpec.standard(r.n, recenter), args.degree)
        payload["expansion"] = [{"exps": list(e), "coeff": scalar_to_str(a)} for e, a in sorted(series.items())]
    _emit(payload, args.out)
    return EXIT_OK


def cmd_ext(args) -> int:
    p = _params(args)
    cap = args.cap
    report = {"scenario": args.scenario, "params": p.to_json(), "level_cap": cap}
    ok = True
    if args.scenario == "nonsplit":
        split = projection_split(p)
        U = ext.verma_extension(split, "split", cap)
        F = ext.extension_to_derivation(U, cap)
        cocycle = ext.verify_cocycle(F, w_levels=1)
        witness = ext.is_inner(F, cap)
        rt = ext.roundtrip_check(F=F, ext=U, level_cap=cap)
        report.update({"derivation": F.to_json(), "cocycle": cocycle["passed"],
                       "pole_orders": [t["p"] for t in cocycle["triples"]],
                       "inner": witness is not None, "roundtrip": rt})
        ok = bool(cocycle["passed"]) and bool(rt["passed"])
    elif args.scenario == "split":
        U = ext.split_scenario(p.c, p.h)
        F = ext.extension_to_derivation(U, cap)
        witness = ext.is_inner(F, cap)
        report.update({"derivation": F.to_json(), "inner": witness is not None,
                       "witness_is_zero": witness is not None and witness.is_zero()})
        ok = witness is not None
    elif args.scenario == "sections":
        split = projection_split(p)
        U1 = ext.verma_extension(split, "split", cap)
        U2 = ext.verma_extension(split, "derivative-compatible", cap)
        eq = ext.equivalence(U1, U2, cap)
        report["equivalent"] = eq is not None
        if eq is not None:
            report["off_diagonal"] = [
                {"source": list(k), "image": [{"modes": list(t), "coeff": scalar_to_str(a)} for t, a in sorted(v.items())]}
                for k, v in sorted(eq.off_diagonal.phi.items())]
        ok = eq is not None
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_verify(args) -> int:
    numbers = suite_numbers(args.suite)
    workers = min(_threads(), len(numbers))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_criterion, numbers))
    else:
        results = [run_criterion(n) for n in numbers]
    for r in results:
        print(r.line(), file=sys.stderr)
    payload = [{k: v for k, v in r.to_json().items() if k != "seconds"} for r in results]
    _emit(json.loads(json.dumps(payload, default=str)), args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="virasoro-ext", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, level=True, cap=False):
        sp.add_argument("--c", default="1", help="central charge as p/q")
        sp.add_argument("--h", default="1/4", help="lowest weight as p/q")
        if level:
            sp.add_argument("--max-level", type=_positive, default=6)
        if cap:
            sp.add_argument("--cap", type=_positive, default=8)
        sp.add_argument("--out", help="write JSON here instead of stdout")

    common(sub.add_parser("singular", help="singular vectors up to --max-level"))
    common(sub.add_parser("gram", help="Gram matrices up to --max-level"))
    common(sub.add_parser("classify", help="block classification"), level=False, cap=True)
    sp = sub.add_parser("project", help="apply the submodule projection to a vector JSON")
    sp.add_argument("input", help="vector JSON file, or - for stdin")
    sp.add_argument("--max-level", type=_positive, default=12, help="singular-vector search depth")
    sp.add_argument("--out")
    sp = sub.add_parser("correlator", help="projected matrix coefficient as a rational function")
    common(sp, level=False)
    sp.add_argument("--insertions", default="2,2", help="comma list: 0 for the vacuum, n >= 2 for L(-n)1")
    sp.add_argument("--pi", default="1", help="projection position (0..n) or none")
    sp.add_argument("--source", default="1", help="source monomial as comma list of modes")
    sp.add_argument("--dual", default="1,1", help="dual monomial as comma list of modes")
    sp.add_argument("--pairing", choices=("coordinate", "gram"), default="coordinate")
    sp.add_argument("--degree", type=_positive, help="also expand to this degree cap")
    sp.add_argument("--recenter", type=_positive, help="recenter the expansion at this variable (1-based)")
    sp = sub.add_parser("ext", help="extension scenarios")
    common(sp, level=False, cap=True)
    sp.add_argument("scenario", choices=("nonsplit", "split", "sections"))
    sp = sub.add_parser("verify", help="acceptance suites")
    sp.add_argument("--suite", default="all", help="all, algebra, projection, correlators, ext, or numbers like 1,4")
    sp.add_argument("--out")
    return parser


COMMANDS = {"singular": cmd_singular, "gram": cmd_gram, "classify": cmd_classify, "project": cmd_project,
            "correlator": cmd_correlator, "ext": cmd_ext, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (InvalidInput, StructureError, CorrelatorError, ext.ExtensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def run(argv: List[str]) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
