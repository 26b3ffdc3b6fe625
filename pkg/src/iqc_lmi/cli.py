"""Command line entry point ``iqc-lmi``.

Exit codes: 0 certified, 2 infeasible or undecided, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, List, Optional

import numpy as np

from . import __version__
from .builder import Plant, analyze
from .errors import IqcLmiError
from .multipliers import MultiplierRecipe
from .network import DEFAULT_ALPHA, run_example
from .sdp import SolverOptions, export_sdpa
from .valuesets import ValueSet

log = logging.getLogger("iqc_lmi")

EXIT_CERTIFIED = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2

TEST_ALIASES = {
    "intersection": "DynIntersection",
    "lmi-region": "LmiRegionDynamic",
    "lmi-region-static": "LmiRegionStatic",
}


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return str(obj)


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _load_json(path: str) -> Any:
    with open(path) as fh:
        return json.load(fh)


def cmd_example(args: argparse.Namespace) -> int:
    test = TEST_ALIASES.get(args.test, args.test)
    run = run_example(
        nu=args.nu,
        alpha=args.alpha,
        test_kind=test,
        covering=args.covering,
        samples=args.samples,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", run.report)
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "instance_id"])
        for lam, inst in run.cloud:
            w.writerow([repr(lam.real), repr(lam.imag), inst])
    with open(out / "boundary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for v in run.boundary:
            w.writerow([repr(v.real), repr(v.imag)])
    (out / "problem.dat-s").write_text(export_sdpa(run.analysis.problem))
    cert = run.analysis.certificate
    if cert is not None:
        _write_json(out / "certificate.json", cert.to_dict())
    gamma = run.report["gamma"]
    print(f"status={run.report['status']} certified={run.certified} gamma={gamma}")
    return EXIT_CERTIFIED if run.certified else EXIT_NOT_CERTIFIED


def cmd_analyze(args: argparse.Namespace) -> int:
    plant = Plant.from_dict(_load_json(args.plant))
    vset = ValueSet.from_dict(_load_json(args.set))
    recipe = MultiplierRecipe.from_dict(_load_json(args.recipe), value_set=vset)
    opts = SolverOptions(backend=args.backend)
    result = analyze(plant, recipe, performance=args.performance, opts=opts)
    summary = {
        "status": result.solution.status.value,
        "certified": result.certified,
        "gamma": None if result.certificate is None else result.certificate.gamma,
        "diagnostics": result.solution.diagnostics,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "problem.dat-s").write_text(export_sdpa(result.problem))
        if result.certificate is not None:
            _write_json(out / "certificate.json", result.certificate.to_dict())
        _write_json(out / "report.json", summary)
    print(json.dumps(summary, default=_json_default))
    return EXIT_CERTIFIED if result.certified else EXIT_NOT_CERTIFIED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iqc-lmi", description="Robust stability and performance tests via LMIs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("example", help="cyclic network example")
    ex.add_argument("--nu", type=int, default=1, help="filter order per channel")
    ex.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="filter pole location")
    ex.add_argument("--test", default="DynIntersection",
                    help="DynIntersection, LmiRegionDynamic, LmiRegionStatic or an alias "
                         + ", ".join(TEST_ALIASES))
    ex.add_argument("--covering", choices=("intersection", "disk"), default="intersection")
    ex.add_argument("--samples", type=int, default=200, help="random link instances")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--out", required=True, help="output directory")
    ex.set_defaults(func=cmd_example)

    an = sub.add_parser("analyze", help="analyse a plant from JSON files")
    an.add_argument("--plant", required=True)
    an.add_argument("--set", required=True)
    an.add_argument("--recipe", required=True)
    an.add_argument("--performance", action="store_true", help="minimize the gain bound of the d->e channel")
    an.add_argument("--backend", default="CLARABEL")
    an.add_argument("--out", help="optional output directory")
    an.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (IqcLmiError, ValueError, KeyError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
