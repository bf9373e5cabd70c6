"""Command line entry point ``spectral-regularity``.

Exit status: 0 when every asserted row passes, 1 on an assertion failure,
2 on a configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..field import Grid
from .config import ConfigError, Scenario, bundled_scenario, load_scenario
from .manufacture import Recipe, generate_manufactured
from .suites import run_scenario, sanitize

log = logging.getLogger("spectral_regularity")

COMMAND_SUITES = {
    "check-lemmas": (["lemma_suite"], ("contraction", "sweep", "steady")),
    "solve": (["picard_suite"], ("contraction", "sweep")),
    "steady-check": (["picard_suite"], ("steady",)),
    "bootstrap": (["bootstrap_suite"], ()),
    "gevrey": (["gevrey_suite"], ()),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file (default: bundled lemmas-default)")
    common.add_argument("--out", help="output directory (overrides the scenario)")
    common.add_argument("--seed", type=int, help="random seed (overrides the scenario)")
    common.add_argument("--grid", type=int, help="grid points per axis (overrides the scenario)")
    common.add_argument("--quiet", action="store_true", help="print nothing but errors")
    parser = argparse.ArgumentParser(prog="spectral-regularity", description="Pseudo-spectral regularity checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("check-lemmas", "operator identities and function-space inequality suites"),
        ("solve", "Picard contraction run and amplitude sweep"),
        ("steady-check", "steady-state invariance under the Picard iteration"),
        ("bootstrap", "derivative bootstrap of a manufactured stationary solution"),
        ("gevrey", "Gevrey-weighted solve and analyticity radius"),
        ("manufacture", "write a manufactured state and its forcing"),
        ("run", "run every suite selected in the scenario"),
        ("report", "print the summary of an existing report"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _scenario(args: argparse.Namespace) -> Scenario:
    path = args.config if args.config is not None else bundled_scenario("lemmas-default")
    return load_scenario(path).override(seed=args.seed, n=args.grid, out=args.out)


def _report(args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else _scenario(args).out_dir
    path = out / "report.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}", str(path)) from None
    failed = 0
    for name, suite in data["suites"].items():
        if not args.quiet:
            print(f"{name}: {suite['status']}")
        for row in suite["rows"]:
            failed += not row["passed"]
            if not args.quiet:
                print(f"  [{'PASS' if row['passed'] else 'FAIL'}] {row['check']}: {row['value']} {row['op']} {row['limit']}")
        if suite["status"] == "error":
            return 2
    return 0 if failed == 0 else 1


def _manufacture(args: argparse.Namespace, scn: Scenario) -> int:
    m = scn["manufacture"]
    recipe = Recipe(m["taylor_green_amp"], m["v_profile"], m["gevrey_decay"])
    grid = Grid(scn["grid"]["n"], scn["grid"]["period"])
    result = generate_manufactured(scn.kind, recipe, grid, scn.out_dir, scn.seed)
    if not args.quiet:
        print(json.dumps(sanitize(result.to_dict()), indent=2, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return _report(args)
        scn = _scenario(args)
        if args.command == "manufacture":
            return _manufacture(args, scn)
        if args.command == "run":
            report = run_scenario(scn)
        else:
            suites, parts = COMMAND_SUITES[args.command]
            report = run_scenario(scn, suites, parts)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print("\n".join(report.summary_lines()))
        print(f"report: {scn.out_dir / 'report.json'}")
    for s in report.suites.values():
        if s.status == "error":
            print(f"error in {s.name}:\n{s.error}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
