"""``sandflip`` command line: run, oracle, check, plot.

Exit codes: 0 success, 1 invalid input (bad config, missing file, lattice
too large for the exact oracle), 2 runtime failure (failed checks, partial
runs, crashes).
"""

import argparse
import json
import os
import sys

from .. import __version__
from ..dynamics import ALL_ONES, ALL_TWOS, PRODUCT
from ..models import SF
from ..observables import TheoryContext
from ..oracle import (
    MAX_EXACT_SITES,
    MAX_FLOW_SITES,
    Distribution,
    ReducibleChainError,
    enumerate_chain,
    stationary_distribution,
    stochastic_domination_check,
    transient_distribution,
)
from .config import ConfigError, parse_config
from .plotting import ManifestError
from .runner import COLUMNS, MANIFEST_FILE, RunManifest, _csv_text, run_experiment

OK, INVALID, FAILED = 0, 1, 2


def _read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def _exact_initial(initial, n):
    if initial.kind == PRODUCT:
        return Distribution.product(n, initial.rho)
    if initial.kind == ALL_ONES:
        return Distribution.all_ones(n)
    if initial.kind == ALL_TWOS:
        return Distribution.all_twos(n)
    return Distribution.dirac(1 << initial.y, n)


def cmd_run(args):
    spec = _read_config(args.config)
    manifest = run_experiment(spec, args.output_dir)
    with open(os.path.join(manifest.output_dir, "summary.json")) as fh:
        summary = json.load(fh)
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: measured {c['measured']} expected {c['expected']}")
    print(f"manifest: {manifest.manifest_path}")
    if manifest.partial:
        print("time budget exhausted: results are partial", file=sys.stderr)
        return FAILED
    return OK if all(c["pass"] for c in summary["checks"]) else FAILED


def cmd_oracle(args):
    spec = _read_config(args.config)
    n = spec.topology.n
    if n > MAX_EXACT_SITES:
        print(f"error: the exact oracle handles at most {MAX_EXACT_SITES} sites, config has n={n}", file=sys.stderr)
        return INVALID
    out = args.output_dir or spec.output_dir
    os.makedirs(out, exist_ok=True)
    chain = enumerate_chain(spec.topology, spec.model)
    init = _exact_initial(spec.initial, n)
    times = spec.sample_times or (0.1, 1.0, 10.0)
    th = TheoryContext(spec.model)
    rho0 = init.density_of_ones()
    rows = []
    for t in times:
        d = transient_distribution(chain, init, t)
        rows.append((t, -1, "density", d.density_of_ones(), th.rho(t, rho0), True))
        rows.append((t, -1, "p_inactive_0", d.prob_inactive([0]), None, True))
    report = dict(n=n, states=chain.n_states, transient=[dict(t=r[0], density=r[3]) for r in rows[::2]])
    try:
        pi = stationary_distribution(chain)
        p0 = pi.prob_inactive([0])
        p01 = pi.prob_inactive([0, 1])
        report["stationary"] = dict(density=pi.density_of_ones(), p_inactive_0=p0, p_inactive_01=p01,
                                    product_gap=p01 - p0 * p0)
        rows.append((None, -1, "stationary_density", pi.density_of_ones(), th.rho_stationary, True))
        rows.append((None, -1, "stationary_product_gap", p01 - p0 * p0, 0.0, True))
    except ReducibleChainError as e:
        report["stationary"] = dict(error=str(e))
    if spec.model.variant == SF and n <= MAX_FLOW_SITES:
        dom = {}
        for t in times:
            lo = transient_distribution(chain, Distribution.all_ones(n), t)
            hi = transient_distribution(chain, Distribution.all_twos(n), t)
            dom[repr(float(t))] = bool(stochastic_domination_check(lo, hi))
        report["domination_all_ones_below_all_twos"] = dom
    with open(os.path.join(out, "oracle.csv"), "w", newline="") as fh:
        fh.write(_csv_text(rows))
    with open(os.path.join(out, "oracle.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return OK


def cmd_check(args):
    from .checks import SUITE, run_suite

    names = args.only or list(SUITE)
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        print(f"error: unknown check(s) {', '.join(unknown)}; choose from {', '.join(SUITE)}", file=sys.stderr)
        return INVALID
    return OK if run_suite(names) else FAILED


def cmd_plot(args):
    from .plotting import emit_plot_script

    path = args.manifest
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_FILE)
    manifest = RunManifest.load(path)
    text = emit_plot_script(manifest)
    target = os.path.join(manifest.output_dir, "plot.py")
    with open(target, "w") as fh:
        fh.write(text)
    print(target)
    return OK


def build_parser():
    p = argparse.ArgumentParser(prog="sandflip", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output-dir", default=None)
    r.set_defaults(func=cmd_run)
    o = sub.add_parser("oracle", help="exact analysis of a small lattice")
    o.add_argument("config")
    o.add_argument("-o", "--output-dir", default=None)
    o.set_defaults(func=cmd_oracle)
    c = sub.add_parser("check", help="exact property suite")
    c.add_argument("--only", nargs="+", metavar="NAME")
    c.set_defaults(func=cmd_check)
    pl = sub.add_parser("plot", help="write a matplotlib script next to a run's data")
    pl.add_argument("manifest")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return INVALID if e.code else OK
    try:
        return args.func(args)
    except (ConfigError, ManifestError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return INVALID
    except Exception as e:  # anything else is a runtime failure, not a usage error
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "COLUMNS"]
