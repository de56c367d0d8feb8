"""Command-line driver: ``gaussmon {run, ensemble, steady-state, validate}``.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 integration failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .errors import IntegrationFailure, InvalidArgument

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INTEGRATION = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="gaussmon", description="Entropy production of monitored Gaussian systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out=True):
        sp.add_argument("--scenario", default="quench", help="scenario file, or bundled name quench/opo")
        if out:
            sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-final", type=float)
        sp.add_argument("--preset", help="homodyne_x, homodyne_p or heterodyne")

    common(sub.add_parser("run", help="write the entropy ledger of one scenario"))
    ens = sub.add_parser("ensemble", help="Monte Carlo averages of the stochastic rates")
    common(ens)
    ens.add_argument("--trajectories", type=int)
    ss = sub.add_parser("steady-state", help="conditional and unconditional steady states")
    common(ss)
    val = sub.add_parser("validate", help="run the acceptance suite and print a pass/fail table")
    val.add_argument("--only", type=int, action="append", metavar="N", help="run only criterion N (repeatable)")
    return p


def _scenario(args):
    from .scenario import load_scenario

    sc = load_scenario(args.scenario)
    changes = {"seed": args.seed, "dt": args.dt, "preset": args.preset}
    if args.verb != "ensemble":
        changes["t_final"] = args.t_final
    if getattr(args, "trajectories", None) is not None:
        changes["n_traj"] = args.trajectories
    return sc.replace(**changes)


def _run(args):
    from .runner import run_scenario, write_run

    sc = _scenario(args)
    res = run_scenario(sc)
    write_run(res, sc, args.out)
    last = res.ledger
    print(f"wrote {os.path.join(args.out, 'ledger.csv')} ({len(last.times)} rows); final I = {last.I[-1]:.6g}")
    return EXIT_OK


def _ensemble(args):
    from .runner import ensemble_scenario, write_ensemble

    sc = _scenario(args)
    res = ensemble_scenario(sc, t_final=args.t_final)
    write_ensemble(res, sc, args.out)
    print(f"{'t':>8} {'quantity':>8} {'z':>7}  pass")
    for t, name, z in res.zscores:
        print(f"{t:8g} {name:>8} {z.z:+7.2f}  {'yes' if z.passed else 'NO'}")
    if res.ensemble.failed:
        print(f"{len(res.ensemble.failed)} trajectories failed", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_INVALID


def _steady(args):
    from .runner import steady_state, write_json

    sc = _scenario(args)
    out = steady_state(sc)
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "steady_state.json"), out)
    print(json.dumps(out, indent=2))
    return EXIT_OK if out["converged"] else EXIT_INVALID


def _validate(args):
    from .checks import run_all

    results = run_all(only=set(args.only or ()), echo=print)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_INVALID


VERBS = {"run": _run, "ensemble": _ensemble, "steady-state": _steady, "validate": _validate}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except IntegrationFailure as exc:
        print(f"integration failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except InvalidArgument as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
