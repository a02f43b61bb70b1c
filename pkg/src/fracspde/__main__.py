"""Command-line entry point: ``python -m fracspde <command> --seed N [options]``."""

import argparse
import sys

from .harness import COMMANDS, FORMATS, NUMERICAL_ERRORS, ConfigError, load_config, run


def build_parser():
    ap = argparse.ArgumentParser(prog="fracspde", description=__doc__)
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="experiment to run (may come from --config)")
    ap.add_argument("--config", help="key = value configuration file or a previous manifest.json")
    ap.add_argument("--lambda", dest="lambda_", type=str, help="stability index, in (1, 2]")
    ap.add_argument("--rho", type=str, help="Hoelder exponent of the initial data, in (0, 1]")
    ap.add_argument("--preset", help="coefficient preset")
    ap.add_argument("--sigma0", type=str, help="noise amplitude for the additive preset")
    ap.add_argument("--initial", help="initial condition kind (auto picks from rho)")
    ap.add_argument("--amplitude", type=str, help="initial condition amplitude")
    ap.add_argument("--grid-n", type=str, help="number of grid points")
    ap.add_argument("--grid-l", type=str, help="half width L of the box [-L, L)")
    ap.add_argument("--dt", type=str, help="time step")
    ap.add_argument("--horizon", type=str, help="final time T")
    ap.add_argument("--t", type=str, help="kernel evaluation time for verify-kernel")
    ap.add_argument("--p", type=str, help="moment order")
    ap.add_argument("--n-replicates", type=str, help="Monte Carlo replicate count")
    ap.add_argument("--seed", type=str, help="random seed (required)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=FORMATS, help="results file format")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {
        "command": args.command,
        "lambda": args.lambda_,
        "rho": args.rho,
        "preset": args.preset,
        "sigma0": args.sigma0,
        "initial": args.initial,
        "amplitude": args.amplitude,
        "grid_n": args.grid_n,
        "grid_l": args.grid_l,
        "dt": args.dt,
        "horizon": args.horizon,
        "t": args.t,
        "p": args.p,
        "n_replicates": args.n_replicates,
        "seed": args.seed,
        "out": args.out,
        "format": args.format,
    }
    try:
        cfg = load_config(args.config, overrides)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"fracspde: configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"fracspde: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"fracspde: invalid input: {exc}", file=sys.stderr)
        return 2
    print(f"{manifest['experiment']}: wrote {cfg.out}/{manifest['results_file']} and {cfg.out}/manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
