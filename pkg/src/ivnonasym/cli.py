"""Command-line entry point: estimate, ci, simulate, instrument.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error
(rank deficiency, degenerate inputs, invalid numeric domains).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .confint import ci_linear, ci_refined, ci_scalar_corrected, ci_uniform
from .estimator import classical_ci, fit_iv, lift, read_dataset_csv, sigma_hat
from .exceptions import DataFormatError, IvError
from .experiments import load_manifest, run_study
from .instrument import (
    SmokeIndexConfig,
    instrument_csv_string,
    read_fires_csv,
    read_tracts_csv,
    smoke_index,
    threshold_instrument,
)

SEED_ENV_VAR = "IV_NONASYM_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _matrix_arg(text: str) -> np.ndarray:
    """Parse a small matrix given as 'a,b;c,d'."""
    try:
        rows = [[float(v) for v in line.split(",")] for line in text.split(";")]
        mat = np.array(rows, dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse matrix {text!r}") from None
    return mat


def _vector_arg(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse vector {text!r}") from None


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iv-nonasym",
        description="Linear IV estimation with non-asymptotic bounds and corrected intervals",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_est = sub.add_parser("estimate", help="fit the IV estimator and print fit + sandwich JSON")
    p_est.add_argument("--data", required=True, help="dataset CSV (y,x1..xd,z1..zd[,w1..wp])")
    p_est.add_argument("--exog", action="store_true", help="lift exogenous covariates w1..wp")

    p_ci = sub.add_parser("ci", help="print a confidence report as JSON")
    p_ci.add_argument("--data", required=True)
    p_ci.add_argument("--delta", type=_probability, required=True)
    p_ci.add_argument("--delta-prime", type=_probability, required=True)
    p_ci.add_argument("--b", type=float, required=True, help="boundedness constant (assumed known)")
    p_ci.add_argument("--mode", choices=("scalar", "linear", "refined", "uniform"), default="scalar")
    p_ci.add_argument("--v", type=_vector_arg, help="direction for --mode linear (deterministic)")
    p_ci.add_argument("--u", type=_vector_arg, help="direction for --mode refined/uniform")
    p_ci.add_argument("--beta-true", type=_vector_arg, help="oracle parameter (simulation use)")
    p_ci.add_argument("--delta-hat-bound", type=float, help="bound on ||beta_hat - beta*||")
    p_ci.add_argument("--gamma", type=_matrix_arg, help="population cross moment 'a,b;c,d'")
    p_ci.add_argument("--lam", type=float, help="radius bound for --mode uniform")

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study to CSV")
    p_sim.add_argument("--study", required=True)
    p_sim.add_argument("--manifest", required=True, help="manifest JSON path")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument("--seed", type=int, help=f"seed (falls back to ${SEED_ENV_VAR}, then manifest)")
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")

    p_inst = sub.add_parser("instrument", help="build the smoke-index instrument from CSVs")
    p_inst.add_argument("--fires", required=True)
    p_inst.add_argument("--tracts", required=True)
    p_inst.add_argument("--variant", choices=("inverse-square", "inverse-square-west-weighted", "inverse-linear"),
                        default="inverse-square")
    p_inst.add_argument("--threshold", type=float)
    p_inst.add_argument("--west-weight", type=float, default=0.0)
    p_inst.add_argument("--min-size", type=float, default=100.0)
    p_inst.add_argument("--min-distance", type=float, default=1.0)
    p_inst.add_argument("--out", help="output CSV path (default: stdout)")
    return parser


def _cmd_estimate(args) -> int:
    data = read_dataset_csv(args.data)
    if args.exog:
        lifted = lift(data)
        fit = fit_iv(lifted.as_dataset())
        cov = sigma_hat(fit, lifted.as_dataset())
        beta = lifted.selector_U.T @ fit.beta_hat
        extra = {
            "lifted": True,
            "d": lifted.d,
            "p": lifted.p,
            "beta_hat": beta.tolist(),
            "alpha_hat": fit.beta_hat[lifted.d:].tolist(),
        }
    else:
        if data.W is not None:
            raise DataFormatError("dataset has w-columns; pass --exog to lift them")
        fit = fit_iv(data)
        cov = sigma_hat(fit, data)
        extra = {"lifted": False, "d": data.d, "p": 0, "beta_hat": fit.beta_hat.tolist()}
    moment = float(np.max(np.abs(fit.residuals @ (data.Z if not args.exog else np.hstack([data.Z, data.W]))))) / fit.n
    report = {
        "schema_version": 1,
        "n": fit.n,
        **extra,
        "theta_hat": fit.beta_hat.tolist(),
        "gamma_hat": fit.gamma_hat.tolist(),
        "condition_number": fit.condition_number,
        "sigma_hat": cov.sigma_hat.tolist(),
        "sandwich": cov.sandwich.tolist(),
        "residual_instrument_moment": moment,
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _cmd_ci(args) -> int:
    data = read_dataset_csv(args.data)
    if data.W is not None:
        raise DataFormatError("confidence modes operate on datasets without w-columns")
    fit = fit_iv(data)
    if args.mode == "scalar":
        report = ci_scalar_corrected(fit, data, args.delta, args.delta_prime, args.b)
    elif args.mode == "linear":
        if args.v is None:
            raise DataFormatError("--mode linear requires --v")
        report = ci_linear(
            fit, data, args.v, args.delta, args.delta_prime, args.b,
            beta_true=args.beta_true, delta_hat_norm_bound=args.delta_hat_bound,
        )
    elif args.mode == "refined":
        if args.u is None:
            raise DataFormatError("--mode refined requires --u")
        report = ci_refined(
            fit, data, args.u, args.delta, args.delta_prime, args.b,
            gamma_n=args.gamma, beta_true=args.beta_true,
        )
    else:
        if args.u is None or args.gamma is None or args.lam is None or args.delta_hat_bound is None:
            raise DataFormatError("--mode uniform requires --u, --gamma, --lam, --delta-hat-bound")
        report = ci_uniform(
            fit, data, args.u, args.gamma, args.lam,
            args.delta, args.delta_prime, args.b, args.delta_hat_bound,
        )
    print(report.to_json())
    return EXIT_OK


def _resolve_seed(args, manifest) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataFormatError(f"${SEED_ENV_VAR} must be an integer, got {env!r}") from None
    if manifest.seed is not None:
        return manifest.seed
    raise DataFormatError(f"simulate requires --seed, ${SEED_ENV_VAR}, or a manifest seed")


def _cmd_simulate(args) -> int:
    manifest = load_manifest(args.manifest)
    if manifest.study != args.study:
        raise DataFormatError(
            f"--study {args.study!r} does not match manifest study {manifest.study!r}"
        )
    manifest.seed = _resolve_seed(args, manifest)
    result = run_study(manifest, workers=max(1, args.workers))
    result.write_csv(args.out)
    written = [str(args.out)]
    if args.plot:
        from .figures import render_study_figure

        written.append(str(render_study_figure(args.out)))
    print(json.dumps({"study": manifest.study, "rows": len(result.rows), "written": written}))
    return EXIT_OK


def _cmd_instrument(args) -> int:
    cfg = SmokeIndexConfig(
        variant=args.variant,
        threshold=args.threshold,
        west_weight=args.west_weight,
        min_size_acres=args.min_size,
        min_distance_km=args.min_distance,
    )
    fires = read_fires_csv(args.fires)
    tracts = read_tracts_csv(args.tracts)
    zstar = smoke_index(tracts, fires, cfg)
    meta = {
        "variant": cfg.variant,
        "distance_metric": "haversine, Earth radius 6371.0 km",
        "min_distance_km": cfg.min_distance_km,
        "fires_used": len([f for f in fires if f.size_acres >= cfg.min_size_acres]),
        "tracts": len(tracts),
    }
    if cfg.threshold is not None:
        thresholded = threshold_instrument(zstar, cfg.threshold)
        z = thresholded.z
        meta["threshold"] = cfg.threshold
        meta["fraction_high"] = thresholded.fraction_high
    else:
        z = None
        meta["threshold"] = None
    text = instrument_csv_string([t.id for t in tracts], zstar, z)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(json.dumps(meta), file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "estimate": _cmd_estimate,
        "ci": _cmd_ci,
        "simulate": _cmd_simulate,
        "instrument": _cmd_instrument,
    }
    try:
        return handlers[args.subcommand](args)
    except (DataFormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
