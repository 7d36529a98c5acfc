"""Command-line interface: ``tcqpt {solve,sweep,dynamics,figure,exponent}``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .dynamics import SettleError, StiffnessError, integrate
from .experiments import (FIGURES, OBSERVABLES, Case, FigureError, export,
                          exponent_study, run_case, run_figure)
from .model import CONFIG_KEYS, ModelError, ModelParams, load_config, parse_flat
from .steady import MeanFieldState, NoRootError, find_all, solve_from, trivial_state

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
REGIME_CHOICES = ("none", "hermitian", "lossy", "gain_balanced")


class InputError(ValueError):
    pass


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value parameter file")
    g = p.add_argument_group("model parameters (override the config file)")
    for key in CONFIG_KEYS:
        g.add_argument(f"--{key}", type=float, default=None, metavar="X")
    p.add_argument("--regime", choices=REGIME_CHOICES, default="none",
                   help="set omega_j from omega_a by this matching condition")
    p.add_argument("--factor", type=float, default=1.0, help="drive-ratio mismatch factor")
    p.add_argument("--gain-factor", type=float, default=1.0,
                   help="kappa_g as a multiple of the balancing rate (gain_balanced)")


def _model(args) -> ModelParams:
    data: dict[str, object] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data.update(parse_flat(fh.read()))
    for key in CONFIG_KEYS:
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    # an explicit detuning on the command line replaces a frequency triple
    if any(getattr(args, k) is not None for k in ("delta_c", "delta_s")):
        if not any(getattr(args, k) is not None for k in ("omega_c", "omega_s", "omega_d")):
            for k in ("omega_c", "omega_s", "omega_d"):
                data.pop(k, None)
    return ModelParams.from_mapping(data)


def _case(args, base: ModelParams, sweep="lam", start=None, stop=None, points=1,
          method="grid") -> Case:
    start = base.lam if start is None else start
    stop = start if stop is None else stop
    return Case("cli", base, sweep, start, stop, points, regime=args.regime,
                factor=args.factor, gain_factor=args.gain_factor, method=method)


def _solution_json(sol) -> dict:
    st = sol.state
    return {"branch_id": sol.branch_id, "jz": st.jz, "jm": [st.jm.real, st.jm.imag],
            "a_mean": [st.a_mean.real, st.a_mean.imag], "n_phot": st.n_phot,
            "F": st.f_quantity, "stability": sol.stability,
            "residual_norm": sol.residual_norm,
            "eigenvalues": [[e.real, e.imag] for e in sol.eigenvalues]}


def cmd_solve(args) -> int:
    params = _case(args, _model(args)).params(_model(args).lam)
    if args.jz is not None:
        start = MeanFieldState(0j, complex(args.jm_re, args.jm_im), args.jz)
        sols = [solve_from(params, start)]
    else:
        sols = find_all(params, tuple(args.grid))
    json.dump({"params": params.to_mapping(), "roots": [_solution_json(s) for s in sols]},
              sys.stdout, indent=2)
    print()
    return EXIT_OK


SWEEP_ALIASES = {"lambda": "lam"}


def cmd_sweep(args) -> int:
    base = _model(args)
    sweep = SWEEP_ALIASES.get(args.param, args.param)
    allowed = {"lambda_over_delta", "delta_over_lambda", "lam", "delta_c", "delta_s",
               "kappa_c", "kappa_g", "gamma_perp", "gamma_par", "n_tls"}
    if sweep not in allowed:
        raise InputError(f"cannot sweep {args.param!r}")
    if args.points < 1:
        raise InputError("--points must be positive")
    case = Case(args.name, base, sweep, args.start, args.stop, args.points,
                regime=args.regime, factor=args.factor, gain_factor=args.gain_factor,
                method=args.method)
    result = run_case(case, args.threads)
    for path in export(result, args.out):
        print(path)
    return EXIT_OK


def cmd_dynamics(args) -> int:
    params = _case(args, _model(args)).params(_model(args).lam)
    start = trivial_state(params)
    start = MeanFieldState(start.a_mean, complex(args.jm_re, args.jm_im),
                           args.jz if args.jz is not None else start.jz)
    traj = integrate(params, start, args.horizon)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("t,a_re,a_im,jm_re,jm_im,jz\n")
            for t, y in zip(traj.times, traj.values):
                fh.write(",".join(repr(float(v)) for v in (t, *y)) + "\n")
    fin = traj.final
    json.dump({"t_final": float(traj.times[-1]), "converged": traj.converged,
               "flow_norm": traj.final_residual, "warnings": traj.warnings,
               "jz": fin.jz, "jm": [fin.jm.real, fin.jm.imag],
               "a_mean": [fin.a_mean.real, fin.a_mean.imag]}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def _overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        try:
            out[k] = float(v)
        except ValueError:
            raise InputError(f"override {k!r} is not numeric") from None
    return out


def cmd_figure(args) -> int:
    results = run_figure(args.figure_id, _overrides(args.set), points=args.points,
                         threads=args.threads)
    for res in results:
        for path in export(res, args.out):
            print(path)
    return EXIT_OK


def cmd_exponent(args) -> int:
    if args.figure not in ("fig2", "fig3"):
        raise InputError("exponent fits are defined for fig2/fig3 parameters")
    cases = [args.case] if args.case else ["hermitian", "gain_balanced"]
    out = {}
    for case in cases:
        fit, _ = exponent_study(case, args.observable, points=args.points)
        out[case] = {"exponent": fit.exponent, "amplitude": fit.amplitude,
                     "r_squared": fit.r_squared, "n_used": fit.n_used}
    json.dump({"observable": args.observable, "fits": out}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcqpt", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="enumerate steady states (JSON to stdout)")
    _add_model_args(p)
    p.add_argument("--grid", type=int, nargs=3, default=[10, 10, 10],
                   metavar=("NZ", "NR", "NPHI"))
    p.add_argument("--jz", type=float, default=None, help="single Newton start instead")
    p.add_argument("--jm-re", type=float, default=0.0)
    p.add_argument("--jm-im", type=float, default=0.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep one parameter and export CSV")
    _add_model_args(p)
    p.add_argument("--param", required=True,
                   help="model key, lambda_over_delta or delta_over_lambda")
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--method", choices=("grid", "continuation", "cumulant"), default="grid")
    p.add_argument("--name", default="sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dynamics", help="integrate the equations of motion")
    _add_model_args(p)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--jz", type=float, default=None)
    p.add_argument("--jm-re", type=float, default=1e-3)
    p.add_argument("--jm-im", type=float, default=0.0)
    p.add_argument("--out", help="trajectory CSV")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("figure", help="reproduce a figure's data")
    p.add_argument("figure_id", choices=FIGURES)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a base parameter (config key)")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("exponent", help="fit a critical exponent from solver data")
    p.add_argument("--observable", choices=tuple(OBSERVABLES), required=True)
    p.add_argument("--figure", default="fig2")
    p.add_argument("--case", choices=("hermitian", "gain_balanced"), default=None)
    p.add_argument("--points", type=int, default=12)
    p.set_defaults(func=cmd_exponent)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, FigureError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoRootError, SettleError, StiffnessError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
