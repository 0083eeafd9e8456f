"""Command-line front end.

Subcommands:
  identities        print the kappa numerology and check its identities
  simulate          run a driver and dump it (CSV) with tracked end state
  trace             trace polyline for one driver
  eval              evaluate a divisor correlator in the identity chart
  martingale-test   Monte-Carlo drift test for a catalog observable/divisor
  exponent-fit      boundary derivative-exponent regression
  bpz-residual      residuals of the second-order null equations
  fw-limit          short-slit hitting rate vs the Virasoro prediction
  restriction       slit-avoidance probability vs the closed form
  hadamard          Hadamard variation checks
  list-observables  catalog as JSON

Exit codes: 0 pass/success, 1 test failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import mc
from .loewner import LoewnerTracker, brownian_driver, constant_driver, driver_to_csv, trace
from .observables import (bpz_residual_boundary_scalar, bpz_residual_virasoro,
                          boundary_deriv_observable, catalog, fw_limit_check,
                          t_hat_1pt, t_hat_npoint)
from .params import params_from_kappa, vertex_dimensions
from .vertex import (eval_formal, eval_hatted, eval_rooted,
                     identity_chart, is_neutral, parse_divisor)

SCHEMA = 1


def parse_kappa(text: str) -> float:
    """Accept decimals and exact fractions like 8/3."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad kappa {text!r}: {exc}")


def parse_complex(text: str) -> complex:
    try:
        re_s, im_s = text.split(",")
        return complex(float(re_s), float(im_s))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad complex 're,im' value {text!r}: {exc}")


def _emit(payload: dict, args) -> None:
    payload = {"schema": SCHEMA, **payload}
    if getattr(args, "format", "json") == "json":
        text = json.dumps(payload, indent=2, default=mc._json_default) + "\n"
    else:
        text = payload.get("csv", json.dumps(payload, default=mc._json_default) + "\n")
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _echo(args) -> dict:
    return {k: v for k, v in vars(args).items()
            if k not in ("func", "out") and v is not None}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radialsle",
                                 description="radial Loewner / observable laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, seed=True):
        sp.add_argument("--kappa", type=parse_kappa, default=8 / 3,
                        help="diffusivity; fractions like 8/3 accepted")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--dt", type=float, default=1e-3, help="time step")
        sp.add_argument("--out", help="write output to this path")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (results independent of the value)")

    sp = sub.add_parser("identities", help="kappa numerology and identity checks")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("simulate", help="simulate one driver; dump CSV")
    common(sp)
    sp.add_argument("--t", type=float, default=1.0, help="horizon")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("trace", help="trace polyline for one driver")
    common(sp)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--eps-tip", type=float, default=1e-3)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("eval", help="evaluate a divisor correlator at t=0")
    common(sp, seed=False)
    sp.add_argument("--divisor", required=True,
                    help="literal: 'node re,im s s*; ...; root tau tau*'")
    sp.add_argument("--plain", action="store_true",
                    help="evaluate without the one-leg insertion")
    sp.add_argument("--formal", action="store_true",
                    help="allow non-neutral divisors (flagged formal)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("martingale-test", help="Monte-Carlo drift test")
    common(sp)
    sp.add_argument("--observable", default="lsw_poisson")
    sp.add_argument("--z", type=parse_complex, default=0.4j)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--tau", type=float, default=0.7)
    sp.add_argument("--divisor", help="divisor literal for --observable divisor")
    sp.add_argument("--n", type=int, default=2000, help="number of paths")
    sp.add_argument("--t", type=float, default=0.5, help="horizon")
    sp.add_argument("--sample-times", default="0.1,0.3,0.5")
    sp.add_argument("--negative", action="store_true",
                    help="non-neutral drift detection (pass = drift found)")
    sp.set_defaults(func=cmd_martingale)

    sp = sub.add_parser("exponent-fit", help="boundary derivative exponent")
    common(sp)
    sp.add_argument("--h", type=float, default=0.0, help="derivative weight")
    sp.add_argument("--theta0", type=float, default=np.pi, help="boundary angle")
    sp.add_argument("--n", type=int, default=10000)
    sp.add_argument("--grid", default="1.0,1.5,2.0,2.5,3.0")
    sp.set_defaults(func=cmd_exponent)

    sp = sub.add_parser("bpz-residual", help="null-equation residuals")
    common(sp, seed=False)
    sp.add_argument("--kind", choices=("virasoro", "boundary"), default="virasoro")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--h", type=float, default=0.0, help="boundary weight")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_bpz)

    sp = sub.add_parser("fw-limit", help="short-slit hitting rate check")
    common(sp, seed=False)
    sp.add_argument("--t", type=float, default=1e-4)
    sp.add_argument("--theta", type=float, default=np.pi)
    sp.add_argument("--tol", type=float, default=0.02)
    sp.set_defaults(func=cmd_fw)

    sp = sub.add_parser("restriction", help="slit-avoidance experiment")
    common(sp)
    sp.add_argument("--r", type=float, default=0.5)
    sp.add_argument("--theta0", type=float, default=np.pi)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--t", type=float, default=3.0)
    sp.add_argument("--delta-hit", type=float, default=0.01)
    sp.add_argument("--tol", type=float, default=0.05)
    sp.set_defaults(func=cmd_restriction)

    sp = sub.add_parser("hadamard", help="Hadamard variation checks")
    common(sp)
    sp.add_argument("--z1", type=parse_complex, default=0.5 + 0j)
    sp.add_argument("--z2", type=parse_complex, default=-0.5 + 0j)
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--covariation-paths", type=int, default=0)
    sp.set_defaults(func=cmd_hadamard)

    sp = sub.add_parser("list-observables", help="observable catalog as JSON")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_list)
    return ap


# ---------------------------------------------------------------------------

def cmd_identities(args) -> int:
    p = params_from_kappa(args.kappa)
    checks = {
        "2a(a+b)=1": abs(2 * p.a * (p.a + p.b) - 1.0),
        "b = a(kappa/4-1)": abs(p.b - p.a * (p.kappa / 4 - 1)),
        "c = 1-12b^2": abs(p.c - (1 - 12 * p.b**2)),
        "c = (3k-8)(6-k)/2k": abs(p.c - (3 * p.kappa - 8) * (6 - p.kappa) / (2 * p.kappa)),
        "h12 = a^2/2-ab": abs(p.h12 - (p.a**2 / 2 - p.a * p.b)),
        "h0half = a^2/8-b^2/2": abs(p.h0half - (p.a**2 / 8 - p.b**2 / 2)),
        "fusion h12-(a^2/4-b^2)=h12^2/a^2":
            abs(p.h12 - (p.a**2 / 4 - p.b**2) - p.h12**2 / p.a**2),
        "lambda = mu + kappa lambda^2/2":
            abs(p.h12 - ((p.a**2 / 4 - p.b**2) + p.kappa * p.h12**2 / 2)),
    }
    ok = all(v < 1e-12 for v in checks.values())
    one_leg = vertex_dimensions(p.a, 0.0, -p.a / 2, -p.a / 2, p)
    _emit({"config": _echo(args),
           "params": {"kappa": p.kappa, "a": p.a, "b": p.b, "c": p.c,
                      "h12": p.h12, "h0half": p.h0half},
           "one_leg_dimensions": vars(one_leg),
           "identity_residuals": checks,
           "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    n = round(args.t / args.dt)
    d = brownian_driver(args.kappa, args.dt, n, args.seed) if args.kappa > 0 \
        else constant_driver(0.0, args.dt, n)
    tracker = LoewnerTracker(d)
    tracker.run()
    payload = {"config": _echo(args),
               "capacity_error": tracker.capacity_error,
               "theta_final": tracker.theta,
               "csv": driver_to_csv(d)}
    _emit(payload, args)
    return 0


def cmd_trace(args) -> int:
    n = round(args.t / args.dt)
    d = brownian_driver(args.kappa, args.dt, n, args.seed) if args.kappa > 0 \
        else constant_driver(0.0, args.dt, n)
    g = trace(d, args.samples, eps_tip=args.eps_tip)
    csv = "k,re,im\n" + "\n".join(f"{k},{z.real:.17g},{z.imag:.17g}"
                                  for k, z in enumerate(g)) + "\n"
    _emit({"config": _echo(args), "max_abs": float(np.abs(g).max()), "csv": csv}, args)
    return 0


def cmd_eval(args) -> int:
    p = params_from_kappa(args.kappa)
    try:
        d = parse_divisor(args.divisor.replace(";", "\n"))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    chart = identity_chart(d.points)
    if args.formal:
        cv = eval_formal(d, p, chart, hatted=not args.plain)
    elif args.plain:
        cv = eval_rooted(d, p, chart)
    else:
        cv = eval_hatted(d, p, chart)
    _emit({"config": _echo(args),
           "neutral": is_neutral(d),
           "formal": cv.formal,
           "log_mod": cv.value.log_mod,
           "arg": cv.value.arg,
           "value": cv.complex_value}, args)
    return 0


def cmd_martingale(args) -> int:
    p = params_from_kappa(args.kappa)
    times = tuple(float(s) for s in args.sample_times.split(","))
    cfg = mc.MCConfig(kappa=args.kappa, n_paths=args.n, t_max=args.t, dt=args.dt,
                      sample_times=times, master_seed=args.seed, threads=args.threads)
    divisor = parse_divisor(args.divisor.replace(";", "\n")) if args.divisor else None
    if args.negative:
        if divisor is None:
            print("error: --negative needs --divisor", file=sys.stderr)
            return 2
        rep = mc.neutrality_negative_test(cfg, divisor, p)
    else:
        try:
            obs = mc.make_observable(args.observable, p, z=args.z, alpha=args.alpha,
                                     tau=args.tau, divisor=divisor)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        rep = mc.martingale_test(cfg, obs)
    payload = {"config": _echo(args)}
    payload.update(json.loads(rep.to_json()))
    if args.format == "csv":
        payload["csv"] = rep.to_csv()
    _emit(payload, args)
    return 0 if rep.verdict == "pass" else 1


def cmd_exponent(args) -> int:
    grid = tuple(float(s) for s in args.grid.split(","))
    cfg = mc.MCConfig(kappa=args.kappa, n_paths=args.n, t_max=max(grid),
                      dt=args.dt, sample_times=grid, master_seed=args.seed,
                      threads=args.threads)
    res = mc.exponent_fit(args.h, args.theta0, cfg, grid=grid)
    ok = abs(res["slope"] - res["expected_slope"]) <= 0.1 * abs(res["expected_slope"])
    _emit({"config": _echo(args), **res, "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_bpz(args) -> int:
    p = params_from_kappa(args.kappa)
    rng = np.random.default_rng(12345)
    worst = 0.0
    if args.kind == "virasoro":
        count = 0
        while count < args.samples:
            z = (0.15 + 0.75 * rng.random()) * np.exp(2j * np.pi * rng.random())
            if abs(z - 1) < 0.15:
                continue
            worst = max(worst, abs(bpz_residual_virasoro(z, p)))
            count += 1
    else:
        target = boundary_deriv_observable(args.h, p)
        m = p.a * target.sigma

        def R(th):
            return abs(np.sin(th / 2.0)) ** m

        for _ in range(args.samples):
            th = 0.3 + (2 * np.pi - 0.6) * rng.random()
            worst = max(worst, abs(bpz_residual_boundary_scalar(
                R, args.h, p, th, root_dim=2.0 * target.h_q_hat)))
    ok = worst < args.tol
    _emit({"config": _echo(args), "max_residual": worst,
           "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_fw(args) -> int:
    p = params_from_kappa(args.kappa)
    lhs, rhs = fw_limit_check(args.theta, args.t, p)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
    ok = rel < args.tol
    _emit({"config": _echo(args), "lhs": lhs, "rhs": rhs, "rel_diff": rel,
           "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_restriction(args) -> int:
    cfg = mc.MCConfig(kappa=args.kappa, n_paths=args.n, t_max=args.t, dt=args.dt,
                      sample_times=(args.t,), master_seed=args.seed,
                      threads=args.threads)
    res = mc.restriction_experiment(args.r, args.theta0, cfg,
                                    delta_hit=args.delta_hit)
    ok = abs(res["p_mc"] - res["p_formula"]) <= args.tol
    _emit({"config": _echo(args), **res, "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_hadamard(args) -> int:
    cfg = mc.MCConfig(kappa=args.kappa, n_paths=max(args.covariation_paths, 1),
                      t_max=args.t, dt=args.dt, sample_times=(args.t,),
                      master_seed=args.seed, threads=args.threads)
    res = mc.hadamard_check(args.z1, args.z2, cfg,
                            covariation_paths=args.covariation_paths)
    ok = res["rate_linf"] < 1e-3 if cfg.kappa == 0 else True
    if "covariation_rel_err" in res:
        ok &= res["covariation_rel_err"] < 0.10
    _emit({"config": _echo(args), **res, "verdict": "pass" if ok else "fail"}, args)
    return 0 if ok else 1


def cmd_list(args) -> int:
    p = params_from_kappa(args.kappa)
    entries = []
    for spec in catalog(p):
        entries.append({
            "name": spec.name,
            "description": spec.description,
            "inputs": list(spec.inputs),
            "params": spec.params,
            "dimensions": vars(spec.dimensions) if spec.dimensions else None,
        })
    _emit({"config": _echo(args), "observables": entries}, args)
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
