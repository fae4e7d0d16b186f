"""``posobs`` command line.

Exit codes: 0 when every requested verdict passes, 1 when a check fails or
synthesis is infeasible, 2 on malformed input.
"""

import argparse
import io
import json
import sys
from pathlib import Path

from . import scenario as scn
from .errors import NumericalFailure, PosobsError, ScenarioError, SingularMatrixError
from .fixtures import REPRO_IDS, example
from .model import certify, validate_system
from .sim import (check_ordering, expected_fixed_point, monte_carlo_mean,
                  simulate_deterministic, simulate_noisy)
from .synthesis import COUPLED, THM1, SynthesisRequest, synth_full

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

REPRO_T = {"ex1": 50, "ex2": 50, "ex3": 100}

EX3_NOTE = ("note: the bundled gains satisfy the invariance and noise conditions, but "
            "A + B(K_upper + K_lower) has spectral radius above 1, so the Schur "
            "requirement fails and the mean error need not converge")


class InputError(PosobsError):
    """Bad command-line usage detected after argument parsing."""


def _fmt(v):
    return format(float(v), ".17g")


def trajectory_csv(tr, full=False):
    """CSV text with columns ``t,x1,xbar1,xlow1`` and, with ``full``, the rest."""
    n = tr.x.shape[1]
    coords = range(n) if full else range(min(n, 1))
    header = ["t"]
    for i in coords:
        header += [f"x{i + 1}", f"xbar{i + 1}", f"xlow{i + 1}"]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for t in range(tr.x.shape[0]):
        row = [str(t)]
        for i in coords:
            row += [_fmt(tr.x[t, i]), _fmt(tr.xbar[t, i]), _fmt(tr.xlow[t, i])]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


PLOT_TEMPLATE = """\
# gnuplot script: first state component with its upper and lower bounds
set datafile separator ','
set key autotitle columnhead
set xlabel 'Time t'
set ylabel 'Magnitude'
set grid
set terminal pngcairo size 800,600
set output '{png}'
plot '{csv}' using 1:2 with lines lw 2 title 'x_1', \\
     '' using 1:3 with lines dt 2 title 'upper bound', \\
     '' using 1:4 with lines dt 3 title 'lower bound'
"""


def _need_gains(sc, cmd):
    if sc.gains is None:
        raise ScenarioError(f"{cmd} needs a gains block", field="gains")
    return sc.gains


def _report(sc, args, out):
    sys_ = sc.system
    viol = validate_system(sys_)
    if viol:
        raise ScenarioError("; ".join(str(v) for v in viol), field="system")
    noise = True if args.noise else None
    rep = certify(sys_, _need_gains(sc, "check"), args.tol, noise=noise,
                  generic=args.generic)
    print(rep.render(), file=out)
    return rep


def cmd_check(args, out=None):
    out = out or sys.stdout
    sc = scn.load(args.scenario)
    rep = _report(sc, args, out)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_synth(args, out=None):
    out = out or sys.stdout
    sc = scn.load(args.scenario)
    plan = sc.synthesis or scn.SynthesisSettings()
    mode = args.mode or plan.mode
    noise = args.noise or plan.include_noise_conditions
    eps = plan.eps if args.eps is None else args.eps
    res = synth_full(SynthesisRequest(sc.system, mode, noise, eps, plan.D))
    print(f"mode = {mode}", file=out)
    print(f"status = {res.describe()}", file=out)
    if not res.feasible:
        if res.report is not None:
            print(res.report.render(), file=out)
        return EXIT_FAIL
    print(res.report.render(), file=out)
    text = json.dumps(scn.gains_to_dict(res.gains), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"gains written to {args.out}", file=out)
    else:
        print(text, file=out)
    return EXIT_OK if res.report.ok else EXIT_FAIL


def _run(sc, T, N, seed, noisy):
    g = _need_gains(sc, "simulate")
    plan = sc.simulation
    x0, xb0, xl0 = plan.initial(sc.system.n, seed)
    if not noisy:
        return simulate_deterministic(sc.system, g, x0, xb0, xl0, T)
    cfg = plan.noise(seed)
    if N == 1:
        return simulate_noisy(sc.system, g, x0, xb0, xl0, T, cfg)
    return monte_carlo_mean(sc.system, g, x0, xb0, xl0, T, N, cfg)


def _ordering_summary(tr):
    v = check_ordering(tr)
    label = "ensemble mean ordering" if tr.runs > 1 else "ordering"
    return v, f"{label}: {'none' if v is None else v}"


def cmd_simulate(args, out=None):
    out = out or sys.stdout
    sc = scn.load(args.scenario)
    plan = sc.simulation
    T = plan.T if args.T is None else args.T
    N = plan.N if args.N is None else args.N
    seed = plan.seed if args.seed is None else args.seed
    if T < 0 or N < 1:
        raise InputError("--T must be >= 0 and --N >= 1")
    tr = _run(sc, T, N, seed, args.noisy)
    csv = trajectory_csv(tr, args.full)
    info = out
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
    else:
        out.write(csv)
        info = sys.stderr
    viol, line = _ordering_summary(tr)
    print(line, file=info)
    # Noisy runs may leave the cone; that is reported, not a failure.
    return EXIT_FAIL if viol is not None and not args.noisy else EXIT_OK


def _print_fixed_point(fp, out):
    print("X* = [" + ", ".join(format(v, ".12g") for v in fp.X) + "]", file=out)
    print(f"residual = {fp.residual:.3g}", file=out)
    print(f"rho_G = {fp.rho:.12g}", file=out)
    print(f"in_cone = {'true' if fp.in_cone else 'false'}", file=out)
    print(f"attracting = {'true' if fp.attracting else 'false'}", file=out)


def cmd_fixed_point(args, out=None):
    out = out or sys.stdout
    sc = scn.load(args.scenario)
    g = _need_gains(sc, "fixed-point")
    if not sc.system.has_noise:
        raise ScenarioError("fixed-point needs E and F", field="system")
    fp = expected_fixed_point(sc.system, g)
    _print_fixed_point(fp, out)
    return EXIT_OK if fp.attracting and fp.in_cone else EXIT_FAIL


def cmd_repro(args, out=None):
    out = out or sys.stdout
    name = args.example
    sc = example(name)
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    noisy = sc.system.has_noise
    T = REPRO_T[name] if args.T is None else args.T
    seed = sc.simulation.seed if args.seed is None else args.seed

    print(f"# {name}: condition report", file=out)
    args.noise, args.generic = noisy, False
    rep = _report(sc, args, out)
    ok = rep.ok

    tr = _run(sc, T, 1, seed, noisy)
    csv_name = "state_bounds_noisy.csv" if noisy else "state_bounds.csv"
    (outdir / csv_name).write_text(trajectory_csv(tr, args.full), encoding="utf-8")
    plot_name = f"plot_{Path(csv_name).stem}.gp"
    (outdir / plot_name).write_text(
        PLOT_TEMPLATE.format(csv=csv_name, png=Path(csv_name).stem + ".png"), encoding="utf-8")
    print(f"# trajectory: T = {T}, seed = {seed}{', noisy' if noisy else ''}", file=out)
    viol, line = _ordering_summary(tr)
    print(line, file=out)
    print(f"min_entry = {min(tr.x.min(), tr.xbar.min(), tr.xlow.min()):.12g}", file=out)
    if viol is not None and not noisy:
        ok = False
    if noisy:
        print("# expected fixed point", file=out)
        fp = expected_fixed_point(sc.system, sc.gains)
        _print_fixed_point(fp, out)
        ok = ok and fp.attracting and fp.in_cone
        if not rep.stability_ok:
            print(EX3_NOTE, file=out)
    print(f"wrote {outdir / csv_name} and {outdir / plot_name}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="posobs",
                                description="Positive interval observers with feedback.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="certify a scenario's gains")
    c.add_argument("scenario")
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--noise", action="store_true", help="require the noise conditions")
    c.add_argument("--generic", action="store_true", help="also report the single-gain conditions")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("synth", help="design gains by linear programming")
    s.add_argument("scenario")
    s.add_argument("--mode", choices=(THM1, COUPLED))
    s.add_argument("--noise", action="store_true", help="include the noise conditions")
    s.add_argument("--eps", type=float)
    s.add_argument("--out", help="gains file to write")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("simulate", help="simulate the closed loop to CSV")
    m.add_argument("scenario")
    m.add_argument("--noisy", action="store_true")
    m.add_argument("--T", type=int)
    m.add_argument("--N", type=int, help="runs to average (noisy only)")
    m.add_argument("--seed", type=int)
    m.add_argument("--out", help="CSV path (default: stdout)")
    m.add_argument("--full", action="store_true", help="include every state coordinate")
    m.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fixed-point", help="expected steady state under noise")
    f.add_argument("scenario")
    f.set_defaults(func=cmd_fixed_point)

    r = sub.add_parser("repro", help="run a bundled example")
    r.add_argument("example", choices=REPRO_IDS)
    r.add_argument("--out", help="output directory (default: current)")
    r.add_argument("--T", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--tol", type=float, default=1e-9)
    r.add_argument("--full", action="store_true")
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SingularMatrixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (PosobsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
