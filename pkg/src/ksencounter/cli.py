"""Command-line entry point: ``ksencounter <series|encounter|propagate|verify|lc>``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import canonical as cn
from . import dynamics as dy
from . import hjsolver as hj
from . import jsonio
from . import kscore as ks
from . import verify as vf
from .errors import DomainError, InversionError, KSError, ParameterError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _floats(n: int | None = None):
    def parse(text: str) -> np.ndarray:
        try:
            vals = np.array([float(t) for t in text.split(",")])
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
        if n is not None and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} values, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise argparse.ArgumentTypeError("values must be finite")
        return vals
    return parse


def _order(text: str) -> int:
    try:
        N = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"order must be an integer, got {text!r}")
    if not 1 <= N <= 16:
        raise argparse.ArgumentTypeError(f"order must lie in 1..16, got {N}")
    return N


def _positive(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return x


def _mass(text: str) -> float:
    x = _positive(text)
    if x > 0.5:
        raise argparse.ArgumentTypeError("mass ratio must lie in (0, 0.5]")
    return x


def _shared(p: argparse.ArgumentParser, energy_default=hj.E_STAR) -> None:
    p.add_argument("--mu", type=_mass, default=hj.MU_STAR)
    p.add_argument("--energy", type=float, default=energy_default)
    p.add_argument("--order", type=_order, default=hj.DEFAULT_ORDER)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksencounter",
                                     description="KS-regularized close encounters in the CRTBP")
    parser.add_argument("--config", default=None, help="key=value file supplying defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("series", help="write the complete-integral series as JSON")
    _shared(p)
    p.add_argument("--nu", type=_floats(4), default=np.array([1.0, 0.0, 0.0, 0.0]))
    p.add_argument("--kappa", type=float, default=None,
                   help="export the particular solution at this level instead of W")
    p.add_argument("--method", choices=("graded", "picard"), default="graded")

    p = sub.add_parser("encounter", help="propagate one state through the sphere |q| = sigma")
    _shared(p, energy_default=None)
    p.set_defaults(order=12)
    p.add_argument("--sigma", type=_positive, default=1e-3)
    p.add_argument("--rmax", type=_positive, default=cn.R_MAX)
    p.add_argument("--state", type=_floats(6), default=None,
                   help="X,Y,Z,PX,PY,PZ; sampled on the sphere from --seed when absent")
    p.add_argument("--reverse", action="store_true", help="also map the exit back and report the gap")
    p.add_argument("--oracle", action="store_true", help="compare with direct integration")

    p = sub.add_parser("propagate", help="integrate a Hamiltonian flow")
    _shared(p, energy_default=None)
    p.add_argument("--hamiltonian", choices=dy.HAMILTONIANS, default="H")
    p.add_argument("--state", type=_floats(), required=True)
    p.add_argument("--span", type=_floats(2), default=np.array([0.0, 1.0]))
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--rmax", type=_positive, default=cn.R_MAX)
    p.add_argument("--nu-columns", action="store_true",
                   help="fill the nu columns of KS output by inverting the series")
    p.add_argument("--format", choices=("json", "csv"), default="csv")

    p = sub.add_parser("verify", help="run a seeded verification suite")
    p.add_argument("--suite", choices=vf.SUITES + ("all",), default="all")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("lc", help="planar Levi-Civita checks and series")
    _shared(p)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--alphas", type=int, default=32)
    p.add_argument("--sigma", type=_positive, default=1e-3)
    p.add_argument("--series-out", default=None)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    try:
        with open(known.config) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    defaults = {}
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            parser.error(f"config line is not key=value: {ln!r}")
        k, v = (t.strip() for t in ln.split("=", 1))
        defaults[k.replace("-", "_")] = v
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            # string defaults go through each option's type converter
            sp.set_defaults(**{k: v for k, v in defaults.items()
                               if any(a.dest == k for a in sp._actions)})


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def cmd_series(args) -> int:
    if args.kappa is None:
        ci = hj.complete_integral(args.mu, args.energy, args.nu, args.order, args.method)
        series, params = ci.w, ci.params
        rep = hj.residual_report(ci)
    else:
        params = ks.Params(mu=args.mu, E=args.energy, kappa=args.kappa, nu=tuple(args.nu))
        sol = hj.solve_wtilde(params, args.order, args.method)
        series = sol.wtilde
        rep = None
    _emit(hj.series_to_json(series, params, args.order), args.out)
    summary = {"order": args.order}
    if rep is not None:
        summary["residual_max_below_order"] = max(rep[d] for d in range(args.order))
        summary["residual_top_degree"] = rep[args.order]
    sys.stderr.write(jsonio.dumps(summary, None) + "\n")
    return EXIT_OK


def cmd_encounter(args) -> int:
    rng = np.random.default_rng(args.seed)
    E = hj.E_STAR if args.energy is None and args.state is None else args.energy
    x = vf.entry_state(rng, args.sigma, args.mu, E) if args.state is None else args.state
    try:
        res = cn.encounter_map(x, args.sigma, args.mu, E, args.order, args.rmax)
    except (DomainError, InversionError) as exc:
        _emit(jsonio.dumps({"entry": x, "status": "domain-exceeded", "error": str(exc)}), args.out)
        return EXIT_FAIL
    doc = res.to_dict()
    if args.reverse:
        level = ks.ham_planeto(x, args.mu) if E is None else E
        back = cn.encounter_map(res.exit, args.sigma, args.mu, level, args.order, args.rmax,
                                direction=-1)
        doc["reverse_gap"] = float(np.max(np.abs(np.asarray(back.exit) - x)))
    if args.oracle:
        ref = vf.reference_exit(x, args.sigma, args.mu)
        doc["oracle_exit"] = ref
        doc["oracle_deviation"] = float(np.max(np.abs(np.asarray(res.exit) - ref))
                                        / np.max(np.abs(ref)))
    _emit(jsonio.dumps(doc), args.out)
    return EXIT_OK


def cmd_propagate(args) -> int:
    x = args.state
    h = args.hamiltonian
    E = args.energy
    if E is None:
        if h == "H":
            E = ks.ham_planeto(x, args.mu)
        elif h == "K_I" and len(x) == 8:
            E = ks.ham_planeto(np.asarray(ks.phase_project(x)), args.mu)
        elif h == "K_2" and len(x) == 4:
            E = ks.ham_planeto(np.r_[ks.lc_project(x[:2], x[2:])[:2], 0.0,
                                     ks.lc_project(x[:2], x[2:])[2:], 0.0], args.mu)
    grid = np.linspace(args.span[0], args.span[1], max(args.samples, 2))
    tr = dy.integrate(h, x, tuple(args.span), args.mu, E, t_eval=grid)
    nus = None
    if args.nu_columns and h == "K_I":
        nus = np.full((len(tr.times), 4), np.nan)
        prev = None
        for k, y in enumerate(tr.states):
            try:
                prev, _, _ = cn.nu_hat(y[:4], y[4:], args.mu, E, args.order, args.rmax, nu0=prev)
                nus[k] = prev
            except (DomainError, InversionError):
                prev = None
    if args.format == "csv":
        _emit(dy.trajectory_csv(tr, nus), args.out)
    else:
        doc = {"hamiltonian": h, "times": tr.times, "states": tr.states.tolist(),
               "energy": tr.energy}
        if tr.bilinear is not None:
            doc["bilinear"] = tr.bilinear
        if tr.physical is not None:
            doc["t"] = tr.physical
        _emit(jsonio.dumps(doc), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = vf.run(args.suite, args.seed, args.samples)
    _emit(jsonio.dumps(report), args.out)
    if not report["pass"]:
        sys.stderr.write("failed: " + ", ".join(report["failed"]) + "\n")
        return EXIT_FAIL
    return EXIT_OK


def cmd_lc(args) -> int:
    mu, E = args.mu, args.energy
    alphas = np.linspace(0.0, 2 * np.pi, args.alphas, endpoint=False)
    j2 = np.array([hj.j2(a, args.kappa, E, mu) for a in alphas])
    lin = {}
    for a in (0.0, np.pi / 4, np.pi / 2):
        sol = hj.solve_planar(a, args.kappa, E, mu, args.order)
        got = np.array([sol.w2.coefficient((1, 0)), sol.w2.coefficient((0, 1))])
        want = np.sqrt(8 * (mu + args.kappa)) * np.array([np.cos(a), np.sin(a)])
        lin[format(a, ".17g")] = float(np.max(np.abs(got - want)))
    rng = np.random.default_rng(args.seed)
    x = vf.entry_state(rng, args.sigma, mu, E, planar=True)
    gap = vf.planar_spatial_gap(x, args.sigma, mu, E, 12)
    doc = {"mu": mu, "E": E, "kappa": args.kappa,
           "j2_abs_max_dev": float(np.max(np.abs(np.abs(j2) - 4.0))),
           "j2_values": j2, "linear_coefficient_dev": lin,
           "planar_vs_spatial_exit_gap": gap}
    ok = doc["j2_abs_max_dev"] <= 1e-10 and max(lin.values()) <= 1e-12 and gap <= 1e-7
    doc["pass"] = bool(ok)
    if args.series_out:
        sol = hj.solve_planar(0.0, args.kappa, E, mu, args.order)
        params = ks.Params(mu=mu, E=E, kappa=args.kappa)
        with open(args.series_out, "w") as fh:
            fh.write(hj.series_to_json(sol.w2, params, args.order) + "\n")
    _emit(jsonio.dumps(doc), args.out)
    return EXIT_OK if ok else EXIT_FAIL


_COMMANDS = {"series": cmd_series, "encounter": cmd_encounter, "propagate": cmd_propagate,
             "verify": cmd_verify, "lc": cmd_lc}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ParameterError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except KSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
