"""Command line entry point: ``brmdd <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 some cells failed, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleParams
from .fitting import FitError, fit_ergodic_ipr_law, fit_exponential_rate, fit_xi_e_law, nonergodic_restriction
from .harness import (
    GuardError,
    HarnessIOError,
    SweepSpec,
    choose_K,
    read_results,
    run_cell,
    run_sweep,
)
from .observables import spacing_histogram
from .theory import (
    DEFAULT_CONSTANTS,
    classify_regime,
    ergodicity_border_beta,
    localization_border_beta,
    reference_spacing_pdf,
    xi_e_law,
    xi_e_unity_q,
)

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_cell_args(p):
    g = p.add_argument_group("ensemble (dimensionless or physical)")
    g.add_argument("--q", type=float, help="coupling parameter q = v / (delta_c sqrt(beta))")
    g.add_argument("--v-over-dc", type=float, help="v / delta_c = q sqrt(beta)")
    g.add_argument("--beta", type=float, help="relative band width b/K")
    g.add_argument("--v", type=float, help="rms coupling (energy units)")
    g.add_argument("--b", type=int, help="band half width")
    g.add_argument("--K", type=int, help="half size, N = 2K+1")
    g.add_argument("--N", type=int, help="matrix size (odd)")
    g.add_argument("--delta", type=float, default=1.0, help="mean level spacing (default 1)")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--bins", type=int, default=41)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", "-o", help="CSV output path (default stdout)")


def params_from_args(a) -> EnsembleParams:
    K = a.K
    if a.N is not None:
        if a.N % 2 != 1 or a.N < 3:
            raise UsageError("--N must be odd and >= 3")
        if K is not None and K != (a.N - 1) // 2:
            raise UsageError("--N and --K disagree")
        K = (a.N - 1) // 2
    if a.q is not None or a.v_over_dc is not None:
        if a.q is not None and a.v_over_dc is not None:
            raise UsageError("give --q or --v-over-dc, not both")
        if a.beta is None:
            raise UsageError("--beta is required with --q / --v-over-dc")
        if a.v is not None or a.b is not None:
            raise UsageError("mixing dimensionless and physical parameters")
        q = a.q if a.q is not None else a.v_over_dc / math.sqrt(a.beta)
        if K is None:
            K = choose_K(q, a.beta)
        return EnsembleParams.from_dimensionless(
            q, a.beta, K, a.delta, master_seed=a.seed, n_realizations=a.realizations
        )
    if a.v is None or a.b is None or K is None:
        raise UsageError("give --q/--v-over-dc with --beta, or --v, --b and --K")
    return EnsembleParams(K=K, b=a.b, v=a.v, delta=a.delta, master_seed=a.seed,
                          n_realizations=a.realizations)


def _open_out(path):
    if path is None:
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise HarnessIOError(str(exc)) from exc


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return repr(float(x))


def cmd_lsd(a) -> int:
    p = params_from_args(a)
    out = run_cell(p, workers=a.workers, n_bins=a.bins)
    rec = out.record
    if out.lsd is None:
        print(f"no LSD estimate: {rec['fit_status']}", file=sys.stderr)
        return EXIT_PARTIAL
    fh, close = _open_out(a.output)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["E", "rho_w", "rho_bw_fit"])
        for E, rho in zip(out.lsd.centers, out.lsd.rho_w):
            w.writerow([_fmt(E), _fmt(rho), _fmt(out.fit.model(E)) if out.fit else ""])
    finally:
        if close:
            fh.close()
    print(
        f"# N={p.N} b={p.b} beta={p.beta:.6g} q={p.q:.6g} v/delta_c={p.q * math.sqrt(p.beta):.6g}"
        f" realizations={p.n_realizations} gamma={_fmt(rec['gamma'])} xi_e={_fmt(rec['xi_e'])}"
        f" xi_ipr={rec['xi_ipr']:.6g} fit={rec['fit_status']}",
        file=sys.stderr,
    )
    return EXIT_OK if rec["fit_status"] == "ok" else EXIT_PARTIAL


def cmd_spacing(a) -> int:
    p = params_from_args(a)
    out = run_cell(p, workers=a.workers, n_bins=a.bins)
    centers, density = spacing_histogram(out.spacings, a.spacing_bins, a.s_max)
    fh, close = _open_out(a.output)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["S", "P", "poisson", "wigner_dyson"])
        for s, d in zip(centers, density):
            w.writerow([_fmt(s), _fmt(d), _fmt(reference_spacing_pdf(s, "poisson")),
                        _fmt(reference_spacing_pdf(s, "wigner_dyson"))])
    finally:
        if close:
            fh.close()
    rec = out.record
    print(
        f"# q={p.q:.6g} beta={p.beta:.6g} N={p.N} spacings={rec['n_spacings']}"
        f" ks_poisson={rec['ks_poisson']:.4f} ks_wigner_dyson={rec['ks_wigner_dyson']:.4f}"
        f" xi_ipr={rec['xi_ipr']:.6g} regime={rec['regime']}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_sweep(a) -> int:
    try:
        spec = SweepSpec.load(a.spec, output_dir=a.output_dir)
    except OSError as exc:
        raise HarnessIOError(f"cannot read {a.spec}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid sweep spec: {exc}") from exc
    report = run_sweep(spec, workers=a.workers)
    print(
        f"{len(report.records)} cells ({len(report.computed)} computed, "
        f"{len(report.skipped)} resumed, {report.n_failed} failed) -> {spec.output_dir}"
    )
    return EXIT_PARTIAL if report.n_failed else EXIT_OK


def _load_rows(paths):
    rows = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            path = path / "results.csv"
        try:
            rows.extend(read_results(path))
        except OSError as exc:
            raise HarnessIOError(f"cannot read {path}: {exc}") from exc
    return [r for r in rows if r["status"] == "ok"]


def _law_fit(law, rows, ratio=2.7, beta=None):
    if law == "xi_e":
        pts = [(r["q"], r["xi_e"]) for r in rows if r["xi_e"] is not None]
        return fit_xi_e_law(pts)
    if law == "ergodic":
        target = 1.0 if beta is None else beta
        pts = [(r["q"], r["xi_ipr"]) for r in rows if abs(r["beta"] - target) < 1e-9]
        return fit_ergodic_ipr_law(pts)
    if law == "exponential":
        pts = [(r["q"] * math.sqrt(r["beta"]), r["xi_ipr"], r["xi_e"]) for r in rows
               if r["xi_e"] is not None and (beta is None or abs(r["beta"] - beta) < 1e-9)]
        return fit_exponential_rate(pts, nonergodic_restriction(ratio))
    raise UsageError(f"unknown law {law}")


def _print_fit(fit):
    parts = [f"{k} = {v:.6g} +- {fit.stderr[k]:.2g}" for k, v in fit.params.items()]
    print(f"{fit.law}: " + ", ".join(parts) + f" (n={fit.n_points}, restriction: {fit.restriction})")


def cmd_fit(a) -> int:
    rows = _load_rows(a.results)
    try:
        fit = _law_fit(a.law, rows, a.ratio, a.beta)
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    _print_fit(fit)
    return EXIT_OK


def cmd_borders(a) -> int:
    qs, betas = a.q or [], a.beta or []
    if len(qs) != len(betas):
        raise UsageError("--q and --beta must be given the same number of times")
    if qs:
        for q, beta in zip(qs, betas):
            try:
                label = classify_regime(q, beta)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            print(label.label if len(qs) == 1 else f"{q:g} {beta:g} {label.label}")
        return EXIT_OK
    fh, close = _open_out(a.output)
    try:
        print(f"# xi_e = 1 at q = {xi_e_unity_q():.6g}", file=fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "beta_localization", "beta_ergodicity"])
        for q in np.geomspace(a.q_min, a.q_max, a.points):
            w.writerow([_fmt(q), _fmt(localization_border_beta(q)), _fmt(ergodicity_border_beta(q))])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_report(a) -> int:
    rows = _load_rows([a.results])
    c = DEFAULT_CONSTANTS
    print(f"{'q':>9} {'beta':>8} {'N':>6} {'xi_e':>9} {'law':>9} {'xi_ipr':>9} "
          f"{'ks_P':>6} {'ks_WD':>6}  regime")
    for r in rows:
        xe = r["xi_e"]
        print(f"{r['q']:9.4g} {r['beta']:8.4g} {r['N']:6d} "
              f"{(f'{xe:9.4g}' if xe is not None else '        -')} {float(xi_e_law(r['q'])):9.4g} "
              f"{r['xi_ipr']:9.4g} {r['ks_poisson']:6.3f} {r['ks_wigner_dyson']:6.3f}  {r['regime']}")
    reference = {"xi_e": {"L1": c.L1, "L2": c.L2}, "ergodic": {"D1": c.D1, "D2": c.D2},
                 "exponential": {"C": c.C}}
    for law, ref in reference.items():
        try:
            fit = _law_fit(law, rows)
        except FitError as exc:
            print(f"{law}: not enough data ({exc})")
            continue
        _print_fit(fit)
        print("    reference: " + ", ".join(f"{k} = {v:g}" for k, v in ref.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="brmdd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("lsd", help="local spectral density of one cell with its Lorentzian fit")
    _add_cell_args(p)
    p.set_defaults(func=cmd_lsd)

    p = sub.add_parser("spacing", help="level spacing histogram of one cell")
    _add_cell_args(p)
    p.add_argument("--spacing-bins", type=int, default=40)
    p.add_argument("--s-max", type=float, default=4.0)
    p.set_defaults(func=cmd_spacing)

    p = sub.add_parser("sweep", help="run a JSON sweep spec")
    p.add_argument("spec")
    p.add_argument("--output-dir", help="override output_dir from the spec")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit a scaling law to results tables")
    p.add_argument("results", nargs="+", help="results.csv files or sweep directories")
    p.add_argument("--law", choices=("xi_e", "ergodic", "exponential"), required=True)
    p.add_argument("--ratio", type=float, default=2.7, help="keep xi_ipr < xi_e/ratio (exponential law)")
    p.add_argument("--beta", type=float, help="restrict to one beta")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("borders", help="regime borders, or classify points")
    p.add_argument("--q", type=float, action="append")
    p.add_argument("--beta", type=float, action="append")
    p.add_argument("--q-min", type=float, default=0.05)
    p.add_argument("--q-max", type=float, default=100.0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_borders)

    p = sub.add_parser("report", help="summarize a results directory against reference constants")
    p.add_argument("results")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    if a.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (UsageError, GuardError) as exc:
        print(f"brmdd {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"brmdd {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HarnessIOError, OSError) as exc:
        print(f"brmdd {a.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
