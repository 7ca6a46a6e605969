"""Command-line entry point: verification suites, spectra and pricing.

Subcommands: verify-algebra, spectrum, price, identify.  Every run prints a
human-readable summary and can emit a JSON report whose bytes depend only on
the flags and the seed (wall time is measured and printed, but serialized as
null to keep reports byte-reproducible).  Exit codes: 0 all checks passed,
1 at least one check failed, 2 usage error.
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import finance, hamiltonians, montecarlo, operators, susy
from .grid import Grid1D
from .operators import FunctionSpec
from .tolerances import DEFAULT as TOL

SCHEMA_VERSION = 1


@dataclass
class RunReport:
    command: str
    parameters: dict
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    wall_time: float | None = None

    def add(self, name: str, measured: float, tolerance: float | None, passed: bool):
        self.checks.append(
            {
                "name": name,
                "measured": None if measured is None else float(measured),
                "tolerance": None if tolerance is None else float(tolerance),
                "pass": bool(passed),
            }
        )

    @property
    def all_passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json_bytes(self) -> bytes:
        # wall_time is serialized as null: reports must be byte-identical
        # across repeated invocations with the same flags and seed
        doc = {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "parameters": self.parameters,
            "checks": self.checks,
            "artifacts": self.artifacts,
            "wall_time": None,
        }
        return (json.dumps(doc, indent=2) + "\n").encode()


def _use_color() -> bool:
    return sys.stdout.isatty() and "NO_COLOR" not in os.environ


def _status(passed: bool) -> str:
    word = "PASS" if passed else "FAIL"
    if _use_color():
        return f"\x1b[32m{word}\x1b[0m" if passed else f"\x1b[31m{word}\x1b[0m"
    return word


def _print_report(report: RunReport):
    for c in report.checks:
        measured = "-" if c["measured"] is None else f"{c['measured']:.6g}"
        tol = "report-only" if c["tolerance"] is None else f"{c['tolerance']:.6g}"
        passed = c["pass"] if c["tolerance"] is not None else True
        print(f"  {_status(passed)}  {c['name']}: measured={measured} tolerance={tol}")
    for a in report.artifacts:
        print(f"  wrote {a}")
    if report.wall_time is not None:
        print(f"  wall time: {report.wall_time:.3f} s")


def _finish(report: RunReport, json_path: str | None, started: float) -> int:
    report.wall_time = time.perf_counter() - started
    if json_path:
        with open(json_path, "wb") as fh:
            fh.write(report.to_json_bytes())
        report.artifacts = list(report.artifacts)
    _print_report(report)
    return 0 if report.all_passed else 1


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _grid_from_args(args) -> Grid1D:
    return Grid1D(args.xmin, args.xmax, args.n)


# -- verify-algebra ----------------------------------------------------------


def cmd_verify_algebra(args) -> int:
    started = time.perf_counter()
    g = _grid_from_args(args)
    f = FunctionSpec.parse(args.f)
    alpha, beta = args.alpha, args.beta
    report = RunReport(
        "verify-algebra",
        {
            "f": args.f,
            "alpha": alpha,
            "beta": beta,
            "xmin": args.xmin,
            "xmax": args.xmax,
            "n": args.n,
        },
    )

    x_op = operators.position_operator(g)
    pf = operators.deformed_momentum(g, f)
    rounding = TOL.rounding(g.n, max(x_op.max_abs(), pf.max_abs()) ** 2)

    report.add("commutator_x_x_zero", operators.commutator(x_op, x_op).max_abs(), 0.0, True)
    report.add("commutator_pf_pf_zero", operators.commutator(pf, pf).max_abs(), 0.0, True)

    defect = operators.canonical_commutator_defect(g, f)
    tol = operators.canonical_tolerance(g, f)
    report.add("canonical_commutator", defect, tol, defect <= tol)

    g_fine = Grid1D(g.x_min, g.x_max, 2 * g.n - 1)
    ratio = defect / operators.canonical_commutator_defect(g_fine, f)
    report.add("canonical_refinement_ratio_dev", abs(ratio - 4.0), 0.5, abs(ratio - 4.0) <= 0.5)

    if f.max_abs(g) <= operators.MAX_SAFE_EXPONENT:
        sim = operators.deformed_momentum_by_similarity(g, f)
        agreement = operators.action_difference(pf, sim)
        tol_sim = TOL.discretization(g, f.derivative_scale(g) ** 2)
        report.add("similarity_construction_agreement", agreement, tol_sim, agreement <= tol_sim)

    pairs = hamiltonians.build_all(g, f, alpha, beta)
    f_scale = f.derivative_scale(g)
    tol_pair = TOL.discretization(g, max(alpha, beta) ** 2 * f_scale**2)
    for label, pair in pairs.items():
        agreement = pair.agreement()
        report.add(f"{label.lower()}_agreement", agreement, tol_pair, agreement <= tol_pair)
    for label in ("H1", "H2"):
        d = operators.hermiticity_defect(pairs[label].closed_form)
        tol_h = TOL.rounding(g.n, pairs[label].closed_form.max_abs())
        report.add(f"{label.lower()}_hermitian_defect", d, tol_h, d <= tol_h)
    floor = hamiltonians.nonhermitian_defect_floor(g, f, beta)
    for label in ("H3", "H4"):
        d = operators.hermiticity_defect(pairs[label].closed_form)
        if floor > 0:
            report.add(f"{label.lower()}_nonhermitian_defect_floor", d, floor, d >= floor)
        else:
            tol_h = TOL.rounding(g.n, pairs[label].closed_form.max_abs())
            report.add(f"{label.lower()}_hermitian_for_constant_f", d, tol_h, d <= tol_h)

    neg = susy.duality_transform(f)
    swapped = hamiltonians.build_all(g, neg, alpha, beta)
    dual = max(
        (swapped["H1"].closed_form - pairs["H2"].closed_form).max_abs(),
        (swapped["H2"].closed_form - pairs["H1"].closed_form).max_abs(),
        (swapped["H3"].closed_form - pairs["H4"].closed_form).max_abs(),
        (swapped["H4"].closed_form - pairs["H3"].closed_form).max_abs(),
    )
    report.add("duality_closed_form_residual", dual, 0.0, dual == 0.0)

    q = susy.supercharge_2x2(g, f, alpha)
    report.add("q2x2_nilpotent", 0.0 if (q @ q).structurally_zero else (q @ q).max_abs(), 0.0,
               (q @ q).structurally_zero)
    h2x2 = susy.superhamiltonian_2x2(q)
    report.add("h2x2_block_diagonal", 0.0, 0.0, h2x2.structurally_block_diagonal)
    comm = susy.block_commutator(q, h2x2).max_abs()
    tol_c = TOL.rounding(g.n, q.max_abs() * h2x2.max_abs())
    report.add("commutator_q_h_zero", comm, tol_c, comm <= tol_c)
    anti = susy.block_anticommutator(q, h2x2).max_abs()
    report.add("anticommutator_q_h_magnitude", anti, None, True)

    refs = susy.hamiltonian_references(g, f, alpha, beta)
    q1, q2, q3, q4 = susy.supercharges_4x4(g, f, alpha, beta)
    for name, qi in (("q1", q1), ("q2", q2), ("q3", q3), ("q4", q4)):
        sq = qi @ qi
        report.add(f"{name}_nilpotent", 0.0 if sq.structurally_zero else sq.max_abs(), 0.0,
                   sq.structurally_zero)

    big = susy.superhamiltonian_4x4(q1, q2, refs)
    report.add("h_block_diagonal", 0.0, 0.0, big.op.structurally_block_diagonal)
    ident = big.identification
    expected = ("H2", "H1", "H3", "H3")
    content_ok = ident.matched and all(e in t for e, t in zip(expected, ident.ties))
    report.add(
        "h_block_content_" + "_".join(ident.labels).lower(),
        max(ident.residuals),
        ident.tolerance,
        content_ok,
    )
    tilde = susy.superhamiltonian_4x4(q3, q4, refs)
    report.add("htilde_block_diagonal", 0.0, 0.0, tilde.op.structurally_block_diagonal)
    ident_t = tilde.identification
    expected_t = ("H1", "H2", "H4", "H4")
    content_t_ok = ident_t.matched and all(e in t for e, t in zip(expected_t, ident_t.ties))
    report.add(
        "htilde_block_content_" + "_".join(ident_t.labels).lower(),
        max(ident_t.residuals),
        ident_t.tolerance,
        content_t_ok,
    )
    for name, qi, ham in (("q1", q1, big.op), ("q2", q2, big.op), ("q3", q3, tilde.op), ("q4", q4, tilde.op)):
        c = susy.block_commutator(qi, ham).max_abs()
        tol_c = TOL.rounding(g.n, qi.max_abs() * ham.max_abs())
        report.add(f"conserved_charge_{name}", c, tol_c, c <= tol_c)

    dual_labels = susy.identify_blocks(
        susy.superhamiltonian_4x4(*susy.supercharges_4x4(g, neg, alpha, beta)[:2]).op, refs
    )
    report.add(
        "duality_maps_h_to_htilde",
        max(dual_labels.residuals),
        dual_labels.tolerance,
        dual_labels.matched and all(e in t for e, t in zip(expected_t, dual_labels.ties)),
    )

    if f.max_abs(g) <= operators.MAX_SAFE_EXPONENT:
        gs, gs_tilde = susy.ground_states(g, f, alpha, beta)
        tol_gs = susy.ground_state_tolerance(g, f, alpha, beta)
        report.add("ground_state_residual_h", gs.residual, tol_gs, gs.residual <= tol_gs)
        report.add("ground_state_residual_htilde", gs_tilde.residual, tol_gs,
                   gs_tilde.residual <= tol_gs)
        # convergence comparison on a fixed physical window (see ground_states);
        # residuals at rounding noise (e.g. f = 0, where annihilation is exact)
        # carry no convergence information
        margin = 4.0 * g.h
        coarse_gs, _ = susy.ground_states(g, f, alpha, beta, margin=margin)
        fine_gs, _ = susy.ground_states(g_fine, f, alpha, beta, margin=margin)
        noise_floor = TOL.rounding(g.n, pf.max_abs() ** 2)
        if coarse_gs.residual > noise_floor and fine_gs.residual > 0:
            r = coarse_gs.residual / fine_gs.residual
            report.add("ground_state_refinement_ratio_dev", abs(r - 4.0), 0.5, abs(r - 4.0) <= 0.5)

    return _finish(report, args.json, started)


# -- spectrum ----------------------------------------------------------------


def cmd_spectrum(args) -> int:
    started = time.perf_counter()
    g = _grid_from_args(args)
    w = FunctionSpec.parse(args.w)
    report = RunReport(
        "spectrum",
        {
            "w": args.w,
            "k": args.k,
            "alpha": args.alpha,
            "pair_tol": args.pair_tol,
            "xmin": args.xmin,
            "xmax": args.xmax,
            "n": args.n,
        },
    )
    h1, h2 = hamiltonians.build_from_superpotential(g, w, args.alpha)
    pairing = susy.partner_spectra(h1.closed_form, h2.closed_form, args.k, args.pair_tol)
    report.add("partner_pairing_gap", pairing.max_pair_gap, pairing.pair_tol, pairing.all_paired)
    report.add("unpaired_zero_modes", sum(pairing.zero_modes), None, True)

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write("index,lambda_h1,lambda_h2,paired\n")
            partners = {round(b, 12) for _, b in pairing.pairs}
            for i in range(args.k):
                la = pairing.eigenvalues_a[i]
                lb = pairing.eigenvalues_b[i]
                paired = int(any(abs(la - a) <= pairing.pair_tol for a, _ in pairing.pairs))
                fh.write(f"{i},{_fmt(la)},{_fmt(lb)},{paired}\n")
        report.artifacts.append(args.csv)

    print(f"  lambda(H1): {np.array2string(pairing.eigenvalues_a, precision=6)}")
    print(f"  lambda(H2): {np.array2string(pairing.eigenvalues_b, precision=6)}")
    print(f"  zero modes: H1={pairing.zero_modes[0]} H2={pairing.zero_modes[1]}")
    return _finish(report, args.json, started)


# -- price -------------------------------------------------------------------


def cmd_price(args) -> int:
    started = time.perf_counter()
    kind = {"call": "european_call", "put": "european_put", "do-call": "down_and_out_call"}[args.payoff]
    contract = finance.OptionContract(
        kind, args.strike, args.maturity,
        barrier=args.barrier if kind == "down_and_out_call" else None,
    )
    mp = finance.MarketParams(args.sigma, args.rate)
    if args.xmin is None or args.xmax is None:
        g = finance.default_pricing_grid(contract, mp, args.spot, args.n)
    else:
        g = Grid1D(args.xmin, args.xmax, args.n)
    steps = args.steps if args.steps else g.n
    report = RunReport(
        "price",
        {
            "payoff": args.payoff,
            "strike": args.strike,
            "barrier": args.barrier if kind == "down_and_out_call" else None,
            "maturity": args.maturity,
            "sigma": args.sigma,
            "rate": args.rate,
            "spot": args.spot,
            "method": args.method,
            "paths": args.paths,
            "seed": args.seed,
            "monitoring": args.monitoring,
            "xmin": g.x_min,
            "xmax": g.x_max,
            "n": g.n,
            "steps": steps,
        },
    )

    want = ("pde", "mc", "closed") if args.method == "all" else (args.method,)
    prices: dict[str, float] = {}
    mc_se = None

    if "closed" in want:
        if kind == "down_and_out_call":
            if args.method == "closed":
                print("error: no closed form for barrier contracts", file=sys.stderr)
                return 2
        else:
            fk = "call" if kind == "european_call" else "put"
            prices["closed"] = finance.closed_form_european(
                args.spot, args.strike, args.rate, args.sigma, args.maturity, fk
            )
    if "pde" in want:
        h = finance.bs_hamiltonian(g, mp)
        curve = finance.price_pde(h, contract, mp, g, steps)
        prices["pde"] = curve.price_at(args.spot)
        if args.csv:
            curve.to_csv(args.csv)
            report.artifacts.append(args.csv)
    if "mc" in want:
        cfg = montecarlo.GbmConfig(
            drift=args.rate, sigma=args.sigma, s0=args.spot,
            T=args.maturity, paths=args.paths, seed=args.seed,
        )
        est = montecarlo.feynman_kac_estimate(cfg, contract, monitoring_per_year=args.monitoring)
        disc = montecarlo.discounted_value(est, args.rate, 0.0, args.maturity)
        prices["mc"] = disc.mean
        mc_se = disc.std_error

    for name, value in prices.items():
        label = f"price_{name}"
        se = f" (std error {mc_se:.6g})" if name == "mc" and mc_se is not None else ""
        print(f"  {label}: {value:.6f}{se}")
        report.parameters.setdefault("prices", {})[name] = value

    if args.method == "all":
        if "closed" in prices:
            gap = abs(prices["pde"] - prices["closed"])
            tol = max(1e-2, 2e-3 * abs(prices["closed"]))
            report.add("pde_vs_closed", gap, tol, gap <= tol)
            gap_mc = abs(prices["mc"] - prices["closed"])
            report.add("mc_vs_closed_3se", gap_mc, 3.0 * mc_se, gap_mc <= 3.0 * mc_se)
        else:
            gap = abs(prices["pde"] - prices["mc"])
            # PDE is continuously monitored, MC discretely: add the bias bound
            crumbs = montecarlo.fk_pde_crosscheck(
                mp, contract, g,
                montecarlo.GbmConfig(drift=args.rate, sigma=args.sigma, s0=args.spot,
                                     T=args.maturity, paths=args.paths, seed=args.seed),
                spots=[args.spot], steps=steps, monitoring_per_year=args.monitoring,
            )
            row = crumbs.rows[0]
            report.add("pde_vs_mc", abs(row.gap), row.tolerance, row.passed)
            vanilla = finance.closed_form_european(
                args.spot, args.strike, args.rate, args.sigma, args.maturity, "call"
            )
            report.add("barrier_below_vanilla", prices["pde"] - vanilla, 1e-6,
                       prices["pde"] <= vanilla + 1e-6)

    return _finish(report, args.json, started)


# -- identify ----------------------------------------------------------------


def cmd_identify(args) -> int:
    started = time.perf_counter()
    g = _grid_from_args(args)
    potential = FunctionSpec.parse(args.v) if args.v else None
    mp = finance.MarketParams(args.sigma, args.rate, potential)
    report = RunReport(
        "identify",
        {
            "sigma": args.sigma,
            "rate": args.rate,
            "v": args.v,
            "kind": args.kind,
            "xmin": args.xmin,
            "xmax": args.xmax,
            "n": args.n,
        },
    )
    try:
        mapping = finance.map_to_deformed(mp, g, kind=args.kind)
    except finance.DeformationMatchError as exc:
        print(f"  identification failed: {exc}", file=sys.stderr)
        report.add("identification", math.inf, 0.0, False)
        return _finish(report, args.json, started)

    print(f"  matched: {mapping.which_hamiltonian} with sign {mapping.sign:+d} "
          f"(all matches: {list(mapping.matches)})")
    print(f"  beta^2 = {mapping.beta**2:.17g}, residual = {mapping.residual:.3g}")
    report.parameters["which_hamiltonian"] = mapping.which_hamiltonian
    report.parameters["sign"] = mapping.sign
    report.parameters["matches"] = [list(m) for m in mapping.matches]
    report.add("identification_residual", mapping.residual, mapping.tolerance,
               mapping.residual <= mapping.tolerance)
    return _finish(report, args.json, started)


# -- parser ------------------------------------------------------------------


def _add_grid_flags(p, xmin, xmax, n):
    p.add_argument("--xmin", type=float, default=xmin)
    p.add_argument("--xmax", type=float, default=xmax)
    p.add_argument("--n", type=int, default=n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qflab",
        description="Deformed-momentum quantum mechanics and quantum-finance laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-algebra", help="run the operator and SUSY invariant suite")
    p.add_argument("--f", default="poly:0", help="deformation function (poly:c0,c1,... or table:path)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    _add_grid_flags(p, -5.0, 5.0, 501)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_verify_algebra)

    p = sub.add_parser("spectrum", help="partner spectra from a superpotential")
    p.add_argument("--w", default="poly:0,1", help="superpotential W")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--pair-tol", type=float, default=1e-3, dest="pair_tol")
    _add_grid_flags(p, -10.0, 10.0, 2001)
    p.add_argument("--csv", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("price", help="price an option by PDE, Monte Carlo and closed form")
    p.add_argument("--payoff", choices=("call", "put", "do-call"), default="call")
    p.add_argument("--strike", type=float, default=100.0)
    p.add_argument("--barrier", type=float, default=80.0)
    p.add_argument("--maturity", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--spot", type=float, default=100.0)
    p.add_argument("--method", choices=("pde", "mc", "closed", "all"), default="all")
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--monitoring", type=int, default=250, help="barrier monitoring dates per year")
    p.add_argument("--steps", type=int, default=0, help="time steps (0 = grid node count)")
    _add_grid_flags(p, None, None, 2001)
    p.add_argument("--csv", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("identify", help="match a finance Hamiltonian to H_I/H_II")
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--v", default=None, help="potential V(x) for the generalized/barrier forms")
    p.add_argument("--kind", choices=("auto", "bs", "bsg", "bsb"), default="auto")
    _add_grid_flags(p, -3.0, 3.0, 601)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_identify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
