"""Command-line front end: ``confhyp {report,verify,probe,improve,generate,enumerate}``.

Exit status: 0 all checks pass, 1 a check failed, 2 usage or parse error,
3 computation error (for example order underflow).  With several scenario
files the worst status wins.
"""

from __future__ import annotations

import argparse
import datetime
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .conformal import (DEFAULT_TRIALS, INVARIANTS, check_h_j_laws, check_weight_law,
                        enumerate_form_candidates, get_invariant, naive_h_check, reduce_to_bounds,
                        rescale, transverse_order_probe)
from .curvature import compute_curvature_pack
from .hypersurface import (adapt_coordinates, asymptotic_residual, extrinsic_pack,
                           identity_residuals, improve_adapted, pull_back_scalar,
                           push_forward_scalar, t_valuation)
from .jets import JetError
from .scenario import (ResidualReport, ScenarioError, generate_random, parse_scenario, serialize,
                       write_report)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="confhyp", description="Conformal hypersurface invariants from metric jets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenarios=True):
        if scenarios:
            sp.add_argument("scenarios", nargs="+", type=Path, help="scenario file(s)")
            sp.add_argument("--mode", choices=("float", "exact"),
                            help="coefficient mode (default: the scenario's own, else float)")
        sp.add_argument("--seed", type=_nonneg, default=0)
        sp.add_argument("--out", type=Path, help="write the output here instead of stdout")
        sp.add_argument("--no-timestamp", action="store_true",
                        help="omit timestamp and timing so output is byte-reproducible")

    sp = sub.add_parser("report", help="extrinsic and curvature data at the base point")
    common(sp)
    sp = sub.add_parser("verify", help="identity, weight-law and reduction checks")
    common(sp)
    sp.add_argument("--trials", type=_positive, default=DEFAULT_TRIALS)
    sp = sub.add_parser("probe", help="transverse-order probe of one invariant")
    common(sp)
    sp.add_argument("--invariant", required=True, choices=sorted(INVARIANTS))
    sp.add_argument("--max-order", type=_nonneg)
    sp.add_argument("--trials", type=_positive, default=DEFAULT_TRIALS)
    sp = sub.add_parser("improve", help="asymptotically unit defining function")
    common(sp)
    sp = sub.add_parser("generate", help="emit a seeded random scenario file")
    common(sp, scenarios=False)
    sp.add_argument("--dimension", "-d", type=int, default=4)
    sp.add_argument("--order", "-K", type=int, default=5)
    sp.add_argument("--mode", choices=("float", "exact"), default="float")
    sp.add_argument("--amplitude", type=Fraction, default=Fraction(1, 4))
    sp.add_argument("--label")
    sp = sub.add_parser("enumerate", help="candidate leading terms of conformal fundamental forms")
    common(sp, scenarios=False)
    sp.add_argument("--m", type=int, nargs="+", required=True)
    sp.add_argument("--rank", type=int, default=2, help="rank of the structure constraint")
    sp.add_argument("--bound", type=_nonneg, default=12, help="search bound for a1..a4")
    sp.add_argument("--show-extras", action="store_true")
    return p


def _tuple(t) -> str:
    return "(" + ",".join(map(str, t)) + ")"


# per-scenario commands --------------------------------------------------------

def _index(name: str, idx) -> str:
    return f"{name}[{','.join(str(i + 1) for i in idx)}]" if idx else name


def _put_tensor(section: dict, name: str, values) -> None:
    arr = np.asarray(values, dtype=object)
    if arr.ndim == 0:
        section[name] = arr[()]
        return
    for idx in np.ndindex(arr.shape):
        section[_index(name, idx)] = arr[idx]


def _report_values(spec, report: ResidualReport, args) -> bool:
    ctx = spec.context()
    m, s = spec.metric_jet(ctx), spec.defining_jet(ctx)
    chart = adapt_coordinates(m, s)
    pack = extrinsic_pack(chart, s, m)
    vals = report.section("values")
    notes = report.section("notes")
    _put_tensor(vals, "n_hat_source", pack.conormal_source)
    _put_tensor(vals, "g_bar", pack.g_bar.components.base_value)
    _put_tensor(vals, "II", pack.II.base_value)
    _put_tensor(vals, "H", pack.H.base_value)
    _put_tensor(vals, "II_tf", pack.II_tf.base_value)
    for name in ("III", "IV"):
        form = getattr(pack, name)
        if form is not None:
            _put_tensor(vals, name, form.base_value)
        elif name == "IV" and spec.dimension == 5:
            notes[name] = "IV formula excluded for d=5"
        else:
            notes[name] = "needs a higher jet order"
    curv = compute_curvature_pack(m, cotton=False)
    _put_tensor(vals, "Sc", curv.scalar.base_value)
    _put_tensor(vals, "J", curv.J.base_value)
    _put_tensor(vals, "Ric", curv.ricci.jet.base_value)
    _put_tensor(vals, "P", curv.schouten.jet.base_value)
    notes["coordinates"] = "tangential indices refer to adapted coordinates; n_hat_source to the input ones"
    return True


def _verify(spec, report: ResidualReport, args) -> bool:
    ctx = spec.context()
    m, s = spec.metric_jet(ctx), spec.defining_jet(ctx)
    scale = spec.conformal_scale(ctx)
    d, K = spec.dimension, spec.order
    failures = []
    res = report.section("identities")
    for r in identity_residuals(adapt_coordinates(m, s)):
        key = ("informational." if r.informational else "") + r.name
        res[key] = r.residual
        if not r.passed:
            failures.append(r.name)
    skipped = report.section("skipped")
    if scale is None:
        skipped["weight_laws"] = "no conformal factor in scenario"
    else:
        laws = report.section("weight_laws")
        for name in ("II_tf", "III", "IV"):
            inv = get_invariant(name)
            if name == "IV" and d == 5:
                skipped[name] = "IV formula excluded for d=5"
                continue
            if K < inv.consumption + 1:
                skipped[name] = f"needs order >= {inv.consumption + 1}"
                continue
            w = check_weight_law(name, m, s, scale)
            laws[name] = w.residual
            if not w.passed:
                failures.append(f"weight_law_{name}")
        if K < 3:
            skipped["H_J_laws"] = "needs order >= 3"
        else:
            for w in check_h_j_laws(m, s, scale):
                laws[w.name] = w.residual
                if not w.passed:
                    failures.append(w.name)
            laws["informational.H_naive"] = naive_h_check(m, s, scale).residual
    probes = report.section("reduce_to")
    chart = None
    for mm in (0, 1):
        if K < mm + 3:
            skipped[f"reduce_to_m{mm}"] = f"needs order >= {mm + 3}"
            continue
        chart = chart or adapt_coordinates(m, s)
        for name, pr in reduce_to_bounds(chart, mm, trials=args.trials, seed=args.seed).items():
            probes[f"m{mm}.{name}"] = pr.detected_order
            if pr.detected_order > mm + 1:
                failures.append(f"reduce_to_m{mm}.{name}")
    status = report.section("status")
    status["failures"] = ",".join(sorted(failures)) if failures else "none"
    return not failures


def _probe(spec, report: ResidualReport, args) -> bool:
    ctx = spec.context()
    m, s = spec.metric_jet(ctx), spec.defining_jet(ctx)
    inv = get_invariant(args.invariant)
    if args.invariant == "IV" and spec.dimension == 5:
        raise JetError("IV formula excluded for d=5")
    chart = adapt_coordinates(m, s)
    pr = transverse_order_probe(args.invariant, chart, args.max_order, args.trials, args.seed)
    sec = report.section("probe")
    sec["invariant"] = pr.invariant
    sec["detected_order"] = pr.detected_order
    sec["trials"] = pr.trials
    sec["work_order"] = pr.work_order
    for k, (v, nz) in enumerate(zip(pr.sensitivities, pr.nonzero)):
        sec[f"sensitivity[{k}]"] = float(v)
        sec[f"nonzero[{k}]"] = nz
    expected = inv.transverse_order
    if expected is None:
        return True
    want = min(expected, pr.max_order)
    sec["expected_order"] = want
    return pr.detected_order == want


def _improve(spec, report: ResidualReport, args) -> bool:
    ctx = spec.context()
    m, s = spec.metric_jet(ctx), spec.defining_jet(ctx)
    d = spec.dimension
    chart = adapt_coordinates(m, s)
    result = improve_adapted(chart)
    sec = report.section("improve")
    for k, v in enumerate(result.orders):
        sec[f"residual_order_after_sweep[{k}]"] = v
    achieved = result.orders[-1]
    sec["achieved_order"] = achieved
    if result.obstruction is not None:
        sec["t^d_coefficient"] = result.obstruction
    ok = achieved >= d
    scale = spec.conformal_scale(ctx)
    if scale is not None:
        # the improved s, multiplied by Omega, for the rescaled metric
        improved = push_forward_scalar(chart, result.S)
        m2 = rescale(m, scale)
        chart2 = adapt_coordinates(m2, s)
        rho2 = asymptotic_residual(chart2, pull_back_scalar(chart2, scale.omega * improved))
        sec["rescaled_residual_order"] = t_valuation(chart2, rho2)
        sec["rescaled_achieved_order"] = improve_adapted(chart2).orders[-1]
        ok = ok and sec["rescaled_residual_order"] >= d and sec["rescaled_achieved_order"] == achieved
    return ok


COMMANDS = {"report": _report_values, "verify": _verify, "probe": _probe, "improve": _improve}


def _run_scenario(path: Path, args) -> tuple[int, str]:
    start = time.perf_counter()
    try:
        spec = parse_scenario(path.read_text())
    except OSError as exc:
        return EXIT_USAGE, f"error: {path}: {exc.strerror or exc}\n"
    except ScenarioError as exc:
        return EXIT_USAGE, f"error: {path}: {exc}\n"
    if args.mode:
        spec = spec.with_mode(args.mode)
    report = ResidualReport(spec.label, spec.seed, spec.mode)
    report.section("scenario")["path"] = str(path)
    report.section("scenario")["dimension"] = spec.dimension
    report.section("scenario")["order"] = spec.order
    try:
        ok = COMMANDS[args.command](spec, report, args)
    except (JetError, ArithmeticError) as exc:
        return EXIT_COMPUTE, f"error: {path}: {exc}\n"
    report.section("status")["passed"] = ok
    if not args.no_timestamp:
        report.timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        report.elapsed = round(time.perf_counter() - start, 3)
    return (EXIT_OK if ok else EXIT_FAIL), write_report(report)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        try:
            spec = generate_random(args.dimension, args.order, args.seed, args.mode,
                                   args.amplitude, args.label)
        except ScenarioError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_USAGE
        _emit(serialize(spec), args.out)
        return EXIT_OK
    if args.command == "enumerate":
        lines = []
        try:
            for m in args.m:
                e = enumerate_form_candidates(m, rank=args.rank, bound=args.bound)
                for sol in sorted(e.solutions):
                    lines.append(f"m={m} a={_tuple(sol.exponents)} {sol.shape}")
                if args.show_extras:
                    lines += [f"# m={m} a={_tuple(x.exponents)} violates a4 <= 2" for x in sorted(e.extras)]
                elif e.extras:
                    lines.append(f"# m={m}: {len(e.extras)} further solutions violate a4 <= 2 "
                                 f"(searched a1..a4 <= {args.bound}; --show-extras lists them)")
        except JetError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_USAGE
        _emit("\n".join(lines) + "\n", args.out)
        return EXIT_OK

    codes, chunks = [], []
    for path in sorted(args.scenarios, key=str):
        code, text = _run_scenario(path, args)
        codes.append(code)
        if code in (EXIT_USAGE, EXIT_COMPUTE):
            sys.stderr.write(text)
        else:
            chunks.append(text)
            if code == EXIT_FAIL:
                sys.stderr.write(f"FAIL {path}\n")
    _emit("\n".join(chunks), args.out)
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
