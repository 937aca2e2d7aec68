"""Command-line entry point: ``dctattn <subcommand> ...``.

Exit codes: 0 success, 1 a check or validation failed, 2 usage error.
CSV output uses 17 significant digits so every float64 round-trips.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cost, transform, verify
from .train import MODES, DivergenceError, ToyDatasetSpec, build_model, gen_synthetic, grad_check, train

GRADCHECK_TOL = 1e-5
EQUIV_TOL = 1e-10


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


@dataclass
class CommandResult:
    exit_code: int
    paths: list = field(default_factory=list)
    summary: str = ""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    def default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        raise TypeError(f"cannot serialize {type(o)}")
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def _emit(text: str, out: str | None, result: CommandResult) -> None:
    if out:
        Path(out).write_text(text)
        result.paths.append(out)
    else:
        sys.stdout.write(text)


def cmd_dct_table(args) -> CommandResult:
    basis = transform.dct_matrix(args.size)
    header = ["matrix", "k"] + [f"n{i}" for i in range(args.size)]
    rows = [["D", k, *basis.d[k]] for k in range(args.size)]
    if args.tau is not None:
        trunc = transform.truncate(basis, args.tau)
        rows += [["Dbar", k, *trunc.dbar[k]] for k in range(trunc.kept)]
    res = CommandResult(0, summary=f"DCT-II table, C={args.size}")
    _emit(_csv(header, rows), args.out, res)
    return res


def cmd_coverage(args) -> CommandResult:
    rep = transform.spectral_coverage(args.size)
    header = ["k", "coverage"] + [f"basis{l}" for l in range(args.size)]
    rows = [[k, rep.coverage[k], *rep.spectra[:, k]] for k in range(args.size)]
    dev = float(np.max(np.abs(rep.coverage - 1.0)))
    res = CommandResult(0, summary=f"spectral coverage, C={args.size}, max |coverage-1| = {dev:.3g}")
    _emit(_csv(header, rows), args.out, res)
    return res


def cmd_klt(args) -> CommandResult:
    rep = transform.klt_compare(args.size, args.rho)
    curve = [
        {"kept": k, "tau": k / args.size, "fraction": transform.energy_compaction(args.size, args.rho, k / args.size)}
        for k in range(1, args.size + 1)
    ]
    payload = {
        "size": args.size,
        "rho": args.rho,
        "off_diagonal_ratio": rep.off_diagonal_ratio,
        "mean_abs_cosine": rep.mean_abs_cosine,
        "cosines": rep.cosines,
        "dct_variances": rep.variances,
        "cumulative_energy": rep.cumulative_energy,
        "klt_eigenvalues": rep.klt_eigenvalues,
        "energy_compaction": curve,
    }
    res = CommandResult(0, summary=f"KLT comparison C={args.size} rho={args.rho}: "
                                   f"off-diagonal ratio {rep.off_diagonal_ratio:.4g}, "
                                   f"mean |cos| {rep.mean_abs_cosine:.4g}")
    _emit(_json(payload), args.out, res)
    return res


def _equiv_checks(seed: int, grid: bool):
    points = verify.equivalence_grid(20 if grid else 4, seed)
    for c, tau, p, s in points:
        yield verify.CheckResult(f"naive-vs-simplified C={c} tau={tau} P={p} seed={s}",
                                 verify.naive_vs_simplified(c, tau, p, s), EQUIV_TOL)
    for s in range(seed, seed + (5 if grid else 1)):
        yield verify.CheckResult(f"tau1-conjugation seed={s}", verify.tau1_conjugation(s), EQUIV_TOL)


def cmd_equiv(args) -> CommandResult:
    lines = []
    failed = None
    for chk in _equiv_checks(args.seed, args.grid):
        lines.append(f"{'PASS' if chk.passed else 'FAIL'} {chk.name} max|diff|={chk.value:.3e}")
        if failed is None and not chk.passed:
            failed = chk
    res = CommandResult(0, summary=f"{len(lines)} equivalence checks passed")
    _emit("\n".join(lines) + "\n", args.out, res)
    if failed is not None:
        raise ValidationError(f"check failed: {failed.name} (max|diff|={failed.value:.3e} >= {failed.threshold})")
    return res


def cmd_gradcheck(args) -> CommandResult:
    data = gen_synthetic(ToyDatasetSpec(samples=8, seed=args.seed))
    model = build_model(args.mode, seed=args.seed, tau=args.tau)
    err = grad_check(model, data.x[0], data.y[0])
    res = CommandResult(0, summary=f"gradcheck {args.mode}: max relative error {err:.3e}")
    _emit(f"{_fmt(err)}\n", args.out, res)
    if not err < GRADCHECK_TOL:
        raise ValidationError(f"check failed: gradcheck {args.mode} (max relative error {err:.3e} >= {GRADCHECK_TOL})")
    return res


def cmd_cost(args) -> CommandResult:
    spec = cost.resolve_spec(args.model)
    totals = cost.model_totals(spec, args.tau, args.variant)
    for st in totals["stages"]:
        st["vanilla_params"] = cost.block_params(st["channels"], spec.window, st["heads"]).total
        st["compressed_params"] = cost.block_params(st["channels"], spec.window, st["heads"],
                                                    args.variant, args.tau).total
    res = CommandResult(0, summary=f"{spec.name} tau={args.tau} {args.variant}: "
                                   f"param_delta={totals['param_delta']} mult_delta={totals['mult_delta']}")
    _emit(_json(totals), args.out, res)
    return res


def cmd_train(args) -> CommandResult:
    data = gen_synthetic(ToyDatasetSpec(samples=args.samples, seed=args.seed))
    model = build_model(args.mode, seed=args.seed, tau=args.tau)
    try:
        hist = train(model, data, lr=args.lr, momentum=args.momentum, steps=args.steps, seed=args.seed)
    except DivergenceError as exc:
        raise ValidationError(f"check failed: training ({exc})") from None
    res = CommandResult(0, summary=f"train {args.mode}: loss {hist.losses[0]:.4f} -> {hist.losses[-1]:.4f}, "
                                   f"train accuracy {hist.final_accuracy:.3f}")
    _emit(hist.to_csv(), args.out, res)
    return res


def cmd_bench(args) -> CommandResult:
    rows = verify.bench_grid(full=args.grid)
    header = ["n", "m", "c", "p", "variant", "tau", "closed_form", "measured", "match"]
    res = CommandResult(0, summary=f"{len(rows)} shapes, closed form matches counted forward passes")
    _emit(_csv(header, [[r[h] for h in header] for r in rows]), args.out, res)
    bad = [r for r in rows if not r["match"]]
    if bad:
        r = bad[0]
        raise ValidationError(f"check failed: bench {r['variant']} n={r['n']} m={r['m']} c={r['c']} "
                              f"p={r['p']} tau={r['tau']}: closed form {r['closed_form']} != counted {r['measured']}")
    return res


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _ratio(s):
    v = float(s)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"expected a ratio in (0, 1], got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dctattn", description="DCT-based attention analyses.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dct-table", help="orthonormal DCT-II matrix (and its truncation) as CSV")
    p.add_argument("--size", type=_positive_int, required=True)
    p.add_argument("--tau", type=_ratio)
    p.set_defaults(func=cmd_dct_table)

    p = sub.add_parser("coverage", help="per-frequency coverage and basis spectra as CSV")
    p.add_argument("--size", type=_positive_int, required=True)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("klt", help="DCT versus KLT on an AR(1) covariance, JSON")
    p.add_argument("--size", type=_positive_int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.set_defaults(func=cmd_klt)

    p = sub.add_parser("equiv", help="naive/simplified and tau=1 equivalence checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", action="store_true", help="20-point grid and 5 conjugation seeds")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("gradcheck", help="central-difference gradient check of a toy model")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=_ratio, default=0.5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("cost", help="parameter and multiplication savings for a model spec, JSON")
    p.add_argument("--model", required=True, help="swin-t, swin-s or a spec file")
    p.add_argument("--tau", type=_ratio, required=True)
    p.add_argument("--variant", choices=("naive", "simplified"), default="simplified")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("train", help="train a toy model, loss history as CSV")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--steps", type=_positive_int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=_positive_int, default=512)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--tau", type=_ratio, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="closed-form versus counted multiplications, CSV")
    p.add_argument("--grid", action="store_true", help="full shape grid instead of a small one")
    p.set_defaults(func=cmd_bench)

    for name, sp in sub.choices.items():
        sp.add_argument("--out", help="output file (default: stdout)")
    return parser


def run(argv=None) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return CommandResult(2, summary=str(exc))
    try:
        return args.func(args)
    except ValidationError as exc:
        return CommandResult(1, summary=str(exc))
    except ValueError as exc:
        return CommandResult(1, summary=f"invalid input: {exc}")


def main(argv=None) -> int:
    result = run(argv)
    if result.summary:
        print(result.summary, file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
