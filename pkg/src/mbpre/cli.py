"""``mbpre`` command line.

Every command prints a short human summary and, with ``--out``, writes a
machine report (JSON with a schema version, or CSV for the command's table).
``--out -`` sends the report to stdout and the summary to stderr.

Exit codes: 0 success, 2 invalid configuration or model, 3 numerical
failure, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import lyapunov as ly
from . import oracle as orc
from . import qprocess as qp
from . import simulate as sim
from .envmodel import ConditionsConfig, check_conditions
from .errors import InsufficientDataError, ModelError, NumericalError
from .modelfile import load_model
from .spectral import perron_eig

SCHEMA_VERSION = 1
STOCHASTIC = {"survival", "yaglom", "qprocess"}
# conditions whose failure makes `validate` exit 2; H4 can only be certified
HARD_CONDITIONS = ("H1", "H2", "H3", "H5", "H6")


class UsageError(ModelError):
    pass


def _ints(text):
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return tuple(float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mbpre", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model file (JSON)")
    common.add_argument("--seed", type=_u64, help="root seed (required for stochastic commands)")
    common.add_argument("--n", type=int, help="horizon")
    common.add_argument("--trunc", type=int, default=40, help="oracle truncation K (default 40)")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--theta", type=_floats, help="theta grid, e.g. 0.5,1,1.5,2")
    common.add_argument("--start", type=_ints, help="start vector, e.g. 1,0")
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    common.add_argument("--out", help="machine report path ('-' for stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo")
    helps = {
        "validate": "check conditions H1-H6",
        "spectral": "Perron root and eigenvectors of the annealed mean",
        "lyapunov": "lambda(theta) grid, Lambda'(1) and classification",
        "survival": "Monte Carlo, tilted and exact survival probabilities",
        "yaglom": "conditional law given survival vs the quasi-stationary law",
        "theorem1": "survival ratios against the limit constant",
        "qprocess": "size-biased kernel, invariant law and corollary checks",
        "eqy": "functional-equation residual of the limit generating function",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return ap


# ---------------------------------------------------------------------------
# commands; each returns (summary lines, results dict, csv table)


def _starts(model, args, default=None):
    if args.start is not None:
        if len(args.start) != model.p or min(args.start) < 0 or not any(args.start):
            raise UsageError(f"--start needs {model.p} nonnegative integers, not all zero")
        return [args.start]
    eye = [tuple(int(c) for c in row) for row in np.eye(model.p, dtype=int)]
    return default(model.p, eye) if default else eye[:1]


def cmd_validate(model, args):
    cfg = ConditionsConfig(seed=args.seed if args.seed is not None else 0)
    if args.samples:
        cfg.samples = args.samples
    rep = check_conditions(model, cfg)
    lines = [r.line() for r in rep.results()]
    results = {r.name: {"passed": r.passed, "status": r.status, "details": r.details} for r in rep.results()}
    table = [{"condition": r.name, "passed": r.passed, "status": r.status} for r in rep.results()]
    failed = [r.name for r in rep.failures() if r.name in HARD_CONDITIONS]
    return lines, {"conditions": results, "seed": cfg.seed}, table, (2 if failed else 0)


def cmd_spectral(model, args):
    sd = perron_eig(model.m, tol=args.tol or 1e-12)
    lines = [f"lambda = {sd.lam:.12g}", f"U = {sd.U.tolist()}", f"V = {sd.V.tolist()}"]
    res = {"m": model.m.tolist(), "lambda": sd.lam, "U": sd.U.tolist(), "V": sd.V.tolist(),
           "right_residual": sd.right_residual(), "left_residual": sd.left_residual(),
           "iterations": sd.iterations}
    table = [{"i": i, "U": u, "V": v} for i, (u, v) in enumerate(zip(sd.U, sd.V))]
    return lines, res, table, 0


def cmd_lyapunov(model, args):
    spectrum = ly.theta_spectrum(model, args.theta or (0.5, 1.0, 1.5, 2.0))
    c = spectrum.classification
    lines = [f"lambda({t:g}) = {lam:.10g}" for t, lam in zip(spectrum.thetas, spectrum.lambdas)]
    lines.append(f"Lambda'(1) = {c.slope_at_one.value:.6g} +- {c.slope_at_one.error:.2g}")
    lines.append(f"class: {c.label}")
    table = [{"theta": float(t), "lambda": float(lam), "Lambda": float(np.log(lam)),
              "r_ratio": pr.r_ratio, "residual": pr.residual}
             for t, lam, pr in zip(spectrum.thetas, spectrum.lambdas, spectrum.pairs)]
    res = {"grid": table, "classification": c.as_dict(),
           "convexity_defect": spectrum.convexity_defect(),
           "Lambda_prime_1_flagged": c.slope_at_one.flagged()}
    return lines, res, table, 0


def cmd_survival(model, args):
    n = 20 if args.n is None else args.n
    samples = args.samples or 20000
    table, lines = [], []
    chain = orc.build_chain(model, args.trunc)
    pair = ly.lambda_r_theta(model, 1.0)
    for k, z in enumerate(_starts(model, args)):
        zarr = np.array(z, dtype=np.int64)
        q = sim.survival_mc(model, zarr, n, samples, _sub(args.seed, k, 0), "quenched", args.workers)
        t = ly.survival_tilted(model, zarr, n, samples, _sub(args.seed, k, 1), pair=pair, workers=args.workers)
        br = orc.survival_exact(chain, zarr, n)
        row = {"z": list(z), "n": n, "quenched": q.value, "quenched_stderr": q.stderr,
               "tilted": t.value, "tilted_stderr": t.stderr, "tilted_mass_warnings": t.mass_warnings,
               "oracle_lower": br.lower, "oracle_upper": br.upper, "samples": samples}
        table.append(row)
        lines.append(f"z={z} n={n}: quenched {q.value:.6g} +- {q.stderr:.2g}, "
                     f"tilted {t.value:.6g} +- {t.stderr:.2g}, exact [{br.lower:.10g}, {br.upper:.10g}]")
    return lines, {"rows": table, "K": args.trunc}, table, 0


def _sub(seed, *keys):
    # distinct root seeds per sub-task, derived deterministically
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def cmd_yaglom(model, args):
    n = 25 if args.n is None else args.n
    samples = args.samples or 100000
    z = _starts(model, args)[0]
    chain = orc.build_chain(model, args.trunc)
    ya = orc.yaglom_exact(chain, tol=args.tol or 1e-10)
    mc = sim.yaglom_mc(model, np.array(z, dtype=np.int64), n, samples, args.seed, args.workers)
    finite = orc.conditional_law(chain, z, n)
    tv_lim = mc.tv_distance(ya.states, ya.t)
    tv_fin = mc.tv_distance(chain.plus_states, finite)
    table = []
    emp = mc.as_dict()
    for y, w, f in zip(ya.states, ya.t, finite):
        key = tuple(int(c) for c in y)
        if w < 1e-6 and key not in emp:
            continue
        e = emp.get(key, 0.0)
        table.append({"y": list(key), "t": float(w), "conditional_n": float(f), "empirical": e,
                      "empirical_stderr": float(np.sqrt(e * (1 - e) / mc.survivors))})
    res = {"z": list(z), "n": n, "samples": samples, "survivors": mc.survivors,
           "W": ya.W, "K": ya.K_vec.tolist(), "rate": ya.rate, "lambda": ya.lam,
           "leak_fraction": ya.leak_fraction, "tv_to_limit": tv_lim, "tv_to_conditional_n": tv_fin,
           "pmf": table}
    lines = [f"survivors {mc.survivors}/{samples} at n={n}",
             f"W = {ya.W:.10g}, K = {ya.K_vec.tolist()}, rate = {ya.rate:.10g} (lambda {ya.lam:.10g})",
             f"TV(empirical, limit) = {tv_lim:.4f}; TV(empirical, exact law at n) = {tv_fin:.4f}"]
    return lines, res, table, 0


def cmd_theorem1(model, args):
    n = 40 if args.n is None else args.n
    chain = orc.build_chain(model, args.trunc)
    ya = orc.yaglom_exact(chain, tol=args.tol or 1e-10)
    starts = _starts(model, args, default=lambda p, eye: eye + ([tuple([1] * p)] if p > 1 else [(2,)]))
    rep = orc.theorem1_report(chain, starts, n_max=n, n_ref=max(0, n - 10), yaglom=ya)
    lines = [f"lambda = {rep.lam:.12g}, W = {rep.W:.12g}"]
    for s in rep.summary:
        lines.append(f"z={s['z']}: ratio {s['limit_candidate']:.10g} vs (z,U)/W {s['target']:.10g} "
                     f"(rel err {s['rel_error']:.2g}, linearity gap {s['linearity_gap']:.2g})")
    table = [{**r, "z": ",".join(map(str, r["z"]))} for r in rep.rows]
    return lines, {"lambda": rep.lam, "W": rep.W, "summary": rep.summary, "rows": rep.rows}, table, 0


def cmd_qprocess(model, args):
    n = 100000 if args.n is None else args.n
    chain = orc.build_chain(model, args.trunc)
    ya = orc.yaglom_exact(chain)
    q = qp.build_qkernel(chain)
    st = qp.qstat(q, ya, tol=args.tol or 1e-6)
    cor = qp.corollary_checks(chain, q, ya)
    z = _starts(model, args)[0]
    path = qp.qprocess_simulate(q, z, n, np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed))))
    occ = qp.occupation(q, path)
    tv = float(0.5 * np.abs(occ - st.t_star).sum())
    table = [{"y": [int(c) for c in y], "t_star": float(w), "occupation": float(o)}
             for y, w, o in zip(q.states, st.t_star, occ) if w >= 1e-8 or o > 0]
    res = {"row_sum_error": q.row_sum_error(), "max_leak_star": float(q.leak_star.max()),
           "t_star_weighted_leak": float(st.t_star @ q.leak_star),
           "k_step_consistency": q.consistency_error(), "qstat": st.as_dict(q.states),
           "corollaries": cor.as_dict(), "simulation": {"start": list(z), "steps": n, "tv_to_t_star": tv},
           "t_star": table}
    lines = [f"|P* rows + leak - 1| <= {q.row_sum_error():.2g}; t*-weighted leak {st.t_star @ q.leak_star:.2g}",
             f"|t* P* - t*|_1 = {st.residual:.2g}; recurrent class of {len(st.recurrent_class)} states",
             f"(a) {cor.a_max_error:.2g} (literal form {cor.a_literal_max_error:.2g}), (b) {cor.b_max_error:.2g}, "
             f"(c) {cor.c_max_error:.2g}, (d) {cor.d_max_error:.2g}",
             f"Q-process occupation after {n} steps: TV to t* = {tv:.4f}"]
    lines += [f"FLAG {f}" for f in cor.flags]
    return lines, res, table, 0


def cmd_eqy(model, args):
    chain = orc.build_chain(model, args.trunc)
    ya = orc.yaglom_exact(chain)
    pts = 11 if model.p <= 3 else 5
    grid = orc.unit_grid(model.p, pts)
    r = orc.eqy_residual(model, ya, grid)
    table = [{"s": ",".join(f"{c:g}" for c in s), "residual": float(v)} for s, v in zip(grid, r.residuals)]
    lines = [f"max |residual| over {len(grid)} points = {r.max_residual:.3g} (tail bound {r.tail_bound:.3g})"]
    return lines, {"max_residual": r.max_residual, "tail_bound": r.tail_bound, "grid": table}, table, 0


COMMANDS = {
    "validate": cmd_validate, "spectral": cmd_spectral, "lyapunov": cmd_lyapunov,
    "survival": cmd_survival, "yaglom": cmd_yaglom, "theorem1": cmd_theorem1,
    "qprocess": cmd_qprocess, "eqy": cmd_eqy,
}


# ---------------------------------------------------------------------------
# output


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def render(command, args, results, table) -> str:
    if args.format == "csv":
        buf = io.StringIO()
        rows = [_plain(r) for r in table]
        fields = list(rows[0]) if rows else []
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in r.items()})
        return buf.getvalue()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": {"model": args.model, "seed": args.seed, "n": args.n, "trunc": args.trunc,
                   "samples": args.samples, "theta": args.theta, "start": args.start, "tol": args.tol},
        "results": results,
    }
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    say = sys.stderr if args.out == "-" else sys.stdout
    try:
        if args.command in STOCHASTIC and args.seed is None:
            raise UsageError(f"'{args.command}' is stochastic and needs --seed")
        for name in ("n", "samples"):
            v = getattr(args, name)
            if v is not None and v < 0:
                raise UsageError(f"--{name} must be nonnegative")
        if args.tol is not None and args.tol <= 0:
            raise UsageError("--tol must be positive")
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        model = load_model(args.model)
        lines, results, table, code = COMMANDS[args.command](model, args)
    except InsufficientDataError as exc:
        print(f"mbpre: insufficient data: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"mbpre: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ModelError as exc:
        print(f"mbpre: error: {exc}", file=sys.stderr)
        return 2
    for line in lines:
        print(line, file=say)
    if args.out:
        text = render(args.command, args, results, table)
        if args.out == "-":
            sys.stdout.write(text)
        else:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
