"""Command-line front end.

    qcontrib simulate   --dist "exp mu=1" --n 1000 --reps 100000 --p 0.8 --seed 42 --out l.csv
    qcontrib exact-cdf  --dist "exp mu=1" --n 4 --p 0.5 --lambda 0.7 --method quadrature
    qcontrib asymptotic --dist "exp mu=1" --n 1000 --p 0.8 --model lognormal --out dens.csv
    qcontrib order-stat --dist "normal mu=1 sigma=0.25" --n 5 --ranks 2,4 --at 0.9,1.2
    qcontrib calibrate  --preset paper-table1 --seed 1 --out table1.csv
    qcontrib converge   --dist "exp mu=1" --p 0.8 --seed 3 --checkpoints 10,1000,1000000

Errors exit with 2 (usage), 3 (domain), 4 (capacity) or 5 (degenerate) and a
single line on stderr. Output files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import mc, orderstats, qc
from .dists import DistributionSpec, moments
from .errors import QCError, UsageError
from .streams import RandomStream

VERBS = ("simulate", "exact-cdf", "asymptotic", "order-stat", "calibrate", "converge")
PRESETS = ("paper-table1",)


@dataclass
class Command:
    verb: str
    options: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _prob(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a probability, got {text!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {v}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _dist(text):
    try:
        return DistributionSpec.parse(text)
    except QCError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcontrib", description="Quantile-contribution statistic toolkit.")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    def common(p, dist=True, stochastic=False, size=True):
        if dist:
            p.add_argument("--dist", type=_dist, required=True, help='e.g. "gpd k=0.25 s=0.25 theta=1"')
        if size:
            p.add_argument("--n", type=_positive_int, required=True, help="sample size")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--json", action="store_true", help="write JSON instead of CSV")
        if stochastic:
            p.add_argument("--seed", type=_seed, help="64-bit seed (required, no default)")
            p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("simulate", help="replications of the statistic")
    common(p, stochastic=True)
    p.add_argument("--reps", type=_positive_int, required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--density-out", help="also write t,analytic_hinkley,analytic_lognormal,kde")
    p.add_argument("--params", choices=mc.PARAM_MODES, default="closed-form")
    p.add_argument("--grid-size", type=_positive_int, default=512)

    p = sub.add_parser("exact-cdf", help="finite-sample CDF of the statistic")
    common(p, stochastic=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--lambda", dest="lam", type=_float_list, action="extend", required=True)
    p.add_argument("--method", choices=("quadrature", "mc", "mc-integral"), default="quadrature")
    p.add_argument("--reps", type=_positive_int, default=1_000_000)
    p.add_argument("--nodes", type=_positive_int, default=32)

    p = sub.add_parser("asymptotic", help="tabulate an asymptotic density")
    common(p)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--model", choices=("lognormal", "hinkley"), default="lognormal")
    p.add_argument("--params", choices=("closed-form", "influence"), default="closed-form")
    p.add_argument("--t", type=_float_list, action="extend", help="evaluation points (default: grid)")
    p.add_argument("--points", type=_positive_int, default=1001)

    p = sub.add_parser("order-stat", help="marginal/joint order-statistic CDF")
    common(p, stochastic=True)
    p.add_argument("--ranks", "--i", dest="ranks", type=_int_list, required=True)
    p.add_argument("--at", type=_float_list, action="append", required=True,
                   help="one evaluation point; for a single rank a comma list gives several points")
    p.add_argument("--method", choices=("beta", "binomial", "enumeration", "mc"), default=None)
    p.add_argument("--reps", type=_positive_int, default=1_000_000)

    p = sub.add_parser("calibrate", help="area between KDE and the lognormal law")
    common(p, dist=False, stochastic=True, size=False)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--dist", type=_dist, action="append", dest="dists")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--reps", type=_positive_int)
    p.add_argument("--p", type=_prob)
    p.add_argument("--params", choices=mc.PARAM_MODES, default="closed-form")
    p.add_argument("--grid-size", type=_positive_int, default=512)
    p.add_argument("--no-runtime", action="store_true", help="leave runtime_s blank for byte-stable output")

    p = sub.add_parser("converge", help="statistic along one growing sample")
    common(p, stochastic=True, size=False)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--checkpoints", type=_int_list, default=[10**k for k in range(1, 7)])
    p.add_argument("--stream-id", type=_seed, default=0)
    return parser


def parse_args(argv) -> Command:
    ns = _build_parser().parse_args(list(argv))
    opts = vars(ns)
    verb = opts.pop("verb")
    needs_seed = verb in ("simulate", "calibrate", "converge") or (
        verb == "exact-cdf" and opts["method"] != "quadrature"
    ) or (verb == "order-stat" and opts["method"] == "mc")
    if needs_seed and opts.get("seed") is None:
        raise UsageError(f"{verb}: --seed is required")
    if verb == "calibrate":
        if opts["preset"] and opts["dists"]:
            raise UsageError("calibrate: give either --preset or --dist, not both")
        if not opts["preset"]:
            if not opts["dists"]:
                raise UsageError("calibrate: --preset or at least one --dist is required")
            missing = [f"--{k}" for k in ("n", "reps", "p") if opts[k] is None]
            if missing:
                raise UsageError(f"calibrate: custom configurations need {', '.join(missing)}")
            if opts["n"] < 2:
                raise UsageError("calibrate: --n must be >= 2")
    if verb == "simulate" and opts["n"] < 2:
        raise UsageError("simulate: --n must be >= 2")
    if verb == "converge" and any(b <= a for a, b in zip(opts["checkpoints"], opts["checkpoints"][1:])):
        raise UsageError("converge: --checkpoints must be strictly increasing")
    if verb == "order-stat":
        k = len(opts["ranks"])
        if k > 1 and any(len(pt) != k for pt in opts["at"]):
            raise UsageError(f"order-stat: each --at needs {k} comma-separated values")
    return Command(verb, opts)


# ---------------------------------------------------------------------------


def _emit(opts, text: str) -> None:
    if opts.get("out"):
        mc.write_text_atomic(opts["out"], text)
    else:
        sys.stdout.write(text)


def _summary(opts, line: str) -> None:
    # with data on stdout the summary goes to stderr so the stream stays parseable
    print(line, file=sys.stderr if not opts.get("out") else sys.stdout)


def _rows_json(header, rows) -> str:
    recs = [dict(zip(header, r)) for r in rows]
    return json.dumps(recs, indent=2, default=float) + "\n"


def _table(opts, header, rows) -> str:
    return _rows_json(header, rows) if opts["json"] else mc.table_csv(header, rows)


def _run_simulate(o):
    cfg = mc.SimulationConfig(o["dist"], o["n"], o["reps"], o["p"], o["seed"])
    run = mc.run_replications(cfg, o["workers"])
    if o["json"]:
        lam = [None if not math.isfinite(v) else float(v) for v in run.lambdas]
        text = json.dumps({"config": _cfg_dict(cfg), "excluded": run.excluded, "lambda": lam}) + "\n"
    else:
        text = mc.replications_csv(run)
    dens_text = None
    if o["density_out"]:
        table = mc.density_table(run, o["grid_size"], o["params"])
        dens_text = mc.table_csv(("t", "analytic_hinkley", "analytic_lognormal", "kde"), table.tolist())
    _emit(o, text)
    if dens_text is not None:
        mc.write_text_atomic(o["density_out"], dens_text)
    v = run.valid_lambdas
    _summary(o, f"simulate: {cfg.spec} n={cfg.n} p={cfg.p} reps={cfg.reps} mean={v.mean():.6f} "
                f"sd={v.std(ddof=1) if v.size > 1 else 0.0:.6f} excluded={run.excluded}")


def _cfg_dict(cfg):
    return {"dist": str(cfg.spec), "n": cfg.n, "reps": cfg.reps, "p": cfg.p, "seed": cfg.seed}


def _run_exact(o):
    spec, n, p = o["dist"], o["n"], o["p"]
    rows = []
    for lam in o["lam"]:
        if o["method"] == "quadrature":
            rows.append((lam, qc.exact_cdf_quadrature(spec, n, p, lam, o["nodes"]), ""))
        else:
            est = "direct" if o["method"] == "mc" else "integral"
            val, se = qc.exact_cdf_mc(spec, n, p, lam, o["reps"], RandomStream(o["seed"]), est, o["workers"])
            rows.append((lam, val, se))
    _emit(o, _table(o, ("lambda", "value", "std_error"), rows))
    _summary(o, f"exact-cdf: {spec} n={n} p={p} method={o['method']} " +
             " ".join(f"F({r[0]:g})={r[1]:.6f}" for r in rows))


def _run_asymptotic(o):
    spec, n, p = o["dist"], o["n"], o["p"]
    mu, sigma2 = moments(spec)
    params = qc.asymptotic_params(spec, p, n) if o["params"] == "closed-form" else qc.influence_params(spec, p, n)
    t = np.asarray(o["t"]) if o["t"] else mc.analytic_grid(params, mu, sigma2, o["points"])
    pdf = qc.lognormal_pdf if o["model"] == "lognormal" else qc.hinkley_pdf
    vals = np.atleast_1d(pdf(params, mu, sigma2, t))
    rows = list(zip(t.tolist(), vals.tolist()))
    _emit(o, _table(o, ("t", "value"), rows))
    peak = t[int(np.argmax(vals))]
    _summary(o, f"asymptotic: {spec} n={n} p={p} model={o['model']} limit={params.mu_n / mu:.6f} peak={peak:.6f}")


def _run_order_stat(o):
    spec, n = o["dist"], o["n"]
    rankset = orderstats.RankSet(n, tuple(o["ranks"]))
    method = o["method"] or ("beta" if rankset.k == 1 else "enumeration")
    if rankset.k == 1:
        points = [[x] for pt in o["at"] for x in pt]
    else:
        points = o["at"]
    header = tuple(f"y{j + 1}" for j in range(rankset.k)) + ("value", "std_error")
    rows = []
    for pt in points:
        if method in ("beta", "binomial"):
            if rankset.k != 1:
                raise UsageError(f"order-stat: --method {method} needs a single rank")
            rows.append((*pt, orderstats.marginal_cdf(spec, rankset.ranks[0], n, pt[0], method), ""))
        elif method == "enumeration":
            rows.append((*pt, orderstats.joint_cdf(spec, rankset, pt), ""))
        else:
            est, se = orderstats.mc_joint_cdf(spec, rankset, pt, o["reps"], RandomStream(o["seed"]))
            rows.append((*pt, est, se))
    _emit(o, _table(o, header, rows))
    _summary(o, f"order-stat: {spec} n={n} ranks={list(rankset.ranks)} method={method} points={len(rows)}")


def _run_calibrate(o):
    if o["preset"] == "paper-table1":
        kw = {k: o[k] for k in ("n", "reps", "p") if o[k] is not None}
        configs = mc.paper_table1_configs(seed=o["seed"], **kw)
    else:
        configs = [mc.SimulationConfig(d, o["n"], o["reps"], o["p"], o["seed"]) for d in o["dists"]]
    report = mc.calibrate(configs, o["workers"], o["grid_size"], o["params"])
    if o["preset"]:
        report.settings["preset"] = o["preset"]
    runtime = not o["no_runtime"]
    _emit(o, report.to_json(runtime) if o["json"] else report.to_csv(runtime))
    for r in report.rows:
        if r.error:
            print(f"calibrate: {r.family}: {r.error}", file=sys.stderr)
    areas = " ".join(f"{r.family}={'error' if r.area is None else f'{r.area:.4f}'}" for r in report.rows)
    _summary(o, f"calibrate: {len(report.rows)} rows params={o['params']} {areas}")
    return 0 if all(r.error is None for r in report.rows) else 1


def _run_converge(o):
    spec, p = o["dist"], o["p"]
    trace = mc.convergence_trace(spec, p, o["checkpoints"], RandomStream(o["seed"], o["stream_id"]))
    try:
        limit = qc.as_limit(spec, p) if p < 1 else 1.0
    except QCError:
        limit = math.nan
    rows = [(n, v, limit) for n, v in trace]
    _emit(o, _table(o, ("n", "lambda", "limit"), rows))
    n_last, v_last = trace[-1]
    _summary(o, f"converge: {spec} p={p} n={n_last} lambda={v_last:.6f} limit={limit:.6f}")


_DISPATCH = {
    "simulate": _run_simulate,
    "exact-cdf": _run_exact,
    "asymptotic": _run_asymptotic,
    "order-stat": _run_order_stat,
    "calibrate": _run_calibrate,
    "converge": _run_converge,
}


def run(command: Command) -> int:
    status = _DISPATCH[command.verb](command.options)
    return 0 if status is None else status


def _one_line(exc) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_args(argv))
    except QCError as exc:
        print(f"qcontrib: error: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"qcontrib: error: {_one_line(exc)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
