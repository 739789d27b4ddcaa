"""Command-line interface.

Subcommands
-----------
penalty eval SPEC --grid A:STEP:B
subordinator {sample,check-lt,check-moments,check-limits} KIND key=val ...
fit PROBLEM.csv [--variant --penalty ...]
experiment --model S --algs alg1+log,lasso --reps 20 --seed 1 --out DIR

Every subcommand also takes ``--config FILE`` with ``key=value`` lines whose
keys are the long option names (dashes or underscores).  Flags given on the
command line win over the file.  Unknown keys are usage errors.

Exit codes: 0 success, 1 runtime or domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .ecme import EcmeConfig, EcmeError, RegressionProblem, Variant, fit_record, run
from .penalties import DomainError, format_number, parse_spec, psi, psi_prime
from .simulation import (DEFAULT_BETA_T_GRID, DEFAULT_GAMMA_GRID, parse_algorithm,
                         run_study)
from .subordinators import (Kind, SubordinatorLaw, gamma_limit_check, laplace_transform,
                            moments, nb_to_gamma_ks, sample)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "SUBPEN_THREADS"
# below this many draws a 3-SE band says little
SMALL_N = 1000
# options that never belong in a config file
_NOT_CONFIGURABLE = {"help", "config", "command", "action", "func"}


class UsageError(Exception):
    pass


class ProblemFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config files


def read_config(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value, got {raw.strip()!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key in out:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def format_config(cfg: dict) -> str:
    """Canonical text form: sorted ``key=value`` lines; inverse of :func:`read_config`."""
    return "".join(f"{k}={_config_value(cfg[k])}\n" for k in sorted(cfg))


def _config_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_number(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_config_value(x) for x in v)
    return str(v)


def _effective_config(args) -> dict:
    return {k: v for k, v in vars(args).items()
            if k not in _NOT_CONFIGURABLE and v is not None}


# ---------------------------------------------------------------------------
# argument types


def parse_grid(text: str) -> np.ndarray:
    """``A:STEP:B`` (inclusive of B up to rounding) or a comma list."""
    text = text.strip()
    if ":" in text:
        try:
            a, step, b = (float(x) for x in text.split(":"))
        except ValueError:
            raise UsageError(f"grid must be A:STEP:B, got {text!r}") from None
        if not (math.isfinite(a) and math.isfinite(b) and step > 0 and b >= a):
            raise UsageError(f"empty grid {text!r}")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return np.round(a + step * np.arange(count), 12)
    items = [x for x in text.split(",") if x.strip()]
    if not items:
        raise UsageError("empty grid")
    try:
        return np.array([float(x) for x in items])
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None


def _float_list(text: str):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _law_params(items):
    params = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = (x.strip() for x in item.split("=", 1))
        k = k.lower()
        if k not in ("t", "xi", "gamma", "rho", "r", "p"):
            raise UsageError(f"unknown subordinator parameter {k!r}")
        if k in params:
            raise UsageError(f"duplicate parameter {k!r}")
        try:
            params[k] = float(v)
        except ValueError:
            raise UsageError(f"bad number {v!r} for {k}") from None
    return params


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if path:
            fh.close()


def _summary(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# penalty


def cmd_penalty(args) -> int:
    spec = parse_spec(args.spec)
    grid = parse_grid(args.grid)
    vals = np.atleast_1d(psi(spec, grid))
    ders = np.atleast_1d(psi_prime(spec, grid))
    _write_csv(args.out, ["s", "psi", "psi_prime"],
               [(format_number(float(s)), v, d) for s, v, d in zip(grid, vals, ders)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# subordinator


def _law(kind, params, t=None):
    return SubordinatorLaw(kind, params.get("t", 1.0) if t is None else t,
                           params.get("xi", 1.0), params.get("gamma", 1.0), params.get("rho"))


def _sub_sample(kind, params, n, seed, out):
    draws = sample(_law(kind, params), seed, n)
    _write_csv(out, ["draw_index", "value"], enumerate(draws))
    _summary(f"sample {kind.value}: {n} draws, mean {draws.mean():.6g}")
    return EXIT_OK


def _sub_check_lt(kind, params, n, seed, out):
    ts = [params["t"]] if "t" in params else [0.5, 1.0, 2.0]
    ss = [0.5, 1.0, 2.0]
    seeds = iter(np.random.SeedSequence(seed).spawn(len(ts)))
    rows, ok = [], 0
    for t in ts:
        law = _law(kind, params, t)
        draws = sample(law, next(seeds), n)
        for s in ss:
            e = np.exp(-s * draws)
            emp, exact = float(e.mean()), float(laplace_transform(law, s))
            se = float(e.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
            err = abs(emp - exact)
            ok += err <= 3 * se
            rows.append((s, t, emp, exact, err))
    _write_csv(out, ["s", "t", "empirical_lt", "exact_lt", "abs_err"], rows)
    passed = ok == len(rows)
    _summary(f"check-lt {kind.value}: {ok}/{len(rows)} within 3 SE: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILURE


def _sub_check_moments(kind, params, n, seed, out):
    law = _law(kind, params)
    draws = sample(law, seed, n)
    mean, var = moments(law)
    m = draws.mean()
    v = draws.var(ddof=1)
    se_mean = math.sqrt(v / n)
    # SE of the sample variance from the fourth central moment
    se_var = math.sqrt(max(np.mean((draws - m) ** 4) - v * v, 0.0) / n)
    rows = [("mean", m, mean, se_mean, abs(m - mean)), ("variance", v, var, se_var, abs(v - var))]
    _write_csv(out, ["statistic", "empirical", "exact", "se", "abs_err"], rows)
    passed = all(r[4] <= 3 * r[3] for r in rows)
    _summary(f"check-moments {kind.value}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILURE


def _sub_check_limits(kind, params, n, seed, out):
    if kind is Kind.NB and "r" in params:
        r, p = params["r"], params.get("p", 1e-4)
        ks = nb_to_gamma_ks(r, [p], n=n, seed=seed)[0]
        _write_csv(out, ["r", "p", "ks"], [(r, p, ks)])
        passed = ks < 0.02
        _summary(f"check-limits NB->Gamma r={format_number(r)}: KS {ks:.4g} "
                 f"{'PASS' if passed else 'FAIL'}")
        return EXIT_OK if passed else EXIT_FAILURE
    if kind not in (Kind.PG, Kind.NB):
        raise UsageError("check-limits covers PG and NB")
    t, rho, eps = params.get("t", 1.0), params.get("rho", 1.0), 0.1
    gammas = [1.0, 0.1, 0.01]
    probs = gamma_limit_check(kind, t, gammas, rho=rho, eps=eps, n=n, seed=seed)
    rows, passed = [], True
    for g, pr in zip(gammas, probs):
        bound = g * t / eps ** 2
        se = math.sqrt(pr * (1 - pr) / n)
        passed &= pr <= bound + 3 * se
        rows.append((g, pr, bound, se))
    passed &= all(a >= b for a, b in zip(probs, probs[1:]))
    _write_csv(out, ["gamma", "exceedance", "chebyshev_bound", "se"], rows)
    _summary(f"check-limits {kind.value}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILURE


_SUB_ACTIONS = {"sample": _sub_sample, "check-lt": _sub_check_lt,
                "check-moments": _sub_check_moments, "check-limits": _sub_check_limits}


def cmd_subordinator(args) -> int:
    try:
        kind = Kind(args.kind.upper())
    except ValueError:
        raise UsageError(f"unknown subordinator kind {args.kind!r}; "
                         f"choose from {', '.join(k.value for k in Kind)}") from None
    params = _law_params(args.params)
    if args.n < SMALL_N and args.action != "sample":
        _summary(f"warning: n={args.n} is small; the 3-SE band is too wide to be meaningful")
    return _SUB_ACTIONS[args.action](kind, params, args.n, args.seed, args.out)


# ---------------------------------------------------------------------------
# fit


def toy_problem_path() -> Path:
    """Path of the shipped 6 x 3 example problem."""
    return Path(str(resources.files("subpen") / "data" / "toy.csv"))


def read_problem(path) -> RegressionProblem:
    """CSV with a header row; first column is y, the rest are the columns of X."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ProblemFileError(f"{path}: empty file")
    width = len(rows[0])
    if width < 2:
        raise ProblemFileError(f"{path}: line 1: need y and at least one X column")
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ProblemFileError(
                f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise ProblemFileError(f"{path}: line {lineno}: non-numeric field") from None
    if not data:
        raise ProblemFileError(f"{path}: no data rows")
    arr = np.array(data)
    return RegressionProblem(arr[:, 1:], arr[:, 0])


def cmd_fit(args) -> int:
    path = toy_problem_path() if args.problem == "toy" else args.problem
    problem = read_problem(path)
    config = EcmeConfig(Variant(args.variant), parse_spec(args.penalty), alpha_t=args.alpha_t,
                        beta_t=args.beta_t, max_iter=args.max_iter, tol=args.tol)
    state = run(problem, config, init=args.init, seed=args.seed)
    rec = fit_record(state, config)
    trace = state.objective_trace
    rec["objective_trace"] = trace
    rec["monotone"] = all(b - a >= -1e-8 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))
    text = json.dumps(rec, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _summary(f"fit {config.variant.value} {config.penalty}: {state.iter} iterations, "
             f"converged={state.converged}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def cmd_experiment(args) -> int:
    algs = [a.strip() for a in args.algs.split(",") if a.strip()]
    if not algs:
        raise UsageError("--algs is empty")
    try:
        parsed = [parse_algorithm(a) for a in algs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    threads = args.threads if args.threads is not None else default_threads()
    report = run_study(args.model, parsed, replications=args.reps, seed=args.seed,
                       snr=args.snr, gamma_grid=args.gamma_grid, beta_t_grid=args.beta_t_grid,
                       folds=args.folds, threads=threads)
    summary = report.summary_csv()
    sys.stdout.write(summary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = {"summary.csv": summary, "replications.csv": report.replications_csv(),
                 "config.txt": format_config(_effective_config(args))}
        for name, text in files.items():
            (out / name).write_text(text)
        manifest = "".join(f"{hashlib.sha256(text.encode()).hexdigest()}  {name}\n"
                           for name, text in sorted(files.items()))
        (out / "manifest.txt").write_text(f"subpen {__version__}\n" + manifest)
    failed = sum(r.status != "ok" for r in report.records)
    if failed:
        _summary(f"experiment: {failed} replication(s) failed")
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subpen", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"subpen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file; command-line flags take precedence")
        p.add_argument("--out", help="output file (directory for experiment)")

    pen = sub.add_parser("penalty", help="evaluate a penalty on a grid")
    pen.add_argument("action", choices=["eval"])
    pen.add_argument("spec", help="e.g. 'LOG(xi=1,gamma=1)'")
    pen.add_argument("--grid", default="0:0.1:2", help="A:STEP:B or comma list")
    common(pen)
    pen.set_defaults(func=cmd_penalty)

    so = sub.add_parser("subordinator", help="sample or check a subordinator law")
    so.add_argument("action", choices=list(_SUB_ACTIONS))
    so.add_argument("kind", help=", ".join(k.value for k in Kind))
    so.add_argument("params", nargs="*", help="t=, xi=, gamma=, rho= (r=, p= for NB limits)")
    so.add_argument("--n", type=_positive_int, default=100_000)
    so.add_argument("--seed", type=int, default=0)
    common(so)
    so.set_defaults(func=cmd_subordinator)

    fit = sub.add_parser("fit", help="fit one regression problem by ECME")
    fit.add_argument("problem", help="CSV with header, y first; 'toy' for the shipped example")
    fit.add_argument("--variant", choices=[v.value for v in Variant], default="alg1")
    fit.add_argument("--penalty", default="LOG(xi=1,gamma=1)")
    fit.add_argument("--alpha-t", type=float, default=10.0)
    fit.add_argument("--beta-t", type=float, default=1.0)
    fit.add_argument("--max-iter", type=_positive_int, default=500)
    fit.add_argument("--tol", type=float, default=1e-7)
    fit.add_argument("--init", choices=["zero", "ridge", "random"], default="zero")
    fit.add_argument("--seed", type=int, default=0)
    common(fit)
    fit.set_defaults(func=cmd_fit)

    ex = sub.add_parser("experiment", help="replicated simulation study")
    ex.add_argument("--model", choices=["S", "M", "L"], type=str.upper, default="S")
    ex.add_argument("--algs", default="alg1+log,lasso")
    ex.add_argument("--reps", type=_positive_int, default=20)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--snr", type=float, default=3.0)
    ex.add_argument("--gamma-grid", type=_float_list, default=DEFAULT_GAMMA_GRID)
    ex.add_argument("--beta-t-grid", type=_float_list, default=DEFAULT_BETA_T_GRID)
    ex.add_argument("--folds", type=_positive_int, default=5)
    ex.add_argument("--threads", type=_positive_int, default=None,
                    help=f"worker processes (default ${THREADS_ENV} or 1)")
    common(ex)
    ex.set_defaults(func=cmd_experiment)
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        return action.choices[command]
    raise KeyError(command)


def parse_args(argv=None):
    """Parse flags, folding in ``--config`` values as defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        try:
            cfg = read_config(Path(args.config).read_text())
        except OSError as exc:
            sp.error(f"cannot read config: {exc}")
        except UsageError as exc:
            sp.error(str(exc))
        known = {a.dest for a in sp._actions} - _NOT_CONFIGURABLE
        unknown = sorted(set(cfg) - known)
        if unknown:
            sp.error(f"unknown config key(s): {', '.join(unknown)}")
        # string defaults pass through each option's type converter
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return parser, args


def main(argv=None) -> int:
    parser, args = parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"subpen {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, EcmeError, ProblemFileError, ValueError, OSError) as exc:
        print(f"subpen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
