"""Simulation study: data models S/M/L, SPE and zero recovery, CV, replications.

Noise convention: ``sigma_true`` is the noise standard deviation, so
``SNR = sqrt(b' Sigma b) / sigma_true`` and
``SPE = [(bhat - b)' Sigma (bhat - b) + sigma_true^2] / sigma_true^2``,
which equals 1 at ``bhat = b``.  The ECME solver's own ``sigma`` is a
variance; the two never mix.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from .ecme import (EcmeConfig, EcmeState, RegressionProblem, Variant, penalty_for_variant,
                   run)
from .lasso import weighted_lasso
from .penalties import Family

__all__ = [
    "DataModelSpec",
    "GeneratedData",
    "AlgorithmSpec",
    "data_model",
    "covariance_matrix",
    "sigma_from_snr",
    "generate",
    "spe",
    "spe_empirical",
    "zero_recovery",
    "parse_algorithm",
    "cross_validate",
    "fit_algorithm",
    "run_study",
    "StudyReport",
    "t_vs_b_profile",
    "profile_spearman",
    "lasso_grid",
    "cross_validate_lasso",
    "ReplicationRecord",
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_BETA_T_GRID",
]

DEFAULT_GAMMA_GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0)
DEFAULT_BETA_T_GRID = (0.1, 1.0, 10.0)
# lasso baseline: K log-spaced levels from lambda_max down to depth * lambda_max,
# depth 1e-2 when the fitted rows number fewer than p, else 1e-4
LASSO_GRID_SIZE = 20
ZERO_TOL = 1e-8


@dataclass(frozen=True)
class DataModelSpec:
    """Design for a simulation model.

    ``covariance`` is one of ``("const", c)``, ``("ar1", r)``,
    ``("block_ar1", r, n_blocks)`` or ``("matrix", Sigma)``.
    """

    name: str
    n: int
    p: int
    b_true: np.ndarray
    covariance: tuple

    def matrix(self) -> np.ndarray:
        return covariance_matrix(self.covariance, self.p)


def covariance_matrix(cov, p: int) -> np.ndarray:
    kind = cov[0]
    if kind == "const":
        c = float(cov[1])
        return np.full((p, p), c) + (1.0 - c) * np.eye(p)
    if kind == "ar1":
        idx = np.arange(p)
        return float(cov[1]) ** np.abs(idx[:, None] - idx[None, :])
    if kind == "block_ar1":
        r, blocks = float(cov[1]), int(cov[2])
        if p % blocks:
            raise ValueError("p must be divisible by the number of blocks")
        return linalg.block_diag(*[covariance_matrix(("ar1", r), p // blocks)] * blocks)
    if kind == "matrix":
        S = np.asarray(cov[1], dtype=float)
        if S.shape != (p, p):
            raise ValueError("covariance matrix has the wrong shape")
        return S
    raise ValueError(f"unknown covariance kind {kind!r}")


def data_model(name: str) -> DataModelSpec:
    name = name.upper()
    if name == "S":
        b = np.zeros(30)
        b[:6] = [0.03, 0.07, 0.1, 0.9, 0.93, 0.97]
        return DataModelSpec("S", 35, 30, b, ("const", 0.4))
    bm = np.zeros(200)
    bm[20 * np.arange(10)] = 1.0  # b_{20i+1} = 1, one-based
    if name == "M":
        return DataModelSpec("M", 100, 200, bm, ("ar1", 0.7))
    if name == "L":
        return DataModelSpec("L", 500, 1000, np.tile(bm, 5), ("block_ar1", 0.7, 5))
    raise ValueError(f"unknown data model {name!r}")


@dataclass
class GeneratedData:
    X: np.ndarray
    y: np.ndarray
    b_true: np.ndarray
    sigma_true: float
    covariance: np.ndarray
    seed: object = None


def sigma_from_snr(b_true, covariance, snr: float) -> float:
    """Noise standard deviation giving ``sqrt(b' Sigma b) / sigma = snr``."""
    b = np.asarray(b_true, dtype=float)
    if not snr > 0:
        raise ValueError("snr must be positive")
    q = float(b @ np.asarray(covariance) @ b)
    if q <= 0:
        raise ValueError("SNR undefined for a zero signal")
    return math.sqrt(q) / snr


def _cholesky(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        # PSD but singular: symmetric square root
        vals, vecs = np.linalg.eigh(S)
        if vals.min() < -1e-10 * max(1.0, vals.max()):
            raise ValueError("covariance is not positive semidefinite") from None
        return vecs * np.sqrt(np.clip(vals, 0, None))


def generate(spec: DataModelSpec, snr: float = 3.0, seed=0, n: Optional[int] = None) -> GeneratedData:
    """Draw ``X`` rows from N(0, Sigma) and ``y = X b + sigma z``."""
    S = spec.matrix()
    L = _cholesky(S)
    rng = np.random.default_rng(seed)
    n = spec.n if n is None else int(n)
    X = rng.standard_normal((n, spec.p)) @ L.T
    sig = sigma_from_snr(spec.b_true, S, snr)
    y = X @ spec.b_true + sig * rng.standard_normal(n)
    return GeneratedData(X, y, spec.b_true.copy(), sig, S, seed)


def spe(b_hat, b_true, covariance, sigma_true: float) -> float:
    """Exact expected squared prediction error at a fresh point over sigma^2."""
    d = np.asarray(b_hat, dtype=float) - np.asarray(b_true, dtype=float)
    return float((d @ np.asarray(covariance) @ d + sigma_true ** 2) / sigma_true ** 2)


def spe_empirical(b_hat, data: GeneratedData, spec: DataModelSpec, size=10_000, seed=0) -> float:
    """SPE on a freshly generated test set of ``size`` rows."""
    test = generate(spec, snr=math.sqrt(float(spec.b_true @ data.covariance @ spec.b_true)) / data.sigma_true,
                    seed=seed, n=size)
    return float(np.mean((test.y - test.X @ b_hat) ** 2) / data.sigma_true ** 2)


def zero_recovery(b_hat, b_true, zero_tol: float = ZERO_TOL) -> float:
    """Percentage of true zeros estimated as zero (``|bhat_i| <= zero_tol``)."""
    b_true = np.asarray(b_true)
    zeros = b_true == 0
    if not zeros.any():
        raise ValueError("b_true has no zero entries")
    hit = np.abs(np.asarray(b_hat)[zeros]) <= zero_tol
    return 100.0 * float(hit.mean())


# ---------------------------------------------------------------------------
# algorithms


@dataclass(frozen=True)
class AlgorithmSpec:
    """``variant`` + penalty ``family``; ``variant=None`` is the lasso baseline."""

    variant: Optional[Variant]
    family: Optional[Family]
    rho: Optional[float] = None

    @property
    def label(self) -> str:
        if self.variant is None:
            return "lasso"
        fam = {Family.CEL1: "cel", Family.CEL: "celrho"}.get(self.family, self.family.value.lower())
        lab = f"{self.variant.value}+{fam}"
        return lab if self.rho is None else f"{lab}:{self.rho:g}"

    @property
    def is_lasso(self) -> bool:
        return self.variant is None


def parse_algorithm(text: str) -> AlgorithmSpec:
    """``lasso`` or ``alg{1,2,3}+{log,exp,lfr,cel,lhalf,pg:RHO,celrho:RHO}``.

    ``cel`` is the table CEL row (CEL1); ``celrho:RHO`` is the generic CEL family.
    """
    t = text.strip().lower()
    if t == "lasso":
        return AlgorithmSpec(None, None)
    if "+" not in t:
        raise ValueError(f"cannot parse algorithm {text!r}")
    v, fam = t.split("+", 1)
    rho = None
    if ":" in fam:
        fam, r = fam.split(":", 1)
        rho = float(r)
    family = {"log": Family.LOG, "exp": Family.EXP, "lfr": Family.LFR, "cel": Family.CEL1,
              "lhalf": Family.LHALF, "l1/2": Family.LHALF, "pg": Family.PG,
              "celrho": Family.CEL}.get(fam)
    if family is None:
        raise ValueError(f"unknown penalty in algorithm {text!r}")
    if (family in (Family.PG, Family.CEL)) != (rho is not None):
        raise ValueError(f"rho is required exactly for pg/celrho in {text!r}")
    return AlgorithmSpec(Variant(v), family, rho)


def _config(alg: AlgorithmSpec, gamma, beta_t, p, **kw) -> EcmeConfig:
    pen = penalty_for_variant(alg.family, gamma, alg.variant, p, alg.rho)
    return EcmeConfig(alg.variant, pen, beta_t=beta_t, **kw)


def _init_for(alg: AlgorithmSpec) -> str:
    # b = 0 is a fixed point of the LHALF iteration (infinite weight at the origin)
    return "ridge" if alg.family is Family.LHALF else "zero"


def fit_algorithm(alg: AlgorithmSpec, X, y, gamma, beta_t, **kw):
    """Fit one configuration; returns ``(b_hat, EcmeState or None)``."""
    if alg.is_lasso:
        return weighted_lasso(X, y, gamma), None
    cfg = _config(alg, gamma, beta_t, X.shape[1], **kw)
    state = run(RegressionProblem(X, y), cfg, init=_init_for(alg))
    return state.b, state


def _fold_ids(n, folds, seed):
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _cv_errors(X, y, candidates, fit, folds, seed):
    parts = _fold_ids(len(y), folds, seed)
    errs = np.zeros(len(candidates))
    for hold in parts:
        train = np.ones(len(y), bool)
        train[hold] = False
        for i, cand in enumerate(candidates):
            b = fit(X[train], y[train], cand)
            errs[i] += np.mean((y[hold] - X[hold] @ b) ** 2)
    return errs / len(parts)


def cross_validate(data, alg: AlgorithmSpec, gamma_grid=DEFAULT_GAMMA_GRID,
                   beta_t_grid=DEFAULT_BETA_T_GRID, folds: int = 5, seed=0):
    """Grid point ``(gamma, beta_t)`` with least mean held-out MSE.

    Ties go to the larger gamma, then the smaller beta_t (both shrink more).
    ``data`` is a :class:`GeneratedData` or an ``(X, y)`` pair.
    """
    X, y = (data.X, data.y) if isinstance(data, GeneratedData) else data
    if alg.is_lasso:
        raise ValueError("use cross_validate_lasso for the lasso baseline")
    if not gamma_grid or not beta_t_grid:
        raise ValueError("grids must be nonempty")
    cands = [(g, bt) for g in gamma_grid for bt in beta_t_grid]
    if len(cands) == 1:
        return cands[0]
    errs = _cv_errors(X, y, cands, lambda Xt, yt, c: fit_algorithm(alg, Xt, yt, *c)[0], folds, seed)
    best = min(range(len(cands)), key=lambda i: (errs[i], -cands[i][0], cands[i][1]))
    return cands[best]


def lasso_grid(X, y, size=LASSO_GRID_SIZE, depth=None, n_fit=None):
    """``size`` log-spaced levels from ``max|X'y|`` down to ``depth`` times that.

    The default depth is 1e-2 when the fits see fewer rows (``n_fit``,
    default ``len(y)``) than columns and 1e-4 otherwise.
    """
    if depth is None:
        n_fit = X.shape[0] if n_fit is None else n_fit
        depth = 1e-2 if n_fit < X.shape[1] else 1e-4
    lam_max = float(np.max(np.abs(X.T @ y)))
    return tuple(lam_max * depth ** (np.arange(size) / (size - 1)))


def cross_validate_lasso(data, lambdas=None, folds: int = 5, seed=0) -> float:
    """Lasso penalty level by the same CV protocol; ties go to the larger lambda.

    Each fold walks the grid from the largest lambda down, warm-starting
    every fit from the previous solution.
    """
    X, y = (data.X, data.y) if isinstance(data, GeneratedData) else data
    parts = _fold_ids(len(y), folds, seed)
    if lambdas is None:
        lambdas = lasso_grid(X, y, n_fit=len(y) - max(len(h) for h in parts))
    lambdas = tuple(lambdas)
    if len(lambdas) == 1:
        return lambdas[0]
    order = np.argsort(lambdas)[::-1]
    errs = np.zeros(len(lambdas))
    for hold in parts:
        train = np.ones(len(y), bool)
        train[hold] = False
        b = None
        for i in order:
            b = weighted_lasso(X[train], y[train], lambdas[i], warm_start=b)
            errs[i] += np.mean((y[hold] - X[hold] @ b) ** 2)
    errs /= folds
    best = min(range(len(lambdas)), key=lambda i: (errs[i], -lambdas[i]))
    return lambdas[best]


# ---------------------------------------------------------------------------
# study


@dataclass
class ReplicationRecord:
    rep: int
    algorithm: str
    penalty: str
    gamma: float
    beta_t: float
    spe: float
    zero_recovery: float
    iterations: int
    status: str = "ok"
    b_hat: Optional[np.ndarray] = None
    t_hat: Optional[np.ndarray] = None
    objective_trace: Optional[List[float]] = None


@dataclass
class StudyReport:
    model: str
    records: List[ReplicationRecord] = field(default_factory=list)
    algorithms: List[str] = field(default_factory=list)

    def summary(self) -> List[Dict]:
        rows = []
        for label in self.algorithms:
            recs = [r for r in self.records if r.algorithm == label and r.status == "ok"]
            failed = sum(1 for r in self.records if r.algorithm == label and r.status != "ok")
            spes = np.array([r.spe for r in recs])
            rows.append({
                "algorithm": label,
                "penalty": recs[0].penalty if recs else "",
                "mean_spe": float(spes.mean()) if recs else float("nan"),
                "sd_spe": float(spes.std(ddof=1)) if len(recs) > 1 else 0.0,
                "zero_recovery_pct": float(np.mean([r.zero_recovery for r in recs])) if recs else float("nan"),
                "n_reps": len(recs),
                "n_failed": failed,
            })
        return rows

    def summary_csv(self) -> str:
        cols = ["algorithm", "penalty", "mean_spe", "sd_spe", "zero_recovery_pct", "n_reps", "n_failed"]
        return _to_csv(cols, self.summary())

    def replications_csv(self) -> str:
        cols = ["rep", "algorithm", "penalty", "gamma", "beta_t", "spe", "zero_recovery",
                "iterations", "status"]
        rows = [{c: getattr(r, c) for c in cols} for r in sorted(
            self.records, key=lambda r: (r.rep, self.algorithms.index(r.algorithm)))]
        return _to_csv(cols, rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _to_csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _replicate(task):
    (rep, model_name, alg, snr, data_seed, cv_seed, gamma_grid, beta_t_grid, folds) = task
    spec = data_model(model_name)
    data = generate(spec, snr, seed=data_seed)
    try:
        if alg.is_lasso:
            lam = cross_validate_lasso(data, folds=folds, seed=cv_seed)
            b = weighted_lasso(data.X, data.y, lam)
            return ReplicationRecord(rep, alg.label, "L1", lam, float("nan"),
                                     spe(b, spec.b_true, data.covariance, data.sigma_true),
                                     zero_recovery(b, spec.b_true), 0, b_hat=b)
        g, bt = cross_validate(data, alg, gamma_grid, beta_t_grid, folds, cv_seed)
        b, state = fit_algorithm(alg, data.X, data.y, g, bt)
        pen = penalty_for_variant(alg.family, g, alg.variant, spec.p, alg.rho)
        return ReplicationRecord(rep, alg.label, str(pen), g, bt,
                                 spe(b, spec.b_true, data.covariance, data.sigma_true),
                                 zero_recovery(b, spec.b_true), state.iter, b_hat=b,
                                 t_hat=np.asarray(state.t),
                                 objective_trace=list(state.objective_trace))
    except Exception as exc:  # recorded, not fatal
        msg = f"failed: {type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        return ReplicationRecord(rep, alg.label, "", float("nan"), float("nan"),
                                 float("nan"), float("nan"), 0, status=msg)


def run_study(model: str, algorithms: Sequence, replications: int = 20, seed=0, snr: float = 3.0,
              gamma_grid=DEFAULT_GAMMA_GRID, beta_t_grid=DEFAULT_BETA_T_GRID, folds: int = 5,
              threads: int = 1) -> StudyReport:
    """Repeat generate / CV / fit / score ``replications`` times per algorithm.

    Replication ``i`` draws its data from the ``i``-th child of
    ``SeedSequence(seed)``; every algorithm sees the same data and folds.
    Results do not depend on ``threads``.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    algs = [a if isinstance(a, AlgorithmSpec) else parse_algorithm(a) for a in algorithms]
    children = np.random.SeedSequence(seed).spawn(replications)
    tasks = []
    for rep, child in enumerate(children):
        data_seed, cv_seed = child.spawn(2)
        for alg in algs:
            tasks.append((rep, model, alg, snr, data_seed, cv_seed,
                          tuple(gamma_grid), tuple(beta_t_grid), folds))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_replicate, tasks))
    else:
        records = [_replicate(t) for t in tasks]
    return StudyReport(model.upper(), records, [a.label for a in algs])


def t_vs_b_profile(state: EcmeState):
    """Rows ``(t_j, |b_j|)`` sorted by ``t_j`` ascending (stable on ties)."""
    t = np.asarray(state.t, dtype=float)
    if t.ndim == 0:
        raise ValueError("profile needs per-coefficient t (alg1 fit)")
    order = np.argsort(t, kind="stable")
    return [(float(t[j]), float(abs(state.b[j]))) for j in order]


def profile_spearman(state: EcmeState) -> float:
    rows = t_vs_b_profile(state)
    t, ab = zip(*rows)
    return float(stats.spearmanr(t, ab).statistic)
