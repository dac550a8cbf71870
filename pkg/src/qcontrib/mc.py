"""Replication engine and calibration harness.

Replication ``r`` of a configuration draws its sample from the stream
``(seed, r)``, so every replication is reproducible on its own and the output
does not depend on how replications are grouped into worker tasks.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dists import DistributionSpec, PAPER_SPECS, eval_quantile, moments, sample
from .errors import DegenerateError, DomainError, QCError
from .parallel import ordered_map
from .qc import (
    AsymptoticParams,
    asymptotic_params,
    hinkley_pdf,
    influence_params,
    lambda_hat,
    lognormal_pdf,
    tail_start,
)
from .streams import RandomStream

# replications per worker task; fixed so that task boundaries never depend on workers
CHUNK = 2048
_TRACE_BLOCK = 1 << 16


@dataclass(frozen=True)
class SimulationConfig:
    spec: DistributionSpec
    n: int
    reps: int
    p: float
    seed: int

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if self.reps < 1:
            raise DomainError(f"reps must be >= 1, got {self.reps}")
        if not (0 < self.p <= 1):
            raise DomainError(f"p must lie in (0, 1], got {self.p}")
        if not (0 <= self.seed < 1 << 64):
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class ReplicationRun:
    """Per-replication outputs, indexed by replication number.

    ``tail`` is U = (1/n) sum X_i 1{X_i >= Q_n(p)}, ``mean`` is Z = (1/n) sum X_i,
    ``oracle_tail`` is the same as ``tail`` but thresholded at the population
    quantile q_p (NaN when p = 1). Excluded replications have NaN lambdas.
    """

    config: SimulationConfig
    lambdas: np.ndarray
    tail: np.ndarray
    mean: np.ndarray
    oracle_tail: np.ndarray
    excluded: int

    @property
    def valid_lambdas(self) -> np.ndarray:
        return self.lambdas[np.isfinite(self.lambdas)]


def _replicate_chunk(spec, n, m, q_true, seed, r0, r1):
    X = np.empty((r1 - r0, n))
    for j, r in enumerate(range(r0, r1)):
        X[j] = sample(spec, n, RandomStream(seed, r).generator())
    X.sort(axis=1)
    total = X.sum(axis=1)
    tail = X[:, m - 1 :].sum(axis=1)
    if math.isfinite(q_true):
        oracle = np.where(X >= q_true, X, 0.0).sum(axis=1)
    else:
        oracle = np.full(r1 - r0, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(total != 0, tail / total, np.nan)
    return lam, tail / n, total / n, oracle / n


def run_replications(config: SimulationConfig, workers: int = 1) -> ReplicationRun:
    spec, n, p = config.spec, config.n, config.p
    m = tail_start(n, p)
    q_true = float(eval_quantile(spec, p)) if p < 1 else math.inf
    tasks = [
        (spec, n, m, q_true, config.seed, r0, min(r0 + CHUNK, config.reps))
        for r0 in range(0, config.reps, CHUNK)
    ]
    parts = ordered_map(_replicate_chunk, tasks, workers)
    lam, tail, mean, oracle = (np.concatenate(col) for col in zip(*parts))
    return ReplicationRun(config, lam, tail, mean, oracle, int(np.isnan(lam).sum()))


@dataclass(frozen=True)
class NumeratorDiagnostics:
    mean_U: float
    var_U: float
    cov_UZ: float
    n: int

    @property
    def scaled_var_U(self) -> float:
        return self.n * self.var_U

    @property
    def scaled_cov_UZ(self) -> float:
        return self.n * self.cov_UZ


def numerator_diagnostics(config_or_run, workers: int = 1) -> NumeratorDiagnostics:
    """Mean and variance of U and Cov(U, Z) across replications (ddof = 1)."""
    run = config_or_run if isinstance(config_or_run, ReplicationRun) else run_replications(config_or_run, workers)
    U, Z = run.tail, run.mean
    if U.size < 2:
        raise DegenerateError("need at least two replications for second moments")
    cov = np.cov(U, Z)
    return NumeratorDiagnostics(float(U.mean()), float(cov[0, 0]), float(cov[0, 1]), run.config.n)


def sandwich_gap(run: ReplicationRun) -> float:
    """Mean |U - V| where V thresholds at the true quantile instead of X_(ceil(np))."""
    if np.isnan(run.oracle_tail).all():
        raise DomainError("the true-quantile numerator needs p < 1")
    return float(np.mean(np.abs(run.tail - run.oracle_tail)))


def plugin_params(run: ReplicationRun) -> tuple[AsymptoticParams, float, float]:
    """Moment estimates of (mu_n, sigma_n^2, c_n, mu, sigma^2) from the replications.

    Unlike ``asymptotic_params`` this captures the extra numerator noise that
    comes from estimating the threshold.
    """
    U, Z = run.tail, run.mean
    n = run.config.n
    cov = np.cov(U, Z)
    sigma2_n, sigma2, c_n = n * cov[0, 0], n * cov[1, 1], n * cov[0, 1]
    params = AsymptoticParams(
        p=run.config.p,
        n=n,
        mu_n=float(U.mean()),
        sigma2_n=float(sigma2_n),
        c_n=float(c_n),
        rho_n=float(c_n / math.sqrt(sigma2 * sigma2_n)),
    )
    return params, float(Z.mean()), float(sigma2)


PARAM_MODES = ("closed-form", "influence", "plug-in")


def model_params(run: ReplicationRun, mode: str = "closed-form") -> tuple[AsymptoticParams, float, float]:
    if mode == "closed-form":
        cfg = run.config
        mu, sigma2 = moments(cfg.spec)
        return asymptotic_params(cfg.spec, cfg.p, cfg.n), mu, sigma2
    if mode == "influence":
        cfg = run.config
        mu, sigma2 = moments(cfg.spec)
        return influence_params(cfg.spec, cfg.p, cfg.n), mu, sigma2
    if mode == "plug-in":
        return plugin_params(run)
    raise ValueError(f"unknown parameter mode {mode!r}")


# ---------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class EmpiricalDensity:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise DomainError("grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(g) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite and nonnegative")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def __call__(self, t):
        return np.interp(t, self.grid, self.values, left=0.0, right=0.0)


def silverman_bandwidth(values: np.ndarray) -> float:
    x = np.asarray(values, dtype=float)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(np.std(x, ddof=1), (q75 - q25) / 1.34)
    if not spread > 0:
        spread = np.std(x, ddof=1)
    return 0.9 * spread * x.size ** (-0.2)


def kde(values, grid_size: int = 512, bandwidth: float | None = None) -> EmpiricalDensity:
    """Gaussian KDE on an equispaced grid over [min - 3h, max + 3h]."""
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateError("KDE needs at least two distinct values")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DegenerateError("KDE bandwidth is zero")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    dens = np.zeros(grid_size)
    xs = np.sort(x)
    for start in range(0, xs.size, 8192):
        z = (grid[:, None] - xs[None, start : start + 8192]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= xs.size * h * math.sqrt(2 * math.pi)
    return EmpiricalDensity(grid, dens, h)


def tabulate(pdf, grid) -> EmpiricalDensity:
    grid = np.asarray(grid, dtype=float)
    return EmpiricalDensity(grid, np.maximum(np.asarray(pdf(grid), dtype=float), 0.0))


def area_between(d1: EmpiricalDensity, d2: EmpiricalDensity) -> float:
    """Integral of |d1 - d2| with both densities linear between grid points and 0 outside.

    Evaluated exactly per segment of the union grid: on each segment the
    difference is linear, so where it changes sign the area splits into two
    triangles.
    """
    lo = min(d1.grid[0], d2.grid[0])
    hi = max(d1.grid[-1], d2.grid[-1])
    # the outer grid edges drop to zero, so include a point just outside each
    edges = [d1.grid, d2.grid]
    for d in (d1, d2):
        if d.grid[0] > lo:
            edges.append([np.nextafter(d.grid[0], -np.inf)])
        if d.grid[-1] < hi:
            edges.append([np.nextafter(d.grid[-1], np.inf)])
    t = np.unique(np.concatenate(edges))
    diff = d1(t) - d2(t)
    a, b = diff[:-1], diff[1:]
    h = np.diff(t)
    same = a * b >= 0
    absa, absb = np.abs(a), np.abs(b)
    denom = np.where(same, 1.0, absa + absb)
    seg = np.where(same, 0.5 * (absa + absb), 0.5 * (a * a + b * b) / denom) * h
    return float(math.fsum(seg))


def freedman_diaconis_edges(values) -> np.ndarray:
    return np.histogram_bin_edges(np.asarray(values, dtype=float), bins="fd")


def histogram_tv(values, pdf, points_per_bin: int = 16) -> float:
    """Total variation between the Freedman-Diaconis histogram of ``values`` and a density.

    Bin probabilities of the density come from Gauss-Legendre rules inside
    each bin; density mass outside the histogram range counts fully.
    """
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    edges = freedman_diaconis_edges(x)
    counts, _ = np.histogram(x, edges)
    emp = counts / x.size
    s, w = np.polynomial.legendre.leggauss(points_per_bin)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    pts = mid[:, None] + half[:, None] * s[None, :]
    model = (np.asarray(pdf(pts.ravel())).reshape(pts.shape) @ w) * half
    outside = max(1.0 - model.sum(), 0.0)
    return 0.5 * (float(np.abs(emp - model).sum()) + outside)


def analytic_grid(params: AsymptoticParams, mu: float, sigma2: float, size: int = 2001) -> np.ndarray:
    """A grid that covers the bulk of the asymptotic law (limit +/- 12 widths)."""
    limit = params.mu_n / mu
    width = math.sqrt(params.sigma2_n / params.n) / abs(mu)
    s2 = sigma2 / mu**2 + params.sigma2_n / params.mu_n**2 - 2 * params.c_n / (params.mu_n * mu)
    if s2 > 0:
        width = max(width, abs(limit) * math.sqrt(s2 / params.n))
    return np.linspace(limit - 12 * width, limit + 12 * width, size)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationRow:
    family: str
    area: float | None
    n: int
    reps: int
    p: float
    seed: int
    runtime_s: float
    excluded: int
    bandwidth: float | None = None
    error: str | None = None


@dataclass
class CalibrationReport:
    rows: list[CalibrationRow]
    settings: dict = field(default_factory=dict)

    CSV_FIELDS = ("family", "area", "n", "reps", "p", "seed", "runtime_s", "excluded")

    def to_csv(self, runtime: bool = True) -> str:
        lines = [",".join(self.CSV_FIELDS)]
        for r in self.rows:
            vals = [
                r.family,
                "" if r.area is None else repr(r.area),
                str(r.n),
                str(r.reps),
                repr(r.p),
                str(r.seed),
                f"{r.runtime_s:.3f}" if runtime else "",
                str(r.excluded),
            ]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_json(self, runtime: bool = True) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not runtime:
                d["runtime_s"] = None
            rows.append(d)
        return json.dumps({"settings": self.settings, "rows": rows}, indent=2) + "\n"


def paper_table1_configs(seed: int = 0, reps: int = 100_000, n: int = 1000, p: float = 0.8) -> list[SimulationConfig]:
    """The six families at mu = theta = 1, sigma = k = b = s = 0.25, alpha = 3."""
    return [SimulationConfig(spec, n, reps, p, seed) for spec in PAPER_SPECS]


PAPER_TABLE1_AREAS = {
    "Normal": 0.0713,
    "LogNormal": 0.0708,
    "Exponential": 0.0662,
    "Rayleigh": 0.0687,
    "Generalized Pareto": 0.0949,
    "Gamma": 0.0709,
}


def calibration_settings(grid_size: int, params: str) -> dict:
    return {
        "kernel": "gaussian",
        "bandwidth_rule": "silverman 0.9*min(sd, IQR/1.34)*N^(-1/5)",
        "grid_size": grid_size,
        "grid_span": "[min - 3h, max + 3h]",
        "analytic_model": "lognormal",
        "analytic_params": params,
        "area": "exact L1 of piecewise-linear densities on the union grid",
    }


def calibrate_one(config: SimulationConfig, workers: int = 1, grid_size: int = 512, params: str = "closed-form"):
    """Run one configuration; returns (row, run, kde density, analytic density)."""
    t0 = time.perf_counter()
    run = run_replications(config, workers)
    est = kde(run.valid_lambdas, grid_size)
    ap, mu, sigma2 = model_params(run, params)
    grid = np.union1d(est.grid, analytic_grid(ap, mu, sigma2))
    model = tabulate(lambda t: lognormal_pdf(ap, mu, sigma2, t), grid)
    area = area_between(est, model)
    row = CalibrationRow(
        family=config.spec.label,
        area=area,
        n=config.n,
        reps=config.reps,
        p=config.p,
        seed=config.seed,
        runtime_s=time.perf_counter() - t0,
        excluded=run.excluded,
        bandwidth=est.bandwidth,
    )
    return row, run, est, model


def calibrate(
    configs: list[SimulationConfig], workers: int = 1, grid_size: int = 512, params: str = "closed-form"
) -> CalibrationReport:
    """Area between the KDE of the replications and the lognormal law, per configuration.

    A failing configuration yields a row with ``area=None`` and the error text;
    the remaining configurations still run.
    """
    rows = []
    for cfg in configs:
        t0 = time.perf_counter()
        try:
            row = calibrate_one(cfg, workers, grid_size, params)[0]
        except (QCError, ValueError, ArithmeticError) as exc:
            row = CalibrationRow(
                family=cfg.spec.label,
                area=None,
                n=cfg.n,
                reps=cfg.reps,
                p=cfg.p,
                seed=cfg.seed,
                runtime_s=time.perf_counter() - t0,
                excluded=0,
                error=f"{type(exc).__name__}: {exc}",
            )
        rows.append(row)
    return CalibrationReport(rows, calibration_settings(grid_size, params))


def density_table(run: ReplicationRun, grid_size: int = 512, params: str = "closed-form") -> np.ndarray:
    """Columns t, Hinkley density, lognormal density, KDE on the KDE grid."""
    est = kde(run.valid_lambdas, grid_size)
    ap, mu, sigma2 = model_params(run, params)
    t = est.grid
    return np.column_stack([t, hinkley_pdf(ap, mu, sigma2, t), lognormal_pdf(ap, mu, sigma2, t), est.values])


# ---------------------------------------------------------------------------
# almost-sure convergence


def convergence_trace(spec: DistributionSpec, p: float, checkpoints, stream: RandomStream) -> list[tuple[int, float]]:
    """Statistic of the first n draws of one growing sample, for each checkpoint n.

    Draws come in fixed blocks of 65536 from ``stream.generator(block)``, so
    the first n values do not depend on the largest checkpoint.
    """
    cps = [int(c) for c in checkpoints]
    if not cps:
        raise DomainError("checkpoints must be nonempty")
    if cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
        raise DomainError("checkpoints must be positive and strictly increasing")
    nblocks = -(-cps[-1] // _TRACE_BLOCK)
    draws = np.concatenate([sample(spec, _TRACE_BLOCK, stream.generator(b)) for b in range(nblocks)])
    return [(n, lambda_hat(draws[:n], p)) for n in cps]


# ---------------------------------------------------------------------------
# output


def write_text_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def replications_csv(run: ReplicationRun) -> str:
    lines = ["rep,lambda"]
    lines += [f"{r},{format_float(v)}" for r, v in enumerate(run.lambdas)]
    return "\n".join(lines) + "\n"


def table_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format_float(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


__all__ = [
    "CalibrationReport",
    "CalibrationRow",
    "EmpiricalDensity",
    "NumeratorDiagnostics",
    "ReplicationRun",
    "SimulationConfig",
    "area_between",
    "calibrate",
    "convergence_trace",
    "histogram_tv",
    "kde",
    "numerator_diagnostics",
    "paper_table1_configs",
    "run_replications",
    "sandwich_gap",
]
