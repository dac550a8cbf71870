"""The quantile-contribution statistic and its laws.

``lambda_hat`` is the estimator itself: the share of the sample total carried
by the order statistics of rank ceil(n p) and above. The rest of the module
describes its distribution: exactly for small n (nested integrals over ordered
uniforms), and asymptotically through the numerator/denominator normal pair,
either as an exact Gaussian-ratio density or as a lognormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .dists import DistributionSpec, eval_cdf, eval_quantile, moments, sample, tail_moments
from .errors import CapacityError, DegenerateError, DomainError, UnsupportedCaseError
from .parallel import ordered_map

MAX_QUADRATURE_N = 6
_MC_BLOCK = 1 << 16


def tail_start(n: int, p: float) -> int:
    """m = ceil(n p), the lowest rank included in the tail sum."""
    if not (0 < p <= 1):
        raise DomainError(f"p must lie in (0, 1], got {p}")
    # round first so that e.g. 10 * 0.7 = 7.000000000000001 still gives 7
    return max(1, math.ceil(round(n * p, 9)))


def _sorted_sample(sample) -> np.ndarray:
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise DomainError("empty sample")
    return x


def tail_and_total(sorted_x: np.ndarray, m: int) -> tuple[float, float]:
    return float(sorted_x[m - 1 :].sum()), float(sorted_x.sum())


def lambda_hat(sample, p: float) -> float:
    """Sum of the order statistics of rank >= ceil(n p) over the sample sum.

    No clamping: mixed-sign samples can give values outside [-1, 1].
    """
    x = _sorted_sample(sample)
    tail, total = tail_and_total(x, tail_start(x.size, p))
    if total == 0.0:
        raise DegenerateError("sample sums to zero")
    return tail / total


def empirical_quantile(sample, p: float) -> float:
    """X_(ceil(n p)) of the ascending-sorted sample."""
    x = _sorted_sample(sample)
    return float(x[tail_start(x.size, p) - 1])


def as_limit(spec: DistributionSpec, p: float) -> float:
    """Almost-sure limit a_{q_p} / mu of the statistic."""
    mu, _ = moments(spec)
    if mu == 0:
        raise DegenerateError("the limit is undefined for a zero-mean law")
    return tail_moments(spec, p).a / mu


# ---------------------------------------------------------------------------
# exact small-sample CDF


def _check_exact_inputs(spec, n, p, lam):
    if not (0 < p <= 1):
        raise DomainError(f"p must lie in (0, 1], got {p}")
    if not (0 < abs(lam) < 1):
        raise UnsupportedCaseError(f"exact CDF covers 0 < |lambda| < 1 only, got {lam}")
    mu, _ = moments(spec)
    if mu == 0:
        raise UnsupportedCaseError("exact CDF needs lambda * mean != 0")
    return mu


def _tail_geometry(n, p, lam):
    """Coefficients of g - x_2 = alpha * x_2 + beta for the first-order-statistic bound.

    With c = (1 - lam) / lam the bound is
        g = c * sum_{i >= m} x_i - sum_{i=2}^{m-1} x_i,
    and the event {Lambda <= lam} is {x_1 >= g} or {x_1 <= g} by sign case.
    """
    m = tail_start(n, p)
    c = (1.0 - lam) / lam
    alpha = c - 1.0 if m == 2 else -2.0
    return m, c, alpha


def _beta_terms(xs: dict[int, np.ndarray], n, m, c):
    # beta collects every term of g - x_2 except the x_2 one
    beta = 0.0
    for i in range(3, n + 1):
        if i >= m:
            beta = beta + c * xs[i]
        else:
            beta = beta - xs[i]
    return beta


def _smoothstep_rule(nodes: int):
    """Gauss-Legendre on (0, 1) composed with t = s^3 (10 - 15 s + 6 s^2).

    The polynomial map flattens the integrand at both ends, which tames the
    (1 - u)^c and log-type endpoint behaviour coming from F^{-1}.
    """
    s, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    t = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    dt = 30.0 * s * s * (1.0 - s) ** 2
    return t, w * dt


def _inner_u2(spec, upper, alpha, beta, rule_t, rule_w):
    """Integral over 0 < u_2 < upper of min(F[g], u_2) for a batch of outer points.

    g - x_2 is affine in x_2, so the switch between the two branches of the
    min sits at x* = -beta / alpha; the u_2 branch is integrated exactly and
    the F[g] branch by the quadrature rule.
    """
    P = upper.size
    if alpha == 0.0:
        star = np.where(np.broadcast_to(beta, (P,)) >= 0, upper, 0.0)
        u_branch_lo, u_branch_hi = np.zeros(P), star
        f_lo, f_hi = star, upper
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            xstar = -np.broadcast_to(beta, (P,)) / alpha
        ustar = np.clip(eval_cdf(spec, xstar), 0.0, upper)
        if alpha < 0:
            # g >= x_2 (min is u_2) for x_2 <= x*
            u_branch_lo, u_branch_hi = np.zeros(P), ustar
            f_lo, f_hi = ustar, upper
        else:
            u_branch_lo, u_branch_hi = ustar, upper
            f_lo, f_hi = np.zeros(P), ustar
    exact = 0.5 * (u_branch_hi**2 - u_branch_lo**2)
    width = f_hi - f_lo
    u2 = f_lo[:, None] + width[:, None] * rule_t[None, :]
    u2 = np.clip(u2, 1e-300, np.nextafter(1.0, 0.0))
    x2 = eval_quantile(spec, u2)
    g = (alpha + 1.0) * x2 + np.broadcast_to(beta, (P,))[:, None]
    vals = eval_cdf(spec, g)
    quad = width * (vals @ rule_w)
    return exact + quad


def _outer_points(n, rule_t, rule_w):
    """Tensor grid for u_3..u_n via u_n = t_n, u_k = u_{k+1} t_k (k = 3..n-1)."""
    d = n - 2
    N = rule_t.size
    idx = np.indices((N,) * d).reshape(d, -1)
    # idx[0] drives u_n, idx[d-1] drives u_3
    us = {}
    weight = np.ones(idx.shape[1])
    prev = None
    for level in range(d):
        i = n - level
        t = rule_t[idx[level]]
        weight = weight * rule_w[idx[level]]
        if prev is None:
            us[i] = t
        else:
            weight = weight * prev
            us[i] = prev * t
        prev = us[i]
    return us, weight


def _nested_integral(spec, n, p, lam, nodes, chunk=1 << 15):
    """n! times the integral over 0 < u_2 < ... < u_n < 1 of min(F[g], u_2)."""
    m, c, alpha = _tail_geometry(n, p, lam)
    rule_t, rule_w = _smoothstep_rule(nodes)
    if n == 2:
        val = _inner_u2(spec, np.ones(1), alpha, np.zeros(1), rule_t, rule_w)[0]
        return 2.0 * val
    us, weight = _outer_points(n, rule_t, rule_w)
    total = []
    for start in range(0, weight.size, chunk):
        sl = slice(start, start + chunk)
        xs = {i: eval_quantile(spec, us[i][sl]) for i in us}
        beta = _beta_terms(xs, n, m, c)
        inner = _inner_u2(spec, us[3][sl], alpha, beta, rule_t, rule_w)
        total.append(float(np.dot(weight[sl], inner)))
    return math.factorial(n) * math.fsum(total)


def exact_cdf_quadrature(spec: DistributionSpec, n: int, p: float, lam: float, nodes: int = 32) -> float:
    """P[Lambda_n(p) <= lam] by tensor Gauss-Legendre quadrature, 2 <= n <= 6.

    With lam * mean > 0 the CDF is 1 - n! * integral; with lam * mean < 0 it is
    the integral itself. The integrand is min(F[g], u_2) rather than F[g]: the
    first order statistic must stay below the second, so the inner integral
    over u_1 cannot go negative.
    """
    if not (2 <= n <= MAX_QUADRATURE_N):
        if n > MAX_QUADRATURE_N:
            raise CapacityError(f"quadrature supports n <= {MAX_QUADRATURE_N}; use exact_cdf_mc")
        raise DomainError(f"n must be >= 2, got {n}")
    mu = _check_exact_inputs(spec, n, p, lam)
    if tail_start(n, p) == 1:
        # the whole sample is the tail: the statistic is identically 1
        return 0.0
    val = _nested_integral(spec, n, p, lam, nodes)
    out = 1.0 - val if lam * mu > 0 else val
    return min(max(out, 0.0), 1.0)


def _direct_block(spec, n, m, lam, stream, block, size):
    x = sample(spec, size * n, stream.generator(block)).reshape(size, n)
    x.sort(axis=1)
    tail = x[:, m - 1 :].sum(axis=1)
    total = x.sum(axis=1)
    ok = total != 0
    return int(np.sum((tail[ok] / total[ok]) <= lam)), int(ok.sum())


def _integral_block(spec, n, p, lam, stream, block, size):
    m, c, alpha = _tail_geometry(n, p, lam)
    u = np.sort(stream.generator(block).random((size, n - 1)), axis=1)
    u = np.clip(u, 1e-300, np.nextafter(1.0, 0.0))
    xs = {i: eval_quantile(spec, u[:, i - 2]) for i in range(2, n + 1)}
    beta = _beta_terms(xs, n, m, c)
    g = (alpha + 1.0) * xs[2] + beta
    h = np.minimum(eval_cdf(spec, g), u[:, 0])
    return float(h.sum()), float((h * h).sum())


def exact_cdf_mc(
    spec: DistributionSpec,
    n: int,
    p: float,
    lam: float,
    reps: int,
    stream,
    estimator: str = "direct",
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo value of P[Lambda_n(p) <= lam] and its standard error.

    ``estimator="direct"`` simulates the statistic; ``"integral"`` averages
    the same integrand the quadrature uses over sorted uniforms
    (n! over the simplex equals n times the mean over n-1 sorted uniforms).
    Blocks of 65536 replications use ``stream.generator(block)``, so the
    result does not depend on ``workers``.
    """
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    m = tail_start(n, p)
    blocks = [(b, min(_MC_BLOCK, reps - b * _MC_BLOCK)) for b in range(-(-reps // _MC_BLOCK))]
    if estimator == "direct":
        tasks = [(spec, n, m, lam, stream, b, size) for b, size in blocks]
        parts = ordered_map(_direct_block, tasks, workers)
        hits = sum(h for h, _ in parts)
        valid = sum(v for _, v in parts)
        if valid == 0:
            raise DegenerateError("every replication had a zero sum")
        est = hits / valid
        return est, math.sqrt(est * (1.0 - est) / valid)
    if estimator == "integral":
        mu = _check_exact_inputs(spec, n, p, lam)
        if m == 1:
            return 0.0, 0.0
        tasks = [(spec, n, p, lam, stream, b, size) for b, size in blocks]
        parts = ordered_map(_integral_block, tasks, workers)
        s1 = math.fsum(a for a, _ in parts)
        s2 = math.fsum(b for _, b in parts)
        mean = s1 / reps
        var = max(s2 / reps - mean * mean, 0.0)
        se = n * math.sqrt(var / reps)
        val = n * mean
        return (1.0 - val if lam * mu > 0 else val), se
    raise ValueError(f"unknown estimator {estimator!r}")


# ---------------------------------------------------------------------------
# asymptotic laws


@dataclass(frozen=True)
class AsymptoticParams:
    """Normal-pair parameters of the numerator U_n.

    ``mu_n`` and ``sigma2_n`` are the mean and n-scaled variance of U_n,
    ``c_n`` the n-scaled covariance with the sample mean Z_n, and
    ``rho_n = c_n / (sigma * sigma_n)``.
    """

    p: float
    n: int
    mu_n: float
    sigma2_n: float
    c_n: float
    rho_n: float

    def __post_init__(self):
        if self.sigma2_n < 0:
            raise DomainError(f"sigma2_n must be nonnegative, got {self.sigma2_n}")
        if abs(self.rho_n) > 1.0 + 1e-12:
            raise DomainError(f"|rho_n| must not exceed 1, got {self.rho_n}")


def asymptotic_params(spec: DistributionSpec, p: float, n: int) -> AsymptoticParams:
    """Parameters from the known law: mu_n = a, sigma_n^2 = (b+)^2 + (b-)^2 + 2 a+ a-, c_n = a2 - mu a."""
    tm = tail_moments(spec, p)
    if tm.mu == 0:
        raise DegenerateError("asymptotic law needs a nonzero mean")
    sigma2_n = tm.b2_plus + tm.b2_minus + 2.0 * tm.a_plus * tm.a_minus
    if sigma2_n <= 0:
        raise DegenerateError("numerator variance is zero")
    c_n = tm.a2 - tm.mu * tm.a
    rho = c_n / math.sqrt(tm.sigma2 * sigma2_n)
    return AsymptoticParams(p=p, n=n, mu_n=tm.a, sigma2_n=sigma2_n, c_n=c_n, rho_n=rho)


def influence_params(spec: DistributionSpec, p: float, n: int) -> AsymptoticParams:
    """Parameters from the influence function (x - q_p)^+ of the tail sum.

    With the threshold estimated by X_(ceil(np)), n Var(U_n) tends to
    Var[(X - q_p)^+] and n Cov(U_n, Z_n) to Cov[(X - q_p)^+, X], both smaller
    than the fixed-threshold values used by ``asymptotic_params``. The mean
    carries the O(1/n) rank-rounding term.
    """
    tm = tail_moments(spec, p)
    if tm.mu == 0:
        raise DegenerateError("asymptotic law needs a nonzero mean")
    q, tail_prob = tm.q_p, 1.0 - p
    excess = tm.a - q * tail_prob
    sigma2_n = tm.a2 - 2.0 * q * tm.a + q * q * tail_prob - excess * excess
    if sigma2_n <= 0:
        raise DegenerateError("numerator variance is zero")
    c_n = tm.a2 - q * tm.a - tm.mu * excess
    rho = c_n / math.sqrt(tm.sigma2 * sigma2_n)
    # the tail keeps n - m + 1 order statistics rather than n (1 - p); each
    # surplus one sits near q_p
    surplus = (n - tail_start(n, p) + 1) - n * tail_prob
    mu_n = tm.a + q * surplus / n
    return AsymptoticParams(p=p, n=n, mu_n=mu_n, sigma2_n=sigma2_n, c_n=c_n, rho_n=rho)


def _array_out(fn):
    def wrapper(params, mu, sigma2, t):
        arr = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
            out = fn(params, mu, sigma2, np.atleast_1d(arr))
        out = np.asarray(out).reshape(arr.shape)
        return float(out) if arr.ndim == 0 else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_array_out
def hinkley_pdf(params: AsymptoticParams, mu: float, sigma2: float, t):
    """Gaussian-ratio density of the statistic.

    Decorrelating the numerator against the denominator leaves a ratio of
    independent normals plus the constant offset c_n / sigma^2; this is
    Hinkley's density for that ratio written back in the original variable.
    """
    n = params.n
    mu_n, s2n, c = params.mu_n, params.sigma2_n, params.c_n
    det = sigma2 * s2n - c * c
    if det <= 0 or abs(params.rho_n) >= 1.0:
        raise DegenerateError("numerator and denominator are perfectly correlated")
    sigma, sigma_n = math.sqrt(sigma2), math.sqrt(s2n)
    s2tilde = s2n - c * c / sigma2
    shift = c / sigma2
    mu_tilde = mu_n - c * mu / sigma2
    A = np.sqrt((t - shift) ** 2 / s2tilde + 1.0 / sigma2)
    B = (mu_tilde / s2tilde) * (t - shift) + mu / sigma2
    r2 = mu_tilde**2 / s2tilde + mu * mu / sigma2
    quad = (t - mu_n / mu) ** 2 / ((t - sigma_n / sigma) ** 2 + 2.0 * t * (1.0 - params.rho_n) * sigma_n / sigma)
    body = (
        math.sqrt(n / (2.0 * math.pi * det))
        * B
        / A**3
        * specfun.erf(B / A * math.sqrt(n / 2.0))
        * np.exp(-0.5 * n * (mu * mu / sigma2) * quad)
    )
    return body + math.exp(-0.5 * n * r2) / (math.pi * A * A * math.sqrt(det))


def lognormal_log_variance(params: AsymptoticParams, mu: float, sigma2: float) -> float:
    """s^2 with log(Lambda_n) ~ N(log(mu_n / mu), s^2 / n)."""
    s2 = sigma2 / mu**2 + params.sigma2_n / params.mu_n**2 - 2.0 * params.c_n / (params.mu_n * mu)
    if not s2 > 0:
        raise DegenerateError(f"lognormal log-variance is not positive ({s2})")
    return s2


@_array_out
def lognormal_pdf(params: AsymptoticParams, mu: float, sigma2: float, t):
    """Density of (mu_n / mu) * exp(Z), Z ~ N(0, s^2 / n)."""
    scale = params.mu_n / mu
    if not scale > 0:
        raise UnsupportedCaseError("lognormal law needs mu_n / mu > 0")
    v = lognormal_log_variance(params, mu, sigma2) / params.n
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    dens = np.exp(-np.log(ts / scale) ** 2 / (2.0 * v)) / (ts * math.sqrt(2.0 * math.pi * v))
    return np.where(pos, dens, 0.0)


def simulate_statistic(spec: DistributionSpec, n: int, p: float, reps: int, stream, workers: int = 1) -> np.ndarray:
    """``reps`` block-vectorized draws of the statistic (helper for small-n checks)."""
    m = tail_start(n, p)
    blocks = [(b, min(_MC_BLOCK, reps - b * _MC_BLOCK)) for b in range(-(-reps // _MC_BLOCK))]
    parts = ordered_map(_statistic_block, [(spec, n, m, stream, b, s) for b, s in blocks], workers)
    return np.concatenate(parts) if parts else np.empty(0)


def _statistic_block(spec, n, m, stream, block, size):
    x = sample(spec, size * n, stream.generator(block)).reshape(size, n)
    x.sort(axis=1)
    return x[:, m - 1 :].sum(axis=1) / x.sum(axis=1)


__all__ = [
    "AsymptoticParams",
    "as_limit",
    "asymptotic_params",
    "empirical_quantile",
    "exact_cdf_mc",
    "exact_cdf_quadrature",
    "hinkley_pdf",
    "influence_params",
    "lambda_hat",
    "lognormal_log_variance",
    "lognormal_pdf",
    "simulate_statistic",
    "tail_start",
]
