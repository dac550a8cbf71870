"""Special functions behind the order-statistic and ratio-density closed forms.

Scalar routines (beta family, multinomials) use plain floats and ``math``;
``erf``, ``erfc`` and ``reg_inc_gamma`` also accept numpy arrays because the
distribution code calls them on whole quadrature grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Integral

import numpy as np

from .errors import ContractError, DomainError

_EPS = 1e-15
_FPMIN = 1e-300
_MAXIT = 10_000
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)
_INV_SQRTPI = 1.0 / math.sqrt(math.pi)

# erf switches from the positive-term series to 1 - erfc above this |x|;
# erfc switches to the continued fraction above _ERFC_CF_MIN.
_ERF_SERIES_MAX = 3.0
_ERFC_CF_MIN = 2.0
_ERF_SERIES_TERMS = 100
_ERFC_CF_DEPTH = 200


@dataclass(frozen=True)
class MultiIndex:
    """Block sizes ``parts`` of a multinomial coefficient over ``total`` items."""

    parts: tuple[int, ...]
    total: int

    def __post_init__(self):
        parts = tuple(int(j) for j in self.parts)
        object.__setattr__(self, "parts", parts)
        if any(j < 0 for j in parts) or self.total < 0:
            raise ContractError(f"negative entry in multi-index {parts} / {self.total}")
        if sum(parts) != self.total:
            raise ContractError(f"parts {parts} sum to {sum(parts)}, not {self.total}")


def log_beta(p: float, q: float) -> float:
    """ln B(p, q) for p, q > 0."""
    if not (p > 0 and q > 0):
        raise DomainError(f"log_beta needs positive arguments, got ({p}, {q})")
    return math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(x: float, p: float, q: float) -> float:
    """Regularized incomplete beta I(x; p, q).

    Continued fraction, evaluated directly below x = p/(p+q) and through
    I(x; p, q) = 1 - I(1-x; q, p) above it.
    """
    if not (p > 0 and q > 0):
        raise DomainError(f"reg_inc_beta needs p, q > 0, got ({p}, {q})")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"reg_inc_beta needs 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    lfront = p * math.log(x) + q * math.log1p(-x) - log_beta(p, q)
    if x < p / (p + q):
        return math.exp(lfront) * _betacf(p, q, x) / p
    return 1.0 - math.exp(lfront) * _betacf(q, p, 1.0 - x) / q


def _require_positive_int(name, v):
    if isinstance(v, bool) or not isinstance(v, Integral) or v < 1:
        raise DomainError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def gen_inc_beta(y, p: int, q: int, a, b, form: str = "upper"):
    """(1/B(p,q)) * integral_a^y (x-a)^(p-1) (b-x)^(q-1) dx for integer p, q.

    Evaluated as a finite binomial sum, so exact for ``Fraction`` inputs.
    ``form="upper"`` sums j = p..p+q-1 over (y-a)^j (b-y)^(p+q-1-j);
    ``form="lower"`` sums j = 0..q-1 over (y-a)^(p+q-1-j) (b-y)^j.
    """
    p = _require_positive_int("p", p)
    q = _require_positive_int("q", q)
    if not (a <= y <= b):
        raise DomainError(f"gen_inc_beta needs a <= y <= b, got y={y} on [{a}, {b}]")
    N = p + q - 1
    lo, hi = y - a, b - y
    if form == "upper":
        terms = [math.comb(N, j) * lo**j * hi ** (N - j) for j in range(p, N + 1)]
    elif form == "lower":
        terms = [math.comb(N, j) * lo ** (N - j) * hi**j for j in range(0, q)]
    else:
        raise ValueError(f"unknown form {form!r}")
    if all(isinstance(t, float) for t in terms):
        return math.fsum(terms)
    return sum(terms)


def _erf_series(x):
    # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_k 2^k x^(2k+1) / (2k+1)!!  (all terms positive)
    x2 = x * x
    term = x.copy()
    total = x.copy()
    for k in range(1, _ERF_SERIES_TERMS):
        term = term * (2.0 * x2 / (2 * k + 1))
        total = total + term
    return _TWO_OVER_SQRTPI * np.exp(-x2) * total


def _erfc_cf(x):
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0
    tail = x.copy()
    for k in range(_ERFC_CF_DEPTH, 0, -1):
        tail = x + (0.5 * k) / tail
    return _INV_SQRTPI * np.exp(-x * x) / tail


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def erf(x):
    """Error function, accurate to about 1e-15 absolute on the real line."""
    arr, scalar = _as_array(x)
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    ax = np.abs(flat)
    small = ax < _ERF_SERIES_MAX
    if small.any():
        out[small] = _erf_series(flat[small])
    big = ~small & np.isfinite(flat)
    if big.any():
        out[big] = np.sign(flat[big]) * (1.0 - _erfc_cf(ax[big]))
    inf = np.isinf(flat)
    out[inf] = np.sign(flat[inf])
    out[np.isnan(flat)] = np.nan
    out = out.reshape(arr.shape)
    return float(out) if scalar else out


def erfc(x):
    """Complementary error function with relative accuracy kept in the upper tail."""
    arr, scalar = _as_array(x)
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    cf = flat >= _ERFC_CF_MIN
    if cf.any():
        xs = flat[cf]
        res = np.zeros_like(xs)
        fin = np.isfinite(xs)
        res[fin] = _erfc_cf(xs[fin])
        out[cf] = res
    rest = ~cf
    if rest.any():
        out[rest] = 1.0 - np.atleast_1d(erf(flat[rest]))
    out = out.reshape(arr.shape)
    return float(out) if scalar else out


def norm_cdf(z):
    """Standard normal CDF via erfc (keeps precision in both tails)."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def norm_sf(z):
    return 0.5 * erfc(np.asarray(z, dtype=float) / math.sqrt(2.0))


# Abramowitz & Stegun 26.2.23 starting values, polished by Halley steps.
_AS_C = (2.515517, 0.802853, 0.010328)
_AS_D = (1.432788, 0.189269, 0.001308)


def norm_ppf(u):
    """Standard normal quantile."""
    arr, scalar = _as_array(u)
    u = np.atleast_1d(arr).astype(float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("norm_ppf needs 0 < u < 1")
    pl = np.minimum(u, 1.0 - u)
    t = np.sqrt(-2.0 * np.log(pl))
    c0, c1, c2 = _AS_C
    d1, d2, d3 = _AS_D
    z = t - (c0 + c1 * t + c2 * t * t) / (1.0 + d1 * t + d2 * t * t + d3 * t**3)
    z = np.where(u < 0.5, -z, z)
    for _ in range(4):
        # work on the smaller tail probability to avoid cancellation
        lower = z < 0
        err = np.where(lower, norm_cdf(z) - u, (1.0 - u) - norm_sf(z))
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        step = err / pdf
        z = z - step / (1.0 + 0.5 * z * step)
    z = z.reshape(arr.shape)
    return float(z) if scalar else z


def _gamma_series(s, x):
    # P(s, x) by its power series; accurate for x < s + 1
    ap = np.full_like(x, s)
    term = np.full_like(x, 1.0 / s)
    total = term.copy()
    for _ in range(_MAXIT):
        ap = ap + 1.0
        term = term * x / ap
        total = total + term
        if np.all(np.abs(term) < np.abs(total) * _EPS):
            break
    return total * np.exp(-x + s * np.log(x) - math.lgamma(s))


def _gamma_cf(s, x):
    # Q(s, x) by modified Lentz; accurate for x >= s + 1
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAXIT + 1):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _EPS):
            break
    return np.exp(-x + s * np.log(x) - math.lgamma(s)) * h


def _inc_gamma_pair(s, x):
    if not s > 0:
        raise DomainError(f"incomplete gamma needs s > 0, got {s}")
    arr, scalar = _as_array(x)
    x = np.atleast_1d(arr).astype(float)
    if np.any(x < 0):
        raise DomainError("incomplete gamma needs x >= 0")
    P = np.zeros_like(x)
    Q = np.ones_like(x)
    inf = np.isinf(x)
    P[inf], Q[inf] = 1.0, 0.0
    pos = (x > 0) & ~inf
    ser = pos & (x < s + 1.0)
    if ser.any():
        P[ser] = _gamma_series(s, x[ser])
        Q[ser] = 1.0 - P[ser]
    cf = pos & ~ser
    if cf.any():
        Q[cf] = _gamma_cf(s, x[cf])
        P[cf] = 1.0 - Q[cf]
    return P.reshape(arr.shape), Q.reshape(arr.shape), scalar


def reg_inc_gamma(s: float, x):
    """Lower regularized incomplete gamma P(s, x)."""
    P, _, scalar = _inc_gamma_pair(s, x)
    return float(P) if scalar else P


def reg_inc_gamma_upper(s: float, x):
    """Upper regularized incomplete gamma Q(s, x) = 1 - P(s, x), tail-accurate."""
    _, Q, scalar = _inc_gamma_pair(s, x)
    return float(Q) if scalar else Q


def log_multinomial_coeff(index: MultiIndex) -> float:
    return math.lgamma(index.total + 1) - math.fsum(math.lgamma(j + 1) for j in index.parts)


def multinomial_coeff(index: MultiIndex):
    """total! / prod(parts!) -- an exact int up to total 20, a float above."""
    if index.total <= 20:
        out = math.factorial(index.total)
        for j in index.parts:
            out //= math.factorial(j)
        return out
    return math.exp(log_multinomial_coeff(index))
