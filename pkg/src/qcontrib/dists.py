"""The six sample-distribution families and their tail functionals.

Every evaluation function is vectorized over ``x`` / ``u`` and returns a
float for scalar input. The array paths call scipy.special because the
exact-CDF quadrature evaluates them tens of millions of times; the scalar
closed forms for tail moments go through ``specfun``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy import special as _sp

from . import specfun
from .errors import DomainError, UsageError
from .streams import as_generator

SQRT2PI = math.sqrt(2.0 * math.pi)

# canonical family name -> (ordered parameter names, display label)
FAMILIES = {
    "normal": (("mu", "sigma"), "Normal"),
    "lognormal": (("mu", "sigma"), "LogNormal"),
    "exponential": (("mu",), "Exponential"),
    "rayleigh": (("b",), "Rayleigh"),
    "gpd": (("k", "s", "theta"), "Generalized Pareto"),
    "gamma": (("alpha", "theta"), "Gamma"),
}

ALIASES = {
    "normal": "normal",
    "norm": "normal",
    "gaussian": "normal",
    "lognormal": "lognormal",
    "lognorm": "lognormal",
    "exp": "exponential",
    "exponential": "exponential",
    "rayleigh": "rayleigh",
    "raileigh": "rayleigh",
    "gpd": "gpd",
    "genpareto": "gpd",
    "generalizedpareto": "gpd",
    "gamma": "gamma",
}


@dataclass(frozen=True)
class DistributionSpec:
    """An immutable (family, parameters) pair.

    ``params`` is stored as a tuple in the family's canonical order; use
    :meth:`param` or the keyword constructor :meth:`of` rather than indexing.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        names = FAMILIES[self.family][0]
        params = tuple(float(v) for v in self.params)
        if len(params) != len(names):
            raise DomainError(f"{self.family} takes parameters {names}, got {params}")
        object.__setattr__(self, "params", params)
        if not all(math.isfinite(v) for v in params):
            raise DomainError(f"non-finite parameter in {self}")
        for name in _POSITIVE[self.family]:
            if not self.param(name) > 0:
                raise DomainError(f"{self.family} needs {name} > 0, got {self.param(name)}")

    @classmethod
    def of(cls, family: str, **kwargs) -> "DistributionSpec":
        family = ALIASES.get(family.lower(), family.lower())
        if family not in FAMILIES:
            raise DomainError(f"unknown family {family!r}")
        names = FAMILIES[family][0]
        missing = [n for n in names if n not in kwargs]
        extra = [k for k in kwargs if k not in names]
        if missing or extra:
            raise DomainError(f"{family} takes {names}; missing {missing}, unexpected {extra}")
        return cls(family, tuple(kwargs[n] for n in names))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``"<family> key=value ..."``, e.g. ``"gpd k=0.25 s=0.25 theta=1"``."""
        tokens = text.split()
        if not tokens:
            raise UsageError("empty distribution spec")
        kwargs = {}
        for tok in tokens[1:]:
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise UsageError(f"malformed parameter {tok!r} in distribution spec {text!r}")
            try:
                kwargs[key.lower()] = float(value)
            except ValueError:
                raise UsageError(f"non-numeric value in {tok!r}") from None
        try:
            return cls.of(tokens[0], **kwargs)
        except DomainError as exc:
            raise UsageError(f"bad distribution spec {text!r}: {exc}") from None

    def param(self, name: str) -> float:
        return self.params[FAMILIES[self.family][0].index(name)]

    @property
    def label(self) -> str:
        return FAMILIES[self.family][1]

    def __str__(self):
        names = FAMILIES[self.family][0]
        return self.family + "".join(f" {n}={v:g}" for n, v in zip(names, self.params))

    def support(self) -> tuple[float, float]:
        f = self.family
        if f == "normal":
            return -math.inf, math.inf
        if f == "gpd":
            k, s, theta = self.params
            return theta, (theta - s / k if k < 0 else math.inf)
        return 0.0, math.inf


_POSITIVE = {
    "normal": ("sigma",),
    "lognormal": ("sigma",),
    "exponential": ("mu",),
    "rayleigh": ("b",),
    "gpd": ("s",),
    "gamma": ("alpha", "theta"),
}


# reference parameterization: mu = theta = 1, sigma = k = b = s = 0.25, alpha = 3
PAPER_SPECS = (
    DistributionSpec("normal", (1.0, 0.25)),
    DistributionSpec("lognormal", (1.0, 0.25)),
    DistributionSpec("exponential", (1.0,)),
    DistributionSpec("rayleigh", (0.25,)),
    DistributionSpec("gpd", (0.25, 0.25, 1.0)),
    DistributionSpec("gamma", (3.0, 1.0)),
)


def _vec(fn):
    def wrapper(spec, x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            out = fn(spec, np.atleast_1d(arr))
        out = np.asarray(out, dtype=float).reshape(arr.shape)
        return float(out) if arr.ndim == 0 else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_vec
def eval_cdf(spec: DistributionSpec, x):
    """F(x)."""
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        return _sp.ndtr((x - mu) / sigma)
    if f == "lognormal":
        mu, sigma = spec.params
        pos = x > 0
        z = np.where(pos, (np.log(np.where(pos, x, 1.0)) - mu) / sigma, -np.inf)
        return np.where(pos, _sp.ndtr(z), 0.0)
    if f == "exponential":
        (mu,) = spec.params
        return np.where(x > 0, -np.expm1(-x / mu), 0.0)
    if f == "rayleigh":
        (b,) = spec.params
        return np.where(x > 0, -np.expm1(-(x * x) / (2 * b * b)), 0.0)
    if f == "gpd":
        k, s, theta = spec.params
        z = np.maximum((x - theta) / s, 0.0)
        if k == 0:
            out = -np.expm1(-z)
        else:
            base = 1.0 + k * z
            out = np.where(base > 0, -np.expm1(-np.log1p(k * z) / k), 1.0)
        return np.where(x > theta, out, 0.0)
    if f == "gamma":
        alpha, theta = spec.params
        return _sp.gammainc(alpha, np.maximum(x, 0.0) / theta)
    raise AssertionError(f)


@_vec
def eval_sf(spec: DistributionSpec, x):
    """1 - F(x), computed directly where the family allows it."""
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        return _sp.ndtr((mu - x) / sigma)
    if f == "gamma":
        alpha, theta = spec.params
        return _sp.gammaincc(alpha, np.maximum(x, 0.0) / theta)
    if f == "exponential":
        (mu,) = spec.params
        return np.where(x > 0, np.exp(-x / mu), 1.0)
    return 1.0 - eval_cdf(spec, x)


@_vec
def eval_pdf(spec: DistributionSpec, x):
    """f(x); zero outside the support."""
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        z = (x - mu) / sigma
        return np.exp(-0.5 * z * z) / (sigma * SQRT2PI)
    if f == "lognormal":
        mu, sigma = spec.params
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        z = (np.log(xs) - mu) / sigma
        return np.where(pos, np.exp(-0.5 * z * z) / (xs * sigma * SQRT2PI), 0.0)
    if f == "exponential":
        (mu,) = spec.params
        return np.where(x >= 0, np.exp(-x / mu) / mu, 0.0)
    if f == "rayleigh":
        (b,) = spec.params
        return np.where(x >= 0, x / (b * b) * np.exp(-(x * x) / (2 * b * b)), 0.0)
    if f == "gpd":
        k, s, theta = spec.params
        z = (x - theta) / s
        if k == 0:
            dens = np.exp(-z) / s
        else:
            base = 1.0 + k * z
            dens = np.where(base > 0, np.exp((-1.0 / k - 1.0) * np.log1p(k * z)) / s, 0.0)
        return np.where(x >= theta, dens, 0.0)
    if f == "gamma":
        alpha, theta = spec.params
        pos = x > 0
        xs = np.where(pos, x / theta, 1.0)
        logd = (alpha - 1) * np.log(xs) - xs - math.lgamma(alpha) - math.log(theta)
        dens = np.where(pos, np.exp(logd), 0.0)
        if alpha == 1:
            dens = np.where(x == 0, 1.0 / theta, dens)
        return dens
    raise AssertionError(f)


@_vec
def eval_quantile(spec: DistributionSpec, u):
    """F^{-1}(u) for 0 < u < 1."""
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("eval_quantile needs 0 < u < 1")
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        return mu + sigma * _sp.ndtri(u)
    if f == "lognormal":
        mu, sigma = spec.params
        return np.exp(mu + sigma * _sp.ndtri(u))
    if f == "exponential":
        (mu,) = spec.params
        return -mu * np.log1p(-u)
    if f == "rayleigh":
        (b,) = spec.params
        return b * np.sqrt(-2.0 * np.log1p(-u))
    if f == "gpd":
        k, s, theta = spec.params
        if k == 0:
            return theta - s * np.log1p(-u)
        return theta + s / k * np.expm1(-k * np.log1p(-u))
    if f == "gamma":
        alpha, theta = spec.params
        return theta * _sp.gammaincinv(alpha, u)
    raise AssertionError(f)


def sample(spec: DistributionSpec, count: int, stream) -> np.ndarray:
    """``count`` i.i.d. draws; ``stream`` is a RandomStream or a numpy Generator."""
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count}")
    gen = as_generator(stream)
    f = spec.family
    if f in ("exponential", "rayleigh", "gpd"):
        return eval_quantile(spec, _open_uniform(gen, count)) if count else np.empty(0)
    if f == "normal":
        mu, sigma = spec.params
        return mu + sigma * gen.standard_normal(count)
    if f == "lognormal":
        mu, sigma = spec.params
        return np.exp(mu + sigma * gen.standard_normal(count))
    if f == "gamma":
        alpha, theta = spec.params
        return theta * gen.standard_gamma(alpha, count)
    raise AssertionError(f)


def _open_uniform(gen, count):
    # gen.random is on [0, 1); shift to (0, 1) for the quantile transform
    u = gen.random(count)
    return np.where(u == 0.0, 0.5 / 2**53, u)


def moments(spec: DistributionSpec) -> tuple[float, float]:
    """(mean, variance) in closed form."""
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        return mu, sigma**2
    if f == "lognormal":
        mu, sigma = spec.params
        s2 = sigma**2
        return math.exp(mu + s2 / 2), math.expm1(s2) * math.exp(2 * mu + s2)
    if f == "exponential":
        (mu,) = spec.params
        return mu, mu**2
    if f == "rayleigh":
        (b,) = spec.params
        return b * math.sqrt(math.pi / 2), (2 - math.pi / 2) * b * b
    if f == "gpd":
        k, s, theta = spec.params
        if k >= 0.5:
            raise DomainError(f"generalized Pareto with k={k} >= 1/2 has infinite variance")
        return theta + s / (1 - k), s * s / ((1 - k) ** 2 * (1 - 2 * k))
    if f == "gamma":
        alpha, theta = spec.params
        return alpha * theta, alpha * theta**2
    raise AssertionError(f)


@dataclass(frozen=True)
class TailMoments:
    """Tail functionals at the p-th quantile ``q_p``.

    ``a = E[X 1{X >= q_p}]``, ``a2 = E[X^2 1{X >= q_p}]``, ``b2 = a2 - a^2``,
    ``a_tilde = mu - a``; the ``_plus``/``_minus`` fields are the mean and
    variance of ``X^+ 1{X >= q_p}`` and ``X^- 1{X >= q_p}``.
    """

    p: float
    q_p: float
    mu: float
    sigma2: float
    a: float
    a_tilde: float
    a2: float
    b2: float
    a_plus: float
    a_minus: float
    b2_plus: float
    b2_minus: float


def _upper_partial_closed(spec: DistributionSpec, j: int, x: float):
    """E[X^j 1{X >= x}] for j in (1, 2), or None when no closed form is coded."""
    f = spec.family
    if f == "normal":
        mu, sigma = spec.params
        if x == -math.inf:
            return mu if j == 1 else mu * mu + sigma * sigma
        z = (x - mu) / sigma
        S = specfun.norm_sf(z)
        phi = math.exp(-0.5 * z * z) / SQRT2PI
        if j == 1:
            return mu * S + sigma * phi
        return (mu * mu + sigma * sigma) * S + sigma * phi * (mu + x)
    if f == "lognormal":
        mu, sigma = spec.params
        full = math.exp(j * mu + 0.5 * j * j * sigma * sigma)
        if x <= 0:
            return full
        return full * specfun.norm_sf((math.log(x) - mu - j * sigma * sigma) / sigma)
    if f == "exponential":
        (m,) = spec.params
        x = max(x, 0.0)
        e = math.exp(-x / m)
        return (x + m) * e if j == 1 else (x * x + 2 * m * x + 2 * m * m) * e
    if f == "rayleigh":
        (b,) = spec.params
        x = max(x, 0.0)
        e = math.exp(-x * x / (2 * b * b))
        if j == 1:
            return x * e + b * SQRT2PI * specfun.norm_sf(x / b)
        return (x * x + 2 * b * b) * e
    if f == "gamma":
        alpha, theta = spec.params
        scale = theta**j * math.exp(math.lgamma(alpha + j) - math.lgamma(alpha))
        return scale * specfun.reg_inc_gamma_upper(alpha + j, max(x, 0.0) / theta)
    return None


def _upper_partial_quad(spec: DistributionSpec, j: int, x: float, split: float | None = None) -> float:
    lo_s, hi_s = spec.support()
    lo = max(x, lo_s)
    if lo >= hi_s:
        return 0.0
    pieces = [lo, hi_s]
    if split is not None and lo < split < hi_s:
        pieces = [lo, split, hi_s]
    total = []
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(lambda t: t**j * eval_pdf(spec, t), a, b, epsabs=1e-13, epsrel=1e-10, limit=500)
        total.append(val)
    return math.fsum(total)


def upper_partial_moment(spec: DistributionSpec, j: int, x: float, method: str = "auto") -> float:
    """E[X^j 1{X >= x}]; closed form when available, adaptive quadrature otherwise."""
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        val = _upper_partial_closed(spec, j, x)
        if val is not None:
            return float(val)
    return _upper_partial_quad(spec, j, x, split=0.0)


def tail_moments(spec: DistributionSpec, p: float, method: str = "auto") -> TailMoments:
    """All tail functionals at the p-th quantile.

    The X^+ / X^- parts are obtained by splitting the tail at max(q_p, 0).
    """
    if not (0 < p < 1):
        raise DomainError(f"tail_moments needs 0 < p < 1, got {p}")
    mu, sigma2 = moments(spec)
    q = float(eval_quantile(spec, p))
    M = lambda j, x: upper_partial_moment(spec, j, x, method)  # noqa: E731
    a = M(1, q)
    a2 = M(2, q)
    cut = max(q, 0.0)
    a_plus = M(1, cut)
    sq_plus = M(2, cut)
    if q < 0:
        a_minus = -(a - a_plus)
        sq_minus = a2 - sq_plus
    else:
        a_minus = 0.0
        sq_minus = 0.0
    return TailMoments(
        p=p,
        q_p=q,
        mu=mu,
        sigma2=sigma2,
        a=a,
        a_tilde=mu - a,
        a2=a2,
        b2=a2 - a * a,
        a_plus=a_plus,
        a_minus=a_minus,
        b2_plus=sq_plus - a_plus * a_plus,
        b2_minus=sq_minus - a_minus * a_minus,
    )
