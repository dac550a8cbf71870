"""Marginal and joint laws of order statistics of an i.i.d. sample."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .dists import DistributionSpec, eval_cdf, eval_pdf, eval_sf, sample
from .errors import CapacityError, ContractError, DomainError
from .specfun import MultiIndex

# largest number of occupancy vectors joint_cdf will enumerate
ENUMERATION_BUDGET = 10_000_000
_MC_BLOCK = 1 << 16


@dataclass(frozen=True)
class RankSet:
    n: int
    ranks: tuple[int, ...]

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        if self.n < 1:
            raise DomainError(f"sample size must be positive, got {self.n}")
        if not 1 <= len(ranks) <= self.n:
            raise DomainError(f"need 1..{self.n} ranks, got {len(ranks)}")
        if ranks[0] < 1 or ranks[-1] > self.n:
            raise DomainError(f"ranks {ranks} outside 1..{self.n}")
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise DomainError(f"ranks must be strictly increasing, got {ranks}")

    @property
    def k(self) -> int:
        return len(self.ranks)


def _check_rank(i, n):
    if not (1 <= i <= n):
        raise DomainError(f"rank {i} outside 1..{n}")


def _binomial_tail(F: float, i: int, n: int) -> float:
    return math.fsum(math.comb(n, J) * F**J * (1.0 - F) ** (n - J) for J in range(i, n + 1))


def marginal_cdf(spec: DistributionSpec, i: int, n: int, x, method: str = "beta"):
    """P[X_(i) <= x] for a sample of size n.

    ``method="beta"`` uses I(F(x); i, n-i+1); ``method="binomial"`` sums
    C(n, J) F^J (1-F)^(n-J) over J = i..n.
    """
    _check_rank(i, n)
    if method == "beta":
        one = lambda F: specfun.reg_inc_beta(F, i, n - i + 1)  # noqa: E731
    elif method == "binomial":
        one = lambda F: _binomial_tail(F, i, n)  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")
    F = np.asarray(eval_cdf(spec, x), dtype=float)
    out = np.array([one(float(v)) for v in F.ravel()]).reshape(F.shape)
    return float(out) if out.ndim == 0 else out


def marginal_pdf(spec: DistributionSpec, i: int, n: int, x):
    """Density of X_(i): f F^(i-1) (1-F)^(n-i) / B(i, n-i+1)."""
    _check_rank(i, n)
    F = np.asarray(eval_cdf(spec, x), dtype=float)
    S = np.asarray(eval_sf(spec, x), dtype=float)
    f = np.asarray(eval_pdf(spec, x), dtype=float)
    out = f * F ** (i - 1) * S ** (n - i) * math.exp(-specfun.log_beta(i, n - i + 1))
    return float(out) if out.ndim == 0 else out


def joint_pdf(spec: DistributionSpec, rankset: RankSet, xs) -> float:
    """Joint density of (X_(r_1), ..., X_(r_k)); zero unless xs is strictly increasing."""
    xs = [float(v) for v in xs]
    if len(xs) != rankset.k:
        raise ContractError(f"{rankset.k} ranks but {len(xs)} points")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        return 0.0
    n = rankset.n
    r = (0,) + rankset.ranks + (n + 1,)
    F = [0.0] + [float(eval_cdf(spec, v)) for v in xs] + [1.0]
    dens = [float(eval_pdf(spec, v)) for v in xs]
    if any(d <= 0 for d in dens):
        return 0.0
    logv = math.lgamma(n + 1) + sum(math.log(d) for d in dens)
    for i in range(1, rankset.k + 2):
        gap = r[i] - r[i - 1] - 1
        dF = F[i] - F[i - 1]
        if gap == 0:
            continue
        if dF <= 0:
            return 0.0
        logv += gap * math.log(dF) - math.lgamma(gap + 1)
    return math.exp(logv)


def _occupancies(n: int, ranks: tuple[int, ...]):
    """Yield (J_1, ..., J_k): counts in the gaps above y_1..y_k, outermost J_k first.

    The bounds J_i <= n - r_i - (J_{i+1} + ... + J_k) encode r_i <= #{X <= y_i}.
    """
    k = len(ranks)
    J = [0] * k

    def rec(level, used):
        if level < 0:
            yield tuple(J)
            return
        for j in range(0, n - ranks[level] - used + 1):
            J[level] = j
            yield from rec(level - 1, used + j)

    yield from rec(k - 1, 0)


def effective_thresholds(ys) -> list[float]:
    """Replace y_i by min(y_i, ..., y_k).

    X_(r_i) <= X_(r_j) for i < j, so the event {X_(r_j) <= y_j} already forces
    X_(r_i) <= y_j; the tightened thresholds are nondecreasing and give the
    same event.
    """
    out = list(ys)
    for i in range(len(out) - 2, -1, -1):
        out[i] = min(out[i], out[i + 1])
    return out


def joint_cdf(spec: DistributionSpec, rankset: RankSet, ys) -> float:
    """P[X_(r_1) <= y_1, ..., X_(r_k) <= y_k] by the multinomial occupancy sum."""
    ys = [float(v) for v in ys]
    if len(ys) != rankset.k:
        raise ContractError(f"{rankset.k} ranks but {len(ys)} thresholds")
    n, k = rankset.n, rankset.k
    if math.comb(n + k, k) > ENUMERATION_BUDGET:
        raise CapacityError(
            f"joint_cdf would enumerate up to C({n + k}, {k}) terms; use mc_joint_cdf instead"
        )
    ys = effective_thresholds(ys)
    F = [0.0] + [float(eval_cdf(spec, v)) for v in ys] + [1.0]
    dF = [max(F[i + 1] - F[i], 0.0) for i in range(k + 1)]
    logdF = [math.log(d) if d > 0 else -math.inf for d in dF]
    terms = []
    for J in _occupancies(n, rankset.ranks):
        J0 = n - sum(J)
        index = MultiIndex((J0,) + J, n)
        logt = specfun.log_multinomial_coeff(index)
        for j, ld in zip(index.parts, logdF):
            if j:
                logt += j * ld
        if logt > -math.inf:
            terms.append(math.exp(logt))
    return min(math.fsum(terms), 1.0)


def mc_joint_cdf(spec: DistributionSpec, rankset: RankSet, ys, reps: int, stream) -> tuple[float, float]:
    """Monte Carlo frequency of the joint event, with its binomial standard error.

    Replications are drawn in fixed blocks of 65536, block ``b`` from
    ``stream.generator(block=b)``.
    """
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    ys = np.asarray([float(v) for v in ys])
    if ys.size != rankset.k:
        raise ContractError(f"{rankset.k} ranks but {ys.size} thresholds")
    idx = np.asarray(rankset.ranks) - 1
    hits = 0
    done = 0
    block = 0
    while done < reps:
        size = min(_MC_BLOCK, reps - done)
        x = sample(spec, size * rankset.n, stream.generator(block)).reshape(size, rankset.n)
        x.sort(axis=1)
        hits += int(np.all(x[:, idx] <= ys, axis=1).sum())
        done += size
        block += 1
    est = hits / reps
    return est, math.sqrt(est * (1.0 - est) / reps)
