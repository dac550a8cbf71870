import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qcontrib import orderstats as os_
from qcontrib.dists import DistributionSpec, eval_cdf, eval_pdf, eval_quantile
from qcontrib.errors import CapacityError, ContractError, DomainError
from qcontrib.orderstats import RankSet
from qcontrib.streams import RandomStream

EXP = DistributionSpec.of("exp", mu=1)
NORMAL = DistributionSpec.of("normal", mu=1, sigma=0.25)


def test_rankset_validation():
    assert RankSet(5, (2, 4)).k == 2
    for n, ranks in ((0, (1,)), (3, ()), (3, (0, 2)), (3, (2, 4)), (4, (3, 3)), (4, (3, 2))):
        with pytest.raises(DomainError):
            RankSet(n, ranks)


def test_marginal_examples():
    x = 0.7
    assert os_.marginal_cdf(EXP, 6, 6, x) == pytest.approx(eval_cdf(EXP, x) ** 6, rel=1e-13)
    assert os_.marginal_cdf(NORMAL, 1, 2, 1.0) == pytest.approx(0.75, abs=1e-15)
    F = 1 - math.exp(-1)
    oracle = math.fsum(math.comb(7, J) * F**J * (1 - F) ** (7 - J) for J in range(3, 8))
    assert os_.marginal_cdf(EXP, 3, 7, 1.0) == pytest.approx(oracle, abs=1e-14)
    with pytest.raises(DomainError):
        os_.marginal_cdf(EXP, 0, 3, 1.0)
    with pytest.raises(DomainError):
        os_.marginal_pdf(EXP, 4, 3, 1.0)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))), st.floats(0.0, 6.0))
def test_marginal_two_forms(ni, x):
    n, i = ni
    a = os_.marginal_cdf(EXP, i, n, x)
    b = os_.marginal_cdf(EXP, i, n, x, method="binomial")
    assert a == pytest.approx(b, abs=1e-12)


def test_marginal_monotone_in_rank_and_x():
    xs = eval_quantile(NORMAL, np.linspace(0.02, 0.98, 25))
    n = 9
    rows = np.array([os_.marginal_cdf(NORMAL, i, n, xs) for i in range(1, n + 1)])
    assert np.all(np.diff(rows, axis=0) <= 1e-15)
    assert np.all(np.diff(rows, axis=1) >= -1e-15)


def test_marginal_pdf_examples():
    x = np.linspace(0.1, 3, 7)
    assert np.allclose(os_.marginal_pdf(EXP, 1, 1, x), eval_pdf(EXP, x), rtol=1e-14)
    n = 5
    assert np.allclose(os_.marginal_pdf(EXP, n, n, x), n * eval_cdf(EXP, x) ** (n - 1) * eval_pdf(EXP, x), rtol=1e-13)
    mass = integrate.quad(lambda t: os_.marginal_pdf(NORMAL, 2, 5, t), -1, 3, epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_joint_pdf():
    xs = [0.2, 0.5, 1.1]
    full = os_.joint_pdf(EXP, RankSet(3, (1, 2, 3)), xs)
    assert full == pytest.approx(6 * np.prod(eval_pdf(EXP, np.array(xs))), rel=1e-13)
    assert os_.joint_pdf(EXP, RankSet(3, (1, 2, 3)), [0.5, 0.2, 1.1]) == 0.0
    assert os_.joint_pdf(EXP, RankSet(3, (1, 2, 3)), [0.5, 0.5, 1.1]) == 0.0
    for x in (0.3, 0.9, 2.0):
        assert os_.joint_pdf(EXP, RankSet(3, (2,)), [x]) == pytest.approx(os_.marginal_pdf(EXP, 2, 3, x), rel=1e-13)
    with pytest.raises(ContractError):
        os_.joint_pdf(EXP, RankSet(3, (1, 2)), [0.1])


def test_joint_pdf_integrates_to_marginal():
    # integrating the (2,4)-of-5 density over x_2 recovers the marginal density of X_(2)
    rs = RankSet(5, (2, 4))
    x1 = 0.4
    val = integrate.quad(lambda x2: os_.joint_pdf(NORMAL, rs, [x1, x2]) if x2 > x1 else 0.0, x1, 3.0)[0]
    assert val == pytest.approx(os_.marginal_pdf(NORMAL, 2, 5, x1), rel=1e-8)


@pytest.mark.parametrize("n,i", [(1, 1), (5, 1), (5, 3), (12, 12), (30, 17)])
def test_joint_reduces_to_marginal(n, i):
    for x in eval_quantile(NORMAL, np.linspace(0.05, 0.95, 7)):
        assert os_.joint_cdf(NORMAL, RankSet(n, (i,)), [x]) == pytest.approx(
            os_.marginal_cdf(NORMAL, i, n, x), abs=1e-12
        )


def test_joint_examples_and_boundaries():
    med = eval_quantile(NORMAL, 0.5)
    assert os_.joint_cdf(NORMAL, RankSet(2, (1, 2)), [med, med]) == pytest.approx(0.25, abs=1e-15)
    rs = RankSet(6, (2, 3, 5))
    assert os_.joint_cdf(EXP, rs, [math.inf] * 3) == pytest.approx(1.0, abs=1e-14)
    assert os_.joint_cdf(EXP, rs, [-math.inf, 1.0, 2.0]) == 0.0
    with pytest.raises(ContractError):
        os_.joint_cdf(EXP, rs, [1.0, 2.0])


def test_joint_unsorted_thresholds():
    # {X_(1) <= y_1, X_(2) <= y_2} with y_2 < y_1 is just {X_(2) <= y_2}
    hi, lo = eval_quantile(EXP, 0.9), eval_quantile(EXP, 0.5)
    rs = RankSet(2, (1, 2))
    assert os_.joint_cdf(EXP, rs, [hi, lo]) == pytest.approx(0.25, abs=1e-14)
    # sorting the thresholds instead would give 2 * 0.5 * 0.9 - 0.25 = 0.65
    assert os_.joint_cdf(EXP, rs, [lo, hi]) == pytest.approx(0.65, abs=1e-14)
    assert os_.effective_thresholds([3.0, 1.0, 2.0, 5.0]) == [1.0, 1.0, 2.0, 5.0]


def test_joint_capacity():
    with pytest.raises(CapacityError):
        os_.joint_cdf(EXP, RankSet(1000, (100, 300, 500, 700, 900)), [0.1, 0.4, 0.7, 1.2, 2.3])


def test_occupancies_respect_side_condition():
    n, ranks = 7, (2, 4, 6)
    seen = list(os_._occupancies(n, ranks))
    assert len(seen) == len(set(seen))
    for J in seen:
        assert sum(J) <= n
        # at least r_i observations at or below y_i
        for i, r in enumerate(ranks):
            assert n - sum(J[i:]) >= r


def test_mc_joint_cdf_trivial():
    rs = RankSet(4, (1, 3))
    est, se = os_.mc_joint_cdf(EXP, rs, [math.inf, math.inf], 5000, RandomStream(1))
    assert (est, se) == (1.0, 0.0)
    med = eval_quantile(EXP, 0.5)
    est, se = os_.mc_joint_cdf(EXP, RankSet(2, (2,)), [med], 200_000, RandomStream(2))
    assert abs(est - 0.25) < 4 * se
    with pytest.raises(DomainError):
        os_.mc_joint_cdf(EXP, rs, [1, 2], 0, RandomStream(1))


def test_mc_joint_cdf_deterministic():
    rs = RankSet(5, (2, 4))
    a = os_.mc_joint_cdf(NORMAL, rs, [0.9, 1.2], 70_000, RandomStream(9))
    b = os_.mc_joint_cdf(NORMAL, rs, [0.9, 1.2], 70_000, RandomStream(9))
    assert a == b


@settings(max_examples=8, deadline=None)
@given(
    st.sampled_from([EXP, NORMAL]),
    st.integers(2, 6).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.integers(1, n), min_size=1, max_size=min(3, n)))),
    st.lists(st.floats(0.15, 0.85), min_size=3, max_size=3),
    st.integers(0, 2**32),
)
def test_joint_cdf_vs_simulation(spec, n_ranks, us, seed):
    n, ranks = n_ranks
    rs = RankSet(n, tuple(sorted(ranks)))
    ys = list(eval_quantile(spec, np.array(us[: rs.k])))
    exact = os_.joint_cdf(spec, rs, ys)
    est, se = os_.mc_joint_cdf(spec, rs, ys, 200_000, RandomStream(seed))
    assert abs(exact - est) <= 4 * se + 1e-3 * (se == 0)
