import numpy as np
import pytest
from scipy import stats

from bounce import acquisition as acq
from bounce.space import Kind
from bounce.surrogate import GaussianProcess, Hyperparameters, KernelLayout, TrainingSet

KINDS = ["binary"] * 4 + ["categorical"] * 2 + ["continuous"] * 2
CARDS = [2] * 4 + [3] * 2 + [0] * 2


def random_points(kinds, cards, n, rng):
    X = np.empty((n, len(kinds)))
    for j, (k, c) in enumerate(zip(kinds, cards)):
        if k == "continuous":
            X[:, j] = rng.uniform(-1, 1, n)
        elif k == "binary":
            X[:, j] = rng.choice([-1.0, 1.0], n)
        else:
            X[:, j] = rng.integers(1, c + 1, n)
    return X


def make_ctx(seed=0, kinds=KINDS, cards=CARDS, n=12, batch_size=1, mc_samples=128, **kw):
    rng = np.random.default_rng(seed)
    layout = KernelLayout.from_kinds(kinds, cards)
    X = random_points(kinds, cards, n, rng)
    y = rng.normal(size=n)
    n_cont = int(layout.continuous.sum())
    hp = Hyperparameters(1.0, np.full(max(n_cont, 1), 0.6), 1.0, 1e-4, rho=0.5 if layout.mixed else 1.0)
    gp = GaussianProcess(TrainingSet(X, y), hp, layout)
    i = int(np.argmin(y))
    return acq.AcquisitionContext(
        model=gp, kinds=kinds, cardinalities=cards, center=X[i], incumbent=float(gp.ts.y[i]),
        batch_size=batch_size, mc_samples=mc_samples, rng=np.random.default_rng(seed + 1), observed=X, **kw)


class TestEI:
    def test_closed_form(self):
        # incumbent 0, mean 0, std 1: EI = phi(0)
        np.testing.assert_allclose(acq._ei_from_moments([0.0], [1.0], 0.0), [stats.norm.pdf(0)])

    def test_zero_std_limit(self):
        np.testing.assert_allclose(acq._ei_from_moments([-1.0, 1.0], [0.0, 0.0], 0.0), [1.0, 0.0])

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(0)
        f = 0.3 + 0.7 * rng.standard_normal(2_000_000)
        mc = np.maximum(0.5 - f, 0).mean()
        assert acq._ei_from_moments([0.3], [0.7], 0.5)[0] == pytest.approx(mc, rel=2e-3)

    def test_gradient_matches_finite_differences(self):
        ctx = make_ctx(1)
        x = ctx.center.copy()
        x[6:] = [0.2, -0.3]
        _, g = acq.ei_with_grad(ctx, x)
        for i, j in enumerate((6, 7)):
            e = np.zeros_like(x)
            e[j] = 1e-6
            fd = (acq.ei(ctx, x + e)[0] - acq.ei(ctx, x - e)[0]) / 2e-6
            assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def improvement_stderr(ctx, x, n):
    """Exact standard error of an n-sample mean of (incumbent - f)+."""
    mean, var = ctx.model.predict(x)
    m, s = mean[0], np.sqrt(var[0])
    d = ctx.incumbent - m
    z = d / s
    first = d * stats.norm.cdf(z) + s * stats.norm.pdf(z)
    second = (d * d + s * s) * stats.norm.cdf(z) + d * s * stats.norm.pdf(z)
    return np.sqrt(max(second - first**2, 0.0) / n)


class TestQEI:
    def test_single_point_matches_analytic_ei(self):
        rng = np.random.default_rng(2)
        for k in range(100):
            ctx = make_ctx(k, mc_samples=512)
            x = random_points(KINDS, CARDS, 1, rng)
            value = acq.qei(ctx, x)
            assert abs(value - acq.ei(ctx, x)[0]) <= 3 * improvement_stderr(ctx, x, 512) + 1e-12

    def test_duplicated_point_equals_singleton(self):
        rng = np.random.default_rng(3)
        for k in range(20):
            ctx = make_ctx(k, batch_size=2, mc_samples=512)
            x = random_points(KINDS, CARDS, 1, rng)
            single, se = acq.qei(ctx, x, return_se=True)
            double = acq.qei(ctx, np.vstack([x, x]))
            assert abs(double - single) <= 3 * se + 1e-6

    def test_batch_at_least_best_single(self):
        ctx = make_ctx(4, batch_size=3, mc_samples=256)
        X = random_points(KINDS, CARDS, 3, np.random.default_rng(0))
        assert acq.qei(ctx, X) >= max(acq.qei(ctx, X[i : i + 1]) for i in range(3)) - 1e-12

    def test_gradient_matches_finite_differences(self):
        ctx = make_ctx(5, batch_size=3)
        X = random_points(KINDS, CARDS, 3, np.random.default_rng(1))
        _, g = acq.qei_with_grad(ctx, X)
        for a in range(3):
            for i, j in enumerate((6, 7)):
                E = np.zeros_like(X)
                E[a, j] = 1e-6
                fd = (acq.qei(ctx, X + E) - acq.qei(ctx, X - E)) / 2e-6
                assert g[a, i] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_score_equals_joint_qei(self):
        ctx = make_ctx(6, batch_size=2)
        rng = np.random.default_rng(2)
        fixed = random_points(KINDS, CARDS, 1, rng)
        cands = random_points(KINDS, CARDS, 5, rng)
        s = acq.score(ctx, cands, fixed)
        joint = [acq.qei(ctx, np.vstack([fixed, c])) for c in cands]
        np.testing.assert_allclose(s, joint, rtol=1e-8, atol=1e-12)


class TestTrustRegion:
    def test_box_scaled_by_lengthscales(self):
        ctx = make_ctx(7)
        ctx.model.hp = Hyperparameters(1.0, [0.5, 2.0], 1.0, 1e-4, rho=0.5)
        ctx.center = np.r_[ctx.center[:6], 0.0, 0.0]
        ctx.L_cont = 0.4
        lb, ub = ctx.box()
        # weights ell / geomean(ell) = (0.5, 2)
        np.testing.assert_allclose(ub - lb, [0.4, 1.6])

    def test_neighbors(self):
        kinds = ["binary", "categorical", "ordinal"]
        ctx = make_ctx(8, kinds=kinds, cards=[2, 4, 3], n=5)
        nb = acq.neighbors(ctx, np.array([1.0, 2.0, 1.0]))
        # 1 flip + 3 labels + 1 ordinal step
        assert len(nb) == 5
        assert all(acq.hamming(nb, np.array([1.0, 2.0, 1.0]), np.ones(3, bool)) == 1)

    def test_pool_respects_radius(self):
        ctx = make_ctx(9, L_comb=2)
        pool = acq.sample_pool(ctx, 500)
        assert len(pool) > 0
        assert acq.hamming(pool, ctx.center, ctx.combinatorial).max() <= 2
        lb, ub = ctx.box()
        assert np.all(pool[:, 6:] >= lb) and np.all(pool[:, 6:] <= ub)

    def test_radius_rounds_half_to_even(self):
        assert make_ctx(0, L_comb=2.5).radius == 2
        assert make_ctx(0, L_comb=3.5).radius == 4


class TestOptimizers:
    def test_hill_climb_reaches_local_maximum(self):
        ctx = make_ctx(10, kinds=["binary"] * 6, cards=[2] * 6, L_comb=6)
        start = ctx.center.copy()
        x, v = acq.hill_climb(ctx, start, acq.score(ctx, start[None])[0])
        nb = acq._feasible_neighbors(ctx, x)
        assert np.all(acq.score(ctx, nb) <= v + 1e-15)

    def test_local_search_beats_random_pool(self):
        ctx = make_ctx(11, kinds=["binary"] * 10, cards=[2] * 10, L_comb=10, n=20)
        x, v = acq.local_search(ctx, n_pool=300)
        pool = acq.sample_pool(ctx, 300)
        assert v >= acq.score(ctx, pool).max() - 1e-12

    def test_exhaustive_oracle_on_small_space(self):
        ctx = make_ctx(12, kinds=["binary"] * 8, cards=[2] * 8, L_comb=8, n=10)
        grid = np.array(np.meshgrid(*[[-1.0, 1.0]] * 8)).reshape(8, -1).T
        values = acq.score(ctx, grid)
        fresh = ~acq._is_observed(ctx, grid, None)
        x, v = acq.local_search(ctx, n_pool=256)
        assert v == pytest.approx(values[fresh].max())

    def test_fresh_point_preferred(self):
        ctx = make_ctx(13, kinds=["binary"] * 3, cards=[2] * 3, L_comb=1, n=8)
        for _ in range(3):
            x, _ = acq.local_search(ctx, n_pool=50)
            assert not acq._is_observed(ctx, x[None], None)[0]
            ctx.observed = np.vstack([ctx.observed, x])

    def test_interleaving_is_monotone(self):
        ctx = make_ctx(14)
        trace = []
        acq.optimize_mixed(ctx, n_pool=200, trace=trace)
        assert trace
        for history in trace:
            assert np.all(np.diff(history) >= -1e-12)

    def test_continuous_optimum_inside_box(self):
        kinds, cards = ["continuous"] * 3, [0] * 3
        ctx = make_ctx(15, kinds=kinds, cards=cards, L_cont=0.3)
        X = acq.optimize_continuous(ctx)
        lb, ub = ctx.box()
        assert np.all(X >= lb - 1e-12) and np.all(X <= ub + 1e-12)
        rand = acq._uniform_in_box(np.random.default_rng(0), lb, ub, 256)
        assert acq.ei(ctx, X)[0] >= acq.ei(ctx, rand).max() - 1e-9

    def test_maximize_batch_shape_and_validity(self):
        ctx = make_ctx(16, batch_size=3, L_comb=3)
        batch = acq.maximize(ctx)
        assert batch.shape == (3, 8)
        assert acq.hamming(batch, ctx.center, ctx.combinatorial).max() <= 3
        assert set(np.unique(batch[:, :4])) <= {-1.0, 1.0}
        assert len({tuple(b) for b in batch}) == 3

    def test_kinds_coerced(self):
        assert make_ctx(0).kinds[0] is Kind.BINARY


class TestProperties:
    def test_ei_nonnegative_and_increasing_in_std(self):
        std = np.linspace(0.01, 3, 50)
        for mean in (-0.5, 0.0, 0.4):
            values = acq._ei_from_moments(np.full(50, mean), std, 0.5)
            assert np.all(values >= 0)
            assert np.all(np.diff(values) >= 0) and values[-1] > values[0]

    def test_qei_monotone_when_appending(self):
        rng = np.random.default_rng(20)
        for k in range(20):
            ctx = make_ctx(k, batch_size=4)
            X = random_points(KINDS, CARDS, 4, rng)
            values = [acq.qei(ctx, X[: i + 1]) for i in range(4)]
            assert np.all(np.diff(values) >= -1e-12)

    def test_zero_radius_returns_incumbent(self):
        ctx = make_ctx(21, kinds=["binary"] * 5, cards=[2] * 5, L_comb=0.3, n=6)
        ctx.observed = None
        x, _ = acq.local_search(ctx, n_pool=100)
        np.testing.assert_array_equal(x, ctx.center)

    def test_search_dominates_pool(self):
        ctx = make_ctx(22, kinds=["binary"] * 8 + ["categorical"] * 2, cards=[2] * 8 + [4] * 2, L_comb=4, n=15)
        ctx.observed = None
        x, v = acq.local_search(ctx, n_pool=400)
        ctx2 = make_ctx(22, kinds=["binary"] * 8 + ["categorical"] * 2, cards=[2] * 8 + [4] * 2, L_comb=4, n=15)
        pool = acq.sample_pool(ctx2, 400)
        assert v >= acq.score(ctx, pool).max() - 1e-12

    def test_mixed_output_respects_both_regions(self):
        for k in range(30):
            ctx = make_ctx(100 + k, L_comb=float(k % 4), L_cont=0.1 + 0.05 * (k % 5))
            ctx.observed = None
            x, _ = acq.optimize_mixed(ctx, n_pool=100)
            lb, ub = ctx.box()
            assert acq.hamming(x[None], ctx.center, ctx.combinatorial)[0] <= ctx.radius
            assert np.all(x[6:] >= lb - 1e-12) and np.all(x[6:] <= ub + 1e-12)
