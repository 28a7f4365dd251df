import math

import numpy as np
import pytest

from bounce.optimizer import (
    L_INIT_CONT,
    L_MAX_CONT,
    L_MIN_COMB,
    L_MIN_CONT,
    Bounce,
    BounceConfig,
    TrustRegionState,
    is_success,
    legacy_k,
    legacy_tolerance,
    legacy_tr_update,
    success_threshold,
    update_tr,
)
from bounce.space import InputSpace, VariableSpec


def random_acquisition(monkeypatch):
    """Replace model-based acquisition by uniform sampling inside the trust region."""

    def fake(self):
        center = self.targets[int(np.argmin(self.values))]
        return self._random_in_tr(center, self.config.batch_size)

    monkeypatch.setattr(Bounce, "_acquire", fake)


class Increasing:
    """Adversarial objective: every evaluation is worse than all before it."""

    def __init__(self):
        self.n = 0

    def __call__(self, x):
        self.n += 1
        return float(self.n)


class TestSuccess:
    def test_threshold(self):
        assert success_threshold(0.5) == 1e-3
        assert success_threshold(-200.0) == pytest.approx(0.2)

    def test_is_success(self):
        assert is_success([0.998, 2.0], 1.0)
        assert not is_success([0.9995], 1.0)
        with pytest.raises(ValueError):
            is_success([], 1.0)


class TestUpdateTR:
    def test_failures_reach_minimum_exactly_on_last_batch(self):
        for m_i, B in [(10, 1), (10, 3), (47, 5), (7, 7), (1, 1)]:
            tr = TrustRegionState.initial(20)
            n_batches = math.ceil(m_i / B)
            for j in range(n_batches):
                assert tr.L_comb > L_MIN_COMB
                tr = update_tr(tr, False, m_i, j, B)
            assert tr.L_comb == pytest.approx(L_MIN_COMB, rel=1e-6)
            assert tr.L_cont == pytest.approx(L_MIN_CONT, rel=1e-6)

    def test_single_failure_anchor(self):
        tr = TrustRegionState(L_INIT_CONT, 40.0, 40.0, 100.0)
        assert update_tr(tr, False, 10, 0, 1).L_comb == pytest.approx(27.66, abs=5e-3)

    def test_factor_is_fixed_until_expansion(self):
        tr = TrustRegionState.initial(20)
        tr1 = update_tr(tr, False, 20, 0, 1)
        lam = (L_MIN_COMB / 20) ** (1 / 20)
        assert tr1.lam_comb == pytest.approx(lam)
        tr2 = update_tr(tr1, False, 20, 1, 1)
        assert tr2.lam_comb == tr1.lam_comb
        assert tr2.L_comb == pytest.approx(20 * lam**2)

    def test_success_expands_and_triggers_recompute(self):
        tr = update_tr(TrustRegionState.initial(20), False, 20, 0, 1)
        up = update_tr(tr, True, 20, 1, 1)
        assert up.L_comb == pytest.approx(20.0)
        assert up.expanded
        after = update_tr(up, False, 20, 2, 1)
        assert after.lam_comb == pytest.approx((1 / 20) ** (1 / 18))

    def test_expansion_capped(self):
        tr = TrustRegionState(L_MAX_CONT, 5.0, 5.0, 5.0)
        up = update_tr(tr, True, 10, 0, 1)
        assert up.L_cont == L_MAX_CONT and up.L_comb == 5.0

    def test_exhausted_budget_rejected(self):
        with pytest.raises(ValueError):
            update_tr(TrustRegionState.initial(5), False, 4, 2, 2)

    def test_initial_hamming_radius(self):
        assert TrustRegionState.initial(100).L_comb == 40.0
        assert TrustRegionState.initial(3).L_comb == 3.0
        assert TrustRegionState.initial(0).L_cont == L_INIT_CONT


class TestLegacy:
    def test_k_and_tolerance(self):
        # 40 / 1.5^9 = 1.04 > 1, 40 / 1.5^10 < 1
        assert legacy_k(40, 1) == 9
        assert legacy_tolerance(90, 40, 1) == 10
        assert legacy_tolerance(3, 40, 1) == 1

    def test_shrink_and_expand(self):
        tr = TrustRegionState.initial(20)
        shrunk = legacy_tr_update(tr, 0, 4, 4)
        assert shrunk.L_comb == pytest.approx(20 / 1.5) and shrunk.failures == 0
        grown = legacy_tr_update(shrunk, 3, 0, 4)
        assert grown.L_comb == pytest.approx(20.0)
        same = legacy_tr_update(tr, 1, 0, 4)
        assert same.L_comb == tr.L_comb and same.successes == 1


class TestStages:
    def test_always_failure_consumes_each_stage_budget(self, monkeypatch):
        random_acquisition(monkeypatch)
        rng = np.random.default_rng(0)
        for _ in range(10):
            D = int(rng.integers(4, 40))
            space = InputSpace([VariableSpec.binary()] * D)
            B = int(rng.integers(1, 5))
            cfg = BounceConfig(d_init=2, b=1, m_D=int(rng.integers(60, 200)), n_init=2, batch_size=B)
            opt = Bounce(space, cfg, seed=int(rng.integers(1000)))
            sched = opt.schedule
            opt.run(Increasing(), sum(sched.budgets) + 5 * B)
            for log in opt.stages[: len(sched.dims) - 1]:
                m_i = log.budget - log.initial_evals
                assert log.batches == math.ceil(max(m_i, 0) / B)
                if m_i <= 0:
                    # the initial design used up the whole stage
                    continue
                assert log.ended_by == "minimum"
                assert log.final_L_comb == pytest.approx(L_MIN_COMB, rel=1e-6)

    def test_stage_dims_follow_schedule(self, monkeypatch):
        random_acquisition(monkeypatch)
        space = InputSpace([VariableSpec.binary()] * 30)
        opt = Bounce(space, BounceConfig(d_init=2, b=1, m_D=200, n_init=3), seed=0)
        opt.run(Increasing(), 200)
        dims = [s.dim for s in opt.stages]
        assert dims[: len(opt.schedule.dims)] == list(opt.schedule.dims)

    def test_data_carried_into_larger_space(self, monkeypatch):
        random_acquisition(monkeypatch)
        space = InputSpace([VariableSpec.binary()] * 8 + [VariableSpec.continuous(0, 1)] * 2)
        opt = Bounce(space, BounceConfig(d_init=2, b=1, m_D=60, n_init=3), seed=1)
        f = lambda x: float(np.sum(x[:8]))
        while len(opt.stages) < 2:
            X = opt.ask()
            opt.tell([f(x) for x in X])
        for t, r in zip(opt.targets, opt.records):
            np.testing.assert_allclose(opt.embedding.project_up(t), r.point)

    def test_restart_after_full_dimension(self):
        space = InputSpace([VariableSpec.binary()] * 2)
        opt = Bounce(space, BounceConfig(d_init=1, b=1, m_D=10, n_init=2), seed=0)
        seen = set()
        while opt.restarts < 50:
            X = opt.ask()
            seen |= {tuple(x) for x in X}
            opt.tell([1.0] * len(X))
        assert max(s.dim for s in opt.stages) == 2
        assert len(seen) == 4
        assert opt.best_value == 1.0


class TestAskTell:
    def test_protocol_errors(self):
        opt = Bounce(InputSpace([VariableSpec.binary()] * 4), BounceConfig(d_init=2, n_init=2), seed=0)
        with pytest.raises(RuntimeError):
            opt.tell([1.0])
        X = opt.ask()
        with pytest.raises(RuntimeError):
            opt.ask()
        with pytest.raises(ValueError):
            opt.tell([1.0] * (len(X) + 1))
        with pytest.raises(ValueError):
            opt.tell([np.nan] * len(X))

    def test_records_and_best_value(self):
        space = InputSpace([VariableSpec.binary()] * 6)
        opt = Bounce(space, BounceConfig(d_init=2, b=1, m_D=30, n_init=3), seed=2)
        recs = opt.run(lambda x: float(np.sum(x)), 20)
        assert [r.eval for r in recs] == list(range(1, 21))
        best = np.minimum.accumulate([r.value for r in recs])
        np.testing.assert_array_equal([r.best_value for r in recs], best)
        assert all(space.is_valid(np.array(r.point)) for r in recs)

    def test_max_evals_truncates_batch(self):
        space = InputSpace([VariableSpec.binary()] * 6)
        opt = Bounce(space, BounceConfig(d_init=2, b=1, m_D=30, n_init=3, batch_size=4), seed=3)
        assert len(opt.run(lambda x: float(np.sum(x)), 9)) == 9

    def test_same_seed_same_trace(self):
        space = InputSpace([VariableSpec.binary()] * 5 + [VariableSpec.continuous(-1, 1)])
        f = lambda x: float(np.sum(x[:5]) + x[5] ** 2)
        a = Bounce(space, BounceConfig(d_init=2, m_D=20, n_init=3), seed=7).run(f, 15)
        b = Bounce(space, BounceConfig(d_init=2, m_D=20, n_init=3), seed=7).run(f, 15)
        assert a == b

    def test_finds_minimum_of_easy_binary_problem(self):
        space = InputSpace([VariableSpec.binary()] * 10)
        recs = Bounce(space, BounceConfig(d_init=2, b=1, m_D=40, n_init=3), seed=0).run(lambda x: float(np.sum(x)), 40)
        assert recs[-1].best_value == -10.0

    def test_continuous_problem_improves(self):
        space = InputSpace([VariableSpec.continuous(-5, 5)] * 4)
        f = lambda x: float(np.sum(x**2))
        recs = Bounce(space, BounceConfig(d_init=2, b=1, m_D=30, n_init=3), seed=0).run(f, 30)
        assert recs[-1].best_value < min(r.value for r in recs[:3])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BounceConfig(batch_size=0)


def test_single_binary_input_does_not_end_stage_early(monkeypatch):
    random_acquisition(monkeypatch)
    space = InputSpace([VariableSpec.binary()] + [VariableSpec.continuous(0, 1)] * 3)
    opt = Bounce(space, BounceConfig(d_init=2, b=1, m_D=40, n_init=2), seed=0)
    opt.run(Increasing(), 30)
    first = opt.stages[0]
    assert first.batches == first.budget - first.initial_evals
    assert first.final_L_cont == pytest.approx(L_MIN_CONT, rel=1e-6)
