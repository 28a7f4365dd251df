"""The main loop: nested embeddings, trust-region dynamics, ask/tell.

The optimizer works in a low-dimensional target space whose dimensions are
bins of input variables. Each target space gets an evaluation budget
proportional to its dimensionality; the trust-region base lengths shrink by
a factor chosen so that they reach their minimum exactly when that budget
runs out. Then the bins are split and the data is carried over, or, once the
target space equals the input space, the search restarts from fresh random
points.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import acquisition
from .embedding import (
    Embedding,
    StageSchedule,
    compute_schedule,
    increase_embedding,
    initial_embedding,
    lift_observations,
)
from .space import InputSpace, Kind
from .surrogate import (
    FittingError,
    GaussianProcess,
    Hyperparameters,
    KernelLayout,
    TrainingSet,
    fit_map,
)

L_MIN_CONT = 2.0**-7
L_INIT_CONT = 0.8
L_MAX_CONT = 1.6
L_MIN_COMB = 1.0
LEGACY_FACTOR = 1.5
LEGACY_SUCCESS_TOLERANCE = 3
_SLACK = 1.0 - 1e-9


@dataclass(frozen=True)
class TrustRegionState:
    """Base lengths of the continuous box and the combinatorial Hamming ball.

    ``lam_cont`` and ``lam_comb`` are the adjustment factors; ``None`` means
    they have to be recomputed before the next update (stage start or after
    an expansion).
    """

    L_cont: float
    L_comb: float
    L_init_comb: float
    L_max_comb: float
    lam_cont: float | None = None
    lam_comb: float | None = None
    expanded: bool = False
    successes: int = 0
    failures: int = 0

    @classmethod
    def initial(cls, n_comb: int) -> "TrustRegionState":
        L_comb = float(min(40, n_comb))
        return cls(L_INIT_CONT, L_comb, L_comb, float(n_comb))

    def reset(self) -> "TrustRegionState":
        return TrustRegionState(L_INIT_CONT, self.L_init_comb, self.L_init_comb, self.L_max_comb)

    @property
    def lam(self) -> float | None:
        return self.lam_comb if self.lam_comb is not None else self.lam_cont

    def at_minimum(self, has_cont: bool, has_comb: bool) -> bool:
        hit_cont = has_cont and self.L_cont <= L_MIN_CONT / _SLACK
        # a single combinatorial input starts at the minimum radius and cannot shrink
        hit_comb = has_comb and self.L_init_comb > L_MIN_COMB and self.L_comb <= L_MIN_COMB / _SLACK
        return hit_cont or hit_comb


def _factor(L: float, L_min: float, remaining: int) -> float:
    if L <= L_min:
        return 1.0
    return (L_min / L) ** (1.0 / remaining)


def update_tr(tr: TrustRegionState, success: bool, m_i: int, j: int, B: int) -> TrustRegionState:
    """One budget-aware base-length update after the ``j``-th batch of a stage.

    ``m_i`` is the number of evaluations the stage has for acquisition
    batches; ``j`` counts batches already completed before this one.
    """
    remaining = m_i - j * B
    if remaining < 1:
        raise ValueError(f"no budget left in stage (m_i={m_i}, j={j}, B={B})")
    lam_cont, lam_comb = tr.lam_cont, tr.lam_comb
    if lam_cont is None or tr.expanded:
        lam_cont = _factor(tr.L_cont, L_MIN_CONT, remaining)
    if lam_comb is None or tr.expanded:
        lam_comb = _factor(tr.L_comb, L_MIN_COMB, remaining)
    if success:
        L_cont = min(tr.L_cont * lam_cont**-B, L_MAX_CONT)
        L_comb = min(tr.L_comb * lam_comb**-B, tr.L_max_comb)
    else:
        L_cont = max(tr.L_cont * lam_cont**B, L_MIN_CONT)
        L_comb = max(tr.L_comb * lam_comb**B, min(L_MIN_COMB, tr.L_comb))
    return dataclasses.replace(
        tr, L_cont=L_cont, L_comb=L_comb, lam_cont=lam_cont, lam_comb=lam_comb, expanded=success
    )


def legacy_k(L_init: float, L_min: float) -> int:
    """Number of 1/1.5 shrinks that take ``L_init`` down towards ``L_min``."""
    return int(math.floor(math.log(L_init / L_min) / math.log(LEGACY_FACTOR) + 1e-12))


def legacy_tolerance(m_i: int, L_init: float, L_min: float) -> int:
    return max(1, m_i // max(1, legacy_k(L_init, L_min)))


def legacy_tr_update(
    tr: TrustRegionState, success_count: int, fail_count: int, tau_fail: int
) -> TrustRegionState:
    """Failure-tolerance rule: shrink after ``tau_fail`` failures in a row, expand after 3 successes."""
    if fail_count >= tau_fail:
        return dataclasses.replace(
            tr,
            L_cont=max(tr.L_cont / LEGACY_FACTOR, L_MIN_CONT),
            L_comb=max(tr.L_comb / LEGACY_FACTOR, min(L_MIN_COMB, tr.L_comb)),
            successes=0,
            failures=0,
        )
    if success_count >= LEGACY_SUCCESS_TOLERANCE:
        return dataclasses.replace(
            tr,
            L_cont=min(tr.L_cont * LEGACY_FACTOR, L_MAX_CONT),
            L_comb=min(tr.L_comb * LEGACY_FACTOR, tr.L_max_comb),
            successes=0,
            failures=0,
        )
    return dataclasses.replace(tr, successes=success_count, failures=fail_count)


def success_threshold(incumbent_value: float) -> float:
    return 1e-3 * max(1.0, abs(incumbent_value))


def is_success(batch_values: Sequence[float], incumbent_value: float) -> bool:
    values = np.asarray(batch_values, dtype=float)
    if values.size == 0:
        raise ValueError("empty batch")
    return bool(values.min() < incumbent_value - success_threshold(incumbent_value))


@dataclass(frozen=True)
class BounceConfig:
    d_init: int = 2
    b: int = 1
    m_D: int = 100
    n_init: int = 5
    batch_size: int = 1
    low_sequency: bool = False
    legacy_tr: bool = False
    split_rule: str = "root"
    gp_restarts: int = 2
    mc_samples: int = 128
    n_pool: int | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.d_init < 1 or self.n_init < 1 or self.m_D < 1:
            raise ValueError("d_init, n_init and m_D must be positive")


@dataclass(frozen=True)
class RunRecord:
    seed: int
    eval: int
    batch: int
    stage_dim: int
    point: tuple[float, ...]
    value: float
    best_value: float
    L_cont: float
    L_comb: float
    restarts: int


@dataclass
class StageLog:
    """Bookkeeping for one target space (used by tests and traces)."""

    dim: int
    budget: int
    initial_evals: int = 0
    batches: int = 0
    evals: int = 0
    final_L_cont: float = float("nan")
    final_L_comb: float = float("nan")
    ended_by: str = ""


class Bounce:
    """Ask/tell optimizer over a mixed input space (minimization).

    Examples
    --------
    >>> opt = Bounce(space, BounceConfig(), seed=0)
    >>> while opt.n_evals < 50:
    ...     X = opt.ask()
    ...     opt.tell([f(x) for x in X])
    """

    def __init__(self, space: InputSpace, config: BounceConfig | None = None, seed: int = 0,
                 max_evals: int | None = None):
        self.space = space
        self.config = config or BounceConfig()
        self.seed = seed
        self.max_evals = max_evals
        self.rng = np.random.default_rng(seed)
        cfg = self.config
        D = space.dim
        d_init = min(max(cfg.d_init, len(space.present_kinds())), D)
        self.schedule: StageSchedule = compute_schedule(D, d_init, cfg.b, cfg.m_D, cfg.split_rule)
        self.embedding: Embedding = initial_embedding(space, d_init, cfg.low_sequency, self.rng)
        self.has_cont = space.n_cont > 0
        self.has_comb = space.n_comb > 0
        self.tr = TrustRegionState.initial(space.n_comb)

        self.targets = np.zeros((0, d_init))
        self.values = np.zeros(0)
        self.n_evals = 0
        self.n_batches = 0
        self.restarts = 0
        self.best_value = np.inf
        self.best_point: np.ndarray | None = None
        self.records: list[RunRecord] = []
        self.stages: list[StageLog] = []
        self.fit_failures = 0

        self._hp: Hyperparameters | None = None
        self._pending: np.ndarray | None = None
        self._pending_initial = False
        self._begin_stage(self.schedule.budgets[0])
        self._initial_queue = self._initial_design(cfg.n_init, space_filling=True)

    # -- stage bookkeeping -------------------------------------------------

    def _begin_stage(self, budget: int) -> None:
        self.tr = self.tr.reset()
        self.stage_budget = budget
        self.stage_used = 0
        self.stage_batches = 0
        self.stages.append(StageLog(self.embedding.target_dim, budget))

    @property
    def stage_dim(self) -> int:
        return self.embedding.target_dim

    @property
    def acquisition_budget(self) -> int:
        """Evaluations of the current stage available for acquisition batches."""
        return self.stage_budget - self.stages[-1].initial_evals

    @property
    def remaining_in_stage(self) -> int:
        return self.stage_budget - self.stage_used

    @property
    def incumbent(self) -> tuple[np.ndarray, float] | None:
        if len(self.values) == 0:
            return None
        i = int(np.argmin(self.values))
        return self.embedding.project_up(self.targets[i]), float(self.values[i])

    def _initial_design(self, n: int, space_filling: bool) -> np.ndarray:
        e = self.embedding
        T = np.empty((n, e.target_dim))
        cont = e.continuous_mask
        if cont.any():
            if space_filling:
                sobol = stats.qmc.Sobol(d=int(cont.sum()), scramble=True, seed=self.rng)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    T[:, cont] = 2.0 * sobol.random(n) - 1.0
            else:
                T[:, cont] = self.rng.uniform(-1.0, 1.0, size=(n, int(cont.sum())))
        for j, (kind, card) in enumerate(zip(e.kinds, e.cardinalities)):
            if kind is Kind.BINARY:
                T[:, j] = self.rng.choice([-1.0, 1.0], size=n)
            elif kind.has_labels:
                T[:, j] = self.rng.integers(1, card + 1, size=n)
        return T

    # -- ask / tell --------------------------------------------------------

    def ask(self) -> np.ndarray:
        """Propose the next batch of input points, shape (q, D)."""
        if self._pending is not None:
            raise RuntimeError("tell() the previous batch before asking again")
        if self._initial_queue is not None:
            T = self._initial_queue
            self._initial_queue = None
            self._pending_initial = True
        else:
            T = self._acquire()
            self._pending_initial = False
        if self.max_evals is not None:
            left = self.max_evals - self.n_evals
            if left < 1:
                raise RuntimeError("evaluation budget exhausted")
            T = T[:left]
        self._pending = T
        return self.embedding.project_up(T)

    def tell(self, values: Sequence[float]) -> None:
        """Report objective values for the last proposed batch, in order."""
        if self._pending is None:
            raise RuntimeError("nothing to tell: call ask() first")
        values = np.asarray(values, dtype=float).ravel()
        T = self._pending
        if len(values) != len(T):
            raise ValueError(f"expected {len(T)} values, got {len(values)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("objective values must be finite")
        prev = float(self.values.min()) if len(self.values) else np.inf
        L_cont, L_comb = self.tr.L_cont, self.tr.L_comb
        X = self.embedding.project_up(T)
        for t, x, v in zip(T, X, values):
            self.n_evals += 1
            if v < self.best_value:
                self.best_value, self.best_point = float(v), x.copy()
            self.records.append(
                RunRecord(self.seed, self.n_evals, self.n_batches, self.stage_dim, tuple(map(float, x)),
                          float(v), self.best_value, L_cont, L_comb, self.restarts)
            )
        self.targets = np.vstack([self.targets, T])
        self.values = np.concatenate([self.values, values])
        self._pending = None
        self.n_batches += 1
        log = self.stages[-1]
        self.stage_used += len(T)
        log.evals += len(T)
        if self._pending_initial:
            log.initial_evals += len(T)
            if self.remaining_in_stage <= 0:
                self._end_stage("budget")
            return

        success = is_success(values, prev)
        B = self.config.batch_size
        if self.config.legacy_tr:
            tau = self._legacy_tolerance()
            s = self.tr.successes + 1 if success else 0
            f = 0 if success else self.tr.failures + 1
            self.tr = legacy_tr_update(self.tr, s, f, tau)
        else:
            self.tr = update_tr(self.tr, success, self.acquisition_budget, self.stage_batches, B)
        self.stage_batches += 1
        log.batches += 1
        if self.tr.at_minimum(self.has_cont, self.has_comb):
            self._end_stage("minimum")
        elif not self.config.legacy_tr and self.remaining_in_stage <= 0:
            self._end_stage("budget")

    def _legacy_tolerance(self) -> int:
        if self.has_comb:
            return legacy_tolerance(self.acquisition_budget, self.tr.L_init_comb, L_MIN_COMB)
        return legacy_tolerance(self.acquisition_budget, L_INIT_CONT, L_MIN_CONT)

    def _end_stage(self, reason: str) -> None:
        log = self.stages[-1]
        log.final_L_cont, log.final_L_comb, log.ended_by = self.tr.L_cont, self.tr.L_comb, reason
        if self.stage_dim < self.space.dim:
            self.grow_stage()
        else:
            self.restart()

    def grow_stage(self) -> None:
        """Split the bins, carry the data over and reset the trust region."""
        old = self.embedding
        self.embedding = increase_embedding(old, self.schedule.b, self.rng)
        self.targets = lift_observations(old, self.embedding, self.targets)
        self._begin_stage(self.schedule.budget_for_dim(self.embedding.target_dim))

    def restart(self) -> None:
        """Forget the data, draw a fresh full-dimensional embedding and new initial points."""
        self.restarts += 1
        D = self.space.dim
        self.embedding = initial_embedding(self.space, D, self.config.low_sequency, self.rng)
        self.targets = np.zeros((0, D))
        self.values = np.zeros(0)
        self._hp = None
        self._begin_stage(self.schedule.budget_for_dim(D))
        self._initial_queue = self._initial_design(self.config.n_init, space_filling=False)

    # -- acquisition -------------------------------------------------------

    def _fit(self, ts: TrainingSet, layout: KernelLayout) -> GaussianProcess:
        init = None
        if self._hp is not None:
            old = self._hp
            n = max(layout.n_cont, 1)
            ell = old.ell_cnt if len(old.ell_cnt) == n else np.full(n, np.exp(np.mean(np.log(old.ell_cnt))))
            rho = old.rho if layout.mixed else 1.0
            init = Hyperparameters(old.ell_cmb, ell, old.signal_var, old.noise_var, rho if layout.mixed else 1.0)
        hp = fit_map(ts, layout, restarts=self.config.gp_restarts, rng=self.rng, init=init)
        self._hp = hp
        return GaussianProcess(ts, hp, layout)

    def _acquire(self) -> np.ndarray:
        e = self.embedding
        layout = KernelLayout.from_embedding(e)
        ts = TrainingSet(self.targets, self.values)
        center = self.targets[int(np.argmin(self.values))]
        try:
            model = self._fit(ts, layout)
        except FittingError:
            self.fit_failures += 1
            return self._random_in_tr(center, self.config.batch_size)
        ctx = acquisition.AcquisitionContext(
            model=model,
            kinds=e.kinds,
            cardinalities=e.cardinalities,
            center=center,
            incumbent=float(ts.y.min()),
            L_cont=self.tr.L_cont,
            L_comb=self.tr.L_comb,
            batch_size=self.config.batch_size,
            mc_samples=self.config.mc_samples,
            rng=self.rng,
            observed=self.targets,
        )
        if self.config.n_pool is not None:
            return _maximize_with_pool(ctx, self.config.n_pool)
        return acquisition.maximize(ctx)

    def _random_in_tr(self, center: np.ndarray, q: int) -> np.ndarray:
        e = self.embedding
        out = np.repeat(center[None, :], q, axis=0)
        cont = e.continuous_mask
        if cont.any():
            c = center[cont]
            out[:, cont] = self.rng.uniform(np.clip(c - self.tr.L_cont, -1, 1), np.clip(c + self.tr.L_cont, -1, 1),
                                            size=(q, int(cont.sum())))
        comb = np.flatnonzero(e.combinatorial_mask)
        r = min(int(round(self.tr.L_comb)), len(comb))
        card = e.cardinalities
        for row in out:
            for j in self.rng.choice(comb, size=r, replace=False) if r else []:
                if e.kinds[j] is Kind.BINARY:
                    row[j] = self.rng.choice([-1.0, 1.0])
                else:
                    row[j] = self.rng.integers(1, card[j] + 1)
        return out

    # -- driver ------------------------------------------------------------

    def run(self, objective: Callable[[np.ndarray], float], max_evals: int) -> list[RunRecord]:
        """Ask/evaluate/tell until ``max_evals`` evaluations have been spent."""
        self.max_evals = max_evals
        while self.n_evals < max_evals:
            X = self.ask()
            self.tell([objective(x) for x in X])
        return self.records


def _maximize_with_pool(ctx: acquisition.AcquisitionContext, n_pool: int) -> np.ndarray:
    if not ctx.combinatorial.any():
        return acquisition.optimize_continuous(ctx)
    batch = np.zeros((0, len(ctx.center)))
    for _ in range(ctx.batch_size):
        x, _ = acquisition.optimize_mixed(ctx, fixed=batch if len(batch) else None, n_pool=n_pool)
        batch = np.vstack([batch, x])
    return batch
