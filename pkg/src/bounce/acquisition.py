"""Expected improvement and its maximization inside the trust region.

Everything here works in standardized output units and on target points.
Continuous target coordinates are refined with bounded L-BFGS-B inside a
lengthscale-shaped box; combinatorial coordinates are searched with
multi-start hill climbing over Hamming-1 moves inside a Hamming ball.
Batches larger than one use Monte-Carlo qEI with base samples fixed for the
whole round (common random numbers).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, special, stats

from .space import Kind
from .surrogate import FittingError, GaussianProcess, robust_cholesky

N_RAW_SAMPLES = 512
N_RESTARTS = 10
N_LOCAL_STARTS = 20
N_INTERLEAVE = 5
GRAD_STEPS = 20


@dataclass
class AcquisitionContext:
    model: GaussianProcess
    kinds: Sequence[Kind]
    cardinalities: np.ndarray
    center: np.ndarray
    incumbent: float
    L_cont: float = 0.8
    L_comb: float = 40.0
    batch_size: int = 1
    mc_samples: int = 128
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    observed: np.ndarray | None = None
    base_samples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("batch_size and mc_samples must be positive")
        self.kinds = [Kind(k) for k in self.kinds]
        self.cardinalities = np.asarray(self.cardinalities, dtype=int)
        self.center = np.asarray(self.center, dtype=float)
        self.base_samples = normal_base_samples(self.mc_samples, self.batch_size, self.rng)

    @property
    def continuous(self) -> np.ndarray:
        return np.array([k is Kind.CONTINUOUS for k in self.kinds], dtype=bool)

    @property
    def combinatorial(self) -> np.ndarray:
        return ~self.continuous

    @property
    def radius(self) -> int:
        # round half to even
        return int(round(self.L_comb))

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds of the continuous trust region, shaped by the ARD lengthscales."""
        ell = self.model.hp.ell_cnt[: int(self.continuous.sum())]
        weights = ell / np.exp(np.mean(np.log(ell)))
        c = self.center[self.continuous]
        half = self.L_cont * weights
        return np.clip(c - half, -1.0, 1.0), np.clip(c + half, -1.0, 1.0)


def normal_base_samples(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Scrambled-Sobol standard normal samples, shape (n, dim)."""
    sampler = stats.qmc.Sobol(d=dim, scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = sampler.random(n)
    return stats.norm.ppf(np.clip(u, 1e-10, 1 - 1e-10))


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _phi(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _ei_from_moments(mean, std, incumbent):
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    out = np.maximum(incumbent - mean, 0.0)
    ok = std >= 1e-12
    z = (incumbent - mean[ok]) / std[ok]
    out[ok] = std[ok] * (z * special.ndtr(z) + _phi(z))
    return out


def ei(ctx: AcquisitionContext, X: np.ndarray) -> np.ndarray:
    """Analytic expected improvement (minimization) for each row of ``X``."""
    X = np.atleast_2d(X)
    mean, var = ctx.model.predict(X)
    return _ei_from_moments(mean, np.sqrt(var), ctx.incumbent)


def ei_with_grad(ctx: AcquisitionContext, x: np.ndarray) -> tuple[float, np.ndarray]:
    """EI at a single point and its gradient w.r.t. the continuous coordinates."""
    mean, var, dmean, dvar = ctx.model.predict_with_grad(x)
    std = np.sqrt(var)
    if std < 1e-12:
        if ctx.incumbent > mean:
            return ctx.incumbent - mean, -dmean
        return 0.0, np.zeros_like(dmean)
    z = (ctx.incumbent - mean) / std
    cdf, pdf = special.ndtr(z), _phi(z)
    value = std * (z * cdf + pdf)
    # dEI/dmean = -Phi(z), dEI/dstd = phi(z)
    grad = -cdf * dmean + pdf * dvar / (2.0 * std)
    return float(value), grad


def _batch_factor(cov: np.ndarray) -> np.ndarray:
    floor = 1e-12 * np.eye(len(cov))
    try:
        return robust_cholesky(cov + floor)[0]
    except FittingError:
        # all-but-zero covariance (every point already observed)
        return np.zeros_like(cov)


def qei(ctx: AcquisitionContext, X: np.ndarray, return_se: bool = False):
    """Monte-Carlo batch EI with the context's fixed base samples."""
    X = np.atleast_2d(X)
    q = len(X)
    z = _base(ctx, q)
    mean, cov = ctx.model.posterior(X)
    L = _batch_factor(cov)
    samples = mean + z @ L.T
    improvement = np.maximum(ctx.incumbent - samples.min(axis=1), 0.0)
    value = float(improvement.mean())
    if return_se:
        return value, float(improvement.std(ddof=1) / np.sqrt(len(improvement))) if len(improvement) > 1 else 0.0
    return value


def _base(ctx: AcquisitionContext, q: int) -> np.ndarray:
    if q > ctx.base_samples.shape[1]:
        extra = normal_base_samples(ctx.mc_samples, q, ctx.rng)
        ctx.base_samples = np.hstack([ctx.base_samples, extra[:, ctx.base_samples.shape[1] :]])
    return ctx.base_samples[:, :q]


def qei_with_grad(ctx: AcquisitionContext, X: np.ndarray, rows: Sequence[int] | None = None):
    """qEI and its gradient w.r.t. continuous coordinates of the selected rows.

    The gradient has shape (len(rows), n_continuous). The Cholesky factor is
    differentiated in forward mode: dL = L tril_half(L^-1 dS L^-T).
    """
    X = np.atleast_2d(X)
    q = len(X)
    rows = list(range(q)) if rows is None else list(rows)
    z = _base(ctx, q)
    mean, cov, dmean, dcov = ctx.model.joint_with_grad(X)
    L = _batch_factor(cov)
    samples = mean + z @ L.T
    mins = samples.argmin(axis=1)
    improvement = np.maximum(ctx.incumbent - samples[np.arange(len(samples)), mins], 0.0)
    active = improvement > 0
    value = float(improvement.mean())
    p = dmean.shape[1]
    grad = np.zeros((len(rows), p))
    if not active.any() or p == 0 or not np.any(np.diag(L)):
        return value, grad
    z_act, j_act = z[active], mins[active]
    n = len(z)
    for r, a in enumerate(rows):
        for i in range(p):
            P = linalg.solve_triangular(L, dcov[a, i], lower=True, check_finite=False)
            P = linalg.solve_triangular(L, P.T, lower=True, check_finite=False).T
            Phi = np.tril(P)
            Phi[np.diag_indices(q)] *= 0.5
            dL = L @ Phi
            dsamples = (z_act @ dL.T)[np.arange(len(z_act)), j_act]
            dsamples += np.where(j_act == a, dmean[a, i], 0.0)
            grad[r, i] = -dsamples.sum() / n
    return value, grad


def score(ctx: AcquisitionContext, candidates: np.ndarray, fixed: np.ndarray | None = None) -> np.ndarray:
    """Acquisition of each candidate appended to a fixed partial batch.

    Without a partial batch this is analytic EI. Otherwise the joint qEI of
    ``fixed + [candidate]`` is evaluated for every candidate at once, reusing
    the Cholesky factor of the fixed block.
    """
    candidates = np.atleast_2d(candidates)
    if fixed is None or len(fixed) == 0:
        return ei(ctx, candidates)
    fixed = np.atleast_2d(fixed)
    b = len(fixed)
    z = _base(ctx, b + 1)
    model = ctx.model
    mean_f, cov_f = model.posterior(fixed)
    L_f = _batch_factor(cov_f)
    f_fixed = mean_f + z[:, :b] @ L_f.T
    best_fixed = f_fixed.min(axis=1)

    out = np.empty(len(candidates))
    chunk = 1024
    for start in range(0, len(candidates), chunk):
        cand = candidates[start : start + chunk]
        mean_c, var_c = model.predict(cand)
        k_fc = _cross_cov(model, fixed, cand)
        if np.any(np.diag(L_f)):
            l = linalg.solve_triangular(L_f, k_fc, lower=True, check_finite=False)
        else:
            l = np.zeros_like(k_fc)
        d = np.sqrt(np.maximum(var_c - np.einsum("bn,bn->n", l, l), 0.0))
        f_c = mean_c + z[:, :b] @ l + np.outer(z[:, b], d)
        best = np.minimum(best_fixed[:, None], f_c)
        out[start : start + chunk] = np.maximum(ctx.incumbent - best, 0.0).mean(axis=0)
    return out


def _cross_cov(model: GaussianProcess, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Posterior covariance between rows of A and rows of B."""
    from .surrogate import kernel_matrix

    K_ab = kernel_matrix(A, B, model.hp, model.layout)
    K_a = kernel_matrix(A, model.ts.points, model.hp, model.layout)
    K_b = kernel_matrix(B, model.ts.points, model.hp, model.layout)
    V_a = linalg.solve_triangular(model.L, K_a.T, lower=True, check_finite=False)
    V_b = linalg.solve_triangular(model.L, K_b.T, lower=True, check_finite=False)
    return K_ab - V_a.T @ V_b


# ---------------------------------------------------------------------------
# continuous coordinates


def _uniform_in_box(rng: np.random.Generator, lb: np.ndarray, ub: np.ndarray, n: int) -> np.ndarray:
    if len(lb) == 0:
        return np.zeros((n, 0))
    sampler = stats.qmc.Sobol(d=len(lb), scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = sampler.random(n)
    return lb + u * (ub - lb)


def refine_continuous(
    ctx: AcquisitionContext,
    batch: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    rows: Sequence[int] | None = None,
    fixed: np.ndarray | None = None,
    steps: int = GRAD_STEPS,
) -> tuple[np.ndarray, float]:
    """Bounded gradient ascent on the continuous coordinates of ``batch``.

    ``rows`` selects which rows move; ``fixed`` prepends a partial batch that
    stays put. Never returns a batch with a lower acquisition than the input.
    """
    batch = np.array(np.atleast_2d(batch), dtype=float)
    cont = ctx.continuous
    rows = list(range(len(batch))) if rows is None else list(rows)
    prefix = np.zeros((0, batch.shape[1])) if fixed is None else np.atleast_2d(fixed)
    offset = len(prefix)
    p = int(cont.sum())

    def assemble(flat):
        full = np.vstack([prefix, batch])
        full[np.ix_([offset + r for r in rows], np.flatnonzero(cont))] = flat.reshape(len(rows), p)
        return full

    def value_and_grad(flat):
        full = assemble(flat)
        if len(full) == 1:
            v, g = ei_with_grad(ctx, full[0])
            return -v, -np.asarray(g).ravel()
        v, g = qei_with_grad(ctx, full, rows=[offset + r for r in rows])
        return -v, -g.ravel()

    x0 = batch[np.ix_(rows, np.flatnonzero(cont))].ravel()
    bounds = list(zip(np.tile(lb, len(rows)), np.tile(ub, len(rows))))
    f0, _ = value_and_grad(x0)
    if p == 0 or np.all(lb == ub):
        return batch, -f0
    res = optimize.minimize(value_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": steps})
    x = np.clip(res.x, lb.min(), ub.max())
    x = np.clip(x.reshape(len(rows), p), lb, ub).ravel()
    f1, _ = value_and_grad(x)
    if f1 <= f0:
        return assemble(x)[offset:], -f1
    return batch, -f0


def optimize_continuous(ctx: AcquisitionContext) -> np.ndarray:
    """Raw samples in the trust-region box, then gradient refinement of the best ones."""
    lb, ub = ctx.box()
    q = ctx.batch_size
    d = len(ctx.center)
    if np.all(lb == ub):
        return np.repeat(ctx.center[None, :], q, axis=0)
    cont = np.flatnonzero(ctx.continuous)
    raw = np.repeat(ctx.center[None, None, :], N_RAW_SAMPLES, axis=0).repeat(q, axis=1)
    raw[:, :, cont] = _uniform_in_box(ctx.rng, np.tile(lb, q), np.tile(ub, q), N_RAW_SAMPLES).reshape(
        N_RAW_SAMPLES, q, len(cont)
    )
    if q == 1:
        values = ei(ctx, raw[:, 0, :])
    else:
        values = np.array([qei(ctx, batch) for batch in raw])
    order = np.argsort(-values, kind="stable")[:N_RESTARTS]
    best, best_value = raw[order[0]], values[order[0]]
    for idx in order:
        batch, value = refine_continuous(ctx, raw[idx], lb, ub)
        if value > best_value:
            best, best_value = batch, value
    assert best.shape == (q, d)
    return best


# ---------------------------------------------------------------------------
# combinatorial coordinates


def pool_size(target_dim: int) -> int:
    return min(5000, max(2000, 200 * target_dim))


def sample_pool(ctx: AcquisitionContext, n: int, base: np.ndarray | None = None,
                radius: int | None = None) -> np.ndarray:
    """Random candidates around the center, one variable kind at a time.

    For each kind, ``radius`` of its dims (or all of them, if fewer) are drawn
    uniformly; the rest keep the center's values. Continuous coordinates are
    drawn uniformly in the box. Candidates outside the Hamming ball (possible
    when several combinatorial kinds are present) are dropped.
    """
    rng = ctx.rng
    center = ctx.center if base is None else np.asarray(base, dtype=float)
    r = ctx.radius if radius is None else radius
    pool = np.repeat(center[None, :], n, axis=0)
    for kind in (Kind.BINARY, Kind.CATEGORICAL, Kind.ORDINAL):
        dims = np.array([j for j, k in enumerate(ctx.kinds) if k is kind], dtype=int)
        if len(dims) == 0 or r == 0:
            continue
        m = min(r, len(dims))
        # m random dims per candidate, without replacement
        chosen = np.argsort(rng.random((n, len(dims))), axis=1)[:, :m]
        cols = dims[chosen]
        if kind is Kind.BINARY:
            vals = rng.choice([-1.0, 1.0], size=(n, m))
        else:
            card = ctx.cardinalities[cols]
            vals = np.floor(rng.random((n, m)) * card) + 1.0
        np.put_along_axis(pool, cols, vals, axis=1)
    if ctx.continuous.any():
        lb, ub = ctx.box()
        pool[:, ctx.continuous] = _uniform_in_box(rng, lb, ub, n)
    inside = hamming(pool, ctx.center, ctx.combinatorial) <= r
    return pool[inside]


def hamming(X: np.ndarray, y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.count_nonzero(X[:, mask] != y[mask], axis=1)


def neighbors(ctx: AcquisitionContext, x: np.ndarray) -> np.ndarray:
    """All Hamming-1 moves of ``x``: bit flips, label changes, ordinal +-1 steps."""
    out = []
    for j, kind in enumerate(ctx.kinds):
        if kind is Kind.BINARY:
            y = x.copy()
            y[j] = -x[j]
            out.append(y)
        elif kind is Kind.CATEGORICAL:
            for label in range(1, ctx.cardinalities[j] + 1):
                if label != x[j]:
                    y = x.copy()
                    y[j] = label
                    out.append(y)
        elif kind is Kind.ORDINAL:
            for step in (-1, 1):
                if 1 <= x[j] + step <= ctx.cardinalities[j]:
                    y = x.copy()
                    y[j] = x[j] + step
                    out.append(y)
    return np.array(out) if out else np.zeros((0, len(x)))


def _feasible_neighbors(ctx: AcquisitionContext, x: np.ndarray) -> np.ndarray:
    nb = neighbors(ctx, x)
    if len(nb) == 0:
        return nb
    mask = ctx.combinatorial
    keep = (hamming(nb, ctx.center, mask) <= ctx.radius) & np.any(nb[:, mask] != ctx.center[mask], axis=1)
    return nb[keep]


def hill_climb(ctx: AcquisitionContext, x: np.ndarray, value: float, fixed=None, max_steps: int = 10_000):
    """Greedy best-neighbor ascent until no neighbor improves."""
    for _ in range(max_steps):
        nb = _feasible_neighbors(ctx, x)
        if len(nb) == 0:
            break
        values = score(ctx, nb, fixed)
        i = int(np.argmax(values))
        if values[i] <= value:
            break
        x, value = nb[i], float(values[i])
    return x, value


def _is_observed(ctx: AcquisitionContext, X: np.ndarray, fixed) -> np.ndarray:
    seen = []
    if ctx.observed is not None and len(ctx.observed):
        seen.append(np.atleast_2d(ctx.observed))
    if fixed is not None and len(fixed):
        seen.append(np.atleast_2d(fixed))
    if not seen:
        return np.zeros(len(X), dtype=bool)
    seen = np.vstack(seen)
    return np.array([np.any(np.all(seen == x, axis=1)) for x in X])


def _pick(ctx, X, values, fixed):
    """Best candidate, preferring points that have not been evaluated yet."""
    order = np.argsort(-values, kind="stable")
    fresh = ~_is_observed(ctx, X[order], fixed)
    if fresh.any():
        i = order[int(np.argmax(fresh))]
        return X[i], float(values[i])
    widened = _nearest_fresh(ctx, fixed)
    if widened is not None:
        return widened
    return X[order[0]], float(values[order[0]])


def _nearest_fresh(ctx, fixed, n: int = 512):
    """Best unevaluated point at the smallest Hamming radius beyond the trust region.

    Only used when every candidate inside the trust region has been evaluated.
    """
    n_comb = int(ctx.combinatorial.sum())
    for r in range(ctx.radius + 1, n_comb + 1):
        pool = sample_pool(ctx, n, radius=r)
        pool = pool[~_is_observed(ctx, pool, fixed)]
        if len(pool):
            values = score(ctx, pool, fixed)
            i = int(np.argmax(values))
            return pool[i], float(values[i])
    return None


def _starts(ctx, pool, fixed):
    if ctx.radius >= 1:
        pool = np.vstack([pool, _feasible_neighbors(ctx, ctx.center)]) if len(pool) else _feasible_neighbors(ctx, ctx.center)
    if len(pool) == 0:
        pool = ctx.center[None, :]
    values = score(ctx, pool, fixed)
    order = np.argsort(-values, kind="stable")[:N_LOCAL_STARTS]
    return pool, values, order


def local_search(ctx: AcquisitionContext, fixed: np.ndarray | None = None, n_pool: int | None = None):
    """One point maximizing the acquisition over the Hamming trust region.

    Returns the point and its acquisition value; ``fixed`` is the partial batch
    already chosen this round.
    """
    n_pool = pool_size(len(ctx.center)) if n_pool is None else n_pool
    pool, values, order = _starts(ctx, sample_pool(ctx, n_pool), fixed)
    found = [pool]
    found_values = [values]
    for idx in order:
        x, v = hill_climb(ctx, pool[idx], values[idx], fixed)
        found.append(x[None, :])
        found_values.append(np.array([v]))
    X = np.vstack(found)
    V = np.concatenate(found_values)
    return _pick(ctx, X, V, fixed)


def optimize_mixed(ctx: AcquisitionContext, fixed: np.ndarray | None = None, n_pool: int | None = None,
                   trace: list | None = None):
    """Interleave continuous gradient steps and combinatorial local search.

    Five rounds per start, continuous first. ``trace``, if given, receives the
    per-round acquisition values of every start.
    """
    if not ctx.combinatorial.any():
        return optimize_continuous(ctx)[0], None
    if not ctx.continuous.any():
        return local_search(ctx, fixed, n_pool)
    n_pool = pool_size(len(ctx.center)) if n_pool is None else n_pool
    pool, values, order = _starts(ctx, sample_pool(ctx, n_pool), fixed)
    lb, ub = ctx.box()
    row = [0]
    found, found_values = [pool], [values]
    for idx in order:
        x, v = pool[idx].copy(), float(values[idx])
        history = [v]
        for _ in range(N_INTERLEAVE):
            batch, v = refine_continuous(ctx, x[None, :], lb, ub, rows=row, fixed=fixed)
            x = batch[0]
            x, v = hill_climb(ctx, x, v, fixed)
            history.append(v)
        if trace is not None:
            trace.append(history)
        found.append(x[None, :])
        found_values.append(np.array([v]))
    return _pick(ctx, np.vstack(found), np.concatenate(found_values), fixed)


def maximize(ctx: AcquisitionContext) -> np.ndarray:
    """A batch of ``ctx.batch_size`` target points inside the trust region."""
    if not ctx.combinatorial.any():
        return optimize_continuous(ctx)
    batch = np.zeros((0, len(ctx.center)))
    for _ in range(ctx.batch_size):
        x, _ = optimize_mixed(ctx, fixed=batch if len(batch) else None)
        batch = np.vstack([batch, x])
    return batch
