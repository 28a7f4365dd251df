"""Gaussian process surrogate on target points.

The kernel mixes a Matern-5/2 kernel on the combinatorial target dims (one
shared lengthscale, distance = square root of the number of mismatches) with
an ARD Matern-5/2 kernel on the continuous target dims::

    k = sf2 * (rho * k_cmb * k_cnt + (1 - rho) * (k_cmb + k_cnt))

When only one of the two groups is present the kernel is ``sf2 * k_group``
and ``rho`` is pinned to 1.

Hyperparameters are fit by maximizing the log marginal likelihood plus Gamma
log-priors, in unconstrained coordinates (log for positive quantities, logit
for ``rho``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

logger = logging.getLogger(__name__)

# (concentration, rate)
LENGTHSCALE_PRIOR = (1.5, 0.1)
SIGNAL_PRIOR = (1.5, 0.5)
NOISE_PRIOR = (1.1, 0.1)

SQRT5 = math.sqrt(5.0)

# box for the unconstrained optimizer
_LOG_ELL_BOUNDS = (math.log(1e-2), math.log(1e2))
_LOG_SIGNAL_BOUNDS = (math.log(1e-3), math.log(1e2))
_LOG_NOISE_BOUNDS = (math.log(1e-6), math.log(1.0))
_LOGIT_RHO_BOUNDS = (-8.0, 8.0)


class FittingError(RuntimeError):
    """Raised when the kernel matrix cannot be factorized even with jitter."""


@dataclass(frozen=True)
class KernelLayout:
    """Which target dims are continuous, and the label count of each combinatorial dim."""

    continuous: np.ndarray
    cardinalities: np.ndarray
    binary: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "continuous", np.asarray(self.continuous, dtype=bool))
        object.__setattr__(self, "cardinalities", np.asarray(self.cardinalities, dtype=int))
        object.__setattr__(self, "binary", np.asarray(self.binary, dtype=bool))

    @classmethod
    def from_embedding(cls, embedding) -> "KernelLayout":
        from .space import Kind

        return cls(embedding.continuous_mask, embedding.cardinalities, embedding.kind_mask(Kind.BINARY))

    @classmethod
    def from_kinds(cls, kinds, cardinalities=None) -> "KernelLayout":
        """Layout from kind names; binary dims get cardinality 2, continuous 0."""
        from .space import Kind

        kinds = [Kind(k) for k in kinds]
        if cardinalities is None:
            cardinalities = [2 if k is Kind.BINARY else 0 for k in kinds]
        return cls(
            [k is Kind.CONTINUOUS for k in kinds],
            cardinalities,
            [k is Kind.BINARY for k in kinds],
        )

    @property
    def dim(self) -> int:
        return len(self.continuous)

    @property
    def n_cont(self) -> int:
        return int(self.continuous.sum())

    @property
    def has_cnt(self) -> bool:
        return bool(self.continuous.any())

    @property
    def has_cmb(self) -> bool:
        return bool((~self.continuous).any())

    @property
    def mixed(self) -> bool:
        return self.has_cnt and self.has_cmb


@dataclass(frozen=True)
class Hyperparameters:
    ell_cmb: float
    ell_cnt: np.ndarray
    signal_var: float
    noise_var: float
    rho: float = 1.0

    def __post_init__(self) -> None:
        ell_cnt = np.atleast_1d(np.asarray(self.ell_cnt, dtype=float))
        object.__setattr__(self, "ell_cnt", ell_cnt)
        if self.ell_cmb <= 0 or np.any(ell_cnt <= 0) or self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("lengthscales and variances must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    def to_vector(self, layout: KernelLayout) -> np.ndarray:
        parts: list[float] = []
        if layout.has_cmb:
            parts.append(math.log(self.ell_cmb))
        if layout.has_cnt:
            parts.extend(np.log(self.ell_cnt))
        parts += [math.log(self.signal_var), math.log(self.noise_var)]
        if layout.mixed:
            rho = min(max(self.rho, 1e-12), 1 - 1e-12)
            parts.append(math.log(rho / (1 - rho)))
        return np.array(parts)

    @classmethod
    def from_vector(cls, theta: np.ndarray, layout: KernelLayout) -> "Hyperparameters":
        theta = np.asarray(theta, dtype=float)
        pos = 0
        ell_cmb = 1.0
        if layout.has_cmb:
            ell_cmb = math.exp(theta[pos])
            pos += 1
        ell_cnt = np.ones(max(layout.n_cont, 1))
        if layout.has_cnt:
            ell_cnt = np.exp(theta[pos : pos + layout.n_cont])
            pos += layout.n_cont
        signal_var = math.exp(theta[pos])
        noise_var = math.exp(theta[pos + 1])
        rho = float(special.expit(theta[pos + 2])) if layout.mixed else 1.0
        return cls(ell_cmb, ell_cnt, signal_var, noise_var, rho)

    @classmethod
    def default(cls, layout: KernelLayout) -> "Hyperparameters":
        # prior modes: (a - 1) / b
        ell = (LENGTHSCALE_PRIOR[0] - 1) / LENGTHSCALE_PRIOR[1]
        return cls(
            ell_cmb=ell,
            ell_cnt=np.full(max(layout.n_cont, 1), ell),
            signal_var=(SIGNAL_PRIOR[0] - 1) / SIGNAL_PRIOR[1],
            noise_var=1e-4,
            rho=0.5 if layout.mixed else 1.0,
        )


def _bounds(layout: KernelLayout) -> list[tuple[float, float]]:
    bounds = []
    if layout.has_cmb:
        bounds.append(_LOG_ELL_BOUNDS)
    bounds += [_LOG_ELL_BOUNDS] * layout.n_cont
    bounds += [_LOG_SIGNAL_BOUNDS, _LOG_NOISE_BOUNDS]
    if layout.mixed:
        bounds.append(_LOGIT_RHO_BOUNDS)
    return bounds


def _one_hot(X: np.ndarray, layout: KernelLayout) -> np.ndarray:
    cmb = np.flatnonzero(~layout.continuous)
    if len(cmb) == 0:
        return np.zeros((len(X), 0))
    cards = layout.cardinalities[cmb]
    offsets = np.concatenate([[0], np.cumsum(cards)[:-1]])
    V = X[:, cmb]
    labels = np.where(layout.binary[cmb], (V > 0).astype(int), V.astype(int) - 1)
    out = np.zeros((len(X), int(cards.sum())))
    np.put_along_axis(out, labels + offsets, 1.0, axis=1)
    return out


def mismatches(X: np.ndarray, Y: np.ndarray, layout: KernelLayout) -> np.ndarray:
    """Number of combinatorial target dims in which rows of X and Y differ."""
    n_cmb = int((~layout.continuous).sum())
    return n_cmb - _one_hot(X, layout) @ _one_hot(Y, layout).T


def _matern(u: np.ndarray) -> np.ndarray:
    return (1.0 + u + u * u / 3.0) * np.exp(-u)


def _scaled_diffs(X: np.ndarray, Y: np.ndarray, layout: KernelLayout, ell: np.ndarray) -> np.ndarray:
    """Continuous differences divided by lengthscales, shape (n, m, p)."""
    Xc = X[:, layout.continuous] / ell
    Yc = Y[:, layout.continuous] / ell
    return Xc[:, None, :] - Yc[None, :, :]


def _parts(X: np.ndarray, Y: np.ndarray, hp: Hyperparameters, layout: KernelLayout):
    """Unit-variance component kernels and their building blocks."""
    out = {}
    if layout.has_cmb:
        r = np.sqrt(np.maximum(mismatches(X, Y, layout), 0.0))
        u = SQRT5 * r / hp.ell_cmb
        out["u_cmb"] = u
        out["k_cmb"] = _matern(u)
    if layout.has_cnt:
        diffs = _scaled_diffs(X, Y, layout, hp.ell_cnt[: layout.n_cont])
        u = SQRT5 * np.sqrt(np.einsum("nmp,nmp->nm", diffs, diffs))
        out["diffs"] = diffs
        out["u_cnt"] = u
        out["k_cnt"] = _matern(u)
    return out


def _combine(parts: dict, hp: Hyperparameters, layout: KernelLayout) -> np.ndarray:
    if layout.mixed:
        kc, kn = parts["k_cmb"], parts["k_cnt"]
        return hp.signal_var * (hp.rho * kc * kn + (1.0 - hp.rho) * (kc + kn))
    key = "k_cmb" if layout.has_cmb else "k_cnt"
    return hp.signal_var * parts[key]


def kernel_matrix(X: np.ndarray, Y: np.ndarray, hp: Hyperparameters, layout: KernelLayout) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return _combine(_parts(X, Y, hp, layout), hp, layout)


def kernel(x: np.ndarray, y: np.ndarray, hp: Hyperparameters, layout: KernelLayout) -> float:
    return float(kernel_matrix(x, y, hp, layout)[0, 0])


def robust_cholesky(K: np.ndarray, max_rel_jitter: float = 1e-4) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, adding escalating diagonal jitter on failure.

    Returns the factor and the absolute jitter that was added.
    """
    try:
        return linalg.cholesky(K, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        raise FittingError("kernel matrix has a non-positive diagonal")
    rel = 1e-8
    eye = np.eye(len(K))
    while rel <= max_rel_jitter * (1 + 1e-9):
        try:
            return linalg.cholesky(K + rel * scale * eye, lower=True, check_finite=False), rel * scale
        except linalg.LinAlgError:
            rel *= 10
    raise FittingError("matrix is not positive definite even with jitter")


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Target points with raw observations; values are standardized internally."""

    points: np.ndarray
    values: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        if len(points) != len(values) or len(values) == 0:
            raise ValueError("need at least one point and as many values as points")
        mean = float(values.mean())
        std = float(values.std())
        if not std > 1e-12 * max(1.0, abs(mean)):
            std = 1.0
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "y", (values - mean) / std)

    def __len__(self) -> int:
        return len(self.values)

    def standardize(self, v):
        return (np.asarray(v, dtype=float) - self.mean) / self.std

    def unstandardize(self, v):
        return np.asarray(v, dtype=float) * self.std + self.mean


def _gamma_logpdf(x: float, prior: tuple[float, float]) -> float:
    a, b = prior
    return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x


def log_map_objective(
    ts: TrainingSet, theta: np.ndarray, layout: KernelLayout
) -> tuple[float, np.ndarray]:
    """Log marginal likelihood plus log-priors, and its gradient w.r.t. ``theta``."""
    hp = Hyperparameters.from_vector(theta, layout)
    X, y = ts.points, ts.y
    n = len(y)
    parts = _parts(X, X, hp, layout)
    S = _combine(parts, hp, layout)
    L, _ = robust_cholesky(S + hp.noise_var * np.eye(n))
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    Kinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv

    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    grads: list[float] = []

    sf2, rho = hp.signal_var, hp.rho
    kc = parts.get("k_cmb")
    kn = parts.get("k_cnt")
    if layout.has_cmb:
        u = parts["u_cmb"]
        dkc = (u * u / 3.0) * (1.0 + u) * np.exp(-u)
        factor = rho * kn + (1.0 - rho) if layout.mixed else 1.0
        grads.append(0.5 * np.sum(W * (sf2 * factor * dkc)))
        value += _gamma_logpdf(hp.ell_cmb, LENGTHSCALE_PRIOR)
        grads[-1] += LENGTHSCALE_PRIOR[0] - 1.0 - LENGTHSCALE_PRIOR[1] * hp.ell_cmb
    if layout.has_cnt:
        u = parts["u_cnt"]
        base = (5.0 / 3.0) * (1.0 + u) * np.exp(-u)
        factor = rho * kc + (1.0 - rho) if layout.mixed else 1.0
        weighted = W * (sf2 * factor * base)
        diffs = parts["diffs"]
        g = 0.5 * np.einsum("nm,nmp->p", weighted, diffs * diffs)
        for i, ell in enumerate(hp.ell_cnt[: layout.n_cont]):
            value += _gamma_logpdf(ell, LENGTHSCALE_PRIOR)
            g[i] += LENGTHSCALE_PRIOR[0] - 1.0 - LENGTHSCALE_PRIOR[1] * ell
        grads.extend(g)
    # signal variance: dK/dlog sf2 is the signal part itself
    grads.append(0.5 * np.sum(W * S) + SIGNAL_PRIOR[0] - 1.0 - SIGNAL_PRIOR[1] * sf2)
    value += _gamma_logpdf(sf2, SIGNAL_PRIOR)
    grads.append(0.5 * hp.noise_var * np.trace(W) + NOISE_PRIOR[0] - 1.0 - NOISE_PRIOR[1] * hp.noise_var)
    value += _gamma_logpdf(hp.noise_var, NOISE_PRIOR)
    if layout.mixed:
        dK = sf2 * (kc * kn - kc - kn) * rho * (1.0 - rho)
        grads.append(0.5 * np.sum(W * dK))
    return float(value), np.array(grads)


def sample_prior(layout: KernelLayout, rng: np.random.Generator) -> Hyperparameters:
    def gamma(prior, size=None):
        a, b = prior
        return rng.gamma(a, 1.0 / b, size=size)

    hp = Hyperparameters(
        ell_cmb=float(gamma(LENGTHSCALE_PRIOR)),
        ell_cnt=gamma(LENGTHSCALE_PRIOR, size=max(layout.n_cont, 1)),
        signal_var=float(gamma(SIGNAL_PRIOR)),
        noise_var=float(gamma(NOISE_PRIOR)),
        rho=float(rng.uniform()) if layout.mixed else 1.0,
    )
    return hp


def fit_map(
    ts: TrainingSet,
    layout: KernelLayout,
    restarts: int = 4,
    rng: np.random.Generator | int | None = None,
    init: Hyperparameters | None = None,
    maxiter: int = 200,
) -> Hyperparameters:
    """MAP hyperparameters: best of ``restarts`` bounded quasi-Newton ascents.

    The first start is ``init`` (or the prior mode); the rest are prior samples.
    """
    rng = np.random.default_rng(rng)
    bounds = _bounds(layout)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = [init if init is not None else Hyperparameters.default(layout)]
    starts += [sample_prior(layout, rng) for _ in range(max(restarts, 1) - 1)]

    def negative(theta):
        try:
            value, grad = log_map_objective(ts, theta, layout)
        except FittingError:
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    best_theta, best_value = None, -np.inf
    for hp0 in starts:
        theta0 = np.clip(hp0.to_vector(layout), lo, hi)
        if negative(theta0)[0] >= 1e25:
            continue
        res = optimize.minimize(
            negative,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": maxiter},
        )
        if np.isfinite(res.fun) and res.fun < 1e25 and -res.fun > best_value:
            best_value, best_theta = -float(res.fun), res.x
    if best_theta is None:
        raise FittingError("every hyperparameter restart failed")
    return Hyperparameters.from_vector(best_theta, layout)


class GaussianProcess:
    """Exact GP posterior for fixed hyperparameters (standardized output units)."""

    def __init__(self, ts: TrainingSet, hp: Hyperparameters, layout: KernelLayout):
        self.ts = ts
        self.hp = hp
        self.layout = layout
        K = kernel_matrix(ts.points, ts.points, hp, layout) + hp.noise_var * np.eye(len(ts))
        self.L, self.jitter = robust_cholesky(K)
        self.alpha = linalg.cho_solve((self.L, True), ts.y, check_finite=False)

    @property
    def prior_var(self) -> float:
        hp = self.hp
        return hp.signal_var * (hp.rho + 2 * (1 - hp.rho)) if self.layout.mixed else hp.signal_var

    def posterior(self, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint posterior mean and covariance of the latent function at ``Q``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Ks = kernel_matrix(Q, self.ts.points, self.hp, self.layout)
        mean = Ks @ self.alpha
        V = linalg.solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
        cov = kernel_matrix(Q, Q, self.hp, self.layout) - V.T @ V
        return mean, 0.5 * (cov + cov.T)

    def predict(self, Q: np.ndarray, chunk: int = 2048) -> tuple[np.ndarray, np.ndarray]:
        """Marginal posterior mean and variance, vectorized over rows of ``Q``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        means, vars_ = [], []
        chunk = max(1, min(chunk, int(4e6 / (len(self.ts) * max(self.layout.n_cont, 1)))))
        for start in range(0, len(Q), chunk):
            q = Q[start : start + chunk]
            Ks = kernel_matrix(q, self.ts.points, self.hp, self.layout)
            V = linalg.solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
            means.append(Ks @ self.alpha)
            vars_.append(np.maximum(self.prior_var - np.einsum("ij,ij->j", V, V), 0.0))
        return np.concatenate(means), np.concatenate(vars_)

    def _cross_grad(self, Q: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """k(Q, Y) and its derivative w.r.t. the continuous coordinates of Q.

        Returns ``K`` of shape (b, m) and ``dK`` of shape (b, m, p).
        """
        hp, layout = self.hp, self.layout
        parts = _parts(Q, Y, hp, layout)
        K = _combine(parts, hp, layout)
        if not layout.has_cnt:
            return K, np.zeros(K.shape + (0,))
        ell = hp.ell_cnt[: layout.n_cont]
        u = parts["u_cnt"]
        # d k_cnt / d q_i = -(5/3) (1 + u) exp(-u) (q_i - y_i) / ell_i^2
        base = -(5.0 / 3.0) * (1.0 + u) * np.exp(-u)
        dkn = base[:, :, None] * parts["diffs"] / ell
        factor = hp.rho * parts["k_cmb"] + (1.0 - hp.rho) if layout.mixed else 1.0
        factor = np.asarray(factor)
        if factor.ndim:
            factor = factor[:, :, None]
        return K, hp.signal_var * factor * dkn

    def predict_with_grad(self, q: np.ndarray):
        """Mean, variance and their gradients w.r.t. the continuous coordinates of ``q``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        Ks, dKs = self._cross_grad(q, self.ts.points)
        mean = float(Ks[0] @ self.alpha)
        A = linalg.cho_solve((self.L, True), Ks[0], check_finite=False)
        var = float(self.prior_var - Ks[0] @ A)
        dmean = dKs[0].T @ self.alpha
        dvar = -2.0 * dKs[0].T @ A
        return mean, max(var, 0.0), dmean, dvar

    def joint_with_grad(self, Q: np.ndarray):
        """Joint posterior of a batch plus forward derivatives.

        Returns ``mean`` (b,), ``cov`` (b, b), ``dmean`` (b, p) where
        ``dmean[a, i]`` is d mean_a / d Q[a, i], and ``dcov`` (b, p, b, b) with
        ``dcov[a, i]`` the derivative of the covariance w.r.t. ``Q[a, i]``.
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        b = len(Q)
        p = self.layout.n_cont
        Ks, dKs = self._cross_grad(Q, self.ts.points)
        Kqq, dKqq = self._cross_grad(Q, Q)
        A = linalg.cho_solve((self.L, True), Ks.T, check_finite=False)
        mean = Ks @ self.alpha
        cov = Kqq - Ks @ A
        cov = 0.5 * (cov + cov.T)
        dmean = np.einsum("anp,n->ap", dKs, self.alpha)
        # row a of d cov / d Q[a, i]: dKqq[a, :, i] - dKs[a, :, i] @ A
        rows = dKqq - np.einsum("anp,nc->acp", dKs, A)
        dcov = np.zeros((b, p, b, b))
        for a in range(b):
            for i in range(p):
                r = rows[a, :, i].copy()
                r[a] = -2.0 * dKs[a, :, i] @ A[:, a]
                dcov[a, i, a, :] = r
                dcov[a, i, :, a] = r
        return mean, cov, dmean, dcov


def fit_model(
    ts: TrainingSet,
    layout: KernelLayout,
    restarts: int = 4,
    rng: np.random.Generator | int | None = None,
    init: Hyperparameters | None = None,
) -> GaussianProcess:
    hp = fit_map(ts, layout, restarts=restarts, rng=rng, init=init)
    return GaussianProcess(ts, hp, layout)

