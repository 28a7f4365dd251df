"""Probabilities for dictionary-based embeddings of binary and categorical spaces.

A dictionary holds ``m`` anchor vectors of length ``D``. For binary spaces we
ask how likely at least one anchor has sequency zero (all entries equal); for
categorical spaces how likely an anchor is constant, and how a floor-based
allocation of categories skews the label frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class DictionaryModel:
    D: int
    m: int
    tau: int = 2

    def __post_init__(self) -> None:
        if self.D < 1 or self.m < 1 or self.tau < 2:
            raise ValueError("need D >= 1, m >= 1, tau >= 2")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    trials: int


def _at_least_one(q: float, m: int) -> float:
    """1 - (1 - q)^m, accurate for tiny q and large m."""
    if m == 0:
        return 0.0
    if q >= 1.0:
        return 1.0
    return float(-math.expm1(m * math.log1p(-q)))


def p_zero_sequency(D: int, m: int) -> float:
    """Chance that at least one of ``m`` binary anchors is constant."""
    if D < 1 or m < 0:
        raise ValueError("need D >= 1 and m >= 0")
    return _at_least_one(2.0 / (D + 1), m)


def constant_anchor_probability(D: int, tau: int, specific: bool = False) -> float:
    """Probability that one anchor is constant, with theta ~ Dirichlet(1).

    With ``specific=False`` any of the ``tau`` labels counts, giving
    ``D! tau! / (tau + D - 1)!``; with ``specific=True`` only one given label
    counts, which is smaller by a factor ``tau``.
    """
    if D < 1 or tau < 2:
        raise ValueError("need D >= 1 and tau >= 2")
    log_q = special.gammaln(D + 1) + special.gammaln(tau + 1) - special.gammaln(tau + D)
    if specific:
        log_q -= math.log(tau)
    return float(min(1.0, math.exp(log_q)))


def p_all_one_category(D: int, m: int, tau: int, specific: bool = False) -> float:
    """Chance that at least one of ``m`` categorical anchors is constant."""
    if m < 0:
        raise ValueError("need m >= 0")
    return _at_least_one(constant_anchor_probability(D, tau, specific), m)


def _dirichlet(rng: np.random.Generator, n: int, tau: int) -> np.ndarray:
    # normalized unit exponentials
    e = rng.exponential(size=(n, tau))
    return e / e.sum(axis=1, keepdims=True)


def simulate_all_one_category(D: int, m: int, tau: int, trials: int, seed: int = 0,
                              chunk: int = 20_000) -> Estimate:
    """Monte-Carlo estimate of :func:`p_all_one_category` (any label).

    Each anchor draws its own theta; its ``D`` entries are i.i.d. labels.
    """
    rng = np.random.default_rng(seed)
    hits = np.empty(trials, dtype=bool)
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        theta = _dirichlet(rng, n * m, tau)
        cum = np.cumsum(theta, axis=1)
        u = rng.random((n * m, D))
        labels = (u[:, :, None] > cum[:, None, :-1]).sum(axis=2)
        constant = np.all(labels == labels[:, :1], axis=1).reshape(n, m)
        hits[start : start + n] = constant.any(axis=1)
    p = hits.mean()
    return Estimate(float(p), float(np.sqrt(p * (1 - p) / trials)), trials)


def simulate_zero_sequency(D: int, m: int, trials: int, seed: int = 0, chunk: int = 20_000) -> Estimate:
    """Monte-Carlo estimate of :func:`p_zero_sequency`.

    Each anchor draws theta ~ U(0, 1) and ``D`` i.i.d. Bernoulli(theta) bits.
    """
    rng = np.random.default_rng(seed)
    hits = np.empty(trials, dtype=bool)
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        theta = rng.random((n * m, 1))
        bits = rng.random((n * m, D)) < theta
        constant = (bits.all(axis=1) | ~bits.any(axis=1)).reshape(n, m)
        hits[start : start + n] = constant.any(axis=1)
    p = hits.mean()
    return Estimate(float(p), float(np.sqrt(p * (1 - p) / trials)), trials)


@dataclass(frozen=True)
class BiasHistogram:
    """Per-label frequencies and count histograms from the allocation simulation.

    ``counts[t, k]`` is how many trials put exactly ``k`` entries into label
    ``t + 1``.
    """

    frequencies: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    trials: int

    def to_csv(self) -> str:
        tau, width = self.counts.shape
        lines = ["category,frequency,stderr," + ",".join(f"n{k}" for k in range(width))]
        for t in range(tau):
            cells = [str(t + 1), f"{self.frequencies[t]:.17g}", f"{self.stderr[t]:.17g}"]
            cells += [str(int(c)) for c in self.counts[t]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _allocate_floor(theta: np.ndarray, D: int) -> np.ndarray:
    alloc = np.floor(D * theta[:, :-1]).astype(int)
    last = D - alloc.sum(axis=1, keepdims=True)
    return np.hstack([alloc, last])


def _allocate_largest_remainder(theta: np.ndarray, D: int) -> np.ndarray:
    exact = D * theta
    alloc = np.floor(exact).astype(int)
    short = D - alloc.sum(axis=1)
    frac = exact - alloc
    order = np.argsort(-frac, axis=1, kind="stable")
    ranks = np.argsort(order, axis=1, kind="stable")
    return alloc + (ranks < short[:, None])


def rounding_bias_histogram(D: int, tau: int, trials: int, seed: int = 0, unbiased: bool = False,
                            chunk: int = 200_000) -> BiasHistogram:
    """Simulate per-anchor label counts for theta ~ Dirichlet(1).

    The default allocation gives ``floor(D * theta_t)`` entries to each label
    but the last, which takes the remainder. ``unbiased=True`` switches to a
    largest-remainder allocation as a control.
    """
    if trials < 1 or D < 1 or tau < 2:
        raise ValueError("need trials >= 1, D >= 1, tau >= 2")
    rng = np.random.default_rng(seed)
    allocate = _allocate_largest_remainder if unbiased else _allocate_floor
    total = np.zeros(tau)
    total_sq = np.zeros(tau)
    counts = np.zeros((tau, D + 1), dtype=np.int64)
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        alloc = allocate(_dirichlet(rng, n, tau), D)
        frac = alloc / D
        total += frac.sum(axis=0)
        total_sq += (frac * frac).sum(axis=0)
        for t in range(tau):
            counts[t] += np.bincount(alloc[:, t], minlength=D + 1)
    mean = total / trials
    var = np.maximum(total_sq / trials - mean * mean, 0.0)
    return BiasHistogram(mean, np.sqrt(var / trials), counts, trials)
