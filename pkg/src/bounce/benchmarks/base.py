"""Benchmark container, optimum randomization and the random-search baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..optimizer import RunRecord
from ..space import InputSpace, Kind


@dataclass(frozen=True)
class Benchmark:
    """A deterministic objective over a normalized input space (minimization)."""

    name: str
    space: InputSpace
    evaluate: Callable[[np.ndarray], float] = field(repr=False)
    instance_seed: int | None = None
    optimum: float | None = None

    def __call__(self, x: np.ndarray) -> float:
        return float(self.evaluate(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class Randomization:
    """XOR mask for binary dims and label permutations for categorical/ordinal dims.

    ``apply`` maps a point of the wrapped benchmark to the base benchmark.
    """

    flip: np.ndarray
    perms: tuple[np.ndarray | None, ...]

    def apply(self, y: np.ndarray) -> np.ndarray:
        x = np.array(y, dtype=float)
        x[..., self.flip] *= -1.0
        for i, perm in enumerate(self.perms):
            if perm is not None:
                x[..., i] = perm[y[..., i].astype(int) - 1]
        return x

    def invert(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float)
        y[..., self.flip] *= -1.0
        for i, perm in enumerate(self.perms):
            if perm is not None:
                inv = np.argsort(perm) + 1
                y[..., i] = inv[x[..., i].astype(int) - 1]
        return y

    @classmethod
    def identity(cls, space: InputSpace) -> "Randomization":
        return cls(np.zeros(space.dim, dtype=bool), tuple(None for _ in range(space.dim)))

    @classmethod
    def sample(cls, space: InputSpace, seed: int) -> "Randomization":
        rng = np.random.default_rng(seed)
        flip = np.zeros(space.dim, dtype=bool)
        perms: list[np.ndarray | None] = []
        for i, v in enumerate(space.variables):
            if v.kind is Kind.BINARY:
                flip[i] = rng.random() < 0.5
                perms.append(None)
            elif v.kind.has_labels:
                perms.append(rng.permutation(v.cardinality) + 1.0)
            else:
                perms.append(None)
        return cls(flip, tuple(perms))


def randomize_optimum(bench: Benchmark, seed: int, randomization: Randomization | None = None) -> Benchmark:
    """Relocate the optimum by a fixed bijection of the combinatorial coordinates."""
    if bench.space.n_comb == 0:
        raise ValueError(f"{bench.name} has no combinatorial variables to randomize")
    psi = randomization or Randomization.sample(bench.space, seed)
    base = bench.evaluate

    def evaluate(y: np.ndarray) -> float:
        return base(psi.apply(np.asarray(y, dtype=float)))

    wrapped = Benchmark(f"{bench.name}-rand{seed}", bench.space, evaluate, bench.instance_seed, bench.optimum)
    object.__setattr__(wrapped, "randomization", psi)
    return wrapped


def random_search_baseline(bench: Benchmark, budget: int, seed: int) -> list[RunRecord]:
    """I.i.d. uniform samples from the space, recorded like an optimizer run."""
    rng = np.random.default_rng(seed)
    X = bench.space.sample_uniform(rng, budget)
    records = []
    best = np.inf
    for i, x in enumerate(X, start=1):
        v = bench(x)
        best = min(best, v)
        records.append(RunRecord(seed, i, i - 1, bench.space.dim, tuple(map(float, x)), v, best,
                                 float("nan"), float("nan"), 0))
    return records
