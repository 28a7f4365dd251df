"""Ackley function over 50 binary and 3 continuous variables."""

from __future__ import annotations

import numpy as np

from ..space import InputSpace, VariableSpec
from .base import Benchmark


def ackley(z: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2.0 * np.pi) -> float:
    z = np.asarray(z, dtype=float)
    d = z.size
    term1 = -a * np.exp(-b * np.sqrt(np.sum(z * z) / d))
    term2 = -np.exp(np.sum(np.cos(c * z)) / d)
    return float(term1 + term2 + a + np.e)


def ackley53(n_binary: int = 50, n_continuous: int = 3) -> Benchmark:
    """Binary entries map -1 -> 0 and +1 -> 1; continuous entries live in [-1, 1]."""
    space = InputSpace([VariableSpec.binary()] * n_binary + [VariableSpec.continuous(-1.0, 1.0)] * n_continuous)

    def evaluate(x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        z = x.copy()
        z[:n_binary] = (x[:n_binary] + 1.0) / 2.0
        return ackley(z)

    return Benchmark("ackley53", space, evaluate, optimum=0.0)
