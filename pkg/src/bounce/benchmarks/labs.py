"""Low-autocorrelation binary sequences."""

from __future__ import annotations

import numpy as np

from ..space import InputSpace, VariableSpec
from .base import Benchmark


def autocorrelation_energy(x: np.ndarray) -> np.ndarray:
    """E(x) = sum_k C_k(x)^2 for +-1 sequences; batched over leading dims."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    E = np.zeros(x.shape[:-1])
    for k in range(1, n):
        C = np.einsum("...i,...i->...", x[..., : n - k], x[..., k:])
        E = E + C * C
    return E

def merit_factor(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return n * n / (2.0 * autocorrelation_energy(x))

def labs_value(x: np.ndarray) -> float:
    if np.any(np.abs(x) != 1.0):
        raise ValueError("LABS expects a +-1 vector")
    return -float(merit_factor(x))

def labs(n: int = 50) -> Benchmark:
    """Negative merit factor of a length-``n`` binary sequence."""
    if n < 2:
        raise ValueError("LABS needs n >= 2")
    return Benchmark(f"labs{n}", InputSpace([VariableSpec.binary()] * n), labs_value)

def labs_brute_force(n: int, chunk: int = 1 << 14) -> tuple[float, np.ndarray]:
    """Exhaustive maximum merit factor and one maximizer (n up to ~20)."""
    best, arg = -np.inf, None
    # x_0 = +1 is enough: F(x) = F(-x)
    total = 1 << (n - 1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        bits = (idx[:, None] >> np.arange(n - 1)) & 1
        X = np.hstack([np.ones((len(idx), 1)), 1.0 - 2.0 * bits])
        F = merit_factor(X)
        i = int(np.argmax(F))
        if F[i] > best:
            best, arg = float(F[i]), X[i]
    return best, arg

__all__ = ["labs", "labs_value", "merit_factor", "autocorrelation_energy", "labs_brute_force"]
