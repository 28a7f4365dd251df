"""Scenario simulators: contamination control and pest control.

All scenario randomness is drawn once from the instance seed with the
legacy ``RandomState`` generator so the published anchor values reproduce.
"""

from __future__ import annotations

import numpy as np

from ..space import InputSpace, VariableSpec
from .base import Benchmark

N_SIMULATIONS = 100


# -- contamination -----------------------------------------------------------

CONTAMINATION_STAGES = 25
CONTAMINATION_U = 0.1
CONTAMINATION_EPSILON = 0.05


def contamination_dynamics(seed: int, n_stages: int = CONTAMINATION_STAGES, n_sim: int = N_SIMULATIONS):
    """Initial contamination, contamination rates and restoration rates."""
    init_Z = np.random.RandomState(seed).beta(1.0, 30.0, size=(n_sim,))
    lambdas = np.random.RandomState(seed).beta(1.0, 17.0 / 3.0, size=(n_stages, n_sim))
    gammas = np.random.RandomState(seed).beta(1.0, 3.0 / 7.0, size=(n_stages, n_sim))
    return init_Z, lambdas, gammas


def contamination_levels(x: np.ndarray, init_Z: np.ndarray, lambdas: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Contaminated fraction after every stage, shape (n_stages, n_sim); ``x`` in {0, 1}."""
    Z = np.zeros(lambdas.shape)
    prev = init_Z
    for i in range(len(x)):
        Z[i] = lambdas[i] * (1.0 - x[i]) * (1.0 - prev) + (1.0 - gammas[i] * x[i]) * prev
        prev = Z[i]
    return Z


def contamination(seed: int = 0, lamda: float = 0.0, cost: float = 1.0) -> Benchmark:
    """25 binary prevention decisions; cost plus chance-constraint violations.

    ``+1`` means "prevent" at a stage.
    """
    init_Z, lambdas, gammas = contamination_dynamics(seed)

    def evaluate(x: np.ndarray) -> float:
        b = (np.asarray(x) > 0).astype(float)
        Z = contamination_levels(b, init_Z, lambdas, gammas)
        constraints = np.mean(Z < CONTAMINATION_U, axis=1) - (1.0 - CONTAMINATION_EPSILON)
        return float(np.sum(b * cost - constraints) + lamda * b.sum())

    space = InputSpace([VariableSpec.binary()] * CONTAMINATION_STAGES)
    return Benchmark("contamination", space, evaluate, seed)


# -- pest control ------------------------------------------------------------

PEST_STAGES = 25
PEST_CHOICES = 5
PEST_U = 0.1
CONTROL_PRICE = {1: 1.0, 2: 0.8, 3: 0.7, 4: 0.5}
CONTROL_MAX_DISCOUNT = {1: 0.2, 2: 0.3, 3: 0.3, 4: 0.0}
CONTROL_BETA = {1: 2.0 / 7.0, 2: 3.0 / 7.0, 3: 3.0 / 7.0, 4: 5.0 / 7.0}
TOLERANCE_RATE = {1: 1.0 / 7.0, 2: 2.5 / 7.0, 3: 2.0 / 7.0, 4: 0.5 / 7.0}


def pest_control_score(actions: np.ndarray, seed: int = 0, n_sim: int = N_SIMULATIONS) -> float:
    """Total pesticide cost plus the pest-above-threshold measure.

    ``actions`` holds 0 (no control) or pesticide types 1..4 per station.
    """
    actions = np.asarray(actions, dtype=int)
    n_stages = actions.size
    beta = dict(CONTROL_BETA)
    cur = np.random.RandomState(seed).beta(1.0, 30.0, size=(n_sim,))
    price_sum = 0.0
    above = 0.0
    for i in range(n_stages):
        a = int(actions[i])
        spread = np.random.RandomState(seed).beta(1.0, 17.0 / 3.0, size=(n_sim,))
        if a > 0:
            rate = np.random.RandomState(seed).beta(1.0, beta[a], size=(n_sim,))
            nxt = (1.0 - rate) * cur
            # pests develop tolerance to the pesticide just used
            beta[a] += TOLERANCE_RATE[a] / n_stages
            price_sum += CONTROL_PRICE[a] * (1.0 - CONTROL_MAX_DISCOUNT[a] / n_stages * np.sum(actions == a))
        else:
            nxt = spread * (1.0 - cur) + cur
        above += np.mean(cur > PEST_U)
        cur = nxt
    return float(price_sum + above)


def pest_control(seed: int = 0) -> Benchmark:
    """25 stations, 5 choices each; label ``k`` selects action ``k - 1``."""

    def evaluate(x: np.ndarray) -> float:
        return pest_control_score(np.asarray(x, dtype=int) - 1, seed)

    space = InputSpace([VariableSpec.categorical(PEST_CHOICES)] * PEST_STAGES)
    return Benchmark("pestcontrol", space, evaluate, seed)
