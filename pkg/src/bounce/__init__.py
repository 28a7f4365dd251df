"""Bayesian optimization over mixed and combinatorial spaces with nested random embeddings."""

from .embedding import (
    Bin,
    Embedding,
    StageSchedule,
    compute_schedule,
    increase_embedding,
    initial_embedding,
    lift_observations,
)
from .optimizer import Bounce, BounceConfig, RunRecord, TrustRegionState
from .space import InputSpace, Kind, VariableSpec, denormalize, hamming_distance, normalize, parse_space

__all__ = [
    "Bin", "Embedding", "StageSchedule", "compute_schedule", "increase_embedding", "initial_embedding",
    "lift_observations", "Bounce", "BounceConfig", "RunRecord", "TrustRegionState", "InputSpace", "Kind",
    "VariableSpec", "denormalize", "hamming_distance", "normalize", "parse_space",
]
