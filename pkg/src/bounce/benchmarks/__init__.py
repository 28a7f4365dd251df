"""Benchmark objectives addressable by name.

Registered names: ``labs`` (n=50) or ``labs<n>``, ``maxsat60``,
``maxsat<n>`` (crafted family on n variables), ``wcnf`` (any file given via
``wcnf_path``), ``clusterexpansion`` (looked up in the WCNF data directory),
``contamination``, ``pestcontrol`` and ``ackley53``.
"""

from __future__ import annotations

import re
from pathlib import Path

from .base import Benchmark, Randomization, random_search_baseline, randomize_optimum
from .labs import autocorrelation_energy, labs, labs_brute_force, labs_value, merit_factor
from .maxsat import (
    WcnfError,
    WcnfInstance,
    crafted_maxsat,
    maxsat60,
    maxsat_benchmark,
    maxsat_value,
    parse_wcnf,
    parse_wcnf_text,
    random_pairs,
    wcnf_data_dir,
)
from .simulators import contamination, pest_control, pest_control_score
from .synthetic import ackley, ackley53

# pair density of the 60-variable instance: 638 of 1770 possible pairs
CRAFTED_PAIR_DENSITY = 638 / (60 * 59 / 2)

NAMES = ("labs", "maxsat60", "wcnf", "clusterexpansion", "contamination", "pestcontrol", "ackley53")


class UnknownBenchmark(KeyError):
    pass


def crafted_instance(n_vars: int, seed: int = 0) -> WcnfInstance:
    if n_vars == 60:
        return maxsat60(seed)
    n_pairs = round(CRAFTED_PAIR_DENSITY * n_vars * (n_vars - 1) / 2)
    return crafted_maxsat(random_pairs(n_vars, n_pairs, seed), n_vars)


def _find_cluster_expansion() -> Path:
    root = wcnf_data_dir()
    if root is None or not root.is_dir():
        raise FileNotFoundError("set BOUNCE_WCNF_DIR to a directory holding the ClusterExpansion .wcnf file")
    matches = sorted(p for p in root.glob("*.wcnf") if "cluster" in p.name.lower())
    if not matches:
        raise FileNotFoundError(f"no cluster*.wcnf file in {root}")
    return matches[0]


def get_benchmark(name: str, wcnf_path: str | None = None, instance_seed: int = 0,
                  randomize_seed: int | None = None) -> Benchmark:
    """Build a benchmark by name, optionally with a randomized optimum."""
    key = name.lower()
    if key == "labs":
        bench = labs(50)
    elif m := re.fullmatch(r"labs(\d+)", key):
        bench = labs(int(m.group(1)))
    elif m := re.fullmatch(r"maxsat(\d+)", key):
        n = int(m.group(1))
        bench = maxsat_benchmark(crafted_instance(n, instance_seed), key)
    elif key == "wcnf":
        if not wcnf_path:
            raise UnknownBenchmark("benchmark 'wcnf' needs a WCNF file path")
        bench = maxsat_benchmark(parse_wcnf(wcnf_path), Path(wcnf_path).stem)
    elif key == "clusterexpansion":
        path = Path(wcnf_path) if wcnf_path else _find_cluster_expansion()
        bench = maxsat_benchmark(parse_wcnf(path), "clusterexpansion")
    elif key == "contamination":
        bench = contamination(instance_seed)
    elif key == "pestcontrol":
        bench = pest_control(instance_seed)
    elif key == "ackley53":
        bench = ackley53()
    else:
        raise UnknownBenchmark(f"unknown benchmark {name!r}; known: {', '.join(NAMES)}")
    if randomize_seed is not None:
        bench = randomize_optimum(bench, randomize_seed)
    return bench


__all__ = [
    "Benchmark", "Randomization", "randomize_optimum", "random_search_baseline",
    "labs", "labs_value", "labs_brute_force", "merit_factor", "autocorrelation_energy",
    "WcnfError", "WcnfInstance", "parse_wcnf", "parse_wcnf_text", "maxsat_benchmark", "maxsat_value",
    "crafted_maxsat", "crafted_instance", "maxsat60", "random_pairs", "wcnf_data_dir",
    "contamination", "pest_control", "pest_control_score", "ackley", "ackley53",
    "get_benchmark", "UnknownBenchmark", "NAMES",
]
