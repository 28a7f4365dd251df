"""Weighted MaxSAT: DIMACS-WCNF ingestion and the crafted 60-variable family."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..space import InputSpace, VariableSpec
from .base import Benchmark


class WcnfError(ValueError):
    pass


@dataclass(frozen=True)
class WcnfInstance:
    num_vars: int
    weights: np.ndarray
    clauses: tuple[tuple[int, ...], ...]
    normalized_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.clauses):
            raise WcnfError("one weight per clause required")
        for c in self.clauses:
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise WcnfError(f"literal {lit} outside 1..{self.num_vars}")
        object.__setattr__(self, "weights", w)
        std = w.std() if len(w) else 0.0
        norm = (w - w.mean()) / std if std > 0 else w - w.mean()
        object.__setattr__(self, "normalized_weights", norm)

    def satisfied(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of satisfied clauses for a +-1 assignment (+1 is true)."""
        x = np.asarray(x)
        truth = x > 0
        out = np.zeros(len(self.clauses), dtype=bool)
        for k, clause in enumerate(self.clauses):
            for lit in clause:
                if truth[abs(lit) - 1] == (lit > 0):
                    out[k] = True
                    break
        return out

    def to_text(self) -> str:
        lines = [f"p wcnf {self.num_vars} {len(self.clauses)}"]
        for w, c in zip(self.weights, self.clauses):
            lines.append(" ".join([repr(float(w))] + [str(l) for l in c] + ["0"]))
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def parse_wcnf_text(text: str) -> WcnfInstance:
    num_vars = n_clauses = None
    weights: list[float] = []
    clauses: list[tuple[int, ...]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        tokens = line.split()
        if tokens[0] == "p":
            if len(tokens) < 4 or tokens[1] != "wcnf" or num_vars is not None:
                raise WcnfError(f"line {lineno}: bad header {line!r}")
            try:
                num_vars, n_clauses = int(tokens[2]), int(tokens[3])
            except ValueError:
                raise WcnfError(f"line {lineno}: bad header {line!r}") from None
            continue
        if num_vars is None:
            raise WcnfError(f"line {lineno}: clause before header")
        try:
            w = float(tokens[0])
            lits = [int(t) for t in tokens[1:]]
        except ValueError:
            raise WcnfError(f"line {lineno}: malformed clause {line!r}") from None
        if not lits or lits[-1] != 0 or 0 in lits[:-1]:
            raise WcnfError(f"line {lineno}: clause must end with a single 0")
        lits = lits[:-1]
        if not lits:
            raise WcnfError(f"line {lineno}: empty clause")
        bad = [l for l in lits if abs(l) > num_vars]
        if bad:
            raise WcnfError(f"line {lineno}: literal {bad[0]} outside 1..{num_vars}")
        weights.append(w)
        clauses.append(tuple(lits))
    if num_vars is None:
        raise WcnfError("missing 'p wcnf' header")
    if n_clauses is not None and n_clauses != len(clauses):
        raise WcnfError(f"header announces {n_clauses} clauses, found {len(clauses)}")
    return WcnfInstance(num_vars, np.array(weights), tuple(clauses))


def parse_wcnf(path: str | os.PathLike) -> WcnfInstance:
    return parse_wcnf_text(Path(path).read_text())


def _objective(inst: WcnfInstance):
    n = inst.num_vars
    m = len(inst.clauses)
    # literal incidence: clause k is satisfied iff P[k] @ t + N[k] @ (1 - t) > 0
    P = np.zeros((m, n))
    N = np.zeros((m, n))
    for k, clause in enumerate(inst.clauses):
        for lit in clause:
            (P if lit > 0 else N)[k, abs(lit) - 1] = 1.0
    w = inst.normalized_weights

    def evaluate(x: np.ndarray) -> float:
        t = (np.asarray(x, dtype=float) > 0).astype(float)
        sat = (P @ t + N @ (1.0 - t)) > 0
        return -float(w[sat].sum())

    return evaluate


def maxsat_benchmark(inst: WcnfInstance, name: str = "maxsat") -> Benchmark:
    """Negative total normalized weight of satisfied clauses."""
    space = InputSpace([VariableSpec.binary()] * inst.num_vars)
    return Benchmark(name, space, _objective(inst))


def maxsat_value(inst: WcnfInstance, x: Sequence[float]) -> float:
    return -float(inst.normalized_weights[inst.satisfied(np.asarray(x))].sum())


def random_pairs(n_vars: int, n_pairs: int, seed: int) -> list[tuple[int, int]]:
    """Distinct unordered variable pairs (1-based), drawn without replacement."""
    total = n_vars * (n_vars - 1) // 2
    if n_pairs > total:
        raise ValueError(f"only {total} distinct pairs exist among {n_vars} variables")
    rng = np.random.default_rng(seed)
    i, j = np.triu_indices(n_vars, k=1)
    pick = np.sort(rng.choice(total, size=n_pairs, replace=False))
    return [(int(i[p]) + 1, int(j[p]) + 1) for p in pick]


def crafted_maxsat(pairs: Iterable[tuple[int, int]], n_vars: int = 60, pair_weight: float = 61.0) -> WcnfInstance:
    """Unit clauses ``x_i`` (weight 1) plus ``not x_i or not x_j`` per pair (heavy weight)."""
    pairs = list(pairs)
    clauses: list[tuple[int, ...]] = [(i,) for i in range(1, n_vars + 1)]
    weights = [1.0] * n_vars
    for i, j in pairs:
        if i == j:
            raise WcnfError(f"pair ({i}, {j}) repeats a variable")
        clauses.append((-i, -j))
        weights.append(pair_weight)
    return WcnfInstance(n_vars, np.array(weights), tuple(clauses))


def maxsat60(seed: int = 0, n_pairs: int = 638) -> WcnfInstance:
    return crafted_maxsat(random_pairs(60, n_pairs, seed), 60)


def wcnf_data_dir() -> Path | None:
    path = os.environ.get("BOUNCE_WCNF_DIR")
    return Path(path) if path else None
