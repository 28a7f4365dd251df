"""Nested random embeddings of mixed input spaces.

Every input dimension is assigned to exactly one *bin* (target dimension).
A bin only holds variables of one kind. Continuous and binary members take
the bin value times their random sign; categorical and ordinal members map
the bin label ``k`` to ``ceil(k * c_i / c_max)`` and then through a random
permutation of their own categories.

Splitting a bin never changes the signs, permutations or bin cardinality of
its members, so every point of a coarse target space has an exact
counterpart in the refined one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .space import InputSpace, Kind, KINDS


class EmbeddingError(ValueError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Bin:
    kind: Kind
    members: tuple[int, ...]
    # c_max for categorical/ordinal bins, 2 for binary, 0 for continuous
    cardinality: int = 0

    def __post_init__(self) -> None:
        if not self.members:
            raise EmbeddingError("bins must be non-empty")


@dataclass(frozen=True, eq=False)
class Embedding:
    space: InputSpace
    bins: tuple[Bin, ...]
    signs: np.ndarray
    shuffles: tuple[np.ndarray | None, ...]
    low_sequency: bool = False
    _bin_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        bin_of = np.full(self.space.dim, -1, dtype=int)
        for j, b in enumerate(self.bins):
            for i in b.members:
                if bin_of[i] != -1:
                    raise EmbeddingError(f"input dimension {i} is in more than one bin")
                if self.space.variables[i].kind is not b.kind:
                    raise EmbeddingError(f"bin {j} mixes variable kinds")
                bin_of[i] = j
        if np.any(bin_of < 0):
            raise EmbeddingError("every input dimension must belong to a bin")
        object.__setattr__(self, "_bin_of", bin_of)
        self.signs.setflags(write=False)

    @property
    def target_dim(self) -> int:
        return len(self.bins)

    @property
    def input_dim(self) -> int:
        return self.space.dim

    @property
    def bin_of(self) -> np.ndarray:
        return self._bin_of

    @property
    def kinds(self) -> list[Kind]:
        return [b.kind for b in self.bins]

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([b.cardinality for b in self.bins], dtype=int)

    @property
    def continuous_mask(self) -> np.ndarray:
        return np.array([b.kind is Kind.CONTINUOUS for b in self.bins], dtype=bool)

    @property
    def combinatorial_mask(self) -> np.ndarray:
        return ~self.continuous_mask

    def kind_mask(self, kind: Kind) -> np.ndarray:
        return np.array([b.kind is kind for b in self.bins], dtype=bool)

    def is_valid_target(self, t: Sequence[float]) -> bool:
        t = np.asarray(t, dtype=float)
        if t.shape != (self.target_dim,):
            return False
        for b, v in zip(self.bins, t):
            if b.kind is Kind.CONTINUOUS:
                if not -1.0 <= v <= 1.0:
                    return False
            elif b.kind is Kind.BINARY:
                if v not in (-1.0, 1.0):
                    return False
            elif v != round(v) or not 1 <= v <= b.cardinality:
                return False
        return True

    def project_up(self, t: np.ndarray) -> np.ndarray:
        """Map target point(s) of shape ``(..., d)`` to input point(s) ``(..., D)``."""
        t = np.asarray(t, dtype=float)
        v = t[..., self._bin_of]
        x = v * self.signs
        card = self.space.cardinalities
        for j, b in enumerate(self.bins):
            if not b.kind.has_labels:
                continue
            for i in b.members:
                k = v[..., i].astype(int)
                # integer ceil(k * c_i / c_max)
                label = (k * card[i] + b.cardinality - 1) // b.cardinality
                x[..., i] = self.shuffles[i][label - 1]
        return x

    def to_text(self) -> str:
        """Deterministic text form (bins, signs, category permutations)."""
        lines = [f"embedding D={self.input_dim} d={self.target_dim} low_sequency={int(self.low_sequency)}"]
        for b in self.bins:
            lines.append(f"bin {b.kind.value} {b.cardinality} " + ",".join(map(str, b.members)))
        lines.append("signs " + "".join("+" if s > 0 else "-" for s in self.signs))
        for i, perm in enumerate(self.shuffles):
            if perm is not None:
                lines.append(f"shuffle {i} " + ",".join(str(int(p)) for p in perm))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, space: InputSpace, text: str) -> "Embedding":
        bins: list[Bin] = []
        signs = None
        shuffles: list[np.ndarray | None] = [None] * space.dim
        low_sequency = False
        for line in text.strip().splitlines():
            head, _, rest = line.partition(" ")
            if head == "embedding":
                fields = dict(f.split("=") for f in rest.split())
                if int(fields["D"]) != space.dim:
                    raise EmbeddingError("embedding does not match the space dimension")
                low_sequency = bool(int(fields["low_sequency"]))
            elif head == "bin":
                kind, card, members = rest.split(" ")
                bins.append(Bin(Kind(kind), tuple(int(m) for m in members.split(",")), int(card)))
            elif head == "signs":
                signs = np.array([1.0 if c == "+" else -1.0 for c in rest.strip()])
            elif head == "shuffle":
                idx, perm = rest.split(" ")
                shuffles[int(idx)] = np.array([int(p) for p in perm.split(",")])
            else:
                raise EmbeddingError(f"unknown record {head!r}")
        if signs is None or len(signs) != space.dim:
            raise EmbeddingError("missing or malformed signs record")
        return cls(space, tuple(bins), signs, tuple(shuffles), low_sequency)


def _allocate(counts: dict[Kind, int], d: int) -> dict[Kind, int]:
    """Split ``d`` target dims across kinds proportionally, at least one each."""
    total = sum(counts.values())
    quota = {k: d * c / total for k, c in counts.items()}
    alloc = {k: min(c, max(1, math.floor(quota[k]))) for k, c in counts.items()}
    # largest-remainder fill-up / trim-down in canonical kind order
    while sum(alloc.values()) < d:
        open_kinds = [k for k in counts if alloc[k] < counts[k]]
        k = max(open_kinds, key=lambda k: (quota[k] - alloc[k], -KINDS.index(k)))
        alloc[k] += 1
    while sum(alloc.values()) > d:
        shrinkable = [k for k in counts if alloc[k] > 1]
        k = min(shrinkable, key=lambda k: (quota[k] - alloc[k], KINDS.index(k)))
        alloc[k] -= 1
    return alloc


def _partition(members: Sequence[int], n_parts: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    # random permutation, then near-equal chunks: every part non-empty
    perm = rng.permutation(np.asarray(members, dtype=int))
    return [tuple(sorted(int(m) for m in chunk)) for chunk in np.array_split(perm, n_parts)]


def initial_embedding(
    space: InputSpace,
    d_init: int,
    low_sequency: bool = False,
    rng: np.random.Generator | int | None = None,
) -> Embedding:
    rng = np.random.default_rng(rng)
    present = space.present_kinds()
    if not 1 <= d_init <= space.dim:
        raise EmbeddingError(f"d_init must be in [1, {space.dim}], got {d_init}")
    if d_init < len(present):
        raise EmbeddingError(
            f"d_init={d_init} cannot hold {len(present)} variable kinds in homogeneous bins"
        )
    alloc = _allocate({k: space.count(k) for k in present}, d_init)
    card = space.cardinalities
    bins: list[Bin] = []
    for kind in present:
        for members in _partition(space.indices(kind), alloc[kind], rng):
            c_max = int(card[list(members)].max()) if kind is not Kind.CONTINUOUS else 0
            bins.append(Bin(kind, members, c_max))

    signs = np.ones(space.dim)
    shuffles: list[np.ndarray | None] = [None] * space.dim
    for i, v in enumerate(space.variables):
        if v.kind.has_labels:
            shuffles[i] = np.arange(1, v.cardinality + 1)
            if not low_sequency:
                shuffles[i] = rng.permutation(shuffles[i])
        elif not low_sequency:
            signs[i] = rng.choice([-1.0, 1.0])
    return Embedding(space, tuple(bins), signs, tuple(shuffles), low_sequency)


def increase_embedding(e: Embedding, b: int, rng: np.random.Generator | int | None = None) -> Embedding:
    """Split every bin with at least two members into ``min(b + 1, size)`` bins."""
    if b < 1:
        raise EmbeddingError(f"split factor must be >= 1, got {b}")
    if e.target_dim >= e.input_dim:
        raise EmbeddingError("embedding already has one bin per input dimension")
    rng = np.random.default_rng(rng)
    bins: list[Bin] = []
    for parent in e.bins:
        if len(parent.members) < 2:
            bins.append(parent)
            continue
        for members in _partition(parent.members, min(b + 1, len(parent.members)), rng):
            bins.append(Bin(parent.kind, members, parent.cardinality))
    return Embedding(e.space, tuple(bins), e.signs.copy(), e.shuffles, e.low_sequency)


def parent_index(old: Embedding, new: Embedding) -> np.ndarray:
    """For each bin of ``new``, the index of the ``old`` bin it was split from."""
    if old.space != new.space:
        raise EmbeddingError("embeddings live on different spaces")
    if not np.array_equal(old.signs, new.signs) or any(
        (a is None) != (b is None) or (a is not None and not np.array_equal(a, b))
        for a, b in zip(old.shuffles, new.shuffles)
    ):
        raise EmbeddingError("embeddings differ in signs or category permutations")
    parents = np.empty(new.target_dim, dtype=int)
    for j, b in enumerate(new.bins):
        owners = {int(old.bin_of[i]) for i in b.members}
        if len(owners) != 1:
            raise EmbeddingError(f"bin {j} of the new embedding straddles several old bins")
        (p,) = owners
        if old.bins[p].kind is not b.kind or old.bins[p].cardinality != b.cardinality:
            raise EmbeddingError(f"bin {j} does not inherit its parent's kind and cardinality")
        parents[j] = p
    return parents


def lift_observations(old: Embedding, new: Embedding, t: np.ndarray) -> np.ndarray:
    """Re-express target point(s) of ``old`` in the refined embedding ``new``."""
    t = np.asarray(t, dtype=float)
    return t[..., parent_index(old, new)]


@dataclass(frozen=True)
class StageSchedule:
    input_dim: int
    d_init: int
    b: int
    k: int
    m_D: int
    dims: tuple[int, ...]
    budgets: tuple[int, ...]

    def _raw_budget(self, d: int) -> float:
        denom = abs(self.d_init * (1 - (self.b + 1) ** (self.k + 1)))
        if denom == 0:
            return float(self.m_D)
        return self.b * self.m_D * d / denom

    def budget_for_dim(self, d: int) -> int:
        """Evaluation budget of a target space with ``d`` dimensions."""
        if d in self.dims:
            return self.budgets[self.dims.index(d)]
        return max(1, _round_half_up(self._raw_budget(min(d, self.input_dim))))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _n_splits(D: int, d_init: int, b: int) -> int:
    k, d = 0, d_init
    while d < D:
        d *= b + 1
        k += 1
    return k


def compute_schedule(D: int, d_init: int, b_user: int, m_D: int, rule: str = "root") -> StageSchedule:
    """Split factor, number of splits and per-stage budgets.

    ``rule="root"`` re-sets the split factor to ``round((D / d_init) ** (1 / k) - 1)``
    so that ``d_init * (b + 1) ** k`` lands near ``D``. ``rule="log"`` evaluates
    ``round(log_k(D / d_init) - 1)`` instead.
    """
    if not 1 <= d_init <= D:
        raise ScheduleError(f"need 1 <= d_init <= D, got d_init={d_init}, D={D}")
    if b_user < 1:
        raise ScheduleError(f"split factor must be >= 1, got {b_user}")
    if rule not in ("root", "log"):
        raise ScheduleError(f"unknown split rule {rule!r}")
    if D == d_init:
        if m_D < 1:
            raise ScheduleError("m_D must be positive")
        return StageSchedule(D, d_init, b_user, 0, m_D, (D,), (m_D,))

    k = _n_splits(D, d_init, b_user)
    ratio = D / d_init
    if k == 1:
        b = ratio - 1
    elif rule == "root":
        b = ratio ** (1.0 / k) - 1
    else:
        b = math.log(ratio) / math.log(k) - 1
    b = max(1, _round_half_up(b))
    if m_D < k + 1:
        raise ScheduleError(f"m_D={m_D} cannot cover {k + 1} stages")

    dims = tuple(min(D, d_init * (b + 1) ** i) for i in range(k + 1))
    # budgets proportional to the actual stage dims; without capping the
    # normalizer equals d_init * ((b + 1) ** (k + 1) - 1) / b
    total = sum(dims)
    budgets = [_round_half_up(m_D * d / total) for d in dims]
    if min(budgets) < 1:
        raise ScheduleError(f"m_D={m_D} leaves a stage without evaluations")
    return StageSchedule(D, d_init, b, k, m_D, dims, tuple(budgets))
