"""Mixed-type search spaces and points within them.

Points are plain float arrays in a normalized representation:

* continuous entries in ``[-1, 1]``
* binary entries in ``{-1, +1}``
* categorical and ordinal entries in ``{1, ..., c_i}``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"

    @property
    def is_combinatorial(self) -> bool:
        return self is not Kind.CONTINUOUS

    @property
    def has_labels(self) -> bool:
        return self in (Kind.CATEGORICAL, Kind.ORDINAL)


# canonical order used wherever kinds are enumerated
KINDS: tuple[Kind, ...] = (Kind.CONTINUOUS, Kind.BINARY, Kind.CATEGORICAL, Kind.ORDINAL)


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    kind: Kind
    lower: float | None = None
    upper: float | None = None
    cardinality: int | None = None

    def __post_init__(self) -> None:
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.CONTINUOUS:
            if self.lower is None or self.upper is None:
                raise SpaceError("continuous variable needs lower and upper bounds")
            lo, hi = float(self.lower), float(self.upper)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise SpaceError(f"invalid bounds [{lo}, {hi}]")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif kind.has_labels:
            if self.cardinality is None or int(self.cardinality) < 2:
                raise SpaceError(f"{kind.value} variable needs cardinality >= 2")
            object.__setattr__(self, "cardinality", int(self.cardinality))

    @classmethod
    def continuous(cls, lower: float, upper: float) -> "VariableSpec":
        return cls(Kind.CONTINUOUS, lower=lower, upper=upper)

    @classmethod
    def binary(cls) -> "VariableSpec":
        return cls(Kind.BINARY)

    @classmethod
    def categorical(cls, cardinality: int) -> "VariableSpec":
        return cls(Kind.CATEGORICAL, cardinality=cardinality)

    @classmethod
    def ordinal(cls, cardinality: int) -> "VariableSpec":
        return cls(Kind.ORDINAL, cardinality=cardinality)


@dataclass(frozen=True)
class InputSpace:
    variables: tuple[VariableSpec, ...]

    def __init__(self, variables: Iterable[VariableSpec]):
        variables = tuple(variables)
        if not variables:
            raise SpaceError("a space needs at least one variable")
        object.__setattr__(self, "variables", variables)

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def kinds(self) -> np.ndarray:
        return np.array([v.kind for v in self.variables], dtype=object)

    def indices(self, kind: Kind) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.variables) if v.kind is kind], dtype=int)

    def count(self, kind: Kind) -> int:
        return sum(v.kind is kind for v in self.variables)

    @property
    def n_cont(self) -> int:
        return self.count(Kind.CONTINUOUS)

    @property
    def n_comb(self) -> int:
        return self.dim - self.n_cont

    @property
    def cardinalities(self) -> np.ndarray:
        """Per-variable cardinality; 2 for binary, 0 for continuous."""
        out = np.zeros(self.dim, dtype=int)
        for i, v in enumerate(self.variables):
            if v.kind is Kind.BINARY:
                out[i] = 2
            elif v.kind.has_labels:
                out[i] = v.cardinality
        return out

    @property
    def combinatorial_mask(self) -> np.ndarray:
        return np.array([v.kind.is_combinatorial for v in self.variables], dtype=bool)

    def present_kinds(self) -> list[Kind]:
        return [k for k in KINDS if self.count(k) > 0]

    def is_valid(self, x: Sequence[float]) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        for v, xi in zip(self.variables, x):
            if v.kind is Kind.CONTINUOUS:
                if not -1.0 <= xi <= 1.0:
                    return False
            elif v.kind is Kind.BINARY:
                if xi not in (-1.0, 1.0):
                    return False
            elif xi != round(xi) or not 1 <= xi <= v.cardinality:
                return False
        return True

    def validate(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.is_valid(x):
            raise SpaceError(f"point {x!r} is not valid for this space")
        return x

    def sample_uniform(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draw ``n`` points uniformly at random; shape ``(n, D)``."""
        out = np.empty((n, self.dim))
        for i, v in enumerate(self.variables):
            if v.kind is Kind.CONTINUOUS:
                out[:, i] = rng.uniform(-1.0, 1.0, size=n)
            elif v.kind is Kind.BINARY:
                out[:, i] = rng.choice([-1.0, 1.0], size=n)
            else:
                out[:, i] = rng.integers(1, v.cardinality + 1, size=n)
        return out


def normalize(space: InputSpace, raw: Sequence[float]) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    out = raw.copy()
    for i, v in enumerate(space.variables):
        if v.kind is Kind.CONTINUOUS:
            out[..., i] = 2.0 * (raw[..., i] - v.lower) / (v.upper - v.lower) - 1.0
    return out


def denormalize(space: InputSpace, x: Sequence[float]) -> np.ndarray:
    """Map continuous entries back to their raw interval; discrete entries pass through."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    for i, v in enumerate(space.variables):
        if v.kind is Kind.CONTINUOUS:
            out[..., i] = v.lower + (x[..., i] + 1.0) / 2.0 * (v.upper - v.lower)
    return out


def hamming_distance(space: InputSpace, a: Sequence[float], b: Sequence[float]) -> int:
    """Number of combinatorial coordinates in which ``a`` and ``b`` differ."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (space.dim,) or b.shape != (space.dim,):
        raise SpaceError(f"points of shape {a.shape} and {b.shape} do not match a {space.dim}-dim space")
    mask = space.combinatorial_mask
    return int(np.count_nonzero(a[mask] != b[mask]))


def parse_space(text: str) -> InputSpace:
    """Parse a plain-text space definition.

    One variable per line, ``#`` starts a comment. A line may start with
    ``N *`` to repeat a variable::

        continuous -5 10
        50 * binary
        categorical 5
        ordinal 4
    """
    variables: list[VariableSpec] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        repeat = 1
        if "*" in line:
            count, line = (s.strip() for s in line.split("*", 1))
            try:
                repeat = int(count)
            except ValueError:
                raise SpaceError(f"line {lineno}: bad repeat count {count!r}") from None
            if repeat < 1:
                raise SpaceError(f"line {lineno}: repeat count must be positive")
        fields = line.split()
        try:
            kind = Kind(fields[0].lower())
        except ValueError:
            raise SpaceError(f"line {lineno}: unknown variable kind {fields[0]!r}") from None
        args = fields[1:]
        try:
            if kind is Kind.CONTINUOUS:
                if len(args) != 2:
                    raise SpaceError(f"line {lineno}: continuous needs 'lower upper'")
                spec = VariableSpec.continuous(float(args[0]), float(args[1]))
            elif kind is Kind.BINARY:
                if args:
                    raise SpaceError(f"line {lineno}: binary takes no arguments")
                spec = VariableSpec.binary()
            else:
                if len(args) != 1:
                    raise SpaceError(f"line {lineno}: {kind.value} needs a cardinality")
                spec = VariableSpec(kind, cardinality=int(args[0]))
        except (SpaceError, ValueError) as err:
            if str(err).startswith("line"):
                raise
            raise SpaceError(f"line {lineno}: {err}") from None
        variables.extend([spec] * repeat)
    return InputSpace(variables)


def format_space(space: InputSpace) -> str:
    lines = []
    for v in space.variables:
        if v.kind is Kind.CONTINUOUS:
            lines.append(f"continuous {v.lower!r} {v.upper!r}")
        elif v.kind is Kind.BINARY:
            lines.append("binary")
        else:
            lines.append(f"{v.kind.value} {v.cardinality}")
    return "\n".join(lines) + "\n"
