"""Finite probability spaces, partitions (sub-sigma-algebras) and random variables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import Space

SUM_TOL = 1e-12


class FiniteProbabilitySpace:
    """The points ``0..n-1`` with weights ``P(w)``; zero-mass points are allowed."""

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise InputError("probability weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError("probability weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > SUM_TOL:
            raise InputError(f"probability weights sum to {math.fsum(w)!r}, not 1")
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def uniform(cls, n: int) -> FiniteProbabilitySpace:
        return cls(np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def null_atoms(self) -> list[int]:
        return [i for i, p in enumerate(self.weights) if p == 0.0]

    def mass(self, subset) -> float:
        return math.fsum(self.weights[i] for i in subset)

    def __eq__(self, other):
        return isinstance(other, FiniteProbabilitySpace) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"FiniteProbabilitySpace({self.weights.tolist()})"

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist()}


@dataclass(frozen=True)
class PartitionAlgebra:
    """A partition of ``{0..n-1}`` given by dense block ids, one per point.

    On a finite space every sub-sigma-algebra is generated by exactly one
    partition, so this is a complete representation.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        raw = [int(x) for x in self.labels]
        if not raw:
            raise InputError("partition of an empty set")
        relabel: dict[int, int] = {}
        dense = tuple(relabel.setdefault(x, len(relabel)) for x in raw)
        object.__setattr__(self, "labels", dense)

    @classmethod
    def from_blocks(cls, blocks, n: int | None = None) -> PartitionAlgebra:
        blocks = [list(b) for b in blocks]
        n = n if n is not None else sum(len(b) for b in blocks)
        labels = [-1] * n
        for k, block in enumerate(blocks):
            for i in block:
                if not 0 <= i < n or labels[i] != -1:
                    raise InputError("blocks do not partition the index set")
                labels[i] = k
        if -1 in labels:
            raise InputError("blocks do not cover the index set")
        return cls(tuple(labels))

    @classmethod
    def trivial(cls, n: int) -> PartitionAlgebra:
        return cls((0,) * n)

    @classmethod
    def discrete(cls, n: int) -> PartitionAlgebra:
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(max(self.labels) + 1)]
        for i, b in enumerate(self.labels):
            out[b].append(i)
        return out

    def block_of(self, i: int) -> list[int]:
        b = self.labels[i]
        return [j for j, x in enumerate(self.labels) if x == b]

    def refines(self, other: PartitionAlgebra) -> bool:
        """True if every block of ``self`` sits inside a block of ``other``."""
        if other.size != self.size:
            return False
        image: dict[int, int] = {}
        for mine, theirs in zip(self.labels, other.labels):
            if image.setdefault(mine, theirs) != theirs:
                return False
        return True

    def join(self, other: PartitionAlgebra) -> PartitionAlgebra:
        return PartitionAlgebra(tuple(hash((a, b)) for a, b in zip(self.labels, other.labels)))

    def to_list(self) -> list[int]:
        return list(self.labels)


class RandomVariable:
    """An ``M``-valued map on a finite probability space: one point per outcome."""

    def __init__(self, prob: FiniteProbabilitySpace, space: Space, values):
        values = [space.point(v) for v in values]
        if len(values) != prob.size:
            raise InputError(f"{len(values)} values for a probability space of size {prob.size}")
        self.prob = prob
        self.space = space
        self.values = tuple(values)

    @classmethod
    def constant(cls, prob: FiniteProbabilitySpace, space: Space, x) -> RandomVariable:
        return cls(prob, space, [x] * prob.size)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[i]

    def __len__(self):
        return len(self.values)

    def law(self, weights=None):
        """Push-forward of ``weights`` (default ``P``) by this variable."""
        from .measures import DiscreteMeasure

        w = self.prob.weights if weights is None else np.asarray(weights, dtype=float)
        keep = [i for i in range(len(w)) if w[i] > 0]
        return DiscreteMeasure(self.space, [self.values[i] for i in keep], [w[i] for i in keep])

    def same_support(self, other: RandomVariable) -> None:
        if self.prob != other.prob or self.space != other.space:
            raise InputError("random variables live on different probability or metric spaces")

    def map(self, f) -> RandomVariable:
        return RandomVariable(self.prob, self.space, [f(x) for x in self.values])

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "values": [v.tolist() for v in self.values]}
