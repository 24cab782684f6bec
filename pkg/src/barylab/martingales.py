"""Filtrations, regular beta-martingales and filtered beta-conditional expectations.

A filtration is a finite list of partitions. On a finite space the
refinement stabilizes after the last listed algebra, so the limits of an
infinite filtration are reached exactly at its final index.
"""

from __future__ import annotations

from dataclasses import dataclass

from .barycenters import BarycentricMap
from .condexp import beta_conditional_expectation
from .errors import InputError
from .geometry import dist
from .measures import lp_distance_rv
from .probability import PartitionAlgebra, RandomVariable

MEASURABILITY_TOL = 1e-12


@dataclass(frozen=True)
class Filtration:
    algebras: tuple[PartitionAlgebra, ...]
    increasing: bool = True

    def __post_init__(self):
        algs = tuple(self.algebras)
        if not algs:
            raise InputError("a filtration needs at least one algebra")
        object.__setattr__(self, "algebras", algs)
        for k in range(len(algs) - 1):
            finer, coarser = (algs[k + 1], algs[k]) if self.increasing else (algs[k], algs[k + 1])
            if not finer.refines(coarser):
                kind = "refine" if self.increasing else "coarsen"
                raise InputError(f"algebra {k + 1} does not {kind} algebra {k}")

    def __len__(self):
        return len(self.algebras)

    def __getitem__(self, k: int) -> PartitionAlgebra:
        return self.algebras[k]

    @property
    def limit(self) -> PartitionAlgebra:
        """The finest (increasing) or coarsest (decreasing) listed algebra."""
        return self.algebras[-1]

    @property
    def size(self) -> int:
        return self.algebras[0].size

    def to_dict(self) -> dict:
        return {"direction": "increasing" if self.increasing else "decreasing",
                "algebras": [a.to_list() for a in self.algebras]}

    @classmethod
    def from_dict(cls, d: dict) -> Filtration:
        direction = d.get("direction", "increasing")
        if direction not in ("increasing", "decreasing"):
            raise InputError(f"unknown filtration direction {direction!r}")
        return cls(tuple(PartitionAlgebra(tuple(a)) for a in d["algebras"]), direction == "increasing")


def dyadic_filtration(depth: int, increasing: bool = True) -> Filtration:
    """Levels 0..depth on ``2**depth`` points; level ``j`` has ``2**j`` equal blocks."""
    n = 2**depth
    levels = [PartitionAlgebra(tuple(i >> (depth - j) for i in range(n))) for j in range(depth + 1)]
    return Filtration(tuple(levels if increasing else levels[::-1]), increasing)


def regular_martingale(beta: BarycentricMap, phi: RandomVariable, filt: Filtration) -> list[RandomVariable]:
    """``[E_{B_1}(phi), ..., E_{B_m}(phi)]``."""
    return [beta_conditional_expectation(beta, phi, b) for b in filt.algebras]


@dataclass
class ConvergenceReport:
    series: list[float]
    per_outcome: list[list[float]]
    monotone_decrease: bool

    def to_dict(self) -> dict:
        return {"series": self.series, "per_outcome": self.per_outcome, "monotone_decrease": self.monotone_decrease}


def _positive(rv: RandomVariable) -> list[int]:
    return [i for i, w in enumerate(rv.prob.weights) if w > 0]


def martingale_convergence_report(beta: BarycentricMap, phi: RandomVariable, filt: Filtration,
                                  p: float | None = None) -> ConvergenceReport:
    """``s_k = bd_p(E_{B_k}(phi), E_{B_inf}(phi))`` and per-outcome distances."""
    p = beta.p if p is None else float(p)
    entries = regular_martingale(beta, phi, filt)
    limit = entries[-1]
    series = [lp_distance_rv(p, e, limit) for e in entries]
    per = [[dist(phi.space, e[i], limit[i]) for e in entries] for i in range(phi.prob.size)]
    mono = all(b < a for a, b in zip(series, series[1:]))
    return ConvergenceReport(series, per, mono)


def filtered_conditional_expectation(beta: BarycentricMap, phi: RandomVariable, filt: Filtration, k: int) -> RandomVariable:
    """``E_{B_k} o E_{B_{k+1}} o ... o E_{B_m}(phi)`` (0-based ``k``)."""
    if not filt.increasing:
        raise InputError("filtered conditional expectation is defined for increasing filtrations only")
    if not 0 <= k < len(filt):
        raise InputError(f"level {k} outside the filtration of length {len(filt)}")
    out = phi
    for b in reversed(filt.algebras[k:]):
        out = beta_conditional_expectation(beta, out, b)
    return out


def check_measurable(rv: RandomVariable, part: PartitionAlgebra, tol: float = MEASURABILITY_TOL) -> bool:
    """Constant on each block, over positive-mass outcomes."""
    pos = set(_positive(rv))
    for block in part.blocks:
        idx = [i for i in block if i in pos]
        if any(dist(rv.space, rv[idx[0]], rv[i]) > tol for i in idx[1:]):
            return False
    return True


@dataclass
class MartingaleCheck:
    holds: bool
    max_violation: float
    violations: list[float]


def is_filtered_martingale(beta: BarycentricMap, seq: list[RandomVariable], filt: Filtration,
                           tol: float = 1e-9) -> MartingaleCheck:
    """Check ``E[phi_{k+1} | (B_n)_{n >= k}] = phi_k`` for consecutive entries."""
    if len(seq) != len(filt):
        raise InputError(f"{len(seq)} variables for a filtration of length {len(filt)}")
    for k, (rv, b) in enumerate(zip(seq, filt.algebras)):
        if not check_measurable(rv, b):
            raise InputError(f"entry {k} is not measurable for algebra {k}")
    viol = []
    for k in range(len(seq) - 1):
        fce = filtered_conditional_expectation(beta, seq[k + 1], filt, k)
        viol.append(max((dist(seq[k].space, fce[i], seq[k][i]) for i in _positive(seq[k])), default=0.0))
    worst = max(viol, default=0.0)
    return MartingaleCheck(worst <= tol, worst, viol)


@dataclass
class LimitCheck:
    martingale: MartingaleCheck
    reproduction_gaps: list[float]
    series: list[float]
    tol: float

    @property
    def passed(self) -> bool:
        return self.martingale.holds and all(g <= self.tol for g in self.reproduction_gaps)


def filtered_martingale_limit_check(beta: BarycentricMap, seq: list[RandomVariable], filt: Filtration,
                                    p: float | None = None, tol: float = 1e-9) -> LimitCheck:
    """Represent a filtered beta-martingale through its last entry.

    Each ``phi_k`` is compared with ``E[phi_last | (B_n)_{n >= k}]``;
    ``series`` holds ``bd_p(phi_k, phi_last)``.
    """
    p = beta.p if p is None else float(p)
    mart = is_filtered_martingale(beta, seq, filt, tol)
    last = seq[-1]
    gaps = []
    for k, rv in enumerate(seq):
        rep = filtered_conditional_expectation(beta, last, filt, k)
        gaps.append(max((dist(rv.space, rep[i], rv[i]) for i in _positive(rv)), default=0.0))
    series = [lp_distance_rv(p, rv, last) for rv in seq]
    return LimitCheck(mart, gaps, series, tol)

