"""Measure-preserving permutations, trajectory empirical measures and the ergodic limit.

The ergodic limit ``Gamma(phi)`` is computed directly as the
beta-conditional expectation over the orbit partition; the trajectory
averages that converge to it are only used in reports.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .barycenters import AuditReport, BarycentricMap, _collect, evaluate
from .condexp import beta_conditional_expectation
from .errors import InputError, UnsupportedError
from .geometry import Space, _sym, diameter, dist, loewner_leq
from .measures import DiscreteMeasure, lp_distance_rv
from .probability import FiniteProbabilitySpace, PartitionAlgebra, RandomVariable
from .sampling import parallel_map, random_point, random_points, trial_rng

ORBIT_MASS_TOL = 1e-15


class Transformation:
    """A permutation ``T`` of ``{0..n-1}`` preserving ``P``.

    ``P`` must be constant on every orbit, which is exactly invariance of
    ``P`` under ``T`` for a permutation.
    """

    def __init__(self, perm, prob: FiniteProbabilitySpace):
        perm = [int(i) for i in perm]
        n = len(perm)
        if sorted(perm) != list(range(n)):
            raise InputError("transformation must be a permutation of 0..n-1")
        if n != prob.size:
            raise InputError(f"permutation of {n} points on a space of {prob.size} points")
        self.perm = tuple(perm)
        self.prob = prob
        labels = [-1] * n
        orbits = []
        for start in range(n):
            if labels[start] != -1:
                continue
            orbit, i = [], start
            while labels[i] == -1:
                labels[i] = len(orbits)
                orbit.append(i)
                i = perm[i]
            orbits.append(orbit)
        for orbit in orbits:
            w = prob.weights[orbit]
            if np.max(w) - np.min(w) > ORBIT_MASS_TOL:
                raise InputError(f"P is not invariant: weights vary along the orbit {orbit}")
        self.orbits = orbits
        self.invariant = PartitionAlgebra(tuple(labels))

    @classmethod
    def identity(cls, prob: FiniteProbabilitySpace) -> Transformation:
        return cls(range(prob.size), prob)

    @classmethod
    def cycles(cls, lengths, prob: FiniteProbabilitySpace | None = None) -> Transformation:
        """Consecutive cycles ``(0 1 .. L1-1)(L1 ..)...``; uniform ``P`` by default."""
        perm, start = [], 0
        for length in lengths:
            perm.extend(start + (k + 1) % length for k in range(length))
            start += length
        return cls(perm, prob or FiniteProbabilitySpace.uniform(start))

    @property
    def ergodic(self) -> bool:
        live = {self.invariant.labels[i] for i, w in enumerate(self.prob.weights) if w > 0}
        return len(live) == 1

    def orbit_length(self, i: int) -> int:
        return len(self.orbits[self.invariant.labels[i]])

    def iterate(self, i: int, k: int) -> int:
        for _ in range(k):
            i = self.perm[i]
        return i

    def to_dict(self) -> dict:
        return {"perm": list(self.perm)}


def trajectory_empirical_measure(phi: RandomVariable, T: Transformation, omega: int, n: int) -> DiscreteMeasure:
    """``(1/n) sum_{k<n} delta_{phi(T^k omega)}`` with repeated values merged."""
    if n < 1:
        raise InputError("empirical measure needs n >= 1")
    counts: Counter = Counter()
    first: dict[bytes, np.ndarray] = {}
    i = omega
    for _ in range(n):
        x = phi[i]
        key = x.tobytes()
        first.setdefault(key, x)
        counts[key] += 1
        i = T.perm[i]
    return DiscreteMeasure(phi.space, list(first.values()), [counts[k] / n for k in first])


def ergodic_limit(beta: BarycentricMap, phi: RandomVariable, T: Transformation) -> RandomVariable:
    """``Gamma(phi) = E_I^beta(phi)`` with ``I`` the orbit partition."""
    if phi.prob != T.prob:
        raise InputError("random variable and transformation use different probability spaces")
    return beta_conditional_expectation(beta, phi, T.invariant)


@dataclass
class ErgodicReport:
    n: list[int]
    per_outcome: dict[int, list[float]]
    aggregate: list[float]

    def to_dict(self) -> dict:
        return {"n": self.n, "per_outcome": {str(k): v for k, v in self.per_outcome.items()}, "aggregate": self.aggregate}


def ergodic_convergence_report(beta: BarycentricMap, phi: RandomVariable, T: Transformation, p: float | None = None,
                               n_max: int = 60) -> ErgodicReport:
    """``d(beta(mu_n(w)), Gamma(phi)(w))`` for ``n = 1..n_max`` and positive-mass ``w``,
    plus the aggregate ``bd_p`` series."""
    p = beta.p if p is None else float(p)
    gamma = ergodic_limit(beta, phi, T)
    live = [i for i, w in enumerate(phi.prob.weights) if w > 0]
    per = {i: [] for i in live}
    for i in live:
        for n in range(1, n_max + 1):
            per[i].append(dist(phi.space, evaluate(beta, trajectory_empirical_measure(phi, T, i, n)), gamma[i]))
    weights = phi.prob.weights
    agg = [math.fsum(weights[i] * per[i][k] ** p for i in live) ** (1 / p) for k in range(n_max)]
    return ErgodicReport(list(range(1, n_max + 1)), per, agg)


def _random_rv(prob, space, rng, scale=1.0):
    return RandomVariable(prob, space, random_points(space, rng, prob.size, scale))


def gamma_contractivity_audit(beta: BarycentricMap, T: Transformation, space: Space, p: float, trials: int, seed: int,
                              threads: int = 1) -> AuditReport:
    """Worst ``bd_p(Gamma(phi), Gamma(psi)) - bd_p(phi, psi)`` over seeded pairs."""

    def trial(i):
        rng = trial_rng(seed, i)
        phi, psi = _random_rv(T.prob, space, rng), _random_rv(T.prob, space, rng)
        try:
            return lp_distance_rv(p, ergodic_limit(beta, phi, T), ergodic_limit(beta, psi, T)) - lp_distance_rv(p, phi, psi)
        except Exception as exc:
            return f"{type(exc).__name__}: {exc}"

    return _collect(f"gamma-contractivity[{beta.variant}, p={p:g}, {space.describe()}]",
                    parallel_map(trial, range(trials), threads), 1e-9)


def gamma_monotonicity_audit(beta: BarycentricMap, T: Transformation, space: Space, trials: int, seed: int,
                             threads: int = 1) -> AuditReport:
    """Check ``Gamma(phi) <= Gamma(psi)`` for seeded pointwise-ordered ``phi <= psi``."""
    if space.order != "loewner":
        raise UnsupportedError("monotonicity audit needs a Loewner-ordered space")

    def trial(i):
        rng = trial_rng(seed, i)
        phi = _random_rv(T.prob, space, rng)
        psi = phi.map(lambda x: _sym(x + random_point(space, rng) * float(rng.uniform(0.05, 1.0))))
        try:
            g1, g2 = ergodic_limit(beta, phi, T), ergodic_limit(beta, psi, T)
            worst = -math.inf
            for j, w in enumerate(T.prob.weights):
                if w > 0:
                    gap = -float(np.linalg.eigvalsh(_sym(g2[j] - g1[j]))[0])
                    worst = max(worst, gap if not loewner_leq(g1[j], g2[j]) else min(gap, 0.0))
            return worst
        except Exception as exc:
            return f"{type(exc).__name__}: {exc}"

    return _collect(f"gamma-monotonicity[{beta.variant}, {space.describe()}]",
                    parallel_map(trial, range(trials), threads), 1e-12)


@dataclass
class ContinuityReport:
    """Distance between two conditional expectations and its instance-level bound.

    ``rows`` holds, per block of positive mass, the distance between the
    two maps' values on ``phi``, the diameter of the block's support and
    their ratio. ``max_ratio`` is a lower bound for the map distance, and
    the instance check asks each block's distance to be at most
    ``diameter * max_ratio``.
    """

    gap: float
    rows: list[dict] = field(default_factory=list)
    max_ratio: float = 0.0

    @property
    def instance_ok(self) -> bool:
        return all(r["distance"] <= r["diameter"] * self.max_ratio + 1e-12 for r in self.rows)

    def to_dict(self) -> dict:
        return {"gap": self.gap, "rows": self.rows, "max_ratio": self.max_ratio, "instance_ok": self.instance_ok}


def conditional_continuity_report(part: PartitionAlgebra, beta: BarycentricMap, beta2: BarycentricMap,
                                  phi: RandomVariable, phi2: RandomVariable, p: float | None = None) -> ContinuityReport:
    """Compare ``E_B^{beta2}(phi2)`` with ``E_B^{beta}(phi)``."""
    p = max(beta.p, beta2.p) if p is None else float(p)
    phi.same_support(phi2)
    e1 = beta_conditional_expectation(beta, phi, part)
    e2 = beta_conditional_expectation(beta2, phi2, part)
    e12 = beta_conditional_expectation(beta2, phi, part)
    rows = []
    for block in part.blocks:
        if phi.prob.mass(block) <= 0.0:
            continue
        i = block[0]
        diam = diameter(phi.space, [phi[j] for j in block if phi.prob.weights[j] > 0])
        d = dist(phi.space, e12[i], e1[i])
        rows.append({"block": block, "distance": d, "diameter": diam, "ratio": d / diam if diam > 0 else 0.0})
    return ContinuityReport(lp_distance_rv(p, e2, e1), rows, max((r["ratio"] for r in rows), default=0.0))


def gamma_continuity_report(beta: BarycentricMap, beta2: BarycentricMap, phi: RandomVariable, phi2: RandomVariable,
                            T: Transformation, p: float | None = None) -> ContinuityReport:
    """Compare ``Gamma_{beta2}(phi2)`` with ``Gamma_beta(phi)``."""
    return conditional_continuity_report(T.invariant, beta, beta2, phi, phi2, p)
