"""beta-expectations and beta-conditional expectations on finite probability spaces.

A sub-sigma-algebra is a :class:`~barylab.probability.PartitionAlgebra`.
Conditioning on it disintegrates ``P`` into block-conditional measures
``P_w(A) = P(A & block(w)) / P(block(w))`` and applies the barycentric
map to the push-forward of each ``P_w``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .barycenters import BarycentricMap, evaluate
from .errors import CapacityError, DomainError, InputError, UnsupportedError
from .geometry import Geometry, _sym, dist, expm, logm, sqrt_and_isqrt
from .measures import DiscreteMeasure, lp_distance_rv
from .probability import FiniteProbabilitySpace, PartitionAlgebra, RandomVariable

SEPARATION_MAX = 20


@dataclass(frozen=True)
class Disintegration:
    """Conditional measures ``P_w``, one per outcome, plus the flagged null blocks.

    A block of zero mass gets the uniform measure on itself; it is never
    consulted with positive weight.
    """

    conditionals: tuple[FiniteProbabilitySpace, ...]
    null_blocks: tuple[int, ...]

    def __getitem__(self, i: int) -> FiniteProbabilitySpace:
        return self.conditionals[i]

    def __len__(self):
        return len(self.conditionals)


def _check_partition(prob: FiniteProbabilitySpace, part: PartitionAlgebra) -> None:
    if part.size != prob.size:
        raise InputError(f"partition of {part.size} points on a space of {prob.size} points")


def _block_weights(prob: FiniteProbabilitySpace, block: list[int]) -> tuple[np.ndarray, bool]:
    """Conditional weight vector on ``block`` and whether the block is null."""
    w = np.zeros(prob.size)
    mass = prob.mass(block)
    if mass > 0.0:
        for i in block:
            w[i] = prob.weights[i] / mass
        return w, False
    for i in block:
        w[i] = 1.0 / len(block)
    return w, True


def disintegrate(prob: FiniteProbabilitySpace, part: PartitionAlgebra) -> Disintegration:
    _check_partition(prob, part)
    per_block, null = [], []
    for b, block in enumerate(part.blocks):
        w, is_null = _block_weights(prob, block)
        per_block.append(FiniteProbabilitySpace(w))
        if is_null:
            null.append(b)
    return Disintegration(tuple(per_block[b] for b in part.labels), tuple(null))


def beta_expectation(beta: BarycentricMap, phi: RandomVariable) -> np.ndarray:
    """``E^beta(phi) = beta(phi_* P)``."""
    return evaluate(beta, phi.law())


def beta_expectation_restricted(beta: BarycentricMap, phi: RandomVariable, subset) -> np.ndarray:
    """beta-expectation of ``phi`` on the reduced space ``(A, P(. | A))``."""
    subset = sorted(set(int(i) for i in subset))
    if not subset or subset[0] < 0 or subset[-1] >= phi.prob.size:
        raise InputError("subset must be a nonempty set of outcome indices")
    mass = phi.prob.mass(subset)
    if mass <= 0.0:
        raise DomainError("conditioning on a null set")
    w = np.zeros(phi.prob.size)
    for i in subset:
        w[i] = phi.prob.weights[i] / mass
    return evaluate(beta, phi.law(w))


def beta_conditional_expectation(beta: BarycentricMap, phi: RandomVariable, part: PartitionAlgebra) -> RandomVariable:
    """``E_B^beta(phi)(w) = beta(phi_* P_w)``, evaluated once per block."""
    _check_partition(phi.prob, part)
    block_values = []
    for block in part.blocks:
        w, _ = _block_weights(phi.prob, block)
        block_values.append(evaluate(beta, phi.law(w)))
    return RandomVariable(phi.prob, phi.space, [block_values[b] for b in part.labels])


@dataclass
class AssociativityProbe:
    gap: float
    lhs: RandomVariable
    rhs: RandomVariable
    p: float

    def to_dict(self) -> dict:
        return {"gap": self.gap, "p": self.p, "lhs": self.lhs.to_dict()["values"], "rhs": self.rhs.to_dict()["values"]}


def associativity_probe(beta: BarycentricMap, phi: RandomVariable, coarse: PartitionAlgebra,
                        fine: PartitionAlgebra, p: float | None = None) -> AssociativityProbe:
    """Gap between ``E_C(E_B(phi))`` and ``E_C(phi)`` for ``C`` coarser than ``B``."""
    if not fine.refines(coarse):
        raise InputError("the coarse partition must be coarser than the fine one")
    p = beta.p if p is None else float(p)
    lhs = beta_conditional_expectation(beta, beta_conditional_expectation(beta, phi, fine), coarse)
    rhs = beta_conditional_expectation(beta, phi, coarse)
    return AssociativityProbe(lp_distance_rv(p, lhs, rhs), lhs, rhs, p)


# --------------------------------------------------------------------------
# variational conditional expectation


def _variance(points, weights, z, space) -> float:
    return math.fsum(w * dist(space, z, x) ** 2 for x, w in zip(points, weights))


def _spd_variance_minimizer(space, points, weights, tol: float, max_iter: int) -> np.ndarray:
    """Riemannian gradient descent with Armijo backtracking on ``sum w d^2(z, x)``.

    The descent direction at ``z`` is ``V = sum w log(z^{-1/2} x z^{-1/2})``
    (half the negative gradient, in the chart at ``z``); a step of size
    ``s`` moves to ``z^{1/2} exp(s V) z^{1/2}`` and lowers the variance to
    first order by ``2 s |V|^2``.
    """
    z = points[0].copy()
    f = _variance(points, weights, z, space)
    for _ in range(max_iter):
        _, iz = sqrt_and_isqrt(z)
        v = _sym(sum(w * logm(_sym(iz @ x @ iz)) for x, w in zip(points, weights)))
        g2 = float(np.sum(v * v))
        if math.sqrt(g2) <= tol:
            return z
        sz, _ = sqrt_and_isqrt(z)
        s = 1.0
        while True:
            cand = _sym(sz @ expm(s * v) @ sz)
            f_c = _variance(points, weights, cand, space)
            decrease = 2e-4 * s * g2
            # below rounding the Armijo test is meaningless; take the step
            if f_c <= f - decrease or decrease < 1e-15 * max(f, 1.0):
                break
            s *= 0.5
            if s < 1e-12:
                raise DomainError("Armijo backtracking failed on the block variance")
        z, f = cand, f_c
    raise DomainError(f"variance minimization did not reach gradient norm {tol:g}")


def sturm_conditional_expectation(phi: RandomVariable, part: PartitionAlgebra, tol: float = 1e-12,
                                  max_iter: int = 500) -> RandomVariable:
    """Per-block minimizer of ``sum_{w in block} P(w) d^2(z, phi(w))``.

    Computed directly as a variance minimization on each block, without
    building conditional measures. Null blocks use uniform weights.
    """
    space = phi.space
    if not space.npc:
        raise UnsupportedError(f"variational conditional expectation needs an NPC space, not {space.describe()}")
    _check_partition(phi.prob, part)
    block_values = []
    for block in part.blocks:
        mass = phi.prob.mass(block)
        raw = [phi.prob.weights[i] for i in block] if mass > 0 else [1.0] * len(block)
        pairs = [(phi[i], r) for i, r in zip(block, raw) if r > 0]
        total = math.fsum(r for _, r in pairs)
        pts = [x for x, _ in pairs]
        ws = [r / total for _, r in pairs]
        if space.geometry is Geometry.EUCLIDEAN:
            z = sum(w * x for x, w in zip(pts, ws))
        elif len({x.tobytes() for x in pts}) == 1:
            z = pts[0].copy()
        else:
            z = _spd_variance_minimizer(space, pts, ws, tol, max_iter)
        block_values.append(z)
    return RandomVariable(phi.prob, space, [block_values[b] for b in part.labels])


# --------------------------------------------------------------------------
# separation


@dataclass
class SeparationResult:
    equal: bool
    witness: list[int] | None
    gap: float


def separation_test(beta: BarycentricMap, phi: RandomVariable, psi: RandomVariable, tol: float = 1e-9) -> SeparationResult:
    """Search subsets ``A`` of positive mass with ``E(phi|A)`` and ``E(psi|A)`` apart.

    Subsets of the positive-mass outcomes are scanned by size, then
    lexicographically. If none separates the two variables they agree
    almost everywhere.
    """
    phi.same_support(psi)
    support = [i for i, w in enumerate(phi.prob.weights) if w > 0]
    if len(support) > SEPARATION_MAX:
        raise CapacityError(f"exhaustive subset scan limited to {SEPARATION_MAX} positive-mass outcomes")
    for size in range(1, len(support) + 1):
        for subset in itertools.combinations(support, size):
            gap = dist(phi.space, beta_expectation_restricted(beta, phi, subset),
                       beta_expectation_restricted(beta, psi, subset))
            if gap > tol:
                return SeparationResult(False, list(subset), gap)
    return SeparationResult(True, None, 0.0)
