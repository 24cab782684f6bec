"""Finitely supported probability measures and exact Wasserstein distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CapacityError, DomainError, InputError, UnsupportedError
from .geometry import Space, dist, geodesic, loewner_leq
from .transport import MAX_ATOMS, certify, solve_transport

WEIGHT_FLOOR = 1e-15
SUM_TOL = 1e-12


class DiscreteMeasure:
    """A probability measure ``sum_j w_j delta_{x_j}`` on a :class:`Space`.

    Bitwise-identical atoms are merged (first occurrence keeps its place);
    no tolerance-based clustering is done.
    """

    def __init__(self, space: Space, points, weights=None):
        pts = [space.point(x) for x in points]
        if not pts:
            raise InputError("a measure needs at least one atom")
        if weights is None:
            weights = [1.0 / len(pts)] * len(pts)
        weights = [float(w) for w in weights]
        if len(weights) != len(pts):
            raise InputError("points and weights differ in length")
        if any(not math.isfinite(w) or w < WEIGHT_FLOOR for w in weights):
            raise InputError(f"atom weights must be >= {WEIGHT_FLOOR:g}")
        if abs(math.fsum(weights) - 1.0) > SUM_TOL:
            raise InputError(f"weights sum to {math.fsum(weights)!r}, not 1")

        index: dict[bytes, int] = {}
        merged_pts: list[np.ndarray] = []
        groups: list[list[float]] = []
        for x, w in zip(pts, weights):
            key = x.tobytes()
            if key in index:
                groups[index[key]].append(w)
            else:
                index[key] = len(merged_pts)
                merged_pts.append(x)
                groups.append([w])
        self.space = space
        self.points = tuple(merged_pts)
        self.weights = np.array([math.fsum(g) for g in groups])
        self.weights.setflags(write=False)

    @classmethod
    def dirac(cls, space: Space, x) -> DiscreteMeasure:
        return cls(space, [x], [1.0])

    @classmethod
    def uniform(cls, space: Space, points) -> DiscreteMeasure:
        return cls(space, points)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(zip(self.points, self.weights))

    def __repr__(self):
        return f"DiscreteMeasure({self.space.describe()}, {len(self)} atoms)"

    @property
    def is_dirac(self) -> bool:
        return len(self.points) == 1

    def diameter(self) -> float:
        from .geometry import diameter

        return diameter(self.space, self.points)

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "atoms": [{"point": x.tolist(), "weight": float(w)} for x, w in self],
        }

    @classmethod
    def from_dict(cls, d: dict) -> DiscreteMeasure:
        space = Space.from_dict(d["space"])
        atoms = d["atoms"]
        return cls(space, [a["point"] for a in atoms], [a["weight"] for a in atoms])


@dataclass(frozen=True)
class TransportPlan:
    """An optimal (or explicitly constructed) coupling between two measures."""

    matrix: np.ndarray
    p: float
    cost: float
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    @property
    def distance(self) -> float:
        return max(self.cost, 0.0) ** (1.0 / self.p)

    def to_dict(self) -> dict:
        out = {"p": self.p, "cost": self.cost, "matrix": self.matrix.tolist()}
        if self.u is not None:
            out["dual_u"] = self.u.tolist()
            out["dual_v"] = self.v.tolist()
        return out


def pushforward(mu: DiscreteMeasure, f, target: Space | None = None) -> DiscreteMeasure:
    """Image measure ``f_* mu``; colliding images are merged with summed weight."""
    target = target or mu.space
    images = []
    for x in mu.points:
        try:
            images.append(target.point(f(x)))
        except InputError as exc:
            raise DomainError(f"map output is not in {target.describe()}: {exc}") from exc
    return DiscreteMeasure(target, images, mu.weights)


def cost_matrix(space: Space, xs, ys, p: float) -> np.ndarray:
    return np.array([[dist(space, x, y) ** p for y in ys] for x in xs])


def wasserstein(p: float, mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, TransportPlan]:
    """Exact ``p``-Wasserstein distance and an optimal plan (network simplex)."""
    p = float(p)
    if not 1.0 <= p < math.inf:
        raise InputError(f"p must lie in [1, inf), got {p}")
    if mu.space != nu.space:
        raise InputError("measures live on different spaces")
    if len(mu) > MAX_ATOMS or len(nu) > MAX_ATOMS:
        raise CapacityError(f"supports larger than {MAX_ATOMS} atoms")
    cost = cost_matrix(mu.space, mu.points, nu.points, p)
    sol = solve_transport(mu.weights, nu.weights, cost)
    problems = certify(sol, mu.weights, nu.weights, cost)
    if problems:
        raise DomainError("transport solution failed certification: " + "; ".join(problems))
    plan = TransportPlan(sol.plan, p, sol.cost, sol.u, sol.v)
    return plan.distance, plan


def same_support_bound(space: Space, p: float, points, alpha, beta) -> tuple[float, TransportPlan]:
    """Diameter bound on the distance between two reweightings of one atom list.

    Returns ``diam * (TV)^{1/p}`` with ``TV = sum|alpha - beta| / 2`` and the
    explicit coupling that keeps ``min(alpha_i, beta_i)`` in place and
    spreads the excess of ``alpha`` proportionally over the deficit.
    """
    pts = [space.point(x) for x in points]
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    if not len(pts) == len(a) == len(b):
        raise InputError("points, alpha and beta must have equal length")
    k = len(pts)
    gamma = np.minimum(a, b)
    excess = a - gamma
    deficit = b - gamma
    rows = [i for i in range(k) if excess[i] > 0]
    cols = [j for j in range(k) if deficit[j] > 0]
    plan = np.diag(gamma)
    total = math.fsum(deficit[j] for j in cols)
    for i in rows:
        for j in cols:
            plan[i, j] += excess[i] * deficit[j] / total
    cost_mat = cost_matrix(space, pts, pts, p)
    cost = float(np.sum(plan * cost_mat))
    diam = max((dist(space, x, y) for x in pts for y in pts), default=0.0)
    tv = 0.5 * math.fsum(abs(x - y) for x, y in zip(a, b))
    return diam * tv ** (1.0 / p), TransportPlan(plan, p, cost)


def _as_multiset(mu: DiscreteMeasure, max_den: int = 64) -> list[np.ndarray]:
    fracs = [Fraction(float(w)).limit_denominator(max_den) for w in mu.weights]
    if any(abs(float(f) - w) > 1e-12 for f, w in zip(fracs, mu.weights)):
        raise UnsupportedError("stochastic order test needs weights that are multiples of 1/n")
    den = math.lcm(*(f.denominator for f in fracs))
    out = []
    for x, f in zip(mu.points, fracs):
        out.extend([x] * int(f * den))
    return out


def _perfect_matching(n: int, edges: list[list[int]]) -> bool:
    match_right = [-1] * n

    def augment(i, seen):
        for j in edges[i]:
            if not seen[j]:
                seen[j] = True
                if match_right[j] == -1 or augment(match_right[j], seen):
                    match_right[j] = i
                    return True
        return False

    return all(augment(i, [False] * n) for i in range(n))


def stochastic_leq_uniform(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    """Stochastic order for uniform atom lists: a matching ``a_j <= b_sigma(j)``.

    Measures whose weights are multiples of ``1/n`` are read as uniform
    lists with repeated atoms.
    """
    if mu.space != nu.space or mu.space.order != "loewner":
        raise UnsupportedError("stochastic order needs two measures on a Loewner-ordered space")
    a = _as_multiset(mu)
    b = _as_multiset(nu)
    if len(a) != len(b):
        n = math.lcm(len(a), len(b))
        a = [x for x in a for _ in range(n // len(a))]
        b = [x for x in b for _ in range(n // len(b))]
    n = len(a)
    edges = [[k for k in range(n) if loewner_leq(a[j], b[k])] for j in range(n)]
    return _perfect_matching(n, edges)


def geodesic_pushforward(x, t: float, mu: DiscreteMeasure) -> DiscreteMeasure:
    """``x #_t mu``: push ``mu`` forward by ``a -> x #_t a``."""
    space = mu.space
    x = space.point(x)
    if t == 0.0:
        return DiscreteMeasure.dirac(space, x)
    return DiscreteMeasure(space, [geodesic(space, x, a, t) for a in mu.points], mu.weights)


def lp_distance_rv(p: float, phi, psi) -> float:
    """``L^p`` distance ``(sum_w P(w) d^p(phi(w), psi(w)))^{1/p}``."""
    phi.same_support(psi)
    w = phi.prob.weights
    terms = [w[i] * dist(phi.space, phi[i], psi[i]) ** p for i in range(len(w)) if w[i] > 0]
    return math.fsum(terms) ** (1.0 / p)
