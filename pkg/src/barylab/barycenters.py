"""Contractive barycentric maps, their audits, the metric between maps, and the semiflow.

A barycentric map sends a finitely supported measure to a point and fixes
Dirac masses. The variants here are immutable descriptions; calling one on
a :class:`~barylab.measures.DiscreteMeasure` evaluates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CapacityError, ConvergenceError, DomainError, InputError, UnsupportedError
from .geometry import (
    Geometry,
    Space,
    _sym,
    check_spd,
    convexity_constant,
    diameter,
    dist,
    expm,
    geodesic,
    logm,
    loewner_leq,
    sqrt_and_isqrt,
)
from .measures import DiscreteMeasure, geodesic_pushforward, wasserstein
from .sampling import parallel_map, random_measure, random_point, random_points, trial_rng

DIRAC_TOL = 1e-10
AUDIT_TOL = 1e-8


# --------------------------------------------------------------------------
# Karcher mean


def _karcher_gradient(x: np.ndarray, points, weights) -> np.ndarray:
    _, isx = sqrt_and_isqrt(x)
    g = np.zeros_like(x)
    for a, w in zip(points, weights):
        g += w * logm(_sym(isx @ a @ isx))
    return _sym(g)


def karcher_residual(x, mu: DiscreteMeasure) -> float:
    """Frobenius norm of ``sum_j w_j log(X^{-1/2} A_j X^{-1/2})``."""
    x = np.asarray(x, dtype=float)
    check_spd(x)
    return float(np.linalg.norm(_karcher_gradient(x, mu.points, mu.weights)))


def karcher_mean(mu: DiscreteMeasure, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Weighted Karcher (Cartan) mean of SPD atoms.

    Fixed-point iteration ``X <- X^{1/2} exp(s G) X^{1/2}`` with ``G`` the
    Karcher gradient, starting at the heaviest atom. The step ``s`` starts
    at 1 and is halved whenever the residual fails to decrease. When
    rounding stalls the iteration the result is still accepted if the
    residual sits at the floating-point floor of the problem.
    """
    if not mu.space.is_spd:
        raise UnsupportedError("Karcher mean needs an SPD space")
    pts, w = mu.points, mu.weights
    if len(pts) == 1:
        return pts[0].copy()
    x = pts[int(np.argmax(w))].copy()
    g = _karcher_gradient(x, pts, w)
    res = float(np.linalg.norm(g))
    floor = 1e3 * np.finfo(float).eps * max(1.0, sum(wi * float(np.linalg.norm(logm(a))) for a, wi in zip(pts, w)))
    trace = [res]
    step = 1.0
    for _ in range(max_iter):
        if res <= tol:
            return x
        sx, _ = sqrt_and_isqrt(x)
        cand = _sym(sx @ expm(step * g) @ sx)
        g_c = _karcher_gradient(cand, pts, w)
        res_c = float(np.linalg.norm(g_c))
        if res_c < res:
            x, g, res = cand, g_c, res_c
            trace.append(res)
        else:
            step *= 0.5
            if step < 1e-6:
                break
    if res <= max(tol, floor):
        return x
    raise ConvergenceError(f"Karcher iteration stopped at residual {res:.3g}", best=x, residual=res, trace=trace)


# --------------------------------------------------------------------------
# Es-Sahib--Heinich barycenter


def _expand_rational(mu: DiscreteMeasure, max_den: int = 64) -> list[np.ndarray]:
    fracs = [Fraction(float(w)).limit_denominator(max_den) for w in mu.weights]
    if any(abs(float(f) - w) > 1e-12 for f, w in zip(fracs, mu.weights)):
        raise UnsupportedError("Es-Sahib-Heinich map needs rational weights with denominator <= 64")
    den = math.lcm(*(f.denominator for f in fracs))
    out = []
    for x, f in zip(mu.points, fracs):
        out.extend([x] * int(f * den))
    return out


def _esh(space: Space, pts: list[np.ndarray], tol: float, max_iter: int) -> np.ndarray:
    n = len(pts)
    if n == 1:
        return pts[0]
    if n == 2:
        return geodesic(space, pts[0], pts[1], 0.5)
    cur = list(pts)
    inner_tol = 0.25 * tol
    diam = diameter(space, cur)
    best = diam
    stall = 0
    for _ in range(max_iter):
        if diam <= tol:
            return cur[0]
        cur = [_esh(space, cur[:i] + cur[i + 1 :], inner_tol, max_iter) for i in range(n)]
        diam = diameter(space, cur)
        if diam < 0.9 * best:
            best, stall = diam, 0
        else:
            stall += 1
            # rounding floor: the set no longer shrinks
            if stall >= 3 and diam <= 100 * tol:
                return cur[0]
    raise ConvergenceError(f"Es-Sahib-Heinich iteration did not contract below {tol:g}", best=cur[0], residual=diam)


def es_sahib_heinich(space: Space, points, tol: float = 1e-12, max_iter: int = 200, max_points: int = 5) -> np.ndarray:
    """Leave-one-out barycenter of a list of points.

    One point is itself, two points give the midpoint, and for ``n >= 3``
    each point is replaced by the barycenter of the other ``n - 1`` until
    the list collapses to diameter ``tol``.
    """
    pts = [space.point(x) for x in points]
    if not pts:
        raise InputError("empty point list")
    if len(pts) > max_points:
        raise CapacityError(f"Es-Sahib-Heinich recursion limited to {max_points} points, got {len(pts)}")
    return np.array(_esh(space, pts, tol, max_iter))


# --------------------------------------------------------------------------
# map descriptions


class BarycentricMap:
    """Base class. Subclasses implement :meth:`_compute` and :meth:`supports`."""

    variant = "abstract"
    p = 1.0

    def supports(self, space: Space) -> bool:
        raise NotImplementedError

    @property
    def accuracy(self) -> float:
        """Distance error of one evaluation, used to budget composite tolerances."""
        return 1e-13

    def _compute(self, mu: DiscreteMeasure) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, mu: DiscreteMeasure) -> np.ndarray:
        return evaluate(self, mu)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Arithmetic(BarycentricMap):
    variant = "arithmetic"

    def supports(self, space):
        return space.geometry is Geometry.EUCLIDEAN

    def _compute(self, mu):
        return _weighted_mean(mu)

    def to_dict(self):
        return {"variant": self.variant}


@dataclass(frozen=True, eq=False)
class Karcher(BarycentricMap):
    tol: float = 1e-12
    max_iter: int = 200
    variant = "karcher"

    def supports(self, space):
        return space.is_spd

    @property
    def accuracy(self):
        return 10 * self.tol

    def _compute(self, mu):
        return karcher_mean(mu, self.tol, self.max_iter)

    def to_dict(self):
        return {"variant": self.variant, "tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True, eq=False)
class CanonicalNPC(BarycentricMap):
    """Variance minimizer on a CAT(0) space."""

    tol: float = 1e-12
    max_iter: int = 200
    variant = "canonical_npc"

    def supports(self, space):
        return space.npc

    @property
    def accuracy(self):
        return 10 * self.tol

    def _compute(self, mu):
        return canonical_npc(mu, self.tol, self.max_iter)

    def to_dict(self):
        return {"variant": self.variant, "tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True, eq=False)
class EsSahibHeinich(BarycentricMap):
    tol: float = 1e-12
    max_iter: int = 200
    variant = "es_sahib_heinich"

    def supports(self, space):
        return True

    @property
    def accuracy(self):
        return 10 * self.tol

    def _compute(self, mu):
        return es_sahib_heinich(mu.space, _expand_rational(mu), self.tol, self.max_iter)

    def to_dict(self):
        return {"variant": self.variant, "tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True, eq=False)
class SemiflowImage(BarycentricMap):
    """The map ``mu -> x`` solving ``x = inner(x #_t mu)``."""

    t: float
    inner: BarycentricMap
    tol: float = 1e-10
    variant = "semiflow"

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise InputError(f"semiflow time must lie in (0, 1], got {self.t}")

    @property
    def p(self):
        return self.inner.p

    def supports(self, space):
        return space.npc and self.inner.supports(space)

    @property
    def accuracy(self):
        return self.tol + 2 * self.inner.accuracy / self.t

    def _compute(self, mu):
        return semiflow_fixed_point(self.inner, self.t, mu, self.tol)

    def to_dict(self):
        return {"variant": self.variant, "t": self.t, "tol": self.tol, "inner": self.inner.to_dict()}


@dataclass(frozen=True, eq=False)
class GeodesicCombination(BarycentricMap):
    """Pointwise geodesic ``mu -> left(mu) #_t right(mu)``."""

    left: BarycentricMap
    right: BarycentricMap
    t: float
    variant = "geodesic_combination"

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise InputError(f"combination parameter must lie in [0, 1], got {self.t}")

    @property
    def p(self):
        return max(self.left.p, self.right.p)

    def supports(self, space):
        return space.npc and self.left.supports(space) and self.right.supports(space)

    @property
    def accuracy(self):
        return max(self.left.accuracy, self.right.accuracy)

    def _compute(self, mu):
        if self.t == 0.0:
            return self.left(mu)
        if self.t == 1.0:
            return self.right(mu)
        return geodesic(mu.space, self.left(mu), self.right(mu), self.t)

    def to_dict(self):
        return {"variant": self.variant, "t": self.t, "left": self.left.to_dict(), "right": self.right.to_dict()}


def geodesic_combination(left: BarycentricMap, right: BarycentricMap, t: float) -> GeodesicCombination:
    return GeodesicCombination(left, right, float(t))


def map_from_dict(d: dict) -> BarycentricMap:
    variant = d.get("variant")
    opts = {k: d[k] for k in ("tol", "max_iter") if k in d}
    if variant == "arithmetic":
        return Arithmetic()
    if variant == "karcher":
        return Karcher(**opts)
    if variant == "canonical_npc":
        return CanonicalNPC(**opts)
    if variant == "es_sahib_heinich":
        return EsSahibHeinich(**opts)
    if variant == "semiflow":
        return SemiflowImage(float(d["t"]), map_from_dict(d["inner"]), **({"tol": d["tol"]} if "tol" in d else {}))
    if variant == "geodesic_combination":
        return GeodesicCombination(map_from_dict(d["left"]), map_from_dict(d["right"]), float(d["t"]))
    raise InputError(f"unknown barycentric map variant {variant!r}")


def evaluate(beta: BarycentricMap, mu: DiscreteMeasure) -> np.ndarray:
    """Evaluate ``beta`` at ``mu`` and check the result lies in ``mu``'s space.

    Dirac inputs are checked against the barycentric axiom.
    """
    if not beta.supports(mu.space):
        raise UnsupportedError(f"{beta.variant} map does not support {mu.space.describe()}")
    x = np.asarray(beta._compute(mu), dtype=float)
    x = mu.space.point(x)
    if mu.is_dirac and dist(mu.space, x, mu.points[0]) > DIRAC_TOL:
        raise DomainError(f"{beta.variant} map moved a Dirac mass by {dist(mu.space, x, mu.points[0]):.3g}")
    return x


def _weighted_mean(mu: DiscreteMeasure) -> np.ndarray:
    if mu.is_dirac:
        return mu.points[0].copy()
    stacked = np.stack(mu.points)
    return np.einsum("i,i...->...", mu.weights, stacked)


def canonical_npc(mu: DiscreteMeasure, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Minimizer of ``z -> sum_j w_j d(z, x_j)^2`` on a CAT(0) space."""
    space = mu.space
    if not space.npc:
        raise UnsupportedError(f"canonical barycenter needs an NPC space, not {space.describe()}")
    if space.geometry is Geometry.EUCLIDEAN:
        z = _weighted_mean(mu)
        grad = np.einsum("i,i...->...", mu.weights, z - np.stack(mu.points))
        if np.linalg.norm(grad) > max(tol, 1e-12 * max(1.0, float(np.abs(z).max()))):
            raise ConvergenceError("weighted mean is not stationary", best=z)
        return z
    return karcher_mean(mu, tol, max_iter)


# --------------------------------------------------------------------------
# semiflow


def _anderson(space, f, x, fx, step, target, trace, depth=3, max_iter=100):
    if space.is_spd:
        chart, unchart = (lambda z: logm(z).ravel()), (lambda u: expm(u.reshape(space.shape)))
    else:
        chart, unchart = (lambda z: np.array(z, dtype=float)), (lambda u: u)
    u, g = chart(x), chart(fx)
    us, gs = [u], [g]
    best = (x, fx, step)
    misses = 0
    for _ in range(max_iter):
        if best[2] <= target or misses >= 5:
            break
        r = g - u
        if len(us) > 1:
            dr = np.stack([(gs[i + 1] - us[i + 1]) - (gs[i] - us[i]) for i in range(len(us) - 1)], axis=1)
            dg = np.stack([gs[i + 1] - gs[i] for i in range(len(us) - 1)], axis=1)
            gamma = np.linalg.lstsq(dr, r, rcond=None)[0]
            u_new = g - dg @ gamma
        else:
            u_new = g
        try:
            x_new = space.point(unchart(u_new))
            fx_new = f(x_new)
            step_new = dist(space, x_new, fx_new)
        except (InputError, DomainError, ConvergenceError):
            us, gs = [chart(best[0])], [chart(best[1])]
            u, g = us[0], gs[0]
            misses += 1
            continue
        trace.append(step_new)
        u, g = chart(x_new), chart(fx_new)
        us, gs = (us + [u])[-(depth + 1):], (gs + [g])[-(depth + 1):]
        if step_new < best[2]:
            best, misses = (x_new, fx_new, step_new), 0
        else:
            misses += 1
    return best


def semiflow_fixed_point(beta: BarycentricMap, t: float, mu: DiscreteMeasure, tol: float = 1e-10,
                         accelerate: bool = True) -> np.ndarray:
    """Unique fixed point of ``x -> beta(x #_t mu)``.

    The map ``F(x) = beta(x #_t mu)`` is a ``(1 - t)``-contraction, so a step
    ``d(x, F(x)) <= tol * t`` puts ``F(x)`` within ``tol`` of the fixed
    point. ``F`` is only evaluated to within ``eps = beta.accuracy``, so the
    stopping rule is ``step <= tol * t + eps``, which puts the result within
    ``tol + 2 eps / t`` of the exact fixed point. Plain iteration starts at
    ``beta(mu)``.

    With ``accelerate`` the plain iteration is preceded by Anderson mixing
    (depth 3) in a global chart (``log`` on SPD matrices). Mixed iterates
    are kept only while they reduce the step. The plain iteration and its
    stopping rule still certify the result.
    """
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise InputError(f"semiflow time must lie in (0, 1], got {t}")
    if not mu.space.npc:
        raise UnsupportedError("the semiflow is defined on NPC spaces only")
    x = evaluate(beta, mu)
    if t == 1.0 or mu.is_dirac:
        return x
    space = mu.space

    def f(z):
        return evaluate(beta, geodesic_pushforward(z, t, mu))

    target = tol * t + beta.accuracy
    fx = f(x)
    step = dist(space, x, fx)
    trace = [step]
    if accelerate and step > target:
        x, fx, step = _anderson(space, f, x, fx, step, target, trace)

    rate = -math.log1p(-t) if t < 1.0 else math.inf
    # iterations for the current step to shrink to the target, plus slack
    cap = math.ceil(max(0.0, math.log(max(step, 1e-300) / target)) / rate) + 50
    k = 0
    while step > target:
        k += 1
        if k > cap:
            raise ConvergenceError(f"semiflow fixed point not reached in {cap} iterations", best=fx, residual=step, trace=trace)
        x, fx = fx, f(fx)
        step = dist(space, x, fx)
        trace.append(step)
    return fx


# --------------------------------------------------------------------------
# audits


@dataclass
class AuditReport:
    name: str
    trials: int
    max_violation: float
    threshold: float
    worst_trial: int | None
    failures: list = field(default_factory=list)
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_violation <= self.threshold

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_violation": self.max_violation,
            "threshold": self.threshold,
            "worst_trial": self.worst_trial,
            "failures": self.failures,
            "passed": self.passed,
            "witness": self.witness,
        }


def _collect(name, results, threshold):
    worst, worst_i, failures = -math.inf, None, []
    for i, r in enumerate(results):
        if isinstance(r, str):
            failures.append({"trial": i, "error": r})
        elif r > worst:
            worst, worst_i = r, i
    return AuditReport(name, len(results), worst if worst_i is not None else 0.0, threshold, worst_i, failures)


def contractivity_audit(beta: BarycentricMap, p: float, space: Space, trials: int, seed: int,
                        max_atoms: int = 6, threads: int = 1) -> AuditReport:
    """Worst value of ``d(beta(mu), beta(nu)) - W_p(mu, nu)`` over seeded pairs."""

    def trial(i):
        rng = trial_rng(seed, i)
        mu = random_measure(space, rng, max_atoms)
        nu = random_measure(space, rng, max_atoms)
        try:
            return dist(space, beta(mu), beta(nu)) - wasserstein(p, mu, nu)[0]
        except Exception as exc:  # recorded per trial
            return f"{type(exc).__name__}: {exc}"

    return _collect(f"contractivity[{beta.variant}, p={p:g}, {space.describe()}]",
                    parallel_map(trial, range(trials), threads), AUDIT_TOL)


def ordered_uniform_pair(space: Space, rng: np.random.Generator, max_atoms: int = 6):
    """Two uniform measures whose atom lists satisfy ``a_j <= b_j`` (shuffled)."""
    k = int(rng.integers(1, max_atoms + 1))
    a = random_points(space, rng, k)
    b = []
    for x in a:
        gap = random_point(space, rng, 1.0) * float(rng.uniform(0.05, 1.0))
        b.append(_sym(x + gap))
    perm = rng.permutation(k)
    return DiscreteMeasure(space, a), DiscreteMeasure(space, [b[j] for j in perm])


def monotonicity_audit(beta: BarycentricMap, space: Space, trials: int, seed: int, threads: int = 1) -> AuditReport:
    """Check ``beta(mu) <= beta(nu)`` (Loewner) on seeded ordered pairs.

    The violation is the negated minimum eigenvalue of ``beta(nu) - beta(mu)``.
    """
    if space.order != "loewner":
        raise UnsupportedError("monotonicity audit needs a Loewner-ordered space")

    def trial(i):
        rng = trial_rng(seed, i)
        mu, nu = ordered_uniform_pair(space, rng)
        try:
            x, y = beta(mu), beta(nu)
            gap = -float(np.linalg.eigvalsh(_sym(y - x))[0])
            return gap if not loewner_leq(x, y) else min(gap, 0.0)
        except Exception as exc:
            return f"{type(exc).__name__}: {exc}"

    return _collect(f"monotonicity[{beta.variant}, {space.describe()}]",
                    parallel_map(trial, range(trials), threads), 1e-12)


# --------------------------------------------------------------------------
# metric between maps


@dataclass
class MapDistanceBound:
    """A certified lower bound of the sup-ratio metric between two maps."""

    value: float
    witness: list | None
    ratios: list[float]

    def __float__(self):
        return self.value


def sample_tuples(space: Space, budget: int, seed: int, sizes=range(2, 9)) -> list[list[np.ndarray]]:
    sizes = list(sizes)
    out = []
    for i in range(budget):
        rng = trial_rng(seed, i)
        n = sizes[int(rng.integers(0, len(sizes)))]
        out.append(random_points(space, rng, n))
    return out


def map_distance_lower_bound(beta1: BarycentricMap, beta2: BarycentricMap, p: float, space: Space,
                             tuple_budget: int, seed: int, sizes=range(2, 9), threads: int = 1) -> MapDistanceBound:
    """Max over seeded tuples ``x`` of ``d(beta1(x), beta2(x)) / diam(x)``.

    The tuples depend only on ``(space, budget, seed, sizes)``, so bounds
    for different map pairs share one tuple set.
    """
    tuples = sample_tuples(space, tuple_budget, seed, sizes)

    def ratio(pts):
        delta = diameter(space, pts)
        if delta == 0.0:
            return None
        mu = DiscreteMeasure(space, pts)
        return dist(space, beta1(mu), beta2(mu)) / delta

    ratios = parallel_map(ratio, tuples, threads)
    best, witness = 0.0, None
    for pts, r in zip(tuples, ratios):
        if r is not None and r > best:
            best, witness = r, [x.tolist() for x in pts]
    return MapDistanceBound(best, witness, [r for r in ratios if r is not None])


# --------------------------------------------------------------------------
# semiflow audit


def semiflow_bound(p: float, s: float, t: float) -> float:
    """Coefficient of ``diam`` in the distance bound between two semiflow times."""
    k = convexity_constant(2 * p).k
    return ((k * (s + t) + 2 * (2 - k)) / 4) ** (1 / (2 * p))


@dataclass
class SemiflowSample:
    law_gap: float
    law_tol: float
    time_gap: float
    time_bound: float


@dataclass
class SemiflowReport:
    s: float
    t: float
    samples: list[SemiflowSample]
    failures: list

    @property
    def passed(self):
        return not self.failures and all(
            x.law_gap <= x.law_tol and x.time_gap <= x.time_bound for x in self.samples
        )


def semiflow_audit(beta: BarycentricMap, s: float, t: float, measures, tol: float = 1e-10) -> SemiflowReport:
    """Check the semigroup law and the time-continuity bound on given measures."""
    phi_s = SemiflowImage(s, beta, tol)
    phi_t = SemiflowImage(t, beta, tol)
    nested = SemiflowImage(t, phi_s, tol)
    phi_st = SemiflowImage(s * t, beta, tol)
    law_tol = nested.accuracy + phi_st.accuracy + 1e-12
    samples, failures = [], []
    for i, mu in enumerate(measures):
        try:
            space = mu.space
            law_gap = dist(space, nested(mu), phi_st(mu))
            time_gap = dist(space, phi_t(mu), phi_s(mu))
            bound = semiflow_bound(beta.p, s, t) * mu.diameter() + phi_s.accuracy + phi_t.accuracy
            samples.append(SemiflowSample(law_gap, law_tol, time_gap, bound))
        except Exception as exc:
            failures.append({"sample": i, "error": f"{type(exc).__name__}: {exc}"})
    return SemiflowReport(s, t, samples, failures)
