"""Exact large-deviation quantities for barycenters of i.i.d. empirical measures.

For ``X_i`` i.i.d. with law ``sum_j w_j delta_{A_j}``, the empirical
measure after ``n`` draws is determined by the count vector ``m`` and has
probability ``n! / prod(m_j!) * prod(w_j^{m_j})``. Enumerating compositions
gives exact event probabilities; the rate function is the relative
entropy minimized over the simplex, scanned on a lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .barycenters import BarycentricMap, evaluate
from .errors import CapacityError, InputError
from .geometry import Geometry, Space, dist, logm
from .measures import DiscreteMeasure
from .sampling import parallel_map, trial_rng

MAX_ATOMS = 6
MAX_N = 60
MAX_COMPOSITIONS = 10**6
MATCH_TOL = 1e-6


# --------------------------------------------------------------------------
# events


class Event:
    kind = "event"

    def __call__(self, x) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Always(Event):
    kind = "always"

    def __call__(self, x):
        return True

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Geq(Event):
    """``x[index] >= threshold`` on a Euclidean space."""

    threshold: float
    index: int = 0
    kind = "geq"

    def __call__(self, x):
        return bool(np.asarray(x).ravel()[self.index] >= self.threshold)

    def to_dict(self):
        return {"kind": self.kind, "threshold": self.threshold, "index": self.index}


@dataclass(frozen=True, eq=False)
class BallComplement(Event):
    """``d(x, center) >= radius``."""

    space: Space
    center: np.ndarray
    radius: float
    kind = "ball_complement"

    def __call__(self, x):
        return dist(self.space, x, self.center) >= self.radius

    def to_dict(self):
        return {"kind": self.kind, "center": np.asarray(self.center).tolist(), "radius": self.radius}


def event_from_dict(d: dict, space: Space) -> Event:
    kind = d.get("kind")
    if kind == "always":
        return Always()
    if kind == "geq":
        return Geq(float(d["threshold"]), int(d.get("index", 0)))
    if kind == "ball_complement":
        return BallComplement(space, space.point(d["center"]), float(d["radius"]))
    raise InputError(f"unknown event kind {kind!r}")


# --------------------------------------------------------------------------
# model


class IIDModel:
    """Law ``mu_0 = sum_j w_j delta_{A_j}`` and the barycentric map applied to empirical measures.

    Barycenters of empirical measures are cached by count vector.
    """

    def __init__(self, space: Space, atoms, weights, beta: BarycentricMap):
        atoms = [space.point(a) for a in atoms]
        w = np.array(weights, dtype=float)
        if len(atoms) != len(w) or not atoms:
            raise InputError("atoms and weights must be nonempty and of equal length")
        if np.any(w <= 0) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise InputError("weights must be positive and sum to 1")
        if not beta.supports(space):
            raise InputError(f"{beta.variant} map does not support {space.describe()}")
        w.setflags(write=False)
        self.space = space
        self.atoms = tuple(atoms)
        self.weights = w
        self.beta = beta
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def k(self) -> int:
        return len(self.atoms)

    def value(self, counts) -> np.ndarray:
        """``beta(sum_j (m_j / n) delta_{A_j})`` for a count vector ``m``."""
        key = tuple(int(c) for c in counts)
        hit = self._cache.get(key)
        if hit is None:
            n = sum(key)
            idx = [j for j, c in enumerate(key) if c > 0]
            mu = DiscreteMeasure(self.space, [self.atoms[j] for j in idx], [key[j] / n for j in idx])
            hit = evaluate(self.beta, mu)
            self._cache[key] = hit
        return hit

    def center(self) -> np.ndarray:
        """``beta(mu_0)``."""
        return evaluate(self.beta, DiscreteMeasure(self.space, self.atoms, self.weights))

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "atoms": [a.tolist() for a in self.atoms],
            "weights": self.weights.tolist(),
            "map": self.beta.to_dict(),
        }


def compositions(n: int, k: int):
    """All count vectors of length ``k`` summing to ``n``, in lexicographic order."""
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def _check_capacity(n: int, k: int) -> None:
    if k > MAX_ATOMS or n > MAX_N:
        raise CapacityError(f"enumeration limited to K <= {MAX_ATOMS} atoms and n <= {MAX_N}")
    if math.comb(n + k - 1, k - 1) > MAX_COMPOSITIONS:
        raise CapacityError(f"{math.comb(n + k - 1, k - 1)} compositions exceed {MAX_COMPOSITIONS}")


def log_multinomial(counts, log_w) -> float:
    n = sum(counts)
    return math.lgamma(n + 1) + math.fsum(c * lw - math.lgamma(c + 1) for c, lw in zip(counts, log_w))


@dataclass
class EnumEntry:
    counts: tuple[int, ...]
    probability: float
    value: np.ndarray


def enumerate_empirical_distribution(model: IIDModel, n: int) -> list[EnumEntry]:
    """One entry per composition of ``n``: its exact probability and barycenter."""
    if n < 1:
        raise InputError("n must be positive")
    _check_capacity(n, model.k)
    log_w = [math.log(w) for w in model.weights]
    return [EnumEntry(c, math.exp(log_multinomial(c, log_w)), model.value(c)) for c in compositions(n, model.k)]


def event_probability(model: IIDModel, n: int, event) -> float:
    return math.fsum(e.probability for e in enumerate_empirical_distribution(model, n) if event(e.value))


def relative_entropy(p, w) -> float:
    """``sum p_j log(p_j / w_j)`` in nats, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    if p.shape != w.shape:
        raise InputError("probability vectors differ in length")
    terms = []
    for pj, wj in zip(p, w):
        if pj == 0.0:
            continue
        if wj == 0.0:
            return math.inf
        terms.append(pj * math.log(pj / wj))
    return max(math.fsum(terms), 0.0)


# --------------------------------------------------------------------------
# rate function


@dataclass
class RateResult:
    value: float
    p: list[float] | None
    matched: bool
    lattice_points: int
    skipped: int
    match_tol: float

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value if math.isfinite(self.value) else "inf", "p": self.p, "matched": self.matched,
                "lattice_points": self.lattice_points, "skipped": self.skipped, "match_tol": self.match_tol}


def _lattice(model: IIDModel, m: int):
    """Yield ``(p, value)`` over ``{k/m}``; solver failures are counted, not raised."""
    skipped = 0
    out = []
    for c in compositions(m, model.k):
        try:
            out.append((np.array(c) / m, model.value(c)))
        except Exception:
            skipped += 1
    return out, skipped


def _simplex_value(model: IIDModel, p: np.ndarray) -> np.ndarray:
    idx = [j for j in range(model.k) if p[j] > 0]
    mu = DiscreteMeasure(model.space, [model.atoms[j] for j in idx], [p[j] for j in idx])
    return evaluate(model.beta, mu)


def rate_function(model: IIDModel, x, m: int = 40, match_tol: float = MATCH_TOL, refine: bool = True) -> RateResult:
    """``I(x) = inf{S(p || w) : beta(p) = x}`` with the constraint read as ``d <= match_tol``.

    The lattice ``{k/m}`` is scanned first; if no lattice point matches,
    the result is ``+inf`` (flagged unmatched). Otherwise a pattern search
    along the edges ``e_i - e_j`` with halving steps lowers the entropy
    while staying within ``match_tol`` of ``x``.
    """
    x = model.space.point(x)
    pts, skipped = _lattice(model, m)
    w = model.weights
    best, best_s = None, math.inf
    for p, v in pts:
        if dist(model.space, v, x) <= match_tol:
            s = relative_entropy(p, w)
            if s < best_s:
                best, best_s = p, s
    if best is None:
        return RateResult(math.inf, None, False, len(pts), skipped, match_tol)
    if refine and best_s > 0.0:
        k = model.k
        h = 0.5 / m
        while h > 1e-10:
            improved = False
            for i in range(k):
                for j in range(k):
                    if i == j or best[j] < h:
                        continue
                    cand = best.copy()
                    cand[i] += h
                    cand[j] -= h
                    s = relative_entropy(cand, w)
                    if s >= best_s:
                        continue
                    try:
                        ok = dist(model.space, _simplex_value(model, cand), x) <= match_tol
                    except Exception:
                        ok = False
                    if ok:
                        best, best_s, improved = cand, s, True
            if not improved:
                h *= 0.5
    return RateResult(best_s, best.tolist(), True, len(pts), skipped, match_tol)


def rate_inf_over_event(model: IIDModel, event, m: int = 40) -> RateResult:
    """Least lattice entropy among ``p`` whose barycenter lies in the event."""
    pts, skipped = _lattice(model, m)
    best, best_s = None, math.inf
    for p, v in pts:
        if event(v):
            s = relative_entropy(p, model.weights)
            if s < best_s:
                best, best_s = p, s
    return RateResult(best_s, None if best is None else best.tolist(), best is not None, len(pts), skipped, 0.0)


@dataclass
class LdpReport:
    n: list[int]
    probabilities: list[float]
    a_n: list[float]
    rate_inf: float
    gaps: list[float]
    envelope_c: float
    decreasing: bool
    lattice: int
    rate: RateResult | None = None

    def to_dict(self) -> dict:
        def f(v):
            return v if math.isfinite(v) else "inf"

        return {
            "rows": [{"n": n, "P_n": pn, "a_n": f(a), "gap": f(g)}
                     for n, pn, a, g in zip(self.n, self.probabilities, self.a_n, self.gaps)],
            "rate_inf": f(self.rate_inf),
            "lattice": self.lattice,
            "envelope_c": f(self.envelope_c),
            "decreasing": self.decreasing,
        }


def ldp_gap_report(model: IIDModel, event, n_list, m: int = 40) -> LdpReport:
    """``a_n = -(1/n) log P_n`` against the lattice rate infimum.

    ``envelope_c`` is the least ``C`` with ``|a_n - I| <= C log(n) / n`` on
    the listed ``n`` (values with ``n = 1`` are left out of the fit).
    """
    n_list = [int(n) for n in n_list]
    rate = rate_inf_over_event(model, event, m)
    probs, a_n, gaps = [], [], []
    for n in n_list:
        pn = event_probability(model, n, event)
        probs.append(pn)
        a = -math.log(pn) / n if pn > 0 else math.inf
        a_n.append(a)
        gaps.append(abs(a - rate.value) if math.isfinite(a) and math.isfinite(rate.value) else math.inf)
    fit = [g * n / math.log(n) for g, n in zip(gaps, n_list) if n > 1]
    c = max(fit, default=0.0)
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    return LdpReport(n_list, probs, a_n, rate.value, gaps, c, decreasing, m, rate)


# --------------------------------------------------------------------------
# injectivity probe


@dataclass
class GeneralPositionReport:
    min_separation: float
    witness: tuple[list[float], list[float]] | None
    collision: bool
    lattice: int
    note: str = "heuristic lattice probe; absence of a collision does not prove injectivity"

    def to_dict(self) -> dict:
        return {"min_separation": self.min_separation, "witness": self.witness, "collision": self.collision,
                "lattice": self.lattice, "note": self.note}


def _chart_distance_matrix(space: Space, values) -> np.ndarray:
    """Pairwise lower bounds for the space metric from a flat chart."""
    if not space.is_spd:
        v = np.stack([np.asarray(x, dtype=float).ravel() for x in values])
        return np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    logs = np.stack([logm(x) for x in values])
    diff = logs[:, None] - logs[None, :]
    if space.geometry is Geometry.SPD_THOMPSON:
        return np.linalg.norm(diff, ord=2, axis=(-2, -1))
    return np.linalg.norm(diff, axis=(-2, -1))


def general_position_probe(model: IIDModel, m: int = 40, separation_tol: float = 1e-9) -> GeneralPositionReport:
    """Least distance between barycenters of distinct lattice points.

    Distinct points of the ``1/m`` lattice are at least ``2/m`` apart in
    the l1 norm. Candidate pairs are screened by the flat chart distance
    ``|log A - log B|``, which never exceeds the SPD distances used here,
    so pairs are examined in increasing chart distance and the scan stops
    once the chart distance passes the best true distance.
    """
    pts, _ = _lattice(model, m)
    ps = [p for p, _ in pts]
    vals = [v for _, v in pts]
    lower = _chart_distance_matrix(model.space, vals)
    iu = np.triu_indices(len(vals), 1)
    order = np.argsort(lower[iu], kind="stable")
    best, witness = math.inf, None
    for r in order:
        i, j = int(iu[0][r]), int(iu[1][r])
        if lower[i, j] > best:
            break
        d = dist(model.space, vals[i], vals[j])
        if d < best:
            best, witness = d, (ps[i].tolist(), ps[j].tolist())
    return GeneralPositionReport(best, witness, best <= separation_tol, m)


# --------------------------------------------------------------------------
# sampling


DEFAULT_CHECKPOINTS = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000)


@dataclass
class SllnReport:
    checkpoints: list[int]
    distances: list[list[float]]
    median: list[float]
    maximum: list[float]
    eps: float
    inside_at_max: int
    trials: int
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"checkpoints": self.checkpoints, "median": self.median, "max": self.maximum, "eps": self.eps,
                "inside_at_max": self.inside_at_max, "trials": self.trials, "failures": self.failures}


def iid_slln_trial(model: IIDModel, n_max: int, trials: int, seed: int, eps: float,
                   checkpoints=None, threads: int = 1) -> SllnReport:
    """``d(beta(empirical_n), beta(mu_0))`` along seeded i.i.d. samples."""
    cps = sorted({c for c in (checkpoints or DEFAULT_CHECKPOINTS) if c <= n_max} | {int(n_max)})
    target = model.center()

    def trial(i):
        rng = trial_rng(seed, i)
        draws = rng.choice(model.k, size=n_max, p=model.weights)
        row = []
        for n in cps:
            counts = np.bincount(draws[:n], minlength=model.k)
            row.append(dist(model.space, model.value(counts), target))
        return row

    rows, failures = [], []
    for i, r in enumerate(parallel_map(_guard(trial), range(trials), threads)):
        if isinstance(r, str):
            failures.append({"trial": i, "error": r})
        else:
            rows.append(r)
    arr = np.array(rows) if rows else np.zeros((0, len(cps)))
    med = [float(np.median(arr[:, k])) if rows else math.nan for k in range(len(cps))]
    mx = [float(np.max(arr[:, k])) if rows else math.nan for k in range(len(cps))]
    inside = int(np.sum(arr[:, -1] < eps)) if rows else 0
    return SllnReport(cps, arr.tolist(), med, mx, eps, inside, trials, failures)


def _guard(fn):
    def wrapped(i):
        try:
            return fn(i)
        except Exception as exc:
            return f"{type(exc).__name__}: {exc}"

    return wrapped


def wilson_interval(successes: int, total: int, level: float = 0.95) -> tuple[float, float]:
    if total == 0:
        return 0.0, 1.0
    z = NormalDist().inv_cdf(0.5 + level / 2)
    phat = successes / total
    denom = 1 + z * z / total
    mid = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    # the interval ends are exact at the boundary counts
    lo = 0.0 if successes == 0 else max(0.0, mid - half)
    hi = 1.0 if successes == total else min(1.0, mid + half)
    return lo, hi


@dataclass
class MonteCarloEstimate:
    estimate: float
    ci: tuple[float, float]
    hits: int
    samples: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "ci": list(self.ci), "hits": self.hits, "samples": self.samples}


def monte_carlo_event_probability(model: IIDModel, event, n: int, samples: int, seed: int, chunk: int = 1000,
                                  threads: int = 1) -> MonteCarloEstimate:
    """Estimate ``P(beta(empirical_n) in event)`` with a 95% Wilson interval.

    Samples are drawn in chunks, each chunk from its own stream.
    """
    sizes = [min(chunk, samples - s) for s in range(0, samples, chunk)]

    def task(i):
        rng = trial_rng(seed, i)
        counts = rng.multinomial(n, model.weights, size=sizes[i])
        return sum(1 for c in counts if event(model.value(c)))

    hits = sum(parallel_map(task, range(len(sizes)), threads))
    return MonteCarloEstimate(hits / samples if samples else math.nan, wilson_interval(hits, samples), hits, samples)
