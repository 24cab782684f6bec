"""Seeded random points, measures and random variables for audits and tests.

Every trial gets its own counter-based stream keyed by ``(seed, index)``,
so results do not depend on evaluation order or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .geometry import Space


def trial_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_spd(rng: np.random.Generator, n: int, log_spread: float = 1.0) -> np.ndarray:
    """``Q diag(exp(u)) Q^T`` with ``u`` uniform on ``[-log_spread, log_spread]``."""
    q = random_orthogonal(rng, n)
    w = np.exp(rng.uniform(-log_spread, log_spread, n))
    a = (q * w) @ q.T
    return 0.5 * (a + a.T)


def random_point(space: Space, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    if space.is_spd:
        return random_spd(rng, space.dim, scale)
    return scale * rng.standard_normal(space.dim)


def random_points(space: Space, rng: np.random.Generator, k: int, scale: float = 1.0) -> list[np.ndarray]:
    return [random_point(space, rng, scale) for _ in range(k)]


def random_weights(rng: np.random.Generator, k: int) -> np.ndarray:
    w = rng.dirichlet(np.ones(k))
    w = np.maximum(w, 1e-3)
    return w / w.sum()


def random_measure(space: Space, rng: np.random.Generator, max_atoms: int = 6, uniform: bool = False, scale: float = 1.0):
    from .measures import DiscreteMeasure

    k = int(rng.integers(1, max_atoms + 1))
    pts = random_points(space, rng, k, scale)
    w = None if uniform else random_weights(rng, k)
    return DiscreteMeasure(space, pts, w)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map, optionally on a thread pool; output order never changes."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
