"""Concrete complete metric spaces: Euclidean vectors and the SPD cone.

Points are plain numpy arrays. A 1-D array is a Euclidean vector, a 2-D
array a symmetric positive-definite matrix. The :class:`Space` descriptor
says which metric and order the array lives under.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, InputError, UnsupportedError

SYM_TOL = 1e-12
EIG_FLOOR = 1e-12
COND_MAX = 1e8
LOEWNER_TOL = 1e-12


class Geometry(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPD_TRACE = "spd_trace"
    SPD_THOMPSON = "spd_thompson"


@dataclass(frozen=True)
class Space:
    """A metric space tag: geometry, dimension and optional partial order.

    ``dim`` is the vector length for Euclidean spaces and the matrix size
    for SPD spaces.
    """

    geometry: Geometry
    dim: int
    order: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if int(self.dim) < 1:
            raise InputError(f"dimension must be positive, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.order not in (None, "loewner"):
            raise InputError(f"unknown order {self.order!r}")
        if self.order == "loewner" and not self.is_spd:
            raise InputError("Loewner order requires an SPD geometry")

    @classmethod
    def euclidean(cls, n: int) -> Space:
        return cls(Geometry.EUCLIDEAN, n)

    @classmethod
    def spd_trace(cls, n: int) -> Space:
        return cls(Geometry.SPD_TRACE, n, "loewner")

    @classmethod
    def spd_thompson(cls, n: int) -> Space:
        return cls(Geometry.SPD_THOMPSON, n, "loewner")

    @property
    def is_spd(self) -> bool:
        return self.geometry is not Geometry.EUCLIDEAN

    @property
    def npc(self) -> bool:
        """Whether the space is globally non-positively curved (CAT(0))."""
        return self.geometry is not Geometry.SPD_THOMPSON

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.dim, self.dim) if self.is_spd else (self.dim,)

    def point(self, x) -> np.ndarray:
        """Validate ``x`` as an element of this space; return a read-only copy."""
        a = np.array(x, dtype=float)
        if a.shape != self.shape:
            raise InputError(f"point of shape {a.shape} does not belong to {self.describe()}")
        if not np.all(np.isfinite(a)):
            raise DomainError("point has non-finite entries")
        if self.is_spd:
            check_spd(a)
        a.setflags(write=False)
        return a

    def describe(self) -> str:
        return f"{self.geometry.value}({self.dim})"

    def to_dict(self) -> dict:
        return {"geometry": self.geometry.value, "dim": self.dim, "order": self.order}

    @classmethod
    def from_dict(cls, d: dict) -> Space:
        geometry = Geometry(d["geometry"])
        default_order = None if geometry is Geometry.EUCLIDEAN else "loewner"
        return cls(geometry, d["dim"], d.get("order", default_order))


def check_spd(a: np.ndarray) -> np.ndarray:
    """Raise :class:`DomainError` unless ``a`` is a well-conditioned SPD matrix.

    Returns the eigenvalues (ascending).
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > SYM_TOL:
        raise DomainError(f"matrix is not symmetric (asymmetry {asym:.3g})")
    try:
        w = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"eigen-solver failed: {exc}") from exc
    if w[0] <= EIG_FLOOR:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    if w[-1] / w[0] > COND_MAX:
        raise DomainError(f"condition number {w[-1] / w[0]:.3g} exceeds {COND_MAX:g}")
    return w


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _eigh(a: np.ndarray):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"eigen-solver failed: {exc}") from exc


def matrix_function(kind: str, a, t: float | None = None) -> np.ndarray:
    """Apply ``log``, ``exp``, ``sqrt`` or ``power`` to a symmetric matrix.

    Uses the eigendecomposition ``A = Q diag(w) Q^T`` and symmetrizes the
    result. ``power`` takes the exponent ``t``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T)) > SYM_TOL:
        raise DomainError("matrix function needs a symmetric argument")
    w, q = _eigh(_sym(a))
    if kind == "exp":
        fw = np.exp(w)
    else:
        if w[0] <= EIG_FLOOR:
            raise DomainError(f"{kind} needs a positive-definite matrix (min eigenvalue {w[0]:.3g})")
        if kind == "log":
            fw = np.log(w)
        elif kind == "sqrt":
            fw = np.sqrt(w)
        elif kind == "power":
            if t is None:
                raise InputError("power needs an exponent")
            fw = w ** float(t)
        else:
            raise InputError(f"unknown matrix function {kind!r}")
    return _sym((q * fw) @ q.T)


def logm(a) -> np.ndarray:
    return matrix_function("log", a)


def expm(a) -> np.ndarray:
    return matrix_function("exp", a)


def sqrtm(a) -> np.ndarray:
    return matrix_function("sqrt", a)


def powm(a, t: float) -> np.ndarray:
    return matrix_function("power", a, t)


def sqrt_and_isqrt(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``A^{1/2}`` and ``A^{-1/2}`` from a single eigendecomposition."""
    w, q = _eigh(_sym(a))
    if w[0] <= EIG_FLOOR:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    s = np.sqrt(w)
    return _sym((q * s) @ q.T), _sym((q / s) @ q.T)


def congruence_eigvals(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``A^{-1/2} B A^{-1/2}`` via the pencil ``(B, A)``."""
    try:
        return scipy.linalg.eigh(_sym(b), _sym(a), eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise DomainError(f"generalized eigen-solver failed: {exc}") from exc


def _same_space(space: Space, *points) -> list[np.ndarray]:
    out = []
    for x in points:
        a = np.asarray(x, dtype=float)
        if a.shape != space.shape:
            raise InputError(f"point of shape {a.shape} does not belong to {space.describe()}")
        out.append(a)
    return out


def dist(space: Space, x, y) -> float:
    """Distance between two points of ``space``.

    The arguments are put in a canonical order first so that
    ``dist(x, y)`` and ``dist(y, x)`` agree bit for bit.
    """
    x, y = _same_space(space, x, y)
    if x.tobytes() > y.tobytes():
        x, y = y, x
    if space.geometry is Geometry.EUCLIDEAN:
        return float(np.linalg.norm(x - y))
    if np.array_equal(x, y):
        return 0.0
    lam = congruence_eigvals(x, y)
    if lam[0] <= 0:
        raise DomainError("non-positive congruence eigenvalue; inputs are not SPD")
    ll = np.log(lam)
    if space.geometry is Geometry.SPD_TRACE:
        return float(math.sqrt(float(np.dot(ll, ll))))
    return float(np.max(np.abs(ll)))


def geodesic(space: Space, x, y, t: float) -> np.ndarray:
    """The point ``x #_t y`` on the geodesic from ``x`` (t=0) to ``y`` (t=1).

    SPD spaces use ``A^{1/2}(A^{-1/2} B A^{-1/2})^t A^{1/2}`` for both the
    trace and the Thompson metric.
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise InputError(f"geodesic parameter must lie in [0, 1], got {t}")
    x, y = _same_space(space, x, y)
    if t == 0.0:
        return x.copy()
    if t == 1.0:
        return y.copy()
    if space.geometry is Geometry.EUCLIDEAN:
        return (1.0 - t) * x + t * y
    if np.array_equal(x, y):
        return x.copy()
    sa, isa = sqrt_and_isqrt(x)
    inner = powm(_sym(isa @ y @ isa), t)
    out = _sym(sa @ inner @ sa)
    check_spd(out)
    return out


def loewner_leq(x, y) -> bool:
    """``x <= y`` in the Loewner order: ``y - x`` positive semidefinite."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape != y.shape:
        raise DomainError("Loewner order compares two SPD matrices of equal size")
    check_spd(x)
    check_spd(y)
    return bool(np.linalg.eigvalsh(_sym(y - x))[0] >= -LOEWNER_TOL)


def diameter(space: Space, points) -> float:
    pts = list(points)
    best = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            best = max(best, dist(space, pts[i], pts[j]))
    return best


@dataclass(frozen=True)
class ConvexityConstant:
    """Uniform convexity modulus ``k_q`` of a CAT(0) space and its root ``tau_q``."""

    q: float
    tau: float
    k: float


def _bisect(f, lo: float, hi: float, max_iter: int = 200) -> float:
    # runs to machine resolution; 200 halvings always get there
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or mid in (lo, hi):
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def convexity_constant(q: float) -> ConvexityConstant:
    """Compute ``k_q`` from the root ``tau_q > 1`` of ``x^{q-1} + (1-q)x + 2 - q``.

    At ``q = 2`` the polynomial vanishes identically and ``k_2 = 2``; ``tau``
    is then reported as the ``q -> 2+`` limit, the root of ``x log x = x + 1``
    (the value of ``k`` does not depend on it).
    """
    q = float(q)
    if not q >= 2.0:
        raise InputError(f"q must be >= 2, got {q}")
    if q == 2.0:
        tau = _bisect(lambda x: x * math.log(x) - x - 1.0, 1.0, 8.0)
        return ConvexityConstant(q, tau, 2.0)

    def f(x):
        return x ** (q - 1.0) + (1.0 - q) * x + 2.0 - q

    hi = 2.0
    while f(hi) <= 0:
        hi *= 2.0
    tau = _bisect(f, 1.0, hi)
    k = (8.0 / 2.0**q) * (1.0 + tau ** (q - 1.0)) / (1.0 + tau) ** (q - 1.0)
    return ConvexityConstant(q, tau, k)


def uniform_convexity_residual(space: Space, z, x, y, t: float, q: float) -> float:
    """RHS minus LHS of the uniform convexity inequality at ``(z, x, y, t)``.

    Nonnegative (up to rounding) on CAT(0) spaces.
    """
    if not space.npc:
        raise UnsupportedError(f"uniform convexity holds only on NPC spaces, not {space.describe()}")
    k = convexity_constant(q).k
    m = geodesic(space, x, y, t)
    lhs = dist(space, z, m) ** q
    zx = dist(space, z, x) ** q
    # written as zx + t*(zy - zx) so that x == y gives exactly zero
    rhs = zx + t * (dist(space, z, y) ** q - zx) - 0.5 * k * t * (1.0 - t) * dist(space, x, y) ** q
    return rhs - lhs
