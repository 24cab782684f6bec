"""Exact transportation LP by the network simplex method on the bipartite graph.

The basis is a spanning tree of the complete bipartite graph rows x columns
(``m + n - 1`` cells, zero flows allowed). Each pivot computes node
potentials on the tree, brings in the cell with the most negative reduced
cost and pushes flow around the unique cycle it closes. Ties are broken by
the lowest ``(row, col)`` index. After a run of degenerate pivots the
entering rule falls back to Bland's rule, which cannot cycle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConvergenceError, InputError

OPT_TOL = 1e-11
MAX_ATOMS = 512
_DEGENERATE_RUN = 50


@dataclass(frozen=True)
class TransportSolution:
    plan: np.ndarray
    cost: float
    u: np.ndarray
    v: np.ndarray
    pivots: int
    min_reduced_cost: float
    duality_gap: float


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = len(a), len(b)
    flow = np.zeros((m, n))
    basis = []
    s, d = a.astype(float).copy(), b.astype(float).copy()
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flow[i, j] = x
        basis.append((i, j))
        s[i] -= x
        d[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif s[i] <= d[j]:
            i += 1
        else:
            j += 1
    return flow, basis


def _adjacency(basis, m: int, n: int):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(adj, cost: np.ndarray, m: int, n: int):
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = cost[node, nb - m] - u[node]
            else:
                u[nb] = cost[nb, node - m] - v[node - m]
            queue.append(nb)
    return u, v


def _tree_path(adj, start: int, goal: int) -> list[int]:
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def solve_transport(a, b, cost, tol: float = OPT_TOL, max_pivots: int | None = None) -> TransportSolution:
    """Minimize ``sum(plan * cost)`` over plans with row sums ``a``, column sums ``b``.

    Returns the optimal plan together with dual potentials ``u, v``. The
    solution is certified by complementary slackness: every reduced cost
    ``cost - u - v`` is ``>= -tol`` (scaled by the largest cost) and the
    primal and dual objectives agree.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = len(a), len(b)
    if cost.shape != (m, n):
        raise InputError(f"cost matrix shape {cost.shape} does not match marginals ({m}, {n})")
    if m == 0 or n == 0:
        raise InputError("empty marginal")
    if m > MAX_ATOMS or n > MAX_ATOMS:
        raise CapacityError(f"transport problem {m}x{n} exceeds {MAX_ATOMS} atoms per side")
    if np.any(a < 0) or np.any(b < 0) or not np.all(np.isfinite(cost)):
        raise InputError("marginals must be nonnegative and costs finite")

    scale = max(1.0, float(np.max(np.abs(cost))))
    thresh = tol * scale
    if max_pivots is None:
        max_pivots = 50 * (m + n) * max(m, n) + 100

    flow, basis = _northwest_corner(a, b)
    adj = _adjacency(basis, m, n)
    degenerate = 0
    pivots = 0
    while True:
        u, v = _potentials(adj, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        if degenerate < _DEGENERATE_RUN:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -thresh:
                break
        else:
            neg = np.flatnonzero(reduced < -thresh)
            if neg.size == 0:
                break
            flat = int(neg[0])
        r, c = divmod(flat, n)
        if pivots >= max_pivots:
            raise ConvergenceError(
                f"network simplex exceeded {max_pivots} pivots", best=flow.copy(), residual=float(reduced.min())
            )
        pivots += 1

        path = _tree_path(adj, r, m + c)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((p, q - m) if p < m else (q, p - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[cell] for cell in minus)
        leaving = min(cell for cell in minus if flow[cell] == theta)

        for cell in minus:
            flow[cell] -= theta
        for cell in plus:
            flow[cell] += theta
        flow[r, c] += theta
        flow[leaving] = 0.0
        degenerate = degenerate + 1 if theta == 0.0 else 0

        basis.remove(leaving)
        basis.append((r, c))
        li, lj = leaving
        adj[li].remove(m + lj)
        adj[m + lj].remove(li)
        adj[r].append(m + c)
        adj[m + c].append(r)

    primal = float(np.sum(flow * cost))
    dual = float(np.dot(a, u) + np.dot(b, v))
    return TransportSolution(
        plan=flow,
        cost=primal,
        u=u,
        v=v,
        pivots=pivots,
        min_reduced_cost=float(reduced.min()),
        duality_gap=abs(primal - dual),
    )


def certify(solution: TransportSolution, a, b, cost, tol: float = OPT_TOL, marginal_tol: float = 1e-10) -> list[str]:
    """Return a list of violated optimality conditions (empty when certified)."""
    cost = np.asarray(cost, dtype=float)
    scale = max(1.0, float(np.max(np.abs(cost))))
    plan = solution.plan
    problems = []
    if np.any(plan < 0):
        problems.append("negative plan entry")
    if np.max(np.abs(plan.sum(axis=1) - np.asarray(a))) > marginal_tol:
        problems.append("row marginals violated")
    if np.max(np.abs(plan.sum(axis=0) - np.asarray(b))) > marginal_tol:
        problems.append("column marginals violated")
    reduced = cost - solution.u[:, None] - solution.v[None, :]
    if reduced.min() < -tol * scale:
        problems.append(f"dual infeasible (reduced cost {reduced.min():.3g})")
    slack = np.abs(reduced[plan > 0])
    if slack.size and slack.max() > 1e3 * tol * scale:
        problems.append(f"complementary slackness violated ({slack.max():.3g})")
    dual = float(np.dot(a, solution.u) + np.dot(b, solution.v))
    if abs(float(np.sum(plan * cost)) - dual) > 1e3 * tol * scale:
        problems.append("primal and dual objectives differ")
    return problems
