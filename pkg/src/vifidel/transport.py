"""Exact balanced transportation solver and Word Mover's Distance.

The solver is a primal network simplex on the bipartite supply/demand graph:
a north-west-corner spanning-tree basis, node potentials from the tree, and
pivots along the unique tree cycle closed by the entering cell. Entering cells
follow Dantzig's rule (most negative reduced cost, lowest flat index on ties);
after a run of degenerate pivots it switches to Bland's rule, which cannot
cycle. The leaving cell is always the lowest-index minimiser of the ratio test.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .exceptions import DomainError, EmptyDistributionError, InfeasibleProblemError
from .textproc import WordDistribution

BALANCE_TOL = 1e-9
_DEGENERATE_RUN = 64


@dataclass(frozen=True)
class CostParams:
    p: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 0):
            raise DomainError(f"cost exponent p must be positive, got {self.p}")


DEFAULT_COST = CostParams()


@dataclass(frozen=True)
class TransportProblem:
    vocab: tuple
    supply: np.ndarray
    demand: np.ndarray
    cost: np.ndarray

    @property
    def size(self):
        return len(self.vocab)


@dataclass(frozen=True)
class TransportPlan:
    flows: np.ndarray
    objective: float
    vocab: tuple = ()

    def nonzero(self):
        """Sparse ``(i, j, flow)`` triplets of the strictly positive flows."""
        rows, cols = np.nonzero(self.flows > 0)
        return [(int(i), int(j), float(self.flows[i, j])) for i, j in zip(rows, cols)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "vocab": list(self.vocab),
                "flows": [list(t) for t in self.nonzero()],
                "objective": self.objective,
            }
        )


def word_travel_cost(u, v, params: CostParams = DEFAULT_COST) -> float:
    """Euclidean distance raised to ``params.p`` (squared distance for p=2)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    sq = float(np.dot(diff, diff))
    if params.p == 2:
        return sq
    return math.sqrt(sq) ** params.p


def pairwise_costs(vectors, params: CostParams = DEFAULT_COST) -> np.ndarray:
    """Symmetric matrix of ``word_travel_cost`` over the rows of ``vectors``."""
    X = np.asarray(vectors, dtype=np.float64)
    diff = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if params.p == 2:
        return sq
    return np.sqrt(sq) ** params.p


def combined_vocabulary(source: WordDistribution, target: WordDistribution):
    """Merge two distributions onto their lexicographically ordered union.

    Returns ``(vocab, supply, demand, vectors)``.
    """
    if source.is_empty:
        raise EmptyDistributionError("source distribution is empty")
    if target.is_empty:
        raise EmptyDistributionError("target distribution is empty")
    vecs = {}
    for dist in (target, source):
        for tok, vec in zip(dist.tokens, dist.vectors):
            vecs[tok] = vec
    vocab = tuple(sorted(vecs))
    index = {t: i for i, t in enumerate(vocab)}
    supply = np.zeros(len(vocab))
    demand = np.zeros(len(vocab))
    for tok, w in zip(source.tokens, source.weights):
        supply[index[tok]] = w
    for tok, w in zip(target.tokens, target.weights):
        demand[index[tok]] = w
    return vocab, supply, demand, np.vstack([vecs[t] for t in vocab])


def build_problem(
    source: WordDistribution,
    target: WordDistribution,
    costfn: Optional[Callable] = None,
    params: CostParams = DEFAULT_COST,
    token_scale: Optional[Mapping[str, float]] = None,
) -> TransportProblem:
    """Lay out the transportation problem between two distributions.

    ``costfn(u, v)`` is called on pairs of resolved vectors; when omitted the
    word travel cost with ``params`` is used. ``token_scale`` multiplies each
    token's vector before costs are taken (the importance-weighted cost).
    """
    vocab, supply, demand, X = combined_vocabulary(source, target)
    if token_scale is not None:
        X = X * np.array([token_scale[t] for t in vocab])[:, None]
    if costfn is None:
        cost = pairwise_costs(X, params)
    else:
        n = len(vocab)
        cost = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                cost[i, j] = costfn(X[i], X[j])
    return TransportProblem(vocab, supply, demand, cost)


# ---------------------------------------------------------------------------
# network simplex


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    flows = np.zeros((m, n))
    basic = np.zeros((m, n), dtype=bool)
    s = a.copy()
    d = b.copy()
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flows[i, j] = x
        basic[i, j] = True
        s[i] -= x
        d[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif s[i] <= d[j]:
            # row exhausted, or both: the column carries on with a zero cell
            i += 1
        else:
            j += 1
    return flows, basic


def _spanning_tree(basic, C):
    """Potentials plus parent pointers of the basis tree rooted at row 0.

    Nodes ``0..m-1`` are rows, ``m..m+n-1`` columns.
    """
    m, n = basic.shape
    adj = [[] for _ in range(m + n)]
    for i, j in zip(*np.nonzero(basic)):
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.zeros(m + n)
    parent = np.full(m + n, -1)
    depth = np.zeros(m + n, dtype=int)
    seen = np.zeros(m + n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in sorted(adj[node]):
            if seen[nb]:
                continue
            seen[nb] = True
            parent[nb] = node
            depth[nb] = depth[node] + 1
            if node < m:
                pot[nb] = C[node, nb - m] - pot[node]
            else:
                pot[nb] = C[nb, node - m] - pot[node]
            queue.append(nb)
    if not seen.all():
        raise RuntimeError("basis is not a spanning tree")
    return pot[:m], pot[m:], parent, depth


def _edge(a, b, m):
    return (a, b - m) if a < m else (b, a - m)


def _tree_path(parent, depth, start, end, m):
    """Cells on the tree path from node ``start`` to node ``end``, in order."""
    head, tail = [], []
    x, y = start, end
    while x != y:
        if depth[x] >= depth[y]:
            head.append(_edge(x, parent[x], m))
            x = parent[x]
        else:
            tail.append(_edge(y, parent[y], m))
            y = parent[y]
    return head + tail[::-1]


def transport_simplex(a, b, C, max_iter=None):
    """Optimal flows for strictly positive supplies ``a`` and demands ``b``.

    ``a`` and ``b`` must have equal totals. Returns an ``(m, n)`` flow matrix
    whose positive entries lie on a spanning-tree basis (at most m+n-1 cells).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    m, n = C.shape
    flows, basic = _northwest_corner(a, b)
    if m == 1 or n == 1:
        return flows

    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    if max_iter is None:
        max_iter = 50 * (m * n + m + n) + 1000
    degenerate_run = 0
    for _ in range(max_iter):
        u, v, parent, depth = _spanning_tree(basic, C)
        reduced = C - u[:, None] - v[None, :]
        reduced[basic] = 0.0
        if degenerate_run < _DEGENERATE_RUN:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                return flows
        else:
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                return flows
            flat = int(candidates[0])
        ei, ej = divmod(flat, n)

        # entering cell gets +, path cells from its column back to its row
        # alternate -, +, -, ...
        path = _tree_path(parent, depth, m + ej, ei, m)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flows[c] for c in minus)
        leaving = min(c for c in minus if flows[c] == theta)

        for c in plus:
            flows[c] += theta
        for c in minus:
            flows[c] -= theta
        flows[ei, ej] += theta
        flows[leaving] = 0.0
        basic[leaving] = False
        basic[ei, ej] = True
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
    raise RuntimeError("transportation simplex did not converge")


def _validate(problem: TransportProblem):
    supply = np.asarray(problem.supply, dtype=np.float64)
    demand = np.asarray(problem.demand, dtype=np.float64)
    cost = np.asarray(problem.cost, dtype=np.float64)
    n = len(problem.vocab) if problem.vocab else len(supply)
    if supply.shape != (n,) or demand.shape != (n,) or cost.shape != (n, n):
        raise DomainError("supply, demand and cost shapes do not agree")
    for name, arr in (("supply", supply), ("demand", demand)):
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError(f"{name} must be finite and nonnegative")
    if not np.all(np.isfinite(cost)):
        raise DomainError("cost matrix contains NaN or infinite entries")
    if np.any(cost < 0):
        raise DomainError("cost matrix contains negative entries")
    s_tot = float(supply.sum())
    d_tot = float(demand.sum())
    if s_tot <= 0 or d_tot <= 0:
        raise EmptyDistributionError("supply or demand carries no mass")
    if abs(s_tot - d_tot) > BALANCE_TOL:
        raise InfeasibleProblemError(
            f"unbalanced problem: supply {s_tot!r} != demand {d_tot!r}"
        )
    return supply, demand, cost


def solve(problem: TransportProblem) -> TransportPlan:
    """Exact optimum of min sum T_ij c_ij subject to the marginals."""
    supply, demand, cost = _validate(problem)
    total = 0.5 * (supply.sum() + demand.sum())
    supply = supply * (total / supply.sum())
    demand = demand * (total / demand.sum())

    rows = np.flatnonzero(supply > 0)
    cols = np.flatnonzero(demand > 0)
    sub = transport_simplex(supply[rows], demand[cols], cost[np.ix_(rows, cols)])
    flows = np.zeros(cost.shape)
    flows[np.ix_(rows, cols)] = sub
    objective = float(np.sum(flows * cost))
    return TransportPlan(flows, objective, tuple(problem.vocab))


def _canonical_order(source, target):
    key_s = (source.tokens, source.weights.tolist())
    key_t = (target.tokens, target.weights.tolist())
    return (target, source, True) if key_t < key_s else (source, target, False)


def solve_pair(source, target, params=DEFAULT_COST, token_scale=None):
    """Solve the WMD problem for two distributions, independent of argument order.

    The pair is put in a canonical order before solving so that swapping the
    arguments yields a bit-identical objective; the returned plan is
    transposed back when needed.
    """
    first, second, swapped = _canonical_order(source, target)
    plan = solve(build_problem(first, second, params=params, token_scale=token_scale))
    if swapped:
        plan = TransportPlan(plan.flows.T.copy(), plan.objective, plan.vocab)
    return plan


def wmd(source: WordDistribution, target: WordDistribution, params=DEFAULT_COST) -> float:
    return solve_pair(source, target, params).objective
