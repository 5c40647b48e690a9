"""Finite-state CTMC machinery.

Generators are stored row-wise with exact off-diagonal rates; a float CSR
copy is built on demand for the semigroup.  Transient expectations use
uniformization,

    e^{tG} f = sum_k Poisson(Lambda t; k) P^k f,   P = I + G / Lambda,

truncated once the Poisson tail times ``max |f|`` drops below ``eps``.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import poisson

from .errors import InvalidConfig, InvalidParameter, InvalidSpec, ResourceLimit
from .model import AbsorbingDualSIP, SiteGraph, enumerate_moves, rational, sector

STATE_GUARD = 10**6


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Rate matrix of a finite CTMC; the diagonal is minus the row sum."""

    states: tuple
    rows: tuple  # rows[i] = ((j, rate), ...), off-diagonal only

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    @cached_property
    def exit_rates(self) -> tuple:
        return tuple(sum((r for _, r in row), Fraction(0)) for row in self.rows)

    @cached_property
    def absorbing(self) -> tuple:
        return tuple(i for i, row in enumerate(self.rows) if not row)

    def rate(self, s, t):
        i, j = self.index[s], self.index[t]
        if i == j:
            return -self.exit_rates[i]
        return dict(self.rows[i]).get(j, Fraction(0))

    @cached_property
    def is_exact(self) -> bool:
        return all(isinstance(r, (int, Fraction)) for row in self.rows for _, r in row)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        n = len(self.states)
        ri, ci, vals = [], [], []
        for i, row in enumerate(self.rows):
            for j, r in row:
                ri.append(i)
                ci.append(j)
                vals.append(float(r))
            ri.append(i)
            ci.append(i)
            vals.append(-float(self.exit_rates[i]))
        return sp.csr_matrix((vals, (ri, ci)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def vector(self, fn: Callable) -> np.ndarray:
        return np.array([float(fn(s)) for s in self.states])

    def dump_csv(self, path) -> None:
        """Sparse triplets ``row,col,rate`` including the diagonal."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "rate"])
            for i, row in enumerate(self.rows):
                w.writerow([i, i, str(-self.exit_rates[i])])
                for j, r in row:
                    w.writerow([i, j, str(r)])


def _from_moves(states: Sequence, moves: Callable) -> GeneratorMatrix:
    states = tuple(states)
    index = {s: i for i, s in enumerate(states)}
    rows = []
    for s in states:
        row = []
        for target, rate in moves(s):
            if target not in index:
                raise InvalidConfig(f"state space not closed: {s} -> {target}")
            row.append((index[target], rate))
        rows.append(tuple(sorted(row)))
    return GeneratorMatrix(states, tuple(rows))


def _guard(count: int, guard: int) -> None:
    if count > guard:
        raise ResourceLimit(f"state space of size {count} exceeds guard {guard}")


def labeled_states(graph: SiteGraph, n: int, cap: int | None = None) -> list:
    """All ``n``-tuples of sites, restricted to at most ``cap`` per site."""
    from itertools import product

    out = []
    for s in product(range(graph.size), repeat=n):
        if cap is None or all(s.count(x) <= cap for x in set(s)):
            out.append(s)
    return out


def labeled_rate_rows(graph: SiteGraph, states: Sequence, a, b) -> GeneratorMatrix:
    """Raw labeled rates ``p(x_i, y)(a + b #{j: x_j = y})`` without sign checks.

    Used to exhibit the walk/clumping decomposition, whose clumping part
    has negative entries when ``b < 0``.
    """
    a, b = rational(a), rational(b)
    index = {s: i for i, s in enumerate(states)}

    def moves(s):
        acc: dict = {}
        for i, x in enumerate(s):
            for y, p in graph.neighbors[x]:
                r = p * (a + b * s.count(y))
                t = s[:i] + (y,) + s[i + 1:]
                if r != 0 and t in index:
                    acc[t] = acc.get(t, 0) + r
        return acc.items()

    return _from_moves(states, moves)


def build_labeled_generator(graph: SiteGraph, n: int, a, b, guard: int = STATE_GUARD) -> GeneratorMatrix:
    """Generator of ``n`` labeled walkers at rate ``a`` with clumping ``b``.

    For ``b < 0`` the chain lives on tuples with at most ``a/(-b)``
    particles per site, which the dynamics never leaves.
    """
    a, b = rational(a), rational(b)
    if a < 0:
        raise InvalidSpec(f"walk rate must be nonnegative, got {a}")
    cap = None
    if b < 0:
        ratio = a / -b
        if ratio != int(ratio) or ratio < 1:
            raise InvalidSpec(f"b < 0 needs a/(-b) a positive integer, got {ratio}")
        cap = int(ratio)
    _guard(graph.size**n, guard)
    G = labeled_rate_rows(graph, labeled_states(graph, n, cap), a, b)
    if any(r < 0 for row in G.rows for _, r in row):
        raise InvalidSpec("negative rate in labeled generator")
    return G


def build_sector_generator(spec, graph: SiteGraph, K: int, guard: int = STATE_GUARD) -> GeneratorMatrix:
    """Generator of a conservative process on ``{eta : |eta| = K}``."""
    if K < 0:
        raise InvalidParameter("negative particle number")
    _guard(comb(K + graph.size - 1, graph.size - 1), guard)
    cap = getattr(spec, "cap", None)
    states = sector(graph.size, K, cap)
    return _from_moves(states, lambda s: enumerate_moves(spec, s, graph))


def build_absorbing_dual_generator(N: int, m, n: int, guard: int = STATE_GUARD) -> GeneratorMatrix:
    """Dual chain on ``0..N+1`` with ``n`` particles absorbed at the ends."""
    if n < 1:
        raise InvalidParameter("need at least one dual particle")
    _guard(comb(n + N + 1, N + 1), guard)
    spec = AbsorbingDualSIP(m, N)
    return _from_moves(sector(N + 2, n), lambda s: enumerate_moves(spec, s))


def explore(spec, starts: Iterable, graph: SiteGraph | None = None, labeled: bool = False,
            guard: int = STATE_GUARD) -> GeneratorMatrix:
    """Generator on the set of states reachable from ``starts``."""
    seen = {}
    queue = deque()
    for s in starts:
        s = tuple(s)
        if s not in seen:
            seen[s] = None
            queue.append(s)
    while queue:
        s = queue.popleft()
        for t, _ in enumerate_moves(spec, s, graph, labeled):
            if t not in seen:
                seen[t] = None
                _guard(len(seen), guard)
                queue.append(t)
    return _from_moves(list(seen), lambda s: enumerate_moves(spec, s, graph, labeled))


# --------------------------------------------------------------------------
# Semigroup
# --------------------------------------------------------------------------


@dataclass
class SemigroupResult:
    values: np.ndarray
    error_bound: float
    terms: int

    def __getitem__(self, i):
        return self.values[i]


def semigroup_apply(G: GeneratorMatrix, f, t: float, eps: float = 1e-12) -> SemigroupResult:
    """``e^{tG} f`` by uniformization, accurate to ``eps`` in sup norm.

    ``f`` may be a vector over ``G.states`` or a 2-D array of column vectors.
    """
    if eps <= 0:
        raise InvalidParameter("eps must be positive")
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    f = np.asarray(f, dtype=float)
    lam = float(max(G.exit_rates, default=0))
    if t == 0 or lam == 0:
        return SemigroupResult(f.copy(), 0.0, 0)
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    if scale == 0:
        return SemigroupResult(f.copy(), 0.0, 0)
    mu = lam * t
    K = int(poisson.isf(eps / scale, mu))
    while poisson.sf(K, mu) * scale >= eps:
        K += 1
    weights = poisson.pmf(np.arange(K + 1), mu)
    P = sp.identity(len(G), format="csr") + G.csr / lam
    v = f.copy()
    acc = weights[0] * v
    for k in range(1, K + 1):
        v = P @ v
        acc += weights[k] * v
    return SemigroupResult(acc, float(poisson.sf(K, mu) * scale), K)


def transition_probability(G: GeneratorMatrix, start, target, t: float, eps: float = 1e-12) -> float:
    f = np.zeros(len(G))
    f[G.index[tuple(target)]] = 1.0
    return float(semigroup_apply(G, f, t, eps).values[G.index[tuple(start)]])


# --------------------------------------------------------------------------
# Absorption
# --------------------------------------------------------------------------


def _check_absorbable(G: GeneratorMatrix) -> None:
    reverse = [[] for _ in G.states]
    for i, row in enumerate(G.rows):
        for j, _ in row:
            reverse[j].append(i)
    reached = set(G.absorbing)
    queue = deque(reached)
    while queue:
        j = queue.popleft()
        for i in reverse[j]:
            if i not in reached:
                reached.add(i)
                queue.append(i)
    if len(reached) < len(G):
        stuck = next(G.states[i] for i in range(len(G)) if i not in reached)
        raise InvalidConfig(f"state {stuck} lies in a closed class without absorbing states")


def solve_exact(A: list, B: list) -> list:
    """Solve ``A X = B`` over the rationals; rows are ``{col: value}`` dicts.

    No pivoting: intended for nonsingular M-matrices, where the Gaussian
    pivots stay positive.
    """
    n = len(A)
    A = [dict(r) for r in A]
    B = [dict(r) for r in B]
    below: dict = {}
    for i, row in enumerate(A):
        for c in row:
            below.setdefault(c, set()).add(i)
    for k in range(n):
        piv = A[k].get(k)
        if not piv:
            raise InvalidConfig("singular absorption system")
        targets = sorted(i for i in below.get(k, ()) if i > k)
        for i in targets:
            factor = A[i][k] / piv
            for c, v in A[k].items():
                nv = A[i].get(c, 0) - factor * v
                if nv == 0:
                    if c in A[i]:
                        del A[i][c]
                        below[c].discard(i)
                else:
                    if c not in A[i]:
                        below.setdefault(c, set()).add(i)
                    A[i][c] = nv
            for c, v in B[k].items():
                nv = B[i].get(c, 0) - factor * v
                if nv == 0:
                    B[i].pop(c, None)
                else:
                    B[i][c] = nv
    X: list = [None] * n
    for k in range(n - 1, -1, -1):
        acc = dict(B[k])
        for c, v in A[k].items():
            if c != k:
                for col, xv in X[c].items():
                    acc[col] = acc.get(col, 0) - v * xv
        piv = A[k][k]
        X[k] = {c: v / piv for c, v in acc.items() if v != 0}
    return X


def absorption_probabilities(G: GeneratorMatrix) -> dict:
    """``{start: {absorbing state: probability}}`` for every state of ``G``."""
    _check_absorbable(G)
    absorbing = G.absorbing
    a_pos = {i: k for k, i in enumerate(absorbing)}
    transient = [i for i in range(len(G)) if i not in a_pos]
    t_pos = {i: k for k, i in enumerate(transient)}
    A, B = [], []
    for i in transient:
        row = {t_pos[i]: G.exit_rates[i]}
        rhs = {}
        for j, r in G.rows[i]:
            if j in t_pos:
                row[t_pos[j]] = row.get(t_pos[j], 0) - r
            else:
                rhs[a_pos[j]] = rhs.get(a_pos[j], 0) + r
        A.append(row)
        B.append(rhs)
    if G.is_exact:
        X = solve_exact(A, B)
    else:
        X = _solve_float(A, B, len(absorbing))
    out = {}
    for i in absorbing:
        out[G.states[i]] = {G.states[i]: Fraction(1)}
    for i, sol in zip(transient, X):
        out[G.states[i]] = {G.states[absorbing[c]]: v for c, v in sol.items()}
    return out


def _solve_float(A, B, ncols) -> list:
    n = len(A)
    Am = sp.lil_matrix((n, n))
    Bm = np.zeros((n, ncols))
    for i, (ra, rb) in enumerate(zip(A, B)):
        for c, v in ra.items():
            Am[i, c] = float(v)
        for c, v in rb.items():
            Bm[i, c] = float(v)
    Am = Am.tocsc()
    X = spla.spsolve(Am, Bm).reshape(n, ncols)
    # one step of residual refinement
    R = Bm - Am @ X
    X = X + spla.spsolve(Am, R).reshape(n, ncols)
    if np.max(np.abs(Bm - Am @ X), initial=0.0) > 1e-12:
        raise InvalidConfig("absorption solve did not reach 1e-12 residual")
    return [{c: X[i, c] for c in range(ncols) if X[i, c] != 0} for i in range(n)]


def absorption_distribution(G: GeneratorMatrix, start) -> dict:
    """Distribution of the absorbing state reached from ``start``."""
    start = tuple(start)
    if start not in G.index:
        raise InvalidConfig(f"unknown start state {start}")
    return absorption_probabilities(G)[start]


def detailed_balance_check(G: GeneratorMatrix, mu) -> Fraction:
    """``max |mu(s) G(s,s') - mu(s') G(s',s)|`` over all transitions.

    ``mu`` is a mapping from states to weights or a callable.
    """
    weight = mu if callable(mu) else (lambda s: mu[s])
    w = [weight(s) for s in G.states]
    if any(v <= 0 for v in w):
        raise InvalidParameter("detailed balance weights must be positive")
    dense = [dict(row) for row in G.rows]
    worst = Fraction(0)
    for i, row in enumerate(G.rows):
        for j, r in row:
            back = dense[j].get(i, 0)
            v = abs(w[i] * r - w[j] * back)
            if v > worst:
                worst = v
    return worst
