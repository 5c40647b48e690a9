"""Site graphs, process specifications and the jump/birth/death rates.

Configurations are plain tuples of integers:

* an occupation configuration ``eta`` has one entry per site index;
* a labeled configuration is a tuple ``(x_1, ..., x_n)`` of site indices.

Sites are always addressed by their index in ``SiteGraph.sites``.  Rates are
exact :class:`fractions.Fraction` values whenever the kernel and the process
parameters are rational; a float anywhere in the input makes the result a
float.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import InvalidConfig, InvalidMove, InvalidParameter, InvalidSpec

Scalar = Union[Fraction, float]

FLOAT_TOL = 1e-12


def rational(value: Any) -> Scalar:
    """Coerce ``value`` to an exact Fraction, keeping genuine floats as floats.

    Strings such as ``"7/3"`` or ``"0.25"`` are parsed exactly.
    """
    if isinstance(value, bool):
        raise InvalidParameter(f"boolean is not a number: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidParameter(f"cannot parse rational {value!r}") from exc
    raise InvalidParameter(f"unsupported numeric value {value!r}")


def _is_zero(v: Scalar) -> bool:
    return v == 0 if isinstance(v, Fraction) else abs(v) <= FLOAT_TOL


# --------------------------------------------------------------------------
# Graphs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SiteGraph:
    """Finite site set with a symmetric jump kernel ``p(x, y)``.

    Construction only checks the shape; call :func:`validate_kernel` for
    the structural invariants.
    """

    sites: tuple
    kernel: tuple

    def __post_init__(self):
        sites = tuple(self.sites)
        rows = tuple(tuple(rational(v) for v in row) for row in self.kernel)
        if len(rows) != len(sites) or any(len(r) != len(sites) for r in rows):
            raise InvalidConfig(
                f"kernel must be {len(sites)}x{len(sites)} for {len(sites)} sites"
            )
        if len(set(sites)) != len(sites):
            raise InvalidConfig("duplicate site identifiers")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "kernel", rows)
        # Fraction hashing is slow and graphs key the move cache.
        object.__setattr__(self, "_hash", hash((sites, rows)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def size(self) -> int:
        return len(self.sites)

    def p(self, x: int, y: int) -> Scalar:
        return self.kernel[x][y]

    def index(self, site) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise InvalidConfig(f"unknown site {site!r}") from None

    @cached_property
    def neighbors(self) -> tuple:
        """``neighbors[x]`` is a tuple of ``(y, p(x, y))`` with ``p > 0`` and ``y != x``."""
        return tuple(
            tuple((y, p) for y, p in enumerate(row) if y != x and p > 0)
            for x, row in enumerate(self.kernel)
        )

    @cached_property
    def edges(self) -> tuple:
        """Unordered pairs ``(x, y, p)`` with ``x < y`` and ``p(x, y) > 0``."""
        return tuple(
            (x, y, p) for x in range(self.size) for y, p in self.neighbors[x] if x < y
        )

    @property
    def is_stochastic(self) -> bool:
        return all(_is_zero(sum(row) - 1) for row in self.kernel)

    # constructors -------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges: Mapping[tuple, Any], sites=None) -> "SiteGraph":
        k = [[Fraction(0)] * n for _ in range(n)]
        for (x, y), w in edges.items():
            w = rational(w)
            k[x][y] = w
            k[y][x] = w
        return cls(tuple(range(n)) if sites is None else tuple(sites), k)

    @classmethod
    def complete(cls, n: int) -> "SiteGraph":
        """Complete graph with uniform kernel ``1/(n-1)``; a triangle for ``n=3``."""
        if n < 2:
            raise InvalidConfig("complete graph needs at least 2 sites")
        w = Fraction(1, n - 1)
        return cls.from_edges(n, {(x, y): w for x in range(n) for y in range(x + 1, n)})

    @classmethod
    def path(cls, n: int, weight: Any = None) -> "SiteGraph":
        """Nearest-neighbour path.

        The default weight is 1 for two sites and 1/2 otherwise, so the end
        rows are substochastic: the missing mass is a holding probability.
        """
        if n < 2:
            raise InvalidConfig("path needs at least 2 sites")
        if weight is None:
            weight = 1 if n == 2 else Fraction(1, 2)
        w = rational(weight)
        return cls.from_edges(n, {(x, x + 1): w for x in range(n - 1)})

    @classmethod
    def cycle(cls, n: int) -> "SiteGraph":
        """Discrete torus with ``p = 1/2`` to each neighbour."""
        if n < 3:
            raise InvalidConfig("cycle needs at least 3 sites")
        return cls.from_edges(n, {(x, (x + 1) % n): Fraction(1, 2) for x in range(n)})


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    detail: str = ""

    def __str__(self) -> str:
        loc = self.where[0] if len(self.where) == 1 else self.where
        return f"{self.kind} violation at {loc}" + (f": {self.detail}" if self.detail else "")


def validate_kernel(graph: SiteGraph) -> list[Violation]:
    """Return every kernel invariant that fails; empty means the kernel is valid.

    Checked: nonnegativity, symmetry, zero diagonal, row sums at most one
    (a deficit is holding probability) and connectivity.
    """
    out: list[Violation] = []
    n = graph.size
    k = graph.kernel
    for x in range(n):
        for y in range(n):
            if k[x][y] < 0:
                out.append(Violation("negativity", (x, y), str(k[x][y])))
    for x in range(n):
        for y in range(x + 1, n):
            if not _is_zero(k[x][y] - k[y][x]):
                out.append(Violation("symmetry", (x, y), f"{k[x][y]} != {k[y][x]}"))
    for x in range(n):
        if not _is_zero(k[x][x]):
            out.append(Violation("diagonal", (x,), str(k[x][x])))
    for x in range(n):
        s = sum(k[x])
        if s > 1 and not _is_zero(s - 1):
            out.append(Violation("row-sum", (x,), f"row sums to {s}"))
    seen = {0} if n else set()
    queue = deque(seen)
    while queue:
        x = queue.popleft()
        for y in range(n):
            if y not in seen and (k[x][y] > 0 or k[y][x] > 0):
                seen.add(y)
                queue.append(y)
    if len(seen) < n:
        out.append(Violation("connectivity", tuple(sorted(set(range(n)) - seen))))
    return out


# --------------------------------------------------------------------------
# Process specifications
# --------------------------------------------------------------------------


def _positive(name: str, v: Scalar) -> Scalar:
    if not v > 0:
        raise InvalidSpec(f"{name} must be positive, got {v}")
    return v


@dataclass(frozen=True)
class SIP:
    """Symmetric inclusion process with parameter ``m``."""

    m: Any

    def __post_init__(self):
        object.__setattr__(self, "m", _positive("m", rational(self.m)))

    @property
    def a(self) -> Scalar:
        return 2 * self.m

    @property
    def b(self) -> Scalar:
        return Fraction(4)

    cap = None


@dataclass(frozen=True)
class SEP:
    """Exclusion process with at most ``n`` particles per site."""

    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidSpec(f"SEP cap must be an integer >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def a(self) -> Scalar:
        return Fraction(self.n)

    @property
    def b(self) -> Scalar:
        return Fraction(-1)

    @property
    def cap(self) -> int:
        return self.n


@dataclass(frozen=True)
class GeneralizedAB:
    """Walkers at rate ``a`` with clumping strength ``b`` (exclusion for ``b < 0``)."""

    a: Any
    b: Any

    def __post_init__(self):
        a = _positive("a", rational(self.a))
        b = rational(self.b)
        if b < 0:
            ratio = a / -b
            if not (ratio > 0 and ratio == int(ratio)):
                raise InvalidSpec(
                    f"b < 0 requires a/(-b) to be a positive integer, got {ratio}"
                )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def cap(self):
        return int(self.a / -self.b) if self.b < 0 else None


@dataclass(frozen=True)
class IRW:
    """Independent random walkers jumping at ``rate``."""

    rate: Any

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", rational(self.rate)))

    @property
    def a(self) -> Scalar:
        return self.rate

    @property
    def b(self) -> Scalar:
        return Fraction(0)

    cap = None


def _check_lambda(lam: Scalar) -> Scalar:
    if not (0 <= lam < 1):
        raise InvalidSpec(f"reservoir parameter must lie in [0, 1), got {lam}")
    return lam


@dataclass(frozen=True)
class BoundaryDrivenSIP:
    """SIP on the chain ``1..N`` (indices ``0..N-1``) with reservoirs at both ends."""

    m: Any
    lam_left: Any
    lam_right: Any
    N: int

    def __post_init__(self):
        object.__setattr__(self, "m", _positive("m", rational(self.m)))
        object.__setattr__(self, "lam_left", _check_lambda(rational(self.lam_left)))
        object.__setattr__(self, "lam_right", _check_lambda(rational(self.lam_right)))
        if int(self.N) != self.N or self.N < 1:
            raise InvalidSpec(f"chain length must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def rho_left(self) -> Scalar:
        return self.lam_left / (1 - self.lam_left)

    @property
    def rho_right(self) -> Scalar:
        return self.lam_right / (1 - self.lam_right)

    def birth_rate(self, k: int, side: str) -> Scalar:
        return boundary_birth_rate(k, self.m, self._lam(side))

    def death_rate(self, k: int, side: str) -> Scalar:
        return boundary_death_rate(k, self._lam(side))

    def _lam(self, side: str) -> Scalar:
        if side == "L":
            return self.lam_left
        if side == "R":
            return self.lam_right
        raise InvalidSpec(f"side must be 'L' or 'R', got {side!r}")


@dataclass(frozen=True)
class AbsorbingDualSIP:
    """Dual of :class:`BoundaryDrivenSIP`: bulk SIP on ``1..N`` absorbed into ``0`` and ``N+1``.

    States have ``N + 2`` entries; entries ``0`` and ``N + 1`` are the
    absorbing reservoirs.
    """

    m: Any
    N: int

    def __post_init__(self):
        object.__setattr__(self, "m", _positive("m", rational(self.m)))
        if int(self.N) != self.N or self.N < 1:
            raise InvalidSpec(f"chain length must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))


@dataclass(frozen=True)
class BMP:
    """Brownian momentum process (dual to SIP(1))."""

    @property
    def dual(self) -> SIP:
        return SIP(1)


@dataclass(frozen=True)
class BEP:
    """Brownian energy process with parameter ``m`` (dual to SIP(m))."""

    m: Any

    def __post_init__(self):
        object.__setattr__(self, "m", _positive("m", rational(self.m)))

    @property
    def dual(self) -> SIP:
        return SIP(self.m)


ProcessSpec = Union[SIP, SEP, GeneralizedAB, IRW, BoundaryDrivenSIP, AbsorbingDualSIP]
DiffusionFamily = Union[BMP, BEP]
CONSERVATIVE = (SIP, SEP, GeneralizedAB, IRW)


# --------------------------------------------------------------------------
# Rates
# --------------------------------------------------------------------------


def sip_jump_rate(eta: Sequence[int], x: int, y: int, m: Any, graph: SiteGraph) -> Scalar:
    if x == y:
        raise InvalidMove(f"jump from site {x} to itself")
    return graph.p(x, y) * 2 * eta[x] * (rational(m) + 2 * eta[y])


def sep_jump_rate(eta: Sequence[int], x: int, y: int, n: int, graph: SiteGraph) -> Scalar:
    if x == y:
        raise InvalidMove(f"jump from site {x} to itself")
    if eta[x] > n or eta[y] > n:
        raise InvalidConfig(f"occupancy above cap {n}")
    return eta[x] * (n - eta[y]) * graph.p(x, y)


def labeled_jump_rate(
    positions: Sequence[int], i: int, y: int, a: Any, b: Any, graph: SiteGraph
) -> Scalar:
    """Rate ``p(x_i, y) (a + b #{j : x_j = y})`` for particle ``i`` to jump to ``y``."""
    x = positions[i]
    if x == y:
        raise InvalidMove(f"particle {i} is already at site {y}")
    count = sum(1 for z in positions if z == y)
    rate = graph.p(x, y) * (rational(a) + rational(b) * count)
    if rate < 0:
        raise InvalidSpec(f"negative rate {rate} for a={a}, b={b} with {count} particles at {y}")
    return rate


def boundary_birth_rate(k: int, m: Any, lam: Any) -> Scalar:
    """Reservoir creation rate ``(m/2 + k) lam / (1 - lam)`` at occupancy ``k``."""
    lam = _check_lambda(rational(lam))
    if k < 0:
        raise InvalidConfig(f"negative occupancy {k}")
    return (rational(m) / 2 + k) * lam / (1 - lam)


def boundary_death_rate(k: int, lam: Any) -> Scalar:
    """Reservoir annihilation rate ``k / (1 - lam)``."""
    lam = _check_lambda(rational(lam))
    if k < 0:
        raise InvalidConfig(f"negative occupancy {k}")
    return Fraction(k) / (1 - lam) if isinstance(lam, Fraction) else k / (1 - lam)


def apply_move(eta: Sequence[int], x: int, y: int) -> tuple:
    """Move one particle from ``x`` to ``y``."""
    if eta[x] < 1:
        raise InvalidMove(f"no particle at site {x}")
    out = list(eta)
    out[x] -= 1
    out[y] += 1
    return tuple(out)


def _shift(state: tuple, x: int, delta: int) -> tuple:
    out = list(state)
    out[x] += delta
    return tuple(out)


def check_occupation(spec: ProcessSpec, eta: Sequence[int], graph: SiteGraph | None = None) -> None:
    if any(int(v) != v or v < 0 for v in eta):
        raise InvalidConfig(f"occupations must be nonnegative integers: {tuple(eta)}")
    if isinstance(spec, BoundaryDrivenSIP):
        expected = spec.N
    elif isinstance(spec, AbsorbingDualSIP):
        expected = spec.N + 2
    else:
        expected = graph.size
    if len(eta) != expected:
        raise InvalidConfig(f"configuration has {len(eta)} sites, expected {expected}")
    cap = getattr(spec, "cap", None)
    if cap is not None and any(v > cap for v in eta):
        raise InvalidConfig(f"occupancy above cap {cap}: {tuple(eta)}")


def check_labeled(spec: ProcessSpec, positions: Sequence[int], graph: SiteGraph) -> None:
    if any(not (0 <= x < graph.size) for x in positions):
        raise InvalidConfig(f"position outside the graph: {tuple(positions)}")
    cap = getattr(spec, "cap", None)
    if cap is not None:
        for x in set(positions):
            if positions.count(x) > cap:
                raise InvalidConfig(f"more than {cap} labeled particles at site {x}")


def enumerate_moves(
    spec: ProcessSpec, state: Sequence[int], graph: SiteGraph | None = None, labeled: bool = False
) -> tuple:
    """All positive-rate transitions out of ``state`` as ``((successor, rate), ...)``.

    For conservative processes ``graph`` is required; the boundary chains
    carry their own nearest-neighbour geometry with edge coefficient 1.
    """
    return _moves(spec, tuple(state), graph, labeled)


@lru_cache(maxsize=200_000)
def _moves(spec, state, graph, labeled):
    acc: dict = {}

    def add(target, rate):
        if rate > 0:
            acc[target] = acc.get(target, 0) + rate

    if labeled:
        if not isinstance(spec, CONSERVATIVE):
            raise InvalidSpec("labeled dynamics only exist for conservative processes")
        check_labeled(spec, state, graph)
        a, b = spec.a, spec.b
        for i, x in enumerate(state):
            for y, p in graph.neighbors[x]:
                count = state.count(y)
                rate = p * (a + b * count)
                if rate < 0:
                    raise InvalidSpec(f"negative labeled rate at {state}")
                add(state[:i] + (y,) + state[i + 1:], rate)
        return tuple(acc.items())

    check_occupation(spec, state, graph)
    if isinstance(spec, CONSERVATIVE):
        a, b = spec.a, spec.b
        for x, ex in enumerate(state):
            if ex == 0:
                continue
            for y, p in graph.neighbors[x]:
                add(apply_move(state, x, y), ex * p * (a + b * state[y]))
    elif isinstance(spec, BoundaryDrivenSIP):
        _bulk_moves(state, 0, spec.N, spec.m, add)
        ends = ((0, "L"), (spec.N - 1, "R"))
        for site, side in ends:
            k = state[site]
            add(_shift(state, site, +1), spec.birth_rate(k, side))
            if k > 0:
                add(_shift(state, site, -1), spec.death_rate(k, side))
    elif isinstance(spec, AbsorbingDualSIP):
        _bulk_moves(state, 1, spec.N, spec.m, add)
        if state[1] > 0:
            add(apply_move(state, 1, 0), Fraction(state[1]))
        if state[spec.N] > 0:
            add(apply_move(state, spec.N, spec.N + 1), Fraction(state[spec.N]))
    else:
        raise InvalidSpec(f"unknown process {spec!r}")
    return tuple(acc.items())


def _bulk_moves(state, first, length, m, add):
    for x in range(first, first + length - 1):
        y = x + 1
        if state[x]:
            add(apply_move(state, x, y), 2 * state[x] * (m + 2 * state[y]))
        if state[y]:
            add(apply_move(state, y, x), 2 * state[y] * (m + 2 * state[x]))


def apply_generator(spec: ProcessSpec, f, state, graph=None, labeled=False):
    """``(L f)(state)`` for a function ``f`` of configurations."""
    f0 = f(state)
    return sum((rate * (f(s) - f0) for s, rate in enumerate_moves(spec, state, graph, labeled)), Fraction(0))


# --------------------------------------------------------------------------
# JSON documents
# --------------------------------------------------------------------------


def graph_from_json(doc: Mapping) -> SiteGraph:
    """Read ``{"sites": [...], "kernel": [[...]]}`` or ``{"graph": {"kind": ..., "size": n}}``."""
    if "kernel" in doc:
        sites = doc.get("sites", list(range(len(doc["kernel"]))))
        return SiteGraph(tuple(sites), doc["kernel"])
    g = doc.get("graph")
    if not isinstance(g, Mapping):
        raise InvalidConfig("missing 'kernel' or 'graph'")
    kind, size = g.get("kind"), g.get("size")
    if kind == "triangle":
        return SiteGraph.complete(3)
    builders = {"path": SiteGraph.path, "cycle": SiteGraph.cycle, "complete": SiteGraph.complete}
    if kind not in builders:
        raise InvalidConfig(f"unknown graph kind {kind!r}")
    if not isinstance(size, int):
        raise InvalidConfig("graph.size must be an integer")
    return builders[kind](size)


def process_from_json(doc: Mapping) -> ProcessSpec:
    """Parse ``{"variant": "SIP", "m": "1/2"}`` and friends; rationals are strings."""
    variant = doc.get("variant")
    try:
        if variant == "SIP":
            return SIP(doc["m"])
        if variant == "SEP":
            return SEP(int(doc["n"]))
        if variant == "GeneralizedAB":
            return GeneralizedAB(doc["a"], doc["b"])
        if variant == "IRW":
            return IRW(doc["rate"])
        if variant == "BoundaryDrivenSIP":
            return BoundaryDrivenSIP(doc["m"], doc["lam_left"], doc["lam_right"], int(doc["N"]))
        if variant == "BMP":
            return BMP()
        if variant == "BEP":
            return BEP(doc["m"])
    except KeyError as exc:
        raise InvalidConfig(f"process.{exc.args[0]} is required for {variant}") from None
    raise InvalidConfig(f"unknown process variant {variant!r}")


def process_to_json(spec: ProcessSpec) -> dict:
    d = {"variant": type(spec).__name__}
    for k, v in spec.__dict__.items():
        d[k] = str(v) if isinstance(v, Fraction) else v
    return d


def occupations(n_sites: int, max_per_site: int, total: int | None = None) -> Iterable[tuple]:
    """All occupation tuples with entries in ``0..max_per_site`` (optionally of fixed total)."""
    from itertools import product

    for eta in product(range(max_per_site + 1), repeat=n_sites):
        if total is None or sum(eta) == total:
            yield eta


def configurations_up_to(n_sites: int, max_total: int, cap: int | None = None) -> list:
    """All configurations with ``|xi| <= max_total`` (and entries ``<= cap``)."""
    out = []
    for total in range(max_total + 1):
        out.extend(sector(n_sites, total, cap))
    return out


def sector(n_sites: int, total: int, cap: int | None = None) -> list:
    """Occupation tuples with exactly ``total`` particles, lexicographically descending."""
    out = []

    def rec(prefix, left, remaining_sites):
        if remaining_sites == 1:
            if cap is None or left <= cap:
                out.append(prefix + (left,))
            return
        hi = left if cap is None else min(left, cap)
        for v in range(hi, -1, -1):
            rec(prefix + (v,), left - v, remaining_sites - 1)

    if n_sites == 0:
        return [()] if total == 0 else []
    rec((), total, n_sites)
    return out
