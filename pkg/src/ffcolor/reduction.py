"""Distributed-coloring pipeline: almost colorings, elimination, tower, nets.

Values use 0 as the "unresolved" sentinel (rendered as infinity elsewhere);
real colors are 1-based.

Two engines compute the same processes:

* window engine: array passes over a finite graph (usually a lattice window
  in CSR form), carrying a conservative taint mask that marks vertices whose
  value may differ from the infinite-lattice value because the window ends;
* demand engine: per-vertex recursion on the infinite lattice, reading labels
  through whatever field it is handed, so a tracked field yields an honest
  per-query access record.

The two agree pointwise wherever the window is untainted; tests enforce that.

The elimination cascade is never materialized as one synchronous pass per
color.  Replacement colors always land in [degree+1], strictly below any
color still waiting to be eliminated, so vertices can be processed one color
class at a time from the largest class down; within a class members are
non-adjacent (the input is proper on its finite values) and cannot interact.
A literal synchronous composition is kept as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covfree import ColorSequence, SetFamily, color_sequence, feasible_levels
from .lattice import FiniteGraph, LatticeSpec, Window, WindowGraph, ball_size

INF = 0  # sentinel for "no color" / infinity


# ---------------------------------------------------------------------------
# shared helpers


def padded_neighbors(g: FiniteGraph) -> tuple[np.ndarray, np.ndarray]:
    """(n, maxdeg) neighbor index matrix padded with -1, plus validity mask."""
    n, md = g.n, g.max_degree
    nbr = np.full((n, md), -1, dtype=np.int64)
    deg = np.diff(g.indptr)
    for c in range(md):
        has = deg > c
        nbr[has, c] = g.indices[g.indptr[:-1][has] + c]
    return nbr, nbr >= 0


def _gather(values: np.ndarray, nbr: np.ndarray, fill) -> np.ndarray:
    out = values[np.clip(nbr, 0, None)]
    out[nbr < 0] = fill
    return out


def dilate_mask(mask: np.ndarray, nbr: np.ndarray) -> np.ndarray:
    """mask or any-neighbor-in-mask."""
    return mask | _gather(mask, nbr, False).any(axis=1)


def _as_parts(g):
    """(graph, label axes, full-degree mask, default delta) for either input.

    A bare FiniteGraph is taken as the whole object of study: labels are keyed
    by vertex index and nothing is tainted by truncation.  A WindowGraph is a
    view of the lattice: labels are keyed by lattice coordinates and vertices
    missing neighbors get full=False.
    """
    if isinstance(g, WindowGraph):
        return g.graph, g.axes(), g.interior.copy(), ball_size(g.window.d, g.m, g.norm) - 1
    axes = [np.arange(g.n, dtype=np.int64)]
    return g, axes, np.ones(g.n, dtype=bool), max(g.max_degree, 1)


# ---------------------------------------------------------------------------
# almost colorings


@dataclass
class AlmostColoring:
    values: np.ndarray  # int64, 0 = infinity
    level: int
    delta: int

    @property
    def radius_bound(self) -> int:
        return self.level


class FamilyCache:
    """Set families per reduction level, built once and shared across levels."""

    def __init__(self, field, delta: int, seq: ColorSequence):
        self.field = field
        self.delta = delta
        self.seq = seq
        self._fams: dict[int, SetFamily] = {}

    def family(self, i: int) -> SetFamily:
        if i not in self._fams:
            self._fams[i] = SetFamily.build(
                self.field, self.delta, i,
                ground=self.seq.n_k(i), nsets=self.seq.n_k(i + 1))
        return self._fams[i]


def almost_coloring(g, k: int, seq: ColorSequence | None = None,
                    cache: FamilyCache | None = None, field=None,
                    stream: str = "tower:u", delta: int | None = None,
                    trace: list | None = None) -> AlmostColoring:
    """Level-k almost coloring: labels in [n_k], collisions to infinity, then
    k-1 set-family reductions down to [n_1].  Adjacent finite values never
    agree, at any intermediate level (each value excludes the whole set its
    neighbor picked from).  If `trace` is a list, the intermediate value
    arrays are appended, levels k down to 1.
    """
    graph, axes, _, ddef = _as_parts(g)
    if delta is None:
        delta = cache.delta if cache is not None else ddef
    if seq is None:
        seq = cache.seq if cache is not None else color_sequence(delta, k)
    if field is None and cache is not None:
        field = cache.field
    if k > seq.kmax:
        raise ValueError(f"level {k} beyond materialized sequence {seq.n}")
    if cache is None:
        cache = FamilyCache(field, delta, seq)
    nbr, _ = padded_neighbors(graph)
    reader = field.discrete_box if hasattr(field, "discrete_box") else field.discrete_grid
    z = np.asarray(reader(stream, axes, seq.n_k(k)), dtype=np.int64).ravel()
    collide = (_gather(z, nbr, INF) == z[:, None]).any(axis=1)
    z = np.where(collide, INF, z)
    if trace is not None:
        trace.append(z.copy())
    for i in range(k - 1, 0, -1):
        fam = cache.family(i)
        ext = np.vstack([np.zeros((1, fam.nwords), dtype=np.uint64), fam.words])
        own = ext[z]
        union = np.zeros_like(own)
        for c in range(nbr.shape[1]):
            zn = np.where(nbr[:, c] >= 0, z[np.clip(nbr[:, c], 0, None)], INF)
            union |= ext[zn]
        z = fam.reduce_min(own, union)
        if trace is not None:
            trace.append(z.copy())
    return AlmostColoring(z, k, delta)


# ---------------------------------------------------------------------------
# color elimination


def eliminate_color(x: np.ndarray, a: int, g: FiniteGraph) -> np.ndarray:
    """One synchronous pass replacing color a with the least color absent
    among neighbors.  Unresolved (0) vertices never match a and never block.
    """
    if a < 1:
        raise ValueError("colors are 1-based")
    nbr, _ = padded_neighbors(g)
    out = x.copy()
    members = x == a
    if not members.any():
        return out
    nv = _gather(x, nbr, INF)[members]
    assigned = np.zeros(int(members.sum()), dtype=np.int64)
    c = 1
    while (assigned == 0).any():
        free = (assigned == 0) & ~(nv == c).any(axis=1)
        assigned[free] = c
        c += 1
    out[members] = assigned
    return out


def eliminate_colors_synchronous(x: np.ndarray, colors, g: FiniteGraph) -> np.ndarray:
    """Literal composition, colors applied first to last.  Test oracle."""
    for a in colors:
        x = eliminate_color(x, a, g)
    return x


def elimination_sweep(w: np.ndarray, g: FiniteGraph, floor: int,
                      taint: np.ndarray | None = None) -> np.ndarray:
    """Eliminate every color above `floor`, largest first, vertex by vertex.

    Equal to composing eliminate_color over colors max(w)..floor+1 downward:
    replacements land in [floor] and are never re-targeted, and same-color
    vertices are never adjacent.  If `taint` is given it is updated in place:
    a recolored vertex becomes tainted when any neighbor it consulted was.
    """
    x = w.astype(np.int64, copy=True)
    todo = np.nonzero(x > floor)[0]
    order = todo[np.argsort(x[todo], kind="stable")][::-1]
    indptr, indices = g.indptr, g.indices
    for v in order:
        nbrs = indices[indptr[v]:indptr[v + 1]]
        seen = set(x[nbrs].tolist())
        c = 1
        while c in seen:
            c += 1
        x[v] = c
        if taint is not None and not taint[v] and bool(taint[nbrs].any()):
            taint[v] = True
    return x


def greedy_fallback(x: np.ndarray, g: FiniteGraph, prio: np.ndarray,
                    taint: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Color unresolved vertices, highest dedicated priority first.

    Each takes the least color absent among already-colored neighbors;
    lower-priority unresolved neighbors are pending and do not block.
    Returns (colors, fallback mask).
    """
    x = x.copy()
    un = np.nonzero(x == INF)[0]
    order = un[np.argsort(prio[un], kind="stable")][::-1]
    indptr, indices = g.indptr, g.indices
    for v in order:
        nbrs = indices[indptr[v]:indptr[v + 1]]
        seen = set(x[nbrs].tolist())
        c = 1
        while c in seen:
            c += 1
        x[v] = c
        if taint is not None and not taint[v] and bool(taint[nbrs].any()):
            taint[v] = True
    mask = np.zeros(len(x), dtype=bool)
    mask[un] = True
    return x, mask


# ---------------------------------------------------------------------------
# tower coloring, window engine


@dataclass
class TowerWindow:
    colors: np.ndarray      # int64, >= 1 everywhere after fallback
    level: np.ndarray       # level that resolved each vertex; 0 = fallback
    tainted: np.ndarray     # True = value may differ from the infinite lattice
    delta: int
    kmax: int
    seq: ColorSequence
    fallback_count: int

    @property
    def radius_bounds(self) -> np.ndarray:
        """Per-vertex bound n_1 * level + 1; -1 where the fallback ran."""
        n1 = self.seq.n_k(1)
        return np.where(self.level > 0, n1 * self.level + 1, -1)


def tower_coloring(g, field, delta: int | None = None, kmax: int = 3,
                   stream_prefix: str = "tower") -> TowerWindow:
    """Stack almost colorings over levels 1..kmax, eliminating oversized
    colors after each level; a greedy fallback colors whatever is still
    unresolved.  Output is a proper (delta+1)-coloring of g.
    """
    graph, axes, full, ddef = _as_parts(g)
    if delta is None:
        delta = ddef
    kmax = min(kmax, feasible_levels(delta, kmax))
    seq = color_sequence(delta, kmax)
    kmax = min(kmax, seq.kmax)
    cache = FamilyCache(field, delta, seq)
    nbr, _ = padded_neighbors(graph)

    x = np.zeros(graph.n, dtype=np.int64)
    level = np.zeros(graph.n, dtype=np.int64)
    xtaint = np.zeros(graph.n, dtype=bool)
    for k in range(1, kmax + 1):
        y = almost_coloring(g, k, seq, cache, field, stream=f"{stream_prefix}:u").values
        ytaint = ~full
        for _ in range(k - 1):
            ytaint = dilate_mask(ytaint, nbr)
        w = np.where(x > 0, x, np.where(y > 0, y + delta + 1, INF))
        staint = xtaint | ((x == INF) & ytaint)
        x2 = elimination_sweep(w, graph, floor=delta + 1, taint=staint)
        xtaint = staint | ((w != x2) & ~full)
        x = x2
        level = np.where((level == 0) & (x > 0), k, level)
    prio = _read_uniform(field, f"{stream_prefix}:prio", axes).ravel()
    fb_needed = int((x == INF).sum())
    ftaint = xtaint.copy()
    x, fb = greedy_fallback(x, graph, prio, taint=ftaint)
    tainted = ftaint | (fb & ~full)
    return TowerWindow(x, level, tainted, delta, kmax, seq, fb_needed)


def _read_uniform(field, stream, axes):
    reader = field.uniform_box if hasattr(field, "uniform_box") else field.uniform_grid
    return np.asarray(reader(stream, axes))


# ---------------------------------------------------------------------------
# tower coloring, demand engine


class TowerQuery:
    """Demand evaluation of the tower at single lattice sites.

    Elimination recurses only into neighbors whose pre-color is strictly
    larger, which reproduces the largest-first cascade exactly; the walk is
    collected iteratively so long chains cannot blow the stack.
    """

    def __init__(self, field, spec: LatticeSpec, kmax: int = 3,
                 stream_prefix: str = "tower", delta: int | None = None):
        self.fld = field
        self.spec = spec
        self.delta = spec.degree if delta is None else delta
        self.kmax = min(kmax, feasible_levels(self.delta, kmax))
        self.seq = color_sequence(self.delta, self.kmax)
        self.kmax = min(self.kmax, self.seq.kmax)
        self.prefix = stream_prefix
        self._u: dict[tuple, float] = {}
        self._z: dict[tuple, int] = {}
        self._x: dict[tuple, int] = {}
        self._rows: dict[tuple, np.ndarray] = {}
        self._fb: dict[tuple, int] = {}

    # one uniform per site, shared by every level's base label
    def _uni(self, v) -> float:
        if v not in self._u:
            self._u[v] = float(self.fld.uniform(f"{self.prefix}:u", v))
        return self._u[v]

    def _label(self, k: int, v) -> int:
        nk = self.seq.n_k(k)
        return min(max(int(np.ceil(nk * self._uni(v))), 1), nk)

    def _base(self, k: int, v) -> int:
        mine = self._label(k, v)
        for u in self.spec.neighbors(v):
            if self._label(k, u) == mine:
                return INF
        return mine

    def _row(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        if key not in self._rows:
            ground = self.seq.n_k(i)
            nwords = (ground + 63) // 64
            stream = f"family:d{self.delta}/l{i}"
            reader = self.fld.u64_box if hasattr(self.fld, "u64_box") else self.fld.u64_grid
            tail = np.uint64((1 << (ground % 64)) - 1) if ground % 64 else None
            attempt = 0
            while True:
                cols = np.arange(attempt * nwords, (attempt + 1) * nwords,
                                 dtype=np.int64)[None, :]
                words = np.asarray(
                    reader(stream, [np.array([j - 1])[:, None], cols]),
                    dtype=np.uint64)
                if tail is not None:
                    words[:, -1] &= tail
                if words.any():  # nonempty-row rejection, as in the builder
                    break
                attempt += 1
            self._rows[key] = words[0]
        return self._rows[key]

    def _zval(self, k: int, i: int, v) -> int:
        key = (k, i, v)
        if key in self._z:
            return self._z[key]
        if i == k:
            out = self._base(k, v)
        else:
            mine = self._zval(k, i + 1, v)
            if mine == INF:
                out = INF
            else:
                ground = self.seq.n_k(i)
                rest = self._row(i, mine).copy()
                for u in self.spec.neighbors(v):
                    zu = self._zval(k, i + 1, u)
                    if zu != INF:
                        rest &= ~self._row(i, zu)
                bits = np.unpackbits(rest.view(np.uint8), bitorder="little")[:ground]
                out = int(bits.argmax()) + 1 if bits.any() else INF
        self._z[key] = out
        return out

    def _w(self, k: int, v) -> int:
        xprev = self._xval(k - 1, v) if k > 1 else INF
        if xprev != INF:
            return xprev
        y = self._zval(k, 1, v)
        return y + self.delta + 1 if y != INF else INF

    def _xval(self, k: int, v) -> int:
        if k == 0:
            return INF
        key = (k, v)
        if key in self._x:
            return self._x[key]
        w = self._w(k, v)
        if w == INF or w <= self.delta + 1:
            self._x[key] = w
            return w
        # closure of strictly-increasing pre-color walks, then resolve downward
        need = {v: w}
        stack = [v]
        while stack:
            a = stack.pop()
            wa = need[a]
            for u in self.spec.neighbors(a):
                if u in need or (k, u) in self._x:
                    continue
                wu = self._w(k, u)
                if wu == INF or wu <= self.delta + 1:
                    continue
                if wu == wa:
                    raise AssertionError("adjacent equal pre-colors")
                if wu > wa:
                    need[u] = wu
                    stack.append(u)
        for a in sorted(need, key=need.get, reverse=True):
            seen = set()
            for u in self.spec.neighbors(a):
                xu = self._x.get((k, u))
                if xu is not None:
                    if xu != INF:
                        seen.add(xu)
                    continue
                wu = self._w(k, u)
                if wu != INF and wu <= self.delta + 1:
                    seen.add(wu)
            c = 1
            while c in seen:
                c += 1
            self._x[(k, a)] = c
        return self._x[key]

    def _fallback(self, v) -> int:
        if v in self._fb:
            return self._fb[v]
        prio_stream = f"{self.prefix}:prio"
        region = {v: float(self.fld.uniform(prio_stream, v))}
        border: dict[tuple, int] = {}
        stack = [v]
        while stack:
            a = stack.pop()
            for u in self.spec.neighbors(a):
                if u in region or u in border:
                    continue
                xu = self._xval(self.kmax, u)
                if xu == INF:
                    region[u] = float(self.fld.uniform(prio_stream, u))
                    stack.append(u)
                else:
                    border[u] = xu
        for a in sorted(region, key=region.get, reverse=True):
            seen = set()
            for u in self.spec.neighbors(a):
                c = self._fb.get(u, border.get(u, INF))
                if c != INF:
                    seen.add(c)
            c = 1
            while c in seen:
                c += 1
            self._fb[a] = c
        return self._fb[v]

    def color(self, v) -> tuple[int, int]:
        """(color, level); level 0 means the greedy fallback resolved it."""
        v = tuple(int(c) for c in v)
        for k in range(1, self.kmax + 1):
            x = self._xval(k, v)
            if x != INF:
                return x, k
        return self._fallback(v), 0


def tower_color_at(field, v, spec: LatticeSpec, kmax: int = 3,
                   stream_prefix: str = "tower") -> tuple[int, int]:
    return TowerQuery(field, spec, kmax, stream_prefix).color(v)


# ---------------------------------------------------------------------------
# nets


@dataclass
class NetWindow:
    indicator: np.ndarray
    colors: np.ndarray
    tainted: np.ndarray
    q: int


def net_window(g, field, kmax: int = 3, stream_prefix: str = "net") -> NetWindow:
    """m-net on a window: greedy independent set scanned by color class.

    Original 1's always stand (no two are adjacent); each later class q, q-1,
    ..., 2 joins exactly its members with no current 1 in their ball.  A
    vertex recolored away from its class has a 1-neighbor from that moment
    on, so it can never join later: scanning original classes once is exact.
    """
    tw = tower_coloring(g, field, kmax=kmax, stream_prefix=stream_prefix)
    graph, _, full, _ = _as_parts(g)
    q = tw.delta + 1
    x = tw.colors
    nbr, _ = padded_neighbors(graph)
    joined = np.zeros(graph.n, dtype=bool)
    blocked = np.zeros(graph.n, dtype=bool)
    taint = tw.tainted.copy()

    def take(mask):
        joined[mask] = True
        for v in np.nonzero(mask)[0]:
            blocked[graph.indices[graph.indptr[v]:graph.indptr[v + 1]]] = True

    take(x == 1)
    for a in range(q, 1, -1):
        cls = x == a
        taint |= cls & (dilate_mask(taint, nbr) | ~full)
        take(cls & ~blocked)
    return NetWindow(joined, x, taint, q)


class NetQuery:
    """Demand evaluation of the net indicator at single sites."""

    def __init__(self, field, spec: LatticeSpec, kmax: int = 3,
                 stream_prefix: str = "net"):
        self.tower = TowerQuery(field, spec, kmax, stream_prefix)
        self.spec = spec
        self._one: dict[tuple, bool] = {}
        self._xc: dict[tuple, int] = {}

    def _color(self, v) -> int:
        if v not in self._xc:
            self._xc[v] = self.tower.color(v)[0]
        return self._xc[v]

    def indicator(self, v) -> bool:
        v = tuple(int(c) for c in v)
        if v in self._one:
            return self._one[v]
        xv = self._color(v)
        if xv == 1:
            self._one[v] = True
            return True
        # v joins at its own class unless someone in its ball is a 1 by then;
        # only original 1's and strictly larger classes can be 1 that early
        need = {v: xv}
        stack = [v]
        while stack:
            a = stack.pop()
            xa = need[a]
            for u in self.spec.neighbors(a):
                if u in need or u in self._one:
                    continue
                xu = self._color(u)
                if xu == 1:
                    self._one[u] = True
                elif xu > xa:
                    need[u] = xu
                    stack.append(u)
        for a in sorted(need, key=need.get, reverse=True):
            xa = need[a]
            ok = True
            for u in self.spec.neighbors(a):
                xu = self._color(u)
                if xu == 1 or (xu > xa and self._one[u]):
                    ok = False
                    break
            self._one[a] = ok
        return self._one[v]


# ---------------------------------------------------------------------------
# lattice process wrappers


class LongRangeColoring:
    """Coloring of Z^d where sites within norm-distance m always differ,
    using q = |ball(m)| colors."""

    def __init__(self, d: int, m: int, norm: str = "l1", field=None,
                 kmax: int = 3, stream_prefix: str = "net"):
        self.spec = LatticeSpec(d, m, norm)
        self.q = self.spec.degree + 1
        self.field = field
        self.kmax = kmax
        self.prefix = stream_prefix

    def at(self, v, field=None) -> tuple[int, int]:
        f = field if field is not None else self.field
        return tower_color_at(f, v, self.spec, self.kmax, self.prefix)

    def window(self, window: Window, field=None) -> TowerWindow:
        f = field if field is not None else self.field
        wg = WindowGraph.build(window, self.spec.m, self.spec.norm)
        return tower_coloring(wg, f, kmax=self.kmax, stream_prefix=self.prefix)


def long_range_coloring(d: int, m: int, norm: str, field,
                        kmax: int = 3) -> LongRangeColoring:
    return LongRangeColoring(d, m, norm, field, kmax)


class MNet:
    """Indicator process of an m-net of Z^d: 1's pairwise farther than m,
    every site within m of a 1."""

    def __init__(self, d: int, m: int, norm: str = "l1", field=None,
                 kmax: int = 3, stream_prefix: str = "net"):
        self.spec = LatticeSpec(d, m, norm)
        self.q = self.spec.degree + 1
        self.field = field
        self.kmax = kmax
        self.prefix = stream_prefix

    def at(self, v, field=None) -> bool:
        f = field if field is not None else self.field
        return NetQuery(f, self.spec, self.kmax, self.prefix).indicator(v)

    def window(self, window: Window, field=None) -> NetWindow:
        f = field if field is not None else self.field
        wg = WindowGraph.build(window, self.spec.m, self.spec.norm)
        return net_window(wg, f, kmax=self.kmax, stream_prefix=self.prefix)


def m_net(d: int, m: int, norm: str, field, kmax: int = 3) -> MNet:
    return MNet(d, m, norm, field, kmax)


def net_packing_bound(d: int, m: int, c: int, norm: str = "l1") -> int:
    """Net points within distance c*m of a site fit disjoint m/2-balls."""
    half = m // 2
    return ball_size(d, c * m + half, norm) // max(ball_size(d, half, norm), 1)
