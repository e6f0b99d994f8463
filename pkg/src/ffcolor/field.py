"""Deterministic label field: keyed counter-mode hashing of lattice sites.

Every random object in the package is a pure function of (seed, stream, coords).
A stream is a short string naming one iid family ("u", "coin", "prio", ...);
coords is an integer tuple.  Scalar and vectorized paths share the exact same
arithmetic, bit for bit, so window runs and single-site queries agree.

Access tracking lives here too.  A Tracker records which (stream, coord) pairs
an evaluation touched; the 1-norm reach of the touched *spatial* coordinates is
an upper-bound witness for the coding radius of that query.  Streams flagged
non-spatial (shared global tables such as set-family bits) count against the
access budget but not the radius.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# splitmix64 finalizer constants
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(h: int) -> int:
    """splitmix64 finalizer; the only scrambling primitive used anywhere."""
    h &= MASK64
    h ^= h >> 30
    h = (h * _M1) & MASK64
    h ^= h >> 27
    h = (h * _M2) & MASK64
    h ^= h >> 31
    return h


def stream_key(stream: str) -> int:
    """FNV-1a over the stream name's utf-8 bytes."""
    h = _FNV_OFFSET
    for b in stream.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def _mix64_arr(h: np.ndarray) -> np.ndarray:
    h = h.astype(np.uint64, copy=True)
    h ^= h >> np.uint64(30)
    h *= np.uint64(_M1)
    h ^= h >> np.uint64(27)
    h *= np.uint64(_M2)
    h ^= h >> np.uint64(31)
    return h


class BudgetExceeded(Exception):
    """An evaluation ran past its radius or access budget.

    Carries enough context to right-censor the query instead of crashing a run.
    """

    def __init__(self, kind: str, limit: int, stream: str = "", where: tuple = ()):
        self.kind = kind  # "radius" | "access"
        self.limit = limit
        self.stream = stream
        self.where = where
        super().__init__(f"{kind} budget {limit} exceeded at {stream}{where!r}")


@dataclass(frozen=True)
class Budget:
    radius_cap: int = 4096
    access_cap: int = 100_000_000


DEFAULT_BUDGET = Budget()


class LabelField:
    """Seeded, immutable source of iid labels indexed by (stream, coords)."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64

    # -- scalar path ------------------------------------------------------

    def u64(self, stream: str, coords: Sequence[int]) -> int:
        h = mix64(self.seed ^ stream_key(stream))
        for c in coords:
            h = mix64(h ^ (int(c) & MASK64))
        return h

    def uniform(self, stream: str, coords: Sequence[int]) -> float:
        # top 53 bits -> [0, 1)
        return (self.u64(stream, coords) >> 11) * 2.0**-53

    def coin(self, stream: str, coords: Sequence[int]) -> int:
        """Fair +-1 coin from the top bit."""
        return 1 if (self.u64(stream, coords) >> 63) == 0 else -1

    def discrete(self, stream: str, coords: Sequence[int], n: int) -> int:
        """Uniform value in {1, ..., n} via ceil(n * U)."""
        if n < 1:
            raise ValueError("discrete needs n >= 1")
        u = self.uniform(stream, coords)
        k = int(np.ceil(n * u))
        return min(max(k, 1), n)

    # -- vectorized path (bit-identical to the scalar path) ----------------

    def u64_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Hash broadcast coordinate arrays; axes[i] is the i-th coordinate."""
        shape = np.broadcast_shapes(*(np.shape(a) for a in axes))
        h = np.full(shape, mix64(self.seed ^ stream_key(stream)), dtype=np.uint64)
        for a in axes:
            h = _mix64_arr(h ^ np.asarray(a, dtype=np.int64).astype(np.uint64))
        return h

    def uniform_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        return (self.u64_grid(stream, axes) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def coin_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        h = self.u64_grid(stream, axes)
        return np.where((h >> np.uint64(63)) == 0, 1, -1).astype(np.int8)

    def discrete_grid(self, stream: str, axes: Sequence[np.ndarray], n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("discrete needs n >= 1")
        k = np.ceil(n * self.uniform_grid(stream, axes)).astype(np.int64)
        return np.clip(k, 1, n)


class Tracker:
    """Record of every label access made while answering one query.

    One tracker per query; never share across concurrent evaluations.
    Point accesses are kept exactly; rectangular bulk reads are kept as
    (lo, hi) inclusive boxes.  Radius is the running max 1-norm distance
    from the query origin over spatial accesses.
    """

    def __init__(self, origin: Sequence[int], budget: Budget = DEFAULT_BUDGET):
        self.origin = tuple(int(c) for c in origin)
        self.budget = budget
        self.points: dict[str, set[tuple]] = {}
        self.boxes: dict[str, list[tuple[tuple, tuple]]] = {}
        self.access_count = 0
        self.radius = 0

    def _bump(self, count: int, stream: str, where: tuple) -> None:
        self.access_count += count
        if self.access_count > self.budget.access_cap:
            raise BudgetExceeded("access", self.budget.access_cap, stream, where)

    def _reach(self, coords: tuple) -> int:
        return sum(abs(int(c) - o) for c, o in zip(coords, self.origin))

    def record(self, stream: str, coords: tuple, spatial: bool = True) -> None:
        self._bump(1, stream, coords)
        self.points.setdefault(stream, set()).add(coords)
        if spatial:
            r = self._reach(coords)
            if r > self.radius:
                if r > self.budget.radius_cap:
                    raise BudgetExceeded("radius", self.budget.radius_cap, stream, coords)
                self.radius = r

    def record_box(self, stream: str, lo: Sequence[int], hi: Sequence[int],
                   spatial: bool = True) -> None:
        """Record an inclusive coordinate box [lo, hi]."""
        lo = tuple(int(c) for c in lo)
        hi = tuple(int(c) for c in hi)
        count = 1
        for a, b in zip(lo, hi):
            if b < a:
                raise ValueError("empty box")
            count *= b - a + 1
        self._bump(count, stream, lo)
        self.boxes.setdefault(stream, []).append((lo, hi))
        if spatial:
            # farthest corner in 1-norm
            r = sum(max(abs(a - o), abs(b - o)) for a, b, o in zip(lo, hi, self.origin))
            if r > self.radius:
                if r > self.budget.radius_cap:
                    raise BudgetExceeded("radius", self.budget.radius_cap, stream, lo)
                self.radius = r

    def covers(self, stream: str, coords: tuple) -> bool:
        if coords in self.points.get(stream, ()):
            return True
        for lo, hi in self.boxes.get(stream, ()):
            if len(lo) == len(coords) and all(a <= c <= b for a, c, b in zip(lo, coords, hi)):
                return True
        return False


# streams whose coordinates are table indices, not lattice sites
NONSPATIAL_PREFIXES = ("family:", "fixture:")


def is_spatial(stream: str) -> bool:
    return not stream.startswith(NONSPATIAL_PREFIXES)


class TrackedField:
    """LabelField wrapper that records every access into a Tracker."""

    def __init__(self, base: LabelField, tracker: Tracker):
        self.base = base
        self.tracker = tracker
        self.seed = base.seed

    def u64(self, stream: str, coords: Sequence[int]) -> int:
        c = tuple(int(x) for x in coords)
        self.tracker.record(stream, c, spatial=is_spatial(stream))
        return self.base.u64(stream, c)

    def uniform(self, stream: str, coords: Sequence[int]) -> float:
        c = tuple(int(x) for x in coords)
        self.tracker.record(stream, c, spatial=is_spatial(stream))
        return self.base.uniform(stream, c)

    def coin(self, stream: str, coords: Sequence[int]) -> int:
        c = tuple(int(x) for x in coords)
        self.tracker.record(stream, c, spatial=is_spatial(stream))
        return self.base.coin(stream, c)

    def discrete(self, stream: str, coords: Sequence[int], n: int) -> int:
        c = tuple(int(x) for x in coords)
        self.tracker.record(stream, c, spatial=is_spatial(stream))
        return self.base.discrete(stream, c, n)

    # bulk reads record the bounding box they actually cover
    def u64_box(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        self._record_axes(stream, axes)
        return self.base.u64_grid(stream, axes)

    def uniform_box(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        self._record_axes(stream, axes)
        return self.base.uniform_grid(stream, axes)

    def coin_box(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        self._record_axes(stream, axes)
        return self.base.coin_grid(stream, axes)

    def discrete_box(self, stream: str, axes: Sequence[np.ndarray], n: int) -> np.ndarray:
        self._record_axes(stream, axes)
        return self.base.discrete_grid(stream, axes, n)

    def _record_axes(self, stream: str, axes: Sequence[np.ndarray]) -> None:
        lo = [int(np.min(a)) for a in axes]
        hi = [int(np.max(a)) for a in axes]
        self.tracker.record_box(stream, lo, hi, spatial=is_spatial(stream))


class PerturbedField:
    """Answers like `base` inside an accessed set, like `alt` outside it.

    Used by the replay test: rerunning a query against the perturbation of its
    own tracker must reproduce the original answer exactly, otherwise the
    tracker under-reported what the construction read.
    """

    def __init__(self, base: LabelField, tracker: Tracker, alt: LabelField):
        self.base = base
        self.alt = alt
        self.tracker = tracker
        self.seed = base.seed

    def _pick(self, stream: str, coords: tuple) -> LabelField:
        return self.base if self.tracker.covers(stream, coords) else self.alt

    def u64(self, stream: str, coords: Sequence[int]) -> int:
        c = tuple(int(x) for x in coords)
        return self._pick(stream, c).u64(stream, c)

    def uniform(self, stream: str, coords: Sequence[int]) -> float:
        c = tuple(int(x) for x in coords)
        return self._pick(stream, c).uniform(stream, c)

    def coin(self, stream: str, coords: Sequence[int]) -> int:
        c = tuple(int(x) for x in coords)
        return self._pick(stream, c).coin(stream, c)

    def discrete(self, stream: str, coords: Sequence[int], n: int) -> int:
        c = tuple(int(x) for x in coords)
        return self._pick(stream, c).discrete(stream, c, n)

    def u64_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        return self._merge(stream, axes, self.base.u64_grid(stream, axes),
                           self.alt.u64_grid(stream, axes))

    def uniform_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        return self._merge(stream, axes, self.base.uniform_grid(stream, axes),
                           self.alt.uniform_grid(stream, axes))

    def coin_grid(self, stream: str, axes: Sequence[np.ndarray]) -> np.ndarray:
        return self._merge(stream, axes, self.base.coin_grid(stream, axes),
                           self.alt.coin_grid(stream, axes))

    def discrete_grid(self, stream: str, axes: Sequence[np.ndarray], n: int) -> np.ndarray:
        return self._merge(stream, axes, self.base.discrete_grid(stream, axes, n),
                           self.alt.discrete_grid(stream, axes, n))

    def _merge(self, stream: str, axes, base_vals: np.ndarray, alt_vals: np.ndarray):
        bc = np.broadcast_arrays(*[np.asarray(a) for a in axes])
        inside = np.zeros(base_vals.shape, dtype=bool)
        pts = self.tracker.points.get(stream)
        boxes = self.tracker.boxes.get(stream)
        if boxes:
            for lo, hi in boxes:
                m = np.ones(base_vals.shape, dtype=bool)
                for a, l, h in zip(bc, lo, hi):
                    m &= (a >= l) & (a <= h)
                inside |= m
        if pts:
            stacked = np.stack([a.ravel() for a in bc], axis=1)
            flat = inside.ravel()
            for i, row in enumerate(stacked):
                if not flat[i] and tuple(int(x) for x in row) in pts:
                    flat[i] = True
            inside = flat.reshape(base_vals.shape)
        return np.where(inside, base_vals, alt_vals)

    # tracked-interface aliases so perturbed fields can drive bulk readers
    def u64_box(self, stream, axes):
        return self.u64_grid(stream, axes)

    def uniform_box(self, stream, axes):
        return self.uniform_grid(stream, axes)

    def coin_box(self, stream, axes):
        return self.coin_grid(stream, axes)

    def discrete_box(self, stream, axes, n):
        return self.discrete_grid(stream, axes, n)


@dataclass
class TrackedEvaluation:
    value: object
    tracker: Tracker

    @property
    def radius(self) -> int:
        return self.tracker.radius

    @property
    def access_count(self) -> int:
        return self.tracker.access_count


def tracked(fn, field: LabelField, origin: Sequence[int],
            budget: Budget = DEFAULT_BUDGET) -> TrackedEvaluation:
    """Run fn(tracked_field) and return its value with the access record."""
    t = Tracker(origin, budget)
    return TrackedEvaluation(fn(TrackedField(field, t)), t)


def untracked(base: LabelField):
    """Adapter giving a plain LabelField the tracked bulk-read interface."""

    class _Pass:
        seed = base.seed

        def __getattr__(self, name):
            if name.endswith("_box"):
                return getattr(base, name[:-4] + "_grid")
            return getattr(base, name)

    return _Pass()


def digest_bits(bits: np.ndarray) -> str:
    """sha256 of a packed bit array; used to pin shared tables in manifests."""
    return hashlib.sha256(np.packbits(bits.astype(np.uint8), axis=None).tobytes()).hexdigest()
