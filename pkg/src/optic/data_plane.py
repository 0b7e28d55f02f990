"""Data-plane side: shared OPR sets indexed by content hash.

A prefix points (through ``MetaSet.p_bgp``) at the OPR set protecting it;
prefixes whose sets have equal content share one object, so an IGP event is
handled by walking the distinct sets instead of every prefix.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable

from .bgp import MedMode, Route, alpha_of, beta_key, med_value
from .errors import SetExhausted
from .graph import INF, DistanceMap, SingleFailures, Topology, two_disjoint_paths

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def _route_content(r: Route) -> tuple:
    b = r.beta
    return (r.gateway, b.local_pref, b.as_path_len, b.origin, b.med, r.router_id, r.ebgp_local)


class OprEntry:
    """Data-plane copy of one MED chain, with its current M_top and alpha."""

    __slots__ = ("routes", "med_mode", "top", "best", "alpha")

    def __init__(self, routes: Iterable[Route], med_mode=MedMode.DEFAULT):
        self.routes = tuple(routes)
        if not self.routes:
            raise ValueError("empty chain")
        self.med_mode = med_mode
        self.top: int | None = None
        self.best: Route | None = None
        self.alpha = INF

    @property
    def beta(self) -> tuple:
        return beta_key(self.routes[0])

    @property
    def origin_as(self) -> int:
        return self.routes[0].origin_as

    def content(self) -> tuple:
        return (self.beta, self.origin_as, tuple(_route_content(r) for r in self.routes))

    def refresh(self, dist: DistanceMap) -> Route | None:
        """Move M_top to the first reachable route and cache its alpha.

        The walk restarts from the head of the chain each time so that a
        better-MED gateway coming back up is picked again. Routes sharing
        M_top's MED stay candidates and the closest of them wins.
        """
        self.top = self.best = None
        self.alpha = INF
        for i, r in enumerate(self.routes):
            if alpha_of(r, dist) != INF:
                self.top = i
                break
        if self.top is None:
            return None
        med = med_value(self.routes[self.top], self.med_mode)
        for r in self.routes[self.top :]:
            if med_value(r, self.med_mode) != med:
                break
            a = alpha_of(r, dist)
            if a == INF:
                continue
            if self.best is None or (a, r.router_id, r.gateway) < (self.alpha, self.best.router_id, self.best.gateway):
                self.best, self.alpha = r, a
        return self.best

    @property
    def exhausted(self) -> bool:
        return self.best is None


class OprSet:
    """An Optimal-Protecting Rounded set: chains of gateways plus O_top."""

    def __init__(self, chains, *, med_mode=MedMode.DEFAULT, protected=True, mode="plain"):
        entries = [c if isinstance(c, OprEntry) else OprEntry(c, med_mode) for c in chains]
        entries.sort(key=lambda e: (e.beta, e.origin_as, tuple(r.gateway for r in e.routes)))
        self.entries = tuple(entries)
        self.med_mode = med_mode
        self.protected = protected
        self.mode = mode
        self.top: Route | None = None
        self._content = None

    def content(self) -> tuple:
        if self._content is None:
            self._content = tuple(e.content() for e in self.entries)
        return self._content

    def __eq__(self, other):
        if not isinstance(other, OprSet):
            return NotImplemented
        return self.content() == other.content()

    def __hash__(self):
        return hash_opr(self)

    def __len__(self):
        return sum(len(e.routes) for e in self.entries)

    def __repr__(self):
        top = self.top.gateway if self.top else None
        return f"OprSet({sorted(self.gateways())}, top={top!r}, protected={self.protected})"

    def gateways(self) -> set[str]:
        return {r.gateway for e in self.entries for r in e.routes}

    def routes(self) -> list[Route]:
        return [r for e in self.entries for r in e.routes]

    def groups(self) -> list[list[tuple[Route, ...]]]:
        """Entries grouped back into their MR sets, best beta first."""
        out: list[list[tuple[Route, ...]]] = []
        last = None
        for e in self.entries:
            if e.beta != last:
                out.append([])
                last = e.beta
            out[-1].append(e.routes)
        return out

    @property
    def x(self) -> int:
        return len({e.beta for e in self.entries})

    def refresh(self, dist: DistanceMap) -> int:
        """Advance every chain past unreachable heads and recache alpha.
        Returns the number of chains left with no reachable route."""
        return sum(e.refresh(dist) is None for e in self.entries)


@lru_cache(maxsize=1 << 16)
def _hash_content(content: tuple) -> int:
    return fnv1a_64(repr(content).encode())


def hash_opr(oprset: OprSet) -> int:
    """64-bit FNV-1a digest of the canonical content. An index only: the
    meta-set still compares full content before sharing a set."""
    return _hash_content(oprset.content())


def min_search(oprset: OprSet, dist: DistanceMap | None = None) -> str:
    """Select O_top among the chains' cached M_top routes.

    Chains are compared on beta first (a set may span several MR sets),
    then on cached alpha, then router id. Passing ``dist`` refreshes the
    chains first. Raises :class:`SetExhausted` if nothing is reachable.
    """
    if dist is not None:
        oprset.refresh(dist)
    best = None
    best_key = None
    for e in oprset.entries:
        if e.best is None:
            continue
        r = e.best
        key = (e.beta, e.alpha, r.router_id, r.gateway, r.origin_as)
        if best_key is None or key < best_key:
            best, best_key = r, key
    oprset.top = best
    if best is None:
        raise SetExhausted("no reachable gateway left in the OPR set")
    return best.gateway


class MetaSet:
    """Hash-indexed store of OPR sets plus the prefix -> set map."""

    def __init__(self, retain_unused=False, hasher=hash_opr):
        self.table: dict[int, OprSet] = {}
        self.p_bgp: dict[str, int] = {}
        self.retain_unused = retain_unused
        self._hasher = hasher
        self._buckets: dict[int, list[int]] = {}
        self._members: dict[int, set[str]] = {}

    def __len__(self):
        return len(self.table)

    def __contains__(self, oprset: OprSet):
        return self.find(oprset) is not None

    def find(self, oprset: OprSet) -> int | None:
        for key in self._buckets.get(self._hasher(oprset), ()):
            if self.table[key] == oprset:
                return key
        return None

    def intern(self, oprset: OprSet) -> tuple[int, OprSet]:
        """Return the slot holding a set equal to ``oprset``, inserting it if
        needed. Colliding digests get the next free slot."""
        h = self._hasher(oprset)
        for key in self._buckets.get(h, ()):
            if self.table[key] == oprset:
                return key, self.table[key]
        key = h
        while key in self.table:
            key = (key + 1) & MASK64
        self.table[key] = oprset
        self._buckets.setdefault(h, []).append(key)
        self._members[key] = set()
        return key, oprset

    def _drop(self, key: int):
        oprset = self.table.pop(key)
        h = self._hasher(oprset)
        self._buckets[h].remove(key)
        if not self._buckets[h]:
            del self._buckets[h]
        del self._members[key]

    def bind(self, prefix: str, key: int):
        old = self.p_bgp.get(prefix)
        self.p_bgp[prefix] = key
        self._members[key].add(prefix)
        if old is not None and old != key:
            self._release(prefix, old)

    def unbind(self, prefix: str):
        old = self.p_bgp.pop(prefix, None)
        if old is not None:
            self._release(prefix, old)

    def _release(self, prefix: str, key: int):
        members = self._members[key]
        members.discard(prefix)
        if not members and not self.retain_unused:
            self._drop(key)

    def prefixes(self, key: int) -> list[str]:
        return sorted(self._members.get(key, ()))

    def get(self, prefix: str) -> OprSet | None:
        key = self.p_bgp.get(prefix)
        return None if key is None else self.table[key]

    def dump_lines(self) -> list[str]:
        lines = []
        for key in sorted(self.table):
            o = self.table[key]
            top = o.top.gateway if o.top else "-"
            line = f"opr {key:016x} size={len(o)} top={top} prefixes={len(self._members[key])}"
            if not o.protected:
                line += " unprotected"
            lines.append(line)
        return lines


def update_opr(
    leaves,
    meta: MetaSet,
    old_key: int | None,
    prefix: str,
    topology: Topology,
    dist: DistanceMap,
    *,
    second_mr=False,
    drop_med=False,
    disjoint=two_disjoint_paths,
    failures: SingleFailures | None = None,
) -> int | None:
    """Recompute the OPR set of ``prefix`` and rebind it in ``meta``.

    Returns the slot now used by the prefix, or None if its leaf list is
    empty (the prefix is withdrawn from ``p_bgp``).
    """
    from .control_plane import extract_opr

    if meta.p_bgp.get(prefix) != old_key:
        raise ValueError(f"{prefix} is not bound to slot {old_key}")
    if not len(leaves):
        meta.unbind(prefix)
        return None
    oprset = extract_opr(
        leaves,
        topology,
        dist,
        second_mr=second_mr,
        drop_med=drop_med,
        disjoint=disjoint,
        failures=failures,
    )
    oprset.refresh(dist)
    try:
        min_search(oprset)
    except SetExhausted:
        pass
    key, stored = meta.intern(oprset)
    if stored is not oprset:
        stored.protected = oprset.protected
        stored.mode = oprset.mode
        stored.refresh(dist)
        try:
            min_search(stored)
        except SetExhausted:
            pass
    meta.bind(prefix, key)
    return key
