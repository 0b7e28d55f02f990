"""Per-prefix route store and OPR set extraction.

Routes of one prefix are kept in leaves ordered by MED-excluded beta. A leaf
(an MR set) holds one MED-sorted chain per origin AS. Since IGP events never
touch beta, leaf order never changes on an IGP event; only which gateways are
reachable, and how far they are, does.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .bgp import MedMode, Route, alpha_of, beta_key, med_value, select_best
from .errors import ConflictError, NotFoundError
from .graph import INF, DistanceMap, SingleFailures, Topology, spf, two_disjoint_paths


@dataclass
class MedChain:
    """Routes of one origin AS sharing a leaf, best MED first."""

    origin_as: int
    med_mode: MedMode = MedMode.DEFAULT
    routes: list[Route] = field(default_factory=list)

    def sort_key(self, route: Route) -> tuple:
        return (med_value(route, self.med_mode), route.router_id, route.gateway)

    def insert(self, route: Route):
        keys = [self.sort_key(r) for r in self.routes]
        self.routes.insert(bisect.bisect_right(keys, self.sort_key(route)), route)

    def top_index(self, dist: DistanceMap) -> int | None:
        """Position of M_top, the first reachable route, or None."""
        for i, r in enumerate(self.routes):
            if alpha_of(r, dist) != INF:
                return i
        return None


@dataclass
class MrSet:
    """One leaf: every route of the prefix with the same MED-excluded beta."""

    beta: tuple
    chains: dict[int, MedChain] = field(default_factory=dict)

    def ordered_chains(self) -> list[MedChain]:
        return [self.chains[a] for a in sorted(self.chains)]

    def routes(self) -> list[Route]:
        return [r for c in self.ordered_chains() for r in c.routes]

    def gateways(self) -> set[str]:
        return {r.gateway for r in self.routes()}

    def __len__(self):
        return sum(len(c.routes) for c in self.chains.values())


@dataclass
class LeafList:
    """The ordered leaves M_1, M_2, ... of one prefix (best beta first)."""

    med_mode: MedMode = MedMode.DEFAULT
    leaves: list[MrSet] = field(default_factory=list)

    def __len__(self):
        return len(self.leaves)

    def __iter__(self):
        return iter(self.leaves)

    def routes(self) -> list[Route]:
        return [r for leaf in self.leaves for r in leaf.routes()]

    def _rank(self, key: tuple) -> tuple[int, bool]:
        keys = [leaf.beta for leaf in self.leaves]
        i = bisect.bisect_left(keys, key)
        return i, i < len(keys) and keys[i] == key

    def insert_route(self, route: Route) -> int:
        """Place ``route`` in its leaf and return the leaf's 1-based rank."""
        key = beta_key(route)
        i, found = self._rank(key)
        if not found:
            self.leaves.insert(i, MrSet(key))
        leaf = self.leaves[i]
        chain = leaf.chains.get(route.origin_as)
        if chain is None:
            chain = leaf.chains[route.origin_as] = MedChain(route.origin_as, self.med_mode)
        elif any(r.key == route.key for r in chain.routes):
            if not found:
                del self.leaves[i]
            raise ConflictError(f"route {route.key} already present")
        chain.insert(route)
        return i + 1

    def remove_route(self, route: Route) -> int:
        """Remove ``route`` (matched by prefix, gateway and origin AS) and
        return the rank its leaf had. Empty chains and leaves are dropped."""
        i, found = self._rank(beta_key(route))
        chain = self.leaves[i].chains.get(route.origin_as) if found else None
        idx = None
        if chain is not None:
            idx = next((j for j, r in enumerate(chain.routes) if r.key == route.key), None)
        if idx is None:
            raise NotFoundError(f"route {route.key} not present")
        del chain.routes[idx]
        leaf = self.leaves[i]
        if not chain.routes:
            del leaf.chains[route.origin_as]
        if not leaf.chains:
            del self.leaves[i]
        return i + 1

    def find(self, prefix: str, gateway: str, origin_as: int) -> Route | None:
        for r in self.routes():
            if r.key == (prefix, gateway, origin_as):
                return r
        return None


# A group is one MR set expressed as its chains, each a MED-ordered tuple.
Group = list[tuple[Route, ...]]


def _truncate(chain, dist: DistanceMap, med_mode, topology: Topology, disjoint) -> tuple[Route, ...]:
    """Drop chain entries ranked below the first reachable MED tier.

    Those entries only matter once the whole tier is unreachable, so they
    are dropped only when no single failure can cut the tier off (two
    disjoint paths reach its gateways). Otherwise the chain is kept whole.
    """
    for i, r in enumerate(chain):
        if alpha_of(r, dist) == INF:
            continue
        m = med_value(r, med_mode)
        j = i
        while j + 1 < len(chain) and med_value(chain[j + 1], med_mode) == m:
            j += 1
        if j + 1 == len(chain):
            return chain
        tier = {t.gateway for t in chain[i : j + 1] if alpha_of(t, dist) != INF}
        if disjoint(topology, tier):
            return chain[: j + 1]
        return chain
    return chain


def second_mr_holds(
    topology: Topology,
    dist: DistanceMap,
    primary: Route,
    backup: Route,
    second: list[Route],
    *,
    med_mode=MedMode.DEFAULT,
    disjoint=two_disjoint_paths,
    failures: SingleFailures | None = None,
) -> bool:
    """Whether {primary, backup} alone optimally protects the prefix.

    Besides two disjoint paths, every single failure that cuts ``primary``
    off must leave ``backup`` as the best route of the second MR set; any
    other event keeps ``primary`` as the only candidate of the first one.
    """
    if not disjoint(topology, {primary.gateway, backup.gateway}):
        return False
    failures = failures or SingleFailures(topology)
    for event in failures.disconnecting(primary.gateway):
        after = select_best(second, failures.distances(event), med_mode)
        if after is None or after.key != backup.key:
            return False
    return True


def select_groups(
    groups: list[Group],
    topology: Topology,
    dist: DistanceMap,
    *,
    med_mode=MedMode.DEFAULT,
    second_mr=False,
    drop_med=False,
    disjoint=two_disjoint_paths,
    failures: SingleFailures | None = None,
):
    """Core of the extraction, shared with the minimality check.

    Returns ``(chains, protected, x, mode)`` where ``chains`` lists the
    MED-ordered chains kept for the data plane.
    """
    first = [r for c in groups[0] for r in c] if groups else []
    if drop_med:
        groups = [[_truncate(c, dist, med_mode, topology, disjoint) for c in g] for g in groups]
    if second_mr and len(groups) >= 2:
        if len(first) == 1:
            second = [r for c in groups[1] for r in c]
            backup = select_best(second, dist, med_mode)
            if backup is not None and second_mr_holds(
                topology,
                dist,
                first[0],
                backup,
                second,
                med_mode=med_mode,
                disjoint=disjoint,
                failures=failures,
            ):
                return [tuple(first), (backup,)], True, 2, "second-mr"
    chains: list[tuple[Route, ...]] = []
    gateways: set[str] = set()
    for x, group in enumerate(groups, start=1):
        chains.extend(group)
        gateways.update(r.gateway for c in group for r in c)
        if disjoint(topology, gateways):
            return chains, True, x, "plain"
    return chains, False, len(groups), "plain"


def leaf_groups(leaves: LeafList) -> list[Group]:
    return [[tuple(c.routes) for c in leaf.ordered_chains()] for leaf in leaves]


def extract_opr(
    leaves: LeafList,
    topology: Topology,
    dist: DistanceMap | None = None,
    *,
    second_mr=False,
    drop_med=False,
    disjoint=two_disjoint_paths,
    failures: SingleFailures | None = None,
):
    """Union of the first x MR sets, x minimal such that two disjoint paths
    reach the prefix through their gateways.

    If no x works, every leaf is returned and the set is flagged unprotected.
    ``second_mr`` keeps only the best gateway of M_2 when M_1 is a single
    route and that pair already protects the prefix; ``drop_med`` omits chain
    entries ranked below the first reachable one.
    """
    from .data_plane import OprSet

    if not len(leaves):
        raise ValueError("cannot extract an OPR set from an empty leaf list")
    if dist is None:
        dist = spf(topology)
    chains, protected, x, mode = select_groups(
        leaf_groups(leaves),
        topology,
        dist,
        med_mode=leaves.med_mode,
        second_mr=second_mr,
        drop_med=drop_med,
        disjoint=disjoint,
        failures=failures,
    )
    return OprSet(chains, med_mode=leaves.med_mode, protected=protected, mode=mode)
