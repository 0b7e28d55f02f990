"""BGP routes split into inter-domain (beta) and intra-domain (alpha) attributes,
plus the reference decision process used as an oracle.

Smaller keys are better everywhere in this module, so ``min`` selects.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import ConflictError, NotFoundError, ParseError
from .graph import INF, DistanceMap, Topology

ORIGIN_IGP, ORIGIN_EGP, ORIGIN_INCOMPLETE = 0, 1, 2


class MedMode(str, enum.Enum):
    """How a route without MED compares against MED-bearing routes of its AS.

    ``DEFAULT`` treats a missing MED as 0. ``IGNORE`` ranks MED-less routes
    behind every MED-bearing one, so they are only used once all of those
    are unreachable.
    """

    DEFAULT = "default"
    IGNORE = "ignore"


@dataclass(frozen=True, order=True)
class BetaAttrs:
    local_pref: int
    as_path_len: int
    origin: int
    origin_as: int
    med: int | None = None

    def __post_init__(self):
        if self.as_path_len < 0:
            raise ValueError("as_path_len must be >= 0")
        if self.origin not in (ORIGIN_IGP, ORIGIN_EGP, ORIGIN_INCOMPLETE):
            raise ValueError(f"origin must be 0, 1 or 2, got {self.origin}")
        if self.med is not None and self.med < 0:
            raise ValueError("med must be >= 0")


@dataclass(frozen=True)
class AlphaAttrs:
    ebgp: bool
    igp_cost: int | float
    router_id: int


@dataclass(frozen=True)
class Route:
    prefix: str
    gateway: str
    beta: BetaAttrs
    router_id: int
    ebgp_local: bool = False

    @property
    def key(self) -> tuple:
        return (self.prefix, self.gateway, self.beta.origin_as)

    @property
    def origin_as(self) -> int:
        return self.beta.origin_as


def beta_key(route: Route) -> tuple:
    """MED-excluded beta comparison key: local-pref, AS-path length, origin."""
    b = route.beta
    return (-b.local_pref, b.as_path_len, b.origin)


def med_value(route: Route, mode: MedMode = MedMode.DEFAULT):
    if route.beta.med is not None:
        return route.beta.med
    return 0 if mode == MedMode.DEFAULT else INF


def alpha(route: Route, dist: DistanceMap) -> AlphaAttrs:
    return AlphaAttrs(route.ebgp_local, alpha_of(route, dist), route.router_id)


def alpha_of(route: Route, dist: DistanceMap):
    """IGP distance to the gateway; 0 for eBGP routes learned by the vantage
    itself (as long as the neighbor is alive), INF when unreachable."""
    d = dist.get(route.gateway, INF)
    if d == INF:
        return INF
    return 0 if route.ebgp_local else d


def tie_key(route: Route, dist: DistanceMap) -> tuple:
    """Alpha-level ordering among routes that survived beta and MED."""
    return (alpha_of(route, dist), route.router_id, route.gateway, route.origin_as)


def oracle_best(prefix: str, rib: "Rib", dist: DistanceMap, med_mode=MedMode.DEFAULT):
    """Full decision process on every known route of ``prefix``.

    Unreachable routes are discarded first, then the best MED-excluded beta
    wins, MED is compared per origin AS, and the IGP distance and router id
    break the remaining ties. Returns ``None`` when nothing is reachable.
    """
    return select_best(rib.routes(prefix), dist, med_mode)


def select_best(routes, dist: DistanceMap, med_mode=MedMode.DEFAULT):
    live = [r for r in routes if alpha_of(r, dist) != INF]
    if not live:
        return None
    best_beta = min(beta_key(r) for r in live)
    survivors = [r for r in live if beta_key(r) == best_beta]
    lowest_med: dict[int, object] = {}
    for r in survivors:
        m = med_value(r, med_mode)
        if r.origin_as not in lowest_med or m < lowest_med[r.origin_as]:
            lowest_med[r.origin_as] = m
    survivors = [r for r in survivors if med_value(r, med_mode) == lowest_med[r.origin_as]]
    return min(survivors, key=lambda r: tie_key(r, dist))


@dataclass
class Rib:
    """Every known route, per prefix."""

    _routes: dict[str, dict[tuple, Route]] = field(default_factory=dict)

    def add(self, route: Route):
        bucket = self._routes.setdefault(route.prefix, {})
        if route.key in bucket:
            raise ConflictError(f"duplicate route {route.key}")
        bucket[route.key] = route

    def withdraw(self, prefix: str, gateway: str, origin_as: int) -> Route:
        bucket = self._routes.get(prefix, {})
        try:
            route = bucket.pop((prefix, gateway, origin_as))
        except KeyError:
            raise NotFoundError(f"no route for {prefix} via {gateway} from AS{origin_as}") from None
        if not bucket:
            del self._routes[prefix]
        return route

    def routes(self, prefix: str) -> list[Route]:
        return list(self._routes.get(prefix, {}).values())

    def prefixes(self) -> list[str]:
        return list(self._routes)

    def __iter__(self):
        for bucket in self._routes.values():
            yield from bucket.values()

    def __len__(self):
        return sum(len(b) for b in self._routes.values())

    def to_text(self) -> str:
        return "".join(format_route(r) + "\n" for r in self)


def format_route(route: Route) -> str:
    b = route.beta
    parts = [
        "route",
        route.prefix,
        route.gateway,
        f"lp={b.local_pref}",
        f"aspath={b.as_path_len}",
        f"origin={b.origin}",
    ]
    if b.med is not None:
        parts.append(f"med={b.med}")
    parts += [f"as={b.origin_as}", f"rid={route.router_id}"]
    if route.ebgp_local:
        parts.append("ebgp-local")
    return " ".join(parts)


_REQUIRED = ("lp", "aspath", "origin", "as")


def parse_route(words, topology: Topology | None = None, lineno=None, source=None) -> Route:
    """Parse ``route <prefix> <gateway> lp= aspath= origin= [med=] as= [rid=] [ebgp-local]``.

    The leading ``route`` keyword is optional. Without ``rid=`` the router id
    defaults to the gateway's declaration rank in ``topology``.
    """
    if isinstance(words, str):
        words = words.split()
    if words and words[0] == "route":
        words = words[1:]
    if len(words) < 2:
        raise ParseError("expected: route <prefix> <gateway> key=value ...", lineno, source)
    prefix, gateway, rest = words[0], words[1], words[2:]
    fields: dict[str, int] = {}
    ebgp_local = False
    for word in rest:
        if word == "ebgp-local":
            ebgp_local = True
            continue
        name, sep, value = word.partition("=")
        if not sep or name not in ("lp", "aspath", "origin", "med", "as", "rid"):
            raise ParseError(f"unexpected token {word!r}", lineno, source)
        try:
            fields[name] = int(value)
        except ValueError:
            raise ParseError(f"{name} needs an integer, got {value!r}", lineno, source) from None
    missing = [k for k in _REQUIRED if k not in fields]
    if missing:
        raise ParseError(f"missing {', '.join(missing)}", lineno, source)
    if topology is not None and not topology.has_node(gateway):
        raise ParseError(f"unknown gateway node {gateway!r}", lineno, source)
    if "rid" in fields:
        rid = fields["rid"]
    elif topology is not None:
        rid = topology.number(gateway)
    else:
        raise ParseError("rid= required when no topology is given", lineno, source)
    try:
        beta = BetaAttrs(fields["lp"], fields["aspath"], fields["origin"], fields["as"], fields.get("med"))
    except ValueError as exc:
        raise ParseError(str(exc), lineno, source) from None
    return Route(prefix, gateway, beta, rid, ebgp_local)


def parse_rib(text: str, topology: Topology | None = None, source: str | None = None) -> Rib:
    rib = Rib()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] != "route":
            raise ParseError(f"unknown declaration {words[0]!r}", lineno, source)
        route = parse_route(words, topology, lineno, source)
        try:
            rib.add(route)
        except ConflictError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return rib
