"""IGP topology: shortest paths, single events and the two-disjoint-paths test.

Node identifiers are strings. Link weights are positive integers; a removed
link carries the ``INF`` sentinel rather than a large number, so distance
sums never overflow into something that looks finite.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import NotFoundError, ParseError, TopologyError

INF = math.inf

DistanceMap = dict  # node id -> int distance or INF


def _check_weight(weight, *, allow_inf=True):
    if weight == INF:
        if not allow_inf:
            raise TopologyError("weight must be finite")
        return weight
    if isinstance(weight, bool) or not isinstance(weight, int) or weight < 1:
        raise TopologyError(f"invalid link weight {weight!r}: expected integer >= 1")
    return weight


@dataclass(frozen=True)
class Link:
    u: str
    v: str
    weight: int | float = 1
    directed: bool = False

    @property
    def key(self) -> tuple:
        return link_key(self.u, self.v, self.directed)

    @property
    def up(self) -> bool:
        return self.weight != INF

    def arcs(self) -> Iterator[tuple[str, str]]:
        yield self.u, self.v
        if not self.directed:
            yield self.v, self.u


def link_key(u: str, v: str, directed: bool = False) -> tuple:
    if directed:
        return (u, v, True)
    a, b = sorted((u, v))
    return (a, b, False)


@dataclass(frozen=True)
class IgpEvent:
    """A single IGP change: link weight update, link or node up/down."""

    kind: str
    target: tuple | str
    weight: int | None = None

    KINDS = ("weight-change", "link-down", "link-up", "node-down", "node-up")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown IGP event kind {self.kind!r}")
        if self.kind in ("weight-change", "link-up"):
            try:
                _check_weight(self.weight, allow_inf=False)
            except TopologyError as exc:
                raise ValueError(str(exc)) from None
        if self.kind in ("node-down", "node-up"):
            if not isinstance(self.target, str):
                raise ValueError("node events target a single node id")
        elif not (isinstance(self.target, tuple) and len(self.target) == 2):
            raise ValueError("link events target a (u, v) pair")

    @classmethod
    def weight_change(cls, u, v, weight):
        return cls("weight-change", (u, v), weight)

    @classmethod
    def link_down(cls, u, v):
        return cls("link-down", (u, v))

    @classmethod
    def link_up(cls, u, v, weight=1):
        return cls("link-up", (u, v), weight)

    @classmethod
    def node_down(cls, node):
        return cls("node-down", node)

    @classmethod
    def node_up(cls, node):
        return cls("node-up", node)

    @property
    def is_link_event(self) -> bool:
        return self.kind in ("weight-change", "link-down", "link-up")

    def __str__(self):
        if self.is_link_event:
            u, v = self.target
            w = "" if self.weight is None else f" {self.weight}"
            return f"{self.kind} {u} {v}{w}"
        return f"{self.kind} {self.target}"


class Topology:
    """Weighted IGP graph seen from one vantage router.

    Instances are treated as immutable: :func:`apply_event` builds a new one.
    ``down`` holds failed nodes; every link incident to one of them behaves
    as if its weight were ``INF``.
    """

    def __init__(self, nodes, links=(), vantage=None, down=()):
        # nodes: mapping id -> external flag, or iterable of ids (all internal)
        if isinstance(nodes, dict):
            self._nodes = dict(nodes)
        else:
            self._nodes = {n: False for n in nodes}
        self._links: dict[tuple, Link] = {}
        for link in links:
            if link.key in self._links:
                raise TopologyError(f"duplicate link {link.u} {link.v}")
            self._links[link.key] = link
        self.vantage = vantage
        self.down = frozenset(down)
        self._number = {n: i for i, n in enumerate(self._nodes, start=1)}
        self._adj = None
        self.validate()

    def validate(self):
        for link in self._links.values():
            for end in (link.u, link.v):
                if end not in self._nodes:
                    raise TopologyError(f"link {link.u}-{link.v}: unknown node {end!r}")
            if link.u == link.v:
                raise TopologyError(f"self-loop on {link.u!r}")
            _check_weight(link.weight)
            if link.directed and link_key(link.u, link.v) in self._links:
                raise TopologyError(f"directed link {link.u}->{link.v} parallels an undirected one")
        if self.vantage is None:
            raise TopologyError("no vantage router declared")
        if self.vantage not in self._nodes:
            raise TopologyError(f"vantage {self.vantage!r} is not a node")
        if self._nodes[self.vantage]:
            raise TopologyError("the vantage router must be internal")
        if self.vantage in self.down:
            raise TopologyError("the vantage router cannot be down")
        for n in self.down:
            if n not in self._nodes:
                raise TopologyError(f"down node {n!r} is not a node")

    # -- read access -------------------------------------------------------
    @property
    def nodes(self) -> list[str]:
        return list(self._nodes)

    @property
    def links(self) -> list[Link]:
        return list(self._links.values())

    def is_external(self, node: str) -> bool:
        return self._nodes[node]

    def has_node(self, node: str) -> bool:
        return node in self._nodes

    def number(self, node: str) -> int:
        """1-based declaration rank, used as the default router id."""
        try:
            return self._number[node]
        except KeyError:
            raise NotFoundError(f"unknown node {node!r}") from None

    def find_link(self, u: str, v: str) -> Link | None:
        for key in ((u, v, True), link_key(u, v)):
            if key in self._links:
                return self._links[key]
        return None

    def effective_weight(self, link: Link):
        if link.u in self.down or link.v in self.down:
            return INF
        return link.weight

    def adjacency(self) -> dict[str, list[tuple[str, int]]]:
        """Live arcs only: links with finite weight between up nodes."""
        if self._adj is None:
            adj = {n: [] for n in self._nodes}
            for link in self._links.values():
                w = self.effective_weight(link)
                if w == INF:
                    continue
                for a, b in link.arcs():
                    adj[a].append((b, w))
            for n in adj:
                adj[n].sort(key=lambda arc: self._number[arc[0]])
            self._adj = adj
        return self._adj

    def replace(self, *, links: dict | None = None, down=None) -> "Topology":
        """Derived copy; ``links`` is a key -> Link mapping already checked
        by the caller, so validation is skipped."""
        new = object.__new__(Topology)
        new._nodes = self._nodes
        new._links = self._links if links is None else links
        new.vantage = self.vantage
        new.down = self.down if down is None else frozenset(down)
        new._number = self._number
        new._adj = None
        return new

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and self._links == other._links
            and self.vantage == other.vantage
            and self.down == other.down
        )

    def __repr__(self):
        return (
            f"Topology({len(self._nodes)} nodes, {len(self._links)} links, "
            f"vantage={self.vantage!r}, down={sorted(self.down)})"
        )

    def to_text(self) -> str:
        lines = []
        for n, ext in self._nodes.items():
            lines.append(f"node {n}" + (" external" if ext else ""))
        for link in self._links.values():
            w = "inf" if link.weight == INF else str(link.weight)
            lines.append(f"edge {link.u} {link.v} {w}" + (" directed" if link.directed else ""))
        lines.append(f"vantage {self.vantage}")
        for n in sorted(self.down):
            lines.append(f"down {n}")
        return "\n".join(lines) + "\n"


def spf(topology: Topology) -> DistanceMap:
    """Dijkstra from the vantage; unreachable nodes map to ``INF``.

    Equal-distance nodes are settled in declaration order so runs are
    reproducible.
    """
    adj = topology.adjacency()
    number = topology.number
    dist = {n: INF for n in topology.nodes}
    src = topology.vantage
    dist[src] = 0
    heap = [(0, number(src), src)]
    while heap:
        d, _, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, number(v), v))
    return dist


def apply_event(topology: Topology, event: IgpEvent) -> Topology:
    """Return the topology after ``event``.

    ``link-up`` on a link that does not exist inserts it as an undirected
    link; on a link that exists it must currently be down.
    """
    if event.is_link_event:
        u, v = event.target
        for n in (u, v):
            if not topology.has_node(n):
                raise NotFoundError(f"unknown node {n!r}")
        link = topology.find_link(u, v)
        links = dict(topology._links)
        if event.kind == "link-up":
            w = _check_weight(event.weight, allow_inf=False)
            if link is None:
                if topology.find_link(v, u) is not None:
                    raise TopologyError(f"link {v}->{u} exists; cannot add a parallel {u}-{v}")
                new = Link(u, v, w)
            elif link.up:
                raise TopologyError(f"link {u}-{v} is already up")
            else:
                new = Link(link.u, link.v, w, link.directed)
            links[new.key] = new
            return topology.replace(links=links)
        if link is None:
            raise NotFoundError(f"unknown link {u}-{v}")
        if not link.up:
            raise TopologyError(f"link {u}-{v} is down")
        w = INF if event.kind == "link-down" else event.weight
        links[link.key] = Link(link.u, link.v, w, link.directed)
        return topology.replace(links=links)

    node = event.target
    if not topology.has_node(node):
        raise NotFoundError(f"unknown node {node!r}")
    if event.kind == "node-down":
        if node == topology.vantage:
            raise TopologyError("the vantage router cannot fail")
        if node in topology.down:
            raise TopologyError(f"node {node!r} is already down")
        return topology.replace(down=topology.down | {node})
    if node not in topology.down:
        raise TopologyError(f"node {node!r} is not down")
    return topology.replace(down=topology.down - {node})


def two_disjoint_paths(topology: Topology, gateways: Iterable[str]) -> bool:
    """True iff the vantage reaches a virtual prefix node, attached to every
    gateway in ``gateways``, over two paths sharing no intermediate node.

    Vertex capacities are handled by splitting each node into an in/out pair
    joined by a unit arc; two BFS augmentations decide max-flow >= 2.
    """
    gateways = set(gateways)
    if not gateways:
        raise ValueError("empty gateway set")
    s = topology.vantage
    for g in gateways:
        if not topology.has_node(g):
            raise NotFoundError(f"unknown gateway {g!r}")
        if g == s:
            raise TopologyError("a gateway cannot be the vantage router itself")
    adj = topology.adjacency()
    sink = ("prefix",)

    # residual capacities; nodes are (id, 0) for "in" and (id, 1) for "out"
    cap: dict = {}

    def arc(a, b, c):
        cap.setdefault(a, {})
        cap.setdefault(b, {})
        cap[a][b] = cap[a].get(b, 0) + c
        cap[b].setdefault(a, 0)

    for n in topology.nodes:
        if n in topology.down or n == s:
            continue
        arc((n, 0), (n, 1), 1)
    src = (s, 1)
    for u, arcs in adj.items():
        out = (u, 1)
        for v, _ in arcs:
            if v == s:
                continue
            arc(out, (v, 0), 1)
    for g in gateways:
        if g not in topology.down:
            arc((g, 1), sink, 1)
    if src not in cap or sink not in cap:
        return False

    flow = 0
    while flow < 2:
        parent = {src: None}
        queue = deque([src])
        while queue and sink not in parent:
            a = queue.popleft()
            for b, c in cap[a].items():
                if c > 0 and b not in parent:
                    parent[b] = a
                    queue.append(b)
        if sink not in parent:
            return False
        b = sink
        while parent[b] is not None:
            a = parent[b]
            cap[a][b] -= 1
            cap[b][a] += 1
            b = a
        flow += 1
    return True


def reachable(topology: Topology) -> set[str]:
    adj = topology.adjacency()
    seen = {topology.vantage}
    stack = [topology.vantage]
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def is_biconnected(topology: Topology, nodes: Iterable[str] | None = None) -> bool:
    """Whether the live graph restricted to ``nodes`` stays connected after
    removing any single node. Directed links count in both directions here."""
    nodes = set(topology.nodes if nodes is None else nodes) - topology.down
    if len(nodes) < 3:
        return False
    und = {n: set() for n in nodes}
    for link in topology.links:
        if topology.effective_weight(link) == INF:
            continue
        if link.u in nodes and link.v in nodes:
            und[link.u].add(link.v)
            und[link.v].add(link.u)

    def connected(without):
        rest = [n for n in nodes if n != without]
        seen = {rest[0]}
        stack = [rest[0]]
        while stack:
            u = stack.pop()
            for v in und[u]:
                if v != without and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(rest)

    return connected(None) and all(connected(n) for n in nodes)


@dataclass
class _Decl:
    nodes: dict = field(default_factory=dict)
    links: list = field(default_factory=list)
    vantage: str | None = None
    down: list = field(default_factory=list)


def parse_topology(text: str, source: str | None = None) -> Topology:
    """Parse the line-oriented topology format.

    ``node <id> [external]``, ``edge <u> <v> [<weight>|inf] [directed]``,
    ``vantage <id>`` and ``down <id>``. ``#`` starts a comment.
    """
    decl = _Decl()
    seen_links = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        head, args = words[0], words[1:]

        def fail(msg):
            raise ParseError(msg, lineno, source)

        if head == "node":
            if len(args) not in (1, 2) or (len(args) == 2 and args[1] != "external"):
                fail("expected: node <id> [external]")
            if args[0] in decl.nodes:
                fail(f"duplicate node {args[0]!r}")
            decl.nodes[args[0]] = len(args) == 2
        elif head == "edge":
            directed = bool(args) and args[-1] == "directed"
            if directed:
                args = args[:-1]
            if len(args) not in (2, 3):
                fail("expected: edge <u> <v> [<weight>] [directed]")
            u, v = args[0], args[1]
            for n in (u, v):
                if n not in decl.nodes:
                    fail(f"unknown node {n!r}")
            if len(args) == 2:
                w = 1
            elif args[2] == "inf":
                w = INF
            else:
                try:
                    w = int(args[2])
                except ValueError:
                    fail(f"invalid weight {args[2]!r}")
                if w < 1:
                    fail(f"weight must be >= 1, got {w}")
            key = link_key(u, v, directed)
            if key in seen_links or u == v:
                fail(f"duplicate or self link {u} {v}")
            seen_links.add(key)
            decl.links.append(Link(u, v, w, directed))
        elif head == "vantage":
            if len(args) != 1:
                fail("expected: vantage <id>")
            if args[0] not in decl.nodes:
                fail(f"unknown node {args[0]!r}")
            decl.vantage = args[0]
        elif head == "down":
            if len(args) != 1 or args[0] not in decl.nodes:
                fail("expected: down <known node id>")
            decl.down.append(args[0])
        else:
            fail(f"unknown declaration {head!r}")
    try:
        return Topology(decl.nodes, decl.links, decl.vantage, decl.down)
    except TopologyError as exc:
        raise ParseError(str(exc), None, source) from exc


class SingleFailures:
    """Lazily evaluates single link/node failures on a fixed topology.

    Used to check that a two-gateway protection set keeps naming the right
    backup for every failure that cuts the primary gateway off.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        self._cuts: dict[str, list[IgpEvent]] = {}
        self._dist: dict[IgpEvent, DistanceMap] = {}
        self._after: dict[IgpEvent, Topology] = {}

    def after(self, event: IgpEvent) -> Topology:
        if event not in self._after:
            self._after[event] = apply_event(self.topology, event)
        return self._after[event]

    def distances(self, event: IgpEvent) -> DistanceMap:
        if event not in self._dist:
            self._dist[event] = spf(self.after(event))
        return self._dist[event]

    def disconnecting(self, node: str) -> list[IgpEvent]:
        """Every single failure after which ``node`` is unreachable.

        Any such cut must hit the current shortest path, so only the nodes
        and links along it are tried.
        """
        if node in self._cuts:
            return self._cuts[node]
        topo = self.topology
        parent = {topo.vantage: None}
        queue = deque([topo.vantage])
        adj = topo.adjacency()
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        cuts: list[IgpEvent] = []
        if node in parent:
            path = [node]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            candidates = [IgpEvent.node_down(n) for n in path[1:]]
            for a, b in zip(path, path[1:]):
                link = topo.find_link(a, b)
                if link.directed:
                    candidates.append(IgpEvent.link_down(link.u, link.v))
                else:
                    candidates.append(IgpEvent.link_down(a, b))
            for event in candidates:
                if node not in reachable(self.after(event)):
                    cuts.append(event)
        self._cuts[node] = cuts
        return cuts
