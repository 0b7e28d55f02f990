"""Event orchestration: BGP updates, IGP changes, scenarios and fuzzing.

Every event is cross-checked against the reference decision process for
every prefix, which is affordable at desk scale and is what makes a run
PASS or FAIL.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .analytics import RandomModelParams
from .bgp import BetaAttrs, MedMode, Rib, Route, alpha_of, format_route, parse_route, select_best
from .control_plane import LeafList, select_groups
from .data_plane import MetaSet, OprSet, SetExhausted, min_search, update_opr
from .errors import NotFoundError, ParseError
from .graph import (
    INF,
    IgpEvent,
    Link,
    SingleFailures,
    Topology,
    apply_event,
    is_biconnected,
    spf,
    two_disjoint_paths,
)


@dataclass(frozen=True)
class Options:
    second_mr: bool = False
    drop_med: bool = False
    med_mode: MedMode = MedMode.DEFAULT
    retain_unused: bool = False

    def label(self) -> str:
        flags = [n for n, on in (("second-mr", self.second_mr), ("drop-med", self.drop_med)) if on]
        return "+".join(flags) or "plain"


@dataclass(frozen=True)
class BgpEvent:
    route: Route
    withdraw: bool = False

    def __str__(self):
        if self.withdraw:
            r = self.route
            return f"bgp-withdraw {r.prefix} {r.gateway} {r.origin_as}"
        return "bgp-add " + format_route(self.route).removeprefix("route ")


@dataclass
class EventRecord:
    index: int
    event: str
    walked: int = 0
    recomputed: int = 0
    opr_count: int = 0
    sizes: dict[int, int] = field(default_factory=dict)
    fast_path: dict[str, str | None] = field(default_factory=dict)
    selected: dict[str, str | None] = field(default_factory=dict)
    oracle: dict[str, str | None] = field(default_factory=dict)
    alpha: dict[str, float] = field(default_factory=dict)
    mismatches: int = 0

    def lines(self) -> list[str]:
        sizes = ",".join(f"{n}:{c}" for n, c in sorted(self.sizes.items()))
        out = [
            f"event {self.index} {self.event}: walked={self.walked} recomputed={self.recomputed} "
            f"oprs={self.opr_count} sizes={sizes or '-'} mismatches={self.mismatches}"
        ]
        for p in sorted(self.oracle):
            fast = self.fast_path.get(p, self.selected.get(p))
            a = self.alpha.get(p, INF)
            out.append(
                f"  prefix {p} fast={fast or '-'} selected={self.selected.get(p) or '-'} "
                f"alpha={'-' if a == INF else a} oracle={self.oracle[p] or '-'}"
            )
        return out


@dataclass
class RunReport:
    records: list[EventRecord] = field(default_factory=list)

    @property
    def mismatches(self) -> int:
        return sum(r.mismatches for r in self.records)

    @property
    def passed(self) -> bool:
        return self.mismatches == 0

    def lines(self) -> list[str]:
        out = []
        for r in self.records:
            out.extend(r.lines())
        last = self.records[-1] if self.records else None
        out += [
            "summary",
            f"  events={max(len(self.records) - 1, 0)}",
            f"  walked={sum(r.walked for r in self.records)}",
            f"  recomputed_after_bootstrap={sum(r.recomputed for r in self.records[1:])}",
            f"  final_oprs={last.opr_count if last else 0}",
            f"  mismatches={self.mismatches}",
            f"  result={'PASS' if self.passed else 'FAIL'}",
        ]
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


class Engine:
    """Control plane, data plane and IGP view of one vantage router."""

    def __init__(self, topology: Topology, options: Options | None = None):
        self.options = options or Options()
        self.meta = MetaSet(retain_unused=self.options.retain_unused)
        self.trees: dict[str, LeafList] = {}
        self.extract_calls = 0
        self._set_topology(topology)

    def _set_topology(self, topology: Topology):
        self.topology = topology
        self.dist = spf(topology)
        self._disjoint_cache: dict[frozenset, bool] = {}
        self._failures = SingleFailures(topology)

    def _disjoint(self, topology, gateways) -> bool:
        key = frozenset(gateways)
        hit = self._disjoint_cache.get(key)
        if hit is None:
            hit = self._disjoint_cache[key] = two_disjoint_paths(topology, key)
        return hit

    # -- set maintenance ------------------------------------------------------
    def _update(self, prefix: str):
        leaves = self.trees.get(prefix, LeafList(self.options.med_mode))
        old = self.meta.p_bgp.get(prefix)
        if len(leaves):
            self.extract_calls += 1
        update_opr(
            leaves,
            self.meta,
            old,
            prefix,
            self.topology,
            self.dist,
            second_mr=self.options.second_mr,
            drop_med=self.options.drop_med,
            disjoint=self._disjoint,
            failures=self._failures,
        )
        if not len(leaves):
            self.trees.pop(prefix, None)

    def _useful(self, prefix: str, rank: int) -> bool:
        current = self.meta.get(prefix)
        if current is None:
            return True
        return rank <= current.x or not current.protected

    # -- BGP updates -----------------------------------------------------
    def bgp_update(self, route: Route, withdraw: bool = False) -> bool:
        """Add or withdraw ``route``. Returns True if the data plane changed
        (i.e. the OPR set of the prefix was recomputed)."""
        leaves = self.trees.get(route.prefix)
        if withdraw:
            if leaves is None:
                raise NotFoundError(f"route {route.key} not present")
            found = leaves.find(*route.key)
            if found is None:
                raise NotFoundError(f"route {route.key} not present")
            rank = leaves.remove_route(found)
        else:
            if leaves is None:
                leaves = self.trees[route.prefix] = LeafList(self.options.med_mode)
            rank = leaves.insert_route(route)
        if self._useful(route.prefix, rank):
            self._update(route.prefix)
            return True
        if not len(leaves):
            self.trees.pop(route.prefix, None)
        return False

    def bootstrap(self, rib: Iterable[Route]):
        """Feed every route through the BGP update path, deferring the OPR
        recomputations to one per touched prefix. The extraction only
        depends on the final leaf list, so the end state is the same as
        updating after each route."""
        dirty: dict[str, None] = {}
        for route in rib:
            leaves = self.trees.get(route.prefix)
            if leaves is None:
                leaves = self.trees[route.prefix] = LeafList(self.options.med_mode)
            rank = leaves.insert_route(route)
            if self._useful(route.prefix, rank):
                dirty[route.prefix] = None
        for prefix in dirty:
            self._update(prefix)

    # -- IGP changes -----------------------------------------------------
    def _stable(self, oprset: OprSet) -> bool:
        """Still protecting and minimal on the current topology."""
        if oprset.mode == "second-mr":
            # the rest of M_2 lives in the per-prefix trees only
            return False
        chains, protected, _, _ = select_groups(
            oprset.groups(),
            self.topology,
            self.dist,
            med_mode=self.options.med_mode,
            second_mr=self.options.second_mr,
            drop_med=self.options.drop_med,
            disjoint=self._disjoint,
            failures=self._failures,
        )
        return protected and OprSet(chains, med_mode=oprset.med_mode) == oprset

    def igp_change(self, event: IgpEvent, index: int = 0) -> EventRecord:
        before = self.topology
        weight_only = event.kind == "weight-change"
        self._set_topology(apply_event(before, event))
        record = EventRecord(index, str(event))

        # fast path: one walk over the distinct OPR sets
        for oprset in self.meta.table.values():
            oprset.refresh(self.dist)
            try:
                min_search(oprset)
            except SetExhausted:
                pass
            record.walked += 1
        record.fast_path = self.data_plane_choices()

        # background: only when connectivity may have changed
        queued = []
        if not weight_only:
            for key, oprset in self.meta.table.items():
                if not self._stable(oprset):
                    queued.append(key)
        calls = self.extract_calls
        for key in queued:
            for prefix in self.meta.prefixes(key):
                self._update(prefix)
        record.recomputed = self.extract_calls - calls
        self._finish(record)
        return record

    # -- inspection --------------------------------------------------------
    def selected(self, prefix: str) -> str | None:
        oprset = self.meta.get(prefix)
        if oprset is None or oprset.top is None:
            return None
        return oprset.top.gateway

    def data_plane_choices(self) -> dict[str, str | None]:
        return {p: self.selected(p) for p in self.meta.p_bgp}

    def oracle(self, prefix: str) -> str | None:
        leaves = self.trees.get(prefix)
        if leaves is None:
            return None
        best = select_best(leaves.routes(), self.dist, self.options.med_mode)
        return None if best is None else best.gateway

    def rib(self) -> Rib:
        rib = Rib()
        for leaves in self.trees.values():
            for r in leaves.routes():
                rib.add(r)
        return rib

    def distinct_gateway_sets(self) -> int:
        """Distinct OPR sets once route attributes are projected away,
        which is what the counting model predicts."""
        return len({frozenset(o.gateways()) for o in self.meta.table.values()})

    def size_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(len(o) for o in self.meta.table.values()).items()))

    def _finish(self, record: EventRecord):
        record.selected = self.data_plane_choices()
        for p in record.selected:
            top = self.meta.get(p).top
            record.alpha[p] = INF if top is None else alpha_of(top, self.dist)
        record.oracle = {p: self.oracle(p) for p in sorted(self.trees)}
        record.opr_count = len(self.meta)
        record.sizes = self.size_histogram()
        bad = 0
        for p, want in record.oracle.items():
            if record.selected.get(p) != want:
                bad += 1
            elif record.fast_path and record.fast_path.get(p, want) != want:
                bad += 1
        record.mismatches = bad

    def apply(self, event, index: int = 0) -> EventRecord:
        if isinstance(event, IgpEvent):
            return self.igp_change(event, index)
        calls = self.extract_calls
        self.bgp_update(event.route, event.withdraw)
        record = EventRecord(index, str(event), recomputed=self.extract_calls - calls)
        self._finish(record)
        return record

    def check_invariants(self):
        """Assert the meta-set bookkeeping invariants; used by the tests."""
        for p, key in self.meta.p_bgp.items():
            assert key in self.meta.table, p
        if not self.options.retain_unused:
            for key in self.meta.table:
                assert self.meta.prefixes(key), key
        for key, oprset in self.meta.table.items():
            for e in oprset.entries:
                cached = e.alpha
                e.refresh(self.dist)
                assert cached == e.alpha, (key, e.routes)


# -- scenarios -------------------------------------------------------------


@dataclass
class Scenario:
    topology: Topology
    rib: Rib
    events: list = field(default_factory=list)
    seed: int = 0


def parse_events(text: str, topology: Topology, source: str | None = None) -> list:
    """Parse ``event ...`` lines (see README for the grammar)."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] != "event" or len(words) < 2:
            raise ParseError("expected: event <kind> ...", lineno, source)
        kind, args = words[1], words[2:]

        def need(n):
            if len(args) != n:
                raise ParseError(f"event {kind} takes {n} argument(s)", lineno, source)

        def node(n):
            if not topology.has_node(n):
                raise ParseError(f"unknown node {n!r}", lineno, source)
            return n

        def integer(s):
            try:
                return int(s)
            except ValueError:
                raise ParseError(f"expected an integer, got {s!r}", lineno, source) from None

        try:
            if kind == "link-down":
                need(2)
                events.append(IgpEvent.link_down(node(args[0]), node(args[1])))
            elif kind == "weight":
                need(3)
                events.append(IgpEvent.weight_change(node(args[0]), node(args[1]), integer(args[2])))
            elif kind == "link-up":
                need(3)
                events.append(IgpEvent.link_up(node(args[0]), node(args[1]), integer(args[2])))
            elif kind == "node-down":
                need(1)
                events.append(IgpEvent.node_down(node(args[0])))
            elif kind == "node-up":
                need(1)
                events.append(IgpEvent.node_up(node(args[0])))
            elif kind == "bgp-add":
                events.append(BgpEvent(parse_route(args, topology, lineno, source)))
            elif kind == "bgp-withdraw":
                need(3)
                placeholder = BetaAttrs(0, 0, 0, integer(args[2]))
                events.append(BgpEvent(Route(args[0], node(args[1]), placeholder, 0), withdraw=True))
            else:
                raise ParseError(f"unknown event kind {kind!r}", lineno, source)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno, source) from None
    return events


def run_scenario(scenario: Scenario, options: Options | None = None) -> RunReport:
    engine = Engine(scenario.topology, options)
    report = RunReport()
    calls = engine.extract_calls
    engine.bootstrap(scenario.rib)
    record = EventRecord(0, "bootstrap", recomputed=engine.extract_calls - calls)
    engine._finish(record)
    report.records.append(record)
    for i, event in enumerate(scenario.events, start=1):
        report.records.append(engine.apply(event, i))
    return report


# -- random instances --------------------------------------------------------


def biconnected_backbone(rng: random.Random, n: int, chords: int, max_weight: int = 10) -> list[Link]:
    """Ring over r0..r{n-1} plus random chords; 2-node-connected for n >= 3."""
    names = [f"r{i}" for i in range(n)]
    links = {}
    for i in range(n):
        a, b = names[i], names[(i + 1) % n]
        links[frozenset((a, b))] = Link(a, b, rng.randint(1, max_weight))
    for _ in range(chords):
        a, b = rng.sample(names, 2)
        if frozenset((a, b)) not in links:
            links[frozenset((a, b))] = Link(a, b, rng.randint(1, max_weight))
    return list(links.values())


def generate_instance(params: RandomModelParams, backbone_size: int | None = None) -> tuple[Topology, Rib]:
    """Synthesize a topology and RIB following the uniform-weight model.

    Each gateway is an external node dual-homed to two backbone routers over
    links directed towards it, so no internal path transits a gateway and
    any two gateways are protecting. A prefix draws a uniform b-subset of
    its class's gateways and gives each one an AS-path length uniform in
    1..ps; the class index is the local-pref.
    """
    rng = random.Random(params.seed)
    n = backbone_size or max(8, min(40, params.B))
    links = biconnected_backbone(rng, n, chords=n // 2)
    nodes = {f"r{i}": False for i in range(n)}
    gateways = [f"g{i}" for i in range(params.B)]
    for g in gateways:
        nodes[g] = True
        for r in rng.sample(range(n), 2):
            links.append(Link(f"r{r}", g, rng.randint(1, 10), directed=True))
    topology = Topology(nodes, links, "r0")
    if not is_biconnected(topology, [f"r{i}" for i in range(n)]):
        raise AssertionError("backbone generator produced a non-biconnected ring")

    classes = params.classes or ((params.B, params.P),)
    rib = Rib()
    start = 0
    pfx = 0
    for rank, (b_i, p_i) in enumerate(classes, start=1):
        pool = gateways[start : start + b_i]
        start += b_i
        k = min(params.b, len(pool))
        for _ in range(p_i):
            prefix = f"p{pfx}"
            pfx += 1
            for g in rng.sample(pool, k):
                weight = rng.randint(1, params.ps)
                beta = BetaAttrs(rank, weight, 0, 64512 + gateways.index(g))
                rib.add(Route(prefix, g, beta, topology.number(g)))
    return topology, rib


@dataclass
class FuzzCase:
    case_id: int
    topology: Topology
    rib: Rib
    event: IgpEvent
    biconnected: bool


def random_case(case_id: int, seed: int = 0) -> FuzzCase:
    """One fuzz instance: 8-40 backbone routers, 3-10 gateways, 20-200
    prefixes with MED chains, and one random single IGP event."""
    rng = random.Random(f"{seed}:{case_id}")
    n = rng.randint(8, 40)
    links = biconnected_backbone(rng, n, chords=rng.randint(0, n))
    nodes = {f"r{i}": False for i in range(n)}
    routers = list(nodes)
    n_gw = rng.randint(3, 10)
    gateways = []
    for i in range(n_gw):
        if rng.random() < 0.15:
            # next-hop-self: the gateway is a border router of the backbone
            g = rng.choice([r for r in routers[1:] if r not in gateways])
        else:
            g = f"g{i}"
            nodes[g] = True
            homes = rng.sample(routers, 2 if rng.random() < 0.5 else 1)
            for h in homes:
                links.append(Link(h, g, rng.randint(1, 10), directed=rng.random() < 0.5))
        gateways.append(g)

    down = []
    bicon = True
    if rng.random() < 0.1:
        down = [rng.choice(routers[1:] + [g for g in gateways if g not in routers])]
        bicon = False
    topology = Topology(nodes, links, "r0", down)

    # small AS pool so that MED chains appear
    as_of = {g: rng.randint(1, max(2, n_gw // 2)) for g in gateways}
    rib = Rib()
    for p in range(rng.randint(20, 200)):
        prefix = f"p{p}"
        for g in rng.sample(gateways, rng.randint(1, min(6, n_gw))):
            med = rng.choice([None, 0, 10, 20])
            beta = BetaAttrs(rng.choice([100, 100, 200]), rng.randint(1, 3), rng.choice([0, 0, 1]), as_of[g], med)
            ebgp = topology.find_link("r0", g) is not None and rng.random() < 0.5
            rib.add(Route(prefix, g, beta, topology.number(g), ebgp))

    event = _random_event(rng, topology, gateways, down)
    return FuzzCase(case_id, topology, rib, event, bicon)


def _random_event(rng: random.Random, topology: Topology, gateways, down) -> IgpEvent:
    if down:
        return IgpEvent.node_up(down[0])
    live = [l for l in topology.links if topology.effective_weight(l) != float("inf")]
    kind = rng.choice(["weight", "weight", "link-down", "node-down", "gateway-down", "link-up"])
    if kind == "weight":
        link = rng.choice(live)
        return IgpEvent.weight_change(link.u, link.v, rng.randint(1, 20))
    if kind == "link-down":
        link = rng.choice(live)
        return IgpEvent.link_down(link.u, link.v)
    if kind == "node-down":
        return IgpEvent.node_down(rng.choice([n for n in topology.nodes if n != topology.vantage]))
    if kind == "gateway-down":
        return IgpEvent.node_down(rng.choice(gateways))
    internal = [n for n in topology.nodes if not topology.is_external(n)]
    for _ in range(50):
        a, b = rng.sample(internal, 2)
        if topology.find_link(a, b) is None and topology.find_link(b, a) is None:
            return IgpEvent.link_up(a, b, rng.randint(1, 10))
    link = rng.choice(live)
    return IgpEvent.weight_change(link.u, link.v, rng.randint(1, 20))


@dataclass
class FuzzResult:
    case_id: int
    event: str
    options: str
    prefixes: int
    checked: int
    mismatches: int
    recomputed: int
    weight_only: bool
    biconnected: bool


def run_case(case: FuzzCase, options: Options) -> FuzzResult:
    engine = Engine(case.topology, options)
    engine.bootstrap(case.rib)
    record = engine.igp_change(case.event, 1)
    checked = sum(1 for want in record.oracle.values() if want is not None)
    return FuzzResult(
        case.case_id,
        str(case.event),
        options.label(),
        len(record.oracle),
        checked,
        record.mismatches,
        record.recomputed,
        case.event.kind == "weight-change",
        case.biconnected,
    )


def _fuzz_one(args):
    case_id, seed, options = args
    return run_case(random_case(case_id, seed), options)


def run_fuzz(cases: int, seed: int = 0, options: Sequence[Options] = (Options(),), jobs: int = 1) -> list[FuzzResult]:
    work = [(i, seed, o) for i in range(cases) for o in options]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_fuzz_one, work, chunksize=16))
    return [_fuzz_one(w) for w in work]
