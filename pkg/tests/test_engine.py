import math

import pytest

from optic.analytics import RandomModelParams, expected_distinct, monte_carlo_distinct
from optic.bgp import BetaAttrs, MedMode, Rib, Route, parse_rib
from optic.engine import (
    BgpEvent,
    Engine,
    Options,
    Scenario,
    generate_instance,
    parse_events,
    random_case,
    run_case,
    run_fuzz,
    run_scenario,
)
from optic.errors import NotFoundError, ParameterError, ParseError
from optic.graph import IgpEvent, Link, Topology, is_biconnected, parse_topology

ALL_OPTIONS = [
    Options(),
    Options(second_mr=True),
    Options(drop_med=True),
    Options(second_mr=True, drop_med=True),
    Options(med_mode=MedMode.IGNORE),
    Options(retain_unused=True),
]


def test_example_scenario(example_topology, example_rib, example_events):
    report = run_scenario(Scenario(example_topology, example_rib, example_events))
    boot, event = report.records
    assert boot.selected == {"p": "n1", "q": "n1"}
    assert boot.alpha["p"] == 4
    assert event.fast_path == {"p": "n3", "q": "n3"}
    assert event.alpha["p"] == 6
    assert (event.walked, event.recomputed) == (1, 0)
    assert report.passed
    text = report.text()
    assert "prefix p fast=n3 selected=n3 alpha=6 oracle=n3" in text
    assert text.rstrip().endswith("result=PASS")


def test_empty_event_list_reports_bootstrap_only(example_topology, example_rib):
    report = run_scenario(Scenario(example_topology, example_rib, []))
    assert len(report.records) == 1 and report.passed
    assert "events=0" in report.text()


def test_failing_node_a_falls_through_to_n3(example_topology, example_rib):
    engine = Engine(example_topology)
    engine.bootstrap(example_rib)
    rec = engine.igp_change(IgpEvent.node_down("a"), 1)
    assert rec.fast_path["p"] == "n3"
    assert rec.recomputed > 0
    assert rec.mismatches == 0
    engine.check_invariants()


def test_link_up_shrinks_oversized_sets():
    nodes = {"s": False, "a": False, "b": False, "g1": True, "g2": True, "g3": True}
    links = [Link("s", "a"), Link("s", "b"), Link("a", "g1"), Link("a", "g2"), Link("b", "g3")]
    t = Topology(nodes, links, "s")
    rib = Rib()
    for g, asp in (("g1", 1), ("g2", 1), ("g3", 2)):
        rib.add(Route("p", g, BetaAttrs(100, asp, 0, int(g[1])), int(g[1])))
    engine = Engine(t)
    engine.bootstrap(rib)
    assert engine.meta.get("p").gateways() == {"g1", "g2", "g3"}
    rec = engine.igp_change(IgpEvent.link_up("b", "g2", 1), 1)
    assert rec.recomputed == 1 and rec.mismatches == 0
    assert engine.meta.get("p").gateways() == {"g1", "g2"}


def test_weight_changes_cause_no_recomputation(example_topology, example_rib):
    engine = Engine(example_topology)
    engine.bootstrap(example_rib)
    calls = engine.extract_calls
    for u, v, w in (("s", "a", 4), ("c", "r1", 3), ("s", "d", 1)):
        rec = engine.igp_change(IgpEvent.weight_change(u, v, w))
        assert rec.mismatches == 0
    assert engine.extract_calls == calls


# -- BGP updates ---------------------------------------------------------------


def _example_engine(example_topology, example_rib, **kw):
    engine = Engine(example_topology, Options(**kw))
    engine.bootstrap(example_rib)
    return engine


def test_adding_a_worse_route_leaves_data_plane_alone(example_topology, example_rib):
    engine = _example_engine(example_topology, example_rib)
    key = engine.meta.p_bgp["p"]
    calls = engine.extract_calls
    worse = Route("p", "n3", BetaAttrs(50, 9, 2, 70000), 99)
    assert engine.bgp_update(worse) is False
    assert engine.extract_calls == calls and engine.meta.p_bgp["p"] == key


def test_withdrawing_the_selected_route(example_topology, example_rib):
    engine = _example_engine(example_topology, example_rib)
    n1 = next(r for r in example_rib.routes("p") if r.gateway == "n1")
    assert engine.bgp_update(n1, withdraw=True) is True
    assert engine.selected("p") == engine.oracle("p") == "n2"


def test_first_route_of_a_prefix_creates_a_set(example_topology, example_rib):
    engine = _example_engine(example_topology, example_rib)
    before = len(engine.meta)
    assert "z" not in engine.meta.p_bgp
    engine.bgp_update(Route("z", "n3", BetaAttrs(100, 1, 0, 1), 3))
    assert "z" in engine.meta.p_bgp and len(engine.meta) == before + 1
    assert engine.selected("z") == "n3"


def test_withdrawing_an_unknown_route(example_topology, example_rib):
    engine = _example_engine(example_topology, example_rib)
    with pytest.raises(NotFoundError):
        engine.bgp_update(Route("p", "n3", BetaAttrs(0, 0, 0, 1), 0), withdraw=True)
    with pytest.raises(NotFoundError):
        engine.bgp_update(Route("nope", "n3", BetaAttrs(0, 0, 0, 1), 0), withdraw=True)


def test_withdrawing_every_route_forgets_the_prefix(example_topology, example_rib):
    engine = _example_engine(example_topology, example_rib)
    for r in example_rib.routes("q"):
        engine.bgp_update(r, withdraw=True)
    assert "q" not in engine.meta.p_bgp and "q" not in engine.trees
    engine.check_invariants()


def test_bgp_events_in_scenarios(example_topology, example_rib):
    text = (
        "event bgp-withdraw p n1 65001\n"
        "event bgp-add route p n1 lp=300 aspath=1 origin=0 as=65001\n"
        "event node-down a\n"
        "event node-up a\n"
        "event weight s d 1\n"
        "event link-down s d\n"
        "event link-up s d 3\n"
    )
    events = parse_events(text, example_topology)
    for opts in ALL_OPTIONS:
        report = run_scenario(Scenario(example_topology, example_rib, events), opts)
        assert report.passed, opts


@pytest.mark.parametrize(
    "line",
    ["event link-down a zz", "event weight s a x", "event teleport s", "event node-down", "link-down s a",
     "event link-up s a 0"],
)
def test_event_parse_errors(example_topology, line):
    with pytest.raises(ParseError):
        parse_events("\n" + line + "\n", example_topology, "x.scenario")


def test_incremental_and_batched_bootstrap_agree():
    case = random_case(3, 11)
    batched = Engine(case.topology)
    batched.bootstrap(case.rib)
    stepwise = Engine(case.topology)
    for r in case.rib:
        stepwise.bgp_update(r)
    assert {p: batched.meta.get(p).content() for p in batched.meta.p_bgp} == {
        p: stepwise.meta.get(p).content() for p in stepwise.meta.p_bgp
    }


# -- fuzzing -------------------------------------------------------------------


@pytest.mark.parametrize("opts", ALL_OPTIONS, ids=lambda o: f"{o.label()}-{o.med_mode.value}-{o.retain_unused}")
def test_fuzz_protection_holds_for_every_option_mix(opts):
    results = run_fuzz(60, seed=7, options=[opts])
    assert sum(r.mismatches for r in results) == 0
    assert sum(r.checked for r in results) > 0


def test_fuzz_covers_gateway_failures_and_every_event_kind():
    kinds = set()
    gateway_failures = 0
    for i in range(200):
        case = random_case(i, 0)
        kinds.add(case.event.kind)
        if case.event.kind == "node-down" and any(r.gateway == case.event.target for r in case.rib):
            gateway_failures += 1
    assert kinds == {"weight-change", "link-down", "link-up", "node-down", "node-up"}
    assert gateway_failures > 0


def test_fuzz_is_deterministic():
    assert run_fuzz(15, seed=3) == run_fuzz(15, seed=3)
    assert run_fuzz(15, seed=3) != run_fuzz(15, seed=4)


def test_invariants_hold_after_fuzzed_events():
    for i in range(30):
        case = random_case(i, 21)
        for opts in (Options(), Options(True, True)):
            engine = Engine(case.topology, opts)
            engine.bootstrap(case.rib)
            engine.igp_change(case.event)
            engine.check_invariants()
            for p in engine.meta.p_bgp:
                assert len(engine.meta.prefixes(engine.meta.p_bgp[p])) >= 1


def test_scenario_runs_are_deterministic(example_topology, example_rib, example_events):
    a = run_scenario(Scenario(example_topology, example_rib, example_events)).text()
    b = run_scenario(Scenario(example_topology, example_rib, example_events)).text()
    assert a == b


def test_run_case_reports_weight_only_stability():
    for i in range(80):
        case = random_case(i, 5)
        if case.event.kind == "weight-change" and case.biconnected:
            assert run_case(case, Options()).recomputed == 0


# -- generated instances --------------------------------------------------------


def test_generator_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        RandomModelParams(B=3, P=10, ps=2, b=4)
    with pytest.raises(ParameterError):
        RandomModelParams(B=3, P=10, ps=0, b=2)
    with pytest.raises(ParameterError):
        RandomModelParams(B=5, P=10, ps=2, b=2, classes=((2, 5), (3, 4)))


def test_full_ties_give_a_single_set():
    topo, rib = generate_instance(RandomModelParams(B=6, P=50, ps=1, b=6, seed=1))
    engine = Engine(topo)
    engine.bootstrap(rib)
    assert len(engine.meta) == 1
    assert engine.meta.table[next(iter(engine.meta.table))].gateways() == {f"g{i}" for i in range(6)}


def test_classes_use_disjoint_pools():
    params = RandomModelParams(B=10, P=40, ps=3, b=3, classes=((4, 30), (6, 10)), seed=2)
    topo, rib = generate_instance(params)
    assert is_biconnected(topo, [n for n in topo.nodes if not topo.is_external(n)])
    pools = {}
    for r in rib:
        pools.setdefault(r.beta.local_pref, set()).add(r.gateway)
    assert set(pools) == {1, 2}
    assert not pools[1] & pools[2]
    assert pools[1] <= {f"g{i}" for i in range(4)}


def test_generator_is_deterministic():
    params = RandomModelParams(B=8, P=30, ps=3, b=4, seed=9)
    a, b = generate_instance(params), generate_instance(params)
    assert a[0] == b[0] and list(a[1]) == list(b[1])


@pytest.mark.parametrize("variant, opts", [("plain", Options()), ("optimized", Options(second_mr=True))])
def test_engine_counts_agree_with_the_model(variant, opts):
    params = RandomModelParams(B=20, P=10_000, ps=5, b=5, seed=4)
    topo, rib = generate_instance(params)
    engine = Engine(topo, opts)
    engine.bootstrap(rib)
    assert sum(engine.selected(p) != engine.oracle(p) for p in engine.trees) == 0
    spread = monte_carlo_distinct(params, 40, variant)
    sd = spread.stderr * math.sqrt(40)
    model = expected_distinct(20, 10_000, 5, 5, variant).total
    assert abs(engine.distinct_gateway_sets() - model) < 4 * sd


def test_topology_file_with_parallel_directed_link_is_rejected():
    with pytest.raises(ParseError):
        parse_topology("node s\nnode a\nedge s a 1\nedge s a 1 directed\nvantage s\n")


def test_rib_file_referencing_unknown_gateway(example_topology):
    with pytest.raises(ParseError):
        parse_rib("route p zz lp=1 aspath=1 origin=0 as=1\n", example_topology)
