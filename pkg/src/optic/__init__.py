"""Optimal-protecting gateway sets for BGP transit traffic across IGP events."""

from .analytics import (
    ClassBreakdown,
    Variant,
    class_expected,
    expected_distinct,
    lower_bound,
    median_set_size,
    monte_carlo_distinct,
    p_n,
)
from .bgp import BetaAttrs, MedMode, Rib, Route, alpha_of, beta_key, oracle_best, parse_rib
from .control_plane import LeafList, MedChain, MrSet, extract_opr
from .data_plane import MetaSet, OprEntry, OprSet, hash_opr, min_search, update_opr
from .engine import Engine, Options, RandomModelParams, RunReport, Scenario, generate_instance, run_scenario
from .graph import INF, IgpEvent, Link, Topology, apply_event, parse_topology, spf, two_disjoint_paths

__version__ = "0.1.0"
