"""Command-line front end.

Exit codes: 0 on success or PASS, 1 when a run finds an oracle mismatch,
2 on usage, parse or parameter errors.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import sys
from importlib.resources import files
from pathlib import Path

from . import analytics
from .analytics import ClassBreakdown, RandomModelParams, Variant
from .bgp import MedMode, parse_rib
from .engine import Engine, Options, Scenario, parse_events, run_fuzz, run_scenario
from .errors import OpticError
from .graph import parse_topology

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
EXAMPLES = ("fig2",)


class UsageError(Exception):
    pass


# -- input loading -------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _sources(args) -> tuple[tuple[str, str], tuple[str, str], tuple[str, str] | None]:
    """(name, text) for topology, RIB and optional scenario."""
    if args.example:
        data = files("optic") / "data"
        name = args.example
        return (
            (f"{name}.topo", (data / f"{name}.topo").read_text(encoding="utf-8")),
            (f"{name}.rib", (data / f"{name}.rib").read_text(encoding="utf-8")),
            (f"{name}.scenario", (data / f"{name}.scenario").read_text(encoding="utf-8")),
        )
    if not (args.topology and args.rib):
        raise UsageError("give --example or both --topology and --rib")
    scenario = (args.scenario, _read(args.scenario)) if args.scenario else None
    return (args.topology, _read(args.topology)), (args.rib, _read(args.rib)), scenario


def load_scenario(args) -> Scenario:
    (tname, ttext), (rname, rtext), scen = _sources(args)
    topology = parse_topology(ttext, tname)
    rib = parse_rib(rtext, topology, rname)
    events = parse_events(scen[1], topology, scen[0]) if scen else []
    return Scenario(topology, rib, events, args.seed)


def options_from(args) -> Options:
    return Options(
        second_mr=args.second_mr,
        drop_med=args.drop_med,
        med_mode=MedMode(args.med),
        retain_unused=args.retain_unused_opr,
    )


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
        return
    buf = io.StringIO()
    yield buf
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


# -- simulate / dump-state -----------------------------------------------------


def fuzz_lines(results, cases: int, seed: int) -> tuple[list[str], bool]:
    lines = []
    for r in results:
        lines.append(
            f"case {r.case_id} [{r.options}] {r.event}: prefixes={r.prefixes} checked={r.checked} "
            f"recomputed={r.recomputed} mismatches={r.mismatches}"
        )
    bad = sum(r.mismatches for r in results)
    failing = sorted({r.case_id for r in results if r.mismatches})
    stable = [r for r in results if r.weight_only and r.biconnected]
    unstable = sum(r.recomputed for r in stable)
    ok = bad == 0 and unstable == 0
    lines += [
        "summary",
        f"  cases={cases} seed={seed} runs={len(results)}",
        f"  checked_prefixes={sum(r.checked for r in results)}",
        f"  mismatches={bad} failing_cases={len(failing)}",
        f"  weight_only_runs={len(stable)} recomputed_on_weight_only={unstable}",
        f"  result={'PASS' if ok else 'FAIL'}",
    ]
    return lines, ok


def cmd_simulate(args) -> int:
    if args.fuzz is not None:
        if args.fuzz < 1:
            raise UsageError("--fuzz needs a positive case count")
        if args.both:
            opts = [Options(med_mode=MedMode(args.med)), Options(True, True, MedMode(args.med))]
        else:
            opts = [options_from(args)]
        results = run_fuzz(args.fuzz, args.seed, opts, args.jobs)
        lines, ok = fuzz_lines(results, args.fuzz, args.seed)
        with _output(args.output) as out:
            out.write("\n".join(lines) + "\n")
        return EXIT_OK if ok else EXIT_FAIL
    report = run_scenario(load_scenario(args), options_from(args))
    with _output(args.output) as out:
        out.write(report.text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_dump_state(args) -> int:
    scenario = load_scenario(args)
    engine = Engine(scenario.topology, options_from(args))
    engine.bootstrap(scenario.rib)
    for i, event in enumerate(scenario.events, start=1):
        engine.apply(event, i)
    lines = [f"vantage {scenario.topology.vantage}"]
    lines += engine.meta.dump_lines()
    for p in sorted(engine.meta.p_bgp):
        key = engine.meta.p_bgp[p]
        lines.append(f"prefix {p} opr={key:016x} top={engine.selected(p) or '-'} oracle={engine.oracle(p) or '-'}")
    with _output(args.output) as out:
        out.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- model ---------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"expected a comma list of integers, got {text!r}") from None


def _range(text: str) -> list[float]:
    """``a:b[:step]`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1.0
            if step <= 0:
                raise ValueError
            out, v = [], start
            while v <= stop + 1e-9:
                out.append(v)
                v = start + step * len(out)
            return out
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"bad range {text!r}; use a:b[:step] or a,b,c") from None


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def _emit_table(out, header, rows, as_csv: bool):
    if as_csv:
        analytics.write_csv(out, header, rows)
        return
    cells = [list(header)] + [[v if isinstance(v, str) else analytics.format_number(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        out.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def _breakdown(args) -> ClassBreakdown:
    if args.preset:
        return analytics.REFERENCE_ROWS[args.preset].breakdown
    if not (args.gateways and args.prefixes):
        raise UsageError("give --preset or both --gateways and --prefixes")
    return ClassBreakdown(_int_list(args.gateways), _int_list(args.prefixes), args.ps, args.b)


def cmd_model(args) -> int:
    kind = args.model
    with _output(args.output) as out:
        if kind == "expected":
            if args.preset or args.gateways:
                est = analytics.class_expected(_breakdown(args), args.variant)
            else:
                est = analytics.expected_distinct(args.B, args.P, args.ps, args.b, args.variant)
            rows = [(n, v) for n, v in est.by_size.items()]
            rows.append(("total", est.total))
            rows.append(("median", analytics.median_of(est.by_size)))
            _emit_table(out, ("size", "expected_distinct"), rows, args.csv)
        elif kind == "table2":
            rows = [
                (
                    r["name"],
                    r["distinct"],
                    r["distinct_ref"],
                    r["distinct_err"],
                    r["lower"],
                    r["lower_ref"],
                    r["lower_err"],
                    r["median"],
                    r["median_ref"],
                )
                for r in analytics.reference_rows(args.variant)
            ]
            header = ("row", "distinct", "distinct_ref", "distinct_err", "lower", "lower_ref", "lower_err", "median", "median_ref")
            _emit_table(out, header, rows, args.csv)
        elif kind == "lower-bound":
            _emit_table(out, ("lower_bound",), [(analytics.lower_bound(_breakdown(args)),)], args.csv)
        elif kind == "sweep-delta":
            rows = analytics.sweep_delta(args.B, [_num(d) for d in _range(args.deltas)], args.P)
            _emit_table(out, ("delta",) + analytics.SWEEP_HEADER[1:], rows, args.csv)
        elif kind == "sweep-gateways":
            rows = analytics.sweep_gateways([int(b) for b in _range(args.Bs)], args.delta, args.P)
            _emit_table(out, ("B",) + analytics.SWEEP_HEADER[1:], rows, args.csv)
        elif kind == "montecarlo":
            params = RandomModelParams(args.B, int(args.P), args.ps, args.b, seed=args.seed)
            mc = analytics.monte_carlo_distinct(params, args.trials, args.variant)
            model = analytics.expected_distinct(args.B, args.P, args.ps, args.b, args.variant)
            out.write(
                f"montecarlo {Variant(args.variant).value} B={args.B} P={int(args.P)} ps={args.ps} b={args.b} "
                f"trials={args.trials} seed={args.seed}\n"
                f"mean={mc.mean:.4f} stderr={mc.stderr:.4f} expected={model.total:.4f}\n"
            )
            for n, f in mc.size_freq.items():
                out.write(f"size {n} empirical={f:.6f} model={analytics.p_n(args.b, args.ps, n, args.variant):.6f}\n")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def _add_inputs(p):
    p.add_argument("--example", choices=EXAMPLES, help="use a bundled example")
    p.add_argument("--topology", help="topology file")
    p.add_argument("--rib", help="RIB file")
    p.add_argument("--scenario", help="event file")
    p.add_argument("--second-mr", action="store_true", help="keep one gateway of the second MR set when possible")
    p.add_argument("--drop-med", action="store_true", help="omit MED-chain entries that cannot be needed")
    p.add_argument("--med", choices=[m.value for m in MedMode], default="default", help="missing-MED handling")
    p.add_argument("--retain-unused-opr", action="store_true", help="keep OPR sets no prefix points to")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario or a fuzz corpus against the oracle")
    _add_inputs(sim)
    sim.add_argument("--fuzz", type=int, metavar="N", help="run N generated cases instead of a scenario")
    sim.add_argument("--both", action="store_true", help="with --fuzz, run all options off and all on")
    sim.add_argument("--jobs", type=int, default=1, help="parallel fuzz workers")
    sim.set_defaults(func=cmd_simulate)

    dump = sub.add_parser("dump-state", help="print the OPR sets after bootstrap and events")
    _add_inputs(dump)
    dump.set_defaults(func=cmd_dump_state)

    model = sub.add_parser("model", help="evaluate the distinct-set model")
    model.add_argument(
        "model", choices=["expected", "table2", "lower-bound", "sweep-delta", "sweep-gateways", "montecarlo"]
    )
    model.add_argument("--variant", choices=[v.value for v in Variant], default=None)
    model.add_argument("--B", type=int, default=None, help="gateway count")
    model.add_argument("--P", type=float, default=None, help="prefix count")
    model.add_argument("--ps", type=int, default=5, help="policy spreading")
    model.add_argument("--b", type=int, default=5, help="gateways per prefix")
    model.add_argument("--preset", choices=list(analytics.REFERENCE_ROWS), help="named class break-down")
    model.add_argument("--gateways", help="comma list of gateways per class")
    model.add_argument("--prefixes", help="comma list of prefixes per class")
    model.add_argument("--deltas", default="1:15", help="delta range a:b[:step] or list")
    model.add_argument("--Bs", default="100:5000:100", help="gateway range a:b[:step] or list")
    model.add_argument("--delta", type=float, default=5, help="class ratio for sweep-gateways")
    model.add_argument("--trials", type=int, default=200)
    model.add_argument("--seed", type=int, default=0)
    model.add_argument("--csv", action="store_true", help="CSV instead of an aligned table")
    model.add_argument("--output", "-o")
    model.set_defaults(func=cmd_model)
    return parser


_MODEL_DEFAULTS = {
    "expected": {"B": 100, "P": 800_000, "variant": "plain"},
    "table2": {"variant": "optimized"},
    "sweep-delta": {"B": 500, "P": 800_000},
    "sweep-gateways": {"P": 800_000},
    "montecarlo": {"B": 20, "P": 10_000, "variant": "plain"},
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "model":
        for k, v in _MODEL_DEFAULTS.get(args.model, {}).items():
            if getattr(args, k) is None:
                setattr(args, k, v)
        if args.variant is None:
            args.variant = "optimized"
    try:
        return args.func(args)
    except (UsageError, OpticError) as exc:
        print(f"optic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
