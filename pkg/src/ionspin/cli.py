"""``ionspin`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 feasibility
violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import circuit as C
from . import config as cfgmod
from . import reports
from .compiler import CompileError, FeasibilityError, ParityError, compile_circuit
from .ion import MW, RF, transition_spectrum
from .quantum import DimensionError
from .schedule import Schedule, SCHEDULE_SCHEMA, layout_from_metadata
from .simulator import FrameMismatch, dephasing_mc, execute, selectivity_scan
from .trap import ConvergenceError, feasibility_report, fit_kappa, table1

EXIT_OK, EXIT_CONFIG, EXIT_FEASIBILITY, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_FORMATS = {
    "spectrum": ("csv", "json"),
    "table1": ("csv",),
    "compile": ("json",),
    "simulate": ("json", "text"),
    "feasibility": ("json", "text"),
    "scan": ("csv",),
}


class Context:
    def __init__(self, args):
        overrides = {}
        for kv in args.set or ():
            if "=" not in kv:
                raise cfgmod.ConfigError(f"--set expects key=value, got {kv!r}")
            key, value = kv.split("=", 1)
            overrides[key.strip()] = value
        if args.seed is not None:
            overrides["run.seed"] = str(args.seed)
        if args.force:
            overrides["run.force"] = "true"
        if args.out_dir is not None:
            overrides["output.dir"] = args.out_dir
        if args.format is not None:
            overrides["output.format"] = args.format
        for key, attr in (("simulate.mode", "mode"), ("spectrum.channel", "channel")):
            val = getattr(args, attr, None)
            if val is not None:
                overrides[key] = "labframe" if val == "labframe-oracle" else val
        self.cfg = cfgmod.load(args.config, overrides)
        self.hash = cfgmod.config_hash(self.cfg)
        self.out = Path(self.cfg.output.dir)
        self.command = args.command

    def formats(self):
        return (self.cfg.output.format,) if self.cfg.output.format else DEFAULT_FORMATS[self.command]


def _spectrum_rows(lines):
    return [
        {"frequency_hz": ln.frequency, "intensity": ln.intensity, "initial": ln.label_initial, "final": ln.label_final, "ion": ln.ion_index}
        for ln in lines
    ]


def cmd_spectrum(ctx, args):
    layout = ctx.cfg.layout()
    chans = {"mw": (MW,), "rf": (RF,), "both": (MW, RF)}[ctx.cfg.spectrum.channel]
    written = []
    cols = ["frequency_hz", "intensity", "initial", "final", "ion"]
    for ch in chans:
        lines = transition_spectrum(layout, ch, directed=ctx.cfg.spectrum.directed)
        rows = _spectrum_rows(lines)
        freqs = np.array([r["frequency_hz"] for r in rows])
        summary = {"channel": ch, "n_lines": len(rows), "f_min_hz": float(freqs.min()), "f_max_hz": float(freqs.max()), "n_ions": layout.n_ions}
        written += reports.write_table(ctx.out / f"spectrum_{ch.lower()}", rows, cols, ctx.formats(), "ionspin.spectrum/1", ctx.hash, summary)
        print(f"{ch}: {len(rows)} lines, {freqs.min() / 1e9:.4f}-{freqs.max() / 1e9:.4f} GHz")
    return written


def cmd_table1(ctx, args):
    species = ctx.cfg.ion_species()
    kappa = fit_kappa(species)
    rows = [asdict(r) for r in table1(species, kappa)]
    for r in rows:
        r["flags"] = ";".join(r["flags"])
    cols = list(rows[0])
    for r in rows:
        print(f"nu1={r['nu1_hz'] / 1e6:.1f} MHz b={r['b_t_per_m']:.0f} T/m dz={r['dz_um']:.3f} um J={r['j_krad_s']:.4f} krad/s {r['flags']}")
    print(f"fitted kappa = {kappa:.6f}")
    return reports.write_table(ctx.out / "table1", rows, cols, ctx.formats(), "ionspin.table1/1", ctx.hash, {"kappa": kappa}, "two-ion parameter table")


def cmd_compile(ctx, args):
    gates = C.load_circuit(args.circuit)
    sched = compile_circuit(gates, ctx.cfg.trap_params(), ctx.cfg.compile_options())
    sched.metadata["config_hash"] = ctx.hash
    path = Path(args.output) if args.output else ctx.out / "schedule.json"
    print(f"{len(sched)} items, {sched.duration * 1e6:.3f} us -> {path}")
    return [reports.write_atomic(path, sched.to_json())]


def cmd_simulate(ctx, args):
    text = Path(args.schedule).read_text()
    sched = Schedule.from_json(text)
    layout = layout_from_metadata(sched.metadata)
    mode = ctx.cfg.simulate.mode
    u, rep = execute(sched, layout, mode, labframe_scale=ctx.cfg.simulate.labframe_scale)
    payload = rep.to_dict()
    payload["schedule_schema"] = sched.metadata.get("schema", SCHEDULE_SCHEMA)
    payload["seed"] = ctx.cfg.run.seed
    payload["n_items"] = len(sched)
    if ctx.cfg.simulate.delta_b_rms > 0:
        noise_mode = "ideal" if mode == "ideal" else "physical"
        payload["dephasing"] = dephasing_mc(sched, layout, ctx.cfg.simulate.delta_b_rms, ctx.cfg.simulate.trials, ctx.cfg.run.seed, noise_mode)
    if not all(math.isfinite(payload[k]) for k in ("process_fidelity", "leakage")):
        raise FloatingPointError("non-finite fidelity")
    print(f"{mode}: fidelity {rep.process_fidelity:.10f}, leakage {rep.leakage:.3g}, duration {rep.duration_s * 1e6:.3f} us")
    return reports.write_record(ctx.out / "report", payload, ctx.formats(), "ionspin.report/1", ctx.hash)


def cmd_feasibility(ctx, args):
    trap = ctx.cfg.trap_params()
    layout = ctx.cfg.layout()
    tau = ctx.cfg.feasibility.gate_time_s
    rep = feasibility_report(trap, ctx.cfg.drive.rabi_mw, tau, ctx.cfg.feasibility.margin, ctx.cfg.feasibility.eps_max, layout.positions)
    payload = asdict(rep)
    payload["ok"] = rep.ok
    if layout.j_matrix is not None:
        payload["j12_rad_s"] = float(layout.j_matrix[0, 1])
    written = reports.write_record(ctx.out / "feasibility", payload, ctx.formats(), "ionspin.feasibility/1", ctx.hash)
    for m in rep.messages:
        print(m)
    print(f"delta_B_max = {rep.delta_b_max_tesla:.3g} T, epsilon = {rep.epsilon:.4f}, feasible = {rep.ok}")
    if not rep.ok and not ctx.cfg.run.force:
        raise FeasibilityError(rep)
    return written


def cmd_scan(ctx, args):
    layout = ctx.cfg.layout()
    s = ctx.cfg.scan
    curve = selectivity_scan(layout, (s.ion, s.m_i), (s.rabi_min, s.rabi_max, s.points))
    rows = list(curve.rows())
    cols = ["rabi_hz", "infidelity", "leakage", "neighbor_flip", "doublet_inversion"]
    ratio = curve.halving_ratio()
    print(f"{len(rows)} points, fitted infidelity ratio per halving {ratio:.3f}")
    return reports.write_table(ctx.out / "scan", rows, cols, ctx.formats(), "ionspin.scan/1", ctx.hash, {"halving_ratio": ratio})


COMMANDS = {
    "spectrum": cmd_spectrum,
    "table1": cmd_table1,
    "compile": cmd_compile,
    "simulate": cmd_simulate,
    "feasibility": cmd_feasibility,
    "scan": cmd_scan,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value or JSON config file")
    common.add_argument("--out-dir", help="output directory (default: output.dir)")
    common.add_argument("--format", choices=reports.FORMATS, help="write only this format")
    common.add_argument("--seed", type=int, help="random seed for stochastic steps")
    common.add_argument("--force", action="store_true", help="continue past feasibility violations")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="ionspin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("spectrum", parents=[common], help="MW/RF stick spectra")
    sp.add_argument("--channel", choices=("mw", "rf", "both"))
    sub.add_parser("table1", parents=[common], help="recompute the two-ion parameter table")
    sp = sub.add_parser("compile", parents=[common], help="compile a circuit to a pulse schedule")
    sp.add_argument("circuit", help="circuit file (.json or text)")
    sp.add_argument("-o", "--output", help="schedule path (default: <out-dir>/schedule.json)")
    sp = sub.add_parser("simulate", parents=[common], help="execute a schedule and report its fidelity")
    sp.add_argument("schedule")
    sp.add_argument("--mode", choices=("ideal", "physical", "labframe-oracle"))
    sub.add_parser("feasibility", parents=[common], help="check trap and drive constraints")
    sub.add_parser("scan", parents=[common], help="selectivity error versus Rabi frequency")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        COMMANDS[args.command](ctx, args)
    except FeasibilityError as exc:
        print(f"ionspin: infeasible: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    except (CompileError, ConvergenceError, DimensionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ParityError):
            print(f"ionspin: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"ionspin: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (cfgmod.ConfigError, C.CircuitError, FrameMismatch, OSError, KeyError, ValueError) as exc:
        print(f"ionspin: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
