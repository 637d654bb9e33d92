"""Command-line interface.

Subcommands: ``couplings``, ``floquet-check``, ``evolve``, ``spectrum``,
``phase``, ``sweep``.  Exit codes: 0 success, 2 configuration/usage errors,
3 physics errors (instability, resonance, quasi-energy folding, stiffness),
4 I/O errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .chain import (
    ModeResonanceError,
    PositionSolveError,
    ZigzagInstabilityError,
)
from .config import ConfigError, RunConfig, prepare
from .dicke import DimensionCapError, NormDriftError
from .floquet import QuasiEnergyFoldingError
from .krylov import StiffnessError
from .protocols import ProtocolError
from .scenarios import (
    SCENARIOS,
    ScenarioError,
    run_evolve,
    run_floquet_check,
    run_phase,
    run_scenario,
    run_spectrum,
    sweep,
    write_csv,
    write_metadata,
)

PHYSICS_ERRORS = (
    ZigzagInstabilityError,
    ModeResonanceError,
    PositionSolveError,
    QuasiEnergyFoldingError,
    DimensionCapError,
    NormDriftError,
    StiffnessError,
    ProtocolError,
)
CONFIG_ERRORS = (ConfigError, ScenarioError)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "out", None):
        cfg = cfg.with_updates(out=args.out)
    if getattr(args, "frame", None):
        cfg = cfg.with_updates(frame=args.frame)
    if getattr(args, "tiers", None):
        cfg = cfg.with_updates(tiers=tuple(args.tiers.split(",")))
    if getattr(args, "nmax", None):
        cfg = cfg.with_updates(n_max=args.nmax)
    return cfg


def cmd_couplings(args) -> int:
    cfg = _load_config(args)
    prep = prepare(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = prep.spec.n_ions
    write_csv(
        out / "mode_freqs.csv",
        ["mode", "freq_hz"],
        [(m + 1, prep.modes.mode_freqs[m] / (2 * np.pi)) for m in range(n)],
    )
    write_csv(
        out / "couplings.csv",
        ["ion"] + [str(j + 1) for j in range(n)],
        [(i + 1, *(prep.couplings.values[i] / (2 * np.pi))) for i in range(n)],
    )
    write_metadata(out / "metadata.txt", prep, {"scenario": "couplings"})
    print(f"j_rms = {prep.j_rms / (2 * np.pi):.3f} Hz -> {out}")
    return 0


def cmd_floquet_check(args) -> int:
    cfg = _load_config(args)
    res = run_floquet_check(cfg)
    worst = max(max(r.amp_error, r.phase_error) for r in res["reports"])
    print(f"floquet check: {len(res['reports'])} strengths, "
          f"worst error {worst:.4f} -> {res['out']}")
    return 0


def cmd_evolve(args) -> int:
    cfg = _load_config(args)
    if args.scenario:
        res = run_scenario(args.scenario, cfg, out_dir=cfg.out)
    else:
        res = run_evolve(cfg)
    print(f"evolve -> {res['out']}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    res = run_spectrum(cfg, n_points=args.points)
    print(f"spectrum ({args.points} flux points) -> {res['out']}")
    return 0


def cmd_phase(args) -> int:
    cfg = _load_config(args)
    res = run_phase(cfg)
    print(f"phase (T_osc = {res['t_osc']:.6g} s) -> {res['out']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [v for v in args.values.split(",") if v]
    res = sweep(args.param, values, cfg)
    print(f"sweep {args.param} over {len(values)} values, "
          f"{res['failed']} failed -> {res['out']}")
    return 0 if res["failed"] == 0 else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ionflux",
        description="Floquet-engineered chiral spin dynamics of trapped-ion chains",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="flat key=value config file")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--frame", choices=("lab", "rwa"))
        sp.add_argument("--tiers", metavar="LIST",
                        help="comma list: ising,xx,xx_avg,heff,dicke")
        sp.add_argument("--nmax", type=int, metavar="INT",
                        help="Fock cutoff per mode")

    sp = sub.add_parser("couplings", help="chain modes and coupling matrix CSVs")
    common(sp)
    sp.set_defaults(func=cmd_couplings)

    sp = sub.add_parser("floquet-check",
                        help="averaged vs exact coupling discrepancy scan")
    common(sp)
    sp.set_defaults(func=cmd_floquet_check)

    sp = sub.add_parser("evolve", help="trajectory run over the model tiers")
    common(sp)
    sp.add_argument("--scenario", choices=SCENARIOS,
                    help="run a named reference scenario instead")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("spectrum", help="triangle spectrum and currents vs flux")
    common(sp)
    sp.add_argument("--points", type=int, default=241)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("phase", help="double-well relative phase routes")
    common(sp)
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("sweep", help="one run per value of a config path")
    common(sp)
    sp.add_argument("--param", required=True, metavar="PATH",
                    help="dotted config path, e.g. protocol.tau_over_delta")
    sp.add_argument("--values", required=True, metavar="LIST",
                    help="comma-separated values")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except PHYSICS_ERRORS as err:
        print(f"physics error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
