"""Scenario runner: deterministic CSV outputs for the reference experiments.

Each scenario binds a named experiment to the engines with declarative
parameters, writing comma-separated tables (LF line endings, ``.`` decimal
point, ``%.17g`` floats) plus a flat ``metadata.txt`` sidecar that echoes
every configuration value and derived constant.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PreparedRun, RunConfig, prepare
from .dicke import (
    evolve_dicke,
    evolve_spin,
    initial_full_state,
    write_trajectory_csv,
)
from .floquet import averaged_couplings, coupling_discrepancy
from .krylov import USING_COMPILED_KERNEL
from .observables import (
    flux_scan,
    phase_trajectory,
    trajectory_deviation,
)
from .protocols import make_flux_protocol, protocol_to_text, rwa_validity_check
from .spinops import loop_flux, single_excitation_state

SCENARIOS = ("fig1d", "fig2", "fig3", "fig4", "floquet-scaling")

FLOQUET_GRID = (5.0, 10.0, 20.0, 40.0, 80.0)


class ScenarioError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metadata(path, prep: PreparedRun, extras=None):
    """Sidecar with the full config echo and every derived constant."""
    items = [("config." + k, v) for k, v in prep.config.to_items()]
    J = prep.couplings.values
    javg = averaged_couplings(prep.couplings, prep.protocol)
    tau_frac = prep.protocol.tau / prep.protocol.delta
    phi_drive = (2 * np.pi * tau_frac + np.pi) % (2 * np.pi) - np.pi
    items += [
        ("derived.version", __version__),
        ("derived.kernel", "compiled" if USING_COMPILED_KERNEL else "fallback"),
        ("derived.j_rms_rad_s", _fmt(prep.j_rms)),
        ("derived.j_rms_hz", _fmt(prep.j_rms / (2 * np.pi))),
        ("derived.mode_freqs_hz",
         ",".join(_fmt(w / (2 * np.pi)) for w in prep.modes.mode_freqs)),
        ("derived.positions", ",".join(_fmt(u) for u in prep.modes.positions)),
        ("derived.j12_hz", _fmt(J[0, 1] / (2 * np.pi)) if prep.spec.n_ions >= 2 else "0"),
        ("derived.j13_hz", _fmt(J[0, 2] / (2 * np.pi)) if prep.spec.n_ions >= 3 else "0"),
        ("derived.protocol_period_s", _fmt(prep.protocol.period)),
        ("derived.window_s", _fmt(prep.window)),
        ("derived.window_jrms", _fmt(prep.window * prep.j_rms)),
        ("derived.flux_drive_convention", _fmt(phi_drive)),
        ("derived.flux_loop_123",
         _fmt(loop_flux(javg.matrix)) if prep.spec.n_ions == 3 else "nan"),
        ("derived.pair_convention", "unordered i<j, each bond counted once"),
        ("derived.excitation_observable", "pop_i = (1 + <sigma_i^z>)/2"),
    ]
    if prep.protocol.b0 > 0:
        rwa = rwa_validity_check(prep.protocol)
        items += [
            ("derived.rwa_max_residual", _fmt(rwa["max_residual"])),
            ("derived.rwa_joint_period_s", _fmt(rwa["joint_period"])),
            ("derived.rwa_commensurate", _fmt(rwa["commensurate"])),
        ]
    if extras:
        items += [(k, str(v)) for k, v in extras.items()]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for k, v in items:
            fh.write(f"{k} = {v}\n")


def _run_tiers(prep: PreparedRun, out: Path, extra_times=()):
    """Evolve every configured tier and write its trajectory CSV."""
    cfg = prep.config
    psi0 = single_excitation_state(0, cfg.n_ions)
    javg = averaged_couplings(prep.couplings, prep.protocol)
    plan = cfg.plan()
    trajs = {}
    for tier in cfg.tiers:
        if tier == "dicke":
            fock = cfg.fock()
            full0 = initial_full_state(cfg.n_ions, fock)
            traj = evolve_dicke(
                full0, plan, prep.protocol, prep.modes, prep.spec, fock,
                prep.window, couplings_for_current=javg, extra_times=extra_times,
            )
        else:
            traj = evolve_spin(
                psi0, tier, prep.couplings, prep.protocol, prep.window,
                plan=plan, couplings_for_current=javg, extra_times=extra_times,
            )
        trajs[tier] = traj
        write_trajectory_csv(out / f"trajectory_{tier}.csv", traj)
    if "ising" in trajs and "dicke" in trajs:
        ts, dev = trajectory_deviation(trajs["ising"], trajs["dicke"])
        write_csv(out / "deviation_ising_dicke.csv", ["t", "deviation"],
                  zip(ts, dev))
    return trajs


def run_evolve(config: RunConfig, out_dir=None) -> dict:
    """Generic trajectory run over the configured tiers."""
    prep = prepare(config)
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    trajs = _run_tiers(prep, out)
    write_metadata(out / "metadata.txt", prep, {"scenario": "evolve"})
    with open(out / "protocol.txt", "w", newline="\n") as fh:
        fh.write(protocol_to_text(prep.protocol, prep.j_rms))
    return {"out": out, "trajectories": trajs, "prepared": prep}


def run_floquet_check(config: RunConfig, out_dir=None, grid=FLOQUET_GRID) -> dict:
    """Averaged-vs-exact coupling discrepancies across drive strengths."""
    prep = prepare(config)
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    tau_frac = config.tau_over_delta

    def builder(mu0):
        delta = np.pi / mu0
        return make_flux_protocol(tau_frac * delta, delta, mu0,
                                  config.b0_over_jrms * prep.j_rms)

    reports = coupling_discrepancy(
        prep.couplings, builder, [r * prep.j_rms for r in grid], prep.j_rms
    )
    write_csv(
        out / "floquet_scaling.csv",
        ["mu0_over_jrms", "amp_error", "phase_error"],
        [(r.mu0_over_jrms, r.amp_error, r.phase_error) for r in reports],
    )
    write_metadata(out / "metadata.txt", prep, {"scenario": "floquet-scaling"})
    return {"out": out, "reports": reports, "prepared": prep}


def run_spectrum(config: RunConfig, out_dir=None, n_points=241) -> dict:
    """Flux scan of the uniform triangle built from the averaged bonds."""
    prep = prepare(config)
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    javg = averaged_couplings(prep.couplings, prep.protocol)
    j_mag = float(np.mean(np.abs(javg.matrix[np.triu_indices(3, 1)])))
    grid = np.linspace(-np.pi, np.pi, n_points)
    scan = flux_scan(j_mag, grid)
    rows = [
        (scan.flux[k], *scan.energies[k], *scan.currents[k])
        for k in range(len(grid))
    ]
    write_csv(out / "spectrum.csv",
              ["phi", "e1", "e2", "e3", "i1", "i2", "i3"], rows)
    write_metadata(out / "metadata.txt", prep,
                   {"scenario": "fig3", "triangle_j_rad_s": _fmt(j_mag)})
    return {"out": out, "scan": scan, "prepared": prep}


def run_phase(config: RunConfig, out_dir=None) -> dict:
    """Double-well relative-phase run; one CSV per measurement route."""
    if config.protocol_kind != "double-well":
        config = config.with_updates(protocol_kind="double-well")
    prep = prepare(config)
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    javg = averaged_couplings(prep.couplings, prep.protocol)
    t_osc = np.pi / abs(javg.matrix[0, 2])
    window = 1.25 * t_osc
    prep = replace(prep, window=window)
    trajs = _run_tiers(prep, out)
    routes = []
    if "ising" in trajs:
        routes.append(("ising_wavefunction", trajs["ising"], "wavefunction"))
    if "dicke" in trajs:
        routes.append(("dicke_wavefunction", trajs["dicke"], "wavefunction"))
        routes.append(("dicke_correlator", trajs["dicke"], "correlator"))
    for name, traj, route in routes:
        ts, dphi, valid = phase_trajectory(traj, route)
        write_csv(
            out / f"phase_{name}.csv",
            ["t", "abs_dphi", "valid_flag"],
            [(ts[k], dphi[k] if valid[k] else np.nan, valid[k])
             for k in range(len(ts))],
        )
    write_metadata(out / "metadata.txt", prep,
                   {"scenario": "fig4", "t_osc_s": _fmt(t_osc)})
    return {"out": out, "trajectories": trajs, "prepared": prep, "t_osc": t_osc}


def run_scenario(name: str, config: RunConfig = None, out_dir=None) -> dict:
    """Run one named scenario; see ``SCENARIOS`` for the catalogue."""
    base = config if config is not None else RunConfig()
    if name == "fig1d":
        cfg = base.with_updates(
            protocol_kind="flux", tau_over_delta=0.25, tiers=("ising", "xx")
        )
        return run_evolve(cfg, out_dir)
    if name == "fig2":
        cfg = base.with_updates(protocol_kind="flux", tiers=("ising", "dicke"))
        taus = (0.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 3.0)
        return sweep("protocol.tau_over_delta", taus, cfg, out_dir)
    if name == "fig3":
        return run_spectrum(base.with_updates(protocol_kind="flux"), out_dir)
    if name == "fig4":
        cfg = base.with_updates(
            protocol_kind="double-well",
            tau_over_delta=1.0 / 3.0,
            mu0_over_jrms=10.0,
            tiers=("ising", "dicke"),
        )
        return run_phase(cfg, out_dir)
    if name == "floquet-scaling":
        return run_floquet_check(base.with_updates(protocol_kind="flux"), out_dir)
    raise ScenarioError(
        f"unknown scenario '{name}'; choose from {', '.join(SCENARIOS)}"
    )


# ---------------------------------------------------------------------------
# parameter sweeps

def config_hash(config: RunConfig) -> str:
    blob = ";".join(f"{k}={v}" for k, v in config.to_items())
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _sweep_worker(args):
    parameter, value, config_items, out_dir = args
    cfg = RunConfig()
    for key, val in config_items:
        cfg = cfg.set_path(key, val)
    cfg = cfg.set_path(parameter, value)
    try:
        run_evolve(cfg, out_dir)
        return (value, "ok", "")
    except Exception as err:  # per-run failures recorded, sweep continues
        return (value, "error", f"{type(err).__name__}: {err}")


def sweep(parameter: str, values, base: RunConfig, out_dir=None) -> dict:
    """One run per value of a dotted config path, in a worker pool.

    Results land in per-value subdirectories; ``index.csv`` lists every run
    with its config hash and status.  Worker count comes from
    ``IONFLUX_WORKERS`` (default 1).
    """
    values = list(values)
    if not values:
        raise ScenarioError("sweep needs at least one value")
    base.set_path(parameter, str(values[0]))  # validates the path early
    out = Path(out_dir if out_dir is not None else base.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    run_dirs = {}
    for k, v in enumerate(values):
        sub = out / f"run_{k:03d}"
        run_dirs[v] = sub
        jobs.append((parameter, str(v), base.to_items(), str(sub)))
    workers = max(1, int(os.environ.get("IONFLUX_WORKERS", "1")))
    if workers == 1:
        results = [_sweep_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    rows = []
    failed = 0
    for k, (v, status, msg) in enumerate(results):
        cfg_k = base.set_path(parameter, v)
        rows.append((f"run_{k:03d}", parameter, v, status,
                     config_hash(cfg_k), msg.replace(",", ";")))
        failed += status != "ok"
    lines = ["run,parameter,value,status,config_hash,message"]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    with open(out / "index.csv", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return {"out": out, "results": results, "failed": failed,
            "run_dirs": run_dirs}
