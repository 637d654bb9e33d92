"""Run configuration: flat ``key = value`` text with dotted paths.

Frequencies enter in hertz through ``*_hz`` keys and are converted to
angular units here, in one place.  Defaults reproduce the reference
parameter set of the three-ion chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .chain import TrapSpec, chain_modes, spin_spin_couplings
from .dicke import EvolutionPlan, FockSpec
from .protocols import make_double_well_protocol, make_flux_protocol

TWO_PI = 2.0 * np.pi

VALID_TIERS = ("ising", "xx", "xx_avg", "heff", "dicke")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # trap
    n_ions: int = 3
    mass_amu: float = 171.0
    omega_xy_hz: float = 5.0e6
    omega_z_hz: float = 900.0e3
    rabi_hz: tuple = (200.0e3,)
    omega_rec_hz: float = 26.0e3
    delta_com_hz: float = 80.0e3
    # protocol
    protocol_kind: str = "flux"  # "flux" | "double-well"
    tau_over_delta: float = 0.25
    mu0_over_jrms: float = 20.0
    b0_over_jrms: float = 1.0
    # run
    tiers: tuple = ("ising", "xx")
    window_jrms: float = 16.0
    samples: int = 600
    frame: str = "rwa"
    n_max: int = 4
    out: str = "out"
    seed: int = 0

    _KEYMAP = {
        "trap.n_ions": ("n_ions", int),
        "trap.mass_amu": ("mass_amu", float),
        "trap.omega_xy_hz": ("omega_xy_hz", float),
        "trap.omega_z_hz": ("omega_z_hz", float),
        "trap.rabi_hz": ("rabi_hz", "floats"),
        "trap.omega_rec_hz": ("omega_rec_hz", float),
        "trap.delta_com_hz": ("delta_com_hz", float),
        "protocol.kind": ("protocol_kind", str),
        "protocol.tau_over_delta": ("tau_over_delta", float),
        "protocol.mu0_over_jrms": ("mu0_over_jrms", float),
        "protocol.b0_over_jrms": ("b0_over_jrms", float),
        "run.tiers": ("tiers", "strings"),
        "run.window_jrms": ("window_jrms", float),
        "run.samples": ("samples", int),
        "run.frame": ("frame", str),
        "run.n_max": ("n_max", int),
        "run.out": ("out", str),
        "run.seed": ("seed", int),
    }

    def __post_init__(self):
        if self.protocol_kind not in ("flux", "double-well"):
            raise ConfigError(
                f"protocol.kind: unknown value '{self.protocol_kind}'"
            )
        if not (0 <= self.tau_over_delta < 1):
            raise ConfigError("protocol.tau_over_delta: need 0 <= tau/delta < 1")
        if self.frame not in ("rwa", "lab"):
            raise ConfigError(f"run.frame: unknown value '{self.frame}'")
        for tier in self.tiers:
            if tier not in VALID_TIERS:
                raise ConfigError(f"run.tiers: unknown tier '{tier}'")
        rabi = tuple(float(r) for r in np.atleast_1d(self.rabi_hz))
        object.__setattr__(self, "rabi_hz", rabi)
        object.__setattr__(self, "tiers", tuple(self.tiers))

    # -- parsing ------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values = {}
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {ln}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in cls._KEYMAP:
                raise ConfigError(f"line {ln}: unknown key '{key}'")
            attr, kind = cls._KEYMAP[key]
            try:
                if kind == "floats":
                    values[attr] = tuple(float(v) for v in val.split(","))
                elif kind == "strings":
                    values[attr] = tuple(v.strip() for v in val.split(",") if v.strip())
                else:
                    values[attr] = kind(val)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"{key}: cannot parse '{val}' ({err})")
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def with_updates(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)

    def set_path(self, dotted: str, value: str) -> "RunConfig":
        """Update one dotted config path from its text representation."""
        if dotted not in self._KEYMAP:
            raise ConfigError(f"unknown config path '{dotted}'")
        attr, kind = self._KEYMAP[dotted]
        if kind == "floats":
            parsed = tuple(float(v) for v in str(value).split(","))
        elif kind == "strings":
            parsed = tuple(v.strip() for v in str(value).split(","))
        else:
            parsed = kind(value)
        return replace(self, **{attr: parsed})

    def to_items(self):
        """Flat (key, value-string) pairs, every field echoed."""
        inv = {attr: key for key, (attr, _) in self._KEYMAP.items()}
        out = []
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append((inv[f.name], str(v)))
        return out

    # -- derived objects (the single Hz -> rad/s conversion point) ----------

    def trap(self) -> TrapSpec:
        return TrapSpec(
            n_ions=self.n_ions,
            mass_amu=self.mass_amu,
            omega_xy=TWO_PI * self.omega_xy_hz,
            omega_z=TWO_PI * self.omega_z_hz,
            rabi=tuple(TWO_PI * r for r in self.rabi_hz),
            omega_rec=TWO_PI * self.omega_rec_hz,
            delta_com=TWO_PI * self.delta_com_hz,
        )

    def fock(self) -> FockSpec:
        return FockSpec(n_max=self.n_max)

    def plan(self) -> EvolutionPlan:
        return EvolutionPlan(frame=self.frame, n_samples=self.samples)


@dataclass(frozen=True)
class PreparedRun:
    """Everything derived from one RunConfig, ready for the engines."""

    config: RunConfig
    spec: TrapSpec
    modes: object
    couplings: object
    j_rms: float
    protocol: object
    window: float


def prepare(config: RunConfig) -> PreparedRun:
    spec = config.trap()
    modes = chain_modes(spec)
    J = spin_spin_couplings(modes, spec)
    j_rms = J.j_rms
    mu0 = config.mu0_over_jrms * j_rms
    b0 = config.b0_over_jrms * j_rms
    delta = np.pi / mu0
    tau = config.tau_over_delta * delta
    if config.protocol_kind == "flux":
        if config.n_ions != 3:
            raise ConfigError("protocol.kind=flux requires trap.n_ions = 3")
        proto = make_flux_protocol(tau, delta, mu0, b0)
    else:
        if config.n_ions != 3:
            raise ConfigError("protocol.kind=double-well requires trap.n_ions = 3")
        proto = make_double_well_protocol(tau, delta, mu0, b0)
    window = config.window_jrms / j_rms
    return PreparedRun(
        config=config,
        spec=spec,
        modes=modes,
        couplings=J,
        j_rms=j_rms,
        protocol=proto,
        window=window,
    )
