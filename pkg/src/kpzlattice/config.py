"""Experiment configuration files (TOML).

Example::

    experiment = "speed-change-drift"
    seed = 11

    [model]
    family = "speed_change"      # ssep | speed_change | metropolis
    b = 0.3
    beta = 0.0
    couplings = [{sites = [0, 1], J = 1.0}]
    rho = 0.4                    # or phi = ...
    gamma = 0.05                 # or a = ..., epsilon = ...

    [simulation]
    L = 512
    horizon = 1e4
    replicas = 32

Unknown keys anywhere are rejected with :class:`ConfigError`.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .lattice import GibbsSpec, LocalFunction, RateTable, builtin_rate
from .thermodynamics import uniform_grid


class ConfigError(ValueError):
    pass


_TOP = {"experiment", "seed", "output", "tolerance_profile", "model", "thermo", "ensemble",
        "simulation", "sbe", "tolerances"}
_SECTIONS = {
    "model": {"family", "b", "beta", "couplings", "rho", "phi", "gamma", "a", "epsilon", "K"},
    "thermo": {"rho_grid", "a", "a_grid"},
    "ensemble": {"ell", "rho", "observable", "phis"},
    "simulation": {"L", "horizon", "replicas", "samples", "threads", "write_snapshots", "lags",
                   "origin_stride", "frame_shift"},
    "sbe": {"M", "dx", "dt", "steps", "burn_in", "delta", "rho", "a", "observe_every"},
    "tolerances": {"exact", "numeric"},
}
TOLERANCE_PROFILES = {
    "strict": {"exact": 1e-12, "numeric": 1e-8},
    "default": {"exact": 1e-10, "numeric": 1e-6},
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output: str | None = None
    tolerance_profile: str = "default"
    model: dict = field(default_factory=dict)
    thermo: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    sbe: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _TOP
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for name, allowed in _SECTIONS.items():
            sec = data.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"[{name}] must be a table")
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        if "experiment" not in data:
            raise ConfigError("missing 'experiment'")
        cfg = cls(**{k: data[k] for k in data})
        if cfg.tolerance_profile not in TOLERANCE_PROFILES:
            raise ConfigError(f"unknown tolerance profile {cfg.tolerance_profile!r}")
        cfg.rate()  # validate the model eagerly
        m = cfg.model
        if "rho" in m and "phi" in m:
            raise ConfigError("give either rho or phi, not both")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def tol(self, kind: str) -> float:
        base = dict(TOLERANCE_PROFILES[self.tolerance_profile])
        base.update(self.tolerances)
        return float(base[kind])

    def spec(self) -> GibbsSpec:
        m = self.model
        try:
            couplings = tuple((tuple(c["sites"]), float(c["J"])) for c in m.get("couplings", []))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad couplings entry: {exc}") from exc
        return GibbsSpec(couplings, float(m.get("beta", 0.0)), float(m.get("phi", 0.0)))

    def rate(self) -> RateTable:
        m = self.model
        family = m.get("family")
        try:
            if family == "metropolis":
                c = builtin_rate("metropolis", spec=self.spec())
            else:
                c = builtin_rate(family, b=m.get("b"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return c.asymmetrized(self.gamma)

    def reference_spec(self) -> GibbsSpec:
        """The Gibbs measure the rate is reversible for (product for ssep/speed_change)."""
        return self.spec() if self.model.get("family") == "metropolis" else GibbsSpec()

    @property
    def gamma(self) -> float:
        m = self.model
        if "gamma" in m:
            g = float(m["gamma"])
        elif "a" in m and "epsilon" in m:
            g = float(m["a"]) * math.sqrt(float(m["epsilon"]))
        else:
            g = 0.0
        if not 0.0 <= g <= 1.0:
            raise ConfigError(f"gamma={g} outside [0, 1]")
        return g

    def omega_radius(self) -> int | None:
        return self.model.get("K")

    def rho_grid(self) -> np.ndarray:
        g = self.thermo.get("rho_grid", 99)
        if isinstance(g, int):
            return uniform_grid(g)
        return np.asarray(g, dtype=float)

    def observable(self) -> LocalFunction:
        terms = self.ensemble.get("observable", [{"sites": [0, 1], "coeff": 1.0}])
        try:
            return LocalFunction.from_terms({tuple(t["sites"]): float(t["coeff"]) for t in terms})
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad observable entry: {exc}") from exc

    def resolved(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment, "seed": self.seed, "output": self.output,
            "tolerance_profile": self.tolerance_profile,
            "tolerances": {"exact": self.tol("exact"), "numeric": self.tol("numeric")},
            "model": dict(self.model), "thermo": dict(self.thermo), "ensemble": dict(self.ensemble),
            "simulation": dict(self.simulation), "sbe": dict(self.sbe),
            "resolved": {"gamma": self.gamma, "rate": self.rate().to_json(),
                         "spec": self.reference_spec().to_json()},
        }
