"""
Scenario configuration: TOML (or the JSON it resolves to), validated strictly.

Unknown keys are rejected everywhere.  Every frequency and rate is a number
in units of the base rate named by ``time_unit``; times are multiples of its
inverse.
"""

from __future__ import annotations

import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .correlations import (
    DEFAULT_EPSILON,
    MarkovKernel,
    ModeSet,
    SpectralDensityModel,
    TimeGrid,
    discretize_spectral_density,
    markov_kernel,
)
from .optimize import SqueezingRule, custom_rule, optimal_rule, restore_rule, zero_rule

SCHEMA_VERSION = 1

__all__ = ["ScenarioConfig", "ConfigError", "load_config", "preset_names", "ValidationError"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Complex = tuple[float, float]


class SystemSpec(_Strict):
    n_qubits: int = Field(2, ge=1, le=12)
    coupled: list[int] = [0]
    initial_state: Union[Literal["bell", "plus"], list[Complex]] = "bell"
    splittings: list[float] = []
    """Per-qubit ``h_k = splitting_k / 2 sigma_z``; empty means no system Hamiltonian."""

    @model_validator(mode="after")
    def _check(self):
        if any(not 0 <= k < self.n_qubits for k in self.coupled) or len(set(self.coupled)) != len(self.coupled):
            raise ValueError("coupled indices must be distinct qubit indices")
        if self.splittings and len(self.splittings) != self.n_qubits:
            raise ValueError("splittings needs one entry per qubit")
        if self.initial_state == "bell" and self.n_qubits != 2:
            raise ValueError("'bell' initial state needs n_qubits = 2")
        return self

    def state(self) -> np.ndarray:
        if self.initial_state == "bell":
            return np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
        if self.initial_state == "plus":
            return np.full(2**self.n_qubits, 2 ** (-self.n_qubits / 2), dtype=complex)
        psi = np.array([complex(a, b) for a, b in self.initial_state])
        return psi / np.linalg.norm(psi)

    def hamiltonians(self):
        if not self.splittings:
            return ()
        return tuple(np.diag([0.5 * s, -0.5 * s]).astype(complex) for s in self.splittings)


class BathSpec(_Strict):
    kind: Literal["markov", "ohmic", "superohmic", "lorentzian", "table", "modes"]
    strength: float = 1.0
    cutoff: float = 1.0
    omega_max: float = 20.0
    omega_min: float = 0.0
    n_modes: int = Field(1000, ge=1)
    table_omega: list[float] = []
    table_j: list[float] = []
    g: list[float] = []
    omega: list[float] = []

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "modes" and (not self.g or len(self.g) != len(self.omega)):
            raise ValueError("explicit mode baths need equal-length g and omega lists")
        return self

    def model(self) -> SpectralDensityModel:
        if self.kind == "table":
            return SpectralDensityModel.table(self.table_omega, self.table_j)
        return SpectralDensityModel(self.kind, strength=self.strength, cutoff=self.cutoff)

    def modes(self, rule) -> ModeSet:
        if self.kind == "modes":
            ms = ModeSet(np.array(self.g), np.array(self.omega), np.zeros(len(self.g), dtype=complex))
            return ms.with_squeezing(rule)
        return discretize_spectral_density(self.model(), self.omega_max, self.n_modes, rule, self.omega_min)


class GridSpec(_Strict):
    dt: float = Field(gt=0)
    n_steps: int = Field(ge=1)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.dt, self.n_steps)


class SqueezingSpec(_Strict):
    rule: Literal["zero", "optimal", "restore", "constant"] = "zero"
    T: Optional[float] = None
    epsilon: float = Field(DEFAULT_EPSILON, gt=0, lt=1)
    value: Complex = (0.0, 0.0)

    def build(self, horizon: float) -> SqueezingRule:
        T = horizon if self.T is None else self.T
        if self.rule == "zero":
            return zero_rule()
        if self.rule == "optimal":
            return optimal_rule(T, self.epsilon)
        if self.rule == "restore":
            return restore_rule(T, self.epsilon)
        c = complex(*self.value)
        if abs(c) >= 1:
            raise ConfigError("constant squeezing needs |value| < 1")
        rule = custom_rule(lambda w, c=c: np.full(np.shape(w), c), self.epsilon)
        return rule


class EnsembleSpec(_Strict):
    n_samples: int = Field(1000, ge=1)
    chunk: int = Field(2000, ge=1)


class OutputSpec(_Strict):
    dir: str = "out"
    formats: list[Literal["csv", "json", "bin"]] = ["csv", "json"]


class OracleSpec(_Strict):
    n_max: int = Field(20, ge=1)
    n_nodes: int = Field(40, ge=2)
    xi_values: list[Complex] = [(0.0, 0.0)]
    residual_dt: float = 1e-3
    residual_steps: int = Field(40, ge=5)
    residual_nodes: list[list[Complex]] = [[(0.3, 0.2)], [(-0.5, 0.7)]]
    leakage_threshold: float = 1e-6
    identity_tolerance: float = 1e-8
    partial_trace_tolerance: float = 1e-8
    sse_tolerance: float = 1e-6


class OptimizeSpec(_Strict):
    objective: Literal["minimize", "maximize"] = "minimize"
    n_starts: int = Field(4, ge=1)
    budget: int = Field(20000, ge=0)
    gap_threshold: float = 1e-3
    epsilon: float = Field(DEFAULT_EPSILON, gt=0, lt=1)


class ScenarioConfig(_Strict):
    schema_version: Literal[1] = 1
    scenario: str = "scenario"
    time_unit: str
    seed: int = Field(0, ge=0, lt=2**64)
    system: SystemSpec = SystemSpec()
    bath: list[BathSpec]
    grid: GridSpec
    squeezing: SqueezingSpec = SqueezingSpec()
    ensemble: EnsembleSpec = EnsembleSpec()
    outputs: OutputSpec = OutputSpec()
    oracle: Optional[OracleSpec] = None
    optimize: Optional[OptimizeSpec] = None

    @field_validator("bath", mode="before")
    @classmethod
    def _one_or_many(cls, v):
        return [v] if isinstance(v, dict) else v

    @model_validator(mode="after")
    def _check(self):
        if len(self.bath) not in (1, len(self.system.coupled)):
            raise ValueError("give one bath (shared by all coupled qubits) or one per coupled qubit")
        return self

    def baths(self) -> list[BathSpec]:
        """One bath spec per coupled qubit."""
        return self.bath * len(self.system.coupled) if len(self.bath) == 1 else list(self.bath)

    def rule(self) -> SqueezingRule:
        return self.squeezing.build(self.grid.dt * self.grid.n_steps)

    def markov_kernel(self, spec: BathSpec, rule: SqueezingRule) -> MarkovKernel:
        a, shift = rule.markov_form()
        return markov_kernel(spec.strength, self.grid.grid(), a, shift)

    def resolved(self) -> dict:
        return json.loads(self.model_dump_json())


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("gaussunravel.scenarios").iterdir() if p.name.endswith(".toml"))


def _read(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        name = path[:-5] if path.endswith(".toml") else path
        if name in preset_names():
            return tomllib.loads(resources.files("gaussunravel.scenarios").joinpath(name + ".toml").read_text())
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def load_config(path: str, seed: int | None = None) -> ScenarioConfig:
    """Parse and validate a config file path or a shipped preset name."""
    try:
        raw = _read(path)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if seed is not None:
        raw["seed"] = seed
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
