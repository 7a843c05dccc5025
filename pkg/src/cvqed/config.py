"""Run configuration: a YAML file validated against a strict schema."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LatticeBlock(_Strict):
    dim: int = Field(1, ge=1, le=3)
    extent: int = Field(2, ge=2)
    mass: float = Field(1.0, gt=0)


class BackendBlock(_Strict):
    kind: Literal["gaussian", "fock"] = "fock"
    cutoff: int = Field(4, ge=0)
    frame: Literal["particle", "position"] = "particle"
    dense_limit: int = 200_000
    krylov_limit: int = 5_000_000


class ScheduleBlock(_Strict):
    T: float = 2.0
    T1: float = 1.0
    dt: float = 0.02
    e_target: float = 0.3
    dm_coefficient: float | None = None
    sign: Literal[-1, 1] = 1
    epsilon: float = 1e-3


class PacketBlock(_Strict):
    kind: Literal["particle", "antiparticle"] = "particle"
    peak: list[int] = Field(default_factory=lambda: [0])
    width: float | None = None
    weights: list[float] | None = None


class InStateBlock(_Strict):
    packets: list[PacketBlock] = Field(default_factory=lambda: [PacketBlock()])


class RenormBlock(_Strict):
    masses: list[float] = Field(default_factory=lambda: [0.1, 0.01, 0.001])
    atol: float = 1e-4
    literal: bool = False
    vertex: Literal["continuum", "sin", "hat"] = "continuum"
    mc_samples: int = 2**15
    mc_replicates: int = 8


class OutputBlock(_Strict):
    directory: str = "."
    seed: int = 0
    shots: int = 0
    formats: list[Literal["json", "csv", "text"]] = Field(default_factory=lambda: ["json"])
    trace: bool = True
    convergence_check: bool = False


class RunConfig(_Strict):
    lattice: LatticeBlock = Field(default_factory=LatticeBlock)
    backend: BackendBlock = Field(default_factory=BackendBlock)
    schedule: ScheduleBlock = Field(default_factory=ScheduleBlock)
    in_state: InStateBlock = Field(default_factory=InStateBlock)
    renorm: RenormBlock = Field(default_factory=RenormBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _check(self):
        for packet in self.in_state.packets:
            if len(packet.peak) != self.lattice.dim:
                raise ValueError(f"packet peak {packet.peak} needs {self.lattice.dim} coordinates")
            if packet.weights is not None and len(packet.weights) != self.lattice.extent**self.lattice.dim:
                raise ValueError("packet weights must cover every momentum")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def parse_config(text: str) -> RunConfig:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError("configuration must be a mapping")
    return RunConfig.model_validate(data)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


def with_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply dotted-key overrides such as ``{"schedule.dt": 0.01}``; flags win over the file."""
    data = cfg.model_dump(mode="json")
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return RunConfig.model_validate(data)
