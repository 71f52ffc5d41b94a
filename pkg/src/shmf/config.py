"""Versioned JSON experiment configuration.

Every block rejects unknown keys so that a typo cannot silently fall back
to a default and change a published run.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, model_validator

from .bessel_core import EigenBasis, build_basis
from .errors import ValidationError
from .modal_space import ModalField, project
from .noise import NoiseSpectrum, make_spectrum, silent_spectrum
from .solver import SolverConfig

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SolverBlock(_Strict):
    n_modes: int = Field(128, ge=1, le=4096)
    n_quad: Optional[int] = None
    beta: float = 2.5
    dt_init: float = Field(1.0e-4, gt=0)
    dt_min: float = Field(1.0e-5, gt=0)
    dt_max: float = Field(1.0e-2, gt=0)
    dt_floor: float = Field(1.0e-13, gt=0)
    safety: float = Field(0.8, gt=0, le=1)
    rtol: float = Field(1.0e-4, gt=0)
    atol: float = Field(1.0e-6, gt=0)
    blowup_grad_threshold: float = Field(1.0e3, gt=0)
    blowup_norm_threshold: float = Field(1.0e8, gt=0)
    t_end: float = Field(1.0, gt=0)
    scheme: Literal["expo_euler", "picard_verify"] = "expo_euler"
    adaptive: bool = True
    noise_clock_dt: float = Field(1.0e-3, gt=0)
    snapshot_every: int = Field(1, ge=1)
    max_steps: int = Field(2_000_000, ge=1)

    @model_validator(mode="after")
    def _order(self):
        if not self.dt_min < self.dt_init:
            raise ValueError("dt_min must be smaller than dt_init")
        if self.n_quad is not None and self.n_quad < 2 * self.n_modes:
            raise ValueError("n_quad must be at least 2 * n_modes")
        return self

    def to_solver_config(self, t_end: float | None = None) -> SolverConfig:
        d = self.model_dump()
        d.pop("n_quad")
        if t_end is not None:
            d["t_end"] = t_end
        return SolverConfig(**d).validate()


class NoiseBlock(_Strict):
    kind: Literal["power_law", "none"] = "none"
    amplitude: float = 0.0
    exponent: float = 3.5
    beta_target: float = 2.5

    @model_validator(mode="after")
    def _trace_class(self):
        if self.kind == "power_law":
            if not self.amplitude > 0:
                raise ValueError("amplitude must be positive for a power_law spectrum")
            if not self.exponent > self.beta_target + 0.5:
                raise ValueError(
                    f"exponent must exceed beta_target + 1/2 = {self.beta_target + 0.5} "
                    "(Hilbert-Schmidt into V_beta)")
        return self


class ChiInit(_Strict):
    kind: Literal["chi_k"]
    k: float = Field(gt=0)


class ScaledChiInit(_Strict):
    kind: Literal["scaled_chi"]
    k: float = Field(1.0, gt=0)
    scale: float


class ModalListInit(_Strict):
    kind: Literal["modal_list"]
    coeffs: list[float]


class ZeroInit(_Strict):
    kind: Literal["zero"]


InitialBlock = Union[ChiInit, ScaledChiInit, ModalListInit, ZeroInit]


class McBlock(_Strict):
    n_paths: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    t_star: float = Field(1.0, gt=0)
    workers: int = Field(1, ge=1)


class ControlBlock(_Strict):
    target: InitialBlock = Field(default_factory=lambda: ScaledChiInit(kind="scaled_chi", k=1, scale=0.5),
                                 discriminator="kind")
    t1: float = Field(0.5, gt=0)


class OutputBlock(_Strict):
    dir: str = "shmf_out"
    prefix: str = "run"


class ExperimentConfig(_Strict):
    schema_version: Literal[1]
    solver: SolverBlock = Field(default_factory=SolverBlock)
    noise: NoiseBlock = Field(default_factory=NoiseBlock)
    initial: InitialBlock = Field(default_factory=lambda: ZeroInit(kind="zero"), discriminator="kind")
    mc: McBlock = Field(default_factory=McBlock)
    control: ControlBlock = Field(default_factory=ControlBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    # --- builders -------------------------------------------------------
    def basis(self) -> EigenBasis:
        return build_basis(self.solver.n_modes, self.solver.n_quad)

    def spectrum(self, basis: EigenBasis) -> NoiseSpectrum:
        n = self.noise
        if n.kind == "none":
            return silent_spectrum(basis, n.beta_target)
        return make_spectrum(n.kind, n.amplitude, n.exponent, basis, n.beta_target)

    def initial_field(self, basis: EigenBasis, block=None) -> ModalField:
        return initial_field(block or self.initial, basis)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"mc.seed": 3}``; re-validated."""
        data = self.model_dump()
        for key, value in changes.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
        return parse_config(data)


def initial_field(block, basis: EigenBasis) -> ModalField:
    from .blowup_lab import chi

    if block.kind == "chi_k":
        return project(lambda r: chi(block.k, r), basis)
    if block.kind == "scaled_chi":
        return project(lambda r: block.scale * chi(block.k, r), basis)
    if block.kind == "modal_list":
        if len(block.coeffs) > basis.n_modes:
            raise ValidationError(
                f"initial.coeffs: {len(block.coeffs)} coefficients exceed n_modes={basis.n_modes}")
        c = list(block.coeffs) + [0.0] * (basis.n_modes - len(block.coeffs))
        return ModalField(c, basis)
    return ModalField.zeros(basis)


def _format_error(err: PydanticError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValidationError("<root>: config must be a JSON object")
    if "schema_version" not in data:
        raise ValidationError("schema_version: field required")
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticError as e:
        raise ValidationError(_format_error(e)) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})") from None
    return parse_config(data)


def default_config() -> ExperimentConfig:
    return parse_config({"schema_version": SCHEMA_VERSION})
