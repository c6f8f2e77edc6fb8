"""Pydantic request/response models for the unmixing service.

Matrices travel as row-major ``list[list[float]]`` (bands x pixels for
pixel data). ``snr_db = null`` means a noiseless scene; ``q`` accepts a
number greater than one or the string "inf". All indices are 0-based.
"""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, Field, field_validator

Matrix = list[list[float]]

StoppingMode = Literal["residual", "rule1", "rule2", "fixed"]
SweepAxis = Literal["snr", "nmax", "purity", "n-endmembers"]


class SceneParams(BaseModel):
    n_endmembers: int = Field(default=5, ge=1)
    n_pixels: int = Field(default=500, ge=1)
    n_bands: int = Field(default=50, ge=1)
    snr_db: float | None = None  # null = noiseless
    purity: float = Field(default=1.0, gt=0.0, le=1.0)
    pure_repeats: int = Field(default=1, ge=1)

    @field_validator("snr_db")
    @classmethod
    def _finite_snr(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("snr_db must be finite or null")
        return v


class SynthRequest(BaseModel):
    scene: SceneParams = SceneParams()
    seed: int = 0
    endmember_library: Matrix | None = None  # columns sampled when given


class SynthManifest(BaseModel):
    seed: int
    n_endmembers: int
    n_pixels: int
    n_bands: int
    snr_db: float | None
    purity: float
    pure_repeats: int
    endmember_source: str
    noise_bound: float
    package_version: str


class SynthResponse(BaseModel):
    manifest: SynthManifest
    pixels: Matrix
    endmembers: Matrix
    abundances: Matrix
    noise: Matrix
    pure_pixel_indices: list[int]
    pure_pixel_endmembers: list[int]


class UnmixOptions(BaseModel):
    q: float | str = "inf"
    stopping: StoppingMode = "rule2"
    delta: float | None = Field(default=None, ge=0.0)
    delta_multiplier: float = Field(default=2.0, ge=0.0)
    epsilon: float | None = Field(default=None, ge=0.0)
    asf_dr: int | None = Field(default=None, ge=1)
    exact_second_pass: bool = False
    n_iterations: int | None = Field(default=None, ge=1)
    max_endmembers: int | None = Field(default=None, ge=1)
    residual_floor: float = Field(default=1e-9, ge=0.0)

    @field_validator("q")
    @classmethod
    def _parse_q(cls, v):
        if isinstance(v, str):
            if v.lower() in ("inf", "infinity"):
                return math.inf
            raise ValueError("q must be a number > 1 or 'inf'")
        if not v > 1:
            raise ValueError("q must be greater than 1")
        return float(v)

    @field_validator("delta", "delta_multiplier", "epsilon")
    @classmethod
    def _finite(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("value must be finite")
        return v


class GroundTruth(BaseModel):
    endmembers: Matrix
    abundances: Matrix
    pure_pixel_indices: list[int]
    purity: float = Field(default=1.0, gt=0.0, le=1.0)
    noise_bound: float = Field(default=0.0, ge=0.0)


class UnmixRequest(BaseModel):
    pixels: Matrix
    options: UnmixOptions = UnmixOptions()
    ground_truth: GroundTruth | None = None


class TraceStep(BaseModel):
    iteration: int
    index: int
    score: float
    residual_frobenius: float
    stopping_statistic: float | None


class DiagnosticsPayload(BaseModel):
    sigma_min: float
    d_s: float
    eta_proxy: float
    exhaustive_eps_bound: float
    greedy_eps_bound: float
    exhaustive_delta_window: tuple[float, float]
    greedy_delta_window: tuple[float, float]
    separation_radius: float | None = None


class UnmixResponse(BaseModel):
    selected_indices: list[int]
    n_hat: int
    stopped_by: str
    stop_statistic: float | None
    trace: list[TraceStep]
    spectra: Matrix
    epsilon_hat: float | None
    delta: float | None
    asf_dr_dim: int | None
    second_pass_dim: int | None
    detection: bool | None = None
    reference_indices: list[int] | None = None
    matched_endmembers: list[int] | None = None
    recovery_errors: list[float] | None = None
    mrsa_degrees: list[float] | None = None
    diagnostics: DiagnosticsPayload | None = None
    runtime_s: float


class SweepRequest(BaseModel):
    axis: SweepAxis
    values: list[float] = Field(min_length=1)
    trials: int = Field(default=50, ge=1)
    scene: SceneParams = SceneParams()
    options: UnmixOptions = UnmixOptions()
    seed: int = 0
    threads: int = Field(default=1, ge=1)

    @field_validator("values")
    @classmethod
    def _finite_values(cls, v):
        if any(not math.isfinite(x) for x in v):
            raise ValueError("sweep values must be finite")
        return v


class SweepRowPayload(BaseModel):
    value: float
    trials: int
    failures: int
    detection_probability: float
    n_hat_mean: float | None
    n_hat_std: float | None
    runtime_s_mean: float | None


class SweepResponse(BaseModel):
    axis: str
    rows: list[SweepRowPayload]
    seed: int
    runtime_s: float


class OracleRequest(BaseModel):
    pixels: Matrix
    delta: float = Field(default=0.0, ge=0.0)

    @field_validator("delta")
    @classmethod
    def _finite_delta(cls, v):
        if not math.isfinite(v):
            raise ValueError("delta must be finite")
        return v


class OracleResponse(BaseModel):
    indices: list[int]
    cardinality: int
    runtime_s: float


class DiagRequest(BaseModel):
    endmembers: Matrix
    abundances: Matrix
    noise_bound: float = Field(default=0.0, ge=0.0)
    delta: float | None = Field(default=None, ge=0.0)


class HealthResponse(BaseModel):
    status: str
    version: str
