"""Pydantic models for soil parameters, problem definitions, solver configs and reports."""
import math
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


# --- Soil models ---------------------------------------------------------


class _Moisture(BaseModel):
    """Shared moisture bounds."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    K_s: float = Field(gt=0)
    theta_s: float = Field(gt=0, le=1)
    theta_r: float = Field(ge=0)

    @model_validator(mode="after")
    def _check_moisture(self):
        if not self.theta_r < self.theta_s:
            raise ValueError("theta_r must be smaller than theta_s")
        return self


class HaverkampParams(_Moisture):
    """Haverkamp rational WRC/HCF pair."""
    kind: Literal["haverkamp"] = "haverkamp"
    A_h: float = Field(gt=0)
    gamma_h: float = Field(gt=0)
    alpha_h: float = Field(gt=0)
    beta_h: float = Field(gt=0)


class VanGenuchtenParams(_Moisture):
    """Mualem-van Genuchten WRC/HCF pair.

    ``l_vg`` is the pore-connectivity exponent entering the HCF as l/(l-1) and
    (l-1)/l. When omitted it equals ``n_vg``, which is the classical Mualem choice
    m = 1 - 1/n.
    """
    kind: Literal["van_genuchten"] = "van_genuchten"
    alpha_vg: float = Field(gt=0)
    n_vg: float = Field(gt=1)
    l_vg: Optional[float] = Field(default=None, gt=1)

    @property
    def connectivity(self) -> float:
        return self.l_vg if self.l_vg is not None else self.n_vg


class GardnerParams(_Moisture):
    """Gardner exponential WRC/HCF pair."""
    kind: Literal["gardner"] = "gardner"
    alpha_g: float = Field(gt=0)


SimpleSoil = Annotated[
    Union[HaverkampParams, VanGenuchtenParams, GardnerParams],
    Field(discriminator="kind"),
]


class CompositeParams(BaseModel):
    """Retention curve taken from one model, conductivity from another."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["composite"] = "composite"
    retention: SimpleSoil
    conductivity: SimpleSoil

    @property
    def theta_s(self) -> float:
        return self.retention.theta_s

    @property
    def theta_r(self) -> float:
        return self.retention.theta_r

    @property
    def K_s(self) -> float:
        return self.conductivity.K_s


SoilModel = Annotated[
    Union[HaverkampParams, VanGenuchtenParams, GardnerParams, CompositeParams],
    Field(discriminator="kind"),
]


class FeddesParams(BaseModel):
    """Feddes root-uptake stress ramp. Heads in problem units, S_max in 1/time."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    S_max: float = Field(default=0.0, ge=0)
    psi_1: float = -0.1
    psi_2: float = -0.25
    psi_3: float = -5.0
    psi_4: float = -80.0

    @model_validator(mode="after")
    def _check_order(self):
        if not self.psi_4 <= self.psi_3 <= self.psi_2 <= self.psi_1 <= 0:
            raise ValueError("Feddes thresholds must satisfy psi_4 <= psi_3 <= psi_2 <= psi_1 <= 0")
        return self


# --- Geometry and boundary conditions -----------------------------------


class GridSpec(BaseModel):
    """Structured grid definition.

    Cartesian grids take one extent and one count per axis (1-D: z; 2-D: x, z;
    3-D: x, y, z). Cylindrical grids take ``extents = [radius, depth]`` and
    ``cells = [n_r, n_az, n_z]``.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    coordinate_system: Literal["cartesian", "cylindrical"] = "cartesian"
    extents: List[float]
    cells: List[int]

    @model_validator(mode="after")
    def _check_shape(self):
        if self.coordinate_system == "cartesian":
            if not 1 <= len(self.extents) <= 3 or len(self.cells) != len(self.extents):
                raise ValueError("cartesian grids need 1-3 extents and one cell count per extent")
        else:
            if len(self.extents) != 2 or len(self.cells) != 3:
                raise ValueError("cylindrical grids need extents [radius, depth] and cells [n_r, n_az, n_z]")
        return self

    @property
    def axes(self) -> tuple:
        if self.coordinate_system == "cylindrical":
            return ("r", "phi", "z")
        return {1: ("z",), 2: ("x", "z"), 3: ("x", "y", "z")}[len(self.extents)]

    def sides(self) -> List[str]:
        return [f"{axis}_{end}" for axis in self.axes for end in ("min", "max")]


class BoundaryWindow(BaseModel):
    """Restricts a boundary condition to face centres with lower <= coord <= upper."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    axis: str
    lower: float
    upper: float


class IrrigationEvent(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    start: float = Field(ge=0)
    duration: float = Field(gt=0)
    depth: float = Field(ge=0)


class IrrigationSchedule(BaseModel):
    """Water applications at the surface, each spread uniformly over its duration."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    events: List[IrrigationEvent] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_overlap(self):
        ordered = sorted(self.events, key=lambda e: e.start)
        for first, second in zip(ordered, ordered[1:]):
            if first.start + first.duration > second.start:
                raise ValueError("irrigation events must not overlap")
        return self


def _check_table(xs: List[float], ys: List[float], what: str) -> None:
    if len(xs) != len(ys):
        raise ValueError(f"{what} needs as many values as abscissae")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError(f"{what} abscissae must be strictly increasing")


class HeadSchedule(BaseModel):
    """Tabulated boundary head, linear between entries and constant outside them."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    times: List[float] = Field(min_length=1)
    heads: List[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_entries(self):
        _check_table(self.times, self.heads, "head schedule")
        return self


class HeadProfile(BaseModel):
    """Initial head tabulated against elevation and interpolated onto cell centres."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    elevations: List[float] = Field(min_length=1)
    heads: List[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_entries(self):
        _check_table(self.elevations, self.heads, "head profile")
        return self


class BoundaryCondition(BaseModel):
    """Condition applied on one side of the domain.

    ``flux`` is an inward Darcy velocity; a ``schedule`` adds the irrigation rate
    on top of it. A Dirichlet ``head_schedule`` replaces the constant ``head``.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["dirichlet", "flux", "free_drainage", "no_flow", "periodic", "axis"]
    head: Optional[float] = None
    profile: Optional[Literal["tracy_top"]] = None
    head_schedule: Optional[HeadSchedule] = None
    flux: float = 0.0
    schedule: Optional[IrrigationSchedule] = None
    window: Optional[BoundaryWindow] = None

    @model_validator(mode="after")
    def _check_payload(self):
        if self.kind == "dirichlet" and self.head is None and self.profile is None and self.head_schedule is None:
            raise ValueError("dirichlet boundaries need a head, a profile or a head schedule")
        return self


class SoilLayer(BaseModel):
    """Assigns a named soil to cells whose elevation lies in [lower, upper)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    soil: str
    lower: float
    upper: float


class TracyParams(BaseModel):
    """Parameters of the 3-D analytical infiltration problem and its series evaluation."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(default=2.0, gt=0)
    b: float = Field(default=2.0, gt=0)
    c: float = Field(default=2.0, gt=0)
    h_r: float = Field(default=-15.24, lt=0)
    alpha_g: float = Field(default=0.1, gt=0)
    K_s: float = Field(default=1.1, gt=0)
    theta_s: float = 0.5
    theta_r: float = 0.0
    series_terms: int = Field(default=1000, ge=1)
    prefactor: Literal["z_d", "c_d"] = "c_d"
    gamma_denominator: Literal["c", "d"] = "d"
    decay: Literal["gamma", "gamma_over_d"] = "gamma"
    sigma_smoothing: bool = True


class ProblemSpec(BaseModel):
    """Complete definition of one benchmark or user problem."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    unit_system: Literal["cm-s", "m-s"]
    grid: GridSpec
    vertical: Literal["up", "down"] = "up"
    soils: Dict[str, SoilModel]
    layers: List[SoilLayer] = Field(default_factory=list)
    initial_head: float
    # takes precedence over initial_head when set
    initial_profile: Optional[HeadProfile] = None
    boundaries: Dict[str, BoundaryCondition]
    sink: Optional[FeddesParams] = None
    T: float = Field(gt=0)
    dt: float = Field(gt=0)
    static_L: float = Field(default=0.5, gt=0)
    L0: float = Field(default=1e-3, gt=0)
    # "flux" assembles diag(L + sum T) / -T, without the dt/volume scaling
    matrix_form: Literal["literal", "flux"] = "literal"
    tracy: Optional[TracyParams] = None

    @model_validator(mode="after")
    def _check_closure(self):
        if self.T < self.dt:
            raise ValueError("T must be at least dt")
        sides = set(self.grid.sides())
        missing = sorted(sides - set(self.boundaries))
        unknown = sorted(set(self.boundaries) - sides)
        if missing or unknown:
            raise ValueError(f"boundary sides missing={missing} unknown={unknown}")
        for axis in self.grid.axes:
            lo = self.boundaries[f"{axis}_min"].kind == "periodic"
            hi = self.boundaries[f"{axis}_max"].kind == "periodic"
            if lo != hi:
                raise ValueError(f"periodic condition on axis {axis} must be set on both sides")
        if not self.layers and len(self.soils) != 1:
            raise ValueError("layers are required when more than one soil is defined")
        for layer in self.layers:
            if layer.soil not in self.soils:
                raise ValueError(f"layer references unknown soil {layer.soil}")
        return self

    @property
    def steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))


# --- Solver configuration -----------------------------------------------


class LschemeConfig(BaseModel):
    """Adaptive linearisation settings.

    ``L0`` and ``matrix_form`` default to the values carried by the problem.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    L0: Optional[float] = Field(default=None, gt=0)
    matrix_form: Optional[Literal["literal", "flux"]] = None
    rho: float = Field(default=0.1, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    S_max_iters: int = Field(default=500, ge=1)
    dt: Optional[float] = Field(default=None, gt=0)
    cond_threshold: float = Field(default=10.0, gt=1)
    cond_growth: float = Field(default=2.0, gt=1)
    max_cond_doublings: int = Field(default=10, ge=0)
    eps_psi: float = Field(default=1e-12, gt=0)
    adaptive: bool = True
    static_L: Optional[float] = Field(default=None, gt=0)
    face_mean: Literal["arithmetic", "geometric", "harmonic", "upwind"] = "arithmetic"
    interface_mean: Literal["arithmetic", "geometric", "harmonic", "upwind"] = "harmonic"
    damp_oscillations: bool = True
    condition_check: bool = True
    dense_limit: int = Field(default=1500, ge=1)

    @model_validator(mode="after")
    def _check_tolerances(self):
        if self.tol > self.rho:
            raise ValueError("tol must not exceed rho")
        if not self.adaptive and self.static_L is None:
            raise ValueError("static mode needs static_L")
        return self


class ParticleScale(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    particles_per_unit_head: float = Field(default=1e10, gt=0)


class GrwConfig(BaseModel):
    """Global random walk baseline and reference-generation settings."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    static_L: Optional[float] = Field(default=None, gt=0)
    scale: ParticleScale = Field(default_factory=ParticleScale)
    tol: float = Field(default=1e-6, gt=0)
    S_max_iters: int = Field(default=500, ge=1)
    include_initial_state: bool = True
    include_nonconverged: bool = False


class MlpSpec(BaseModel):
    """Network architecture: scalar input, hidden widths, scalar output."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_layers: List[int] = Field(default_factory=lambda: [256, 256, 256], min_length=1)
    slope: float = Field(default=0.01, gt=0, lt=1)

    @model_validator(mode="after")
    def _check_widths(self):
        if any(width < 1 for width in self.hidden_layers):
            raise ValueError("layer widths must be positive")
        return self

    @property
    def layer_sizes(self) -> List[int]:
        return [1, *self.hidden_layers, 1]


class TrainConfig(BaseModel):
    """Plain mini-batch SGD on mean squared error."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=32, ge=1)
    seed: int = 0
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)
    optimizer: Literal["sgd"] = "sgd"


class AugmentConfig(BaseModel):
    """Gaussian augmentation. ``target_rows`` overrides the per-sigma copy count."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_list: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    copies_per_sigma: int = Field(default=2, ge=0)
    target_rows: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_sigmas(self):
        if any(sigma <= 0 for sigma in self.sigma_list):
            raise ValueError("sigmas must be positive")
        return self


class DrwConfig(BaseModel):
    """Data-driven random walk solve settings."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lscheme: LschemeConfig = Field(default_factory=LschemeConfig)
    scale: ParticleScale = Field(default_factory=ParticleScale)
    forward_checkpoint: Optional[str] = None
    inverse_checkpoint: Optional[str] = None
    re_tol: float = Field(default=1e-6, gt=0)
    bias_correction: bool = True
    freeze_conductivity: bool = False
    # "local": source enters through the slope of the inverse map at the cell head;
    # "origin": the inverse map is applied to the head-like source itself
    source_map: Literal["local", "origin"] = "local"


class RetrainConfig(BaseModel):
    """Pretrain/retrain schedule for problems whose boundary data changes with irrigation."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    pretrain_epochs: int = Field(default=3000, ge=1)
    retrain_epochs: int = Field(default=500, ge=1)
    sensor_depth: float = Field(default=0.25, ge=0)
    tracking_tolerance: float = Field(default=0.05, gt=0)


class ExportToggles(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    history: bool = True
    fluxes: bool = True
    step_trace: bool = True


class RunConfig(BaseModel):
    """Top-level run configuration document."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    problem: Union[str, ProblemSpec] = "celia_1d"
    resolution: Literal["full", "reduced", "coarse"] = "full"
    solver: Literal["lscheme", "grw", "drw"] = "drw"
    lscheme: LschemeConfig = Field(default_factory=LschemeConfig)
    grw: GrwConfig = Field(default_factory=GrwConfig)
    drw: DrwConfig = Field(default_factory=DrwConfig)
    mlp: MlpSpec = Field(default_factory=MlpSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    retrain: RetrainConfig = Field(default_factory=RetrainConfig)
    output_dir: Optional[str] = None
    seed: int = 0
    exports: ExportToggles = Field(default_factory=ExportToggles)


# --- Reports and artifact metadata --------------------------------------


class StepReport(BaseModel):
    """Per-time-step iteration record."""
    time_index: int
    iterations: int
    final_re: float
    kappa: Optional[float] = None
    l0_effective: float
    converged: bool
    re_trace: List[float] = Field(default_factory=list)
    contraction_violations: int = 0
    oscillation_corrections: int = 0
    clamped_cells: int = 0
    extrapolated_cells: int = 0


class MassBalanceReport(BaseModel):
    percent: Optional[float]
    status: Literal["ok", "no_flow", "indeterminate"]
    storage_change: float
    sink_volume: float
    influx: float
    influx_by_side: Dict[str, float] = Field(default_factory=dict)
    quadrature: Literal["implicit", "trapezoid"] = "trapezoid"


class RunReport(BaseModel):
    """Summary of a completed solve."""
    problem: str
    solver: str
    config_digest: str = ""
    seed: int = 0
    steps: List[StepReport] = Field(default_factory=list)
    mass_balance: Optional[MassBalanceReport] = None
    mse: Dict[str, float] = Field(default_factory=dict)
    symmetry_defect: Optional[float] = None
    tracking_error: Optional[float] = None
    net_bias: Optional[float] = None
    timings: Dict[str, float] = Field(default_factory=dict)

    @property
    def average_iterations(self) -> float:
        return sum(s.iterations for s in self.steps) / max(len(self.steps), 1)

    @property
    def average_kappa(self) -> Optional[float]:
        values = [s.kappa for s in self.steps if s.kappa is not None and math.isfinite(s.kappa)]
        return sum(values) / len(values) if values else None

    @property
    def average_final_re(self) -> float:
        return sum(s.final_re for s in self.steps) / max(len(self.steps), 1)

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.steps)


class CheckpointMetadata(BaseModel):
    """Self-description stored inside every network checkpoint."""
    format_version: int = 1
    checkpoint_id: str
    parent_id: Optional[str] = None
    direction: Literal["forward", "inverse"]
    layer_sizes: List[int]
    slope: float
    particles_per_unit_head: float
    train_config_digest: str = ""
    epochs_run: int = 0
    problem: Optional[str] = None


__all__ = [
    "HaverkampParams",
    "VanGenuchtenParams",
    "GardnerParams",
    "CompositeParams",
    "SoilModel",
    "FeddesParams",
    "GridSpec",
    "BoundaryWindow",
    "IrrigationEvent",
    "IrrigationSchedule",
    "HeadSchedule",
    "HeadProfile",
    "BoundaryCondition",
    "SoilLayer",
    "TracyParams",
    "ProblemSpec",
    "LschemeConfig",
    "ParticleScale",
    "GrwConfig",
    "MlpSpec",
    "TrainConfig",
    "AugmentConfig",
    "DrwConfig",
    "RetrainConfig",
    "ExportToggles",
    "RunConfig",
    "StepReport",
    "MassBalanceReport",
    "RunReport",
    "CheckpointMetadata",
]
