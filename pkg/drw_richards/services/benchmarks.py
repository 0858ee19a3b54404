"""Named benchmark problems, the 3-D analytical infiltration oracle and irrigation schedules."""
import itertools
import logging
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from drw_richards.errors import ConfigurationError
from drw_richards.models import (
    BoundaryCondition,
    BoundaryWindow,
    CompositeParams,
    FeddesParams,
    GardnerParams,
    GridSpec,
    HaverkampParams,
    HeadSchedule,
    IrrigationEvent,
    IrrigationSchedule,
    ProblemSpec,
    SoilLayer,
    TracyParams,
    VanGenuchtenParams,
)

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0

RESOLUTIONS = ("full", "reduced", "coarse")


def _bc(kind: str, **kwargs) -> BoundaryCondition:
    return BoundaryCondition(kind=kind, **kwargs)


def _check_resolution(resolution: str) -> None:
    if resolution not in RESOLUTIONS:
        raise ConfigurationError(f"Unknown resolution {resolution!r}; expected one of {list(RESOLUTIONS)}")


# --- irrigation -------------------------------------------------------------


def irrigation_flux(schedule: IrrigationSchedule, t: float) -> float:
    """Irrigation rate at time ``t``: depth/duration inside an event, 0 elsewhere."""
    for event in schedule.events:
        if event.start <= t < event.start + event.duration:
            return event.depth / event.duration
    return 0.0


def scheduled_head(schedule: HeadSchedule, t: float) -> float:
    """Boundary head at time ``t``, piecewise linear in the tabulated entries."""
    return float(np.interp(t, schedule.times, schedule.heads))


def synthetic_schedule() -> IrrigationSchedule:
    """Two full-day applications: 1.81 mm on day 15 and 1.58 mm on day 30 (metres)."""
    return IrrigationSchedule(events=[
        IrrigationEvent(start=14 * SECONDS_PER_DAY, duration=SECONDS_PER_DAY, depth=1.81e-3),
        IrrigationEvent(start=29 * SECONDS_PER_DAY, duration=SECONDS_PER_DAY, depth=1.58e-3),
    ])


# --- 3-D analytical oracle --------------------------------------------------


def _tracy_beta(params: TracyParams) -> float:
    return float(np.sqrt(params.alpha_g ** 2 / 4 + (np.pi / params.a) ** 2 + (np.pi / params.b) ** 2))


def _tracy_d(params: TracyParams) -> float:
    return params.alpha_g * (params.theta_s - params.theta_r) / params.K_s


def _tracy_gamma(params: TracyParams, lam: np.ndarray) -> np.ndarray:
    denominator = _tracy_d(params) if params.gamma_denominator == "d" else params.c
    return (lam ** 2 + _tracy_beta(params) ** 2) / denominator


def _tracy_rate(params: TracyParams, gamma: np.ndarray) -> np.ndarray:
    return gamma if params.decay == "gamma" else gamma / _tracy_d(params)


def tracy_top_boundary(params: TracyParams, x, y) -> np.ndarray:
    """Head prescribed on the top face z = c."""
    alpha = params.alpha_g
    h0 = 1.0 - np.exp(alpha * params.h_r)
    shape = np.sin(np.pi * np.asarray(x, dtype=float) / params.a) * np.sin(np.pi * np.asarray(y, dtype=float) / params.b)
    return np.log(np.exp(alpha * params.h_r) + h0 * shape) / alpha


def tracy_analytical(params: TracyParams, x, y, z, t: float) -> np.ndarray:
    """Pressure head of the 3-D Gardner infiltration solution, series truncated at ``series_terms``.

    Inputs broadcast against each other. The steady sinh ratio is evaluated in a
    form that cannot overflow; a non-positive logarithm argument yields NaN.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    alpha, c = params.alpha_g, params.c
    beta = _tracy_beta(params)
    d = _tracy_d(params)
    h0 = 1.0 - np.exp(alpha * params.h_r)

    steady = np.exp(beta * (z - c)) * np.expm1(-2.0 * beta * z) / np.expm1(-2.0 * beta * c)

    k = np.arange(1, params.series_terms + 1, dtype=float)
    lam = k * np.pi / c
    gamma = _tracy_gamma(params, lam)
    weights = (-1.0) ** k * lam / gamma * np.exp(-_tracy_rate(params, gamma) * t)
    if params.sigma_smoothing:
        weights = weights * np.sinc(k / (params.series_terms + 1))
    series = np.sin(z[..., None] * lam) @ weights
    if params.prefactor == "c_d":
        transient = 2.0 / (c * d) * series
    else:
        transient = np.divide(2.0 * series, z * d, out=np.zeros_like(z), where=z > 0)

    shape = np.sin(np.pi * x / params.a) * np.sin(np.pi * y / params.b)
    argument = np.exp(alpha * params.h_r) + h0 * shape * np.exp(alpha * (c - z) / 2.0) * (steady + transient)
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = np.where(argument > 0, np.log(np.where(argument > 0, argument, 1.0)) / alpha, np.nan)
    return psi


def tracy_term_magnitudes(params: TracyParams, t: float) -> np.ndarray:
    """Envelope |lambda_k / gamma_k| exp(-r_k t) of the transient series terms."""
    k = np.arange(1, params.series_terms + 1, dtype=float)
    lam = k * np.pi / params.c
    gamma = _tracy_gamma(params, lam)
    return np.abs(lam / gamma) * np.exp(-_tracy_rate(params, gamma) * t)


def tracy_sample_points(params: TracyParams, per_axis: int = 5):
    """Interior sample grid with ``per_axis`` points per axis, away from every face."""
    fractions = np.arange(1, per_axis + 1) / (per_axis + 1)
    return np.meshgrid(fractions * params.a, fractions * params.b, fractions * params.c, indexing="ij")


def compare_tracy_variants(params: Optional[TracyParams] = None, per_axis: int = 5) -> pd.DataFrame:
    """Initial-condition error of every series variant on the interior sample grid.

    At t = 0 the solution must reproduce h_r everywhere, so the max deviation from
    h_r measures how consistent a variant is. NaN evaluations count as infinite.
    """
    params = params or TracyParams()
    x, y, z = tracy_sample_points(params, per_axis)
    rows = []
    for prefactor, denominator, decay in itertools.product(("c_d", "z_d"), ("d", "c"), ("gamma", "gamma_over_d")):
        variant = params.model_copy(update={
            "prefactor": prefactor, "gamma_denominator": denominator, "decay": decay,
        })
        psi = tracy_analytical(variant, x, y, z, 0.0)
        error = float(np.max(np.abs(psi - params.h_r))) if np.all(np.isfinite(psi)) else float("inf")
        rows.append({
            "prefactor": prefactor,
            "gamma_denominator": denominator,
            "decay": decay,
            "initial_error": error,
        })
    return pd.DataFrame(rows)


def pin_tracy_variant(params: Optional[TracyParams] = None, per_axis: int = 5) -> TracyParams:
    """Return ``params`` switched to the variant with the smallest initial-condition error.

    Ties keep the first variant in enumeration order.
    """
    params = params or TracyParams()
    table = compare_tracy_variants(params, per_axis)
    best = table.loc[table["initial_error"].idxmin()]
    logger.info(
        f"Pinned analytical variant prefactor={best['prefactor']} gamma_denominator={best['gamma_denominator']} "
        f"decay={best['decay']} (initial error {best['initial_error']:.3e} m)"
    )
    return params.model_copy(update={
        "prefactor": best["prefactor"],
        "gamma_denominator": best["gamma_denominator"],
        "decay": best["decay"],
    })


def tracy_grid_frame(params: TracyParams, cells: List[int], t: float) -> pd.DataFrame:
    """Analytical heads at the cell centres of a uniform grid, as plot-ready columns."""
    nx, ny, nz = cells
    xs = (np.arange(nx) + 0.5) * params.a / nx
    ys = (np.arange(ny) + 0.5) * params.b / ny
    zs = (np.arange(nz) + 0.5) * params.c / nz
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    psi = tracy_analytical(params, X, Y, Z, t)
    return pd.DataFrame({
        "cell_id": np.arange(X.size),
        "x": X.ravel(),
        "y": Y.ravel(),
        "z": Z.ravel(),
        "t": t,
        "psi": psi.ravel(),
    })


# --- named problems ---------------------------------------------------------


def celia_1d(resolution: str = "full") -> ProblemSpec:
    """40 cm Haverkamp column wetted from the top (cm, s)."""
    _check_resolution(resolution)
    cells, dt = {"full": (100, 1.0), "reduced": (40, 1.0), "coarse": (40, 9.0)}[resolution]
    soil = HaverkampParams(
        K_s=0.00944, theta_s=0.287, theta_r=0.075,
        A_h=1.175e6, gamma_h=4.74, alpha_h=1.611e6, beta_h=3.96,
    )
    return ProblemSpec(
        name="celia_1d",
        unit_system="cm-s",
        grid=GridSpec(extents=[40.0], cells=[cells]),
        vertical="up",
        soils={"sand": soil},
        initial_head=-61.5,
        boundaries={
            "z_min": _bc("dirichlet", head=-61.5),
            "z_max": _bc("dirichlet", head=-20.7),
        },
        T=360.0,
        dt=dt,
        static_L=3.5,
    )


def hills_layered_1d(resolution: str = "full") -> ProblemSpec:
    """Two 30 cm van Genuchten layers, sand over clay loam (cm, s)."""
    _check_resolution(resolution)
    cells = {"full": 60, "reduced": 30, "coarse": 30}[resolution]
    berino = VanGenuchtenParams(theta_r=0.029, theta_s=0.366, alpha_vg=0.028, n_vg=2.239, K_s=541.0 / SECONDS_PER_DAY)
    glendale = VanGenuchtenParams(theta_r=0.106, theta_s=0.469, alpha_vg=0.010, n_vg=1.395, K_s=13.1 / SECONDS_PER_DAY)
    return ProblemSpec(
        name="hills_layered_1d",
        unit_system="cm-s",
        grid=GridSpec(extents=[60.0], cells=[cells]),
        vertical="up",
        soils={"glendale": glendale, "berino": berino},
        layers=[
            SoilLayer(soil="glendale", lower=0.0, upper=30.0),
            SoilLayer(soil="berino", lower=30.0, upper=60.0),
        ],
        initial_head=-1000.0,
        boundaries={
            "z_min": _bc("dirichlet", head=-1000.0),
            "z_max": _bc("dirichlet", head=-75.0),
        },
        T=450.0,
        dt=1.0,
        static_L=5.0,
    )


def loam() -> VanGenuchtenParams:
    return VanGenuchtenParams(K_s=2.89e-6, theta_s=0.43, theta_r=0.078, alpha_vg=3.6, n_vg=1.56)


def infiltration_2d(resolution: str = "full") -> ProblemSpec:
    """1 m x 1 m loam section fed by a saturated strip at the surface (m, s; z points down)."""
    _check_resolution(resolution)
    n, dt = {"full": (50, 10.0), "reduced": (25, 10.0), "coarse": (17, 2520.0)}[resolution]
    return ProblemSpec(
        name="infiltration_2d",
        unit_system="m-s",
        grid=GridSpec(extents=[1.0, 1.0], cells=[n, n]),
        vertical="down",
        soils={"loam": loam()},
        initial_head=-10.0,
        boundaries={
            "x_min": _bc("no_flow"),
            "x_max": _bc("no_flow"),
            "z_min": _bc("dirichlet", head=0.0, window=BoundaryWindow(axis="x", lower=0.46, upper=0.54)),
            "z_max": _bc("no_flow"),
        },
        T=1.26e4,
        dt=dt,
        static_L=0.5,
        L0=1e-7,
        matrix_form="flux",
    )


def tracy_3d(resolution: str = "reduced", retention: str = "van_genuchten") -> ProblemSpec:
    """2 m cube with the sinusoidal top head of the analytical solution (m, s).

    ``retention`` selects the moisture curve paired with the Gardner conductivity:
    ``van_genuchten`` (alpha 0.1 1/m, n 2) or ``gardner``.
    """
    _check_resolution(resolution)
    n, dt = {"full": (20, 3600.0), "reduced": (10, 3600.0), "coarse": (6, 17280.0)}[resolution]
    tracy = TracyParams()
    conductivity = GardnerParams(K_s=tracy.K_s, theta_s=tracy.theta_s, theta_r=tracy.theta_r, alpha_g=tracy.alpha_g)
    if retention == "gardner":
        soil = conductivity
    elif retention == "van_genuchten":
        soil = CompositeParams(
            retention=VanGenuchtenParams(
                K_s=tracy.K_s, theta_s=tracy.theta_s, theta_r=tracy.theta_r, alpha_vg=0.1, n_vg=2.0,
            ),
            conductivity=conductivity,
        )
    else:
        raise ConfigurationError(f"Unknown retention model {retention!r}")
    boundaries = {side: _bc("dirichlet", head=tracy.h_r) for side in ("x_min", "x_max", "y_min", "y_max", "z_min")}
    boundaries["z_max"] = _bc("dirichlet", profile="tracy_top")
    return ProblemSpec(
        name="tracy_3d",
        unit_system="m-s",
        grid=GridSpec(extents=[tracy.a, tracy.b, tracy.c], cells=[n, n, n]),
        vertical="up",
        soils={"gardner": soil},
        initial_head=tracy.h_r,
        boundaries=boundaries,
        T=86400.0,
        dt=dt,
        static_L=0.5,
        L0=1e-2,
        matrix_form="flux",
        tracy=tracy,
    )


def cylindrical_field(resolution: str = "reduced") -> ProblemSpec:
    """0.1 m radius, 0.25 m deep soil cylinder under irrigation with root uptake (m, s)."""
    _check_resolution(resolution)
    cells = {"full": [6, 40, 22], "reduced": [3, 8, 6], "coarse": [3, 8, 6]}[resolution]
    return ProblemSpec(
        name="cylindrical_field",
        unit_system="m-s",
        grid=GridSpec(coordinate_system="cylindrical", extents=[0.1, 0.25], cells=cells),
        vertical="up",
        soils={"loam": loam()},
        initial_head=-1.0,
        boundaries={
            "r_min": _bc("axis"),
            "r_max": _bc("no_flow"),
            "phi_min": _bc("periodic"),
            "phi_max": _bc("periodic"),
            "z_min": _bc("free_drainage"),
            "z_max": _bc("flux", schedule=synthetic_schedule()),
        },
        sink=FeddesParams(S_max=5e-8),
        T=35 * SECONDS_PER_DAY,
        dt=3600.0,
        static_L=0.5,
        L0=1e-11,
        matrix_form="flux",
    )


BENCHMARKS: Dict[str, Callable[..., ProblemSpec]] = {
    "celia_1d": celia_1d,
    "hills_layered_1d": hills_layered_1d,
    "infiltration_2d": infiltration_2d,
    "tracy_3d": tracy_3d,
    "cylindrical_field": cylindrical_field,
}


def load_problem(source: Union[str, dict, ProblemSpec], resolution: str = "full") -> ProblemSpec:
    """Resolve a benchmark name or an inline problem mapping to a ProblemSpec.

    Raises:
        ConfigurationError: For unknown names or malformed mappings; the message
            lists missing keys.
    """
    if isinstance(source, ProblemSpec):
        return source
    if isinstance(source, str):
        builder = BENCHMARKS.get(source)
        if builder is None:
            raise ConfigurationError(f"Unknown problem {source!r}; expected one of {sorted(BENCHMARKS)}")
        return builder(resolution)
    try:
        return ProblemSpec.model_validate(source)
    except ValidationError as e:
        missing = [".".join(str(p) for p in err["loc"]) for err in e.errors() if err["type"] == "missing"]
        detail = f" missing keys: {missing}" if missing else ""
        raise ConfigurationError(f"Malformed problem definition:{detail} {e.error_count()} error(s)") from e
