"""Closed-form retention curves, conductivity functions and the Feddes sink.

All evaluators are vectorised over numpy arrays of pressure head. Heads above zero
are clamped to the saturated plateau (theta_s, K_s).
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from pydantic import TypeAdapter, ValidationError

from drw_richards.errors import ParameterError
from drw_richards.models import (
    CompositeParams,
    FeddesParams,
    GardnerParams,
    HaverkampParams,
    SoilModel,
    VanGenuchtenParams,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SE_FLOOR = 1e-12

_soil_adapter = TypeAdapter(SoilModel)


@dataclass(frozen=True)
class CapacityResult:
    """Moisture capacity values with a mask of points taken at the saturation kink."""
    values: np.ndarray
    one_sided: np.ndarray


def parse_soil(payload: dict) -> SoilModel:
    """Validate a soil parameter mapping carrying a ``kind`` discriminator.

    Raises:
        ParameterError: If the payload violates a model invariant.
    """
    try:
        return _soil_adapter.validate_python(payload)
    except ValidationError as e:
        raise ParameterError(f"Invalid soil parameters: {e}") from e


def _suction(psi: ArrayLike) -> np.ndarray:
    return np.abs(np.minimum(np.asarray(psi, dtype=float), 0.0))


def _vg_saturation(model: VanGenuchtenParams, psi: ArrayLike) -> np.ndarray:
    m = 1.0 - 1.0 / model.n_vg
    return (1.0 + (model.alpha_vg * _suction(psi)) ** model.n_vg) ** (-m)


def water_content(model: SoilModel, psi: ArrayLike) -> np.ndarray:
    """Volumetric moisture theta(psi).

    Args:
        model: Soil parameter set.
        psi: Pressure head in the model's length unit.

    Returns:
        Moisture in [theta_r, theta_s], same shape as ``psi``.
    """
    if isinstance(model, CompositeParams):
        return water_content(model.retention, psi)
    span = model.theta_s - model.theta_r
    if isinstance(model, HaverkampParams):
        return model.theta_r + model.alpha_h * span / (model.alpha_h + _suction(psi) ** model.beta_h)
    if isinstance(model, VanGenuchtenParams):
        return model.theta_r + span * _vg_saturation(model, psi)
    if isinstance(model, GardnerParams):
        return model.theta_r + span * np.exp(-model.alpha_g * _suction(psi))
    raise ParameterError(f"Unsupported soil model: {type(model).__name__}")


def hydraulic_conductivity(model: SoilModel, psi: ArrayLike) -> np.ndarray:
    """Unsaturated conductivity K(psi), in (0, K_s].

    The Mualem-van Genuchten branch evaluates K(theta(psi)) with effective
    saturation clamped to [1e-12, 1] and connectivity exponent ``l_vg``.
    """
    if isinstance(model, CompositeParams):
        return hydraulic_conductivity(model.conductivity, psi)
    if isinstance(model, HaverkampParams):
        return model.K_s * model.A_h / (model.A_h + _suction(psi) ** model.gamma_h)
    if isinstance(model, GardnerParams):
        return model.K_s * np.exp(-model.alpha_g * _suction(psi))
    if isinstance(model, VanGenuchtenParams):
        theta = water_content(model, psi)
        se = np.clip((theta - model.theta_r) / (model.theta_s - model.theta_r), SE_FLOOR, 1.0)
        l = model.connectivity
        inner = np.exp(l / (l - 1.0) * np.log(se))
        # 1 - (1 - inner)^((l-1)/l), kept accurate for tiny inner
        outer = -np.expm1((l - 1.0) / l * np.log1p(-np.minimum(inner, 1.0)))
        k = model.K_s * np.sqrt(se) * outer ** 2
        return np.maximum(k, np.finfo(float).tiny)
    raise ParameterError(f"Unsupported soil model: {type(model).__name__}")


def moisture_capacity_detailed(model: SoilModel, psi: ArrayLike) -> CapacityResult:
    """dtheta/dpsi with saturation-point flags.

    At psi >= 0 the derivative of the unsaturated branch is taken from below
    (psi -> 0-) and the point is flagged in ``one_sided``.
    """
    psi = np.asarray(psi, dtype=float)
    one_sided = psi >= 0.0
    if isinstance(model, CompositeParams):
        return CapacityResult(moisture_capacity_detailed(model.retention, psi).values, one_sided)
    s = _suction(psi)
    span = model.theta_s - model.theta_r
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(model, HaverkampParams):
            b = model.beta_h
            values = model.alpha_h * span * b * s ** (b - 1.0) / (model.alpha_h + s ** b) ** 2
        elif isinstance(model, VanGenuchtenParams):
            n = model.n_vg
            m = 1.0 - 1.0 / n
            a = model.alpha_vg
            values = span * m * n * a ** n * s ** (n - 1.0) * (1.0 + (a * s) ** n) ** (-m - 1.0)
        elif isinstance(model, GardnerParams):
            values = model.alpha_g * span * np.exp(-model.alpha_g * s)
        else:
            raise ParameterError(f"Unsupported soil model: {type(model).__name__}")
    return CapacityResult(np.asarray(values, dtype=float), one_sided)


def moisture_capacity(model: SoilModel, psi: ArrayLike) -> np.ndarray:
    """dtheta/dpsi (1/length), nonnegative."""
    return moisture_capacity_detailed(model, psi).values


def feddes_stress(params: FeddesParams, psi: ArrayLike) -> np.ndarray:
    """Dimensionless stress factor sigma(psi) in [0, 1]."""
    psi = np.asarray(psi, dtype=float)
    sigma = np.where((psi >= params.psi_3) & (psi <= params.psi_2), 1.0, 0.0)
    if params.psi_1 > params.psi_2:
        wet = (psi > params.psi_2) & (psi <= params.psi_1)
        sigma = np.where(wet, (params.psi_1 - psi) / (params.psi_1 - params.psi_2), sigma)
    if params.psi_3 > params.psi_4:
        dry = (psi >= params.psi_4) & (psi < params.psi_3)
        sigma = np.where(dry, (psi - params.psi_4) / (params.psi_3 - params.psi_4), sigma)
    return sigma


def feddes_sink(params: FeddesParams, psi: ArrayLike) -> np.ndarray:
    """Root water uptake rate S = sigma(psi) * S_max (1/time)."""
    return feddes_stress(params, psi) * params.S_max
