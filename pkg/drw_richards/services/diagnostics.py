"""Post-processing of solve histories: mass balance, field errors, symmetry and comparison tables."""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Literal, Optional, Union

import numpy as np
import pandas as pd

from drw_richards.errors import GridError, ParameterError
from drw_richards.models import MassBalanceReport, RunReport
from drw_richards.services.lscheme import SolveResult
from drw_richards.services.mesh import Grid
from drw_richards.services.problem import Problem

logger = logging.getLogger(__name__)

MB_GUARD = 1e-14


def _integrate(rate: np.ndarray, dt: float, quadrature: str) -> np.ndarray:
    """Time integral of a per-row rate history whose row 0 is the initial state."""
    rate = np.asarray(rate, dtype=float)
    if quadrature == "implicit":
        return np.sum(rate[1:], axis=0) * dt
    if quadrature == "trapezoid":
        return np.sum(0.5 * (rate[1:] + rate[:-1]), axis=0) * dt
    raise ParameterError(f"Unknown quadrature: {quadrature}")


def mass_balance(result: SolveResult, problem: Problem,
                 quadrature: Literal["implicit", "trapezoid"] = "trapezoid") -> MassBalanceReport:
    """Moisture gain plus extracted sink volume over the net boundary influx, in percent.

    The default trapezoid rule averages the rates at both ends of each step. The
    implicit quadrature takes the end-of-step rates, matching backward Euler,
    so a fully converged run balances to 100% under it. When the influx vanishes the
    run is reported as ``no_flow`` (100%) if nothing changed, else ``indeterminate``.
    """
    vol = problem.grid.volumes
    storage = float(np.sum((result.theta[-1] - result.theta[0]) * vol))
    sink = float(_integrate(result.sink_rate, problem.dt, quadrature))
    by_side = _integrate(result.boundary_influx, problem.dt, quadrature)
    influx = float(np.sum(by_side))
    gained = storage + sink
    breakdown = {side: float(v) for side, v in zip(result.sides, by_side)}

    if abs(influx) < MB_GUARD:
        if abs(gained) < MB_GUARD:
            percent, status = 100.0, "no_flow"
        else:
            percent, status = None, "indeterminate"
            logger.warning(f"Mass balance of {result.problem} is indeterminate: no net influx but {gained:.3e} gained")
    else:
        percent, status = 100.0 * gained / influx, "ok"
        logger.info(f"Mass balance of {result.solver} on {result.problem}: {percent:.4f}%")
    return MassBalanceReport(
        percent=percent,
        status=status,
        storage_change=storage,
        sink_volume=sink,
        influx=influx,
        influx_by_side=breakdown,
        quadrature=quadrature,
    )


@dataclass(frozen=True)
class FieldError:
    """Absolute MSE, per-cell relative difference (ref - num)/ref and the cells where ref = 0."""
    mse: float
    relative: np.ndarray
    flagged: np.ndarray

    @property
    def relative_mse(self) -> float:
        valid = ~self.flagged
        return float(np.mean(self.relative[valid] ** 2)) if np.any(valid) else float("nan")


def mse_field(numerical, reference) -> FieldError:
    """Compare a numerical field to a reference on the same cells.

    Raises:
        ParameterError: If the shapes differ or the fields are empty.
    """
    numerical = np.asarray(numerical, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if numerical.shape != reference.shape:
        raise ParameterError(f"Field shapes differ: {numerical.shape} vs {reference.shape}")
    if numerical.size == 0:
        raise ParameterError("Cannot compare empty fields")
    flagged = reference == 0
    relative = np.full(reference.shape, np.nan)
    np.divide(reference - numerical, reference, out=relative, where=~flagged)
    if np.any(flagged):
        logger.debug(f"{int(np.count_nonzero(flagged))} cells with zero reference excluded from relative error")
    return FieldError(mse=float(np.mean((numerical - reference) ** 2)), relative=relative, flagged=flagged)


def symmetry_defect(field, grid: Grid, axis: Union[int, str] = "x", eps: float = 1e-12) -> float:
    """max |f(p) - f(mirror(p))| / max(|f(p)|, eps) over cells mirrored about the grid centre.

    Raises:
        GridError: If the grid is not Cartesian or ``axis`` does not exist.
    """
    if grid.coordinate_system != "cartesian":
        raise GridError("Mirror symmetry is only defined on Cartesian grids")
    if isinstance(axis, str) and axis not in grid.axes:
        raise GridError(f"Grid has no axis {axis}; axes are {grid.axes}")
    field = np.asarray(field, dtype=float)
    mirrored = field[grid.mirror_permutation(axis)]
    return float(np.max(np.abs(field - mirrored) / np.maximum(np.abs(field), eps)))


def azimuthal_defect(field, grid: Grid, eps: float = 1e-12) -> float:
    """Largest relative spread of a field around each (r, z) ring of a cylindrical grid.

    Raises:
        GridError: If the grid is not cylindrical.
    """
    if grid.coordinate_system != "cylindrical":
        raise GridError("Azimuthal defect needs a cylindrical grid")
    rings = np.asarray(field, dtype=float).reshape(grid.shape)
    spread = rings.max(axis=1) - rings.min(axis=1)
    scale = np.maximum(np.abs(rings).max(axis=1), eps)
    return float(np.max(spread / scale))


def profile_deviation(z_a, psi_a, z_b, psi_b) -> float:
    """Max-norm distance between two profiles, with ``b`` interpolated onto the centres of ``a``.

    Only centres of ``a`` inside the span of ``z_b`` are compared.
    """
    z_a, psi_a = np.asarray(z_a, dtype=float), np.asarray(psi_a, dtype=float)
    z_b, psi_b = np.asarray(z_b, dtype=float), np.asarray(psi_b, dtype=float)
    order = np.argsort(z_b)
    z_b, psi_b = z_b[order], psi_b[order]
    inside = (z_a >= z_b[0]) & (z_a <= z_b[-1])
    if not np.any(inside):
        raise ParameterError("Profiles do not overlap")
    return float(np.max(np.abs(psi_a[inside] - np.interp(z_a[inside], z_b, psi_b))))


def slice_at(grid: Grid, field, axis: Union[int, str], value: float) -> pd.DataFrame:
    """Cells of the layer nearest to ``axis = value`` with their coordinates and field values."""
    k = grid.axes.index(axis) if isinstance(axis, str) else int(axis)
    if not 0 <= k < grid.dim:
        raise GridError(f"Axis {axis} out of range for a {grid.dim}-D grid")
    coords = grid.centers[:, k]
    layer = coords[np.argmin(np.abs(coords - value))]
    cells = np.flatnonzero(np.isclose(coords, layer, rtol=0.0, atol=1e-12))
    frame = pd.DataFrame({"cell_id": cells})
    for j, name in enumerate(grid.axes):
        frame[name] = grid.centers[cells, j]
    frame["value"] = np.asarray(field, dtype=float)[cells]
    return frame


def sensor_series(result: SolveResult, problem: Problem, depth: float) -> np.ndarray:
    """Volume-weighted mean head of the cell layer nearest ``depth`` below the top, per stored row."""
    elevation = problem.elevation
    target = float(np.max(problem.face_elevation)) - depth
    layer = elevation[np.argmin(np.abs(elevation - target))]
    cells = np.flatnonzero(np.isclose(elevation, layer, rtol=0.0, atol=1e-12))
    return np.average(result.psi[:, cells], axis=1, weights=problem.grid.volumes[cells])


def tracking_error(result: SolveResult, target: SolveResult, problem: Problem, depth: float,
                   eps: float = 1e-12) -> float:
    """max_t |s(t) - s_target(t)| / max(|s_target(t)|, eps) for the sensor series at ``depth``.

    Raises:
        ParameterError: If the two histories have different lengths.
    """
    if result.psi.shape != target.psi.shape:
        raise ParameterError(f"History shapes differ: {result.psi.shape} vs {target.psi.shape}")
    s = sensor_series(result, problem, depth)
    s_target = sensor_series(target, problem, depth)
    return float(np.max(np.abs(s - s_target) / np.maximum(np.abs(s_target), eps)))


def comparison_table(reports: Union[Dict[str, RunReport], Iterable[RunReport]]) -> pd.DataFrame:
    """One row per run: iterations, relative error, condition number and mass balance."""
    items = reports.items() if isinstance(reports, dict) else ((r.solver, r) for r in reports)
    rows = []
    for label, report in items:
        mb: Optional[MassBalanceReport] = report.mass_balance
        rows.append({
            "method": label,
            "problem": report.problem,
            "solver": report.solver,
            "steps": len(report.steps),
            "average_iterations": report.average_iterations,
            "average_final_re": report.average_final_re,
            "average_kappa": report.average_kappa,
            "mass_balance_percent": mb.percent if mb is not None else None,
            "mass_balance_status": mb.status if mb is not None else None,
            "all_converged": report.all_converged,
            "net_bias": report.net_bias,
            "symmetry_defect": report.symmetry_defect,
            "tracking_error": report.tracking_error,
            **{f"mse_{name}": value for name, value in report.mse.items()},
        })
    return pd.DataFrame(rows)
