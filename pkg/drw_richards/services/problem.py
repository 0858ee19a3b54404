"""Compilation of a ProblemSpec into per-cell and per-face arrays on a grid."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from drw_richards.errors import ConfigurationError
from drw_richards.models import HeadSchedule, IrrigationSchedule, ProblemSpec, SoilModel
from drw_richards.services import soil_models
from drw_richards.services.benchmarks import irrigation_flux, scheduled_head, tracy_top_boundary
from drw_richards.services.mesh import Grid, build_cartesian_grid, build_cylindrical_grid

logger = logging.getLogger(__name__)

FACE_INTERIOR = 0
FACE_DIRICHLET = 1
FACE_FLUX = 2
FACE_DRAINAGE = 3
FACE_NO_FLOW = 4

_KIND_CODES = {
    "dirichlet": FACE_DIRICHLET,
    "flux": FACE_FLUX,
    "free_drainage": FACE_DRAINAGE,
    "no_flow": FACE_NO_FLOW,
    "axis": FACE_NO_FLOW,
}

WINDOW_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BoundaryState:
    """Boundary data at one instant: inflow velocity, Dirichlet head and K at that head."""
    time: float
    inflow: np.ndarray
    face_head: np.ndarray
    conductivity: np.ndarray


def _boundary_conductivity(soils: Tuple[SoilModel, ...], face_soil: np.ndarray, faces: np.ndarray,
                           heads: np.ndarray, out: np.ndarray) -> np.ndarray:
    for k, soil in enumerate(soils):
        chosen = faces[face_soil[faces] == k]
        out[chosen] = soil_models.hydraulic_conductivity(soil, heads[chosen])
    return out


@dataclass(frozen=True, eq=False)
class Problem:
    """A ProblemSpec resolved on its grid.

    ``face_head`` and ``boundary_conductivity`` hold the boundary data at t = 0;
    ``boundary_state`` evaluates it at any time.
    """
    spec: ProblemSpec
    grid: Grid
    soils: Tuple[SoilModel, ...]
    soil_index: np.ndarray
    elevation: np.ndarray
    face_elevation: np.ndarray
    initial_head: np.ndarray
    face_kind: np.ndarray
    face_head: np.ndarray
    face_flux: np.ndarray
    material_interface: np.ndarray
    boundary_conductivity: np.ndarray
    schedules: Tuple[Tuple[np.ndarray, IrrigationSchedule], ...]
    dt: float
    steps: int
    head_schedules: Tuple[Tuple[np.ndarray, HeadSchedule], ...] = ()

    @property
    def name(self) -> str:
        return self.spec.name

    def time(self, m: int) -> float:
        return m * self.dt

    def _per_cell(self, fn, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        if len(self.soils) == 1:
            return np.asarray(fn(self.soils[0], psi), dtype=float)
        out = np.empty_like(psi)
        for k, soil in enumerate(self.soils):
            mask = self.soil_index == k
            out[mask] = fn(soil, psi[mask])
        return out

    def water_content(self, psi: np.ndarray) -> np.ndarray:
        return self._per_cell(soil_models.water_content, psi)

    def conductivity(self, psi: np.ndarray) -> np.ndarray:
        return self._per_cell(soil_models.hydraulic_conductivity, psi)

    def capacity(self, psi: np.ndarray) -> np.ndarray:
        return self._per_cell(soil_models.moisture_capacity, psi)

    def sink_rate(self, psi: np.ndarray) -> np.ndarray:
        if self.spec.sink is None:
            return np.zeros_like(np.asarray(psi, dtype=float))
        return soil_models.feddes_sink(self.spec.sink, psi)

    def inflow_velocity(self, t: float) -> np.ndarray:
        """Inward Darcy velocity on flux faces at time ``t``."""
        flux = self.face_flux.copy()
        for faces, schedule in self.schedules:
            flux[faces] += irrigation_flux(schedule, t)
        return flux

    def boundary_state(self, t: float) -> BoundaryState:
        """Inflow, Dirichlet heads and boundary conductivity at time ``t``."""
        face_head, conductivity = self.face_head, self.boundary_conductivity
        if self.head_schedules:
            face_head = face_head.copy()
            conductivity = conductivity.copy()
            for faces, schedule in self.head_schedules:
                face_head[faces] = scheduled_head(schedule, t)
                _boundary_conductivity(self.soils, self.soil_index[self.grid.owner], faces, face_head, conductivity)
        return BoundaryState(time=t, inflow=self.inflow_velocity(t), face_head=face_head, conductivity=conductivity)


def build_grid(spec: ProblemSpec) -> Grid:
    tags = {side: bc.kind for side, bc in spec.boundaries.items()}
    g = spec.grid
    if g.coordinate_system == "cylindrical":
        radius, depth = g.extents
        return build_cylindrical_grid(radius, depth, *g.cells, boundary_tags=tags)
    return build_cartesian_grid(g.extents, g.cells, boundary_tags=tags)


def _assign_soils(spec: ProblemSpec, grid: Grid) -> Tuple[Tuple[SoilModel, ...], np.ndarray]:
    names = list(spec.soils)
    soils = tuple(spec.soils[name] for name in names)
    if not spec.layers:
        return soils, np.zeros(grid.n_cells, dtype=np.int64)
    vertical = grid.centers[:, -1]
    index = np.full(grid.n_cells, -1, dtype=np.int64)
    top = max(layer.upper for layer in spec.layers)
    for layer in spec.layers:
        inside = (vertical >= layer.lower) & ((vertical < layer.upper) | ((layer.upper == top) & (vertical <= top)))
        if np.any(index[inside] >= 0):
            raise ConfigurationError(f"Soil layer {layer.soil} overlaps another layer")
        index[inside] = names.index(layer.soil)
    if np.any(index < 0):
        raise ConfigurationError("Soil layers do not cover every cell")
    return soils, index


def initial_heads(spec: ProblemSpec, elevation: np.ndarray) -> np.ndarray:
    """Uniform ``initial_head``, or the tabulated profile interpolated on cell elevations."""
    profile = spec.initial_profile
    if profile is None:
        return np.full(elevation.shape, float(spec.initial_head))
    return np.interp(elevation, profile.elevations, profile.heads)


def compile_problem(spec: ProblemSpec, dt: Optional[float] = None) -> Problem:
    """Resolve soils, elevation and boundary data on the problem grid.

    Args:
        spec: Problem definition.
        dt: Optional time step override.

    Returns:
        Compiled Problem.

    Raises:
        ConfigurationError: If layers or boundaries cannot be resolved.
    """
    grid = build_grid(spec)
    soils, soil_index = _assign_soils(spec, grid)
    sign = 1.0 if spec.vertical == "up" else -1.0
    elevation = sign * grid.centers[:, -1]
    face_elevation = sign * grid.face_centers[:, -1]

    n_faces = grid.n_faces
    face_kind = np.full(n_faces, FACE_INTERIOR, dtype=np.int64)
    face_head = np.full(n_faces, np.nan)
    face_flux = np.zeros(n_faces)
    schedules = []
    head_schedules = []
    for side in grid.sides():
        faces = np.flatnonzero(grid.side == side)
        if faces.size == 0:
            continue
        bc = spec.boundaries[side]
        if bc.kind == "periodic":
            continue
        code = _KIND_CODES[bc.kind]
        active = np.ones(faces.size, dtype=bool)
        if bc.window is not None:
            if bc.window.axis not in grid.axes:
                raise ConfigurationError(f"Boundary window axis {bc.window.axis} is not a grid axis")
            coord = grid.face_centers[faces, grid.axes.index(bc.window.axis)]
            active = (coord >= bc.window.lower - WINDOW_TOLERANCE) & (coord <= bc.window.upper + WINDOW_TOLERANCE)
        face_kind[faces] = np.where(active, code, FACE_NO_FLOW)
        chosen = faces[active]
        if code == FACE_DIRICHLET:
            if bc.profile == "tracy_top":
                if spec.tracy is None:
                    raise ConfigurationError("The tracy_top profile needs tracy parameters on the problem")
                x = grid.face_centers[chosen, 0]
                y = grid.face_centers[chosen, 1] if grid.dim == 3 else np.zeros(chosen.size)
                face_head[chosen] = tracy_top_boundary(spec.tracy, x, y)
            elif bc.head_schedule is not None:
                face_head[chosen] = scheduled_head(bc.head_schedule, 0.0)
                head_schedules.append((chosen, bc.head_schedule))
            else:
                face_head[chosen] = bc.head
        elif code == FACE_FLUX:
            face_flux[chosen] = bc.flux
            if bc.schedule is not None:
                schedules.append((chosen, bc.schedule))

    owner = grid.owner
    dirichlet = np.flatnonzero(face_kind == FACE_DIRICHLET)
    boundary_conductivity = _boundary_conductivity(soils, soil_index[owner], dirichlet, face_head, np.zeros(n_faces))

    interior = grid.interior
    material_interface = np.zeros(n_faces, dtype=bool)
    material_interface[interior] = soil_index[owner[interior]] != soil_index[grid.neighbor[interior]]

    step = float(dt if dt is not None else spec.dt)
    steps = int(np.ceil(spec.T / step - 1e-9))
    logger.info(
        f"Compiled problem {spec.name}: {grid.n_cells} cells, {n_faces} faces, "
        f"{steps} steps of {step}"
    )
    return Problem(
        spec=spec,
        grid=grid,
        soils=soils,
        soil_index=soil_index,
        elevation=elevation,
        face_elevation=face_elevation,
        initial_head=initial_heads(spec, elevation),
        face_kind=face_kind,
        face_head=face_head,
        face_flux=face_flux,
        material_interface=material_interface,
        boundary_conductivity=boundary_conductivity,
        schedules=tuple(schedules),
        dt=step,
        steps=steps,
        head_schedules=tuple(head_schedules),
    )
