"""Deterministic global random walk baseline.

Particle counts are real numbers proportional to suction, n = scale * |psi|.
The particle kernel below also drives the data-driven solver, which only swaps
the linear head/particle maps for trained networks.
"""
import logging
from functools import partial
from typing import Callable, Optional, Protocol, Tuple

import numpy as np
import pandas as pd

from drw_richards.errors import ParameterError, SolverError
from drw_richards.models import GrwConfig, LschemeConfig, ParticleScale
from drw_richards.services.lscheme import (
    FaceFlows,
    FieldState,
    FixedPointEngine,
    Increment,
    SolveResult,
    StepContext,
    cell_weight,
    choose_linearization,
    face_flows,
    jacobi_diagonal,
    resolve_config,
    solve_lscheme,
    source_terms,
    step_context,
)
from drw_richards.services.problem import FACE_DIRICHLET, FACE_INTERIOR, BoundaryState, Problem

logger = logging.getLogger(__name__)

PARTICLE_GUARD = 1.0


class ParticleMap(Protocol):
    def forward(self, n: np.ndarray) -> np.ndarray: ...

    def inverse(self, psi: np.ndarray) -> np.ndarray: ...

    def slope(self, psi: np.ndarray) -> np.ndarray: ...

    def count_out_of_range(self, psi: np.ndarray) -> int: ...


def head_to_particles_flagged(psi, scale: ParticleScale) -> Tuple[np.ndarray, np.ndarray]:
    """Particle counts plus a mask of cells with positive (saturated) head."""
    psi = np.asarray(psi, dtype=float)
    return np.round(scale.particles_per_unit_head * np.abs(psi)), psi > 0


def head_to_particles(psi, scale: ParticleScale) -> np.ndarray:
    n, saturated = head_to_particles_flagged(psi, scale)
    if np.any(saturated):
        logger.warning(f"{int(np.count_nonzero(saturated))} positive heads mapped to particles by magnitude")
    return n


def particles_to_head(n, scale: ParticleScale) -> np.ndarray:
    return -np.asarray(n, dtype=float) / scale.particles_per_unit_head


class LinearParticleMap:
    """Exact proportional maps psi = -n/scale and n = -scale*psi."""

    def __init__(self, scale: Optional[ParticleScale] = None):
        self.scale = scale or ParticleScale()

    def forward(self, n: np.ndarray) -> np.ndarray:
        return -np.asarray(n, dtype=float) / self.scale.particles_per_unit_head

    def inverse(self, psi: np.ndarray) -> np.ndarray:
        return -self.scale.particles_per_unit_head * np.asarray(psi, dtype=float)

    def slope(self, psi: np.ndarray) -> np.ndarray:
        return np.full(np.shape(psi), -self.scale.particles_per_unit_head)

    def count_out_of_range(self, psi: np.ndarray) -> int:
        return 0


class ParticleKernel:
    """Iterates particle counts.

    Face exchange acts on counts directly. Gravity, flux, storage and sink form
    the volumetric source, which reaches particle space in one of two ways:

    * ``local``: scaled by the slope dn/dpsi of the inverse map at the cell
      head, so the particle residual is the head residual seen through the map.
    * ``origin``: the head-like source J = source / L passes through the inverse
      map itself; ``bias_correction`` subtracts the map's response to J = 0.

    Dirichlet counts are refreshed from the boundary heads at every step.
    """
    variable = "n"

    def __init__(self, problem: Problem, maps: ParticleMap, ingest: Callable[[np.ndarray], np.ndarray],
                 bias_correction: bool = False, source_map: str = "local"):
        if source_map not in ("local", "origin"):
            raise ParameterError(f"Unknown source map {source_map!r}")
        self.maps = maps
        self.ingest = ingest
        self.source_map = source_map
        self.guard = PARTICLE_GUARD
        self.raw_bias = float(np.asarray(maps.inverse(np.zeros(1)))[0])
        self.bias = self.raw_bias if bias_correction and source_map == "origin" else 0.0
        self.dirichlet = np.flatnonzero(problem.face_kind == FACE_DIRICHLET)
        self.boundary_n = np.zeros(problem.grid.n_faces)
        self.boundary_out_of_range = 0
        self.refresh_boundary(problem.boundary_state(problem.time(0)))

    def refresh_boundary(self, boundary: BoundaryState) -> None:
        if self.dirichlet.size:
            heads = boundary.face_head[self.dirichlet]
            self.boundary_n[self.dirichlet] = self.ingest(heads)
            self.boundary_out_of_range = self.maps.count_out_of_range(heads)

    def begin_step(self, ctx: StepContext) -> None:
        self.refresh_boundary(ctx.boundary)

    def encode_initial(self, problem: Problem, psi: np.ndarray) -> np.ndarray:
        return np.asarray(self.ingest(np.asarray(psi, dtype=float)), dtype=float)

    def decode(self, u: np.ndarray) -> np.ndarray:
        return self.maps.forward(u)

    def exchange(self, problem: Problem, flows: FaceFlows, n: np.ndarray) -> np.ndarray:
        grid = problem.grid
        T = flows.transmissibility
        per_face = np.zeros(grid.n_faces)
        inner = np.flatnonzero(problem.face_kind == FACE_INTERIOR)
        per_face[inner] = T[inner] * (n[grid.neighbor[inner]] - n[grid.owner[inner]])
        dirichlet = self.dirichlet
        per_face[dirichlet] = T[dirichlet] * (self.boundary_n[dirichlet] - n[grid.owner[dirichlet]])
        return grid.accumulate(per_face)

    def residual(self, ctx: StepContext, u: np.ndarray) -> Tuple[Increment, FaceFlows]:
        psi = self.decode(u)
        flows = face_flows(ctx.problem, psi, ctx.config, ctx.boundary, ctx.frozen_conductivity)
        exchange = self.exchange(ctx.problem, flows, u)
        source = source_terms(ctx, psi, flows)
        if self.source_map == "local":
            g = exchange + self.maps.slope(psi) * source
            extrapolated = self.maps.count_out_of_range(psi) + self.boundary_out_of_range
        else:
            g = exchange + self.maps.inverse(source) - self.bias
            extrapolated = 0
        return Increment(g=g, exchange=exchange, source=source, head=psi, extrapolated=extrapolated), flows

    def update(self, inc: Increment, L: np.ndarray) -> np.ndarray:
        if self.source_map == "local":
            return inc.g / L
        J = inc.source / L
        inc.extrapolated = self.maps.count_out_of_range(J)
        return inc.exchange / L + self.maps.inverse(J) - self.bias

    def project(self, u: np.ndarray) -> Tuple[np.ndarray, int]:
        negative = u < 0
        count = int(np.count_nonzero(negative))
        return (np.where(negative, 0.0, u), count) if count else (u, 0)


def particle_sweep(kernel: ParticleKernel, state: FieldState, prev: FieldState, problem: Problem,
                   L: Optional[np.ndarray] = None, config: Optional[LschemeConfig] = None) -> FieldState:
    """One Jacobi sweep in particle space.

    ``L`` is in system-matrix units. When not given it is selected per cell from
    the scaled particle residual, bounded below by the Jacobian diagonal.
    """
    config = resolve_config(config or LschemeConfig(), problem)
    ctx = step_context(state, prev, problem, config)
    kernel.begin_step(ctx)
    w = cell_weight(problem, config.matrix_form)
    n = state.n_particles if state.n_particles is not None else kernel.encode_initial(problem, state.psi)
    inc, flows = kernel.residual(ctx, n)
    if L is None:
        diagonal = jacobi_diagonal(problem, inc.head, flows.transmissibility, config.matrix_form)
        L = choose_linearization(w * inc.g, n, config, floor=np.maximum(config.L0, diagonal), guard=kernel.guard)
    L = np.broadcast_to(np.asarray(L, dtype=float), n.shape)
    du = kernel.update(inc, L / w)
    bad = np.flatnonzero(~np.isfinite(du))
    if bad.size:
        raise SolverError(f"Non-finite particle update in cell {int(bad[0])} at iterate {state.iterate_index + 1}")
    n_new, clamped = kernel.project(n + du)
    if clamped:
        logger.warning(f"Clamped {clamped} negative particle counts to zero")
    psi = kernel.decode(n_new)
    return FieldState(
        psi=psi,
        theta=problem.water_content(psi),
        L=np.array(L),
        time_index=state.time_index,
        iterate_index=state.iterate_index + 1,
        n_particles=n_new,
    )


def grw_kernel(problem: Problem, scale: ParticleScale) -> ParticleKernel:
    return ParticleKernel(problem, LinearParticleMap(scale), partial(head_to_particles, scale=scale))


def grw_sweep(state: FieldState, prev: FieldState, problem: Problem, static_L: float,
              scale: Optional[ParticleScale] = None, config: Optional[LschemeConfig] = None) -> FieldState:
    """n <- n + [sum T (n_j - n_i) + dn/dpsi * source] / L with a constant L and the linear map."""
    scale = scale or ParticleScale()
    return particle_sweep(grw_kernel(problem, scale), state, prev, problem, np.full(state.psi.shape, static_L), config)


def grw_engine(problem: Problem, config: GrwConfig, lscheme: LschemeConfig, adaptive: bool = False,
               log_every: int = 10) -> FixedPointEngine:
    return FixedPointEngine(
        problem,
        lscheme,
        grw_kernel(problem, config.scale),
        tol=config.tol,
        max_iters=config.S_max_iters,
        adaptive=adaptive,
        static_L=config.static_L,
        solver_name="grw",
        log_every=log_every,
    )


def solve_grw(problem: Problem, config: Optional[GrwConfig] = None,
              lscheme: Optional[LschemeConfig] = None, steps: Optional[int] = None,
              log_every: int = 10) -> SolveResult:
    """Static-L particle solve with the proportional head/particle maps."""
    config = config or GrwConfig()
    return grw_engine(problem, config, lscheme or LschemeConfig(), log_every=log_every).run(steps=steps)


def generate_reference_solutions(problem: Problem, config: Optional[GrwConfig] = None,
                                 lscheme: Optional[LschemeConfig] = None,
                                 log_every: int = 10) -> pd.DataFrame:
    """Pair L-scheme heads with random-walk particle counts per (cell, time step).

    The particle solve follows the L-scheme's linearisation policy, adaptive or
    static, so both histories converge on the same steps. Rows of a step flagged
    non-converged in either solve carry ``converged_flag = False``. The initial
    state is included when ``include_initial_state`` is set.
    """
    config = config or GrwConfig()
    lscheme = lscheme or LschemeConfig()
    logger.info(f"Generating reference solutions for {problem.name} on {problem.grid.n_cells} cells")
    heads = solve_lscheme(problem, lscheme, log_every=log_every)
    if not lscheme.adaptive:
        config = config.model_copy(update={"static_L": lscheme.static_L})
    particles = grw_engine(problem, config, lscheme, adaptive=lscheme.adaptive, log_every=log_every).run()

    step_ok = np.array([True] + [
        a.converged and b.converged for a, b in zip(heads.steps, particles.steps)
    ])
    first = 0 if config.include_initial_state else 1
    n_steps, n_cells = heads.psi.shape
    time_index = np.repeat(np.arange(first, n_steps), n_cells)
    frame = pd.DataFrame({
        "cell_id": np.tile(np.arange(n_cells), n_steps - first),
        "time_index": time_index,
        "psi": heads.psi[first:].ravel(),
        "n_particles": particles.n_particles[first:].ravel(),
        "converged_flag": step_ok[time_index],
        "unit_system": problem.spec.unit_system,
    })
    flagged = int((~frame["converged_flag"]).sum())
    if flagged:
        logger.warning(f"{flagged} reference rows come from non-converged steps")
    logger.info(f"Generated {len(frame)} reference rows for {problem.name}")
    return frame
