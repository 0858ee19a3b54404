"""Adaptive linearisation scheme in pressure-head variables.

The residual, the per-cell choice of L, the Jacobi sweep and the conditioning
safeguard live here together with the fixed-point engine shared by the particle
solvers. An engine iterates one variable ``u`` through a kernel: heads for the
L-scheme, particle counts for the random-walk solvers.

Residuals and L are expressed in the units of the system matrix: the
``literal`` form multiplies the volumetric cell balance by dt/vol, the ``flux``
form keeps it as is. ``cell_weight`` is that row scaling.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from drw_richards.errors import ParameterError, SolverError
from drw_richards.models import LschemeConfig, RunReport, StepReport
from drw_richards.services.problem import (
    FACE_DIRICHLET,
    FACE_DRAINAGE,
    FACE_FLUX,
    FACE_INTERIOR,
    BoundaryState,
    Problem,
)

logger = logging.getLogger(__name__)

DEFAULT_L0 = 1e-3


@dataclass
class FieldState:
    """Per-cell iterate at time index ``time_index`` and iterate ``iterate_index``.

    ``L`` is the linearisation parameter of the sweep that produced the iterate,
    in system-matrix units.
    """
    psi: np.ndarray
    theta: np.ndarray
    L: np.ndarray
    time_index: int
    iterate_index: int = 0
    n_particles: Optional[np.ndarray] = None

    @classmethod
    def from_head(cls, problem: Problem, psi: np.ndarray, time_index: int, L0,
                  iterate_index: int = 0) -> "FieldState":
        psi = np.asarray(psi, dtype=float)
        return cls(
            psi=psi.copy(),
            theta=problem.water_content(psi),
            L=np.broadcast_to(np.asarray(L0, dtype=float), psi.shape).copy(),
            time_index=time_index,
            iterate_index=iterate_index,
        )


@dataclass(frozen=True)
class FaceFlows:
    """Per-face volumetric flow into the owner cell, split by origin.

    ``exchange`` carries the pressure-head differences, ``gravity`` the elevation
    differences plus imposed flux and drainage faces.
    """
    transmissibility: np.ndarray
    exchange: np.ndarray
    gravity: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.exchange + self.gravity


@dataclass
class StepContext:
    """Data fixed while iterating one time step."""
    problem: Problem
    config: LschemeConfig
    time_index: int
    theta_prev: np.ndarray
    boundary: BoundaryState
    frozen_conductivity: Optional[np.ndarray] = None

    @property
    def dt(self) -> float:
        return self.problem.dt


def resolve_config(config: LschemeConfig, problem: Problem) -> LschemeConfig:
    """Fill ``L0`` and ``matrix_form`` from the problem when the config leaves them open."""
    update = {}
    if config.L0 is None:
        update["L0"] = problem.spec.L0
    if config.matrix_form is None:
        update["matrix_form"] = problem.spec.matrix_form
    return config.model_copy(update=update) if update else config


def cell_weight(problem: Problem, matrix_form: str) -> np.ndarray:
    """Row scaling from volumetric balances to system-matrix units."""
    if matrix_form == "literal":
        return problem.dt / problem.grid.volumes
    return np.ones(problem.grid.n_cells)


def _mean(kind: str, a: np.ndarray, b: np.ndarray, pot_a: np.ndarray, pot_b: np.ndarray) -> np.ndarray:
    if kind == "arithmetic":
        return 0.5 * (a + b)
    if kind == "geometric":
        return np.sqrt(a * b)
    if kind == "harmonic":
        total = a + b
        return np.divide(2.0 * a * b, total, out=np.zeros_like(total), where=total > 0)
    if kind == "upwind":
        return np.where(pot_a >= pot_b, a, b)
    raise ParameterError(f"Unknown face mean: {kind}")


def face_conductivity(problem: Problem, psi: np.ndarray, config: LschemeConfig,
                      boundary: BoundaryState, K: Optional[np.ndarray] = None) -> np.ndarray:
    """Conductivity on every face.

    Interior faces use ``face_mean`` (``interface_mean`` across material
    interfaces), Dirichlet faces combine the owner with K at the boundary head,
    drainage faces take the owner value. Other faces get zero.
    """
    grid = problem.grid
    if K is None:
        K = problem.conductivity(psi)
    potential = psi + problem.elevation
    kind = problem.face_kind
    Kf = np.zeros(grid.n_faces)

    inner = np.flatnonzero(kind == FACE_INTERIOR)
    o, n = grid.owner[inner], grid.neighbor[inner]
    Kf[inner] = _mean(config.face_mean, K[o], K[n], potential[o], potential[n])
    iface = inner[problem.material_interface[inner]]
    if iface.size:
        o, n = grid.owner[iface], grid.neighbor[iface]
        Kf[iface] = _mean(config.interface_mean, K[o], K[n], potential[o], potential[n])

    dirichlet = np.flatnonzero(kind == FACE_DIRICHLET)
    if dirichlet.size:
        o = grid.owner[dirichlet]
        boundary_potential = boundary.face_head[dirichlet] + problem.face_elevation[dirichlet]
        Kf[dirichlet] = _mean(config.face_mean, K[o], boundary.conductivity[dirichlet],
                              potential[o], boundary_potential)

    drainage = np.flatnonzero(kind == FACE_DRAINAGE)
    Kf[drainage] = K[grid.owner[drainage]]
    return Kf


def face_flows(problem: Problem, psi: np.ndarray, config: LschemeConfig, boundary: BoundaryState,
               K: Optional[np.ndarray] = None) -> FaceFlows:
    """Split Darcy flows on every face for the head field ``psi``."""
    grid = problem.grid
    if K is None:
        K = problem.conductivity(psi)
    Kf = face_conductivity(problem, psi, config, boundary, K)
    kind = problem.face_kind
    geometric = grid.metric * grid.area / grid.distance
    conducting = (kind == FACE_INTERIOR) | (kind == FACE_DIRICHLET)
    T = np.where(conducting, Kf * geometric, 0.0)

    owner, nb = grid.owner, grid.neighbor
    elev, face_elev = problem.elevation, problem.face_elevation
    exchange = np.zeros(grid.n_faces)
    gravity = np.zeros(grid.n_faces)

    inner = np.flatnonzero(kind == FACE_INTERIOR)
    o, n = owner[inner], nb[inner]
    exchange[inner] = T[inner] * (psi[n] - psi[o])
    gravity[inner] = T[inner] * (elev[n] - elev[o])

    dirichlet = np.flatnonzero(kind == FACE_DIRICHLET)
    o = owner[dirichlet]
    exchange[dirichlet] = T[dirichlet] * (boundary.face_head[dirichlet] - psi[o])
    gravity[dirichlet] = T[dirichlet] * (face_elev[dirichlet] - elev[o])

    flux = np.flatnonzero(kind == FACE_FLUX)
    gravity[flux] = boundary.inflow[flux] * grid.physical_area[flux]

    drainage = np.flatnonzero(kind == FACE_DRAINAGE)
    o = owner[drainage]
    gravity[drainage] = Kf[drainage] * geometric[drainage] * (face_elev[drainage] - elev[o])
    return FaceFlows(transmissibility=T, exchange=exchange, gravity=gravity)


def storage_and_sink(problem: Problem, psi: np.ndarray, theta_prev: np.ndarray) -> np.ndarray:
    """[(theta(psi) - theta_prev)/dt + S(psi)] * vol per cell."""
    vol = problem.grid.volumes
    storage = (problem.water_content(psi) - theta_prev) / problem.dt
    return (storage + problem.sink_rate(psi)) * vol


def source_terms(ctx: StepContext, psi: np.ndarray, flows: FaceFlows) -> np.ndarray:
    """Gravity, imposed flux and drainage minus storage change and sink, per cell."""
    return ctx.problem.grid.accumulate(flows.gravity) - storage_and_sink(ctx.problem, psi, ctx.theta_prev)


def step_context(state: FieldState, prev: FieldState, problem: Problem,
                 config: LschemeConfig) -> StepContext:
    return StepContext(
        problem=problem,
        config=resolve_config(config, problem),
        time_index=state.time_index,
        theta_prev=prev.theta,
        boundary=problem.boundary_state(problem.time(state.time_index)),
    )


def residual_g(state: FieldState, prev: FieldState, problem: Problem,
               config: Optional[LschemeConfig] = None, cell: Optional[int] = None):
    """Cell-balance residual g of the iterate ``state`` against the converged ``prev``.

    In system-matrix units, so a sweep is psi + g / L. Returns the per-cell
    array, or one value when ``cell`` is given.
    """
    config = resolve_config(config or LschemeConfig(), problem)
    ctx = step_context(state, prev, problem, config)
    flows = face_flows(problem, state.psi, config, ctx.boundary)
    g = problem.grid.accumulate(flows.exchange) + source_terms(ctx, state.psi, flows)
    g = g * cell_weight(problem, config.matrix_form)
    return float(g[cell]) if cell is not None else g


def choose_linearization(g: np.ndarray, u: np.ndarray, config: LschemeConfig,
                         floor=None, guard: Optional[float] = None) -> np.ndarray:
    """L = max(floor, (1 + rho)|g| / (rho * max(|u|, guard))).

    ``floor`` defaults to ``config.L0`` and ``guard`` to ``config.eps_psi``.
    """
    if floor is None:
        floor = config.L0 if config.L0 is not None else DEFAULT_L0
    guard = config.eps_psi if guard is None else guard
    scale = np.maximum(np.abs(u), guard)
    return np.maximum(floor, (1.0 + config.rho) * np.abs(g) / (config.rho * scale))


def relative_change(u: np.ndarray, u_new: np.ndarray, guard: float) -> float:
    """||u_new - u||_inf / max(||u_new||_inf, guard)."""
    u_new = np.asarray(u_new, dtype=float)
    return float(np.max(np.abs(u_new - u)) / max(float(np.max(np.abs(u_new))), guard))


def transmissibility_sum(problem: Problem, T: np.ndarray) -> np.ndarray:
    """Sum of conducting-face transmissibilities around each cell."""
    grid = problem.grid
    total = np.zeros(grid.n_cells)
    inner = np.flatnonzero(problem.face_kind == FACE_INTERIOR)
    np.add.at(total, grid.owner[inner], T[inner])
    np.add.at(total, grid.neighbor[inner], T[inner])
    dirichlet = np.flatnonzero(problem.face_kind == FACE_DIRICHLET)
    np.add.at(total, grid.owner[dirichlet], T[dirichlet])
    return total


def jacobi_diagonal(problem: Problem, psi: np.ndarray, T: np.ndarray, matrix_form: str) -> np.ndarray:
    """Diagonal of the residual's Jacobian, C vol/dt + sum T, in system-matrix units.

    Used as the lower bound of the adaptive L: a Jacobi sweep with L below it
    overshoots the cell balance.
    """
    storage = problem.capacity(psi) * problem.grid.volumes / problem.dt
    return cell_weight(problem, matrix_form) * (storage + transmissibility_sum(problem, T))


def assemble_system_matrix(state: FieldState, prev: FieldState, problem: Problem,
                           config: Optional[LschemeConfig] = None,
                           transmissibility: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """Linearised implicit operator acting on the iterate increment.

    The ``literal`` form has diagonal L_i + dt/vol_i * sum T and off-diagonals
    -dt/vol_i * T. The ``flux`` form drops the dt/vol_i scaling. Dirichlet faces
    add to the diagonal only.
    """
    config = resolve_config(config or LschemeConfig(), problem)
    if transmissibility is None:
        boundary = problem.boundary_state(problem.time(state.time_index))
        transmissibility = face_flows(problem, state.psi, config, boundary).transmissibility
    return system_matrix(problem, np.asarray(state.L, dtype=float), transmissibility, config.matrix_form)


def system_matrix(problem: Problem, L: np.ndarray, T: np.ndarray, matrix_form: str) -> sparse.csr_matrix:
    grid = problem.grid
    scale = cell_weight(problem, matrix_form)
    inner = np.flatnonzero(problem.face_kind == FACE_INTERIOR)
    o, n = grid.owner[inner], grid.neighbor[inner]

    rows = np.concatenate([np.arange(grid.n_cells), o, n])
    cols = np.concatenate([np.arange(grid.n_cells), n, o])
    values = np.concatenate([
        L + scale * transmissibility_sum(problem, T),
        -scale[o] * T[inner],
        -scale[n] * T[inner],
    ])
    return sparse.coo_matrix((values, (rows, cols)), shape=(grid.n_cells, grid.n_cells)).tocsr()


def condition_number(A, dense_limit: int = 1500) -> float:
    """sigma_max / sigma_min of ``A``; infinite when A is singular.

    Matrices larger than ``dense_limit`` use a 1-norm estimate of
    ||A|| * ||A^-1|| instead of a dense SVD.
    """
    n = A.shape[0]
    if n == 0:
        raise ParameterError("Condition number of an empty matrix")
    if n <= dense_limit:
        dense = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float)
        sigma = np.linalg.svd(dense, compute_uv=False)
        if not np.all(np.isfinite(sigma)) or sigma[-1] == 0.0:
            return float("inf")
        return float(sigma[0] / sigma[-1])
    A = sparse.csc_matrix(A)
    try:
        lu = splu(A)
    except RuntimeError:
        return float("inf")
    inverse = LinearOperator(
        A.shape,
        matvec=lu.solve,
        rmatvec=lambda x: lu.solve(x, trans="T"),
        dtype=float,
    )
    return float(onenormest(A) * onenormest(inverse))


# --- shared fixed-point engine ------------------------------------------


@dataclass
class Increment:
    """Residual of one sweep in the iterated variable, in volumetric units.

    ``head`` is the decoded iterate the residual was evaluated at.
    """
    g: np.ndarray
    exchange: np.ndarray
    source: np.ndarray
    head: np.ndarray
    extrapolated: int = 0


class Kernel(Protocol):
    guard: float
    variable: str

    def begin_step(self, ctx: StepContext) -> None: ...

    def encode_initial(self, problem: Problem, psi: np.ndarray) -> np.ndarray: ...

    def decode(self, u: np.ndarray) -> np.ndarray: ...

    def residual(self, ctx: StepContext, u: np.ndarray) -> Tuple[Increment, FaceFlows]: ...

    def update(self, inc: Increment, L: np.ndarray) -> np.ndarray: ...

    def project(self, u: np.ndarray) -> Tuple[np.ndarray, int]: ...


class HeadKernel:
    """Iterates pressure head: du = g / L."""
    variable = "psi"

    def __init__(self, eps_psi: float = 1e-12):
        self.guard = eps_psi

    def begin_step(self, ctx: StepContext) -> None:
        pass

    def encode_initial(self, problem: Problem, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi, dtype=float).copy()

    def decode(self, u: np.ndarray) -> np.ndarray:
        return u

    def residual(self, ctx: StepContext, u: np.ndarray) -> Tuple[Increment, FaceFlows]:
        flows = face_flows(ctx.problem, u, ctx.config, ctx.boundary, ctx.frozen_conductivity)
        exchange = ctx.problem.grid.accumulate(flows.exchange)
        source = source_terms(ctx, u, flows)
        return Increment(g=exchange + source, exchange=exchange, source=source, head=u), flows

    def update(self, inc: Increment, L: np.ndarray) -> np.ndarray:
        return inc.g / L

    def project(self, u: np.ndarray) -> Tuple[np.ndarray, int]:
        return u, 0


@dataclass
class SolveResult:
    """Histories of one solve. Row 0 of every history is the initial state."""
    problem: str
    solver: str
    times: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    steps: List[StepReport]
    sides: List[str]
    boundary_influx: np.ndarray
    sink_rate: np.ndarray
    face_flux: np.ndarray
    n_particles: Optional[np.ndarray] = None
    net_bias: Optional[float] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def final_psi(self) -> np.ndarray:
        return self.psi[-1]

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.steps)

    def to_report(self, config_digest: str = "", seed: int = 0) -> RunReport:
        return RunReport(
            problem=self.problem,
            solver=self.solver,
            config_digest=config_digest,
            seed=seed,
            steps=self.steps,
            net_bias=self.net_bias,
            timings=dict(self.timings),
        )


def count_contraction_violations(trace: List[float]) -> int:
    """Increases of the relative change over the final 90% of a step's sweeps."""
    start = max(int(0.1 * len(trace)), 1)
    return int(sum(1 for i in range(start, len(trace)) if trace[i] > trace[i - 1]))


def residual_norm(g: np.ndarray, diagonal: np.ndarray, u: np.ndarray, guard: float) -> float:
    """||g / diagonal||_inf / max(||u||_inf, guard): the Newton-Jacobi step relative to the iterate."""
    return float(np.max(np.abs(g) / diagonal) / max(float(np.max(np.abs(u))), guard))


class FixedPointEngine:
    """Time loop and per-step iteration shared by the L-scheme, GRW and DRW solvers.

    A step is converged once both the relative iterate change and the relative
    Newton-Jacobi residual are at most ``tol``.

    Args:
        problem: Compiled problem.
        config: Linearisation settings; ``L0`` and ``matrix_form`` default to the problem.
        kernel: Iterated variable and its update rule.
        tol: Convergence tolerance.
        max_iters: Iteration cap per step.
        adaptive: Per-cell adaptive L when True, constant ``static_L`` otherwise.
        static_L: Constant L used in static mode, in system-matrix units.
        freeze_conductivity: Evaluate K once per step from the step's initial head.
        solver_name: Label stored in the result.
        log_every: INFO log cadence in steps.
    """

    def __init__(self, problem: Problem, config: LschemeConfig, kernel, tol: float,
                 max_iters: int, adaptive: bool = True, static_L: Optional[float] = None,
                 freeze_conductivity: bool = False, solver_name: str = "lscheme",
                 log_every: int = 10):
        self.problem = problem
        self.config = resolve_config(config, problem)
        self.kernel = kernel
        self.tol = tol
        self.max_iters = max_iters
        self.adaptive = adaptive
        self.static_L = static_L if static_L is not None else problem.spec.static_L
        self.freeze_conductivity = freeze_conductivity
        self.solver_name = solver_name
        self.log_every = max(int(log_every), 1)
        self.weight = cell_weight(problem, self.config.matrix_form)
        self.last_L: Optional[np.ndarray] = None
        if not adaptive and self.static_L <= 0:
            raise ParameterError("static_L must be positive")

    def _select(self, g: np.ndarray, u: np.ndarray, floor: np.ndarray) -> np.ndarray:
        if not self.adaptive:
            return np.full(u.shape, float(self.static_L))
        return choose_linearization(g, u, self.config, floor=floor, guard=self.kernel.guard)

    def _kappa(self, L: np.ndarray, flows: FaceFlows) -> float:
        A = system_matrix(self.problem, L, flows.transmissibility, self.config.matrix_form)
        return condition_number(A, self.config.dense_limit)

    def context(self, time_index: int, psi_prev: np.ndarray) -> StepContext:
        problem = self.problem
        return StepContext(
            problem=problem,
            config=self.config,
            time_index=time_index,
            theta_prev=problem.water_content(psi_prev),
            boundary=problem.boundary_state(problem.time(time_index)),
            frozen_conductivity=problem.conductivity(psi_prev) if self.freeze_conductivity else None,
        )

    def step(self, time_index: int, u_prev: np.ndarray) -> Tuple[np.ndarray, StepReport]:
        """Iterate one time step from the converged ``u_prev`` at ``time_index - 1``."""
        cfg = self.config
        kernel = self.kernel
        ctx = self.context(time_index, kernel.decode(u_prev))
        kernel.begin_step(ctx)
        w = self.weight
        u = u_prev.copy()
        l0 = float(cfg.L0)
        floor = np.full(u.shape, l0)
        prev_du: Optional[np.ndarray] = None
        kappa: Optional[float] = None
        trace: List[float] = []
        best_u, best_re = u_prev.copy(), float("inf")
        best_L: Optional[np.ndarray] = None
        corrections = clamped = extrapolated = 0
        converged = False

        for s in range(1, self.max_iters + 1):
            inc, flows = kernel.residual(ctx, u)
            g = w * inc.g
            diagonal = jacobi_diagonal(self.problem, inc.head, flows.transmissibility, cfg.matrix_form)
            L = self._select(g, u, np.maximum(floor, diagonal))
            if s == 1 and cfg.condition_check:
                kappa = self._kappa(L, flows)
                doublings = 0
                while self.adaptive and kappa > cfg.cond_threshold and doublings < cfg.max_cond_doublings:
                    l0 *= cfg.cond_growth
                    floor = np.maximum(floor, l0)
                    L = self._select(g, u, np.maximum(floor, diagonal))
                    kappa = self._kappa(L, flows)
                    doublings += 1
                if doublings:
                    logger.debug(f"Step {time_index}: raised L0 to {l0:.3e} after {doublings} doublings, kappa={kappa:.4f}")
            du = kernel.update(inc, L / w)
            if self.adaptive and cfg.damp_oscillations and prev_du is not None:
                flip = (du * prev_du < 0) & (np.abs(du) >= 0.5 * np.abs(prev_du))
                if np.any(flip):
                    floor[flip] = np.maximum(floor[flip], L[flip] * cfg.cond_growth)
                    L = np.maximum(L, floor)
                    du = kernel.update(inc, L / w)
                    corrections += int(np.count_nonzero(flip))
            extrapolated = max(extrapolated, inc.extrapolated)
            bad = np.flatnonzero(~np.isfinite(du))
            if bad.size:
                raise SolverError(
                    f"Non-finite {kernel.variable} update in cell {int(bad[0])} at iterate {s} "
                    f"of time step {time_index}"
                )
            u_new, n_clamped = kernel.project(u + du)
            clamped += n_clamped
            re = relative_change(u, u_new, kernel.guard)
            balance = residual_norm(g, np.maximum(diagonal, l0), u, kernel.guard)
            trace.append(re)
            logger.debug(f"Step {time_index} iterate {s}: RE={re:.3e} residual={balance:.3e}")
            if re < best_re:
                best_re, best_u, best_L = re, u_new, L
            prev_du = du
            u = u_new
            self.last_L = L
            if re <= self.tol and balance <= self.tol:
                converged = True
                break

        if not converged:
            u = best_u
            if best_L is not None:
                self.last_L = best_L
            logger.warning(
                f"{self.solver_name} step {time_index} did not converge in {self.max_iters} "
                f"iterations (best RE {best_re:.3e})"
            )
        if clamped:
            logger.warning(f"{self.solver_name} step {time_index}: clamped {clamped} negative particle counts")
        report = StepReport(
            time_index=time_index,
            iterations=len(trace),
            final_re=trace[-1] if converged else best_re,
            kappa=kappa,
            l0_effective=l0,
            converged=converged,
            re_trace=trace,
            contraction_violations=count_contraction_violations(trace),
            oscillation_corrections=corrections,
            clamped_cells=clamped,
            extrapolated_cells=extrapolated,
        )
        return u, report

    def _boundary_record(self, psi: np.ndarray, time_index: int) -> Tuple[np.ndarray, float, np.ndarray]:
        problem = self.problem
        grid = problem.grid
        boundary = problem.boundary_state(problem.time(time_index))
        total = face_flows(problem, psi, self.config, boundary).total
        by_side = np.array([float(np.sum(total[grid.side == side])) for side in grid.sides()])
        sink = float(np.sum(problem.sink_rate(psi) * grid.volumes))
        return by_side, sink, total

    def run(self, u0: Optional[np.ndarray] = None, steps: Optional[int] = None) -> SolveResult:
        """Advance from the initial condition for ``steps`` steps (default: the problem's)."""
        problem = self.problem
        grid = problem.grid
        steps = problem.steps if steps is None else int(steps)
        kernel = self.kernel
        u = kernel.encode_initial(problem, problem.initial_head) if u0 is None else np.asarray(u0, dtype=float)

        n_rows = steps + 1
        psi_hist = np.empty((n_rows, grid.n_cells))
        u_hist = np.empty((n_rows, grid.n_cells))
        influx = np.zeros((n_rows, len(grid.sides())))
        sink = np.zeros(n_rows)
        psi = kernel.decode(u)
        psi_hist[0], u_hist[0] = psi, u
        influx[0], sink[0], total = self._boundary_record(psi, 0)
        reports: List[StepReport] = []

        logger.info(f"Starting {self.solver_name} solve of {problem.name}: {steps} steps, {grid.n_cells} cells")
        for m in range(1, n_rows):
            u, report = self.step(m, u)
            reports.append(report)
            psi = kernel.decode(u)
            psi_hist[m], u_hist[m] = psi, u
            influx[m], sink[m], total = self._boundary_record(psi, m)
            if m % self.log_every == 0 or m == steps:
                logger.info(
                    f"{self.solver_name} {problem.name}: step {m}/{steps}, "
                    f"iterations={report.iterations}, RE={report.final_re:.3e}"
                )

        area = grid.physical_area
        q = np.divide(-total, area, out=np.zeros_like(total), where=area > 0)
        n_conv = sum(r.converged for r in reports)
        logger.info(f"Finished {self.solver_name} solve of {problem.name}: {n_conv}/{len(reports)} steps converged")
        return SolveResult(
            problem=problem.name,
            solver=self.solver_name,
            times=np.arange(n_rows) * problem.dt,
            psi=psi_hist,
            theta=np.vstack([problem.water_content(row) for row in psi_hist]),
            steps=reports,
            sides=grid.sides(),
            boundary_influx=influx,
            sink_rate=sink,
            face_flux=q,
            n_particles=None if kernel.variable == "psi" else u_hist,
        )


# --- head-space entry points ----------------------------------------------


def lscheme_engine(problem: Problem, config: LschemeConfig, log_every: int = 10) -> FixedPointEngine:
    return FixedPointEngine(
        problem,
        config,
        HeadKernel(config.eps_psi),
        tol=config.tol,
        max_iters=config.S_max_iters,
        adaptive=config.adaptive,
        static_L=config.static_L,
        solver_name="lscheme",
        log_every=log_every,
    )


def lscheme_sweep(state: FieldState, prev: FieldState, problem: Problem,
                  config: Optional[LschemeConfig] = None) -> FieldState:
    """One Jacobi sweep psi <- psi + g/L with L re-selected from iterate ``state``.

    The adaptive L never drops below the Jacobian diagonal. Dirichlet data sits
    on boundary faces, so every cell is updated.

    Raises:
        SolverError: If an update is not finite.
    """
    config = resolve_config(config or LschemeConfig(), problem)
    ctx = step_context(state, prev, problem, config)
    flows = face_flows(problem, state.psi, config, ctx.boundary)
    g = (problem.grid.accumulate(flows.exchange) + source_terms(ctx, state.psi, flows)) \
        * cell_weight(problem, config.matrix_form)
    if config.adaptive:
        diagonal = jacobi_diagonal(problem, state.psi, flows.transmissibility, config.matrix_form)
        L = choose_linearization(g, state.psi, config, floor=np.maximum(config.L0, diagonal))
    else:
        L = np.full(g.shape, float(config.static_L))
    du = g / L
    bad = np.flatnonzero(~np.isfinite(du))
    if bad.size:
        raise SolverError(f"Non-finite psi update in cell {int(bad[0])} at iterate {state.iterate_index + 1}")
    psi = state.psi + du
    return FieldState(
        psi=psi,
        theta=problem.water_content(psi),
        L=L,
        time_index=state.time_index,
        iterate_index=state.iterate_index + 1,
    )


def solve_timestep(prev: FieldState, problem: Problem,
                   config: Optional[LschemeConfig] = None) -> Tuple[FieldState, StepReport]:
    """Advance the converged state ``prev`` by one time step; the state carries the last per-cell L."""
    config = resolve_config(config or LschemeConfig(), problem)
    engine = lscheme_engine(problem, config)
    psi, report = engine.step(prev.time_index + 1, prev.psi)
    state = FieldState.from_head(problem, psi, prev.time_index + 1, engine.last_L,
                                 iterate_index=report.iterations)
    return state, report


def solve_lscheme(problem: Problem, config: Optional[LschemeConfig] = None,
                  steps: Optional[int] = None, log_every: int = 10) -> SolveResult:
    """Run the head-space L-scheme over the problem's time span."""
    return lscheme_engine(problem, config or LschemeConfig(), log_every).run(steps=steps)
