"""Run orchestration: solver dispatch, solution exports and the staged benchmark pipeline."""
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from drw_richards.models import DrwConfig, ProblemSpec, RunConfig, RunReport
from drw_richards.services.artifact_store import ArtifactStore, config_digest, read_csv, write_csv, write_report
from drw_richards.services.benchmarks import load_problem, pin_tracy_variant, tracy_analytical
from drw_richards.services.diagnostics import (
    azimuthal_defect,
    comparison_table,
    mass_balance,
    mse_field,
    slice_at,
    symmetry_defect,
    tracking_error,
)
from drw_richards.services.drw_solver import solve_drw
from drw_richards.services.grw_baseline import ParticleMap, generate_reference_solutions, solve_grw
from drw_richards.services.lscheme import SolveResult, solve_lscheme
from drw_richards.services.neural_map import augment, retrain_maps, save_checkpoint, train_maps
from drw_richards.services.problem import Problem, compile_problem

logger = logging.getLogger(__name__)

REFERENCE_FIELDS = {"problem", "grw", "lscheme"}
AUGMENT_FIELDS = REFERENCE_FIELDS | {"augment", "seed"}
TRAIN_FIELDS = AUGMENT_FIELDS | {"mlp", "train"}
RETRAIN_FIELDS = TRAIN_FIELDS | {"retrain"}
TRACY_SLICES = (0.5, 1.0)


def resolve_spec(config: RunConfig, resolution: Optional[str] = None) -> ProblemSpec:
    return load_problem(config.problem, resolution or config.resolution)


def build_problem(config: RunConfig, resolution: Optional[str] = None) -> Problem:
    return compile_problem(resolve_spec(config, resolution), dt=config.lscheme.dt)


def problem_label(config: RunConfig) -> str:
    return config.problem if isinstance(config.problem, str) else config.problem.name


def seeded(config: RunConfig) -> RunConfig:
    """Propagate the run seed into the training and augmentation settings."""
    return config.model_copy(update={
        "train": config.train.model_copy(update={"seed": config.seed}),
        "augment": config.augment.model_copy(update={"seed": config.seed}),
    })


def boundary_sets(spec: ProblemSpec) -> List[Tuple[str, ProblemSpec]]:
    """Boundary-condition sets of an irrigated problem, in training order.

    ``bc0`` drops every irrigation schedule; ``bc<k>`` keeps the events that
    start no later than the k-th distinct start, so the last set is the full
    problem. Problems without irrigation have no sets.
    """
    starts = sorted({
        event.start
        for bc in spec.boundaries.values() if bc.schedule is not None
        for event in bc.schedule.events
    })
    if not starts:
        return []

    def truncated(until: Optional[float]) -> ProblemSpec:
        boundaries = {}
        for side, bc in spec.boundaries.items():
            if bc.schedule is not None:
                events = [] if until is None else [e for e in bc.schedule.events if e.start <= until]
                schedule = bc.schedule.model_copy(update={"events": events}) if events else None
                bc = bc.model_copy(update={"schedule": schedule})
            boundaries[side] = bc
        return spec.model_copy(update={"boundaries": boundaries})

    return [("bc0", truncated(None))] + [(f"bc{k}", truncated(start)) for k, start in enumerate(starts, 1)]


def run_solver(solver: str, problem: Problem, config: RunConfig, maps: Optional[ParticleMap] = None,
               drw: Optional[DrwConfig] = None, log_every: int = 10) -> SolveResult:
    """Dispatch one solve by name."""
    if solver == "lscheme":
        return solve_lscheme(problem, config.lscheme, log_every=log_every)
    if solver == "grw":
        return solve_grw(problem, config.grw, config.lscheme, log_every=log_every)
    result, _ = solve_drw(problem, drw or config.drw, maps=maps, log_every=log_every)
    return result


def finalize_report(result: SolveResult, problem: Problem, digest: str = "", seed: int = 0,
                    reference: Optional[SolveResult] = None) -> RunReport:
    """Run report with mass balance, symmetry measure and, when given, the error against ``reference``."""
    report = result.to_report(config_digest=digest, seed=seed)
    report.mass_balance = mass_balance(result, problem)
    grid = problem.grid
    if grid.coordinate_system == "cylindrical":
        report.symmetry_defect = azimuthal_defect(result.final_psi, grid)
    elif grid.dim == 2:
        report.symmetry_defect = symmetry_defect(result.final_psi, grid, "x")
    if reference is not None and reference is not result:
        report.mse[reference.solver] = mse_field(result.final_psi, reference.final_psi).mse
    tracy = problem.spec.tracy
    if tracy is not None and grid.dim == 3:
        pinned = pin_tracy_variant(tracy)
        x, y, z = grid.centers.T
        exact = tracy_analytical(pinned, x, y, z, float(result.times[-1]))
        for level in TRACY_SLICES:
            cells = slice_at(grid, result.final_psi, "z", level)["cell_id"].to_numpy()
            report.mse[f"analytical_z{level:g}"] = mse_field(result.final_psi[cells], exact[cells]).mse
    return report


def solution_frame(result: SolveResult, history: bool = True) -> pd.DataFrame:
    """Per (time index, cell) heads, water content and particle counts."""
    rows = np.arange(result.psi.shape[0]) if history else np.array([result.psi.shape[0] - 1])
    n_cells = result.psi.shape[1]
    frame = pd.DataFrame({
        "time_index": np.repeat(rows, n_cells),
        "time": np.repeat(result.times[rows], n_cells),
        "cell_id": np.tile(np.arange(n_cells), rows.size),
        "psi": result.psi[rows].ravel(),
        "theta": result.theta[rows].ravel(),
    })
    if result.n_particles is not None:
        frame["n"] = result.n_particles[rows].ravel()
    return frame


def flux_frame(result: SolveResult, problem: Problem) -> pd.DataFrame:
    """Darcy flux q on every face at the final time, positive out of the owner cell."""
    grid = problem.grid
    return pd.DataFrame({
        "face_id": np.arange(grid.n_faces),
        "owner": grid.owner,
        "neighbor": grid.neighbor,
        "side": grid.side,
        "q": result.face_flux,
    })


def step_frame(report: RunReport) -> pd.DataFrame:
    return pd.DataFrame([
        step.model_dump(exclude={"re_trace"}) for step in report.steps
    ])


def export_run(store: ArtifactStore, result: SolveResult, problem: Problem, report: RunReport,
               config: RunConfig, digest: str) -> Path:
    """Write solution, flux and step CSVs plus the run report; returns the report path."""
    label = problem_label(config)
    name = result.solver
    exports = config.exports
    write_csv(solution_frame(result, exports.history), store.path(label, digest, f"solution_{name}.csv"),
              "solution", digest, config.seed, {"solver": name, "problem": result.problem})
    if exports.fluxes:
        write_csv(flux_frame(result, problem), store.path(label, digest, f"fluxes_{name}.csv"),
                  "fluxes", digest, config.seed, {"solver": name})
    if exports.step_trace:
        write_csv(step_frame(report), store.path(label, digest, f"steps_{name}.csv"),
                  "steps", digest, config.seed, {"solver": name})
    return write_report(report, store.path(label, digest, f"report_{name}.json"))


class BenchmarkPipeline:
    """Reference generation, augmentation, training, solves and comparison for one problem.

    Reference, augmented and checkpoint artifacts are keyed by the digest of the
    settings they depend on and reused when already present.
    """

    def __init__(self, config: RunConfig, store: ArtifactStore, log_every: int = 10):
        self.config = seeded(config)
        self.store = store
        self.log_every = log_every
        self.label = problem_label(config)
        self.timings: Dict[str, float] = {}

    def _path(self, fields, name: str) -> Tuple[Path, str]:
        digest = config_digest(self.config, include=fields)
        return self.store.path(self.label, digest, name), digest

    def _timed(self, phase: str, started: float) -> None:
        self.timings[phase] = time.perf_counter() - started

    def reference(self) -> pd.DataFrame:
        path, digest = self._path(REFERENCE_FIELDS, "reference.csv")
        if path.exists():
            logger.info(f"Reusing reference dataset {path}")
            return read_csv(path, "reference")[0]
        started = time.perf_counter()
        problem = build_problem(self.config, "coarse")
        frame = generate_reference_solutions(problem, self.config.grw, self.config.lscheme, self.log_every)
        write_csv(frame, path, "reference", digest, self.config.seed, {"problem": problem.name})
        self._timed("reference", started)
        return frame

    def augmented(self, reference: pd.DataFrame) -> pd.DataFrame:
        path, digest = self._path(AUGMENT_FIELDS, "augmented.csv")
        if path.exists():
            logger.info(f"Reusing augmented dataset {path}")
            return read_csv(path, "augmented")[0]
        started = time.perf_counter()
        frame = augment(reference, self.config.augment, self.config.grw.scale)
        write_csv(frame, path, "augmented", digest, self.config.seed)
        self._timed("augment", started)
        return frame

    def checkpoints(self, dataset: pd.DataFrame) -> Tuple[Path, Path]:
        forward_path, _ = self._path(TRAIN_FIELDS, "forward.npz")
        inverse_path, _ = self._path(TRAIN_FIELDS, "inverse.npz")
        if forward_path.exists() and inverse_path.exists():
            logger.info(f"Reusing checkpoints in {forward_path.parent}")
            return forward_path, inverse_path
        started = time.perf_counter()
        forward, inverse = train_maps(
            dataset, self.config.mlp, self.config.train, self.config.grw.scale,
            include_nonconverged=self.config.grw.include_nonconverged, problem=self.label,
        )
        save_checkpoint(forward.network, forward_path)
        save_checkpoint(inverse.network, inverse_path)
        self._timed("train", started)
        return forward_path, inverse_path

    def field_checkpoints(self, sets: List[Tuple[str, ProblemSpec]]) -> Tuple[Path, Path]:
        """Pretrain on the first boundary set, then retrain from the parent for each later set.

        Every set gets its own reference and augmented datasets. Returns the
        checkpoints of the last set.
        """
        retrain = self.config.retrain
        parents: Optional[Tuple[Path, Path]] = None
        for name, spec in sets:
            forward_path, digest = self._path(RETRAIN_FIELDS, f"{name}_forward.npz")
            inverse_path, _ = self._path(RETRAIN_FIELDS, f"{name}_inverse.npz")
            if forward_path.exists() and inverse_path.exists():
                logger.info(f"Reusing {name} checkpoints in {forward_path.parent}")
                parents = (forward_path, inverse_path)
                continue
            started = time.perf_counter()
            problem = compile_problem(spec, dt=self.config.lscheme.dt)
            reference = generate_reference_solutions(problem, self.config.grw, self.config.lscheme, self.log_every)
            write_csv(reference, self.store.path(self.label, digest, f"reference_{name}.csv"),
                      "reference", digest, self.config.seed, {"problem": problem.name, "boundary_set": name})
            dataset = augment(reference, self.config.augment, self.config.grw.scale)
            include = self.config.grw.include_nonconverged
            if parents is None:
                logger.info(f"Pretraining on {name} for {retrain.pretrain_epochs} epochs")
                config = self.config.train.model_copy(update={"epochs": retrain.pretrain_epochs})
                forward, inverse = train_maps(dataset, self.config.mlp, config, self.config.grw.scale,
                                              include_nonconverged=include, problem=self.label)
            else:
                logger.info(f"Retraining on {name} for {retrain.retrain_epochs} epochs from {parents[0].name}")
                config = self.config.train.model_copy(update={"epochs": retrain.retrain_epochs})
                forward, inverse = retrain_maps(parents, dataset, config, self.config.grw.scale,
                                                include_nonconverged=include)
            save_checkpoint(forward.network, forward_path)
            save_checkpoint(inverse.network, inverse_path)
            self._timed(f"train_{name}", started)
            parents = (forward_path, inverse_path)
        return parents

    def _track(self, report: RunReport, result: SolveResult, target: SolveResult, problem: Problem) -> None:
        retrain = self.config.retrain
        report.tracking_error = tracking_error(result, target, problem, retrain.sensor_depth)
        if report.tracking_error > retrain.tracking_tolerance:
            logger.warning(
                f"{result.solver} sensor head at {retrain.sensor_depth:g} depth deviates by "
                f"{100 * report.tracking_error:.2f}% from the L-scheme target"
            )

    def run(self) -> pd.DataFrame:
        """Execute every stage and return the comparison table."""
        logger.info("=" * 80)
        logger.info(f"Starting benchmark pipeline for {self.label}")
        logger.info(f"Resolution: {self.config.resolution}, seed: {self.config.seed}")
        logger.info("=" * 80)

        sets = boundary_sets(resolve_spec(self.config, "coarse"))
        if sets:
            logger.info(f"Boundary sets: {[name for name, _ in sets]}")
            forward_path, inverse_path = self.field_checkpoints(sets)
        else:
            reference = self.reference()
            logger.info(f"Reference dataset: {len(reference)} rows")
            dataset = self.augmented(reference)
            logger.info(f"Augmented dataset: {len(dataset)} rows")
            forward_path, inverse_path = self.checkpoints(dataset)

        problem = build_problem(self.config)
        digest = config_digest(self.config)
        drw = self.config.drw.model_copy(update={
            "forward_checkpoint": str(forward_path),
            "inverse_checkpoint": str(inverse_path),
            "scale": self.config.grw.scale,
        })

        results: Dict[str, SolveResult] = {}
        for solver in ("lscheme", "grw", "drw"):
            logger.info(f"Running {solver} on {problem.name} ({problem.grid.n_cells} cells, {problem.steps} steps)")
            started = time.perf_counter()
            results[solver] = run_solver(solver, problem, self.config, drw=drw, log_every=self.log_every)
            self._timed(solver, started)

        reports: Dict[str, RunReport] = {}
        for solver, result in results.items():
            report = finalize_report(result, problem, digest, self.config.seed, reference=results["lscheme"])
            report.timings.update(self.timings)
            if sets and solver != "lscheme":
                self._track(report, result, results["lscheme"], problem)
            export_run(self.store, result, problem, report, self.config, digest)
            reports[solver] = report

        table = comparison_table(reports)
        path = self.store.path(self.label, digest, "comparison.csv")
        write_csv(table, path, "comparison", digest, self.config.seed)

        logger.info("=" * 80)
        logger.info(f"Benchmark pipeline for {self.label} completed; comparison table at {path}")
        logger.info("=" * 80)
        return table
