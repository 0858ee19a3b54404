"""Data-driven random walk solver.

The particle iteration of the random-walk baseline with trained head/particle
maps and a per-cell adaptive L chosen from the particle-space residual.
"""
import logging
import time
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from drw_richards.errors import ConfigurationError
from drw_richards.models import DrwConfig, RunReport
from drw_richards.services.grw_baseline import PARTICLE_GUARD, ParticleKernel, ParticleMap, particle_sweep
from drw_richards.services.lscheme import (
    FieldState,
    FixedPointEngine,
    SolveResult,
    cell_weight,
    face_flows,
    resolve_config,
    source_terms,
    step_context,
)
from drw_richards.services.neural_map import NeuralParticleMap
from drw_richards.services.problem import Problem

logger = logging.getLogger(__name__)


def drw_source_J(state: FieldState, prev: FieldState, problem: Problem, L, cell: Optional[int] = None,
                 config: Optional[DrwConfig] = None):
    """Head-like source J = w * [gravity and boundary flux - storage change - sink] / L.

    ``L`` is a scalar or per-cell array in system-matrix units and ``w`` the
    matching cell weight. Returns one value when ``cell`` is given.
    """
    config = config or DrwConfig()
    lscheme = resolve_config(config.lscheme, problem)
    ctx = step_context(state, prev, problem, lscheme)
    flows = face_flows(problem, state.psi, lscheme, ctx.boundary)
    weight = cell_weight(problem, lscheme.matrix_form)
    J = weight * source_terms(ctx, state.psi, flows) / np.asarray(L, dtype=float)
    return float(J[cell]) if cell is not None else J


def drw_kernel(problem: Problem, maps: ParticleMap, bias_correction: bool = True,
               source_map: str = "local") -> ParticleKernel:
    """Particle kernel whose initial and boundary data pass through the inverse map."""
    return ParticleKernel(problem, maps, maps.inverse, bias_correction=bias_correction, source_map=source_map)


def drw_sweep(state: FieldState, prev: FieldState, problem: Problem, maps: ParticleMap,
              config: Optional[DrwConfig] = None) -> FieldState:
    """One particle sweep with the trained maps.

    L follows the adaptive rule applied to the particle residual, or the static
    value when ``config.lscheme.adaptive`` is off. Heads entering K and theta are
    decoded through the forward map.

    Raises:
        SolverError: If an update is not finite.
    """
    config = config or DrwConfig()
    lscheme = resolve_config(config.lscheme, problem)
    kernel = drw_kernel(problem, maps, config.bias_correction, config.source_map)
    L = None if lscheme.adaptive else np.full(state.psi.shape, float(lscheme.static_L))
    return particle_sweep(kernel, state, prev, problem, L, lscheme)

def relative_error(n_s, n_s1) -> np.ndarray:
    """|n^{s+1} - n^s| / max(|n^{s+1}|, 1 particle) per cell."""
    n_s = np.asarray(n_s, dtype=float)
    n_s1 = np.asarray(n_s1, dtype=float)
    return np.abs(n_s1 - n_s) / np.maximum(np.abs(n_s1), PARTICLE_GUARD)


def load_maps(config: DrwConfig) -> NeuralParticleMap:
    """Load both checkpoints named in ``config``.

    Raises:
        ConfigurationError: If a checkpoint path is unset or does not exist.
        CheckpointError: If a checkpoint is corrupt.
    """
    missing = [
        name for name, path in (("forward_checkpoint", config.forward_checkpoint),
                                ("inverse_checkpoint", config.inverse_checkpoint))
        if path is None or not Path(path).exists()
    ]
    if missing:
        raise ConfigurationError(f"DRW solve needs trained checkpoints; missing {missing}")
    return NeuralParticleMap.from_checkpoints(config.forward_checkpoint, config.inverse_checkpoint, config.scale)


def solve_drw(problem: Problem, config: Optional[DrwConfig] = None, maps: Optional[ParticleMap] = None,
              steps: Optional[int] = None, log_every: int = 10) -> Tuple[SolveResult, RunReport]:
    """Time-step the particle iteration with trained maps.

    Args:
        problem: Compiled problem.
        config: Solve settings; checkpoints are loaded from it when ``maps`` is None.
        maps: Head/particle map pair to use instead of the checkpoints.
        steps: Number of time steps (default: the problem's).
        log_every: INFO log cadence in steps.

    Returns:
        The solution history and its run report.
    """
    config = config or DrwConfig()
    if maps is None:
        maps = load_maps(config)
    lscheme = config.lscheme
    kernel = drw_kernel(problem, maps, config.bias_correction, config.source_map)
    logger.info(f"DRW map bias inverse(0) = {kernel.raw_bias:.6e} (correction {'on' if config.bias_correction else 'off'})")
    engine = FixedPointEngine(
        problem,
        lscheme,
        kernel,
        tol=config.re_tol,
        max_iters=lscheme.S_max_iters,
        adaptive=lscheme.adaptive,
        static_L=lscheme.static_L,
        freeze_conductivity=config.freeze_conductivity,
        solver_name="drw",
        log_every=log_every,
    )
    started = time.perf_counter()
    result = engine.run(steps=steps)
    result.net_bias = kernel.raw_bias
    result.timings["solve"] = time.perf_counter() - started

    extrapolating = [r.time_index for r in result.steps if r.extrapolated_cells]
    if extrapolating:
        logger.warning(
            f"Inverse map evaluated outside its trained range in {len(extrapolating)} steps "
            f"(first at step {extrapolating[0]})"
        )
    return result, result.to_report()
