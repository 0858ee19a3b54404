"""Services module."""
from .artifact_store import ArtifactStore, DrwSettings, config_digest, read_csv, read_report, write_csv, write_report
from .benchmarks import BENCHMARKS, compare_tracy_variants, load_problem, pin_tracy_variant, tracy_analytical
from .diagnostics import (
    comparison_table,
    mass_balance,
    mse_field,
    profile_deviation,
    slice_at,
    symmetry_defect,
    tracking_error,
)
from .drw_solver import drw_source_J, drw_sweep, relative_error, solve_drw
from .grw_baseline import generate_reference_solutions, grw_sweep, solve_grw
from .lscheme import (
    FieldState,
    SolveResult,
    assemble_system_matrix,
    choose_linearization,
    condition_number,
    lscheme_sweep,
    residual_g,
    solve_lscheme,
    solve_timestep,
)
from .mesh import Grid, build_cartesian_grid, build_cylindrical_grid, neighbors
from .neural_map import NeuralParticleMap, augment, load_checkpoint, mlp_forward, retrain_maps, save_checkpoint, train
from .pipeline import BenchmarkPipeline
from .problem import Problem, compile_problem
from .soil_models import hydraulic_conductivity, moisture_capacity, water_content

__all__ = [
    "ArtifactStore",
    "DrwSettings",
    "config_digest",
    "read_csv",
    "read_report",
    "write_csv",
    "write_report",
    "BENCHMARKS",
    "compare_tracy_variants",
    "load_problem",
    "pin_tracy_variant",
    "tracy_analytical",
    "comparison_table",
    "mass_balance",
    "mse_field",
    "profile_deviation",
    "slice_at",
    "symmetry_defect",
    "tracking_error",
    "drw_source_J",
    "drw_sweep",
    "relative_error",
    "solve_drw",
    "generate_reference_solutions",
    "grw_sweep",
    "solve_grw",
    "FieldState",
    "SolveResult",
    "assemble_system_matrix",
    "choose_linearization",
    "condition_number",
    "lscheme_sweep",
    "residual_g",
    "solve_lscheme",
    "solve_timestep",
    "Grid",
    "build_cartesian_grid",
    "build_cylindrical_grid",
    "neighbors",
    "NeuralParticleMap",
    "augment",
    "load_checkpoint",
    "mlp_forward",
    "retrain_maps",
    "save_checkpoint",
    "train",
    "BenchmarkPipeline",
    "Problem",
    "compile_problem",
    "hydraulic_conductivity",
    "moisture_capacity",
    "water_content",
]
