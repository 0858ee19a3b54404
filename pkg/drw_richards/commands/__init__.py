"""Subcommands of the drw-richards CLI."""
from .generate_reference import register as generate_reference_command
from .augment import register as augment_command
from .train import register as train_command
from .solve import register as solve_command
from .benchmark import register as benchmark_command
from .report import register as report_command
from .tracy import register as tracy_command
from .grid import register as grid_command

__all__ = [
    "generate_reference_command",
    "augment_command",
    "train_command",
    "solve_command",
    "benchmark_command",
    "report_command",
    "tracy_command",
    "grid_command",
]
