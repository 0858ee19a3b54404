"""Richards equation solvers with adaptive linearisation and data-driven random walks."""
from .app import main

__all__ = ["main"]
