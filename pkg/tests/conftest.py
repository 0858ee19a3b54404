"""Shared fixtures: small problems that solve in milliseconds."""
import pytest

from drw_richards.models import (
    BoundaryCondition,
    FeddesParams,
    GardnerParams,
    GridSpec,
    LschemeConfig,
    ProblemSpec,
)
from drw_richards.services.problem import compile_problem

GARDNER = GardnerParams(K_s=0.01, theta_s=0.4, theta_r=0.05, alpha_g=1.0)
STATIC_L = 1.5
TIGHT_TOL = 1e-10


def column_spec(**overrides) -> ProblemSpec:
    """5-cell vertical Gardner column wetted from both ends."""
    fields = dict(
        name="gardner_column",
        unit_system="m-s",
        grid=GridSpec(extents=[1.0], cells=[5]),
        soils={"gardner": GARDNER},
        initial_head=-0.5,
        boundaries={
            "z_min": BoundaryCondition(kind="dirichlet", head=-0.1),
            "z_max": BoundaryCondition(kind="dirichlet", head=-0.1),
        },
        T=10.0,
        dt=1.0,
        static_L=STATIC_L,
    )
    fields.update(overrides)
    return ProblemSpec(**fields)


def flat_spec(head: float = -0.5, sides: str = "dirichlet", sink=None) -> ProblemSpec:
    """Horizontal 5 x 1 strip at uniform head; nothing drives any flow."""
    lateral = (BoundaryCondition(kind="dirichlet", head=head) if sides == "dirichlet"
               else BoundaryCondition(kind="no_flow"))
    return ProblemSpec(
        name="flat_strip",
        unit_system="m-s",
        grid=GridSpec(extents=[1.0, 0.1], cells=[5, 1]),
        soils={"gardner": GARDNER},
        initial_head=head,
        boundaries={
            "x_min": lateral,
            "x_max": lateral,
            "z_min": BoundaryCondition(kind="no_flow"),
            "z_max": BoundaryCondition(kind="no_flow"),
        },
        sink=sink,
        T=3.0,
        dt=1.0,
        static_L=STATIC_L,
    )


@pytest.fixture
def column_problem():
    return compile_problem(column_spec())


@pytest.fixture
def flat_problem():
    return compile_problem(flat_spec())


@pytest.fixture
def sealed_problem():
    return compile_problem(flat_spec(sides="no_flow"))


@pytest.fixture
def sink_problem():
    return compile_problem(flat_spec(head=-1.0, sink=FeddesParams(S_max=1e-3)))


@pytest.fixture
def static_lscheme():
    return LschemeConfig(adaptive=False, static_L=STATIC_L, tol=TIGHT_TOL)
