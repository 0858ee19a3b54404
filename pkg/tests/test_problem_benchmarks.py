"""Tests for problem compilation, the named benchmarks and the 3-D analytical solution."""
import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from drw_richards.errors import ConfigurationError
from drw_richards.models import BoundaryCondition, GridSpec, HeadProfile, HeadSchedule, SoilLayer, TracyParams
from drw_richards.services.benchmarks import (
    BENCHMARKS,
    SECONDS_PER_DAY,
    celia_1d,
    compare_tracy_variants,
    irrigation_flux,
    load_problem,
    pin_tracy_variant,
    scheduled_head,
    synthetic_schedule,
    tracy_analytical,
    tracy_grid_frame,
    tracy_sample_points,
    tracy_term_magnitudes,
    tracy_top_boundary,
)
from drw_richards.services.problem import (
    FACE_DIRICHLET,
    FACE_DRAINAGE,
    FACE_FLUX,
    FACE_NO_FLOW,
    compile_problem,
)
from drw_richards.services.soil_models import hydraulic_conductivity

from conftest import GARDNER, column_spec


class TestCompileProblem:
    def test_window_selects_strip_faces(self):
        """Only the surface face under the strip is Dirichlet; the rest of the side is sealed."""
        problem = compile_problem(load_problem("infiltration_2d", "coarse"))
        top = problem.grid.side == "z_min"
        assert int(np.count_nonzero(problem.face_kind[top] == FACE_DIRICHLET)) == 1
        assert int(np.count_nonzero(problem.face_kind[top] == FACE_NO_FLOW)) == 16
        assert problem.steps == 5

    def test_vertical_down_flips_elevation(self):
        """With z pointing down, elevation is the negated coordinate."""
        problem = compile_problem(load_problem("infiltration_2d", "coarse"))
        assert_allclose(problem.elevation, -problem.grid.centers[:, -1])

    def test_layers_split_cells(self):
        """The layered column holds two soils meeting at exactly one face."""
        problem = compile_problem(load_problem("hills_layered_1d", "reduced"))
        counts = np.bincount(problem.soil_index)
        assert counts.tolist() == [15, 15]
        assert int(np.count_nonzero(problem.material_interface)) == 1

    def test_uncovered_cells_are_rejected(self):
        """Layers must cover the whole column."""
        spec = column_spec(
            soils={"a": GARDNER, "b": GARDNER},
            layers=[SoilLayer(soil="a", lower=0.0, upper=0.3), SoilLayer(soil="b", lower=0.5, upper=1.0)],
        )
        with pytest.raises(ConfigurationError):
            compile_problem(spec)

    def test_boundary_conductivity_on_dirichlet_faces(self):
        """Dirichlet faces carry the conductivity of their prescribed head."""
        problem = compile_problem(column_spec())
        faces = problem.grid.boundary_faces
        assert_allclose(problem.face_head[faces], -0.1)
        assert_allclose(problem.boundary_conductivity[faces], hydraulic_conductivity(GARDNER, np.array([-0.1])))

    def test_dt_override(self):
        """An explicit time step changes the step count."""
        problem = compile_problem(column_spec(), dt=2.5)
        assert problem.dt == 2.5
        assert problem.steps == 4

    def test_tracy_profile_needs_parameters(self):
        """The analytical top profile cannot be compiled without its parameters."""
        spec = column_spec(boundaries={
            "z_min": BoundaryCondition(kind="no_flow"),
            "z_max": BoundaryCondition(kind="dirichlet", profile="tracy_top"),
        })
        with pytest.raises(ConfigurationError):
            compile_problem(spec)

    def test_cylinder_boundary_kinds(self):
        """The field cylinder drains at the bottom, takes irrigation at the top and seals the axis."""
        problem = compile_problem(load_problem("cylindrical_field", "coarse"))
        side = problem.grid.side
        assert np.all(problem.face_kind[side == "z_min"] == FACE_DRAINAGE)
        assert np.all(problem.face_kind[side == "z_max"] == FACE_FLUX)
        assert np.all(problem.face_kind[side == "r_min"] == FACE_NO_FLOW)

    def test_irrigation_reaches_flux_faces(self):
        """During an event the top faces receive depth / duration, otherwise nothing."""
        problem = compile_problem(load_problem("cylindrical_field", "coarse"))
        top = problem.grid.side == "z_max"
        assert_allclose(problem.inflow_velocity(14.5 * SECONDS_PER_DAY)[top], 1.81e-3 / SECONDS_PER_DAY)
        assert_allclose(problem.inflow_velocity(2 * SECONDS_PER_DAY)[top], 0.0)

    def test_tracy_top_heads(self):
        """Top Dirichlet heads follow the sinusoidal profile."""
        problem = compile_problem(load_problem("tracy_3d", "coarse"))
        top = np.flatnonzero(problem.grid.side == "z_max")
        centres = problem.grid.face_centers[top]
        expected = tracy_top_boundary(problem.spec.tracy, centres[:, 0], centres[:, 1])
        assert_allclose(problem.face_head[top], expected)


class TestBenchmarks:
    def test_registry(self):
        assert set(BENCHMARKS) == {"celia_1d", "hills_layered_1d", "infiltration_2d", "tracy_3d", "cylindrical_field"}

    def test_celia_coarse_size(self):
        """The coarse column has 40 cells and 40 steps of 9 s."""
        spec = celia_1d("coarse")
        assert spec.grid.cells == [40]
        assert spec.steps == 40

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError, match="Unknown problem"):
            load_problem("richards_4d")

    def test_unknown_resolution(self):
        with pytest.raises(ConfigurationError):
            load_problem("celia_1d", "ultra")

    def test_inline_mapping_lists_missing_keys(self):
        """A partial inline problem names what it lacks."""
        with pytest.raises(ConfigurationError, match="initial_head"):
            load_problem({
                "name": "partial",
                "unit_system": "m-s",
                "grid": GridSpec(extents=[1.0], cells=[3]).model_dump(),
                "soils": {"g": GARDNER.model_dump()},
                "boundaries": {"z_min": {"kind": "no_flow"}, "z_max": {"kind": "no_flow"}},
                "T": 1.0,
                "dt": 1.0,
            })

    def test_irrigation_schedule(self):
        schedule = synthetic_schedule()
        assert irrigation_flux(schedule, 29.2 * SECONDS_PER_DAY) == pytest.approx(1.58e-3 / SECONDS_PER_DAY)
        assert irrigation_flux(schedule, 15 * SECONDS_PER_DAY) == 0.0


class TestTracyAnalytical:
    def test_initial_state_is_residual_head(self):
        """At t = 0 the consistent variant reproduces h_r inside the cube."""
        params = TracyParams()
        x, y, z = tracy_sample_points(params)
        psi = tracy_analytical(params, x, y, z, 0.0)
        assert np.max(np.abs(psi - params.h_r)) < 1e-3

    def test_top_face_matches_boundary(self):
        """On z = c the solution equals the prescribed top head at any time."""
        params = TracyParams()
        x = np.array([0.5, 1.0, 1.7])
        y = np.array([1.0, 0.3, 1.2])
        psi = tracy_analytical(params, x, y, np.full(3, params.c), 3600.0)
        assert_allclose(psi, tracy_top_boundary(params, x, y), atol=1e-8)

    def test_variant_table_and_pinning(self):
        """All eight variants are scored and the consistent one wins."""
        table = compare_tracy_variants(TracyParams(series_terms=200))
        assert len(table) == 8
        pinned = pin_tracy_variant(TracyParams(series_terms=200))
        assert pinned.prefactor == "c_d"
        assert pinned.gamma_denominator == "d"

    def test_terms_decay_in_time(self):
        """Later times damp every series term."""
        params = TracyParams(series_terms=20)
        assert np.all(tracy_term_magnitudes(params, 3600.0) < tracy_term_magnitudes(params, 0.0))

    def test_grid_frame(self):
        frame = tracy_grid_frame(TracyParams(series_terms=50), [2, 2, 3], 0.0)
        assert list(frame.columns) == ["cell_id", "x", "y", "z", "t", "psi"]
        assert len(frame) == 12


class TestTimeDependentData:
    def scheduled_spec(self):
        schedule = HeadSchedule(times=[0.0, 4.0], heads=[-0.1, -0.3])
        return column_spec(boundaries={
            "z_min": BoundaryCondition(kind="dirichlet", head=-0.1),
            "z_max": BoundaryCondition(kind="dirichlet", head_schedule=schedule),
        })

    def test_boundary_state_interpolates_schedule(self):
        problem = compile_problem(self.scheduled_spec())
        top = np.flatnonzero(problem.grid.side == "z_max")
        bottom = np.flatnonzero(problem.grid.side == "z_min")
        state = problem.boundary_state(2.0)
        assert_allclose(state.face_head[top], -0.2)
        assert_allclose(state.face_head[bottom], -0.1)
        assert_allclose(state.conductivity[top], hydraulic_conductivity(GARDNER, np.array([-0.2])))
        assert_allclose(problem.boundary_state(9.0).face_head[top], -0.3)
        assert_allclose(problem.face_head[top], -0.1)

    def test_boundary_state_without_schedules_is_static(self, column_problem):
        state = column_problem.boundary_state(3.0)
        assert_allclose(state.face_head, column_problem.face_head)
        assert state.time == 3.0

    def test_scheduled_head(self):
        schedule = HeadSchedule(times=[1.0, 3.0], heads=[-1.0, -2.0])
        assert scheduled_head(schedule, 0.0) == -1.0
        assert scheduled_head(schedule, 2.0) == pytest.approx(-1.5)
        assert scheduled_head(schedule, 5.0) == -2.0

    def test_schedule_times_must_increase(self):
        with pytest.raises(ValidationError):
            HeadSchedule(times=[1.0, 1.0], heads=[-1.0, -2.0])

    def test_dirichlet_needs_some_head(self):
        with pytest.raises(ValidationError):
            BoundaryCondition(kind="dirichlet")

    def test_initial_profile_is_interpolated(self):
        """Cell centres 0.1 ... 0.9 read a linear profile from -1 at the bottom to 0 at the top."""
        profile = HeadProfile(elevations=[0.0, 1.0], heads=[-1.0, 0.0])
        problem = compile_problem(column_spec(initial_profile=profile))
        assert_allclose(problem.initial_head, [-0.9, -0.7, -0.5, -0.3, -0.1])

    def test_uniform_initial_head_without_profile(self, column_problem):
        assert_allclose(column_problem.initial_head, -0.5)
