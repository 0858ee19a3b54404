"""Tests for the deterministic random-walk baseline and reference generation."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from drw_richards.models import BoundaryCondition, GrwConfig, HeadSchedule, LschemeConfig, ParticleScale
from drw_richards.services.grw_baseline import (
    LinearParticleMap,
    generate_reference_solutions,
    grw_kernel,
    grw_sweep,
    head_to_particles,
    head_to_particles_flagged,
    particles_to_head,
    solve_grw,
)
from drw_richards.services.lscheme import FieldState, FixedPointEngine, HeadKernel, lscheme_sweep, solve_lscheme
from drw_richards.services.problem import compile_problem

from conftest import STATIC_L, TIGHT_TOL, column_spec

SCALE = ParticleScale(particles_per_unit_head=1e10)


class TestParticleMaps:
    def test_proportional_encoding(self):
        """n = round(scale |psi|) and psi = -n / scale."""
        n = head_to_particles(np.array([-0.5, -1.25e-3]), SCALE)
        assert_allclose(n, [5e9, 1.25e7])
        assert_allclose(particles_to_head(n, SCALE), [-0.5, -1.25e-3])

    def test_positive_heads_are_flagged(self):
        n, saturated = head_to_particles_flagged(np.array([-0.2, 0.3]), SCALE)
        assert saturated.tolist() == [False, True]
        assert_allclose(n, [2e9, 3e9])

    def test_linear_map_round_trip(self):
        maps = LinearParticleMap(SCALE)
        psi = np.array([-3.0, -0.01])
        assert_allclose(maps.forward(maps.inverse(psi)), psi)
        assert maps.count_out_of_range(psi) == 0

    def test_kernel_encodes_dirichlet_heads(self, column_problem):
        """Boundary particle counts are the encoded Dirichlet heads."""
        kernel = grw_kernel(column_problem, SCALE)
        faces = column_problem.grid.boundary_faces
        assert_allclose(kernel.boundary_n[faces], 1e9)
        assert kernel.bias == 0.0


class TestGrwSolve:
    def test_matches_static_lscheme(self, column_problem, static_lscheme):
        """The particle iteration with proportional maps reproduces the static head iteration."""
        heads = solve_lscheme(column_problem, static_lscheme)
        particles = solve_grw(column_problem, GrwConfig(static_L=STATIC_L, tol=TIGHT_TOL))
        assert particles.all_converged
        assert_allclose(particles.psi, heads.psi, rtol=1e-7)
        assert_allclose(particles.n_particles, -1e10 * particles.psi, rtol=1e-12)

    def test_static_sweep_matches_head_sweep(self, column_problem):
        """One particle sweep equals one head sweep divided by -scale."""
        state = FieldState.from_head(column_problem, column_problem.initial_head, 1, 1e-3)
        swept = grw_sweep(state, state, column_problem, STATIC_L, SCALE)
        heads = lscheme_sweep(state, state, column_problem, LschemeConfig(adaptive=False, static_L=STATIC_L))
        assert_allclose(swept.psi, heads.psi, rtol=1e-12)
        assert_allclose(swept.n_particles, -1e10 * swept.psi, rtol=1e-12)
        assert swept.iterate_index == 1

    def test_stationary_strip(self, flat_problem):
        result = solve_grw(flat_problem, GrwConfig(static_L=STATIC_L))
        assert [s.iterations for s in result.steps] == [1, 1, 1]
        assert_allclose(result.psi[-1], -0.5)


class TestReferenceGeneration:
    def test_rows_per_cell_and_step(self, column_problem):
        """One row per cell and time level, initial state included."""
        config = GrwConfig(static_L=STATIC_L, tol=TIGHT_TOL)
        frame = generate_reference_solutions(
            column_problem, config, LschemeConfig(adaptive=False, static_L=STATIC_L, tol=TIGHT_TOL),
        )
        assert len(frame) == 5 * 11
        assert list(frame.columns) == ["cell_id", "time_index", "psi", "n_particles", "converged_flag", "unit_system"]
        assert frame["converged_flag"].all()
        assert (frame["unit_system"] == "m-s").all()
        first = frame[frame["time_index"] == 0]
        assert_allclose(first["psi"], -0.5)
        assert_allclose(first["n_particles"], 5e9)

    def test_initial_state_can_be_left_out(self, flat_problem):
        config = GrwConfig(static_L=STATIC_L, include_initial_state=False)
        frame = generate_reference_solutions(flat_problem, config)
        assert frame["time_index"].min() == 1
        assert len(frame) == 5 * 3

    def test_non_converged_steps_are_flagged(self, column_problem):
        """A one-iteration cap leaves every transient step flagged."""
        config = GrwConfig(static_L=STATIC_L, S_max_iters=1)
        lscheme = LschemeConfig(adaptive=False, static_L=STATIC_L, S_max_iters=1)
        frame = generate_reference_solutions(column_problem, config, lscheme)
        assert not frame.loc[frame["time_index"] > 0, "converged_flag"].any()
        assert frame.loc[frame["time_index"] == 0, "converged_flag"].all()

    def test_adaptive_reference_pairs_converge(self, column_problem):
        """With the adaptive L-scheme the particle solve follows the same policy and converges too."""
        frame = generate_reference_solutions(column_problem, GrwConfig(scale=SCALE), LschemeConfig())
        assert frame["converged_flag"].all()
        assert_allclose(frame["n_particles"], -1e10 * frame["psi"], rtol=1e-5)


class TestBoundaryRefresh:
    def scheduled_problem(self):
        schedule = HeadSchedule(times=[0.0, 4.0], heads=[-0.1, -0.3])
        spec = column_spec(boundaries={
            "z_min": BoundaryCondition(kind="dirichlet", head=-0.1),
            "z_max": BoundaryCondition(kind="dirichlet", head_schedule=schedule),
        })
        return compile_problem(spec)

    def test_begin_step_encodes_current_heads(self):
        problem = self.scheduled_problem()
        kernel = grw_kernel(problem, SCALE)
        top = problem.grid.boundary_faces[problem.grid.side[problem.grid.boundary_faces] == "z_max"]
        assert_allclose(kernel.boundary_n[top], 1e9)
        engine = FixedPointEngine(problem, LschemeConfig(), kernel, tol=1e-8, max_iters=50)
        kernel.begin_step(engine.context(2, problem.initial_head))
        assert_allclose(kernel.boundary_n[top], 2e9)

    def test_particle_solve_follows_head_schedule(self):
        """GRW and the L-scheme agree while the top head falls."""
        problem = self.scheduled_problem()
        heads = solve_lscheme(problem, LschemeConfig(adaptive=False, static_L=STATIC_L, tol=TIGHT_TOL))
        particles = solve_grw(problem, GrwConfig(static_L=STATIC_L, tol=TIGHT_TOL, scale=SCALE))
        assert particles.all_converged
        assert_allclose(particles.psi, heads.psi, rtol=1e-7)


class TestLocalSource:
    def test_linear_slope(self):
        assert_allclose(LinearParticleMap(SCALE).slope(np.array([-1.0, -0.2])), -1e10)

    def test_residual_is_head_residual_through_the_map(self, column_problem):
        """The particle residual of the proportional maps is -scale times the head residual."""
        kernel = grw_kernel(column_problem, SCALE)
        engine = FixedPointEngine(column_problem, LschemeConfig(), kernel, tol=1e-8, max_iters=50)
        ctx = engine.context(1, column_problem.initial_head)
        n = kernel.encode_initial(column_problem, column_problem.initial_head)
        particle, _ = kernel.residual(ctx, n)
        head, _ = HeadKernel().residual(ctx, column_problem.initial_head)
        assert_allclose(particle.g, -1e10 * head.g, rtol=1e-9, atol=1e-6)
        assert_allclose(particle.head, column_problem.initial_head)
