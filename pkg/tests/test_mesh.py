"""Tests for structured Cartesian and cylindrical grids."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from drw_richards.errors import GridError
from drw_richards.services.mesh import (
    BOUNDARY,
    build_cartesian_grid,
    build_cylindrical_grid,
    grid_to_frame,
    neighbors,
)


class TestCartesianGrid:
    def test_counts_and_volumes(self):
        """A 4 x 4 square has 24 interior and 16 boundary faces and unit total volume."""
        grid = build_cartesian_grid([1.0, 1.0], [4, 4])
        assert grid.n_cells == 16
        assert int(np.count_nonzero(grid.interior)) == 24
        assert grid.boundary_faces.size == 16
        assert_allclose(grid.volumes.sum(), 1.0)

    def test_last_axis_is_vertical(self):
        """Cell index runs fastest along the last (vertical) axis."""
        grid = build_cartesian_grid([2.0, 1.0], [2, 4])
        assert grid.axes == ("x", "z")
        assert_allclose(grid.centers[:4, 1], [0.125, 0.375, 0.625, 0.875])
        assert_allclose(grid.centers[:4, 0], 0.5)

    def test_boundary_sides(self):
        """Every boundary face carries its side name."""
        grid = build_cartesian_grid([1.0], [3])
        sides = sorted(grid.side[grid.boundary_faces].tolist())
        assert sides == ["z_max", "z_min"]
        assert grid.sides() == ["z_min", "z_max"]

    def test_boundary_distance_is_half_cell(self):
        """Boundary faces sit half a cell from the owner centre."""
        grid = build_cartesian_grid([1.0], [4])
        assert_allclose(grid.distance[grid.boundary_faces], 0.125)

    def test_periodic_axis_wraps(self):
        """Periodic sides become interior faces joining the first and last layers."""
        grid = build_cartesian_grid([1.0, 1.0], [3, 2], boundary_tags={"x_min": "periodic", "x_max": "periodic"})
        assert "x_min" not in set(grid.side[grid.boundary_faces].tolist())
        assert int(np.count_nonzero(grid.interior)) == 3 * 2 + 3

    def test_one_sided_periodic_tag_is_rejected(self):
        """A periodic tag needs both ends of its axis."""
        with pytest.raises(GridError):
            build_cartesian_grid([1.0], [3], boundary_tags={"z_min": "periodic"})

    @pytest.mark.parametrize("extents,cells", [([0.0], [3]), ([1.0], [0]), ([1.0, 1.0], [2])])
    def test_invalid_sizes(self, extents, cells):
        """Non-positive extents, zero counts and mismatched lengths raise GridError."""
        with pytest.raises(GridError):
            build_cartesian_grid(extents, cells)

    def test_mirror_permutation(self):
        """Mirroring along x swaps the first and last columns."""
        grid = build_cartesian_grid([1.0, 1.0], [3, 2])
        mirror = grid.mirror_permutation("x")
        assert mirror.tolist() == [4, 5, 2, 3, 0, 1]
        assert_allclose(grid.centers[mirror, 0], 1.0 - grid.centers[:, 0])

    def test_accumulate_is_mirror_exact(self):
        """Mirror-symmetric face values accumulate into mirror-symmetric cell sums."""
        grid = build_cartesian_grid([1.0, 1.0], [5, 3])
        x = grid.face_centers[:, 0]
        values = np.where(grid.face_axis == 0, np.where(grid.interior, np.round(10.0 * (x - 0.5)), 0.0), 0.5)
        total = grid.accumulate(values)
        assert np.array_equal(total, total[grid.mirror_permutation("x")])


class TestNeighbors:
    def test_middle_cell_of_column(self):
        """A middle cell sees both vertical neighbours with outward normals."""
        grid = build_cartesian_grid([3.0], [3])
        found = neighbors(grid, 1)
        assert sorted(other for other, _ in found) == [0, 2]
        for other, geom in found:
            assert geom.normal[0] == (1.0 if other == 2 else -1.0)
            assert geom.distance == pytest.approx(1.0)

    def test_boundary_cell_reports_tag(self):
        """Boundary faces report the side tag instead of a cell index."""
        grid = build_cartesian_grid([3.0], [3], boundary_tags={"z_min": "dirichlet"})
        others = [other for other, _ in neighbors(grid, 0)]
        assert "dirichlet" in others

    def test_out_of_range(self):
        """Unknown cells raise IndexError."""
        grid = build_cartesian_grid([1.0], [2])
        with pytest.raises(IndexError):
            neighbors(grid, 5)


class TestCylindricalGrid:
    def test_total_volume(self):
        """Cell volumes add up to the cylinder volume."""
        grid = build_cylindrical_grid(0.1, 0.25, 3, 8, 6)
        assert_allclose(grid.volumes.sum(), np.pi * 0.1 ** 2 * 0.25)

    def test_axis_face_has_zero_measure(self):
        """The faces on r = 0 carry no area."""
        grid = build_cylindrical_grid(0.1, 0.25, 3, 8, 6)
        axis = grid.side == "r_min"
        assert np.all(grid.area[axis] == 0.0)
        assert grid.tags["r_min"] == "axis"

    def test_azimuth_is_periodic(self):
        """No boundary faces exist in the azimuthal direction."""
        grid = build_cylindrical_grid(0.1, 0.25, 2, 6, 2)
        assert not np.any(np.isin(grid.side[grid.boundary_faces], ["phi_min", "phi_max"]))
        assert np.all(grid.neighbor[grid.face_axis == 1] != BOUNDARY)

    def test_azimuthal_metric(self):
        """Azimuthal faces use the 1/r^2 metric of the owner ring."""
        grid = build_cylindrical_grid(0.1, 0.25, 2, 4, 1)
        faces = grid.face_axis == 1
        r = grid.centers[grid.owner[faces], 0]
        assert_allclose(grid.metric[faces], 1.0 / r ** 2)

    def test_non_periodic_azimuth_rejected(self):
        """The azimuthal sides cannot be given another condition."""
        with pytest.raises(GridError):
            build_cylindrical_grid(0.1, 0.25, 2, 4, 2, boundary_tags={"phi_min": "no_flow", "phi_max": "no_flow"})


def test_grid_to_frame_columns():
    """The debug dump lists one row per cell with coordinates and volume."""
    frame = grid_to_frame(build_cartesian_grid([1.0, 2.0], [2, 2]))
    assert list(frame.columns) == ["cell_id", "x", "z", "volume"]
    assert len(frame) == 4
