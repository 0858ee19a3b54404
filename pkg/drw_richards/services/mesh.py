"""Structured finite-volume grids.

Cells are indexed in C order over the grid shape; the last axis is always the
vertical one. Every face is stored once. Interior faces point from ``owner`` to
``neighbor`` along +axis, boundary faces point outward from their owner and have
``neighbor == -1``.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from drw_richards.errors import GridError

logger = logging.getLogger(__name__)

BOUNDARY = -1


@dataclass(frozen=True)
class FaceGeom:
    """Geometry of one face as seen from a given cell."""
    face: int
    area: float
    normal: np.ndarray
    distance: float
    metric_vector: np.ndarray
    metric: float


@dataclass(frozen=True, eq=False)
class Grid:
    coordinate_system: str
    axes: Tuple[str, ...]
    shape: Tuple[int, ...]
    lengths: Tuple[float, ...]
    spacing: Tuple[float, ...]
    centers: np.ndarray
    volumes: np.ndarray
    owner: np.ndarray
    neighbor: np.ndarray
    area: np.ndarray
    physical_area: np.ndarray
    normal: np.ndarray
    distance: np.ndarray
    metric: np.ndarray
    metric_vector: np.ndarray
    face_centers: np.ndarray
    face_axis: np.ndarray
    side: np.ndarray
    cell_faces: np.ndarray
    cell_face_sign: np.ndarray
    tags: Dict[str, str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(self.volumes.size)

    @property
    def n_faces(self) -> int:
        return int(self.owner.size)

    @property
    def interior(self) -> np.ndarray:
        return self.neighbor != BOUNDARY

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.neighbor == BOUNDARY)

    def sides(self) -> List[str]:
        return [f"{axis}_{end}" for axis in self.axes for end in ("min", "max")]

    def accumulate(self, face_values: np.ndarray) -> np.ndarray:
        """Sum per-face values into cells, signed so owners receive +value.

        Values are added per axis as (minus side + plus side), which makes the
        result exactly mirror-symmetric whenever the inputs are.
        """
        ids = self.cell_faces
        safe = np.where(ids >= 0, ids, 0)
        contrib = np.where(ids >= 0, face_values[safe] * self.cell_face_sign, 0.0)
        total = contrib[:, 0, 0] + contrib[:, 0, 1]
        for k in range(1, self.dim):
            total = total + (contrib[:, k, 0] + contrib[:, k, 1])
        return total

    def mirror_permutation(self, axis: Union[int, str]) -> np.ndarray:
        """Cell index of the mirror image of each cell about the grid centre along ``axis``."""
        k = self.axes.index(axis) if isinstance(axis, str) else int(axis)
        if not 0 <= k < self.dim:
            raise GridError(f"Axis {axis} out of range for a {self.dim}-D grid")
        idx = np.arange(self.n_cells).reshape(self.shape)
        return np.flip(idx, axis=k).ravel()


def _edges(length: float, count: int) -> np.ndarray:
    return np.linspace(0.0, length, count + 1)


def _take(idx: np.ndarray, positions, axis: int) -> np.ndarray:
    return np.take(idx, positions, axis=axis).ravel()


def _validate(extents: Sequence[float], cells: Sequence[int]) -> None:
    if len(extents) != len(cells):
        raise GridError("One cell count is required per extent")
    for extent in extents:
        if not np.isfinite(extent) or extent <= 0:
            raise GridError(f"Grid extents must be positive, got {list(extents)}")
    for count in cells:
        if int(count) != count or count < 1:
            raise GridError(f"Cell counts must be integers >= 1, got {list(cells)}")


class _FaceBuilder:
    """Collects face groups and fills the per-cell face table."""

    def __init__(self, shape: Tuple[int, ...]):
        self.shape = shape
        self.dim = len(shape)
        n_cells = int(np.prod(shape))
        self.cell_faces = np.full((n_cells, self.dim, 2), -1, dtype=np.int64)
        self.cell_face_sign = np.zeros((n_cells, self.dim, 2))
        self.columns: Dict[str, List[np.ndarray]] = {
            key: [] for key in (
                "owner", "neighbor", "area", "physical_area", "normal", "distance",
                "metric", "metric_vector", "face_centers", "face_axis", "side",
            )
        }
        self.count = 0

    def add(self, axis: int, owner: np.ndarray, neighbor: Optional[np.ndarray], outward: float,
            side: str, area, physical_area, distance, metric, metric_vector, centers) -> None:
        n = owner.size
        face_ids = np.arange(self.count, self.count + n)
        self.count += n
        normal = np.zeros((n, self.dim))
        normal[:, axis] = outward
        slot = 1 if outward > 0 else 0
        self.cell_faces[owner, axis, slot] = face_ids
        self.cell_face_sign[owner, axis, slot] = 1.0
        if neighbor is not None:
            self.cell_faces[neighbor, axis, 0] = face_ids
            self.cell_face_sign[neighbor, axis, 0] = -1.0
        cols = self.columns
        cols["owner"].append(owner)
        cols["neighbor"].append(neighbor if neighbor is not None else np.full(n, BOUNDARY))
        cols["area"].append(np.broadcast_to(np.asarray(area, dtype=float), (n,)))
        cols["physical_area"].append(np.broadcast_to(np.asarray(physical_area, dtype=float), (n,)))
        cols["normal"].append(normal)
        cols["distance"].append(np.broadcast_to(np.asarray(distance, dtype=float), (n,)))
        cols["metric"].append(np.broadcast_to(np.asarray(metric, dtype=float), (n,)))
        cols["metric_vector"].append(np.broadcast_to(np.asarray(metric_vector, dtype=float), (n, self.dim)))
        cols["face_centers"].append(centers)
        cols["face_axis"].append(np.full(n, axis))
        cols["side"].append(np.full(n, side, dtype=object))

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {key: np.concatenate(values) for key, values in self.columns.items()}
        out["owner"] = out["owner"].astype(np.int64)
        out["neighbor"] = out["neighbor"].astype(np.int64)
        out["face_axis"] = out["face_axis"].astype(np.int64)
        return out


def _periodic_axes(axes: Tuple[str, ...], tags: Dict[str, str]) -> List[bool]:
    periodic = []
    for axis in axes:
        lo = tags.get(f"{axis}_min") == "periodic"
        hi = tags.get(f"{axis}_max") == "periodic"
        if lo != hi:
            raise GridError(f"Periodic tag on axis {axis} must be set on both sides")
        periodic.append(lo)
    return periodic


def build_cartesian_grid(extents: Sequence[float], cells: Sequence[int],
                         boundary_tags: Optional[Dict[str, str]] = None) -> Grid:
    """Build a uniform Cartesian grid.

    Args:
        extents: Domain length per axis (1-D: z; 2-D: x, z; 3-D: x, y, z).
        cells: Cell count per axis.
        boundary_tags: Optional side -> tag mapping; ``periodic`` sides are joined.

    Returns:
        Immutable Grid.

    Raises:
        GridError: On non-positive extents or counts.
    """
    _validate(extents, cells)
    if not 1 <= len(extents) <= 3:
        raise GridError("Cartesian grids have 1 to 3 axes")
    axes = {1: ("z",), 2: ("x", "z"), 3: ("x", "y", "z")}[len(extents)]
    shape = tuple(int(c) for c in cells)
    tags = dict(boundary_tags or {})
    periodic = _periodic_axes(axes, tags)
    spacing = tuple(float(e) / n for e, n in zip(extents, shape))
    edges = [_edges(float(e), n) for e, n in zip(extents, shape)]
    mids = [0.5 * (edge[:-1] + edge[1:]) for edge in edges]

    grids = np.meshgrid(*mids, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    volumes = np.full(centers.shape[0], float(np.prod(spacing)))
    idx = np.arange(centers.shape[0]).reshape(shape)
    builder = _FaceBuilder(shape)

    for k, axis in enumerate(axes):
        n = shape[k]
        area = float(np.prod([spacing[j] for j in range(len(shape)) if j != k]))

        def centers_at(owner: np.ndarray, coordinate: float) -> np.ndarray:
            pts = centers[owner].copy()
            pts[:, k] = coordinate
            return pts

        if n > 1:
            own = _take(idx, range(0, n - 1), k)
            nb = _take(idx, range(1, n), k)
            pts = centers[own].copy()
            pts[:, k] = pts[:, k] + 0.5 * spacing[k]
            builder.add(k, own, nb, 1.0, "", area, area, spacing[k], 1.0, np.ones(len(shape)), pts)
        if periodic[k]:
            if n > 1:
                own = _take(idx, n - 1, k)
                nb = _take(idx, 0, k)
                builder.add(k, own, nb, 1.0, "", area, area, spacing[k], 1.0, np.ones(len(shape)),
                            centers_at(own, edges[k][-1]))
            continue
        lo = _take(idx, 0, k)
        hi = _take(idx, n - 1, k)
        builder.add(k, lo, None, -1.0, f"{axis}_min", area, area, 0.5 * spacing[k], 1.0,
                    np.ones(len(shape)), centers_at(lo, edges[k][0]))
        builder.add(k, hi, None, 1.0, f"{axis}_max", area, area, 0.5 * spacing[k], 1.0,
                    np.ones(len(shape)), centers_at(hi, edges[k][-1]))

    cols = builder.arrays()
    logger.debug(f"Built cartesian grid {shape} with {cols['owner'].size} faces")
    return Grid(
        coordinate_system="cartesian",
        axes=axes,
        shape=shape,
        lengths=tuple(float(e) for e in extents),
        spacing=spacing,
        centers=centers,
        volumes=volumes,
        cell_faces=builder.cell_faces,
        cell_face_sign=builder.cell_face_sign,
        tags=tags,
        **cols,
    )


def build_cylindrical_grid(radius: float, depth: float, n_r: int, n_az: int, n_z: int,
                           boundary_tags: Optional[Dict[str, str]] = None) -> Grid:
    """Build a full-circle cylindrical grid with axes (r, phi, z).

    The azimuthal direction is always periodic. Face measures carry the
    coordinate Jacobian: radial faces r_f*dphi*dz, azimuthal faces r_c*dr*dz with
    metric 1/r_c**2 and angular distance dphi, axial faces (r_o**2 - r_i**2)/2*dphi.
    The face on the axis (r = 0) has zero measure.

    Raises:
        GridError: On non-positive sizes or counts.
    """
    _validate((radius, 2 * np.pi, depth), (n_r, n_az, n_z))
    tags = {"r_min": "axis", "phi_min": "periodic", "phi_max": "periodic"}
    tags.update(boundary_tags or {})
    if tags["phi_min"] != "periodic" or tags["phi_max"] != "periodic":
        raise GridError("The azimuthal direction of a cylindrical grid must be periodic")
    shape = (int(n_r), int(n_az), int(n_z))
    r_e = _edges(float(radius), shape[0])
    p_e = _edges(2 * np.pi, shape[1])
    z_e = _edges(float(depth), shape[2])
    dr, dphi, dz = r_e[1] - r_e[0], p_e[1] - p_e[0], z_e[1] - z_e[0]
    r_c = 0.5 * (r_e[:-1] + r_e[1:])
    p_c = 0.5 * (p_e[:-1] + p_e[1:])
    z_c = 0.5 * (z_e[:-1] + z_e[1:])

    R, P, Z = np.meshgrid(r_c, p_c, z_c, indexing="ij")
    centers = np.stack([R.ravel(), P.ravel(), Z.ravel()], axis=1)
    ir = np.unravel_index(np.arange(centers.shape[0]), shape)[0]
    ring = 0.5 * (r_e[ir + 1] ** 2 - r_e[ir] ** 2) * dphi
    volumes = ring * dz
    idx = np.arange(centers.shape[0]).reshape(shape)
    builder = _FaceBuilder(shape)

    def metric_vectors(owner: np.ndarray) -> np.ndarray:
        rc = centers[owner, 0]
        return np.stack([np.ones_like(rc), 1.0 / rc ** 2, np.ones_like(rc)], axis=1)

    def at(owner: np.ndarray, k: int, coordinate) -> np.ndarray:
        pts = centers[owner].copy()
        pts[:, k] = coordinate
        return pts

    # radial
    if shape[0] > 1:
        own = _take(idx, range(0, shape[0] - 1), 0)
        nb = _take(idx, range(1, shape[0]), 0)
        rf = r_e[ir[own] + 1]
        builder.add(0, own, nb, 1.0, "", rf * dphi * dz, rf * dphi * dz, dr, 1.0,
                    metric_vectors(own), at(own, 0, rf))
    lo = _take(idx, 0, 0)
    hi = _take(idx, shape[0] - 1, 0)
    builder.add(0, lo, None, -1.0, "r_min", 0.0, 0.0, 0.5 * dr, 1.0, metric_vectors(lo), at(lo, 0, 0.0))
    builder.add(0, hi, None, 1.0, "r_max", radius * dphi * dz, radius * dphi * dz, 0.5 * dr, 1.0,
                metric_vectors(hi), at(hi, 0, float(radius)))

    # azimuthal, periodic
    if shape[1] > 1:
        own = np.concatenate([_take(idx, range(0, shape[1] - 1), 1), _take(idx, shape[1] - 1, 1)])
        nb = np.concatenate([_take(idx, range(1, shape[1]), 1), _take(idx, 0, 1)])
        rc = centers[own, 0]
        phi_face = centers[own, 1] + 0.5 * dphi
        builder.add(1, own, nb, 1.0, "", rc * dr * dz, np.full(own.size, dr * dz), dphi,
                    1.0 / rc ** 2, metric_vectors(own), at(own, 1, phi_face))

    # axial
    if shape[2] > 1:
        own = _take(idx, range(0, shape[2] - 1), 2)
        nb = _take(idx, range(1, shape[2]), 2)
        builder.add(2, own, nb, 1.0, "", ring[own], ring[own], dz, 1.0, metric_vectors(own),
                    at(own, 2, centers[own, 2] + 0.5 * dz))
    lo = _take(idx, 0, 2)
    hi = _take(idx, shape[2] - 1, 2)
    builder.add(2, lo, None, -1.0, "z_min", ring[lo], ring[lo], 0.5 * dz, 1.0, metric_vectors(lo), at(lo, 2, 0.0))
    builder.add(2, hi, None, 1.0, "z_max", ring[hi], ring[hi], 0.5 * dz, 1.0, metric_vectors(hi),
                at(hi, 2, float(depth)))

    cols = builder.arrays()
    logger.debug(f"Built cylindrical grid {shape} with {cols['owner'].size} faces")
    return Grid(
        coordinate_system="cylindrical",
        axes=("r", "phi", "z"),
        shape=shape,
        lengths=(float(radius), 2 * np.pi, float(depth)),
        spacing=(dr, dphi, dz),
        centers=centers,
        volumes=volumes,
        cell_faces=builder.cell_faces,
        cell_face_sign=builder.cell_face_sign,
        tags=tags,
        **cols,
    )


def neighbors(grid: Grid, cell_index: int) -> List[Tuple[Union[int, str], FaceGeom]]:
    """Faces of one cell with the cell (or boundary tag) on the other side.

    Normals in the returned FaceGeom point out of ``cell_index``.

    Raises:
        IndexError: If ``cell_index`` is not a valid cell.
    """
    if not 0 <= cell_index < grid.n_cells:
        raise IndexError(f"Cell index {cell_index} out of range [0, {grid.n_cells})")
    out: List[Tuple[Union[int, str], FaceGeom]] = []
    for k in range(grid.dim):
        for slot in (0, 1):
            f = int(grid.cell_faces[cell_index, k, slot])
            if f < 0:
                continue
            sign = grid.cell_face_sign[cell_index, k, slot]
            if grid.neighbor[f] == BOUNDARY:
                other: Union[int, str] = grid.tags.get(grid.side[f], "boundary")
            else:
                other = int(grid.neighbor[f] if sign > 0 else grid.owner[f])
            geom = FaceGeom(
                face=f,
                area=float(grid.area[f]),
                normal=sign * grid.normal[f],
                distance=float(grid.distance[f]),
                metric_vector=grid.metric_vector[f],
                metric=float(grid.metric[f]),
            )
            out.append((other, geom))
    return out


def grid_to_frame(grid: Grid) -> pd.DataFrame:
    """Cell centres and volumes for debugging dumps."""
    frame = pd.DataFrame({"cell_id": np.arange(grid.n_cells)})
    for k, axis in enumerate(grid.axes):
        frame[axis] = grid.centers[:, k]
    frame["volume"] = grid.volumes
    return frame
