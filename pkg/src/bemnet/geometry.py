"""Box domain, constant-element boundary mesh and interior point lattices.

Elements are axis-aligned square panels with a single collocation point
at the centroid. Faces are laid out in the order x-, x+, y-, y+, z-, z+;
inside a face, elements are ordered lexicographically by the two in-face
coordinates (lower axis index varies slowest).
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .constants import BOUNDARY_TOLERANCE, FACE_AXIS, FACES, STEP_TOLERANCE
from .errors import NonConformingStep, OutsideDomain, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box [0, Lx] x [0, Ly] x [0, Lz]."""
    lengths: Tuple[float, float, float]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) != 3:
            raise ValueError('lengths must have 3 entries')
        if min(lengths) <= 0.0 or not all(np.isfinite(lengths)):
            raise ValueError('lengths must be strictly positive')
        object.__setattr__(self, 'lengths', lengths)

    @property
    def surface_area(self):
        lx, ly, lz = self.lengths
        return 2.0 * (lx * ly + lx * lz + ly * lz)


@dataclass(frozen=True)
class BoundaryElement:
    centroid: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    area: float
    face: str


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Constant-element surface mesh of a BoxDomain, stored column-wise."""
    domain: BoxDomain
    step: float
    centroids: np.ndarray   # (N, 3)
    normals: np.ndarray     # (N, 3), outward unit vectors
    areas: np.ndarray       # (N,)
    faces: np.ndarray       # (N,) face labels
    sides: np.ndarray       # (N,) panel side lengths

    def __len__(self):
        return len(self.areas)

    @property
    def elements(self) -> Iterator[BoundaryElement]:
        for j in range(len(self)):
            yield self.element(j)

    def element(self, j):
        return BoundaryElement(
            centroid=tuple(self.centroids[j]),
            normal=tuple(self.normals[j]),
            area=float(self.areas[j]),
            face=str(self.faces[j]),
        )

    def face_mask(self, face):
        return self.faces == face


@dataclass(frozen=True, eq=False)
class PointSet:
    """Interior points, optionally carrying a field value per point."""
    points: np.ndarray                    # (N, 3)
    values: Optional[np.ndarray] = None   # (N,)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, 'points', points)
        if self.values is not None:
            values = np.asarray(self.values)
            if values.shape != (len(points),):
                raise ShapeMismatch('%d values for %d points' % (values.size, len(points)))
            object.__setattr__(self, 'values', values)

    def __len__(self):
        return len(self.points)

    def with_values(self, values):
        return PointSet(self.points, values)

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        values = None if self.values is None else self.values[index]
        return PointSet(self.points[index], values)

    def check_interior(self, domain):
        """Raise OutsideDomain unless every point is strictly inside the box."""
        dist = distance_to_boundary(domain, self.points)
        bad = np.flatnonzero(dist <= 0.0)
        if bad.size:
            raise OutsideDomain('%d point(s) not strictly interior, first at %s'
                                % (bad.size, self.points[bad[0]].tolist()))


def distance_to_boundary(domain, points):
    """Signed distance to the nearest wall; negative outside the box."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lengths = np.asarray(domain.lengths)
    return np.minimum(points, lengths - points).min(axis=1)


def _divisions(length, step):
    n = int(round(length / step))
    if n < 1 or abs(n * step - length) > STEP_TOLERANCE * max(1.0, length):
        raise NonConformingStep('step %g does not tile box length %g' % (step, length))
    return n


def build_box_mesh(domain: BoxDomain, step: float) -> BoundaryMesh:
    """One square constant element per surface cell of side `step`."""
    if not step > 0.0:
        raise NonConformingStep('step must be positive, got %r' % step)
    lengths = domain.lengths
    divisions = [_divisions(length, step) for length in lengths]

    centroids, normals, areas, faces, sides = [], [], [], [], []
    for face in FACES:
        axis, side = FACE_AXIS[face]
        b, c = [d for d in range(3) if d != axis]
        hb = lengths[b] / divisions[b]
        hc = lengths[c] / divisions[c]
        cb = (np.arange(divisions[b]) + 0.5) * hb
        cc = (np.arange(divisions[c]) + 0.5) * hc
        gb, gc = np.meshgrid(cb, cc, indexing='ij')
        n = gb.size

        xyz = np.empty((n, 3))
        xyz[:, axis] = lengths[axis] if side else 0.0
        xyz[:, b] = gb.ravel()
        xyz[:, c] = gc.ravel()
        normal = np.zeros((n, 3))
        normal[:, axis] = 1.0 if side else -1.0

        centroids.append(xyz)
        normals.append(normal)
        areas.append(np.full(n, hb * hc))
        faces.append(np.full(n, face, dtype='<U2'))
        sides.append(np.full(n, np.sqrt(hb * hc)))

    mesh = BoundaryMesh(
        domain=domain,
        step=float(step),
        centroids=np.concatenate(centroids),
        normals=np.concatenate(normals),
        areas=np.concatenate(areas),
        faces=np.concatenate(faces),
        sides=np.concatenate(sides),
    )
    logger.info('Built box mesh %s with step %g: %d elements', lengths, step, len(mesh))
    return mesh


def solid_angle_coeff(point: Sequence[float], domain: BoxDomain) -> float:
    """Inner solid angle at `point` divided by 4*pi.

    1 inside, 1/2 on a face, 1/4 on an edge, 1/8 at a corner.
    """
    p = np.asarray(point, dtype=float)
    lengths = np.asarray(domain.lengths)
    if np.any(p < -BOUNDARY_TOLERANCE) or np.any(p > lengths + BOUNDARY_TOLERANCE):
        raise OutsideDomain('point %s lies outside the box %s' % (p.tolist(), domain.lengths))
    on_wall = (np.abs(p) <= BOUNDARY_TOLERANCE) | (np.abs(p - lengths) <= BOUNDARY_TOLERANCE)
    return 0.5 ** int(on_wall.sum())


def _cell_centered_lattice(domain, counts):
    counts = tuple(int(n) for n in counts)
    if len(counts) != 3 or min(counts) < 1:
        raise ValueError('lattice counts must be 3 integers >= 1, got %r' % (counts,))
    axes = [(np.arange(n) + 0.5) * length / n for n, length in zip(counts, domain.lengths)]
    gx, gy, gz = np.meshgrid(*axes, indexing='ij')
    return PointSet(np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]))


def uniform_sensor_points(domain: BoxDomain, counts: Sequence[int]) -> PointSet:
    """Sensor layout: one point at the center of each of nx*ny*nz equal cells."""
    return _cell_centered_lattice(domain, counts)


def evaluation_grid(domain: BoxDomain, counts: Sequence[int]) -> PointSet:
    """Reference grid for testing; same cell-centered rule as the sensor layout."""
    return _cell_centered_lattice(domain, counts)


def mesh_spacing(domain, step):
    """Largest panel side of the mesh build_box_mesh(domain, step) would produce."""
    return max(length / _divisions(length, step) for length in domain.lengths)


def lattice_spacing(domain, counts):
    """Largest point spacing of a cell-centered lattice."""
    return max(length / n for length, n in zip(domain.lengths, counts))


def layout_counts(base_counts, n_points):
    """Scale a base lattice so it holds `n_points` points (15 -> 120 -> 960)."""
    base = int(np.prod(base_counts))
    if n_points % base:
        raise ValueError('layout of %d points is not a refinement of %s' % (n_points, base_counts))
    m = round((n_points // base) ** (1.0 / 3.0))
    if base * m ** 3 != n_points:
        raise ValueError('layout of %d points is not a refinement of %s' % (n_points, base_counts))
    return tuple(m * n for n in base_counts)
