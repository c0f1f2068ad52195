"""Constant-element collocation BEM for the interior 3D Helmholtz problem.

Kernel convention: G(r, r') = exp(ikR) / (4 pi R) and dG/dn is the
derivative with respect to the source point r' along the outward normal
at r'. With that convention the interior representation reads

    u(r) = sum_j ( q_j S_j(r) - u_j D_j(r) )

where S_j and D_j are the single- and double-layer integrals of G and
dG/dn over panel j, and the boundary collocation equation at centroid i is

    u_i / 2 + sum_j D_ij u_j - sum_j S_ij q_j = 0.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .constants import (
    ASSEMBLY_BLOCK_ROWS, BC_DIRICHLET, BC_KINDS, COINCIDENT_TOLERANCE,
    DEFAULT_BC, FACES, MAX_CONDITION, MAX_REFINE_DEPTH, NEAR_FIELD_FACTOR,
    SELF_PANEL_STATIC,
)
from .errors import CoincidentPoints, ShapeMismatch, SingularSystem
from .geometry import (
    BoundaryElement, BoundaryMesh, PointSet, build_box_mesh, distance_to_boundary,
    evaluation_grid, uniform_sensor_points,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi

# In-plane unit vectors for panels whose normal lies along x, y or z
_IN_PLANE_B = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
_IN_PLANE_C = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
_CHILD_OFFSETS = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]) / 4.0


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError('unknown boundary condition kind %r' % self.kind)


@dataclass(frozen=True)
class BCSpec:
    """One boundary condition per box face."""
    faces: Dict[str, BoundaryCondition] = field(default_factory=dict)

    def __post_init__(self):
        missing = [f for f in FACES if f not in self.faces]
        if missing:
            raise ValueError('no boundary condition for face(s) %s' % ', '.join(missing))

    @classmethod
    def test_case(cls):
        """u = 1 on x+ and z-, du/dn = 1 on the remaining faces."""
        return cls({face: BoundaryCondition(*DEFAULT_BC[face]) for face in FACES})

    @classmethod
    def uniform(cls, kind, value):
        return cls({face: BoundaryCondition(kind, value) for face in FACES})

    def element_data(self, mesh):
        """Per-element Dirichlet mask and imposed value."""
        dirichlet = np.zeros(len(mesh), dtype=bool)
        values = np.zeros(len(mesh), dtype=complex)
        for face, bc in self.faces.items():
            mask = mesh.face_mask(face)
            dirichlet[mask] = bc.kind == BC_DIRICHLET
            values[mask] = bc.value
        return dirichlet, values


@dataclass(frozen=True, eq=False)
class CauchyData:
    """Boundary field u and normal derivative q, one pair per element."""
    u: np.ndarray
    q: np.ndarray
    condition: Optional[float] = None

    def __post_init__(self):
        if np.shape(self.u) != np.shape(self.q):
            raise ShapeMismatch('u and q lengths differ: %d vs %d' % (len(self.u), len(self.q)))

    def __len__(self):
        return len(self.u)

    def real_view(self):
        return CauchyData(np.real(self.u).astype(float), np.real(self.q).astype(float),
                          self.condition)


class GeneratedData(NamedTuple):
    boundary: CauchyData   # real parts of u and q on the boundary
    sensors: PointSet
    grid: PointSet
    mesh: BoundaryMesh


def _check_wavenumber(k):
    if not k >= 0.0:
        raise ValueError('wavenumber must be >= 0, got %r' % k)


def _kernels(k, d, normals):
    """G and dG/dn for separation vectors d = r - r' (broadcast over leading axes)."""
    R = np.sqrt(np.einsum('...i,...i->...', d, d))
    phase = np.exp(1j * k * R)
    g = phase / (FOUR_PI * R)
    proj = np.einsum('...i,...i->...', d, normals) / R
    dg = phase * (1.0 - 1j * k * R) / (FOUR_PI * R * R) * proj
    return g, dg


def greens_3d(k: float, r: Sequence[float], rp: Sequence[float]) -> complex:
    """Free-space Helmholtz Green's function exp(ikR) / (4 pi R)."""
    _check_wavenumber(k)
    d = np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)
    R = float(np.sqrt(d @ d))
    if R < COINCIDENT_TOLERANCE:
        raise CoincidentPoints('kernel evaluated at coincident points (R = %g)' % R)
    return complex(np.exp(1j * k * R) / (FOUR_PI * R))


def greens_normal_deriv(k: float, r: Sequence[float], rp: Sequence[float],
                        n: Sequence[float]) -> complex:
    """Derivative of G along the outward normal n at the source point rp."""
    _check_wavenumber(k)
    d = np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)
    R = float(np.sqrt(d @ d))
    if R < COINCIDENT_TOLERANCE:
        raise CoincidentPoints('kernel evaluated at coincident points (R = %g)' % R)
    _, dg = _kernels(k, d, np.asarray(n, dtype=float))
    return complex(dg)


def _self_single_layer(k, side):
    """Single-layer integral of a square panel over its own centroid."""
    return (SELF_PANEL_STATIC * side + 1j * k * side * side) / FOUR_PI


def _refined(k, targets, centers, sides, normals, level):
    """Integrate G and dG/dn over panels by 2x2 subdivision, recursing near targets.

    All arguments are per (target, panel) pair; returns one (S, D) per pair.
    """
    axis = np.argmax(np.abs(normals), axis=1)
    e_b, e_c = _IN_PLANE_B[axis], _IN_PLANE_C[axis]
    child_side = sides / 2.0

    # (P, 4, 3) child centers
    offsets = (_CHILD_OFFSETS[None, :, 0:1] * e_b[:, None, :]
               + _CHILD_OFFSETS[None, :, 1:2] * e_c[:, None, :])
    children = centers[:, None, :] + sides[:, None, None] * offsets

    p = len(targets)
    t = np.repeat(targets, 4, axis=0)
    c = children.reshape(-1, 3)
    n = np.repeat(normals, 4, axis=0)
    h = np.repeat(child_side, 4)

    d = t - c
    R = np.sqrt(np.einsum('ij,ij->i', d, d))
    S = np.zeros(4 * p, dtype=complex)
    D = np.zeros(4 * p, dtype=complex)

    coincident = R < COINCIDENT_TOLERANCE
    near = ~coincident & (R < NEAR_FIELD_FACTOR * h) & (level < MAX_REFINE_DEPTH)
    far = ~coincident & ~near

    if far.any():
        g, dg = _kernels(k, d[far], n[far])
        S[far] = g * h[far] ** 2
        D[far] = dg * h[far] ** 2
    if coincident.any():
        S[coincident] = _self_single_layer(k, h[coincident])
    if near.any():
        S[near], D[near] = _refined(k, t[near], c[near], h[near], n[near], level + 1)

    return S.reshape(p, 4).sum(axis=1), D.reshape(p, 4).sum(axis=1)


def influence_matrices(mesh, k, targets, refine=True):
    """Single-layer S and double-layer D integrals of every panel seen from `targets`.

    Returns two complex (M, N) arrays. Panels whose centroid coincides with a
    target use the analytic self-panel values; panels within two panel sides
    of a target are refined when `refine` is set, otherwise every panel uses
    one-point centroid quadrature.
    """
    _check_wavenumber(k)
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    d = targets[:, None, :] - mesh.centroids[None, :, :]
    R = np.sqrt(np.einsum('mnk,mnk->mn', d, d))
    coincident = R < COINCIDENT_TOLERANCE
    R_safe = np.where(coincident, 1.0, R)

    phase = np.exp(1j * k * R_safe)
    proj = np.einsum('mnk,nk->mn', d, mesh.normals) / R_safe
    S = phase / (FOUR_PI * R_safe) * mesh.areas
    D = phase * (1.0 - 1j * k * R_safe) / (FOUR_PI * R_safe ** 2) * proj * mesh.areas

    rows, cols = np.nonzero(coincident)
    S[rows, cols] = _self_single_layer(k, mesh.sides[cols])
    D[rows, cols] = 0.0

    if refine:
        near = ~coincident & (R < NEAR_FIELD_FACTOR * mesh.sides[None, :])
        rows, cols = np.nonzero(near)
        if rows.size:
            S[rows, cols], D[rows, cols] = _refined(
                k, targets[rows], mesh.centroids[cols], mesh.sides[cols],
                mesh.normals[cols], level=1)
    return S, D


def panel_integrals(k: float, target: Sequence[float], element: BoundaryElement):
    """(S, D) integrals of G and dG/dn over one square panel seen from `target`."""
    _check_wavenumber(k)
    target = np.asarray(target, dtype=float)
    center = np.asarray(element.centroid, dtype=float)
    normal = np.asarray(element.normal, dtype=float)
    side = float(np.sqrt(element.area))
    d = target - center
    R = float(np.sqrt(d @ d))
    if R < COINCIDENT_TOLERANCE:
        return complex(_self_single_layer(k, side)), 0j
    if R < NEAR_FIELD_FACTOR * side:
        S, D = _refined(k, target[None, :], center[None, :], np.array([side]),
                        normal[None, :], level=1)
        return complex(S[0]), complex(D[0])
    g, dg = _kernels(k, d, normal)
    return complex(g * element.area), complex(dg * element.area)


def solve_mixed(mesh, k, dirichlet, values):
    """Solve for the unknown Cauchy components given per-element imposed values.

    `dirichlet[j]` marks u_j as imposed (q_j unknown); elsewhere q_j is
    imposed and u_j unknown.
    """
    _check_wavenumber(k)
    n = len(mesh)
    if n == 0:
        raise ValueError('mesh has no elements')
    dirichlet = np.asarray(dirichlet, dtype=bool)
    values = np.asarray(values, dtype=complex)
    neumann = ~dirichlet

    A = np.empty((n, n), dtype=complex)
    b = np.zeros(n, dtype=complex)
    for start in range(0, n, ASSEMBLY_BLOCK_ROWS):
        stop = min(start + ASSEMBLY_BLOCK_ROWS, n)
        S, H = influence_matrices(mesh, k, mesh.centroids[start:stop])
        H[np.arange(stop - start), np.arange(start, stop)] += 0.5
        A[start:stop] = np.where(dirichlet[None, :], -S, H)
        b[start:stop] = S[:, neumann] @ values[neumann] - H[:, dirichlet] @ values[dirichlet]

    anorm = np.linalg.norm(A, 1)
    lu, piv = lu_factor(A, overwrite_a=True, check_finite=False)
    gecon, = get_lapack_funcs(('gecon',), (lu,))
    rcond, _ = gecon(lu, anorm, norm='1')
    condition = float(np.inf if rcond <= 0.0 else 1.0 / rcond)
    logger.info('BEM system N=%d, k=%g: condition estimate %.3e', n, k, condition)
    if not condition <= MAX_CONDITION:
        raise SingularSystem('BEM system is singular at k=%g (condition %.3e)' % (k, condition))

    x = lu_solve((lu, piv), b, check_finite=False)
    u = np.where(dirichlet, values, x)
    q = np.where(dirichlet, x, values)
    return CauchyData(u, q, condition)


def assemble_and_solve(mesh, k, bc: BCSpec) -> CauchyData:
    """Complete the Cauchy data of a mixed Dirichlet/Neumann problem."""
    dirichlet, values = bc.element_data(mesh)
    logger.info('Solving mixed BVP: %d Dirichlet, %d Neumann elements',
                int(dirichlet.sum()), int((~dirichlet).sum()))
    return solve_mixed(mesh, k, dirichlet, values)


def near_boundary_mask(mesh, points):
    """Targets closer to the boundary than half a panel; their values are less accurate."""
    return distance_to_boundary(mesh.domain, points) < mesh.step / 2.0


def evaluate_interior(mesh, cauchy: CauchyData, k, targets) -> np.ndarray:
    """Field at interior points from boundary Cauchy data (representation formula)."""
    targets.check_interior(mesh.domain)
    if len(cauchy) != len(mesh):
        raise ShapeMismatch('%d Cauchy pairs for %d elements' % (len(cauchy), len(mesh)))
    near = near_boundary_mask(mesh, targets.points)
    if near.any():
        logger.warning('%d of %d targets lie within h/2 of the boundary; accuracy degraded',
                       int(near.sum()), len(targets))

    u = np.asarray(cauchy.u, dtype=complex)
    q = np.asarray(cauchy.q, dtype=complex)
    out = np.empty(len(targets), dtype=complex)
    for start in range(0, len(targets), ASSEMBLY_BLOCK_ROWS):
        stop = min(start + ASSEMBLY_BLOCK_ROWS, len(targets))
        S, D = influence_matrices(mesh, k, targets.points[start:stop])
        out[start:stop] = S @ q - D @ u
    return out


def plane_wave_field(k, direction, points):
    """exp(ik d.r), an exact source-free Helmholtz solution for unit d."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return np.exp(1j * k * (np.asarray(points, dtype=float) @ d))


def plane_wave_cauchy(mesh, k, direction):
    """Exact Cauchy data of a plane wave sampled at the element centroids."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    u = plane_wave_field(k, d, mesh.centroids)
    q = 1j * k * (mesh.normals @ d) * u
    return CauchyData(u, q)


def generate_dataset(domain, step, k, bc, sensor_counts, grid_counts) -> GeneratedData:
    """Boundary Cauchy data, sensor readings and reference grid for one test case.

    The complex problem is solved; every returned value is the real part.
    """
    mesh = build_box_mesh(domain, step)
    cauchy = assemble_and_solve(mesh, k, bc)
    sensors = uniform_sensor_points(domain, sensor_counts)
    grid = evaluation_grid(domain, grid_counts)
    sensor_values = evaluate_interior(mesh, cauchy, k, sensors).real
    grid_values = evaluate_interior(mesh, cauchy, k, grid).real
    logger.info('Generated dataset: %d boundary, %d sensor, %d grid rows',
                len(mesh), len(sensors), len(grid))
    return GeneratedData(
        boundary=cauchy.real_view(),
        sensors=sensors.with_values(sensor_values),
        grid=grid.with_values(grid_values),
        mesh=mesh,
    )
