import numpy as np
import pytest

from bemnet.constants import FACES
from bemnet.errors import NonConformingStep, OutsideDomain, ShapeMismatch
from bemnet.geometry import (
    BoxDomain, PointSet, build_box_mesh, distance_to_boundary, evaluation_grid,
    lattice_spacing, layout_counts, mesh_spacing, solid_angle_coeff, uniform_sensor_points,
)

TEST_BOX = BoxDomain((1.0, 5.0, 3.0))


class TestBoxDomain:
    def test_surface_area(self):
        assert TEST_BOX.surface_area == pytest.approx(46.0)

    @pytest.mark.parametrize('lengths', [(0.0, 1.0, 1.0), (1.0, -2.0, 1.0), (1.0, 1.0)])
    def test_rejects_bad_lengths(self, lengths):
        with pytest.raises(ValueError):
            BoxDomain(lengths)


class TestBuildBoxMesh:
    def test_test_case_element_count(self):
        assert len(build_box_mesh(TEST_BOX, 0.1)) == 4600

    def test_unit_cube_half_step(self, unit_box):
        assert len(build_box_mesh(unit_box, 0.5)) == 24

    def test_total_area(self):
        mesh = build_box_mesh(TEST_BOX, 0.1)
        assert mesh.areas.sum() == pytest.approx(46.0, rel=1e-10)

    def test_element_count_formula(self):
        mesh = build_box_mesh(TEST_BOX, 0.25)
        assert len(mesh) == round(TEST_BOX.surface_area / 0.25 ** 2) == 736

    def test_normals_unit_and_outward(self):
        mesh = build_box_mesh(TEST_BOX, 0.25)
        np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0, atol=1e-12)
        # stepping outward along the normal leaves the box
        outside = mesh.centroids + 1e-3 * mesh.normals
        assert np.all(distance_to_boundary(TEST_BOX, outside) < 0.0)

    def test_centroids_on_labelled_face(self):
        mesh = build_box_mesh(TEST_BOX, 0.25)
        for face, axis, value in (('x-', 0, 0.0), ('x+', 0, 1.0), ('y+', 1, 5.0),
                                  ('z-', 2, 0.0), ('z+', 2, 3.0)):
            assert np.all(mesh.centroids[mesh.face_mask(face), axis] == value)

    def test_deterministic_ordering(self):
        mesh = build_box_mesh(TEST_BOX, 0.1)
        # faces in fixed order, each contiguous
        order = [f for i, f in enumerate(mesh.faces) if i == 0 or mesh.faces[i - 1] != f]
        assert order == list(FACES)
        # within x-: y varies slowest, z fastest
        np.testing.assert_allclose(mesh.centroids[0], (0.0, 0.05, 0.05))
        np.testing.assert_allclose(mesh.centroids[1], (0.0, 0.05, 0.15))
        np.testing.assert_allclose(mesh.centroids[30], (0.0, 0.15, 0.05))

    def test_area_is_step_squared(self):
        mesh = build_box_mesh(TEST_BOX, 0.25)
        np.testing.assert_allclose(mesh.areas, 0.0625)
        np.testing.assert_allclose(mesh.sides, 0.25)

    @pytest.mark.parametrize('step', [0.3, 0.7, 0.0, -0.1])
    def test_non_conforming_step(self, step):
        with pytest.raises(NonConformingStep):
            build_box_mesh(TEST_BOX, step)

    def test_element_view(self, coarse_mesh):
        element = coarse_mesh.element(0)
        assert element.face == 'x-'
        assert element.normal == (-1.0, 0.0, 0.0)
        assert element.area == pytest.approx(0.25)
        assert len(list(coarse_mesh.elements)) == 24

    @pytest.mark.parametrize('box, step', [(TEST_BOX, 0.25), (BoxDomain((1.0, 1.0, 1.0)), 0.5)])
    def test_closed_surface(self, box, step):
        mesh = build_box_mesh(box, step)
        np.testing.assert_allclose((mesh.normals * mesh.areas[:, None]).sum(axis=0), 0.0,
                                   atol=1e-12)

    def test_mesh_spacing(self):
        assert mesh_spacing(TEST_BOX, 0.1) == pytest.approx(0.1)
        with pytest.raises(NonConformingStep):
            mesh_spacing(TEST_BOX, 0.3)


class TestSolidAngleCoeff:
    def test_interior(self):
        assert solid_angle_coeff((0.5, 2.5, 1.5), TEST_BOX) == 1.0

    def test_face(self):
        assert solid_angle_coeff((1.0, 2.5, 1.5), TEST_BOX) == 0.5

    def test_edge(self):
        assert solid_angle_coeff((1.0, 5.0, 1.5), TEST_BOX) == 0.25

    def test_corner(self):
        assert solid_angle_coeff((0.0, 0.0, 0.0), TEST_BOX) == 0.125

    def test_outside(self):
        with pytest.raises(OutsideDomain):
            solid_angle_coeff((1.5, 2.5, 1.5), TEST_BOX)


class TestLattices:
    def test_default_sensors(self):
        sensors = uniform_sensor_points(TEST_BOX, (1, 5, 3))
        assert len(sensors) == 15
        np.testing.assert_allclose(sensors.points[:, 0], 0.5)
        assert sorted(set(np.round(sensors.points[:, 1], 12))) == [0.5, 1.5, 2.5, 3.5, 4.5]
        assert sorted(set(np.round(sensors.points[:, 2], 12))) == [0.5, 1.5, 2.5]

    def test_refined_layout(self):
        assert len(uniform_sensor_points(TEST_BOX, (2, 10, 6))) == 120

    def test_single_point_unit_box(self, unit_box):
        np.testing.assert_allclose(uniform_sensor_points(unit_box, (1, 1, 1)).points,
                                   [[0.5, 0.5, 0.5]])

    def test_single_point_test_box(self):
        np.testing.assert_allclose(evaluation_grid(TEST_BOX, (1, 1, 1)).points,
                                   [[0.5, 2.5, 1.5]])

    def test_reference_grid(self):
        grid = evaluation_grid(TEST_BOX, (10, 50, 30))
        assert len(grid) == 15000
        for axis in range(3):
            levels = np.unique(np.round(grid.points[:, axis], 12))
            np.testing.assert_allclose(np.diff(levels), 0.1)
        assert distance_to_boundary(TEST_BOX, grid.points).min() >= 0.05 - 1e-12

    def test_lattice_spacing(self):
        assert lattice_spacing(TEST_BOX, (1, 5, 3)) == pytest.approx(1.0)
        assert lattice_spacing(TEST_BOX, (10, 50, 30)) == pytest.approx(0.1)

    @pytest.mark.parametrize('n, counts', [(15, (1, 5, 3)), (120, (2, 10, 6)),
                                           (960, (4, 20, 12))])
    def test_layout_counts(self, n, counts):
        assert layout_counts((1, 5, 3), n) == counts

    @pytest.mark.parametrize('n', [30, 100])
    def test_layout_counts_rejects(self, n):
        with pytest.raises(ValueError):
            layout_counts((1, 5, 3), n)


class TestPointSet:
    def test_values_must_match(self):
        with pytest.raises(ShapeMismatch):
            PointSet(np.zeros((3, 3)), np.zeros(2))

    def test_check_interior(self, unit_box):
        PointSet([[0.5, 0.5, 0.5]]).check_interior(unit_box)
        with pytest.raises(OutsideDomain):
            PointSet([[0.5, 0.5, 1.0]]).check_interior(unit_box)

    def test_subset_keeps_values(self):
        points = PointSet(np.arange(9.0).reshape(3, 3), np.array([1.0, 2.0, 3.0]))
        sub = points.subset([2, 0])
        np.testing.assert_array_equal(sub.values, [3.0, 1.0])
        np.testing.assert_array_equal(sub.points[0], [6.0, 7.0, 8.0])
