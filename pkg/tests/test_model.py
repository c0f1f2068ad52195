import numpy as np
import pytest

from bemnet import bem
from bemnet.bem import BCSpec, CauchyData, generate_dataset, influence_matrices
from bemnet.errors import EmptyBatch, ShapeMismatch
from bemnet.geometry import BoxDomain, PointSet, build_box_mesh, uniform_sensor_points
from bemnet.model import (
    CoordinateNormalization, ModelInputs, assemble_inputs, init_model, integrate_boundary,
    loss, loss_gradients, predict, predict_field,
)


def _small_problem(plane_wave_data, n_points=2, wavenumber=None):
    data = plane_wave_data
    model = init_model(data.mesh.domain, hidden_width=4, depth=2, seed=3, wavenumber=wavenumber)
    sensors = data.sensors.subset(range(n_points))
    return model, model.inputs(data.mesh, data.boundary, sensors), sensors.values


def _perturbed_outputs(model, rng):
    """The model with random output layers, so every parameter receives a gradient."""
    params = model.parameters()
    split = len(params) // 2
    for i in (split - 2, split - 1, len(params) - 2, len(params) - 1):
        params[i] = 0.5 * rng.standard_normal(params[i].shape)
    return model.with_parameters(params)


class TestLoss:
    def test_exact_prediction(self):
        assert loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_single_miss(self):
        assert loss([0.0, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0]) == pytest.approx(0.05)
        assert loss([0.0, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0], 'rmse') == pytest.approx(0.1)

    def test_uniform_difference(self):
        assert loss([1.1, 1.1, 1.1, 1.1], [1.0, 1.0, 1.0, 1.0]) == pytest.approx(0.05, abs=1e-15)

    def test_single_point_is_absolute_error(self):
        assert loss([0.4], [0.3]) == pytest.approx(0.1)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            loss([], [])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            loss([1.0, 2.0], [1.0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            loss([1.0], [0.0], 'mae')


class TestAssembleInputs:
    def test_test_case_shapes(self):
        box = BoxDomain((1.0, 5.0, 3.0))
        mesh = build_box_mesh(box, 0.1)
        cauchy = CauchyData(np.zeros(len(mesh)), np.ones(len(mesh)))
        sensors = uniform_sensor_points(box, (1, 5, 3))
        inputs = assemble_inputs(mesh, cauchy, sensors, CoordinateNormalization.from_domain(box))
        assert inputs.input1.shape == (15, 4600, 6)
        assert inputs.input2.shape == (15, 4600, 2)
        assert inputs.input3.shape == (15, 4600, 1)
        np.testing.assert_allclose(inputs.input3, 0.01)

    def test_boundary_rows_repeat(self, plane_wave_data):
        _, inputs, _ = _small_problem(plane_wave_data, n_points=5)
        for i in range(1, 5):
            np.testing.assert_array_equal(inputs.input2[i], inputs.input2[0])
            np.testing.assert_array_equal(inputs.input1[i, :, 3:], inputs.input1[0, :, 3:])

    def test_normalized_range(self, plane_wave_data):
        _, inputs, _ = _small_problem(plane_wave_data, n_points=8)
        assert inputs.input1.min() >= -1.0 and inputs.input1.max() <= 1.0

    def test_normalization_round_trip(self):
        norm = CoordinateNormalization.from_domain(BoxDomain((1.0, 5.0, 3.0)))
        points = np.array([[0.0, 0.0, 0.0], [1.0, 5.0, 3.0], [0.5, 2.5, 1.5]])
        np.testing.assert_allclose(norm.apply(points), [[-1, -1, -1], [1, 1, 1], [0, 0, 0]])
        np.testing.assert_allclose(norm.invert(norm.apply(points)), points)

    def test_cauchy_length(self, coarse_mesh):
        with pytest.raises(ShapeMismatch):
            assemble_inputs(coarse_mesh, CauchyData(np.zeros(3), np.zeros(3)),
                            PointSet([[0.5, 0.5, 0.5]]), CoordinateNormalization.identity())

    def test_inconsistent_shapes(self):
        with pytest.raises(ShapeMismatch):
            ModelInputs(np.zeros((2, 3, 6)), np.zeros((2, 4, 2)), np.zeros((2, 3, 1)))


class TestPredict:
    def test_zero_model(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=0, init='zeros')
        inputs = assemble_inputs(data.mesh, data.boundary, data.sensors, model.normalization)
        np.testing.assert_array_equal(predict(model, inputs), 0.0)

    def test_linear_in_areas(self, plane_wave_data):
        model, inputs, _ = _small_problem(plane_wave_data)
        doubled = ModelInputs(inputs.input1, inputs.input2, 2.0 * inputs.input3)
        np.testing.assert_allclose(predict(model, doubled), 2.0 * predict(model, inputs),
                                   rtol=1e-12)

    def test_collocation_order_irrelevant(self, plane_wave_data, rng):
        model, inputs, _ = _small_problem(plane_wave_data)
        perm = rng.permutation(inputs.n_collocation)
        shuffled = ModelInputs(inputs.input1[:, perm], inputs.input2[:, perm],
                               inputs.input3[:, perm])
        np.testing.assert_allclose(predict(model, shuffled), predict(model, inputs),
                                   rtol=1e-12, atol=1e-15)

    def test_rows_are_independent(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=2)
        before = predict(model, model.inputs(data.mesh, data.boundary, data.sensors))
        points = data.sensors.points.copy()
        points[3] = [0.4, 0.6, 0.3]
        after = predict(model, model.inputs(data.mesh, data.boundary, PointSet(points)))
        untouched = np.arange(len(points)) != 3
        np.testing.assert_array_equal(after[untouched], before[untouched])
        assert after[3] != before[3]

    @pytest.mark.parametrize('alpha', [2.0, -0.5])
    def test_linear_in_boundary_data(self, plane_wave_data, alpha):
        model, inputs, _ = _small_problem(plane_wave_data, n_points=4)
        scaled = ModelInputs(inputs.input1, alpha * inputs.input2, inputs.input3)
        np.testing.assert_allclose(predict(model, scaled), alpha * predict(model, inputs),
                                   rtol=1e-12)

    def test_exact_kernels_reproduce_oracle(self, coarse_mesh, plane_wave_data):
        # feeding the true (real) kernels into the integration layer gives the
        # centroid-quadrature representation formula
        interior = uniform_sensor_points(coarse_mesh.domain, (2, 2, 2))
        cauchy = plane_wave_data.boundary
        inputs = assemble_inputs(coarse_mesh, cauchy, interior, CoordinateNormalization.identity())
        d = inputs.input1[:, :, :3] - inputs.input1[:, :, 3:]
        normals = np.broadcast_to(coarse_mesh.normals[None], d.shape)
        g, dg = bem._kernels(1.0, d, normals)
        predicted = integrate_boundary(g.real, dg.real, inputs)

        S, D = influence_matrices(coarse_mesh, 1.0, interior.points, refine=False)
        expected = S.real @ cauchy.q - D.real @ cauchy.u
        np.testing.assert_allclose(predicted, expected, rtol=1e-12, atol=1e-12)

    def test_predict_field_chunks(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=1)
        inputs = assemble_inputs(data.mesh, data.boundary, data.sensors, model.normalization)
        whole = predict(model, inputs)
        np.testing.assert_allclose(predict_field(model, data.mesh, data.boundary, data.sensors, 3),
                                   whole, rtol=1e-12)

    def test_parameter_count_mismatch(self, plane_wave_data):
        model, _, _ = _small_problem(plane_wave_data)
        with pytest.raises(ShapeMismatch):
            model.with_parameters(model.parameters()[:-1])


class TestKernelPrior:
    def test_untrained_model_is_free_space_representation(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=0, wavenumber=1.0)
        S, D = influence_matrices(data.mesh, 1.0, data.sensors.points)
        expected = S.real @ data.boundary.q - D.real @ data.boundary.u
        np.testing.assert_allclose(predict(model, model.inputs(data.mesh, data.boundary,
                                                               data.sensors)),
                                   expected, rtol=1e-12, atol=1e-12)

    def test_output_layers_start_at_zero(self, unit_box):
        model = init_model(unit_box, 4, 2, seed=0, wavenumber=2.0)
        assert model.kernel_prior == 'free-space'
        for stack in (model.g_stack, model.dgdn_stack):
            assert not stack.parameters()[-2].any()
            assert not stack.parameters()[-1].any()
        assert init_model(unit_box, 4, 2, seed=0).kernel_prior == 'none'

    def test_exact_at_zero_wavenumber(self, unit_box):
        data = generate_dataset(unit_box, 0.5, 0.0, BCSpec.test_case(), (2, 2, 2), (3, 3, 3))
        model = init_model(unit_box, 4, 2, seed=0, wavenumber=0.0)
        for points in (data.sensors, data.grid):
            got = predict(model, model.inputs(data.mesh, data.boundary, points))
            np.testing.assert_allclose(got, points.values, rtol=1e-10, atol=1e-12)

    def test_close_to_reference_at_nonzero_wavenumber(self, unit_box):
        data = generate_dataset(unit_box, 0.25, 1.0, BCSpec.test_case(), (2, 2, 2), (4, 4, 4))
        model = init_model(unit_box, 4, 2, seed=0, wavenumber=1.0)
        got = predict_field(model, data.mesh, data.boundary, data.grid, chunk=16)
        scale = np.abs(data.grid.values).max()
        assert np.abs(got - data.grid.values).max() <= 0.05 * scale

    def test_wavenumber_mismatch(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=0, wavenumber=1.0)
        inputs = assemble_inputs(data.mesh, data.boundary, data.sensors,
                                 model.normalization, wavenumber=2.0)
        with pytest.raises(ShapeMismatch):
            predict(model, inputs)
        with pytest.raises(ShapeMismatch):
            predict(init_model(data.mesh.domain, 4, 2, seed=0), inputs)

    def test_prior_needs_wavenumber(self):
        with pytest.raises(ShapeMismatch):
            ModelInputs(np.zeros((2, 3, 6)), np.zeros((2, 3, 2)), np.zeros((2, 3, 1)),
                        prior=np.ones((2, 3, 2)))

    def test_negative_wavenumber(self, unit_box):
        with pytest.raises(ValueError):
            init_model(unit_box, 4, 2, seed=0, wavenumber=-1.0)


def _assert_finite_differences(model, inputs, targets):
    result = loss_gradients(model, inputs, targets)
    params = model.parameters()
    assert sum(p.size for p in params) >= 100

    h = 1e-6
    checked = 0
    for i, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[i][idx] += h
            minus[i][idx] -= h
            fd = (loss(predict(model.with_parameters(plus), inputs), targets)
                  - loss(predict(model.with_parameters(minus), inputs), targets)) / (2 * h)
            assert result.flat[i][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)
            checked += 1
    assert checked >= 100


class TestLossGradients:
    def test_finite_differences(self, plane_wave_data):
        _assert_finite_differences(*_small_problem(plane_wave_data))

    def test_finite_differences_with_prior(self, plane_wave_data, rng):
        model, inputs, targets = _small_problem(plane_wave_data, wavenumber=1.0)
        _assert_finite_differences(_perturbed_outputs(model, rng), inputs, targets)

    def test_loss_value(self, plane_wave_data):
        model, inputs, targets = _small_problem(plane_wave_data)
        result = loss_gradients(model, inputs, targets, 'rmse')
        assert result.loss == pytest.approx(loss(predict(model, inputs), targets, 'rmse'))

    def test_zero_boundary_data(self, plane_wave_data):
        data = plane_wave_data
        model = init_model(data.mesh.domain, 4, 2, seed=5)
        zero = CauchyData(np.zeros(len(data.mesh)), np.zeros(len(data.mesh)))
        inputs = assemble_inputs(data.mesh, zero, data.sensors, model.normalization)
        result = loss_gradients(model, inputs, data.sensors.values)
        for g in result.flat:
            np.testing.assert_array_equal(g, 0.0)

    def test_exact_fit_has_zero_gradient(self, plane_wave_data):
        model, inputs, _ = _small_problem(plane_wave_data)
        result = loss_gradients(model, inputs, predict(model, inputs))
        assert result.loss == 0.0
        for g in result.flat:
            np.testing.assert_array_equal(g, 0.0)
