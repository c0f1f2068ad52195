"""BEM-structured network: learned kernels plus a fixed boundary-integration layer.

Two independent dense stacks map a pair of (normalized) coordinates
c_ij = (r_i, r'_j) to approximations of G and dG/dn. The integration layer
combines them with the boundary Cauchy data and element areas:

    u_hat_i = sum_j ( q_j * G_hat(c_ij) - u_j * dG_hat/dn(c_ij) ) * area_j

This is the panel-sum form of the interior representation formula with the
same orientation as bemnet.bem, i.e. a 1 x N_C convolution whose kernel is
frozen to the element areas. Only the two stacks are trained.

A model built with a wavenumber carries the free-space kernel prior: its
inputs also hold the real parts of the panel-averaged Helmholtz kernels
G0 and dG0/dn, and the stacks learn relative corrections

    G_hat = G0 * (1 + g_stack(c_ij)),  dG_hat/dn = dG0/dn * (1 + dgdn_stack(c_ij)).

The output layers of such a model start at zero, so before training it
reproduces the representation formula of the oracle. Without a wavenumber
the stack outputs are the kernels themselves.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .bem import influence_matrices
from .constants import (
    INPUT_WIDTH, KERNEL_PRIOR_FREE_SPACE, KERNEL_PRIOR_NONE, LOSS_PAPER, LOSS_RMSE,
)
from .errors import EmptyBatch, ShapeMismatch
from .nn import DenseStack, backward, forward, init_stack


@dataclass(frozen=True)
class CoordinateNormalization:
    """Affine map of box coordinates onto [-1, 1] per dimension."""
    scale: Tuple[float, float, float]
    offset: Tuple[float, float, float]

    @classmethod
    def from_domain(cls, domain):
        return cls(tuple(2.0 / length for length in domain.lengths), (-1.0, -1.0, -1.0))

    @classmethod
    def identity(cls):
        return cls((1.0, 1.0, 1.0), (0.0, 0.0, 0.0))

    def apply(self, points):
        return np.asarray(points, dtype=float) * np.asarray(self.scale) + np.asarray(self.offset)

    def invert(self, coords):
        return (np.asarray(coords, dtype=float) - np.asarray(self.offset)) / np.asarray(self.scale)


@dataclass(frozen=True, eq=False)
class ModelInputs:
    input1: np.ndarray   # (N_P, N_C, 6) interior + collocation coordinates
    input2: np.ndarray   # (N_P, N_C, 2) boundary u and q
    input3: np.ndarray   # (N_P, N_C, 1) element areas
    prior: Optional[np.ndarray] = None      # (N_P, N_C, 2) Re G0 and Re dG0/dn
    wavenumber: Optional[float] = None      # wavenumber of the prior

    def __post_init__(self):
        n_p, n_c = self.input1.shape[:2]
        if (self.input1.shape != (n_p, n_c, INPUT_WIDTH)
                or self.input2.shape != (n_p, n_c, 2)
                or self.input3.shape != (n_p, n_c, 1)):
            raise ShapeMismatch('inconsistent input shapes %s, %s, %s'
                                % (self.input1.shape, self.input2.shape, self.input3.shape))
        if n_p < 1 or n_c < 1:
            raise ShapeMismatch('inputs need at least one interior and one collocation point')
        if (self.prior is None) != (self.wavenumber is None):
            raise ShapeMismatch('a kernel prior needs its wavenumber and vice versa')
        if self.prior is not None and self.prior.shape != (n_p, n_c, 2):
            raise ShapeMismatch('kernel prior shape %s, expected %s'
                                % (self.prior.shape, (n_p, n_c, 2)))

    @property
    def n_points(self):
        return self.input1.shape[0]

    @property
    def n_collocation(self):
        return self.input1.shape[1]

    def rows(self, index):
        """Inputs restricted to the given interior points."""
        index = np.asarray(index, dtype=int)
        prior = None if self.prior is None else self.prior[index]
        return ModelInputs(self.input1[index], self.input2[index], self.input3[index],
                           prior, self.wavenumber)


@dataclass(frozen=True, eq=False)
class GreensNetModel:
    g_stack: DenseStack
    dgdn_stack: DenseStack
    normalization: CoordinateNormalization
    wavenumber: Optional[float] = None   # set: stacks correct the free-space kernels

    def __post_init__(self):
        for stack in (self.g_stack, self.dgdn_stack):
            if stack.sizes[0] != INPUT_WIDTH or stack.sizes[-1] != 1:
                raise ShapeMismatch('kernel stacks must map %d -> 1, got %r'
                                    % (INPUT_WIDTH, stack.sizes))
        if self.wavenumber is not None and not self.wavenumber >= 0.0:
            raise ValueError('wavenumber must be >= 0, got %r' % self.wavenumber)

    @property
    def hidden_width(self):
        return self.g_stack.sizes[1]

    @property
    def depth(self):
        return len(self.g_stack.sizes) - 2

    @property
    def kernel_prior(self):
        return KERNEL_PRIOR_NONE if self.wavenumber is None else KERNEL_PRIOR_FREE_SPACE

    def parameters(self) -> List[np.ndarray]:
        return self.g_stack.parameters() + self.dgdn_stack.parameters()

    def with_parameters(self, params) -> 'GreensNetModel':
        split = 2 * self.g_stack.n_layers
        return GreensNetModel(self.g_stack.with_parameters(params[:split]),
                              self.dgdn_stack.with_parameters(params[split:]),
                              self.normalization, self.wavenumber)

    def inputs(self, mesh, cauchy_real, interior) -> 'ModelInputs':
        """assemble_inputs() with this model's normalization and kernel prior."""
        return assemble_inputs(mesh, cauchy_real, interior, self.normalization, self.wavenumber)


class LossGradients(NamedTuple):
    loss: float
    g: List[np.ndarray]
    dgdn: List[np.ndarray]

    @property
    def flat(self):
        return self.g + self.dgdn


def stack_sizes(hidden_width, depth):
    return (INPUT_WIDTH,) + (hidden_width,) * depth + (1,)


def _silence_output(stack):
    params = stack.parameters()
    params[-2] = np.zeros_like(params[-2])
    params[-1] = np.zeros_like(params[-1])
    return stack.with_parameters(params)


def init_model(domain, hidden_width, depth, seed, output_activation='linear', init='glorot',
               wavenumber=None):
    """Two independently seeded kernel stacks with box normalization.

    With a wavenumber the model corrects the free-space kernels and its
    output layers start at zero.
    """
    sizes = stack_sizes(hidden_width, depth)
    g_stack = init_stack(sizes, [seed, 0], output_activation, init)
    dgdn_stack = init_stack(sizes, [seed, 1], output_activation, init)
    if wavenumber is not None:
        g_stack, dgdn_stack = _silence_output(g_stack), _silence_output(dgdn_stack)
    return GreensNetModel(g_stack, dgdn_stack, CoordinateNormalization.from_domain(domain),
                          wavenumber)


def free_space_prior(mesh, wavenumber, points):
    """Real parts of the panel-averaged G and dG/dn, shape (len(points), N_C, 2)."""
    S, D = influence_matrices(mesh, wavenumber, points)
    areas = np.asarray(mesh.areas, dtype=float)
    return np.stack([S.real / areas, D.real / areas], axis=-1)


def assemble_inputs(mesh, cauchy_real, interior, normalization, wavenumber=None) -> ModelInputs:
    """Build the three network inputs for `interior` against every collocation point.

    A wavenumber adds the free-space kernel prior.
    """
    if len(cauchy_real) != len(mesh):
        raise ShapeMismatch('%d Cauchy pairs for %d elements' % (len(cauchy_real), len(mesh)))
    if len(interior) < 1:
        raise ShapeMismatch('no interior points')
    n_p, n_c = len(interior), len(mesh)
    p = normalization.apply(interior.points)
    c = normalization.apply(mesh.centroids)

    input1 = np.empty((n_p, n_c, INPUT_WIDTH))
    input1[:, :, :3] = p[:, None, :]
    input1[:, :, 3:] = c[None, :, :]
    uq = np.column_stack([np.asarray(cauchy_real.u, dtype=float),
                          np.asarray(cauchy_real.q, dtype=float)])
    input2 = np.broadcast_to(uq[None, :, :], (n_p, n_c, 2))
    input3 = np.broadcast_to(np.asarray(mesh.areas, dtype=float)[None, :, None], (n_p, n_c, 1))
    prior = None
    if wavenumber is not None:
        wavenumber = float(wavenumber)
        prior = free_space_prior(mesh, wavenumber, interior.points)
    return ModelInputs(input1, input2, input3, prior, wavenumber)


def integrate_boundary(g_values, dgdn_values, inputs: ModelInputs) -> np.ndarray:
    """Fixed integration layer over the collocation axis."""
    u = inputs.input2[:, :, 0]
    q = inputs.input2[:, :, 1]
    area = inputs.input3[:, :, 0]
    return ((q * g_values - u * dgdn_values) * area).sum(axis=1)


def _kernel_outputs(model, inputs):
    if model.g_stack.sizes[0] != inputs.input1.shape[2]:
        raise ShapeMismatch('model input width %d, inputs carry %d'
                            % (model.g_stack.sizes[0], inputs.input1.shape[2]))
    if model.wavenumber != inputs.wavenumber:
        raise ShapeMismatch('model kernel prior at k=%r, inputs carry k=%r'
                            % (model.wavenumber, inputs.wavenumber))
    flat = inputs.input1.reshape(-1, INPUT_WIDTH)
    g, g_tape = forward(model.g_stack, flat)
    dg, dg_tape = forward(model.dgdn_stack, flat)
    shape = inputs.input1.shape[:2]
    return g.reshape(shape), dg.reshape(shape), g_tape, dg_tape


def kernel_values(g_out, dgdn_out, inputs: ModelInputs):
    """Kernels fed to the integration layer from the raw stack outputs."""
    if inputs.prior is None:
        return g_out, dgdn_out
    return inputs.prior[:, :, 0] * (1.0 + g_out), inputs.prior[:, :, 1] * (1.0 + dgdn_out)


def predict(model: GreensNetModel, inputs: ModelInputs) -> np.ndarray:
    g, dg, _, _ = _kernel_outputs(model, inputs)
    return integrate_boundary(*kernel_values(g, dg, inputs), inputs)


def predict_field(model, mesh, cauchy_real, points, chunk):
    """predict() over a large PointSet, a chunk of interior points at a time."""
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        stop = min(start + chunk, len(points))
        inputs = model.inputs(mesh, cauchy_real, points.subset(range(start, stop)))
        out[start:stop] = predict(model, inputs)
    return out


def _check_pair(predictions, targets):
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.size == 0:
        raise EmptyBatch('loss of an empty batch')
    if predictions.shape != targets.shape:
        raise ShapeMismatch('%d predictions for %d targets' % (predictions.size, targets.size))
    return predictions, targets


def loss(predictions, targets, kind=LOSS_PAPER) -> float:
    """(1/N) sqrt(sum (u_hat - u)^2); kind='rmse' gives sqrt(mean (u_hat - u)^2)."""
    predictions, targets = _check_pair(predictions, targets)
    n = predictions.size
    root = np.sqrt(np.sum((predictions - targets) ** 2))
    if kind == LOSS_PAPER:
        return float(root / n)
    if kind == LOSS_RMSE:
        return float(root / np.sqrt(n))
    raise ValueError('unknown loss %r' % kind)


def loss_residual_gradient(predictions, targets, kind=LOSS_PAPER):
    """d loss / d predictions; zero where the loss itself is zero."""
    predictions, targets = _check_pair(predictions, targets)
    diff = predictions - targets
    root = np.sqrt(np.sum(diff ** 2))
    if root == 0.0:
        return np.zeros_like(diff)
    norm = predictions.size if kind == LOSS_PAPER else np.sqrt(predictions.size)
    return diff / (norm * root)


def loss_gradients(model, inputs, targets, kind=LOSS_PAPER) -> LossGradients:
    """Loss and its exact gradients for both stacks through the integration layer."""
    g, dg, g_tape, dg_tape = _kernel_outputs(model, inputs)
    predictions = integrate_boundary(*kernel_values(g, dg, inputs), inputs)
    value = loss(predictions, targets, kind)
    residual = loss_residual_gradient(predictions, targets, kind)[:, None]

    u = inputs.input2[:, :, 0]
    q = inputs.input2[:, :, 1]
    area = inputs.input3[:, :, 0]
    g_cot = residual * q * area
    dg_cot = -residual * u * area
    if inputs.prior is not None:
        g_cot = g_cot * inputs.prior[:, :, 0]
        dg_cot = dg_cot * inputs.prior[:, :, 1]
    g_grads, _ = backward(model.g_stack, g_tape, g_cot.reshape(-1, 1))
    dg_grads, _ = backward(model.dgdn_stack, dg_tape, dg_cot.reshape(-1, 1))
    return LossGradients(value, g_grads, dg_grads)
