"""Dense tanh stacks with explicit reverse-mode gradients and the Adam update.

Weights of layer l have shape (out_l, in_l). Hidden layers use tanh; the
output layer is linear unless the stack was built with output_activation
'tanh'. Every function here is pure: stacks, tapes and optimizer states
are never mutated.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, OUTPUT_ACTIVATIONS
from .errors import ShapeMismatch


@dataclass(frozen=True, eq=False)
class DenseStack:
    sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    output_activation: str = 'linear'

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, 'sizes', sizes)
        object.__setattr__(self, 'weights', tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, 'biases', tuple(np.asarray(b, dtype=float) for b in self.biases))
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeMismatch('a stack needs >= 2 positive layer sizes, got %r' % (sizes,))
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatch('expected %d layers' % (len(sizes) - 1))
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ShapeMismatch('layer %d has shapes %s/%s, expected (%d, %d)/(%d,)'
                                    % (l, w.shape, b.shape, sizes[l + 1], sizes[l], sizes[l + 1]))
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError('layer %d has non-finite parameters' % l)
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError('unknown output activation %r' % self.output_activation)

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> 'DenseStack':
        return DenseStack(self.sizes, tuple(params[0::2]), tuple(params[1::2]),
                          self.output_activation)


@dataclass(frozen=True, eq=False)
class Tape:
    """Activations recorded by forward() for one batch."""
    inputs: Tuple[np.ndarray, ...]       # input to each layer
    pre: Tuple[np.ndarray, ...]          # pre-activation of each layer
    output: np.ndarray
    squeeze: bool


def init_stack(sizes: Sequence[int], seed: int, output_activation='linear',
               init='glorot') -> DenseStack:
    """Glorot-uniform weights and zero biases from numpy's PCG64 generator.

    init='zeros' gives an all-zero stack.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ShapeMismatch('a stack needs >= 2 positive layer sizes, got %r' % (sizes,))
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if init == 'zeros':
            weights.append(np.zeros((fan_out, fan_in)))
        elif init == 'glorot':
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        else:
            raise ValueError('unknown init %r' % init)
        biases.append(np.zeros(fan_out))
    return DenseStack(sizes, tuple(weights), tuple(biases), output_activation)


def forward(stack: DenseStack, x) -> Tuple[np.ndarray, Tape]:
    """Evaluate the stack on one input vector or a (batch, width) array."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.ndim != 2 or a.shape[1] != stack.sizes[0]:
        raise ShapeMismatch('input width %s does not match stack input %d'
                            % (x.shape[-1:], stack.sizes[0]))
    inputs, pre = [], []
    last = stack.n_layers - 1
    for l, (w, b) in enumerate(zip(stack.weights, stack.biases)):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        a = z if l == last and stack.output_activation == 'linear' else np.tanh(z)
    tape = Tape(tuple(inputs), tuple(pre), a, squeeze)
    return (a[0] if squeeze else a), tape


def backward(stack: DenseStack, tape: Tape, cotangent) -> Tuple[List[np.ndarray], np.ndarray]:
    """Reverse-mode pass: gradients of <cotangent, output> w.r.t. parameters and input.

    Parameter gradients come back in the order of DenseStack.parameters().
    """
    g = np.asarray(cotangent, dtype=float)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.output.shape:
        raise ShapeMismatch('cotangent shape %s does not match output %s'
                            % (g.shape, tape.output.shape))
    if len(tape.pre) != stack.n_layers:
        raise ShapeMismatch('tape recorded %d layers, stack has %d'
                            % (len(tape.pre), stack.n_layers))

    last = stack.n_layers - 1
    grads: List[np.ndarray] = [None] * (2 * stack.n_layers)
    for l in range(last, -1, -1):
        if l == last and stack.output_activation == 'linear':
            dz = g
        else:
            activated = tape.output if l == last else tape.inputs[l + 1]
            dz = g * (1.0 - activated * activated)
        grads[2 * l] = dz.T @ tape.inputs[l]
        grads[2 * l + 1] = dz.sum(axis=0)
        g = dz @ stack.weights[l]
    return grads, (g[0] if tape.squeeze else g)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    t: int = 0
    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPSILON

    @classmethod
    def create(cls, params, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPSILON):
        zeros = tuple(np.zeros_like(p, dtype=float) for p in params)
        return cls(zeros, zeros, 0, lr, beta1, beta2, eps)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update. Returns (new params, new state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch('parameter, gradient and moment lists differ in length')
    t = state.t + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch('gradient shape %s does not match parameter %s' % (g.shape, p.shape))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_params.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(tuple(new_m), tuple(new_v), t, state.lr,
                          state.beta1, state.beta2, state.eps)
    return new_params, new_state
