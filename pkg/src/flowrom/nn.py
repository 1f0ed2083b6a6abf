"""Fully connected tanh networks and the Adam optimizer.

The forward/backward pair here is the reference implementation used by model
construction, inference and the tests; training runs the fused kernels in
`flowrom.kernels`, which must stay numerically equivalent to these functions.

Conventions: weights are (out, in) matrices so a layer computes
x @ W.T + b; hidden layers apply tanh, the output layer is affine. Weights
are Glorot-uniform, biases start at zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError


@dataclass
class Mlp:
    layer_sizes: list
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @property
    def n_layers(self):
        return len(self.weights)


def glorot_uniform(n_out, n_in, rng):
    lim = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-lim, lim, (n_out, n_in))


def mlp_init(layer_sizes, rng):
    """Fresh network; draws weights layer by layer from `rng`."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ConfigError(f"need at least 2 layers, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 1, got {sizes}")
    weights = []
    biases = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(glorot_uniform(n_out, n_in, rng))
        biases.append(np.zeros(n_out))
    return Mlp(sizes, weights, biases)


def mlp_param_count(mlp):
    return sum(w.size + b.size for w, b in zip(mlp.weights, mlp.biases))


def mlp_forward(mlp, x):
    """Returns (y, tape); tape holds the input and every post-activation.

    `x` may be a single vector or a (batch, in) matrix; `y` matches.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != mlp.layer_sizes[0]:
        raise ShapeError(
            f"layer 0 expects input size {mlp.layer_sizes[0]}, got {x.shape}"
        )
    tape = [a]
    last = mlp.n_layers - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        if a.shape[1] != w.shape[1]:
            raise ShapeError(
                f"layer {i} expects input size {w.shape[1]}, got {a.shape[1]}"
            )
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
        tape.append(a)
    y = a[0] if single else a
    return y, tape


def mlp_backward(mlp, tape, dy):
    """Reverse-mode gradients for the adjoint `dy` of the output.

    Returns (dx, (dws, dbs)). The tape must come from mlp_forward on the
    same parameters; activations are reused to invert tanh cheaply.
    """
    if len(tape) != mlp.n_layers + 1:
        raise ShapeError(
            f"tape has {len(tape)} records, expected {mlp.n_layers + 1}"
        )
    dy = np.asarray(dy, dtype=np.float64)
    single = dy.ndim == 1
    da = dy[None, :] if single else dy
    if da.shape != tape[-1].shape:
        raise ShapeError(
            f"adjoint shape {dy.shape} does not match output {tape[-1].shape}"
        )
    dws = [None] * mlp.n_layers
    dbs = [None] * mlp.n_layers
    for i in range(mlp.n_layers - 1, -1, -1):
        a_in = tape[i]
        if a_in.shape[1] != mlp.weights[i].shape[1]:
            raise ShapeError(f"stale tape at layer {i}")
        if i < mlp.n_layers - 1:
            # tape[i+1] is the tanh output, so 1 - a^2 is its derivative
            da = da * (1.0 - tape[i + 1] ** 2)
        dws[i] = da.T @ a_in
        dbs[i] = da.sum(axis=0)
        da = da @ mlp.weights[i]
    dx = da[0] if single else da
    return dx, (dws, dbs)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_new(n_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_step(state, params, grads):
    """One Adam update on flat parameter/gradient vectors.

    Mutates and returns (params, state). Standard bias-corrected update:
      m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
      p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"adam_step shapes disagree: params {params.shape}, grads "
            f"{grads.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient")
    from . import kernels

    state.t += 1
    kernels.adam_update(
        params, grads, state.m, state.v, state.t,
        state.lr, state.beta1, state.beta2, state.eps,
    )
    return params, state
