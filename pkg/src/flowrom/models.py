"""Flow-map models: the reduced-basis model and the nodal baseline.

Both advance the newest observed state by one time step from a window of
the n_mem most recent states (window row 0 = newest). The reduced model
projects the window onto an n_red-dimensional basis, runs a 3-hidden-layer
tanh MLP there, expands the residual back to grid space and adds a skip
term; the nodal baseline works directly on grid values through five
disassembly channels merged by a small pointwise assembly net.

Flattening convention: the MLP input concatenates the projected states
most-recent-first, block i being the state i steps in the past. The nodal
channels flatten the raw window the same way.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Mlp, glorot_uniform, mlp_forward, mlp_init, mlp_param_count

MODES = ("fixed", "constrained", "unconstrained")
N_CHANNELS = 5  # disassembly channels in the nodal baseline


class PcfmlModel:
    """One-step model acting in a learned (or fixed) reduced basis.

    mode:
      fixed         p_in/p_out copied from an SVD basis, not trainable
      constrained   one trainable matrix, p_out IS p_in.T (shared storage)
      unconstrained two independent trainable matrices
    project_skip: if True the skip term is p_out @ p_in @ v_n (confines the
    prediction near the basis span); if False the raw v_n is used.
    """

    def __init__(self, mode, p_in, p_out, mlp, n_mem, project_skip=True):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.p_in = p_in
        self._p_out = None if mode == "constrained" else p_out
        self.mlp = mlp
        self.n_mem = int(n_mem)
        self.project_skip = bool(project_skip)
        n_red, n_full = p_in.shape
        self.n_red = n_red
        self.n_full = n_full
        if self.p_out.shape != (n_full, n_red):
            raise ShapeError(
                f"p_out shape {self.p_out.shape} vs p_in {p_in.shape}"
            )
        if mlp.layer_sizes[0] != self.n_mem * n_red or mlp.layer_sizes[-1] != n_red:
            raise ShapeError(
                f"mlp sizes {mlp.layer_sizes} inconsistent with "
                f"n_mem={n_mem}, n_red={n_red}"
            )
        if len(mlp.layer_sizes) != 5:
            raise ConfigError("flow map network must have exactly 3 hidden layers")

    @property
    def p_out(self):
        # constrained mode shares storage with p_in; .T is a view
        if self.mode == "constrained":
            return self.p_in.T
        return self._p_out


def pcfml_new(n_full, n_red, n_mem, hidden, mode, rng, basis=None,
              project_skip=True):
    """Fresh model. Draw order: p_in, then p_out (unconstrained), then MLP."""
    if n_red < 1 or n_red >= n_full:
        raise ConfigError(f"need 1 <= n_red < n_full, got {n_red} vs {n_full}")
    if n_mem < 1:
        raise ConfigError(f"n_mem must be >= 1, got {n_mem}")
    if mode == "fixed":
        if basis is None:
            raise ConfigError("fixed mode requires a reduced basis")
        v = basis.v_red
        if v.shape != (n_full, n_red):
            raise ConfigError(
                f"basis shape {v.shape} does not match n_full={n_full}, "
                f"n_red={n_red}"
            )
        p_in = np.ascontiguousarray(v.T)
        p_out = v.copy()
    elif mode == "constrained":
        p_in = glorot_uniform(n_red, n_full, rng)
        p_out = None
    elif mode == "unconstrained":
        p_in = glorot_uniform(n_red, n_full, rng)
        p_out = glorot_uniform(n_full, n_red, rng)
    else:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    mlp = mlp_init([n_mem * n_red, hidden, hidden, hidden, n_red], rng)
    return PcfmlModel(mode, p_in, p_out, mlp, n_mem, project_skip)


class NodalModel:
    """Memory flow-map baseline acting directly on grid values."""

    def __init__(self, channels, assembly, n_mem):
        if len(channels) != N_CHANNELS:
            raise ConfigError(f"exactly {N_CHANNELS} channels required")
        self.channels = list(channels)
        self.assembly = assembly
        self.n_mem = int(n_mem)
        self.n_full = channels[0].layer_sizes[-1]
        for i, ch in enumerate(self.channels):
            if len(ch.layer_sizes) != 3:
                raise ConfigError(f"channel {i} must have exactly 1 hidden layer")
            if ch.layer_sizes[0] != self.n_mem * self.n_full:
                raise ShapeError(f"channel {i} input size mismatch")
            if ch.layer_sizes[-1] != self.n_full:
                raise ShapeError(f"channel {i} output size mismatch")
        if assembly.layer_sizes != [N_CHANNELS, N_CHANNELS, 1]:
            raise ConfigError(
                f"assembly must be {N_CHANNELS}->{N_CHANNELS}->1, "
                f"got {assembly.layer_sizes}"
            )


def nodal_new(n_full, n_mem, hidden, rng):
    """Fresh baseline; draws the 5 channels in order, then the assembly."""
    if n_mem < 1 or n_full < 1 or hidden < 1:
        raise ConfigError(
            f"bad sizes n_full={n_full}, n_mem={n_mem}, hidden={hidden}"
        )
    channels = [
        mlp_init([n_mem * n_full, hidden, n_full], rng)
        for _ in range(N_CHANNELS)
    ]
    assembly = mlp_init([N_CHANNELS, N_CHANNELS, 1], rng)
    return NodalModel(channels, assembly, n_mem)


def _check_window(w, n_mem, n_full):
    w = np.asarray(w, dtype=np.float64)
    single = w.ndim == 2
    if single:
        w = w[None]
    if w.ndim != 3 or w.shape[1] != n_mem or w.shape[2] != n_full:
        raise ShapeError(
            f"window must be (n_mem={n_mem}, n_full={n_full}) or batched, "
            f"got {np.asarray(w).shape}"
        )
    return w, single


def pcfml_step(model, window):
    """One prediction from a window (or a batch of windows).

    out = skip + p_out @ M(p_in v_n, ..., p_in v_{n-n_mem+1}) where skip is
    p_out p_in v_n (project_skip) or v_n itself.
    """
    w, single = _check_window(window, model.n_mem, model.n_full)
    b = w.shape[0]
    z = w @ model.p_in.T                     # (b, n_mem, n_red)
    r, _ = mlp_forward(model.mlp, z.reshape(b, -1))
    if model.project_skip:
        out = (z[:, 0] + r) @ model.p_out.T
    else:
        out = w[:, 0] + r @ model.p_out.T
    return out[0] if single else out


def nodal_step(model, window):
    """One nodal-baseline prediction: v_n plus the assembled channel output."""
    w, single = _check_window(window, model.n_mem, model.n_full)
    b = w.shape[0]
    n_full = model.n_full
    x = w.reshape(b, -1)
    feats = np.empty((b * n_full, N_CHANNELS))
    for c, ch in enumerate(model.channels):
        f, _ = mlp_forward(ch, x)
        feats[:, c] = f.reshape(-1)
    merged, _ = mlp_forward(model.assembly, feats)
    out = w[:, 0] + merged.reshape(b, n_full)
    return out[0] if single else out


def _mlp_blocks(mlp):
    out = []
    for wt, bi in zip(mlp.weights, mlp.biases):
        out.append(wt)
        out.append(bi)
    return out


def trainable_arrays(model):
    """The model's trainable arrays, in the canonical flat-packing order."""
    if isinstance(model, PcfmlModel):
        blocks = []
        if model.mode == "constrained":
            blocks.append(model.p_in)
        elif model.mode == "unconstrained":
            blocks.append(model.p_in)
            blocks.append(model._p_out)
        blocks.extend(_mlp_blocks(model.mlp))
        return blocks
    if isinstance(model, NodalModel):
        blocks = []
        for ch in model.channels:
            blocks.extend(_mlp_blocks(ch))
        blocks.extend(_mlp_blocks(model.assembly))
        return blocks
    raise ConfigError(f"unknown model type {type(model).__name__}")


def count_params(model):
    """Number of trainable scalars (fixed basis matrices excluded)."""
    return sum(a.size for a in trainable_arrays(model))


def pack_trainable(model):
    arrays = trainable_arrays(model)
    if not arrays:
        return np.empty(0)
    return np.concatenate([a.ravel() for a in arrays])


def set_trainable(model, theta):
    """Write a flat vector back into the model's arrays (in place)."""
    arrays = trainable_arrays(model)
    total = sum(a.size for a in arrays)
    if theta.shape != (total,):
        raise ShapeError(f"expected {total} parameters, got {theta.shape}")
    o = 0
    for a in arrays:
        a.ravel()[:] = theta[o:o + a.size]
        o += a.size
