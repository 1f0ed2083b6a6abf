"""Recurrent-loss training, ensembles, rollout and error metrics.

Training composes the model n_rec times per chunk, feeding each prediction
back into the window, and measures the mean squared residual in grid space
(mean over chunks AND recurrence steps). Gradients run through the whole
recurrence; the heavy lifting lives in flowrom.kernels.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, ShapeError
from .models import (NodalModel, PcfmlModel, nodal_new, nodal_step,
                     pack_trainable, pcfml_new, pcfml_step, set_trainable)
from .nn import adam_new, adam_step
from .rng import make_rng


@dataclass
class TrainConfig:
    epochs: int = 10000
    lr: float = 1e-3
    lam: float = 1e-2  # orthogonality penalty weight (constrained mode)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")


@dataclass
class ModelSpec:
    """Architecture description; build_model turns it into a fresh model."""
    family: str  # "pcfml" or "nodal"
    n_full: int
    n_mem: int
    hidden: int
    mode: str = "fixed"          # pcfml only
    n_red: int = 0               # pcfml only
    basis: object = None         # ReducedBasis, required for fixed mode
    project_skip: bool = True


def build_model(spec, rng):
    if spec.family == "pcfml":
        return pcfml_new(spec.n_full, spec.n_red, spec.n_mem, spec.hidden,
                         spec.mode, rng, basis=spec.basis,
                         project_skip=spec.project_skip)
    if spec.family == "nodal":
        return nodal_new(spec.n_full, spec.n_mem, spec.hidden, rng)
    raise ConfigError(f"unknown model family {spec.family!r}")


def model_step(model, window):
    if isinstance(model, PcfmlModel):
        return pcfml_step(model, window)
    return nodal_step(model, window)


def _chunks_to_time_major(chunks, n_mem):
    """(B, n_full, T) -> contiguous (T, B, n_full), validated."""
    chunks = np.asarray(chunks, dtype=np.float64)
    if chunks.ndim == 2:
        chunks = chunks[None]
    if chunks.ndim != 3:
        raise ShapeError(f"chunks must be 2-d or 3-d, got {chunks.shape}")
    if chunks.shape[2] < n_mem + 1:
        raise ShapeError(
            f"chunk length {chunks.shape[2]} too short for n_mem={n_mem}"
        )
    return np.ascontiguousarray(chunks.transpose(2, 0, 1))


def _loss_and_grad(model, dataT, lam):
    """Loss and flat gradient (trainable packing order) for one batch."""
    if isinstance(model, PcfmlModel):
        mlp = model.mlp
        p_out = np.ascontiguousarray(model.p_out)
        out = kernels.pcfml_epoch(
            dataT, model.p_in, p_out,
            mlp.weights[0], mlp.biases[0], mlp.weights[1], mlp.biases[1],
            mlp.weights[2], mlp.biases[2], mlp.weights[3], mlp.biases[3],
            model.n_mem, model.project_skip,
        )
        loss, dp_in, dp_out = out[0], out[1], out[2]
        mlp_grads = out[3:]
        if model.mode == "fixed":
            parts = []
        elif model.mode == "constrained":
            p = model.p_in
            gram_defect = p @ p.T - np.eye(model.n_red)
            loss += 0.5 * lam * np.sum(gram_defect * gram_defect)
            parts = [dp_in + dp_out.T + 2.0 * lam * (gram_defect @ p)]
        else:
            parts = [dp_in, dp_out]
        parts.extend(mlp_grads)
    else:
        cw1 = np.stack([ch.weights[0] for ch in model.channels])
        cb1 = np.stack([ch.biases[0] for ch in model.channels])
        cw2 = np.stack([ch.weights[1] for ch in model.channels])
        cb2 = np.stack([ch.biases[1] for ch in model.channels])
        asm = model.assembly
        out = kernels.nodal_epoch(
            dataT, cw1, cb1, cw2, cb2,
            asm.weights[0], asm.biases[0], asm.weights[1], asm.biases[1],
            model.n_mem,
        )
        loss = out[0]
        dcw1, dcb1, dcw2, dcb2 = out[1], out[2], out[3], out[4]
        parts = []
        for c in range(len(model.channels)):
            parts.extend([dcw1[c], dcb1[c], dcw2[c], dcb2[c]])
        parts.extend(out[5:])
    grad = np.concatenate([np.asarray(p).ravel() for p in parts]) if parts \
        else np.empty(0)
    return float(loss), grad


def recurrent_loss(model, chunk, lam=1e-2):
    """Mean recurrent loss and its flat gradient for one chunk (or batch).

    chunk: (n_full, n_mem + n_rec) or (B, n_full, n_mem + n_rec). The first
    n_mem columns seed the window; the remaining n_rec are targets. In
    constrained mode the orthogonality penalty (weight lam) is included in
    both loss and gradient.
    """
    dataT = _chunks_to_time_major(chunk, model.n_mem)
    if dataT.shape[2] != model.n_full:
        raise ShapeError(
            f"chunk has {dataT.shape[2]} components, model expects "
            f"{model.n_full}"
        )
    loss, grad = _loss_and_grad(model, dataT, lam)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite recurrent loss")
    return loss, grad


def train(model, dataset, cfg):
    """Full-batch Adam on the mean recurrent loss over all chunks.

    Mutates and returns (model, loss_history). Deterministic given the
    initial model and dataset; divergence aborts with the epoch index.
    """
    dataT = _chunks_to_time_major(dataset.chunks, model.n_mem)
    if dataT.shape[2] != model.n_full:
        raise ShapeError(
            f"dataset n_full={dataT.shape[2]} vs model {model.n_full}"
        )
    if dataT.shape[0] != model.n_mem + dataset.n_rec:
        raise ShapeError(
            f"chunk length {dataT.shape[0]} != n_mem {model.n_mem} + "
            f"n_rec {dataset.n_rec}"
        )
    history = np.empty(cfg.epochs)
    if cfg.epochs == 0:
        return model, history
    theta = pack_trainable(model)
    state = adam_new(theta.size, lr=cfg.lr)
    for epoch in range(cfg.epochs):
        loss, grad = _loss_and_grad(model, dataT, cfg.lam)
        if not np.isfinite(loss):
            raise DivergenceError("non-finite loss", epoch=epoch)
        history[epoch] = loss
        try:
            adam_step(state, theta, grad)
        except DivergenceError as exc:
            raise DivergenceError(str(exc.args[0]), epoch=epoch) from None
        set_trainable(model, theta)
    return model, history


@dataclass
class Ensemble:
    members: list
    loss_history: np.ndarray = field(repr=False)  # (n_members, epochs)
    member_seeds: list = field(default_factory=list)


def train_ensemble(spec, dataset, cfg, n_members=10):
    """Train n_members models from seeds cfg.seed+0 .. cfg.seed+n-1."""
    if n_members < 1:
        raise ConfigError(f"n_members must be >= 1, got {n_members}")
    members = []
    histories = np.empty((n_members, cfg.epochs))
    seeds = []
    for i in range(n_members):
        seed = cfg.seed + i
        seeds.append(seed)
        model = build_model(spec, make_rng(seed))
        try:
            model, hist = train(model, dataset, cfg)
        except DivergenceError as exc:
            raise DivergenceError(str(exc.args[0]), epoch=exc.epoch,
                                  member=i) from None
        members.append(model)
        histories[i] = hist
    return Ensemble(members, histories, seeds)


@dataclass
class RolloutResult:
    states: np.ndarray          # (steps, n_full), NaN rows after a blow-up
    blowup_step: object = None  # 0-based step index of first non-finite state


@dataclass
class ErrorCurve:
    values: np.ndarray  # e(k), k = 1..horizon

    @property
    def horizon(self):
        return len(self.values)


def rollout_batch(ensemble, init_windows, steps):
    """Roll `steps` predictions for a batch of windows.

    All members see the same (per-trajectory) window; their outputs are
    averaged, emitted, and pushed into the window. Returns
    (states [L, steps, n_full], blowup [L] first-bad-step indices, -1 if
    none). Trajectories that go non-finite keep NaN states afterwards.
    """
    w = np.asarray(init_windows, dtype=np.float64)
    if w.ndim != 3:
        raise ShapeError(f"init windows must be (L, n_mem, n_full), got {w.shape}")
    first = ensemble.members[0]
    n_mem, n_full = first.n_mem, first.n_full
    if w.shape[1] != n_mem or w.shape[2] != n_full:
        raise ShapeError(
            f"windows {w.shape} do not match model (n_mem={n_mem}, "
            f"n_full={n_full})"
        )
    L = w.shape[0]
    w = w.copy()
    states = np.empty((L, steps, n_full))
    blowup = np.full(L, -1, dtype=np.int64)
    with np.errstate(all="ignore"):
        for k in range(steps):
            acc = np.zeros((L, n_full))
            for m in ensemble.members:
                acc += model_step(m, w)
            pred = acc / len(ensemble.members)
            bad = ~np.all(np.isfinite(pred), axis=1)
            newly = bad & (blowup < 0)
            blowup[newly] = k
            pred[bad] = np.nan
            states[:, k] = pred
            w[:, 1:] = w[:, :-1]
            w[:, 0] = pred
    return states, blowup


def rollout(ensemble, init_window, steps):
    """Single-window rollout; truncates at the first non-finite state."""
    states, blowup = rollout_batch(ensemble, np.asarray(init_window)[None],
                                   steps)
    if blowup[0] >= 0:
        k = int(blowup[0])
        return RolloutResult(states[0, :k], k)
    return RolloutResult(states[0], None)


def avg_l2_error(preds, truths):
    """e(k) = mean over trajectories of the l2 norm of the state error."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ShapeError(f"preds {preds.shape} vs truths {truths.shape}")
    if preds.ndim == 2:
        preds = preds[None]
        truths = truths[None]
    diff = preds - truths
    # einsum contracts in place; diff*diff would double the footprint
    norms = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return ErrorCurve(norms.mean(axis=0))
