import numpy as np
import pytest

from flowrom.datagen import Grid, TrainingDataset
from flowrom.errors import ConfigError, DivergenceError, ShapeError
from flowrom.models import pack_trainable, pcfml_new, set_trainable
from flowrom.reduction import ReducedBasis
from flowrom.rng import make_rng
from flowrom.training import (Ensemble, ModelSpec, TrainConfig, avg_l2_error,
                              build_model, model_step, recurrent_loss,
                              rollout, rollout_batch, train, train_ensemble)

from conftest import numerical_gradient, rel_err


def _linear_system_chunks(n_traj=6, n_full=6, length=6, seed=0):
    """Trajectories of a linear map with a 2-d invariant subspace."""
    r = make_rng(seed)
    sub = np.linalg.qr(r.normal(0.0, 1.0, (n_full, 2)))[0]
    ang = 0.3
    rot = 0.98 * np.array([[np.cos(ang), -np.sin(ang)],
                           [np.sin(ang), np.cos(ang)]])
    chunks = np.empty((n_traj, n_full, length))
    for l in range(n_traj):
        z = r.normal(0.0, 1.0, 2)
        for k in range(length):
            chunks[l, :, k] = sub @ z
            z = rot @ z
    return chunks, sub


def _dataset(chunks, n_mem, n_rec):
    grid = Grid(1, np.linspace(0.0, 1.0, chunks.shape[1]))
    return TrainingDataset(chunks, n_mem, n_rec, 0.0, grid, dt=0.01,
                           example_id="heat1d")


def _spec(mode, n_full=6, basis=None, project_skip=True):
    return ModelSpec("pcfml", n_full, 3, 4, mode=mode, n_red=2, basis=basis,
                     project_skip=project_skip)


def test_recurrent_loss_gradient_all_modes():
    chunks, sub = _linear_system_chunks()
    basis = ReducedBasis(2, sub)
    for mode in ("fixed", "constrained", "unconstrained"):
        for skip in (True, False):
            spec = _spec(mode, basis=basis if mode == "fixed" else None,
                         project_skip=skip)
            model = build_model(spec, make_rng(5))
            loss, grad = recurrent_loss(model, chunks, lam=1e-2)
            theta0 = pack_trainable(model)

            def f(theta):
                set_trainable(model, theta)
                val, _ = recurrent_loss(model, chunks, lam=1e-2)
                set_trainable(model, theta0)
                return val

            num = numerical_gradient(f, theta0)
            assert rel_err(grad, num) < 1e-6, (mode, skip)


def test_recurrent_loss_gradient_nodal():
    chunks, _ = _linear_system_chunks(n_traj=3, n_full=4, length=5, seed=3)
    model = build_model(ModelSpec("nodal", 4, 2, 3), make_rng(7))
    loss, grad = recurrent_loss(model, chunks)
    theta0 = pack_trainable(model)

    def f(theta):
        set_trainable(model, theta)
        val, _ = recurrent_loss(model, chunks)
        set_trainable(model, theta0)
        return val

    assert rel_err(grad, numerical_gradient(f, theta0)) < 1e-6


def test_constrained_penalty_included():
    chunks, _ = _linear_system_chunks()
    model = build_model(_spec("constrained"), make_rng(5))
    l0, _ = recurrent_loss(model, chunks, lam=0.0)
    l1, _ = recurrent_loss(model, chunks, lam=10.0)
    p = model.p_in
    defect = p @ p.T - np.eye(2)
    assert np.isclose(l1 - l0, 0.5 * 10.0 * np.sum(defect * defect),
                      atol=1e-10)


def test_penalty_gradient_vanishes_for_orthonormal_map():
    chunks, sub = _linear_system_chunks()
    model = build_model(_spec("constrained"), make_rng(5))
    model.p_in[:] = sub.T  # orthonormal rows: penalty at its minimum
    _, g0 = recurrent_loss(model, chunks, lam=0.0)
    _, g1 = recurrent_loss(model, chunks, lam=50.0)
    assert np.allclose(g0, g1, atol=1e-9)


def test_train_decreases_loss_and_is_deterministic():
    chunks, sub = _linear_system_chunks()
    ds = _dataset(chunks, 3, 3)
    spec = _spec("fixed", basis=ReducedBasis(2, sub))
    cfg = TrainConfig(epochs=400, lr=1e-2, seed=11)
    m1, h1 = train(build_model(spec, make_rng(11)), ds, cfg)
    m2, h2 = train(build_model(spec, make_rng(11)), ds, cfg)
    assert np.array_equal(h1, h2)
    assert np.array_equal(pack_trainable(m1), pack_trainable(m2))
    assert h1[-1] < 1e-3 * h1[0]


def test_train_zero_epochs_is_noop():
    chunks, sub = _linear_system_chunks()
    ds = _dataset(chunks, 3, 3)
    model = build_model(_spec("fixed", basis=ReducedBasis(2, sub)),
                        make_rng(1))
    theta0 = pack_trainable(model)
    _, hist = train(model, ds, TrainConfig(epochs=0))
    assert hist.shape == (0,)
    assert np.array_equal(pack_trainable(model), theta0)


def test_train_divergence_reports_epoch():
    chunks, _ = _linear_system_chunks()
    # squared errors on this scale overflow immediately
    ds = _dataset(1e200 * chunks, 3, 3)
    model = build_model(_spec("unconstrained"), make_rng(1))
    with pytest.raises(DivergenceError) as info:
        train(model, ds, TrainConfig(epochs=10))
    assert info.value.epoch is not None


def test_dataset_rejects_wrong_chunk_length():
    chunks, _ = _linear_system_chunks(length=6)
    with pytest.raises(ShapeError):
        _dataset(chunks, 3, 2)  # 3 + 2 != 6


def test_ensemble_seeds_and_member_errors():
    chunks, sub = _linear_system_chunks()
    ds = _dataset(chunks, 3, 3)
    spec = _spec("fixed", basis=ReducedBasis(2, sub))
    ens = train_ensemble(spec, ds, TrainConfig(epochs=5, seed=100),
                         n_members=3)
    assert ens.member_seeds == [100, 101, 102]
    assert ens.loss_history.shape == (3, 5)
    unique = {pack_trainable(m).tobytes() for m in ens.members}
    assert len(unique) == 3
    with pytest.raises(ConfigError):
        train_ensemble(spec, ds, TrainConfig(epochs=1), n_members=0)


def test_divergence_error_carries_member():
    chunks, _ = _linear_system_chunks()
    ds = _dataset(1e200 * chunks, 3, 3)
    with pytest.raises(DivergenceError) as info:
        train_ensemble(_spec("unconstrained"), ds,
                       TrainConfig(epochs=10), n_members=2)
    assert info.value.member is not None


def _projection_model(sub, n_mem=3):
    basis = ReducedBasis(2, sub)
    m = pcfml_new(sub.shape[0], 2, n_mem, 4, "fixed", make_rng(1),
                  basis=basis, project_skip=True)
    for w in m.mlp.weights:
        w[:] = 0.0
    for b in m.mlp.biases:
        b[:] = 0.0
    return m


def test_rollout_of_pure_projection_is_constant():
    _, sub = _linear_system_chunks()
    m = _projection_model(sub)
    v = sub @ np.array([1.0, -2.0])  # already inside the subspace
    window = np.tile(v, (3, 1))
    ens = Ensemble([m], np.zeros((1, 0)), [0])
    res = rollout(ens, window, steps=7)
    assert res.states.shape == (7, 6)
    assert res.blowup_step is None
    assert np.allclose(res.states, v, atol=1e-13)


def test_rollout_batch_detects_blowup():
    _, sub = _linear_system_chunks()
    m = pcfml_new(6, 2, 3, 4, "unconstrained", make_rng(1))
    m.p_out[:] = 1e8  # guarantees rapid overflow
    m.p_in[:] = 1e8
    windows = make_rng(2).normal(0.0, 1.0, (4, 3, 6))
    ens = Ensemble([m], np.zeros((1, 0)), [0])
    states, blowup = rollout_batch(ens, windows, steps=50)
    assert states.shape == (4, 50, 6)
    assert np.all(blowup >= 0)
    for l in range(4):
        k = blowup[l]
        assert np.all(np.isnan(states[l, k:]))


def test_rollout_truncates_at_blowup():
    m = pcfml_new(6, 2, 3, 4, "unconstrained", make_rng(1))
    m.p_out[:] = 1e8
    m.p_in[:] = 1e8
    ens = Ensemble([m], np.zeros((1, 0)), [0])
    res = rollout(ens, make_rng(2).normal(0.0, 1.0, (3, 6)), steps=50)
    assert res.blowup_step is not None
    assert res.states.shape[0] <= 50


def test_ensemble_rollout_averages_members():
    _, sub = _linear_system_chunks()
    m1 = _projection_model(sub)
    m2 = _projection_model(sub)
    m2.mlp.biases[-1][:] = np.array([0.1, 0.0])  # constant reduced offset
    window = np.tile(sub @ np.array([1.0, 0.0]), (3, 1))
    one = rollout(Ensemble([m2], np.zeros((1, 0)), [0]), window, 1)
    avg = rollout(Ensemble([m1, m2], np.zeros((2, 0)), [0, 1]), window, 1)
    base = rollout(Ensemble([m1], np.zeros((1, 0)), [0]), window, 1)
    want = 0.5 * (one.states[0] + base.states[0])
    assert np.allclose(avg.states[0], want, atol=1e-14)


def test_avg_l2_error_hand_case():
    preds = np.zeros((2, 3, 4))
    truths = np.zeros((2, 3, 4))
    preds[0, :, 0] = 1.0  # trajectory 0 off by a unit vector at every step
    curve = avg_l2_error(preds, truths)
    assert curve.values.shape == (3,)
    assert np.allclose(curve.values, 0.5)
    assert curve.horizon == 3


def test_avg_l2_error_propagates_nan():
    preds = np.zeros((1, 3, 2))
    preds[0, 2] = np.nan
    curve = avg_l2_error(preds, np.zeros((1, 3, 2)))
    assert np.isfinite(curve.values[:2]).all()
    assert np.isnan(curve.values[2])


def test_model_step_dispatch():
    chunks, sub = _linear_system_chunks()
    m = _projection_model(sub)
    w = make_rng(3).normal(0.0, 1.0, (3, 6))
    assert model_step(m, w).shape == (6,)
    nod = build_model(ModelSpec("nodal", 6, 3, 4), make_rng(4))
    assert model_step(nod, w).shape == (6,)
