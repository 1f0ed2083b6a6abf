import numpy as np
import pytest

from flowrom.errors import ConfigError, ShapeError
from flowrom.models import (count_params, nodal_new, nodal_step, pack_trainable,
                            pcfml_new, pcfml_step, set_trainable,
                            trainable_arrays)
from flowrom.reduction import ReducedBasis
from flowrom.rng import make_rng


def _basis(n_full, n_red, seed=12):
    q, _ = np.linalg.qr(make_rng(seed).normal(0.0, 1.0, (n_full, n_red)))
    return ReducedBasis(n_red, q)


def test_mode_validation():
    with pytest.raises(ConfigError):
        pcfml_new(10, 2, 3, 5, "frozen", make_rng(1))
    with pytest.raises(ConfigError):
        pcfml_new(10, 0, 3, 5, "unconstrained", make_rng(1))
    with pytest.raises(ConfigError):
        pcfml_new(10, 10, 3, 5, "unconstrained", make_rng(1))
    with pytest.raises(ConfigError):
        pcfml_new(10, 2, 3, 5, "fixed", make_rng(1))  # basis required
    with pytest.raises(ConfigError):
        pcfml_new(10, 2, 3, 5, "fixed", make_rng(1), basis=_basis(9, 2))


def test_fixed_mode_trains_only_the_network():
    m = pcfml_new(10, 2, 3, 5, "fixed", make_rng(1), basis=_basis(10, 2))
    arrays = trainable_arrays(m)
    assert all(a is not m.p_in for a in arrays)
    assert count_params(m) == sum(a.size for a in arrays)
    # projections equal the provided basis
    b = _basis(10, 2)
    assert np.array_equal(m.p_in, b.v_red.T)
    assert np.array_equal(m.p_out, b.v_red)


def test_constrained_mode_shares_storage():
    m = pcfml_new(10, 2, 3, 5, "constrained", make_rng(1))
    assert np.shares_memory(m.p_out, m.p_in)
    m.p_in[1, 3] = 0.5
    assert m.p_out[3, 1] == 0.5
    arrays = trainable_arrays(m)
    # one projection matrix plus 4 weight and 4 bias blocks
    assert len(arrays) == 9


def test_unconstrained_mode_has_two_free_maps():
    m = pcfml_new(10, 2, 3, 5, "unconstrained", make_rng(1))
    assert not np.shares_memory(m.p_out, m.p_in)
    assert len(trainable_arrays(m)) == 10


def test_param_counts_differ_only_by_projections():
    kw = dict(n_full=10, n_red=2, n_mem=3, hidden=5)
    fixed = pcfml_new(mode="fixed", rng=make_rng(1), basis=_basis(10, 2), **kw)
    con = pcfml_new(mode="constrained", rng=make_rng(1), **kw)
    unc = pcfml_new(mode="unconstrained", rng=make_rng(1), **kw)
    assert count_params(con) == count_params(fixed) + 20
    assert count_params(unc) == count_params(fixed) + 40


def test_pack_set_roundtrip():
    for maker in (
        lambda: pcfml_new(8, 2, 3, 4, "constrained", make_rng(2)),
        lambda: pcfml_new(8, 2, 3, 4, "unconstrained", make_rng(2)),
        lambda: nodal_new(6, 2, 4, make_rng(2)),
    ):
        m = maker()
        theta = pack_trainable(m)
        assert theta.size == count_params(m)
        set_trainable(m, theta * 2.0)
        assert np.allclose(pack_trainable(m), theta * 2.0, atol=0)


def test_set_trainable_updates_tied_transpose():
    m = pcfml_new(8, 2, 3, 4, "constrained", make_rng(2))
    theta = pack_trainable(m)
    theta[:16] = np.arange(16, dtype=np.float64)
    set_trainable(m, theta)
    assert np.array_equal(np.asarray(m.p_out), m.p_in.T)


def test_projection_step_with_zero_network():
    basis = _basis(10, 2, seed=5)
    m = pcfml_new(10, 2, 4, 6, "fixed", make_rng(1), basis=basis,
                  project_skip=True)
    for w in m.mlp.weights:
        w[:] = 0.0
    window = make_rng(2).normal(0.0, 1.0, (4, 10))
    out = pcfml_step(m, window)
    proj = basis.v_red @ (basis.v_red.T @ window[0])
    assert np.allclose(out, proj, atol=1e-14)


def test_raw_skip_with_zero_network_is_identity():
    m = pcfml_new(10, 2, 4, 6, "unconstrained", make_rng(1),
                  project_skip=False)
    for w in m.mlp.weights:
        w[:] = 0.0
    window = make_rng(2).normal(0.0, 1.0, (4, 10))
    out = pcfml_step(m, window)
    assert np.allclose(out, window[0], atol=0)


def test_step_batch_matches_single():
    m = pcfml_new(9, 3, 2, 5, "unconstrained", make_rng(3))
    wb = make_rng(4).normal(0.0, 1.0, (6, 2, 9))
    ob = pcfml_step(m, wb)
    assert ob.shape == (6, 9)
    for i in range(6):
        assert np.allclose(pcfml_step(m, wb[i]), ob[i], atol=0)


def test_nodal_step_matches_explicit_loops():
    m = nodal_new(4, 2, 3, make_rng(6))
    window = make_rng(7).normal(0.0, 1.0, (2, 4))
    out = nodal_step(m, window)
    x = np.concatenate([window[0], window[1]])
    feats = np.empty((4, 5))
    for c, ch in enumerate(m.channels):
        h = np.tanh(ch.weights[0] @ x + ch.biases[0])
        feats[:, c] = ch.weights[1] @ h + ch.biases[1]
    asm = m.assembly
    combined = np.empty(4)
    for i in range(4):
        g = np.tanh(asm.weights[0] @ feats[i] + asm.biases[0])
        combined[i] = (asm.weights[1] @ g + asm.biases[1])[0]
    assert np.allclose(out, window[0] + combined, atol=1e-14)


def test_nodal_batch_matches_single():
    m = nodal_new(5, 3, 4, make_rng(8))
    wb = make_rng(9).normal(0.0, 1.0, (3, 3, 5))
    ob = nodal_step(m, wb)
    assert ob.shape == (3, 5)
    for i in range(3):
        assert np.allclose(nodal_step(m, wb[i]), ob[i], atol=1e-14)


def test_window_shape_checks():
    m = pcfml_new(8, 2, 3, 4, "constrained", make_rng(2))
    with pytest.raises(ShapeError):
        pcfml_step(m, np.zeros((2, 8)))  # wrong memory depth
    with pytest.raises(ShapeError):
        pcfml_step(m, np.zeros((3, 7)))  # wrong state size
    n = nodal_new(6, 2, 4, make_rng(2))
    with pytest.raises(ShapeError):
        nodal_step(n, np.zeros((2, 5)))


def test_nodal_architecture_validation():
    with pytest.raises(ConfigError):
        nodal_new(0, 2, 4, make_rng(1))
    with pytest.raises(ConfigError):
        nodal_new(6, 0, 4, make_rng(1))
