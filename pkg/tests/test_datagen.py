import numpy as np
import pytest

from flowrom.datagen import (Grid, TrainingDataset, Wave2dSolverConfig,
                             add_noise, gen_heat1d, gen_wave1d, gen_wave2d,
                             halton_points, heat1d_grid, heat1d_solution,
                             sample_chunks, wave1d_coeffs, wave1d_grid,
                             wave1d_v, wave1d_v0, wave1d_w, wave1d_w0,
                             wave2d_obs_grid, wave2d_solve, wave2d_u0,
                             wave2d_ut0)
from flowrom.errors import ConfigError, ShapeError
from flowrom.rng import make_rng


# ------------------------------------------------------------- diffusion


def test_heat_solution_initial_condition():
    x = np.linspace(0.0, 1.0, 17)
    u0 = heat1d_solution(0.7, -0.3, x, 0.0)[:, 0]
    want = 0.7 * np.sin(np.pi * x) - 0.3 * np.sin(2 * np.pi * x)
    assert np.allclose(u0, want, atol=1e-15)


def test_heat_solution_modal_decay_rates():
    x = np.array([0.31])
    # pure first mode decays like exp(-t), second like exp(-4t)
    u1a = heat1d_solution(1.0, 0.0, x, 0.5)
    u1b = heat1d_solution(1.0, 0.0, x, 1.5)
    assert np.isclose(u1b[0] / u1a[0], np.exp(-1.0), atol=1e-12)
    u2a = heat1d_solution(0.0, 1.0, x, 0.5)
    u2b = heat1d_solution(0.0, 1.0, x, 1.0)
    assert np.isclose(u2b[0] / u2a[0], np.exp(-2.0), atol=1e-12)


def test_heat_pde_residual_small():
    # finite-difference residual of pi^2 u_t = u_xx on a fine grid
    x = np.linspace(0.05, 0.95, 400)
    hx = x[1] - x[0]
    ht = 1e-5
    t = 0.37
    u = heat1d_solution(0.8, 0.4, x, t)
    ut = (heat1d_solution(0.8, 0.4, x, t + ht)
          - heat1d_solution(0.8, 0.4, x, t - ht)) / (2 * ht)
    uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / hx**2
    resid = np.pi**2 * ut[1:-1] - uxx
    assert np.max(np.abs(resid)) < 1e-4


def test_heat_grid_sorted_and_bounded():
    g = heat1d_grid(739)
    assert g.dim == 1
    assert g.n_grid == 100
    assert np.all(np.diff(g.points) > 0)
    assert g.points[0] >= 0.2399
    assert g.points[-1] <= 0.7577
    g2 = heat1d_grid(739)
    assert np.array_equal(g.points, g2.points)


def test_gen_heat_columns_live_in_two_mode_span():
    grid = heat1d_grid(1)
    trajs = gen_heat1d(6, make_rng(2), grid=grid, n_steps=30)
    assert trajs.data.shape == (6, 100, 31)
    assert trajs.clean
    basis = np.column_stack([np.sin(np.pi * grid.points),
                             np.sin(2 * np.pi * grid.points)])
    flat = trajs.data.transpose(0, 2, 1).reshape(-1, 100).T
    coef, *_ = np.linalg.lstsq(basis, flat, rcond=None)
    assert np.max(np.abs(basis @ coef - flat)) < 1e-12


def test_gen_heat_deterministic():
    a = gen_heat1d(3, make_rng(9), grid=heat1d_grid(4), n_steps=5)
    b = gen_heat1d(3, make_rng(9), grid=heat1d_grid(4), n_steps=5)
    assert np.array_equal(a.data, b.data)


# ----------------------------------------------------------- wave, 1-d


def test_wave1d_initial_conditions_consistent():
    c = wave1d_coeffs(make_rng(3))
    x = np.linspace(-1.0, 1.0, 101)
    assert np.allclose(wave1d_v(c, x, 0.0), wave1d_v0(c, x), atol=1e-12)
    assert np.allclose(wave1d_w(c, x, 0.0), wave1d_w0(c, x), atol=1e-12)


def test_wave1d_satisfies_first_order_system():
    c = wave1d_coeffs(make_rng(4))
    x = np.linspace(-1.0, 1.0, 1600, endpoint=False)
    hx = x[1] - x[0]
    ht = 1e-6
    t = 0.53
    vt = (wave1d_v(c, x, t + ht) - wave1d_v(c, x, t - ht)) / (2 * ht)
    wt = (wave1d_w(c, x, t + ht) - wave1d_w(c, x, t - ht)) / (2 * ht)
    # periodic central differences in x
    v = wave1d_v(c, x, t)
    w = wave1d_w(c, x, t)
    wx = (np.roll(w, -1) - np.roll(w, 1)) / (2 * hx)
    vx = (np.roll(v, -1) - np.roll(v, 1)) / (2 * hx)
    assert np.max(np.abs(vt - wx)) < 1e-4
    assert np.max(np.abs(wt - vx)) < 1e-4


def test_wave1d_time_periodicity():
    c = wave1d_coeffs(make_rng(5))
    x = np.linspace(-1.0, 1.0, 64, endpoint=False)
    assert np.allclose(wave1d_v(c, x, 0.31), wave1d_v(c, x, 2.31), atol=1e-12)
    assert np.allclose(wave1d_w(c, x, 0.31), wave1d_w(c, x, 2.31), atol=1e-12)


def test_wave1d_energy_constant():
    c = wave1d_coeffs(make_rng(6))
    x = np.linspace(-1.0, 1.0, 4096, endpoint=False)
    hx = x[1] - x[0]
    vals = []
    for t in (0.0, 0.4, 1.1, 1.9):
        e = np.sum(wave1d_v(c, x, t) ** 2 + wave1d_w(c, x, t) ** 2) * hx
        vals.append(e)
    assert np.max(np.abs(np.diff(vals))) < 1e-10 * vals[0]


def test_wave1d_grid_excludes_right_endpoint():
    g = wave1d_grid()
    assert g.n_grid == 50
    assert g.points[0] == -1.0
    assert np.isclose(g.points[-1], 1.0 - 2.0 / 50)
    assert np.allclose(np.diff(g.points), 2.0 / 50)


def test_gen_wave1d_shapes():
    trajs = gen_wave1d(4, make_rng(7), n_steps=12)
    assert trajs.data.shape == (4, 50, 13)
    assert trajs.example_id == "wave1d"


# ----------------------------------------------------------- wave, 2-d


def test_halton_first_points_exact():
    pts = halton_points(4)
    want = np.array([
        [1 / 2, 1 / 3],
        [1 / 4, 2 / 3],
        [3 / 4, 1 / 9],
        [1 / 8, 4 / 9],
    ])
    assert np.allclose(pts, want, atol=1e-15)


def test_obs_grid_interior_and_size():
    g = wave2d_obs_grid()
    assert g.dim == 2
    assert g.points.shape == (1537, 2)
    assert np.all(np.abs(g.points) < 1.0)
    assert np.array_equal(g.points, wave2d_obs_grid().points)


def test_solver_config_validation():
    cfg = Wave2dSolverConfig()
    assert cfg.validate(1e-2) == 2
    with pytest.raises(ConfigError):
        Wave2dSolverConfig(nx=33, ny=33).validate(1e-2)  # too coarse
    with pytest.raises(ConfigError):
        Wave2dSolverConfig(substep=3e-3).validate(1e-2)  # does not divide dt
    with pytest.raises(ConfigError):
        # CFL: substep must stay below dx/sqrt(2)
        Wave2dSolverConfig(substep=2e-2).validate(4e-2)


def test_wave2d_solve_shapes_and_bcs():
    cfg = Wave2dSolverConfig()
    xs = np.linspace(-1.0, 1.0, cfg.nx)
    X, Y = np.meshgrid(xs, np.linspace(-1.0, 1.0, cfg.ny), indexing="ij")
    snaps, energy = wave2d_solve(wave2d_u0(0.5, X, Y),
                                 wave2d_ut0(1.0, 0.3, X, Y), cfg, 10)
    assert snaps.shape == (11, cfg.nx, cfg.ny)
    assert energy.shape == (11,)
    assert np.max(np.abs(snaps[1:, 0, :])) == 0.0
    assert np.max(np.abs(snaps[1:, -1, :])) == 0.0
    assert np.all(np.isfinite(snaps))


def test_gen_wave2d_matches_direct_interpolation():
    cfg = Wave2dSolverConfig(nx=65, ny=65)
    obs = wave2d_obs_grid(40)
    trajs = gen_wave2d(2, cfg, make_rng(11), n_steps=6, obs_grid=obs)
    assert trajs.data.shape == (2, 40, 7)
    assert trajs.grid.dim == 2
    # snapshot 0 must equal the initial condition sampled at the points
    r = make_rng(11)
    a1 = r.uniform(-1.0, 1.0)
    u0 = wave2d_u0(a1, trajs.grid.points[:, 0], trajs.grid.points[:, 1])
    # bilinear interpolation on a 65x65 grid of a smooth field: loose match
    assert np.max(np.abs(trajs.data[0, :, 0] - u0)) < 2e-3


# ------------------------------------------------------ chunks and noise


def _tiny_trajs():
    return gen_heat1d(5, make_rng(21), grid=heat1d_grid(2), n_steps=19)


def test_sample_chunks_are_contiguous_slices():
    trajs = _tiny_trajs()
    ds = sample_chunks(trajs, n_mem=4, n_rec=3, rng=make_rng(1))
    assert ds.chunks.shape == (5, 100, 7)
    assert ds.sigma == 0.0
    for l in range(5):
        found = False
        for start in range(20 - 7 + 1):
            if np.array_equal(ds.chunks[l],
                              trajs.data[l, :, start:start + 7]):
                found = True
                break
        assert found, f"chunk {l} is not a window of its trajectory"


def test_sample_chunks_deterministic_and_too_short():
    trajs = _tiny_trajs()
    a = sample_chunks(trajs, 4, 3, make_rng(5))
    b = sample_chunks(trajs, 4, 3, make_rng(5))
    assert np.array_equal(a.chunks, b.chunks)
    with pytest.raises(ConfigError):
        sample_chunks(trajs, 15, 10, make_rng(5))


def test_add_noise_zero_sigma_identity():
    trajs = _tiny_trajs()
    noisy = add_noise(trajs, 0.0, make_rng(3))
    assert np.array_equal(noisy.data, trajs.data)
    assert noisy.clean


def test_add_noise_marks_dirty_and_accumulates():
    trajs = _tiny_trajs()
    noisy = add_noise(trajs, 0.1, make_rng(3))
    assert not noisy.clean
    assert not np.array_equal(noisy.data, trajs.data)
    ds = sample_chunks(trajs, 4, 3, make_rng(1))
    n1 = add_noise(ds, 0.1, make_rng(4))
    n2 = add_noise(n1, 0.1, make_rng(5))
    assert np.isclose(n2.sigma, np.hypot(0.1, 0.1))


def test_add_noise_raw_array():
    arr = np.zeros((3, 4))
    out = add_noise(arr, 0.5, make_rng(8))
    assert out.shape == (3, 4)
    assert np.std(out) > 0


def test_add_noise_matches_declared_sigma():
    arr = np.zeros(200000)
    out = add_noise(arr, 0.25, make_rng(9))
    assert abs(np.std(out) - 0.25) < 0.002


def test_grid_validation():
    with pytest.raises(ShapeError):
        Grid(2, np.zeros((3, 3)))  # 2-d grids must be (n, 2)
    with pytest.raises(ConfigError):
        Grid(1, np.array([0.3, 0.1, 0.5]))  # unsorted 1-d
    with pytest.raises(ConfigError):
        Grid(3, np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        Grid(1, np.array([0.0, np.nan]))
