"""Trajectory generation for the three example problems.

All examples observe a single scalar field on a fixed grid at dt = 1e-2:

  heat1d  pi^2 u_t = u_xx on [0,1], zero Dirichlet; exact solution
          u = a1 sin(pi x) e^{-t} + a2 sin(2 pi x) e^{-4t}; observed on 100
          sorted uniform draws in [0.2399, 0.7577].
  wave1d  v_t = w_x, w_t = v_x on [-1,1] periodic; truncated Fourier ICs;
          solved exactly along characteristics; only v is observed, on the
          uniform 50-point grid x_i = -1 + 2i/50.
  wave2d  u_tt = u_xx + u_yy on [-1,1]^2, Dirichlet in x, Neumann in y;
          leapfrog solve on a tensor grid, observed by bilinear
          interpolation at 1537 Halton points; u_t is never observed.

Per-trajectory random draws come from the caller's rng in a fixed,
documented order so datasets are reproducible from a seed.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .rng import gaussian, make_rng

DT_DEFAULT = 1e-2
HEAT_GRID_LO = 0.2399
HEAT_GRID_HI = 0.7577
DEFAULT_GRID_SEED = 739  # dedicated stream for the heat1d observation grid


@dataclass
class Grid:
    dim: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.dim == 1:
            if self.points.ndim != 1:
                raise ShapeError("1-d grid points must be a flat array")
            if np.any(np.diff(self.points) < 0):
                raise ConfigError("1-d grid points must be sorted ascending")
        elif self.dim == 2:
            if self.points.ndim != 2 or self.points.shape[1] != 2:
                raise ShapeError("2-d grid points must be (n, 2)")
        else:
            raise ConfigError(f"grid dim must be 1 or 2, got {self.dim}")
        if not np.all(np.isfinite(self.points)):
            raise ConfigError("grid points must be finite")

    @property
    def n_grid(self):
        return self.points.shape[0]


@dataclass
class TrajectorySet:
    grid: Grid
    dt: float
    n_steps: int
    data: np.ndarray = field(repr=False)  # (n_traj, n_full, n_steps + 1)
    clean: bool = True
    example_id: str = ""

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"trajectory tensor must be 3-d, got {self.data.shape}")
        if self.data.shape[2] != self.n_steps + 1:
            raise ShapeError(
                f"expected {self.n_steps + 1} time samples, got {self.data.shape[2]}"
            )
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")

    @property
    def n_traj(self):
        return self.data.shape[0]

    @property
    def n_full(self):
        return self.data.shape[1]


@dataclass
class TrainingDataset:
    chunks: np.ndarray = field(repr=False)  # (n_traj, n_full, n_mem + n_rec)
    n_mem: int
    n_rec: int
    sigma: float
    grid: Grid
    dt: float = DT_DEFAULT
    example_id: str = ""

    def __post_init__(self):
        if self.n_mem < 1 or self.n_rec < 1:
            raise ConfigError(
                f"need n_mem >= 1 and n_rec >= 1, got {self.n_mem}, {self.n_rec}"
            )
        if self.chunks.ndim != 3 or self.chunks.shape[2] != self.n_mem + self.n_rec:
            raise ShapeError(
                f"chunks shape {self.chunks.shape} inconsistent with "
                f"n_mem+n_rec={self.n_mem + self.n_rec}"
            )
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def n_traj(self):
        return self.chunks.shape[0]

    @property
    def n_full(self):
        return self.chunks.shape[1]


# ---------------------------------------------------------------- heat1d


def heat1d_solution(a1, a2, x, t):
    """Exact solution of pi^2 u_t = u_xx with the two-mode sine IC."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return (a1 * np.sin(np.pi * x[..., None]) * np.exp(-t)
            + a2 * np.sin(2.0 * np.pi * x[..., None]) * np.exp(-4.0 * t))


def heat1d_grid(seed=DEFAULT_GRID_SEED, n_grid=100):
    """Sorted uniform draws in the middle band of [0,1], dedicated seed."""
    rng = make_rng(seed)
    pts = np.sort(rng.uniform(HEAT_GRID_LO, HEAT_GRID_HI, n_grid))
    return Grid(1, pts)


def gen_heat1d(n_traj, rng, grid=None, n_steps=200, dt=DT_DEFAULT):
    """Per trajectory draws a1, a2 ~ U[-1,1] (in that order)."""
    if n_traj < 1:
        raise ConfigError(f"n_traj must be >= 1, got {n_traj}")
    if grid is None:
        grid = heat1d_grid()
    times = dt * np.arange(n_steps + 1)
    data = np.empty((n_traj, grid.n_grid, n_steps + 1))
    for l in range(n_traj):
        a1 = rng.uniform(-1.0, 1.0)
        a2 = rng.uniform(-1.0, 1.0)
        data[l] = heat1d_solution(a1, a2, grid.points, times)
    return TrajectorySet(grid, dt, n_steps, data, example_id="heat1d")


# ---------------------------------------------------------------- wave1d

WAVE1D_N_MODES = 2


def wave1d_coeffs(rng):
    """IC coefficients, drawn in the fixed order a0, c0, then per mode n:
    a_n, b_n, c_n, d_n with amplitude bound 1/n. (a, b) build v0 and
    (c, d) build w0 in the basis {1, cos(n pi x), sin(n pi x)}."""
    nb = WAVE1D_N_MODES
    a = np.zeros(nb + 1)
    b = np.zeros(nb + 1)
    c = np.zeros(nb + 1)
    d = np.zeros(nb + 1)
    a[0] = rng.uniform(-0.5, 0.5)
    c[0] = rng.uniform(-0.5, 0.5)
    for n in range(1, nb + 1):
        lim = 1.0 / n
        a[n] = rng.uniform(-lim, lim)
        b[n] = rng.uniform(-lim, lim)
        c[n] = rng.uniform(-lim, lim)
        d[n] = rng.uniform(-lim, lim)
    return {"a": a, "b": b, "c": c, "d": d}


def _trig_sum(const, cos_c, sin_c, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, const, dtype=np.float64)
    for n in range(1, len(cos_c)):
        out = out + cos_c[n] * np.cos(n * np.pi * x) + sin_c[n] * np.sin(n * np.pi * x)
    return out


def wave1d_v0(coeffs, x):
    return _trig_sum(coeffs["a"][0], coeffs["a"], coeffs["b"], x)


def wave1d_w0(coeffs, x):
    return _trig_sum(coeffs["c"][0], coeffs["c"], coeffs["d"], x)


def wave1d_v(coeffs, x, t):
    """Characteristics: v = (p0(x+t) + q0(x-t))/2, p0 = v0+w0, q0 = v0-w0.

    The trigonometric ICs are 2-periodic, so the shifted arguments need no
    wrapping.
    """
    x = np.asarray(x, dtype=np.float64)
    p = wave1d_v0(coeffs, x + t) + wave1d_w0(coeffs, x + t)
    q = wave1d_v0(coeffs, x - t) - wave1d_w0(coeffs, x - t)
    return 0.5 * (p + q)


def wave1d_w(coeffs, x, t):
    x = np.asarray(x, dtype=np.float64)
    p = wave1d_v0(coeffs, x + t) + wave1d_w0(coeffs, x + t)
    q = wave1d_v0(coeffs, x - t) - wave1d_w0(coeffs, x - t)
    return 0.5 * (p - q)


def wave1d_grid(n_grid=50):
    # right endpoint excluded: the domain is periodic
    return Grid(1, -1.0 + 2.0 * np.arange(n_grid) / n_grid)


def gen_wave1d(n_traj, rng, n_steps=100, dt=DT_DEFAULT):
    """Only the v component is recorded; w stays hidden (memory closure)."""
    if n_traj < 1:
        raise ConfigError(f"n_traj must be >= 1, got {n_traj}")
    grid = wave1d_grid()
    data = np.empty((n_traj, grid.n_grid, n_steps + 1))
    for l in range(n_traj):
        coeffs = wave1d_coeffs(rng)
        for k in range(n_steps + 1):
            data[l, :, k] = wave1d_v(coeffs, grid.points, k * dt)
    return TrajectorySet(grid, dt, n_steps, data, example_id="wave1d")


# ---------------------------------------------------------------- wave2d


@dataclass
class Wave2dSolverConfig:
    nx: int = 101
    ny: int = 101
    substep: float = 5e-3

    def validate(self, dt):
        if self.nx < 65 or self.ny < 65:
            raise ConfigError(
                f"solver grid must be at least 65x65, got {self.nx}x{self.ny}"
            )
        dx = 2.0 / (self.nx - 1)
        dy = 2.0 / (self.ny - 1)
        limit = min(dx, dy) / np.sqrt(2.0)
        if self.substep > limit:
            raise ConfigError(
                f"CFL violation: substep {self.substep} exceeds "
                f"min(dx,dy)/sqrt(2) = {limit:.6g}; use substep <= {limit:.6g}"
            )
        n_sub = dt / self.substep
        if abs(n_sub - round(n_sub)) > 1e-9 or round(n_sub) < 1:
            raise ConfigError(
                f"substep {self.substep} must divide dt {dt} evenly"
            )
        return int(round(n_sub))


def halton_points(n, bases=(2, 3), start=1):
    """Radical-inverse Halton sequence in [0,1)^d, indices start..start+n-1.

    Starting at index 1 keeps every point strictly inside the open cube.
    """
    pts = np.empty((n, len(bases)))
    for j, base in enumerate(bases):
        for row, i in enumerate(range(start, start + n)):
            f = 1.0
            r = 0.0
            while i > 0:
                f /= base
                r += f * (i % base)
                i //= base
            pts[row, j] = r
    return pts


def wave2d_obs_grid(n_points=1537):
    return Grid(2, 2.0 * halton_points(n_points) - 1.0)


def wave2d_u0(a1, x, y):
    del y  # the initial displacement is independent of y
    return np.arctan(a1 * np.cos(0.5 * np.pi * x))


def wave2d_ut0(a2, a3, x, y):
    return a2 * np.sin(np.pi * x) * np.exp(a3 * np.sin(0.5 * np.pi * y))


def wave2d_solve(u0, ut0, solver_cfg, n_steps, dt=DT_DEFAULT):
    """Leapfrog march; returns (snapshots, energy) at observation times."""
    n_sub = solver_cfg.validate(dt)
    dx = 2.0 / (solver_cfg.nx - 1)
    dy = 2.0 / (solver_cfg.ny - 1)
    return kernels.wave2d_leapfrog(
        np.ascontiguousarray(u0, dtype=np.float64),
        np.ascontiguousarray(ut0, dtype=np.float64),
        dx, dy, solver_cfg.substep, n_sub, n_steps,
    )


def _bilinear_weights(points, nx, ny):
    """Cell indices and weights for interpolating a tensor grid on [-1,1]^2."""
    dx = 2.0 / (nx - 1)
    dy = 2.0 / (ny - 1)
    ix = np.clip(((points[:, 0] + 1.0) / dx).astype(np.int64), 0, nx - 2)
    iy = np.clip(((points[:, 1] + 1.0) / dy).astype(np.int64), 0, ny - 2)
    wx = (points[:, 0] + 1.0) / dx - ix
    wy = (points[:, 1] + 1.0) / dy - iy
    return ix, iy, wx, wy


def gen_wave2d(n_traj, solver_cfg, rng, n_steps=400, dt=DT_DEFAULT,
               obs_grid=None):
    """Per trajectory draws a1 ~ U[-1,1], a2 ~ U[-3,3], a3 ~ U[-1,1]."""
    if n_traj < 1:
        raise ConfigError(f"n_traj must be >= 1, got {n_traj}")
    if solver_cfg is None:
        solver_cfg = Wave2dSolverConfig()
    solver_cfg.validate(dt)
    if obs_grid is None:
        obs_grid = wave2d_obs_grid()
    nx, ny = solver_cfg.nx, solver_cfg.ny
    xs = np.linspace(-1.0, 1.0, nx)
    ys = np.linspace(-1.0, 1.0, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ix, iy, wx, wy = _bilinear_weights(obs_grid.points, nx, ny)
    data = np.empty((n_traj, obs_grid.n_grid, n_steps + 1))
    for l in range(n_traj):
        a1 = rng.uniform(-1.0, 1.0)
        a2 = rng.uniform(-3.0, 3.0)
        a3 = rng.uniform(-1.0, 1.0)
        snaps, _ = wave2d_solve(wave2d_u0(a1, X, Y), wave2d_ut0(a2, a3, X, Y),
                                solver_cfg, n_steps, dt)
        interp = (
            (1.0 - wx) * (1.0 - wy) * snaps[:, ix, iy]
            + wx * (1.0 - wy) * snaps[:, ix + 1, iy]
            + (1.0 - wx) * wy * snaps[:, ix, iy + 1]
            + wx * wy * snaps[:, ix + 1, iy + 1]
        )
        data[l] = interp.T
    return TrajectorySet(obs_grid, dt, n_steps, data, example_id="wave2d")


# ----------------------------------------------------- chunks and noise


def sample_chunks(trajs, n_mem, n_rec, rng):
    """One uniformly random chunk of length n_mem+n_rec per trajectory."""
    length = n_mem + n_rec
    n_time = trajs.n_steps + 1
    if n_time < length:
        raise ConfigError(
            f"trajectories have {n_time} samples, need at least {length}"
        )
    chunks = np.empty((trajs.n_traj, trajs.n_full, length))
    for l in range(trajs.n_traj):
        start = int(rng.integers(0, n_time - length + 1))
        chunks[l] = trajs.data[l, :, start:start + length]
    sigma = 0.0 if trajs.clean else np.nan  # unknown for pre-noised input
    return TrainingDataset(chunks, n_mem, n_rec, sigma, trajs.grid,
                           dt=trajs.dt, example_id=trajs.example_id)


def add_noise(data, sigma, rng):
    """Additive N(0, sigma^2) on every observed entry; returns a new object."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if isinstance(data, TrajectorySet):
        noisy = data.data + gaussian(rng, data.data.size, sigma).reshape(
            data.data.shape)
        return TrajectorySet(data.grid, data.dt, data.n_steps, noisy,
                             clean=data.clean and sigma == 0,
                             example_id=data.example_id)
    if isinstance(data, TrainingDataset):
        noisy = data.chunks + gaussian(rng, data.chunks.size, sigma).reshape(
            data.chunks.shape)
        total = float(np.hypot(data.sigma, sigma))
        return TrainingDataset(noisy, data.n_mem, data.n_rec, total,
                               data.grid, dt=data.dt,
                               example_id=data.example_id)
    arr = np.asarray(data, dtype=np.float64)
    return arr + gaussian(rng, arr.size, sigma).reshape(arr.shape)
