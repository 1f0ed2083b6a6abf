"""Reduced-basis extraction and data diagnostics.

The data matrix stacks every observed state as a row; its right singular
vectors give the reduced basis. The QR diagnostic measures, for each time
column, how much of it is new relative to all earlier times; a fast-decaying
diagonal means short memory suffices.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import thin_qr, thin_svd


@dataclass
class SpectrumReport:
    singular_values: np.ndarray
    relative_values: np.ndarray      # sigma_k / sigma_1
    ranks: np.ndarray                # 1..max_rank
    frob_errors: np.ndarray          # ||D - D_r||_F per rank
    max_errors: np.ndarray           # max|D - D_r| per rank


@dataclass
class ReducedBasis:
    n_red: int
    v_red: np.ndarray = field(repr=False)  # (n_full, n_red), orthonormal
    source_spectrum: SpectrumReport = None

    def __post_init__(self):
        if self.v_red.ndim != 2 or self.v_red.shape[1] != self.n_red:
            raise ShapeError(
                f"v_red shape {self.v_red.shape} vs n_red {self.n_red}"
            )
        gram = self.v_red.T @ self.v_red
        if np.max(np.abs(gram - np.eye(self.n_red))) >= 1e-10:
            raise ConfigError("basis columns are not orthonormal")


@dataclass
class MemoryReport:
    r_diag: np.ndarray    # diag of R-hat, >= 0
    relative: np.ndarray  # r_diag / column norm


def assemble_data_matrix(dataset):
    """Rows: trajectory-major, chunk-time-minor observed states."""
    chunks = dataset.chunks
    n_traj, n_full, length = chunks.shape
    # (traj, time, component) then flatten the first two axes
    return np.ascontiguousarray(
        chunks.transpose(0, 2, 1).reshape(n_traj * length, n_full)
    )


def analyze_spectrum(data_matrix, max_rank):
    """Singular spectrum plus exact truncation errors for ranks 1..max_rank."""
    d = np.asarray(data_matrix, dtype=np.float64)
    if d.ndim != 2:
        raise ShapeError(f"data matrix must be 2-d, got {d.shape}")
    kmax = min(d.shape)
    if not 1 <= max_rank <= kmax:
        raise ConfigError(
            f"max_rank must be in [1, {kmax}], got {max_rank}"
        )
    u, s, v = thin_svd(d)
    frob = np.empty(max_rank)
    mabs = np.empty(max_rank)
    resid = d.copy()
    for r in range(1, max_rank + 1):
        resid -= s[r - 1] * np.outer(u[:, r - 1], v[:, r - 1])
        frob[r - 1] = np.linalg.norm(resid)
        mabs[r - 1] = np.max(np.abs(resid)) if resid.size else 0.0
    rel = s / s[0] if s[0] > 0 else np.zeros_like(s)
    return SpectrumReport(s, rel, np.arange(1, max_rank + 1), frob, mabs)


def fixed_basis(data_matrix, n_red):
    """First n_red right singular vectors, sign-fixed for reproducibility.

    Each column is flipped so its largest-magnitude entry is positive.
    """
    d = np.asarray(data_matrix, dtype=np.float64)
    kmax = min(d.shape)
    if not 1 <= n_red <= kmax:
        raise ConfigError(f"n_red must be in [1, {kmax}], got {n_red}")
    spectrum = analyze_spectrum(d, n_red)
    _, _, v = thin_svd(d)
    basis = v[:, :n_red].copy()
    for j in range(n_red):
        i = np.argmax(np.abs(basis[:, j]))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return ReducedBasis(n_red, basis, spectrum)


def memory_qr_diagnostic(trajs):
    """Thin QR of the (n_traj*n_full) x n_time matrix whose columns are time.

    diag(R-hat)[k] is the least-squares residual of time column k against
    all earlier columns; its decay estimates how much memory the observed
    component needs.
    """
    data = trajs.data
    n_time = data.shape[2]
    stacked = data.reshape(-1, n_time)
    if stacked.shape[0] < n_time:
        raise ConfigError(
            f"diagnostic needs n_traj*n_full >= n_time, got "
            f"{stacked.shape[0]} x {n_time}"
        )
    _, r = thin_qr(stacked)
    diag = np.abs(np.diag(r))
    norms = np.linalg.norm(stacked, axis=0)
    rel = np.divide(diag, norms, out=np.zeros_like(diag), where=norms > 0)
    return MemoryReport(diag, rel)
