"""Hot numerical kernels with a numba backend and a pure-numpy fallback.

Every kernel is written once, in numba-compatible numpy style, at module
level and with no calls into other package code. When numba is available
(and not disabled) each function is additionally compiled with
``numba.njit(cache=True)``; the public names below then point at the
compiled versions. Selection is controlled by the ``FLOWROM_NUMBA``
environment variable:

    FLOWROM_NUMBA=1   require numba (falls back with a warning if missing)
    FLOWROM_NUMBA=0   force the pure-numpy path
    unset             use numba when importable

Both backends are deterministic on their own; bit-identical results
*across* backends are not promised (SIMD vs libm transcendentals differ in
the last ulps). ``benchmarks/bench_backends.py`` times the two paths and
checks their agreement.

Shared array conventions:
  - training chunks enter as ``dataT`` with shape (T, B, n_full); entry j
    along the first axis is chunk time j for the whole batch, so slices
    along time are contiguous (B, n_full) matrices ready for BLAS.
  - the window is most-recent-first; flattened model inputs place block i
    at columns [i*width, (i+1)*width) for the state i steps in the past.
  - weight matrices are (out, in); kernels build contiguous transposed
    copies once per call because np.dot wants contiguous operands.
"""

import os
import warnings

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False


def _pcfml_epoch(dataT, p_in, p_out, w0, b0, w1, b1, w2, b2, w3, b3,
                 n_mem, project_skip):
    """Full-batch recurrent loss + gradients for the reduced-basis model.

    dataT: (T, B, n_full) chunk tensor, T = n_mem + K.
    The model composes K times; each prediction is pushed into the window.
    Loss is mean over batch and recurrence steps of the squared nodal-space
    residual. Returns the loss and gradients for every matrix (the caller
    discards the ones its mode does not train).
    """
    T = dataT.shape[0]
    B = dataT.shape[1]
    n_full = dataT.shape[2]
    K = T - n_mem
    n_red = p_in.shape[0]
    h = w0.shape[0]
    n_in = w0.shape[1]  # n_mem * n_red

    piT = np.ascontiguousarray(p_in.T)
    poT = np.ascontiguousarray(p_out.T)
    w0T = np.ascontiguousarray(w0.T)
    w1T = np.ascontiguousarray(w1.T)
    w2T = np.ascontiguousarray(w2.T)
    w3T = np.ascontiguousarray(w3.T)

    # projected states; entries 0..n_mem-1 are data, n_mem+k is prediction k
    Z = np.empty((T, B, n_red))
    for j in range(n_mem):
        Z[j] = np.dot(dataT[j], piT)

    A0 = np.empty((K, B, n_in))
    H1 = np.empty((K, B, h))
    H2 = np.empty((K, B, h))
    H3 = np.empty((K, B, h))
    R = np.empty((K, B, n_red))
    preds = np.empty((K, B, n_full))

    loss = 0.0
    for k in range(K):
        cur = n_mem + k - 1
        a0 = A0[k]
        for i in range(n_mem):
            a0[:, i * n_red:(i + 1) * n_red] = Z[cur - i]
        H1[k] = np.tanh(np.dot(a0, w0T) + b0)
        H2[k] = np.tanh(np.dot(H1[k], w1T) + b1)
        H3[k] = np.tanh(np.dot(H2[k], w2T) + b2)
        R[k] = np.dot(H3[k], w3T) + b3
        if project_skip:
            preds[k] = np.dot(Z[cur] + R[k], poT)
        else:
            if k == 0:
                preds[k] = dataT[n_mem - 1] + np.dot(R[k], poT)
            else:
                preds[k] = preds[k - 1] + np.dot(R[k], poT)
        Z[n_mem + k] = np.dot(preds[k], piT)
        diff = preds[k] - dataT[n_mem + k]
        loss += np.sum(diff * diff)

    scale = 1.0 / (B * K)
    loss *= scale

    dp_in = np.zeros_like(p_in)
    dp_out = np.zeros_like(p_out)
    dw0 = np.zeros_like(w0)
    db0 = np.zeros_like(b0)
    dw1 = np.zeros_like(w1)
    db1 = np.zeros_like(b1)
    dw2 = np.zeros_like(w2)
    db2 = np.zeros_like(b2)
    dw3 = np.zeros_like(w3)
    db3 = np.zeros_like(b3)
    dZ = np.zeros((T, B, n_red))
    dv_chain = np.zeros((B, n_full))

    for k in range(K - 1, -1, -1):
        cur = n_mem + k - 1
        d_pred = (2.0 * scale) * (preds[k] - dataT[n_mem + k])
        if not project_skip and k < K - 1:
            d_pred = d_pred + dv_chain
        # prediction k was projected into Z[n_mem+k], consumed by later steps
        d_pred = d_pred + np.dot(dZ[n_mem + k], p_in)
        dp_in += np.dot(np.ascontiguousarray(dZ[n_mem + k].T), preds[k])
        if project_skip:
            y = Z[cur] + R[k]
            dp_out += np.dot(np.ascontiguousarray(d_pred.T), y)
            dr = np.dot(d_pred, p_out)
            dZ[cur] += dr
        else:
            dp_out += np.dot(np.ascontiguousarray(d_pred.T), R[k])
            dr = np.dot(d_pred, p_out)
            if k > 0:
                dv_chain = d_pred
        dz3 = dr
        dw3 += np.dot(np.ascontiguousarray(dz3.T), H3[k])
        db3 += np.sum(dz3, 0)
        dz2 = np.dot(dz3, w3) * (1.0 - H3[k] * H3[k])
        dw2 += np.dot(np.ascontiguousarray(dz2.T), H2[k])
        db2 += np.sum(dz2, 0)
        dz1 = np.dot(dz2, w2) * (1.0 - H2[k] * H2[k])
        dw1 += np.dot(np.ascontiguousarray(dz1.T), H1[k])
        db1 += np.sum(dz1, 0)
        dz0 = np.dot(dz1, w1) * (1.0 - H1[k] * H1[k])
        dw0 += np.dot(np.ascontiguousarray(dz0.T), A0[k])
        db0 += np.sum(dz0, 0)
        da0 = np.dot(dz0, w0)
        for i in range(n_mem):
            dZ[cur - i] += da0[:, i * n_red:(i + 1) * n_red]

    for j in range(n_mem):
        dp_in += np.dot(np.ascontiguousarray(dZ[j].T), dataT[j])

    return loss, dp_in, dp_out, dw0, db0, dw1, db1, dw2, db2, dw3, db3


def _nodal_epoch(dataT, cw1, cb1, cw2, cb2, aw1, ab1, aw2, ab2, n_mem):
    """Full-batch recurrent loss + gradients for the nodal baseline.

    Five disassembly channels (dense n_mem*n_full -> h, tanh, dense
    h -> n_full) feed a pointwise assembly net (5 -> 5 tanh -> 1) shared
    across grid points; the result is added to the newest state.
    """
    T = dataT.shape[0]
    B = dataT.shape[1]
    n_full = dataT.shape[2]
    K = T - n_mem
    n_ch = cw1.shape[0]
    h = cw1.shape[1]
    n_in = cw1.shape[2]  # n_mem * n_full

    # raw states; entries 0..n_mem-1 are data, n_mem+k is prediction k
    S = np.empty((T, B, n_full))
    for j in range(n_mem):
        S[j] = dataT[j]

    cw1T = np.empty((n_ch, n_in, h))
    cw2T = np.empty((n_ch, h, n_full))
    for c in range(n_ch):
        cw1T[c] = cw1[c].T
        cw2T[c] = cw2[c].T
    aw1T = np.ascontiguousarray(aw1.T)
    aw2T = np.ascontiguousarray(aw2.T)

    X = np.empty((B, n_in))
    H = np.empty((K, n_ch, B, h))
    C = np.empty((K, B, n_full, n_ch))
    G = np.empty((K, B * n_full, n_ch))

    loss = 0.0
    for k in range(K):
        cur = n_mem + k - 1
        for i in range(n_mem):
            X[:, i * n_full:(i + 1) * n_full] = S[cur - i]
        for c in range(n_ch):
            H[k, c] = np.tanh(np.dot(X, cw1T[c]) + cb1[c])
            C[k, :, :, c] = np.dot(H[k, c], cw2T[c]) + cb2[c]
        cr = C[k].reshape(B * n_full, n_ch)
        G[k] = np.tanh(np.dot(cr, aw1T) + ab1)
        out = np.dot(G[k], aw2T) + ab2
        S[n_mem + k] = S[cur] + out.reshape(B, n_full)
        diff = S[n_mem + k] - dataT[n_mem + k]
        loss += np.sum(diff * diff)

    scale = 1.0 / (B * K)
    loss *= scale

    dcw1 = np.zeros_like(cw1)
    dcb1 = np.zeros_like(cb1)
    dcw2 = np.zeros_like(cw2)
    dcb2 = np.zeros_like(cb2)
    daw1 = np.zeros_like(aw1)
    dab1 = np.zeros_like(ab1)
    daw2 = np.zeros_like(aw2)
    dab2 = np.zeros_like(ab2)
    dS = np.zeros((T, B, n_full))
    dX = np.empty((B, n_in))

    for k in range(K - 1, -1, -1):
        cur = n_mem + k - 1
        d_pred = (2.0 * scale) * (S[n_mem + k] - dataT[n_mem + k]) + dS[n_mem + k]
        dS[cur] += d_pred  # skip connection
        d_out = np.ascontiguousarray(d_pred.reshape(B * n_full, 1))
        daw2 += np.dot(np.ascontiguousarray(d_out.T), G[k])
        dab2 += np.sum(d_out, 0)
        dg = np.dot(d_out, aw2)
        dzg = dg * (1.0 - G[k] * G[k])
        cr = C[k].reshape(B * n_full, n_ch)
        daw1 += np.dot(np.ascontiguousarray(dzg.T), cr)
        dab1 += np.sum(dzg, 0)
        dc = np.dot(dzg, aw1).reshape(B, n_full, n_ch)
        for i in range(n_mem):
            X[:, i * n_full:(i + 1) * n_full] = S[cur - i]
        dX[:, :] = 0.0
        for c in range(n_ch):
            df = np.ascontiguousarray(dc[:, :, c])
            dcw2[c] += np.dot(np.ascontiguousarray(df.T), H[k, c])
            dcb2[c] += np.sum(df, 0)
            dzh = np.dot(df, cw2[c]) * (1.0 - H[k, c] * H[k, c])
            dcw1[c] += np.dot(np.ascontiguousarray(dzh.T), X)
            dcb1[c] += np.sum(dzh, 0)
            dX += np.dot(dzh, cw1[c])
        for i in range(n_mem):
            dS[cur - i] += dX[:, i * n_full:(i + 1) * n_full]

    return loss, dcw1, dcb1, dcw2, dcb2, daw1, dab1, daw2, dab2


def _adam_update(p, g, m, v, t, lr, b1, b2, eps):
    """In-place Adam step with bias correction on flat float64 vectors."""
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    m[:] = b1 * m + (1.0 - b1) * g
    v[:] = b2 * v + (1.0 - b2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _wave2d_leapfrog(u0, ut0, dx, dy, dt, n_sub, n_obs):
    """Leapfrog march of u_tt = u_xx + u_yy on a tensor grid.

    Dirichlet u = 0 on the x edges, reflecting ghost points (zero Neumann)
    on the y edges. Records a snapshot every n_sub substeps plus the
    discrete energy 0.5 * integral(u_t^2 + |grad u|^2) at those times
    (u_t by centered difference, which needs one substep beyond the last
    snapshot). Returns (snaps[n_obs+1, nx, ny], energy[n_obs+1]).
    """
    nx = u0.shape[0]
    ny = u0.shape[1]
    snaps = np.empty((n_obs + 1, nx, ny))
    energy = np.empty(n_obs + 1)

    # trapezoid weights for the energy integral
    wx = np.full(nx, dx)
    wx[0] = 0.5 * dx
    wx[nx - 1] = 0.5 * dx
    wy = np.full(ny, dy)
    wy[0] = 0.5 * dy
    wy[ny - 1] = 0.5 * dy
    w2 = wx.reshape(nx, 1) * wy.reshape(1, ny)

    ux = np.empty((nx, ny))
    uy = np.empty((nx, ny))

    snaps[0] = u0
    ux[1:-1, :] = (u0[2:, :] - u0[:-2, :]) / (2.0 * dx)
    ux[0, :] = (u0[1, :] - u0[0, :]) / dx
    ux[-1, :] = (u0[-1, :] - u0[-2, :]) / dx
    uy[:, 1:-1] = (u0[:, 2:] - u0[:, :-2]) / (2.0 * dy)
    uy[:, 0] = (u0[:, 1] - u0[:, 0]) / dy
    uy[:, -1] = (u0[:, -1] - u0[:, -2]) / dy
    energy[0] = 0.5 * np.sum(w2 * (ut0 * ut0 + ux * ux + uy * uy))

    u_prev = u0.copy()
    u_cur = np.zeros((nx, ny))
    u_next = np.zeros((nx, ny))
    uyy = np.empty((nx, ny))

    # Taylor start: u(dt) = u + dt u_t + dt^2/2 u_tt, u_tt = laplacian
    uyy[:, 1:-1] = (u_prev[:, 2:] - 2.0 * u_prev[:, 1:-1] + u_prev[:, :-2]) / (dy * dy)
    uyy[:, 0] = 2.0 * (u_prev[:, 1] - u_prev[:, 0]) / (dy * dy)
    uyy[:, -1] = 2.0 * (u_prev[:, -2] - u_prev[:, -1]) / (dy * dy)
    u_cur[1:-1, :] = (
        u_prev[1:-1, :] + dt * ut0[1:-1, :]
        + 0.5 * dt * dt * (
            (u_prev[2:, :] - 2.0 * u_prev[1:-1, :] + u_prev[:-2, :]) / (dx * dx)
            + uyy[1:-1, :]
        )
    )
    u_cur[0, :] = 0.0
    u_cur[-1, :] = 0.0

    total = n_obs * n_sub
    for s in range(1, total + 1):
        # u_cur is the solution at substep s; advance to s+1
        uyy[:, 1:-1] = (u_cur[:, 2:] - 2.0 * u_cur[:, 1:-1] + u_cur[:, :-2]) / (dy * dy)
        uyy[:, 0] = 2.0 * (u_cur[:, 1] - u_cur[:, 0]) / (dy * dy)
        uyy[:, -1] = 2.0 * (u_cur[:, -2] - u_cur[:, -1]) / (dy * dy)
        u_next[1:-1, :] = (
            2.0 * u_cur[1:-1, :] - u_prev[1:-1, :]
            + dt * dt * (
                (u_cur[2:, :] - 2.0 * u_cur[1:-1, :] + u_cur[:-2, :]) / (dx * dx)
                + uyy[1:-1, :]
            )
        )
        u_next[0, :] = 0.0
        u_next[-1, :] = 0.0
        if s % n_sub == 0:
            m = s // n_sub
            snaps[m] = u_cur
            ut = (u_next - u_prev) / (2.0 * dt)
            ux[1:-1, :] = (u_cur[2:, :] - u_cur[:-2, :]) / (2.0 * dx)
            ux[0, :] = (u_cur[1, :] - u_cur[0, :]) / dx
            ux[-1, :] = (u_cur[-1, :] - u_cur[-2, :]) / dx
            uy[:, 1:-1] = (u_cur[:, 2:] - u_cur[:, :-2]) / (2.0 * dy)
            uy[:, 0] = (u_cur[:, 1] - u_cur[:, 0]) / dy
            uy[:, -1] = (u_cur[:, -1] - u_cur[:, -2]) / dy
            energy[m] = 0.5 * np.sum(w2 * (ut * ut + ux * ux + uy * uy))
        tmp = u_prev
        u_prev = u_cur
        u_cur = u_next
        u_next = tmp

    return snaps, energy


_PLAIN = {
    "pcfml_epoch": _pcfml_epoch,
    "nodal_epoch": _nodal_epoch,
    "adam_update": _adam_update,
    "wave2d_leapfrog": _wave2d_leapfrog,
}


def _pick_backend():
    flag = os.environ.get("FLOWROM_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    want = flag in ("1", "true", "on", "yes")
    if want and not HAS_NUMBA:
        warnings.warn(
            "FLOWROM_NUMBA=1 but numba is not importable; using numpy",
            RuntimeWarning,
        )
    return HAS_NUMBA


def _compile_all():
    jit = numba.njit(cache=True, fastmath=False)
    return {name: jit(fn) for name, fn in _PLAIN.items()}


USE_NUMBA = _pick_backend()
BACKEND = "numba" if USE_NUMBA else "numpy"
_COMPILED = _compile_all() if USE_NUMBA else None

_active = _COMPILED if USE_NUMBA else _PLAIN
pcfml_epoch = _active["pcfml_epoch"]
nodal_epoch = _active["nodal_epoch"]
adam_update = _active["adam_update"]
wave2d_leapfrog = _active["wave2d_leapfrog"]


def get_impls(backend):
    """Return the kernel dict for 'numpy' or 'numba' (None if unavailable).

    Used by the benchmark and the backend-agreement tests; normal code goes
    through the module-level names.
    """
    if backend == "numpy":
        return dict(_PLAIN)
    if backend == "numba":
        if not HAS_NUMBA:
            return None
        global _COMPILED
        if _COMPILED is None:
            _COMPILED = _compile_all()
        return dict(_COMPILED)
    raise ValueError(f"unknown backend {backend!r}")
