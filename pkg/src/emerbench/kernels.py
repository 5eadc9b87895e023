"""Hot numeric kernels.

Each kernel has a loop implementation (compiled with numba when available)
and a vectorised numpy implementation. ``BACKEND`` names the one used by the
public wrappers; both are importable for benchmarking and cross-checking.
"""
import numpy as np

from ._accel import HAS_NUMBA, njit

BACKEND = "numba" if HAS_NUMBA else "numpy"
BACKENDS = ("numba", "loop", "numpy")


def _resolve(backend):
    backend = backend or BACKEND
    if backend not in BACKENDS:
        raise ValueError(f"unknown kernel backend {backend!r}; choose from {BACKENDS}")
    return backend


# -- local-level Kalman filter + RTS smoother --------------------------------

def _local_level_loop(y, obs_var, proc_var):
    n_t, n_f = y.shape
    out = np.empty_like(y)
    xf = np.empty(n_t)
    pf = np.empty(n_t)
    for f in range(n_f):
        r = obs_var[f]
        q = proc_var[f]
        if r <= 0.0:
            for t in range(n_t):
                out[t, f] = y[t, f]
            continue
        xf[0] = y[0, f]
        pf[0] = r
        for t in range(1, n_t):
            p_pred = pf[t - 1] + q
            k = p_pred / (p_pred + r)
            xf[t] = xf[t - 1] + k * (y[t, f] - xf[t - 1])
            pf[t] = (1.0 - k) * p_pred
        out[n_t - 1, f] = xf[n_t - 1]
        for t in range(n_t - 2, -1, -1):
            g = pf[t] / (pf[t] + q)
            out[t, f] = xf[t] + g * (out[t + 1, f] - xf[t])
    return out


def _local_level_numpy(y, obs_var, proc_var):
    n_t = y.shape[0]
    live = obs_var > 0.0
    r = np.where(live, obs_var, 1.0)
    q = proc_var
    xf = np.empty_like(y)
    pf = np.empty_like(y)
    xf[0] = y[0]
    pf[0] = r
    for t in range(1, n_t):
        p_pred = pf[t - 1] + q
        k = p_pred / (p_pred + r)
        xf[t] = xf[t - 1] + k * (y[t] - xf[t - 1])
        pf[t] = (1.0 - k) * p_pred
    out = np.empty_like(y)
    out[-1] = xf[-1]
    for t in range(n_t - 2, -1, -1):
        g = pf[t] / (pf[t] + q)
        out[t] = xf[t] + g * (out[t + 1] - xf[t])
    out[:, ~live] = y[:, ~live]
    return out


_local_level_jit = njit(_local_level_loop)


def local_level_smooth(y, obs_var, proc_var, backend=None):
    """Smoothed means of the local-level model, column by column.

    ``y`` is (time, features); ``obs_var`` and ``proc_var`` hold one variance
    per column. Columns with non-positive observation variance are returned
    unchanged.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    obs_var = np.ascontiguousarray(obs_var, dtype=np.float64)
    proc_var = np.ascontiguousarray(proc_var, dtype=np.float64)
    backend = _resolve(backend)
    if backend == "numba":
        if _local_level_jit is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _local_level_jit(y, obs_var, proc_var)
    if backend == "loop":
        return _local_level_loop(y, obs_var, proc_var)
    return _local_level_numpy(y, obs_var, proc_var)


# -- per-window summary statistics -------------------------------------------

def _window_stats_loop(x, win):
    n_ch, n_s = x.shape
    n_w = n_s // win
    out = np.empty((n_w, n_ch, 6))
    for w in range(n_w):
        for c in range(n_ch):
            lo = x[c, w * win]
            hi = lo
            s = 0.0
            ss = 0.0
            for i in range(w * win, (w + 1) * win):
                v = x[c, i]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
                s += v
                ss += v * v
            mean = s / win
            # two-pass variance keeps var = std**2 exact and non-negative
            acc = 0.0
            for i in range(w * win, (w + 1) * win):
                d = x[c, i] - mean
                acc += d * d
            var = acc / win
            out[w, c, 0] = hi
            out[w, c, 1] = lo
            out[w, c, 2] = mean
            out[w, c, 3] = np.sqrt(var)
            out[w, c, 4] = var
            out[w, c, 5] = ss
    return out


def _window_stats_numpy(x, win):
    n_ch, n_s = x.shape
    n_w = n_s // win
    blocks = x[:, : n_w * win].reshape(n_ch, n_w, win).transpose(1, 0, 2)
    mean = blocks.mean(axis=2)
    var = ((blocks - mean[..., None]) ** 2).mean(axis=2)
    return np.stack(
        [blocks.max(axis=2), blocks.min(axis=2), mean, np.sqrt(var), var, (blocks**2).sum(axis=2)],
        axis=2,
    )


_window_stats_jit = njit(_window_stats_loop)


def window_stats(x, win, backend=None):
    """(windows, channels, 6) array of max, min, mean, std, var, sum of squares.

    Population variance; trailing samples that do not fill a window are dropped.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    backend = _resolve(backend)
    if backend == "numba":
        if _window_stats_jit is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _window_stats_jit(x, int(win))
    if backend == "loop":
        return _window_stats_loop(x, int(win))
    return _window_stats_numpy(x, int(win))
