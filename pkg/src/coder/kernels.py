"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The two inner loops that dominate runtime on large text sets are the
per-class heuristic reduction (a ragged max-then-mean over neighbor-vector
slices) and the support-affinity transform. Both ship in two variants:
an @njit kernel and a vectorized numpy fallback. Set CODER_DISABLE_NUMBA=1
to force the numpy path; otherwise numba is used when importable.

benchmarks/bench_kernels.py compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_DISABLE = os.environ.get("CODER_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

if not _ENV_DISABLE:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


def _stage1_numpy(values, mean_idx, mean_start, max_idx, max_start):
    n_images = values.shape[0]
    n_classes = mean_start.shape[0] - 1
    out = np.empty((n_images, n_classes), dtype=np.float64)
    for j in range(n_classes):
        m_cols = mean_idx[mean_start[j]:mean_start[j + 1]]
        x_cols = max_idx[max_start[j]:max_start[j + 1]]
        best = values[:, x_cols].max(axis=1).astype(np.float64)
        if m_cols.size:
            total = values[:, m_cols].sum(axis=1, dtype=np.float64)
            out[:, j] = (total + best) / (m_cols.size + 1)
        else:
            out[:, j] = best
    return out


def _affinity_minmax_numpy(sims, beta, t):
    lo = sims.min(axis=1, keepdims=True)
    hi = sims.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(flat, 0.5, (sims - lo) / np.where(flat, 1.0, span))
    return np.exp(-beta * (1.0 - norm / t))


def _affinity_l2_numpy(sims, beta, t):
    norms = np.linalg.norm(sims, axis=1, keepdims=True)
    norm = np.divide(sims, norms, out=np.zeros_like(sims), where=norms != 0.0)
    return np.exp(-beta * (1.0 - norm / t))


if HAVE_NUMBA:

    @njit(cache=True)
    def _stage1_numba(values, mean_idx, mean_start, max_idx, max_start):  # pragma: no cover
        n_images = values.shape[0]
        n_classes = mean_start.shape[0] - 1
        out = np.empty((n_images, n_classes), dtype=np.float64)
        for i in range(n_images):
            for j in range(n_classes):
                best = -np.inf
                for p in range(max_start[j], max_start[j + 1]):
                    v = float(values[i, max_idx[p]])
                    if v > best:
                        best = v
                acc = best
                count = 1
                for p in range(mean_start[j], mean_start[j + 1]):
                    acc += float(values[i, mean_idx[p]])
                    count += 1
                out[i, j] = acc / count
        return out

    @njit(cache=True)
    def _affinity_minmax_numba(sims, beta, t):  # pragma: no cover
        n, m = sims.shape
        out = np.empty((n, m), dtype=np.float64)
        for i in range(n):
            lo = sims[i, 0]
            hi = sims[i, 0]
            for k in range(1, m):
                v = sims[i, k]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            span = hi - lo
            for k in range(m):
                norm = 0.5 if span == 0.0 else (sims[i, k] - lo) / span
                out[i, k] = np.exp(-beta * (1.0 - norm / t))
        return out

    @njit(cache=True)
    def _affinity_l2_numba(sims, beta, t):  # pragma: no cover
        n, m = sims.shape
        out = np.empty((n, m), dtype=np.float64)
        for i in range(n):
            ss = 0.0
            for k in range(m):
                ss += sims[i, k] * sims[i, k]
            nrm = np.sqrt(ss)
            for k in range(m):
                norm = 0.0 if nrm == 0.0 else sims[i, k] / nrm
                out[i, k] = np.exp(-beta * (1.0 - norm / t))
        return out


def stage1_reduce(values: np.ndarray, mean_idx: np.ndarray, mean_start: np.ndarray,
                  max_idx: np.ndarray, max_start: np.ndarray,
                  use_numba: bool | None = None) -> np.ndarray:
    """Per-class logits: mean of the mean-pool slice plus the max-pool best.

    `values` is (n_images, n_texts) float32. The slices are CSR-style index
    arrays: class j mean-pools columns mean_idx[mean_start[j]:mean_start[j+1]]
    and max-pools max_idx[max_start[j]:max_start[j+1]] (never empty).
    Accumulation is float64; output is (n_images, n_classes) float64.
    """
    values = np.ascontiguousarray(values, dtype=np.float32)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba path requested but numba is unavailable or disabled")
    if use_numba:
        return _stage1_numba(values, mean_idx, mean_start, max_idx, max_start)
    return _stage1_numpy(values, mean_idx, mean_start, max_idx, max_start)


def affinity_transform(sims: np.ndarray, beta: float, t: float, mode: str,
                       use_numba: bool | None = None) -> np.ndarray:
    """exp(-beta * (1 - Norm(sims)/t)) row-wise over raw support similarities.

    mode "minmax" maps each row affinely onto [0, 1] (a constant row maps to
    all 0.5); mode "l2" divides each row by its Euclidean norm.
    """
    sims = np.ascontiguousarray(sims, dtype=np.float64)
    if mode not in ("minmax", "l2"):
        raise ValueError(f"unknown affinity norm mode {mode!r}")
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba path requested but numba is unavailable or disabled")
    if use_numba:
        fn = _affinity_minmax_numba if mode == "minmax" else _affinity_l2_numba
    else:
        fn = _affinity_minmax_numpy if mode == "minmax" else _affinity_l2_numpy
    return fn(sims, float(beta), float(t))


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs so first real calls are fast."""
    if not HAVE_NUMBA:
        return
    v = np.ones((1, 2), dtype=np.float32)
    idx = np.array([0], dtype=np.int64)
    start = np.array([0, 1], dtype=np.int64)
    _stage1_numba(v, idx, start, np.array([1], dtype=np.int64), start)
    s = np.ones((1, 2), dtype=np.float64)
    _affinity_minmax_numba(s, 1.0, 1.0)
    _affinity_l2_numba(s, 1.0, 1.0)
