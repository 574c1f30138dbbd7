"""Central finite differences, used as the independent oracle for gradients."""
from __future__ import annotations

import numpy as np


def numerical_grad(f, array, h=1e-5, indices=None):
    """d f() / d array by central differences, perturbing ``array`` in place.

    ``f`` takes no arguments and returns a float computed from the current
    contents of ``array``.  With ``indices`` (flat positions) only those
    entries are estimated; the rest of the result is NaN.
    """
    flat = array.reshape(-1)
    out = np.full(flat.shape, np.nan)
    todo = range(flat.size) if indices is None else indices
    for i in todo:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(array.shape)


def max_relative_error(analytic, numeric, floor=1e-6):
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor), ignoring NaN (unsampled) entries."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def sample_indices(size, limit, rng):
    if size <= limit:
        return list(range(size))
    return sorted(rng.choice(size, size=limit, replace=False).tolist())
