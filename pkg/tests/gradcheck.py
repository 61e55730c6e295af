"""Central finite-difference gradient checking used across the nn tests."""

import numpy as np

H = 1e-3
RTOL = 1e-3


def numeric_grad(f, x, h=H):
    """Central differences of scalar-valued f at every coordinate of x.

    f reads x by reference; coordinates are perturbed in place. The default
    h suits well-conditioned ops; normalization layers need a smaller h
    because their curvature explodes wherever the reduced variance is tiny.
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=RTOL, atol=1e-6, what=""):
    analytic = np.asarray(analytic, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    tol = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    bad = diff > tol
    if bad.any():
        idx = np.unravel_index(np.argmax(diff - tol), diff.shape)
        raise AssertionError(
            f"gradient mismatch{' in ' + what if what else ''} at {idx}: "
            f"analytic {analytic[idx]:.6g} vs numeric {numeric[idx]:.6g} "
            f"({int(bad.sum())} of {bad.size} coordinates off)")


def away_from_kinks(rng, shape, margin=5 * H):
    """Uniform(-1,1) values nudged away from 0 so relu/abs kinks cannot
    straddle the finite-difference interval."""
    x = rng.uniform(-1.0, 1.0, size=shape)
    tiny = np.abs(x) < margin
    x[tiny] = np.sign(x[tiny] + 1e-12) * margin
    return x
