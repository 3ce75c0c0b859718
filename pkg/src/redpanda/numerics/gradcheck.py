"""Central finite differences, used to validate analytic gradients."""
import numpy as np


def numerical_grad(fn, arrays, step=1e-4):
    """Central-difference gradient of scalar ``fn(*arrays)`` w.r.t. each array.

    ``fn`` receives the (perturbed) arrays in place and must return a float.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = fn(*arrays)
            flat[i] = orig - step
            f_minus = fn(*arrays)
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    """Norm-wise relative error ``||a - n|| / max(||a||, ||n||)``.

    Entry-wise ratios are dominated by rounding noise wherever a gradient
    component is near zero, so the comparison is made on whole arrays.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
