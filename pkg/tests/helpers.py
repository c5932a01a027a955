"""Independent numerical oracles shared by the test modules."""

import numpy as np


def naive_conv1d(x, w, b, d):
    """Direct quadruple loop; x [C_in, T], w [C_out, C_in, k]."""
    c_in, T = x.shape
    c_out, _, k = w.shape
    left = ((k - 1) * d) // 2
    out = np.zeros((c_out, T))
    for o in range(c_out):
        for t in range(T):
            acc = 0.0 if b is None else b[o]
            for i in range(c_in):
                for j in range(k):
                    src = t + j * d - left
                    if 0 <= src < T:
                        acc += w[o, i, j] * x[i, src]
            out[o, t] = acc
    return out


def naive_conv1d_transpose(y, w, b, d):
    """Scatter form of the adjoint; y [C_in, T], w [C_in, C_out, k]."""
    c_in, T = y.shape
    _, c_out, k = w.shape
    left = ((k - 1) * d) // 2
    out = np.zeros((c_out, T))
    for i in range(c_in):
        for t in range(T):
            for o in range(c_out):
                for j in range(k):
                    dst = t + j * d - left
                    if 0 <= dst < T:
                        out[o, dst] += w[i, o, j] * y[i, t]
    if b is not None:
        out += b[:, None]
    return out


def central_diff(f, arrays, step=1e-5):
    """Central finite differences of scalar f(*arrays) w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(*arrays)
            flat[i] = orig - step
            lo = f(*arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
