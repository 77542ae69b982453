"""Shared test utilities: the finite-difference oracle and error metrics.

numeric_grad is deliberately independent of any backward-pass code: it
only ever calls forward functions, perturbing one element at a time with
central differences.
"""

import numpy as np

FD_EPS = 1e-5


def numeric_grad(f, x, eps=FD_EPS):
    """Central finite differences of a scalar function f at array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def relerr(analytic, numeric):
    """Global relative L2 error of an analytic gradient vs its FD estimate."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


def treehash(root):
    """SHA-256 over every file (path + bytes) under a directory."""
    import hashlib
    from pathlib import Path

    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()
