"""Central finite-difference oracle, evaluated in float64."""

from __future__ import annotations

import numpy as np

from layercond.autodiff import Tape, Tensor, precision

STEP = 1e-3
REL_TOL = 1e-3
ABS_TOL = 1e-4


def _scalarize(out: Tensor, proj: np.ndarray):
    return (out * Tensor(proj)).sum()


def check_gradients(fn, arrays, seed=0):
    """Compare tape gradients of ``fn(*tensors)`` against central differences.

    ``fn`` maps Tensors to a Tensor; the oracle reduces it with a fixed random
    projection so every output element contributes. Returns the worst
    (abs_err, rel_err) pair over all input entries and raises on failure.
    """
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        arrays = [np.array(a, dtype=np.float64) for a in arrays]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            out = fn(*tensors)
            proj = rng.uniform(-1, 1, size=out.shape)
            loss = _scalarize(out, proj)
        tape.backward(loss, wrt=tensors)
        analytic = [t.grad.copy() for t in tensors]

        def f(vals):
            ts = [Tensor(v) for v in vals]
            return float(_scalarize(fn(*ts), proj).data)

        worst = (0.0, 0.0)
        for i, base in enumerate(arrays):
            numeric = np.zeros_like(base)
            flat = numeric.reshape(-1)
            for j in range(base.size):
                plus = [a.copy() for a in arrays]
                minus = [a.copy() for a in arrays]
                plus[i].reshape(-1)[j] += STEP
                minus[i].reshape(-1)[j] -= STEP
                flat[j] = (f(plus) - f(minus)) / (2 * STEP)
            a = analytic[i]
            abs_err = np.abs(a - numeric)
            rel_err = abs_err / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-12)
            bad = (abs_err > ABS_TOL) & (rel_err > REL_TOL)
            if bad.any():
                k = int(np.argmax(bad.reshape(-1)))
                raise AssertionError(
                    f"input {i}: analytic {a.reshape(-1)[k]} vs numeric {numeric.reshape(-1)[k]} "
                    f"(abs {abs_err.reshape(-1)[k]:.3g}, rel {rel_err.reshape(-1)[k]:.3g})"
                )
            ok = abs_err > ABS_TOL
            worst_rel = float(rel_err[ok].max()) if ok.any() else 0.0
            worst = (max(worst[0], float(abs_err.max())), max(worst[1], worst_rel))
    return worst
