"""Random-shape cases for every differentiable primitive.

Each factory takes an rng and returns ``(fn, arrays)``; entries are drawn
from [-1, 1] and no axis exceeds 8.
"""

from __future__ import annotations

import numpy as np

from layercond.autodiff import ops


def _u(rng, *shape):
    return rng.uniform(-1, 1, size=shape)


def _dims(rng, k, lo=1, hi=8):
    return [int(d) for d in rng.integers(lo, hi + 1, size=k)]


def case_add(rng):
    a, b = _dims(rng, 2)
    return (lambda x, y: ops.add(x, y)), [_u(rng, a, b), _u(rng, 1, b)]


def case_sub(rng):
    a, b = _dims(rng, 2)
    return (lambda x, y: ops.sub(x, y)), [_u(rng, a, 1), _u(rng, a, b)]


def case_mul(rng):
    a, b, c = _dims(rng, 3)
    return (lambda x, y: ops.mul(x, y)), [_u(rng, a, b, c), _u(rng, b, c)]


def case_div(rng):
    a, b = _dims(rng, 2)
    denom = rng.uniform(0.5, 1.0, size=(a, b)) * rng.choice([-1, 1], size=(a, b))
    return (lambda x, y: ops.div(x, y)), [_u(rng, a, b), denom]


def case_matmul(rng):
    m, k, n = _dims(rng, 3)
    return (lambda x, y: ops.matmul(x, y)), [_u(rng, m, k), _u(rng, k, n)]


def case_batched_matmul(rng):
    b, m, k, n = _dims(rng, 4, hi=5)
    return (lambda x, y: ops.matmul(x, y)), [_u(rng, b, m, k), _u(rng, b, k, n)]


def case_softmax(rng):
    a, n = _dims(rng, 2)
    axis = int(rng.integers(0, 2))
    return (lambda x: ops.softmax(x, axis=axis)), [_u(rng, a, n) * 3]


def case_layer_norm(rng):
    a = _dims(rng, 1)[0]
    d = int(rng.integers(2, 9))
    return (lambda x: ops.layer_norm(x)), [_u(rng, a, d)]


def case_layer_norm_affine(rng):
    a = _dims(rng, 1)[0]
    d = int(rng.integers(2, 9))
    return (lambda x, w, b: ops.layer_norm(x, weight=w, bias=b)), [_u(rng, a, d), _u(rng, d), _u(rng, d)]


def case_silu(rng):
    return (lambda x: ops.silu(x)), [_u(rng, *_dims(rng, 2)) * 3]


def case_gelu(rng):
    return (lambda x: ops.gelu(x)), [_u(rng, *_dims(rng, 2)) * 3]


def case_exp(rng):
    return (lambda x: ops.exp(x)), [_u(rng, *_dims(rng, 2))]


def case_log(rng):
    return (lambda x: ops.log(x)), [rng.uniform(0.2, 1.0, size=_dims(rng, 2))]


def case_embedding(rng):
    v, d, t = _dims(rng, 3, lo=2)
    ids = rng.integers(0, v, size=(2, t))
    return (lambda table: ops.embedding(table, ids)), [_u(rng, v, d)]


def case_reshape(rng):
    a, b, c = _dims(rng, 3)
    return (lambda x: ops.reshape(x, (c, a * b))), [_u(rng, a, b, c)]


def case_transpose(rng):
    a, b, c = _dims(rng, 3)
    perm = tuple(int(i) for i in rng.permutation(3))
    return (lambda x: ops.transpose(x, perm)), [_u(rng, a, b, c)]


def case_sum(rng):
    a, b, c = _dims(rng, 3)
    axis = int(rng.integers(0, 3))
    return (lambda x: ops.sum(x, axis=axis)), [_u(rng, a, b, c)]


def case_mean(rng):
    a, b, c = _dims(rng, 3)
    axis = (0, 2) if rng.random() < 0.5 else None
    return (lambda x: ops.mean(x, axis=axis, keepdims=axis is not None)), [_u(rng, a, b, c)]


def case_index(rng):
    a, b = _dims(rng, 2, lo=2)
    return (lambda x: ops.index(x, (slice(None), slice(0, b - 1)))), [_u(rng, a, b)]


def case_concat(rng):
    a, b, c = _dims(rng, 3)
    return (lambda x, y: ops.concat([x, y], axis=-1)), [_u(rng, a, b), _u(rng, a, c)]


def case_conv3x3_stride1(rng):
    n = int(rng.integers(1, 3))
    h, w = _dims(rng, 2, lo=2, hi=6)
    cin, cout = _dims(rng, 2, hi=4)
    return (lambda x, k, b: ops.conv2d(x, k, b, stride=1)), [_u(rng, n, h, w, cin), _u(rng, 3, 3, cin, cout), _u(rng, cout)]


def case_conv3x3_stride2(rng):
    n = int(rng.integers(1, 3))
    h, w = [2 * d for d in _dims(rng, 2, lo=1, hi=4)]
    cin, cout = _dims(rng, 2, hi=4)
    return (lambda x, k, b: ops.conv2d(x, k, b, stride=2)), [_u(rng, n, h, w, cin), _u(rng, 3, 3, cin, cout), _u(rng, cout)]


def case_conv1x1(rng):
    n = int(rng.integers(1, 3))
    h, w, cin, cout = _dims(rng, 4, hi=5)
    return (lambda x, k: ops.conv2d(x, k)), [_u(rng, n, h, w, cin), _u(rng, 1, 1, cin, cout)]


def case_upsample2x(rng):
    n = int(rng.integers(1, 3))
    h, w, c = _dims(rng, 3, hi=4)
    return (lambda x: ops.upsample2x(x)), [_u(rng, n, h, w, c)]


def case_group_norm(rng):
    n = int(rng.integers(1, 3))
    h, w = _dims(rng, 2, hi=4)
    groups = int(rng.integers(1, 3))
    c = groups * int(rng.integers(1, 4))
    if h * w * (c // groups) < 2:
        h = 2
    return (lambda x, g, b: ops.group_norm(x, groups, g, b)), [_u(rng, n, h, w, c), _u(rng, c), _u(rng, c)]


def case_mse_loss(rng):
    shape = _dims(rng, 2)
    return (lambda x, y: ops.mse_loss(x, y)), [_u(rng, *shape), _u(rng, *shape)]


def case_cross_entropy(rng):
    b, t, v = _dims(rng, 3, lo=2)
    targets = rng.integers(0, v, size=(b, t))
    weights = (rng.random((b, t)) < 0.7).astype(float)
    weights[0, 0] = 1.0
    return (lambda x: ops.cross_entropy(x, targets, weights)), [_u(rng, b, t, v) * 2]


CASES = {name[5:]: fn for name, fn in sorted(globals().items()) if name.startswith("case_")}
SHAPES_PER_PRIMITIVE = 5
