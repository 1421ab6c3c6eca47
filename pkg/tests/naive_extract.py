"""Loop-by-loop reference for the extraction strategies (test oracle only)."""

import math

EPS = 1e-5


def layer_norm_row(row, center_only=False):
    n = len(row)
    mu = sum(row) / n
    centered = [v - mu for v in row]
    if center_only:
        return centered
    var = sum(c * c for c in centered) / n
    return [c / math.sqrt(var + EPS) for c in centered]


def naive_extract(states, variant, layer=None, center_only=False):
    """states: nested lists [L+1][T][D] of floats."""
    n_layers = len(states)
    T = len(states[0])
    D = len(states[0][0])
    if variant == "last":
        return [[states[n_layers - 1][t][d] for d in range(D)] for t in range(T)]
    if variant == "single":
        return [[states[layer][t][d] for d in range(D)] for t in range(T)]
    out = [[0.0] * D for _ in range(T)]
    for t in range(T):
        for l in range(n_layers):
            row = states[l][t]
            if variant == "normmean":
                row = layer_norm_row(row, center_only)
            for d in range(D):
                out[t][d] += row[d]
        for d in range(D):
            out[t][d] /= n_layers
    return out


def naive_pool(tokens, mask, kind):
    valid = [t for t, m in enumerate(mask) if m]
    D = len(tokens[0])
    if kind == "lastpool":
        return list(tokens[valid[-1]])
    return [sum(tokens[t][d] for t in valid) / len(valid) for d in range(D)]
