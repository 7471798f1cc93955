"""Independent oracles shared by the test modules.

Everything here is deliberately written as straight-line code, separate from
the library implementations it checks.
"""

import numpy as np


def central_differences(value_fn, params: dict, coords, step: float = 1e-5):
    """Finite-difference gradients at selected (name, flat_index) coordinates.

    Bumps each coordinate in place, re-evaluates the loss and restores the
    value. The divisor uses the actually-represented step to avoid
    quantization bias.
    """
    out = {}
    for name, idx in coords:
        flat = params[name].reshape(-1)
        old = flat[idx]
        hi, lo = old + step, old - step
        flat[idx] = hi
        up = value_fn()
        flat[idx] = lo
        down = value_fn()
        flat[idx] = old
        out[(name, idx)] = (up - down) / (hi - lo)
    return out


def relative_error(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def sample_coordinates(params: dict, n: int, seed: int):
    """Random (name, flat_index) pairs spread over every parameter array."""
    g = np.random.default_rng(seed)
    names = sorted(params)
    coords = []
    # at least one coordinate from each array, remainder proportional
    for name in names:
        coords.append((name, int(g.integers(0, params[name].size))))
    while len(coords) < n:
        name = names[int(g.integers(0, len(names)))]
        coords.append((name, int(g.integers(0, params[name].size))))
    return coords[:n]


def brute_force_directed_edges(faces):
    """Edge incidence by explicit dict counting (topology oracle)."""
    directed = {}
    undirected = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            directed[(u, v)] = directed.get((u, v), 0) + 1
            key = (min(u, v), max(u, v))
            undirected[key] = undirected.get(key, 0) + 1
    return directed, undirected


def eq2_loss_scalar(d0, t, eps, expr, net, sched):
    """Straight-line evaluation of the noise-prediction objective.

    Computes the noisy input and the squared error sum with explicit loops,
    independently of the library's vectorized path.
    """
    import math

    from meshanim.network import ConditioningVector

    ab = 1.0
    for s in range(t):
        ab *= 1.0 - sched.beta[s]
    n = d0.shape[0]
    noisy = np.empty_like(d0)
    for v in range(n):
        for k in range(3):
            noisy[v, k] = math.sqrt(ab) * d0[v, k] + math.sqrt(1.0 - ab) * eps[v, k]
    eps_hat = net.predict(noisy, t, ConditioningVector(expression_stage=expr))
    total = 0.0
    for v in range(n):
        for k in range(3):
            diff = eps[v, k] - eps_hat[v, k]
            total += diff * diff
    return total


def max_consecutive_displacement(clip) -> float:
    """Largest per-vertex step between consecutive frames of a clip."""
    worst = 0.0
    for a, b in zip(clip.frames, clip.frames[1:]):
        worst = max(worst, float(np.linalg.norm(b.offsets - a.offsets, axis=1).max()))
    return worst
