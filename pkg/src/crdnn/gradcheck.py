"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def relative_error(analytic: float, numeric: float, floor: float = 1e-12) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def central_difference(cost: Callable[[], float], array: np.ndarray, index, eps: float = 1e-5) -> float:
    """(J(p + eps) - J(p - eps)) / 2 eps for one entry of `array`, restored afterwards."""
    old = array[index]
    array[index] = old + eps
    plus = cost()
    array[index] = old - eps
    minus = cost()
    array[index] = old
    return (plus - minus) / (2.0 * eps)


def probe_gradients(
    cost: Callable[[], float],
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    n_probes: int,
    rng: np.random.Generator,
    eps: float = 1e-5,
) -> list[tuple[str, tuple, float, float, float]]:
    """Compare analytic and numeric derivatives at `n_probes` random entries.

    Probes are spread round-robin over the parameter tensors so every tensor
    is hit. Returns (name, index, analytic, numeric, relative error) rows.
    """
    names = list(params)
    rows = []
    for k in range(n_probes):
        name = names[k % len(names)]
        p = params[name]
        index = tuple(int(rng.integers(0, s)) for s in p.shape)
        num = central_difference(cost, p, index, eps)
        ana = float(grads[name][index])
        rows.append((name, index, ana, num, relative_error(ana, num)))
    return rows
