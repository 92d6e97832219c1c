"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import FinmlmError


def pack_arrays(arrays: dict[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    """Flatten a name->array dict into one vector plus a shape manifest."""
    manifest = [(name, arrays[name].shape) for name in sorted(arrays)]
    flat = np.concatenate([arrays[name].ravel() for name, _ in manifest]) if manifest else np.zeros(0)
    return flat, manifest


def unpack_arrays(flat: np.ndarray, manifest: list[tuple[str, tuple[int, ...]]]) -> dict[str, np.ndarray]:
    out = {}
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape)) if shape else 1
        out[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return out


def grad_check(
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn maps a flat parameter vector to (loss, gradient). The relative
    error per coordinate is |a - n| / max(|a|, |n|, 1e-8). Non-finite losses
    at perturbed points are reported with their coordinates.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    _, analytic = loss_fn(x0)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x0.shape:
        raise FinmlmError(
            f"gradient shape {analytic.shape} does not match parameters {x0.shape}"
        )
    numeric = np.zeros_like(x0)
    bad: list[int] = []
    for i in range(x0.size):
        x = x0.copy()
        x.flat[i] += step
        up, _ = loss_fn(x)
        x.flat[i] -= 2 * step
        down, _ = loss_fn(x)
        if not (math.isfinite(up) and math.isfinite(down)):
            bad.append(i)
            continue
        numeric.flat[i] = (up - down) / (2 * step)
    if bad:
        raise FinmlmError(f"non-finite loss at perturbed coordinates {bad[:10]}")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
