"""Dense float64 array helpers used by the optimizers and the toy model.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64;
the helpers here validate shapes and finiteness and keep every reduction on
a fixed evaluation order so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError, InvalidValueError

Matrix = np.ndarray
Vector = np.ndarray


def as_matrix(data, *, name: str = "matrix") -> Matrix:
    a = np.array(data, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} is empty (shape {a.shape})")
    return a


def as_vector(data, *, name: str = "vector") -> Vector:
    a = np.array(data, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionError(f"{name} is empty")
    return a


def check_finite(a: np.ndarray, *, name: str = "input") -> None:
    if not np.all(np.isfinite(a)):
        raise InvalidValueError(f"{name} contains non-finite entries")


def sign(x: np.ndarray) -> np.ndarray:
    """Entrywise sign with ``sign(0) == 0``."""
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, name="sign input")
    return np.sign(x)


def col_abs_mean(g: Matrix) -> Vector:
    """Mean of ``|g|`` down each column: length ``g.shape[1]``."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise DimensionError(f"col_abs_mean needs a non-empty 2-D array, got shape {g.shape}")
    return np.abs(g).sum(axis=0) / g.shape[0]


def rms(v: Vector) -> float:
    """Root mean square, computed on the max-normalised vector so that
    magnitudes near the float64 limits neither overflow nor underflow."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"rms needs a non-empty 1-D array, got shape {v.shape}")
    peak = float(np.max(np.abs(v)))
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    u = v / peak
    return peak * float(np.sqrt(np.mean(u * u)))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def elementwise(a: np.ndarray, b: np.ndarray, op: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return op(a, b)


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) * float(c)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical seeds give identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))
