"""SAGE's O(d) adaptive scale.

The damper keeps a single L1-EMA vector per parameter. Each step it reduces
the gradient to a non-negative signal ``s_t`` (column means of ``|g|`` for a
2-D parameter, ``|g|`` itself for a 1-D one), folds it into the EMA, and turns
the bias-corrected EMA plus the raw signal into a scale ``H`` with every
entry in ``[0, 1]``: dimensions louder than the layer RMS get damped, quiet
ones pass through at 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, InvalidValueError, UsageError
from .numerics import check_finite, col_abs_mean, rms

DEFAULT_EPSILON = 1e-8


class ParamRole(str, enum.Enum):
    EMBEDDING_2D = "embedding2d"
    DENSE_2D = "dense2d"
    ONE_D = "oned"


@dataclass
class DamperState:
    """L1-EMA ``S`` of the per-dimension gradient signal plus its step count."""

    S: np.ndarray
    t: int = 0
    beta2: float = 0.99
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        if not 0.0 < self.beta2 < 1.0:
            raise ConfigurationError(f"beta2 must lie in (0, 1), got {self.beta2}")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.S.ndim != 1:
            raise DimensionError(f"damper state must be 1-D, got shape {self.S.shape}")

    @classmethod
    def zeros(cls, d: int, beta2: float = 0.99, epsilon: float = DEFAULT_EPSILON) -> "DamperState":
        return cls(np.zeros(d), 0, beta2, epsilon)


def compute_s(g: np.ndarray, role: ParamRole) -> np.ndarray:
    """Reduce a gradient to the non-negative signal tracked by the damper."""
    role = ParamRole(role)
    g = np.asarray(g, dtype=np.float64)
    if role is ParamRole.DENSE_2D:
        raise UsageError("dense 2-D weights are not handled by the SAGE damper")
    check_finite(g, name="gradient")
    if role is ParamRole.EMBEDDING_2D:
        if g.ndim != 2:
            raise DimensionError(f"embedding gradient must be 2-D, got shape {g.shape}")
        return col_abs_mean(g)
    if g.ndim != 1 or g.size == 0:
        raise DimensionError(f"1-D gradient expected, got shape {g.shape}")
    return np.abs(g)


def update_state(state: DamperState, s_t: np.ndarray) -> np.ndarray:
    """Advance the EMA by one step and return the bias-corrected estimate."""
    s_t = np.asarray(s_t, dtype=np.float64)
    if s_t.shape != state.S.shape:
        raise DimensionError(f"signal length {s_t.shape} does not match state {state.S.shape}")
    check_finite(s_t, name="damper signal")
    if np.any(s_t < 0):
        raise InvalidValueError("damper signal must be non-negative")
    state.t += 1
    state.S = state.beta2 * state.S + (1.0 - state.beta2) * s_t
    return state.S / (1.0 - state.beta2**state.t)


def _relative_damper(x: np.ndarray, epsilon: float) -> np.ndarray:
    # all-zero signal: rms = 0, so the ratio is 0 and the update freezes
    return rms(x.ravel()) / (x + epsilon)


def compute_scale(S_hat: np.ndarray, s_t: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """``H = min(rms(S_hat)/(S_hat+eps), rms(s_t)/(s_t+eps), 1)`` entrywise."""
    S_hat = np.asarray(S_hat, dtype=np.float64)
    s_t = np.asarray(s_t, dtype=np.float64)
    if S_hat.ndim != 1 or S_hat.shape != s_t.shape or S_hat.size == 0:
        raise DimensionError(f"shape mismatch {S_hat.shape} vs {s_t.shape}")
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    for name, a in (("S_hat", S_hat), ("s_t", s_t)):
        check_finite(a, name=name)
        if np.any(a < 0):
            raise InvalidValueError(f"{name} must be non-negative")
    d_ema = _relative_damper(S_hat, epsilon)
    d_inst = _relative_damper(s_t, epsilon)
    return np.minimum(np.minimum(d_ema, d_inst), 1.0)


def element_instant_scale(g: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Per-element instantaneous damper ``rms(|g|)/(|g_ij|+eps)``, clipped at 1.

    Alternative to the per-dimension instantaneous term for 2-D parameters;
    only used when a SAGE config selects ``instant="element"``.
    """
    a = np.abs(np.asarray(g, dtype=np.float64))
    check_finite(a, name="gradient")
    return np.minimum(_relative_damper(a, epsilon), 1.0)
