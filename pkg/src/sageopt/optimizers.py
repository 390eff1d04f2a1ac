"""Update rules (SAGE, Lion, AdamW, unit-norm SinkGD), the learning-rate
schedule, and the per-role hybrid dispatcher.

Every ``*_step`` function applies decoupled weight decay first, then the
gradient-based update, and returns the new parameter array. Optimizer state
objects are mutated in place.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import damper as dmp
from .damper import DamperState, ParamRole
from .errors import ConfigurationError, DimensionError, UnsupportedPolicyError, UsageError
from .numerics import check_finite, sign


# --------------------------------------------------------------------------
# configs and state


def _check_beta(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ConfigurationError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class SageConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    # "dimension": instantaneous damper from s_t (one value per column);
    # "element": from |g| entrywise, for 2-D parameters only
    instant: str = "dimension"

    def __post_init__(self):
        _check_beta("beta1", self.beta1)
        _check_beta("beta2", self.beta2)
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.instant not in ("dimension", "element"):
            raise ConfigurationError(f"instant must be 'dimension' or 'element', got {self.instant!r}")


@dataclass(frozen=True)
class LionConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01

    def __post_init__(self):
        _check_beta("beta1", self.beta1)
        _check_beta("beta2", self.beta2)
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01
    epsilon: float = 1e-8

    def __post_init__(self):
        _check_beta("beta1", self.beta1)
        _check_beta("beta2", self.beta2)
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SinkGDConfig:
    alpha: float = 10.0
    iterations: int = 3
    epsilon: float = 1e-12
    weight_decay: float = 0.01

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigurationError(f"iterations must be an integer >= 1, got {self.iterations}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class SageState:
    M: np.ndarray
    damper: DamperState

    @classmethod
    def zeros(cls, shape, cfg: SageConfig = SageConfig()) -> "SageState":
        shape = tuple(shape)
        d = shape[-1] if len(shape) == 2 else shape[0]
        return cls(np.zeros(shape), DamperState.zeros(d, cfg.beta2, cfg.epsilon))


@dataclass
class LionState:
    M: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "LionState":
        return cls(np.zeros(shape))


@dataclass
class AdamWState:
    M: np.ndarray
    V: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamWState":
        return cls(np.zeros(shape), np.zeros(shape))


# --------------------------------------------------------------------------
# update rules


def weight_decay(theta: np.ndarray, eta_t: float, w: float) -> np.ndarray:
    """Decoupled decay ``theta * (1 - eta_t * w)``."""
    factor = 1.0 - eta_t * w
    if factor <= 0.0:
        raise ConfigurationError(f"eta*w = {eta_t * w} >= 1 makes the decay multiplier non-positive")
    return np.asarray(theta, dtype=np.float64) * factor


def _conform(theta: np.ndarray, g: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape or M.shape != g.shape:
        raise DimensionError(f"shape mismatch: theta {theta.shape}, g {g.shape}, state {M.shape}")
    check_finite(g, name="gradient")
    return theta, g


def sage_direction(
    g: np.ndarray,
    state: SageState,
    cfg: SageConfig,
    role: ParamRole,
    damping: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Compute the bounded SAGE update and advance the optimizer state.

    Returns ``(U, H)`` where ``U = sign(beta1*M + (1-beta1)*g) * H``; for a
    2-D parameter ``H`` is broadcast across rows. With ``damping=False`` the
    scale is fixed at one (plain Lion) and ``H`` is returned as ``None``.
    """
    role = ParamRole(role)
    if role is ParamRole.DENSE_2D:
        raise UsageError("SAGE expects an embedding or 1-D parameter, not a dense 2-D weight")
    H = None
    if damping:
        s_t = dmp.compute_s(g, role)
        S_hat = dmp.update_state(state.damper, s_t)
        H = dmp.compute_scale(S_hat, s_t, state.damper.epsilon)
        if cfg.instant == "element" and g.ndim == 2:
            H_ema = np.minimum(dmp._relative_damper(S_hat, state.damper.epsilon), 1.0)
            H = np.minimum(H_ema[None, :], dmp.element_instant_scale(g, state.damper.epsilon))
    C = sign(cfg.beta1 * state.M + (1.0 - cfg.beta1) * g)
    U = C if H is None else C * H
    state.M = cfg.beta2 * state.M + (1.0 - cfg.beta2) * g
    return U, H


def sage_step(
    theta: np.ndarray,
    g: np.ndarray,
    state: SageState,
    cfg: SageConfig,
    eta_t: float,
    role: ParamRole,
    damping: bool = True,
) -> np.ndarray:
    theta, g = _conform(theta, g, state.M)
    theta = weight_decay(theta, eta_t, cfg.weight_decay)
    U, _ = sage_direction(g, state, cfg, role, damping)
    return theta - eta_t * U


def lion_direction(g: np.ndarray, state: LionState, cfg: LionConfig) -> np.ndarray:
    C = sign(cfg.beta1 * state.M + (1.0 - cfg.beta1) * g)
    state.M = cfg.beta2 * state.M + (1.0 - cfg.beta2) * g
    return C


def lion_step(theta: np.ndarray, g: np.ndarray, state: LionState, cfg: LionConfig, eta_t: float) -> np.ndarray:
    theta, g = _conform(theta, g, state.M)
    theta = weight_decay(theta, eta_t, cfg.weight_decay)
    return theta - eta_t * lion_direction(g, state, cfg)


def adamw_direction(g: np.ndarray, state: AdamWState, cfg: AdamWConfig) -> np.ndarray:
    state.t += 1
    state.M = cfg.beta1 * state.M + (1.0 - cfg.beta1) * g
    state.V = cfg.beta2 * state.V + (1.0 - cfg.beta2) * (g * g)
    m_hat = state.M / (1.0 - cfg.beta1**state.t)
    v_hat = state.V / (1.0 - cfg.beta2**state.t)
    return m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def adamw_step(theta: np.ndarray, g: np.ndarray, state: AdamWState, cfg: AdamWConfig, eta_t: float) -> np.ndarray:
    theta, g = _conform(theta, g, state.M)
    check_finite(theta, name="parameter")
    theta = weight_decay(theta, eta_t, cfg.weight_decay)
    return theta - eta_t * adamw_direction(g, state, cfg)


def unit_row_normalize(g: np.ndarray, iterations: int = 3, epsilon: float = 1e-12) -> np.ndarray:
    """Alternate column and row L2 normalisation, finishing on rows.

    The short side is the row axis: a tall input is transposed, normalised
    and transposed back. Rows (or columns) whose norm is at most ``epsilon``
    after rescaling by the largest entry are set to zero. With a single
    row the column pass would reduce every entry to its sign, so it is
    skipped there.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise UsageError(f"SinkGD needs a 2-D gradient, got shape {g.shape}")
    check_finite(g, name="gradient")
    tall = g.shape[0] > g.shape[1]
    U = g.T if tall else g
    peak = float(np.max(np.abs(U))) if U.size else 0.0
    if peak == 0.0:
        return np.zeros_like(g)
    U = U / peak

    def normalize(a: np.ndarray, axis: int) -> np.ndarray:
        n = np.sqrt(np.sum(a * a, axis=axis, keepdims=True))
        live = n > epsilon
        return np.where(live, a / np.where(live, n, 1.0), 0.0)

    for _ in range(int(iterations)):
        if U.shape[0] > 1:
            U = normalize(U, axis=0)
        U = normalize(U, axis=1)
    return U.T if tall else U


def sinkgd_direction(g: np.ndarray, cfg: SinkGDConfig) -> np.ndarray:
    return cfg.alpha * unit_row_normalize(g, cfg.iterations, cfg.epsilon)


def sinkgd_step(theta: np.ndarray, g: np.ndarray, cfg: SinkGDConfig, eta_t: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise UsageError(f"SinkGD needs a 2-D gradient, got shape {g.shape}")
    if theta.shape != g.shape:
        raise DimensionError(f"shape mismatch: theta {theta.shape}, g {g.shape}")
    theta = weight_decay(theta, eta_t, cfg.weight_decay)
    return theta - eta_t * sinkgd_direction(g, cfg)


# --------------------------------------------------------------------------
# learning-rate schedule


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to ``eta_max`` then cosine decay to ``eta_min``."""

    eta_max: float
    total_steps: int
    warmup_fraction: float = 0.1
    eta_min: float = 0.0

    def __post_init__(self):
        if not self.eta_max > 0:
            raise ConfigurationError(f"eta_max must be positive, got {self.eta_max}")
        if self.total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigurationError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if not 0.0 <= self.eta_min <= self.eta_max:
            raise ConfigurationError(f"eta_min must lie in [0, eta_max], got {self.eta_min}")

    @property
    def warmup_steps(self) -> int:
        return math.ceil(self.warmup_fraction * self.total_steps)


def lr_at(schedule: LrSchedule, t: int) -> float:
    if not 1 <= t <= schedule.total_steps:
        raise UsageError(f"step {t} outside [1, {schedule.total_steps}]")
    warm = schedule.warmup_steps
    if t <= warm:
        return schedule.eta_max * t / warm
    progress = (t - warm) / (schedule.total_steps - warm)
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return schedule.eta_min + (schedule.eta_max - schedule.eta_min) * cosine


# --------------------------------------------------------------------------
# hybrid dispatch


class Algorithm(str, enum.Enum):
    SAGE = "SAGE"
    LION = "Lion"
    ADAMW = "AdamW"
    SINKGD = "SinkGD"


class Policy(str, enum.Enum):
    SAGE_HYBRID = "SAGE-Hybrid"
    SINKGD_HYBRID = "SinkGD-Hybrid"
    LION_HYBRID = "Lion-Hybrid"
    SAGE_PURE = "SAGE-Pure"
    SINKGD_PURE = "SinkGD-Pure"
    LION = "Lion"
    ADAMW = "AdamW"
    APOLLO = "APOLLO"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        for p in cls:
            if p.value.lower() == str(name).strip().lower():
                return p
        known = ", ".join(p.value for p in cls if p is not cls.APOLLO)
        raise UsageError(f"unknown policy {name!r} (known: {known})")


_ASSIGNMENT = {
    Policy.SAGE_HYBRID: {
        ParamRole.EMBEDDING_2D: Algorithm.SAGE,
        ParamRole.ONE_D: Algorithm.SAGE,
        ParamRole.DENSE_2D: Algorithm.SINKGD,
    },
    Policy.SINKGD_HYBRID: {
        ParamRole.EMBEDDING_2D: Algorithm.ADAMW,
        ParamRole.ONE_D: Algorithm.ADAMW,
        ParamRole.DENSE_2D: Algorithm.SINKGD,
    },
    Policy.LION_HYBRID: {
        ParamRole.EMBEDDING_2D: Algorithm.LION,
        ParamRole.ONE_D: Algorithm.ADAMW,
        ParamRole.DENSE_2D: Algorithm.SINKGD,
    },
    Policy.SAGE_PURE: dict.fromkeys(ParamRole, Algorithm.SAGE),
    Policy.SINKGD_PURE: {
        ParamRole.EMBEDDING_2D: Algorithm.SINKGD,
        ParamRole.ONE_D: Algorithm.ADAMW,
        ParamRole.DENSE_2D: Algorithm.SINKGD,
    },
    Policy.LION: dict.fromkeys(ParamRole, Algorithm.LION),
    Policy.ADAMW: dict.fromkeys(ParamRole, Algorithm.ADAMW),
}


def hybrid_assign(role: ParamRole, policy: Policy | str, sage_1d: str = "sage") -> Algorithm:
    """Pick the update rule for one parameter role under a policy.

    ``sage_1d="adamw"`` selects the SAGE-Hybrid variant that keeps AdamW on
    1-D parameters.
    """
    role = ParamRole(role)
    policy = policy if isinstance(policy, Policy) else Policy.parse(policy)
    if policy is Policy.APOLLO:
        raise UnsupportedPolicyError("APOLLO is not implemented")
    if sage_1d not in ("sage", "adamw"):
        raise ConfigurationError(f"sage_1d must be 'sage' or 'adamw', got {sage_1d!r}")
    if policy is Policy.SAGE_HYBRID and role is ParamRole.ONE_D and sage_1d == "adamw":
        return Algorithm.ADAMW
    return _ASSIGNMENT[policy][role]


@dataclass
class OptimizerSlot:
    name: str
    param: np.ndarray
    role: ParamRole
    algorithm: Algorithm
    state: SageState | LionState | AdamWState | None


@dataclass
class SlotReport:
    name: str
    algorithm: Algorithm
    update_inf_norm: float
    H: np.ndarray | None = None


@dataclass
class StepReport:
    t: int
    eta: float
    slots: list[SlotReport] = field(default_factory=list)

    def bounded_inf_norm(self) -> float | None:
        """Largest ``||U||_inf`` over SAGE and Lion slots (``None`` if none)."""
        norms = [s.update_inf_norm for s in self.slots if s.algorithm in (Algorithm.SAGE, Algorithm.LION)]
        return max(norms) if norms else None


@dataclass
class HybridOptimizer:
    """Role-based dispatcher over named parameter slots with a shared schedule.

    Parameters live in ``slots``; ``step`` replaces each ``slot.param`` with
    its updated array. All slots share one step counter and one learning
    rate per step.
    """

    slots: list[OptimizerSlot]
    schedule: LrSchedule
    policy: Policy = Policy.SAGE_HYBRID
    sage: SageConfig = field(default_factory=SageConfig)
    lion: LionConfig = field(default_factory=LionConfig)
    adamw: AdamWConfig = field(default_factory=AdamWConfig)
    sinkgd: SinkGDConfig = field(default_factory=SinkGDConfig)
    t: int = 0

    @classmethod
    def build(
        cls,
        params: Sequence[tuple[str, np.ndarray, ParamRole]],
        policy: Policy | str,
        schedule: LrSchedule,
        sage: SageConfig = SageConfig(),
        lion: LionConfig = LionConfig(),
        adamw: AdamWConfig = AdamWConfig(),
        sinkgd: SinkGDConfig = SinkGDConfig(),
        sage_1d: str = "sage",
    ) -> "HybridOptimizer":
        policy = policy if isinstance(policy, Policy) else Policy.parse(policy)
        slots = []
        for name, p, role in params:
            role = ParamRole(role)
            p = np.array(p, dtype=np.float64)
            if role is ParamRole.ONE_D and p.ndim != 1:
                raise DimensionError(f"slot {name!r}: 1-D role but shape {p.shape}")
            if role is not ParamRole.ONE_D and p.ndim != 2:
                raise DimensionError(f"slot {name!r}: 2-D role but shape {p.shape}")
            algo = hybrid_assign(role, policy, sage_1d)
            if algo is Algorithm.SAGE:
                state = SageState.zeros(p.shape, sage)
            elif algo is Algorithm.LION:
                state = LionState.zeros(p.shape)
            elif algo is Algorithm.ADAMW:
                state = AdamWState.zeros(p.shape)
            else:
                state = None
            slots.append(OptimizerSlot(name, p, role, algo, state))
        return cls(slots, schedule, policy, sage, lion, adamw, sinkgd)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {s.name: s.param for s in self.slots}

    def step(self, grads: Mapping[str, np.ndarray]) -> StepReport:
        missing = [s.name for s in self.slots if s.name not in grads]
        if missing:
            raise UsageError(f"missing gradient for slot(s): {', '.join(missing)}")
        t = self.t + 1
        eta = lr_at(self.schedule, t) if self.slots else 0.0
        report = StepReport(t, eta)
        for slot in self.slots:
            g = np.asarray(grads[slot.name], dtype=np.float64)
            if g.shape != slot.param.shape:
                raise DimensionError(f"slot {slot.name!r}: gradient {g.shape} vs parameter {slot.param.shape}")
            check_finite(g, name=f"gradient for {slot.name!r}")
            H = None
            if slot.algorithm is Algorithm.SAGE:
                theta = weight_decay(slot.param, eta, self.sage.weight_decay)
                # dense weights under SAGE-Pure take the 2-D reduction branch
                branch = ParamRole.ONE_D if g.ndim == 1 else ParamRole.EMBEDDING_2D
                U, H = sage_direction(g, slot.state, self.sage, branch)
            elif slot.algorithm is Algorithm.LION:
                theta = weight_decay(slot.param, eta, self.lion.weight_decay)
                U = lion_direction(g, slot.state, self.lion)
            elif slot.algorithm is Algorithm.ADAMW:
                theta = weight_decay(slot.param, eta, self.adamw.weight_decay)
                U = adamw_direction(g, slot.state, self.adamw)
            else:
                if g.ndim != 2:
                    raise UsageError(f"slot {slot.name!r}: SinkGD needs a 2-D parameter")
                theta = weight_decay(slot.param, eta, self.sinkgd.weight_decay)
                U = sinkgd_direction(g, self.sinkgd)
            slot.param = theta - eta * U
            norm = float(np.max(np.abs(U))) if U.size else 0.0
            report.slots.append(SlotReport(slot.name, slot.algorithm, norm, None if H is None else H.copy()))
        self.t = t
        return report
