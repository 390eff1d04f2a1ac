"""Training loop for the toy model: sample, forward, backward, hybrid step."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, InvalidValueError, UnsupportedPolicyError
from .optimizers import (
    AdamWConfig,
    Algorithm,
    HybridOptimizer,
    LionConfig,
    LrSchedule,
    Policy,
    SageConfig,
    SinkGDConfig,
)
from .runlog import COMPLETED, DIVERGED, RunLog
from .toymodel import ToyLM, ZipfSampler, backward, cross_entropy, forward_loss, sample_batch, _logits

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """One grid cell: a single (policy, lr, seed) run."""

    policy: str = "SAGE-Hybrid"
    lr: float = 1e-3
    seed: int = 0
    steps: int = 2000
    snapshot_every: int = 0
    vocab: int = 512
    dim: int = 32
    batch: int = 64
    zipf_exponent: float = 1.0
    mixer: bool = True
    bias: bool = True
    eval_size: int = 4096
    warmup_fraction: float = 0.1
    eta_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    alpha: float = 10.0
    sink_iterations: int = 3
    sink_epsilon: float = 1e-12
    instant: str = "dimension"
    sage_1d: str = "sage"

    def __post_init__(self):
        if Policy.parse(self.policy) is Policy.APOLLO:
            raise UnsupportedPolicyError("APOLLO is not implemented")
        if self.steps < 0:
            raise ConfigurationError(f"steps must be >= 0, got {self.steps}")
        if self.snapshot_every < 0:
            raise ConfigurationError(f"snapshot_every must be >= 0, got {self.snapshot_every}")
        for name in ("vocab", "dim", "batch", "eval_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        # constructing these validates the hyperparameters
        self.optimizer_configs()
        LrSchedule(self.lr, max(self.steps, 1), self.warmup_fraction, self.eta_min)

    def optimizer_configs(self) -> dict:
        return dict(
            sage=SageConfig(self.beta1, self.beta2, self.weight_decay, self.epsilon, self.instant),
            lion=LionConfig(self.beta1, self.beta2, self.weight_decay),
            adamw=AdamWConfig(self.beta1, self.beta2, self.weight_decay, self.epsilon),
            sinkgd=SinkGDConfig(self.alpha, self.sink_iterations, self.sink_epsilon, self.weight_decay),
        )

    def as_dict(self) -> dict:
        return asdict(self)


def _eval_loss(model: ToyLM, contexts: np.ndarray, targets: np.ndarray) -> float:
    _, _, logits = _logits(model, contexts)
    return cross_entropy(logits, targets)


def train_run(cfg: TrainConfig) -> RunLog:
    """Train the toy model under ``cfg`` and return its run log.

    Three independent random streams are derived from the seed: model
    initialisation, training batches and a fixed evaluation set. A
    non-finite loss or parameter ends the run with status ``diverged``.
    """
    runlog = RunLog.new(cfg.as_dict())
    init_ss, train_ss, eval_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = ToyLM.init(cfg.vocab, cfg.dim, np.random.default_rng(init_ss), cfg.mixer, cfg.bias)
    sampler = ZipfSampler(cfg.vocab, cfg.zipf_exponent, np.random.default_rng(train_ss))
    eval_sampler = ZipfSampler(cfg.vocab, cfg.zipf_exponent, np.random.default_rng(eval_ss))
    eval_batch = sample_batch(eval_sampler, cfg.eval_size)

    runlog.add_eval(0, _eval_loss(model, eval_batch.contexts, eval_batch.targets))
    if cfg.steps == 0:
        runlog.finish(COMPLETED, 0, runlog.initial_loss)
        return runlog

    schedule = LrSchedule(cfg.lr, cfg.steps, cfg.warmup_fraction, cfg.eta_min)
    opt = HybridOptimizer.build(model.roles(), cfg.policy, schedule, sage_1d=cfg.sage_1d, **cfg.optimizer_configs())

    for t in range(1, cfg.steps + 1):
        batch = sample_batch(sampler, cfg.batch)
        try:
            # overflow is detected below and recorded as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                loss = forward_loss(model, batch)
                if not math.isfinite(loss):
                    raise InvalidValueError("non-finite loss")
                grads = backward(model, batch)
                report = opt.step(grads)
        except InvalidValueError as exc:
            log.info("run diverged at step %d: %s", t, exc)
            runlog.add_step(t, float("nan"), float("nan"), None, {}, status=DIVERGED)
            runlog.finish(DIVERGED, t - 1, None)
            return runlog
        model = model.with_parameters(opt.params)
        runlog.add_step(
            t,
            loss,
            report.eta,
            report.bounded_inf_norm(),
            {s.name: s.update_inf_norm for s in report.slots},
        )
        if cfg.snapshot_every and t % cfg.snapshot_every == 0:
            for s in report.slots:
                if s.algorithm is Algorithm.SAGE and s.H is not None:
                    g = grads[s.name]
                    H = s.H if s.H.ndim == 1 else s.H.mean(axis=0)
                    runlog.add_snapshot(t, s.name, H, np.var(g, axis=0) if g.ndim == 2 else None)

    with np.errstate(over="ignore", invalid="ignore"):
        final = _eval_loss(model, eval_batch.contexts, eval_batch.targets)
    if not (math.isfinite(final) and all(np.all(np.isfinite(p)) for p in model.parameters().values())):
        runlog.finish(DIVERGED, cfg.steps, None)
        return runlog
    runlog.add_eval(cfg.steps, final)
    runlog.finish(COMPLETED, cfg.steps, final)
    return runlog
