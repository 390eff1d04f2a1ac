"""Desk-scale tied-embedding language model on a Zipfian token stream.

Each example is a (context, target) pair. The context token is drawn from a
Zipf law over the vocabulary, so a handful of embedding rows receive most of
the lookup gradient while the output projection (which shares the same
matrix) touches every row on every step. The target is the context shifted
by a second Zipf-distributed offset, which gives the model something to
learn that depends on the context.

Parameters, keyed by slot name:

* ``embedding``  ``E``, V x d, used for both lookup and output projection
* ``mixer``      ``W``, d x d, initialised to the identity (optional)
* ``bias``       ``b``, length V, initialised to zero (optional)

Logits for context ``x`` are ``E @ (W.T @ E[x]) + b``; with the mixer and
bias at their initial values this is ``E @ E[x]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .damper import ParamRole
from .errors import ConfigurationError, UsageError
from .numerics import check_finite


class ZipfSampler:
    """Draws token ids ``0..V-1`` with ``P(id k-1) ∝ 1 / k**exponent``."""

    def __init__(self, V: int, exponent: float = 1.0, rng: np.random.Generator | None = None):
        if V < 1:
            raise ConfigurationError(f"vocabulary size must be >= 1, got {V}")
        if exponent < 0:
            raise ConfigurationError(f"Zipf exponent must be >= 0, got {exponent}")
        self.V = int(V)
        self.exponent = float(exponent)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        weights = 1.0 / np.arange(1, self.V + 1, dtype=np.float64) ** self.exponent
        self.probs = weights / weights.sum()
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    def draw(self, n: int) -> np.ndarray:
        u = self.rng.random(n)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class Batch:
    contexts: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.contexts.shape != self.targets.shape or self.contexts.ndim != 1:
            raise UsageError("contexts and targets must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return int(self.contexts.shape[0])


def sample_batch(sampler: ZipfSampler, B: int) -> Batch:
    if B < 1:
        raise UsageError(f"batch size must be >= 1, got {B}")
    contexts = sampler.draw(B)
    offsets = sampler.draw(B)
    return Batch(contexts, (contexts + offsets) % sampler.V)


@dataclass
class ToyLM:
    E: np.ndarray
    W: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def V(self) -> int:
        return self.E.shape[0]

    @property
    def d(self) -> int:
        return self.E.shape[1]

    @classmethod
    def init(cls, V: int, d: int, rng: np.random.Generator, mixer: bool = True, bias: bool = True) -> "ToyLM":
        """Gaussian embedding with std ``1/sqrt(d)``, identity mixer, zero bias."""
        if V < 1 or d < 1:
            raise ConfigurationError(f"model dims must be >= 1, got V={V}, d={d}")
        E = rng.normal(0.0, 1.0 / math.sqrt(d), size=(V, d))
        return cls(E, np.eye(d) if mixer else None, np.zeros(V) if bias else None)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {"embedding": self.E}
        if self.W is not None:
            out["mixer"] = self.W
        if self.b is not None:
            out["bias"] = self.b
        return out

    def roles(self) -> list[tuple[str, np.ndarray, ParamRole]]:
        roles = {"embedding": ParamRole.EMBEDDING_2D, "mixer": ParamRole.DENSE_2D, "bias": ParamRole.ONE_D}
        return [(name, p, roles[name]) for name, p in self.parameters().items()]

    def with_parameters(self, params: dict[str, np.ndarray]) -> "ToyLM":
        return ToyLM(params["embedding"], params.get("mixer"), params.get("bias"))

    def copy(self) -> "ToyLM":
        return ToyLM(*(None if p is None else p.copy() for p in (self.E, self.W, self.b)))


def _check_batch(model: ToyLM, batch: Batch) -> None:
    for ids in (batch.contexts, batch.targets):
        if ids.size and (ids.min() < 0 or ids.max() >= model.V):
            raise UsageError(f"token id outside [0, {model.V})")
    for name, p in model.parameters().items():
        check_finite(p, name=f"parameter {name!r}")


def _logits(model: ToyLM, contexts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = model.E[contexts]
    z = h if model.W is None else h @ model.W
    logits = z @ model.E.T
    if model.b is not None:
        logits = logits + model.b
    return h, z, logits


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy with max-subtracted log-sum-exp."""
    shift = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shift).sum(axis=1))
    return float(np.mean(lse - shift[np.arange(len(targets)), targets]))


def forward_loss(model: ToyLM, batch: Batch) -> float:
    _check_batch(model, batch)
    _, _, logits = _logits(model, batch.contexts)
    return cross_entropy(logits, batch.targets)


def backward(model: ToyLM, batch: Batch) -> dict[str, np.ndarray]:
    """Exact gradient of the mean cross-entropy for every parameter.

    The embedding gradient sums the projection term (every row) and the
    lookup term (only rows of context tokens in the batch).
    """
    _check_batch(model, batch)
    B = len(batch)
    h, z, logits = _logits(model, batch.contexts)
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(B), batch.targets] -= 1.0
    dlogits = p / B

    grads = {}
    dE = dlogits.T @ z
    dz = dlogits @ model.E
    if model.W is not None:
        grads["mixer"] = h.T @ dz
        dh = dz @ model.W.T
    else:
        dh = dz
    np.add.at(dE, batch.contexts, dh)
    grads["embedding"] = dE
    if model.b is not None:
        grads["bias"] = dlogits.sum(axis=0)
    return {name: grads[name] for name in model.parameters()}


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Entry-by-entry central-difference gradient of a scalar function."""
    if not h > 0:
        raise UsageError(f"step h must be positive, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def fd_gradient(model: ToyLM, batch: Batch, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference estimate of :func:`backward`; for tests only."""
    params = {k: v.copy() for k, v in model.parameters().items()}
    out = {}
    for name, p in params.items():

        def f(x, name=name):
            return forward_loss(model.with_parameters({**params, name: x}), batch)

        out[name] = central_difference(f, p, h)
    return out
