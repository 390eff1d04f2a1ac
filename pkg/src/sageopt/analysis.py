"""Optimizer-state memory accounting, effective throughput, and tools for
inspecting the trajectory of SAGE's adaptive scale (PCA, heatmap tables).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .damper import ParamRole
from .errors import DimensionError, UsageError
from .optimizers import Algorithm, Policy, hybrid_assign
from .runlog import RunLog

GIB = 2**30


# --------------------------------------------------------------------------
# memory


@dataclass(frozen=True)
class ModelDims:
    """Parameter tensor shapes of a decoder-only model.

    ``dense_shapes`` lists every 2-D weight other than the embedding;
    ``one_d_sizes`` every bias/norm vector. With ``tied=False`` the output
    head is counted as a second embedding-sized matrix.
    """

    vocab: int
    hidden: int
    dense_shapes: tuple[tuple[int, int], ...] = ()
    one_d_sizes: tuple[int, ...] = ()
    tied: bool = True

    def __post_init__(self):
        if self.vocab < 1 or self.hidden < 1:
            raise DimensionError("vocab and hidden must be >= 1")

    @classmethod
    def llama(
        cls,
        vocab: int,
        hidden: int,
        intermediate: int,
        layers: int,
        heads: int,
        kv_heads: int,
        tied: bool = True,
    ) -> "ModelDims":
        head_dim = hidden // heads
        kv = kv_heads * head_dim
        per_layer = [
            (hidden, hidden),  # q
            (kv, hidden),  # k
            (kv, hidden),  # v
            (hidden, hidden),  # o
            (intermediate, hidden),  # gate
            (intermediate, hidden),  # up
            (hidden, intermediate),  # down
        ]
        dense = tuple(s for _ in range(layers) for s in per_layer)
        one_d = tuple([hidden] * (2 * layers + 1))
        return cls(vocab, hidden, dense, one_d, tied)

    @property
    def embedding_params(self) -> int:
        return self.vocab * self.hidden * (1 if self.tied else 2)

    @property
    def total_params(self) -> int:
        return self.embedding_params + sum(m * n for m, n in self.dense_shapes) + sum(self.one_d_sizes)

    def tensors(self) -> list[tuple[ParamRole, tuple[int, ...]]]:
        out = [(ParamRole.EMBEDDING_2D, (self.vocab, self.hidden))]
        if not self.tied:
            out.append((ParamRole.EMBEDDING_2D, (self.vocab, self.hidden)))
        out += [(ParamRole.DENSE_2D, s) for s in self.dense_shapes]
        out += [(ParamRole.ONE_D, (n,)) for n in self.one_d_sizes]
        return out


# model configurations from the LLaMA-style runs (tied embeddings)
PRESETS = {
    "270M": dict(vocab=128256, hidden=1024, intermediate=2816, layers=13, heads=16, kv_heads=2),
    "0.6B": dict(vocab=128256, hidden=1536, intermediate=4224, layers=16, heads=24, kv_heads=3),
    "1.3B": dict(vocab=128256, hidden=2048, intermediate=5632, layers=24, heads=32, kv_heads=4),
}


def preset_dims(name: str) -> ModelDims:
    try:
        return ModelDims.llama(**PRESETS[name])
    except KeyError:
        raise UsageError(f"unknown model preset {name!r} (known: {', '.join(PRESETS)})") from None


@dataclass(frozen=True)
class MemoryModel:
    bytes_per_state_element: int = 4
    bytes_per_weight: int = 4

    def __post_init__(self):
        if self.bytes_per_state_element < 1 or self.bytes_per_weight < 1:
            raise UsageError("byte widths must be positive")


def _state_elements(algo: Algorithm, shape: tuple[int, ...]) -> int:
    n = math.prod(shape)
    if algo is Algorithm.ADAMW:
        return 2 * n
    if algo is Algorithm.LION:
        return n
    if algo is Algorithm.SAGE:
        return n + shape[-1]  # momentum + per-column (or per-element) EMA
    return 0


def state_elements(policy: Policy | str, dims: ModelDims, sage_1d: str = "sage") -> int:
    policy = policy if isinstance(policy, Policy) else Policy.parse(policy)
    return sum(_state_elements(hybrid_assign(role, policy, sage_1d), shape) for role, shape in dims.tensors())


def count_states(policy: Policy | str, dims: ModelDims, mem: MemoryModel = MemoryModel(), sage_1d: str = "sage") -> int:
    """Optimizer-state bytes for ``policy`` on a model with ``dims``."""
    return state_elements(policy, dims, sage_1d) * mem.bytes_per_state_element


REPORT_POLICIES = (
    Policy.ADAMW,
    Policy.LION,
    Policy.SINKGD_HYBRID,
    Policy.SINKGD_PURE,
    Policy.SAGE_PURE,
    Policy.LION_HYBRID,
    Policy.SAGE_HYBRID,
)


def memory_report(dims: ModelDims, mem: MemoryModel = MemoryModel()) -> list[dict]:
    """Per-policy state and total (weights + grads + states) memory."""
    weights_and_grads = 2 * dims.total_params * mem.bytes_per_weight
    rows = []
    for policy in REPORT_POLICIES:
        b = count_states(policy, dims, mem)
        rows.append(
            {
                "policy": policy.value,
                "state_bytes": b,
                "state_gib": b / GIB,
                "total_gib": (b + weights_and_grads) / GIB,
            }
        )
    return rows


# --------------------------------------------------------------------------
# effective throughput


class _NotReached:
    def __repr__(self) -> str:
        return "NOT_REACHED"

    def __bool__(self) -> bool:
        return False


NOT_REACHED = _NotReached()


@dataclass(frozen=True)
class ThroughputInput:
    n_base: float
    t_o: float | None

    def __post_init__(self):
        if not self.n_base > 0:
            raise UsageError(f"n_base must be positive, got {self.n_base}")
        if self.t_o is not None and not self.t_o > 0:
            raise UsageError(f"t_o must be positive, got {self.t_o}")


def effective_throughput(inp: ThroughputInput):
    """Baseline tokens over the contender's time to the baseline's quality.

    Returns :data:`NOT_REACHED` when the contender never got there.
    """
    if inp.t_o is None:
        return NOT_REACHED
    return inp.n_base / inp.t_o


def steps_to_target(runlog: RunLog, target: float) -> int | None:
    """First step whose recorded loss is at or below ``target``."""
    for r in runlog.of_kind("step"):
        if r["loss"] is not None and r["loss"] <= target:
            return r["step"]
    return None


def throughput_from_logs(
    baseline: RunLog,
    contender: RunLog,
    tokens_per_step: float,
    seconds_per_step: float,
    target: float | None = None,
) -> tuple[ThroughputInput, object]:
    """Effective throughput of ``contender`` against ``baseline``.

    The target defaults to the baseline's final loss; ``N_base`` is the
    baseline's token count to first reach it and ``T_O`` the contender's
    step count to reach it times its wall-clock seconds per step.
    """
    if target is None:
        target = baseline.final_loss
        if target is None:
            raise UsageError("baseline log has no final loss")
    base_steps = steps_to_target(baseline, target)
    if base_steps is None:
        raise UsageError("baseline never reaches its own target")
    steps = steps_to_target(contender, target)
    inp = ThroughputInput(base_steps * tokens_per_step, None if steps is None else steps * seconds_per_step)
    return inp, effective_throughput(inp)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    steps: list[int]
    values: np.ndarray  # snapshots x d

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError("trajectory values must be a 2-D array (snapshots x d)")
        if len(self.steps) != self.values.shape[0]:
            raise DimensionError("one step index per snapshot required")
        if self.values.size and (np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values))):
            raise UsageError("trajectory entries must lie in [0, 1]")

    @classmethod
    def from_runlog(cls, runlog: RunLog, slot: str = "embedding") -> "Trajectory":
        steps, values = runlog.snapshots(slot)
        if not steps:
            raise UsageError(f"log has no adaptive-scale snapshots for slot {slot!r}")
        return cls(steps, values)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class PCAResult:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    eigenvalues: np.ndarray
    explained: np.ndarray  # fraction of total variance per component
    projections: np.ndarray  # snapshots x k


def top_eigenpairs(C: np.ndarray, k: int, tol: float = 1e-14, max_iter: int = 200_000) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``k`` eigenpairs of a symmetric PSD matrix by power iteration
    with deflation. Seed-free: the start vector is derived from ``C``."""
    d = C.shape[0]
    ramp = np.arange(1, d + 1, dtype=np.float64) / d
    vecs: list[np.ndarray] = []
    vals: list[float] = []
    A = C.copy()
    for _ in range(k):
        Q = np.array(vecs).reshape(-1, d)
        j = int(np.argmax(np.einsum("ij,ij->j", A, A)))
        v = A[:, j] + 1e-3 * ramp
        v = v - Q.T @ (Q @ v)
        if np.linalg.norm(v) < 1e-300:
            v = ramp - Q.T @ (Q @ ramp)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = A @ v
            w -= Q.T @ (Q @ w)
            nw = np.linalg.norm(w)
            if nw <= 1e-15 * max(1.0, np.abs(C).max()):
                lam = 0.0
                break
            w /= nw
            if w @ v < 0:
                w = -w
            done = np.linalg.norm(w - v) < tol
            v = w
            lam = float(v @ A @ v)
            if done:
                break
        vecs.append(v)
        vals.append(max(lam, 0.0))
        A = A - lam * np.outer(v, v)
    return np.array(vals), np.array(vecs).reshape(k, d)


def pca_topk(traj: Trajectory, k: int) -> PCAResult:
    n, d = traj.values.shape
    if n < 2:
        raise UsageError("PCA needs at least two snapshots")
    if not 1 <= k <= d:
        raise UsageError(f"k must lie in [1, {d}], got {k}")
    mean = traj.values.mean(axis=0)
    X = traj.values - mean
    C = X.T @ X / (n - 1)
    vals, comps = top_eigenpairs(C, k)
    total = float(np.trace(C))
    explained = vals / total if total > 0 else np.zeros_like(vals)
    return PCAResult(mean, comps, vals, explained, X @ comps.T)


def export_heatmap(traj: Trajectory, floor: float = 1e-12) -> list[tuple[int, int, float]]:
    """``(step, dim, value)`` rows with ``log10`` values rescaled to [0, 1].

    The scale is anchored so that an unclipped entry (1.0) maps to 1 and the
    run minimum maps to 0; an all-ones trajectory maps to all ones.
    """
    if len(traj) == 0 or traj.values.size == 0:
        raise UsageError("empty trajectory")
    logs = np.log10(np.maximum(traj.values, floor))
    lo = float(logs.min())
    norm = np.ones_like(logs) if lo == 0.0 else (logs - lo) / (0.0 - lo)
    return [(step, j, float(norm[i, j])) for i, step in enumerate(traj.steps) for j in range(norm.shape[1])]


# --------------------------------------------------------------------------
# tables


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def pca_tables(result: PCAResult, steps: Sequence[int]) -> tuple[str, str]:
    k, d = result.components.shape
    pcs = [f"pc{i + 1}" for i in range(k)]
    proj = to_csv(["step", *pcs], ([s, *map(float, row)] for s, row in zip(steps, result.projections)))
    comps = to_csv(
        ["component", "eigenvalue", "explained", *[f"dim{j}" for j in range(d)]],
        (
            [pcs[i], float(result.eigenvalues[i]), float(result.explained[i]), *map(float, result.components[i])]
            for i in range(k)
        ),
    )
    return proj, comps
