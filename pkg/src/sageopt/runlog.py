"""Line-delimited run logs.

A log is a JSON-lines file. The first line is the header; every later line
is one record whose ``kind`` is ``step``, ``eval``, ``snapshot`` or ``end``.
Keys within each record always appear in the order listed below, and floats
are written with Python's shortest round-trip repr, so two identical runs
produce byte-identical files.

    header   schema, config_hash, policy, lr, seed, config
    step     kind, step, loss, eta, update_inf_norm, slot_norms, status
    eval     kind, step, loss
    snapshot kind, step, slot, H, grad_var
    end      kind, status, steps_completed, final_loss

Non-finite numbers are written as ``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import LogFormatError

SCHEMA = "sageopt-runlog/1"
COMPLETED = "completed"
DIVERGED = "diverged"


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _nums(a) -> list:
    return [_num(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RunLog:
    header: dict
    records: list[dict] = field(default_factory=list)

    @classmethod
    def new(cls, config: dict) -> "RunLog":
        header = {
            "schema": SCHEMA,
            "config_hash": config_hash(config),
            "policy": config.get("policy"),
            "lr": config.get("lr"),
            "seed": config.get("seed"),
            "config": config,
        }
        return cls(header)

    # writers -------------------------------------------------------------

    def add_step(self, step: int, loss: float, eta: float, update_inf_norm, slot_norms: dict, status: str = "ok"):
        self.records.append(
            {
                "kind": "step",
                "step": int(step),
                "loss": _num(loss),
                "eta": _num(eta),
                "update_inf_norm": _num(update_inf_norm),
                "slot_norms": {k: _num(v) for k, v in slot_norms.items()},
                "status": status,
            }
        )

    def add_eval(self, step: int, loss: float):
        self.records.append({"kind": "eval", "step": int(step), "loss": _num(loss)})

    def add_snapshot(self, step: int, slot: str, H, grad_var=None):
        self.records.append(
            {
                "kind": "snapshot",
                "step": int(step),
                "slot": slot,
                "H": _nums(H),
                "grad_var": None if grad_var is None else _nums(grad_var),
            }
        )

    def finish(self, status: str, steps_completed: int, final_loss):
        self.records.append(
            {"kind": "end", "status": status, "steps_completed": int(steps_completed), "final_loss": _num(final_loss)}
        )

    # readers -------------------------------------------------------------

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    @property
    def end(self) -> dict | None:
        ends = self.of_kind("end")
        return ends[-1] if ends else None

    @property
    def status(self) -> str | None:
        return self.end["status"] if self.end else None

    @property
    def final_loss(self) -> float | None:
        return self.end["final_loss"] if self.end else None

    @property
    def initial_loss(self) -> float | None:
        evals = self.of_kind("eval")
        return evals[0]["loss"] if evals else None

    def snapshots(self, slot: str = "embedding") -> tuple[list[int], np.ndarray]:
        snaps = [r for r in self.of_kind("snapshot") if r["slot"] == slot]
        if not snaps:
            return [], np.zeros((0, 0))
        return [r["step"] for r in snaps], np.array([r["H"] for r in snaps], dtype=np.float64)

    # serialisation -------------------------------------------------------

    def lines(self) -> Iterable[str]:
        yield json.dumps(self.header, separators=(",", ":"))
        for r in self.records:
            yield json.dumps(r, separators=(",", ":"))

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "RunLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise LogFormatError(f"{source}: empty log")
        try:
            rows = [json.loads(ln) for ln in lines]
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"{source}: line {exc.lineno}: not valid JSON ({exc.msg})") from None
        header = rows[0]
        if not isinstance(header, dict) or "schema" not in header:
            raise LogFormatError(f"{source}: missing schema header")
        if header["schema"] != SCHEMA:
            raise LogFormatError(f"{source}: unsupported log schema {header['schema']!r} (expected {SCHEMA!r})")
        last = -1
        for i, r in enumerate(rows[1:], start=2):
            if not isinstance(r, dict) or r.get("kind") not in ("step", "eval", "snapshot", "end"):
                raise LogFormatError(f"{source}: line {i}: unknown record")
            if r["kind"] == "step":
                if r["step"] <= last:
                    raise LogFormatError(f"{source}: line {i}: step numbers must increase")
                last = r["step"]
        return cls(header, rows[1:])

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        path = Path(path)
        return cls.loads(path.read_text(), source=str(path))
