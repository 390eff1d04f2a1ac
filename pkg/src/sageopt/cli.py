"""Command-line entry point: ``sageopt run | compare | export``.

Failures print one line to stderr, ``sageopt: error[<code>]: <message>``,
and exit non-zero (2 for usage/configuration errors, 3 for I/O and log
format errors). A diverged training run is data, not a failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis, config
from .errors import LogFormatError, SageError, UsageError
from .optimizers import Policy
from .runlog import COMPLETED, DIVERGED, RunLog
from .training import TrainConfig, train_run

OUT_ENV = "SAGEOPT_OUT"


def _list(kind):
    def parse(text: str):
        try:
            return tuple(kind(p.strip()) for p in text.split(",") if p.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def cell_filename(cell: TrainConfig) -> str:
    return f"{cell.policy}__lr{cell.lr!r}__seed{cell.seed}.jsonl"


def _run_cell(args: tuple[TrainConfig, str]) -> tuple[str, str]:
    cell, out_dir = args
    runlog = train_run(cell)
    path = runlog.write(Path(out_dir) / cell_filename(cell))
    return str(path), runlog.status


# --------------------------------------------------------------------------
# run


def cmd_run(ns: argparse.Namespace) -> int:
    cfg = config.load(ns.config) if ns.config else config.ExperimentConfig()
    overrides = {}
    if ns.seeds:
        overrides["seeds"] = ns.seeds
    if ns.policy:
        overrides["policy"] = tuple(Policy.parse(p).value for p in ns.policy.split(","))
    if ns.lr:
        overrides["lr"] = ns.lr
    if ns.snapshot_every is not None:
        overrides["snapshot_every"] = ns.snapshot_every
    if ns.steps is not None:
        overrides["steps"] = ns.steps
    cfg = cfg.with_overrides(**overrides)
    out_dir = Path(ns.out or cfg.out or os.environ.get(OUT_ENV) or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "experiment.cfg").write_text(config.dumps(cfg))

    jobs = [(cell, str(out_dir)) for cell in cfg.cells()]
    if ns.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    for path, status in results:
        print(f"{status}\t{path}")
    return 0


# --------------------------------------------------------------------------
# compare


def load_logs(log_dir: str | Path) -> list[RunLog]:
    d = Path(log_dir)
    if not d.is_dir():
        raise UsageError(f"{d} is not a directory")
    logs = [RunLog.read(p) for p in sorted(d.glob("*.jsonl"))]
    if not logs:
        raise UsageError(f"no run logs in {d}")
    return logs


def compare(logs: list[RunLog]) -> list[dict]:
    """One row per (policy, lr): seed-mean final loss over completed runs.

    Diverged or unfinished runs are counted but left out of the mean; the
    row with the lowest mean per policy is flagged ``best``.
    """
    cells: dict[tuple[str, float], list[RunLog]] = {}
    for rl in logs:
        cells.setdefault((rl.header["policy"], rl.header["lr"]), []).append(rl)
    rows = []
    for (policy, lr), runs in sorted(cells.items()):
        runs = sorted(runs, key=lambda r: r.header["seed"])
        done = [r for r in runs if r.status == COMPLETED and r.final_loss is not None]
        rows.append(
            {
                "policy": policy,
                "lr": lr,
                "runs": len(runs),
                "diverged": sum(r.status != COMPLETED for r in runs),
                "mean_final_loss": statistics.fmean(r.final_loss for r in done) if done else None,
                "seed_losses": " ".join(
                    f"{r.header['seed']}:{r.final_loss!r}" if r.status == COMPLETED else f"{r.header['seed']}:{DIVERGED}"
                    for r in runs
                ),
                "best": False,
            }
        )
    for policy in {r["policy"] for r in rows}:
        scored = [r for r in rows if r["policy"] == policy and r["mean_final_loss"] is not None]
        if scored:
            min(scored, key=lambda r: r["mean_final_loss"])["best"] = True
    return rows


COMPARE_COLUMNS = ("policy", "lr", "runs", "diverged", "mean_final_loss", "seed_losses", "best")


def cmd_compare(ns: argparse.Namespace) -> int:
    rows = compare(load_logs(ns.log_dir))
    text = analysis.to_csv(COMPARE_COLUMNS, ([r[c] for c in COMPARE_COLUMNS] for r in rows))
    _emit(text, ns.out)
    return 0


# --------------------------------------------------------------------------
# export


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _need_log(ns, flag: str = "log") -> RunLog:
    path = getattr(ns, flag)
    if not path:
        raise UsageError(f"--{flag} is required for kind={ns.kind}")
    return RunLog.read(path)


def cmd_export(ns: argparse.Namespace) -> int:
    if ns.kind == "memory":
        dims = analysis.preset_dims(ns.preset)
        mem = analysis.MemoryModel(ns.state_bytes, ns.state_bytes)
        rows = analysis.memory_report(dims, mem)
        cols = ("policy", "state_bytes", "state_gib", "total_gib")
        _emit(analysis.to_csv(cols, ([r[c] for c in cols] for r in rows)), ns.out)
    elif ns.kind == "heatmap":
        traj = analysis.Trajectory.from_runlog(_need_log(ns), ns.slot)
        _emit(analysis.to_csv(("step", "dim", "value"), analysis.export_heatmap(traj)), ns.out)
    elif ns.kind == "pca":
        traj = analysis.Trajectory.from_runlog(_need_log(ns), ns.slot)
        result = analysis.pca_topk(traj, ns.k)
        proj, comps = analysis.pca_tables(result, traj.steps)
        if ns.out:
            stem = Path(ns.out)
            _emit(proj, str(stem.with_name(stem.stem + "_projections.csv")))
            _emit(comps, str(stem.with_name(stem.stem + "_components.csv")))
        else:
            sys.stdout.write(comps + "\n" + proj)
    elif ns.kind == "throughput":
        base = _need_log(ns, "baseline")
        other = _need_log(ns)
        if ns.tokens_per_step is None:
            ns.tokens_per_step = base.header["config"]["batch"]
        inp, teff = analysis.throughput_from_logs(base, other, ns.tokens_per_step, ns.seconds_per_step, ns.target)
        cols = ("policy", "n_base", "t_o", "effective_throughput")
        row = (other.header["policy"], inp.n_base, inp.t_o, "not-reached" if teff is analysis.NOT_REACHED else teff)
        _emit(analysis.to_csv(cols, [row]), ns.out)
    return 0


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"sageopt: error[usage]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sageopt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every (policy x lr x seed) cell of a config")
    r.add_argument("--config", help="experiment config file")
    r.add_argument("--out", help=f"output directory (default: config 'out', ${OUT_ENV}, or ./runs)")
    r.add_argument("--seeds", type=_list(int), help="comma-separated seeds")
    r.add_argument("--policy", help="comma-separated policy names")
    r.add_argument("--lr", type=_list(float), help="comma-separated peak learning rates")
    r.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    r.add_argument("--steps", type=int)
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="summarise final losses of a directory of run logs")
    c.add_argument("log_dir")
    c.add_argument("--out", help="write the table here instead of stdout")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("export", help="write a plot-ready table")
    e.add_argument("kind", choices=("heatmap", "pca", "memory", "throughput"))
    e.add_argument("--log", help="run log (heatmap, pca; contender for throughput)")
    e.add_argument("--out", help="output file (pca: stem for _projections/_components)")
    e.add_argument("--slot", default="embedding", help="parameter slot whose scale was snapshotted")
    e.add_argument("--k", type=int, default=3, help="number of principal components")
    e.add_argument("--preset", default="270M", choices=sorted(analysis.PRESETS))
    e.add_argument("--state-bytes", type=int, default=4, dest="state_bytes")
    e.add_argument("--baseline", help="baseline run log (throughput)")
    e.add_argument("--tokens-per-step", type=float, dest="tokens_per_step")
    e.add_argument("--seconds-per-step", type=float, default=1.0, dest="seconds_per_step")
    e.add_argument("--target", type=float, help="target loss (default: baseline final loss)")
    e.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return ns.func(ns)
    except LogFormatError as exc:
        print(f"sageopt: error[{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except SageError as exc:
        print(f"sageopt: error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sageopt: error[io]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
