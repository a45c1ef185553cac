"""Run (s, seed, scheme, T) cells and write metrics CSVs."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .config import ExperimentConfig
from .scenario import ScenarioConfig, StageMetrics, run_scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cell:
    s: int
    seed: int
    scheme: str
    T: int


@dataclass
class CellResult:
    cell: Cell
    metrics: list[StageMetrics] | None
    transcripts: list[dict] | None = None
    error: str | None = None


def cells(cfg: ExperimentConfig) -> list[Cell]:
    sw = cfg.sweep
    return [Cell(s, seed, scheme, T) for s in sw.s_values for seed in sw.seeds for scheme in sw.schemes for T in sw.T_values]


def cell_config(base: ScenarioConfig, cell: Cell) -> ScenarioConfig:
    return replace(base, student_session=cell.s, questioner=replace(base.questioner, scheme=cell.scheme, T=cell.T))


def run_cell(base: ScenarioConfig, cell: Cell, dump_transcripts: bool = False) -> CellResult:
    transcripts = [] if dump_transcripts else None
    try:
        metrics = run_scenario(cell_config(base, cell), cell.seed, transcripts=transcripts)
    except Exception as exc:  # recorded per cell; the sweep carries on
        log.error("cell %s failed: %s", cell, exc)
        return CellResult(cell, None, error=f"{type(exc).__name__}: {exc}")
    docs = [t.to_json() for t in transcripts] if transcripts is not None else None
    return CellResult(cell, metrics, docs)


def _run_cell_args(args):
    return run_cell(*args)


def metric_header(num_teachers: int) -> list[str]:
    return (
        ["seed", "s", "scheme", "T", "stage", "top1"]
        + [f"acc_origin{o}" for o in range(num_teachers + 1)]
        + ["cumulative_cost"]
    )


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def metric_rows(result: CellResult, num_teachers: int) -> list[list[str]]:
    c = result.cell
    rows = []
    for m in result.metrics or []:
        origins = [
            _fmt(m.per_origin_accuracy[o]) if o in m.per_origin_accuracy else "" for o in range(num_teachers + 1)
        ]
        rows.append([str(c.seed), str(c.s), c.scheme, str(c.T), str(m.stage), _fmt(m.top1_accuracy), *origins, str(m.cumulative_cost)])
    return rows


def metrics_csv(results: Iterable[CellResult], num_teachers: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(metric_header(num_teachers))
    for r in results:
        w.writerows(metric_rows(r, num_teachers))
    return buf.getvalue()


def summarize_rows(rows: list[dict]) -> list[dict]:
    """mean/std of final-stage top-1 per (scheme, T), per s and pooled over s."""
    final = {}
    for r in rows:
        key = (r["seed"], r["s"], r["scheme"], r["T"])
        if key not in final or int(r["stage"]) > int(final[key]["stage"]):
            final[key] = r
    groups: dict[tuple, list[float]] = {}
    for (seed, s, scheme, T), r in final.items():
        for s_key in (s, "all"):
            groups.setdefault((scheme, int(T), s_key), []).append(float(r["top1"]))
    order = lambda k: (k[0], k[1], (1, 0) if k[2] == "all" else (0, int(k[2])))
    out = []
    for key in sorted(groups, key=order):
        vals = groups[key]
        out.append(
            {
                "scheme": key[0],
                "T": key[1],
                "s": key[2],
                "n": len(vals),
                "mean_top1": statistics.fmean(vals),
                "std_top1": statistics.pstdev(vals) if len(vals) > 1 else 0.0,
            }
        )
    return out


def summary_csv(summary: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "T", "s", "n", "mean_top1", "std_top1"])
    for r in summary:
        w.writerow([r["scheme"], r["T"], r["s"], r["n"], _fmt(r["mean_top1"]), _fmt(r["std_top1"])])
    return buf.getvalue()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, dump_transcripts: bool = False, output_dir=None) -> list[CellResult]:
    """Run every cell, then write ``metrics.csv``, ``summary.csv`` and (if any) ``failures.csv``.

    Results are written by this process only, in cell order, whatever ``jobs`` is.
    """
    out = Path(output_dir or cfg.sweep.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    todo = cells(cfg)
    args = [(cfg.scenario, c, dump_transcripts) for c in todo]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, args))
    else:
        results = [_run_cell_args(a) for a in args]

    nt = cfg.scenario.num_teachers
    text = metrics_csv(results, nt)
    (out / "metrics.csv").write_text(text)
    (out / "summary.csv").write_text(summary_csv(summarize_rows(list(csv.DictReader(io.StringIO(text))))))
    failed = [r for r in results if r.error]
    fail_path = out / "failures.csv"
    if failed:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "s", "scheme", "T", "error"])
        for r in failed:
            w.writerow([r.cell.seed, r.cell.s, r.cell.scheme, r.cell.T, r.error])
        fail_path.write_text(buf.getvalue())
    elif fail_path.exists():
        fail_path.unlink()
    if dump_transcripts:
        tdir = out / "transcripts"
        tdir.mkdir(exist_ok=True)
        for r in results:
            if r.transcripts is not None:
                c = r.cell
                name = f"s{c.s}_seed{c.seed}_{c.scheme}_T{c.T}.json"
                (tdir / name).write_text(json.dumps(r.transcripts, indent=1, sort_keys=True) + "\n")
    return results
