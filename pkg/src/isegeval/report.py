"""Persist experiment outputs and render summary tables, curves, and audits.

Everything the summary table shows is a pure function of the persisted
per-sample series, so re-running report generation on a results
directory reproduces the table bit-exactly. CSV files keep full float
precision; rendered tables print 3 decimals with best-per-task markers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput
from .metrics import MetricSeries, median_curve, summarize
from .planning import plan_from_doc, plan_to_doc
from .protocol import Prompt
from .simulator import (
    EntryResult,
    ExperimentResult,
    InteractionTranscript,
    IterationRecord,
    discover_samples,
    load_target_mask,
)
from .volume import read_nifti_mask

RESULT_FILE = "result.json"
SUMMARY_CSV = "summary.csv"
SUMMARY_TABLE = "summary.txt"
CURVES_CSV = "curves.csv"

SUMMARY_COLUMNS = ("dice_init", "dice_final", "dice_nauc",
                   "nsd_init", "nsd_final", "nsd_nauc", "nnoi", "nof_pct")
# best per task: quality metrics maximise, interaction metrics minimise
_MINIMISE = {"nnoi", "nof_pct"}


def _fmt(x: float) -> str:
    return repr(float(x))


# --- transcripts ------------------------------------------------------------


def transcript_to_doc(t: InteractionTranscript) -> dict:
    return {
        "sample_id": t.sample_id,
        "task_id": t.task_id,
        "algorithm_id": t.algorithm_id,
        "session_id": t.session_id,
        "master_seed": t.master_seed,
        "budget": t.budget,
        "points_per_class": t.points_per_class,
        "editing": t.editing,
        "nsd_tolerance_mm": t.nsd_tolerance_mm,
        "termination": t.termination,
        "error": t.error,
        "records": [{
            "iteration": r.iteration,
            "seed": r.seed,
            "prompts": [p.to_wire() for p in r.prompts],
            "label_path": r.label_path,
            "inference_ms": r.inference_ms,
            "dice": r.dice,
            "nsd": r.nsd,
        } for r in t.records],
        "series": None if t.series is None else {
            "dice": [float(x) for x in t.series.dice],
            "nsd": [float(x) for x in t.series.nsd],
        },
    }


def transcript_from_doc(doc: dict) -> InteractionTranscript:
    series = doc.get("series")
    return InteractionTranscript(
        sample_id=doc["sample_id"],
        task_id=doc["task_id"],
        algorithm_id=doc["algorithm_id"],
        session_id=doc["session_id"],
        master_seed=doc["master_seed"],
        budget=doc["budget"],
        points_per_class=doc["points_per_class"],
        editing=doc["editing"],
        nsd_tolerance_mm=doc["nsd_tolerance_mm"],
        termination=doc["termination"],
        error=doc.get("error"),
        records=[IterationRecord(
            iteration=r["iteration"],
            seed=r["seed"],
            prompts=[Prompt.from_wire(p) for p in r["prompts"]],
            label_path=r["label_path"],
            inference_ms=r["inference_ms"],
            dice=r["dice"],
            nsd=r["nsd"],
        ) for r in doc["records"]],
        series=None if series is None else MetricSeries(series["dice"], series["nsd"]),
    )


def write_transcript(t: InteractionTranscript, path) -> None:
    Path(path).write_text(json.dumps(transcript_to_doc(t), indent=1, sort_keys=True) + "\n")


def read_transcript(path) -> InteractionTranscript:
    return transcript_from_doc(json.loads(Path(path).read_text()))


def emit_transcripts(result: ExperimentResult, out_dir) -> None:
    """One replayable JSON file per sample session, grouped per plan entry."""
    out_dir = Path(out_dir)
    for entry in result.entries:
        tdir = out_dir / entry.dir_name / "transcripts"
        tdir.mkdir(parents=True, exist_ok=True)
        for t in entry.transcripts:
            write_transcript(t, tdir / f"{t.sample_id}.json")


# --- tables and curves ------------------------------------------------------


def _summary_rows(result: ExperimentResult) -> list[dict]:
    rows = []
    for entry in result.entries:
        if entry.summary is None:
            continue
        row = {"task": entry.entry.task_id, "algorithm": entry.entry.algorithm_id,
               "seed": entry.entry.master_seed}
        for col in SUMMARY_COLUMNS:
            row[col] = getattr(entry.summary, col)
        rows.append(row)
    return rows


def _best_markers(rows: list[dict]) -> dict[int, set]:
    """Row index -> set of columns where that row is best within its task.

    Ties mark every tied row.
    """
    best: dict[int, set] = {i: set() for i in range(len(rows))}
    tasks = {r["task"] for r in rows}
    for task in tasks:
        idx = [i for i, r in enumerate(rows) if r["task"] == task]
        for col in SUMMARY_COLUMNS:
            vals = [rows[i][col] for i in idx]
            target = min(vals) if col in _MINIMISE else max(vals)
            for i, v in zip(idx, vals):
                if v == target:
                    best[i].add(col)
    return best


def emit_summary(result: ExperimentResult, path) -> None:
    """Full-precision CSV, one row per (task, algorithm), with best markers."""
    rows = _summary_rows(result)
    if not rows:
        raise EmptyInput("no summaries to emit")
    best = _best_markers(rows)
    lines = ["task,algorithm,seed," + ",".join(SUMMARY_COLUMNS) + ",best_in"]
    for i, r in enumerate(rows):
        cells = [r["task"], r["algorithm"], str(r["seed"])]
        cells += [_fmt(r[c]) for c in SUMMARY_COLUMNS]
        cells.append(";".join(c for c in SUMMARY_COLUMNS if c in best[i]))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def render_summary(result: ExperimentResult, decimals: int = 3) -> str:
    """Human-readable table: Init / Iter. N / nAUC per metric, nNoI, NoF.

    Values print with 3 decimals; ``*`` marks the best value per task and
    column (ties are all marked).
    """
    rows = _summary_rows(result)
    if not rows:
        raise EmptyInput("no summaries to render")
    budget = max(e.entry.budget for e in result.entries if e.summary is not None)
    headers = ["Task", "Algorithm",
               "Dice Init", f"Dice Iter. {budget}", "Dice nAUC",
               "NSD Init", f"NSD Iter. {budget}", "NSD nAUC",
               "nNoI", "NoF"]
    best = _best_markers(rows)
    table = [headers]
    for i, r in enumerate(rows):
        cells = [r["task"], r["algorithm"]]
        for col in SUMMARY_COLUMNS:
            mark = "*" if col in best[i] else ""
            cells.append(f"{r[col]:.{decimals}f}{mark}")
        table.append(cells)
    widths = [max(len(row[c]) for row in table) for c in range(len(headers))]
    out = []
    for n, row in enumerate(table):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def emit_curves(result: ExperimentResult, path) -> None:
    """Per-iteration median curves: task,algorithm,iteration,median_dice,median_nsd."""
    lines = ["task,algorithm,iteration,median_dice,median_nsd"]
    any_curve = False
    for entry in result.entries:
        if entry.curve is None:
            continue
        any_curve = True
        for t in range(len(entry.curve.dice)):
            lines.append(",".join([
                entry.entry.task_id, entry.entry.algorithm_id, str(t),
                _fmt(entry.curve.dice[t]), _fmt(entry.curve.nsd[t])]))
    if not any_curve:
        raise EmptyInput("no curves to emit")
    Path(path).write_text("\n".join(lines) + "\n")


# --- results directory ------------------------------------------------------


def emit_result(result: ExperimentResult, out_root) -> None:
    """Write the result index plus summary/table/curve artifacts."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    doc = {
        "plan": plan_to_doc(result.plan),
        "environment": result.environment,
        "entries": [{
            "task_id": e.entry.task_id,
            "algorithm_id": e.entry.algorithm_id,
            "master_seed": e.entry.master_seed,
            "dir": e.dir_name,
            "skipped": e.skipped,
            "sample_errors": e.sample_errors,
            "n_samples": len(e.transcripts),
        } for e in result.entries],
    }
    (out_root / RESULT_FILE).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    if any(e.summary is not None for e in result.entries):
        emit_summary(result, out_root / SUMMARY_CSV)
        (out_root / SUMMARY_TABLE).write_text(render_summary(result))
        emit_curves(result, out_root / CURVES_CSV)


def load_result(out_root) -> ExperimentResult:
    """Rebuild an ExperimentResult from a results directory.

    Summaries and curves are recomputed from the persisted per-sample
    series, so regenerated tables match the originals bit-exactly.
    """
    out_root = Path(out_root)
    doc = json.loads((out_root / RESULT_FILE).read_text())
    plan = plan_from_doc(doc["plan"])
    entries = []
    for edoc in doc["entries"]:
        entry = next(e for e in plan.entries
                     if e.task_id == edoc["task_id"] and e.algorithm_id == edoc["algorithm_id"]
                     and e.master_seed == edoc["master_seed"])
        res = EntryResult(entry=entry, skipped=edoc.get("skipped"),
                          sample_errors=list(edoc.get("sample_errors", [])))
        tdir = out_root / edoc["dir"] / "transcripts"
        if tdir.is_dir():
            res.transcripts = [read_transcript(p) for p in sorted(tdir.glob("*.json"))]
        valid = [t.series for t in res.transcripts
                 if t.termination != "application_error" and t.series is not None]
        if valid:
            task = plan.tasks[entry.task_id]
            res.summary = summarize(valid, task.convergence_target, entry.budget)
            res.curve = median_curve(valid)
        entries.append(res)
    return ExperimentResult(plan=plan, entries=entries, environment=doc.get("environment", {}))


# --- prompt-validity audit ---------------------------------------------------


@dataclass
class AuditReport:
    fg_points: int = 0
    bg_points: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def total_points(self) -> int:
        return self.fg_points + self.bg_points

    @property
    def ok(self) -> bool:
        return not self.violations


def audit_transcript(transcript: InteractionTranscript, target: np.ndarray,
                     out_root) -> AuditReport:
    """Check that every recorded point lies in its claimed error region.

    Foreground points must fall in the false-negative region of the
    previous prediction, background points in the false-positive region;
    the previous prediction is re-read from the persisted mask files.
    """
    out_root = Path(out_root)
    report = AuditReport()
    prev = np.zeros(target.shape, dtype=bool)
    for rec in transcript.records:
        fn = target & ~prev
        fp = prev & ~target
        for prompt in rec.prompts:
            region, name = (fn, "FN") if prompt.label == "foreground" else (fp, "FP")
            for coord in prompt.coords:
                if prompt.label == "foreground":
                    report.fg_points += 1
                else:
                    report.bg_points += 1
                if not region[coord]:
                    report.violations.append(
                        f"{transcript.session_id} iteration {rec.iteration}: "
                        f"{prompt.label} point {coord} outside {name} region")
        p = Path(rec.label_path)
        if not p.is_absolute():
            p = out_root / p
        prev = read_nifti_mask(p).binary()
    return report


def audit_points(out_root, data_root) -> AuditReport:
    """Audit every transcript of a results directory against its dataset."""
    out_root = Path(out_root)
    result = load_result(out_root)
    combined = AuditReport()
    for entry in result.entries:
        if entry.skipped or not entry.transcripts:
            continue
        task = result.plan.tasks[entry.entry.task_id]
        samples = {s.sample_id: s for s in discover_samples(Path(data_root) / task.dataset_path)}
        for t in entry.transcripts:
            sample = samples.get(t.sample_id)
            if sample is None:
                combined.violations.append(f"{t.session_id}: sample {t.sample_id} not in dataset")
                continue
            target, _, _ = load_target_mask(sample, task)
            sub = audit_transcript(t, target, out_root)
            combined.fg_points += sub.fg_points
            combined.bg_points += sub.bg_points
            combined.violations.extend(sub.violations)
    return combined
