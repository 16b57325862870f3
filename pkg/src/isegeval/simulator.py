"""Deterministic prompt simulation and the fully interactive refinement loop.

Each sample session starts from no prediction, so the first iteration
places foreground point(s) only (the false-positive region is empty by
construction). Every later iteration samples points uniformly from the
false-negative and false-positive regions between the previous
prediction and the reference, sends them to the application under the
plan entry's editing mode, and scores the returned native-space mask.

Randomness is derived per (master seed, sample id, iteration), so
transcripts are reproducible and sample-level parallelism cannot change
any result.
"""

from __future__ import annotations

import hashlib
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConnectError, HarnessError
from .metrics import MetricSeries, SummaryRow, dice, median_curve, nsd, summarize
from .planning import ONE_POINT_PER_CLASS, ExperimentPlan, PlanEntry, TaskDefinition
from .protocol import ClientSession, Prompt, SegmentationRequest, connect, editing_payload
from .volume import LabelMask, largest_component, read_nifti, read_nifti_mask

FOREGROUND = "foreground"
BACKGROUND = "background"


@dataclass
class SimulationConfig:
    budget: int = 100
    master_seed: int = 0
    points_per_class: int | None = None  # None: use the plan entry's resolved value
    early_stop_on_perfect: bool = True
    request_timeout_s: float = 300.0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.points_per_class is not None and self.points_per_class < 1:
            raise ValueError(f"points_per_class must be >= 1, got {self.points_per_class}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")


@dataclass
class Sample:
    sample_id: str
    image_path: Path
    label_path: Path


@dataclass
class IterationRecord:
    iteration: int
    seed: int
    prompts: list[Prompt]
    label_path: str
    inference_ms: float
    dice: float
    nsd: float


@dataclass
class InteractionTranscript:
    sample_id: str
    task_id: str
    algorithm_id: str
    session_id: str
    master_seed: int
    budget: int
    points_per_class: int
    editing: str
    nsd_tolerance_mm: float
    records: list[IterationRecord] = field(default_factory=list)
    termination: str = "budget_exhausted"  # budget_exhausted | perfect | application_error
    error: str | None = None
    series: MetricSeries | None = None  # length N+1 unless the session errored


@dataclass
class EntryResult:
    entry: PlanEntry
    transcripts: list[InteractionTranscript] = field(default_factory=list)
    summary: SummaryRow | None = None
    curve: MetricSeries | None = None
    sample_errors: list[str] = field(default_factory=list)
    skipped: str | None = None

    @property
    def dir_name(self) -> str:
        return f"{self.entry.task_id}_{self.entry.algorithm_id}_{self.entry.master_seed}"


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    entries: list[EntryResult]
    environment: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(e.skipped is None and not e.sample_errors for e in self.entries)


def derive_seed(master: int, sample_id: str, iteration: int) -> int:
    """Deterministic 64-bit stream seed for one (sample, iteration)."""
    h = hashlib.blake2b(f"{sample_id}\x1f{iteration}".encode(),
                        digest_size=8, key=int(master).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def sample_error_points(pred: np.ndarray, ref: np.ndarray, rng: np.random.Generator,
                        k_per_class: int = 1) -> list[Prompt]:
    """Uniform point prompts from the current error regions.

    Draws up to k foreground points from the false-negative region
    (ref and not pred) and up to k background points from the
    false-positive region (pred and not ref), uniformly over the voxels
    of each region and without replacement. An empty region contributes
    no points; both empty means the prediction is perfect.
    """
    if pred.shape != ref.shape:
        raise ValueError(f"pred {pred.shape} vs ref {ref.shape}")
    prompts = []
    for region, label in (((ref & ~pred), FOREGROUND), ((pred & ~ref), BACKGROUND)):
        coords = np.argwhere(region)
        if len(coords) == 0:
            continue
        take = min(k_per_class, len(coords))
        picks = rng.choice(len(coords), size=take, replace=False)
        for p in np.sort(picks):
            prompts.append(Prompt("point", label, (tuple(int(x) for x in coords[p]),)))
    return prompts


def load_target_mask(sample: Sample, task: TaskDefinition) -> tuple[np.ndarray, tuple, LabelMask]:
    """Reference target as a boolean grid, after label selection and
    optional largest-component reduction."""
    ref = read_nifti_mask(sample.label_path)
    target = np.zeros(ref.shape, dtype=bool)
    for label in task.target_labels:
        target |= ref.binary(label)
    if task.largest_component:
        reduced = largest_component(LabelMask.from_array(target, ref.spacing, ref.affine))
        target = reduced.binary()
    return target, ref.spacing, ref


def run_sample(session: ClientSession, sample: Sample, task: TaskDefinition,
               entry: PlanEntry, cfg: SimulationConfig,
               prediction_dir: Path | None = None,
               recorded_path_prefix: str = "") -> InteractionTranscript:
    """Drive one fully interactive session and score every iteration.

    Returned masks are copied into ``prediction_dir`` (when given) so the
    session can be audited and replayed after the application exits; the
    transcript stores paths relative to the experiment output root via
    ``recorded_path_prefix``.

    On early perfect convergence the remaining series entries carry the
    last value forward, so the series always spans the full budget.
    """
    n = entry.budget
    k = entry.prompt_config.points_per_class if cfg.points_per_class is None else cfg.points_per_class
    if ONE_POINT_PER_CLASS in entry.prompt_config.constraints:
        k = 1  # the resolver's strongest shared constraint binds the simulator
    target, spacing, _ = load_target_mask(sample, task)
    image = read_nifti(sample.image_path)
    if image.shape != target.shape:
        raise HarnessError(f"{sample.sample_id}: image grid {image.shape} != label grid {target.shape}")

    session_id = f"{task.id}_{entry.algorithm_id}_{sample.sample_id}_{entry.master_seed}"
    transcript = InteractionTranscript(
        sample_id=sample.sample_id, task_id=task.id, algorithm_id=entry.algorithm_id,
        session_id=session_id, master_seed=entry.master_seed, budget=n,
        points_per_class=k, editing=entry.editing, nsd_tolerance_mm=task.nsd_tolerance_mm)

    if prediction_dir is not None:
        prediction_dir.mkdir(parents=True, exist_ok=True)

    session.start_session(session_id, task.task_text(), [str(sample.image_path)], image.shape)
    pred = np.zeros(target.shape, dtype=bool)
    history: list[Prompt] = []
    dice_series: list[float] = []
    nsd_series: list[float] = []
    try:
        for t in range(n + 1):
            fn_empty = not (target & ~pred).any()
            fp_empty = not (pred & ~target).any()
            if fn_empty and fp_empty:
                if cfg.early_stop_on_perfect:
                    transcript.termination = "perfect"
                    break
                current = []
                seed = derive_seed(entry.master_seed, sample.sample_id, t)
            else:
                seed = derive_seed(entry.master_seed, sample.sample_id, t)
                rng = np.random.default_rng(seed)
                current = sample_error_points(pred, target, rng, k)

            prompts, memory = editing_payload(entry.editing, history, current)
            req = SegmentationRequest(session_id, t, [str(sample.image_path)],
                                      prompts, memory, task.task_text())
            resp = session.request_segmentation(req, cfg.request_timeout_s)

            label_path = resp.label_path
            if prediction_dir is not None:
                kept = prediction_dir / f"iter_{t:03d}.nii.gz"
                shutil.copyfile(resp.label_path, kept)
                label_path = f"{recorded_path_prefix}iter_{t:03d}.nii.gz"

            pred = resp.mask.binary()
            d = dice(pred, target)
            s = nsd(pred, target, spacing, task.nsd_tolerance_mm)
            transcript.records.append(IterationRecord(
                iteration=t, seed=seed, prompts=current, label_path=label_path,
                inference_ms=resp.inference_ms, dice=d, nsd=s))
            dice_series.append(d)
            nsd_series.append(s)
            history.extend(current)
    except HarnessError as e:
        transcript.termination = "application_error"
        transcript.error = f"{type(e).__name__}: {e}"
        if dice_series:
            transcript.series = MetricSeries(dice_series, nsd_series)
        return transcript

    if not dice_series:
        # empty reference and empty prediction: nothing to prompt or score
        dice_series, nsd_series = [1.0], [1.0]
    while len(dice_series) < n + 1:  # carry forward after early perfect stop
        dice_series.append(dice_series[-1])
        nsd_series.append(nsd_series[-1])
    transcript.series = MetricSeries(dice_series, nsd_series)
    if transcript.termination == "budget_exhausted" and bool((pred == target).all()):
        transcript.termination = "perfect"
    return transcript


def discover_samples(dataset_dir: Path) -> list[Sample]:
    """Samples of a conforming dataset: images/*.nii[.gz] with matching labels/."""
    dataset_dir = Path(dataset_dir)
    images = sorted(p for p in (dataset_dir / "images").glob("*.nii*"))
    if not images:
        raise HarnessError(f"no images under {dataset_dir / 'images'}")
    samples = []
    for img in images:
        label = dataset_dir / "labels" / img.name
        if not label.exists():
            raise HarnessError(f"missing reference annotation {label}")
        samples.append(Sample(img.name.removesuffix(".gz").removesuffix(".nii"), img, label))
    return samples


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def run_experiment(plan: ExperimentPlan, data_root: Path, endpoints: dict[str, str],
                   cfg: SimulationConfig, out_root: Path, workers: int = 1) -> ExperimentResult:
    """Execute every plan entry against its application endpoint.

    Transcripts are persisted incrementally (one file per sample, written
    as soon as the sample finishes) so a crash loses at most the
    in-flight sample. An unreachable application skips its plan entry
    with a recorded error instead of failing the experiment.
    """
    from .report import write_transcript  # emission lives with the other writers

    out_root = Path(out_root)
    started = time.time()
    results: list[EntryResult] = []
    for entry in plan.entries:
        task = plan.tasks[entry.task_id]
        res = EntryResult(entry=entry)
        results.append(res)
        endpoint = endpoints.get(entry.algorithm_id)
        if endpoint is None:
            res.skipped = f"no endpoint configured for {entry.algorithm_id}"
            _progress(f"[skip] {res.dir_name}: {res.skipped}")
            continue
        try:
            samples = discover_samples(Path(data_root) / task.dataset_path)
        except HarnessError as e:
            res.skipped = str(e)
            _progress(f"[skip] {res.dir_name}: {res.skipped}")
            continue
        try:  # probe the endpoint once before committing to the whole entry
            connect(endpoint).close()
        except (ConnectError, HarnessError) as e:
            res.skipped = f"unreachable application: {e}"
            _progress(f"[skip] {res.dir_name}: {res.skipped}")
            continue

        entry_dir = out_root / res.dir_name
        (entry_dir / "transcripts").mkdir(parents=True, exist_ok=True)

        def run_one(sample: Sample) -> InteractionTranscript:
            with connect(endpoint) as session:
                transcript = run_sample(
                    session, sample, task, entry, cfg,
                    prediction_dir=entry_dir / "predictions" / sample.sample_id,
                    recorded_path_prefix=f"{res.dir_name}/predictions/{sample.sample_id}/")
            write_transcript(transcript, entry_dir / "transcripts" / f"{sample.sample_id}.json")
            _progress(f"[{res.dir_name}] {sample.sample_id}: "
                      f"{transcript.termination}"
                      + (f" dice={transcript.series.dice[-1]:.3f}" if transcript.series is not None else ""))
            return transcript

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                transcripts = list(pool.map(run_one, samples))
        else:
            transcripts = [run_one(s) for s in samples]
        res.transcripts = transcripts
        res.sample_errors = [f"{t.sample_id}: {t.error}" for t in transcripts
                             if t.termination == "application_error"]
        valid = [t.series for t in transcripts if t.termination != "application_error"]
        if valid:
            res.summary = summarize(valid, task.convergence_target, entry.budget)
            res.curve = median_curve(valid)

    env = {
        "master_seed": cfg.master_seed,
        "budget": cfg.budget,
        "points_per_class": cfg.points_per_class,
        "harness_version": _version(),
        "started_unix": started,
        "finished_unix": time.time(),
    }
    return ExperimentResult(plan=plan, entries=results, environment=env)


def _version() -> str:
    from . import __version__

    return __version__
