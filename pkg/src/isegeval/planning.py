"""Algorithm fingerprints, task definitions, and compatibility resolution.

Fingerprints declare what a segmentation application can do (prompt
types and their constraints, editing mode, segmentation subtypes, patch
configuration, training modalities); tasks declare what an evaluation
needs. The resolver cross-references the two and emits an experiment
plan whose prompt configuration is supported by every algorithm under
comparison, so all algorithms face identical interactions.

Both document kinds are human-editable YAML; unknown fields are
rejected with the offending field path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, NoCommonPrompt
from .metrics import ConvergenceTarget, quantile

PROMPT_TYPES = ("point", "scribble", "box", "lasso")
INIT_MODES = PROMPT_TYPES + ("text", "automatic")
EDITING_MODES = ("implicit", "explicit", "atomic", "none")
SEG_SUBTYPES = ("binary", "multiclass", "semantic", "instance", "panoptic")
SUPPORT_LEVELS = ("full", "partial", "none")

# Recognised constraint token: at most one point per class per iteration.
ONE_POINT_PER_CLASS = "one-point-per-class"


@dataclass
class PromptSupport:
    level: str  # full | partial | none
    constraint: str | None = None  # free text, required for partial


@dataclass
class NativePatch:
    voxel_count: tuple[int, int, int] | str  # triple or "adaptive"
    channels: int = 1
    adaptive: bool = False  # can the algorithm adapt to other patch configs


@dataclass
class AlgorithmFingerprint:
    id: str
    adaptation: str = "static"  # static | adaptive
    init_modes: dict[str, str] = field(default_factory=dict)
    editing: str = "none"
    seg_subtypes: tuple[str, ...] = ("binary",)
    scope: str = "general"  # general | target-specific
    prompt_support: dict[str, PromptSupport] = field(default_factory=dict)
    native_patch: NativePatch = field(default_factory=lambda: NativePatch("adaptive", 1, True))
    trained_modalities: tuple[str, ...] = ()

    def supports_prompt(self, kind: str) -> bool:
        sup = self.prompt_support.get(kind)
        return sup is not None and sup.level != "none"


@dataclass
class PatchConfig:
    voxel_count: tuple[int, int, int] | None = None
    channels: int = 1
    modality: str | None = None
    sequence: str | None = None


@dataclass
class PromptSpec:
    types: tuple[str, ...]
    points_per_class: int = 1  # per-iteration per-class budget


@dataclass
class TaskDefinition:
    id: str
    dataset_path: str
    seg_subtype: str
    target_labels: tuple[int, ...]
    prompt_spec: PromptSpec
    nsd_tolerance_mm: float
    convergence_target: ConvergenceTarget
    patch_config: PatchConfig = field(default_factory=PatchConfig)
    largest_component: bool = False

    def task_text(self) -> str:
        """Free-text description sent to applications at session start."""
        extra = " ".join(p for p in (self.patch_config.modality, self.patch_config.sequence) if p)
        return f"{self.seg_subtype} segmentation of {self.id}" + (f" ({extra})" if extra else "")


@dataclass
class PromptConfig:
    """Resolved prompt configuration shared by all algorithms on a task."""

    types: tuple[str, ...]
    points_per_class: int
    constraints: tuple[str, ...] = ()


@dataclass
class PlanEntry:
    algorithm_id: str
    task_id: str
    prompt_config: PromptConfig
    editing: str
    budget: int
    master_seed: int
    constraint_notes: tuple[str, ...] = ()  # this pair's partial-support notes
    out_of_distribution: bool = False  # task modality unseen in training


@dataclass
class ExperimentPlan:
    entries: list[PlanEntry]
    tasks: dict[str, TaskDefinition]
    fingerprints: dict[str, AlgorithmFingerprint]
    warnings: list[str] = field(default_factory=list)


# --- schema walking -------------------------------------------------------


def _require_mapping(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected a mapping, got {type(doc).__name__}")


def _reject_unknown(doc: dict, known, path):
    for key in doc:
        if key not in known:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown field")


def _get_str(doc, key, path, choices=None, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}{key}", "required field missing")
        return default
    val = doc[key]
    if not isinstance(val, str):
        raise ConfigError(f"{path}{key}", f"expected string, got {type(val).__name__}")
    if choices and val not in choices:
        raise ConfigError(f"{path}{key}", f"must be one of {list(choices)}, got {val!r}")
    return val


def _parse_support(val, path) -> PromptSupport:
    if isinstance(val, str):
        if val not in ("full", "none"):
            raise ConfigError(path, f"expected 'full', 'none' or {{partial: constraint}}, got {val!r}")
        return PromptSupport(val)
    if isinstance(val, dict):
        if set(val) == {"partial"}:
            constraint = val["partial"]
            if not isinstance(constraint, str) or not constraint:
                raise ConfigError(f"{path}.partial", "partial support needs constraint text")
            return PromptSupport("partial", constraint)
        raise ConfigError(path, f"expected {{partial: constraint}}, got keys {sorted(val)}")
    raise ConfigError(path, f"expected support level, got {type(val).__name__}")


def parse_fingerprint(doc) -> AlgorithmFingerprint:
    """Validate a fingerprint document; unknown fields are rejected."""
    _require_mapping(doc, "fingerprint")
    _reject_unknown(doc, {"id", "adaptation", "init_modes", "editing", "seg_subtypes",
                          "scope", "prompt_support", "native_patch", "trained_modalities"}, "")
    fid = _get_str(doc, "id", "", required=True)

    init_modes = {}
    modes_doc = doc.get("init_modes", {})
    _require_mapping(modes_doc, "init_modes")
    for mode, level in modes_doc.items():
        if mode not in INIT_MODES:
            raise ConfigError(f"init_modes.{mode}", f"unknown initialisation mode; expected one of {list(INIT_MODES)}")
        if level not in SUPPORT_LEVELS:
            raise ConfigError(f"init_modes.{mode}", f"must be one of {list(SUPPORT_LEVELS)}, got {level!r}")
        init_modes[mode] = level

    subtypes = doc.get("seg_subtypes", ["binary"])
    if not isinstance(subtypes, list) or not subtypes:
        raise ConfigError("seg_subtypes", "expected a nonempty list")
    for s in subtypes:
        if s not in SEG_SUBTYPES:
            raise ConfigError("seg_subtypes", f"unknown subtype {s!r}; expected one of {list(SEG_SUBTYPES)}")

    support = {}
    support_doc = doc.get("prompt_support", {})
    _require_mapping(support_doc, "prompt_support")
    for kind, val in support_doc.items():
        if kind not in PROMPT_TYPES:
            raise ConfigError(f"prompt_support.{kind}", f"unknown prompt type; expected one of {list(PROMPT_TYPES)}")
        support[kind] = _parse_support(val, f"prompt_support.{kind}")

    patch_doc = doc.get("native_patch", {})
    _require_mapping(patch_doc, "native_patch")
    _reject_unknown(patch_doc, {"voxel_count", "channels", "adaptive"}, "native_patch")
    vc = patch_doc.get("voxel_count", "adaptive")
    if isinstance(vc, list):
        if len(vc) != 3 or not all(isinstance(x, int) and x > 0 for x in vc):
            raise ConfigError("native_patch.voxel_count", "expected 3 positive integers or 'adaptive'")
        vc = tuple(vc)
    elif vc != "adaptive":
        raise ConfigError("native_patch.voxel_count", f"expected 3 positive integers or 'adaptive', got {vc!r}")
    channels = patch_doc.get("channels", 1)
    if not isinstance(channels, int) or channels < 1:
        raise ConfigError("native_patch.channels", f"expected positive integer, got {channels!r}")
    adaptive = patch_doc.get("adaptive", vc == "adaptive")
    if not isinstance(adaptive, bool):
        raise ConfigError("native_patch.adaptive", "expected boolean")

    modalities = doc.get("trained_modalities", [])
    if not isinstance(modalities, list) or not all(isinstance(m, str) for m in modalities):
        raise ConfigError("trained_modalities", "expected a list of modality tags")

    return AlgorithmFingerprint(
        id=fid,
        adaptation=_get_str(doc, "adaptation", "", choices=("static", "adaptive"), default="static"),
        init_modes=init_modes,
        editing=_get_str(doc, "editing", "", choices=EDITING_MODES, default="none"),
        seg_subtypes=tuple(subtypes),
        scope=_get_str(doc, "scope", "", choices=("general", "target-specific"), default="general"),
        prompt_support=support,
        native_patch=NativePatch(vc, channels, adaptive),
        trained_modalities=tuple(modalities),
    )


def fingerprint_to_doc(fp: AlgorithmFingerprint) -> dict:
    support = {}
    for kind, sup in fp.prompt_support.items():
        support[kind] = {"partial": sup.constraint} if sup.level == "partial" else sup.level
    vc = fp.native_patch.voxel_count
    return {
        "id": fp.id,
        "adaptation": fp.adaptation,
        "init_modes": dict(fp.init_modes),
        "editing": fp.editing,
        "seg_subtypes": list(fp.seg_subtypes),
        "scope": fp.scope,
        "prompt_support": support,
        "native_patch": {
            "voxel_count": list(vc) if isinstance(vc, tuple) else vc,
            "channels": fp.native_patch.channels,
            "adaptive": fp.native_patch.adaptive,
        },
        "trained_modalities": list(fp.trained_modalities),
    }


def parse_task(doc) -> TaskDefinition:
    """Validate a task document; the NSD tolerance is mandatory."""
    _require_mapping(doc, "task")
    _reject_unknown(doc, {"id", "dataset_path", "seg_subtype", "target_labels",
                          "largest_component", "patch_config", "prompt_spec",
                          "nsd_tolerance_mm", "convergence_target"}, "")
    tid = _get_str(doc, "id", "", required=True)
    dataset_path = _get_str(doc, "dataset_path", "", required=True)
    seg_subtype = _get_str(doc, "seg_subtype", "", choices=SEG_SUBTYPES, required=True)

    labels = doc.get("target_labels")
    if not isinstance(labels, list) or not labels or not all(isinstance(x, int) and x > 0 for x in labels):
        raise ConfigError("target_labels", "expected a nonempty list of positive label ids")

    largest = doc.get("largest_component", False)
    if not isinstance(largest, bool):
        raise ConfigError("largest_component", "expected boolean")

    patch_doc = doc.get("patch_config", {})
    _require_mapping(patch_doc, "patch_config")
    _reject_unknown(patch_doc, {"voxel_count", "channels", "modality", "sequence"}, "patch_config")
    vc = patch_doc.get("voxel_count")
    if vc is not None:
        if not isinstance(vc, list) or len(vc) != 3 or not all(isinstance(x, int) and x > 0 for x in vc):
            raise ConfigError("patch_config.voxel_count", "expected 3 positive integers")
        vc = tuple(vc)
    channels = patch_doc.get("channels", 1)
    if not isinstance(channels, int) or channels < 1:
        raise ConfigError("patch_config.channels", f"expected positive integer, got {channels!r}")
    patch = PatchConfig(vc, channels,
                        _get_str(patch_doc, "modality", "patch_config."),
                        _get_str(patch_doc, "sequence", "patch_config."))

    spec_doc = doc.get("prompt_spec")
    if spec_doc is None:
        raise ConfigError("prompt_spec", "required field missing")
    _require_mapping(spec_doc, "prompt_spec")
    _reject_unknown(spec_doc, {"types", "points_per_class"}, "prompt_spec")
    types = spec_doc.get("types")
    if not isinstance(types, list) or not types:
        raise ConfigError("prompt_spec.types", "expected a nonempty list of prompt types")
    for t in types:
        if t not in PROMPT_TYPES:
            raise ConfigError("prompt_spec.types", f"unknown prompt type {t!r}; expected one of {list(PROMPT_TYPES)}")
    ppc = spec_doc.get("points_per_class", 1)
    if not isinstance(ppc, int) or ppc < 1:
        raise ConfigError("prompt_spec.points_per_class", f"budget must be >= 1, got {ppc!r}")

    tol = doc.get("nsd_tolerance_mm")
    if tol is None:
        raise ConfigError("nsd_tolerance_mm", "required field missing (boundary-metric tolerance has no default)")
    if not isinstance(tol, (int, float)) or isinstance(tol, bool) or tol < 0:
        raise ConfigError("nsd_tolerance_mm", f"expected non-negative number, got {tol!r}")

    target_doc = doc.get("convergence_target")
    if target_doc is None:
        raise ConfigError("convergence_target", "required field missing")
    _require_mapping(target_doc, "convergence_target")
    _reject_unknown(target_doc, {"target_dice", "baseline_dices"}, "convergence_target")
    if ("target_dice" in target_doc) == ("baseline_dices" in target_doc):
        raise ConfigError("convergence_target", "give exactly one of target_dice or baseline_dices")
    if "target_dice" in target_doc:
        td = target_doc["target_dice"]
        if not isinstance(td, (int, float)) or isinstance(td, bool) or not 0 <= td <= 1:
            raise ConfigError("convergence_target.target_dice", f"expected number in [0, 1], got {td!r}")
        target = ConvergenceTarget(tid, float(td), "configured")
    else:
        scores = target_doc["baseline_dices"]
        if not isinstance(scores, list) or not scores or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and 0 <= x <= 1 for x in scores):
            raise ConfigError("convergence_target.baseline_dices", "expected a nonempty list of Dice values in [0, 1]")
        target = ConvergenceTarget(tid, quantile(scores, 0.25), "computed-from-baseline")

    return TaskDefinition(
        id=tid,
        dataset_path=dataset_path,
        seg_subtype=seg_subtype,
        target_labels=tuple(labels),
        prompt_spec=PromptSpec(tuple(types), ppc),
        nsd_tolerance_mm=float(tol),
        convergence_target=target,
        patch_config=patch,
        largest_component=largest,
    )


def task_to_doc(t: TaskDefinition) -> dict:
    doc = {
        "id": t.id,
        "dataset_path": t.dataset_path,
        "seg_subtype": t.seg_subtype,
        "target_labels": list(t.target_labels),
        "largest_component": t.largest_component,
        "patch_config": {
            "voxel_count": list(t.patch_config.voxel_count) if t.patch_config.voxel_count else None,
            "channels": t.patch_config.channels,
            "modality": t.patch_config.modality,
            "sequence": t.patch_config.sequence,
        },
        "prompt_spec": {
            "types": list(t.prompt_spec.types),
            "points_per_class": t.prompt_spec.points_per_class,
        },
        "nsd_tolerance_mm": t.nsd_tolerance_mm,
        "convergence_target": {"target_dice": t.convergence_target.target_dice},
    }
    doc["patch_config"] = {k: v for k, v in doc["patch_config"].items() if v is not None}
    return doc


def load_fingerprint(path) -> AlgorithmFingerprint:
    with open(path) as f:
        return parse_fingerprint(yaml.safe_load(f))


def load_task(path) -> TaskDefinition:
    with open(path) as f:
        return parse_task(yaml.safe_load(f))


# --- compatibility --------------------------------------------------------


def _pair_compatible(fp: AlgorithmFingerprint, t: TaskDefinition) -> tuple[bool, str]:
    """(compatible, reason-if-not) for a single (algorithm, task) pair."""
    if t.seg_subtype not in fp.seg_subtypes:
        return False, f"subtype {t.seg_subtype} unsupported"
    for kind in t.prompt_spec.types:
        if not fp.supports_prompt(kind):
            return False, f"prompt type {kind} unsupported"
    if fp.native_patch.channels < t.patch_config.channels and not fp.native_patch.adaptive:
        return False, (f"needs {t.patch_config.channels} channels, fingerprint is "
                       f"non-adaptive with {fp.native_patch.channels}")
    if fp.editing == "none":
        return False, "no editing support; iterative refinement impossible"
    return True, ""


def common_prompt_config(fps: list[AlgorithmFingerprint], t: TaskDefinition) -> PromptConfig:
    """Prompt configuration supported by every algorithm under comparison.

    Intersects supported prompt types across fingerprints, restricted to
    the task's requested types; the strongest shared constraint wins, so
    a single one-point-per-class algorithm caps everyone's point budget.
    """
    if not fps:
        raise ValueError("need at least one fingerprint")
    types = tuple(k for k in t.prompt_spec.types if all(fp.supports_prompt(k) for fp in fps))
    if not types:
        raise NoCommonPrompt(
            f"task {t.id}: no prompt type in {list(t.prompt_spec.types)} is supported by all of "
            f"{[fp.id for fp in fps]}")
    constraints = []
    for kind in types:
        for fp in fps:
            sup = fp.prompt_support[kind]
            if sup.level == "partial" and sup.constraint not in constraints:
                constraints.append(sup.constraint)
    ppc = t.prompt_spec.points_per_class
    if ONE_POINT_PER_CLASS in constraints:
        ppc = 1
    return PromptConfig(types, ppc, tuple(sorted(constraints)))


def resolve_compatibility(fps: list[AlgorithmFingerprint], tasks: list[TaskDefinition],
                          budget: int = 100, master_seed: int = 0) -> ExperimentPlan:
    """Cross-reference fingerprints with tasks into a runnable plan.

    A pair enters the plan iff the task's subtype, prompt types, and
    channel count are supported; partial support is included but its
    constraint text is attached and later enforced by the simulator.
    A modality mismatch does not exclude a pair; it is recorded as
    out-of-distribution metadata. An empty plan is a valid result.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    entries: list[PlanEntry] = []
    warnings: list[str] = []
    for t in tasks:
        eligible = []
        for fp in fps:
            ok, reason = _pair_compatible(fp, t)
            if ok:
                eligible.append(fp)
            else:
                warnings.append(f"{fp.id} x {t.id}: excluded ({reason})")
        if not eligible:
            warnings.append(f"{t.id}: no compatible algorithm")
            continue
        try:
            config = common_prompt_config(eligible, t)
        except NoCommonPrompt as e:
            warnings.append(str(e))
            continue
        for fp in eligible:
            notes = tuple(f"{kind}: {fp.prompt_support[kind].constraint}"
                          for kind in config.types
                          if fp.prompt_support[kind].level == "partial")
            ood = bool(fp.trained_modalities) and t.patch_config.modality is not None \
                and t.patch_config.modality not in fp.trained_modalities
            entries.append(PlanEntry(
                algorithm_id=fp.id,
                task_id=t.id,
                prompt_config=config,
                editing=fp.editing,
                budget=budget,
                master_seed=master_seed,
                constraint_notes=notes,
                out_of_distribution=ood,
            ))
    if not entries:
        warnings.append("empty plan: no compatible (algorithm, task) pairs")
    return ExperimentPlan(
        entries=entries,
        tasks={t.id: t for t in tasks if any(e.task_id == t.id for e in entries)},
        fingerprints={fp.id: fp for fp in fps if any(e.algorithm_id == fp.id for e in entries)},
        warnings=warnings,
    )


# --- plan (de)serialisation ------------------------------------------------


def plan_to_doc(plan: ExperimentPlan) -> dict:
    return {
        "entries": [{
            "algorithm_id": e.algorithm_id,
            "task_id": e.task_id,
            "prompt_config": {
                "types": list(e.prompt_config.types),
                "points_per_class": e.prompt_config.points_per_class,
                "constraints": list(e.prompt_config.constraints),
            },
            "editing": e.editing,
            "budget": e.budget,
            "master_seed": e.master_seed,
            "constraint_notes": list(e.constraint_notes),
            "out_of_distribution": e.out_of_distribution,
        } for e in plan.entries],
        "tasks": {tid: task_to_doc(t) for tid, t in plan.tasks.items()},
        "fingerprints": {fid: fingerprint_to_doc(fp) for fid, fp in plan.fingerprints.items()},
        "warnings": list(plan.warnings),
    }


def plan_from_doc(doc: dict) -> ExperimentPlan:
    _require_mapping(doc, "plan")
    tasks = {tid: parse_task(tdoc) for tid, tdoc in doc.get("tasks", {}).items()}
    fps = {fid: parse_fingerprint(fdoc) for fid, fdoc in doc.get("fingerprints", {}).items()}
    entries = []
    for e in doc.get("entries", []):
        pc = e["prompt_config"]
        entries.append(PlanEntry(
            algorithm_id=e["algorithm_id"],
            task_id=e["task_id"],
            prompt_config=PromptConfig(tuple(pc["types"]), pc["points_per_class"],
                                       tuple(pc.get("constraints", []))),
            editing=e["editing"],
            budget=e["budget"],
            master_seed=e["master_seed"],
            constraint_notes=tuple(e.get("constraint_notes", [])),
            out_of_distribution=e.get("out_of_distribution", False),
        ))
    return ExperimentPlan(entries, tasks, fps, list(doc.get("warnings", [])))
