from pathlib import Path

import pytest
import yaml

from isegeval.errors import ConfigError, NoCommonPrompt
from isegeval.planning import (
    ONE_POINT_PER_CLASS,
    common_prompt_config,
    fingerprint_to_doc,
    load_fingerprint,
    load_task,
    parse_fingerprint,
    parse_task,
    plan_from_doc,
    plan_to_doc,
    resolve_compatibility,
    task_to_doc,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def minimal_fingerprint(fid="algo", **extra):
    return {"id": fid, "prompt_support": {"point": "full"},
            "editing": "implicit", **extra}


def minimal_task(tid="task", **extra):
    doc = {
        "id": tid,
        "dataset_path": "data",
        "seg_subtype": "binary",
        "target_labels": [1],
        "prompt_spec": {"types": ["point"], "points_per_class": 1},
        "nsd_tolerance_mm": 2.0,
        "convergence_target": {"target_dice": 0.8},
    }
    doc.update(extra)
    return doc


class TestParseFingerprint:
    def test_point_constraint_from_example_config(self):
        fp = load_fingerprint(CONFIGS / "fingerprints" / "sam_med3d.yaml")
        assert fp.prompt_support["point"].level == "partial"
        assert fp.prompt_support["point"].constraint == ONE_POINT_PER_CLASS

    def test_minimal_defaults(self):
        fp = parse_fingerprint({"id": "bare"})
        assert fp.editing == "none"
        assert fp.adaptation == "static"
        assert fp.seg_subtypes == ("binary",)
        assert fp.native_patch.adaptive

    def test_unknown_prompt_type(self):
        with pytest.raises(ConfigError, match="prompt_support.blob"):
            parse_fingerprint(minimal_fingerprint(prompt_support={"blob": "full"}))

    def test_unknown_top_level_field(self):
        with pytest.raises(ConfigError, match="colour"):
            parse_fingerprint(minimal_fingerprint(colour="blue"))

    def test_missing_id(self):
        with pytest.raises(ConfigError, match="id"):
            parse_fingerprint({"editing": "implicit"})

    def test_partial_requires_constraint_text(self):
        with pytest.raises(ConfigError):
            parse_fingerprint(minimal_fingerprint(prompt_support={"point": {"partial": ""}}))

    def test_bad_editing_mode(self):
        with pytest.raises(ConfigError, match="editing"):
            parse_fingerprint(minimal_fingerprint(editing="sometimes"))

    def test_round_trip_lossless(self):
        for f in (CONFIGS / "fingerprints").glob("*.yaml"):
            fp = load_fingerprint(f)
            assert parse_fingerprint(fingerprint_to_doc(fp)) == fp


class TestParseTask:
    def test_hippocampus_style_valid(self):
        t = load_task(CONFIGS / "tasks" / "hippocampus.yaml")
        assert t.seg_subtype == "binary"
        assert t.target_labels == (1,)
        assert t.prompt_spec.types == ("point",)
        assert t.prompt_spec.points_per_class == 1

    def test_zero_budget_rejected(self):
        doc = minimal_task()
        doc["prompt_spec"]["points_per_class"] = 0
        with pytest.raises(ConfigError, match="points_per_class"):
            parse_task(doc)

    def test_missing_tolerance_rejected(self):
        doc = minimal_task()
        del doc["nsd_tolerance_mm"]
        with pytest.raises(ConfigError, match="nsd_tolerance_mm"):
            parse_task(doc)

    def test_empty_target_labels(self):
        with pytest.raises(ConfigError, match="target_labels"):
            parse_task(minimal_task(target_labels=[]))

    def test_baseline_scores_give_lower_quartile(self):
        doc = minimal_task(convergence_target={"baseline_dices": [0.2, 0.4, 0.6, 0.8]})
        t = parse_task(doc)
        assert t.convergence_target.target_dice == pytest.approx(0.35)
        assert t.convergence_target.source == "computed-from-baseline"

    def test_both_target_forms_rejected(self):
        doc = minimal_task(convergence_target={"target_dice": 0.5, "baseline_dices": [0.5]})
        with pytest.raises(ConfigError):
            parse_task(doc)

    def test_round_trip_lossless(self):
        for f in (CONFIGS / "tasks").glob("*.yaml"):
            t = load_task(f)
            assert parse_task(task_to_doc(t)) == t

    def test_task_text_mentions_subtype_and_id(self):
        t = parse_task(minimal_task("liver"))
        assert "liver" in t.task_text() and "binary" in t.task_text()


class TestCompatibility:
    def test_no_point_support_excluded(self):
        fp = parse_fingerprint(minimal_fingerprint("nopoints",
                                                   prompt_support={"point": "none", "box": "full"}))
        t = parse_task(minimal_task())
        plan = resolve_compatibility([fp], [t])
        assert plan.entries == []
        assert any("prompt type point" in w for w in plan.warnings)

    def test_multichannel_task_excludes_nonadaptive(self):
        single = parse_fingerprint(minimal_fingerprint(
            "mono", native_patch={"voxel_count": [64, 64, 64], "channels": 1, "adaptive": False}))
        multi = parse_fingerprint(minimal_fingerprint(
            "rgb", native_patch={"voxel_count": [64, 64, 64], "channels": 3, "adaptive": False}))
        t = parse_task(minimal_task(patch_config={"channels": 2}))
        plan = resolve_compatibility([single, multi], [t])
        assert [e.algorithm_id for e in plan.entries] == ["rgb"]

    def test_editing_none_excluded(self):
        fp = parse_fingerprint({"id": "oneshot", "prompt_support": {"point": "full"}})
        plan = resolve_compatibility([fp], [parse_task(minimal_task())])
        assert plan.entries == []

    def test_all_example_pairs_compatible(self):
        fps = [load_fingerprint(f) for f in sorted((CONFIGS / "fingerprints").glob("*.yaml"))]
        tasks = [load_task(f) for f in sorted((CONFIGS / "tasks").glob("*.yaml"))]
        assert len(fps) == 4 and len(tasks) == 5
        plan = resolve_compatibility(fps, tasks, budget=100, master_seed=1)
        assert len(plan.entries) == 20
        for e in plan.entries:
            assert e.prompt_config.types == ("point",)
            assert e.prompt_config.points_per_class == 1
            assert ONE_POINT_PER_CLASS in e.prompt_config.constraints

    def test_modality_mismatch_is_metadata_not_exclusion(self):
        fp = parse_fingerprint(minimal_fingerprint("ctonly", trained_modalities=["ct"]))
        t = parse_task(minimal_task(patch_config={"modality": "mri"}))
        plan = resolve_compatibility([fp], [t])
        assert len(plan.entries) == 1
        assert plan.entries[0].out_of_distribution

    def test_monotone_capability_removal(self):
        full = parse_fingerprint(minimal_fingerprint(
            "a", prompt_support={"point": "full", "scribble": "full"}))
        reduced = parse_fingerprint(minimal_fingerprint(
            "a", prompt_support={"point": "full", "scribble": "none"}))
        t = parse_task(minimal_task(prompt_spec={"types": ["point", "scribble"]}))
        plan_full = resolve_compatibility([full], [t])
        plan_reduced = resolve_compatibility([reduced], [t])
        assert len(plan_reduced.entries) <= len(plan_full.entries)
        # removing a capability never adds types to the common config
        if plan_reduced.entries:
            assert set(plan_reduced.entries[0].prompt_config.types) <= \
                set(plan_full.entries[0].prompt_config.types)


class TestCommonPromptConfig:
    def test_intersection(self):
        both = parse_fingerprint(minimal_fingerprint(
            "both", prompt_support={"point": "full", "scribble": "full"}))
        points_only = parse_fingerprint(minimal_fingerprint(
            "pts", prompt_support={"point": "full", "scribble": "none"}))
        t = parse_task(minimal_task(prompt_spec={"types": ["point", "scribble"]}))
        config = common_prompt_config([both, points_only], t)
        assert config.types == ("point",)

    def test_strongest_constraint_wins_across_examples(self):
        fps = [load_fingerprint(f) for f in sorted((CONFIGS / "fingerprints").glob("*.yaml"))]
        t = parse_task(minimal_task(prompt_spec={"types": ["point"], "points_per_class": 3}))
        config = common_prompt_config(fps, t)
        assert ONE_POINT_PER_CLASS in config.constraints
        assert config.points_per_class == 1

    def test_disjoint_support(self):
        a = parse_fingerprint(minimal_fingerprint("a", prompt_support={"point": "full", "box": "none"}))
        b = parse_fingerprint(minimal_fingerprint("b", prompt_support={"point": "none", "box": "full"}))
        t = parse_task(minimal_task(prompt_spec={"types": ["point", "box"]}))
        with pytest.raises(NoCommonPrompt):
            common_prompt_config([a, b], t)

    def test_singleton_consistency_with_plan(self):
        fps = [load_fingerprint(f) for f in sorted((CONFIGS / "fingerprints").glob("*.yaml"))]
        tasks = [load_task(f) for f in sorted((CONFIGS / "tasks").glob("*.yaml"))]
        plan = resolve_compatibility(fps, tasks)
        by_id = {fp.id: fp for fp in fps}
        for e in plan.entries:
            solo = common_prompt_config([by_id[e.algorithm_id]], plan.tasks[e.task_id])
            assert set(e.prompt_config.types) <= set(solo.types)


class TestPlanSerialisation:
    def test_round_trip(self):
        fps = [load_fingerprint(f) for f in sorted((CONFIGS / "fingerprints").glob("*.yaml"))]
        tasks = [load_task(f) for f in sorted((CONFIGS / "tasks").glob("*.yaml"))]
        plan = resolve_compatibility(fps, tasks, budget=50, master_seed=99)
        doc = plan_to_doc(plan)
        back = plan_from_doc(doc)
        assert back.entries == plan.entries
        assert back.tasks == plan.tasks
        assert back.fingerprints == plan.fingerprints

    def test_yaml_safe(self):
        fps = [load_fingerprint(f) for f in sorted((CONFIGS / "fingerprints").glob("*.yaml"))]
        tasks = [load_task(f) for f in sorted((CONFIGS / "tasks").glob("*.yaml"))]
        plan = resolve_compatibility(fps, tasks)
        text = yaml.safe_dump(plan_to_doc(plan))
        assert plan_from_doc(yaml.safe_load(text)).entries == plan.entries
