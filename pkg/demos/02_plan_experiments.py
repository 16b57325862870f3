#!/usr/bin/env python3
"""Fingerprint-based experiment planning with the shipped example configs.

Shows how declared capabilities are cross-referenced with task
requirements, how partial support propagates its constraint to every
algorithm under comparison, and what an experiment plan looks like.
"""

from pathlib import Path

from isegeval.planning import (
    common_prompt_config,
    load_fingerprint,
    load_task,
    resolve_compatibility,
)

configs = Path(__file__).resolve().parents[1] / "configs"

fingerprints = [load_fingerprint(p) for p in sorted((configs / "fingerprints").glob("*.yaml"))]
tasks = [load_task(p) for p in sorted((configs / "tasks").glob("*.yaml"))]

print("declared algorithms:")
for fp in fingerprints:
    support = {k: (v.level if v.level != "partial" else f"partial[{v.constraint}]")
               for k, v in fp.prompt_support.items()}
    print(f"  {fp.id:10s} editing={fp.editing:8s} channels={fp.native_patch.channels} "
          f"prompts={support}")

print("\ntasks:")
for t in tasks:
    print(f"  {t.id:12s} {t.seg_subtype}, prompts={list(t.prompt_spec.types)}, "
          f"tolerance={t.nsd_tolerance_mm} mm, target dice={t.convergence_target.target_dice}")

# The common prompt configuration is what every algorithm actually receives:
# the strongest shared constraint binds the whole comparison.
config = common_prompt_config(fingerprints, tasks[0])
print(f"\ncommon prompt config across all four algorithms: types={list(config.types)}, "
      f"points/class={config.points_per_class}, constraints={list(config.constraints)}")

plan = resolve_compatibility(fingerprints, tasks, budget=100, master_seed=0)
print(f"\nresolved plan: {len(plan.entries)} experiments")
for e in plan.entries:
    ood = "  [out-of-distribution]" if e.out_of_distribution else ""
    print(f"  {e.task_id:12s} x {e.algorithm_id:10s} editing={e.editing:8s}{ood}")
for w in plan.warnings:
    print(f"  note: {w}")
