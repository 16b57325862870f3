#!/usr/bin/env python3
"""A complete seeded evaluation against a mock application, end to end.

Builds a synthetic sphere dataset, serves a reference mock over the
wire protocol, runs the fully interactive simulation, prints the
summary table, and audits every placed point against its error region.
"""

import tempfile
from pathlib import Path

from isegeval.mocks import MockBehavior, MockSegmenter
from isegeval.planning import parse_fingerprint, parse_task, resolve_compatibility
from isegeval.report import audit_points, emit_result, render_summary
from isegeval.simulator import SimulationConfig, run_experiment
from isegeval.synthetic import make_sphere_dataset

root = Path(tempfile.mkdtemp(prefix="isegeval-demo-"))
print(f"working in {root}\n")

print("1. synthetic dataset: 5 spheres in 48^3 volumes")
make_sphere_dataset(root / "data" / "spheres", 5, shape=(48, 48, 48),
                    radius_range=(5, 10), seed=4)

print("2. plan: one mock algorithm x one task")
fp = parse_fingerprint({
    "id": "mock-perfect_after",
    "editing": "implicit",
    "prompt_support": {"point": "full", "scribble": "full"},
})
task = parse_task({
    "id": "spheres",
    "dataset_path": "spheres",
    "seg_subtype": "binary",
    "target_labels": [1],
    "prompt_spec": {"types": ["point"], "points_per_class": 1},
    "nsd_tolerance_mm": 1.0,
    "convergence_target": {"target_dice": 0.9},
})
plan = resolve_compatibility([fp], [task], budget=20, master_seed=7)

print("3. serve a mock that answers empty until iteration 5, then perfectly")
with MockSegmenter(MockBehavior("perfect_after", perfect_at=5),
                   root / "data" / "spheres" / "labels") as server:
    print(f"   mock online at {server.endpoint}\n4. run the seeded simulation")
    result = run_experiment(plan, root / "data", {"mock-perfect_after": server.endpoint},
                            SimulationConfig(budget=20, master_seed=7), root / "out")

emit_result(result, root / "out")
print("\n5. summary (Init / Iter. N / nAUC per metric, nNoI, NoF):\n")
print(render_summary(result))

audit = audit_points(root / "out", root / "data")
print(f"6. prompt audit: {audit.fg_points} foreground + {audit.bg_points} background "
      f"points, {len(audit.violations)} violations")
print(f"\nartifacts: {root / 'out'}")
for p in sorted((root / "out").glob("*")):
    print(f"  {p.name}")
