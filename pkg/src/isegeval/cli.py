"""Operator entry point: validate configs, plan experiments, run them, report.

Plans are materialised to disk between ``plan`` and ``run`` so an
evaluation is auditable and re-runnable from its plan file alone.

Exit codes: 0 success, 2 configuration/input error, 3 partial failure
(skipped plan entries, errored samples, or audit violations).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .errors import ConfigError, HarnessError
from .mocks import BEHAVIOR_VARIANTS, MockBehavior, serve
from .planning import (
    load_fingerprint,
    load_task,
    plan_from_doc,
    plan_to_doc,
    resolve_compatibility,
)
from .report import audit_points, emit_result, load_result, render_summary
from .simulator import SimulationConfig, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _collect_configs(directory: Path, loader, label: str):
    """(parsed configs, diagnostics) for every YAML document in a directory."""
    items, diagnostics = [], []
    paths = sorted(Path(directory).glob("*.yaml")) + sorted(Path(directory).glob("*.yml"))
    if not paths:
        diagnostics.append(f"{directory}: no {label} configs found")
        return items, diagnostics
    for path in paths:
        try:
            items.append(loader(path))
        except ConfigError as e:
            diagnostics.append(f"{path}: {e}")
        except (OSError, yaml.YAMLError) as e:
            diagnostics.append(f"{path}: unreadable ({e})")
    return items, diagnostics


def cmd_validate(args) -> int:
    code = EXIT_OK
    for directory, loader, label in ((args.fingerprints, load_fingerprint, "fingerprint"),
                                     (args.tasks, load_task, "task")):
        if directory is None:
            continue
        items, diagnostics = _collect_configs(directory, loader, label)
        for d in diagnostics:
            print(f"error: {d}", file=sys.stderr)
            code = EXIT_CONFIG
        for item in items:
            print(f"ok: {label} {item.id}")
    return code


def cmd_plan(args) -> int:
    fps, diag_f = _collect_configs(args.fingerprints, load_fingerprint, "fingerprint")
    tasks, diag_t = _collect_configs(args.tasks, load_task, "task")
    for d in diag_f + diag_t:
        print(f"error: {d}", file=sys.stderr)
    if diag_f + diag_t or not fps or not tasks:
        return EXIT_CONFIG
    plan = resolve_compatibility(fps, tasks, budget=args.budget, master_seed=args.seed)
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"plan: {len(plan.entries)} experiment(s) over {len(plan.tasks)} task(s) "
          f"and {len(plan.fingerprints)} algorithm(s)")
    for e in plan.entries:
        constraints = f" constraints={list(e.prompt_config.constraints)}" if e.prompt_config.constraints else ""
        ood = " [out-of-distribution]" if e.out_of_distribution else ""
        print(f"  {e.task_id} x {e.algorithm_id}: prompts={list(e.prompt_config.types)} "
              f"k={e.prompt_config.points_per_class} editing={e.editing} "
              f"budget={e.budget} seed={e.master_seed}{constraints}{ood}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(plan_to_doc(plan), indent=1, sort_keys=True) + "\n")
    print(f"plan written to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        plan = plan_from_doc(json.loads(Path(args.plan).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, ConfigError) as e:
        print(f"error: cannot load plan {args.plan}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        endpoints = yaml.safe_load(Path(args.endpoints).read_text())
    except (OSError, yaml.YAMLError) as e:
        print(f"error: cannot load endpoints {args.endpoints}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(endpoints, dict):
        print("error: endpoints file must map algorithm id -> host:port", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None or args.budget is not None:
        for e in plan.entries:
            if args.seed is not None:
                e.master_seed = args.seed
            if args.budget is not None:
                e.budget = args.budget
    budgets = {e.budget for e in plan.entries} or {100}
    seeds = {e.master_seed for e in plan.entries} or {0}
    cfg = SimulationConfig(budget=max(budgets), master_seed=min(seeds))

    result = run_experiment(plan, Path(args.data), endpoints, cfg, Path(args.out),
                            workers=args.workers)
    emit_result(result, args.out)
    skipped = [e for e in result.entries if e.skipped]
    errored = [err for e in result.entries for err in e.sample_errors]
    if any(e.summary is not None for e in result.entries):
        print(render_summary(result))
    for e in skipped:
        print(f"skipped: {e.dir_name}: {e.skipped}", file=sys.stderr)
    for err in errored:
        print(f"sample error: {err}", file=sys.stderr)
    print(f"results written to {args.out}")
    return EXIT_OK if result.ok else EXIT_PARTIAL


def cmd_report(args) -> int:
    try:
        result = load_result(args.out)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: cannot load results from {args.out}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    emit_result(result, args.out)
    if any(e.summary is not None for e in result.entries):
        print(render_summary(result))
    else:
        print("no summaries (all entries skipped or errored)", file=sys.stderr)
    if args.audit:
        if args.data is None:
            print("error: --audit needs --data <dataset root>", file=sys.stderr)
            return EXIT_CONFIG
        audit = audit_points(args.out, args.data)
        print(f"audit: {audit.fg_points} foreground / {audit.bg_points} background "
              f"points checked, {len(audit.violations)} violation(s)")
        for v in audit.violations[:20]:
            print(f"  {v}", file=sys.stderr)
        if not audit.ok:
            return EXIT_PARTIAL
    return EXIT_OK


def cmd_serve_mock(args) -> int:
    behavior = MockBehavior(args.behavior, radius_vox=args.radius, dilate_vox=args.dilate,
                            perfect_at=args.after, flip_prob=args.flip_prob)

    def announce(server):
        print(f"mock-{behavior.variant} listening on {server.endpoint}", flush=True)

    serve(behavior, args.cheat_labels, host=args.host, port=args.port,
          seed=args.seed, workspace=args.workspace, announce=announce)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isegeval",
        description="Evaluation harness for interactive volumetric segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check fingerprint and task configs")
    p.add_argument("--fingerprints", type=Path, help="directory of fingerprint YAMLs")
    p.add_argument("--tasks", type=Path, help="directory of task YAMLs")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="resolve compatible experiments into a plan file")
    p.add_argument("--fingerprints", type=Path, required=True)
    p.add_argument("--tasks", type=Path, required=True)
    p.add_argument("--budget", type=int, default=100, help="editing steps per sample")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=Path("plan.json"), help="plan file to write")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="execute a plan against live applications")
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset root")
    p.add_argument("--endpoints", type=Path, required=True,
                   help="YAML/JSON map of algorithm id -> host:port")
    p.add_argument("--seed", type=int, default=None, help="override every entry's master seed")
    p.add_argument("--budget", type=int, default=None, help="override every entry's budget")
    p.add_argument("--workers", type=int, default=1, help="parallel samples per entry")
    p.add_argument("--out", type=Path, required=True, help="results directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="regenerate tables/curves from a results directory")
    p.add_argument("--out", type=Path, required=True, help="results directory")
    p.add_argument("--audit", action="store_true",
                   help="verify every recorded point lies in its claimed error region")
    p.add_argument("--data", type=Path, help="dataset root (needed for --audit)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve-mock", help="run a reference mock application")
    p.add_argument("--behavior", choices=BEHAVIOR_VARIANTS, required=True)
    p.add_argument("--radius", type=int, default=8, help="ball radius (voxels)")
    p.add_argument("--dilate", type=int, default=0, help="dilation steps for dilated_truth")
    p.add_argument("--after", type=int, default=0, help="perfect_after threshold iteration")
    p.add_argument("--flip-prob", type=float, default=0.0, help="noisy_oracle flip probability")
    p.add_argument("--cheat-labels", type=Path, required=True,
                   help="directory of reference annotations the mock may consult")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="mock-side noise seed")
    p.add_argument("--workspace", type=Path, default=None,
                   help="directory for prediction files (default: fresh temp dir)")
    p.set_defaults(func=cmd_serve_mock)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HarnessError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
