"""Command-line surface: ptah run|plan|research|write|refine|eval|inspect.

Exit codes are a stable contract: 0 success, 2 configuration/usage, then
3 plan, 4 research, 5 writing, 6 refinement, 7 evaluation failures.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import build_runtime, load_config
from .errors import EXIT_CODES, ConfigError, PtahError, StageFailure, WorkspaceError
from .pipeline import (
    UNTIL_STAGES,
    cmd_run,
    load_packages,
    load_plan,
    make_query,
    run_eval_stage,
    run_research_stage,
    run_tts_stage,
    run_writing_stage,
)
from .workspace import Workspace


@click.group()
@click.option("--workspace", "-w", "workspace_dir", type=click.Path(),
              default="ptah-workspace", show_default=True,
              help="Workspace directory for artifacts.")
@click.option("--config", "-c", "config_path", type=click.Path(exists=False),
              default=None, help="Harness configuration file (YAML).")
@click.option("--mock", is_flag=True, help="Force mock mode regardless of config.")
@click.option("--offline", is_flag=True,
              help="Skip network reachability checks during evaluation.")
@click.pass_context
def main(ctx, workspace_dir, config_path, mock, offline):
    ctx.ensure_object(dict)
    ctx.obj.update(workspace_dir=Path(workspace_dir), config_path=config_path,
                   mock=mock, offline=offline)


def _load_bundle(obj, workspace):
    if obj["config_path"] is None:
        raise ConfigError("a --config file is required")
    cfg = load_config(obj["config_path"])
    if obj["mock"]:
        cfg.mode = "mock"
    return build_runtime(cfg, workspace)


def _fail(exc) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, StageFailure):
        click.echo(f"see the verdicts under the workspace for details", err=True)
        sys.exit(EXIT_CODES.get(exc.stage, 1))
    sys.exit(EXIT_CODES["config"])


def _locked(workspace):
    class _Lock:
        def __enter__(self):
            workspace.acquire_lock()

        def __exit__(self, *exc):
            workspace.release_lock()

    return _Lock()


@main.command()
@click.argument("query")
@click.option("--until", default="refine", type=click.Choice(sorted(UNTIL_STAGES)),
              show_default=True, help="Stop after this stage.")
@click.option("--resume", is_flag=True, help="Continue an existing workspace.")
@click.option("--no-screenshot", is_flag=True, help="Skip the viewport capture.")
@click.option("--skip-mpq", is_flag=True, help="Skip presentation-quality scoring.")
@click.pass_obj
def run(obj, query, until, resume, no_screenshot, skip_mpq):
    """Run the full lifecycle for QUERY."""
    try:
        q = make_query(query)
        workspace = Workspace.init(q, obj["workspace_dir"], resume=resume)
        bundle = _load_bundle(obj, workspace)
        with _locked(workspace):
            cmd_run(query, bundle, workspace, until=until,
                    screenshot=not no_screenshot, offline=obj["offline"],
                    skip_mpq=skip_mpq or no_screenshot)
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo(f"done: stage={workspace.stage} workspace={workspace.root}")


@main.command()
@click.argument("query")
@click.option("--resume", is_flag=True)
@click.pass_obj
def plan(obj, query, resume):
    """Produce and verify the research plan only."""
    try:
        q = make_query(query)
        workspace = Workspace.init(q, obj["workspace_dir"], resume=resume)
        bundle = _load_bundle(obj, workspace)
        with _locked(workspace):
            cmd_run(query, bundle, workspace, until="plan")
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo(f"plan accepted: {workspace.root / 'plan' / 'plan.json'}")


def _open_existing(obj):
    workspace = Workspace.open(obj["workspace_dir"])
    bundle = _load_bundle(obj, workspace)
    return workspace, bundle


@main.command()
@click.pass_obj
def research(obj):
    """Run section research on a planned workspace."""
    try:
        workspace, bundle = _open_existing(obj)
        with _locked(workspace):
            plan_obj = load_plan(workspace)
            run_research_stage(bundle, workspace, workspace.query(), plan_obj)
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo("research packages accepted")


@main.command()
@click.pass_obj
def write(obj):
    """Compose the raw interleaved report from verified packages."""
    try:
        workspace, bundle = _open_existing(obj)
        with _locked(workspace):
            plan_obj = load_plan(workspace)
            packages = load_packages(workspace, plan_obj)
            run_writing_stage(bundle, workspace, workspace.query(), plan_obj, packages)
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo("raw report assembled")


@main.command()
@click.option("--no-screenshot", is_flag=True)
@click.pass_obj
def refine(obj, no_screenshot):
    """Run the six refinement steps ending in the rendered page."""
    try:
        workspace, bundle = _open_existing(obj)
        with _locked(workspace):
            run_tts_stage(bundle, workspace, screenshot=not no_screenshot)
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo("refinement complete")


@main.command(name="eval")
@click.option("--skip-mpq", is_flag=True)
@click.pass_obj
def eval_cmd(obj, skip_mpq):
    """Score the refined report (image, presentation, citation metrics)."""
    try:
        workspace, bundle = _open_existing(obj)
        with _locked(workspace):
            run_eval_stage(bundle, workspace, offline=obj["offline"],
                           skip_mpq=skip_mpq)
    except (ConfigError, WorkspaceError, StageFailure) as exc:
        _fail(exc)
    click.echo("evaluation written under eval/")


@main.command()
@click.argument("what", type=click.Choice(
    ["query", "plan", "packages", "vwm", "verdicts", "report"]))
@click.pass_obj
def inspect(obj, what):
    """Print a human-readable summary of a workspace artifact."""
    try:
        workspace = Workspace.open(obj["workspace_dir"])
    except (WorkspaceError, PtahError) as exc:
        _fail(exc)

    if what == "query":
        q = workspace.query()
        click.echo(f"id={q.id} language={q.language}")
        click.echo(q.text)
        click.echo(f"stage: {workspace.stage}")
    elif what == "plan":
        if not workspace.has_artifact("plan/plan.json"):
            click.echo("no accepted plan yet")
            return
        plan_dict = workspace.read_artifact("plan/plan.json")
        click.echo(f"overview: {plan_dict['overview'][:120]}")
        click.echo(f"{'id':<20} {'goals':>5} {'visuals':>7}  title")
        for sec in plan_dict["sections"]:
            click.echo(f"{sec['id']:<20} {len(sec['goals']):>5} "
                       f"{len(sec.get('visual_specs', [])):>7}  {sec['title']}")
    elif what == "packages":
        research_dir = workspace.root / "research"
        if not research_dir.exists():
            click.echo("no research yet")
            return
        for sub in sorted(research_dir.iterdir()):
            pkg = sub / "package.json"
            if pkg.exists():
                import json

                d = json.loads(pkg.read_text(encoding="utf-8"))
                click.echo(f"{sub.name}: {len(d['key_findings'])} findings, "
                           f"{len(d['evidence'])} evidence, "
                           f"{len(d['references'])} references")
    elif what == "vwm":
        if not workspace.has_artifact("vwm/index.json"):
            click.echo("no visual working memory yet")
            return
        from .vwm import VisualWorkingMemory

        vwm = VisualWorkingMemory.load(workspace)
        for status, count in sorted(vwm.counts_by_status().items()):
            click.echo(f"{status:>12}: {count}")
    elif what == "verdicts":
        for scope_dir in [workspace.root / "plan" / "verdicts"] + sorted(
                (workspace.root / "research").glob("*/verdicts")):
            if not scope_dir.exists():
                continue
            for path in sorted(scope_dir.glob("[0-9][0-9].json")):
                import json

                v = json.loads(path.read_text(encoding="utf-8"))["verdict"]
                click.echo(f"{path.parent.parent.name}/{path.name}: "
                           f"{v['decision']} ({len(v['rule_issues'])} rule issues)")
    elif what == "report":
        for name in ("raw_report", "refined_report"):
            rel = f"report/{name}.json"
            if workspace.has_artifact(rel):
                d = workspace.read_artifact(rel)
                texts = sum(1 for b in d["blocks"] if b["kind"] == "text")
                visuals = sum(1 for b in d["blocks"] if b["kind"] == "visual")
                click.echo(f"{name}: {texts} text blocks, {visuals} visuals, "
                           f"{len(d['references'])} references")


if __name__ == "__main__":
    main()
