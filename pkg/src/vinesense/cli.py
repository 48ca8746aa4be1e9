"""Command-line interface.

Every verb takes ``--project`` pointing at a project directory. Exit
codes: 0 success, 1 validation/configuration error, 2 a breakpoint
selection is still pending, 3 internal error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ConfigurationError, KnowledgeError, ValidationError, VinesenseError
from .pipeline import (
    AwaitingSelection,
    commit_selection,
    group_keys,
    read_candidates,
    read_selection,
    run_pipeline,
    stage_aggregate,
    stage_candidates,
    stage_flrti,
    stage_ks,
    stage_meteo,
    stage_report,
    stage_sapflow,
    stage_tree,
)
from .project import INGESTERS, Project, ingest_meteo

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_AWAITING_SELECTION = 2
EXIT_INTERNAL = 3

project_option = click.option(
    "--project", "project_dir", required=True,
    type=click.Path(exists=True, file_okay=False),
    help="project directory (holds project.json)",
)


@click.group()
def cli():
    """Vineyard water-deficit pipeline."""


@cli.command()
@project_option
@click.option("--kind", required=True,
              type=click.Choice(sorted(INGESTERS)), help="input kind")
@click.option("--site", default=None, help="site name (meteo only)")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
def ingest(project_dir, kind, site, source):
    """Validate and ingest a raw CSV file."""
    project = Project(project_dir)
    if kind == "meteo":
        if site is None:
            raise ValidationError("--site is required for meteo ingestion")
        report = ingest_meteo(project, Path(source), site)
    else:
        report = INGESTERS[kind](project, Path(source))
    click.echo(f"{kind}: {report.accepted} rows accepted, "
               f"{len(report.rejected)} rejected")
    for entry in report.rejected:
        click.echo(f"  line {entry['line']}: {entry['reason']}")


@cli.command()
@project_option
def meteo(project_dir):
    """Daily weather summaries (ETref, VPD, thermal time)."""
    for name in stage_meteo(Project(project_dir)):
        click.echo(name)


@cli.command()
@project_option
def sapflow(project_dir):
    """Quality control and daily transpiration."""
    for name in stage_sapflow(Project(project_dir)):
        click.echo(name)


@cli.command()
@project_option
def candidates(project_dir):
    """Breakpoint candidates per plot and treatment."""
    project = Project(project_dir)
    stage_candidates(project)
    for plot_id, treatment in group_keys(project):
        doc = read_candidates(project, plot_id, treatment)
        if doc["candidates"]:
            click.echo(f"{plot_id} {treatment}: {len(doc['candidates'])} candidate(s)")
            for i, c in enumerate(doc["candidates"], start=1):
                click.echo(
                    f"  [{i}] {c['date']}  {c['gdd_cum']:.1f} GDD  "
                    f"K = {c['k_value']:.3f}"
                )
        else:
            click.echo(
                f"{plot_id} {treatment}: no candidates "
                f"(first eliminating rule: {doc['diagnostic']})"
            )


@cli.command()
@project_option
@click.option("--plot", "plot_id", default=None)
@click.option("--treatment", default=None)
@click.option("--candidate", type=int, default=None,
              help="one-based index into the candidate list")
@click.option("--auto", is_flag=True, help="automatic selection "
              "(largest K, earliest date on ties)")
@click.option("--all", "all_groups", is_flag=True,
              help="with --auto: select for every group without a selection")
@click.option("--author", default=None)
@click.option("--force", is_flag=True, help="replace an existing selection")
def select(project_dir, plot_id, treatment, candidate, auto, all_groups,
           author, force):
    """Commit a breakpoint selection."""
    project = Project(project_dir)
    if all_groups:
        if not auto:
            raise ValidationError("--all requires --auto")
        for pid, tr in group_keys(project):
            if read_selection(project, pid, tr) is None:
                record = commit_selection(project, pid, tr, "auto", author)
                click.echo(
                    f"{pid} {tr}: auto-selected {record['t_kstar']} "
                    f"(K* = {record['k_star']:.3f})"
                )
        return
    if plot_id is None or treatment is None:
        raise ValidationError("--plot and --treatment are required "
                              "(or use --all --auto)")
    if auto == (candidate is not None):
        raise ValidationError("give exactly one of --candidate or --auto")
    choice = "auto" if auto else candidate
    record = commit_selection(
        project, plot_id, treatment, choice, author, force=force
    )
    click.echo(
        f"{plot_id} {treatment}: selected {record['t_kstar']} "
        f"({record['t_kstar_gdd']:.1f} GDD), K* = {record['k_star']:.3f} "
        f"[{record['mode']}]"
    )


@cli.command()
@project_option
@click.option("--auto", is_flag=True,
              help="auto-select for groups without a committed selection")
def ks(project_dir, auto):
    """Daily water-deficit course from the committed selections."""
    project = Project(project_dir)
    if auto:
        for pid, tr in group_keys(project):
            if read_selection(project, pid, tr) is None:
                commit_selection(project, pid, tr, "auto")
    for name in stage_ks(project):
        click.echo(name)


@cli.command()
@project_option
def aggregate(project_dir):
    """Windowed stress aggregates (NouHarv, NouVer, VerHarv, VerMat)."""
    for name in stage_aggregate(Project(project_dir)):
        click.echo(name)


@cli.command()
@project_option
@click.option("--response", default="berry_weight",
              type=click.Choice(["berry_weight", "sugar"]))
def tree(project_dir, response):
    """Regression tree of a fruit response on the stress aggregates."""
    project = Project(project_dir)
    for name in stage_tree(project, response):
        click.echo(name)
    click.echo(project.artifact_path(f"tree_{response}.txt").read_text().rstrip())


@cli.command()
@project_option
@click.option("--response", default="berry_weight",
              type=click.Choice(["berry_weight", "sugar"]))
def flrti(project_dir, response):
    """Functional regression of a fruit response on the Ks course."""
    for name in stage_flrti(Project(project_dir), response):
        click.echo(name)


@cli.command()
@project_option
@click.option("--response", default="berry_weight",
              type=click.Choice(["berry_weight", "sugar"]))
@click.option("--auto", is_flag=True,
              help="run the whole pipeline with automatic selections")
def report(project_dir, response, auto):
    """Project summary report (runs the full pipeline)."""
    project = Project(project_dir)
    run_pipeline(project, selection="auto" if auto else "pending",
                 response=response)
    click.echo(str(project.artifact_path("report.md")))


@cli.command()
@project_option
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.option("--static", "static_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="static UI directory to mount at the web root")
def serve(project_dir, host, port, static_dir):
    """Serve the review API (and optionally the browser UI)."""
    import uvicorn

    from .service import create_app

    app = create_app(project_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Abort:
        return EXIT_INTERNAL
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_VALIDATION
    except click.exceptions.Exit as exc:
        return EXIT_OK if exc.exit_code == 0 else EXIT_VALIDATION
    except AwaitingSelection as exc:
        click.echo(f"awaiting selection: {exc}", err=True)
        return EXIT_AWAITING_SELECTION
    except (ValidationError, ConfigurationError, KnowledgeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except VinesenseError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
