"""HTTP API over a project: review ratio curves and breakpoint candidates,
preview the water-deficit course for a candidate, and commit selections.

Endpoints (JSON unless noted):

* ``GET  /api/plots`` — plots, treatments, varieties, selection status;
* ``GET  /api/plots/{plot}/{treatment}/ratio`` — ratio series plus the
  review context (LWP readings, VPD-excluded days, phenology window);
* ``GET  /api/plots/{plot}/{treatment}/candidates``;
* ``GET  /api/plots/{plot}/{treatment}/ks-preview?candidate=i`` — the Ks
  course that candidate i (one-based) would produce, without committing;
* ``POST /api/plots/{plot}/{treatment}/selection`` — commit a selection
  (201); committing again without ``force`` is a 409 conflict.

A static UI directory can be mounted at the web root.
"""

from __future__ import annotations

import csv
from datetime import date as Date
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import ValidationError, VinesenseError
from .kstar import Candidate, build_kcb, compute_ks
from .pipeline import (
    build_calendar,
    commit_selection,
    read_candidates,
    read_dailies,
    read_selection,
    read_transpiration,
)
from .project import Project


class SelectionRequest(BaseModel):
    """Either a one-based candidate index or an explicit breakpoint."""

    candidate: int | None = None
    t: str | None = None
    gdd_cum: float | None = None
    k_star: float | None = None
    author: str | None = None
    force: bool = False


def _check_group(project: Project, plot_id: str, treatment: str):
    plot = project.config.plots.get(plot_id)
    if plot is None:
        raise HTTPException(status_code=404, detail=f"unknown plot {plot_id!r}")
    if treatment not in plot.treatments:
        raise HTTPException(
            status_code=404,
            detail=f"unknown treatment {treatment!r} for plot {plot_id}",
        )
    return plot


def create_app(project_root: str | Path, static_dir: str | Path | None = None) -> FastAPI:
    project = Project(project_root)
    app = FastAPI(title="vinesense", version="0.1.0")

    @app.exception_handler(VinesenseError)
    async def _domain_error(request, exc: VinesenseError):
        status = 400 if isinstance(exc, ValidationError) else 500
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/api/plots")
    def plots():
        out = []
        for plot_id, plot in project.config.plots.items():
            for treatment in plot.treatments:
                out.append(
                    {
                        "plot_id": plot_id,
                        "treatment": treatment,
                        "variety": plot.variety,
                        "site": plot.site,
                        "region": plot.region,
                        "selection": read_selection(project, plot_id, treatment),
                    }
                )
        return out

    @app.get("/api/plots/{plot_id}/{treatment}/ratio")
    def ratio(plot_id: str, treatment: str):
        _check_group(project, plot_id, treatment)
        doc = read_candidates(project, plot_id, treatment)
        name = f"ratio_{plot_id}_{treatment}.csv"
        project.check_fresh([name])
        points = []
        with open(project.artifact_path(name), encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                points.append(
                    {
                        "date": rec["date"],
                        "gdd_cum": float(rec["gdd_cum"]),
                        "ratio": float(rec["ratio"]) if rec["ratio"] else None,
                    }
                )
        lwp_path = project.raw_path("lwp.csv")
        lwp = []
        if lwp_path.exists():
            with open(lwp_path, encoding="utf-8", newline="") as fh:
                for rec in csv.DictReader(fh):
                    if (rec["plot_id"], rec["treatment"]) == (plot_id, treatment):
                        lwp.append(
                            {"date": rec["date"], "lwp_mpa": float(rec["lwp_mpa"])}
                        )
        return {
            "plot_id": plot_id,
            "treatment": treatment,
            "points": points,
            "lwp": lwp,
            "lwp_stress_mpa": doc["lwp_stress_mpa"],
            "first_stress_date": doc["first_stress_date"],
            "vpd_excluded_dates": doc["vpd_excluded_dates"],
            "phenology_window": doc["phenology_window"],
        }

    @app.get("/api/plots/{plot_id}/{treatment}/candidates")
    def candidates(plot_id: str, treatment: str):
        _check_group(project, plot_id, treatment)
        return read_candidates(project, plot_id, treatment)

    @app.get("/api/plots/{plot_id}/{treatment}/ks-preview")
    def ks_preview(plot_id: str, treatment: str, candidate: int):
        plot = _check_group(project, plot_id, treatment)
        doc = read_candidates(project, plot_id, treatment)
        if not 1 <= candidate <= len(doc["candidates"]):
            raise HTTPException(
                status_code=400,
                detail=f"candidate index {candidate} out of range "
                f"(1..{len(doc['candidates'])})",
            )
        entry = doc["candidates"][candidate - 1]
        dailies = read_dailies(project, plot.site)
        calendar = build_calendar(project, plot_id)
        kcb = build_kcb(
            Candidate(
                date=Date.fromisoformat(entry["date"]),
                gdd_cum=float(entry["gdd_cum"]),
                k_value=float(entry["k_value"]),
            ),
            calendar.gdd_of("budbreak"),
        )
        series = read_transpiration(project)[(plot_id, treatment)]
        ks = compute_ks(series, kcb, dailies, ks_cap=project.config.ks_cap)
        return {
            "plot_id": plot_id,
            "treatment": treatment,
            "candidate": candidate,
            "t_kstar": entry["date"],
            "k_star": entry["k_value"],
            "points": [
                {"date": d.isoformat(), "gdd_cum": g, "ks": v}
                for d, g, v in ks.points
            ],
            "clamped_dates": [d.isoformat() for d in ks.clamped_dates],
        }

    @app.post("/api/plots/{plot_id}/{treatment}/selection", status_code=201)
    def selection(plot_id: str, treatment: str, body: SelectionRequest):
        _check_group(project, plot_id, treatment)
        if (
            read_selection(project, plot_id, treatment) is not None
            and not body.force
        ):
            raise HTTPException(
                status_code=409,
                detail=f"selection already committed for {plot_id} "
                f"{treatment}; repeat with force=true to replace it",
            )
        if body.candidate is not None:
            record = commit_selection(
                project, plot_id, treatment,
                choice=body.candidate, author=body.author, force=body.force,
            )
        elif body.t is not None and body.gdd_cum is not None and body.k_star is not None:
            record = commit_selection(
                project, plot_id, treatment,
                author=body.author, force=body.force,
                explicit={
                    "t": body.t, "gdd_cum": body.gdd_cum, "k_star": body.k_star
                },
            )
        else:
            raise HTTPException(
                status_code=400,
                detail="body must carry either 'candidate' or all of "
                "'t', 'gdd_cum', 'k_star'",
            )
        return record

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
