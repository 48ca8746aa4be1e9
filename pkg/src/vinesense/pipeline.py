"""Pipeline stages over a project's artifact store.

Each stage reads raw inputs and/or upstream artifacts, verifies their
freshness via the manifest, and writes its own artifacts. Floats are
serialized with ``repr`` so artifacts round-trip exactly and reruns are
byte-identical.

Stage order: meteo -> sapflow -> candidates -> (selection) -> ks ->
aggregate -> tree / flrti -> report.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import date as Date
from datetime import datetime
from pathlib import Path

import numpy as np

from .aggregate import (
    AggregateRecord,
    FruitSample,
    PhenologyCalendar,
    build_aggregates,
    maturity_date,
)
from .cart import DevianceTreeRegressor
from .errors import PipelineError, ValidationError
from .flrti import FlrtiRegressor, cross_validate as flrti_cv
from .knowledge import apply_shift, check_temporal_order
from .kstar import (
    Candidate,
    CandidateRuleConfig,
    KsSeries,
    build_kcb,
    compute_ks,
    compute_ratio,
    detect_candidates,
    first_stress_date,
    select_kstar,
)
from .meteo import DailyMeteoRecord, HourlyMeteoRecord, daily_from_hourly, with_thermal_time
from .project import Project
from .sapflow import SensorStream, TranspirationSeries, daily_transpiration, smooth_ma

RESPONSES = ("berry_weight", "sugar")

# raw phenology stage names -> knowledge-base concept names
STAGE_CONCEPT = {
    "budbreak": "Budbreak",
    "bloom": "Bloom",
    "nouaison": "Nouaison",
    "veraison": "Veraison",
    "maturity": "Maturity",
    "harvest": "Harvest",
}
CONCEPT_STAGE = {v: k for k, v in STAGE_CONCEPT.items()}


class AwaitingSelection(PipelineError):
    """Breakpoint candidates exist but no selection has been committed."""


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _require_raw(project: Project, names: list[str]) -> list[Path]:
    paths = []
    for name in names:
        path = project.raw_path(name)
        if not path.exists():
            raise PipelineError(
                f"raw input {name} has not been ingested yet"
            )
        paths.append(path)
    return paths


def group_keys(project: Project) -> list[tuple[str, str]]:
    """All (plot_id, treatment) pairs, in declaration order."""
    return [
        (plot_id, treatment)
        for plot_id, plot in project.config.plots.items()
        for treatment in plot.treatments
    ]


# -- raw readers ---------------------------------------------------------


def read_raw_meteo(project: Project, site: str) -> list[HourlyMeteoRecord]:
    [path] = _require_raw(project, [f"meteo_{site}.csv"])
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                HourlyMeteoRecord(
                    timestamp=datetime.fromisoformat(rec["timestamp"]),
                    temp_air=float(rec["temp_air"]),
                    rel_humidity=float(rec["rel_humidity"]),
                    wind_speed=float(rec["wind_speed"]),
                    solar_radiation=float(rec["solar_radiation"]),
                    precipitation=float(rec["precipitation"] or 0.0),
                )
            )
    return out


def read_raw_sapflow(project: Project) -> dict[tuple[str, str], list[SensorStream]]:
    [path] = _require_raw(project, ["sapflow.csv"])
    per_sensor: dict[tuple[str, str, str], list[tuple[datetime, float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            key = (rec["plot_id"], rec["treatment"], rec["sensor_id"])
            per_sensor.setdefault(key, []).append(
                (datetime.fromisoformat(rec["timestamp"]), float(rec["rate_g_per_h"]))
            )
    grouped: dict[tuple[str, str], list[SensorStream]] = {}
    for (plot_id, treatment, sensor_id), rates in sorted(per_sensor.items()):
        grouped.setdefault((plot_id, treatment), []).append(
            SensorStream(
                sensor_id=sensor_id,
                plot_id=plot_id,
                hourly_rate=sorted(rates),
            )
        )
    return grouped


def read_raw_phenology(project: Project) -> dict[str, dict[str, Date]]:
    [path] = _require_raw(project, ["phenology.csv"])
    out: dict[str, dict[str, Date]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault(rec["plot_id"], {})[rec["stage"]] = Date.fromisoformat(
                rec["date"]
            )
    return out


def read_raw_lwp(project: Project) -> dict[tuple[str, str], list[tuple[Date, float]]]:
    [path] = _require_raw(project, ["lwp.csv"])
    out: dict[tuple[str, str], list[tuple[Date, float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault((rec["plot_id"], rec["treatment"]), []).append(
                (Date.fromisoformat(rec["date"]), float(rec["lwp_mpa"]))
            )
    return {key: sorted(vals) for key, vals in out.items()}


def read_raw_fruit(project: Project) -> dict[tuple[str, str], list[FruitSample]]:
    [path] = _require_raw(project, ["fruit.csv"])
    out: dict[tuple[str, str], list[FruitSample]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault((rec["plot_id"], rec["treatment"]), []).append(
                FruitSample(
                    plot_id=rec["plot_id"],
                    treatment=rec["treatment"],
                    date=Date.fromisoformat(rec["date"]),
                    berry_weight=float(rec["berry_weight"]),
                    sugar=float(rec["sugar"]),
                    acidity=float(rec["acidity"]),
                )
            )
    return {key: sorted(vals, key=lambda s: s.date) for key, vals in out.items()}


# -- artifact readers ----------------------------------------------------

DAILY_HEADER = ["date", "t_mean", "t_min", "t_max", "et_ref", "vpd_max", "gdd_cum"]


def read_dailies(project: Project, site: str) -> list[DailyMeteoRecord]:
    name = f"dailies_{site}.csv"
    project.check_fresh([name])
    out = []
    with open(project.artifact_path(name), encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                DailyMeteoRecord(
                    date=Date.fromisoformat(rec["date"]),
                    t_mean=float(rec["t_mean"]),
                    t_min=float(rec["t_min"]),
                    t_max=float(rec["t_max"]),
                    et_ref=float(rec["et_ref"]),
                    vpd_max=float(rec["vpd_max"]),
                    gdd_cum=float(rec["gdd_cum"]),
                )
            )
    return out


def read_transpiration(project: Project) -> dict[tuple[str, str], TranspirationSeries]:
    project.check_fresh(["transpiration.csv"])
    rows: dict[tuple[str, str], list[tuple[Date, float | None]]] = {}
    path = project.artifact_path("transpiration.csv")
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["smoothed"] != "true":
                continue
            value = float(rec["t_mm_per_day"]) if rec["t_mm_per_day"] else None
            rows.setdefault((rec["plot_id"], rec["treatment"]), []).append(
                (Date.fromisoformat(rec["date"]), value)
            )
    return {
        (plot_id, treatment): TranspirationSeries(
            plot_id=plot_id,
            treatment=treatment,
            daily_t=sorted(points),
            smoothed=True,
        )
        for (plot_id, treatment), points in rows.items()
    }


def read_candidates(project: Project, plot_id: str, treatment: str) -> dict:
    name = f"candidates_{plot_id}_{treatment}.json"
    project.check_fresh([name])
    with open(project.artifact_path(name), encoding="utf-8") as fh:
        return json.load(fh)


def read_ks(project: Project, plot_id: str, treatment: str) -> KsSeries:
    name = f"ks_{plot_id}_{treatment}.csv"
    project.check_fresh([name])
    points = []
    with open(project.artifact_path(name), encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            points.append(
                (
                    Date.fromisoformat(rec["date"]),
                    float(rec["gdd_cum"]),
                    float(rec["ks"]) if rec["ks"] else None,
                )
            )
    return KsSeries(
        plot_id=plot_id,
        treatment=treatment,
        points=points,
        ks_cap=project.config.ks_cap,
    )


# -- stages --------------------------------------------------------------


def stage_meteo(project: Project) -> list[str]:
    """Daily summaries with thermal time, one artifact per site."""
    produced = []
    for site_name, site in project.config.sites.items():
        hourly = read_raw_meteo(project, site_name)
        if not hourly:
            raise PipelineError(f"site {site_name}: no meteo records")
        dailies = with_thermal_time(daily_from_hourly(hourly, site))
        rows = [
            [
                d.date.isoformat(),
                _fmt(d.t_mean),
                _fmt(d.t_min),
                _fmt(d.t_max),
                _fmt(d.et_ref),
                _fmt(d.vpd_max),
                _fmt(d.gdd_cum),
            ]
            for d in dailies
        ]
        name = f"dailies_{site_name}.csv"
        project.record_artifact(
            name,
            _csv_text(DAILY_HEADER, rows),
            [project.raw_path(f"meteo_{site_name}.csv")],
        )
        produced.append(name)
    return produced


def stage_sapflow(project: Project) -> list[str]:
    """QC, daily transpiration (mm/day) and smoothing, all groups in one
    artifact with raw and smoothed rows."""
    grouped = read_raw_sapflow(project)
    rows = []
    inputs = [project.raw_path("sapflow.csv")]
    sites_used = set()
    for (plot_id, treatment), streams in sorted(grouped.items()):
        plot = project.config.plots[plot_id]
        site = plot.site
        if site not in sites_used:
            sites_used.add(site)
        radiation = {
            rec.timestamp: rec.solar_radiation
            for rec in read_raw_meteo(project, site)
        }
        series = daily_transpiration(
            streams,
            plot.area_m2,
            project.config.qc,
            radiation,
            plot_id,
            treatment,
        )
        smoothed = smooth_ma(series)
        for tag, s in (("false", series), ("true", smoothed)):
            for day, value in s.daily_t:
                rows.append(
                    [day.isoformat(), plot_id, treatment, _fmt(value), tag]
                )
    for site in sorted(sites_used):
        inputs.append(project.raw_path(f"meteo_{site}.csv"))
    project.record_artifact(
        "transpiration.csv",
        _csv_text(
            ["date", "plot_id", "treatment", "t_mm_per_day", "smoothed"], rows
        ),
        inputs,
    )
    return ["transpiration.csv"]


def build_calendar(project: Project, plot_id: str) -> PhenologyCalendar:
    """Phenology calendar for a plot: observed stage dates, a derived
    nouaison when unobserved (thermal-time shift rule from bloom), each
    stage annotated with its cumulative GDD; the knowledge base's stage
    order is enforced."""
    kb = project.knowledge()
    plot = project.config.plots[plot_id]
    observed = read_raw_phenology(project).get(plot_id, {})
    if not observed:
        raise PipelineError(f"plot {plot_id}: no phenology observations")
    dailies = read_dailies(project, plot.site)
    gdd_by_date = {d.date: d.gdd_cum for d in dailies}

    stage_dates = {
        STAGE_CONCEPT[stage]: date for stage, date in observed.items()
    }
    if "Nouaison" not in stage_dates:
        rules = [
            r for r in kb.shift_rules
            if r.target_stage == "Nouaison"
            and r.variety in (plot.variety, None)
        ]
        if rules:
            # most specific rule wins
            rule = sorted(rules, key=lambda r: r.variety is None)[0]
            stage_dates = apply_shift(rule, stage_dates, gdd_by_date)

    report = check_temporal_order(kb, stage_dates)
    if not report.ok:
        lines = [
            f"{v.before} ({v.date_before}) !< {v.after} ({v.date_after})"
            for v in report.violations
        ]
        raise ValidationError(
            f"plot {plot_id}: stage order violated: " + "; ".join(lines)
        )

    stages = {}
    for concept, date in stage_dates.items():
        if date not in gdd_by_date:
            raise ValidationError(
                f"plot {plot_id}: stage {CONCEPT_STAGE[concept]} dated "
                f"{date} outside daily meteo coverage"
            )
        stages[CONCEPT_STAGE[concept]] = (date, gdd_by_date[date])
    return PhenologyCalendar(plot_id=plot_id, stages=stages)


def _candidate_inputs(project: Project, plot_id: str) -> list[Path]:
    site = project.config.plots[plot_id].site
    paths = [
        project.artifact_path(f"dailies_{site}.csv"),
        project.artifact_path("transpiration.csv"),
        project.raw_path("phenology.csv"),
        project.raw_path("lwp.csv"),
    ]
    kb_path = project.knowledge_path()
    if kb_path.is_relative_to(project.root):
        paths.append(kb_path)
    return paths


def stage_candidates(project: Project) -> list[str]:
    """Ratio series and rule-screened breakpoint candidates per group."""
    kb = project.knowledge()
    transpiration = read_transpiration(project)
    lwp = read_raw_lwp(project)
    produced = []
    for plot_id, treatment in group_keys(project):
        series = transpiration.get((plot_id, treatment))
        if series is None:
            raise PipelineError(
                f"no transpiration series for {plot_id} {treatment}"
            )
        plot = project.config.plots[plot_id]
        dailies = read_dailies(project, plot.site)
        calendar = build_calendar(project, plot_id)
        budbreak = calendar.date_of("budbreak")
        veraison = calendar.date_of("veraison")
        if budbreak is None or veraison is None:
            raise PipelineError(
                f"plot {plot_id}: budbreak and veraison must be dated"
            )
        ratio = compute_ratio(series, dailies)
        cfg = CandidateRuleConfig(
            vpd_limit_kpa=project.config.vpd_limit_kpa,
            lwp_stress_mpa=kb.stress_level(plot.region, plot.variety),
            derivative_epsilon=project.config.derivative_epsilon,
        )
        readings = lwp.get((plot_id, treatment), [])
        candidates, diagnostic = detect_candidates(
            ratio, budbreak, veraison, readings, dailies, cfg
        )
        stress = first_stress_date(readings, cfg.lwp_stress_mpa)
        vpd_excluded = [
            d.date.isoformat()
            for d in dailies
            if budbreak <= d.date <= veraison
            and d.vpd_max > cfg.vpd_limit_kpa
        ]

        ratio_rows = [
            [day.isoformat(), _fmt(gdd), _fmt(value)]
            for day, gdd, value in ratio.points
        ]
        ratio_name = f"ratio_{plot_id}_{treatment}.csv"
        project.record_artifact(
            ratio_name,
            _csv_text(["date", "gdd_cum", "ratio"], ratio_rows),
            _candidate_inputs(project, plot_id),
        )
        doc = {
            "plot_id": plot_id,
            "treatment": treatment,
            "candidates": [
                {
                    "date": c.date.isoformat(),
                    "gdd_cum": c.gdd_cum,
                    "k_value": c.k_value,
                    "passed_rules": list(c.passed_rules),
                }
                for c in candidates
            ],
            "diagnostic": diagnostic,
            "phenology_window": {
                "budbreak": budbreak.isoformat(),
                "veraison": veraison.isoformat(),
            },
            "first_stress_date": stress.isoformat() if stress else None,
            "lwp_stress_mpa": cfg.lwp_stress_mpa,
            "vpd_excluded_dates": vpd_excluded,
        }
        cand_name = f"candidates_{plot_id}_{treatment}.json"
        project.record_artifact(
            cand_name, _json_text(doc), _candidate_inputs(project, plot_id)
        )
        produced += [ratio_name, cand_name]
    return produced


def _candidate_from_doc(entry: dict) -> Candidate:
    return Candidate(
        date=Date.fromisoformat(entry["date"]),
        gdd_cum=float(entry["gdd_cum"]),
        k_value=float(entry["k_value"]),
        passed_rules=tuple(entry["passed_rules"]),
    )


def commit_selection(
    project: Project,
    plot_id: str,
    treatment: str,
    choice: int | str = "auto",
    author: str | None = None,
    force: bool = False,
    explicit: dict | None = None,
) -> dict:
    """Commit the breakpoint selection for one group.

    ``choice`` is 'auto' or a one-based candidate index; ``explicit``
    bypasses the candidate list with a {'t': iso-date, 'gdd_cum': g,
    'k_star': k} override. At most one committed selection per group: a
    second commit requires ``force``. Automatic selections carry no
    timestamp so reruns are byte-identical.
    """
    path = project.selection_path(plot_id, treatment)
    if path.exists() and not force:
        raise ValidationError(
            f"selection already committed for {plot_id} {treatment}; "
            "use force to replace it"
        )
    doc = read_candidates(project, plot_id, treatment)
    if explicit is not None:
        selected = {
            "t_kstar": explicit["t"],
            "t_kstar_gdd": float(explicit["gdd_cum"]),
            "k_star": float(explicit["k_star"]),
            "mode": "explicit",
        }
    else:
        chosen = select_kstar(
            [_candidate_from_doc(e) for e in doc["candidates"]], choice
        )
        selected = {
            "t_kstar": chosen.date.isoformat(),
            "t_kstar_gdd": chosen.gdd_cum,
            "k_star": chosen.k_value,
            "mode": "auto" if choice == "auto" else "manual",
        }
    record = {
        "plot_id": plot_id,
        "treatment": treatment,
        **selected,
        "author": author,
        "timestamp": (
            None
            if selected["mode"] == "auto" and author is None
            else datetime.now().isoformat(timespec="seconds")
        ),
    }
    path.write_text(_json_text(record), encoding="utf-8")
    return record


def read_selection(project: Project, plot_id: str, treatment: str) -> dict | None:
    path = project.selection_path(plot_id, treatment)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def stage_ks(project: Project) -> list[str]:
    """Water-deficit course per group from the committed selections."""
    transpiration = read_transpiration(project)
    produced = []
    pending = []
    for plot_id, treatment in group_keys(project):
        selection = read_selection(project, plot_id, treatment)
        if selection is None:
            pending.append(f"{plot_id} {treatment}")
            continue
        plot = project.config.plots[plot_id]
        dailies = read_dailies(project, plot.site)
        calendar = build_calendar(project, plot_id)
        budbreak_gdd = calendar.gdd_of("budbreak")
        kcb = build_kcb(
            Candidate(
                date=Date.fromisoformat(selection["t_kstar"]),
                gdd_cum=float(selection["t_kstar_gdd"]),
                k_value=float(selection["k_star"]),
            ),
            budbreak_gdd,
        )
        ks = compute_ks(
            transpiration[(plot_id, treatment)],
            kcb,
            dailies,
            ks_cap=project.config.ks_cap,
        )
        rows = [
            [day.isoformat(), _fmt(gdd), _fmt(value)]
            for day, gdd, value in ks.points
        ]
        name = f"ks_{plot_id}_{treatment}.csv"
        project.record_artifact(
            name,
            _csv_text(["date", "gdd_cum", "ks"], rows),
            _candidate_inputs(project, plot_id)
            + [project.selection_path(plot_id, treatment)],
        )
        produced.append(name)
    if pending:
        raise AwaitingSelection(
            "awaiting breakpoint selection for: " + ", ".join(pending)
        )
    return produced


def stage_aggregate(project: Project) -> list[str]:
    """Windowed Ks integrals per group; values rounded to 0.1 in the CSV,
    VerMat is NA when the maturity threshold is never reached."""
    kb = project.knowledge()
    fruit = read_raw_fruit(project)
    rows = []
    inputs = [project.raw_path("fruit.csv"), project.raw_path("phenology.csv")]
    for plot_id, treatment in group_keys(project):
        plot = project.config.plots[plot_id]
        ks = read_ks(project, plot_id, treatment)
        calendar = build_calendar(project, plot_id)
        dailies = read_dailies(project, plot.site)
        gdd_by_date = {d.date: d.gdd_cum for d in dailies}

        maturity_gdd = None
        threshold = kb.maturity_threshold(plot.variety)
        samples = fruit.get((plot_id, treatment), [])
        if threshold is not None and len(samples) >= 2:
            day = maturity_date(samples, threshold)
            if day is not None:
                if day not in gdd_by_date:
                    raise ValidationError(
                        f"maturity date {day} outside daily meteo coverage"
                    )
                maturity_gdd = gdd_by_date[day]

        record = build_aggregates(ks, calendar, maturity_gdd=maturity_gdd)
        rows.append(
            [
                plot_id,
                plot.variety,
                treatment,
                f"{record.nou_harv:.1f}",
                f"{record.nou_ver:.1f}",
                f"{record.ver_harv:.1f}",
                "NA" if record.ver_mat is None else f"{record.ver_mat:.1f}",
            ]
        )
        inputs.append(project.artifact_path(f"ks_{plot_id}_{treatment}.csv"))
    project.record_artifact(
        "aggregates.csv",
        _csv_text(
            ["site", "variety", "treatment", "nou_harv", "nou_ver",
             "ver_harv", "ver_mat"],
            rows,
        ),
        inputs,
    )
    return ["aggregates.csv"]


def read_aggregates(project: Project) -> list[dict]:
    project.check_fresh(["aggregates.csv"])
    with open(
        project.artifact_path("aggregates.csv"), encoding="utf-8", newline=""
    ) as fh:
        return list(csv.DictReader(fh))


def _responses(project: Project) -> dict[tuple[str, str], dict[str, float]]:
    """Per group: fruit response values at the latest sampling date."""
    fruit = read_raw_fruit(project)
    out = {}
    for key, samples in fruit.items():
        last = samples[-1]
        out[key] = {"berry_weight": last.berry_weight, "sugar": last.sugar}
    return out


def stage_tree(project: Project, response: str = "berry_weight") -> list[str]:
    """Regression tree: stress aggregates + variety -> fruit response."""
    if response not in RESPONSES:
        raise ValidationError(
            f"response must be one of {RESPONSES}, got {response!r}"
        )
    aggregates = read_aggregates(project)
    responses = _responses(project)
    have_vermat = all(rec["ver_mat"] != "NA" for rec in aggregates)
    features = ["nou_harv", "nou_ver", "ver_harv"]
    if have_vermat:
        features.append("ver_mat")
    features.append("variety")
    X, y = [], []
    for rec in aggregates:
        key = (rec["site"], rec["treatment"])
        if key not in responses:
            raise PipelineError(
                f"no fruit samples for {key[0]} {key[1]}; cannot build the "
                "tree dataset"
            )
        X.append(
            [float(rec[f]) for f in features[:-1]] + [rec["variety"]]
        )
        y.append(responses[key][response])
    X = np.asarray(X, dtype=object)
    y = np.asarray(y, dtype=float)
    folds = min(int(project.config.cart.get("cv_folds", 10)), len(y))
    model = DevianceTreeRegressor(
        categorical_features=(len(features) - 1,),
        cv_folds=folds,
        random_state=project.config.seed,
        **{
            k: project.config.cart[k]
            for k in ("min_split", "min_leaf", "cp")
            if k in project.config.cart
        },
    ).fit(X, y)
    inputs = [
        project.artifact_path("aggregates.csv"),
        project.raw_path("fruit.csv"),
    ]
    doc = json.loads(model.to_json())
    doc["response"] = response
    doc["features"] = features
    project.record_artifact(f"tree_{response}.json", _json_text(doc), inputs)
    project.record_artifact(
        f"tree_{response}.txt", model.render_text(features), inputs
    )
    return [f"tree_{response}.json", f"tree_{response}.txt"]


def _common_grid(project: Project, keys) -> tuple[np.ndarray, float, float]:
    """Thermal-time grid shared by all groups: from the latest nouaison to
    the earliest harvest across plots."""
    starts, ends = [], []
    for plot_id, _ in keys:
        calendar = build_calendar(project, plot_id)
        nou, harv = calendar.gdd_of("nouaison"), calendar.gdd_of("harvest")
        if nou is None or harv is None:
            raise PipelineError(
                f"plot {plot_id}: nouaison and harvest must be dated"
            )
        starts.append(nou)
        ends.append(harv)
    lo, hi = max(starts), min(ends)
    if hi <= lo:
        raise PipelineError(
            "no common thermal-time window across plots "
            f"(latest nouaison {lo} GDD, earliest harvest {hi} GDD)"
        )
    p = int(project.config.flrti.get("grid_points", 100))
    return np.linspace(lo, hi, p), lo, hi


def stage_flrti(project: Project, response: str = "berry_weight") -> list[str]:
    """Functional regression of the fruit response on the Ks course.

    Ks curves are resampled on a common thermal-time grid over the window
    shared by all groups; (sigma, omega) are chosen by cross-validation
    when there are at least as many curves as folds, otherwise the
    configured defaults are used directly.
    """
    if response not in RESPONSES:
        raise ValidationError(
            f"response must be one of {RESPONSES}, got {response!r}"
        )
    keys = group_keys(project)
    grid, lo, hi = _common_grid(project, keys)
    responses = _responses(project)
    X, y = [], []
    inputs = [project.raw_path("fruit.csv"), project.raw_path("phenology.csv")]
    for plot_id, treatment in keys:
        ks = read_ks(project, plot_id, treatment)
        observed = [(g, v) for _, g, v in ks.points if v is not None]
        if not observed:
            raise PipelineError(f"empty Ks series for {plot_id} {treatment}")
        gdds = np.array([g for g, _ in observed])
        vals = np.array([v for _, v in observed])
        X.append(np.interp(grid, gdds, vals))
        key = (plot_id, treatment)
        if key not in responses:
            raise PipelineError(
                f"no fruit samples for {plot_id} {treatment}"
            )
        y.append(responses[key][response])
        inputs.append(project.artifact_path(f"ks_{plot_id}_{treatment}.csv"))
    X = np.vstack(X)
    y = np.asarray(y)

    cfg = project.config.flrti
    folds = min(int(cfg.get("folds", 10)), len(y))
    selector = cfg.get("selector", "lasso")
    cv_error = None
    if len(y) >= folds >= 2 and cfg.get("cross_validate", True):
        cv_kwargs = {}
        if "sigma_grid" in cfg:
            cv_kwargs["sigma_grid"] = [float(s) for s in cfg["sigma_grid"]]
        if "omega_grid" in cfg:
            cv_kwargs["omega_grid"] = [float(o) for o in cfg["omega_grid"]]
        sigma, omega, table = flrti_cv(
            X, y, grid,
            folds=folds,
            selector=selector,
            seed=project.config.seed,
            **cv_kwargs,
        )
        cv_error = min(row[2] for row in table)
    else:
        sigma = float(cfg.get("sigma", 0.05))
        omega = float(cfg.get("omega", 0.95))
    est = FlrtiRegressor(sigma=sigma, omega=omega, selector=selector)
    est.fit(X, y, grid=grid)
    model = est.model(cv_error=cv_error, seed=project.config.seed)

    doc = model.to_dict()
    doc["response"] = response
    doc["window_gdd"] = [lo, hi]
    project.record_artifact(f"flrti_{response}.json", _json_text(doc), inputs)
    beta_rows = [
        [_fmt(g), _fmt(b)] for g, b in zip(model.grid, model.beta)
    ]
    project.record_artifact(
        f"flrti_beta_{response}.csv",
        _csv_text(["gdd", "beta"], beta_rows),
        inputs,
    )
    return [f"flrti_{response}.json", f"flrti_beta_{response}.csv"]


def stage_report(project: Project, response: str = "berry_weight") -> list[str]:
    """Human-readable project summary."""
    lines = ["# Water-deficit pipeline report", ""]
    lines.append("## Breakpoint selections")
    for plot_id, treatment in group_keys(project):
        doc = read_candidates(project, plot_id, treatment)
        selection = read_selection(project, plot_id, treatment)
        lines.append(f"### {plot_id} {treatment}")
        lines.append(f"- candidates: {len(doc['candidates'])}")
        if doc["diagnostic"]:
            lines.append(f"- no candidates; first eliminating rule: {doc['diagnostic']}")
        if selection:
            lines.append(
                f"- selected t_K* = {selection['t_kstar']} "
                f"({selection['t_kstar_gdd']:.1f} GDD), "
                f"K* = {selection['k_star']:.3f} [{selection['mode']}]"
            )
        else:
            lines.append("- selection pending")
        lines.append("")

    lines.append("## Stress aggregates (trapeze integrals of Ks over GDD)")
    lines.append("")
    lines.append("| site | variety | treatment | NouHarv | NouVer | VerHarv | VerMat |")
    lines.append("|------|---------|-----------|---------|--------|---------|--------|")
    for rec in read_aggregates(project):
        lines.append(
            f"| {rec['site']} | {rec['variety']} | {rec['treatment']} | "
            f"{rec['nou_harv']} | {rec['nou_ver']} | {rec['ver_harv']} | "
            f"{rec['ver_mat']} |"
        )
    lines.append("")

    tree_name = f"tree_{response}.txt"
    if project.artifact_path(tree_name).exists():
        lines.append(f"## Regression tree ({response})")
        lines.append("```")
        lines.append(project.artifact_path(tree_name).read_text().rstrip())
        lines.append("```")
        lines.append("")
    flrti_name = f"flrti_{response}.json"
    if project.artifact_path(flrti_name).exists():
        with open(project.artifact_path(flrti_name), encoding="utf-8") as fh:
            doc = json.load(fh)
        nonzero = sum(1 for b in doc["beta"] if b != 0.0)
        lines.append(f"## Functional regression ({response})")
        lines.append(
            f"- sigma = {doc['sigma']}, omega = {doc['omega']}, "
            f"selector = {doc['selector']}"
        )
        lines.append(
            f"- {nonzero}/{len(doc['beta'])} non-zero coefficient points "
            f"over [{doc['window_gdd'][0]:.1f}, {doc['window_gdd'][1]:.1f}] GDD"
        )
        lines.append("")

    content = "\n".join(lines)
    project.artifact_path("report.md").write_text(content, encoding="utf-8")
    return ["report.md"]


def run_pipeline(
    project: Project, selection: str = "pending", response: str = "berry_weight"
) -> list[str]:
    """Run every stage in order.

    ``selection='auto'`` commits automatic selections for groups without
    one; ``'pending'`` stops with AwaitingSelection instead, so a human can
    review the candidates (the service or CLI ``select`` verb).
    """
    produced = []
    produced += stage_meteo(project)
    produced += stage_sapflow(project)
    produced += stage_candidates(project)
    if selection == "auto":
        for plot_id, treatment in group_keys(project):
            if read_selection(project, plot_id, treatment) is None:
                commit_selection(project, plot_id, treatment, "auto")
    produced += stage_ks(project)
    produced += stage_aggregate(project)
    produced += stage_tree(project, response)
    produced += stage_flrti(project, response)
    produced += stage_report(project, response)
    return produced
