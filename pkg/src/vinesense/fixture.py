"""Deterministic synthetic demo project.

``build_fixture_project(root, seed)`` writes a complete, ready-to-run
project: configuration, knowledge file and ingested raw inputs for one
weather site and six plots (two irrigation treatments each). The season is
fully synthetic but structured like a real one:

* hourly weather April 1 - October 15 with a smooth seasonal course and
  three heat-spike days (daily maximum VPD above the 3.5 kPa limit);
* per-group sap flow whose transpiration-to-demand ratio follows a
  logistic rise to a plateau, then a slow stress decline;
* predawn LWP readings that cross the stress threshold a few days after
  the plateau onset, so each group ends up with a handful (4-9) of
  breakpoint candidates;
* fruit samples whose sugar/acidity ratio reaches the variety maturity
  threshold for every group except one (its VerMat aggregate is NA).

Everything is derived from one seed; rebuilding with the same seed yields
byte-identical files.

Run directly: ``python3 -m vinesense.fixture <directory> [seed]``.
"""

from __future__ import annotations

import json
import math
import sys
from datetime import date as Date
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .knowledge import default_kb_path
from .kstar import CandidateRuleConfig, compute_ratio, detect_candidates
from .meteo import HourlyMeteoRecord, SiteConfig, daily_from_hourly, with_thermal_time
from .project import (
    FRUIT_HEADER,
    LWP_HEADER,
    METEO_HEADER,
    PHENOLOGY_HEADER,
    SAPFLOW_HEADER,
    Project,
    ingest_fruit,
    ingest_lwp,
    ingest_meteo,
    ingest_phenology,
    ingest_sapflow,
)
from .sapflow import TranspirationSeries, smooth_ma

SEASON_START = Date(2012, 4, 1)
SEASON_END = Date(2012, 10, 15)
SAPFLOW_START = Date(2012, 6, 1)
SAPFLOW_END = Date(2012, 9, 30)
SPIKE_DAYS = (Date(2012, 7, 2), Date(2012, 7, 3), Date(2012, 7, 4))

BUDBREAK = Date(2012, 4, 10)
BLOOM = Date(2012, 6, 1)
VERAISON = Date(2012, 8, 5)
HARVEST = Date(2012, 9, 20)

SITE = SiteConfig(
    latitude_deg=43.6, longitude_deg=3.9, elevation_m=45.0, tz_meridian_deg=15.0
)

VARIETIES = [
    "CabernetSauvignon", "Syrah", "Grenache",
    "CabernetSauvignon", "Syrah", "Grenache",
]
AREA_M2 = 2.5
SENSOR_FACTORS = (1.03, 0.97)  # per-sensor calibration offsets, mean 1


def _season_days():
    day = SEASON_START
    while day <= SEASON_END:
        yield day
        day += timedelta(days=1)


def _day_index(day: Date) -> int:
    return (day - SEASON_START).days


def _mean_temp(i: int) -> float:
    return 12.0 + 10.0 * math.sin(math.pi * i / 197.0)


def _hourly_weather():
    """Deterministic hourly records for the whole season."""
    records = []
    for day in _season_days():
        i = _day_index(day)
        tm = _mean_temp(i)
        spike = day in SPIKE_DAYS
        season = 0.8 + 0.2 * math.sin(math.pi * i / 197.0)
        for h in range(24):
            temp = tm - 6.0 * math.cos(2.0 * math.pi * (h - 14) / 24.0)
            if spike:
                temp += 9.0
                rh = 18.0
            else:
                rh = min(98.0, max(20.0, 85.0 - 2.2 * (temp - tm)))
            if 7 <= h <= 18:
                solar = (120.0 + 680.0 * math.sin(math.pi * (h - 7) / 11.0)) * season
            else:
                solar = 0.0
            records.append(
                HourlyMeteoRecord(
                    timestamp=datetime.combine(day, datetime.min.time())
                    + timedelta(hours=h),
                    temp_air=round(temp, 2),
                    rel_humidity=round(rh, 2),
                    wind_speed=6.0,
                    solar_radiation=round(solar, 1),
                    precipitation=0.0,
                )
            )
    return records


def _ratio_curve(gdd: float, k_star: float, g_mid: float, tau: float,
                 g_stress: float, decay: float) -> float:
    s = 1.0 / (1.0 + math.exp(-(gdd - g_mid) / tau))
    level = k_star * s
    if gdd > g_stress:
        level *= max(0.25, math.exp(-decay * (gdd - g_stress)))
    return level


def build_fixture_project(root: str | Path, seed: int = 42) -> Project:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    # -- configuration and knowledge file --------------------------------
    with open(default_kb_path(), encoding="utf-8") as fh:
        kb_doc = json.load(fh)
    kb_doc["maturity_thresholds"] = [
        {"sugar_acidity_ratio": 45.0},
        {"variety": "Grenache", "sugar_acidity_ratio": 50.0},
    ]
    (root / "knowledge.json").write_text(
        json.dumps(kb_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    plots = {
        f"p{k + 1}": {
            "site": "LB",
            "variety": VARIETIES[k],
            "region": "Languedoc",
            "treatments": ["i0", "i1"],
            "area_m2": AREA_M2,
        }
        for k in range(6)
    }
    config = {
        "seed": seed,
        "sites": {
            "LB": {
                "latitude_deg": SITE.latitude_deg,
                "longitude_deg": SITE.longitude_deg,
                "elevation_m": SITE.elevation_m,
                "tz_meridian_deg": SITE.tz_meridian_deg,
            }
        },
        "plots": plots,
        "knowledge_file": "knowledge.json",
        "cart": {"cv_folds": 6},
        "flrti": {
            "grid_points": 30,
            "folds": 4,
            "sigma_grid": [0.01, 0.1],
            "omega_grid": [0.95, 1.0],
        },
    }
    (root / "project.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    project = Project(root)

    # -- weather ---------------------------------------------------------
    hourly = _hourly_weather()
    staging = root / "staging"
    staging.mkdir(exist_ok=True)
    meteo_rows = [
        [
            rec.timestamp.isoformat(),
            repr(rec.temp_air),
            repr(rec.rel_humidity),
            repr(rec.wind_speed),
            repr(rec.solar_radiation),
            repr(rec.precipitation),
        ]
        for rec in hourly
    ]
    _write_csv(staging / "meteo.csv", METEO_HEADER, meteo_rows)
    ingest_meteo(project, staging / "meteo.csv", "LB")

    dailies = with_thermal_time(daily_from_hourly(hourly, SITE))
    by_date = {d.date: d for d in dailies}
    gdd = {d.date: d.gdd_cum for d in dailies}

    # demand with the heat-spike days bridged, so sap flow stays smooth
    et_ns = {d.date: d.et_ref for d in dailies}
    for day in SPIKE_DAYS:
        before, after = day - timedelta(days=3), day + timedelta(days=3)
        while before in SPIKE_DAYS:
            before -= timedelta(days=1)
        while after in SPIKE_DAYS:
            after += timedelta(days=1)
        frac = (day - before).days / (after - before).days
        et_ns[day] = (1 - frac) * et_ns[before] + frac * et_ns[after]

    radiation = {
        rec.timestamp: rec.solar_radiation for rec in hourly
    }

    # -- per-group transpiration, LWP, fruit -----------------------------
    sap_rows = []
    lwp_rows = []
    fruit_rows = []
    sample_dates = [
        Date(2012, 8, 10), Date(2012, 8, 25), Date(2012, 9, 8), Date(2012, 9, 20)
    ]
    g_mid_base = gdd[Date(2012, 6, 20)]
    for k, (plot_id, plot) in enumerate(sorted(plots.items())):
        for treatment in ("i0", "i1"):
            k_star = float(rng.uniform(0.32, 0.48))
            g_mid = g_mid_base + float(rng.uniform(-20.0, 40.0))
            tau = float(rng.uniform(55.0, 70.0))
            g_stress = g_mid + float(rng.uniform(270.0, 330.0))
            decay = (
                float(rng.uniform(0.0035, 0.0045))
                if treatment == "i0"
                else float(rng.uniform(0.0008, 0.0014))
            )
            target_count = int(rng.integers(4, 7))

            t_daily = {}
            day = SAPFLOW_START
            while day <= SAPFLOW_END:
                t_daily[day] = _ratio_curve(
                    gdd[day], k_star, g_mid, tau, g_stress, decay
                ) * et_ns[day]
                day += timedelta(days=1)

            # hourly sensor rates: the daily total split by radiation share
            for sensor_idx, factor in enumerate(SENSOR_FACTORS):
                sensor_id = f"{plot_id}-{treatment}-s{sensor_idx + 1}"
                for day, t_mm in sorted(t_daily.items()):
                    total_g = t_mm * 1000.0 * AREA_M2 * factor
                    day_start = datetime.combine(day, datetime.min.time())
                    shares = {
                        h: radiation[day_start + timedelta(hours=h)]
                        for h in range(24)
                    }
                    day_sum = sum(shares.values())
                    for h in range(24):
                        rate = (
                            total_g * shares[h] / day_sum if day_sum > 0 else 0.0
                        )
                        sap_rows.append(
                            [
                                (day_start + timedelta(hours=h)).isoformat(),
                                sensor_id,
                                plot_id,
                                treatment,
                                repr(round(rate, 3)),
                            ]
                        )

            # stress onset: pick the LWP crossing so that exactly
            # target_count rule-passing days survive
            series = smooth_ma(
                TranspirationSeries(
                    plot_id=plot_id,
                    treatment=treatment,
                    daily_t=sorted(t_daily.items()),
                )
            )
            ratio = compute_ratio(series, dailies)
            passing, _ = detect_candidates(
                ratio, BUDBREAK, VERAISON, [], dailies, CandidateRuleConfig()
            )
            if len(passing) < 4:
                raise RuntimeError(
                    f"fixture generation: only {len(passing)} rule-passing "
                    f"days for {plot_id} {treatment}; retune the season shape"
                )
            if len(passing) > target_count:
                stress_day = passing[target_count].date
            else:
                # few passing days: keep them all, stress right afterwards
                stress_day = passing[-1].date + timedelta(days=1)
            lwp_day = Date(2012, 6, 5)
            while lwp_day <= SAPFLOW_END:
                if lwp_day < stress_day:
                    value = -0.12 - 0.01 * ((lwp_day - Date(2012, 6, 5)).days / 7)
                    lwp_rows.append(
                        [lwp_day.isoformat(), plot_id, treatment, f"{value:.2f}"]
                    )
                lwp_day += timedelta(days=7)
            lwp_rows.append(
                [stress_day.isoformat(), plot_id, treatment, "-0.55"]
            )
            follow = stress_day + timedelta(days=7)
            while follow <= SAPFLOW_END:
                lwp_rows.append([follow.isoformat(), plot_id, treatment, "-0.50"])
                follow += timedelta(days=7)

            # fruit: sugar/acidity ramps; (p6, i0) never reaches the
            # Grenache maturity threshold of 50
            never_ripe = plot_id == "p6" and treatment == "i0"
            final_ratio = 46.0 if never_ripe else float(rng.uniform(55.0, 65.0))
            base_weight = {
                "CabernetSauvignon": 1.1, "Syrah": 1.3, "Grenache": 1.5
            }[plot["variety"]]
            weight = base_weight * (1.0 - 60.0 * decay) * float(
                rng.uniform(0.98, 1.02)
            )
            final_sugar = (190.0 - 9000.0 * decay) * float(rng.uniform(0.98, 1.02))
            for j, sample_day in enumerate(sample_dates):
                frac = (j + 1) / len(sample_dates)
                ratio_now = 25.0 + (final_ratio - 25.0) * frac
                sugar = final_sugar * (0.55 + 0.45 * frac)
                acidity = sugar / ratio_now
                fruit_rows.append(
                    [
                        sample_day.isoformat(),
                        plot_id,
                        treatment,
                        f"{weight * (0.7 + 0.3 * frac):.3f}",
                        f"{sugar:.1f}",
                        f"{acidity:.2f}",
                    ]
                )

    _write_csv(staging / "sapflow.csv", SAPFLOW_HEADER, sap_rows)
    ingest_sapflow(project, staging / "sapflow.csv")

    phen_rows = []
    for plot_id in sorted(plots):
        for stage, day in (
            ("budbreak", BUDBREAK),
            ("bloom", BLOOM),
            ("veraison", VERAISON),
            ("harvest", HARVEST),
        ):
            phen_rows.append([plot_id, stage, day.isoformat()])
    _write_csv(staging / "phenology.csv", PHENOLOGY_HEADER, phen_rows)
    ingest_phenology(project, staging / "phenology.csv")

    lwp_rows.sort()
    _write_csv(staging / "lwp.csv", LWP_HEADER, lwp_rows)
    ingest_lwp(project, staging / "lwp.csv")

    fruit_rows.sort()
    _write_csv(staging / "fruit.csv", FRUIT_HEADER, fruit_rows)
    ingest_fruit(project, staging / "fruit.csv")

    for path in staging.iterdir():
        path.unlink()
    staging.rmdir()
    return project


def _write_csv(path: Path, header: list[str], rows: list[list[str]]):
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: python3 -m vinesense.fixture <directory> [seed]")
        return 1
    seed = int(argv[1]) if len(argv) > 1 else 42
    build_fixture_project(argv[0], seed)
    print(f"demo project written to {argv[0]} (seed {seed})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
