import csv
import json
from datetime import date, timedelta

import pytest
from fastapi.testclient import TestClient

from vinesense import cli
from vinesense.errors import ConfigurationError, PipelineError, ValidationError
from vinesense.fixture import build_fixture_project
from vinesense.pipeline import (
    AwaitingSelection,
    build_calendar,
    commit_selection,
    group_keys,
    read_aggregates,
    read_candidates,
    read_dailies,
    read_ks,
    read_selection,
    run_pipeline,
    stage_candidates,
    stage_ks,
    stage_meteo,
    stage_sapflow,
)
from vinesense.project import (
    Project,
    ingest_fruit,
    ingest_lwp,
    ingest_meteo,
    ingest_phenology,
    ingest_sapflow,
)
from vinesense.service import create_app


@pytest.fixture(scope="module")
def review_project(tmp_path_factory):
    """Fixture project advanced to the candidate-review point."""
    root = tmp_path_factory.mktemp("review")
    project = build_fixture_project(root, seed=42)
    stage_meteo(project)
    stage_sapflow(project)
    stage_candidates(project)
    return project


@pytest.fixture(scope="module")
def complete_project(tmp_path_factory):
    """Fixture project after a full automatic pipeline run."""
    root = tmp_path_factory.mktemp("complete")
    project = build_fixture_project(root, seed=42)
    run_pipeline(project, selection="auto")
    return project


def minimal_project(tmp_path):
    (tmp_path / "project.json").write_text(
        json.dumps(
            {
                "seed": 1,
                "sites": {
                    "S": {
                        "latitude_deg": 43.5,
                        "longitude_deg": 3.9,
                        "elevation_m": 50.0,
                    }
                },
                "plots": {
                    "pA": {
                        "site": "S",
                        "variety": "Syrah",
                        "treatments": ["i0"],
                        "area_m2": 2.5,
                    }
                },
            }
        )
    )
    return Project(tmp_path)


class TestConfig:
    def test_missing_project_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="project.json"):
            Project(tmp_path)

    def test_missing_sites_key(self, tmp_path):
        (tmp_path / "project.json").write_text('{"plots": {}}')
        with pytest.raises(ConfigurationError, match="sites"):
            Project(tmp_path)

    def test_plot_with_unknown_site(self, tmp_path):
        (tmp_path / "project.json").write_text(
            json.dumps(
                {
                    "sites": {},
                    "plots": {
                        "p": {
                            "site": "nowhere",
                            "variety": "Syrah",
                            "treatments": ["i0"],
                            "area_m2": 1.0,
                        }
                    },
                }
            )
        )
        with pytest.raises(ConfigurationError, match="nowhere"):
            Project(tmp_path)

    def test_nonpositive_area_rejected(self, tmp_path):
        (tmp_path / "project.json").write_text(
            json.dumps(
                {
                    "sites": {
                        "S": {
                            "latitude_deg": 0,
                            "longitude_deg": 0,
                            "elevation_m": 0,
                        }
                    },
                    "plots": {
                        "p": {
                            "site": "S",
                            "variety": "Syrah",
                            "treatments": ["i0"],
                            "area_m2": 0,
                        }
                    },
                }
            )
        )
        with pytest.raises(ConfigurationError, match="area_m2"):
            Project(tmp_path)


METEO_HEAD = "timestamp,temp_air,rel_humidity,wind_speed,solar_radiation,precipitation"


class TestIngestMeteo:
    def write(self, tmp_path, rows, header=METEO_HEAD):
        path = tmp_path / "in.csv"
        path.write_text("\n".join([header] + rows) + "\n")
        return path

    def test_valid_rows_accepted(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(
            tmp_path,
            ["2012-06-01T10:00:00,25.0,50.0,6.0,700.0,0.0",
             "2012-06-01T11:00:00,26.0,48.0,6.0,750.0,0.0"],
        )
        report = ingest_meteo(project, source, "S")
        assert report.accepted == 2 and report.rejected == []
        assert project.raw_path("meteo_S.csv").exists()
        assert project.artifact_path("ingest_meteo_S.json").exists()

    def test_humidity_out_of_range_rejected_into_report(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(
            tmp_path,
            ["2012-06-01T10:00:00,25.0,120.0,6.0,700.0,0.0",
             "2012-06-01T11:00:00,26.0,48.0,6.0,750.0,0.0"],
        )
        report = ingest_meteo(project, source, "S")
        assert report.accepted == 1
        [entry] = report.rejected
        assert entry["line"] == 2
        assert "rel_humidity" in entry["reason"] and "120" in entry["reason"]
        # the valid row is still ingested
        assert "2012-06-01T11:00:00" in project.raw_path("meteo_S.csv").read_text()

    def test_non_numeric_cell_names_line_and_column(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(
            tmp_path, ["2012-06-01T10:00:00,hot,50.0,6.0,700.0,0.0"]
        )
        report = ingest_meteo(project, source, "S")
        [entry] = report.rejected
        assert "line 2" in entry["reason"] and "temp_air" in entry["reason"]

    def test_duplicate_timestamp_is_hard_error(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(
            tmp_path,
            ["2012-06-01T10:00:00,25.0,50.0,6.0,700.0,0.0",
             "2012-06-01T10:00:00,26.0,48.0,6.0,750.0,0.0"],
        )
        with pytest.raises(ValidationError) as err:
            ingest_meteo(project, source, "S")
        assert "duplicate timestamp" in str(err.value)
        assert "lines 2 and 3" in str(err.value)

    def test_wrong_header_rejected(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(tmp_path, [], header="time,temp")
        with pytest.raises(ValidationError, match="header"):
            ingest_meteo(project, source, "S")

    def test_unknown_site(self, tmp_path):
        project = minimal_project(tmp_path)
        source = self.write(tmp_path, [])
        with pytest.raises(ValidationError, match="unknown site"):
            ingest_meteo(project, source, "X")


class TestIngestOthers:
    def test_sapflow_unknown_plot_rejected(self, tmp_path):
        project = minimal_project(tmp_path)
        source = tmp_path / "sap.csv"
        source.write_text(
            "timestamp,sensor_id,plot_id,treatment,rate_g_per_h\n"
            "2012-06-01T10:00:00,s1,ghost,i0,100.0\n"
            "2012-06-01T11:00:00,s1,pA,i0,100.0\n"
        )
        report = ingest_sapflow(project, source)
        assert report.accepted == 1
        assert "ghost" in report.rejected[0]["reason"]

    def test_sapflow_duplicate_sensor_timestamp(self, tmp_path):
        project = minimal_project(tmp_path)
        source = tmp_path / "sap.csv"
        source.write_text(
            "timestamp,sensor_id,plot_id,treatment,rate_g_per_h\n"
            "2012-06-01T10:00:00,s1,pA,i0,100.0\n"
            "2012-06-01T10:00:00,s1,pA,i0,110.0\n"
        )
        with pytest.raises(ValidationError, match="duplicate timestamp"):
            ingest_sapflow(project, source)

    def test_phenology_unknown_stage_rejected(self, tmp_path):
        project = minimal_project(tmp_path)
        source = tmp_path / "phen.csv"
        source.write_text(
            "plot_id,stage,date\npA,flowering,2012-06-01\npA,bloom,2012-06-01\n"
        )
        report = ingest_phenology(project, source)
        assert report.accepted == 1
        assert "flowering" in report.rejected[0]["reason"]

    def test_lwp_positive_value_rejected(self, tmp_path):
        project = minimal_project(tmp_path)
        source = tmp_path / "lwp.csv"
        source.write_text(
            "date,plot_id,treatment,lwp_mpa\n2012-06-01,pA,i0,0.3\n"
        )
        report = ingest_lwp(project, source)
        assert report.accepted == 0
        assert "lwp_mpa" in report.rejected[0]["reason"]

    def test_fruit_negative_value_rejected(self, tmp_path):
        project = minimal_project(tmp_path)
        source = tmp_path / "fruit.csv"
        source.write_text(
            "date,plot_id,treatment,berry_weight,sugar,acidity\n"
            "2012-08-01,pA,i0,-1.0,150.0,5.0\n"
        )
        report = ingest_fruit(project, source)
        assert report.accepted == 0
        assert "berry_weight" in report.rejected[0]["reason"]


class TestStaleness:
    def test_changed_input_flags_artifact_stale(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=1)
        stage_meteo(project)
        project.check_fresh(["dailies_LB.csv"])  # fresh right after
        raw = project.raw_path("meteo_LB.csv")
        raw.write_text(raw.read_text().replace("6.0", "7.0", 1))
        with pytest.raises(ValidationError) as err:
            project.check_fresh(["dailies_LB.csv"])
        assert "stale" in str(err.value) and "dailies_LB.csv" in str(err.value)

    def test_missing_artifact_reported(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=1)
        with pytest.raises(ValidationError, match="missing.*transpiration.csv"):
            project.check_fresh(["transpiration.csv"])

    def test_downstream_stage_refuses_stale_upstream(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=1)
        stage_meteo(project)
        stage_sapflow(project)
        raw = project.raw_path("meteo_LB.csv")
        raw.write_text(raw.read_text().replace("6.0", "7.0", 1))
        with pytest.raises(ValidationError, match="stale"):
            stage_candidates(project)


class TestCandidates:
    def test_every_group_has_4_to_9_candidates(self, review_project):
        for plot_id, treatment in group_keys(review_project):
            doc = read_candidates(review_project, plot_id, treatment)
            assert 4 <= len(doc["candidates"]) <= 9, (plot_id, treatment)
            assert doc["diagnostic"] is None

    def test_candidates_fall_inside_review_context(self, review_project):
        for plot_id, treatment in group_keys(review_project):
            doc = read_candidates(review_project, plot_id, treatment)
            window = doc["phenology_window"]
            stress = doc["first_stress_date"]
            for c in doc["candidates"]:
                assert window["budbreak"] <= c["date"] <= window["veraison"]
                assert stress is None or c["date"] < stress
                assert c["date"] not in doc["vpd_excluded_dates"]

    def test_nouaison_derived_from_bloom_by_thermal_shift(self, review_project):
        calendar = build_calendar(review_project, "p1")
        bloom_date, bloom_gdd = calendar.stages["bloom"]
        nou_date, nou_gdd = calendar.stages["nouaison"]
        assert nou_date > bloom_date
        assert nou_gdd >= bloom_gdd + 30.0
        # first such date: the previous day must still be short of the offset
        dailies = read_dailies(review_project, "LB")
        gdd = {d.date: d.gdd_cum for d in dailies}
        assert gdd[nou_date - timedelta(days=1)] < bloom_gdd + 30.0

    def test_heat_spike_days_are_vpd_excluded(self, review_project):
        doc = read_candidates(review_project, "p1", "i0")
        for spike in ("2012-07-02", "2012-07-03", "2012-07-04"):
            assert spike in doc["vpd_excluded_dates"]


class TestSelectionLifecycle:
    def test_pending_run_stops_awaiting_selection(self, review_project):
        with pytest.raises(AwaitingSelection, match="p1 i0"):
            stage_ks(review_project)

    def test_commit_and_conflict(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=7)
        stage_meteo(project)
        stage_sapflow(project)
        stage_candidates(project)
        record = commit_selection(project, "p1", "i0", 2, author="alice")
        assert record["mode"] == "manual"
        assert record["author"] == "alice"
        assert record["timestamp"] is not None
        with pytest.raises(ValidationError, match="force"):
            commit_selection(project, "p1", "i0", 1)
        replaced = commit_selection(project, "p1", "i0", 1, force=True)
        assert replaced["t_kstar"] != record["t_kstar"] or (
            replaced["k_star"] != record["k_star"]
        )

    def test_auto_selection_has_no_timestamp(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=7)
        stage_meteo(project)
        stage_sapflow(project)
        stage_candidates(project)
        record = commit_selection(project, "p1", "i0", "auto")
        assert record["mode"] == "auto"
        assert record["timestamp"] is None
        doc = read_candidates(project, "p1", "i0")
        best = max(doc["candidates"], key=lambda c: c["k_value"])
        assert record["k_star"] == best["k_value"]

    def test_explicit_selection(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=7)
        stage_meteo(project)
        stage_sapflow(project)
        stage_candidates(project)
        record = commit_selection(
            project, "p1", "i0",
            explicit={"t": "2012-07-06", "gdd_cum": 820.0, "k_star": 0.4},
        )
        assert record["mode"] == "explicit"
        assert read_selection(project, "p1", "i0")["k_star"] == 0.4


class TestCompletedRun:
    def test_ks_bounded_by_cap(self, complete_project):
        for plot_id, treatment in group_keys(complete_project):
            ks = read_ks(complete_project, plot_id, treatment)
            values = [v for _, _, v in ks.points if v is not None]
            assert values
            assert all(0.0 <= v <= complete_project.config.ks_cap for v in values)

    def test_aggregates_additive_within_rounding(self, complete_project):
        rows = read_aggregates(complete_project)
        assert len(rows) == 12
        for rec in rows:
            total = float(rec["nou_harv"])
            parts = float(rec["nou_ver"]) + float(rec["ver_harv"])
            assert total == pytest.approx(parts, abs=0.2), rec

    def test_vermat_na_only_where_threshold_unreached(self, complete_project):
        rows = read_aggregates(complete_project)
        na = [(r["site"], r["treatment"]) for r in rows if r["ver_mat"] == "NA"]
        assert na == [("p6", "i0")]
        for rec in rows:
            if rec["ver_mat"] != "NA":
                assert float(rec["ver_mat"]) <= float(rec["ver_harv"]) + 0.05

    def test_deficit_treatment_is_more_stressed(self, complete_project):
        by_group = {
            (r["site"], r["treatment"]): float(r["nou_harv"])
            for r in read_aggregates(complete_project)
        }
        for plot in ("p1", "p2", "p3", "p4", "p5", "p6"):
            assert by_group[(plot, "i0")] < by_group[(plot, "i1")]

    def test_tree_artifacts(self, complete_project):
        doc = json.loads(
            complete_project.artifact_path("tree_berry_weight.json").read_text()
        )
        assert doc["response"] == "berry_weight"
        assert doc["features"][-1] == "variety"
        text = complete_project.artifact_path("tree_berry_weight.txt").read_text()
        assert "leaf: mean=" in text

    def test_flrti_artifacts(self, complete_project):
        doc = json.loads(
            complete_project.artifact_path("flrti_berry_weight.json").read_text()
        )
        grid_points = complete_project.config.flrti["grid_points"]
        assert len(doc["grid"]) == len(doc["beta"]) == grid_points
        lo, hi = doc["window_gdd"]
        assert lo < hi
        assert doc["grid"][0] == pytest.approx(lo)
        assert doc["grid"][-1] == pytest.approx(hi)
        with open(
            complete_project.artifact_path("flrti_beta_berry_weight.csv"),
            newline="",
        ) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == grid_points
        assert [float(r["beta"]) for r in rows] == doc["beta"]

    def test_report_sections(self, complete_project):
        text = complete_project.artifact_path("report.md").read_text()
        assert "## Breakpoint selections" in text
        assert "## Stress aggregates" in text
        assert "## Regression tree" in text
        assert "## Functional regression" in text
        assert "| p6 | Grenache | i0 |" in text


class TestCli:
    def test_full_verb_sequence(self, tmp_path):
        root = tmp_path / "p"
        build_fixture_project(root, seed=3)
        base = ["--project", str(root)]
        assert cli.main(["meteo", *base]) == 0
        assert cli.main(["sapflow", *base]) == 0
        assert cli.main(["candidates", *base]) == 0
        # pending selection blocks ks with the dedicated exit code
        assert cli.main(["ks", *base]) == cli.EXIT_AWAITING_SELECTION
        assert cli.main(["select", *base, "--all", "--auto"]) == 0
        assert cli.main(["ks", *base]) == 0
        assert cli.main(["aggregate", *base]) == 0

    def test_select_conflict_exits_1(self, tmp_path):
        root = tmp_path / "p"
        build_fixture_project(root, seed=3)
        base = ["--project", str(root)]
        cli.main(["meteo", *base])
        cli.main(["sapflow", *base])
        cli.main(["candidates", *base])
        args = ["select", *base, "--plot", "p1", "--treatment", "i0",
                "--candidate", "1"]
        assert cli.main(args) == 0
        assert cli.main(args) == cli.EXIT_VALIDATION

    def test_select_requires_exactly_one_choice(self, tmp_path):
        root = tmp_path / "p"
        build_fixture_project(root, seed=3)
        rc = cli.main(
            ["select", "--project", str(root), "--plot", "p1",
             "--treatment", "i0"]
        )
        assert rc == cli.EXIT_VALIDATION

    def test_unknown_verb_and_bad_project(self, tmp_path):
        assert cli.main(["no-such-verb"]) == cli.EXIT_VALIDATION
        assert cli.main(["meteo", "--project", str(tmp_path / "nope")]) \
            == cli.EXIT_VALIDATION

    def test_ingest_verb_reports_rejections(self, tmp_path, capsys):
        root = tmp_path / "p"
        build_fixture_project(root, seed=3)
        bad = tmp_path / "bad.csv"
        bad.write_text(
            METEO_HEAD + "\n"
            "2013-06-01T10:00:00,25.0,120.0,6.0,700.0,0.0\n"
            "2013-06-01T11:00:00,25.0,50.0,6.0,700.0,0.0\n"
        )
        rc = cli.main(
            ["ingest", "--project", str(root), "--kind", "meteo",
             "--site", "LB", str(bad)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "1 rows accepted" in out or "1 row" in out
        assert "rel_humidity" in out


@pytest.fixture(scope="module")
def client(review_project):
    return TestClient(create_app(review_project.root))


class TestService:
    def test_plots_listing(self, client):
        body = client.get("/api/plots").json()
        assert len(body) == 12
        entry = body[0]
        assert {"plot_id", "treatment", "variety", "site", "selection"} \
            <= set(entry)

    def test_ratio_payload(self, client):
        r = client.get("/api/plots/p1/i0/ratio")
        assert r.status_code == 200
        body = r.json()
        assert body["points"] and body["lwp"]
        assert body["phenology_window"]["budbreak"] == "2012-04-10"
        assert body["vpd_excluded_dates"]
        assert body["lwp_stress_mpa"] < 0

    def test_candidates_payload_matches_artifact(self, client, review_project):
        body = client.get("/api/plots/p1/i0/candidates").json()
        assert body == read_candidates(review_project, "p1", "i0")

    def test_ks_preview_varies_with_candidate(self, client):
        a = client.get("/api/plots/p1/i0/ks-preview", params={"candidate": 1})
        b = client.get("/api/plots/p1/i0/ks-preview", params={"candidate": 2})
        assert a.status_code == b.status_code == 200
        assert a.json()["k_star"] != b.json()["k_star"]
        assert a.json()["points"] != b.json()["points"]

    def test_ks_preview_out_of_range(self, client):
        r = client.get("/api/plots/p1/i0/ks-preview", params={"candidate": 99})
        assert r.status_code == 400
        assert "out of range" in r.json()["detail"]

    def test_unknown_plot_or_treatment_404(self, client):
        assert client.get("/api/plots/zz/i0/ratio").status_code == 404
        assert client.get("/api/plots/p1/xx/candidates").status_code == 404

    def test_selection_roundtrip_and_conflict(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=5)
        stage_meteo(project)
        stage_sapflow(project)
        stage_candidates(project)
        local = TestClient(create_app(project.root))
        r = local.post(
            "/api/plots/p2/i1/selection",
            json={"candidate": 1, "author": "bob"},
        )
        assert r.status_code == 201
        assert read_selection(project, "p2", "i1")["author"] == "bob"
        # single-selection invariant: repeat without force conflicts
        assert local.post(
            "/api/plots/p2/i1/selection", json={"candidate": 2}
        ).status_code == 409
        assert local.post(
            "/api/plots/p2/i1/selection", json={"candidate": 2, "force": True}
        ).status_code == 201

    def test_selection_body_validation(self, tmp_path):
        project = build_fixture_project(tmp_path / "p", seed=5)
        stage_meteo(project)
        stage_sapflow(project)
        stage_candidates(project)
        local = TestClient(create_app(project.root))
        r = local.post("/api/plots/p1/i0/selection", json={"author": "bob"})
        assert r.status_code == 400
        r = local.post(
            "/api/plots/p1/i0/selection",
            json={"t": "2012-07-06", "gdd_cum": 800.0, "k_star": 0.4},
        )
        assert r.status_code == 201
        assert r.json()["mode"] == "explicit"
