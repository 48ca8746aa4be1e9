"""Acceptance suite: one test per primary acceptance criterion.

Every criterion is exercised end to end at its stated tolerance; oracles
are independently coded (worksheet FAO-56, brute-force rule re-checks,
exhaustive split search, known synthetic generating truths).

The reference aggregate table under ``data/reference_aggregates.csv`` is a
previously published seasonal summary used as a parsing fixture. Its rows
do *not* decompose additively (NouHarv differs from NouVer + VerHarv by
6.4-29.0 in every row, far beyond 0.1-rounding); the additivity-within-
rounding check therefore applies to rows computed and rounded by this
pipeline, and the corresponding check on the published rows is kept as a
strict expected failure documenting the discrepancy.
"""

import csv
import hashlib
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from fao56_oracle import worksheet_hourly_et0, worksheet_vpd
from test_cart import oracle_numeric_split
from test_flrti import synthetic, two_peaks_one_trough
from test_kstar import oracle_candidates

from vinesense.aggregate import PhenologyCalendar, build_aggregates, trapz_ks
from vinesense.cart import DevianceTreeRegressor
from vinesense.fixture import build_fixture_project
from vinesense.flrti import (
    DEFAULT_OMEGA_GRID,
    DEFAULT_SIGMA_GRID,
    FlrtiRegressor,
    cross_validate,
)
from vinesense.knowledge import (
    ShiftStageRule,
    apply_shift,
    check_temporal_order,
    default_kb_path,
    load_kb,
)
from vinesense.kstar import (
    CandidateRuleConfig,
    KcbCurve,
    KsSeries,
    RatioSeries,
    compute_ks,
    detect_candidates,
)
from vinesense.meteo import (
    HourlyMeteoRecord,
    SiteConfig,
    compute_etref_hourly,
    compute_vpd,
)
from vinesense.pipeline import group_keys, read_candidates, run_pipeline
from vinesense.sapflow import TranspirationSeries

DATA = Path(__file__).parent / "data"

SITE = SiteConfig(
    latitude_deg=43.5, longitude_deg=3.9, elevation_m=50.0, tz_meridian_deg=15.0
)


class TestFao56OracleEquivalence:
    """Hourly VPD and ETref match an independent worksheet to 1e-6 on a
    3-day synthetic weather file."""

    def three_day_weather(self):
        records = []
        for day in (date(2012, 7, 10), date(2012, 7, 11), date(2012, 7, 12)):
            for hour in range(24):
                temp = 21.0 - 7.0 * np.cos(2 * np.pi * (hour - 14) / 24)
                rh = max(25.0, min(95.0, 80.0 - 2.0 * (temp - 21.0)))
                solar = (
                    800.0 * np.sin(np.pi * (hour - 6) / 13.0)
                    if 6 <= hour <= 19
                    else 0.0
                )
                records.append(
                    HourlyMeteoRecord(
                        timestamp=datetime.combine(day, datetime.min.time())
                        + timedelta(hours=hour),
                        temp_air=round(float(temp), 2),
                        rel_humidity=round(float(rh), 2),
                        wind_speed=7.2,
                        solar_radiation=round(float(max(0.0, solar)), 1),
                    )
                )
        return records

    def test_vpd_and_etref_match_worksheet_to_1e6(self):
        for rec in self.three_day_weather():
            assert compute_vpd(rec) == pytest.approx(
                worksheet_vpd(rec.temp_air, rec.rel_humidity), abs=1e-6
            )
            expected = worksheet_hourly_et0(
                rec.temp_air,
                rec.rel_humidity,
                rec.wind_speed,
                rec.solar_radiation,
                latitude=SITE.latitude_deg,
                longitude=SITE.longitude_deg,
                elevation=SITE.elevation_m,
                tz_meridian=SITE.tz_meridian_deg,
                year=rec.timestamp.year,
                month=rec.timestamp.month,
                day=rec.timestamp.day,
                hour=rec.timestamp.hour,
            )
            assert compute_etref_hourly(rec, SITE) == pytest.approx(
                expected, abs=1e-6
            )


class TestCandidateRuleSoundness:
    """On 50 randomized synthetic seasons, every emitted candidate passes
    an independent brute-force re-check of all four rules: zero false
    admits."""

    def random_season(self, rng):
        from test_kstar import mk_daily

        n = int(rng.integers(20, 60))
        start = date(2012, 5, 1)
        days = [start + timedelta(days=i) for i in range(n)]
        values = []
        for i in range(n):
            v = float(rng.uniform(0.0, 0.6))
            values.append(None if rng.random() < 0.1 else v)
        dailies = [
            mk_daily(
                d,
                et_ref=float(rng.uniform(2.0, 6.0)),
                vpd_max=float(rng.uniform(0.5, 5.0)),
                gdd_cum=10.0 * (i + 1),
            )
            for i, d in enumerate(days)
        ]
        ratio = RatioSeries(
            "p", "i0",
            [
                (d, dailies[i].gdd_cum, values[i])
                for i, d in enumerate(days)
            ],
        )
        budbreak = days[int(rng.integers(0, n // 3))]
        veraison = days[int(rng.integers(2 * n // 3, n))]
        lwp = [
            (days[int(rng.integers(0, n))], float(rng.uniform(-0.6, 0.0)))
            for _ in range(int(rng.integers(0, 6)))
        ]
        return ratio, budbreak, veraison, lwp, dailies

    def test_zero_false_admits_on_50_seasons(self):
        rng = np.random.default_rng(2024)
        cfg = CandidateRuleConfig(derivative_epsilon=0.05)
        total = 0
        for _ in range(50):
            ratio, budbreak, veraison, lwp, dailies = self.random_season(rng)
            emitted, _ = detect_candidates(
                ratio, budbreak, veraison, lwp, dailies, cfg
            )
            expected = oracle_candidates(
                ratio, budbreak, veraison, lwp, dailies, cfg
            )
            assert [(c.date, c.gdd_cum, c.k_value) for c in emitted] == expected
            total += len(emitted)
        assert total > 0  # the comparison actually exercised candidates


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    project = build_fixture_project(root, seed=42)
    run_pipeline(project, selection="auto")
    return project


class TestCandidateCountPlausibility:
    """The shipped realistic fixture yields 4-9 candidates per treatment."""

    def test_counts_between_4_and_9(self, fixture_run):
        for plot_id, treatment in group_keys(fixture_run):
            doc = read_candidates(fixture_run, plot_id, treatment)
            assert 4 <= len(doc["candidates"]) <= 9, (plot_id, treatment)


class TestKsConstruction:
    def clean_series(self):
        """Transpiration exactly KcB * ETref on and after the breakpoint."""
        kcb = KcbCurve(budbreak_gdd=100.0, t_kstar_gdd=500.0, k_star=0.4)
        start = date(2012, 6, 1)
        from test_kstar import mk_daily

        dailies = [
            mk_daily(start + timedelta(days=i), et_ref=4.0,
                     gdd_cum=100.0 + 10.0 * i)
            for i in range(60)
        ]
        t = TranspirationSeries(
            "p", "i0",
            [
                (d.date, kcb.value(d.gdd_cum) * d.et_ref)
                for d in dailies
            ],
        )
        return kcb, t, dailies

    def test_ks_is_one_at_selection_point(self):
        kcb, t, dailies = self.clean_series()
        ks = compute_ks(t, kcb, dailies)
        at_breakpoint = [v for _, g, v in ks.points if g == 500.0]
        assert at_breakpoint and at_breakpoint[0] == pytest.approx(1.0, abs=1e-9)

    def test_ks_bounded_everywhere(self):
        kcb, t, dailies = self.clean_series()
        noisy = TranspirationSeries(
            "p", "i0",
            [(d, None if v is None else v * 3.0) for d, v in t.daily_t],
        )
        ks = compute_ks(noisy, kcb, dailies)
        for _, _, v in ks.points:
            assert v is None or 0.0 <= v <= 1.2

    def test_kcb_continuity_at_breakpoint_exact(self):
        kcb = KcbCurve(budbreak_gdd=100.0, t_kstar_gdd=500.0, k_star=0.4)
        assert kcb.value(500.0) == 0.4
        slope = 0.4 / 400.0
        eps = 1e-7
        assert kcb.value(500.0 - eps) == pytest.approx(0.4 - slope * eps,
                                                       abs=1e-15)
        # linearity below the breakpoint is exact at representable points
        assert kcb.value(300.0) == pytest.approx(0.2, abs=1e-15)


class TestAggregation:
    def piecewise_series(self):
        start = date(2012, 6, 1)
        points = []
        for i in range(41):
            gdd = 100.0 + 10.0 * i
            ks = 1.0 if gdd <= 300.0 else 1.0 - (gdd - 300.0) / 400.0
            points.append((start + timedelta(days=i), gdd, ks))
        return KsSeries("p", "i0", points)

    def test_trapeze_matches_closed_form_to_1e9(self):
        ks = self.piecewise_series()
        # constant part: unit Ks over 200 GDD
        assert trapz_ks(ks, 100.0, 300.0) == pytest.approx(200.0, abs=1e-9)
        # linear part over [300, 500]: mean (1 + 0.5)/2 over 200 GDD
        assert trapz_ks(ks, 300.0, 500.0) == pytest.approx(150.0, abs=1e-9)

    def test_additivity_to_1e9(self):
        ks = self.piecewise_series()
        calendar = PhenologyCalendar(
            "p",
            {
                "nouaison": (date(2012, 6, 3), 120.0),
                "veraison": (date(2012, 6, 21), 300.0),
                "harvest": (date(2012, 7, 9), 480.0),
            },
        )
        rec = build_aggregates(ks, calendar)
        assert rec.nou_harv == pytest.approx(
            rec.nou_ver + rec.ver_harv, abs=1e-9
        )

    def reference_rows(self):
        with open(DATA / "reference_aggregates.csv", newline="") as fh:
            return list(csv.DictReader(fh))

    def test_reference_table_parses(self):
        rows = self.reference_rows()
        assert len(rows) == 16
        na = [r for r in rows if r["ver_mat"] == "NA"]
        assert len(na) == 1 and na[0]["site"] == "RIE-Gre-Chp"
        for rec in rows:
            for field in ("nou_harv", "nou_ver", "ver_harv"):
                assert float(rec[field]) > 0

    def test_pipeline_rounded_rows_additive_within_02(self, fixture_run):
        with open(fixture_run.artifact_path("aggregates.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        for rec in rows:
            assert float(rec["nou_harv"]) == pytest.approx(
                float(rec["nou_ver"]) + float(rec["ver_harv"]), abs=0.2
            ), rec

    @pytest.mark.xfail(
        strict=True,
        reason="the published reference rows do not decompose additively: "
        "NouHarv exceeds NouVer + VerHarv by 6.4-29.0 in every row, far "
        "beyond 0.1-rounding; the within-rounding check holds only for "
        "rows computed by this pipeline",
    )
    def test_reference_rows_additive_within_02(self):
        for rec in self.reference_rows():
            assert float(rec["nou_harv"]) == pytest.approx(
                float(rec["nou_ver"]) + float(rec["ver_harv"]), abs=0.2
            ), rec


class TestCartOracleEquivalence:
    def test_root_split_matches_exhaustive_on_100_datasets(self):
        rng = np.random.default_rng(12345)
        for _ in range(100):
            n = int(rng.integers(10, 201))
            p = int(rng.integers(1, 5))
            X = np.round(rng.normal(size=(n, p)), 1)
            y = rng.normal(size=n) + 0.8 * X[:, 0]
            model = DevianceTreeRegressor(
                cp=0.0, min_leaf=1, cv_folds=0
            ).fit(X, y)
            best = (None, None, 0.0)
            for j in range(p):
                thr, red = oracle_numeric_split(X[:, j], y)
                if thr is not None and red > best[2] + 1e-12:
                    best = (j, thr, red)
            if best[0] is None:
                assert model.tree_.is_leaf
            else:
                assert model.tree_.var_index == best[0]
                assert model.tree_.threshold == pytest.approx(best[1])

    def test_pure_noise_prunes_to_root_in_95_percent(self):
        hits, runs = 0, 40
        for seed in range(runs):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(60, 3))
            y = rng.normal(size=60)
            model = DevianceTreeRegressor(
                cv_folds=10, random_state=seed
            ).fit(X, y)
            hits += model.tree_.is_leaf
        assert hits >= 0.95 * runs


class TestFlrtiRecovery:
    """Sign pattern of the two-peaks-one-trough coefficient recovered and
    >= 90% of true-zero grid points exactly zero at CV-chosen (sigma,
    omega); the operating point (0.05, 0.95) lies in the default grid."""

    def test_operating_point_in_default_grid(self):
        assert 0.05 in DEFAULT_SIGMA_GRID
        assert 0.95 in DEFAULT_OMEGA_GRID

    def test_recovery_at_cv_chosen_parameters(self):
        X, y, grid, beta_true = synthetic(n=100, p=40, noise=0.1, seed=0)
        sigma, omega, _ = cross_validate(X, y, grid, folds=10, seed=0)
        est = FlrtiRegressor(sigma=sigma, omega=omega).fit(X, y, grid=grid)
        beta = est.beta_

        for center, sign in ((0.15, 1), (0.50, -1), (0.82, 1)):
            idx = int(np.argmin(np.abs(grid - center)))
            window = beta[max(0, idx - 2): idx + 3]
            assert sign * window.sum() > 0, (center, window)

        true_zero = beta_true == 0.0
        frac = np.mean(beta[true_zero] == 0.0)
        assert frac >= 0.90, f"only {frac:.1%} of true zeros exact"


class TestDeterminism:
    """Two full pipeline runs with the same seed are byte-identical."""

    @staticmethod
    def run_and_hash(root):
        project = build_fixture_project(root, seed=42)
        run_pipeline(project, selection="auto")
        hashes = {}
        for path in sorted(Path(root).rglob("*")):
            if path.is_file():
                hashes[str(path.relative_to(root))] = hashlib.sha256(
                    path.read_bytes()
                ).hexdigest()
        return hashes

    def test_byte_identical_artifacts(self, tmp_path):
        first = self.run_and_hash(tmp_path / "a")
        second = self.run_and_hash(tmp_path / "b")
        assert first.keys() == second.keys()
        differing = [k for k in first if first[k] != second[k]]
        assert differing == []


class TestKnowledgeBase:
    def test_default_file_loads(self):
        kb = load_kb(default_kb_path())
        assert "Ks" in kb.concepts

    def stage_dates(self):
        return {
            "Budbreak": date(2012, 4, 10),
            "Bloom": date(2012, 6, 1),
            "Veraison": date(2012, 8, 5),
            "Harvest": date(2012, 9, 20),
        }

    def test_stage_ordering_validates(self):
        kb = load_kb(default_kb_path())
        report = check_temporal_order(kb, self.stage_dates())
        assert report.ok

    def test_injected_inversion_reported(self):
        kb = load_kb(default_kb_path())
        dates = self.stage_dates()
        dates["Bloom"] = date(2012, 4, 1)  # before budbreak
        report = check_temporal_order(kb, dates)
        assert not report.ok
        [violation] = report.violations
        assert (violation.before, violation.after) == ("Budbreak", "Bloom")

    def test_zero_offset_shift_is_identity(self):
        rule = ShiftStageRule("Bloom", 0.0, "Nouaison")
        start = date(2012, 6, 1)
        gdd = {start + timedelta(days=i): 200.0 + 8.0 * i for i in range(20)}
        dates = {"Bloom": start}
        shifted = apply_shift(rule, dates, gdd)
        assert shifted["Nouaison"] == start
