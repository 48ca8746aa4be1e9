"""Scalar stress summaries: trapeze integrals of Ks over phenological
windows on the thermal-time axis, and the maturity date from fruit samples.

The four aggregates are NouHarv (nouaison to harvest), NouVer (nouaison to
veraison), VerHarv (veraison to harvest) and VerMat (veraison to maturity).
Lower values mean stronger water stress over the window. VerMat is absent
(NA) when the sugar/acidity maturity threshold is never reached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta

from .errors import ValidationError
from .kstar import KsSeries

STAGES = ("budbreak", "bloom", "nouaison", "veraison", "maturity", "harvest")

MAX_INTERP_GAP_DAYS = 5  # longer interior Ks gaps abort the integral


@dataclass
class PhenologyCalendar:
    plot_id: str
    stages: dict[str, tuple[Date, float]]  # stage -> (date, gdd_cum)

    def date_of(self, stage: str) -> Date | None:
        entry = self.stages.get(stage)
        return entry[0] if entry else None

    def gdd_of(self, stage: str) -> float | None:
        entry = self.stages.get(stage)
        return entry[1] if entry else None


@dataclass
class AggregateRecord:
    plot_id: str
    treatment: str
    nou_harv: float
    nou_ver: float
    ver_harv: float
    ver_mat: float | None  # None when maturity is never reached


@dataclass(frozen=True)
class FruitSample:
    plot_id: str
    treatment: str
    date: Date
    berry_weight: float  # g
    sugar: float  # g/L
    acidity: float  # g H2SO4 / L
    anthocyanins: float | None = None
    assimilable_nitrogen: float | None = None

    def __post_init__(self):
        for name in ("berry_weight", "sugar", "acidity"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} < 0 on {self.date}")


def _interpolated_grid(ks: KsSeries):
    """Fully observed (gdd, ks) polyline; interior gaps up to
    MAX_INTERP_GAP_DAYS are filled linearly, longer ones raise."""
    observed = [(d, g, v) for d, g, v in ks.points if v is not None]
    if not observed:
        raise ValidationError("Ks series has no observed values")
    filled = []
    for (d0, g0, v0), (d1, g1, v1) in zip(observed, observed[1:]):
        gap = (d1 - d0).days
        if gap > MAX_INTERP_GAP_DAYS:
            raise ValidationError(
                f"Ks gap of {gap} days between {d0} and {d1} exceeds "
                f"{MAX_INTERP_GAP_DAYS}-day interpolation limit"
            )
        filled.append((g0, v0))
    filled.append((observed[-1][1], observed[-1][2]))
    return filled


def trapz_ks(ks: KsSeries, start_gdd: float, end_gdd: float) -> float:
    """Trapeze integral of Ks against cumulative GDD over a window."""
    if start_gdd >= end_gdd:
        raise ValidationError(f"window start {start_gdd} >= end {end_gdd}")
    grid = _interpolated_grid(ks)
    if start_gdd < grid[0][0] - 1e-9 or end_gdd > grid[-1][0] + 1e-9:
        raise ValidationError(
            f"window [{start_gdd}, {end_gdd}] GDD outside Ks coverage "
            f"[{grid[0][0]}, {grid[-1][0]}]"
        )

    def value_at(g):
        for (g0, v0), (g1, v1) in zip(grid, grid[1:]):
            if g0 <= g <= g1:
                if g1 == g0:
                    return v0
                return v0 + (v1 - v0) * (g - g0) / (g1 - g0)
        return grid[-1][1] if g >= grid[-1][0] else grid[0][1]

    xs = [start_gdd]
    xs += [g for g, _ in grid if start_gdd < g < end_gdd]
    xs.append(end_gdd)
    total = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        total += 0.5 * (value_at(x0) + value_at(x1)) * (x1 - x0)
    return total


def maturity_date(
    samples: list[FruitSample], variety_threshold: float
) -> Date | None:
    """First date where sugar/acidity reaches the variety threshold, linearly
    interpolated between sampling dates; None when never reached."""
    ratios = []
    for s in sorted(samples, key=lambda s: s.date):
        if s.acidity == 0.0:
            warnings.warn(f"sample on {s.date} has zero acidity; skipped")
            continue
        ratios.append((s.date, s.sugar / s.acidity))
    if len(ratios) < 2:
        raise ValidationError("need at least 2 usable fruit samples")
    if ratios[0][1] >= variety_threshold:
        return ratios[0][0]
    for (d0, r0), (d1, r1) in zip(ratios, ratios[1:]):
        if r1 >= variety_threshold:
            frac = (variety_threshold - r0) / (r1 - r0)
            return d0 + timedelta(days=round(frac * (d1 - d0).days))
    return None


def build_aggregates(
    ks: KsSeries,
    calendar: PhenologyCalendar,
    maturity_gdd: float | None = None,
) -> AggregateRecord:
    """The four windowed Ks integrals for one plot-treatment.

    ``maturity_gdd`` overrides the calendar's maturity stage (e.g. when the
    maturity date comes from fruit-sample interpolation); when neither is
    available VerMat is None.
    """
    nou = calendar.gdd_of("nouaison")
    ver = calendar.gdd_of("veraison")
    harv = calendar.gdd_of("harvest")
    if nou is None or ver is None or harv is None:
        raise ValidationError(
            "calendar must date nouaison, veraison and harvest"
        )
    if maturity_gdd is None:
        maturity_gdd = calendar.gdd_of("maturity")
    ver_mat = None
    if maturity_gdd is not None:
        ver_mat = trapz_ks(ks, ver, maturity_gdd)
    return AggregateRecord(
        plot_id=ks.plot_id,
        treatment=ks.treatment,
        nou_harv=trapz_ks(ks, nou, harv),
        nou_ver=trapz_ks(ks, nou, ver),
        ver_harv=trapz_ks(ks, ver, harv),
        ver_mat=ver_mat,
    )
