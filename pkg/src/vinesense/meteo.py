"""Derived meteorological quantities: VPD, reference evapotranspiration, daily
summaries and thermal time.

Hourly reference evapotranspiration follows the FAO-56 hourly Penman-Monteith
form (37/(T+273) aerodynamic coefficient). Constants used:

* saturation vapour pressure  e_s(T) = 0.6108 exp(17.27 T / (T + 237.3))  [kPa]
* slope of the saturation curve  delta = 4098 e_s / (T + 237.3)^2  [kPa/degC]
* atmospheric pressure  P = 101.3 ((293 - 0.0065 z)/293)^5.26  [kPa]
* psychrometric constant  gamma = 0.000665 P  [kPa/degC]
* solar constant  0.0820 MJ m-2 min-1
* Stefan-Boltzmann (hourly)  2.043e-10 MJ K-4 m-2 h-1
* albedo 0.23, soil heat flux G = 0.1 Rn (day) / 0.5 Rn (night)

Negative raw Penman-Monteith values (possible at night) are clamped to 0:
the result is used as a demand term and appears in denominators downstream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import date as Date
from datetime import datetime, timedelta

from .errors import ConfigurationError, ValidationError

GDD_BASE_TEMP = 10.0  # degC, simplest vine phenology model
GDD_DEFAULT_ORIGIN_MONTH_DAY = (4, 1)  # accumulation starts April 1st

_SOLAR_CONSTANT = 0.0820  # MJ m-2 min-1
_STEFAN_BOLTZMANN_HOURLY = 2.043e-10  # MJ K-4 m-2 h-1
_ALBEDO = 0.23
_WM2_TO_MJ_H = 0.0036  # W/m2 sustained for one hour


@dataclass(frozen=True)
class SiteConfig:
    """Geographic description of a weather station site.

    Longitudes are degrees east (negative west). ``tz_meridian_deg`` is the
    center meridian of the local clock's time zone; defaults to the nearest
    15-degree multiple of the site longitude.
    """

    latitude_deg: float
    longitude_deg: float
    elevation_m: float
    tz_meridian_deg: float | None = None
    albedo: float = _ALBEDO

    def tz_meridian(self) -> float:
        if self.tz_meridian_deg is not None:
            return self.tz_meridian_deg
        return round(self.longitude_deg / 15.0) * 15.0


@dataclass(frozen=True)
class HourlyMeteoRecord:
    timestamp: datetime
    temp_air: float  # degC
    rel_humidity: float  # percent
    wind_speed: float  # km/h at 2 m
    solar_radiation: float  # W/m2
    precipitation: float = 0.0  # mm

    def __post_init__(self):
        if not 0.0 <= self.rel_humidity <= 100.0:
            raise ValidationError(
                f"rel_humidity {self.rel_humidity} outside [0, 100] at {self.timestamp}"
            )
        for name in ("wind_speed", "solar_radiation", "precipitation"):
            if getattr(self, name) < 0.0:
                raise ValidationError(
                    f"{name} {getattr(self, name)} < 0 at {self.timestamp}"
                )


@dataclass(frozen=True)
class DailyMeteoRecord:
    date: Date
    t_mean: float
    t_min: float
    t_max: float
    et_ref: float  # mm/day
    vpd_max: float  # kPa
    gdd_cum: float = 0.0

    def __post_init__(self):
        if not self.t_min <= self.t_mean <= self.t_max:
            raise ValidationError(
                f"t_min <= t_mean <= t_max violated on {self.date}: "
                f"{self.t_min}, {self.t_mean}, {self.t_max}"
            )


def saturation_vapor_pressure(temp_c: float) -> float:
    """FAO-56 saturation vapour pressure curve, kPa."""
    return 0.6108 * math.exp(17.27 * temp_c / (temp_c + 237.3))


def compute_vpd(record: HourlyMeteoRecord) -> float:
    """Hourly vapour pressure deficit, kPa. Zero for saturated air."""
    es = saturation_vapor_pressure(record.temp_air)
    return es * (1.0 - record.rel_humidity / 100.0)


def _solar_geometry(timestamp: datetime, site: SiteConfig):
    """Extraterrestrial radiation (MJ m-2 h-1) for the hour starting at
    ``timestamp``; 0 when the sun is below the horizon for the whole hour.

    The record timestamp is taken as the start of the hourly period; the
    FAO-56 midpoint clock time is therefore timestamp + 30 min.
    """
    j = timestamp.timetuple().tm_yday
    dr = 1.0 + 0.033 * math.cos(2.0 * math.pi * j / 365.0)
    decl = 0.409 * math.sin(2.0 * math.pi * j / 365.0 - 1.39)
    b = 2.0 * math.pi * (j - 81) / 364.0
    sc = 0.1645 * math.sin(2 * b) - 0.1255 * math.cos(b) - 0.025 * math.sin(b)

    # FAO-56 expects longitudes in degrees west of Greenwich.
    lz = (360.0 - site.tz_meridian()) % 360.0
    lm = (360.0 - site.longitude_deg) % 360.0
    t_mid = timestamp.hour + timestamp.minute / 60.0 + 0.5
    omega = math.pi / 12.0 * ((t_mid + 0.06667 * (lz - lm) + sc) - 12.0)

    phi = math.radians(site.latitude_deg)
    cos_ws = -math.tan(phi) * math.tan(decl)
    if cos_ws >= 1.0:
        return 0.0  # polar night
    ws = math.acos(max(-1.0, cos_ws))
    w1 = max(-ws, min(ws, omega - math.pi / 24.0))
    w2 = max(-ws, min(ws, omega + math.pi / 24.0))
    if w2 <= w1:
        return 0.0
    ra = (
        12.0 * 60.0 / math.pi
        * _SOLAR_CONSTANT
        * dr
        * (
            (w2 - w1) * math.sin(phi) * math.sin(decl)
            + math.cos(phi) * math.cos(decl) * (math.sin(w2) - math.sin(w1))
        )
    )
    return max(0.0, ra)


def compute_etref_hourly(record: HourlyMeteoRecord, site: SiteConfig) -> float:
    """FAO-56 hourly Penman-Monteith reference evapotranspiration, mm/h.

    Negative raw values are clamped to 0.
    """
    if site is None:
        raise ConfigurationError("site parameters required for ETref")
    temp = record.temp_air
    es = saturation_vapor_pressure(temp)
    ea = es * record.rel_humidity / 100.0
    delta = 4098.0 * es / (temp + 237.3) ** 2
    z = site.elevation_m
    pressure = 101.3 * ((293.0 - 0.0065 * z) / 293.0) ** 5.26
    gamma = 0.000665 * pressure
    u2 = record.wind_speed / 3.6  # km/h -> m/s

    rs = record.solar_radiation * _WM2_TO_MJ_H
    ra = _solar_geometry(record.timestamp, site)
    rso = (0.75 + 2e-5 * z) * ra
    rns = (1.0 - site.albedo) * rs
    if rso > 1e-9:
        fcd = min(1.0, max(0.3, rs / rso))
    else:
        fcd = 0.8  # nighttime default cloudiness factor
    rnl = (
        _STEFAN_BOLTZMANN_HOURLY
        * (temp + 273.16) ** 4
        * (0.34 - 0.14 * math.sqrt(max(0.0, ea)))
        * (1.35 * fcd - 0.35)
    )
    rn = rns - rnl
    g = 0.1 * rn if ra > 0.0 else 0.5 * rn

    num = 0.408 * delta * (rn - g) + gamma * (37.0 / (temp + 273.0)) * u2 * (es - ea)
    den = delta + gamma * (1.0 + 0.34 * u2)
    return max(0.0, num / den)


def _check_increasing(series):
    for a, b in zip(series, series[1:]):
        if b.timestamp <= a.timestamp:
            raise ValidationError(
                f"timestamps not strictly increasing at {b.timestamp}"
            )


def _trapz(xs, ys):
    total = 0.0
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        total += 0.5 * (y0 + y1) * (x1 - x0)
    return total


MAX_GAP_HOURS = 3.0  # longer gaps mark the day incomplete


def daily_from_hourly(
    series: list[HourlyMeteoRecord], site: SiteConfig
) -> list[DailyMeteoRecord]:
    """Collapse hourly records into daily records by trapeze integration.

    A day is complete when no gap between consecutive records (including the
    gaps to the day boundaries; a record at next midnight closes the day)
    exceeds MAX_GAP_HOURS. Incomplete days are excluded with a warning.
    Means are trapeze integrals divided by the covered duration, so gaps up
    to the tolerance are implicitly bridged linearly.
    """
    _check_increasing(series)
    by_day: dict[Date, list[HourlyMeteoRecord]] = {}
    for rec in series:
        by_day.setdefault(rec.timestamp.date(), []).append(rec)
        # a midnight record also closes the previous day
        if rec.timestamp.hour == 0 and rec.timestamp.minute == 0:
            prev = rec.timestamp.date() - timedelta(days=1)
            if prev in by_day:
                by_day[prev].append(rec)

    out = []
    for day in sorted(by_day):
        recs = by_day[day]
        if len(recs) < 2:
            warnings.warn(f"day {day} has {len(recs)} record(s); excluded")
            continue
        day_start = datetime.combine(day, datetime.min.time())
        hours = [(r.timestamp - day_start).total_seconds() / 3600.0 for r in recs]
        gaps = [hours[0] - 0.0] + [b - a for a, b in zip(hours, hours[1:])]
        gaps.append(24.0 - hours[-1])
        if max(gaps) > MAX_GAP_HOURS:
            warnings.warn(f"day {day} has a gap > {MAX_GAP_HOURS} h; excluded")
            continue
        duration = hours[-1] - hours[0]
        temps = [r.temp_air for r in recs]
        # clamp against float roundoff so the t_min <= t_mean <= t_max
        # invariant holds for (near-)constant days
        t_mean = min(max(_trapz(hours, temps) / duration, min(temps)), max(temps))
        etref_hourly = [compute_etref_hourly(r, site) for r in recs]
        et_ref = _trapz(hours, etref_hourly)
        vpd_max = max(compute_vpd(r) for r in recs)
        out.append(
            DailyMeteoRecord(
                date=day,
                t_mean=t_mean,
                t_min=min(temps),
                t_max=max(temps),
                et_ref=et_ref,
                vpd_max=vpd_max,
            )
        )
    return out


def thermal_time(
    dailies: list[DailyMeteoRecord], origin: Date | None = None
) -> list[float]:
    """Cumulative growing degree days over ``dailies`` from ``origin``.

    gdd_cum(d) = sum over d' in [origin, d] of max(0, t_mean(d') - 10 degC).
    Contributions below the base temperature are clamped at zero so the
    cumulative series stays non-decreasing.
    """
    if not dailies:
        return []
    dates = [d.date for d in dailies]
    if origin is None:
        origin = Date(dates[0].year, *GDD_DEFAULT_ORIGIN_MONTH_DAY)
    if dates[0] > origin:
        missing = [origin + timedelta(days=i) for i in range((dates[0] - origin).days)]
        raise ValidationError(
            f"daily coverage starts after origin; missing dates {missing[0]}..{missing[-1]}"
        )
    expected = dates[0]
    gaps = []
    for d in dates:
        while expected < d:
            gaps.append(expected)
            expected += timedelta(days=1)
        expected = d + timedelta(days=1)
    if gaps:
        raise ValidationError(f"gaps in date coverage: {', '.join(map(str, gaps))}")

    cum = 0.0
    out = []
    for rec in dailies:
        if rec.date >= origin:
            cum += max(0.0, rec.t_mean - GDD_BASE_TEMP)
        out.append(cum)
    return out


def with_thermal_time(
    dailies: list[DailyMeteoRecord], origin: Date | None = None
) -> list[DailyMeteoRecord]:
    """Return copies of ``dailies`` with gdd_cum filled in."""
    gdd = thermal_time(dailies, origin)
    return [replace(d, gdd_cum=g) for d, g in zip(dailies, gdd)]
