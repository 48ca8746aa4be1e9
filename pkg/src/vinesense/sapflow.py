"""Quality control and aggregation of raw sap-flow sensor streams.

Raw streams are hourly volumetric rates (g/h) per sensor. Records are flagged
(nighttime / weak / erroneous / ok), sensors are kept when less than 5% of
their daytime records are filtered out, daily per-vine totals are scaled to
mm/day by the ground area per vine and averaged across reliable sensors, and
the resulting daily series is smoothed with a centered moving average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date as Date
from datetime import datetime

from .errors import ValidationError

FLAG_OK = "ok"
FLAG_NIGHT = "nighttime"
FLAG_WEAK = "weak"
FLAG_ERRONEOUS = "erroneous"

RELIABILITY_MAX_FILTERED_FRACTION = 0.05  # of daytime records


@dataclass(frozen=True)
class QcRuleset:
    """Thresholds for the expert filtering rules.

    All thresholds are configuration, not code: nighttime is detected from
    solar radiation, weak signals are low daytime rates, erroneous signals
    are negative rates or rates above a site ceiling.
    """

    night_radiation_wm2: float = 10.0
    weak_rate_g_per_h: float = 1.0
    max_rate_g_per_h: float = 5000.0


@dataclass
class SensorStream:
    sensor_id: str
    plot_id: str
    hourly_rate: list[tuple[datetime, float]]  # (timestamp, g/h)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        ts = [t for t, _ in self.hourly_rate]
        for a, b in zip(ts, ts[1:]):
            if b <= a:
                raise ValidationError(
                    f"sensor {self.sensor_id}: timestamps not strictly increasing at {b}"
                )


@dataclass
class TranspirationSeries:
    plot_id: str
    treatment: str  # i0 | i1
    daily_t: list[tuple[Date, float | None]]  # (date, mm/day), None = missing
    smoothed: bool = False


def qc_sensor(
    stream: SensorStream,
    rules: QcRuleset,
    radiation_by_hour: dict[datetime, float],
) -> tuple[SensorStream, bool]:
    """Flag every record of ``stream`` and assess sensor reliability.

    ``radiation_by_hour`` maps timestamps to solar radiation (W/m2) used for
    the nighttime rule; hours without a radiation reading are treated as
    daytime. Reliability only counts daytime records: nighttime removal is
    by design, not sensor failure.
    """
    if not stream.hourly_rate:
        raise ValidationError(f"sensor {stream.sensor_id}: empty stream")
    flags = []
    daytime = 0
    filtered = 0
    for ts, rate in stream.hourly_rate:
        radiation = radiation_by_hour.get(ts)
        if radiation is not None and radiation < rules.night_radiation_wm2:
            flags.append(FLAG_NIGHT)
            continue
        daytime += 1
        if rate < 0.0 or rate > rules.max_rate_g_per_h:
            flags.append(FLAG_ERRONEOUS)
            filtered += 1
        elif rate < rules.weak_rate_g_per_h:
            flags.append(FLAG_WEAK)
            filtered += 1
        else:
            flags.append(FLAG_OK)
    reliable = daytime > 0 and filtered / daytime < RELIABILITY_MAX_FILTERED_FRACTION
    flagged = SensorStream(
        sensor_id=stream.sensor_id,
        plot_id=stream.plot_id,
        hourly_rate=list(stream.hourly_rate),
        flags=flags,
    )
    return flagged, reliable


def scale_to_mm(rate_g_per_h: float, ground_area_per_vine_m2: float) -> float:
    """Convert a per-vine volumetric rate (g/h) to mm/h of transpiration.

    1 mm over 1 m2 of ground is 1000 g of water.
    """
    if ground_area_per_vine_m2 <= 0.0:
        raise ValidationError(
            f"ground area per vine must be > 0, got {ground_area_per_vine_m2}"
        )
    return rate_g_per_h / (1000.0 * ground_area_per_vine_m2)


def daily_transpiration(
    streams: list[SensorStream],
    ground_area_per_vine_m2: float,
    rules: QcRuleset,
    radiation_by_hour: dict[datetime, float],
    plot_id: str,
    treatment: str,
) -> TranspirationSeries:
    """Daily plot transpiration: per reliable sensor, sum the ok-flagged
    hourly rates of each day, scale to mm/day, then average across sensors.

    Days with no reliable sensor data are missing. Raises when no sensor of
    the plot-treatment is reliable at all.
    """
    reliable_streams = []
    for stream in streams:
        flagged, reliable = qc_sensor(stream, rules, radiation_by_hour)
        if reliable:
            reliable_streams.append(flagged)
    if not reliable_streams:
        raise ValidationError(
            f"no reliable sensors for plot {plot_id} treatment {treatment}"
        )

    per_day: dict[Date, list[float]] = {}
    for stream in reliable_streams:
        sums: dict[Date, float] = {}
        for (ts, rate), flag in zip(stream.hourly_rate, stream.flags):
            if flag != FLAG_OK:
                continue
            sums[ts.date()] = sums.get(ts.date(), 0.0) + rate
        for day, total in sums.items():
            per_day.setdefault(day, []).append(
                scale_to_mm(total, ground_area_per_vine_m2)
            )

    if not per_day:
        raise ValidationError(
            f"no ok-flagged data for plot {plot_id} treatment {treatment}"
        )
    first, last = min(per_day), max(per_day)
    daily = []
    day = first
    while day <= last:
        values = per_day.get(day)
        daily.append((day, sum(values) / len(values) if values else None))
        day = day.fromordinal(day.toordinal() + 1)
    return TranspirationSeries(plot_id=plot_id, treatment=treatment, daily_t=daily)


def smooth_ma(series: TranspirationSeries, window: int = 5) -> TranspirationSeries:
    """Centered moving average, skipping missing values within the window.

    The window shrinks symmetrically at the series edges (window 3 at the
    first interior point, passthrough at the endpoints). A missing endpoint
    falls back to the full half-window mean so the smoothed span has no
    missing values wherever any neighbour was observed.
    """
    if window < 3 or window % 2 == 0:
        raise ValidationError(f"window must be odd and >= 3, got {window}")
    n = len(series.daily_t)
    if n < window:
        raise ValidationError(f"series span {n} shorter than window {window}")
    half_max = window // 2
    values = [v for _, v in series.daily_t]
    out = []
    for i, (day, value) in enumerate(series.daily_t):
        half = min(i, n - 1 - i, half_max)
        if half == 0 and value is None:
            half = half_max  # asymmetric fallback to avoid a missing endpoint
        lo, hi = max(0, i - half), min(n - 1, i + half)
        present = [v for v in values[lo : hi + 1] if v is not None]
        out.append((day, sum(present) / len(present) if present else None))
    if any(v is None for _, v in out):
        raise ValidationError(
            "smoothing left missing values (a full window of missing days)"
        )
    return TranspirationSeries(
        plot_id=series.plot_id,
        treatment=series.treatment,
        daily_t=out,
        smoothed=True,
    )
