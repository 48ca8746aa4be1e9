"""Breakpoint detection and water-deficit course construction.

The daily ratio r(t) = T(t) / ETref(t) is screened by four knowledge-based
rules to propose breakpoint candidates t_K*:

1. phenology: t within [budbreak, veraison];
2. predawn LWP: t strictly before the first day a predawn leaf water
   potential reading reveals water stress;
3. meteorology: no heat spike, daily maximum VPD <= vpd_limit (3.5 kPa);
4. curve shape: |r'(t)| <= epsilon and r''(t) < 0, discrete derivatives by
   central differences on the calendar-day axis.

One candidate is selected (by the stakeholder, or automatically), fixing the
basal-coefficient curve KcB: linear from (budbreak, k0) to (t_K*, K*) on the
thermal-time axis, constant K* afterwards. The water-deficit course is then
Ks(t) = T(t) / (KcB(t) ETref(t)), clamped to [0, ks_cap].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date as Date

from .errors import ValidationError
from .meteo import DailyMeteoRecord
from .sapflow import TranspirationSeries

RULE_PHENOLOGY = "phenology_window"
RULE_LWP = "lwp_before_stress"
RULE_VPD = "vpd_heat_spike"
RULE_SHAPE = "curve_shape"
ALL_RULES = (RULE_PHENOLOGY, RULE_LWP, RULE_VPD, RULE_SHAPE)


@dataclass
class RatioSeries:
    plot_id: str
    treatment: str
    # (date, gdd_cum, T/ETref); ratio is None where ETref is 0 or T missing
    points: list[tuple[Date, float, float | None]]
    smoothed: bool = True


@dataclass(frozen=True)
class CandidateRuleConfig:
    vpd_limit_kpa: float = 3.5
    lwp_stress_mpa: float = -0.3  # stress when a reading falls below this
    derivative_epsilon: float = 0.01  # per day, for the "null first derivative"

    def __post_init__(self):
        if self.vpd_limit_kpa <= 0:
            raise ValidationError("vpd_limit must be > 0")
        if self.derivative_epsilon <= 0:
            raise ValidationError("derivative epsilon must be > 0")


@dataclass(frozen=True)
class Candidate:
    date: Date
    gdd_cum: float
    k_value: float
    passed_rules: tuple[str, ...] = ALL_RULES


@dataclass(frozen=True)
class KcbCurve:
    budbreak_gdd: float
    t_kstar_gdd: float
    k_star: float
    k0: float = 0.0

    def __post_init__(self):
        if self.t_kstar_gdd <= self.budbreak_gdd:
            raise ValidationError(
                f"t_K* ({self.t_kstar_gdd} GDD) must be after budbreak "
                f"({self.budbreak_gdd} GDD)"
            )

    def value(self, gdd_cum: float) -> float:
        """KcB at a thermal time: linear rise over L_dev, plateau over L_mid."""
        if gdd_cum >= self.t_kstar_gdd:
            return self.k_star
        if gdd_cum <= self.budbreak_gdd:
            return self.k0
        frac = (gdd_cum - self.budbreak_gdd) / (self.t_kstar_gdd - self.budbreak_gdd)
        return self.k0 + frac * (self.k_star - self.k0)


@dataclass
class KsSeries:
    plot_id: str
    treatment: str
    # (date, gdd_cum, Ks); Ks is None where Tmax is 0 or T missing
    points: list[tuple[Date, float, float | None]]
    clamped_dates: list[Date] = field(default_factory=list)
    ks_cap: float = 1.2


def compute_ratio(
    t_series: TranspirationSeries, dailies: list[DailyMeteoRecord]
) -> RatioSeries:
    """Pointwise T(t)/ETref(t) on the common date span.

    Days with ETref = 0 are marked missing rather than infinite.
    """
    by_date = {d.date: d for d in dailies}
    points = []
    for day, t_value in t_series.daily_t:
        daily = by_date.get(day)
        if daily is None:
            continue
        if t_value is None or daily.et_ref <= 0.0:
            points.append((day, daily.gdd_cum, None))
        else:
            points.append((day, daily.gdd_cum, t_value / daily.et_ref))
    if not points:
        raise ValidationError(
            f"no common dates between transpiration and meteo for plot "
            f"{t_series.plot_id} {t_series.treatment}"
        )
    return RatioSeries(
        plot_id=t_series.plot_id,
        treatment=t_series.treatment,
        points=points,
        smoothed=t_series.smoothed,
    )


def first_stress_date(
    lwp_readings: list[tuple[Date, float]], stress_level_mpa: float
) -> Date | None:
    """First date with a predawn LWP reading below the stress level."""
    stressed = [d for d, v in lwp_readings if v < stress_level_mpa]
    return min(stressed) if stressed else None


def detect_candidates(
    ratio: RatioSeries,
    budbreak: Date,
    veraison: Date,
    lwp_readings: list[tuple[Date, float]],
    dailies: list[DailyMeteoRecord],
    cfg: CandidateRuleConfig,
) -> tuple[list[Candidate], str | None]:
    """Apply the four selection rules pointwise over the ratio series.

    Returns the candidate list and, when it is empty, a diagnostic naming
    the first rule (in rule order) that eliminated every remaining date.
    """
    vpd_by_date = {d.date: d.vpd_max for d in dailies}
    stress_date = first_stress_date(lwp_readings, cfg.lwp_stress_mpa)

    dates = [p[0] for p in ratio.points]
    values = [p[2] for p in ratio.points]
    gdds = [p[1] for p in ratio.points]

    survivors = list(range(len(dates)))
    eliminated_by = None

    def apply_rule(name, predicate, idxs):
        nonlocal eliminated_by
        kept = [i for i in idxs if predicate(i)]
        if idxs and not kept and eliminated_by is None:
            eliminated_by = name
        return kept

    survivors = apply_rule(
        RULE_PHENOLOGY, lambda i: budbreak <= dates[i] <= veraison, survivors
    )
    survivors = apply_rule(
        RULE_LWP,
        lambda i: stress_date is None or dates[i] < stress_date,
        survivors,
    )
    survivors = apply_rule(
        RULE_VPD,
        lambda i: dates[i] in vpd_by_date
        and vpd_by_date[dates[i]] <= cfg.vpd_limit_kpa,
        survivors,
    )

    def shape_ok(i):
        if i == 0 or i == len(dates) - 1:
            return False
        prev_v, cur_v, next_v = values[i - 1], values[i], values[i + 1]
        if prev_v is None or cur_v is None or next_v is None:
            return False
        # central differences on the calendar-day axis
        span = (dates[i + 1] - dates[i - 1]).days
        h_prev = (dates[i] - dates[i - 1]).days
        h_next = (dates[i + 1] - dates[i]).days
        first = (next_v - prev_v) / span
        second = (
            2.0
            * (h_prev * next_v - span * cur_v + h_next * prev_v)
            / (h_prev * h_next * span)
        )
        return abs(first) <= cfg.derivative_epsilon and second < 0.0

    survivors = apply_rule(RULE_SHAPE, shape_ok, survivors)

    candidates = [
        Candidate(date=dates[i], gdd_cum=gdds[i], k_value=values[i])
        for i in survivors
    ]
    if candidates:
        return candidates, None
    return [], eliminated_by or "no input dates"


def select_kstar(
    candidates: list[Candidate], choice: int | str = "auto"
) -> Candidate:
    """Pick the breakpoint: a manual one-based index into the candidate
    list (candidates are presented to the stakeholder numbered from 1), or
    'auto' (maximal K* value, earliest date on ties)."""
    if not candidates:
        raise ValidationError("no candidates to select from")
    if choice == "auto":
        return max(candidates, key=lambda c: (c.k_value, -c.date.toordinal()))
    index = int(choice)
    if not 1 <= index <= len(candidates):
        raise ValidationError(
            f"candidate index {index} out of range (1..{len(candidates)})"
        )
    return candidates[index - 1]


def build_kcb(
    selection: Candidate, budbreak_gdd: float, k0: float = 0.0
) -> KcbCurve:
    """Basal-coefficient curve through the selected breakpoint."""
    return KcbCurve(
        budbreak_gdd=budbreak_gdd,
        t_kstar_gdd=selection.gdd_cum,
        k_star=selection.k_value,
        k0=k0,
    )


def compute_ks(
    t_series: TranspirationSeries,
    kcb: KcbCurve,
    dailies: list[DailyMeteoRecord],
    ks_cap: float = 1.2,
    plot_id: str | None = None,
    treatment: str | None = None,
) -> KsSeries:
    """Daily water-deficit course Ks = T / (KcB * ETref), clamped to
    [0, ks_cap]; missing where Tmax = 0."""
    by_date = {d.date: d for d in dailies}
    points = []
    clamped = []
    for day, t_value in t_series.daily_t:
        daily = by_date.get(day)
        if daily is None:
            continue
        t_max = kcb.value(daily.gdd_cum) * daily.et_ref
        if t_value is None or t_max <= 0.0:
            points.append((day, daily.gdd_cum, None))
            continue
        ks = t_value / t_max
        if ks > ks_cap:
            ks = ks_cap
            clamped.append(day)
        elif ks < 0.0:
            ks = 0.0
            clamped.append(day)
        points.append((day, daily.gdd_cum, ks))
    return KsSeries(
        plot_id=plot_id or t_series.plot_id,
        treatment=treatment or t_series.treatment,
        points=points,
        clamped_dates=clamped,
        ks_cap=ks_cap,
    )
