import type {
  CandidatesPayload,
  KsPreview,
  RatioPayload,
  SelectionRecord,
} from "../src/api.js";

export function ratioPayload(): RatioPayload {
  return {
    plot_id: "p1",
    treatment: "i0",
    points: [
      { date: "2012-06-01", gdd_cum: 400.0, ratio: 0.1 },
      { date: "2012-06-02", gdd_cum: 410.0, ratio: 0.2 },
      { date: "2012-06-03", gdd_cum: 420.0, ratio: null },
      { date: "2012-06-04", gdd_cum: 430.0, ratio: 0.35 },
      { date: "2012-06-05", gdd_cum: 440.0, ratio: 0.4 },
    ],
    lwp: [
      { date: "2012-06-02", lwp_mpa: -0.15 },
      { date: "2012-06-05", lwp_mpa: -0.45 },
    ],
    lwp_stress_mpa: -0.3,
    first_stress_date: "2012-06-05",
    vpd_excluded_dates: ["2012-06-03"],
    phenology_window: { budbreak: "2012-04-10", veraison: "2012-08-05" },
  };
}

export function candidatesPayload(
  overrides: Partial<CandidatesPayload> = {},
): CandidatesPayload {
  const base = ratioPayload();
  return {
    plot_id: "p1",
    treatment: "i0",
    candidates: [
      {
        date: "2012-06-02",
        gdd_cum: 410.0,
        k_value: 0.2,
        passed_rules: ["window", "stress", "vpd", "shape"],
      },
      {
        date: "2012-06-04",
        gdd_cum: 430.0,
        k_value: 0.35,
        passed_rules: ["window", "stress", "vpd", "shape"],
      },
    ],
    diagnostic: null,
    phenology_window: base.phenology_window,
    first_stress_date: base.first_stress_date,
    lwp_stress_mpa: base.lwp_stress_mpa,
    vpd_excluded_dates: base.vpd_excluded_dates,
    ...overrides,
  };
}

export function selectionRecord(
  overrides: Partial<SelectionRecord> = {},
): SelectionRecord {
  return {
    plot_id: "p1",
    treatment: "i0",
    t_kstar: "2012-06-04",
    t_kstar_gdd: 430.0,
    k_star: 0.35,
    mode: "manual",
    author: "alice",
    timestamp: "2026-08-25T10:00:00",
    ...overrides,
  };
}

export function ksPreview(): KsPreview {
  return {
    plot_id: "p1",
    treatment: "i0",
    candidate: 2,
    t_kstar: "2012-06-04",
    k_star: 0.35,
    points: [
      { date: "2012-06-01", gdd_cum: 400.0, ks: 1.0 },
      { date: "2012-06-02", gdd_cum: 410.0, ks: 0.9 },
      { date: "2012-06-03", gdd_cum: 420.0, ks: null },
      { date: "2012-06-04", gdd_cum: 430.0, ks: 1.2 },
    ],
    clamped_dates: ["2012-06-04"],
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
