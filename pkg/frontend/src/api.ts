/** Typed client for the review service JSON API.
 *
 * The client computes nothing: every number shown in the UI comes from one
 * of these payloads. The fetch implementation is injectable for tests.
 */

export interface SelectionRecord {
  plot_id: string;
  treatment: string;
  t_kstar: string;
  t_kstar_gdd: number;
  k_star: number;
  mode: "auto" | "manual" | "explicit";
  author: string | null;
  timestamp: string | null;
}

export interface PlotEntry {
  plot_id: string;
  treatment: string;
  variety: string;
  site: string;
  region: string | null;
  selection: SelectionRecord | null;
}

export interface RatioPoint {
  date: string;
  gdd_cum: number;
  ratio: number | null;
}

export interface LwpPoint {
  date: string;
  lwp_mpa: number;
}

export interface PhenologyWindow {
  budbreak: string;
  veraison: string;
}

export interface RatioPayload {
  plot_id: string;
  treatment: string;
  points: RatioPoint[];
  lwp: LwpPoint[];
  lwp_stress_mpa: number;
  first_stress_date: string | null;
  vpd_excluded_dates: string[];
  phenology_window: PhenologyWindow;
}

export interface CandidateEntry {
  date: string;
  gdd_cum: number;
  k_value: number;
  passed_rules: string[];
}

export interface CandidatesPayload {
  plot_id: string;
  treatment: string;
  candidates: CandidateEntry[];
  diagnostic: string | null;
  phenology_window: PhenologyWindow;
  first_stress_date: string | null;
  lwp_stress_mpa: number;
  vpd_excluded_dates: string[];
}

export interface KsPoint {
  date: string;
  gdd_cum: number;
  ks: number | null;
}

export interface KsPreview {
  plot_id: string;
  treatment: string;
  candidate: number;
  t_kstar: string;
  k_star: number;
  points: KsPoint[];
  clamped_dates: string[];
}

export interface SelectionBody {
  candidate?: number;
  t?: string;
  gdd_cum?: number;
  k_star?: number;
  author?: string;
  force?: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** Network-level failure (service unreachable), as opposed to an HTTP
 * error response. The app shows the offline banner on this one. */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${cause}`);
    this.name = "OfflineError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class Client {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (cause) {
      throw new OfflineError(cause);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body?.detail === "string"
          ? body.detail
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  plots(): Promise<PlotEntry[]> {
    return this.request("/api/plots");
  }

  ratio(plot: string, treatment: string): Promise<RatioPayload> {
    return this.request(`/api/plots/${plot}/${treatment}/ratio`);
  }

  candidates(plot: string, treatment: string): Promise<CandidatesPayload> {
    return this.request(`/api/plots/${plot}/${treatment}/candidates`);
  }

  ksPreview(
    plot: string,
    treatment: string,
    candidate: number,
  ): Promise<KsPreview> {
    return this.request(
      `/api/plots/${plot}/${treatment}/ks-preview?candidate=${candidate}`,
    );
  }

  commit(
    plot: string,
    treatment: string,
    body: SelectionBody,
  ): Promise<SelectionRecord> {
    return this.request(`/api/plots/${plot}/${treatment}/selection`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
