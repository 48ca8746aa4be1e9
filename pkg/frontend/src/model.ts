/** Pure view-model layer: combines the service payloads into what the
 * review screen renders, and encodes the selection-state rules (committed
 * locks the controls unless the user asks to replace).
 */

import type {
  CandidateEntry,
  CandidatesPayload,
  RatioPayload,
  SelectionRecord,
} from "./api.js";

export interface CandidateMarker extends CandidateEntry {
  /** One-based index, matching the CLI numbering and the ks-preview and
   * selection APIs. */
  index: number;
  committed: boolean;
}

export interface ReviewViewModel {
  plotId: string;
  treatment: string;
  points: RatioPayload["points"];
  lwp: RatioPayload["lwp"];
  lwpStressMpa: number;
  firstStressDate: string | null;
  vpdExcludedDates: string[];
  phenologyWindow: RatioPayload["phenology_window"];
  markers: CandidateMarker[];
  /** Set when there are no candidates: the first rule that eliminated
   * every day, verbatim from the service diagnostic. */
  emptyStateDiagnostic: string | null;
  selection: SelectionRecord | null;
}

export function buildViewModel(
  ratio: RatioPayload,
  candidates: CandidatesPayload,
  selection: SelectionRecord | null,
): ReviewViewModel {
  const markers = candidates.candidates.map((entry, i) => ({
    ...entry,
    index: i + 1,
    committed: selection !== null && selection.t_kstar === entry.date,
  }));
  return {
    plotId: ratio.plot_id,
    treatment: ratio.treatment,
    points: ratio.points,
    lwp: ratio.lwp,
    lwpStressMpa: ratio.lwp_stress_mpa,
    firstStressDate: ratio.first_stress_date,
    vpdExcludedDates: ratio.vpd_excluded_dates,
    phenologyWindow: ratio.phenology_window,
    markers,
    emptyStateDiagnostic:
      markers.length === 0 ? candidates.diagnostic : null,
    selection,
  };
}

export function isCommitted(vm: ReviewViewModel): boolean {
  return vm.selection !== null;
}

/** Selection controls are locked once a selection is committed, unless the
 * user explicitly opts into replacing it (force). */
export function canSelect(vm: ReviewViewModel, force: boolean): boolean {
  return !isCommitted(vm) || force;
}

export function committedMarker(vm: ReviewViewModel): CandidateMarker | null {
  return vm.markers.find((m) => m.committed) ?? null;
}

export function selectionSummary(vm: ReviewViewModel): string | null {
  const sel = vm.selection;
  if (sel === null) {
    return null;
  }
  const by = sel.author ? ` by ${sel.author}` : "";
  return (
    `committed ${sel.mode}${by}: t* = ${sel.t_kstar} ` +
    `(${sel.t_kstar_gdd.toFixed(1)} GDD), K* = ${sel.k_star.toFixed(3)}`
  );
}
