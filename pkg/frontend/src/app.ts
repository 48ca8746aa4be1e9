/** DOM wiring for the review screen. All domain numbers come from the
 * service; this layer only routes payloads into the pure view-model and
 * chart builders and reflects HTTP outcomes (201 committed, 409 conflict,
 * network failure → offline banner).
 */

import {
  ApiError,
  Client,
  OfflineError,
  type PlotEntry,
} from "./api.js";
import { ksChartSvg, ratioChartSvg } from "./chart.js";
import {
  buildViewModel,
  canSelect,
  isCommitted,
  selectionSummary,
  type ReviewViewModel,
} from "./model.js";

interface Elements {
  groupSelect: HTMLSelectElement;
  ratioChart: HTMLElement;
  ksChart: HTMLElement;
  candidateList: HTMLElement;
  status: HTMLElement;
  offlineBanner: HTMLElement;
  author: HTMLInputElement;
  force: HTMLInputElement;
  commitButton: HTMLButtonElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export class ReviewApp {
  private readonly els: Elements;
  private vm: ReviewViewModel | null = null;
  private selectedIndex: number | null = null;

  constructor(private readonly client: Client) {
    this.els = {
      groupSelect: el("group-select"),
      ratioChart: el("ratio-chart"),
      ksChart: el("ks-chart"),
      candidateList: el("candidate-list"),
      status: el("status"),
      offlineBanner: el("offline-banner"),
      author: el("author"),
      force: el("force"),
      commitButton: el("commit"),
    };
    this.els.groupSelect.addEventListener("change", () => {
      void this.loadGroup();
    });
    this.els.commitButton.addEventListener("click", () => {
      void this.commit();
    });
    this.els.force.addEventListener("change", () => this.syncControls());
  }

  async start(): Promise<void> {
    const plots = await this.guard(() => this.client.plots());
    if (!plots) {
      return;
    }
    this.populateGroups(plots);
    await this.loadGroup();
  }

  private populateGroups(plots: PlotEntry[]): void {
    this.els.groupSelect.innerHTML = "";
    for (const entry of plots) {
      const option = document.createElement("option");
      option.value = `${entry.plot_id}/${entry.treatment}`;
      option.textContent =
        `${entry.plot_id} ${entry.treatment} — ${entry.variety}` +
        (entry.selection ? " ✓" : "");
      this.els.groupSelect.appendChild(option);
    }
  }

  private currentGroup(): [string, string] {
    const [plot, treatment] = this.els.groupSelect.value.split("/");
    return [plot, treatment];
  }

  async loadGroup(): Promise<void> {
    const [plot, treatment] = this.currentGroup();
    this.selectedIndex = null;
    this.els.ksChart.innerHTML = "";
    const data = await this.guard(async () => {
      const [ratio, candidates, plots] = await Promise.all([
        this.client.ratio(plot, treatment),
        this.client.candidates(plot, treatment),
        this.client.plots(),
      ]);
      const entry = plots.find(
        (p) => p.plot_id === plot && p.treatment === treatment,
      );
      return buildViewModel(ratio, candidates, entry?.selection ?? null);
    });
    if (!data) {
      return;
    }
    this.vm = data;
    this.render();
  }

  private render(): void {
    const vm = this.vm;
    if (!vm) {
      return;
    }
    this.els.ratioChart.innerHTML = ratioChartSvg(vm);
    for (const node of this.els.ratioChart.querySelectorAll(
      "[data-candidate]",
    )) {
      node.addEventListener("click", () => {
        void this.selectCandidate(
          Number((node as SVGElement).dataset.candidate),
        );
      });
    }
    this.els.candidateList.innerHTML = "";
    if (vm.emptyStateDiagnostic !== null) {
      const p = document.createElement("p");
      p.className = "empty-state";
      p.textContent =
        "No candidate passed the selection rules. First eliminating rule: " +
        vm.emptyStateDiagnostic;
      this.els.candidateList.appendChild(p);
    }
    for (const marker of vm.markers) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = marker.committed
        ? "candidate committed"
        : "candidate";
      button.dataset.candidate = String(marker.index);
      button.textContent =
        `[${marker.index}] ${marker.date} · ` +
        `K = ${marker.k_value.toFixed(3)} · ` +
        `${marker.gdd_cum.toFixed(1)} GDD` +
        (marker.committed ? " (committed)" : "");
      button.addEventListener("click", () => {
        void this.selectCandidate(marker.index);
      });
      this.els.candidateList.appendChild(button);
    }
    this.setStatus(selectionSummary(vm) ?? "no selection committed yet");
    this.syncControls();
  }

  private syncControls(): void {
    const vm = this.vm;
    const locked =
      !vm || !canSelect(vm, this.els.force.checked);
    for (const node of this.els.candidateList.querySelectorAll("button")) {
      node.disabled = locked;
    }
    this.els.commitButton.disabled = locked || this.selectedIndex === null;
    this.els.force.parentElement?.classList.toggle(
      "relevant",
      Boolean(vm && isCommitted(vm)),
    );
  }

  async selectCandidate(index: number): Promise<void> {
    const vm = this.vm;
    if (!vm || !canSelect(vm, this.els.force.checked)) {
      return;
    }
    const preview = await this.guard(() =>
      this.client.ksPreview(vm.plotId, vm.treatment, index),
    );
    if (!preview) {
      return;
    }
    this.selectedIndex = index;
    this.els.ksChart.innerHTML = ksChartSvg(preview);
    this.setStatus(
      `previewing candidate ${index} — confirm to commit the selection`,
    );
    this.syncControls();
  }

  async commit(): Promise<void> {
    const vm = this.vm;
    const index = this.selectedIndex;
    if (!vm || index === null) {
      return;
    }
    try {
      const record = await this.client.commit(vm.plotId, vm.treatment, {
        candidate: index,
        author: this.els.author.value || undefined,
        force: this.els.force.checked,
      });
      this.setStatus(
        `committed: t* = ${record.t_kstar}, K* = ${record.k_star.toFixed(3)}`,
      );
      this.els.force.checked = false;
      await this.loadGroup();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.setStatus(
          "conflict (409): a selection is already committed — " +
            "tick “replace existing” to force, then confirm again",
        );
        return;
      }
      this.handleError(error);
    }
  }

  private setStatus(text: string): void {
    this.els.status.textContent = text;
  }

  private async guard<T>(fn: () => Promise<T>): Promise<T | null> {
    try {
      const value = await fn();
      this.els.offlineBanner.hidden = true;
      return value;
    } catch (error) {
      this.handleError(error);
      return null;
    }
  }

  private handleError(error: unknown): void {
    if (error instanceof OfflineError) {
      this.els.offlineBanner.hidden = false;
      this.setStatus("service unreachable");
      return;
    }
    if (error instanceof ApiError) {
      this.setStatus(`error ${error.status}: ${error.message}`);
      return;
    }
    this.setStatus(`unexpected error: ${error}`);
  }
}
