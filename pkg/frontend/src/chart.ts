/** Hand-rolled SVG charts (no charting library, no DOM dependency: the
 * builders return SVG markup strings).
 *
 * Both charts use the calendar date as the x position and carry a second
 * x axis on top labelled in cumulative GDD, using the per-point GDD values
 * the service provides — the client never converts between the two itself.
 */

import type { KsPreview } from "./api.js";
import type { ReviewViewModel } from "./model.js";

export interface ChartLayout {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 860,
  height: 340,
  margin: { top: 34, right: 56, bottom: 40, left: 48 },
};

export interface Scale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0;
  const fn = ((value: number) =>
    span === 0 ? (r0 + r1) / 2 : r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  fn.domain = domain;
  fn.range = range;
  return fn;
}

export function dayNumber(isoDate: string): number {
  return Date.parse(`${isoDate}T00:00:00Z`) / 86_400_000;
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Polyline path over (date, value) samples, broken at missing values. */
export function seriesPath(
  samples: { date: string; value: number | null }[],
  x: Scale,
  y: Scale,
): string {
  const parts: string[] = [];
  let pen = false;
  for (const s of samples) {
    if (s.value === null) {
      pen = false;
      continue;
    }
    const cmd = pen ? "L" : "M";
    parts.push(`${cmd}${x(dayNumber(s.date)).toFixed(1)},${y(s.value).toFixed(1)}`);
    pen = true;
  }
  return parts.join(" ");
}

function star(cx: number, cy: number, r: number): string {
  const pts: string[] = [];
  for (let i = 0; i < 10; i++) {
    const radius = i % 2 === 0 ? r : r * 0.45;
    const angle = -Math.PI / 2 + (i * Math.PI) / 5;
    pts.push(
      `${(cx + radius * Math.cos(angle)).toFixed(1)},` +
        `${(cy + radius * Math.sin(angle)).toFixed(1)}`,
    );
  }
  return pts.join(" ");
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (hi <= lo) {
    return [lo];
  }
  const rawStep = (hi - lo) / count;
  const mag = 10 ** Math.floor(Math.log10(rawStep));
  const step =
    [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rawStep) ?? 10 * mag;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-9; v += step) {
    ticks.push(v);
  }
  return ticks;
}

function isoFromDayNumber(day: number): string {
  return new Date(day * 86_400_000).toISOString().slice(0, 10);
}

interface Frame {
  x: Scale;
  plotTop: number;
  plotBottom: number;
  parts: string[];
}

/** Shared frame: plot area, calendar axis below, GDD axis above. */
function openFrame(
  layout: ChartLayout,
  dates: string[],
  gddByDate: Map<string, number>,
  title: string,
): Frame {
  const { width, height, margin } = layout;
  const days = dates.map(dayNumber);
  const x = linearScale(
    [Math.min(...days), Math.max(...days)],
    [margin.left, width - margin.right],
  );
  const plotTop = margin.top;
  const plotBottom = height - margin.bottom;
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `class="vs-chart" role="img" aria-label="${esc(title)}">`,
    `<text x="${margin.left}" y="14" class="vs-title">${esc(title)}</text>`,
    `<rect x="${margin.left}" y="${plotTop}" ` +
      `width="${width - margin.left - margin.right}" ` +
      `height="${plotBottom - plotTop}" class="vs-plot-bg"/>`,
  ];
  // bottom axis: calendar dates
  for (const day of niceTicks(x.domain[0], x.domain[1], 7)) {
    const px = x(day);
    parts.push(
      `<line x1="${px.toFixed(1)}" x2="${px.toFixed(1)}" ` +
        `y1="${plotBottom}" y2="${plotBottom + 4}" class="vs-tick"/>`,
      `<text x="${px.toFixed(1)}" y="${plotBottom + 16}" ` +
        `class="vs-tick-label" text-anchor="middle">` +
        `${isoFromDayNumber(day).slice(5)}</text>`,
    );
  }
  // top axis: cumulative GDD at the sampled dates nearest to nice values
  const gddEntries = dates
    .filter((d) => gddByDate.has(d))
    .map((d) => ({ day: dayNumber(d), gdd: gddByDate.get(d) as number }));
  if (gddEntries.length >= 2) {
    const lo = gddEntries[0].gdd;
    const hi = gddEntries[gddEntries.length - 1].gdd;
    for (const g of niceTicks(lo, hi, 6)) {
      let best = gddEntries[0];
      for (const e of gddEntries) {
        if (Math.abs(e.gdd - g) < Math.abs(best.gdd - g)) {
          best = e;
        }
      }
      const px = x(best.day);
      parts.push(
        `<line x1="${px.toFixed(1)}" x2="${px.toFixed(1)}" ` +
          `y1="${plotTop - 4}" y2="${plotTop}" class="vs-tick"/>`,
        `<text x="${px.toFixed(1)}" y="${plotTop - 8}" ` +
          `class="vs-tick-label" text-anchor="middle">` +
          `${Math.round(best.gdd)}</text>`,
      );
    }
    parts.push(
      `<text x="${width - margin.right}" y="${plotTop - 20}" ` +
        `class="vs-axis-name" text-anchor="end">GDD</text>`,
    );
  }
  return { x, plotTop, plotBottom, parts };
}

function yAxis(frame: Frame, y: Scale, ticks: number[], label: string): void {
  const left = frame.x.range[0];
  for (const v of ticks) {
    const py = y(v);
    frame.parts.push(
      `<line x1="${left - 4}" x2="${left}" ` +
        `y1="${py.toFixed(1)}" y2="${py.toFixed(1)}" class="vs-tick"/>`,
      `<text x="${left - 7}" y="${(py + 3).toFixed(1)}" ` +
        `class="vs-tick-label" text-anchor="end">${v}</text>`,
    );
  }
  frame.parts.push(
    `<text x="${left}" y="${frame.plotTop - 8}" class="vs-axis-name">` +
      `${esc(label)}</text>`,
  );
}

function shadeDay(frame: Frame, date: string, cls: string, title: string): void {
  const half = Math.max(
    1.5,
    (frame.x.range[1] - frame.x.range[0]) /
      (2 * Math.max(1, frame.x.domain[1] - frame.x.domain[0])),
  );
  const px = frame.x(dayNumber(date));
  frame.parts.push(
    `<rect x="${(px - half).toFixed(1)}" y="${frame.plotTop}" ` +
      `width="${(2 * half).toFixed(1)}" ` +
      `height="${frame.plotBottom - frame.plotTop}" class="${cls}">` +
      `<title>${esc(title)}</title></rect>`,
  );
}

/** The T/ETref review chart: ratio curve, phenology window, VPD-excluded
 * days, LWP readings with the stress threshold, candidate star markers. */
export function ratioChartSvg(
  vm: ReviewViewModel,
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const gddByDate = new Map(vm.points.map((p) => [p.date, p.gdd_cum]));
  const frame = openFrame(
    layout,
    vm.points.map((p) => p.date),
    gddByDate,
    `T/ETref — ${vm.plotId} ${vm.treatment}`,
  );

  const ratios = vm.points
    .map((p) => p.ratio)
    .filter((v): v is number => v !== null);
  const rMax = Math.max(0.6, ...ratios) * 1.08;
  const y = linearScale([0, rMax], [frame.plotBottom, frame.plotTop]);

  // phenology window band
  const winA = frame.x(dayNumber(vm.phenologyWindow.budbreak));
  const winB = frame.x(dayNumber(vm.phenologyWindow.veraison));
  const a = Math.max(frame.x.range[0], Math.min(winA, winB));
  const b = Math.min(frame.x.range[1], Math.max(winA, winB));
  if (b > a) {
    frame.parts.push(
      `<rect x="${a.toFixed(1)}" y="${frame.plotTop}" ` +
        `width="${(b - a).toFixed(1)}" ` +
        `height="${frame.plotBottom - frame.plotTop}" class="vs-window">` +
        `<title>phenology window ${esc(vm.phenologyWindow.budbreak)} – ` +
        `${esc(vm.phenologyWindow.veraison)}</title></rect>`,
    );
  }

  for (const date of vm.vpdExcludedDates) {
    shadeDay(frame, date, "vs-vpd-excluded", `VPD-excluded ${date}`);
  }

  frame.parts.push(
    `<path d="${seriesPath(
      vm.points.map((p) => ({ date: p.date, value: p.ratio })),
      frame.x,
      y,
    )}" class="vs-ratio-line"/>`,
  );

  // LWP readings on a right-hand MPa axis, with the stress threshold
  if (vm.lwp.length > 0) {
    const mpaLo = Math.min(vm.lwpStressMpa, ...vm.lwp.map((p) => p.lwp_mpa)) - 0.1;
    const yMpa = linearScale([mpaLo, 0], [frame.plotBottom, frame.plotTop]);
    const py = yMpa(vm.lwpStressMpa);
    frame.parts.push(
      `<line x1="${frame.x.range[0]}" x2="${frame.x.range[1]}" ` +
        `y1="${py.toFixed(1)}" y2="${py.toFixed(1)}" class="vs-lwp-threshold">` +
        `<title>stress threshold ${vm.lwpStressMpa} MPa</title></line>`,
    );
    for (const p of vm.lwp) {
      frame.parts.push(
        `<circle cx="${frame.x(dayNumber(p.date)).toFixed(1)}" ` +
          `cy="${yMpa(p.lwp_mpa).toFixed(1)}" r="3" class="vs-lwp-point">` +
          `<title>LWP ${p.lwp_mpa} MPa on ${esc(p.date)}</title></circle>`,
      );
    }
    const right = frame.x.range[1];
    for (const v of niceTicks(yMpa.domain[0], 0, 4)) {
      frame.parts.push(
        `<text x="${right + 8}" y="${(yMpa(v) + 3).toFixed(1)}" ` +
          `class="vs-tick-label">${v.toFixed(1)}</text>`,
      );
    }
    frame.parts.push(
      `<text x="${right + 8}" y="${frame.plotTop - 8}" ` +
        `class="vs-axis-name">MPa</text>`,
    );
  }

  for (const m of vm.markers) {
    const cls = m.committed ? "vs-candidate vs-candidate-committed" : "vs-candidate";
    frame.parts.push(
      `<polygon points="${star(
        frame.x(dayNumber(m.date)),
        y(m.k_value),
        m.committed ? 10 : 7,
      )}" class="${cls}" data-candidate="${m.index}" tabindex="0">` +
        `<title>[${m.index}] ${esc(m.date)} — K = ${m.k_value.toFixed(3)}, ` +
        `${esc(String(m.gdd_cum.toFixed(1)))} GDD</title></polygon>`,
    );
  }

  yAxis(frame, y, niceTicks(0, rMax, 4), "T/ETref");
  frame.parts.push("</svg>");
  return frame.parts.join("");
}

/** The Ks-preview chart for one candidate, clamp markers included. */
export function ksChartSvg(
  preview: KsPreview,
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const gddByDate = new Map(preview.points.map((p) => [p.date, p.gdd_cum]));
  const frame = openFrame(
    layout,
    preview.points.map((p) => p.date),
    gddByDate,
    `Ks preview — candidate ${preview.candidate} ` +
      `(t* = ${preview.t_kstar}, K* = ${preview.k_star.toFixed(3)})`,
  );
  const y = linearScale([0, 1.25], [frame.plotBottom, frame.plotTop]);

  const one = y(1.0);
  frame.parts.push(
    `<line x1="${frame.x.range[0]}" x2="${frame.x.range[1]}" ` +
      `y1="${one.toFixed(1)}" y2="${one.toFixed(1)}" class="vs-ks-one"/>`,
  );
  const clamped = new Set(preview.clamped_dates);
  frame.parts.push(
    `<path d="${seriesPath(
      preview.points.map((p) => ({ date: p.date, value: p.ks })),
      frame.x,
      y,
    )}" class="vs-ks-line"/>`,
  );
  for (const p of preview.points) {
    if (p.ks !== null && clamped.has(p.date)) {
      frame.parts.push(
        `<circle cx="${frame.x(dayNumber(p.date)).toFixed(1)}" ` +
          `cy="${y(p.ks).toFixed(1)}" r="3" class="vs-ks-clamped">` +
          `<title>clamped on ${esc(p.date)}</title></circle>`,
      );
    }
  }
  const tx = frame.x(dayNumber(preview.t_kstar));
  frame.parts.push(
    `<line x1="${tx.toFixed(1)}" x2="${tx.toFixed(1)}" ` +
      `y1="${frame.plotTop}" y2="${frame.plotBottom}" class="vs-tkstar">` +
      `<title>t* = ${esc(preview.t_kstar)}</title></line>`,
  );
  yAxis(frame, y, [0, 0.25, 0.5, 0.75, 1.0, 1.2], "Ks");
  frame.parts.push("</svg>");
  return frame.parts.join("");
}
