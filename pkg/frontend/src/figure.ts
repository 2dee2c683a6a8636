/**
 * Turn sweep rows into plottable series and assemble the SVG.
 *
 * The drawing is deliberately math-free: values are read straight off
 * the CSV columns (analytic lines, Monte Carlo markers with +-3 stderr
 * whiskers) and only mapped to pixels here.  Upper-bound modes render
 * dashed so they read as bounds.
 */

import type { FigureSpec, GroupingKey, XAxis } from "./figureSpec.js";
import type { ResultRow } from "./resultRow.js";

export interface SeriesPoint {
  x: number;
  analytic: number | null;
  mc: number | null;
  stderr: number | null;
}

export interface Series {
  label: string;
  key: Record<string, string | number>;
  points: SeriesPoint[]; // sorted by x
  dashed: boolean;
}

const DEFAULT_GROUPING: GroupingKey[] = ["M", "P", "mode", "beamformer"];

const BOUND_MODES = new Set(["eud", "eud_limit", "infinite_p", "single_antenna_eud"]);

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
  "#bcbd22",
  "#e377c2",
];

export function buildSeries(rows: ResultRow[], spec: FigureSpec): Series[] {
  const keys = spec.group_by ?? DEFAULT_GROUPING;
  const xOf = (row: ResultRow) => (spec.x_axis === "load_eta" ? row.eta : row.rho_db);
  const groups = new Map<string, { key: Record<string, string | number>; rows: ResultRow[] }>();
  for (const row of rows) {
    const key: Record<string, string | number> = {};
    for (const k of keys) key[k] = row[k];
    const id = keys.map((k) => `${k}=${row[k]}`).join(" ");
    const group = groups.get(id);
    if (group) {
      group.rows.push(row);
    } else {
      groups.set(id, { key, rows: [row] });
    }
  }
  const series: Series[] = [];
  for (const [label, group] of groups) {
    const byX = new Map<number, SeriesPoint>();
    for (const row of group.rows) {
      const x = xOf(row);
      const point = byX.get(x) ?? { x, analytic: null, mc: null, stderr: null };
      if (row.analytic !== null) point.analytic = row.analytic;
      if (row.mc_estimate !== null) {
        point.mc = row.mc_estimate;
        point.stderr = row.mc_stderr;
      }
      byX.set(x, point);
    }
    const points = [...byX.values()].sort((a, b) => a.x - b.x);
    const mode = String(group.key.mode ?? "");
    series.push({ label, key: group.key, points, dashed: BOUND_MODES.has(mode) });
  }
  series.sort((a, b) => a.label.localeCompare(b.label));
  return series;
}

// --- scales and ticks -------------------------------------------------

export interface LinearScale {
  (value: number): number;
  domain: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): LinearScale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as LinearScale;
  scale.domain = domain;
  return scale;
}

export function niceTicks(lo: number, hi: number, count = 8): number[] {
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / count;
  const magnitude = 10 ** Math.floor(Math.log10(rawStep));
  let step = magnitude;
  for (const m of [1, 2, 5, 10]) {
    if (m * magnitude >= rawStep) {
      step = m * magnitude;
      break;
    }
  }
  const ticks: number[] = [];
  const start = Math.ceil(lo / step) * step;
  for (let v = start; v <= hi + 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

// --- svg assembly -----------------------------------------------------

const WIDTH = 760;
const HEIGHT = 520;
const MARGIN = { top: 36, right: 24, bottom: 48, left: 64 };

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(v: number): string {
  return Number(v.toFixed(4)).toString();
}

export function renderSvg(series: Series[], spec: FigureSpec): string {
  if (series.length === 0 || series.every((s) => s.points.length === 0)) {
    throw new Error(`no plottable series for ${spec.output}`);
  }
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const xDomain: [number, number] = [Math.min(...xs), Math.max(...xs)];
  if (xDomain[0] === xDomain[1]) {
    xDomain[0] -= 0.5;
    xDomain[1] += 0.5;
  }
  const x = linearScale(xDomain, [MARGIN.left, WIDTH - MARGIN.right]);
  const y = linearScale([0, 1], [HEIGHT - MARGIN.bottom, MARGIN.top]);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  if (spec.title) {
    parts.push(
      `<text x="${WIDTH / 2}" y="20" text-anchor="middle" font-size="14">` +
        `${esc(spec.title)}</text>`,
    );
  }

  // axes
  const plotBottom = HEIGHT - MARGIN.bottom;
  parts.push(`<g class="axes" stroke="black" fill="none">`);
  parts.push(`<line x1="${MARGIN.left}" y1="${plotBottom}" x2="${WIDTH - MARGIN.right}" y2="${plotBottom}"/>`);
  parts.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${plotBottom}"/>`);
  parts.push(`</g>`);
  parts.push(`<g class="ticks" fill="black">`);
  for (const tx of niceTicks(xDomain[0], xDomain[1])) {
    const px = x(tx);
    parts.push(`<line x1="${fmt(px)}" y1="${plotBottom}" x2="${fmt(px)}" y2="${plotBottom + 5}" stroke="black"/>`);
    parts.push(`<text x="${fmt(px)}" y="${plotBottom + 18}" text-anchor="middle">${fmt(tx)}</text>`);
  }
  for (let ty = 0; ty <= 1.0001; ty += 0.1) {
    const py = y(ty);
    parts.push(`<line x1="${MARGIN.left - 5}" y1="${fmt(py)}" x2="${MARGIN.left}" y2="${fmt(py)}" stroke="black"/>`);
    parts.push(`<text x="${MARGIN.left - 9}" y="${fmt(py + 4)}" text-anchor="end">${fmt(ty)}</text>`);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${fmt(py)}" x2="${WIDTH - MARGIN.right}" y2="${fmt(py)}" ` +
        `stroke="#dddddd" stroke-width="0.5"/>`,
    );
  }
  const xLabel = spec.x_axis === "load_eta" ? "load per channel" : "uplink SNR (dB)";
  parts.push(
    `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 10}" ` +
      `text-anchor="middle">${esc(xLabel)}</text>`,
  );
  parts.push(
    `<text transform="translate(16,${(MARGIN.top + plotBottom) / 2}) rotate(-90)" ` +
      `text-anchor="middle">success probability</text>`,
  );
  parts.push(`</g>`);

  // series
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    const linePoints = s.points.filter((p) => p.analytic !== null);
    parts.push(`<g class="series" data-label="${esc(s.label)}">`);
    if (linePoints.length >= 2) {
      const d = linePoints
        .map((p, j) => `${j === 0 ? "M" : "L"}${fmt(x(p.x))},${fmt(y(p.analytic!))}`)
        .join(" ");
      parts.push(`<path class="analytic" d="${d}" fill="none" stroke="${color}" stroke-width="1.6"${dash}/>`);
    } else if (linePoints.length === 1) {
      const p = linePoints[0];
      parts.push(
        `<circle class="analytic" cx="${fmt(x(p.x))}" cy="${fmt(y(p.analytic!))}" r="2.5" ` +
          `fill="none" stroke="${color}"/>`,
      );
    }
    for (const p of s.points) {
      if (p.mc === null) continue;
      const cx = fmt(x(p.x));
      if (p.stderr !== null) {
        const lo = y(Math.max(0, p.mc - 3 * p.stderr));
        const hi = y(Math.min(1, p.mc + 3 * p.stderr));
        parts.push(
          `<line class="errorbar" x1="${cx}" y1="${fmt(lo)}" x2="${cx}" y2="${fmt(hi)}" ` +
            `stroke="${color}" stroke-width="1"/>`,
        );
      }
      parts.push(`<circle class="mc" cx="${cx}" cy="${fmt(y(p.mc))}" r="3.2" fill="${color}"/>`);
    }
    parts.push(`</g>`);
  });

  // legend
  parts.push(`<g class="legend" font-size="11">`);
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const ly = MARGIN.top + 6 + i * 16;
    const lx = MARGIN.left + 10;
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(`<line x1="${lx}" y1="${ly}" x2="${lx + 22}" y2="${ly}" stroke="${color}" stroke-width="1.6"${dash}/>`);
    parts.push(`<text x="${lx + 28}" y="${ly + 4}" fill="black">${esc(s.label)}</text>`);
  });
  parts.push(`</g>`);

  parts.push(`</svg>`);
  return parts.join("\n");
}
