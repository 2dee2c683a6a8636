import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname, resolve } from "node:path";

import { buildSeries, renderSvg, type Series } from "./figure.js";
import { validateFigureSpec, type FigureSpec } from "./figureSpec.js";
import { parseResultCsv, type ResultRow } from "./resultRow.js";

export interface RenderResult {
  output: string;
  series: Series[];
  rowCount: number;
}

export function loadSpec(path: string): FigureSpec {
  const raw = JSON.parse(readFileSync(path, "utf8"));
  const spec = validateFigureSpec(raw, path);
  const base = dirname(resolve(path));
  return {
    ...spec,
    inputs: spec.inputs.map((p) => resolve(base, p)),
    output: resolve(base, spec.output),
  };
}

/** Read every input CSV, group into series, write the SVG. */
export function render(spec: FigureSpec): RenderResult {
  const rows: ResultRow[] = [];
  for (const input of spec.inputs) {
    rows.push(...parseResultCsv(readFileSync(input, "utf8"), input));
  }
  const series = buildSeries(rows, spec);
  const svg = renderSvg(series, spec);
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, svg + "\n");
  return { output: spec.output, series, rowCount: rows.length };
}

export function renderSpecFile(path: string): RenderResult {
  return render(loadSpec(path));
}
