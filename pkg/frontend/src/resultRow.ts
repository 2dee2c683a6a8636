/**
 * Sweep-result rows as emitted by the `gfra` CLI.
 *
 * The CSV schema is fixed: a header row naming every column below, one
 * record per evaluated grid point, empty strings where a value does not
 * apply (e.g. no Monte Carlo run for the analytic-only modes).
 */

export const RESULT_COLUMNS = [
  "M",
  "C",
  "P",
  "N_a",
  "eta",
  "rho_db",
  "gamma_th_db",
  "beamformer",
  "channel_model",
  "mode",
  "analytic",
  "mc_estimate",
  "mc_stderr",
  "trials",
  "seed",
] as const;

export type ResultColumn = (typeof RESULT_COLUMNS)[number];

export interface ResultRow {
  M: number;
  C: number;
  P: number;
  N_a: number;
  eta: number;
  rho_db: number;
  gamma_th_db: number;
  beamformer: string;
  channel_model: string;
  mode: string;
  analytic: number | null;
  mc_estimate: number | null;
  mc_stderr: number | null;
  trials: number | null;
  seed: number;
}

/** Minimal RFC-4180 field splitter (handles quoted fields and commas). */
export function splitCsvLine(line: string): string[] {
  const fields: string[] = [];
  let current = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          current += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        current += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      fields.push(current);
      current = "";
    } else {
      current += ch;
    }
  }
  fields.push(current);
  return fields;
}

function numberOrNull(raw: string, column: string, source: string): number | null {
  if (raw === "") return null;
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    throw new Error(`bad numeric value '${raw}' for column '${column}' in ${source}`);
  }
  return value;
}

function requireNumber(raw: string, column: string, source: string): number {
  const value = numberOrNull(raw, column, source);
  if (value === null) {
    throw new Error(`empty value for required column '${column}' in ${source}`);
  }
  return value;
}

/**
 * Parse one CSV document into rows, verifying the header carries every
 * schema column (extra columns are tolerated and ignored).
 */
export function parseResultCsv(text: string, source: string): ResultRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`no header row in ${source}`);
  }
  const header = splitCsvLine(lines[0]);
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  for (const column of RESULT_COLUMNS) {
    if (!index.has(column)) {
      throw new Error(`column '${column}' missing in ${source}`);
    }
  }
  const field = (parts: string[], column: ResultColumn) =>
    parts[index.get(column)!] ?? "";

  return lines.slice(1).map((line) => {
    const parts = splitCsvLine(line);
    return {
      M: requireNumber(field(parts, "M"), "M", source),
      C: requireNumber(field(parts, "C"), "C", source),
      P: requireNumber(field(parts, "P"), "P", source),
      N_a: requireNumber(field(parts, "N_a"), "N_a", source),
      eta: requireNumber(field(parts, "eta"), "eta", source),
      rho_db: requireNumber(field(parts, "rho_db"), "rho_db", source),
      gamma_th_db: requireNumber(field(parts, "gamma_th_db"), "gamma_th_db", source),
      beamformer: field(parts, "beamformer"),
      channel_model: field(parts, "channel_model"),
      mode: field(parts, "mode"),
      analytic: numberOrNull(field(parts, "analytic"), "analytic", source),
      mc_estimate: numberOrNull(field(parts, "mc_estimate"), "mc_estimate", source),
      mc_stderr: numberOrNull(field(parts, "mc_stderr"), "mc_stderr", source),
      trials: numberOrNull(field(parts, "trials"), "trials", source),
      seed: requireNumber(field(parts, "seed"), "seed", source),
    };
  });
}
