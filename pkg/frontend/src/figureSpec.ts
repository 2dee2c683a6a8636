/** Declarative description of one figure: which CSVs, which axis, how
 * to group rows into series, where to write the image. */

export type XAxis = "load_eta" | "rho_db";

export const GROUPING_KEYS = [
  "M",
  "P",
  "mode",
  "beamformer",
  "channel_model",
] as const;

export type GroupingKey = (typeof GROUPING_KEYS)[number];

export interface FigureSpec {
  /** CSV paths, absolute or relative to the spec file. */
  inputs: string[];
  x_axis: XAxis;
  /** Row keys that identify a series; defaults to M, P, mode, beamformer. */
  group_by?: GroupingKey[];
  output: string;
  title?: string;
}

export function validateFigureSpec(raw: unknown, source: string): FigureSpec {
  if (typeof raw !== "object" || raw === null) {
    throw new Error(`figure spec ${source} must be a JSON object`);
  }
  const spec = raw as Record<string, unknown>;
  const inputs = spec.inputs;
  if (!Array.isArray(inputs) || inputs.length === 0 || !inputs.every((p) => typeof p === "string")) {
    throw new Error(`figure spec ${source}: 'inputs' must be a nonempty array of CSV paths`);
  }
  if (spec.x_axis !== "load_eta" && spec.x_axis !== "rho_db") {
    throw new Error(`figure spec ${source}: 'x_axis' must be 'load_eta' or 'rho_db'`);
  }
  if (typeof spec.output !== "string" || spec.output.length === 0) {
    throw new Error(`figure spec ${source}: 'output' must name the image file`);
  }
  let groupBy: GroupingKey[] | undefined;
  if (spec.group_by !== undefined) {
    if (
      !Array.isArray(spec.group_by) ||
      !spec.group_by.every((k) => (GROUPING_KEYS as readonly string[]).includes(k as string))
    ) {
      throw new Error(
        `figure spec ${source}: 'group_by' entries must be among ${GROUPING_KEYS.join(", ")}`,
      );
    }
    groupBy = spec.group_by as GroupingKey[];
  }
  if (spec.title !== undefined && typeof spec.title !== "string") {
    throw new Error(`figure spec ${source}: 'title' must be a string`);
  }
  return {
    inputs: inputs as string[],
    x_axis: spec.x_axis,
    group_by: groupBy,
    output: spec.output,
    title: spec.title as string | undefined,
  };
}
