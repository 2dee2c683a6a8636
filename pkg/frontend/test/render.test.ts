import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { describe, expect, it } from "vitest";

import { buildSeries, renderSvg } from "../src/figure.js";
import type { FigureSpec } from "../src/figureSpec.js";
import { parseResultCsv } from "../src/resultRow.js";
import { render } from "../src/render.js";

const TESTDATA = resolve(__dirname, "..", "testdata");
const FIGURES = ["fig4", "fig5", "fig7", "fig8", "fig10", "fig11", "fig12"] as const;

function figureInputs(name: string): string[] {
  const dir = join(TESTDATA, name);
  return readdirSync(dir)
    .filter((f) => f.endsWith(".csv"))
    .sort()
    .map((f) => join(dir, f));
}

function specFor(name: string, outDir: string): FigureSpec {
  return {
    inputs: figureInputs(name),
    x_axis: name === "fig4" || name === "fig7" || name === "fig10" ? "rho_db" : "load_eta",
    output: join(outDir, `${name}.svg`),
    title: name,
  };
}

describe("figure emission from reproduce CSVs", () => {
  it("renders all seven reference figures", () => {
    const outDir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    for (const name of FIGURES) {
      const result = render(specFor(name, outDir));
      expect(existsSync(result.output)).toBe(true);
      const svg = readFileSync(result.output, "utf8");
      expect(svg).toContain("<svg");
      expect(result.series.length).toBeGreaterThan(0);
    }
    const written = readdirSync(outDir).filter((f) => f.endsWith(".svg"));
    expect(written).toHaveLength(7);
  });

  it("fig5 analytic series are ordered by P and nonincreasing in load", () => {
    const rows = figureInputs("fig5").flatMap((p) =>
      parseResultCsv(readFileSync(p, "utf8"), p),
    );
    const random = rows.filter((r) => r.mode === "random" && r.analytic !== null);
    const byMP = new Map<string, Map<number, number>>();
    for (const row of random) {
      const key = `M=${row.M}|P=${row.P}`;
      if (!byMP.has(key)) byMP.set(key, new Map());
      byMP.get(key)!.set(row.eta, row.analytic!);
    }
    const antennaCounts = [...new Set(random.map((r) => r.M))];
    expect(antennaCounts.length).toBeGreaterThan(0);
    for (const M of antennaCounts) {
      // monotone nonincreasing in eta for each P
      for (const P of [64, 128, 256]) {
        const curve = byMP.get(`M=${M}|P=${P}`)!;
        const etas = [...curve.keys()].sort((a, b) => a - b);
        expect(etas.length).toBeGreaterThan(1);
        for (let i = 1; i < etas.length; i++) {
          expect(curve.get(etas[i])!).toBeLessThanOrEqual(curve.get(etas[i - 1])! + 1e-12);
        }
      }
      // pointwise ordering: larger pool above smaller pool
      for (const [small, large] of [
        [64, 128],
        [128, 256],
      ] as const) {
        const lo = byMP.get(`M=${M}|P=${small}`)!;
        const hi = byMP.get(`M=${M}|P=${large}`)!;
        for (const [eta, value] of lo) {
          expect(hi.get(eta)!).toBeGreaterThanOrEqual(value - 1e-12);
        }
      }
    }
  });

  it("marks Monte Carlo points with +-3 stderr whiskers", () => {
    const outDir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const result = render(specFor("fig4", outDir));
    const svg = readFileSync(result.output, "utf8");
    expect(svg).toContain('class="mc"');
    expect(svg).toContain('class="errorbar"');
    expect(svg).toContain('class="analytic"');
  });
});

describe("rendering behaviour", () => {
  const header =
    "M,C,P,N_a,eta,rho_db,gamma_th_db,beamformer,channel_model,mode," +
    "analytic,mc_estimate,mc_stderr,trials,seed";

  it("is deterministic: same inputs give identical SVG bytes", () => {
    const outDir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const a = render({ ...specFor("fig12", outDir), output: join(outDir, "a.svg") });
    const b = render({ ...specFor("fig12", outDir), output: join(outDir, "b.svg") });
    expect(readFileSync(a.output, "utf8")).toEqual(readFileSync(b.output, "utf8"));
  });

  it("a single-point CSV yields one marker and no line path", () => {
    const dir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const csv = join(dir, "point.csv");
    writeFileSync(
      csv,
      `${header}\n200,10,256,50,5,0,8,cb,iid,random,0.981,0.9805,0.0004,1000,1\n`,
    );
    const out = join(dir, "point.svg");
    const result = render({ inputs: [csv], x_axis: "load_eta", output: out });
    const svg = readFileSync(out, "utf8");
    expect(result.series).toHaveLength(1);
    expect(svg).not.toContain("<path class=\"analytic\"");
    expect(svg).toContain('class="mc"');
  });

  it("a missing column is reported by name and nothing is written", () => {
    const dir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const csv = join(dir, "broken.csv");
    writeFileSync(csv, "M,C,P\n1,2,3\n");
    const out = join(dir, "broken.svg");
    expect(() =>
      render({ inputs: [csv], x_axis: "load_eta", output: out }),
    ).toThrow(/column 'N_a' missing/);
    expect(existsSync(out)).toBe(false);
  });

  it("an empty-series spec is an error and writes no file", () => {
    const dir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const csv = join(dir, "empty.csv");
    writeFileSync(csv, `${header}\n`);
    const out = join(dir, "empty.svg");
    expect(() =>
      render({ inputs: [csv], x_axis: "load_eta", output: out }),
    ).toThrow(/no plottable series/);
    expect(existsSync(out)).toBe(false);
  });

  it("grouping keys shape the legend labels", () => {
    const rows = figureInputs("fig5").flatMap((p) =>
      parseResultCsv(readFileSync(p, "utf8"), p),
    );
    const series = buildSeries(rows, {
      inputs: [],
      x_axis: "load_eta",
      output: "unused.svg",
    });
    for (const s of series) {
      expect(s.label).toMatch(/M=\d+ P=\d+ mode=\w+ beamformer=\w+/);
    }
    const svg = renderSvg(series, {
      inputs: [],
      x_axis: "load_eta",
      output: "unused.svg",
      title: "fig5",
    });
    expect(svg).toContain('class="legend"');
  });
});

describe("command line", () => {
  it("renders through the compiled CLI", () => {
    const cli = resolve(__dirname, "..", "dist", "cli.js");
    const outDir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const spec = {
      inputs: figureInputs("fig10"),
      x_axis: "rho_db",
      output: join(outDir, "fig10.svg"),
    };
    const specPath = join(outDir, "fig10.json");
    writeFileSync(specPath, JSON.stringify(spec));
    execFileSync("node", [cli, "render", "--spec", specPath]);
    expect(existsSync(spec.output)).toBe(true);
  });

  it("exits nonzero for a bad spec", () => {
    const cli = resolve(__dirname, "..", "dist", "cli.js");
    const dir = mkdtempSync(join(tmpdir(), "gfra-plots-"));
    const specPath = join(dir, "bad.json");
    writeFileSync(specPath, JSON.stringify({ x_axis: "load_eta", output: "x.svg" }));
    let failed = false;
    try {
      execFileSync("node", [cli, "render", "--spec", specPath], { stdio: "pipe" });
    } catch {
      failed = true;
    }
    expect(failed).toBe(true);
  });
});
