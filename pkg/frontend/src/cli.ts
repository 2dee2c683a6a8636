#!/usr/bin/env node
/**
 * gfra-plots render --spec <path> [--spec <path> ...]
 *
 * Renders each figure spec (JSON) to its SVG output.  Exits nonzero
 * with a message on the first invalid spec or malformed CSV.
 */

import { renderSpecFile } from "./render.js";

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== "render") {
    console.error("usage: gfra-plots render --spec <figure.json> [--spec ...]");
    return 2;
  }
  const specs: string[] = [];
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--spec") {
      const value = rest[++i];
      if (!value) {
        console.error("--spec needs a path");
        return 2;
      }
      specs.push(value);
    } else {
      console.error(`unknown argument ${rest[i]}`);
      return 2;
    }
  }
  if (specs.length === 0) {
    console.error("at least one --spec is required");
    return 2;
  }
  for (const path of specs) {
    try {
      const result = renderSpecFile(path);
      console.error(`wrote ${result.output} (${result.series.length} series)`);
    } catch (err) {
      console.error(err instanceof Error ? err.message : String(err));
      return 1;
    }
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));
