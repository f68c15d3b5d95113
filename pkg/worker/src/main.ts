/**
 * Worker entry point: serve evaluation requests over stdin/stdout, one
 * JSON document per line, strictly serial. Malformed input produces an
 * error response and the loop continues; the process exits only when the
 * input stream ends.
 *
 * Usage: node dist/main.js <path-to-benchmark-constants.json>
 */
import { createInterface } from "node:readline";
import { loadConstants } from "./constants.js";
import { handleLine } from "./serve.js";

function main(): void {
  const constantsPath = process.argv[2];
  if (!constantsPath) {
    process.stderr.write("usage: main.js <benchmark_constants.json>\n");
    process.exit(2);
  }
  const constants = loadConstants(constantsPath);
  const reader = createInterface({ input: process.stdin, crlfDelay: Infinity });
  reader.on("line", (line) => {
    if (line.trim() === "") return;
    process.stdout.write(handleLine(line, constants) + "\n");
  });
  reader.on("close", () => process.exit(0));
}

main();
