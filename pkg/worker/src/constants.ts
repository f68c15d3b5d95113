/** Benchmark-constants file loading; responses are only valid against the
 * exact file the client hashed, so the content hash is checked per request. */
import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export interface ThreadEffect {
  span: number;
  center: number;
  half_range: number;
}

export interface SimDeployTables {
  accuracy: Record<string, number>;
  quant_accuracy_penalty: Record<string, number>;
  base_latency_ms: Record<string, Record<string, number>>;
  batch_latency_factor: Record<string, number>;
  quant_latency_factor: Record<string, number>;
  thread_effect: ThreadEffect;
  base_memory_mb: Record<string, number>;
  batch_memory_factor: Record<string, number>;
  p99_over_p95: number;
  p95_over_mean: number;
  onnx_incompatible: [string, string][];
  load_s: Record<string, number>;
  compile_s: Record<string, number>;
  accuracy_eval_s: number;
  onnx_fail_s: number;
  oom_fail_s: number;
}

export interface ConstantsDoc {
  version: number;
  profiles: Record<string, { speed_multiplier: number; oom_mb?: number }>;
  timeout: { warmup_iters: number; total_iters: number };
  sim_deploy: SimDeployTables;
}

export interface Constants {
  doc: ConstantsDoc;
  sha256: string;
}

export function loadConstants(path: string): Constants {
  const raw = readFileSync(path);
  const sha256 = createHash("sha256").update(raw).digest("hex");
  return { doc: JSON.parse(raw.toString("utf-8")) as ConstantsDoc, sha256 };
}
