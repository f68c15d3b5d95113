/**
 * Simulated deployment evaluation, arithmetic-identical to the in-process
 * benchmark: the same lookup tables and the same IEEE-754 operation order
 * (only +, -, *, / are used), so outcomes match the primary implementation
 * bit for bit from the same constants file.
 */
import { Constants } from "./constants.js";
import { Request, RequestError, ResultResponse, ScenarioWire } from "./protocol.js";

interface Fragment {
  status: "ok" | "crash" | "early_stop";
  objective?: number;
  constraint_values?: Record<string, number>;
  cost_seconds: number;
  crash_reason?: string;
}

export function evaluateRequest(request: Request, constants: Constants): ResultResponse {
  if (request.constants_hash !== constants.sha256) {
    throw new RequestError(
      `constants hash mismatch: client ${request.constants_hash}, worker ${constants.sha256}`,
      request.id,
    );
  }
  const profile = constants.doc.profiles[request.hardware];
  if (profile === undefined) {
    throw new RequestError(`unknown hardware profile ${request.hardware}`, request.id);
  }
  const fragment = evaluateSimDeploy(
    request.params,
    request.scenario,
    profile.speed_multiplier,
    profile.oom_mb ?? Number.POSITIVE_INFINITY,
    request.timeout_ms,
    constants,
    request.id,
  );
  const response: ResultResponse = { id: request.id, status: fragment.status, cost_seconds: fragment.cost_seconds };
  if (fragment.objective !== undefined) response.objective = fragment.objective;
  if (fragment.constraint_values !== undefined) response.constraint_values = fragment.constraint_values;
  if (fragment.crash_reason !== undefined) response.crash_reason = fragment.crash_reason;
  return response;
}

function requireString(params: Record<string, unknown>, key: string, id: number): string {
  const value = params[key];
  if (typeof value !== "string") throw new RequestError(`param ${key} missing or not a string`, id);
  return value;
}

function requireNumber(params: Record<string, unknown>, key: string, id: number): number {
  const value = params[key];
  if (typeof value !== "number") throw new RequestError(`param ${key} missing or not a number`, id);
  return value;
}

function lookup<T>(table: Record<string, T> | undefined, key: string, what: string, id: number): T {
  if (table === undefined) throw new RequestError(`missing table for ${what}`, id);
  const value = table[key];
  if (value === undefined) throw new RequestError(`unknown ${what} ${key}`, id);
  return value;
}

export function evaluateSimDeploy(
  params: Record<string, unknown>,
  scenario: ScenarioWire,
  speedMultiplier: number,
  oomMb: number,
  timeoutMs: number | null,
  constants: Constants,
  id: number,
): Fragment {
  const tables = constants.doc.sim_deploy;
  const model = requireString(params, "model_name", id);
  const backend = requireString(params, "backend", id);
  const quant = requireString(params, "quantization", id);
  const batch = requireNumber(params, "batch_size", id);
  const threads = params.num_threads === undefined ? undefined : requireNumber(params, "num_threads", id);

  if (backend === "onnxruntime" && tables.onnx_incompatible.some(([m, q]) => m === model && q === quant)) {
    const cost = lookup(tables.load_s, model, "model", id) + tables.onnx_fail_s;
    return { status: "crash", cost_seconds: cost, crash_reason: "onnx_incompatible" };
  }

  const mem = lookup(tables.base_memory_mb, model, "model", id) * lookup(tables.batch_memory_factor, String(batch), "batch size", id);
  if (mem > oomMb) {
    const cost = lookup(tables.load_s, model, "model", id) + lookup(tables.compile_s, backend, "backend", id) + tables.oom_fail_s;
    return { status: "crash", cost_seconds: cost, crash_reason: "oom" };
  }

  let lat = lookup(lookup(tables.base_latency_ms, model, "model", id), backend, "backend", id);
  lat = lat * lookup(tables.batch_latency_factor, String(batch), "batch size", id);
  lat = lat * lookup(tables.quant_latency_factor, quant, "quantization", id);
  lat = lat * speedMultiplier;
  if (threads !== undefined) {
    const te = tables.thread_effect;
    lat = lat * (1.0 + te.span * ((te.center - threads) / te.half_range));
  }

  const p99 = lat * tables.p99_over_p95;
  const latMean = lat / tables.p95_over_mean;
  const throughput = batch / (latMean / 1000.0);
  const accuracy = lookup(tables.accuracy, model, "model", id) - lookup(tables.quant_accuracy_penalty, quant, "quantization", id);

  let cost = lookup(tables.load_s, model, "model", id) + lookup(tables.compile_s, backend, "backend", id);
  cost = cost + constants.doc.timeout.total_iters * (lat / 1000.0);
  cost = cost + tables.accuracy_eval_s;

  const metrics: Record<string, number> = {
    latency_p95: lat,
    latency_p99: p99,
    memory_mb: mem,
    throughput,
    accuracy,
  };
  const constraintValues: Record<string, number> = {};
  for (const c of scenario.constraints) {
    const value = metrics[c.name];
    if (value === undefined) throw new RequestError(`no metric for constraint ${c.name}`, id);
    constraintValues[c.name] = value;
  }

  let objective: number;
  if (scenario.objective_kind === "maximize-accuracy") {
    objective = accuracy;
  } else if (scenario.objective_kind === "maximize-throughput") {
    objective = throughput;
  } else {
    throw new RequestError(`unsupported objective kind ${scenario.objective_kind}`, id);
  }

  if (timeoutMs !== null) {
    const latencyConstraint = scenario.constraints.find((c) => c.name.startsWith("latency"));
    if (latencyConstraint !== undefined) {
      const observed = constraintValues[latencyConstraint.name];
      if (observed > timeoutMs) {
        const warmupFraction = constants.doc.timeout.warmup_iters / constants.doc.timeout.total_iters;
        return {
          status: "early_stop",
          constraint_values: { [latencyConstraint.name]: observed },
          cost_seconds: cost * warmupFraction,
        };
      }
    }
  }

  return { status: "ok", objective, constraint_values: constraintValues, cost_seconds: cost };
}
