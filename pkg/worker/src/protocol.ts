/**
 * Line-delimited JSON wire protocol: one request per line on stdin, one
 * response per line on stdout. Errors are reported in-band and never kill
 * the worker; only end-of-input ends the process.
 */

export interface ConstraintSpec {
  name: string;
  threshold: number;
}

export interface ScenarioWire {
  name: string;
  objective_kind: string;
  constraints: ConstraintSpec[];
}

export interface Request {
  id: number;
  params: Record<string, unknown>;
  scenario: ScenarioWire;
  hardware: string;
  timeout_ms: number | null;
  constants_hash: string;
}

export interface ResultResponse {
  id: number;
  status: "ok" | "crash" | "early_stop";
  objective?: number;
  constraint_values?: Record<string, number>;
  cost_seconds: number;
  crash_reason?: string;
}

export interface ErrorResponse {
  id: number;
  error: string;
}

export type Response = ResultResponse | ErrorResponse;

const REQUIRED_FIELDS = ["id", "params", "scenario", "hardware", "timeout_ms", "constants_hash"];

export class RequestError extends Error {
  constructor(message: string, public requestId: number) {
    super(message);
  }
}

/** Parse one request line; unparseable ids are reported as -1. */
export function parseRequest(line: string): Request {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (err) {
    throw new RequestError(`malformed request line: ${(err as Error).message}`, -1);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new RequestError("request is not a JSON object", -1);
  }
  const record = doc as Record<string, unknown>;
  const id = typeof record.id === "number" && Number.isInteger(record.id) ? record.id : -1;
  for (const field of REQUIRED_FIELDS) {
    if (!(field in record)) {
      throw new RequestError(`request missing field ${field}`, id);
    }
  }
  if (id === -1) {
    throw new RequestError("request id is not an integer", -1);
  }
  return record as unknown as Request;
}

export function serializeResponse(response: Response): string {
  return JSON.stringify(response);
}

export function errorResponse(id: number, message: string): ErrorResponse {
  return { id, error: message };
}
