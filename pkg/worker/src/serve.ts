/** One request line in, one response line out; errors stay in-band. */
import { Constants } from "./constants.js";
import { errorResponse, parseRequest, RequestError, serializeResponse } from "./protocol.js";
import { evaluateRequest } from "./simdeploy.js";

export function handleLine(line: string, constants: Constants): string {
  try {
    const request = parseRequest(line);
    return serializeResponse(evaluateRequest(request, constants));
  } catch (err) {
    if (err instanceof RequestError) {
      return serializeResponse(errorResponse(err.requestId, err.message));
    }
    return serializeResponse(errorResponse(-1, `internal error: ${(err as Error).message}`));
  }
}
