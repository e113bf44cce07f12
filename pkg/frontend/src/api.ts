// Client for the documented service endpoints; the only network surface.

import {
  ChatRequestBody,
  ChatResponseBody,
  ChunkRecord,
  ErrorResponseBody,
  PromptKind,
} from "./types.js";

/** A non-2xx service reply carrying its machine-readable error code. */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly sources: ChunkRecord[];

  constructor(code: string, status: number, detail?: string, sources?: ChunkRecord[]) {
    super(detail || code);
    this.code = code;
    this.status = status;
    this.sources = sources ?? [];
  }
}

/** fetch failed outright (service down, DNS, CORS): offer a retry. */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
  }
}

export interface AskOptions {
  kind?: PromptKind;
  options?: string[];
  topK?: number | null;
  fetchImpl?: typeof fetch;
}

export async function askService(
  serviceUrl: string,
  question: string,
  opts: AskOptions = {},
): Promise<ChatResponseBody> {
  const body: ChatRequestBody = { question, kind: opts.kind ?? "open_ended" };
  if (body.kind === "mcq" && opts.options) {
    body.options = opts.options;
  }
  if (opts.topK != null) {
    body.top_k = opts.topK;
  }
  const doFetch = opts.fetchImpl ?? fetch;
  let response: Response;
  try {
    response = await doFetch(`${serviceUrl}/v1/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  } catch (cause) {
    throw new NetworkError(cause);
  }
  if (!response.ok) {
    let payload: ErrorResponseBody | null = null;
    try {
      payload = (await response.json()) as ErrorResponseBody;
    } catch {
      payload = null;
    }
    throw new ApiError(
      payload?.error ?? `http_${response.status}`,
      response.status,
      payload?.detail,
      payload?.sources,
    );
  }
  return (await response.json()) as ChatResponseBody;
}

export async function checkHealth(
  serviceUrl: string,
  fetchImpl: typeof fetch = fetch,
): Promise<{ status: string; chunks: number }> {
  let response: Response;
  try {
    response = await fetchImpl(`${serviceUrl}/v1/health`);
  } catch (cause) {
    throw new NetworkError(cause);
  }
  if (!response.ok) {
    throw new ApiError(`http_${response.status}`, response.status);
  }
  return (await response.json()) as { status: string; chunks: number };
}
