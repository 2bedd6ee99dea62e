/**
 * Typed client for the planvid session service.
 *
 * The service speaks JSON over HTTP: sessions are created with a prompt and
 * an optional conditioning frame, advanced by polling the step endpoint, and
 * steered by posting intervention text. Errors always arrive as
 * `{error: {code, message}}`; anything that never reached the server (DNS
 * failure, refused connection, dropped socket) surfaces as `NetworkError`.
 */

export type SessionStatus = "text_mode" | "done";

export interface GenerationConfig {
  temperature?: number;
  ode_steps?: number;
  cfg_scale?: number;
  max_elements?: number;
  seed?: number;
}

export interface SessionRecord {
  id: string;
  created_at: string;
  status: SessionStatus;
  element_count: number;
  config: Record<string, unknown>;
}

export interface TextEvent {
  type: "text";
  text: string;
  token_id: number;
  timestamp_s: number;
}

export interface ChunkEvent {
  type: "chunk";
  chunk_index: number;
  timestamp_s: number;
  frames_png_base64: string[];
}

export interface DoneEvent {
  type: "done";
  reason: string;
}

export type StepEvent = TextEvent | ChunkEvent | DoneEvent;

export interface StepResponse {
  events: StepEvent[];
  status: SessionStatus;
  element_count: number;
}

export interface InterveneResponse {
  accepted: true;
  applied_at_s: number;
}

export interface DeleteResponse {
  deleted: true;
  id: string;
}

export interface CreateSessionRequest {
  prompt: string;
  cond_frame?: string;
  config?: GenerationConfig;
}

/** The server rejected the request and said why. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

/** The request never completed: connection refused, dropped, or timed out. */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function defaultFetch(): FetchLike {
  const f = globalThis.fetch;
  if (!f) {
    throw new Error("no fetch implementation available; pass one explicitly");
  }
  return f.bind(globalThis);
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? defaultFetch();
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(
        err instanceof Error ? err.message : String(err),
      );
    }
    if (!res.ok) {
      throw await this.toApiError(res);
    }
    return res;
  }

  private async toApiError(res: Response): Promise<ApiError> {
    let code = `http_${res.status}`;
    let message = res.statusText || `request failed with status ${res.status}`;
    try {
      const payload = (await res.json()) as {
        error?: { code?: string; message?: string };
      };
      if (payload.error?.code) code = payload.error.code;
      if (payload.error?.message) message = payload.error.message;
    } catch {
      // Non-JSON error body; keep the status-derived fallback.
    }
    return new ApiError(res.status, code, message);
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.request(method, path, body);
    return (await res.json()) as T;
  }

  createSession(body: CreateSessionRequest): Promise<SessionRecord> {
    return this.json<SessionRecord>("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionRecord> {
    return this.json<SessionRecord>("GET", `/sessions/${id}`);
  }

  step(id: string, nEvents = 1): Promise<StepResponse> {
    return this.json<StepResponse>("POST", `/sessions/${id}/step`, {
      n_events: nEvents,
    });
  }

  intervene(id: string, text: string): Promise<InterveneResponse> {
    return this.json<InterveneResponse>("POST", `/sessions/${id}/intervene`, {
      text,
    });
  }

  /** Raw JSON-lines transcript, exactly as the server exports it. */
  async transcript(id: string): Promise<string> {
    const res = await this.request("GET", `/sessions/${id}/transcript`);
    return res.text();
  }

  deleteSession(id: string): Promise<DeleteResponse> {
    return this.json<DeleteResponse>("DELETE", `/sessions/${id}`);
  }
}

/**
 * Wall-clock second at which generated chunk `i` starts. The conditioning
 * chunk sits at 0; each later chunk covers four frames at 16 frames/s.
 */
export function chunkTimestamp(i: number): number {
  return i === 0 ? 0 : (4 * i - 3) / 16;
}
