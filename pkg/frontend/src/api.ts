import { baseUrl } from "./config.js";
import type {
  LibraryResponse,
  SessionView,
  SubmitResult,
  TreeNode,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  errorKind: string | null;

  constructor(status: number, message: string, errorKind: string | null = null) {
    super(message);
    this.status = status;
    this.errorKind = errorKind;
  }
}

type Fetch = typeof fetch;

// The service wraps errors as {detail: string | {error_kind, message}}.
async function throwFromResponse(response: Response): Promise<never> {
  let message = `${response.status}`;
  let errorKind: string | null = null;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") {
      message = body.detail;
    } else if (body.detail && typeof body.detail.message === "string") {
      message = body.detail.message;
      errorKind = body.detail.error_kind ?? null;
    }
  } catch {
    // keep the bare status text
  }
  throw new ApiError(response.status, message, errorKind);
}

export class ApiClient {
  private fetchFn: Fetch;

  constructor(fetchFn: Fetch = (...args) => fetch(...args)) {
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${baseUrl()}${path}`, init);
    if (!response.ok) {
      await throwFromResponse(response);
    }
    return (await response.json()) as T;
  }

  createSession(): Promise<SessionView> {
    return this.request("/v1/sessions", { method: "POST" });
  }

  readSession(sessionId: string): Promise<SessionView> {
    return this.request(`/v1/sessions/${sessionId}`);
  }

  submitUtterance(sessionId: string, text: string): Promise<SubmitResult> {
    return this.request(`/v1/sessions/${sessionId}/utterances`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  readLibrary(): Promise<LibraryResponse> {
    return this.request("/v1/library");
  }

  readTree(name: string, arity: number, args: string[]): Promise<TreeNode> {
    const query = args.length
      ? `?args=${encodeURIComponent(args.join(","))}`
      : "";
    return this.request(`/v1/library/${encodeURIComponent(name)}/${arity}/tree${query}`);
  }
}
