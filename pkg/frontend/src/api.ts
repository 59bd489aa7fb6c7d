/** Typed client for the session-service HTTP API.
 *
 * The console holds no navigation logic of its own: every state transition
 * is a round trip through one of these calls, and views render only from
 * the JSON the service returns.
 */

export interface TaskSummary {
  id: string;
  instruction: string;
  category: string;
}

export interface PerspectiveView {
  index: number;
  label: string;
  heading: number;
  text: string;
  image: string | null;
}

export interface SessionState {
  session_id: string;
  task_id: string;
  status: "active" | "stopped" | "capped";
  instruction: string;
  steps: number;
  steps_remaining: number;
  node: string;
  heading: number;
  perspectives?: PerspectiveView[];
}

export interface SessionReport {
  session_id: string;
  task_id: string;
  status: string;
  metrics: Record<string, number>;
  terminal_node: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    return parseOrThrow<T>(await this.fetchFn(this.baseUrl + path));
  }

  private async post<T>(path: string, body?: unknown): Promise<T> {
    return parseOrThrow<T>(
      await this.fetchFn(this.baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: body === undefined ? null : JSON.stringify(body),
      }),
    );
  }

  listTasks(): Promise<TaskSummary[]> {
    return this.get("/tasks");
  }

  createSession(taskId: string): Promise<SessionState> {
    return this.post("/sessions", { task_id: taskId });
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.get(`/sessions/${sessionId}/state`);
  }

  postAction(sessionId: string, action: number): Promise<SessionState> {
    return this.post(`/sessions/${sessionId}/action`, { action });
  }

  postStop(sessionId: string): Promise<SessionState> {
    return this.post(`/sessions/${sessionId}/stop`);
  }

  getReport(sessionId: string): Promise<SessionReport> {
    return this.get(`/sessions/${sessionId}/report`);
  }
}
