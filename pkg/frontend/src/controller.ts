import { ApiClient, SessionReport, SessionState } from "./api.js";

/** Everything a view needs to render one moment of a session. */
export interface ConsoleState {
  session: SessionState;
  /** Node ids in visit order; always steps + 1 entries. */
  breadcrumb: string[];
  report: SessionReport | null;
}

export type StateListener = (state: ConsoleState) => void;

/** Drives one live session; the single writer of console state.
 *
 * All mutations round-trip through the service, and at most one mutating
 * request is in flight at any time: choices made while a request is pending
 * are dropped rather than queued, so rapid double-clicks cost one step.
 */
export class SessionController {
  private state: ConsoleState | null = null;
  private inFlight = false;
  private listeners: StateListener[] = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: StateListener): void {
    this.listeners.push(listener);
  }

  get current(): ConsoleState | null {
    return this.state;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  private emit(): void {
    if (this.state === null) return;
    for (const listener of this.listeners) listener(this.state);
  }

  async start(taskId: string): Promise<void> {
    await this.mutate(() => this.api.createSession(taskId), true);
  }

  async choose(action: number): Promise<void> {
    const sid = this.requireSession();
    await this.mutate(() => this.api.postAction(sid, action), false);
  }

  async stop(): Promise<void> {
    const sid = this.requireSession();
    await this.mutate(() => this.api.postStop(sid), false);
  }

  async loadReport(): Promise<void> {
    const sid = this.requireSession();
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      const report = await this.api.getReport(sid);
      this.state = { ...this.state!, report };
      this.emit();
    } finally {
      this.inFlight = false;
    }
  }

  private requireSession(): string {
    if (this.state === null) throw new Error("no active session");
    return this.state.session.session_id;
  }

  private async mutate(
    call: () => Promise<SessionState>,
    fresh: boolean,
  ): Promise<void> {
    if (this.inFlight) return; // drop, never queue
    this.inFlight = true;
    try {
      const session = await call();
      const breadcrumb = fresh
        ? [session.node]
        : [...this.state!.breadcrumb, session.node];
      // A stop does not move: keep the breadcrumb at steps + 1 entries.
      const trimmed =
        breadcrumb.length > session.steps + 1
          ? breadcrumb.slice(0, session.steps + 1)
          : breadcrumb;
      this.state = { session, breadcrumb: trimmed, report: null };
      this.emit();
    } finally {
      this.inFlight = false;
    }
  }
}
