import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, SessionReport, SessionState, TaskSummary } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { mount } from "../src/main.js";
import { stepPanel, summaryView, taskPicker } from "../src/render.js";

/** Scripted stand-in for the session service: a fetch function that walks a
 * synthetic grid and records every request it sees.
 */
class StubService {
  calls: { method: string; path: string; body: unknown }[] = [];
  private sessions = new Map<string, SessionState>();
  /** When set, action responses wait on this promise (in-flight lock tests). */
  gate: Promise<void> | null = null;

  readonly tasks: TaskSummary[] = [
    { id: "t1", instruction: "I am thirsty", category: "Basic POI" },
    { id: "t2", instruction: "I need a pharmacy", category: "Urgency" },
    { id: "t3", instruction: "Find somewhere to sit", category: "Leisure" },
  ];

  readonly report: SessionReport = {
    session_id: "s1",
    task_id: "t1",
    status: "stopped",
    metrics: {
      TCE: 1.0,
      "TCP-40m": 1.0,
      "TCP-50m": 1.0,
      "TCP-60m": 1.0,
      TCC: 1.0,
      SPL: 1.0,
      SPD: 0.0,
      nDTW: 0.0,
      AS: 6.0,
    },
    terminal_node: "n3",
  };

  private state(steps: number, status: SessionState["status"]): SessionState {
    const base: SessionState = {
      session_id: "s1",
      task_id: "t1",
      status,
      instruction: "I am thirsty",
      steps,
      steps_remaining: Math.max(0, 35 - steps),
      node: `n${steps}`,
      heading: 0,
    };
    if (status === "active") {
      base.perspectives = [0, 1, 2, 3].map((i) => ({
        index: i,
        label: ["FORWARD", "RIGHT", "BACK", "LEFT"][i],
        heading: i * 90,
        text: `view ${i} from n${steps}`,
        image: null,
      }));
    }
    return base;
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, path, body });

    const json = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (path === "/tasks") return json(this.tasks);
    if (path === "/sessions" && method === "POST") {
      const fresh = this.state(0, "active");
      this.sessions.set("s1", fresh);
      return json(fresh);
    }
    const current = this.sessions.get("s1");
    if (!current) return json({ detail: "unknown session" }, 404);
    if (path === "/sessions/s1/action" && method === "POST") {
      if (this.gate) await this.gate;
      if (current.status !== "active") return json({ detail: "not active" }, 409);
      const next = this.state(
        current.steps + 1,
        current.steps + 1 >= 35 ? "capped" : "active",
      );
      this.sessions.set("s1", next);
      return json(next);
    }
    if (path === "/sessions/s1/stop" && method === "POST") {
      if (current.status !== "active") return json({ detail: "not active" }, 409);
      const stopped = this.state(current.steps, "stopped");
      this.sessions.set("s1", stopped);
      return json(stopped);
    }
    if (path === "/sessions/s1/state") return json(current);
    if (path === "/sessions/s1/report") {
      if (current.status === "active") return json({ detail: "still active" }, 409);
      return json({ ...this.report, status: current.status });
    }
    return json({ detail: "no such route" }, 404);
  };
}

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

let service: StubService;
let api: ApiClient;

beforeEach(() => {
  service = new StubService();
  api = new ApiClient("http://stub", service.fetch);
  document.body.innerHTML = "";
});

describe("task picker", () => {
  it("renders one entry per served task", () => {
    const view = taskPicker(service.tasks, () => {});
    expect(view.querySelectorAll(".task-entry")).toHaveLength(3);
    const texts = [...view.querySelectorAll(".task-instruction")].map(
      (n) => n.textContent,
    );
    expect(texts).toEqual(["I am thirsty", "I need a pharmacy", "Find somewhere to sit"]);
  });

  it("shows an empty-state message when no tasks are served", () => {
    const view = taskPicker([], () => {});
    expect(view.querySelector(".task-picker-empty")?.textContent).toContain(
      "No tasks",
    );
  });

  it("selection issues exactly one create-session call", async () => {
    const root = document.createElement("div");
    mount(root, api);
    await flush();
    (root.querySelector(".task-pick") as HTMLButtonElement).click();
    await flush();
    const creates = service.calls.filter((c) => c.path === "/sessions");
    expect(creates).toHaveLength(1);
    expect(creates[0].body).toEqual({ task_id: "t1" });
  });
});

describe("step panel", () => {
  const state = (session: SessionState) => ({
    session,
    breadcrumb: ["n0"],
    report: null,
  });

  const activeSession = (): SessionState => ({
    session_id: "s1",
    task_id: "t1",
    status: "active",
    instruction: "I am thirsty",
    steps: 0,
    steps_remaining: 35,
    node: "n0",
    heading: 0,
    perspectives: [0, 1, 2, 3].map((i) => ({
      index: i,
      label: ["FORWARD", "RIGHT", "BACK", "LEFT"][i],
      heading: i * 90,
      text: `view ${i}`,
      image: null,
    })),
  });

  it("renders N cards for an N-option state, plus a stop control", () => {
    const session = activeSession();
    const view = stepPanel(state(session), () => {}, () => {});
    expect(view.querySelectorAll(".perspective-card")).toHaveLength(4);
    expect(view.querySelector(".stop-control")).not.toBeNull();

    session.perspectives = session.perspectives!.slice(0, 2);
    const narrower = stepPanel(state(session), () => {}, () => {});
    expect(narrower.querySelectorAll(".perspective-card")).toHaveLength(2);
  });

  it("shows labels and observation text verbatim", () => {
    const view = stepPanel(state(activeSession()), () => {}, () => {});
    const labels = [...view.querySelectorAll(".direction-label")].map(
      (n) => n.textContent,
    );
    expect(labels).toEqual(["FORWARD", "RIGHT", "BACK", "LEFT"]);
    expect(view.querySelectorAll(".observation-text")[2].textContent).toBe("view 2");
  });

  it("warns when the step budget is nearly exhausted", () => {
    const session = activeSession();
    session.steps = 34;
    session.steps_remaining = 1;
    const view = stepPanel(state(session), () => {}, () => {});
    const counter = view.querySelector(".step-counter");
    expect(counter?.textContent).toBe("1 steps remaining");
    expect(counter?.classList.contains("step-counter-warning")).toBe(true);
  });

  it("card click reports that card's action index", () => {
    const chosen: number[] = [];
    const view = stepPanel(state(activeSession()), (a) => chosen.push(a), () => {});
    const cards = view.querySelectorAll<HTMLButtonElement>(".perspective-card");
    cards[2].click();
    expect(chosen).toEqual([2]);
  });
});

describe("controller", () => {
  async function started(): Promise<SessionController> {
    const controller = new SessionController(api);
    await controller.start("t1");
    return controller;
  }

  it("issues exactly one action per user choice", async () => {
    const controller = await started();
    await controller.choose(1);
    await controller.choose(0);
    const actions = service.calls.filter((c) => c.path === "/sessions/s1/action");
    expect(actions.map((c) => c.body)).toEqual([{ action: 1 }, { action: 0 }]);
  });

  it("drops choices made while a request is in flight", async () => {
    const controller = await started();
    let release!: () => void;
    service.gate = new Promise((resolve) => (release = resolve));
    const first = controller.choose(0);
    void controller.choose(1);
    void controller.choose(2);
    void controller.choose(3);
    release();
    await first;
    const actions = service.calls.filter((c) => c.path === "/sessions/s1/action");
    expect(actions).toHaveLength(1);
    expect(controller.current?.session.steps).toBe(1);
  });

  it("state comes only from server responses", async () => {
    const controller = await started();
    await controller.choose(0);
    await controller.choose(0);
    // Breadcrumb mirrors the nodes the service reported, nothing inferred.
    expect(controller.current?.breadcrumb).toEqual(["n0", "n1", "n2"]);
    expect(controller.current?.breadcrumb).toHaveLength(
      controller.current!.session.steps + 1,
    );
    await controller.stop();
    expect(controller.current?.session.status).toBe("stopped");
    expect(controller.current?.breadcrumb).toHaveLength(
      controller.current!.session.steps + 1,
    );
  });

  it("loads the report only after the session ends", async () => {
    const controller = await started();
    await controller.choose(0);
    await controller.stop();
    await controller.loadReport();
    expect(controller.current?.report?.metrics["TCE"]).toBe(1.0);
  });
});

describe("summary view", () => {
  it("displays report fields verbatim", () => {
    const view = summaryView(service.report);
    const names = [...view.querySelectorAll(".metric-name")].map((n) => n.textContent);
    const values = [...view.querySelectorAll(".metric-value")].map(
      (n) => n.textContent,
    );
    expect(names).toEqual(["TCE", "TCP-40m", "TCP-50m", "TCP-60m", "SPD", "AS"]);
    expect(values).toEqual(["1", "1", "1", "1", "0", "6"]);
    expect(view.querySelector(".outcome-success")).not.toBeNull();
  });

  it("shows the cap notice for capped sessions", () => {
    const capped = { ...service.report, status: "capped", metrics: { ...service.report.metrics, TCE: 0.0 } };
    const view = summaryView(capped);
    expect(view.querySelector(".cap-notice")?.textContent).toContain("35-step");
    expect(view.querySelector(".outcome-failure")).not.toBeNull();
  });
});

describe("mounted console", () => {
  it("drives a full session through the service only", async () => {
    const root = document.createElement("div");
    mount(root, api);
    await flush();
    (root.querySelector(".task-pick") as HTMLButtonElement).click();
    await flush();
    expect(root.querySelectorAll(".perspective-card")).toHaveLength(4);
    (root.querySelectorAll(".perspective-card")[1] as HTMLButtonElement).click();
    await flush();
    expect(root.querySelector(".breadcrumb")?.textContent).toBe("n0 > n1");
    (root.querySelector(".stop-control") as HTMLButtonElement).click();
    await flush();
    await flush();
    expect(root.querySelector(".outcome-badge")?.textContent).toBe("Goal reached");
    // Every state change was an HTTP round trip.
    const mutations = service.calls.filter((c) => c.method === "POST");
    expect(mutations.map((c) => c.path)).toEqual([
      "/sessions",
      "/sessions/s1/action",
      "/sessions/s1/stop",
    ]);
  });

  it("offers a retry affordance when the report fetch fails", async () => {
    const failingApi = new ApiClient("http://stub", async (input, init) => {
      const url = String(input);
      if (url.endsWith("/report")) {
        return new Response("oops", { status: 500 });
      }
      return service.fetch(input, init);
    });
    const root = document.createElement("div");
    mount(root, failingApi);
    await flush();
    (root.querySelector(".task-pick") as HTMLButtonElement).click();
    await flush();
    (root.querySelector(".stop-control") as HTMLButtonElement).click();
    await flush();
    await flush();
    expect(root.querySelector(".report-retry")).not.toBeNull();
  });
});
