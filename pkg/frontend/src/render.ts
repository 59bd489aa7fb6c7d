import { SessionReport, TaskSummary } from "./api.js";
import { ConsoleState } from "./controller.js";

/** DOM views: pure functions from server-provided state to elements.
 *
 * No view computes navigation facts; labels, counters, and metric values
 * are copied verbatim from the service responses.
 */

const LOW_STEP_WARNING = 3;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function taskPicker(
  tasks: TaskSummary[],
  onPick: (taskId: string) => void,
): HTMLElement {
  const root = el("div", "task-picker");
  root.appendChild(el("h2", "task-picker-title", "Choose a task"));
  if (tasks.length === 0) {
    root.appendChild(el("p", "task-picker-empty", "No tasks available."));
    return root;
  }
  const list = el("ul", "task-list");
  for (const task of tasks) {
    const item = el("li", "task-entry");
    const button = el("button", "task-pick");
    button.dataset.taskId = task.id;
    button.appendChild(el("span", "task-instruction", task.instruction));
    button.appendChild(el("span", "task-category", task.category));
    button.addEventListener("click", () => onPick(task.id));
    item.appendChild(button);
    list.appendChild(item);
  }
  root.appendChild(list);
  return root;
}

export function stepPanel(
  state: ConsoleState,
  onChoose: (action: number) => void,
  onStop: () => void,
): HTMLElement {
  const { session, breadcrumb } = state;
  const root = el("div", "step-panel");
  root.appendChild(el("p", "instruction", session.instruction));

  const counter = el(
    "p",
    session.steps_remaining <= LOW_STEP_WARNING
      ? "step-counter step-counter-warning"
      : "step-counter",
    `${session.steps_remaining} steps remaining`,
  );
  root.appendChild(counter);
  root.appendChild(el("p", "breadcrumb", breadcrumb.join(" > ")));

  const cards = el("div", "perspective-cards");
  for (const p of session.perspectives ?? []) {
    const card = el("button", "perspective-card");
    card.dataset.action = String(p.index);
    card.appendChild(el("span", "direction-label", p.label));
    if (p.image !== null) {
      const img = el("img", "perspective-image");
      img.src = p.image;
      card.appendChild(img);
    }
    card.appendChild(el("span", "observation-text", p.text));
    card.addEventListener("click", () => onChoose(p.index));
    cards.appendChild(card);
  }
  root.appendChild(cards);

  const stop = el("button", "stop-control", "Stop here");
  stop.addEventListener("click", () => onStop());
  root.appendChild(stop);
  return root;
}

export function summaryView(
  report: SessionReport,
  onRetry?: () => void,
): HTMLElement {
  const root = el("div", "summary-view");
  const succeeded = report.metrics["TCE"] === 1;
  root.appendChild(
    el(
      "p",
      succeeded ? "outcome-badge outcome-success" : "outcome-badge outcome-failure",
      succeeded ? "Goal reached" : "Goal not reached",
    ),
  );
  if (report.status === "capped") {
    root.appendChild(
      el("p", "cap-notice", "The session hit the 35-step budget."),
    );
  }
  const rows = el("dl", "metric-rows");
  for (const key of ["TCE", "TCP-40m", "TCP-50m", "TCP-60m", "SPD", "AS"]) {
    const value = report.metrics[key];
    if (value === undefined) continue;
    rows.appendChild(el("dt", "metric-name", key));
    rows.appendChild(el("dd", "metric-value", String(value)));
  }
  root.appendChild(rows);
  if (onRetry !== undefined) {
    const retry = el("button", "report-retry", "Retry");
    retry.addEventListener("click", () => onRetry());
    root.appendChild(retry);
  }
  return root;
}

export function reportError(message: string, onRetry: () => void): HTMLElement {
  const root = el("div", "summary-view summary-error");
  root.appendChild(el("p", "error-message", message));
  const retry = el("button", "report-retry", "Retry");
  retry.addEventListener("click", () => onRetry());
  root.appendChild(retry);
  return root;
}
