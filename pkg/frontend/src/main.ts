import { ApiClient } from "./api.js";
import { ConsoleState, SessionController } from "./controller.js";
import { reportError, stepPanel, summaryView, taskPicker } from "./render.js";

/** Wires the controller to the page. The service base URL comes from the
 * `service` query parameter, defaulting to same-origin port 8000.
 */

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  return fromQuery ?? `${window.location.protocol}//${window.location.hostname}:8000`;
}

export function mount(root: HTMLElement, api: ApiClient): SessionController {
  const controller = new SessionController(api);

  const show = (view: HTMLElement): void => {
    root.replaceChildren(view);
  };

  const fetchReport = (): void => {
    controller.loadReport().then(renderCurrent, (err: unknown) => {
      show(reportError(String(err), fetchReport));
    });
  };

  const renderCurrent = (): void => {
    const state = controller.current;
    if (state === null) return;
    if (state.session.status !== "active") {
      if (state.report === null) {
        fetchReport();
        return;
      }
      show(summaryView(state.report));
      return;
    }
    show(
      stepPanel(
        state,
        (action) => void controller.choose(action),
        () => void controller.stop(),
      ),
    );
  };

  controller.onChange((_: ConsoleState) => renderCurrent());

  api.listTasks().then(
    (tasks) => show(taskPicker(tasks, (taskId) => void controller.start(taskId))),
    (err: unknown) => show(reportError(String(err), () => mount(root, api))),
  );
  return controller;
}

if (typeof document !== "undefined" && document.getElementById("console-root")) {
  mount(
    document.getElementById("console-root") as HTMLElement,
    new ApiClient(baseUrl()),
  );
}
