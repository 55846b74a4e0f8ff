import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { SessionStore } from "./state.js";

// Chat panel: transcript log, pending-question banner, input form. One
// submit in flight at a time; the input stays disabled until the reply (or
// its error) lands, mirroring the server's 409 rule.
export function mountChat(
  root: HTMLElement,
  store: SessionStore,
  api: ApiClient,
): void {
  const log = root.querySelector(".chat-log") as HTMLElement;
  const banner = root.querySelector(".pending") as HTMLElement;
  const form = root.querySelector("form") as HTMLFormElement;
  const input = form.querySelector("input") as HTMLInputElement;
  const button = form.querySelector("button") as HTMLButtonElement;

  function render(): void {
    log.textContent = "";
    for (const entry of store.chat) {
      const line = document.createElement("div");
      line.className = `line ${entry.role}`;
      if (entry.kind === "error") {
        line.classList.add("error");
      }
      const who = document.createElement("span");
      who.className = "who";
      who.textContent =
        entry.role === "instructor" ? "you" : entry.role === "robot" ? "robot" : "·";
      const text = document.createElement("span");
      text.className = "text";
      text.textContent = entry.text;
      line.append(who, text);
      log.appendChild(line);
    }
    log.scrollTop = log.scrollHeight;

    if (store.pendingQuestion) {
      banner.textContent = store.pendingQuestion;
      banner.hidden = false;
    } else {
      banner.textContent = "";
      banner.hidden = true;
    }

    input.disabled = store.busy || store.sessionId === null;
    button.disabled = input.disabled;
  }

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value.trim();
    if (!text || store.busy || store.sessionId === null) {
      return;
    }
    input.value = "";
    store.setBusy(true);
    api
      .submitUtterance(store.sessionId, text)
      .catch((err) => {
        // 422/502 turns already arrive as error replies on the event
        // stream; only surface errors the stream will never carry.
        if (!(err instanceof ApiError) || err.errorKind === null) {
          const reason = err instanceof Error ? err.message : String(err);
          store.addSystemNote(`not sent: ${reason}`);
        }
      })
      .finally(() => {
        store.setBusy(false);
        input.focus();
      });
  });

  store.subscribe(render);
  render();
}
