import { ApiClient } from "./api.js";
import { mountChat } from "./chat.js";
import { wsUrl } from "./config.js";
import { EventStream, type SocketFactory } from "./events.js";
import { mountLibrary } from "./library.js";
import { SessionStore } from "./state.js";
import { renderTree } from "./tree.js";
import type { DefinitionDoc } from "./types.js";

// Wires the three panels to one store and keeps them in sync with the
// server. Exported so the tests can boot the whole app against a fake
// transport; index.html calls it with the defaults.
export async function boot(
  doc: Document,
  api: ApiClient = new ApiClient(),
  makeSocket?: SocketFactory,
): Promise<{ store: SessionStore; stream: EventStream }> {
  const store = new SessionStore();
  const treePane = doc.getElementById("tree-pane") as HTMLElement;
  const status = doc.getElementById("connection") as HTMLElement;

  // Refresh rejoins the session named in the URL hash; everything shown is
  // re-fetched, nothing is kept client-side.
  const existing = doc.location?.hash.match(/^#s=([0-9a-f]+)$/)?.[1] ?? null;
  let view;
  if (existing) {
    try {
      view = await api.readSession(existing);
    } catch {
      view = await api.createSession();
    }
  } else {
    view = await api.createSession();
  }
  store.applySessionView(view);
  if (doc.location) {
    doc.location.hash = `s=${view.session_id}`;
  }

  async function refreshLibrary(): Promise<void> {
    store.setLibrary(await api.readLibrary());
  }

  async function selectTask(definition: DefinitionDoc): Promise<void> {
    const task = {
      name: definition.name,
      arity: definition.arity,
      params: definition.params,
    };
    // Expand with the definition's own parameter names as the arguments;
    // for learned tasks those are the exemplar constants it was taught with.
    const tree = await api.readTree(task.name, task.arity, task.params);
    store.setTree(task, tree);
  }

  mountChat(doc.getElementById("chat-panel") as HTMLElement, store, api);
  mountLibrary(doc.getElementById("library-panel") as HTMLElement, store, (d) => {
    void selectTask(d);
  });

  store.subscribe(() => {
    renderTree(treePane, store.tree);
    status.textContent = store.connected ? "connected" : "reconnecting…";
    status.className = store.connected ? "ok" : "down";
  });

  const stream = new EventStream(
    wsUrl(`/v1/sessions/${view.session_id}/events`),
    {
      onOpen: () => {
        store.setConnected(true);
        // The server resends the full backlog after a reconnect; rebuild the
        // event-derived view from scratch and re-sync the rest.
        store.resetEvents();
        void api.readSession(view.session_id).then((v) => store.applySessionView(v));
        void refreshLibrary();
      },
      onEvent: (event) => {
        store.applyEvent(event);
        if (event.type === "library_updated") {
          void refreshLibrary();
        }
      },
      onDown: () => store.setConnected(false),
    },
    makeSocket,
  );
  stream.start();
  await refreshLibrary();

  return { store, stream };
}
