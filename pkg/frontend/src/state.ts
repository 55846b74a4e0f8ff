import type {
  LibraryResponse,
  ReplyKind,
  SessionEvent,
  SessionView,
  TreeNode,
} from "./types.js";

export interface ChatEntry {
  role: "instructor" | "robot" | "system";
  text: string;
  kind?: ReplyKind;
  errorKind?: string | null;
}

export interface SelectedTask {
  name: string;
  arity: number;
  params: string[];
}

type Listener = () => void;

// Everything the panels render. Event-derived fields (chat, pendingQuestion)
// are rebuilt from scratch on every reconnect, because the server resends the
// session's full event history; nothing here survives as its own source of
// truth.
export class SessionStore {
  sessionId: string | null = null;
  phase: SessionView["phase"] = "awaiting_command";
  chat: ChatEntry[] = [];
  pendingQuestion: string | null = null;
  library: LibraryResponse | null = null;
  selectedTask: SelectedTask | null = null;
  tree: TreeNode | null = null;
  busy = false;
  connected = false;

  private lastSeq = 0;
  private listeners = new Set<Listener>();

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  resetEvents(): void {
    this.chat = [];
    this.pendingQuestion = null;
    this.lastSeq = 0;
    this.notify();
  }

  applyEvent(event: SessionEvent): void {
    if (event.seq <= this.lastSeq) {
      return;
    }
    this.lastSeq = event.seq;
    if (event.type === "utterance") {
      this.chat.push({ role: "instructor", text: event.text });
    } else if (event.type === "reply") {
      this.chat.push({
        role: "robot",
        text: event.text,
        kind: event.kind,
        errorKind: event.error_kind,
      });
      if (event.kind === "question") {
        this.pendingQuestion = event.text;
      } else if (event.kind !== "error") {
        // An error turn rolls back on the server, so whatever question was
        // pending before it is still pending; only real progress clears it.
        this.pendingQuestion = null;
      }
    }
    this.notify();
  }

  addSystemNote(text: string): void {
    this.chat.push({ role: "system", text });
    this.notify();
  }

  applySessionView(view: SessionView): void {
    this.sessionId = view.session_id;
    this.phase = view.phase;
    this.pendingQuestion = view.pending_question;
    this.notify();
  }

  setLibrary(library: LibraryResponse): void {
    this.library = library;
    this.notify();
  }

  setTree(task: SelectedTask | null, tree: TreeNode | null): void {
    this.selectedTask = task;
    this.tree = tree;
    this.notify();
  }

  setBusy(busy: boolean): void {
    this.busy = busy;
    this.notify();
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
    this.notify();
  }
}
