// In-memory stand-in for the dialog service, speaking its exact wire format:
// REST bodies, error envelopes, per-session gapless event sequences, full
// backlog on every socket (re)connect, library_updated broadcasts. Replies
// are scripted; the real learning logic is covered by the server's own tests.
import type {
  LibraryDoc,
  ReplyFields,
  SessionEvent,
  SessionView,
  TreeNode,
} from "../src/types";
import type { SocketLike } from "../src/events";

function n(
  action: string,
  name: string,
  args: string[],
  children: TreeNode[] = [],
): TreeNode {
  return { action, name, args, primitive: children.length === 0, children };
}

const PRIMITIVE_DOCS = [
  { name: "openHand", arity: 0, params: [] as string[] },
  { name: "moveHand", arity: 1, params: ["target"] },
  { name: "closeHand", arity: 0, params: [] as string[] },
  { name: "resetHandPosition", arity: 0, params: [] as string[] },
  { name: "move", arity: 1, params: ["destination"] },
];

// Mirrors what the engine stores after the six-turn lesson: params keep the
// exemplar constants, bodies refer to parameters by index.
const LEARNED_DOCS = [
  {
    name: "pickUp",
    arity: 1,
    params: ["pepper"],
    body: [
      { name: "openHand", args: [] },
      { name: "moveHand", args: [{ var: 0 }] },
      { name: "closeHand", args: [] },
      { name: "resetHandPosition", args: [] },
    ],
  },
  {
    name: "put",
    arity: 2,
    params: ["pepper", "cupboard"],
    body: [
      { name: "move", args: [{ var: 1 }] },
      { name: "openHand", args: [] },
      { name: "resetHandPosition", args: [] },
      { name: "closeHand", args: [] },
    ],
  },
  {
    name: "move",
    arity: 2,
    params: ["pepper", "cupboard"],
    body: [
      { name: "pickUp", args: [{ var: 0 }] },
      { name: "put", args: [{ var: 0 }, { var: 1 }] },
    ],
  },
  {
    name: "putAway",
    arity: 1,
    params: ["pepper"],
    body: [{ name: "move", args: [{ var: 0 }, { const: "cupboard" }] }],
  },
  {
    name: "clean",
    arity: 2,
    params: ["pepper", "cupboard"],
    body: [{ name: "putAway", args: [{ var: 0 }] }],
  },
];

const CLEAN_TREE = n("clean(pepper, cupboard)", "clean", ["pepper", "cupboard"], [
  n("putAway(pepper)", "putAway", ["pepper"], [
    n("move(pepper, cupboard)", "move", ["pepper", "cupboard"], [
      n("pickUp(pepper)", "pickUp", ["pepper"], [
        n("openHand()", "openHand", []),
        n("moveHand(pepper)", "moveHand", ["pepper"]),
        n("closeHand()", "closeHand", []),
        n("resetHandPosition()", "resetHandPosition", []),
      ]),
      n("put(pepper, cupboard)", "put", ["pepper", "cupboard"], [
        n("move(cupboard)", "move", ["cupboard"]),
        n("openHand()", "openHand", []),
        n("resetHandPosition()", "resetHandPosition", []),
        n("closeHand()", "closeHand", []),
      ]),
    ]),
  ]),
]);

const QUESTIONS = ["clean", "putAway", "move", "pickUp", "put"];

function reply(fields: Partial<ReplyFields> & Pick<ReplyFields, "kind" | "text">): ReplyFields {
  return {
    question_about: null,
    learned: [],
    steps: [],
    error_kind: null,
    ...fields,
  };
}

function lessonReplies(): ReplyFields[] {
  const questions = QUESTIONS.map((name) =>
    reply({
      kind: "question",
      text: `What does ${name} mean?`,
      question_about: name,
    }),
  );
  return [
    ...questions,
    reply({
      kind: "task_learned",
      text: "OK. I learned 5 new tasks: pickUp, put, move, putAway, clean.",
      learned: ["pickUp/1", "put/2", "move/2", "putAway/1", "clean/2"],
      steps: ["clean(pepper, cupboard)"],
    }),
  ];
}

export class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  closedByClient = false;

  constructor(readonly url: string) {}

  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  // server side
  opened(): void {
    this.onopen?.();
  }

  push(event: SessionEvent): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }

  dropFromServer(): void {
    const handler = this.onclose;
    this.onclose = null;
    handler?.();
  }
}

interface FakeSession {
  id: string;
  seq: number;
  events: SessionEvent[];
  pendingQuestion: string | null;
  phase: SessionView["phase"];
  transcript: { speaker: string; text: string }[];
  repliesLeft: ReplyFields[];
  inFlight: boolean;
  sockets: FakeSocket[];
}

type Route = { status: number; body: unknown };

function asResponse(route: Route): Response {
  return {
    ok: route.status >= 200 && route.status < 300,
    status: route.status,
    json: async () => route.body,
  } as unknown as Response;
}

export class FakeServer {
  private sessions = new Map<string, FakeSession>();
  private counter = 0;
  private learnedYet = false;
  revision = 0;
  failNext: { errorKind: string; message: string } | null = null;
  holdSubmits = false;
  private heldSubmits: Array<() => void> = [];
  socketsMade = 0;

  readonly fetch = async (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const url = new URL(String(input), "http://fake");
    const method = (init?.method ?? "GET").toUpperCase();
    return asResponse(await this.route(url, method, init?.body));
  };

  readonly makeSocket = (url: string): SocketLike => {
    const socket = new FakeSocket(url);
    this.socketsMade += 1;
    const match = url.match(/\/v1\/sessions\/([^/]+)\/events$/);
    const session = match ? this.sessions.get(match[1]) : undefined;
    queueMicrotask(() => {
      if (socket.closedByClient) {
        return;
      }
      if (!session) {
        socket.dropFromServer(); // the real server refuses with close(4404)
        return;
      }
      session.sockets.push(socket);
      socket.opened();
      for (const event of session.events) {
        socket.push(event);
      }
    });
    return socket;
  };

  dropAllSockets(): void {
    for (const session of this.sessions.values()) {
      const sockets = session.sockets.splice(0);
      for (const socket of sockets) {
        socket.dropFromServer();
      }
    }
  }

  releaseHeldSubmits(): void {
    const held = this.heldSubmits.splice(0);
    for (const release of held) {
      release();
    }
  }

  private view(session: FakeSession): SessionView {
    return {
      session_id: session.id,
      phase: session.phase,
      pending_question: session.pendingQuestion,
      transcript: session.transcript,
    };
  }

  private publish(session: FakeSession, event: Omit<SessionEvent, "seq">): void {
    session.seq += 1;
    const full = { seq: session.seq, ...event } as SessionEvent;
    session.events.push(full);
    for (const socket of session.sockets) {
      socket.push(full);
    }
  }

  private libraryDoc(): LibraryDoc {
    return {
      format: "taskforge-library",
      version: 1,
      primitives: PRIMITIVE_DOCS.map((d) => ({ ...d })),
      learned: this.learnedYet ? LEARNED_DOCS.map((d) => ({ ...d })) : [],
    };
  }

  private async route(
    url: URL,
    method: string,
    rawBody: BodyInit | null | undefined,
  ): Promise<Route> {
    const path = url.pathname;

    if (method === "POST" && path === "/v1/sessions") {
      this.counter += 1;
      const session: FakeSession = {
        // same shape as the real ids: twelve hex characters
        id: `face${this.counter.toString(16).padStart(8, "0")}`,
        seq: 0,
        events: [],
        pendingQuestion: null,
        phase: "awaiting_command",
        transcript: [],
        repliesLeft: lessonReplies(),
        inFlight: false,
        sockets: [],
      };
      this.sessions.set(session.id, session);
      return { status: 200, body: this.view(session) };
    }

    let match = path.match(/^\/v1\/sessions\/([^/]+)$/);
    if (method === "GET" && match) {
      const session = this.sessions.get(match[1]);
      if (!session) {
        return { status: 404, body: { detail: "unknown session" } };
      }
      return { status: 200, body: this.view(session) };
    }

    match = path.match(/^\/v1\/sessions\/([^/]+)\/utterances$/);
    if (method === "POST" && match) {
      const session = this.sessions.get(match[1]);
      if (!session) {
        return { status: 404, body: { detail: "unknown session" } };
      }
      if (session.inFlight) {
        return {
          status: 409,
          body: { detail: "a turn is already in progress for this session" },
        };
      }
      const { text } = JSON.parse(String(rawBody)) as { text: string };
      session.inFlight = true;
      try {
        // the real server posts the utterance to the stream before thinking
        this.publish(session, { type: "utterance", text } as Omit<SessionEvent, "seq">);
        if (this.holdSubmits) {
          await new Promise<void>((resolve) => this.heldSubmits.push(resolve));
        }
        return this.answer(session, text);
      } finally {
        session.inFlight = false;
      }
    }

    if (method === "GET" && path === "/v1/library") {
      return {
        status: 200,
        body: { revision: this.revision, library: this.libraryDoc() },
      };
    }

    match = path.match(/^\/v1\/library\/([^/]+)\/(\d+)\/tree$/);
    if (method === "GET" && match) {
      const name = decodeURIComponent(match[1]);
      const arity = Number(match[2]);
      if (name === "clean" && arity === 2 && this.learnedYet) {
        return { status: 200, body: CLEAN_TREE };
      }
      if (name === "openHand" && arity === 0) {
        return { status: 200, body: n("openHand()", "openHand", []) };
      }
      return { status: 404, body: { detail: `no task named ${name}/${arity}` } };
    }

    return { status: 404, body: { detail: "no such route" } };
  }

  private answer(session: FakeSession, text: string): Route {
    if (this.failNext) {
      const { errorKind, message } = this.failNext;
      this.failNext = null;
      const fields = reply({ kind: "error", text: message, error_kind: errorKind });
      this.publish(session, { type: "reply", ...fields } as Omit<SessionEvent, "seq">);
      // rollback: pendingQuestion and phase stay as they were
      const status = errorKind === "backend" ? 502 : 422;
      return {
        status,
        body: { detail: { error_kind: errorKind, message } },
      };
    }

    const fields = session.repliesLeft.shift() ?? reply({
      kind: "steps_accepted",
      text: "OK.",
      steps: [text],
    });
    this.publish(session, { type: "reply", ...fields } as Omit<SessionEvent, "seq">);
    session.transcript.push({ speaker: "instructor", text });
    session.transcript.push({ speaker: "robot", text: fields.text });
    if (fields.kind === "question") {
      session.pendingQuestion = fields.text;
      session.phase = "awaiting_definition";
    } else {
      session.pendingQuestion = null;
      session.phase = "awaiting_command";
    }
    if (fields.kind === "task_learned") {
      this.learnedYet = true;
      this.revision += 1;
      for (const other of this.sessions.values()) {
        this.publish(other, {
          type: "library_updated",
          learned: fields.learned,
          revision: this.revision,
        } as Omit<SessionEvent, "seq">);
      }
    }
    return {
      status: 200,
      body: {
        reply: fields,
        phase: session.phase,
        pending_question: session.pendingQuestion,
      },
    };
  }
}

export const TEACHING_UTTERANCES = [
  "Clean the pepper into the cupboard.",
  "Put away the pepper.",
  "Move the pepper to the cupboard.",
  "Pick up the pepper and put it in the cupboard.",
  "Open your hand, move your hand to the pepper, close your hand, then pull your hand back.",
  "Move to the cupboard, open your hand, pull your hand back, and close your hand.",
];
