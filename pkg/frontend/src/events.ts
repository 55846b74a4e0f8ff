import type { SessionEvent } from "./types.js";

// Just the parts of WebSocket the stream uses, so tests can hand in a fake.
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface StreamHandlers {
  // Fires on every (re)connect. The server resends the whole backlog on each
  // connect, so the view should reset here and rebuild from what follows.
  onOpen?: () => void;
  onEvent: (event: SessionEvent) => void;
  onDown?: (nextRetryMs: number) => void;
}

const INITIAL_DELAY_MS = 500;
const MAX_DELAY_MS = 8000;

export class EventStream {
  private url: string;
  private handlers: StreamHandlers;
  private makeSocket: SocketFactory;
  private socket: SocketLike | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private delayMs = INITIAL_DELAY_MS;
  private stopped = false;

  constructor(
    url: string,
    handlers: StreamHandlers,
    makeSocket: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.url = url;
    this.handlers = handlers;
    this.makeSocket = makeSocket;
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    const socket = this.socket;
    this.socket = null;
    if (socket) {
      socket.onclose = null;
      socket.close();
    }
  }

  private connect(): void {
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.delayMs = INITIAL_DELAY_MS;
      this.handlers.onOpen?.();
    };
    socket.onmessage = (ev) => {
      let event: SessionEvent;
      try {
        event = JSON.parse(ev.data);
      } catch {
        return;
      }
      this.handlers.onEvent(event);
    };
    socket.onclose = () => {
      if (this.socket === socket) {
        this.socket = null;
      }
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.timer !== null) {
      return;
    }
    const wait = this.delayMs;
    this.delayMs = Math.min(this.delayMs * 2, MAX_DELAY_MS);
    this.handlers.onDown?.(wait);
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.stopped) {
        this.connect();
      }
    }, wait);
  }
}
