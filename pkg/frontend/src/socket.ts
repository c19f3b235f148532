// Session socket: hello handshake, bounded outgoing queue, optional
// reconnect with capped backoff (live mode), and client-side round-trip
// latency measurement. The socket implementation is injectable so the
// protocol logic is testable without a browser or a server.

import type { UiSessionConfig } from "./config.js";
import { DropOldestQueue } from "./queue.js";
import { decodeServerMsg, encodeHello, PredictionMsg } from "./wire.js";

export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  readyState: number;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev: { code: number; reason: string }) => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type SessionStatus = "connecting" | "ready" | "disconnected" | "closed";

export interface SessionHandlers {
  onReady?: (classes: string[]) => void;
  onPrediction?: (msg: PredictionMsg, rttMs: number | null) => void;
  onStatus?: (status: SessionStatus, detail?: string) => void;
  onProtocolError?: (code: number, reason: string) => void;
}

const OPEN = 1;
const MAX_TRACKED_SENDS = 128;

export class Session {
  private ws: SocketLike | null = null;
  private ready = false;
  private closedByUser = false;
  private retryMs = 1000;
  private readonly pending = new DropOldestQueue<string>(60);
  private readonly sentAt = new Map<number, number>();
  classes: string[] = [];

  constructor(
    private readonly config: UiSessionConfig,
    private readonly handlers: SessionHandlers = {},
    private readonly factory: SocketFactory,
    private readonly reconnect: boolean = true,
    private readonly now: () => number = () => Date.now()
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private open(): void {
    this.handlers.onStatus?.("connecting");
    this.ready = false;
    const ws = this.factory(this.config.serverUrl);
    this.ws = ws;
    ws.onopen = () => {
      this.retryMs = 1000;
      ws.send(encodeHello(this.config.layout, this.config.stride));
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    ws.onerror = () => {
      // onclose carries the reconnect logic
    };
    ws.onclose = (ev) => {
      this.ready = false;
      if (ev.code >= 4000) {
        this.handlers.onProtocolError?.(ev.code, ev.reason);
        this.handlers.onStatus?.("closed", `server closed: ${ev.code} ${ev.reason}`);
        return;
      }
      if (this.closedByUser) {
        this.handlers.onStatus?.("closed");
        return;
      }
      this.handlers.onStatus?.("disconnected", `retrying in ${this.retryMs} ms`);
      if (this.reconnect) {
        setTimeout(() => {
          if (!this.closedByUser) this.open();
        }, this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 8000);
      }
    };
  }

  private handleMessage(data: string): void {
    const msg = decodeServerMsg(data);
    if (msg.type === "ready") {
      this.ready = true;
      this.classes = msg.classes;
      this.handlers.onReady?.(msg.classes);
      this.handlers.onStatus?.("ready");
      this.flush();
      return;
    }
    const sent = this.sentAt.get(msg.window_end);
    this.sentAt.delete(msg.window_end);
    const rtt = sent === undefined ? null : this.now() - sent;
    this.handlers.onPrediction?.(msg, rtt);
  }

  private flush(): void {
    while (this.ready && this.ws && this.ws.readyState === OPEN) {
      const next = this.pending.shift();
      if (next === undefined) break;
      this.ws.send(next);
    }
  }

  /**
   * Queue or send one encoded frame message. Returns the number of frames
   * dropped from the outgoing queue (drop-oldest beyond capacity).
   */
  sendFrame(encoded: string, t: number): number {
    this.sentAt.set(t, this.now());
    if (this.sentAt.size > MAX_TRACKED_SENDS) {
      const oldest = this.sentAt.keys().next().value as number;
      this.sentAt.delete(oldest);
    }
    if (this.ready && this.ws && this.ws.readyState === OPEN) {
      this.flush();
      this.ws.send(encoded);
      return 0;
    }
    return this.pending.push(encoded);
  }

  get droppedFrames(): number {
    return this.pending.dropped;
  }

  get isReady(): boolean {
    return this.ready;
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
  }
}
