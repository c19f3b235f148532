import { describe, expect, it } from "vitest";

import { DEFAULT_CONFIG } from "../src/config.js";
import { Session } from "../src/socket.js";
import { FakeSocket, ScriptedServer } from "./fake_socket.js";

function manualSocket(server: ScriptedServer) {
  const sockets: FakeSocket[] = [];
  const factory = () => {
    const s = new FakeSocket(server);
    sockets.push(s);
    return s; // caller decides when to open
  };
  return { factory, sockets };
}

describe("Session", () => {
  it("sends hello on open and reports ready", () => {
    const { factory, sockets } = manualSocket({ classes: ["x"], window: 30, stride: 5 });
    const statuses: string[] = [];
    const session = new Session(
      DEFAULT_CONFIG,
      { onStatus: (s) => statuses.push(s) },
      factory,
      false
    );
    session.connect();
    sockets[0].open();
    expect(JSON.parse(sockets[0].sent[0])).toMatchObject({ type: "hello", stride: 5 });
    expect(session.isReady).toBe(true);
    expect(session.classes).toEqual(["x"]);
    expect(statuses).toContain("ready");
  });

  it("queues frames before ready and flushes in order", () => {
    const { factory, sockets } = manualSocket({ classes: ["x"], window: 30, stride: 5 });
    const session = new Session(DEFAULT_CONFIG, {}, factory, false);
    session.connect();
    session.sendFrame('{"type":"frame","t":0,"lm":[]}', 0);
    session.sendFrame('{"type":"frame","t":1,"lm":[]}', 1);
    expect(sockets[0].sent).toHaveLength(0);
    sockets[0].open(); // hello + ready triggers flush
    const kinds = sockets[0].sent.map((m) => JSON.parse(m));
    expect(kinds[0].type).toBe("hello");
    expect(kinds.slice(1).map((m) => m.t)).toEqual([0, 1]);
  });

  it("drops oldest queued frames beyond 60", () => {
    const { factory } = manualSocket({ classes: ["x"], window: 30, stride: 5 });
    const session = new Session(DEFAULT_CONFIG, {}, factory, false);
    session.connect();
    let dropped = 0;
    for (let t = 0; t < 70; t++) {
      dropped += session.sendFrame(`{"type":"frame","t":${t},"lm":[]}`, t);
    }
    expect(dropped).toBe(10);
    expect(session.droppedFrames).toBe(10);
  });

  it("measures round-trip latency with the injected clock", () => {
    const { factory, sockets } = manualSocket({ classes: ["a"], window: 1, stride: 1 });
    let clock = 1000;
    const rtts: Array<number | null> = [];
    const session = new Session(
      DEFAULT_CONFIG,
      { onPrediction: (_msg, rtt) => rtts.push(rtt) },
      factory,
      false,
      () => clock
    );
    session.connect();
    sockets[0].open();
    clock = 1000;
    session.sendFrame('{"type":"frame","t":0,"lm":[]}', 0);
    // FakeSocket answers synchronously, so the rtt is clock-delta = 0
    expect(rtts).toEqual([0]);
  });

  it("reports protocol errors without reconnecting", () => {
    const { factory, sockets } = manualSocket({
      classes: [],
      window: 30,
      stride: 5,
      rejectWith: { code: 4003, reason: "bad order" },
    });
    const errors: number[] = [];
    const session = new Session(
      DEFAULT_CONFIG,
      { onProtocolError: (code) => errors.push(code) },
      factory,
      true
    );
    session.connect();
    sockets[0].open();
    expect(errors).toEqual([4003]);
    expect(sockets).toHaveLength(1); // no reconnect on 4xxx closes
  });

  it("shows disconnected state when the server goes away", () => {
    const { factory, sockets } = manualSocket({ classes: ["x"], window: 30, stride: 5 });
    const statuses: string[] = [];
    const session = new Session(
      DEFAULT_CONFIG,
      { onStatus: (s) => statuses.push(s) },
      factory,
      false
    );
    session.connect();
    sockets[0].open();
    sockets[0].onclose?.({ code: 1006, reason: "gone" });
    expect(statuses[statuses.length - 1]).toBe("disconnected");
  });
});
