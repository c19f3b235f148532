import { describe, expect, it } from "vitest";

import { DEFAULT_CONFIG } from "../src/config.js";
import { parseKpjl } from "../src/kpjl.js";
import { downloadableLog, replayFile } from "../src/replay.js";
import { encodeReplayFrame } from "../src/wire.js";
import { fakeFactory } from "./fake_socket.js";

function makeFile(frames: number, k = 2): string {
  const lines = [`{"layout":"holistic543","k":${k},"fps":30}`];
  for (let t = 0; t < frames; t++) {
    const lm = Array.from({ length: k }, (_, i) => `[${0.1 * i},${0.01 * t},0.0]`);
    lines.push(`{"t":${t},"lm":[${lm.join(",")}]}`);
  }
  return lines.join("\n") + "\n";
}

const FAST = { fps: 0, settleMs: 0 };

describe("replayFile", () => {
  it("streams every frame and collects the prediction log", async () => {
    const file = parseKpjl(makeFile(40));
    const { factory, sockets } = fakeFactory({
      classes: ["a", "b"],
      window: 30,
      stride: 5,
    });
    const result = await replayFile(file, DEFAULT_CONFIG, factory, FAST);
    expect(result.framesSent).toBe(40);
    expect(result.classes).toEqual(["a", "b"]);
    expect(result.log.map((e) => e.window_end)).toEqual([29, 34, 39]);
    expect(sockets[0].closed).toBe(true);
  });

  it("sends the file's own bytes per frame", async () => {
    const file = parseKpjl(makeFile(31));
    const { factory, sockets } = fakeFactory({ classes: ["a"], window: 30, stride: 5 });
    await replayFile(file, DEFAULT_CONFIG, factory, FAST);
    const sent = sockets[0].sent;
    expect(JSON.parse(sent[0]).type).toBe("hello");
    for (let i = 0; i < file.frames.length; i++) {
      expect(sent[i + 1]).toBe(encodeReplayFrame(file.frames[i].raw));
      // the t/lm portion is byte-identical to the file line
      expect(sent[i + 1].endsWith(file.frames[i].raw.slice(1))).toBe(true);
    }
  });

  it("replays deterministically", async () => {
    const file = parseKpjl(makeFile(44));
    const run = async () => {
      const { factory } = fakeFactory({ classes: ["a", "b"], window: 30, stride: 5 });
      return replayFile(file, DEFAULT_CONFIG, factory, FAST);
    };
    const first = await run();
    const second = await run();
    expect(downloadableLog(first)).toBe(downloadableLog(second));
  });

  it("labels follow the argmax of the probs array", async () => {
    const file = parseKpjl(makeFile(35));
    const { factory } = fakeFactory({
      classes: ["a", "b", "c"],
      window: 30,
      stride: 5,
      probsFor: (n) => (n === 0 ? [0.1, 0.8, 0.1] : [0.05, 0.05, 0.9]),
    });
    const result = await replayFile(file, DEFAULT_CONFIG, factory, FAST);
    expect(result.log.map((e) => e.label)).toEqual(["b", "c"]);
  });

  it("rejects when the server refuses the session", async () => {
    const file = parseKpjl(makeFile(5));
    const { factory } = fakeFactory({
      classes: [],
      window: 30,
      stride: 5,
      rejectWith: { code: 4001, reason: "layout mismatch" },
    });
    await expect(replayFile(file, DEFAULT_CONFIG, factory, FAST)).rejects.toThrow(/4001/);
  });

  it("rejects when the server is unreachable", async () => {
    const file = parseKpjl(makeFile(5));
    const { factory } = fakeFactory({
      classes: [],
      window: 30,
      stride: 5,
      unreachable: true,
    });
    await expect(replayFile(file, DEFAULT_CONFIG, factory, FAST)).rejects.toThrow(
      /unreachable/
    );
  });

  it("empty files never reach the socket", () => {
    expect(() => parseKpjl("")).toThrow();
    // parse failure happens before any session exists, so nothing is sent
  });
});
