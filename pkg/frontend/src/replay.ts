// Replay driver: stream a parsed .kpjl file through a session at a fixed
// frame rate and collect the prediction log. The bytes sent per frame are
// the file's own serialized records (type tag spliced in front), so the
// server sees exactly what the file contains.

import type { UiSessionConfig } from "./config.js";
import type { KpjlFile } from "./kpjl.js";
import type { SocketFactory } from "./socket.js";
import { Session } from "./socket.js";
import { encodeReplayFrame, PredictionMsg } from "./wire.js";

export interface ReplayLogEntry {
  window_end: number;
  label: string;
  probs: number[];
}

export interface ReplayResult {
  classes: string[];
  framesSent: number;
  log: ReplayLogEntry[];
}

export interface ReplayOptions {
  /** 0 replays as fast as possible (tests); otherwise frames per second */
  fps?: number;
  /** ms to linger after the last frame so trailing predictions arrive */
  settleMs?: number;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function replayFile(
  file: KpjlFile,
  config: UiSessionConfig,
  factory: SocketFactory,
  options: ReplayOptions = {}
): Promise<ReplayResult> {
  const fps = options.fps ?? config.replayFps;
  const settleMs = options.settleMs ?? 200;
  const log: ReplayLogEntry[] = [];
  let classes: string[] = [];
  let failure: Error | null = null;

  let resolveReady: () => void;
  let rejectReady: (err: Error) => void;
  const ready = new Promise<void>((resolve, reject) => {
    resolveReady = resolve;
    rejectReady = reject;
  });

  const session = new Session(
    config,
    {
      onReady: (c) => {
        classes = c;
        resolveReady();
      },
      onPrediction: (msg: PredictionMsg) => {
        log.push({ window_end: msg.window_end, label: msg.label, probs: msg.probs });
      },
      onProtocolError: (code, reason) => {
        failure = new Error(`server closed: ${code} ${reason}`);
        rejectReady(failure);
      },
      onStatus: (status) => {
        if (status === "disconnected") {
          failure = new Error("server unreachable");
          rejectReady(failure);
        }
      },
    },
    factory,
    /* reconnect */ false
  );
  session.connect();

  await ready;
  for (const frame of file.frames) {
    if (failure) break;
    session.sendFrame(encodeReplayFrame(frame.raw), frame.t);
    if (fps > 0) await sleep(1000 / fps);
  }
  if (settleMs > 0) await sleep(settleMs);
  session.close();
  if (failure) throw failure;
  return { classes, framesSent: file.frames.length, log };
}

export function downloadableLog(result: ReplayResult): string {
  return JSON.stringify(
    { classes: result.classes, frames_sent: result.framesSent, predictions: result.log },
    null,
    2
  );
}
