// WebSocket protocol messages. The server speaks text frames of JSON:
// client: hello, then frame records; server: ready, then predictions.
// Close codes: 4001 layout, 4002 bad value, 4003 protocol order.

import type { LandmarkRow } from "./kpjl.js";

export interface ReadyMsg {
  type: "ready";
  classes: string[];
}

export interface PredictionMsg {
  type: "prediction";
  window_end: number;
  label: string;
  probs: number[];
  latency_ms: number;
}

export type ServerMsg = ReadyMsg | PredictionMsg;

export function encodeHello(layout: string, stride: number): string {
  return JSON.stringify({ type: "hello", layout, stride });
}

/**
 * Wire encoding for a frame captured live. Landmark values pass through
 * exactly as produced by the tracker (layout packing only).
 */
export function encodeFrame(t: number, lm: LandmarkRow[]): string {
  return JSON.stringify({ type: "frame", t, lm });
}

/**
 * Wire encoding for a replayed file line. The original serialized bytes
 * are spliced after the type tag, so what goes out is exactly the file's
 * frame record — numbers are never re-formatted.
 */
export function encodeReplayFrame(rawLine: string): string {
  const body = rawLine.trim();
  if (!body.startsWith("{")) throw new Error("not a frame record");
  return '{"type":"frame",' + body.slice(1);
}

export function decodeServerMsg(data: string): ServerMsg {
  const obj = JSON.parse(data);
  if (obj?.type === "ready" && Array.isArray(obj.classes)) return obj as ReadyMsg;
  if (
    obj?.type === "prediction" &&
    typeof obj.window_end === "number" &&
    typeof obj.label === "string" &&
    Array.isArray(obj.probs)
  ) {
    return obj as PredictionMsg;
  }
  throw new Error(`unrecognized server message: ${data.slice(0, 80)}`);
}
