// In-browser landmark extraction with the MediaPipe Holistic solution
// (loaded from CDN at runtime; see index.html). The page never uploads
// pixels anywhere: only the extracted landmark coordinates go on the wire.
//
// Output packing follows the holistic543 layout:
//   [left_hand (21), right_hand (21), face (468), body (33)]
// A block the tracker lost is emitted as null rows (server-side
// imputation handles the dropout). Counts are forwarded as-is: if an
// engine version emits a different face count, the server's layout
// handshake rejects it visibly instead of silently remapping.

import type { LandmarkRow } from "./kpjl.js";

interface MpPoint {
  x: number;
  y: number;
  z: number;
}

export interface HolisticResults {
  leftHandLandmarks?: MpPoint[];
  rightHandLandmarks?: MpPoint[];
  faceLandmarks?: MpPoint[];
  poseLandmarks?: MpPoint[];
}

interface HolisticInstance {
  setOptions(options: Record<string, unknown>): void;
  onResults(cb: (results: HolisticResults) => void): void;
  send(input: { image: HTMLVideoElement }): Promise<void>;
}

declare global {
  interface Window {
    Holistic?: new (config: { locateFile: (file: string) => string }) => HolisticInstance;
  }
}

const BLOCKS: Array<{ key: keyof HolisticResults; count: number }> = [
  { key: "leftHandLandmarks", count: 21 },
  { key: "rightHandLandmarks", count: 21 },
  { key: "faceLandmarks", count: 468 },
  { key: "poseLandmarks", count: 33 },
];

export function packHolistic(results: HolisticResults): LandmarkRow[] {
  const out: LandmarkRow[] = [];
  for (const block of BLOCKS) {
    const pts = results[block.key];
    if (!pts) {
      for (let i = 0; i < block.count; i++) out.push(null);
    } else {
      for (const p of pts) out.push([p.x, p.y, p.z]);
    }
  }
  return out;
}

export function createTracker(
  onLandmarks: (lm: LandmarkRow[]) => void
): HolisticInstance {
  if (!window.Holistic) {
    throw new Error("MediaPipe Holistic script not loaded");
  }
  const holistic = new window.Holistic({
    locateFile: (file) => `https://cdn.jsdelivr.net/npm/@mediapipe/holistic/${file}`,
  });
  holistic.setOptions({
    modelComplexity: 1,
    smoothLandmarks: true,
    refineFaceLandmarks: false, // keep the 468-point face block
    minDetectionConfidence: 0.5,
    minTrackingConfidence: 0.5,
  });
  holistic.onResults((results) => onLandmarks(packHolistic(results)));
  return holistic;
}
