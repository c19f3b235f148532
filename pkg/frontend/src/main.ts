// App wiring: live webcam mode and file replay mode.

import { DEFAULT_CONFIG, UiSessionConfig, validateConfig } from "./config.js";
import { parseKpjl } from "./kpjl.js";
import { drawLandmarks, renderBars, setStatus } from "./overlay.js";
import { downloadableLog, replayFile } from "./replay.js";
import { ProbSmoother } from "./smoothing.js";
import { Session } from "./socket.js";
import { createTracker } from "./tracker.js";
import { encodeFrame } from "./wire.js";
import type { LandmarkRow } from "./kpjl.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function readConfig(): UiSessionConfig {
  const config: UiSessionConfig = {
    ...DEFAULT_CONFIG,
    serverUrl: ($("server-url") as HTMLInputElement).value.trim(),
    stride: parseInt(($("stride") as HTMLInputElement).value, 10),
    smoothing: ($("smoothing") as HTMLInputElement).checked,
  };
  const problem = validateConfig(config);
  if (problem) throw new Error(problem);
  return config;
}

function showError(message: string): void {
  const banner = $("error-banner");
  banner.textContent = message;
  banner.style.display = message ? "block" : "none";
}

// ---------------------------------------------------------------- live mode

let liveSession: Session | null = null;
let liveStream: MediaStream | null = null;
let frameCounter = 0;
let sentThisSecond = 0;
let fpsTimer: number | null = null;

async function startLive(): Promise<void> {
  showError("");
  let config: UiSessionConfig;
  try {
    config = readConfig();
  } catch (err) {
    showError(String(err));
    return;
  }
  const video = $("video") as HTMLVideoElement;
  const canvas = $("overlay") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const smoother = new ProbSmoother(config.smoothingAlpha, config.smoothing);
  frameCounter = 0;
  sentThisSecond = 0;

  liveSession = new Session(
    config,
    {
      onReady: (classes) => renderBars($("bars"), classes, classes.map(() => 0), ""),
      onStatus: (status, detail) => setStatus($("status"), status, detail),
      onPrediction: (msg, rtt) => {
        const probs = smoother.update(msg.probs);
        renderBars($("bars"), liveSession!.classes, probs, msg.label);
        $("top-label").textContent = msg.label;
        $("latency").textContent =
          rtt === null ? `server ${msg.latency_ms.toFixed(1)} ms` : `round-trip ${rtt} ms`;
      },
      onProtocolError: (code, reason) => showError(`server rejected session: ${code} ${reason}`),
    },
    (url) => new WebSocket(url) as unknown as import("./socket.js").SocketLike,
    /* reconnect */ true
  );
  liveSession.connect();

  try {
    liveStream = await navigator.mediaDevices.getUserMedia({
      video: { width: 640, height: 480 },
    });
  } catch {
    showError("webcam permission denied");
    return;
  }
  video.srcObject = liveStream;
  await video.play();
  canvas.width = video.videoWidth;
  canvas.height = video.videoHeight;

  const tracker = createTracker((lm: LandmarkRow[]) => {
    drawLandmarks(ctx, lm, canvas.width, canvas.height);
    liveSession?.sendFrame(encodeFrame(frameCounter, lm), frameCounter);
    frameCounter += 1;
    sentThisSecond += 1;
  });

  const pump = async () => {
    if (!liveStream) return;
    await tracker.send({ image: video });
    requestAnimationFrame(pump);
  };
  requestAnimationFrame(pump);

  fpsTimer = window.setInterval(() => {
    $("fps").textContent = `${sentThisSecond} fps, dropped ${liveSession?.droppedFrames ?? 0}`;
    sentThisSecond = 0;
  }, 1000);
}

function stopLive(): void {
  liveSession?.close();
  liveSession = null;
  liveStream?.getTracks().forEach((t) => t.stop());
  liveStream = null;
  if (fpsTimer !== null) {
    clearInterval(fpsTimer);
    fpsTimer = null;
  }
  setStatus($("status"), "closed");
}

// -------------------------------------------------------------- replay mode

async function runReplay(file: File): Promise<void> {
  showError("");
  let config: UiSessionConfig;
  try {
    config = readConfig();
  } catch (err) {
    showError(String(err));
    return;
  }
  const text = await file.text();
  let parsed;
  try {
    parsed = parseKpjl(text);
  } catch (err) {
    showError(`replay file: ${String(err)}`);
    return;
  }
  setStatus($("status"), "replaying", `${parsed.frames.length} frames`);
  try {
    const result = await replayFile(
      parsed,
      config,
      (url) => new WebSocket(url) as unknown as import("./socket.js").SocketLike
    );
    setStatus($("status"), "replay done", `${result.log.length} predictions`);
    if (result.log.length > 0) {
      const last = result.log[result.log.length - 1];
      renderBars($("bars"), result.classes, last.probs, last.label);
      $("top-label").textContent = last.label;
    }
    const blob = new Blob([downloadableLog(result)], { type: "application/json" });
    const link = $("download-log") as HTMLAnchorElement;
    link.href = URL.createObjectURL(blob);
    link.download = `${file.name}.predictions.json`;
    link.style.display = "inline";
  } catch (err) {
    showError(String(err));
    setStatus($("status"), "disconnected");
  }
}

// ------------------------------------------------------------------- wiring

export function initApp(): void {
  ($("server-url") as HTMLInputElement).value = DEFAULT_CONFIG.serverUrl;
  ($("stride") as HTMLInputElement).value = String(DEFAULT_CONFIG.stride);
  ($("smoothing") as HTMLInputElement).checked = DEFAULT_CONFIG.smoothing;
  $("start-live").addEventListener("click", () => void startLive());
  $("stop-live").addEventListener("click", stopLive);
  $("replay-file").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file) void runReplay(file);
  });
}

if (typeof document !== "undefined" && document.getElementById("status")) {
  initApp();
}
