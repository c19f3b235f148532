// Session configuration for both live and replay modes.

export interface UiSessionConfig {
  serverUrl: string;
  layout: string;
  stride: number;
  /** client-side exponential smoothing of displayed probabilities */
  smoothing: boolean;
  smoothingAlpha: number;
  /** frames per second when replaying a recorded file */
  replayFps: number;
}

export const DEFAULT_CONFIG: UiSessionConfig = {
  serverUrl: "ws://127.0.0.1:8765/ws",
  layout: "holistic543",
  stride: 5,
  smoothing: true,
  smoothingAlpha: 0.3,
  replayFps: 30,
};

export function validateConfig(config: UiSessionConfig): string | null {
  if (!config.serverUrl.startsWith("ws")) return "server URL must be ws:// or wss://";
  if (!Number.isInteger(config.stride) || config.stride < 1) return "stride must be >= 1";
  if (!(config.smoothingAlpha > 0 && config.smoothingAlpha <= 1)) {
    return "smoothing alpha must be in (0, 1]";
  }
  if (config.replayFps <= 0) return "replay fps must be > 0";
  return null;
}
