"""Sliding-window streaming inference.

One engine instance owns the per-session state: imputation history, the
persistent Kalman filter (never reset between windows, exactly matching an
offline left-to-right pass), and a ring buffer of the last W processed
frames. The offline CLI replay and the WebSocket service both run this
class, which is what makes their predictions bit-identical.
"""

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LayoutError, ShapeError
from .keypoints import KeypointFrame, read_sequence
from .model import Model, predict
from .preprocess import (
    KalmanSpec,
    KalmanState,
    NormalizationSpec,
    resample_array,
    select_block_columns,
)


@dataclass(frozen=True)
class StreamConfig:
    window: int = 30
    stride: int = 5
    target_len: int = 30
    norm: NormalizationSpec = field(default_factory=NormalizationSpec)
    kalman: KalmanSpec = field(default_factory=KalmanSpec)
    keep_blocks: Optional[tuple] = None

    def __post_init__(self):
        if self.window < 2 or self.stride < 1:
            raise ShapeError("need window >= 2 and stride >= 1")


@dataclass
class Prediction:
    window_end: int
    label: str
    probs: np.ndarray
    latency_ms: float


class StreamingEngine:
    """Per-session sliding-window state machine.

    Frames are processed once on arrival (impute -> normalize -> Kalman);
    a prediction is emitted when ``frames_seen >= window`` and
    ``(frames_seen - window) % stride == 0``. Memory stays O(window * K):
    older frames are dropped from the ring buffer.

    Frames arriving before every landmark has been observed at least once
    are consumed for warm-up only (there is no history to hold for their
    dropouts) and do not count toward the window.
    """

    def __init__(self, model: Model, layout, config: StreamConfig = StreamConfig()):
        cols = (
            select_block_columns(layout, config.keep_blocks)
            if config.keep_blocks
            else None
        )
        width = len(cols) if cols is not None else layout.total_landmarks
        if width != model.spec.keypoints:
            raise LayoutError(
                f"layout feeds {width} keypoints but model expects "
                f"{model.spec.keypoints}"
            )
        if config.target_len != model.spec.time_steps:
            raise ShapeError(
                f"resample target {config.target_len} != model time steps "
                f"{model.spec.time_steps}"
            )
        self.model = model
        self.layout = layout
        self.config = config
        self.class_names = model.spec.class_names or tuple(
            f"class{i}" for i in range(model.spec.classes)
        )
        self._cols = cols
        self._last_seen = None
        self._kalman = KalmanState(config.kalman)
        self._buffer = deque(maxlen=config.window)
        self.frames_seen = 0

    def _impute(self, landmarks: np.ndarray) -> Optional[np.ndarray]:
        missing = np.isnan(landmarks[:, 0])
        if not missing.any():
            if self._last_seen is None:
                self._last_seen = landmarks.copy()
            else:
                np.copyto(self._last_seen, landmarks)
            return landmarks
        if self._last_seen is None:
            return None  # warm-up: nothing to hold yet
        out = landmarks.copy()
        out[missing] = self._last_seen[missing]
        np.copyto(self._last_seen, out)
        return out

    def push(self, frame: KeypointFrame) -> Optional[Prediction]:
        """Ingest one frame; returns a prediction at emission points."""
        if frame.layout != self.layout:
            raise LayoutError(
                f"frame layout {frame.layout.name!r} does not match session "
                f"layout {self.layout.name!r}"
            )
        from .preprocess import normalize_frame_array

        imputed = self._impute(frame.landmarks)
        if imputed is None:
            return None
        normed = normalize_frame_array(imputed, self.layout, self.config.norm)
        smoothed = self._kalman.step(normed)
        self._buffer.append((frame.t, smoothed))
        self.frames_seen += 1
        w = self.config.window
        if self.frames_seen < w or (self.frames_seen - w) % self.config.stride != 0:
            return None
        tic = time.perf_counter()
        window = np.stack([arr for _, arr in self._buffer])
        tensor = resample_array(window, self.config.target_len)
        if self._cols is not None:
            tensor = tensor[:, self._cols, :]
        probs = predict(self.model, tensor[None])[0]
        latency_ms = (time.perf_counter() - tic) * 1000.0
        label = self.class_names[int(probs.argmax())]
        return Prediction(
            window_end=frame.t, label=label, probs=probs, latency_ms=latency_ms
        )


def infer_file(model: Model, path, config: StreamConfig = StreamConfig()):
    """Offline replay of a recorded file through the streaming engine."""
    seq = read_sequence(path)
    engine = StreamingEngine(model, seq.layout, config)
    out = []
    for frame in seq.frames:
        prediction = engine.push(frame)
        if prediction is not None:
            out.append(prediction)
    return out


def bench_latency(model: Model, config: StreamConfig = StreamConfig(), n: int = 1000, seed: int = 0):
    """Wall-clock per-window inference stats (milliseconds) on this host."""
    rng = np.random.default_rng(seed)
    k = model.spec.keypoints
    t = model.spec.time_steps
    samples = []
    for _ in range(n):
        window = rng.normal(size=(1, t, k, model.spec.channels))
        tic = time.perf_counter()
        predict(model, window)
        samples.append((time.perf_counter() - tic) * 1000.0)
    arr = np.asarray(samples)
    return {
        "n": n,
        "p50_ms": float(np.percentile(arr, 50)),
        "p95_ms": float(np.percentile(arr, 95)),
        "mean_ms": float(arr.mean()),
    }
