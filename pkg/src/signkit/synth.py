"""Seeded synthetic gesture generator.

Emits raw-space holistic543 sequences: static face/body anchors with an
exact 0.3 inter-shoulder distance, and hands tracing parametric paths
(circle / line / figure-eight) plus Gaussian jitter. Classes are separable
by construction; a non-neural nearest-centroid oracle certifies that the
generated dataset is actually learnable before any training target is set.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .keypoints import (
    HOLISTIC543,
    DatasetManifest,
    GestureSequence,
    KeypointFrame,
    write_manifest,
    write_sequence,
)
from .rng import derive_rng

PATH_KINDS = ("circle", "line", "figure8")

# x gap 0.5 - 0.2 is exactly the double nearest 0.3, so the generated
# inter-shoulder distance is bit-exactly 0.3 in every frame
_SHOULDER_RIGHT = np.array([0.2, 0.35, 0.0])
_SHOULDER_LEFT = np.array([0.5, 0.35, 0.0])


def _static_base_frame() -> np.ndarray:
    """Deterministic anchor positions for every non-hand landmark."""
    lm = np.zeros((543, 3))
    # face: a spiral-ish grid around the head center
    start, end = HOLISTIC543.block_range("face")
    n = end - start
    idx = np.arange(n)
    lm[start:end, 0] = 0.5 + 0.08 * np.cos(idx * 0.13)
    lm[start:end, 1] = 0.18 + 0.06 * np.sin(idx * 0.17)
    lm[start:end, 2] = 0.02 * np.sin(idx * 0.05)
    # body: torso column with the shoulders pinned 0.3 apart
    start, end = HOLISTIC543.block_range("body")
    n = end - start
    idx = np.arange(n)
    lm[start:end, 0] = 0.5 + 0.05 * np.sin(idx * 0.4)
    lm[start:end, 1] = 0.4 + 0.015 * idx
    lm[start:end, 2] = 0.0
    lm[start + 11] = _SHOULDER_LEFT
    lm[start + 12] = _SHOULDER_RIGHT
    return lm


_BASE_FRAME = _static_base_frame()

# rigid 21-point hand shape: palm center plus finger rays
_HAND_SHAPE = np.zeros((21, 3))
for _f in range(5):
    for _j in range(4):
        _HAND_SHAPE[1 + _f * 4 + _j] = (
            0.012 * (_f - 2),
            -0.008 * (_j + 1),
            0.002 * _f,
        )


@dataclass(frozen=True)
class GestureTemplate:
    """Parametric two-hand trajectory defining one gesture class."""

    class_id: str
    path_kind: str
    amplitude: float
    freq: float
    phase: float
    center: tuple = (0.0, 0.0, 0.0)
    jitter: float = 0.01

    def __post_init__(self):
        if self.path_kind not in PATH_KINDS:
            raise ConfigError(f"unknown path kind {self.path_kind!r}")
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be > 0")

    def point(self, phase_frac: float) -> np.ndarray:
        """Path position at phase_frac in [0, 1]."""
        a = self.amplitude
        u = 2.0 * math.pi * self.freq * phase_frac + self.phase
        if self.path_kind == "circle":
            p = (a * math.cos(u), a * math.sin(u), 0.1 * a * math.sin(u))
        elif self.path_kind == "line":
            p = (a * math.sin(u), 0.6 * a * math.sin(u), 0.0)
        else:  # figure8
            p = (a * math.sin(u), 0.5 * a * math.sin(2.0 * u), 0.1 * a * math.cos(u))
        return np.asarray(p) + np.asarray(self.center)


def default_templates(n_classes: int, jitter: float = 0.01):
    """Templates spaced so every pair differs in amplitude, frequency, or
    phase by at least 3x the jitter scale."""
    if n_classes < 2:
        raise ConfigError("need at least 2 classes")
    templates = []
    for c in range(n_classes):
        templates.append(
            GestureTemplate(
                class_id=f"g{c:02d}",
                path_kind=PATH_KINDS[c % 3],
                amplitude=0.10 + 0.04 * (c // 3),
                freq=1.0 + (c % 3),
                phase=(c % 4) * math.pi / 4.0,
                jitter=jitter,
            )
        )
    return templates


def synth_sequence(template: GestureTemplate, length: int, rng) -> GestureSequence:
    """One raw-space sequence of ``length`` frames following the template.

    Face/body anchors are exactly static (shoulder distance 0.3 with zero
    variance); hands follow mirrored copies of the path plus jitter.
    """
    frames = []
    lh = slice(*HOLISTIC543.block_range("left_hand"))
    rh = slice(*HOLISTIC543.block_range("right_hand"))
    left_center = _SHOULDER_LEFT + np.array([0.05, 0.25, 0.0])
    right_center = _SHOULDER_RIGHT + np.array([-0.05, 0.25, 0.0])
    for t in range(length):
        lm = _BASE_FRAME.copy()
        frac = t / (length - 1) if length > 1 else 0.0
        p = template.point(frac)
        mirrored = p * np.array([-1.0, 1.0, 1.0])
        lm[lh] = left_center + p + _HAND_SHAPE
        lm[rh] = right_center + mirrored + _HAND_SHAPE
        if template.jitter > 0:
            lm[lh] += rng.normal(0.0, template.jitter, size=(21, 3))
            lm[rh] += rng.normal(0.0, template.jitter, size=(21, 3))
        frames.append(KeypointFrame(t=t, landmarks=lm, layout=HOLISTIC543))
    return GestureSequence(
        frames=tuple(frames), label=template.class_id, source_id=template.class_id
    )


def synth_dataset(
    out_dir,
    n_classes: int,
    per_class: int,
    seed: int = 0,
    jitter: float = 0.01,
    templates=None,
    length_range=(20, 60),
) -> DatasetManifest:
    """Write ``n_classes * per_class`` sequences plus a manifest.

    Per-sequence RNG streams derive from (seed, class, index), so reruns
    are byte-identical and generation order does not matter.
    """
    if per_class < 2:
        raise ConfigError("per_class must be >= 2")
    if templates is None:
        templates = default_templates(n_classes, jitter)
    if len(templates) != n_classes:
        raise ConfigError("one template per class required")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    lo, hi = length_range
    for template in templates:
        for i in range(per_class):
            rng = derive_rng(seed, "synth", template.class_id, i)
            length = int(rng.integers(lo, hi + 1))
            seq = synth_sequence(template, length, rng)
            name = f"{template.class_id}_{i:03d}.kpjl"
            write_sequence(seq, os.path.join(out_dir, name))
            entries.append((name, template.class_id))
    manifest = DatasetManifest(
        classes=tuple(t.class_id for t in templates), sequences=entries, seed=seed
    )
    write_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def separability_oracle(X, y) -> float:
    """Leave-one-out nearest-centroid accuracy in flattened tensor space.

    Independent of the neural model: certifies that an end-to-end training
    target on this dataset is attainable at all.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    sums = {c: X[y == c].sum(axis=0) for c in classes}
    counts = {c: int((y == c).sum()) for c in classes}
    correct = 0
    for i in range(len(X)):
        best_c, best_d = -1, np.inf
        for c in classes:
            if c == y[i]:
                if counts[c] < 2:
                    continue
                centroid = (sums[c] - X[i]) / (counts[c] - 1)
            else:
                centroid = sums[c] / counts[c]
            d = float(np.sum((X[i] - centroid) ** 2))
            if d < best_d:
                best_c, best_d = c, d
        correct += int(best_c == y[i])
    return correct / len(X)
