"""Canonical landmark data model and bit-exact file I/O.

A landmark file (extension ``.kpjl``) is JSON-Lines, UTF-8, LF endings:
line 1 is a header ``{"layout":"holistic543","k":543,"fps":30}``, every
following line is one frame ``{"t":<int>,"lm":[[x,y,z],...]}`` with exactly
``k`` triples. Missing landmarks (tracker dropout) are written as ``null``
in place of a triple and parsed to the sentinel ``(NaN, NaN, NaN)``; this
keeps files valid JSON and browser-writable while NaN marks the dropout in
memory.

Floats are serialized with Python's shortest round-trip ``repr``, so
``parse(write(frame)) == frame`` bit-exactly and ``write(parse(line))``
is the canonical form of ``line``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DuplicateError,
    EmptyError,
    LabelError,
    LayoutError,
    OrderError,
    ParseError,
)

BLOCK_NAMES = ("left_hand", "right_hand", "face", "body")


@dataclass(frozen=True)
class LayoutSpec:
    """Named partition of a flat landmark array into body-part blocks.

    ``blocks`` is an ordered tuple of ``(name, start, end)`` index ranges
    that must be contiguous, non-overlapping, and cover ``[0, K)``.
    """

    name: str
    blocks: tuple

    def __post_init__(self):
        if not self.blocks:
            raise LayoutError(f"layout {self.name!r} has no blocks")
        cursor = 0
        for bname, start, end in self.blocks:
            if bname not in BLOCK_NAMES:
                raise LayoutError(f"unknown block name {bname!r}")
            if start != cursor or end <= start:
                raise LayoutError(
                    f"blocks of {self.name!r} must be contiguous and non-empty"
                )
            cursor = end

    @property
    def total_landmarks(self) -> int:
        return self.blocks[-1][2]

    def block_range(self, name: str) -> tuple:
        """(start, end) of the named block."""
        for bname, start, end in self.blocks:
            if bname == name:
                return start, end
        raise LayoutError(f"layout {self.name!r} has no block {name!r}")

    def block_index(self, name: str, local_index: int) -> int:
        """Global landmark index of ``local_index`` within block ``name``."""
        start, end = self.block_range(name)
        if not 0 <= local_index < end - start:
            raise LayoutError(
                f"index {local_index} outside block {name!r} of {self.name!r}"
            )
        return start + local_index


HOLISTIC543 = LayoutSpec(
    name="holistic543",
    blocks=(
        ("left_hand", 0, 21),
        ("right_hand", 21, 42),
        ("face", 42, 510),
        ("body", 510, 543),
    ),
)

# Width-522 variant of the holistic layout (face block truncated by 21
# points so the totals match); kept so width-522 inputs and the literal
# architecture audit stay representable.
PAPER522 = LayoutSpec(
    name="paper522",
    blocks=(
        ("left_hand", 0, 21),
        ("right_hand", 21, 42),
        ("face", 42, 489),
        ("body", 489, 522),
    ),
)

BUILTIN_LAYOUTS = {layout.name: layout for layout in (HOLISTIC543, PAPER522)}
_REGISTRY = dict(BUILTIN_LAYOUTS)


def register_layout(layout: LayoutSpec) -> LayoutSpec:
    """Register a layout so files can reference it by name in headers."""
    existing = _REGISTRY.get(layout.name)
    if existing is not None and existing != layout:
        raise LayoutError(f"layout name {layout.name!r} already registered")
    _REGISTRY[layout.name] = layout
    return layout


def get_layout(name: str) -> LayoutSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise LayoutError(f"unknown layout {name!r}") from None


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KeypointFrame:
    """One timestamped set of landmarks; the atom of all I/O.

    ``landmarks`` is a read-only float64 array of shape ``(K, 3)``. A fully
    NaN row marks a dropped-out landmark awaiting imputation; partial NaN
    or infinite coordinates are rejected.
    """

    t: int
    landmarks: np.ndarray
    layout: LayoutSpec

    def __post_init__(self):
        arr = _frozen_array(self.landmarks)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise LayoutError(f"landmarks must be (K, 3), got {arr.shape}")
        if arr.shape[0] != self.layout.total_landmarks:
            raise LayoutError(
                f"frame has {arr.shape[0]} landmarks, layout "
                f"{self.layout.name!r} requires {self.layout.total_landmarks}"
            )
        if np.isinf(arr).any():
            raise ValueError("infinite coordinate in frame")
        nan_rows = np.isnan(arr)
        partial = nan_rows.any(axis=1) & ~nan_rows.all(axis=1)
        if partial.any():
            raise ValueError("partially-NaN landmark triple in frame")
        object.__setattr__(self, "landmarks", arr)

    @property
    def has_nan(self) -> bool:
        return bool(np.isnan(self.landmarks).any())

    def block(self, name: str) -> np.ndarray:
        start, end = self.layout.block_range(name)
        return self.landmarks[start:end]


@dataclass(frozen=True)
class GestureSequence:
    """Ordered frames plus optional class label; unit of training/inference."""

    frames: tuple
    label: Optional[str] = None
    source_id: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise EmptyError("sequence has no frames")
        layout = frames[0].layout
        prev_t = None
        for frame in frames:
            if frame.layout is not layout and frame.layout != layout:
                raise LayoutError("mixed layouts within one sequence")
            if prev_t is not None and frame.t <= prev_t:
                raise OrderError(
                    f"frame index {frame.t} not after {prev_t}"
                )
            prev_t = frame.t
        object.__setattr__(self, "frames", frames)

    @property
    def layout(self) -> LayoutSpec:
        return self.frames[0].layout

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        """Stacked landmarks, shape (L, K, 3)."""
        return np.stack([f.landmarks for f in self.frames])

    def with_frames(self, arrays, t_values=None) -> "GestureSequence":
        """Same label/source with replaced landmark arrays."""
        if t_values is None:
            t_values = [f.t for f in self.frames]
        frames = tuple(
            KeypointFrame(t=int(t), landmarks=a, layout=self.layout)
            for t, a in zip(t_values, arrays)
        )
        return GestureSequence(frames=frames, label=self.label, source_id=self.source_id)


@dataclass(frozen=True)
class DatasetManifest:
    """Class list plus (path, label) pairs; classes define label index order."""

    classes: tuple
    sequences: tuple = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(
            self, "sequences", tuple((str(p), str(l)) for p, l in self.sequences)
        )

    def label_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise LabelError(f"label {label!r} not in classes") from None


_NAN_TRIPLE = (math.nan, math.nan, math.nan)


def _parse_triples(lm, k: int) -> np.ndarray:
    if not isinstance(lm, list):
        raise ParseError("'lm' must be a list of triples")
    if len(lm) != k:
        raise LayoutError(f"expected {k} landmarks, got {len(lm)}")
    try:
        out = np.asarray(
            [_NAN_TRIPLE if t is None else t for t in lm], dtype=np.float64
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"landmark list is not [x, y, z] triples: {exc}") from exc
    if out.shape != (k, 3):
        raise ParseError(f"landmark list is not triples, got shape {out.shape}")
    if np.isinf(out).any():
        raise ValueError("non-finite coordinate in frame record")
    return out


def parse_frame_record(line: str, layout: LayoutSpec) -> KeypointFrame:
    """Parse one ``{"t":...,"lm":[...]}`` line against ``layout``."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed frame record: {exc}") from exc
    if not isinstance(obj, dict) or "t" not in obj or "lm" not in obj:
        raise ParseError("frame record must have 't' and 'lm' fields")
    t = obj["t"]
    if isinstance(t, bool) or not isinstance(t, int):
        raise ParseError(f"'t' must be an integer, got {t!r}")
    landmarks = _parse_triples(obj["lm"], layout.total_landmarks)
    return KeypointFrame(t=t, landmarks=landmarks, layout=layout)


def write_frame_record(frame: KeypointFrame) -> str:
    """Canonical one-line serialization of a frame (no trailing newline).

    Floats use Python's shortest round-trip repr (json's C encoder); NaN
    sentinel rows become ``null``.
    """
    arr = frame.landmarks
    nan_rows = np.isnan(arr[:, 0])
    rows = arr.tolist()  # python floats, so json uses repr formatting
    lm = [None if nan_rows[i] else rows[i] for i in range(len(rows))]
    return json.dumps(
        {"t": int(frame.t), "lm": lm}, separators=(",", ":"), allow_nan=False
    )


def _header_line(layout: LayoutSpec, fps: int) -> str:
    return '{"layout":%s,"k":%d,"fps":%d}' % (
        json.dumps(layout.name),
        layout.total_landmarks,
        fps,
    )


def parse_header(line: str) -> tuple:
    """Parse the .kpjl header line; returns (layout, fps)."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed header: {exc}") from exc
    if not isinstance(obj, dict) or "layout" not in obj or "k" not in obj:
        raise ParseError("header must declare 'layout' and 'k'")
    layout = get_layout(obj["layout"])
    if obj["k"] != layout.total_landmarks:
        raise LayoutError(
            f"header k={obj['k']} does not match layout "
            f"{layout.name!r} (K={layout.total_landmarks})"
        )
    return layout, int(obj.get("fps", 30))


def read_sequence(path, label: Optional[str] = None) -> GestureSequence:
    """Read a .kpjl file into a sequence; frames must arrive in t order."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise EmptyError(f"{path}: empty file")
        layout, _fps = parse_header(header)
        frames = []
        prev_t = None
        for line in fh:
            if not line.strip():
                continue
            frame = parse_frame_record(line, layout)
            if prev_t is not None and frame.t <= prev_t:
                raise OrderError(
                    f"{path}: frame index {frame.t} not after {prev_t}"
                )
            prev_t = frame.t
            frames.append(frame)
    if not frames:
        raise EmptyError(f"{path}: no frames")
    return GestureSequence(frames=tuple(frames), label=label, source_id=str(path))


def write_sequence(seq: GestureSequence, path, fps: int = 30) -> None:
    """Write a sequence in canonical .kpjl form (UTF-8, LF endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(seq.layout, fps) + "\n")
        for frame in seq.frames:
            fh.write(write_frame_record(frame) + "\n")


def read_manifest(path) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed manifest: {exc}") from exc
    for key in ("classes", "sequences"):
        if key not in obj:
            raise ParseError(f"{path}: manifest missing {key!r}")
    sequences = tuple(
        (entry["path"], entry["label"]) for entry in obj["sequences"]
    )
    return DatasetManifest(
        classes=tuple(obj["classes"]),
        sequences=sequences,
        seed=int(obj.get("seed", 0)),
    )


def write_manifest(manifest: DatasetManifest, path) -> None:
    obj = {
        "classes": list(manifest.classes),
        "seed": manifest.seed,
        "sequences": [
            {"path": p, "label": l} for p, l in manifest.sequences
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def validate_manifest(manifest: DatasetManifest) -> dict:
    """Check manifest invariants; returns per-class sequence counts."""
    if len(manifest.classes) < 2:
        raise LabelError("manifest needs at least 2 classes")
    counts = {c: 0 for c in manifest.classes}
    seen = set()
    for path, label in manifest.sequences:
        if label not in counts:
            raise LabelError(f"label {label!r} not in classes")
        if path in seen:
            raise DuplicateError(f"duplicate path {path!r}")
        seen.add(path)
        counts[label] += 1
    return counts
