"""Preprocessing stack: imputation, normalization, Kalman smoothing,
temporal resampling, and augmentation, composed into a pipeline that turns
a raw gesture sequence into a model-ready ``(T, K, 3)`` tensor.

All stages run in 64-bit arithmetic; conversion to 32-bit happens only at
model ingestion, so golden tensor files stay stable.
"""

import os
import shutil
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DegenerateFrameError,
    EmptyError,
    ImputationRequiredError,
    SignkitError,
    TooShortError,
)
from .keypoints import (
    DatasetManifest,
    GestureSequence,
    read_manifest,
    read_sequence,
    validate_manifest,
    write_manifest,
    write_sequence,
)
from .rng import derive_rng


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-frame origin/scale normalization.

    The reference landmark (default: right shoulder, body-local index 12 in
    the upstream holistic convention) becomes the origin; the inter-shoulder
    distance of the same frame is the scale divisor.
    """

    ref_block: str = "body"
    ref_index: int = 12
    shoulder_pair: tuple = (11, 12)
    epsilon_dnorm: float = 1e-6

    def __post_init__(self):
        if self.epsilon_dnorm <= 0:
            raise ConfigError("epsilon_dnorm must be > 0")


@dataclass(frozen=True)
class KalmanSpec:
    """Constant-velocity Kalman smoothing parameters (per coordinate)."""

    q: float = 1e-3
    r: float = 1e-2
    dt: float = 1.0
    p0: float = 1.0

    def __post_init__(self):
        if self.q < 0:
            raise ConfigError("q must be >= 0")
        if self.r <= 0:
            raise ConfigError("r must be > 0")
        if self.p0 <= 0:
            raise ConfigError("p0 must be > 0")


@dataclass(frozen=True)
class AugmentSpec:
    """Augmentation transform ranges; factor 5 = original + 4 copies."""

    rot_max_deg: float = 15.0
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    tshift_frac: float = 0.05
    noise_sigma: float = 0.01
    copies_per_sequence: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rot_max_deg < 90:
            raise ConfigError("rot_max_deg must be in [0, 90)")
        if not 0 < self.scale_lo <= self.scale_hi:
            raise ConfigError("need 0 < scale_lo <= scale_hi")
        if not 0 <= self.tshift_frac < 0.5:
            raise ConfigError("tshift_frac must be in [0, 0.5)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.copies_per_sequence < 0:
            raise ConfigError("copies_per_sequence must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    """Composition order: impute -> normalize -> Kalman -> resample."""

    norm: NormalizationSpec = field(default_factory=NormalizationSpec)
    kalman: KalmanSpec = field(default_factory=KalmanSpec)
    target_len: int = 30
    keep_blocks: Optional[tuple] = None


def impute_sequence(seq: GestureSequence) -> GestureSequence:
    """Replace NaN dropout rows by holding the previous frame's value.

    Leading dropouts are back-filled from the first valid observation of
    that landmark; a landmark that never appears cannot be imputed.
    """
    arr = seq.as_array()
    if not np.isnan(arr).any():
        return seq
    arr = arr.copy()
    L = arr.shape[0]
    missing = np.isnan(arr[:, :, 0])
    if missing.all(axis=0).any():
        raise ImputationRequiredError(
            "landmark missing in every frame; nothing to hold"
        )
    for t in range(1, L):
        rows = missing[t]
        arr[t, rows] = arr[t - 1, rows]
        missing[t] &= missing[t - 1]
    # leading dropouts: walk backwards from the first valid frame
    for t in range(L - 2, -1, -1):
        rows = missing[t]
        arr[t, rows] = arr[t + 1, rows]
    return seq.with_frames(arr)


def normalize_frame_array(landmarks: np.ndarray, layout, spec: NormalizationSpec) -> np.ndarray:
    """Normalize one (K, 3) array: subtract reference point, divide by the
    inter-shoulder distance of this frame."""
    if np.isnan(landmarks).any():
        raise ImputationRequiredError("NaN landmark; impute before normalizing")
    ref_global = layout.block_index(spec.ref_block, spec.ref_index)
    body_start, _ = layout.block_range("body")
    li, ri = spec.shoulder_pair
    left = landmarks[layout.block_index("body", li)]
    right = landmarks[layout.block_index("body", ri)]
    diff = left - right
    d_norm = float(np.sqrt(diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]))
    if d_norm < spec.epsilon_dnorm:
        raise DegenerateFrameError(
            f"inter-shoulder distance {d_norm:.3e} below {spec.epsilon_dnorm:.3e}"
        )
    ref = landmarks[ref_global].copy()
    return (landmarks - ref) / d_norm


def normalize_frame(frame, spec: NormalizationSpec = NormalizationSpec()):
    """Frame-level wrapper around :func:`normalize_frame_array`."""
    from .keypoints import KeypointFrame

    out = normalize_frame_array(frame.landmarks, frame.layout, spec)
    return KeypointFrame(t=frame.t, landmarks=out, layout=frame.layout)


def normalize_sequence(seq: GestureSequence, spec: NormalizationSpec = NormalizationSpec()) -> GestureSequence:
    """Vectorized per-frame normalization (same arithmetic as
    :func:`normalize_frame_array`, applied across all frames at once)."""
    arr = seq.as_array()
    if np.isnan(arr).any():
        raise ImputationRequiredError("NaN landmark; impute before normalizing")
    layout = seq.layout
    ref_global = layout.block_index(spec.ref_block, spec.ref_index)
    li = layout.block_index("body", spec.shoulder_pair[0])
    ri = layout.block_index("body", spec.shoulder_pair[1])
    diff = arr[:, li, :] - arr[:, ri, :]
    d = np.sqrt(
        diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    )
    bad = np.flatnonzero(d < spec.epsilon_dnorm)
    if bad.size:
        raise DegenerateFrameError(
            f"inter-shoulder distance {d[bad[0]]:.3e} below "
            f"{spec.epsilon_dnorm:.3e} at frame {seq.frames[bad[0]].t}"
        )
    refs = arr[:, ref_global, :].copy()
    out = (arr - refs[:, None, :]) / d[:, None, None]
    return seq.with_frames(out)


def kalman_gain_schedule(n: int, spec: KalmanSpec):
    """Precompute the per-step Kalman gains (k0, k1) for ``n`` updates.

    The error covariance does not depend on the data, so one scalar
    recursion serves every coordinate series of the same length.
    """
    dt, q, r, p0 = spec.dt, spec.q, spec.r, spec.p0
    q00 = q * dt**4 / 4
    q01 = q * dt**3 / 2
    q11 = q * dt**2
    p00, p01, p10, p11 = p0, 0.0, 0.0, p0
    k0s = np.empty(n)
    k1s = np.empty(n)
    for i in range(n):
        # predict covariance
        a00 = p00 + dt * (p10 + p01) + dt * dt * p11 + q00
        a01 = p01 + dt * p11 + q01
        a10 = p10 + dt * p11 + q01
        a11 = p11 + q11
        # update with H = [1, 0]
        s = a00 + r
        k0 = a00 / s
        k1 = a10 / s
        k0s[i] = k0
        k1s[i] = k1
        p00 = (1 - k0) * a00
        p01 = (1 - k0) * a01
        p10 = a10 - k1 * a00
        p11 = a11 - k1 * a01
    return k0s, k1s


class KalmanState:
    """Persistent filter state over flat coordinate arrays.

    Tracks position/velocity per scalar series plus the shared covariance,
    so a session can keep filtering across window boundaries exactly like
    an offline left-to-right pass.
    """

    def __init__(self, spec: KalmanSpec):
        self.spec = spec
        self.pos = None
        self.vel = None
        dt, q = spec.dt, spec.q
        self._q = (q * dt**4 / 4, q * dt**3 / 2, q * dt**2)
        self._p = (spec.p0, 0.0, 0.0, spec.p0)

    def step(self, z: np.ndarray) -> np.ndarray:
        """Advance the filter by one frame of measurements (any shape)."""
        if self.pos is None:
            self.pos = np.array(z, dtype=np.float64)
            self.vel = np.zeros_like(self.pos)
            return self.pos.copy()
        dt, r = self.spec.dt, self.spec.r
        q00, q01, q11 = self._q
        p00, p01, p10, p11 = self._p
        a00 = p00 + dt * (p10 + p01) + dt * dt * p11 + q00
        a01 = p01 + dt * p11 + q01
        a10 = p10 + dt * p11 + q01
        a11 = p11 + q11
        s = a00 + r
        k0 = a00 / s
        k1 = a10 / s
        self._p = (
            (1 - k0) * a00,
            (1 - k0) * a01,
            a10 - k1 * a00,
            a11 - k1 * a01,
        )
        xp = self.pos + dt * self.vel
        innov = z - xp
        self.pos = xp + k0 * innov
        self.vel = self.vel + k1 * innov
        return self.pos.copy()


def kalman_smooth(seq: GestureSequence, spec: KalmanSpec = KalmanSpec()) -> GestureSequence:
    """Filter every landmark coordinate independently; output length equals
    input length and the first frame passes through unchanged (state is
    initialized to the first measurement with zero velocity)."""
    if len(seq) == 0:
        raise EmptyError("cannot smooth an empty sequence")
    arr = seq.as_array()
    if np.isnan(arr).any():
        raise ImputationRequiredError("NaN landmark; impute before smoothing")
    state = KalmanState(spec)
    out = np.empty_like(arr)
    for t in range(arr.shape[0]):
        out[t] = state.step(arr[t])
    return seq.with_frames(out)


def resample_array(arr: np.ndarray, target_len: int) -> np.ndarray:
    """Linear interpolation of ``arr`` (axis 0) at ``target_len`` uniform
    positions over ``[0, L-1]``; endpoints are preserved exactly."""
    L = arr.shape[0]
    if L < 2:
        raise TooShortError("resampling needs at least 2 frames")
    if target_len < 2:
        raise ConfigError("target length must be >= 2")
    if L == target_len:
        return arr.copy()
    idx = np.arange(target_len, dtype=np.float64)
    pos = idx * (L - 1) / (target_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, L - 1)
    frac = (pos - lo).reshape((target_len,) + (1,) * (arr.ndim - 1))
    return (1.0 - frac) * arr[lo] + frac * arr[hi]


def resample_sequence(seq: GestureSequence, target_len: int = 30) -> GestureSequence:
    out = resample_array(seq.as_array(), target_len)
    return seq.with_frames(out, t_values=range(target_len))


def augment_array(arr: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Rotation about the vertical (y) axis, uniform scale, non-circular
    temporal shift with edge hold, then i.i.d. Gaussian noise — in that
    order. Acts about the origin, so input must already be normalized."""
    L = arr.shape[0]
    theta = np.deg2rad(rng.uniform(-spec.rot_max_deg, spec.rot_max_deg))
    scale = rng.uniform(spec.scale_lo, spec.scale_hi)
    delta = rng.uniform(-spec.tshift_frac, spec.tshift_frac) * L
    shift = int(np.rint(delta))

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    x, y, z = arr[..., 0], arr[..., 1], arr[..., 2]
    out = np.empty_like(arr)
    out[..., 0] = x * cos_t + z * sin_t
    out[..., 1] = y
    out[..., 2] = -x * sin_t + z * cos_t
    out *= scale
    if shift != 0:
        src = np.clip(np.arange(L) - shift, 0, L - 1)
        out = out[src]
    if spec.noise_sigma > 0:
        out = out + rng.normal(0.0, spec.noise_sigma, size=out.shape)
    return out


def augment_sequence(seq: GestureSequence, spec: AugmentSpec, rng: np.random.Generator) -> GestureSequence:
    return seq.with_frames(augment_array(seq.as_array(), spec, rng))


def expand_dataset(
    manifest_path,
    out_dir,
    spec: AugmentSpec,
    norm: NormalizationSpec = NormalizationSpec(),
) -> DatasetManifest:
    """Write each sequence plus ``copies_per_sequence`` augmented variants
    under ``out_dir``; returns the expanded manifest (also written there).

    Originals are copied verbatim; variants are imputed + normalized before
    augmenting (the transforms act about the normalization origin). Each
    variant draws from an RNG stream keyed by (seed, relative path, copy),
    so output is byte-identical run to run and independent of scheduling.
    """
    manifest = read_manifest(manifest_path)
    validate_manifest(manifest)
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(out_dir, exist_ok=True)
    out_sequences = []
    for rel_path, label in manifest.sequences:
        src = os.path.join(base_dir, rel_path)
        stem, ext = os.path.splitext(os.path.basename(rel_path))
        dst_name = f"{stem}{ext}"
        shutil.copyfile(src, os.path.join(out_dir, dst_name))
        out_sequences.append((dst_name, label))
        if spec.copies_per_sequence == 0:
            continue
        seq = read_sequence(src, label=label)
        normed = normalize_sequence(impute_sequence(seq), norm)
        for i in range(1, spec.copies_per_sequence + 1):
            rng = derive_rng(spec.seed, rel_path, i)
            aug = augment_sequence(normed, spec, rng)
            aug_name = f"{stem}_aug{i}{ext}"
            write_sequence(aug, os.path.join(out_dir, aug_name))
            out_sequences.append((aug_name, label))
    expanded = DatasetManifest(
        classes=manifest.classes, sequences=out_sequences, seed=manifest.seed
    )
    write_manifest(expanded, os.path.join(out_dir, "manifest.json"))
    return expanded


def select_block_columns(layout, keep_blocks) -> np.ndarray:
    """Landmark indices of the kept blocks, in layout order."""
    cols = []
    for bname, start, end in layout.blocks:
        if bname in keep_blocks:
            cols.extend(range(start, end))
    if not cols:
        raise ConfigError(f"keep_blocks {keep_blocks!r} selects nothing")
    return np.asarray(cols, dtype=np.intp)


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SignkitError as exc:
        raise type(exc)(f"{stage}: {exc}") from exc


def preprocess_pipeline(seq: GestureSequence, config: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """impute -> normalize -> Kalman -> resample (-> block subset);
    returns a float64 tensor of shape (target_len, K, 3)."""
    seq = _staged("impute", impute_sequence, seq)
    seq = _staged("normalize", normalize_sequence, seq, config.norm)
    seq = _staged("kalman", kalman_smooth, seq, config.kalman)
    seq = _staged("resample", resample_sequence, seq, config.target_len)
    tensor = seq.as_array()
    if config.keep_blocks is not None:
        cols = select_block_columns(seq.layout, config.keep_blocks)
        tensor = tensor[:, cols, :]
    return tensor


def _load_one(args):
    path, label_idx, config = args
    seq = read_sequence(path)
    return preprocess_pipeline(seq, config), label_idx


def load_manifest_tensors(
    manifest: DatasetManifest,
    base_dir,
    config: PipelineConfig = PipelineConfig(),
    jobs: int = 1,
):
    """Preprocess every manifest sequence; returns (X, y) with X of shape
    (N, T, K, 3) float64 and y int64 label indices in manifest class order.

    Sequences are independent, so ``jobs > 1`` fans out to processes; the
    result is byte-identical regardless of worker count.
    """
    validate_manifest(manifest)
    tasks = [
        (os.path.join(base_dir, path), manifest.label_index(label), config)
        for path, label in manifest.sequences
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_load_one, tasks, chunksize=8))
    else:
        results = [_load_one(t) for t in tasks]
    X = np.stack([r[0] for r in results])
    y = np.asarray([r[1] for r in results], dtype=np.int64)
    return X, y
