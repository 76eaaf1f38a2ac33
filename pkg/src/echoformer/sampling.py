"""Clip sampling: variable-length labeled videos -> fixed-length training clips.

Two protocols:

* Guided random sampling keeps the labeled extremum pair and everything
  in-between, extends each side by a uniform 10-70% of the pair gap, and
  pads the tail with black masked frames.
* Mirror sampling reflection-tiles the labeled segment until it exceeds the
  clip length and randomly crops, so every frame is live and every extremum
  occurrence in the clip is a true labeled extremum.

Per-frame SD labels: classification marks every extremum occurrence with its
class (transition elsewhere); regression maps the position between ES (-1)
and ED (+1) through a cubic ramp, constant beyond the labeled pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClipRejectedError, ConfigurationError, ValidationError
from .heads import CLASS_ED, CLASS_ES, CLASS_TRANSITION

PAD_INDEX = -1
IGNORE_LABEL = -1

KIND_ES = "ES"
KIND_ED = "ED"


@dataclass
class VideoRecord:
    """A grayscale video with one labeled extremum pair and its EF."""

    frames: np.ndarray            # (num_frames, H, W) uint8
    fps: float
    label_a: int                  # first labeled extremum (index)
    kind_a: str                   # "ES" or "ED"
    label_b: int                  # second labeled extremum, label_a < label_b
    kind_b: str
    ef_percent: float
    video_id: str = ""

    def __post_init__(self):
        if self.kind_a not in (KIND_ES, KIND_ED) or self.kind_b not in (KIND_ES, KIND_ED):
            raise ValidationError(f"bad extremum kinds ({self.kind_a}, {self.kind_b})")
        if not 0 <= self.label_a < self.label_b < self.num_frames:
            raise ValidationError(
                f"labels ({self.label_a}, {self.label_b}) invalid for "
                f"{self.num_frames} frames"
            )
        if not 0.0 < self.ef_percent < 100.0:
            raise ValidationError(f"ef_percent {self.ef_percent} outside (0, 100)")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def gap(self) -> int:
        return self.label_b - self.label_a

    def es_index(self) -> int:
        return self.label_a if self.kind_a == KIND_ES else self.label_b

    def ed_index(self) -> int:
        return self.label_a if self.kind_a == KIND_ED else self.label_b


@dataclass
class SampledClip:
    """Fixed-length frame window with mask, labels, and provenance."""

    frames: np.ndarray            # (clip_len, H, W) uint8, zeros where padded
    mask: np.ndarray              # (clip_len,) bool, True = live
    ef_target: float              # EF scaled to (0, 1)
    source_indices: np.ndarray    # (clip_len,) original frame index, PAD_INDEX if padded
    label_a: int                  # in source-index coordinates
    kind_a: str
    label_b: int
    kind_b: str
    sd_labels: np.ndarray | None = None
    ext_pre: float | None = None  # continuous extension draws (guided random only)
    ext_post: float | None = None

    @property
    def clip_len(self) -> int:
        return self.frames.shape[0]


def scale_ef(ef_percent: float) -> float:
    """Map an EF on the 0-100 scale to the network's 0-1 target."""
    if not 0.0 < ef_percent < 100.0:
        raise ValidationError(f"ef_percent {ef_percent} outside (0, 100)")
    return ef_percent / 100.0


def subsample(video: VideoRecord, limit: int = 128) -> VideoRecord:
    """Halve any video longer than `limit`: every second frame, fps/2, labels//2."""
    if video.num_frames <= limit:
        return video
    return VideoRecord(
        frames=video.frames[::2],
        fps=video.fps / 2.0,
        label_a=video.label_a // 2,
        kind_a=video.kind_a,
        label_b=video.label_b // 2,
        kind_b=video.kind_b,
        ef_percent=video.ef_percent,
        video_id=video.video_id,
    )


def _assemble(video: VideoRecord, source_indices: np.ndarray, mask: np.ndarray,
              **extra) -> SampledClip:
    h, w = video.frames.shape[1:]
    frames = np.zeros((len(source_indices), h, w), dtype=video.frames.dtype)
    live = mask.nonzero()[0]
    frames[live] = video.frames[source_indices[live]]
    return SampledClip(
        frames=frames,
        mask=mask,
        ef_target=scale_ef(video.ef_percent),
        source_indices=source_indices,
        label_a=video.label_a,
        kind_a=video.kind_a,
        label_b=video.label_b,
        kind_b=video.kind_b,
        **extra,
    )


def guided_random_sample(video: VideoRecord, rng: np.random.Generator,
                         clip_len: int = 128) -> SampledClip:
    """Labeled pair plus random 10-70% context on each side, black-padded.

    Raises ClipRejectedError when the labeled pair itself cannot fit.
    """
    g = video.gap
    if g < 1:
        raise ClipRejectedError(f"video {video.video_id}: labeled gap is zero")
    if g + 1 > clip_len:
        raise ClipRejectedError(
            f"video {video.video_id}: labeled pair spans {g + 1} > clip_len {clip_len}"
        )
    ext_pre = rng.uniform(0.1 * g, 0.7 * g)
    ext_post = rng.uniform(0.1 * g, 0.7 * g)
    start = max(0, video.label_a - int(round(ext_pre)))
    end = min(video.num_frames - 1, video.label_b + int(round(ext_post)))
    span = end - start + 1
    if span > clip_len:
        # center-crop, clamped so both labels stay inside
        lo = max(start, video.label_b - clip_len + 1)
        hi = min(video.label_a, end - clip_len + 1)
        start = min(max(start + (span - clip_len) // 2, lo), hi)
        end = start + clip_len - 1
        span = clip_len
    source = np.full(clip_len, PAD_INDEX, dtype=np.int64)
    source[:span] = np.arange(start, end + 1)
    mask = source != PAD_INDEX
    return _assemble(video, source, mask, ext_pre=ext_pre, ext_post=ext_post)


def _reflect_fold(t: np.ndarray, gap: int) -> np.ndarray:
    """Map tiling position t to offset in [0, gap] by reflection (period 2*gap)."""
    u = np.mod(t, 2 * gap)
    return np.where(u <= gap, u, 2 * gap - u)


def mirror_sample(video: VideoRecord, rng: np.random.Generator,
                  clip_len: int = 128) -> SampledClip:
    """Reflection-tile the labeled segment past clip_len, then randomly crop."""
    g = video.gap
    if g < 1:
        raise ClipRejectedError(f"video {video.video_id}: labeled gap is zero")
    total = g + 1
    while total <= clip_len:
        total += g
    offset = int(rng.integers(0, total - clip_len + 1))
    positions = np.arange(offset, offset + clip_len)
    source = video.label_a + _reflect_fold(positions, g)
    mask = np.ones(clip_len, dtype=bool)
    return _assemble(video, source.astype(np.int64), mask)


def make_sd_labels(clip: SampledClip, mode: str, method: str = "mirror") -> np.ndarray:
    """Per-frame SD labels from a clip's source indices.

    mode "classification": int classes (ED=1, ES=2, transition=0), padded
    frames get IGNORE_LABEL. mode "regression": cubic ramp between ES (-1)
    and ED (+1), constant beyond the labeled pair (guided-random context
    extensions only), 0 on padded frames.
    """
    if mode not in ("classification", "regression"):
        raise ConfigurationError(f"unknown sd label mode {mode!r}")
    if method not in ("mirror", "random"):
        raise ConfigurationError(f"unknown sampling method {method!r}")
    src = clip.source_indices
    live = clip.mask
    if mode == "classification":
        labels = np.full(clip.clip_len, IGNORE_LABEL, dtype=np.int64)
        labels[live] = CLASS_TRANSITION
        kind_class = {KIND_ED: CLASS_ED, KIND_ES: CLASS_ES}
        labels[live & (src == clip.label_a)] = kind_class[clip.kind_a]
        labels[live & (src == clip.label_b)] = kind_class[clip.kind_b]
        return labels

    if method == "mirror" and live.any():
        inside = (src[live] >= clip.label_a) & (src[live] <= clip.label_b)
        if not inside.all():
            raise ConfigurationError("mirror clip has sources outside the labeled pair")
    gap = clip.label_b - clip.label_a
    u = (np.clip(src, clip.label_a, clip.label_b) - clip.label_a) / gap
    ramp = (2.0 * u - 1.0) ** 3
    sign = 1.0 if clip.kind_b == KIND_ED else -1.0      # +1 must land on ED
    labels = sign * ramp
    labels[~live] = 0.0
    return labels
