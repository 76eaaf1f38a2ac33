"""Synthetic echo-like videos with analytically known ES/ED indices and EF.

Each video renders a dark cavity ellipse inside a bright myocardial ring on
a sector background. The cavity area follows an asymmetric periodic profile
(fast contraction, slow relaxation) whose extrema land exactly on integer
frame indices; the volume proxy is area^(3/2), so the drawn target EF is
exact by construction. Intensity levels sit exactly on the uint8 grid so
quantization does not disturb pixel-counted areas.

Rendering contract (tests and downstream tooling rely on it):
* the central square box spanning 60% of the frame contains only myocardium
  (level 217/255) or cavity (level 13/255) pixels, edge pixels lie linearly
  in-between, and the whole cavity stays inside that box;
* cavity area extrema within the labeled cycle occur exactly at the labeled
  frame indices.

On-disk dataset layout (directory):
* manifest.txt   line 1: "echoformer-dataset v1"; line 2: "size H W"; then
                 one record per line: id num_frames fps label_a kind_a
                 label_b kind_b ef_percent offset length
* frames.bin     8-byte head (magic "EFVID\\0" + uint16 LE version 1)
                 followed by raw uint8 row-major frames; offset/length in
                 the manifest are absolute byte ranges into this file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError
from .sampling import KIND_ED, KIND_ES, VideoRecord

LEVEL_TISSUE = 217
LEVEL_CAVITY = 13
LEVEL_BACKGROUND = 64

ORACLE_BOX_FRACTION = 0.6

_MAGIC = b"EFVID\x00"
_BLOB_VERSION = 1
_MANIFEST_HEAD = "echoformer-dataset v1"


@dataclass
class PhantomConfig:
    frame_size: int = 112                       # pre-padding, square
    num_frames_range: tuple[int, int] = (90, 250)
    fps_range: tuple[float, float] = (25.0, 50.0)
    cycle_range: tuple[int, int] = (24, 45)     # frames per heart cycle
    ef_range: tuple[float, float] = (20.0, 80.0)
    noise_level: float = 0.08                   # multiplicative speckle sigma
    seed: int = 0

    def __post_init__(self):
        if self.cycle_range[0] < 8:
            raise ConfigurationError("cycle_range minimum is 8 frames")
        if not (10.0 < self.ef_range[0] and self.ef_range[1] < 90.0):
            raise ConfigurationError("ef_range must lie inside (10, 90)")
        if self.num_frames_range[0] < 2 * self.cycle_range[1]:
            raise ConfigurationError(
                "num_frames_range minimum must cover two maximal cycles "
                f"({self.num_frames_range[0]} < {2 * self.cycle_range[1]})"
            )


def cycle_profile(u: np.ndarray, cycle: int, systole: int) -> np.ndarray:
    """Relative cavity fullness in [0, 1]; 1 at u=0 (ED), 0 at u=systole (ES)."""
    u = np.asarray(u, dtype=np.float64)
    contracting = u <= systole
    down = 0.5 * (1.0 + np.cos(np.pi * u / systole))
    up = 0.5 * (1.0 - np.cos(np.pi * (u - systole) / (cycle - systole)))
    return np.where(contracting, down, up)


def _ellipse_coverage(xx, yy, cx, cy, ax, ay, rot) -> np.ndarray:
    """Antialiased coverage of a rotated ellipse, one linear pixel of edge."""
    dx = xx - cx
    dy = yy - cy
    c, s = np.cos(rot), np.sin(rot)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    f = np.sqrt((u / ax) ** 2 + (v / ay) ** 2)
    grad = np.sqrt((u / ax ** 2) ** 2 + (v / ay ** 2) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(grad > 0, (f - 1.0) * f / grad, -1.0)
    return np.clip(0.5 - dist, 0.0, 1.0)


def _sector_coverage(xx, yy, size: int) -> np.ndarray:
    apex_x, apex_y = size / 2.0, -0.05 * size
    dx = xx - apex_x
    dy = yy - apex_y
    radius = np.sqrt(dx * dx + dy * dy)
    angle = np.abs(np.arctan2(dx, dy))            # 0 points straight down
    in_r = np.clip(1.25 * size - radius + 0.5, 0.0, 1.0)
    in_a = np.clip((0.72 - angle) * radius + 0.5, 0.0, 1.0)
    return in_r * in_a


@dataclass
class _Geometry:
    center: tuple[float, float]
    cavity_ax: float            # ED semi-axes, pixels
    cavity_ay: float
    rotation: float
    ring_ax: float
    ring_ay: float


def _draw_geometry(size: int, rng: np.random.Generator) -> _Geometry:
    jitter = 0.02 * size
    return _Geometry(
        center=(size / 2.0 + rng.uniform(-jitter, jitter),
                size / 2.0 + rng.uniform(-jitter, jitter)),
        cavity_ax=rng.uniform(0.14, 0.18) * size,
        cavity_ay=rng.uniform(0.20, 0.25) * size,
        rotation=rng.uniform(-0.25, 0.25),
        ring_ax=0.50 * size,
        ring_ay=0.52 * size,
    )


def generate_video(config: PhantomConfig, rng: np.random.Generator,
                   video_id: str = "phantom") -> VideoRecord:
    """Render one phantom video; ground truth is exact by construction."""
    size = config.frame_size
    cycle = int(rng.integers(config.cycle_range[0], config.cycle_range[1] + 1))
    systole = max(2, round(cycle / 3))
    num_frames = int(rng.integers(config.num_frames_range[0],
                                  config.num_frames_range[1] + 1))
    fps = float(rng.uniform(*config.fps_range))
    ef = float(rng.uniform(*config.ef_range))
    scale_es = (1.0 - ef / 100.0) ** (1.0 / 3.0)
    geo = _draw_geometry(size, rng)
    phase0 = int(rng.integers(0, cycle))

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    base = np.zeros((size, size))
    sector = _sector_coverage(xx, yy, size)
    base = base + (LEVEL_BACKGROUND / 255.0 - base) * sector
    ring = _ellipse_coverage(xx, yy, geo.center[0], geo.center[1],
                             geo.ring_ax, geo.ring_ay, geo.rotation)
    base = base + (LEVEL_TISSUE / 255.0 - base) * ring

    t = np.arange(num_frames)
    fullness = cycle_profile(np.mod(t - phase0, cycle), cycle, systole)
    scales = scale_es + (1.0 - scale_es) * fullness

    frames = np.empty((num_frames, size, size), dtype=np.uint8)
    for i in range(num_frames):
        cav = _ellipse_coverage(xx, yy, geo.center[0], geo.center[1],
                                geo.cavity_ax * scales[i], geo.cavity_ay * scales[i],
                                geo.rotation)
        img = base + (LEVEL_CAVITY / 255.0 - base) * cav
        if config.noise_level > 0:
            img = img * (1.0 + config.noise_level * rng.standard_normal(img.shape))
        frames[i] = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)

    # candidate labeled pairs are consecutive extrema whose own neighbors are
    # also inside the video: index extraction needs a crossing on both sides
    # of an extremum, so a label right at the video edge could never be
    # matched by any prediction
    extrema = []
    t_ed = phase0 - cycle
    while t_ed < num_frames:
        extrema.append((t_ed, KIND_ED))
        extrema.append((t_ed + systole, KIND_ES))
        t_ed += cycle
    inside = lambda t: 1 <= t <= num_frames - 2
    pairs = [
        (extrema[k][0], extrema[k][1], extrema[k + 1][0], extrema[k + 1][1])
        for k in range(1, len(extrema) - 2)
        if inside(extrema[k - 1][0]) and inside(extrema[k + 2][0])
    ]
    label_a, kind_a, label_b, kind_b = pairs[int(rng.integers(0, len(pairs)))]

    return VideoRecord(
        frames=frames, fps=fps,
        label_a=label_a, kind_a=kind_a, label_b=label_b, kind_b=kind_b,
        ef_percent=ef, video_id=video_id,
    )


def generate_dataset(config: PhantomConfig, count: int) -> list[VideoRecord]:
    """count videos with independent per-video rng streams (seed-reproducible)."""
    seeds = np.random.SeedSequence(config.seed).spawn(count)
    return [
        generate_video(config, np.random.default_rng(seeds[i]), f"phantom_{i:04d}")
        for i in range(count)
    ]


def oracle_box(size: int) -> tuple[int, int]:
    """Pixel bounds [lo, hi) of the central box the area oracle may count in."""
    half = ORACLE_BOX_FRACTION * size / 2.0
    lo = int(np.floor(size / 2.0 - half))
    hi = int(np.ceil(size / 2.0 + half))
    return lo, hi


def cavity_area(frame: np.ndarray) -> float:
    """Pixel-counted cavity area of a rendered frame (zero-noise contract)."""
    lo, hi = oracle_box(frame.shape[0])
    patch = frame[lo:hi, lo:hi].astype(np.float64) / 255.0
    cov = (LEVEL_TISSUE / 255.0 - patch) / ((LEVEL_TISSUE - LEVEL_CAVITY) / 255.0)
    return float(np.clip(cov, 0.0, 1.0).sum())


# -- dataset persistence ---------------------------------------------------------


def write_dataset(videos: list[VideoRecord], path: str) -> None:
    """Write manifest.txt + frames.bin into directory `path` (created if needed)."""
    os.makedirs(path, exist_ok=True)
    if not videos:
        raise ConfigurationError("write_dataset: no videos")
    h, w = videos[0].frames.shape[1:]
    lines = [_MANIFEST_HEAD, f"size {h} {w}"]
    offset = len(_MAGIC) + 2
    with open(os.path.join(path, "frames.bin"), "wb") as blob:
        blob.write(_MAGIC)
        blob.write(_BLOB_VERSION.to_bytes(2, "little"))
        for v in videos:
            if v.frames.shape[1:] != (h, w):
                raise ConfigurationError(
                    f"video {v.video_id}: frame size {v.frames.shape[1:]} != ({h}, {w})"
                )
            raw = np.ascontiguousarray(v.frames, dtype=np.uint8).tobytes()
            blob.write(raw)
            lines.append(
                f"{v.video_id} {v.num_frames} {v.fps!r} {v.label_a} {v.kind_a} "
                f"{v.label_b} {v.kind_b} {v.ef_percent!r} {offset} {len(raw)}"
            )
            offset += len(raw)
    with open(os.path.join(path, "manifest.txt"), "w") as mf:
        mf.write("\n".join(lines) + "\n")


def read_dataset(path: str) -> list[VideoRecord]:
    """Inverse of write_dataset; raises FormatError on any corruption."""
    manifest_path = os.path.join(path, "manifest.txt")
    blob_path = os.path.join(path, "frames.bin")
    with open(manifest_path) as mf:
        lines = [ln.rstrip("\n") for ln in mf]
    if not lines or lines[0] != _MANIFEST_HEAD:
        raise FormatError(f"{manifest_path}: bad manifest magic at line 1")
    try:
        _, h_s, w_s = lines[1].split()
        h, w = int(h_s), int(w_s)
    except (IndexError, ValueError):
        raise FormatError(f"{manifest_path}: bad size header at line 2") from None

    with open(blob_path, "rb") as bf:
        blob = bf.read()
    if blob[:len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{blob_path}: bad magic at offset 0")
    version = int.from_bytes(blob[len(_MAGIC):len(_MAGIC) + 2], "little")
    if version != _BLOB_VERSION:
        raise FormatError(f"{blob_path}: unsupported version {version} at offset 6")

    videos = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 10:
            raise FormatError(f"{manifest_path}: malformed record at line {lineno}")
        (vid, n_s, fps_s, la_s, ka, lb_s, kb, ef_s, off_s, len_s) = parts
        n, off, length = int(n_s), int(off_s), int(len_s)
        if length != n * h * w:
            raise FormatError(
                f"{manifest_path}: video {vid} length {length} != {n}x{h}x{w}"
            )
        if off + length > len(blob):
            raise FormatError(f"{blob_path}: truncated frame blob for video {vid}")
        frames = np.frombuffer(blob[off:off + length], dtype=np.uint8).reshape(n, h, w)
        videos.append(VideoRecord(
            frames=frames.copy(), fps=float(fps_s),
            label_a=int(la_s), kind_a=ka, label_b=int(lb_s), kind_b=kb,
            ef_percent=float(ef_s), video_id=vid,
        ))
    return videos


def import_image_dataset(src_dir: str, out_dir: str) -> list[VideoRecord]:
    """Converter stub: build a dataset from per-frame raster images.

    Expects src_dir/videos.csv with header
    id,fps,label_a,kind_a,label_b,kind_b,ef_percent and, per video, a
    directory src_dir/<id>/ of same-size raster frames in sorted filename
    order. Writes a standard dataset to out_dir and returns the records.
    """
    import csv as _csv

    from PIL import Image

    videos = []
    with open(os.path.join(src_dir, "videos.csv")) as fh:
        for row in _csv.DictReader(fh):
            frame_dir = os.path.join(src_dir, row["id"])
            names = sorted(os.listdir(frame_dir))
            if not names:
                raise FormatError(f"{frame_dir}: no frames")
            frames = np.stack([
                np.asarray(Image.open(os.path.join(frame_dir, name)).convert("L"))
                for name in names
            ])
            videos.append(VideoRecord(
                frames=frames, fps=float(row["fps"]),
                label_a=int(row["label_a"]), kind_a=row["kind_a"],
                label_b=int(row["label_b"]), kind_b=row["kind_b"],
                ef_percent=float(row["ef_percent"]), video_id=row["id"],
            ))
    write_dataset(videos, out_dir)
    return videos
