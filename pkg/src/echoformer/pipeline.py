"""End-to-end training, evaluation, and checkpointing.

Training minimizes EF loss + SD loss with Adam on clips drawn by one of the
two sampling protocols. Videos are subsampled once to the preset's sequence
capacity before any sampling, so training clips and evaluation sequences
live in the same temporal domain. Everything is deterministic given the
seed (single-process reference mode); float32 parameters are available for
faster desk-scale training.

Checkpoint file layout (little-endian):
    bytes 0-3   magic "EFCK"
    bytes 4-7   uint32 format version (1)
    bytes 8-11  uint32 JSON header length
    header      UTF-8 JSON: preset, sd_mode, dtype, epoch, adam step,
                rng state, parameter names/shapes, optimizer flag
    payload     raw parameter arrays in header order, then Adam first- and
                second-moment arrays in the same order (when present)
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .encoder import pad_frame
from .errors import ClipRejectedError, ConfigurationError, FormatError
from .losses import ef_loss, sd_classification_loss, sd_regression_loss, total_loss
from .metrics import (
    MetricsReport,
    VideoResult,
    extract_indices,
    heart_rate,
    nearest_match,
    summarize,
)
from .model import ModelParams, Preset, forward_clip, get_preset, init_model
from .numerics import Tensor, no_grad, reduce_mean, stack_scalars
from .sampling import (
    SampledClip,
    VideoRecord,
    guided_random_sample,
    make_sd_labels,
    mirror_sample,
    subsample,
)

_MAGIC = b"EFCK"
_VERSION = 1

_DTYPES = {"float64": "<f8", "float32": "<f4"}


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-4
    method: str = "mirror"             # "random" or "mirror"
    sd_mode: str = "regression"        # "regression" or "classification"
    seed: int = 0
    dtype: str = "float64"             # float32 trains faster, float64 is reference
    dropout: float | None = None       # override the preset's drop probability
    lr_schedule: str = "constant"      # "constant" or "cosine" (decay to 0)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr < 0:
            raise ConfigurationError("epochs/batch_size must be >= 1 and lr >= 0")
        if self.method not in ("random", "mirror"):
            raise ConfigurationError(f"unknown sampling method {self.method!r}")
        if self.sd_mode not in ("regression", "classification"):
            raise ConfigurationError(f"unknown sd_mode {self.sd_mode!r}")
        if self.dtype not in _DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(_DTYPES)}")
        if self.dropout is not None and not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout {self.dropout} outside [0, 1)")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"unknown lr_schedule {self.lr_schedule!r}")


class Adam:
    """Adaptive per-parameter first/second-moment optimizer."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


@dataclass
class Checkpoint:
    preset: Preset
    sd_mode: str
    model: ModelParams
    epoch: int
    rng_state: dict
    adam_m: list[np.ndarray] | None = None
    adam_v: list[np.ndarray] | None = None
    adam_step: int = 0
    version: int = _VERSION


def split_dataset(videos: list[VideoRecord], rng: np.random.Generator
                  ) -> tuple[list[int], list[int], list[int]]:
    """75/12.5/12.5 train/val/test split by shuffled indices."""
    order = rng.permutation(len(videos)).tolist()
    n_train = round(0.75 * len(videos))
    n_val = round(0.125 * len(videos))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def prepare_frames(frames_u8: np.ndarray, input_size: int, dtype) -> np.ndarray:
    """uint8 frames -> padded, normalized float frames for the encoder."""
    n, h, w = frames_u8.shape
    if h == input_size and w == input_size:
        padded = frames_u8
    else:
        padded = np.stack([pad_frame(f, input_size) for f in frames_u8])
    return padded.astype(dtype) / dtype(255.0)


def _sample_clip(video: VideoRecord, method: str, rng: np.random.Generator,
                 clip_len: int) -> SampledClip:
    if method == "random":
        return guided_random_sample(video, rng, clip_len)
    return mirror_sample(video, rng, clip_len)


def _clip_losses(model: ModelParams, clips: list[SampledClip], cfg: TrainConfig,
                 preset: Preset, training: bool, rng: np.random.Generator | None
                 ) -> tuple[Tensor, float]:
    """Batch loss tensor plus the batch EF MAE (percent scale) for monitoring."""
    dtype = np.dtype(_DTYPES[cfg.dtype]).type
    ef_outs, sd_terms = [], []
    targets = np.array([c.ef_target for c in clips])
    for clip in clips:
        frames = prepare_frames(clip.frames, preset.encoder.input_size, dtype)
        out = forward_clip(model, frames, clip.mask, training, rng)
        ef_outs.append(out.ef)
        if cfg.sd_mode == "classification":
            sd_terms.append(sd_classification_loss(
                out.sd, clip.sd_labels, preset.loss.ce_weights, clip.mask))
        else:
            sd_terms.append(sd_regression_loss(out.sd, clip.sd_labels, clip.mask))
    ef_pred = stack_scalars(ef_outs)
    loss = total_loss(ef_loss(ef_pred, targets, preset.loss),
                      reduce_mean(stack_scalars(sd_terms)))
    ef_mae = float(np.abs(ef_pred.data - targets).mean() * 100.0)
    return loss, ef_mae


def _snapshot(model: ModelParams, opt: Adam) -> tuple[list[np.ndarray], list[np.ndarray],
                                                      list[np.ndarray], int]:
    return ([p.data.copy() for p in model.parameters()],
            [m.copy() for m in opt.m], [v.copy() for v in opt.v], opt.step_count)


def _restore(model: ModelParams, opt: Adam, snap) -> None:
    datas, ms, vs, step = snap
    for p, d in zip(model.parameters(), datas):
        p.data = d.copy()
    opt.m = [m.copy() for m in ms]
    opt.v = [v.copy() for v in vs]
    opt.step_count = step


def train(train_cfg: TrainConfig, dataset: list[VideoRecord], preset: Preset
          ) -> tuple[Checkpoint, dict]:
    """Train on the 75% split; history carries per-epoch losses and metrics."""
    if not dataset:
        raise ConfigurationError("train: empty dataset")
    if train_cfg.dropout is not None:
        from dataclasses import replace

        preset = Preset(name=preset.name, loss=preset.loss,
                        stack=replace(preset.stack, dropout_p=train_cfg.dropout),
                        encoder=replace(preset.encoder, dropout_p=train_cfg.dropout))
    seeds = np.random.SeedSequence(train_cfg.seed).spawn(5)
    split_rng, init_rng, sample_rng, dropout_rng, val_rng = (
        np.random.default_rng(s) for s in seeds)

    clip_len = preset.clip_len
    videos = [subsample(v, limit=clip_len) for v in dataset]
    train_idx, val_idx, test_idx = split_dataset(videos, split_rng)

    usable = [i for i in train_idx
              if videos[i].gap >= 1 and videos[i].gap + 1 <= clip_len]
    if not usable:
        raise ConfigurationError("train: no video fits the clip length")

    dtype = np.dtype(_DTYPES[train_cfg.dtype]).type
    model = init_model(preset, train_cfg.sd_mode, init_rng, dtype=dtype)
    opt = Adam(model.parameters(), lr=train_cfg.lr)

    # fixed validation clips so per-epoch val losses are comparable
    val_clips = []
    for i in val_idx:
        if videos[i].gap >= 1 and videos[i].gap + 1 <= clip_len:
            clip = _sample_clip(videos[i], train_cfg.method, val_rng, clip_len)
            clip.sd_labels = make_sd_labels(clip, train_cfg.sd_mode,
                                            "mirror" if train_cfg.method == "mirror" else "random")
            val_clips.append(clip)

    history = {
        "epochs": [],
        "split": {
            "train": [videos[i].video_id for i in train_idx],
            "val": [videos[i].video_id for i in val_idx],
            "test": [videos[i].video_id for i in test_idx],
        },
        "aborted": False,
    }
    snap = _snapshot(model, opt)
    label_method = "mirror" if train_cfg.method == "mirror" else "random"

    for epoch in range(train_cfg.epochs):
        if train_cfg.lr_schedule == "cosine":
            opt.lr = train_cfg.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / train_cfg.epochs))
        order = sample_rng.permutation(len(usable))
        epoch_losses = []
        t0 = time.perf_counter()
        for b0 in range(0, len(usable), train_cfg.batch_size):
            batch_ids = [usable[j] for j in order[b0:b0 + train_cfg.batch_size]]
            clips = []
            for i in batch_ids:
                try:
                    clip = _sample_clip(videos[i], train_cfg.method, sample_rng, clip_len)
                except ClipRejectedError:
                    continue
                clip.sd_labels = make_sd_labels(clip, train_cfg.sd_mode, label_method)
                clips.append(clip)
            if not clips:
                continue
            loss, _ = _clip_losses(model, clips, train_cfg, preset,
                                   training=True, rng=dropout_rng)
            if not np.isfinite(loss.data).all():
                _restore(model, opt, snap)
                history["aborted"] = True
                history["abort_epoch"] = epoch
                ckpt = Checkpoint(preset=preset, sd_mode=train_cfg.sd_mode,
                                  model=model, epoch=epoch,
                                  rng_state=sample_rng.bit_generator.state,
                                  adam_m=opt.m, adam_v=opt.v,
                                  adam_step=opt.step_count)
                return ckpt, history
            if train_cfg.lr > 0:
                model.zero_grad()
                loss.backward()
                opt.step()
            epoch_losses.append(loss.item())

        entry = {"epoch": epoch,
                 "train_loss": float(np.mean(epoch_losses)) if epoch_losses else None,
                 "seconds": time.perf_counter() - t0}
        if val_clips:
            with no_grad():
                val_loss, val_mae = _clip_losses(model, val_clips, train_cfg, preset,
                                                 training=False, rng=None)
            entry["val_loss"] = val_loss.item()
            entry["val_ef_mae"] = val_mae
        history["epochs"].append(entry)
        snap = _snapshot(model, opt)

    ckpt = Checkpoint(preset=preset, sd_mode=train_cfg.sd_mode, model=model,
                      epoch=train_cfg.epochs,
                      rng_state=sample_rng.bit_generator.state,
                      adam_m=opt.m, adam_v=opt.v, adam_step=opt.step_count)
    return ckpt, history


# -- inference ------------------------------------------------------------------


def _merge_indices(indices: list[int], gap: int = 2) -> list[int]:
    """Cluster indices at most `gap` apart (overlapping windows) to centers."""
    if not indices:
        return []
    indices = sorted(indices)
    merged, group = [], [indices[0]]
    for idx in indices[1:]:
        if idx - group[-1] <= gap:
            group.append(idx)
        else:
            merged.append(int(round(np.mean(group))))
            group = [idx]
    merged.append(int(round(np.mean(group))))
    return merged


def predict_video(model: ModelParams, video: VideoRecord) -> dict:
    """Run the full pipeline on one video.

    Returns predicted per-kind index lists in original frame coordinates,
    the EF prediction (percent), the per-frame SD trace over the processed
    (possibly subsampled) video, and the subsample factor.
    """
    preset = model.preset
    max_seq = preset.stack.max_seq
    sub = subsample(video, limit=max_seq)
    factor = 2 if sub.num_frames != video.num_frames else 1
    n = sub.num_frames
    dtype = model.stack.pos_emb.dtype.type

    if n <= max_seq:
        starts = [0]
        width = n
    else:
        # sliding-window fallback, stride max_seq/2, last window end-aligned
        stride = max(1, max_seq // 2)
        starts = list(range(0, n - max_seq + 1, stride))
        if starts[-1] + max_seq < n:
            starts.append(n - max_seq)
        width = max_seq

    sd_shape = (3, n) if model.sd_mode == "classification" else (n,)
    sd_sum = np.zeros(sd_shape)
    sd_hits = np.zeros(n)
    es_all, ed_all, efs = [], [], []
    for w0 in starts:
        frames = prepare_frames(sub.frames[w0:w0 + width],
                                preset.encoder.input_size, dtype)
        mask = np.ones(width, dtype=bool)
        with no_grad():
            out = forward_clip(model, frames, mask)
        found = extract_indices(out.sd.data, mask, mode=model.sd_mode)
        es_all += [w0 + i for i in found.es_indices]
        ed_all += [w0 + i for i in found.ed_indices]
        efs.append(out.ef.item())
        sd_sum[..., w0:w0 + width] += out.sd.data
        sd_hits[w0:w0 + width] += 1.0

    es = _merge_indices(es_all)
    ed = _merge_indices(ed_all)
    sd_trace = sd_sum / sd_hits          # windows average where they overlap
    return {
        "es_indices": [i * factor for i in es],
        "ed_indices": [i * factor for i in ed],
        "rejected": len(es) == 0 or len(ed) == 0,
        "ef_percent": float(np.mean(efs)) * 100.0,
        "sd_trace": sd_trace,
        "factor": factor,
        "processed_frames": n,
    }


def evaluate(ckpt: Checkpoint, videos: list[VideoRecord]) -> MetricsReport:
    """Full-pipeline metrics over a dataset split; one row per video."""
    rows = []
    for video in videos:
        pred = predict_video(ckpt.model, video)
        gt_es, gt_ed = video.es_index(), video.ed_index()
        if pred["rejected"]:
            row = VideoResult(video_id=video.video_id, pred_es=None, pred_ed=None,
                              gt_es=gt_es, gt_ed=gt_ed, afd_es=None, afd_ed=None,
                              ef_pred=pred["ef_percent"], ef_gt=video.ef_percent,
                              rejected=True)
        else:
            d_es, m_es = nearest_match(pred["es_indices"], gt_es)
            d_ed, m_ed = nearest_match(pred["ed_indices"], gt_ed)
            row = VideoResult(
                video_id=video.video_id, pred_es=m_es, pred_ed=m_ed,
                gt_es=gt_es, gt_ed=gt_ed, afd_es=d_es, afd_ed=d_ed,
                ef_pred=pred["ef_percent"], ef_gt=video.ef_percent,
                rejected=False,
                multi_beat=len(pred["es_indices"]) > 1 or len(pred["ed_indices"]) > 1,
                bpm=heart_rate(pred["ed_indices"], video.fps),
            )
        rows.append(row)
    return summarize(rows)


# -- checkpoint persistence -------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    named = ckpt.model.named_parameters()
    dtype_name = {np.dtype("<f8"): "float64", np.dtype("<f4"): "float32"}.get(
        np.dtype(named[0][1].dtype.str), "float64")
    code = _DTYPES[dtype_name]
    header = {
        "preset": ckpt.preset.name,
        "sd_mode": ckpt.sd_mode,
        "dtype": dtype_name,
        "epoch": ckpt.epoch,
        "adam_step": ckpt.adam_step,
        "rng_state": ckpt.rng_state,
        "params": [{"name": n, "shape": list(t.shape)} for n, t in named],
        "has_opt": ckpt.adam_m is not None,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype=code).tobytes())
        if ckpt.adam_m is not None:
            for arr in ckpt.adam_m + ckpt.adam_v:
                fh.write(np.ascontiguousarray(arr, dtype=code).tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic at offset 0")
    version = int.from_bytes(raw[4:8], "little")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    code = _DTYPES[header["dtype"]]
    itemsize = np.dtype(code).itemsize

    preset = get_preset(header["preset"])
    dtype = np.dtype(code).type
    model = init_model(preset, header["sd_mode"], np.random.default_rng(0), dtype=dtype)
    named = model.named_parameters()
    if [n for n, _ in named] != [p["name"] for p in header["params"]]:
        raise FormatError(f"{path}: parameter names do not match preset layout")

    off = 12 + hlen

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        end = off + count * itemsize
        if end > len(raw):
            raise FormatError(f"{path}: truncated payload at offset {off}")
        arr = np.frombuffer(raw[off:end], dtype=code).reshape(shape).copy()
        off = end
        return arr

    for (_, tensor), meta in zip(named, header["params"]):
        tensor.data = take(tuple(meta["shape"]))

    adam_m = adam_v = None
    if header["has_opt"]:
        adam_m = [take(t.shape) for _, t in named]
        adam_v = [take(t.shape) for _, t in named]
    return Checkpoint(
        preset=preset, sd_mode=header["sd_mode"], model=model,
        epoch=header["epoch"], rng_state=header["rng_state"],
        adam_m=adam_m, adam_v=adam_v, adam_step=header["adam_step"],
    )
