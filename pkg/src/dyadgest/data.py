"""Dataset layout, ingestion and the on-disk window cache.

Expected layout under the data root::

    split.tsv                      # dialog_id<TAB>train|val|test (optional: all train)
    <dialog_id>/main-agent.wav     # required
    <dialog_id>/main-agent.tsv     # required
    <dialog_id>/main-agent.bvh     # required for train/val
    <dialog_id>/interloctr.wav     # required
    <dialog_id>/interloctr.tsv     # required
    <dialog_id>/interloctr.bvh     # optional

With ``import_features`` set, ``<speaker>.gdaf`` (per-frame audio features)
and ``semantics.gdaf`` (per-window clip features in the condition layout)
are used instead of the built-in extractors when present.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import audio as audio_mod
from .bvh import BVHError, MotionClip, SkeletonDef, frame_rate, parse_bvh, serialize_bvh
from .config import RunConfig
from .dialogue import (ImportedSemantics, SemanticProviders, TranscriptError, TranscriptToken,
                       assemble_condition, clip_dim, parse_transcript, window_text)
from .motion import NormStats, TrainingWindow, fit_norm_stats, make_windows, motion_features, normalize, \
    resample, window_starts

SPEAKERS = ("main-agent", "interloctr")


class IngestError(RuntimeError):
    pass


@dataclass
class DialogEntry:
    dialog_id: str
    split: str
    main: dict[str, Optional[str]]
    inter: dict[str, Optional[str]]


@dataclass
class DatasetIndex:
    root: str
    entries: list[DialogEntry] = field(default_factory=list)

    def by_split(self, *splits) -> list[DialogEntry]:
        return [e for e in self.entries if e.split in splits]

    def get(self, dialog_id: str) -> DialogEntry:
        for e in self.entries:
            if e.dialog_id == dialog_id:
                return e
        raise IngestError(f"unknown dialog {dialog_id!r}")


def _speaker_files(ddir: str, speaker: str) -> dict[str, Optional[str]]:
    out = {}
    for ext in ("bvh", "wav", "tsv", "gdaf"):
        p = os.path.join(ddir, f"{speaker}.{ext}")
        out[ext] = p if os.path.exists(p) else None
    return out


def read_split_file(root: str) -> dict[str, str]:
    path = os.path.join(root, "split.tsv")
    if not os.path.exists(path):
        return {}
    splits = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("train", "val", "test"):
                raise IngestError(f"{path}:{n}: expected 'dialog_id<TAB>train|val|test'")
            splits[parts[0]] = parts[1]
    return splits


def build_index(root: str) -> DatasetIndex:
    if not os.path.isdir(root):
        raise IngestError(f"data root {root} is not a directory")
    splits = read_split_file(root)
    names = sorted(set(splits) | {d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))})
    index = DatasetIndex(root)
    for name in names:
        ddir = os.path.join(root, name)
        if name not in splits and not os.path.exists(os.path.join(ddir, "main-agent.wav")):
            continue  # unrelated directory
        split = splits.get(name, "train")
        main, inter = _speaker_files(ddir, "main-agent"), _speaker_files(ddir, "interloctr")
        required = [("main-agent", "wav", main), ("main-agent", "tsv", main),
                    ("interloctr", "wav", inter), ("interloctr", "tsv", inter)]
        if split in ("train", "val"):
            required.append(("main-agent", "bvh", main))
        for spk, ext, files in required:
            if files[ext] is None:
                raise IngestError(f"dialog {name}: missing {spk}.{ext}")
        index.entries.append(DialogEntry(name, split, main, inter))
    return index


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from None


def load_bvh(path: str) -> tuple[SkeletonDef, MotionClip]:
    try:
        return parse_bvh(_read_text(path))
    except BVHError as e:
        raise IngestError(f"{path}: {e}") from None


def load_tokens(path: str) -> list[TranscriptToken]:
    try:
        return parse_transcript(_read_text(path))
    except TranscriptError as e:
        raise IngestError(f"{path}: {e}") from None


def load_audio_features(files: dict, n_frames: Optional[int], cfg: RunConfig) -> np.ndarray:
    """Per-frame audio features aligned to n_frames (derived from the audio length when None)."""
    if cfg.import_features and files.get("gdaf"):
        feats = audio_mod.read_feature_cache(files["gdaf"])
        if feats.shape[1] != cfg.audio_dim:
            raise IngestError(f"{files['gdaf']}: expected {cfg.audio_dim} columns, got {feats.shape[1]}")
    else:
        try:
            with open(files["wav"], "rb") as f:
                track = audio_mod.decode_wav(f.read())
        except (OSError, audio_mod.WavError) as e:
            raise IngestError(f"{files['wav']}: {e}") from None
        feats = audio_mod.log_mel_frames(track, fps=cfg.fps, n_fft=cfg.n_fft, n_mels=cfg.audio_dim).frames
    if n_frames is None:
        n_frames = feats.shape[0]
    return audio_mod.align_to_motion(feats, n_frames)


def clip_condition_for_span(tokens_main, tokens_inter, start_s: float, end_s: float, cfg: RunConfig,
                            providers: SemanticProviders = SemanticProviders()) -> np.ndarray:
    text_main = window_text(tokens_main, start_s, end_s)
    text_inter = window_text(tokens_inter, start_s, end_s)
    intent, em, ei, cm, ci = providers.clip_features(text_main, text_inter, cfg.context_dim)
    empty = np.zeros((1, 1))
    return assemble_condition(empty, empty, intent, em, ei, cm, ci).clip_part


@dataclass
class DialogFeatures:
    dialog_id: str
    motion: Optional[np.ndarray]  # raw channel values at cfg.fps
    audio_main: np.ndarray
    audio_inter: np.ndarray
    tokens_main: list
    tokens_inter: list
    skeleton: Optional[SkeletonDef] = None

    @property
    def n_frames(self) -> int:
        return self.audio_main.shape[0]


def extract_dialog(entry: DialogEntry, cfg: RunConfig, with_motion: bool = True) -> DialogFeatures:
    motion = skel = None
    if with_motion and entry.main.get("bvh"):
        skel, clip = load_bvh(entry.main["bvh"])
        motion = resample(motion_features(clip), frame_rate(clip), cfg.fps) \
            if abs(frame_rate(clip) - cfg.fps) > 1e-3 else motion_features(clip)
    n = motion.shape[0] if motion is not None else None
    a_main = load_audio_features(entry.main, n, cfg)
    a_inter = load_audio_features(entry.inter, a_main.shape[0], cfg)
    return DialogFeatures(entry.dialog_id, motion, a_main, a_inter,
                          load_tokens(entry.main["tsv"]), load_tokens(entry.inter["tsv"]), skel)


def window_clip_conditions(df: DialogFeatures, starts, cfg: RunConfig, entry: Optional[DialogEntry] = None,
                           providers: SemanticProviders = SemanticProviders()) -> np.ndarray:
    imported = None
    if cfg.import_features and entry is not None:
        path = os.path.join(os.path.dirname(entry.main["wav"]), "semantics.gdaf")
        if os.path.exists(path):
            imported = ImportedSemantics.from_file(path, cfg.context_dim)
            if len(imported) < len(starts):
                raise IngestError(f"{path}: {len(imported)} rows for {len(starts)} windows")
    rows = []
    for k, s in enumerate(starts):
        if imported is not None:
            empty = np.zeros((1, 1))
            rows.append(assemble_condition(empty, empty, *imported.window(k)).clip_part)
        else:
            rows.append(clip_condition_for_span(df.tokens_main, df.tokens_inter, s / cfg.fps,
                                                (s + cfg.window_len) / cfg.fps, cfg, providers))
    return np.array(rows).reshape(len(rows), clip_dim(cfg.context_dim))


def ingest(cfg: RunConfig, providers: SemanticProviders = SemanticProviders()) -> DatasetIndex:
    """Build the index, fit train-split statistics and write the window cache."""
    index = build_index(cfg.data_root)
    if not index.by_split("train"):
        raise IngestError("no training dialogs found")
    os.makedirs(cfg.cache_dir, exist_ok=True)
    feats = {e.dialog_id: extract_dialog(e, cfg) for e in index.entries}

    skeleton = None
    for e in index.by_split("train", "val"):
        s = feats[e.dialog_id].skeleton
        if skeleton is None:
            skeleton = s
        elif s.channel_names() != skeleton.channel_names():
            raise IngestError(f"dialog {e.dialog_id}: skeleton channels differ from the first training dialog")

    train = [feats[e.dialog_id] for e in index.by_split("train")]
    motion_stats = fit_norm_stats([f.motion for f in train])
    audio_stats = fit_norm_stats([f.audio_main for f in train] + [f.audio_inter for f in train])

    rows = []
    for e in index.entries:
        df = feats[e.dialog_id]
        frame = np.concatenate([normalize(df.audio_main, audio_stats), normalize(df.audio_inter, audio_stats)], 1)
        starts = window_starts(df.n_frames, cfg.window_len, cfg.stride) if df.motion is not None else []
        prefix = os.path.join(cfg.cache_dir, e.dialog_id)
        audio_mod.write_feature_cache(prefix + ".frame.gdaf", frame)
        if df.motion is not None:
            audio_mod.write_feature_cache(prefix + ".motion.gdaf", normalize(df.motion, motion_stats))
            audio_mod.write_feature_cache(prefix + ".clip.gdaf",
                                          window_clip_conditions(df, starts, cfg, e, providers))
        rows.append(f"{e.dialog_id}\t{e.split}\t{df.n_frames}\t{len(starts)}\t{int(df.motion is not None)}\n")

    with open(os.path.join(cfg.cache_dir, "index.tsv"), "w", newline="\n") as f:
        f.write("dialog_id\tsplit\tn_frames\tn_windows\thas_motion\n")
        f.writelines(rows)
    meta = {
        "motion_mean": motion_stats.mean.tolist(), "motion_std": motion_stats.std.tolist(),
        "audio_mean": audio_stats.mean.tolist(), "audio_std": audio_stats.std.tolist(),
        "fps": cfg.fps, "window_len": cfg.window_len, "seed_len": cfg.seed_len, "stride": cfg.stride,
        "audio_dim": cfg.audio_dim, "context_dim": cfg.context_dim, "n_fft": cfg.n_fft,
        "data_root": os.path.abspath(cfg.data_root),
    }
    with open(os.path.join(cfg.cache_dir, "stats.json"), "w", newline="\n") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
    with open(os.path.join(cfg.cache_dir, "skeleton.bvh"), "w", newline="\n") as f:
        f.write(serialize_bvh(skeleton, MotionClip(np.zeros((1, skeleton.total_channels)), 1.0 / cfg.fps)))
    return index


@dataclass
class IngestedData:
    windows: list[TrainingWindow]
    motion_stats: NormStats
    audio_stats: NormStats
    skeleton: SkeletonDef
    meta: dict
    dialog_splits: dict[str, str] = field(default_factory=dict)

    def split_of(self, window: TrainingWindow) -> str:
        return self.dialog_splits[window.source_id.rsplit("@", 1)[0]]


def load_ingested(cfg: RunConfig, splits=("train", "val")) -> IngestedData:
    """Rebuild training windows from the cache written by `ingest`."""
    cache = cfg.cache_dir
    try:
        with open(os.path.join(cache, "stats.json")) as f:
            meta = json.load(f)
        skeleton, _ = parse_bvh(_read_text(os.path.join(cache, "skeleton.bvh")))
        with open(os.path.join(cache, "index.tsv")) as f:
            lines = f.read().splitlines()[1:]
    except (OSError, ValueError) as e:
        raise IngestError(f"cache at {cache} is missing or unreadable ({e}); run ingest first") from None
    for key in ("fps", "window_len", "seed_len", "stride", "audio_dim", "context_dim"):
        if meta[key] != getattr(cfg, key):
            raise IngestError(f"cache was built with {key}={meta[key]}, config has {getattr(cfg, key)}")
    windows = []
    dialog_splits = {}
    for ln in lines:
        did, split, _, n_windows, has_motion = ln.split("\t")
        dialog_splits[did] = split
        if split not in splits or not int(has_motion) or not int(n_windows):
            continue
        prefix = os.path.join(cache, did)
        motion = audio_mod.read_feature_cache(prefix + ".motion.gdaf")
        frame = audio_mod.read_feature_cache(prefix + ".frame.gdaf")
        clip = audio_mod.read_feature_cache(prefix + ".clip.gdaf")
        windows.extend(make_windows(motion, frame, clip, cfg.window_len, cfg.seed_len, cfg.stride, did))
    return IngestedData(windows, NormStats(meta["motion_mean"], meta["motion_std"]),
                        NormStats(meta["audio_mean"], meta["audio_std"]), skeleton, meta, dialog_splits)
