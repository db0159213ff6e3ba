"""Synthetic two-party dialogues with a planted emotion -> gesture-amplitude law.

Each dialogue has a 2 Hz beat with a random phase. Both speakers' audio is a
pair of amplitude-modulated tones whose envelopes track sin and cos of the
beat phase, so the phase can be read off any single audio frame. The main
agent's channels oscillate with the beat at an amplitude that is an affine
function of the planted positive-emotion intensity. Transcripts are built
one second at a time from ten words drawn from the shipped lexicons, so
every whole-second text window reproduces the planted intensity and intent.

Training dialogues switch the main agent's intensity every few seconds.
With a constant intensity the seed frames would already reveal the target
amplitude and the emotion condition would carry no extra information.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .audio import AudioTrack, encode_wav
from .bvh import JointDef, MotionClip, SkeletonDef, serialize_bvh
from .dialogue import N_INTENTS, intent_keywords, positive_words

SAMPLE_RATE = 16000
FPS = 30
BEAT_HZ = 2.0
WORDS_PER_SECOND = 10
NEUTRAL_WORDS = ("the", "and", "so", "we", "um", "well", "yeah", "just", "it", "was")
MAIN_TONES = (300.0, 1200.0)
INTER_TONES = (500.0, 2000.0)
CHANNEL_SEED = 20231015
LEVELS = tuple(k / WORDS_PER_SECOND for k in range(WORDS_PER_SECOND))  # 0.0 .. 0.9
SEGMENT_SECONDS = 4
RAMP_SECONDS = 0.2

ROT = ("Zrotation", "Xrotation", "Yrotation")


def toy_skeleton() -> SkeletonDef:
    J = JointDef
    return SkeletonDef((
        J("Hips", None, (0.0, 90.0, 0.0), ("Xposition", "Yposition", "Zposition") + ROT),
        J("Spine", 0, (0.0, 10.0, 0.0), ROT),
        J("Head", 1, (0.0, 40.0, 0.0), ROT),
        J("Head_End", 2, (0.0, 15.0, 0.0), (), True),
        J("LeftArm", 1, (15.0, 35.0, 0.0), ROT),
        J("LeftArm_End", 4, (25.0, 0.0, 0.0), (), True),
        J("RightArm", 1, (-15.0, 35.0, 0.0), ROT),
        J("RightArm_End", 6, (-25.0, 0.0, 0.0), (), True),
    ))


def amplitude_for(positive: float) -> float:
    """Oscillation amplitude (degrees) for a planted positive intensity."""
    return 5.0 + 20.0 * positive


def _channel_law(n_channels: int):
    rng = np.random.default_rng(CHANNEL_SEED)
    base = rng.uniform(-10.0, 10.0, n_channels)
    ang = rng.uniform(0.0, 2 * math.pi, n_channels)
    scale = np.ones(n_channels)
    scale[:3] = 0.2  # root translation moves less than rotations
    base[:3] = (0.0, 90.0, 0.0)
    return base, scale * np.cos(ang), scale * np.sin(ang)


def per_second(positive, seconds: int) -> np.ndarray:
    """Broadcast a scalar intensity, or check a per-second sequence, to `seconds` values."""
    p = np.asarray(positive, dtype=np.float64)
    if p.ndim == 0:
        return np.full(seconds, float(p))
    if p.shape != (seconds,):
        raise ValueError(f"need {seconds} per-second intensities, got {p.shape}")
    return p


def amplitude_envelope(positive, seconds: int, fps: int = FPS) -> np.ndarray:
    """Per-frame amplitude; a change of intensity ramps linearly over RAMP_SECONDS."""
    p = per_second(positive, seconds)
    n = int(round(seconds * fps))
    t = np.arange(n) / fps
    sec = np.minimum((t + 1e-9).astype(int), seconds - 1)
    prev = np.concatenate([[p[0]], p[:-1]])[sec]
    w = np.clip((t - sec) / RAMP_SECONDS, 0.0, 1.0)
    return amplitude_for((1.0 - w) * prev + w * p[sec])


def toy_motion(seconds: int, positive, phase: float, fps: int = FPS) -> np.ndarray:
    """Channel values; `positive` is a scalar or one intensity per second."""
    n = int(round(seconds * fps))
    t = np.arange(n) / fps
    beat = 2 * math.pi * BEAT_HZ * t + phase
    base, a, b = _channel_law(toy_skeleton().total_channels)
    amp = amplitude_envelope(positive, seconds, fps)[:, None]
    return base + amp * (np.sin(beat)[:, None] * a + np.cos(beat)[:, None] * b)


def toy_audio(seconds: float, phase: float, tones=MAIN_TONES, sample_rate: int = SAMPLE_RATE) -> AudioTrack:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    beat = 2 * math.pi * BEAT_HZ * t + phase
    env_sin = 0.25 + 0.375 * (1 + np.sin(beat))
    env_cos = 0.25 + 0.375 * (1 + np.cos(beat))
    x = 0.3 * env_sin * np.sin(2 * math.pi * tones[0] * t) + 0.3 * env_cos * np.sin(2 * math.pi * tones[1] * t)
    return AudioTrack(x, sample_rate)


def keyword_for_intent(k: int) -> Optional[str]:
    for w, idx in intent_keywords().items():
        if idx == k:
            return w
    return None


def toy_transcript(seconds: int, positive, intent: Optional[int], rng: np.random.Generator) -> str:
    """Ten words per second; round(10 * positive) of them from the positive lexicon.

    `positive` is a scalar or one intensity per second.

    When `intent` is given, the first word of every second is its keyword.
    One neutral slot per second may be a laughter token.
    """
    pos_words = sorted(positive_words())
    counts = [int(round(WORDS_PER_SECOND * p)) for p in per_second(positive, seconds)]
    kw = keyword_for_intent(intent) if intent else None
    if max(counts) + (kw is not None) > WORDS_PER_SECOND:
        raise ValueError(f"positive intensity {max(counts) / WORDS_PER_SECOND} leaves no room for the intent keyword")
    lines = []
    for s, n_pos in enumerate(counts):
        fill = WORDS_PER_SECOND - n_pos - (kw is not None)
        fillers = [NEUTRAL_WORDS[i] for i in rng.integers(0, len(NEUTRAL_WORDS), fill)]
        if fill and rng.random() < 0.25:
            fillers[0] = "#"
        words = [pos_words[i] for i in rng.integers(0, len(pos_words), n_pos)] + fillers
        words = [words[i] for i in rng.permutation(len(words))]
        if kw:
            words.insert(0, kw)
        for j, w in enumerate(words):
            start = s + j / WORDS_PER_SECOND
            lines.append(f"{start:.3f}\t{start + 0.08:.3f}\t{w}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ToyDialog:
    """Planted values. `segments` lists the main agent's intensity per SEGMENT_SECONDS block;
    `positive_main` is their duration-weighted mean."""
    dialog_id: str
    split: str
    intent: int
    positive_main: float
    positive_inter: float
    phase: float
    segments: str  # space-separated, for the TSV metadata

    def per_second(self, seconds: int) -> np.ndarray:
        seg = [float(x) for x in self.segments.split()]
        return np.array([seg[min(s // SEGMENT_SECONDS, len(seg) - 1)] for s in range(seconds)])


def _segment_levels(n_segments: int, rng: np.random.Generator) -> list[float]:
    levels, prev = [], None
    for _ in range(n_segments):
        choices = [x for x in LEVELS if x != prev]
        prev = choices[int(rng.integers(len(choices)))]
        levels.append(prev)
    return levels


def plan_dialogs(n_dialogs: int, rng: np.random.Generator, split: str = "train",
                 intensities: Optional[Sequence[float]] = None, prefix: str = "toy",
                 seconds: int = 20) -> list[ToyDialog]:
    """With `intensities`, one constant level per dialogue; otherwise a new level every SEGMENT_SECONDS."""
    if intensities is not None and len(intensities) != n_dialogs:
        raise ValueError("need one intensity per dialog")
    n_seg = max(1, math.ceil(seconds / SEGMENT_SECONDS))
    plans = []
    for i in range(n_dialogs):
        segs = [float(intensities[i])] if intensities is not None else _segment_levels(n_seg, rng)
        intent = int(rng.integers(1, N_INTENTS))
        p_inter = int(rng.integers(0, WORDS_PER_SECOND)) / WORDS_PER_SECOND
        phase = float(rng.uniform(0, 2 * math.pi))
        d = ToyDialog(f"{prefix}_{i:03d}", split, intent, 0.0, p_inter, phase, " ".join(repr(x) for x in segs))
        mean = float(np.mean(d.per_second(seconds))) if seconds else segs[0]
        plans.append(dataclasses.replace(d, positive_main=round(mean, 6)))
    return plans


def gen_toy(out_path, n_dialogs: int = 8, seconds: int = 20, rng_seed: int = 0, split: str = "train",
            intensities: Optional[Sequence[float]] = None, prefix: str = "toy") -> list[ToyDialog]:
    """Write a toy dataset in the ingest layout and return the planted values."""
    rng = np.random.default_rng(rng_seed)
    plans = plan_dialogs(n_dialogs, rng, split, intensities, prefix, seconds)
    skel = toy_skeleton()
    os.makedirs(out_path, exist_ok=True)
    for d in plans:
        ddir = os.path.join(out_path, d.dialog_id)
        os.makedirs(ddir, exist_ok=True)
        speakers = {
            "main-agent": (d.per_second(seconds), d.phase, MAIN_TONES, d.intent),
            "interloctr": (d.positive_inter, d.phase + math.pi / 2, INTER_TONES, None),
        }
        for spk, (p, phase, tones, intent) in speakers.items():
            motion = toy_motion(seconds, p, phase)
            with open(os.path.join(ddir, f"{spk}.bvh"), "w", newline="\n") as f:
                f.write(serialize_bvh(skel, MotionClip(motion, 1.0 / FPS)))
            with open(os.path.join(ddir, f"{spk}.wav"), "wb") as f:
                f.write(encode_wav(toy_audio(seconds, phase, tones)))
            with open(os.path.join(ddir, f"{spk}.tsv"), "w", newline="\n") as f:
                f.write(toy_transcript(seconds, p, intent, rng))
    _write_split(out_path, plans)
    meta = read_toy_meta(out_path)
    meta.update({d.dialog_id: {"dialog_id": d.dialog_id, "split": d.split, "intent": d.intent,
                               "positive_main": d.positive_main, "positive_inter": d.positive_inter,
                               "phase": repr(d.phase), "segments": d.segments} for d in plans})
    with open(os.path.join(out_path, "toy_meta.tsv"), "w", newline="\n") as f:
        w = csv.DictWriter(f, fieldnames=list(ToyDialog.__dataclass_fields__), delimiter="\t",
                           lineterminator="\n")
        w.writeheader()
        for k in sorted(meta):
            w.writerow(meta[k])
    return plans


def _write_split(out_path, plans):
    path = os.path.join(out_path, "split.tsv")
    existing = {}
    if os.path.exists(path):
        with open(path) as f:
            for ln in f:
                if ln.strip():
                    k, v = ln.split()
                    existing[k] = v
    existing.update({d.dialog_id: d.split for d in plans})
    with open(path, "w", newline="\n") as f:
        for k in sorted(existing):
            f.write(f"{k}\t{existing[k]}\n")


def read_toy_meta(root) -> dict[str, dict]:
    path = os.path.join(root, "toy_meta.tsv")
    if not os.path.exists(path):
        return {}
    with open(path) as f:
        return {r["dialog_id"]: r for r in csv.DictReader(f, delimiter="\t")}
