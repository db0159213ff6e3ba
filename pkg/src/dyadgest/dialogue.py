"""Timed transcripts, social-feature providers and condition assembly.

Clip-level condition layout (fixed, recorded in checkpoints)::

    [intent one-hot (60) | main emotion (3) | interlocutor emotion (3)
     | main context (D_c) | interlocutor context (D_c)]

Emotion triples are ordered (positive, neutral, negative). The frame-level
part is the per-row concatenation [main audio | interlocutor audio].
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import numpy as np

N_INTENTS = 60
N_EMOTIONS = 3
LAUGHTER = "#"
GENERAL_CHAT = 0

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


class TranscriptError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class TranscriptToken:
    start: float
    end: float
    word: str
    is_laughter: bool = False

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class IntentVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_INTENTS,) or np.count_nonzero(v) != 1 or v.max() != 1.0:
            raise ValueError("intent vector must be a 60-dim one-hot")
        object.__setattr__(self, "values", v)

    @property
    def index(self) -> int:
        return int(np.argmax(self.values))


@dataclass(frozen=True)
class EmotionIntensity:
    positive: float
    neutral: float
    negative: float

    def __post_init__(self):
        v = self.as_array()
        if np.any(v < 0) or np.any(v > 1) or abs(v.sum() - 1.0) > 1e-6:
            raise ValueError(f"emotion intensities {tuple(v)} are not on the simplex")

    def as_array(self) -> np.ndarray:
        return np.array([self.positive, self.neutral, self.negative], dtype=np.float64)


@dataclass
class ConditionVector:
    frame_part: np.ndarray
    clip_part: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.frame_part)) and np.all(np.isfinite(self.clip_part))):
            raise ValueError("condition contains non-finite values")


def clip_layout(context_dim: int) -> list[tuple[str, int]]:
    return [("intent", N_INTENTS), ("emotion_main", N_EMOTIONS), ("emotion_inter", N_EMOTIONS),
            ("context_main", context_dim), ("context_inter", context_dim)]


def clip_dim(context_dim: int) -> int:
    return N_INTENTS + 2 * N_EMOTIONS + 2 * context_dim


# --- transcripts -----------------------------------------------------------

def parse_transcript(tsv_text: str) -> list[TranscriptToken]:
    """Parse `start<TAB>end<TAB>token` lines. Blank lines are skipped."""
    tokens = []
    for n, line in enumerate(tsv_text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) != 3:
            raise TranscriptError(f"expected 3 tab-separated columns, got {len(cols)}", n)
        try:
            start, end = float(cols[0]), float(cols[1])
        except ValueError:
            raise TranscriptError(f"non-numeric time in {line!r}", n) from None
        if not (np.isfinite(start) and np.isfinite(end)) or start < 0:
            raise TranscriptError("times must be finite and non-negative", n)
        if end < start:
            raise TranscriptError(f"end {end} precedes start {start}", n)
        word = cols[2].strip()
        tokens.append(TranscriptToken(start, end, word, word == LAUGHTER))
    tokens.sort(key=lambda t: t.start)  # stable: ties keep file order
    return tokens


def read_transcript(path) -> list[TranscriptToken]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_transcript(f.read())


def window_text(tokens: Sequence[TranscriptToken], window_start_s: float, window_end_s: float) -> str:
    if window_end_s <= window_start_s:
        raise ValueError("window end must be after its start")
    words = ["laughter" if t.is_laughter else t.word
             for t in tokens if window_start_s <= t.midpoint < window_end_s]
    return " ".join(words)


_WORD = re.compile(r"[^\w']+")


def words_of(text: str) -> list[str]:
    return [w.strip("'") for w in _WORD.split(text.lower()) if w.strip("'")]


# --- shipped tables ----------------------------------------------------------

def _resource_lines(name: str) -> list[str]:
    text = resources.files("dyadgest.resources").joinpath(name).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


@lru_cache(maxsize=None)
def intent_keywords() -> dict[str, int]:
    table = {}
    for ln in _resource_lines("intent_keywords.tsv"):
        word, idx = ln.split("\t")
        table[word] = int(idx)
    return table


@lru_cache(maxsize=None)
def intent_labels() -> tuple[str, ...]:
    return tuple(ln.split("\t")[1] for ln in _resource_lines("intent_labels.txt"))


@lru_cache(maxsize=None)
def positive_words() -> frozenset[str]:
    return frozenset(_resource_lines("positive_words.txt"))


@lru_cache(maxsize=None)
def negative_words() -> frozenset[str]:
    return frozenset(_resource_lines("negative_words.txt"))


# --- providers --------------------------------------------------------------

def intent_onehot(label_index: int) -> IntentVector:
    if not 0 <= label_index < N_INTENTS:
        raise ValueError(f"intent index {label_index} outside [0, {N_INTENTS})")
    v = np.zeros(N_INTENTS)
    v[label_index] = 1.0
    return IntentVector(v)


def stub_intent_provider(window_text_main: str, window_text_inter: str) -> int:
    """First keyword hit, scanning the main speaker's text then the interlocutor's."""
    table = intent_keywords()
    for w in words_of(window_text_main) + words_of(window_text_inter):
        if w in table:
            return table[w]
    return GENERAL_CHAT


def stub_emotion_provider(text: str) -> EmotionIntensity:
    words = words_of(text)
    if not words:
        return EmotionIntensity(0.0, 1.0, 0.0)
    pos, neg = positive_words(), negative_words()
    p = sum(w in pos for w in words)
    n = sum(w in neg for w in words)
    raw = np.array([p, len(words) - p - n, n], dtype=np.float64)
    raw /= raw.sum()
    return EmotionIntensity(*raw)


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a."""
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def context_embedding(text: str, context_dim: int = 64) -> np.ndarray:
    """Signed hashed bag of words, L2-normalised.

    Each lowercase word is hashed with FNV-1a (64-bit, UTF-8 bytes); the bucket
    is hash mod context_dim and the sign is negative when bit 63 is set.
    """
    if context_dim < 1:
        raise ValueError("context_dim must be at least 1")
    acc = np.zeros(context_dim)
    for w in words_of(text):
        h = fnv1a_64(w.encode("utf-8"))
        acc[h % context_dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(acc)
    return acc / norm if norm > 0 else acc


@dataclass(frozen=True)
class SemanticProviders:
    """The three pluggable providers. Any triple honouring the type contracts works."""

    intent: Callable[[str, str], int] = stub_intent_provider
    emotion: Callable[[str], EmotionIntensity] = stub_emotion_provider
    context: Callable[[str, int], np.ndarray] = context_embedding

    def clip_features(self, text_main: str, text_inter: str, context_dim: int):
        return (intent_onehot(self.intent(text_main, text_inter)),
                self.emotion(text_main), self.emotion(text_inter),
                self.context(text_main, context_dim), self.context(text_inter, context_dim))


def split_clip_part(clip_part: np.ndarray, context_dim: int):
    """Inverse of the clip layout: (intent, emo_main, emo_inter, ctx_main, ctx_inter)."""
    clip_part = np.asarray(clip_part, dtype=np.float64)
    if clip_part.shape != (clip_dim(context_dim),):
        raise ValueError(f"clip part has shape {clip_part.shape}, expected ({clip_dim(context_dim)},)")
    parts, pos = [], 0
    for _, n in clip_layout(context_dim):
        parts.append(clip_part[pos:pos + n])
        pos += n
    intent, em, ei, cm, ci = parts
    return IntentVector(intent), EmotionIntensity(*em), EmotionIntensity(*ei), cm, ci


class ImportedSemantics:
    """Per-window clip features precomputed elsewhere, stored as a GDAF matrix
    whose rows follow the clip layout."""

    def __init__(self, matrix: np.ndarray, context_dim: int):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != clip_dim(context_dim):
            raise ValueError(f"imported semantics need {clip_dim(context_dim)} columns")
        self.matrix = matrix
        self.context_dim = context_dim

    @classmethod
    def from_file(cls, path, context_dim: int) -> "ImportedSemantics":
        from .audio import read_feature_cache
        return cls(read_feature_cache(path), context_dim)

    def __len__(self):
        return self.matrix.shape[0]

    def window(self, k: int):
        return split_clip_part(self.matrix[k], self.context_dim)


def assemble_condition(audio_main, audio_inter, intent: IntentVector, emo_main: EmotionIntensity,
                       emo_inter: EmotionIntensity, ctx_main, ctx_inter) -> ConditionVector:
    audio_main = np.asarray(audio_main, dtype=np.float64)
    audio_inter = np.asarray(audio_inter, dtype=np.float64)
    if audio_main.ndim != 2 or audio_main.shape != audio_inter.shape:
        raise ValueError(f"audio shapes {audio_main.shape} and {audio_inter.shape} do not match")
    ctx_main = np.asarray(ctx_main, dtype=np.float64).ravel()
    ctx_inter = np.asarray(ctx_inter, dtype=np.float64).ravel()
    if ctx_main.shape != ctx_inter.shape:
        raise ValueError("context embeddings differ in length")
    frame_part = np.concatenate([audio_main, audio_inter], axis=1)
    clip_part = np.concatenate([intent.values, emo_main.as_array(), emo_inter.as_array(), ctx_main, ctx_inter])
    return ConditionVector(frame_part, clip_part)
