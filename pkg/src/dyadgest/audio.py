"""WAV decoding, log-mel features on the motion frame grid, and the GDAF cache format."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-6
CACHE_MAGIC = b"GDAF"
CACHE_VERSION = 1


class WavError(ValueError):
    pass


class NotPCMError(WavError):
    pass


class TruncatedWavError(WavError):
    pass


class UnsupportedBitDepthError(WavError):
    pass


@dataclass
class AudioTrack:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)) or np.any(np.abs(self.samples) > 1.0):
            raise ValueError("samples must be finite and within [-1, 1]")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class AudioFrameFeatures:
    frames: np.ndarray
    hop: int


def decode_wav(data: bytes) -> AudioTrack:
    """Decode a 16-bit PCM RIFF/WAVE file; stereo is averaged to mono."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    pcm = None
    while pos + 8 <= len(data):
        cid, size = data[pos:pos + 4], struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise TruncatedWavError("fmt chunk is truncated")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedWavError(f"data chunk declares {size} bytes, found {len(body)}")
            pcm = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavError("missing fmt chunk")
    if pcm is None:
        raise TruncatedWavError("missing data chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if tag != 1:
        raise NotPCMError(f"unsupported encoding tag {tag} (only PCM=1)")
    if bits != 16:
        raise UnsupportedBitDepthError(f"unsupported bit depth {bits} (only 16)")
    if channels not in (1, 2):
        raise WavError(f"unsupported channel count {channels}")
    if len(pcm) % (2 * channels):
        raise TruncatedWavError("data chunk ends mid-frame")
    ints = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / 32768.0
    ints = ints.reshape(-1, channels).mean(axis=1)
    return AudioTrack(ints, rate)


def encode_wav(track: AudioTrack) -> bytes:
    q = np.clip(np.round(track.samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, track.sample_rate, 2 * track.sample_rate, 2, 16)
    return (b"RIFF" + struct.pack("<I", 36 + len(q)) + b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt
            + b"data" + struct.pack("<I", len(q)) + q)


def read_wav(path) -> AudioTrack:
    with open(path, "rb") as f:
        return decode_wav(f.read())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None) -> np.ndarray:
    """Triangular HTK-mel filters, shape [n_mels, n_fft // 2 + 1], peak weight 1."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def mel_band_centers(sample_rate, n_mels, fmin=0.0, fmax=None) -> np.ndarray:
    fmax = sample_rate / 2 if fmax is None else fmax
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def log_mel_frames(track: AudioTrack, fps=30, n_fft=1024, n_mels=27, fmin=0.0, fmax=None) -> AudioFrameFeatures:
    """One log-mel row per motion frame; frame k is centred on sample k * hop."""
    x = track.samples
    if len(x) < n_fft:
        raise ValueError(f"track has {len(x)} samples, fewer than one {n_fft}-sample window")
    sr = track.sample_rate
    hop = int(round(sr / fps))
    n_rows = int(round(len(x) * fps / sr))
    half = n_fft // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(n_fft + n_rows * hop)])
    idx = np.arange(n_rows)[:, None] * hop + np.arange(n_fft)[None, :]
    window = np.hanning(n_fft + 1)[:-1]  # periodic Hann
    mag = np.abs(np.fft.rfft(padded[idx] * window, axis=1))
    fb = mel_filterbank(sr, n_fft, n_mels, fmin, fmax)
    return AudioFrameFeatures(np.log(mag @ fb.T + LOG_FLOOR), hop)


def align_to_motion(features, num_motion_frames: int) -> np.ndarray:
    """Truncate, or pad by repeating the last row, to `num_motion_frames` rows."""
    frames = features.frames if isinstance(features, AudioFrameFeatures) else np.asarray(features)
    n = frames.shape[0]
    if n == 0:
        if num_motion_frames == 0:
            return frames.copy()
        raise ValueError("cannot align empty audio features")
    if n >= num_motion_frames:
        return frames[:num_motion_frames].copy()
    return np.concatenate([frames, np.repeat(frames[-1:], num_motion_frames - n, axis=0)], axis=0)


def encode_feature_cache(matrix: np.ndarray) -> bytes:
    m = np.atleast_2d(np.asarray(matrix))
    if m.ndim != 2:
        raise ValueError("feature cache holds a 2-D matrix")
    rows, cols = m.shape
    return CACHE_MAGIC + struct.pack("<III", CACHE_VERSION, rows, cols) + m.astype("<f4").tobytes()


def decode_feature_cache(data: bytes) -> np.ndarray:
    if data[:4] != CACHE_MAGIC:
        raise ValueError("not a GDAF feature cache")
    version, rows, cols = struct.unpack_from("<III", data, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported GDAF version {version}")
    body = data[16:]
    if len(body) != 4 * rows * cols:
        raise ValueError(f"GDAF payload has {len(body)} bytes, expected {4 * rows * cols}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def write_feature_cache(path, matrix) -> None:
    with open(path, "wb") as f:
        f.write(encode_feature_cache(matrix))


def read_feature_cache(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_feature_cache(f.read())
