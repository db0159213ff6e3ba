"""Run configuration: one flat dataclass, loaded from a `key = value` text file.

Grammar: one `key = value` per line; `#` starts a comment; blank lines and
`[section]` headers are ignored. Values are parsed by the field's type
(bool accepts true/false/yes/no/1/0). Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .denoiser import DenoiserConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data and windowing
    fps: int = 30
    window_len: int = 150
    seed_len: int = 30
    stride: int = 30
    audio_dim: int = 27
    n_fft: int = 1024
    context_dim: int = 64
    import_features: bool = False
    # diffusion
    T: int = 1000
    schedule_s: float = 0.008
    p_uncond: float = 0.1
    guidance: float = 1.0
    huber_delta: float = 1.0
    # optimisation
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 32
    steps: int = 3000
    checkpoint_every: int = 500
    # denoiser
    hidden: int = 256
    depth: int = 4
    time_dim: int = 64
    seed_summary_dim: int = 128
    kernel: int = 5
    # misc
    seed: int = 0
    data_root: str = "data"
    cache_dir: str = "cache"
    checkpoint: str = "model.gdck"
    log_path: str = "train_log.csv"
    output: str = "sample.bvh"
    report: str = "eval.csv"
    dialog: str = ""
    duration: float = 20.0
    split: str = "test"
    toy_dialogs: int = 8
    toy_seconds: int = 20

    def __post_init__(self):
        self.validate()

    @property
    def gen_len(self) -> int:
        return self.window_len - self.seed_len

    def validate(self) -> None:
        checks = [
            (self.fps > 0, "fps must be positive"),
            (0 < self.seed_len < self.window_len, "need 0 < seed_len < window_len"),
            (self.seed_len <= self.gen_len, "seed_len cannot exceed window_len - seed_len"),
            (self.stride >= 1, "stride must be at least 1"),
            (self.audio_dim >= 1 and self.context_dim >= 1, "audio_dim and context_dim must be positive"),
            (self.n_fft >= 2, "n_fft must be at least 2"),
            (self.T >= 1, "T must be at least 1"),
            (self.schedule_s > 0, "schedule_s must be positive"),
            (0.0 <= self.p_uncond <= 1.0, "p_uncond must be in [0, 1]"),
            (self.huber_delta > 0, "huber_delta must be positive"),
            (self.lr > 0 and self.eps > 0, "lr and eps must be positive"),
            (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "betas must be in [0, 1)"),
            (self.weight_decay >= 0, "weight_decay must be non-negative"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.steps >= 0, "steps must be non-negative"),
            (self.checkpoint_every >= 1, "checkpoint_every must be at least 1"),
            (self.duration > 0, "duration must be positive"),
            (self.split in ("train", "val", "test"), "split must be train, val or test"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        self.denoiser_config(motion_dim=1)  # raises on bad network sizes

    def denoiser_config(self, motion_dim: int) -> DenoiserConfig:
        try:
            return DenoiserConfig(motion_dim=motion_dim, audio_dim=self.audio_dim, context_dim=self.context_dim,
                                  seed_len=self.seed_len, hidden=self.hidden, depth=self.depth,
                                  time_dim=self.time_dim, seed_summary_dim=self.seed_summary_dim,
                                  kernel=self.kernel)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None
    return raw


def parse_assignments(pairs: list[str], origin: str = "--set") -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for n, line in enumerate(pairs, start=1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, types[key], value)
    return out


def load_config(path=None, overrides: list[str] = ()) -> RunConfig:
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            values.update(parse_assignments(f.read().splitlines(), origin=str(path)))
    values.update(parse_assignments(list(overrides)))
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))
