"""Training configuration, its text file format, and the ablation presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..policy import ModelConfig

ABLATIONS = {
    # flags: use_a3c, use_il, use_tse, use_kg, use_attention
    "random": dict(use_a3c=False, use_il=False, use_tse=False, use_kg=False, use_attention=False),
    "il": dict(use_a3c=False, use_il=True, use_tse=False, use_kg=False, use_attention=False, il_fraction=1.0),
    "lstm_a3c": dict(use_a3c=True, use_il=False, use_tse=False, use_kg=False, use_attention=False),
    "a3c_il": dict(use_a3c=True, use_il=True, use_tse=False, use_kg=False, use_attention=False),
    "a3c_tse": dict(use_a3c=True, use_il=False, use_tse=True, use_kg=False, use_attention=False),
    "il_tse": dict(use_a3c=True, use_il=True, use_tse=True, use_kg=False, use_attention=False),
    "kg": dict(use_a3c=True, use_il=True, use_tse=True, use_kg=True, use_attention=False),
    "kg_attention": dict(use_a3c=True, use_il=True, use_tse=True, use_kg=True, use_attention=True),
}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    t_max: int = 32
    workers: int = 1
    frames: int = 100_000
    il_fraction: float = 0.1  # IL runs while global frames < il_fraction * frames
    il_horizon: int = -1  # explicit horizon in frames; -1 derives it from il_fraction
    tse_samples: int = 5
    tse_targets: str = "all"  # "all": pooled targets + novel objects; "seen": pooled targets only
    tse_scope: str = "episode"  # sub-targets drawn per finished episode, or per rollout segment
    lr: float = 7e-4
    optimizer: str = "rmsprop"
    rms_alpha: float = 0.99
    rms_eps: float = 1e-5
    clip_norm: float = 40.0
    seed: int = 0
    max_episode_steps: int = 5000
    min_start_distance: int = 10
    checkpoint_every: int = 50_000
    sr_window: int = 100
    use_a3c: bool = True
    use_il: bool = True
    use_tse: bool = True
    use_kg: bool = True
    use_attention: bool = True
    attention_output: str = "probs"
    d_vis: int = 128
    d_lstm: int = 128
    gcn_width: int = 64
    dtype: str = "float32"
    ablation: str = "kg_attention"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if self.tse_samples < 0:
            raise ConfigError("tse_samples must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.frames < 0:
            raise ConfigError("frames must be >= 0")
        if self.tse_targets not in ("all", "seen"):
            raise ConfigError("tse_targets must be 'all' or 'seen'")
        if self.tse_scope not in ("episode", "segment"):
            raise ConfigError("tse_scope must be 'episode' or 'segment'")
        if self.attention_output not in ("probs", "weighted"):
            raise ConfigError("attention_output must be 'probs' or 'weighted'")
        if self.optimizer not in ("rmsprop", "sgd"):
            raise ConfigError("optimizer must be 'rmsprop' or 'sgd'")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.ablation not in ABLATIONS and self.ablation != "custom":
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        if self.use_attention and not self.use_kg:
            raise ConfigError("attention requires the knowledge graph")

    @property
    def il_frames(self) -> int:
        if not self.use_il:
            return 0
        return self.il_horizon if self.il_horizon >= 0 else int(self.il_fraction * self.frames)

    def model_config(self, vocab_size: int) -> ModelConfig:
        w = self.gcn_width
        return ModelConfig(
            vocab_size=vocab_size,
            d_vis=self.d_vis,
            d_lstm=self.d_lstm,
            gcn_widths=(w, w, w),
            use_kg=self.use_kg,
            use_attention=self.use_attention,
            attention_output=self.attention_output,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    def with_ablation(self, name: str) -> "TrainConfig":
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        return update_config(self, {**ABLATIONS[name], "ablation": name})


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _coerce(name: str, text):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    typ = _FIELDS[name].type
    if not isinstance(text, str):
        return text
    try:
        if typ == "bool":
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(float(text)) if "e" in text.lower() else int(text)
        if typ == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {typ}") from None
    return text.strip()


def update_config(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    d = cfg.to_dict()
    for k, v in overrides.items():
        d[k] = _coerce(k, v)
    return TrainConfig(**d)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """``key = value`` lines; ``#`` comments. An ``ablation`` line applies its preset first."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        pairs[key.strip()] = val.strip()
    cfg = base or TrainConfig()
    if "ablation" in pairs:
        cfg = cfg.with_ablation(pairs.pop("ablation"))
    return update_config(cfg, pairs)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)
