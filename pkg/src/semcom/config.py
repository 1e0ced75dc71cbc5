"""Run configuration: a dataclass plus a `key = value` file loader.

The on-disk format is deliberately plain text (one assignment per line,
`#` comments) so runs stay diffable without a parser dependency.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .autoenc import AutoencoderTrainConfig
from .channel import ChannelConfig
from .diffusion import DiffusionTrainConfig
from .synthgen import SceneSpec


class BadConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # corpus geometry and generation
    image_size: int = 32
    num_classes: int = 9
    train_scenes: int = 48
    eval_scenes: int = 50
    train_seed: int = 1000
    eval_seed: int = 7000
    object_count_min: int = 1
    object_count_max: int = 3
    classes_in_use: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    noise_level: float = 0.02
    # stage 1 (autoencoders)
    ae_epochs: int = 50
    ae_batch_size: int = 8
    ae_learning_rate: float = 2e-3
    temperature: float = 0.07
    contrastive_weight: float = 1.0
    rgb_weight: float = 1.0
    ir_weight: float = 1.0
    # stage 2 (diffusion)
    ldm_epochs: int = 100
    ldm_batch_size: int = 8
    ldm_learning_rate: float = 2e-3
    timesteps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    denoiser_width: int = 48
    prediction_target: str = "z0"
    # ablations
    disable_contrastive: bool = False
    disable_modality_condition: bool = False
    # channel
    channel_kind: str = "ideal"
    flip_probability: float = 0.0
    erasure_probability: float = 0.0
    channel_seed: int = 7
    # run control
    seed: int = 42
    dtype: str = "float32"
    modalities: str = "rgb,ir"
    # paths (empty = unset)
    corpus_dir: str = ""
    weights_path: str = ""
    output_dir: str = ""

    def __post_init__(self):
        if self.image_size % 4:
            raise BadConfigError(f"image_size must be divisible by 4, got {self.image_size}")
        if self.dtype not in ("float32", "float64"):
            raise BadConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        mods = self.modality_list()
        if not mods:
            raise BadConfigError("modalities must name rgb and/or ir")

    def modality_list(self) -> list[str]:
        names = [m.strip() for m in self.modalities.split(",") if m.strip()]
        for m in names:
            if m not in ("rgb", "ir"):
                raise BadConfigError(f"unknown modality {m!r}")
        return names

    def modality_mask(self) -> int:
        mask = 0
        for m in self.modality_list():
            mask |= 1 if m == "rgb" else 2
        return mask

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(
            width=self.image_size,
            height=self.image_size,
            object_count_range=(self.object_count_min, self.object_count_max),
            classes_in_use=self.classes_in_use,
            noise_level=self.noise_level,
        )

    def ae_config(self) -> AutoencoderTrainConfig:
        return AutoencoderTrainConfig(
            epochs=self.ae_epochs,
            batch_size=self.ae_batch_size,
            learning_rate=self.ae_learning_rate,
            temperature=self.temperature,
            contrastive_weight=0.0 if self.disable_contrastive else self.contrastive_weight,
            rgb_weight=self.rgb_weight,
            ir_weight=self.ir_weight,
            seed=self.seed,
            dtype=self.dtype,
        )

    def ldm_config(self) -> DiffusionTrainConfig:
        return DiffusionTrainConfig(
            epochs=self.ldm_epochs,
            batch_size=self.ldm_batch_size,
            learning_rate=self.ldm_learning_rate,
            timesteps=self.timesteps,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            width=self.denoiser_width,
            prediction_target=self.prediction_target,
            use_modality_condition=not self.disable_modality_condition,
            seed=self.seed,
            dtype=self.dtype,
        )

    def channel_config(self, seed: int | None = None) -> ChannelConfig:
        return ChannelConfig(
            kind=self.channel_kind,
            flip_probability=self.flip_probability,
            erasure_probability=self.erasure_probability,
            seed=self.channel_seed if seed is None else seed,
        )


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    f = _FIELD_TYPES[name]
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise BadConfigError(f"{name}: expected a boolean, got {raw!r}")
    if "tuple" in str(f.type):
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    return raw


def load_config(path) -> RunConfig:
    """Parse a `key = value` file into a RunConfig, validating every key."""
    path = Path(path)
    if not path.exists():
        raise BadConfigError(f"config file not found: {path}")
    overrides = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise BadConfigError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise BadConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            overrides[key] = _parse_value(key, raw)
        except BadConfigError:
            raise
        except ValueError as exc:
            raise BadConfigError(f"{path}:{lineno}: {key}: {exc}") from exc
    try:
        return RunConfig(**overrides)
    except BadConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise BadConfigError(str(exc)) from exc


def save_config(cfg: RunConfig, path) -> None:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    return replace(cfg, **kwargs)
