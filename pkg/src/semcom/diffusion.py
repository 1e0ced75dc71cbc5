"""Latent diffusion conditioned on the segmentation map and modality.

The receiver starts from seeded Gaussian noise in latent space and runs the
reverse process step by step; the denoiser is conditioned on the transmitted
one-hot map (downsampled to latent resolution and channel-concatenated) plus
a learned modality embedding and a sinusoidal timestep embedding, so one
network regenerates latents for either modality.

Training regresses the denoiser output against the clean encoded latent of
each modality (the default "z0" target); the two per-modality MSE terms are
summed. Noise-prediction ("eps") is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoenc import IR, RGB, ModalityAutoencoders, check_modality
from .neural import (
    Adam,
    ChannelConcat,
    Conv2d,
    Dense,
    GroupNorm,
    NonFiniteLossError,
    Parameter,
    Sequential,
    ShapeMismatchError,
    SiLU,
    derive_rng,
    seeded_rng,
)
from .segmap import OneHotMap, SegMap, downsample_onehot, one_hot_encode
from .synthgen import ScenePair

PREDICTION_TARGETS = ("z0", "eps")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep noise levels; timesteps are 1-based (t in [1, T])."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def timesteps(self) -> int:
        return len(self.beta)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-d array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta values must lie in (0, 1)")
        if beta.size > 1 and np.any(np.diff(beta) <= 0):
            raise ValueError("beta must be strictly increasing")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")


def make_schedule(timesteps: int, beta_start=1e-4, beta_end=0.02) -> NoiseSchedule:
    """Linear beta schedule; beta runs from beta_start to beta_end inclusive."""
    if timesteps < 1:
        raise ValueError(f"timesteps must be >= 1, got {timesteps}")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ValueError(
            f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
        )
    beta = (
        np.array([beta_start])
        if timesteps == 1
        else np.linspace(beta_start, beta_end, timesteps)
    )
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def _check_t(t: int, sched: NoiseSchedule) -> int:
    if not 1 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside [1, {sched.timesteps}]")
    return int(t)


def q_sample(z0: np.ndarray, t: int, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form forward noising: sqrt(ab_t) z0 + sqrt(1-ab_t) noise."""
    z0 = np.asarray(z0)
    noise = np.asarray(noise)
    if z0.shape != noise.shape:
        raise ShapeMismatchError(f"z0 shape {z0.shape} != noise shape {noise.shape}")
    ab = sched.alpha_bar[_check_t(t, sched) - 1]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * noise


@dataclass(frozen=True)
class Condition:
    """Denoiser conditioning: one-hot map at latent resolution, modality, timestep."""

    y: OneHotMap
    m: int
    t: int

    def __post_init__(self):
        check_modality(self.m)
        if self.t < 1:
            raise ValueError(f"timestep must be >= 1, got {self.t}")


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period=10000.0) -> np.ndarray:
    """Standard sin/cos positional features of the (1-based) timestep."""
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


@dataclass
class DiffusionTrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 2e-3
    timesteps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    width: int = 48
    time_dim: int = 32
    prediction_target: str = "z0"
    use_modality_condition: bool = True
    seed: int = 42
    dtype: str = "float32"

    def __post_init__(self):
        if self.prediction_target not in PREDICTION_TARGETS:
            raise ValueError(f"prediction_target must be one of {PREDICTION_TARGETS}")

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.timesteps, self.beta_start, self.beta_end)


class Denoiser:
    """Residual conv stack over [latent ; one-hot condition] channels.

    The timestep enters as a sinusoidal embedding projected and added after
    the first conv; the modality as a learned 2-row embedding added alongside
    it (omitted when the modality-condition ablation is on).
    """

    def __init__(
        self,
        rng,
        latent_channels=4,
        cond_channels=9,
        width=48,
        time_dim=32,
        use_modality=True,
        name="ldm",
        dtype=np.float32,
    ):
        self.latent_channels = latent_channels
        self.cond_channels = cond_channels
        self.time_dim = time_dim
        self.use_modality = use_modality
        self.dtype = dtype
        self.concat = ChannelConcat()
        self.conv_in = Conv2d(latent_channels + cond_channels, width, rng, f"{name}.in", dtype)
        self.time_proj = Dense(time_dim, width, rng, f"{name}.temb", dtype)
        self.modality_embedding = Parameter(f"{name}.memb", np.zeros((2, width), dtype=dtype))
        self.block1 = Sequential(
            [GroupNorm(width, name=f"{name}.b1.gn", dtype=dtype), SiLU(), Conv2d(width, width, rng, f"{name}.b1.conv", dtype)]
        )
        self.block2 = Sequential(
            [GroupNorm(width, name=f"{name}.b2.gn", dtype=dtype), SiLU(), Conv2d(width, width, rng, f"{name}.b2.conv", dtype)]
        )
        self.head = Sequential(
            [GroupNorm(width, name=f"{name}.out.gn", dtype=dtype), SiLU(), Conv2d(width, latent_channels, rng, f"{name}.out.conv", dtype)]
        )

    def parameters(self) -> list[Parameter]:
        params = self.conv_in.parameters() + self.time_proj.parameters()
        if self.use_modality:
            params.append(self.modality_embedding)
        return params + self.block1.parameters() + self.block2.parameters() + self.head.parameters()

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    @staticmethod
    def from_arrays(named: dict[str, np.ndarray]) -> "Denoiser":
        latent = named["ldm.out.conv.w"].shape[0]
        width = named["ldm.in.w"].shape[0]
        cond = named["ldm.in.w"].shape[1] - latent
        time_dim = named["ldm.temb.w"].shape[1]
        den = Denoiser(
            derive_rng(0, "ldm", "load"),
            latent_channels=latent,
            cond_channels=cond,
            width=width,
            time_dim=time_dim,
            use_modality="ldm.memb" in named,
        )
        for p in den.parameters():
            if p.name not in named:
                raise KeyError(f"weights file missing {p.name}")
            if named[p.name].shape != p.value.shape:
                raise ShapeMismatchError(
                    f"{p.name}: stored shape {named[p.name].shape} != expected {p.value.shape}"
                )
            p.value = named[p.name].astype(p.value.dtype)
            p.grad = np.zeros_like(p.value)
        return den

    def forward_batch(self, z_t: np.ndarray, y: np.ndarray, t: np.ndarray, m: np.ndarray):
        """z_t (N,4,h,w), y (N,C,h,w), t (N,) 1-based, m (N,) in {0,1}."""
        z_t = np.asarray(z_t, dtype=self.dtype)
        y = np.asarray(y, dtype=self.dtype)
        if z_t.shape[1] != self.latent_channels:
            raise ShapeMismatchError(
                f"latent has {z_t.shape[1]} channels, expected {self.latent_channels}"
            )
        if y.shape[2:] != z_t.shape[2:]:
            raise ShapeMismatchError(
                f"condition spatial {y.shape[2:]} != latent spatial {z_t.shape[2:]}"
            )
        x, c_concat = self.concat.forward([z_t, y])
        h, c_in = self.conv_in.forward(x)
        emb = sinusoidal_embedding(t, self.time_dim).astype(self.dtype)
        temb, c_t = self.time_proj.forward(emb)
        h = h + temb[:, :, None, None]
        m = np.asarray(m)
        if self.use_modality:
            h = h + self.modality_embedding.value[m][:, :, None, None]
        r1, c_b1 = self.block1.forward(h)
        h1 = h + r1
        r2, c_b2 = self.block2.forward(h1)
        h2 = h1 + r2
        out, c_head = self.head.forward(h2)
        return out, (c_concat, c_in, c_t, m, c_b1, c_b2, c_head)

    def backward_batch(self, gy, cache):
        c_concat, c_in, c_t, m, c_b1, c_b2, c_head = cache
        gh2 = self.head.backward(gy, c_head)
        gh1 = gh2 + self.block2.backward(gh2, c_b2)
        gh = gh1 + self.block1.backward(gh1, c_b1)
        if self.use_modality:
            np.add.at(self.modality_embedding.grad, m, gh.sum(axis=(2, 3)))
        self.time_proj.backward(gh.sum(axis=(2, 3)), c_t)
        gx = self.conv_in.backward(gh, c_in)
        gz, _gy_cond = self.concat.backward(gx, c_concat)
        return gz


def denoiser_forward(den: Denoiser, z_t: np.ndarray, cond: Condition) -> np.ndarray:
    """Single-latent denoiser application under one conditioning triple."""
    y = cond.y.channels_first(den.dtype)[None]
    out, _ = den.forward_batch(
        np.asarray(z_t)[None], y, np.array([cond.t]), np.array([cond.m])
    )
    return out[0]


def conditioning_array(seg: SegMap, factor: int, dtype=np.float32) -> np.ndarray:
    """(C, H/factor, W/factor) one-hot conditioning tensor for a map."""
    return downsample_onehot(one_hot_encode(seg), factor).channels_first(dtype)


def _scene_latents(scenes, aes: ModalityAutoencoders, factor: int, dtype):
    z_rgb = np.stack([aes.encode(s.rgb, RGB) for s in scenes]).astype(dtype)
    z_ir = np.stack([aes.encode(s.ir, IR) for s in scenes]).astype(dtype)
    y = np.stack([conditioning_array(s.seg, factor, dtype) for s in scenes])
    return z_rgb, z_ir, y


def _latent_factor(scene: ScenePair, aes: ModalityAutoencoders) -> int:
    z = aes.encode(scene.rgb, RGB)
    return scene.seg.height // z.shape[1]


def ldm_loss_terms(
    scenes: list[ScenePair],
    aes: ModalityAutoencoders,
    den: Denoiser,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    target: str = "z0",
    denoise_fn=None,
) -> tuple[float, float]:
    """Per-modality loss terms, averaged over the batch.

    Draw order (one pair per scene, scenes in list order): first the integer
    timestep t ~ U[1, T], then the noise tensor. Both modality terms of a
    scene share that single (t, noise) draw. `denoise_fn(z_t, cond)` replaces
    the network when supplied, which lets tests drive an oracle.
    """
    if target not in PREDICTION_TARGETS:
        raise ValueError(f"target must be one of {PREDICTION_TARGETS}")
    if not scenes:
        raise ValueError("batch is empty")
    fn = denoise_fn if denoise_fn is not None else (lambda z_t, cond: denoiser_forward(den, z_t, cond))
    factor = _latent_factor(scenes[0], aes)
    sums = np.zeros(2, dtype=np.float64)
    for scene in scenes:
        z0 = [aes.encode(scene.rgb, RGB), aes.encode(scene.ir, IR)]
        y = downsample_onehot(one_hot_encode(scene.seg), factor)
        t = int(rng.integers(1, sched.timesteps + 1))
        noise = rng.standard_normal(z0[0].shape)
        for m in (RGB, IR):
            z_t = q_sample(z0[m], t, noise, sched)
            pred = fn(z_t, Condition(y=y, m=m, t=t))
            ref = z0[m] if target == "z0" else noise
            sums[m] += float(np.mean((pred - ref) ** 2))
    return float(sums[0] / len(scenes)), float(sums[1] / len(scenes))


def ldm_loss(scenes, aes, den, sched, rng, target="z0", denoise_fn=None) -> float:
    """Batch-mean diffusion loss: the sum of the two modality terms."""
    t0, t1 = ldm_loss_terms(scenes, aes, den, sched, rng, target, denoise_fn)
    return t0 + t1


def train_ldm(
    corpus: list[ScenePair],
    aes: ModalityAutoencoders,
    cfg: DiffusionTrainConfig,
) -> tuple[Denoiser, NoiseSchedule, list[dict]]:
    """Stage-2 training over frozen stage-1 latents; per-epoch loss log."""
    if not corpus:
        raise ValueError("corpus is empty")
    dtype = np.float64 if cfg.dtype == "float64" else np.float32
    sched = cfg.schedule()
    factor = _latent_factor(corpus[0], aes)
    num_classes = corpus[0].seg.num_classes
    den = Denoiser(
        derive_rng(cfg.seed, "ldm", "init"),
        cond_channels=num_classes,
        width=cfg.width,
        time_dim=cfg.time_dim,
        use_modality=cfg.use_modality_condition,
        dtype=dtype,
    )
    z_rgb, z_ir, y_all = _scene_latents(corpus, aes, factor, dtype)
    order = derive_rng(cfg.seed, "ldm", "batches")
    draws = derive_rng(cfg.seed, "ldm", "noise")
    opt = Adam(den.parameters(), lr=cfg.learning_rate)
    n = len(corpus)
    numel = z_rgb[0].size
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        perm = order.permutation(n)
        sums = np.zeros(3, dtype=np.float64)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            b = len(idx)
            t = draws.integers(1, sched.timesteps + 1, size=b)
            noise = draws.standard_normal((b,) + z_rgb[0].shape).astype(dtype)
            ab = sched.alpha_bar[t - 1].astype(dtype)[:, None, None, None]
            zt_r = np.sqrt(ab) * z_rgb[idx] + np.sqrt(1.0 - ab) * noise
            zt_i = np.sqrt(ab) * z_ir[idx] + np.sqrt(1.0 - ab) * noise
            z_t = np.concatenate([zt_r, zt_i], axis=0)
            y2 = np.concatenate([y_all[idx], y_all[idx]], axis=0)
            t2 = np.concatenate([t, t])
            m2 = np.concatenate([np.full(b, RGB), np.full(b, IR)])
            if cfg.prediction_target == "z0":
                ref = np.concatenate([z_rgb[idx], z_ir[idx]], axis=0)
            else:
                ref = np.concatenate([noise, noise], axis=0)
            opt.zero_grad()
            pred, cache = den.forward_batch(z_t, y2, t2, m2)
            err = pred - ref
            den.backward_batch(2.0 * err / (b * numel), cache)
            opt.step()
            per_sample = np.mean(err**2, axis=(1, 2, 3))
            term0 = float(np.mean(per_sample[:b]))
            term1 = float(np.mean(per_sample[b:]))
            sums += (term0 + term1, term0, term1)
            batches += 1
        avg = sums / batches
        if not np.isfinite(avg[0]):
            raise NonFiniteLossError(f"diffusion loss non-finite at epoch {epoch}: {avg[0]}")
        log.append(
            {"epoch": epoch, "total": float(avg[0]), "rgb": float(avg[1]), "ir": float(avg[2])}
        )
    return den, sched, log


def sample(
    y: OneHotMap,
    m: int,
    sched: NoiseSchedule,
    den: Denoiser,
    seed: int,
    target: str = "z0",
) -> np.ndarray:
    """Reverse process: seeded noise refined over t = T..1 into a latent.

    Each step forms the posterior mean from the predicted clean latent and
    adds scheduled noise, except at t = 1 which returns the mean.
    """
    check_modality(m)
    if target not in PREDICTION_TARGETS:
        raise ValueError(f"target must be one of {PREDICTION_TARGETS}")
    rng = seeded_rng(seed)
    shape = (den.latent_channels, y.height, y.width)
    z = rng.standard_normal(shape)
    for t in range(sched.timesteps, 0, -1):
        pred = denoiser_forward(den, z.astype(den.dtype), Condition(y=y, m=m, t=t))
        ab_t = sched.alpha_bar[t - 1]
        ab_prev = sched.alpha_bar[t - 2] if t > 1 else 1.0
        beta_t = sched.beta[t - 1]
        alpha_t = sched.alpha[t - 1]
        if target == "z0":
            z0_hat = pred.astype(np.float64)
        else:
            z0_hat = (z - np.sqrt(1.0 - ab_t) * pred.astype(np.float64)) / np.sqrt(ab_t)
        mean = (
            np.sqrt(ab_prev) * beta_t / (1.0 - ab_t) * z0_hat
            + np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t) * z
        )
        if t > 1:
            var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
            z = mean + np.sqrt(var) * rng.standard_normal(shape)
        else:
            z = mean
    return z.astype(den.dtype)


def reconstruct(
    seg: SegMap,
    m: int,
    aes: ModalityAutoencoders,
    den: Denoiser,
    sched: NoiseSchedule,
    seed: int,
    target: str = "z0",
) -> np.ndarray:
    """Receiver-side image synthesis from a segmentation map and modality."""
    from .autoenc import DOWNSAMPLE_FACTOR

    y = downsample_onehot(one_hot_encode(seg), DOWNSAMPLE_FACTOR)
    z = sample(y, m, sched, den, seed, target)
    return aes.decode(z, m)
