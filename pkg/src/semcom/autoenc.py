"""Per-modality autoencoders sharing one latent space.

Each modality (RGB = 0, infrared = 1) gets a dedicated encoder/decoder.
Both encoders emit latents of identical shape: channels d=4 at 1/4 the image
resolution. Stage-1 training minimizes

    total = contrastive + rgb reconstruction + ir reconstruction

where the contrastive term is a symmetric InfoNCE over cross-modal cosine
similarities: same-scene latents are the positives, other scenes in the
batch the negatives. Reconstruction is plain per-pixel MSE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neural import (
    Adam,
    AvgPool2,
    Conv2d,
    NonFiniteLossError,
    Parameter,
    Sequential,
    ShapeMismatchError,
    SiLU,
    UpsampleNearest2,
    derive_rng,
)
from .synthgen import ScenePair

RGB = 0
IR = 1
MODALITY_NAMES = {RGB: "rgb", IR: "ir"}
MODALITY_CHANNELS = {RGB: 3, IR: 1}

DOWNSAMPLE_FACTOR = 4  # two 2x pooling stages
LATENT_CHANNELS = 4


class ChannelMismatchError(ShapeMismatchError):
    pass


class NonDivisibleSizeError(ShapeMismatchError):
    pass


class BatchSizeMismatchError(ValueError):
    pass


class ZeroNormLatentError(ValueError):
    pass


def check_modality(m: int) -> int:
    if m not in (RGB, IR):
        raise ValueError(f"modality must be {RGB} (rgb) or {IR} (ir), got {m}")
    return m


@dataclass
class AutoencoderTrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 2e-3
    temperature: float = 0.07
    contrastive_weight: float = 1.0
    rgb_weight: float = 1.0
    ir_weight: float = 1.0
    width1: int = 16
    width2: int = 32
    seed: int = 42
    dtype: str = "float32"


class Autoencoder:
    """Encoder/decoder stack for one modality.

    Encoder: two (conv3x3 -> silu -> avgpool) stages then a conv to the
    4-channel latent; decoder mirrors it with nearest upsampling.
    """

    def __init__(self, modality, rng, width1=16, width2=32, name=None, dtype=np.float32):
        self.modality = check_modality(modality)
        self.dtype = dtype
        c = MODALITY_CHANNELS[modality]
        name = name or f"ae.{MODALITY_NAMES[modality]}"
        self.encoder = Sequential(
            [
                Conv2d(c, width1, rng, f"{name}.enc.c1", dtype),
                SiLU(),
                AvgPool2(),
                Conv2d(width1, width2, rng, f"{name}.enc.c2", dtype),
                SiLU(),
                AvgPool2(),
                Conv2d(width2, LATENT_CHANNELS, rng, f"{name}.enc.c3", dtype),
            ]
        )
        self.decoder = Sequential(
            [
                Conv2d(LATENT_CHANNELS, width2, rng, f"{name}.dec.c1", dtype),
                SiLU(),
                UpsampleNearest2(),
                Conv2d(width2, width1, rng, f"{name}.dec.c2", dtype),
                SiLU(),
                UpsampleNearest2(),
                Conv2d(width1, c, rng, f"{name}.dec.c3", dtype),
            ]
        )

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def _check_image(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image)
        want = MODALITY_CHANNELS[self.modality]
        if image.ndim != 3 or image.shape[2] != want:
            raise ChannelMismatchError(
                f"modality {MODALITY_NAMES[self.modality]} wants (H, W, {want}), got {image.shape}"
            )
        h, w = image.shape[:2]
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise NonDivisibleSizeError(
                f"image dims must be divisible by {DOWNSAMPLE_FACTOR}, got {h}x{w}"
            )
        return image

    def encode(self, image: np.ndarray) -> np.ndarray:
        """(H, W, c) image in [0, 1] -> (4, H/4, W/4) latent."""
        image = self._check_image(image)
        x = image.transpose(2, 0, 1)[None].astype(self.dtype)
        z, _ = self.encoder.forward(x)
        return z[0]

    def decode(self, z: np.ndarray, clip=True) -> np.ndarray:
        """(4, h, w) latent -> (4h, 4w, c) image clamped to [0, 1]."""
        z = np.asarray(z)
        if z.ndim != 3 or z.shape[0] != LATENT_CHANNELS:
            raise ShapeMismatchError(f"latent must be ({LATENT_CHANNELS}, h, w), got {z.shape}")
        y, _ = self.decoder.forward(z[None].astype(self.dtype))
        img = y[0].transpose(1, 2, 0)
        return np.clip(img, 0.0, 1.0) if clip else img

    def encode_batch(self, x: np.ndarray):
        return self.encoder.forward(x)

    def decode_batch(self, z: np.ndarray):
        return self.decoder.forward(z)


@dataclass
class ModalityAutoencoders:
    """The trained stage-1 parameter pair (one autoencoder per modality)."""

    rgb: Autoencoder
    ir: Autoencoder

    def get(self, m: int) -> Autoencoder:
        return self.rgb if check_modality(m) == RGB else self.ir

    def encode(self, image: np.ndarray, m: int) -> np.ndarray:
        return self.get(m).encode(image)

    def decode(self, z: np.ndarray, m: int) -> np.ndarray:
        return self.get(m).decode(z)

    def parameters(self) -> list[Parameter]:
        return self.rgb.parameters() + self.ir.parameters()

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    @staticmethod
    def init(cfg: AutoencoderTrainConfig) -> "ModalityAutoencoders":
        dtype = np.float64 if cfg.dtype == "float64" else np.float32
        return ModalityAutoencoders(
            rgb=Autoencoder(RGB, derive_rng(cfg.seed, "ae", "rgb"), cfg.width1, cfg.width2, dtype=dtype),
            ir=Autoencoder(IR, derive_rng(cfg.seed, "ae", "ir"), cfg.width1, cfg.width2, dtype=dtype),
        )

    @staticmethod
    def from_arrays(named: dict[str, np.ndarray]) -> "ModalityAutoencoders":
        w1 = named["ae.rgb.enc.c1.w"].shape[0]
        w2 = named["ae.rgb.enc.c2.w"].shape[0]
        rng = derive_rng(0, "ae", "load")  # immediately overwritten
        aes = ModalityAutoencoders(
            rgb=Autoencoder(RGB, rng, w1, w2),
            ir=Autoencoder(IR, rng, w1, w2),
        )
        for p in aes.parameters():
            if p.name not in named:
                raise KeyError(f"weights file missing {p.name}")
            if named[p.name].shape != p.value.shape:
                raise ShapeMismatchError(
                    f"{p.name}: stored shape {named[p.name].shape} != expected {p.value.shape}"
                )
            p.value = named[p.name].astype(p.value.dtype)
            p.grad = np.zeros_like(p.value)
        return aes


def _flatten_latents(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return z.reshape(z.shape[0], -1)


def _normalize_rows(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroNormLatentError("latent with zero norm cannot be cosine-normalized")
    return z / norms, norms


def contrastive_loss_and_grad(z_rgb, z_ir, temperature=0.07):
    """Symmetric InfoNCE loss and its gradients w.r.t. both latent batches.

    Latents are flattened and L2-normalized internally; similarity is cosine
    scaled by 1/temperature. Row-wise and column-wise softmax cross-entropies
    against the diagonal pairing are averaged.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    zr, zi = np.asarray(z_rgb), np.asarray(z_ir)
    if zr.shape[0] != zi.shape[0]:
        raise BatchSizeMismatchError(f"batch sizes differ: {zr.shape[0]} vs {zi.shape[0]}")
    n = zr.shape[0]
    if n < 1:
        raise BatchSizeMismatchError("batches must contain at least one pair")
    fr, fi = _flatten_latents(zr), _flatten_latents(zi)
    u, norm_u = _normalize_rows(fr)
    v, norm_v = _normalize_rows(fi)
    s = (u @ v.T) / temperature

    smax_r = s.max(axis=1, keepdims=True)
    p = np.exp(s - smax_r)
    p /= p.sum(axis=1, keepdims=True)
    lse_r = smax_r[:, 0] + np.log(np.exp(s - smax_r).sum(axis=1))
    smax_c = s.max(axis=0, keepdims=True)
    q = np.exp(s - smax_c)
    q /= q.sum(axis=0, keepdims=True)
    lse_c = smax_c[0] + np.log(np.exp(s - smax_c).sum(axis=0))

    diag = np.diagonal(s)
    loss = 0.5 * (np.mean(lse_r - diag) + np.mean(lse_c - diag))

    eye = np.eye(n, dtype=s.dtype)
    gs = ((p - eye) + (q - eye)) / (2.0 * n * temperature)
    gu = gs @ v
    gv = gs.T @ u
    # back through row normalization: d(z/|z|) = (g - u (g.u)) / |z|
    gzr = (gu - u * np.sum(gu * u, axis=1, keepdims=True)) / norm_u
    gzi = (gv - v * np.sum(gv * v, axis=1, keepdims=True)) / norm_v
    return float(loss), gzr.reshape(zr.shape), gzi.reshape(zi.shape)


def contrastive_loss(z_rgb, z_ir, temperature=0.07) -> float:
    loss, _, _ = contrastive_loss_and_grad(z_rgb, z_ir, temperature)
    return loss


def _stack_images(scenes: list[ScenePair], m: int, dtype) -> np.ndarray:
    key = "rgb" if m == RGB else "ir"
    return np.stack([getattr(s, key).transpose(2, 0, 1) for s in scenes]).astype(dtype)


def standardize_latent_scale(ae: Autoencoder, x_all: np.ndarray) -> float:
    """Rescale the latent space to unit standard deviation over a corpus.

    Folds one scalar into the encoder's output conv and the inverse into the
    decoder's input conv, so reconstructions are unchanged (the first decoder
    layer is linear in its input) while downstream diffusion sees latents at
    the noise scale it mixes in. Returns the applied factor.
    """
    z, _ = ae.encode_batch(x_all)
    std = float(np.std(z))
    if std < 1e-6:
        return 1.0
    scale = 1.0 / std
    out_conv = ae.encoder.layers[-1]
    out_conv.w.value *= scale
    out_conv.b.value *= scale
    in_conv = ae.decoder.layers[0]
    in_conv.w.value /= scale
    return scale


def _epoch_entry(epoch, total, contrastive, rgb, ir):
    return {
        "epoch": epoch,
        "total": total,
        "contrastive": contrastive,
        "rgb": rgb,
        "ir": ir,
    }


def train_autoencoders(
    corpus: list[ScenePair], cfg: AutoencoderTrainConfig
) -> tuple[ModalityAutoencoders, list[dict]]:
    """Stage-1 training; returns the autoencoder pair and a per-epoch loss log.

    Random streams are derived per component ("ae.rgb" init, "ae.ir" init,
    shared batch order), so with contrastive_weight == 0 each modality's
    trajectory is bit-identical to training it alone (the total loss
    decomposes).
    """
    if not corpus:
        raise ValueError("corpus is empty")
    dtype = np.float64 if cfg.dtype == "float64" else np.float32
    aes = ModalityAutoencoders.init(cfg)
    xr_all = _stack_images(corpus, RGB, dtype)
    xi_all = _stack_images(corpus, IR, dtype)
    order = derive_rng(cfg.seed, "ae", "batches")
    opt = Adam(aes.parameters(), lr=cfg.learning_rate)
    m_total = len(corpus)
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        perm = order.permutation(m_total)
        sums = np.zeros(4, dtype=np.float64)
        batches = 0
        for start in range(0, m_total, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            losses = _train_step(aes, opt, xr_all[idx], xi_all[idx], cfg)
            sums += losses
            batches += 1
        avg = sums / batches
        total = float(avg[0])
        if not np.isfinite(total):
            raise NonFiniteLossError(
                f"autoencoder loss non-finite at epoch {epoch}: "
                f"total={avg[0]} contrastive={avg[1]} rgb={avg[2]} ir={avg[3]}"
            )
        log.append(_epoch_entry(epoch, total, float(avg[1]), float(avg[2]), float(avg[3])))
    standardize_latent_scale(aes.rgb, xr_all)
    standardize_latent_scale(aes.ir, xi_all)
    return aes, log


def _train_step(aes, opt, xr, xi, cfg):
    opt.zero_grad()
    zr, enc_r_cache = aes.rgb.encode_batch(xr)
    zi, enc_i_cache = aes.ir.encode_batch(xi)
    yr, dec_r_cache = aes.rgb.decode_batch(zr)
    yi, dec_i_cache = aes.ir.decode_batch(zi)

    err_r = yr - xr
    err_i = yi - xi
    loss_rgb = float(np.mean(err_r**2))
    loss_ir = float(np.mean(err_i**2))

    gz_r = aes.rgb.decoder.backward(cfg.rgb_weight * 2.0 * err_r / err_r.size, dec_r_cache)
    gz_i = aes.ir.decoder.backward(cfg.ir_weight * 2.0 * err_i / err_i.size, dec_i_cache)
    if cfg.contrastive_weight != 0.0:
        loss_c, gzr_c, gzi_c = contrastive_loss_and_grad(zr, zi, cfg.temperature)
        gz_r = gz_r + cfg.contrastive_weight * gzr_c
        gz_i = gz_i + cfg.contrastive_weight * gzi_c
    else:
        loss_c = 0.0
    aes.rgb.encoder.backward(gz_r, enc_r_cache)
    aes.ir.encoder.backward(gz_i, enc_i_cache)
    opt.step()

    total = (
        cfg.contrastive_weight * loss_c
        + cfg.rgb_weight * loss_rgb
        + cfg.ir_weight * loss_ir
    )
    return np.array([total, loss_c, loss_rgb, loss_ir])


def train_single_autoencoder(
    corpus: list[ScenePair], cfg: AutoencoderTrainConfig, modality: int
) -> Autoencoder:
    """Reconstruction-only training of one modality.

    Uses the same derived init and batch-order streams as the joint trainer,
    so the result matches a joint run with contrastive_weight = 0 exactly.
    """
    check_modality(modality)
    dtype = np.float64 if cfg.dtype == "float64" else np.float32
    name = MODALITY_NAMES[modality]
    ae = Autoencoder(
        modality, derive_rng(cfg.seed, "ae", name), cfg.width1, cfg.width2, dtype=dtype
    )
    x_all = _stack_images(corpus, modality, dtype)
    order = derive_rng(cfg.seed, "ae", "batches")
    opt = Adam(ae.parameters(), lr=cfg.learning_rate)
    weight = cfg.rgb_weight if modality == RGB else cfg.ir_weight
    for _ in range(cfg.epochs):
        perm = order.permutation(len(corpus))
        for start in range(0, len(corpus), cfg.batch_size):
            x = x_all[perm[start : start + cfg.batch_size]]
            opt.zero_grad()
            z, enc_cache = ae.encode_batch(x)
            y, dec_cache = ae.decode_batch(z)
            err = y - x
            gz = ae.decoder.backward(weight * 2.0 * err / err.size, dec_cache)
            ae.encoder.backward(gz, enc_cache)
            opt.step()
    standardize_latent_scale(ae, x_all)
    return ae


def alignment_gap(aes: ModalityAutoencoders, scenes: list[ScenePair]):
    """Paired-minus-unpaired mean cosine similarity of cross-modal latents.

    The gap is the alignment oracle: a well-aligned latent space scores
    same-scene pairs above mismatched ones.
    """
    if len(scenes) < 2:
        raise ValueError("need at least two scenes to compare pairings")
    zr = np.stack([aes.encode(s.rgb, RGB).ravel() for s in scenes]).astype(np.float64)
    zi = np.stack([aes.encode(s.ir, IR).ravel() for s in scenes]).astype(np.float64)
    u, _ = _normalize_rows(zr)
    v, _ = _normalize_rows(zi)
    sim = u @ v.T
    n = sim.shape[0]
    paired = float(np.mean(np.diagonal(sim)))
    off = sim[~np.eye(n, dtype=bool)]
    unpaired = float(np.mean(off))
    return paired - unpaired, paired, unpaired
