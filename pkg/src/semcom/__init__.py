"""Segmentation-map semantic communication with generative reconstruction.

Sender: fuse-ready segmentation map -> one-hot -> bit-pack -> DEFLATE ->
framed bytes. Receiver: frame -> map -> conditioned latent diffusion ->
per-modality decoder -> RGB / infrared images.
"""

__version__ = "0.1.0"
