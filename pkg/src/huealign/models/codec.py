"""Image <-> latent codecs.

The desk-scale codec is a fixed box-filter pair: encode averages 8x8 pixel
blocks per RGB channel into the first three latent channels (the fourth is
zero), decode nearest-upsamples them back. It is deterministic, mean-exact on
flat regions, and needs no weights, which keeps image-space oracles
meaningful on the tiny host.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


class BoxImageCodec:
    """8x downsampling codec mapping RGB [-1, 1] images to 4-channel latents."""

    factor = 8
    latent_channels = 4

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 3 or image.shape[0] != 3:
            raise ValueError(f"expected image (3, H, W), got {tuple(image.shape)}")
        h, w = image.shape[1], image.shape[2]
        if h % self.factor or w % self.factor:
            raise ValueError(f"image sides must be divisible by {self.factor}, got {h}x{w}")
        rgb = F.avg_pool2d(image.unsqueeze(0), self.factor).squeeze(0)
        pad = torch.zeros(1, rgb.shape[1], rgb.shape[2], dtype=rgb.dtype)
        return torch.cat([rgb, pad], dim=0)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.dim() != 3 or latent.shape[0] != self.latent_channels:
            raise ValueError(f"expected latent ({self.latent_channels}, h, w), got {tuple(latent.shape)}")
        rgb = latent[:3].unsqueeze(0)
        image = F.interpolate(rgb, scale_factor=self.factor, mode="nearest").squeeze(0)
        return image.clamp(-1.0, 1.0)
