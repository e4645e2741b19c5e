"""Image loading, conversion, and mask raster helpers."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image


def to_tensor(image: Image.Image | np.ndarray) -> torch.Tensor:
    """RGB image -> float tensor (3, H, W) in [-1, 1]."""
    if isinstance(image, Image.Image):
        image = np.asarray(image.convert("RGB"))
    arr = image.astype(np.float32) / 255.0 * 2.0 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """Float tensor (3, H, W) in [-1, 1] -> uint8 (H, W, 3)."""
    arr = image.detach().clamp(-1, 1).permute(1, 2, 0).numpy()
    return np.round((arr + 1.0) / 2.0 * 255.0).astype(np.uint8)


def load_image(path: Path | str) -> torch.Tensor:
    return to_tensor(Image.open(path))


def save_image(image: torch.Tensor | np.ndarray, path: Path | str) -> None:
    arr = to_uint8(image) if isinstance(image, torch.Tensor) else image
    Image.fromarray(arr).save(path)


def png_bytes(image: torch.Tensor | np.ndarray) -> bytes:
    arr = to_uint8(image) if isinstance(image, torch.Tensor) else image
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def save_mask(mask: np.ndarray, path: Path | str) -> None:
    """Persist a binary mask as a 1-bit PNG."""
    Image.fromarray((mask.astype(np.uint8) * 255)).convert("1").save(path)


def load_mask(path: Path | str) -> np.ndarray:
    return np.asarray(Image.open(path).convert("1"), dtype=bool)


def mask_to_latent(mask: np.ndarray, latent_size: int) -> torch.Tensor:
    """Nearest-neighbor downsample of a binary mask to the latent grid,
    binarized at 0.5; boolean tensor (1, h, w) for broadcasting."""
    img = Image.fromarray(mask.astype(np.uint8) * 255)
    small = img.resize((latent_size, latent_size), Image.NEAREST)
    grid = np.asarray(small, dtype=np.float32) / 255.0
    return torch.from_numpy(grid >= 0.5).unsqueeze(0)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    img = Image.fromarray(mask.astype(np.uint8) * 255)
    return np.asarray(img.resize((size, size), Image.NEAREST), dtype=np.uint8) > 127


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio between two uint8 images, in dB."""
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))
