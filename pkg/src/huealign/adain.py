"""Channel-statistics alignment of attention Value matrices.

``adain(x, y)`` rescales ``x`` so that every channel's mean and standard
deviation match those of ``y``. Statistics are taken per attention head, per
channel, across the token axis; the token counts of ``x`` and ``y`` may
differ, only the trailing channel width must agree.
"""

from __future__ import annotations

import torch

__all__ = ["adain", "channel_stats", "VARIANCE_FLOOR"]

# Clamp applied to sigma(x) before division. Padding tokens produce
# near-constant value rows whose variance underflows otherwise.
VARIANCE_FLOOR = 1e-5


def channel_stats(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel mean and population standard deviation over the token axis.

    ``x`` has shape ``(..., tokens, channels)``; leading axes (batch, heads)
    are preserved so statistics stay head-local.
    """
    if x.dim() < 2:
        raise ValueError(f"expected at least 2 dims (tokens, channels), got shape {tuple(x.shape)}")
    mean = x.mean(dim=-2, keepdim=True)
    std = x.std(dim=-2, keepdim=True, correction=0)
    return mean, std


def adain(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Shift ``x``'s per-channel statistics to those of ``y``.

    Returns ``sigma(y) * (x - mu(x)) / sigma(x) + mu(y)`` with ``sigma(x)``
    floored at :data:`VARIANCE_FLOOR`. Channels that are constant in ``x``
    therefore map to ``mu(y)`` instead of blowing up.
    """
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(
            f"channel width mismatch: x has {x.shape[-1]}, y has {y.shape[-1]}"
        )
    mu_x, sigma_x = channel_stats(x)
    mu_y, sigma_y = channel_stats(y)
    sigma_x = sigma_x.clamp_min(VARIANCE_FLOOR)
    return sigma_y * (x - mu_x) / sigma_x + mu_y
