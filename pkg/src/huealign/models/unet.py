"""Tiny time-conditional U-Net with the 3-down / 1-mid / 3-up attention
topology of the SD v1.4 denoiser, at desk-scale widths.

Every basic layer pairs a residual block with a transformer layer holding one
self-attention and one cross-attention module; each attention module carries
its :class:`~huealign.layout.AttentionSite` address and defers to an attached
controller for capture and injection.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..layout import AttentionKind, AttentionSite, ModelLayout, Region

GROUPS = 8


def timestep_embedding(timestep: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = timestep.float()[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class InstrumentedAttention(nn.Module):
    """Multi-head attention that exposes its internals to a controller.

    Hook order matches the points where the editing method intervenes:
    key/value projections may be rescaled before the map is formed, the map
    may be swapped after the softmax, and the values may be realigned just
    before the map-weighted sum.
    """

    def __init__(self, site: AttentionSite, query_dim: int, context_dim: int | None):
        super().__init__()
        self.site = site
        self.heads = site.head_count
        self.head_dim = site.channel_dim
        inner = self.heads * self.head_dim
        self.scale = self.head_dim**-0.5
        kv_dim = context_dim if context_dim is not None else query_dim
        self.to_q = nn.Linear(query_dim, inner, bias=False)
        self.to_k = nn.Linear(kv_dim, inner, bias=False)
        self.to_v = nn.Linear(kv_dim, inner, bias=False)
        self.to_out = nn.Linear(inner, query_dim)
        self.controller = None

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.head_dim).permute(0, 2, 1, 3)

    def _merge(self, x: torch.Tensor) -> torch.Tensor:
        b, h, n, d = x.shape
        return x.permute(0, 2, 1, 3).reshape(b, n, h * d)

    def forward(self, x: torch.Tensor, context: torch.Tensor | None = None) -> torch.Tensor:
        ctx = x if context is None else context
        q = self._split(self.to_q(x))
        k = self._split(self.to_k(ctx))
        v = self._split(self.to_v(ctx))
        ctrl = self.controller
        if ctrl is not None:
            k, v = ctrl.transform_projections(self.site, k, v)
        attn = torch.softmax(q @ k.transpose(-1, -2) * self.scale, dim=-1)
        if ctrl is not None:
            attn = ctrl.transform_map(self.site, attn)
            v = ctrl.transform_values(self.site, v)
            ctrl.observe(self.site, q, k, v, attn)
        return self.to_out(self._merge(attn @ v))


class TransformerLayer(nn.Module):
    """LayerNorm-wrapped self-attention, cross-attention, feed-forward."""

    def __init__(self, channels: int, context_dim: int, self_site: AttentionSite, cross_site: AttentionSite):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.self_attn = InstrumentedAttention(self_site, channels, None)
        self.norm2 = nn.LayerNorm(channels)
        self.cross_attn = InstrumentedAttention(cross_site, channels, context_dim)
        self.norm3 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(nn.Linear(channels, channels * 2), nn.SiLU(), nn.Linear(channels * 2, channels))

    def forward(self, tokens: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        tokens = tokens + self.self_attn(self.norm1(tokens))
        tokens = tokens + self.cross_attn(self.norm2(tokens), context)
        tokens = tokens + self.ff(self.norm3(tokens))
        return tokens


class SpatialTransformer(nn.Module):
    """Flattens a feature map to tokens, runs one transformer layer, folds back."""

    def __init__(self, channels: int, context_dim: int, self_site: AttentionSite, cross_site: AttentionSite):
        super().__init__()
        self.norm = nn.GroupNorm(GROUPS, channels)
        self.proj_in = nn.Conv2d(channels, channels, 1)
        self.layer = TransformerLayer(channels, context_dim, self_site, cross_site)
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        residual = x
        x = self.proj_in(self.norm(x))
        tokens = x.view(b, c, h * w).permute(0, 2, 1)
        tokens = self.layer(tokens, context)
        x = tokens.permute(0, 2, 1).view(b, c, h, w)
        return self.proj_out(x) + residual


class ResBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(GROUPS, in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_channels)
        self.norm2 = nn.GroupNorm(GROUPS, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1) if in_channels != out_channels else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class EncoderBlock(nn.Module):
    def __init__(self, in_channels, channels, layers, time_dim, context_dim, sites):
        super().__init__()
        self.resnets = nn.ModuleList(
            [ResBlock(in_channels if i == 0 else channels, channels, time_dim) for i in range(layers)]
        )
        self.attns = nn.ModuleList(
            [SpatialTransformer(channels, context_dim, *sites[i]) for i in range(layers)]
        )
        self.downsample = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x, temb, context):
        for res, attn in zip(self.resnets, self.attns):
            x = attn(res(x, temb), context)
        return self.downsample(x), x  # (downsampled, skip)


class MidBlock(nn.Module):
    def __init__(self, channels, layers, time_dim, context_dim, sites):
        super().__init__()
        self.res_in = ResBlock(channels, channels, time_dim)
        self.attns = nn.ModuleList(
            [SpatialTransformer(channels, context_dim, *sites[i]) for i in range(layers)]
        )
        self.res_out = ResBlock(channels, channels, time_dim)

    def forward(self, x, temb, context):
        x = self.res_in(x, temb)
        for attn in self.attns:
            x = attn(x, context)
        return self.res_out(x, temb)


class DecoderBlock(nn.Module):
    """Upsamples, concatenates the encoder skip, then runs its basic layers."""

    def __init__(self, in_channels, skip_channels, channels, layers, time_dim, context_dim, sites):
        super().__init__()
        self.upsample = nn.Conv2d(in_channels, in_channels, 3, padding=1)
        self.resnets = nn.ModuleList(
            [
                ResBlock(in_channels + skip_channels if i == 0 else channels, channels, time_dim)
                for i in range(layers)
            ]
        )
        self.attns = nn.ModuleList(
            [SpatialTransformer(channels, context_dim, *sites[i]) for i in range(layers)]
        )

    def forward(self, x, skip, temb, context):
        x = self.upsample(F.interpolate(x, scale_factor=2, mode="nearest"))
        x = torch.cat([x, skip], dim=1)
        for res, attn in zip(self.resnets, self.attns):
            x = attn(res(x, temb), context)
        return x


class TinyUNet(nn.Module):
    """Noise predictor over 4-channel latents, instrumentable per site.

    The output mixes a fixed residual copy of the input with the network
    head. An untrained head alone predicts noise at an arbitrary scale, which
    makes DDIM trajectories blow up; anchoring the prediction to the input
    (the ideal answer at high noise levels) keeps latents O(1) while leaving
    a content-dependent path for the attention layers to steer.
    """

    RESIDUAL_GAIN = 0.8
    HEAD_GAIN = 0.2

    def __init__(self, layout: ModelLayout, context_dim: int, latent_channels: int = 4):
        super().__init__()
        layout.validate()
        if not (len(layout.encoder) == 3 and len(layout.mid) == 1 and len(layout.decoder) == 3):
            raise ValueError("TinyUNet requires the 3-down/1-mid/3-up attention layout")
        self.layout = layout
        time_dim = 64
        self.time_mlp = nn.Sequential(nn.Linear(32, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))

        def sites(region: Region, block_index: int, spec) -> list[tuple[AttentionSite, AttentionSite]]:
            pairs = []
            for layer in range(1, spec.layers + 1):
                mk = lambda kind: AttentionSite(
                    region, block_index, layer, kind, head_count=spec.heads, channel_dim=spec.head_dim()
                )
                pairs.append((mk(AttentionKind.SELF), mk(AttentionKind.CROSS)))
            return pairs

        enc = layout.encoder
        self.conv_in = nn.Conv2d(latent_channels, enc[0].channels, 3, padding=1)
        self.encoder_blocks = nn.ModuleList()
        prev = enc[0].channels
        for i, spec in enumerate(enc, start=1):
            self.encoder_blocks.append(
                EncoderBlock(prev, spec.channels, spec.layers, time_dim, context_dim, sites(Region.ENCODER, i, spec))
            )
            prev = spec.channels

        mid_spec = layout.mid[0]
        if mid_spec.channels != prev:
            raise ValueError("mid block channels must match last encoder block")
        self.mid_block = MidBlock(prev, mid_spec.layers, time_dim, context_dim, sites(Region.MID, 1, mid_spec))

        self.decoder_blocks = nn.ModuleList()
        skip_channels = [spec.channels for spec in enc][::-1]  # deepest skip first
        for i, spec in enumerate(layout.decoder, start=1):
            self.decoder_blocks.append(
                DecoderBlock(
                    prev,
                    skip_channels[i - 1],
                    spec.channels,
                    spec.layers,
                    time_dim,
                    context_dim,
                    sites(Region.DECODER, i, spec),
                )
            )
            prev = spec.channels

        self.norm_out = nn.GroupNorm(GROUPS, prev)
        self.conv_out = nn.Conv2d(prev, latent_channels, 3, padding=1)

    def attention_modules(self) -> list[InstrumentedAttention]:
        return [m for m in self.modules() if isinstance(m, InstrumentedAttention)]

    def forward(self, latent: torch.Tensor, timestep: int, context: torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor([timestep], dtype=torch.float32)
        temb = self.time_mlp(timestep_embedding(t, 32))
        x = self.conv_in(latent)
        skips = []
        for block in self.encoder_blocks:
            x, skip = block(x, temb, context)
            skips.append(skip)
        x = self.mid_block(x, temb, context)
        for block in self.decoder_blocks:
            x = block(x, skips.pop(), temb, context)
        head = self.conv_out(F.silu(self.norm_out(x)))
        return self.RESIDUAL_GAIN * latent + self.HEAD_GAIN * head
