"""Declared attention layout of a host denoising U-Net.

The editing engine never discovers a model's structure at runtime; every
supported model ships a :class:`ModelLayout` that declares its attention
blocks up front, and all instrumentation is addressed against that
declaration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

__all__ = [
    "Region",
    "AttentionKind",
    "AttentionSite",
    "AttentionBlockSpec",
    "ModelLayout",
    "LayoutError",
    "enumerate_sites",
    "decoder_cross_sites",
    "SD14_LAYOUT",
    "TINY_LAYOUT",
]


class LayoutError(ValueError):
    """A model description is structurally invalid."""


class Region(str, Enum):
    ENCODER = "encoder"
    MID = "mid"
    DECODER = "decoder"


class AttentionKind(str, Enum):
    SELF = "self"
    CROSS = "cross"


_REGION_ORDER = {Region.ENCODER: 0, Region.MID: 1, Region.DECODER: 2}


@dataclass(frozen=True)
class AttentionSite:
    """Address of one attention layer within a host model.

    ``(region, block_index, layer_index, kind)`` is the identity; head count
    and per-head channel width are carried along for convenience but do not
    participate in equality (they are determined by the address within one
    model).
    """

    region: Region
    block_index: int  # 1-based within the region
    layer_index: int  # 1-based within the block
    kind: AttentionKind
    head_count: int = field(compare=False, default=1)
    channel_dim: int = field(compare=False, default=1)  # per-head width d_k

    @property
    def key(self) -> str:
        return f"{self.region.value}_{self.block_index}_{self.layer_index}_{self.kind.value}"

    @property
    def is_decoder_cross(self) -> bool:
        return self.region is Region.DECODER and self.kind is AttentionKind.CROSS

    def sort_key(self) -> tuple:
        return (
            _REGION_ORDER[self.region],
            self.block_index,
            self.layer_index,
            0 if self.kind is AttentionKind.SELF else 1,
        )

    @classmethod
    def from_key(cls, key: str) -> "AttentionSite":
        region, block, layer, kind = key.rsplit("_", 3)
        return cls(Region(region), int(block), int(layer), AttentionKind(kind))

    def __repr__(self) -> str:  # compact, used in error messages
        return f"<{self.key} h={self.head_count} dk={self.channel_dim}>"


@dataclass(frozen=True)
class AttentionBlockSpec:
    """One attention-bearing block: how many basic layers it stacks and the
    attention geometry shared by those layers."""

    layers: int
    heads: int
    channels: int  # total attention width; per-head d_k = channels // heads

    def head_dim(self) -> int:
        return self.channels // self.heads


@dataclass(frozen=True)
class ModelLayout:
    """Declared block structure of a host U-Net.

    Each basic layer contributes one self-attention and one cross-attention
    site. Blocks without attention (plain down/up blocks) are simply not
    listed here.
    """

    name: str
    encoder: tuple[AttentionBlockSpec, ...]
    mid: tuple[AttentionBlockSpec, ...]
    decoder: tuple[AttentionBlockSpec, ...]
    context_tokens: int  # text sequence length seen by cross attention

    def blocks(self, region: Region) -> tuple[AttentionBlockSpec, ...]:
        return {Region.ENCODER: self.encoder, Region.MID: self.mid, Region.DECODER: self.decoder}[region]

    def validate(self) -> None:
        for region in Region:
            blocks = self.blocks(region)
            for i, spec in enumerate(blocks, start=1):
                where = f"{region.value} block {i}"
                if spec.layers < 1:
                    raise LayoutError(f"{where}: layers must be >= 1, got {spec.layers}")
                if spec.heads < 1:
                    raise LayoutError(f"{where}: heads must be >= 1, got {spec.heads}")
                if spec.channels < 1:
                    raise LayoutError(f"{where}: channels must be >= 1, got {spec.channels}")
                if spec.channels % spec.heads != 0:
                    raise LayoutError(
                        f"{where}: channels ({spec.channels}) not divisible by heads ({spec.heads})"
                    )
        if self.context_tokens < 1:
            raise LayoutError(f"context_tokens must be >= 1, got {self.context_tokens}")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelLayout":
        def region_blocks(region: str) -> tuple[AttentionBlockSpec, ...]:
            if region not in data:
                raise LayoutError(f"model description is missing region '{region}'")
            blocks = []
            for i, raw in enumerate(data[region], start=1):
                for req in ("layers", "heads", "channels"):
                    if req not in raw:
                        raise LayoutError(f"{region} block {i} is missing field '{req}'")
                blocks.append(AttentionBlockSpec(raw["layers"], raw["heads"], raw["channels"]))
            return tuple(blocks)

        if "context_tokens" not in data:
            raise LayoutError("model description is missing field 'context_tokens'")
        layout = cls(
            name=data.get("name", "unnamed"),
            encoder=region_blocks("encoder"),
            mid=region_blocks("mid"),
            decoder=region_blocks("decoder"),
            context_tokens=data["context_tokens"],
        )
        layout.validate()
        return layout

    def to_dict(self) -> dict:
        def dump(blocks: Iterable[AttentionBlockSpec]) -> list[dict]:
            return [{"layers": b.layers, "heads": b.heads, "channels": b.channels} for b in blocks]

        return {
            "name": self.name,
            "encoder": dump(self.encoder),
            "mid": dump(self.mid),
            "decoder": dump(self.decoder),
            "context_tokens": self.context_tokens,
        }


def enumerate_sites(layout: ModelLayout) -> list[AttentionSite]:
    """Every attention site of ``layout``, in deterministic traversal order:
    encoder -> mid -> decoder, ascending block then layer, self before cross.
    """
    layout.validate()
    sites: list[AttentionSite] = []
    for region in (Region.ENCODER, Region.MID, Region.DECODER):
        for block_index, spec in enumerate(layout.blocks(region), start=1):
            for layer_index in range(1, spec.layers + 1):
                for kind in (AttentionKind.SELF, AttentionKind.CROSS):
                    sites.append(
                        AttentionSite(
                            region=region,
                            block_index=block_index,
                            layer_index=layer_index,
                            kind=kind,
                            head_count=spec.heads,
                            channel_dim=spec.head_dim(),
                        )
                    )
    return sites


def decoder_cross_sites(layout: ModelLayout) -> list[AttentionSite]:
    return [s for s in enumerate_sites(layout) if s.is_decoder_cross]


# Stable Diffusion v1.4 U-Net: three attention-bearing encoder blocks with two
# basic layers each, one mid block, three decoder blocks with three layers
# each. 16 self + 16 cross sites in total.
SD14_LAYOUT = ModelLayout(
    name="sd-v1.4",
    encoder=(
        AttentionBlockSpec(layers=2, heads=8, channels=320),
        AttentionBlockSpec(layers=2, heads=8, channels=640),
        AttentionBlockSpec(layers=2, heads=8, channels=1280),
    ),
    mid=(AttentionBlockSpec(layers=1, heads=8, channels=1280),),
    decoder=(
        AttentionBlockSpec(layers=3, heads=8, channels=1280),
        AttentionBlockSpec(layers=3, heads=8, channels=640),
        AttentionBlockSpec(layers=3, heads=8, channels=320),
    ),
    context_tokens=77,
)

# Desk-scale twin of the same topology with small widths; used by the tiny
# randomly-initialized host model that backs the test suite.
TINY_LAYOUT = ModelLayout(
    name="tiny",
    encoder=(
        AttentionBlockSpec(layers=2, heads=2, channels=16),
        AttentionBlockSpec(layers=2, heads=2, channels=32),
        AttentionBlockSpec(layers=2, heads=2, channels=32),
    ),
    mid=(AttentionBlockSpec(layers=1, heads=2, channels=32),),
    decoder=(
        AttentionBlockSpec(layers=3, heads=2, channels=32),
        AttentionBlockSpec(layers=3, heads=2, channels=32),
        AttentionBlockSpec(layers=3, heads=2, channels=16),
    ),
    context_tokens=8,
)
