"""Host model bundles and the model registry.

A host packs everything one editing run needs: the noise predictor, the
image/latent codec, the text encoder, and schedule construction. Hosts are
identified by a model id string so capture stores and color assets can verify
they are replayed against the model that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..layout import ModelLayout, TINY_LAYOUT
from .codec import BoxImageCodec
from .schedule import DDIMSchedule
from .text import StubTextEncoder
from .unet import TinyUNet


@dataclass
class HostModel:
    model_id: str
    layout: ModelLayout
    unet: TinyUNet
    codec: BoxImageCodec
    text: StubTextEncoder
    image_size: int
    latent_size: int = field(init=False)

    def __post_init__(self):
        self.latent_size = self.image_size // self.codec.factor

    def schedule(self, steps: int) -> DDIMSchedule:
        return DDIMSchedule(steps)

    def sample_initial_latent(self, seed: int) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        return torch.randn(
            (self.codec.latent_channels, self.latent_size, self.latent_size), generator=gen
        )


def build_host(model_id: str = "tiny:0", image_size: int = 128) -> HostModel:
    """Build a deterministic desk-scale host. ``tiny:<seed>`` selects the
    weight seed; the same id always yields bit-identical weights."""
    if not model_id.startswith("tiny"):
        raise ValueError(f"unknown buildable model id '{model_id}'")
    seed = int(model_id.split(":", 1)[1]) if ":" in model_id else 0
    text = StubTextEncoder(embed_dim=16, max_tokens=TINY_LAYOUT.context_tokens)
    torch.manual_seed(seed)
    unet = TinyUNet(TINY_LAYOUT, context_dim=text.embed_dim)
    unet.eval()
    for p in unet.parameters():
        p.requires_grad_(False)
    return HostModel(
        model_id=f"tiny:{seed}",
        layout=TINY_LAYOUT,
        unet=unet,
        codec=BoxImageCodec(),
        text=text,
        image_size=image_size,
    )


def load_host(spec: str) -> HostModel:
    """Resolve a model spec string to a host.

    ``tiny`` / ``tiny:<seed>`` build the randomly-initialized desk model.
    ``sd14:<weights_path>`` is reserved for the full-scale host; it needs an
    external weights adapter that this package does not bundle.
    """
    if spec.startswith("tiny"):
        return build_host(spec)
    if spec.startswith("sd14"):
        raise NotImplementedError(
            "the sd14 host requires a local diffusers installation and v1.4 weights; "
            "install the adapter extra and point sd14:<path> at the checkpoint"
        )
    raise ValueError(f"unknown model spec '{spec}'")
