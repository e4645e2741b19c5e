"""Training-free image-guided object color editing for latent diffusion
models: reference-color Value alignment in cross-attention, self-attention map
replacement, latent blending, masked background preservation, and the
evaluation harness around them.
"""

from .adain import adain
from .layout import (
    AttentionKind,
    AttentionSite,
    ModelLayout,
    Region,
    SD14_LAYOUT,
    TINY_LAYOUT,
    enumerate_sites,
)

__version__ = "0.1.0"

__all__ = [
    "adain",
    "AttentionKind",
    "AttentionSite",
    "ModelLayout",
    "Region",
    "SD14_LAYOUT",
    "TINY_LAYOUT",
    "enumerate_sites",
    "__version__",
]
