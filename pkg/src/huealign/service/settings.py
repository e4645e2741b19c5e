"""Service configuration, environment-variable backed."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..pipeline import EditConfig


@dataclass
class ServiceSettings:
    model_spec: str = "tiny:0"
    store_root: Path = Path("huealign-store")
    segmenter_url: str | None = None
    device: str = "cpu"
    default_config: EditConfig = field(default_factory=EditConfig)

    @classmethod
    def from_env(cls) -> "ServiceSettings":
        return cls(
            model_spec=os.environ.get("HUEALIGN_MODEL", "tiny:0"),
            store_root=Path(os.environ.get("HUEALIGN_STORE", "huealign-store")),
            segmenter_url=os.environ.get("HUEALIGN_SEGMENTER_URL") or None,
            device=os.environ.get("HUEALIGN_DEVICE", "cpu"),
        )
