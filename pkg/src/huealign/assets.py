"""Reference-color assets: the inverted initial latent of a color image plus
its cross-attention Value matrices, extracted once and reused across edits.

Directory layout (format_version 1)::

    <cache_root>/<color_id>/
      meta.json            {color_id, model_id, T, guidance, content_hash, format_version}
      latent_zT.f32
      values/{region}_{block}_{layer}_t{t}.f32
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import torch

from .arrayio import read_f32, write_f32
from .imaging import png_bytes
from .instrument import (
    AttentionController,
    CapturePlan,
    CaptureStore,
    MissingCaptureError,
)
from .inversion import InversionSettings, invert_image, reconstruct
from .layout import AttentionKind, AttentionSite, enumerate_sites
from .models.host import HostModel

FORMAT_VERSION = 1

# Inversion prompt for reference color images: they carry no subject to
# describe, and only their Values and initial latent are consumed downstream.
REFERENCE_PROMPT = ""


class AssetConflictError(RuntimeError):
    def __init__(self, color_id: str, existing_hash: str, new_hash: str):
        super().__init__(
            f"color asset '{color_id}' already exists with content hash {existing_hash}; "
            f"refusing to overwrite with different content {new_hash}"
        )
        self.existing_hash = existing_hash
        self.new_hash = new_hash


@dataclass
class ReferenceColorAsset:
    color_id: str
    model_id: str
    steps: int
    guidance_scale: float
    content_hash: str
    z_T: torch.Tensor
    values: dict[tuple[str, int], torch.Tensor]  # (site key, step) -> (heads, tokens, d_k)

    def value_for(self, site: AttentionSite, timestep: int) -> torch.Tensor:
        try:
            return self.values[(site.key, timestep)]
        except KeyError:
            raise MissingCaptureError(site, timestep) from None

    def as_store(self, host: HostModel) -> "AssetValueStore":
        return AssetValueStore(self, host)

    def validate_coverage(self, host: HostModel) -> None:
        """Every cross site must carry a Value matrix for every step."""
        missing = []
        for site in enumerate_sites(host.layout):
            if site.kind is not AttentionKind.CROSS:
                continue
            for t in range(1, self.steps + 1):
                if (site.key, t) not in self.values:
                    missing.append(f"{site.key} t{t}")
        if missing:
            raise ValueError(f"asset '{self.color_id}' missing {len(missing)} values: {missing[:5]}")

    # -- persistence -----------------------------------------------------

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        (directory / "values").mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": FORMAT_VERSION,
            "color_id": self.color_id,
            "model_id": self.model_id,
            "T": self.steps,
            "guidance": self.guidance_scale,
            "content_hash": self.content_hash,
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        write_f32(directory / "latent_zT.f32", self.z_T.numpy())
        for (key, t), tensor in sorted(self.values.items()):
            site = AttentionSite.from_key(key)
            name = f"{site.region.value}_{site.block_index}_{site.layer_index}_t{t}.f32"
            write_f32(directory / "values" / name, tensor.numpy())

    @classmethod
    def load(cls, directory: Path | str) -> "ReferenceColorAsset":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported asset format_version {meta['format_version']}")
        values: dict[tuple[str, int], torch.Tensor] = {}
        for path in sorted((directory / "values").glob("*.f32")):
            stem, t_part = path.stem.rsplit("_t", 1)
            region, block, layer = stem.rsplit("_", 2)
            key = f"{region}_{block}_{layer}_cross"
            values[(key, int(t_part))] = torch.from_numpy(read_f32(path))
        return cls(
            color_id=meta["color_id"],
            model_id=meta["model_id"],
            steps=meta["T"],
            guidance_scale=meta["guidance"],
            content_hash=meta["content_hash"],
            z_T=torch.from_numpy(read_f32(directory / "latent_zT.f32")),
            values=values,
        )


@dataclass
class _ValueRecord:
    values: torch.Tensor


class AssetValueStore:
    """Adapter exposing an asset's Values through the capture-store lookup
    surface used by injection plans."""

    def __init__(self, asset: ReferenceColorAsset, host: HostModel):
        self.asset = asset
        self._sites = {s.key: s for s in enumerate_sites(host.layout)}

    def has(self, site: AttentionSite, timestep: int) -> bool:
        return (site.key, timestep) in self.asset.values

    def get(self, site: AttentionSite, timestep: int) -> _ValueRecord:
        return _ValueRecord(self.asset.value_for(site, timestep))


def content_hash(image: torch.Tensor, model_id: str, steps: int, guidance_scale: float) -> str:
    digest = hashlib.sha256()
    digest.update(png_bytes(image))
    digest.update(f"{model_id}|{steps}|{guidance_scale}|{REFERENCE_PROMPT}".encode())
    return digest.hexdigest()


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0


class AssetCache:
    """Directory-backed, write-once color asset cache.

    Extraction publishes atomically (build in a temp dir, then rename), so
    concurrent writers of distinct color ids never observe partial assets.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.stats = CacheStats()

    def path_for(self, color_id: str) -> Path:
        if not color_id or "/" in color_id or color_id.startswith("."):
            raise ValueError(f"invalid color_id '{color_id}'")
        return self.root / color_id

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "meta.json").exists())

    def load(self, color_id: str) -> ReferenceColorAsset:
        return ReferenceColorAsset.load(self.path_for(color_id))

    def extract(
        self,
        host: HostModel,
        color_image: torch.Tensor,
        color_id: str,
        steps: int,
        guidance_scale: float,
        settings: InversionSettings | None = None,
    ) -> ReferenceColorAsset:
        """Invert the color image and capture its Value matrices at all cross
        sites and steps. Repeated extraction of identical content is a cache
        hit; same id with different content is refused."""
        target = self.path_for(color_id)
        new_hash = content_hash(color_image, host.model_id, steps, guidance_scale)
        if (target / "meta.json").exists():
            existing = json.loads((target / "meta.json").read_text())
            if existing["content_hash"] != new_hash:
                raise AssetConflictError(color_id, existing["content_hash"], new_hash)
            self.stats.hits += 1
            return ReferenceColorAsset.load(target)
        self.stats.misses += 1
        asset = extract_reference_asset(
            host, color_image, color_id, steps, guidance_scale, settings=settings
        )
        tmp = Path(tempfile.mkdtemp(prefix=f".{color_id}-", dir=self.root))
        try:
            asset.save(tmp)
            os.rename(tmp, target)
        except OSError:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return asset


def extract_reference_asset(
    host: HostModel,
    color_image: torch.Tensor,
    color_id: str,
    steps: int,
    guidance_scale: float,
    settings: InversionSettings | None = None,
) -> ReferenceColorAsset:
    """One inversion plus one captured reconstruction pass."""
    trajectory, schedule = invert_image(
        host, color_image, REFERENCE_PROMPT, steps, guidance_scale, settings=settings
    )
    cross_sites = [s for s in enumerate_sites(host.layout) if s.kind is AttentionKind.CROSS]
    store = CaptureStore(host.model_id, host.layout, steps)
    controller = AttentionController(capture_plan=CapturePlan.of(cross_sites), capture_into=store)
    reconstruct(host, trajectory, schedule, controller=controller)
    store.freeze()
    values = {
        (site_key, t): rec.values for (site_key, t), rec in store.items()
    }
    return ReferenceColorAsset(
        color_id=color_id,
        model_id=host.model_id,
        steps=steps,
        guidance_scale=guidance_scale,
        content_hash=content_hash(color_image, host.model_id, steps, guidance_scale),
        z_T=trajectory.z_T.clone(),
        values=values,
    )
