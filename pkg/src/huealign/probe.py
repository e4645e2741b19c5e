"""Attention diagnostics: per-site heatmaps of a token's cross-attention,
key/value amplification probes, and attention-mass leakage reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .arrayio import write_f32
from .imaging import resize_mask
from .instrument import (
    AttentionController,
    CapturePlan,
    CaptureStore,
    TokenScale,
)
from .layout import AttentionKind, AttentionSite, enumerate_sites
from .models.host import HostModel
from .models.text import TokenNotFoundError
from .sampling import ddim_denoise

HEATMAP_SIZE = 512


class ProbeError(RuntimeError):
    pass


@dataclass
class HeatmapGrid:
    """Per-site intensity grids for one token, upsampled to a common
    resolution and min-max normalized to [0, 1] per grid."""

    token: str
    reduction: str  # "mean" | "per_timestep"
    grids: dict[str, np.ndarray]  # site key -> (H, W) for mean reduction
    per_step: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        items: list[tuple[str, np.ndarray]] = []
        if self.reduction == "mean":
            items = list(self.grids.items())
        else:
            items = [
                (f"{key}_t{t}", grid)
                for key, by_step in self.per_step.items()
                for t, grid in sorted(by_step.items())
            ]
        for name, grid in sorted(items):
            write_f32(directory / f"{name}.f32", grid)
            _save_heatmap_png(grid, directory / f"{name}.png")
            entries.append(name)
        index = {"token": self.token, "reduction": self.reduction, "grids": entries}
        (directory / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))


def _save_heatmap_png(grid: np.ndarray, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, grid, cmap="viridis", vmin=0.0, vmax=1.0)


def _normalize(grid: np.ndarray) -> np.ndarray:
    span = grid.max() - grid.min()
    if span <= 0:
        return np.zeros_like(grid)
    return (grid - grid.min()) / span


def _upsample(grid: np.ndarray, size: int) -> np.ndarray:
    tensor = torch.from_numpy(grid.astype(np.float32))[None, None]
    big = F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
    return big[0, 0].numpy()


def _token_grid(rec_map: torch.Tensor, token_index: int) -> np.ndarray:
    column = rec_map[:, :, token_index].mean(dim=0).numpy()  # mean over heads
    side = int(round(len(column) ** 0.5))
    return column.reshape(side, side)


def _resolve_token(tokens: list[str], token: str) -> int:
    target = token.lower()
    if target not in tokens:
        raise TokenNotFoundError(token, [t for t in tokens if not t.startswith("<")])
    return tokens.index(target)


def aggregate_cross_maps(
    captures: CaptureStore,
    tokens: list[str],
    token: str,
    mode: str = "mean",
    size: int = HEATMAP_SIZE,
) -> HeatmapGrid:
    """Token heatmaps per cross site: mean over timesteps, or one grid per
    captured step."""
    if mode not in ("mean", "per_timestep"):
        raise ValueError(f"unknown reduction mode '{mode}'")
    index = _resolve_token(tokens, token)
    by_site: dict[str, dict[int, np.ndarray]] = {}
    for (key, t), rec in captures.items():
        if rec.site.kind is not AttentionKind.CROSS:
            continue
        by_site.setdefault(key, {})[t] = _token_grid(rec.map, index)
    if not by_site:
        raise ProbeError("captures hold no cross-attention records")
    if mode == "mean":
        grids = {
            key: _normalize(_upsample(np.mean(list(steps.values()), axis=0), size))
            for key, steps in by_site.items()
        }
        return HeatmapGrid(token=token, reduction="mean", grids=grids)
    per_step = {
        key: {t: _normalize(_upsample(grid, size)) for t, grid in steps.items()}
        for key, steps in by_site.items()
    }
    return HeatmapGrid(token=token, reduction="per_timestep", grids={}, per_step=per_step)


@dataclass
class AmplificationResult:
    image: torch.Tensor
    heatmap: HeatmapGrid
    trajectory: list[torch.Tensor]


def amplification_probe(
    host: HostModel,
    prompt: str,
    token: str,
    factor: float,
    which: str,
    seed: int = 0,
    steps: int = 50,
    guidance_scale: float = 7.5,
    decoder_only: bool = False,
    edit_hook=None,
) -> AmplificationResult:
    """Generate with the token's K or V rows scaled by ``factor`` at cross
    sites, returning the image plus the token's heatmap from the same run.

    ``edit_hook(controller)`` runs before sampling so an editing method can
    arm its own injections on the same run and be probed under amplification.
    """
    tokens = host.text.tokenize(prompt)
    index = _resolve_token(tokens, token)
    sites = [s for s in enumerate_sites(host.layout) if s.kind is AttentionKind.CROSS]
    if decoder_only:
        sites = [s for s in sites if s.is_decoder_cross]
    store = CaptureStore(host.model_id, host.layout, steps)
    controller = AttentionController(
        capture_plan=CapturePlan.of(sites),
        capture_into=store,
        token_scale=TokenScale(which=which, token_index=index, factor=factor, sites=frozenset(sites)),
    )
    if edit_hook is not None:
        edit_hook(controller)
    z_T = host.sample_initial_latent(seed)
    trajectory = ddim_denoise(host, z_T, prompt, steps, guidance_scale, controller=controller)
    store.freeze()
    heatmap = aggregate_cross_maps(store, tokens, token, mode="mean")
    return AmplificationResult(
        image=host.codec.decode(trajectory[-1]), heatmap=heatmap, trajectory=trajectory
    )


@dataclass
class LeakageRow:
    site: str
    timestep: int
    inside: float
    outside: float


@dataclass
class LeakageReport:
    token: str
    rows: list[LeakageRow]

    def to_json(self) -> str:
        return json.dumps(
            {
                "token": self.token,
                "rows": [
                    {"site": r.site, "timestep": r.timestep, "inside": r.inside, "outside": r.outside}
                    for r in self.rows
                ],
            },
            indent=2,
            sort_keys=True,
        )


def leakage_report(
    captures: CaptureStore,
    tokens: list[str],
    color_token: str,
    object_mask: np.ndarray,
) -> LeakageReport:
    """Fraction of the token's attention mass falling inside vs outside the
    object mask, per cross site and timestep. The two fractions are a
    probability split: non-negative, summing to one."""
    index = _resolve_token(tokens, color_token)
    rows: list[LeakageRow] = []
    for (key, t), rec in sorted(captures.items()):
        if rec.site.kind is not AttentionKind.CROSS:
            continue
        grid = _token_grid(rec.map, index)
        total = float(grid.sum())
        if total <= 0:
            inside = 0.0
        else:
            mask = resize_mask(object_mask, grid.shape[0])
            inside = float(grid[mask].sum()) / total
        rows.append(LeakageRow(site=key, timestep=t, inside=inside, outside=1.0 - inside))
    if not rows:
        raise ProbeError("captures hold no cross-attention records")
    return LeakageReport(token=color_token, rows=rows)
