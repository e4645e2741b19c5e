"""Object mask production: cross-attention evidence plus a point-promptable
segmenter, with candidate selection by area agreement.

The attention-derived mask localizes the object and provides the point
prompt; the segmenter supplies sharp candidate masks; the candidate whose
area best agrees with the attention mask wins.
"""

from __future__ import annotations

import base64
import io
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from PIL import Image

from .imaging import resize_mask
from .instrument import CaptureStore
from .layout import AttentionKind, Region
from .models.text import TokenNotFoundError


class MaskGenerationError(RuntimeError):
    def __init__(self, message: str, candidates: list[np.ndarray] | None = None):
        super().__init__(message)
        self.candidates = candidates or []


class SegmenterUnavailable(RuntimeError):
    pass


@dataclass
class CrossAttnMask:
    """Thresholded mean cross-attention map of one token, taken from the
    first decoder block only (its maps localize the object most cleanly)."""

    grid: np.ndarray  # bool, at the block's native map resolution
    token: str
    threshold: float

    @property
    def resolution(self) -> int:
        return self.grid.shape[0]

    def is_empty(self) -> bool:
        return not bool(self.grid.any())

    def at_resolution(self, size: int) -> np.ndarray:
        return resize_mask(self.grid, size)


@dataclass
class CandidateMaskSet:
    masks: list[np.ndarray]  # bool, image resolution
    point: tuple[int, int]  # the prompt that produced them

    def __post_init__(self):
        empty = [i for i, m in enumerate(self.masks) if not m.any()]
        if empty:
            raise ValueError(f"candidates {empty} are empty")


@dataclass
class ObjectMask:
    mask: np.ndarray  # bool, image resolution
    candidate_index: int  # -1 for the attention-only fallback
    score: float
    degraded: bool = False  # set when the segmenter was unavailable
    notes: list[str] = field(default_factory=list)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


class Segmenter(Protocol):
    def propose(self, image: np.ndarray, point: tuple[int, int]) -> list[np.ndarray]:
        """Candidate binary masks (image resolution) for a point prompt."""
        ...


def _resolve_token(tokens: list[str], token: str) -> int:
    target = token.lower()
    if target not in tokens:
        available = [t for t in tokens if not t.startswith("<")]
        raise TokenNotFoundError(token, available)
    return tokens.index(target)


def object_mask_from_attention(
    captures: CaptureStore,
    tokens: list[str],
    object_token: str,
    threshold: float = 0.4,
) -> CrossAttnMask:
    """Mean first-decoder-block cross map of the token across heads, layers,
    and timesteps, min-max normalized and thresholded.

    A constant map has no object to find: the normalization guard maps it to
    an all-zero grid instead of dividing by zero.
    """
    index = _resolve_token(tokens, object_token)
    grids = []
    for (_, _), rec in captures.items():
        site = rec.site
        if site.region is not Region.DECODER or site.block_index != 1:
            continue
        if site.kind is not AttentionKind.CROSS:
            continue
        column = rec.map[:, :, index].mean(dim=0).numpy()  # (spatial,)
        side = int(round(len(column) ** 0.5))
        grids.append(column.reshape(side, side))
    if not grids:
        raise MaskGenerationError(
            "captures contain no first-decoder-block cross-attention maps"
        )
    mean = np.mean(grids, axis=0)
    span = mean.max() - mean.min()
    if span <= 0:
        normalized = np.zeros_like(mean)
    else:
        normalized = (mean - mean.min()) / span
    return CrossAttnMask(grid=normalized >= threshold, token=object_token, threshold=threshold)


def centroid(mask: np.ndarray, image_size: int | None = None) -> tuple[int, int]:
    """Integer (x, y) centroid of the foreground, optionally rescaled from the
    mask's grid to ``image_size``."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("cannot take the centroid of an empty mask")
    cx, cy = float(xs.mean()), float(ys.mean())
    if image_size is not None and mask.shape[0] != image_size:
        scale = image_size / mask.shape[0]
        cx = (cx + 0.5) * scale - 0.5
        cy = (cy + 0.5) * scale - 0.5
    return int(round(cx)), int(round(cy))


def mask_area(mask: np.ndarray, mode: str = "nonzero") -> int:
    """Foreground pixel count. ``mode='zero'`` counts background instead (a
    literal reading of the selection rule kept behind this flag; see README)."""
    if mode == "nonzero":
        return int(np.count_nonzero(mask))
    if mode == "zero":
        return int(mask.size - np.count_nonzero(mask))
    raise ValueError(f"unknown area mode '{mode}'")


def selection_score(cross_area: int, candidate_area: int) -> float:
    """| 1 - A_cross / A_candidate |; zero iff the areas agree exactly."""
    return abs(1.0 - cross_area / candidate_area)


def select_mask(
    candidates: CandidateMaskSet,
    cross_mask: np.ndarray,
    area_mode: str = "nonzero",
) -> ObjectMask:
    """Candidate with the area closest to the attention mask's; ties break to
    the lowest index, zero-area candidates are excluded with a warning."""
    cross_area = mask_area(cross_mask, area_mode)
    best_index, best_score = -1, float("inf")
    for i, mask in enumerate(candidates.masks):
        area = mask_area(mask, area_mode)
        if area == 0:
            warnings.warn(f"candidate {i} has zero area under mode '{area_mode}'; excluded")
            continue
        score = selection_score(cross_area, area)
        if score < best_score:
            best_index, best_score = i, score
    if best_index < 0:
        raise MaskGenerationError("no candidate with positive area", candidates.masks)
    return ObjectMask(
        mask=candidates.masks[best_index].copy(),
        candidate_index=best_index,
        score=best_score,
    )


def make_object_mask(
    image: np.ndarray,
    captures: CaptureStore,
    tokens: list[str],
    object_token: str,
    segmenter: Segmenter | None,
    threshold: float = 0.4,
    area_mode: str = "nonzero",
) -> ObjectMask:
    """Full mask pipeline: attention mask -> centroid point prompt ->
    segmenter candidates -> area-agreement selection.

    Falls back to the upsampled attention mask (flagged ``degraded``) when no
    segmenter is configured or it cannot be reached.
    """
    image_size = image.shape[0]
    cross = object_mask_from_attention(captures, tokens, object_token, threshold)
    if cross.is_empty():
        raise MaskGenerationError(
            f"attention mask for token '{object_token}' is empty at threshold {threshold}"
        )
    cross_full = cross.at_resolution(image_size)
    point = centroid(cross.grid, image_size=image_size)

    def fallback(note: str) -> ObjectMask:
        return ObjectMask(
            mask=cross_full,
            candidate_index=-1,
            score=float("nan"),
            degraded=True,
            notes=[note],
        )

    if segmenter is None:
        return fallback("no segmenter configured; attention-mask fallback")
    try:
        masks = segmenter.propose(image, point)
    except SegmenterUnavailable as err:
        return fallback(f"segmenter unavailable ({err}); attention-mask fallback")
    if not masks:
        return fallback("segmenter returned no candidates; attention-mask fallback")
    candidates = CandidateMaskSet(masks=masks, point=point)
    return select_mask(candidates, cross_full, area_mode=area_mode)


class HttpSegmenter:
    """Client for a point-promptable segmentation service.

    Protocol: ``POST {endpoint}/segment`` with ``{"image": <base64 PNG>,
    "point": [x, y]}``; response ``{"masks": [<base64 PNG>, ...]}`` with
    white foreground. Any transport or protocol failure surfaces as
    :class:`SegmenterUnavailable` so callers can fall back.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def propose(self, image: np.ndarray, point: tuple[int, int]) -> list[np.ndarray]:
        import httpx

        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="PNG")
        payload = {
            "image": base64.b64encode(buf.getvalue()).decode("ascii"),
            "point": [int(point[0]), int(point[1])],
        }
        try:
            response = httpx.post(f"{self.endpoint}/segment", json=payload, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
        except Exception as err:  # transport, HTTP status, or JSON failure
            raise SegmenterUnavailable(str(err)) from err
        masks = []
        for encoded in body.get("masks", []):
            raw = base64.b64decode(encoded)
            mask = np.asarray(Image.open(io.BytesIO(raw)).convert("1"), dtype=bool)
            masks.append(mask)
        return masks
