"""The quantitative battery for color-editing runs.

Structure and semantics:

- ``DS``: embedding cosine similarity computed on *grayscale* versions of the
  source and edited images, decoupling structure from color.
- ``SSIM``: structural similarity on the raw image pair.
- ``CS``: image/text similarity (x100) of the edited image against the
  color-augmented description (e.g. "a photo of a red squirrel").
- ``L1_hue`` / ``L1_hsv``: per-pixel L1 against the pure-color reference in
  HSV, averaged over the object mask; hue distance is circular on the 8-bit
  scale (360 degrees -> 255 units).
- ``LPIPS_bg`` / ``LPIPS_obj``: perceptual distance restricted to the
  background / object region by blanking the other region to mid-gray in both
  images.

Embedding, text-image, and perceptual providers are pluggable; their names
are recorded in every report. When a provider is absent the metric is marked
absent (None), never zero.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
from matplotlib.colors import rgb_to_hsv
from PIL import Image
from skimage.metrics import structural_similarity

HUE_SCALE = 255.0  # 360 degrees map to 255 units
MID_GRAY = 128

PURE_COLORS: dict[str, tuple[int, int, int]] = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "gray": (128, 128, 128),
    "red": (255, 0, 0),
    "yellow": (255, 255, 0),
    "blue": (0, 0, 255),
    "green": (0, 255, 0),
}


class ProviderError(RuntimeError):
    pass


class ImageEmbedder(Protocol):
    name: str

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Unit-norm embedding of an (H, W) or (H, W, 3) uint8 image."""
        ...


class TextImageScorer(Protocol):
    name: str

    def score(self, image: np.ndarray, text: str) -> float:
        """Image/text similarity on the x100 cosine scale."""
        ...


class PerceptualDistance(Protocol):
    name: str

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """Non-negative perceptual distance; zero for identical images."""
        ...


# -- desk-scale reference providers -----------------------------------------


class PatchEmbedder:
    """Deterministic stand-in embedder: bilinear 16x16 thumbnail, centered and
    unit-normalized. Smooth under small image perturbations."""

    name = "patch16-v1"

    def __init__(self, side: int = 16):
        self.side = side

    def embed(self, image: np.ndarray) -> np.ndarray:
        img = Image.fromarray(image)
        small = np.asarray(img.resize((self.side, self.side), Image.BILINEAR), dtype=np.float64)
        vec = small.reshape(-1)
        vec = vec - vec.mean()
        norm = np.linalg.norm(vec)
        if norm == 0:
            return np.zeros_like(vec)
        return vec / norm


class HashTextImageScorer:
    """Deterministic stand-in for an image/text scorer: hashed bag-of-words
    text vector against a thumbnail image vector, x100 cosine."""

    name = "hashbow-v1"

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._embedder = PatchEmbedder(side=8)

    def _text_vector(self, text: str) -> np.ndarray:
        import hashlib

        vec = np.zeros(self.dim)
        for word in text.lower().split():
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec += rng.standard_normal(self.dim)
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec

    def score(self, image: np.ndarray, text: str) -> float:
        img_vec = self._embedder.embed(image)[: self.dim]
        img_vec = img_vec / (np.linalg.norm(img_vec) or 1.0)
        return float(100.0 * np.dot(img_vec, self._text_vector(text)[: len(img_vec)]))


class RandomFeaturePerceptual:
    """Fixed-weight random conv features; L2 between normalized feature maps
    averaged over three scales. Zero iff inputs are identical, symmetric."""

    name = "randfeat-v1"

    def __init__(self, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        self.filters = [
            torch.randn(8, 3, 3, 3, generator=gen) / 3.0,
            torch.randn(16, 8, 3, 3, generator=gen) / (8 * 3),
            torch.randn(16, 16, 3, 3, generator=gen) / (16 * 3),
        ]

    def _features(self, image: np.ndarray) -> list[torch.Tensor]:
        x = torch.from_numpy(image.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1).unsqueeze(0)
        feats = []
        for w in self.filters:
            x = torch.conv2d(x, w, stride=2, padding=1)
            x = torch.tanh(x)
            feats.append(x / (x.norm() + 1e-8))
        return feats

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        if a.shape != b.shape:
            raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
        if np.array_equal(a, b):
            return 0.0
        fa, fb = self._features(a), self._features(b)
        return float(np.mean([(x - y).pow(2).sum().item() for x, y in zip(fa, fb)]))


@dataclass
class MetricProviders:
    embedder: ImageEmbedder | None = None
    scorer: TextImageScorer | None = None
    perceptual: PerceptualDistance | None = None

    @classmethod
    def desk(cls) -> "MetricProviders":
        return cls(
            embedder=PatchEmbedder(),
            scorer=HashTextImageScorer(),
            perceptual=RandomFeaturePerceptual(),
        )

    def versions(self) -> dict[str, str | None]:
        return {
            "embedder": getattr(self.embedder, "name", None),
            "scorer": getattr(self.scorer, "name", None),
            "perceptual": getattr(self.perceptual, "name", None),
        }


# -- primitives ---------------------------------------------------------------


def grayscale(image: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma, uint8."""
    lum = image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
    return np.round(lum).astype(np.uint8)


def pure_color_image(color: str | tuple[int, int, int], shape: tuple[int, int]) -> np.ndarray:
    rgb = PURE_COLORS[color] if isinstance(color, str) else color
    out = np.zeros((shape[0], shape[1], 3), dtype=np.uint8)
    out[:] = rgb
    return out


def rgb_to_hsv255(image: np.ndarray) -> np.ndarray:
    """uint8 RGB -> float HSV with every channel on the 0..255 scale."""
    hsv = rgb_to_hsv(image.astype(np.float64) / 255.0)
    return hsv * HUE_SCALE


def circular_hue_distance(h1: np.ndarray, h2: np.ndarray, scale: float = HUE_SCALE) -> np.ndarray:
    delta = np.abs(np.asarray(h1, dtype=np.float64) - np.asarray(h2, dtype=np.float64))
    return np.minimum(delta, scale - delta)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def augment_prompt(prompt: str, subject: str, color: str) -> str:
    """Insert the color word before the subject: 'a photo of a squirrel' ->
    'a photo of a red squirrel'. Falls back to appending when the subject
    does not occur verbatim."""
    if subject and subject in prompt:
        return prompt.replace(subject, f"{color} {subject}", 1)
    return f"{prompt} {color}".strip()


# -- metric operations ---------------------------------------------------------


def compute_similarity(
    source: np.ndarray,
    target: np.ndarray,
    prompt_with_color: str | None,
    providers: MetricProviders,
) -> tuple[float | None, float, float | None]:
    """(DS, SSIM, CS); DS on grayscale pairs, CS against the color-augmented
    description. Absent providers yield None entries."""
    if source.shape != target.shape:
        raise ValueError(f"image shapes differ: {source.shape} vs {target.shape}")
    ds = None
    if providers.embedder is not None:
        a = providers.embedder.embed(grayscale(source))
        b = providers.embedder.embed(grayscale(target))
        ds = cosine(a, b)
    ssim = float(structural_similarity(source, target, channel_axis=-1, data_range=255))
    cs = None
    if providers.scorer is not None and prompt_with_color:
        cs = providers.scorer.score(target, prompt_with_color)
    return ds, ssim, cs


def compute_color_losses(
    target: np.ndarray, mask: np.ndarray, color: str | tuple[int, int, int]
) -> tuple[float, float]:
    """(L1_hue, L1_hsv) between the edited object and the pure-color
    reference, averaged over masked pixels."""
    if not mask.any():
        raise ValueError("color losses need a non-empty object mask")
    reference = pure_color_image(color, target.shape[:2])
    hsv_t = rgb_to_hsv255(target)
    hsv_r = rgb_to_hsv255(reference)
    hue = circular_hue_distance(hsv_t[..., 0], hsv_r[..., 0])
    sat = np.abs(hsv_t[..., 1] - hsv_r[..., 1])
    val = np.abs(hsv_t[..., 2] - hsv_r[..., 2])
    l1_hue = float(hue[mask].mean())
    l1_hsv = float((hue[mask].mean() + sat[mask].mean() + val[mask].mean()) / 3.0)
    return l1_hue, l1_hsv


def linear_hue_loss(target: np.ndarray, mask: np.ndarray, color) -> float:
    """Non-circular hue L1, kept for strict-reproduction comparisons."""
    if not mask.any():
        raise ValueError("hue loss needs a non-empty object mask")
    reference = pure_color_image(color, target.shape[:2])
    delta = np.abs(rgb_to_hsv255(target)[..., 0] - rgb_to_hsv255(reference)[..., 0])
    return float(delta[mask].mean())


def _blank_region(image: np.ndarray, region: np.ndarray) -> np.ndarray:
    out = image.copy()
    out[region] = MID_GRAY
    return out


def compute_lpips_regions(
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    perceptual: PerceptualDistance | None,
) -> tuple[float | None, float | None]:
    """(LPIPS_bg, LPIPS_obj). The opposite region is blanked to mid-gray in
    both images rather than cropped, preserving spatial alignment."""
    if perceptual is None:
        return None, None
    bg = perceptual.distance(_blank_region(source, mask), _blank_region(target, mask))
    obj = perceptual.distance(_blank_region(source, ~mask), _blank_region(target, ~mask))
    return bg, obj


# -- benchmark harness ----------------------------------------------------------


@dataclass
class MetricReport:
    sample_id: str
    ds: float | None = None
    ssim: float | None = None
    cs: float | None = None
    l1_hue_obj: float | None = None
    l1_hsv_obj: float | None = None
    lpips_bg: float | None = None
    lpips_obj: float | None = None
    provider_versions: dict = field(default_factory=dict)

    COLUMNS = ("ds", "ssim", "cs", "l1_hue_obj", "l1_hsv_obj", "lpips_bg", "lpips_obj")

    def row(self) -> dict:
        return {"id": self.sample_id, **{c: getattr(self, c) for c in self.COLUMNS}}


class BenchmarkMismatchError(RuntimeError):
    def __init__(self, missing: list[str], total: int):
        super().__init__(
            f"{len(missing)}/{total} samples missing from the run directory: "
            + ", ".join(missing[:10])
            + (", ..." if len(missing) > 10 else "")
        )
        self.missing = missing


@dataclass
class BenchmarkResult:
    reports: list[MetricReport]
    missing: list[str]
    means: dict[str, float | None]
    provider_versions: dict

    def to_json(self) -> str:
        payload = {
            "provider_versions": self.provider_versions,
            "means": self.means,
            "missing": self.missing,
            "samples": [r.row() for r in self.reports],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = ["id", *MetricReport.COLUMNS]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for report in self.reports:
            row = report.row()
            writer.writerow(
                {k: ("" if row[k] is None else f"{row[k]:.6f}" if k != "id" else row[k]) for k in fields}
            )
        mean_row = {"id": "mean"}
        for c in MetricReport.COLUMNS:
            v = self.means.get(c)
            mean_row[c] = "" if v is None else f"{v:.6f}"
        writer.writerow(mean_row)
        return buf.getvalue()


def _mean_of_present(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def evaluate_sample(
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    color: str | tuple[int, int, int] | None,
    prompt: str | None,
    subject: str | None,
    providers: MetricProviders,
    sample_id: str = "",
    gt_target: np.ndarray | None = None,
) -> MetricReport:
    prompt_with_color = None
    if prompt and subject and isinstance(color, str):
        prompt_with_color = augment_prompt(prompt, subject, color)
    ds, ssim, cs = compute_similarity(source, target, prompt_with_color, providers)
    l1_hue = l1_hsv = None
    if color is not None and mask.any():
        l1_hue, l1_hsv = compute_color_losses(target, mask, color)
    lpips_bg, _ = compute_lpips_regions(source, target, mask, providers.perceptual)
    lpips_obj = None
    if providers.perceptual is not None and gt_target is not None:
        _, lpips_obj = compute_lpips_regions(gt_target, target, mask, providers.perceptual)
    return MetricReport(
        sample_id=sample_id,
        ds=ds,
        ssim=ssim,
        cs=cs,
        l1_hue_obj=l1_hue,
        l1_hsv_obj=l1_hsv,
        lpips_bg=lpips_bg,
        lpips_obj=lpips_obj,
        provider_versions=providers.versions(),
    )


def evaluate_benchmark(
    run_dir: Path | str,
    manifest: "Manifest",
    providers: MetricProviders | None = None,
    missing_tolerance: float = 0.05,
) -> BenchmarkResult:
    """Score every manifest record against ``run_dir/{id}.png``.

    Missing outputs are listed in the result; when the missing fraction
    reaches ``missing_tolerance`` the evaluation fails loudly instead.
    """
    from .bench import Manifest  # local import; bench has no metrics dependency

    if not isinstance(manifest, Manifest):
        raise TypeError(f"expected a Manifest, got {type(manifest).__name__}")
    providers = providers or MetricProviders.desk()
    run_dir = Path(run_dir)
    reports: list[MetricReport] = []
    missing: list[str] = []
    for record in manifest.records:
        target_path = run_dir / f"{record.id}.png"
        if not target_path.exists():
            missing.append(record.id)
            continue
        source = np.asarray(Image.open(manifest.resolve(record.source_path)).convert("RGB"))
        target = np.asarray(Image.open(target_path).convert("RGB"))
        if record.mask_path:
            mask = np.asarray(Image.open(manifest.resolve(record.mask_path)).convert("1"), dtype=bool)
        else:
            mask = np.ones(source.shape[:2], dtype=bool)
        gt = None
        if record.target_path:
            gt = np.asarray(Image.open(manifest.resolve(record.target_path)).convert("RGB"))
        reports.append(
            evaluate_sample(
                source,
                target,
                mask,
                record.color or None,
                record.prompt or None,
                record.subject or None,
                providers,
                sample_id=record.id,
                gt_target=gt,
            )
        )
    total = len(manifest.records)
    if total and len(missing) / total >= missing_tolerance:
        raise BenchmarkMismatchError(missing, total)
    means = {
        c: _mean_of_present([getattr(r, c) for r in reports]) for c in MetricReport.COLUMNS
    }
    return BenchmarkResult(
        reports=reports,
        missing=missing,
        means=means,
        provider_versions=providers.versions(),
    )
