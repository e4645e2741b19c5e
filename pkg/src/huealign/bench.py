"""Benchmark manifests: building the generated evaluation set and validating
the real-image benchmark download.

Canonical real-image layout (the download ships no schema, this package
defines the interchange format)::

    <root>/
      index.json                 {"format_version": 1, "sources": [...]}
      source/{name}.png
      targets/{color}/{name}.png   one per color in COLOR_NAMES
      masks/{name}.png

Manifests are JSON documents with deterministic serialization, so identical
inputs yield identical file hashes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bench_data import COLOR_NAMES, GENERATED_SUBJECTS, PROMPT_TEMPLATES

MANIFEST_VERSION = 1

EXPECTED_REAL_SOURCES = 406
EXPECTED_REAL_PAIRS = 2842


class DatasetError(RuntimeError):
    def __init__(self, problems: list[str]):
        preview = "\n  - ".join(problems[:20])
        more = f"\n    (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        super().__init__(f"{len(problems)} dataset problems:\n  - {preview}{more}")
        self.problems = problems


@dataclass(frozen=True)
class SampleRecord:
    id: str
    subject: str
    prompt: str
    color: str
    source_path: str
    mask_path: str = ""
    target_path: str = ""  # ground-truth edited image, when the set ships one
    seed: int | None = None


@dataclass
class Manifest:
    kind: str  # "generated" | "colorbench"
    records: list[SampleRecord]
    root: Path | None = None
    format_version: int = MANIFEST_VERSION

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        if path.is_absolute() or self.root is None:
            return path
        return self.root / path

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "kind": self.kind,
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.write_text(self.to_json())

    @classmethod
    def load(cls, path: Path | str) -> "Manifest":
        path = Path(path)
        payload = json.loads(path.read_text())
        if payload.get("format_version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest format_version {payload.get('format_version')}")
        records = [SampleRecord(**r) for r in payload["records"]]
        return cls(kind=payload["kind"], records=records, root=path.parent)


def expand_prompts(subject: str) -> list[str]:
    """The seven template expansions for one subject, template order
    preserved, substitution verbatim (no article fixing)."""
    if not subject:
        raise ValueError("subject must be non-empty")
    return [template.format(subject) for template in PROMPT_TEMPLATES]


@dataclass(frozen=True)
class SeedPolicy:
    """Deterministic seed stream for source-image generation: one seed per
    (subject, template) drawn in roster order from a fixed PRNG."""

    base_seed: int = 0

    def seeds(self, count: int) -> list[int]:
        rng = np.random.default_rng(self.base_seed)
        return [int(s) for s in rng.integers(0, 2**31 - 1, size=count)]


def build_generated_manifest(
    subjects: tuple[str, ...] | list[str] | None = None,
    templates: tuple[str, ...] | None = None,
    colors: tuple[str, ...] | None = None,
    seed_policy: SeedPolicy | None = None,
) -> Manifest:
    """Every (subject, template) source crossed with every target color.

    Full rosters give 1,120 source prompts and 7,840 edit tasks.
    """
    subjects = tuple(subjects) if subjects is not None else GENERATED_SUBJECTS
    templates = tuple(templates) if templates is not None else PROMPT_TEMPLATES
    colors = tuple(colors) if colors is not None else COLOR_NAMES
    seen = set()
    for subject in subjects:
        if not subject:
            raise ValueError("empty subject in roster")
        if subject in seen:
            raise ValueError(f"duplicate subject '{subject}'")
        seen.add(subject)
    policy = seed_policy or SeedPolicy()
    seeds = policy.seeds(len(subjects) * len(templates))
    records: list[SampleRecord] = []
    source_index = 0
    for subject in subjects:
        for t_index, template in enumerate(templates, start=1):
            prompt = template.format(subject)
            seed = seeds[source_index]
            source_name = f"{subject}--t{t_index}"
            source_index += 1
            for color in colors:
                records.append(
                    SampleRecord(
                        id=f"{source_name}--{color}",
                        subject=subject,
                        prompt=prompt,
                        color=color,
                        source_path=f"sources/{source_name}.png",
                        mask_path=f"masks/{source_name}.png",
                        seed=seed,
                    )
                )
    return Manifest(kind="generated", records=records)


def write_colorbench_scaffold(
    root: Path | str,
    names: list[str] | None = None,
    image_bytes: bytes | None = None,
) -> list[str]:
    """Materialize a directory in the canonical real-image layout.

    With defaults this produces the full 406-source shape from the subject
    roster (at most five numbered images per subject), every file holding the
    same placeholder PNG. Dataset producers replace the placeholders; the
    validator then checks their work.
    """
    from .bench_data import COLORBENCH_SUBJECTS

    root = Path(root)
    if names is None:
        names = []
        per_subject = _spread(EXPECTED_REAL_SOURCES, len(COLORBENCH_SUBJECTS))
        for subject, count in zip(COLORBENCH_SUBJECTS, per_subject):
            names.extend(f"{subject}_{k}" for k in range(1, count + 1))
    if image_bytes is None:
        image_bytes = _placeholder_png()
    (root / "source").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    for color in COLOR_NAMES:
        (root / "targets" / color).mkdir(parents=True, exist_ok=True)
    for name in names:
        (root / "source" / f"{name}.png").write_bytes(image_bytes)
        (root / "masks" / f"{name}.png").write_bytes(image_bytes)
        for color in COLOR_NAMES:
            (root / "targets" / color / f"{name}.png").write_bytes(image_bytes)
    (root / "index.json").write_text(
        json.dumps({"format_version": 1, "sources": sorted(names)}, indent=2)
    )
    return names


def _spread(total: int, buckets: int) -> list[int]:
    base, extra = divmod(total, buckets)
    return [base + (1 if i < extra else 0) for i in range(buckets)]


def _placeholder_png() -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", (2, 2), (127, 127, 127)).save(buf, format="PNG")
    return buf.getvalue()


def load_colorbench(root: Path | str) -> Manifest:
    """Validate a real-image benchmark directory and produce its manifest.

    Never repairs: every deviation (missing file, count mismatch, index
    disagreement) is collected and reported in one error.
    """
    root = Path(root)
    problems: list[str] = []
    source_dir = root / "source"
    sources = sorted(p.stem for p in source_dir.glob("*.png")) if source_dir.is_dir() else []
    if not sources:
        raise DatasetError([f"0 sources found under {source_dir}"])

    index_path = root / "index.json"
    if index_path.exists():
        try:
            index = json.loads(index_path.read_text())
            declared = sorted(index.get("sources", []))
            if declared and declared != sources:
                extra = sorted(set(sources) - set(declared))
                gone = sorted(set(declared) - set(sources))
                if extra:
                    problems.append(f"sources on disk but not in index.json: {extra[:5]}")
                if gone:
                    problems.append(f"sources in index.json but not on disk: {gone[:5]}")
        except json.JSONDecodeError as err:
            problems.append(f"index.json unreadable: {err}")
    else:
        problems.append("index.json missing")

    if len(sources) != EXPECTED_REAL_SOURCES:
        problems.append(f"expected {EXPECTED_REAL_SOURCES} sources, found {len(sources)}")

    records: list[SampleRecord] = []
    pair_count = 0
    for name in sources:
        mask = root / "masks" / f"{name}.png"
        if not mask.exists():
            problems.append(f"mask missing for '{name}'")
        subject = name.split("_")[0]
        for color in COLOR_NAMES:
            target = root / "targets" / color / f"{name}.png"
            if not target.exists():
                problems.append(f"target '{color}' missing for '{name}'")
                continue
            pair_count += 1
            records.append(
                SampleRecord(
                    id=f"{name}--{color}",
                    subject=subject,
                    prompt="",
                    color=color,
                    source_path=f"source/{name}.png",
                    mask_path=f"masks/{name}.png",
                    target_path=f"targets/{color}/{name}.png",
                )
            )
    if pair_count != EXPECTED_REAL_PAIRS:
        problems.append(f"expected {EXPECTED_REAL_PAIRS} source-target pairs, found {pair_count}")
    if problems:
        raise DatasetError(problems)
    return Manifest(kind="colorbench", records=records, root=root)
