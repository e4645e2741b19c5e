"""Service-side state: the host model, the color-asset registry, the
directory-backed session store, and the content-addressed artifact store.

Session records are plain JSON documents; heavyweight runtime state (latents,
captures) lives in memory and is rebuilt deterministically on demand after a
restart.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..assets import AssetCache, ReferenceColorAsset
from ..imaging import png_bytes, to_tensor
from ..masking import HttpSegmenter, ObjectMask, Segmenter
from ..models.host import HostModel, load_host
from ..pipeline import (
    EditConfig,
    EditSession,
    GeneratedSource,
    RealSource,
)
from .jobs import JobRunner
from .settings import ServiceSettings


class NotFound(KeyError):
    pass


class Conflict(RuntimeError):
    pass


@dataclass
class ColorRecord:
    color_id: str
    content_hash: str
    status: str  # "extracting" | "ready" | "failed"
    job_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "color_id": self.color_id,
            "content_hash": self.content_hash,
            "status": self.status,
            "job_id": self.job_id,
        }


class ArtifactStore:
    """Content-addressed immutable PNG store."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / f"{digest}.png"
        if not path.exists():
            path.write_bytes(data)
        return digest

    def put_image(self, image) -> str:
        return self.put(png_bytes(image))

    def put_mask(self, mask: np.ndarray) -> str:
        buf = io.BytesIO()
        Image.fromarray(mask.astype(np.uint8) * 255).convert("1").save(buf, format="PNG")
        return self.put(buf.getvalue())

    def get(self, digest: str) -> bytes:
        path = self.root / f"{digest}.png"
        if not path.exists():
            raise NotFound(digest)
        return path.read_bytes()


class ServiceState:
    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        root = Path(settings.store_root)
        root.mkdir(parents=True, exist_ok=True)
        self.root = root
        self.host: HostModel = load_host(settings.model_spec)
        self.assets = AssetCache(root / "colors")
        self.artifacts = ArtifactStore(root / "artifacts")
        self.jobs = JobRunner(root / "jobs")
        self.sessions_dir = root / "sessions"
        self.sessions_dir.mkdir(exist_ok=True)
        self.color_records: dict[str, ColorRecord] = {}
        self._runtime_sessions: dict[str, EditSession] = {}
        self._lock = threading.Lock()
        self.segmenter: Segmenter | None = (
            HttpSegmenter(settings.segmenter_url) if settings.segmenter_url else None
        )
        self._load_color_records()

    # -- colors -----------------------------------------------------------

    def _load_color_records(self) -> None:
        for color_id in self.assets.list_ids():
            meta = json.loads((self.assets.path_for(color_id) / "meta.json").read_text())
            self.color_records[color_id] = ColorRecord(
                color_id=color_id, content_hash=meta["content_hash"], status="ready"
            )

    def register_color(self, color_id: str, image_bytes: bytes) -> tuple[ColorRecord, bool]:
        """Idempotent registration; returns (record, created). Registering the
        same bytes twice is a cache hit; same id with different bytes is a
        conflict."""
        from ..assets import content_hash as asset_hash

        image = to_tensor(Image.open(io.BytesIO(image_bytes)))
        config = self.settings.default_config
        new_hash = asset_hash(image, self.host.model_id, config.steps, config.guidance_scale)
        with self._lock:
            existing = self.color_records.get(color_id)
            if existing is not None:
                if existing.content_hash != new_hash:
                    raise Conflict(
                        f"color '{color_id}' already registered with hash "
                        f"{existing.content_hash}, upload hashes to {new_hash}"
                    )
                return existing, False
            record = ColorRecord(color_id=color_id, content_hash=new_hash, status="extracting")
            self.color_records[color_id] = record

        def work(job):
            try:
                self.jobs.advance(job, "inverting")
                self.assets.extract(
                    self.host,
                    image,
                    color_id,
                    config.steps,
                    config.guidance_scale,
                    settings=config.inversion_settings(),
                )
                record.status = "ready"
                return {"color_id": color_id}
            except Exception:
                record.status = "failed"
                raise

        job = self.jobs.submit("extract-color", work)
        record.job_id = job.job_id
        return record, True

    def color_asset(self, color_id: str) -> ReferenceColorAsset:
        record = self.color_records.get(color_id)
        if record is None:
            raise NotFound(f"color '{color_id}' not registered")
        if record.status != "ready":
            raise Conflict(f"color '{color_id}' is {record.status} (job {record.job_id})")
        return self.assets.load(color_id)

    # -- sessions -----------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.sessions_dir / session_id / "record.json"

    def _write_session(self, record: dict) -> None:
        path = self._session_path(record["session_id"])
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(record, indent=2, sort_keys=True))

    def read_session(self, session_id: str) -> dict:
        path = self._session_path(session_id)
        if not path.exists():
            raise NotFound(f"session '{session_id}' not found")
        return json.loads(path.read_text())

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.sessions_dir.iterdir() if (p / "record.json").exists())

    def create_session(self, source: dict, config: EditConfig) -> dict:
        import uuid

        session_id = uuid.uuid4().hex[:12]
        record = {
            "session_id": session_id,
            "source": {k: v for k, v in source.items() if k != "image_bytes"},
            "config": _config_dict(config),
            "status": "preparing",
            "mask_candidates": [],
            "turns": [],
            "created_at": time.time(),
        }
        if source["kind"] == "real":
            record["source"]["image_artifact"] = self.artifacts.put(source["image_bytes"])
        self._write_session(record)

        def work(job):
            self.jobs.advance(job, "inverting" if source["kind"] == "real" else "denoising")
            session = self._build_runtime(record, config)
            session.prepare()
            with self._lock:
                self._runtime_sessions[session_id] = session
            record["status"] = "ready"
            record["source_artifact"] = self.artifacts.put_image(session.source_image)
            self._write_session(record)
            return {"session_id": session_id}

        job = self.jobs.submit("prepare-session", work)
        record["prep_job"] = job.job_id
        self._write_session(record)
        return record

    def _build_runtime(self, record: dict, config: EditConfig) -> EditSession:
        source = record["source"]
        if source["kind"] == "generated":
            src = GeneratedSource(seed=int(source["seed"]), prompt=source["prompt"])
        else:
            data = self.artifacts.get(source["image_artifact"])
            image = to_tensor(Image.open(io.BytesIO(data)))
            src = RealSource(image=image, prompt=source["prompt"])
        return EditSession(self.host, src, config, segmenter=self.segmenter)

    def runtime_session(self, session_id: str) -> EditSession:
        record = self.read_session(session_id)
        if record["status"] != "ready":
            raise Conflict(f"session '{session_id}' is {record['status']}")
        with self._lock:
            session = self._runtime_sessions.get(session_id)
        if session is None:
            # restarted service: rebuild deterministically from the record
            config = EditConfig(**record["config"])
            session = self._build_runtime(record, config)
            session.prepare()
            with self._lock:
                self._runtime_sessions[session_id] = session
        return session

    def shutdown(self) -> None:
        self.jobs.shutdown()


def _config_dict(config: EditConfig) -> dict:
    from dataclasses import asdict

    return asdict(config)
