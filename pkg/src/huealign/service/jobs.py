"""FIFO job execution: one worker per device, monotone phase transitions,
every transition timestamped and persisted.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import traceback
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

PHASES = ("queued", "inverting", "masking", "denoising", "done", "failed")
_PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}


class PhaseOrderError(RuntimeError):
    pass


@dataclass
class JobRecord:
    job_id: str
    kind: str
    phase: str = "queued"
    progress: tuple[int, int] | None = None  # (step t, of T)
    error: str | None = None
    result: dict = field(default_factory=dict)
    transitions: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "phase": self.phase,
            "progress": list(self.progress) if self.progress else None,
            "error": self.error,
            "result": self.result,
            "transitions": [[p, t] for p, t in self.transitions],
        }


class JobRunner:
    """Single worker consuming a FIFO queue; phases only ever advance."""

    def __init__(self, jobs_dir: Path):
        self.jobs_dir = Path(jobs_dir)
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._run, name="huealign-jobs", daemon=True)
        self._worker.start()
        self._mark_interrupted()

    def _mark_interrupted(self) -> None:
        """Jobs left unfinished by a previous process cannot be resumed; the
        session store remains authoritative, the jobs are marked failed."""
        for path in self.jobs_dir.glob("*.json"):
            data = json.loads(path.read_text())
            if data["phase"] not in ("done", "failed"):
                data["phase"] = "failed"
                data["error"] = "interrupted by service restart"
                data["transitions"].append(["failed", time.time()])
                path.write_text(json.dumps(data, indent=2))

    def _persist(self, job: JobRecord) -> None:
        (self.jobs_dir / f"{job.job_id}.json").write_text(json.dumps(job.to_dict(), indent=2))

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is not None:
            return job
        path = self.jobs_dir / f"{job_id}.json"
        if not path.exists():
            return None
        data = json.loads(path.read_text())
        return JobRecord(
            job_id=data["job_id"],
            kind=data["kind"],
            phase=data["phase"],
            progress=tuple(data["progress"]) if data["progress"] else None,
            error=data["error"],
            result=data["result"],
            transitions=[(p, t) for p, t in data["transitions"]],
        )

    def advance(self, job: JobRecord, phase: str, progress: tuple[int, int] | None = None) -> None:
        with self._lock:
            if _PHASE_INDEX[phase] < _PHASE_INDEX[job.phase]:
                raise PhaseOrderError(f"phase cannot move {job.phase} -> {phase}")
            if phase != job.phase:
                job.transitions.append((phase, time.time()))
            job.phase = phase
            if progress is not None:
                job.progress = progress
            self._persist(job)

    def progress(self, job: JobRecord, step: int, total: int) -> None:
        with self._lock:
            job.progress = (step, total)
            self._persist(job)

    def submit(self, kind: str, work: Callable[[JobRecord], dict]) -> JobRecord:
        job = JobRecord(job_id=uuid.uuid4().hex[:12], kind=kind)
        job.transitions.append(("queued", time.time()))
        with self._lock:
            self._jobs[job.job_id] = job
            self._persist(job)
        self._queue.put((job, work))
        return job

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                job, work = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                result = work(job)
                with self._lock:
                    job.result.update(result or {})
                self.advance(job, "done")
            except Exception as err:  # surfaced through the job record
                with self._lock:
                    job.error = f"{type(err).__name__}: {err}"
                    job.result.setdefault("traceback", traceback.format_exc(limit=5))
                self.advance(job, "failed")
            finally:
                self._queue.task_done()

    def drain(self, timeout: float = 120.0) -> None:
        """Block until the queue is empty (test support)."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            if self._queue.unfinished_tasks == 0:
                return
            time.sleep(0.01)
        raise TimeoutError("job queue did not drain")

    def shutdown(self) -> None:
        self._stop.set()
        self._worker.join(timeout=5)
