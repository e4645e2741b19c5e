"""HTTP surface of the editing engine.

Endpoints: POST/GET /colors, POST /sessions, GET /sessions/{id},
POST /sessions/{id}/mask, POST /sessions/{id}/turns, GET /jobs/{id},
GET /artifacts/{hash}, POST /eval. Every response that reflects pipeline work
carries the config snapshot that produced it.
"""

from __future__ import annotations

import dataclasses
import io
import json
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Request, Response, UploadFile
from PIL import Image
from pydantic import BaseModel, Field

from ..bench import Manifest
from ..imaging import to_uint8
from ..masking import CandidateMaskSet, ObjectMask, select_mask, object_mask_from_attention
from ..metrics import MetricProviders, evaluate_benchmark
from ..pipeline import ConfigError, EditConfig, edit_object_color
from .settings import ServiceSettings
from .state import Conflict, NotFound, ServiceState


class SourceBody(BaseModel):
    kind: str
    prompt: str
    seed: int | None = None


class SessionBody(BaseModel):
    source: SourceBody
    config: dict = Field(default_factory=dict)


class MaskBody(BaseModel):
    point: tuple[int, int] | None = None
    object_token: str | None = None


class TurnBody(BaseModel):
    color_id: str
    object_token: str
    mask_artifact: str | None = None
    overrides: dict = Field(default_factory=dict)
    store_trajectory: bool = False


class EvalBody(BaseModel):
    manifest_path: str
    run_dir: str
    out_dir: str


def _build_config(state: ServiceState, overrides: dict) -> EditConfig:
    base = dataclasses.asdict(state.settings.default_config)
    unknown = [k for k in overrides if k not in base]
    if unknown:
        raise HTTPException(422, detail=[{"field": k, "error": "unknown field"} for k in unknown])
    base.update(overrides)
    try:
        return EditConfig(**base).validate()
    except ConfigError as err:
        raise HTTPException(422, detail=[{"error": p} for p in err.problems]) from err


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    state = ServiceState(settings)
    app = FastAPI(title="huealign", version="0.1.0")
    app.state.service = state

    @app.post("/colors")
    async def register_color(color_id: str = Form(...), image: UploadFile = File(...)):
        data = await image.read()
        try:
            record, created = state.register_color(color_id, data)
        except Conflict as err:
            raise HTTPException(409, detail=str(err)) from err
        return Response(
            content=json.dumps(record.to_dict()),
            status_code=202 if created else 200,
            media_type="application/json",
        )

    @app.get("/colors")
    def list_colors():
        return [r.to_dict() for r in state.color_records.values()]

    @app.post("/sessions")
    async def start_session(request: Request):
        content_type = request.headers.get("content-type", "")
        image_bytes = None
        if content_type.startswith("multipart/"):
            form = await request.form()
            payload = json.loads(form["payload"])
            upload = form.get("image")
            if upload is not None:
                image_bytes = await upload.read()
        else:
            payload = await request.json()
        body = SessionBody.model_validate(payload)
        config = _build_config(state, body.config)
        source = body.source
        if source.kind == "generated":
            if source.seed is None:
                raise HTTPException(422, detail=[{"field": "source.seed", "error": "required"}])
            descriptor = {"kind": "generated", "seed": source.seed, "prompt": source.prompt}
        elif source.kind == "real":
            if image_bytes is None:
                raise HTTPException(
                    422, detail=[{"field": "image", "error": "real sources need an image upload"}]
                )
            descriptor = {"kind": "real", "prompt": source.prompt, "image_bytes": image_bytes}
        else:
            raise HTTPException(422, detail=[{"field": "source.kind", "error": "generated|real"}])
        record = state.create_session(descriptor, config)
        return record

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return state.read_session(session_id)
        except NotFound as err:
            raise HTTPException(404, detail=str(err)) from err

    @app.post("/sessions/{session_id}/mask")
    def request_mask(session_id: str, body: MaskBody):
        try:
            session = state.runtime_session(session_id)
        except NotFound as err:
            raise HTTPException(404, detail=str(err)) from err
        except Conflict as err:
            raise HTTPException(409, detail=str(err)) from err
        image = to_uint8(session.source_image)
        tokens = state.host.text.tokenize(session.prompt)
        cross = None
        if body.object_token:
            try:
                cross = object_mask_from_attention(
                    session.source_captures, tokens, body.object_token,
                    threshold=session.config.mask_threshold,
                )
            except KeyError as err:
                raise HTTPException(422, detail=str(err)) from err
        if body.point is None and cross is None:
            raise HTTPException(422, detail="provide a point, an object_token, or both")
        if body.point is not None:
            point = body.point
        else:
            from ..masking import centroid

            if cross.is_empty():
                raise HTTPException(422, detail=f"attention mask for '{body.object_token}' is empty")
            point = centroid(cross.grid, image_size=image.shape[0])

        degraded = False
        candidates: list[np.ndarray] = []
        if state.segmenter is not None:
            from ..masking import SegmenterUnavailable

            try:
                candidates = state.segmenter.propose(image, point)
            except SegmenterUnavailable:
                candidates = []
        if not candidates:
            if cross is None or cross.is_empty():
                raise HTTPException(
                    409, detail="segmenter unavailable and no attention mask to fall back on"
                )
            degraded = True
            chosen = ObjectMask(
                mask=cross.at_resolution(image.shape[0]),
                candidate_index=-1,
                score=float("nan"),
                degraded=True,
                notes=["attention-mask fallback"],
            )
            candidates = [chosen.mask]
        elif cross is not None and not cross.is_empty():
            chosen = select_mask(
                CandidateMaskSet(candidates, point), cross.at_resolution(image.shape[0])
            )
        else:
            chosen = ObjectMask(mask=candidates[0], candidate_index=0, score=float("nan"))

        artifacts = [state.artifacts.put_mask(m) for m in candidates]
        entry = {
            "point": list(point),
            "object_token": body.object_token,
            "candidates": artifacts,
            "selected_index": max(chosen.candidate_index, 0),
            "selected_artifact": artifacts[max(chosen.candidate_index, 0)],
            "score": None if chosen.score != chosen.score else chosen.score,
            "degraded": degraded or chosen.degraded,
        }
        record = state.read_session(session_id)
        record["mask_candidates"].append(entry)
        state._write_session(record)
        return entry

    @app.post("/sessions/{session_id}/turns")
    def submit_turn(session_id: str, body: TurnBody):
        try:
            record = state.read_session(session_id)
        except NotFound as err:
            raise HTTPException(404, detail=str(err)) from err
        if record["status"] != "ready":
            raise HTTPException(
                409, detail={"error": f"session is {record['status']}", "job_id": record.get("prep_job")}
            )
        color = state.color_records.get(body.color_id)
        if color is None:
            raise HTTPException(404, detail=f"color '{body.color_id}' not registered")
        if color.status != "ready":
            raise HTTPException(
                409, detail={"error": f"color asset is {color.status}", "job_id": color.job_id}
            )
        config = _build_config(state, body.overrides)
        mask = None
        if body.mask_artifact:
            data = state.artifacts.get(body.mask_artifact)
            grid = np.asarray(Image.open(io.BytesIO(data)).convert("1"), dtype=bool)
            mask = ObjectMask(mask=grid, candidate_index=0, score=0.0)

        def work(job):
            session = state.runtime_session(session_id)
            asset = state.color_asset(body.color_id)
            state.jobs.advance(job, "masking")
            resolved_mask = session.resolve_mask(body.object_token, mask)
            state.jobs.advance(job, "denoising")
            started = time.time()
            turn = edit_object_color(
                session, body.object_token, asset, mask=resolved_mask, config=config
            )
            elapsed = time.time() - started
            fresh = state.read_session(session_id)
            turn_entry = {
                "object_token": body.object_token,
                "color_id": body.color_id,
                "input_hash": fresh.get("source_artifact"),
                "config": dataclasses.asdict(config),
                "output_artifact": state.artifacts.put_image(turn.image),
                "mask_artifact": state.artifacts.put_mask(turn.mask.mask),
                "mask_degraded": turn.mask.degraded,
                "warnings": turn.warnings,
                "counters": {
                    "value_alignment_steps": sorted(turn.report.alignment_steps),
                    "preservation_steps": turn.report.preservation_steps,
                },
                "seconds": elapsed,
            }
            if body.store_trajectory:
                from ..arrayio import write_f32

                traj_dir = state.sessions_dir / session_id / f"turn_{len(fresh['turns'])}_trajectory"
                traj_dir.mkdir(parents=True, exist_ok=True)
                for t, latent in zip(
                    range(turn.trajectory.steps, -1, -1), turn.trajectory.latents
                ):
                    write_f32(traj_dir / f"t{t}.f32", latent.numpy())
                turn_entry["trajectory_dir"] = str(traj_dir)
            fresh["turns"].append(turn_entry)
            state._write_session(fresh)
            from ..pipeline import advance_session

            advance_session(session, turn)
            return {"turn_index": len(fresh["turns"]) - 1, "session_id": session_id}

        job = state.jobs.submit("edit-turn", work)
        return {"job_id": job.job_id, "config": dataclasses.asdict(config)}

    @app.post("/eval")
    def run_eval(body: EvalBody):
        def work(job):
            manifest = Manifest.load(Path(body.manifest_path))
            result = evaluate_benchmark(Path(body.run_dir), manifest, MetricProviders.desk())
            out = Path(body.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.csv").write_text(result.to_csv())
            (out / "report.json").write_text(result.to_json())
            return {"out_dir": str(out), "means": result.means, "missing": result.missing}

        job = state.jobs.submit("eval", work)
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, detail=f"job '{job_id}' not found")
        return job.to_dict()

    @app.get("/artifacts/{digest}")
    def get_artifact(digest: str):
        try:
            data = state.artifacts.get(digest)
        except NotFound as err:
            raise HTTPException(404, detail=f"artifact '{digest}' not found") from err
        return Response(content=data, media_type="image/png")

    return app
