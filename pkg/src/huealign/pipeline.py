"""End-to-end object color editing: latent blending, guided denoising with
Value alignment and self-map replacement, masked background preservation, and
multi-turn sessions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import torch

from .assets import ReferenceColorAsset
from .imaging import mask_to_latent, psnr, to_uint8
from .instrument import (
    AttentionController,
    CapturePlan,
    CaptureStore,
    InjectionPlan,
)
from .inversion import (
    InversionSettings,
    LatentTrajectory,
    NullTextSchedule,
    invert_image,
    reconstruct,
)
from .layout import enumerate_sites
from .masking import ObjectMask, Segmenter, make_object_mask
from .models.host import HostModel
from .sampling import ddim_denoise

log = logging.getLogger(__name__)

# Masks smaller than this many latent cells edit unreliably; warn, don't stop.
MIN_MASK_CELLS = 16

REINVERSION_PSNR_WARN = 25.0


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid edit config: " + "; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class EditConfig:
    """All schedule parameters of one edit turn.

    ``align_fraction`` is the fraction of early denoising steps that receive
    Value alignment, so the step threshold ``tau`` survives changes of
    ``steps``: alignment fires while t > tau with tau = steps - round(
    align_fraction * steps).
    """

    steps: int = 50
    guidance_scale: float = 7.5
    align_fraction: float = 0.2
    blend_ratio: float = 0.1
    preservation_window: int = 5
    turns: int = 1  # outer repetitions of one edit, re-inverting in between
    preservation_mode: str = "last_k"  # or "from_step_n": fire while t < T - K
    mask_threshold: float = 0.4
    null_text_inner_steps: int = 10
    null_text_early_stop: float = 1e-5
    # replacement layer scope; the timestep extent is fixed (every step)
    self_replace_regions: tuple[str, ...] = ("encoder", "mid", "decoder")
    # refresh self-attention captures from each re-inverted output (the
    # alternative reuses the previous turn's captures)
    refresh_source_captures: bool = True

    @property
    def tau(self) -> int:
        return self.steps - int(round(self.align_fraction * self.steps))

    def inversion_settings(self) -> InversionSettings:
        return InversionSettings(
            inner_steps=self.null_text_inner_steps, early_stop=self.null_text_early_stop
        )

    def validate(self) -> "EditConfig":
        problems = []
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.blend_ratio <= 1.0:
            problems.append(f"blend_ratio must be in [0, 1], got {self.blend_ratio}")
        if not 0 <= self.preservation_window <= self.steps:
            problems.append(
                f"preservation_window must be in [0, steps], got {self.preservation_window}"
            )
        if not 0.0 <= self.align_fraction <= 1.0:
            problems.append(f"align_fraction must be in [0, 1], got {self.align_fraction}")
        if self.turns < 1:
            problems.append(f"turns must be >= 1, got {self.turns}")
        if self.preservation_mode not in ("last_k", "from_step_n"):
            problems.append(f"unknown preservation_mode '{self.preservation_mode}'")
        if self.guidance_scale <= 0:
            problems.append(f"guidance_scale must be positive, got {self.guidance_scale}")
        bad_regions = [r for r in self.self_replace_regions if r not in ("encoder", "mid", "decoder")]
        if bad_regions:
            problems.append(f"unknown self_replace_regions {bad_regions}")
        if problems:
            raise ConfigError(problems)
        return self


def blend_initial_latent(
    z_source: torch.Tensor, z_color: torch.Tensor, mask: torch.Tensor, ratio: float
) -> torch.Tensor:
    """Convex mix of the reference-color initial latent into the source's,
    inside the object mask only. Outside the mask the source latent passes
    through untouched."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"blend ratio must be in [0, 1], got {ratio}")
    if z_source.shape != z_color.shape:
        raise ValueError(
            f"latent shapes differ: {tuple(z_source.shape)} vs {tuple(z_color.shape)}"
        )
    if mask.shape[-2:] != z_source.shape[-2:]:
        raise ValueError(
            f"mask grid {tuple(mask.shape[-2:])} does not match latent {tuple(z_source.shape[-2:])}"
        )
    if ratio == 0.0:
        return z_source.clone()
    mixed = z_source * (1.0 - ratio) + z_color * ratio
    return torch.where(mask.to(torch.bool), mixed, z_source)


def preserve_background_step(
    z_target: torch.Tensor, z_source: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Copy source latents into every background cell; object cells keep the
    target values bit-exact."""
    if z_target.shape != z_source.shape:
        raise ValueError(
            f"latent shapes differ: {tuple(z_target.shape)} vs {tuple(z_source.shape)}"
        )
    if mask.shape[-2:] != z_target.shape[-2:]:
        raise ValueError(
            f"mask grid {tuple(mask.shape[-2:])} does not match latent {tuple(z_target.shape[-2:])}"
        )
    return torch.where(mask.to(torch.bool), z_target, z_source)


@dataclass
class DenoiseReport:
    """Instrumentation counters for one guided denoise."""

    alignment_events: list[tuple[str, int]]
    replacement_events: list[tuple[str, int]]
    preservation_steps: list[int]

    @property
    def alignment_steps(self) -> set[int]:
        return {t for _, t in self.alignment_events}

    @property
    def alignment_sites(self) -> set[str]:
        return {k for k, _ in self.alignment_events}


def guided_denoise(
    host: HostModel,
    z_T: torch.Tensor,
    prompt: str,
    config: EditConfig,
    asset: ReferenceColorAsset,
    source_captures: CaptureStore,
    source_trajectory: LatentTrajectory,
    mask_latent: torch.Tensor,
    uncond_schedule: NullTextSchedule | None = None,
) -> tuple[LatentTrajectory, DenoiseReport]:
    """One edited denoising pass.

    Per step t (counting down from T): Value alignment at the decoder cross
    sites while t > tau, self-map replacement from the source run at every
    step, and in the preservation window the freshly produced latent's
    background cells are overwritten with the source trajectory's.
    """
    config.validate()
    steps = config.steps
    self_sites = [
        s
        for s in enumerate_sites(host.layout)
        if s.kind.value == "self" and s.region.value in config.self_replace_regions
    ]
    plan = InjectionPlan.value_alignment(host.layout, threshold=config.tau).merged_with(
        InjectionPlan.self_replacement(host.layout, sites=self_sites)
    )
    controller = AttentionController(
        align_reference=asset.as_store(host),
        replace_source=source_captures,
        plan=plan,
    )
    controller.preflight(steps)

    preservation_steps: list[int] = []

    def preserve(t: int, z_next: torch.Tensor) -> torch.Tensor:
        if config.preservation_window == 0:
            return z_next
        if config.preservation_mode == "last_k":
            fire = t <= config.preservation_window
        else:  # from_step_n: literal reading of the step condition t < T - N
            fire = t < steps - config.preservation_window
        if not fire:
            return z_next
        preservation_steps.append(t)
        return preserve_background_step(z_next, source_trajectory.z(t - 1), mask_latent)

    embeddings = uncond_schedule.embeddings if uncond_schedule is not None else None
    latents = ddim_denoise(
        host,
        z_T,
        prompt,
        steps,
        config.guidance_scale,
        uncond_embeddings=embeddings,
        controller=controller,
        step_transform=preserve,
    )
    trajectory = LatentTrajectory(latents, prompt, steps, config.guidance_scale)
    report = DenoiseReport(
        alignment_events=list(controller.counters.value_alignments),
        replacement_events=list(controller.counters.map_replacements),
        preservation_steps=preservation_steps,
    )
    return trajectory, report


@dataclass
class GeneratedSource:
    seed: int
    prompt: str


@dataclass
class RealSource:
    image: torch.Tensor  # (3, H, W) in [-1, 1]
    prompt: str


@dataclass
class EditTurn:
    object_token: str
    color_id: str
    mask: ObjectMask
    config: EditConfig
    image: torch.Tensor
    trajectory: LatentTrajectory
    report: DenoiseReport
    warnings: list[str] = field(default_factory=list)


class EditSession:
    """A source image plus its captures, re-inverted between turns.

    ``prepare`` must run once before the first turn; each completed turn
    re-inverts its output so the next turn edits on top of it.
    """

    def __init__(
        self,
        host: HostModel,
        source: GeneratedSource | RealSource,
        config: EditConfig,
        segmenter: Segmenter | None = None,
    ):
        self.host = host
        self.source = source
        self.config = config.validate()
        self.segmenter = segmenter
        self.turns: list[EditTurn] = []
        self.source_trajectory: LatentTrajectory | None = None
        self.source_captures: CaptureStore | None = None
        self.uncond_schedule: NullTextSchedule | None = None
        self.source_image: torch.Tensor | None = None

    @property
    def prompt(self) -> str:
        return self.source.prompt

    def _capture_controller(self) -> tuple[CaptureStore, AttentionController]:
        store = CaptureStore(self.host.model_id, self.host.layout, self.config.steps)
        controller = AttentionController(
            capture_plan=CapturePlan.of(enumerate_sites(self.host.layout)),
            capture_into=store,
        )
        return store, controller

    def prepare(self) -> None:
        if isinstance(self.source, GeneratedSource):
            z_T = self.host.sample_initial_latent(self.source.seed)
            store, controller = self._capture_controller()
            latents = ddim_denoise(
                self.host,
                z_T,
                self.prompt,
                self.config.steps,
                self.config.guidance_scale,
                controller=controller,
            )
            self.source_trajectory = LatentTrajectory(
                latents, self.prompt, self.config.steps, self.config.guidance_scale
            )
            self.source_captures = store.freeze()
            self.uncond_schedule = None
        else:
            trajectory, schedule = invert_image(
                self.host,
                self.source.image,
                self.prompt,
                self.config.steps,
                self.config.guidance_scale,
                settings=self.config.inversion_settings(),
            )
            store, controller = self._capture_controller()
            reconstruct(self.host, trajectory, schedule, controller=controller)
            self.source_trajectory = trajectory
            self.source_captures = store.freeze()
            self.uncond_schedule = schedule
        self.source_image = self.host.codec.decode(self.source_trajectory.z_0)

    def _require_prepared(self) -> None:
        if self.source_trajectory is None:
            raise RuntimeError("session not prepared; call prepare() first")

    def resolve_mask(self, object_token: str, mask: ObjectMask | None = None) -> ObjectMask:
        self._require_prepared()
        if mask is not None:
            return mask
        return make_object_mask(
            to_uint8(self.source_image),
            self.source_captures,
            self.host.text.tokenize(self.prompt),
            object_token,
            self.segmenter,
            threshold=self.config.mask_threshold,
        )


def edit_object_color(
    session: EditSession,
    object_token: str,
    asset: ReferenceColorAsset,
    mask: ObjectMask | None = None,
    config: EditConfig | None = None,
) -> EditTurn:
    """One edit turn: mask the object, blend the reference latent in, denoise
    with alignment + replacement, and record the result on the session.

    ``config.turns > 1`` repeats the pass, re-inverting the output in
    between; the mask is resolved once and reused across repetitions.
    """
    session._require_prepared()
    config = (config or session.config).validate()
    host = session.host
    if asset.model_id != host.model_id:
        raise ValueError(
            f"asset '{asset.color_id}' was extracted on model '{asset.model_id}', "
            f"session runs '{host.model_id}'"
        )
    object_mask = session.resolve_mask(object_token, mask)
    turn = _edit_pass(session, object_token, asset, object_mask, config)
    for _ in range(1, config.turns):
        advance_session(session, turn)
        turn = _edit_pass(session, object_token, asset, object_mask, config)
    return turn


def _edit_pass(
    session: EditSession,
    object_token: str,
    asset: ReferenceColorAsset,
    object_mask: ObjectMask,
    config: EditConfig,
) -> EditTurn:
    host = session.host
    turn_warnings: list[str] = []
    if object_mask.degraded:
        turn_warnings.extend(object_mask.notes)
    mask_latent = mask_to_latent(object_mask.mask, host.latent_size)
    cells = int(mask_latent.sum())
    if 0 < cells < MIN_MASK_CELLS:
        message = f"object mask covers only {cells} latent cells; small objects edit poorly"
        warnings.warn(message)
        turn_warnings.append(message)

    z_T = blend_initial_latent(
        session.source_trajectory.z_T, asset.z_T, mask_latent, config.blend_ratio
    )
    trajectory, report = guided_denoise(
        host,
        z_T,
        session.prompt,
        config,
        asset,
        session.source_captures,
        session.source_trajectory,
        mask_latent,
        uncond_schedule=session.uncond_schedule,
    )
    image = host.codec.decode(trajectory.z_0)
    turn = EditTurn(
        object_token=object_token,
        color_id=asset.color_id,
        mask=object_mask,
        config=config,
        image=image,
        trajectory=trajectory,
        report=report,
        warnings=turn_warnings,
    )
    session.turns.append(turn)
    return turn


def advance_session(session: EditSession, turn: EditTurn) -> None:
    """Re-invert a turn's output (same prompt) so the next turn edits it.

    By default the self-attention captures are refreshed from the re-inverted
    reconstruction; with ``refresh_source_captures`` off, the previous
    captures are kept and only the trajectory and schedule move forward.
    """
    host = session.host
    trajectory, schedule = invert_image(
        host,
        turn.image,
        session.prompt,
        session.config.steps,
        session.config.guidance_scale,
        settings=session.config.inversion_settings(),
    )
    if session.config.refresh_source_captures:
        store, controller = session._capture_controller()
        recon_image, _ = reconstruct(host, trajectory, schedule, controller=controller)
        session.source_captures = store.freeze()
    else:
        recon_image, _ = reconstruct(host, trajectory, schedule)
    quality = psnr(to_uint8(recon_image), to_uint8(turn.image))
    if quality < REINVERSION_PSNR_WARN:
        message = f"re-inversion reconstruction PSNR {quality:.1f} dB below {REINVERSION_PSNR_WARN}"
        warnings.warn(message)
        turn.warnings.append(message)
    session.source_trajectory = trajectory
    session.uncond_schedule = schedule
    session.source_image = host.codec.decode(trajectory.z_0)


@dataclass
class TurnSpec:
    object_token: str
    asset: ReferenceColorAsset
    mask: ObjectMask | None = None
    config: EditConfig | None = None


def run_multi_turn(session: EditSession, turn_specs: Sequence[TurnSpec]) -> list[torch.Tensor]:
    """Apply the turns in order; each turn operates on the re-inversion of the
    previous turn's output, so earlier edits persist."""
    if not turn_specs:
        raise ValueError("turn_specs must be non-empty")
    session._require_prepared()
    images = []
    for i, spec in enumerate(turn_specs):
        turn = edit_object_color(
            session, spec.object_token, spec.asset, mask=spec.mask, config=spec.config
        )
        images.append(turn.image)
        if i + 1 < len(turn_specs):
            advance_session(session, turn)
    return images
