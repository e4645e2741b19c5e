"""Image inversion: DDIM reverse mapping plus per-step unconditional-embedding
optimization so that guided denoising retraces the inversion trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch.optim import Adam

from .instrument import AttentionController
from .models.host import HostModel
from .sampling import ddim_denoise, ddim_invert_latent


@dataclass
class LatentTrajectory:
    """Ordered latents [z_T, ..., z_0]; index 0 is the noisiest."""

    latents: list[torch.Tensor]
    prompt: str
    steps: int
    guidance_scale: float

    def __post_init__(self):
        if len(self.latents) != self.steps + 1:
            raise ValueError(
                f"trajectory for {self.steps} steps needs {self.steps + 1} latents, "
                f"got {len(self.latents)}"
            )

    def z(self, t: int) -> torch.Tensor:
        """Latent at step index t (t = T is z_T, t = 0 is z_0)."""
        if not 0 <= t <= self.steps:
            raise ValueError(f"step index {t} outside [0, {self.steps}]")
        return self.latents[self.steps - t]

    @property
    def z_T(self) -> torch.Tensor:
        return self.latents[0]

    @property
    def z_0(self) -> torch.Tensor:
        return self.latents[-1]


@dataclass
class NullTextSchedule:
    """One optimized unconditional embedding per denoising step (index 0 is
    used at t = T)."""

    embeddings: list[torch.Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.embeddings)


@dataclass
class InversionSettings:
    inner_steps: int = 10
    early_stop: float = 1e-5
    learning_rate: float = 1e-2


def _optimize_null_schedule(
    host: HostModel,
    inv_latents: list[torch.Tensor],
    prompt: str,
    steps: int,
    guidance_scale: float,
    settings: InversionSettings,
) -> NullTextSchedule:
    schedule = host.schedule(steps)
    cond = host.text.encode(prompt)
    # Start from the conditional embedding: the inversion trajectory was
    # produced by the conditional prediction alone, so this initialization
    # puts the per-step loss at the DDIM consistency floor instead of an
    # arbitrary distance away from it.
    uncond = cond.clone()
    embeddings: list[torch.Tensor] = []
    z = inv_latents[-1]
    for i in range(steps):
        timestep = int(schedule.timesteps[i])
        target = inv_latents[len(inv_latents) - i - 2]
        uncond = uncond.detach().clone()
        if settings.inner_steps > 0 and guidance_scale != 1.0:
            with torch.no_grad():
                eps_cond = host.unet(z.unsqueeze(0), timestep, cond.unsqueeze(0))[0]
            uncond.requires_grad_(True)
            optimizer = Adam([uncond], lr=settings.learning_rate)
            for _ in range(settings.inner_steps):
                eps_uncond = host.unet(z.unsqueeze(0), timestep, uncond.unsqueeze(0))[0]
                eps = eps_uncond + guidance_scale * (eps_cond - eps_uncond)
                loss = F.mse_loss(schedule.prev_step(eps, timestep, z), target)
                if loss.item() < settings.early_stop:
                    break
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            uncond = uncond.detach()
        embeddings.append(uncond.clone())
        with torch.no_grad():
            eps_uncond = host.unet(z.unsqueeze(0), timestep, uncond.unsqueeze(0))[0]
            eps_cond = host.unet(z.unsqueeze(0), timestep, cond.unsqueeze(0))[0]
            eps = eps_uncond + guidance_scale * (eps_cond - eps_uncond)
            z = schedule.prev_step(eps, timestep, z)
    return NullTextSchedule(embeddings)


def invert_image(
    host: HostModel,
    image: torch.Tensor,
    prompt: str,
    steps: int,
    guidance_scale: float,
    settings: InversionSettings | None = None,
) -> tuple[LatentTrajectory, NullTextSchedule]:
    """Map an RGB image to its initial latent and the unconditional-embedding
    schedule under which guided denoising reproduces it.

    Deterministic: the result depends only on (image, prompt, steps,
    guidance_scale, model weights).
    """
    if image.dim() != 3 or image.shape[0] != 3:
        raise ValueError(f"expected image tensor (3, H, W), got {tuple(image.shape)}")
    if image.shape[1] % host.codec.factor or image.shape[2] % host.codec.factor:
        raise ValueError(
            f"image sides must be divisible by {host.codec.factor}, got {tuple(image.shape[1:])}"
        )
    settings = settings or InversionSettings()
    z0 = host.codec.encode(image)
    if steps == 0:
        return LatentTrajectory([z0], prompt, 0, guidance_scale), NullTextSchedule([])
    inv = ddim_invert_latent(host, z0, prompt, steps)
    schedule = _optimize_null_schedule(host, inv, prompt, steps, guidance_scale, settings)
    trajectory = LatentTrajectory(list(reversed(inv)), prompt, steps, guidance_scale)
    return trajectory, schedule


def reconstruct(
    host: HostModel,
    trajectory: LatentTrajectory,
    schedule: NullTextSchedule,
    controller: AttentionController | None = None,
) -> tuple[torch.Tensor, LatentTrajectory]:
    """Denoise the trajectory's z_T under the optimized schedule; returns the
    decoded image and the reconstruction's own trajectory."""
    if trajectory.steps == 0:
        if len(trajectory.latents) == 0:
            raise ValueError("empty trajectory")
        return host.codec.decode(trajectory.z_0), trajectory
    if len(schedule) != trajectory.steps:
        raise ValueError(
            f"schedule has {len(schedule)} embeddings for a {trajectory.steps}-step trajectory"
        )
    latents = ddim_denoise(
        host,
        trajectory.z_T,
        trajectory.prompt,
        trajectory.steps,
        trajectory.guidance_scale,
        uncond_embeddings=schedule.embeddings,
        controller=controller,
    )
    recon = LatentTrajectory(latents, trajectory.prompt, trajectory.steps, trajectory.guidance_scale)
    return host.codec.decode(recon.z_0), recon
