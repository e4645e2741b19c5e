"""DDIM sampling loops shared by generation, reconstruction, and editing.

Step indices count down from T (noisiest) to 1; an attached controller is
told the current index before the model is evaluated, and an optional
``step_transform`` may rewrite the freshly produced latent (the pipeline uses
it for background preservation).
"""

from __future__ import annotations

from typing import Callable, Sequence

import torch

from .instrument import COND, UNCOND, AttentionController, attach_controller
from .models.host import HostModel
from .models.schedule import DDIMSchedule


def classifier_free_eps(
    host: HostModel,
    latent: torch.Tensor,
    timestep: int,
    cond: torch.Tensor,
    uncond: torch.Tensor | None,
    guidance_scale: float,
    controller: AttentionController | None,
) -> torch.Tensor:
    """One noise prediction under classifier-free guidance.

    The unconditional pass is skipped entirely when the scale is 1, and the
    controller only ever sees the conditional branch as active.
    """
    batch = latent.unsqueeze(0)
    if guidance_scale == 1.0 or uncond is None:
        if controller is not None:
            controller.set_branch(COND)
        return host.unet(batch, timestep, cond.unsqueeze(0))[0]
    if controller is not None:
        controller.set_branch(UNCOND)
    eps_uncond = host.unet(batch, timestep, uncond.unsqueeze(0))[0]
    if controller is not None:
        controller.set_branch(COND)
    eps_cond = host.unet(batch, timestep, cond.unsqueeze(0))[0]
    return eps_uncond + guidance_scale * (eps_cond - eps_uncond)


@torch.no_grad()
def ddim_denoise(
    host: HostModel,
    z_T: torch.Tensor,
    prompt: str,
    steps: int,
    guidance_scale: float,
    uncond_embeddings: Sequence[torch.Tensor] | None = None,
    controller: AttentionController | None = None,
    step_transform: Callable[[int, torch.Tensor], torch.Tensor] | None = None,
) -> list[torch.Tensor]:
    """Denoise ``z_T`` to z_0, returning the latent trajectory [z_T, ..., z_0].

    ``uncond_embeddings`` supplies one unconditional embedding per step
    (index 0 used at t = T); when omitted, the empty-prompt embedding is used
    at every step.
    """
    schedule = host.schedule(steps)
    cond = host.text.encode(prompt)
    default_uncond = host.text.encode("")
    trajectory = [z_T.clone()]
    z = z_T

    def loop():
        nonlocal z
        for i in range(steps):
            t = steps - i
            if controller is not None:
                controller.begin_step(t)
            uncond = default_uncond if uncond_embeddings is None else uncond_embeddings[i]
            eps = classifier_free_eps(
                host, z, schedule.timestep_for(t), cond, uncond, guidance_scale, controller
            )
            z = schedule.prev_step(eps, schedule.timestep_for(t), z)
            if step_transform is not None:
                z = step_transform(t, z)
            trajectory.append(z.clone())

    if controller is not None:
        with attach_controller(host.unet, controller):
            loop()
    else:
        loop()
    return trajectory


@torch.no_grad()
def ddim_invert_latent(
    host: HostModel, z_0: torch.Tensor, prompt: str, steps: int
) -> list[torch.Tensor]:
    """Carry an encoded latent to noise, returning [z_0, z_1, ..., z_T].

    Inversion runs on the conditional prediction alone (guidance 1), the
    regime in which the reverse DDIM map is numerically faithful.
    """
    schedule = host.schedule(steps)
    cond = host.text.encode(prompt)
    latents = [z_0.clone()]
    z = z_0
    for i in range(steps):
        timestep = int(schedule.timesteps[steps - i - 1])
        eps = host.unet(z.unsqueeze(0), timestep, cond.unsqueeze(0))[0]
        z = schedule.next_step(eps, timestep, z)
        latents.append(z.clone())
    return latents
