"""Deterministic DDIM stepping over a scaled-linear beta schedule."""

from __future__ import annotations

import torch


class DDIMSchedule:
    """Precomputed alpha products plus the forward/reverse DDIM updates.

    Denoising step indices run t = T, T-1, ..., 1 (t = T is the noisiest
    step); ``timestep_for(t)`` maps a step index to the underlying training
    timestep used for conditioning.
    """

    def __init__(
        self,
        steps: int,
        train_steps: int = 1000,
        beta_start: float = 0.00085,
        beta_end: float = 0.012,
    ):
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        if steps > train_steps:
            raise ValueError(f"steps ({steps}) cannot exceed train_steps ({train_steps})")
        self.steps = steps
        self.train_steps = train_steps
        betas = torch.linspace(beta_start**0.5, beta_end**0.5, train_steps, dtype=torch.float64) ** 2
        self.alphas_cumprod = torch.cumprod(1.0 - betas, dim=0).to(torch.float32)
        self.final_alpha_cumprod = self.alphas_cumprod[0]
        step_ratio = train_steps // steps
        self.step_ratio = step_ratio
        # descending: timesteps[0] is the noisiest
        self.timesteps = torch.arange(0, steps).flip(0) * step_ratio

    def timestep_for(self, t: int) -> int:
        """Training timestep for denoising step index t in [1, T]."""
        if not 1 <= t <= self.steps:
            raise ValueError(f"step index {t} outside [1, {self.steps}]")
        return int(self.timesteps[self.steps - t])

    def _alpha(self, timestep: int) -> torch.Tensor:
        if timestep < 0:
            return self.final_alpha_cumprod
        return self.alphas_cumprod[timestep]

    def prev_step(self, eps: torch.Tensor, timestep: int, sample: torch.Tensor) -> torch.Tensor:
        prev_timestep = timestep - self.step_ratio
        alpha_t = self._alpha(timestep)
        alpha_prev = self._alpha(prev_timestep)
        beta_t = 1 - alpha_t
        pred_x0 = (sample - beta_t**0.5 * eps) / alpha_t**0.5
        direction = (1 - alpha_prev) ** 0.5 * eps
        return alpha_prev**0.5 * pred_x0 + direction

    def next_step(self, eps: torch.Tensor, timestep: int, sample: torch.Tensor) -> torch.Tensor:
        """Inversion update: carry the sample one step toward full noise."""
        next_timestep = timestep
        timestep = timestep - self.step_ratio
        alpha_t = self._alpha(timestep)
        alpha_next = self._alpha(next_timestep)
        beta_t = 1 - alpha_t
        pred_x0 = (sample - beta_t**0.5 * eps) / alpha_t**0.5
        direction = (1 - alpha_next) ** 0.5 * eps
        return alpha_next**0.5 * pred_x0 + direction
