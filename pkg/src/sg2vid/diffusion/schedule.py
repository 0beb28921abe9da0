"""Noise schedule tables and the forward process, plus frequency-band mixing.

Tables are kept in float64; `alpha_bars` is indexed by timestep directly with
the convention alpha_bars[0] = 1, so t=0 is the identity of the forward
process and t=T is (near) pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


class ScheduleError(ValueError):
    """Invalid schedule parameters or out-of-range timesteps."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule: betas[i] is the step-(i+1) noise rate."""

    betas: np.ndarray
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ScheduleError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ScheduleError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(betas) < 0):
            raise ScheduleError("betas must be nondecreasing")
        object.__setattr__(self, "betas", betas)
        bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if np.any(np.diff(bars) >= 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bars", bars)

    @classmethod
    def linear(cls, timesteps: int = 1000, beta_start: float = 1e-4,
               beta_end: float = 0.02) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, timesteps))

    @property
    def timesteps(self) -> int:
        return self.betas.size

    def alpha_bar(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.timesteps):
            raise ScheduleError(f"t must be in [0, {self.timesteps}]")
        return self.alpha_bars[t]

    def posterior_variance(self, t: int) -> float:
        """Var of q(z_{t-1} | z_t, z_0); nonnegative for all valid t."""
        if not (1 <= t <= self.timesteps):
            raise ScheduleError(f"t must be in [1, {self.timesteps}]")
        a_cur, a_prev = self.alpha_bars[t], self.alpha_bars[t - 1]
        return float(self.betas[t - 1] * (1.0 - a_prev) / (1.0 - a_cur))


def forward_diffuse(z0: torch.Tensor, t, noise: torch.Tensor,
                    schedule: NoiseSchedule) -> torch.Tensor:
    """z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) noise.

    ``t`` may be a scalar or a per-sample tensor (then z0's dim 0 is batch).
    """
    if noise.shape != z0.shape:
        raise ScheduleError(f"noise shape {tuple(noise.shape)} != z0 {tuple(z0.shape)}")
    bars = schedule.alpha_bar(np.asarray(t, dtype=np.int64))
    bars_t = torch.as_tensor(bars, dtype=z0.dtype, device=z0.device)
    if bars_t.ndim > 0:
        shape = (z0.shape[0],) + (1,) * (z0.ndim - 1)
        bars_t = bars_t.view(shape)
    return torch.sqrt(bars_t) * z0 + torch.sqrt(1.0 - bars_t) * noise


def _radial_mask(h: int, w: int, rho: float) -> torch.Tensor:
    fy = np.fft.fftfreq(h)
    fx = np.fft.fftfreq(w)
    radius = np.hypot(fy[:, None], fx[None, :])
    radius = radius / radius.max()
    return torch.as_tensor(radius <= rho)


def low_freq_init(noise: torch.Tensor, frame: torch.Tensor,
                  rho: float) -> torch.Tensor:
    """Swap the low-frequency band of ``noise`` for the frame's.

    Operates on the trailing two (spatial) dimensions. Frequencies whose
    normalized radius is <= rho come from ``frame``; the rest keep the
    noise's coefficients. rho=0 is the empty band (the noise is returned
    unchanged, DC included); rho=1 returns the frame.
    """
    if not (0.0 <= rho <= 1.0):
        raise ScheduleError(f"rho must lie in [0, 1], got {rho}")
    if noise.shape != frame.shape:
        raise ScheduleError(
            f"noise shape {tuple(noise.shape)} != frame {tuple(frame.shape)}"
        )
    if rho == 0.0:
        return noise.clone()
    h, w = noise.shape[-2:]
    mask = _radial_mask(h, w, rho).to(noise.device)
    noise_f = torch.fft.fft2(noise.double())
    frame_f = torch.fft.fft2(frame.double())
    mixed = torch.where(mask, frame_f, noise_f)
    return torch.fft.ifft2(mixed).real.to(noise.dtype)
