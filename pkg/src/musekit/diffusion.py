"""Denoising-diffusion numerics on generic latents.

Forward process: q(z_n | z_{n-1}) = N(sqrt(1-beta_n) z_{n-1}, beta_n I)
with a pre-scheduled, strictly increasing beta_1..beta_N in (0, 1). The
closed-form marginal, the guided reverse step, and the noise-estimation
loss are implemented exactly; latents are plain ndarrays with shape
[time, channels].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_STEPS = 200
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 2e-2
DEFAULT_GUIDANCE = 3.0

# denoiser(z_n, n, bundle_or_None) -> predicted noise, same shape as z_n
Denoiser = Callable[[np.ndarray, int, object], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray        # beta_1..beta_N, strictly increasing in (0, 1)
    alphas: np.ndarray       # 1 - beta_n
    alpha_bars: np.ndarray   # prod_{i<=n} alpha_i, strictly decreasing
    beta_tildes: np.ndarray  # (1 - abar_{n-1}) / (1 - abar_n) * beta_n; zero at n=1

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    def _index(self, n: int) -> int:
        if not 1 <= n <= self.n_steps:
            raise ValueError(f"step n must be in 1..{self.n_steps}")
        return n - 1


def make_schedule(n_steps: int, beta_min: float = DEFAULT_BETA_MIN,
                  beta_max: float = DEFAULT_BETA_MAX) -> NoiseSchedule:
    """Linear beta schedule with the derived alpha/alpha-bar/beta-tilde arrays."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0.0 < beta_min < beta_max < 1.0:
        raise ValueError("need 0 < beta_min < beta_max < 1")
    if n_steps == 1:
        betas = np.array([beta_min])
    else:
        betas = np.linspace(beta_min, beta_max, n_steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    prev_bars = np.concatenate([[1.0], alpha_bars[:-1]])
    beta_tildes = (1.0 - prev_bars) / (1.0 - alpha_bars) * betas
    return NoiseSchedule(betas, alphas, alpha_bars, beta_tildes)


def forward_sample(z0: np.ndarray, n: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal: z_n = sqrt(abar_n) z0 + sqrt(1 - abar_n) eps."""
    if z0.shape != eps.shape:
        raise ValueError("noise shape must match the latent shape")
    i = sched._index(n)
    return np.sqrt(sched.alpha_bars[i]) * z0 + np.sqrt(1.0 - sched.alpha_bars[i]) * eps


def forward_step(z_prev: np.ndarray, n: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One step of the forward recursion: sqrt(1-beta_n) z_{n-1} + sqrt(beta_n) eps."""
    if z_prev.shape != eps.shape:
        raise ValueError("noise shape must match the latent shape")
    i = sched._index(n)
    return np.sqrt(1.0 - sched.betas[i]) * z_prev + np.sqrt(sched.betas[i]) * eps


def cfg_mix(eps_cond: np.ndarray, eps_uncond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance combiner: w * eps_cond + (1 - w) * eps_uncond."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("conditional/unconditional estimates must share a shape")
    if w == 1.0:
        return eps_cond
    return w * eps_cond + (1.0 - w) * eps_uncond


def reverse_step(z_n: np.ndarray, eps_hat: np.ndarray, n: int, sched: NoiseSchedule,
                 noise: np.ndarray | None = None) -> np.ndarray:
    """Posterior mean step plus optional scheduled noise.

    mu = (z_n - (1 - alpha_n)/sqrt(1 - abar_n) * eps_hat) / sqrt(alpha_n);
    with noise supplied, adds sqrt(beta_tilde_n) * noise (always zero at n=1).
    """
    if z_n.shape != eps_hat.shape:
        raise ValueError("noise estimate shape must match the latent shape")
    i = sched._index(n)
    mean = (z_n - (1.0 - sched.alphas[i]) / np.sqrt(1.0 - sched.alpha_bars[i]) * eps_hat) / np.sqrt(
        sched.alphas[i]
    )
    if noise is None:
        return mean
    if noise.shape != z_n.shape:
        raise ValueError("noise shape must match the latent shape")
    return mean + np.sqrt(sched.beta_tildes[i]) * noise


def diffusion_loss(denoiser: Denoiser, z0_batch: list[np.ndarray], sched: NoiseSchedule,
                   gamma: np.ndarray, rng: np.random.Generator, bundle=None) -> float:
    """Monte-Carlo noise-estimation loss.

    Per batch item: draw n uniform in 1..N and eps ~ N(0, I), then score
    gamma_n * ||eps - denoiser(z_n, n, bundle)||^2; returns the batch mean.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if len(gamma) != sched.n_steps:
        raise ValueError("gamma must have one weight per step")
    total = 0.0
    for z0 in z0_batch:
        n = int(rng.integers(1, sched.n_steps + 1))
        eps = rng.standard_normal(z0.shape)
        z_n = forward_sample(z0, n, eps, sched)
        eps_hat = denoiser(z_n, n, bundle)
        total += float(gamma[n - 1] * np.sum((eps - eps_hat) ** 2))
    return total / len(z0_batch)


def toy_denoise_loop(denoiser: Denoiser, z_big: np.ndarray, bundle, sched: NoiseSchedule,
                     w: float = DEFAULT_GUIDANCE,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Run the guided reverse process from z_N down to z_0.

    Each step mixes conditional and unconditional noise estimates with the
    guidance scale; ``rng=None`` takes the deterministic mean-only path.
    """
    z = np.array(z_big, dtype=np.float64)
    for n in range(sched.n_steps, 0, -1):
        eps_cond = denoiser(z, n, bundle)
        eps_hat = cfg_mix(eps_cond, denoiser(z, n, None), w) if w != 1.0 else eps_cond
        noise = rng.standard_normal(z.shape) if (rng is not None and n > 1) else None
        z = reverse_step(z, eps_hat, n, sched, noise)
    return z
