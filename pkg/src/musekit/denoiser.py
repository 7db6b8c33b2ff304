"""A toy noise predictor with hand-derived gradients.

Two-layer tanh MLP over the flattened latent, a sinusoidal step embedding,
and mean-pooled condition rows. Gradients are analytic (verified against
finite differences in the test suite), and a small Adam loop trains it on
synthetic latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import ConditionBundle, SinusoidalConfig, sinusoidal_embed
from .diffusion import NoiseSchedule, forward_sample


@dataclass(frozen=True)
class NoiseSample:
    """One frozen training draw: clean latent, step index, injected noise."""

    z0: np.ndarray
    n: int
    eps: np.ndarray


def make_training_batch(z0s: list[np.ndarray], sched: NoiseSchedule,
                        rng: np.random.Generator) -> list[NoiseSample]:
    return [
        NoiseSample(z0, int(rng.integers(1, sched.n_steps + 1)), rng.standard_normal(z0.shape))
        for z0 in z0s
    ]


class ToyDenoiser:
    """eps_hat(z_n, n, bundle) as a 2-layer MLP; callable like any denoiser."""

    def __init__(self, latent_shape: tuple[int, int], hidden: int = 64,
                 d_step: int = 16, d_cond: int = 64,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.latent_shape = tuple(latent_shape)
        self.d_latent = int(np.prod(latent_shape))
        self.d_cond = d_cond
        self.step_cfg = SinusoidalConfig(d_step)
        d_in = self.d_latent + d_step + 3 * d_cond
        self.params: dict[str, np.ndarray] = {
            "w1": rng.standard_normal((d_in, hidden)) / np.sqrt(d_in),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((hidden, self.d_latent)) / np.sqrt(hidden),
            "b2": np.zeros(self.d_latent),
        }

    def _input_vector(self, z_n: np.ndarray, n: int, bundle: ConditionBundle | None) -> np.ndarray:
        step = sinusoidal_embed(float(n), self.step_cfg)
        if bundle is None:
            cond = np.zeros(3 * self.d_cond)
        else:
            cond = np.concatenate(
                [
                    bundle.text_emb.mean(axis=0),
                    bundle.beat_emb.mean(axis=0),
                    bundle.chord_emb.mean(axis=0),
                ]
            )
        return np.concatenate([z_n.ravel(), step, cond])

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = np.tanh(x @ self.params["w1"] + self.params["b1"])
        y = h @ self.params["w2"] + self.params["b2"]
        return h, y

    def __call__(self, z_n: np.ndarray, n: int, bundle: ConditionBundle | None = None) -> np.ndarray:
        if z_n.shape != self.latent_shape:
            raise ValueError(f"latent shape {z_n.shape} != {self.latent_shape}")
        _, y = self._forward(self._input_vector(z_n, n, bundle))
        return y.reshape(self.latent_shape)

    # -- loss on a frozen batch (deterministic in the parameters) ----------

    def loss_on_batch(self, batch: list[NoiseSample], sched: NoiseSchedule,
                      gamma: np.ndarray, bundle: ConditionBundle | None = None) -> float:
        gamma = np.asarray(gamma, dtype=np.float64)
        total = 0.0
        for sample in batch:
            z_n = forward_sample(sample.z0, sample.n, sample.eps, sched)
            eps_hat = self(z_n, sample.n, bundle)
            total += float(gamma[sample.n - 1] * np.sum((sample.eps - eps_hat) ** 2))
        return total / len(batch)

    def loss_and_grad(self, batch: list[NoiseSample], sched: NoiseSchedule,
                      gamma: np.ndarray, bundle: ConditionBundle | None = None
                      ) -> tuple[float, dict[str, np.ndarray]]:
        gamma = np.asarray(gamma, dtype=np.float64)
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        total = 0.0
        for sample in batch:
            z_n = forward_sample(sample.z0, sample.n, sample.eps, sched)
            x = self._input_vector(z_n, sample.n, bundle)
            h, y = self._forward(x)
            resid = y - sample.eps.ravel()
            g = gamma[sample.n - 1]
            total += float(g * np.sum(resid**2))
            dy = 2.0 * g * resid
            grads["w2"] += np.outer(h, dy)
            grads["b2"] += dy
            dh = (self.params["w2"] @ dy) * (1.0 - h**2)
            grads["w1"] += np.outer(x, dh)
            grads["b1"] += dh
        scale = 1.0 / len(batch)
        for name in grads:
            grads[name] *= scale
        return total / len(batch), grads


class Adam:
    """Plain Adam over a name->array parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g**2
            m_hat = self.m[k] / (1 - self.beta1**self.t)
            v_hat = self.v[k] / (1 - self.beta2**self.t)
            self.params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_toy_denoiser(denoiser: ToyDenoiser, z0_dataset: list[np.ndarray],
                       sched: NoiseSchedule, gamma: np.ndarray,
                       rng: np.random.Generator, steps: int = 2000,
                       batch_size: int = 32, lr: float = 3e-3) -> list[float]:
    """Adam-train the toy denoiser; returns the per-step training losses."""
    optimizer = Adam(denoiser.params, lr=lr)
    history = []
    for _ in range(steps):
        picks = rng.integers(0, len(z0_dataset), size=batch_size)
        batch = make_training_batch([z0_dataset[i] for i in picks], sched, rng)
        loss, grads = denoiser.loss_and_grad(batch, sched, gamma)
        optimizer.step(grads)
        history.append(loss)
    return history
