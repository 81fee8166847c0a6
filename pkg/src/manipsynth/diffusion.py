"""Variance schedules, DDPM training, and differentiable DDIM sampling."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import torch

from .errors import DatasetError, NumericError, ScheduleError
from .rotations import DTYPE

DEFAULT_T_TRAIN = 1000
COSINE_S = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha/alpha-bar arrays of a diffusion chain."""

    betas: torch.Tensor  # (T,)
    kind: str
    beta_start: float = 0.0
    beta_end: float = 0.0

    def __post_init__(self):
        b = self.betas
        if b.dim() != 1 or b.shape[0] < 2:
            raise ScheduleError("schedule needs at least 2 steps")
        if float(b.min()) <= 0.0 or float(b.max()) >= 1.0:
            raise ScheduleError("betas must lie strictly inside (0, 1)")
        abar = torch.cumprod(1.0 - b, dim=0)
        if not bool((abar[1:] < abar[:-1]).all()):
            raise ScheduleError("alpha-bar must be strictly decreasing")
        object.__setattr__(self, "_alpha_bars", abar)

    @property
    def t_train(self) -> int:
        return self.betas.shape[0]

    @property
    def alphas(self) -> torch.Tensor:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> torch.Tensor:
        return self._alpha_bars

    @staticmethod
    def cosine(t_train: int = DEFAULT_T_TRAIN) -> "NoiseSchedule":
        """alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)."""
        if t_train < 2:
            raise ScheduleError(f"t_train must be >= 2, got {t_train}")
        steps = torch.arange(t_train + 1, dtype=DTYPE)
        f = torch.cos(((steps / t_train + COSINE_S) / (1.0 + COSINE_S)) * math.pi / 2.0) ** 2
        abar = f / f[0]
        betas = (1.0 - abar[1:] / abar[:-1]).clamp(1e-6, 0.999)
        return NoiseSchedule(betas, "cosine")

    @staticmethod
    def linear(t_train: int = DEFAULT_T_TRAIN, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        if t_train < 2:
            raise ScheduleError(f"t_train must be >= 2, got {t_train}")
        betas = torch.linspace(beta_start, beta_end, t_train, dtype=DTYPE)
        return NoiseSchedule(betas, "linear", beta_start, beta_end)


def cosine_schedule(t_train: int = DEFAULT_T_TRAIN) -> NoiseSchedule:
    return NoiseSchedule.cosine(t_train)


def linear_schedule(t_train: int = DEFAULT_T_TRAIN, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    return NoiseSchedule.linear(t_train, beta_start, beta_end)


def q_sample(schedule: NoiseSchedule, x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """Forward diffusion draw x_t | x_0. t: (B,) long."""
    abar = schedule.alpha_bars[t].reshape(-1, *([1] * (x0.dim() - 1)))
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * noise


def ddim_time_points(t_train: int, t_infer: int):
    """T_infer uniformly spaced training timesteps, ascending."""
    if t_infer < 1 or t_infer > t_train:
        raise ScheduleError(f"t_infer must be in [1, {t_train}], got {t_infer}")
    return [(t_train * i) // t_infer for i in range(t_infer)]


def ddim_sample(denoise, schedule: NoiseSchedule, z: torch.Tensor, t_infer: int, inpaint=None) -> torch.Tensor:
    """Deterministic (eta = 0) DDIM from noise z; differentiable wrt z.

    denoise: callable(x, t:int) -> clean-sample prediction with x's shape.
    inpaint: optional callable(x0_hat, step_index) -> x0_hat applied to each
    clean-sample prediction (used for first-frame/keyframe conditioning).
    """
    taus = ddim_time_points(schedule.t_train, t_infer)
    abar = schedule.alpha_bars
    x = z
    for i in reversed(range(t_infer)):
        t = taus[i]
        x0 = denoise(x, t)
        if inpaint is not None:
            x0 = inpaint(x0, i)
        a_t = abar[t]
        eps = (x - a_t.sqrt() * x0) / (1.0 - a_t).sqrt()
        a_prev = abar[taus[i - 1]] if i > 0 else torch.ones((), dtype=abar.dtype)
        x = a_prev.sqrt() * x0 + (1.0 - a_prev).sqrt() * eps
        if not bool(torch.isfinite(x).all()):
            raise NumericError("non-finite values during DDIM sampling", step=i)
    return x


def grad_through_sampler(denoise, schedule: NoiseSchedule, z: torch.Tensor, t_infer: int, loss_fn, inpaint=None):
    """Gradient of loss_fn(ddim_sample(z)) with respect to z, via reverse accumulation."""
    z = z.detach().clone().requires_grad_(True)
    sample = ddim_sample(denoise, schedule, z, t_infer, inpaint=inpaint)
    loss = loss_fn(sample)
    if loss.dim() != 0:
        raise DatasetError("loss functional must be scalar-valued")
    if not bool(torch.isfinite(loss)):
        raise NumericError("non-finite loss value", step=t_infer)
    (grad,) = torch.autograd.grad(loss, z)
    if not bool(torch.isfinite(grad).all()):
        raise NumericError("non-finite gradient through the sampler", step=0)
    return grad


def sample_noise(shape, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    return torch.randn(*shape, dtype=DTYPE, generator=gen)


def derive_seed(seed: int, label: str) -> int:
    """Independent named random stream from one run seed."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def train_denoiser(
    bundle,
    x,
    cond=None,
    frame_cond=None,
    poses=None,
    epochs: int = 200,
    batch_size: int = 32,
    lr: float = 1e-4,
    seed: int = 0,
):
    """DDPM training: MSE between the predicted and true clean samples.

    x: (S, N, D) raw features; normalization statistics are fit here and
    stored on the bundle. Deterministic for a fixed seed. Returns the
    per-epoch mean loss curve.
    """
    if not isinstance(x, torch.Tensor) or x.dim() != 3 or x.shape[0] == 0:
        raise DatasetError("dataset must be a non-empty (S, N, D) tensor")
    if x.shape[2] != bundle.denoiser.in_dim:
        raise DatasetError(f"dataset feature width {x.shape[2]} != model width {bundle.denoiser.in_dim}")
    for name, c, dims in (("cond", cond, 2), ("frame_cond", frame_cond, 3), ("poses", poses, 4)):
        if c is not None and (c.shape[0] != x.shape[0] or c.dim() != dims):
            raise DatasetError(f"{name} does not match dataset shape")

    bundle.fit_normalization(x)
    xn = bundle.normalize(x)
    net = bundle.denoiser
    schedule = bundle.schedule

    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.AdamW(net.parameters(), lr=lr)
    S = x.shape[0]
    losses = []
    net.train()
    for _ in range(epochs):
        perm = torch.randperm(S, generator=gen)
        total = 0.0
        batches = 0
        for start in range(0, S, batch_size):
            idx = perm[start : start + batch_size]
            x0 = xn[idx]
            t = torch.randint(0, schedule.t_train, (idx.shape[0],), generator=gen)
            noise = torch.randn(x0.shape, dtype=DTYPE, generator=gen)
            xt = q_sample(schedule, x0, t, noise)
            pred = net(
                xt,
                t,
                cond[idx] if cond is not None else None,
                frame_cond[idx] if frame_cond is not None else None,
                poses[idx] if poses is not None else None,
            )
            loss = torch.mean((pred - x0) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            batches += 1
        losses.append(total / batches)
    net.eval()
    bundle.meta["trained"] = True
    bundle.trained = True
    return losses
