"""Few-step noise schedules, forward diffusion, and posterior-based sampling.

Timesteps are 1-based: the schedule tables are stored with a leading slot so
that ``alpha_bar[0] == 1`` (the empty product).  All samplers accept either a
scalar step ``t`` or a per-row integer array matched against a 2-D batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, mul, tensor


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variance tables; index 0 of ``beta``/``alpha`` is padding."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def build_cosine_schedule(T: int, s: float = 0.008, beta_clip: float = 0.999) -> NoiseSchedule:
    """Cosine alpha-bar curve sliced at T discrete steps.

    Betas are clipped at ``beta_clip`` (the curve hits exactly zero at the
    endpoint) and alpha-bar is then recomputed from the clipped betas so the
    telescoping product holds exactly.
    """
    if T < 1:
        raise ValueError(f"schedule needs T >= 1, got {T}")
    if not (0.0 < beta_clip < 1.0):
        raise ValueError(f"beta_clip must be in (0,1), got {beta_clip}")
    if s <= 0:
        raise ValueError(f"offset s must be positive, got {s}")

    def f(u: float) -> float:
        return float(np.cos(((u + s) / (1.0 + s)) * np.pi / 2.0) ** 2)

    f0 = f(0.0)
    raw = np.array([f(t / T) / f0 for t in range(T + 1)])
    beta = np.zeros(T + 1)
    alpha_bar = np.ones(T + 1)
    for t in range(1, T + 1):
        beta[t] = min(1.0 - raw[t] / raw[t - 1], beta_clip)
        alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta[t])
    alpha = 1.0 - beta
    alpha[0] = 1.0
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _check_t(t, lo: int, hi: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if t.min() < lo or t.max() > hi:
        raise ValueError(f"timestep out of range [{lo}, {hi}]: {t}")
    return t


def _col(values: np.ndarray, t: np.ndarray, x: np.ndarray):
    """Schedule coefficients aligned with x: scalar for scalar t, column
    vector for per-row t."""
    c = values[t]
    if t.ndim == 0:
        return c
    if x.ndim != 2 or x.shape[0] != t.shape[0]:
        raise ValueError(f"per-row t of length {t.shape[0]} needs a (n, d) batch, got {x.shape}")
    return c[:, None]


def q_sample_marginal(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Draw x_t | x_0 in closed form; t = 0 returns x0 exactly."""
    t = _check_t(t, 0, sched.T)
    if x0.shape != eps.shape:
        raise ValueError(f"x0/eps shape mismatch {x0.shape} vs {eps.shape}")
    ab = _col(sched.alpha_bar, t, x0)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def q_sample_step(x_prev: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Single forward-diffusion step x_t | x_{t-1}."""
    t = _check_t(t, 1, sched.T)
    if x_prev.shape != eps.shape:
        raise ValueError(f"x_prev/eps shape mismatch {x_prev.shape} vs {eps.shape}")
    b = _col(sched.beta, t, x_prev)
    return np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * eps


@dataclass
class PosteriorParams:
    mean: np.ndarray
    var: np.ndarray  # scalar or per-row; exactly 0 at t = 1


def _posterior_coeffs(t, sched: NoiseSchedule, x: np.ndarray):
    t = _check_t(t, 1, sched.T)
    ab_t = _col(sched.alpha_bar, t, x)
    ab_prev = _col(sched.alpha_bar, t - 1, x)
    a_t = _col(sched.alpha, t, x)
    b_t = _col(sched.beta, t, x)
    denom = 1.0 - ab_t
    coef_x0 = np.sqrt(ab_prev) * b_t / denom
    coef_xt = np.sqrt(a_t) * (1.0 - ab_prev) / denom
    var = (1.0 - ab_prev) / denom * b_t
    return coef_x0, coef_xt, var


def posterior_params(x_t: np.ndarray, x0: np.ndarray, t, sched: NoiseSchedule) -> PosteriorParams:
    """Gaussian parameters of the forward posterior q(x_{t-1} | x_t, x0)."""
    if x_t.shape != x0.shape:
        raise ValueError(f"x_t/x0 shape mismatch {x_t.shape} vs {x0.shape}")
    coef_x0, coef_xt, var = _posterior_coeffs(t, sched, x_t)
    var = float(var) if np.ndim(var) == 0 else var[:, 0]
    return PosteriorParams(mean=coef_x0 * x0 + coef_xt * x_t, var=var)


def posterior_sample(x_t, x0_hat, t, z, sched: NoiseSchedule):
    """Reparameterized draw from the posterior with x0 replaced by a predicted
    x0.  If ``x0_hat`` is an autodiff Tensor the result is differentiable
    w.r.t. it; plain arrays take a pure-numpy path."""
    if isinstance(x0_hat, Tensor):
        x_t_arr = np.asarray(x_t, dtype=np.float64)
        coef_x0, coef_xt, var = _posterior_coeffs(t, sched, x_t_arr)
        const = coef_xt * x_t_arr + np.sqrt(var) * np.asarray(z)
        shape = x0_hat.data.shape
        scale_arr = np.broadcast_to(np.asarray(coef_x0, dtype=np.float64), shape).copy()
        const_arr = np.broadcast_to(np.asarray(const, dtype=np.float64), shape).copy()
        return add(mul(x0_hat, tensor(scale_arr)), tensor(const_arr))
    if x_t.shape != x0_hat.shape:
        raise ValueError(f"x_t/x0_hat shape mismatch {x_t.shape} vs {x0_hat.shape}")
    coef_x0, coef_xt, var = _posterior_coeffs(t, sched, x_t)
    return coef_x0 * x0_hat + coef_xt * x_t + np.sqrt(var) * z


def ancestral_sample(denoise_fn, sched: NoiseSchedule, n: int, data_dim: int,
                     latent_dim: int, rng) -> np.ndarray:
    """Few-step ancestral sampling loop.

    ``denoise_fn(x_t, z, t) -> x0_hat`` maps arrays to arrays.  Draw order
    per run: x_T normals, then per step t = T..1 a latent block followed by
    the posterior noise block.  At t = 1 the posterior variance is exactly
    zero, so the final step is deterministic given x_1.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    x = rng.normal((n, data_dim))
    for t in range(sched.T, 0, -1):
        z = rng.normal((n, latent_dim))
        x0_hat = denoise_fn(x, z, t)
        z_post = rng.normal((n, data_dim))
        x = posterior_sample(x, x0_hat, t, z_post, sched)
    return x
