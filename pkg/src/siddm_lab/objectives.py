"""Training objectives for few-step denoising generators.

Three families share one sampling scheme (clean data, its one-step-earlier
noisy version, and the next forward-diffusion step):

* ``siddm_*``: adversarial matching of the denoised marginal plus an
  explicit forward-consistency (cross-entropy minus estimated-entropy) term
  weighted by ``lambda_afd``, with a denoising-reconstruction regularizer on
  the discriminator.
* ``ddgan_*``: purely adversarial matching of the adjacent-step joint pair.
* ``ddpm_loss``: plain clean-data regression.

Loss builders must run inside an active autodiff ``Graph``; freezing the
parameter sets that a given update must not move is the caller's job
(see ``autodiff.frozen``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor
from .diffusion import NoiseSchedule, posterior_sample, q_sample_marginal, q_sample_step


@dataclass
class BatchContext:
    """One training batch with every noise draw it consumed.

    Draw order (from one rng stream): t, eps_prev, eps_step, z, z_post,
    eps_afd.  Rows with t = 1 have x_prev = x0 exactly.
    """

    x0: np.ndarray
    t: np.ndarray
    eps_prev: np.ndarray
    eps_step: np.ndarray
    x_prev: np.ndarray
    x_t: np.ndarray
    z: np.ndarray
    z_post: np.ndarray
    eps_afd: np.ndarray


def make_batch_context(x0: np.ndarray, sched: NoiseSchedule, rng, latent_dim: int) -> BatchContext:
    n, d = x0.shape
    t = rng.integers(1, sched.T + 1, (n,))
    eps_prev = rng.normal((n, d))
    x_prev = q_sample_marginal(x0, t - 1, eps_prev, sched)
    eps_step = rng.normal((n, d))
    x_t = q_sample_step(x_prev, t, eps_step, sched)
    z = rng.normal((n, latent_dim))
    z_post = rng.normal((n, d))
    eps_afd = rng.normal((n, d))
    return BatchContext(x0=x0, t=t, eps_prev=eps_prev, eps_step=eps_step,
                        x_prev=x_prev, x_t=x_t, z=z, z_post=z_post, eps_afd=eps_afd)


@dataclass
class LossBundle:
    """Per-iteration scalar losses with their component breakdown."""

    d_loss: float = np.nan
    c_loss: float = np.nan
    g_loss: float = np.nan
    components: dict[str, float] = field(default_factory=dict)


def _generate_fake(ctx: BatchContext, G, sched: NoiseSchedule, detach: bool) -> Tensor:
    """Denoised sample x'_{t-1} from the posterior at the predicted clean
    data; optionally cut off from the generator's gradients."""
    x0_hat = G.forward(ctx.x_t, ctx.z, ctx.t)
    fake = posterior_sample(ctx.x_t, x0_hat, ctx.t, ctx.z_post, sched)
    return ad.stop_gradient(fake) if detach else fake


def fake_values(ctx: BatchContext, G, sched: NoiseSchedule) -> np.ndarray:
    """Detached fake batch as a plain array, for reuse across the critic-side
    updates of one iteration (identical to what the loss builders would
    generate internally)."""
    with ad.Graph():
        return _generate_fake(ctx, G, sched, detach=True).data


def _fake_or_build(fake, ctx, G, sched) -> Tensor:
    return tensor(fake) if fake is not None else _generate_fake(ctx, G, sched, detach=True)


def _mean_neg_log_sigmoid(logits: Tensor) -> Tensor:
    return ad.scale(ad.vmean(ad.log_sigmoid(logits)), -1.0)


def _beta_consts(ctx: BatchContext, sched: NoiseSchedule):
    n, d = ctx.x0.shape
    beta = sched.beta[ctx.t]
    sqrt_1mb = np.broadcast_to(np.sqrt(1.0 - beta)[:, None], (n, d)).copy()
    return beta, sqrt_1mb


def _afd_next_step(fake: Tensor, ctx: BatchContext, sqrt_1mb: np.ndarray,
                   beta: np.ndarray) -> Tensor:
    """Forward-diffuse the fake one step with the context's dedicated noise;
    reparameterized, so gradients flow through the fake."""
    noise = np.sqrt(beta)[:, None] * ctx.eps_afd
    return ad.add(ad.mul(fake, tensor(sqrt_1mb)), tensor(noise))


def _per_row_scaled_sq(a: Tensor, b: Tensor, inv_beta: np.ndarray) -> Tensor:
    """mean over rows of ||a - b||^2 / beta_t."""
    per_row = ad.sumsq(ad.sub(a, b), axis=1)
    return ad.vmean(ad.mul(per_row, tensor(inv_beta)))


def siddm_d_loss(ctx: BatchContext, G, D, sched: NoiseSchedule,
                 lambda_reg: float, fake=None) -> tuple[Tensor, dict[str, float]]:
    """Discriminator loss: real/fake adversarial terms on the denoised
    marginal plus the denoising-reconstruction regularizer, which is
    evaluated on real noisy samples only.  Fakes are built under
    stop-gradient (or passed in precomputed), so the generator's gradients
    are exactly zero."""
    fake = _fake_or_build(fake, ctx, G, sched)
    real_out = D.forward(ctx.x_prev, ctx.t)
    fake_out = D.forward(fake, ctx.t)
    adv_real = _mean_neg_log_sigmoid(real_out["adv"])
    adv_fake = _mean_neg_log_sigmoid(ad.scale(fake_out["adv"], -1.0))
    recon = ad.vmean(ad.sumsq(ad.sub(real_out["denoise"], tensor(ctx.x0)), axis=1))
    loss = ad.add(ad.add(adv_real, adv_fake), ad.scale(recon, lambda_reg))
    comps = {
        "adv_real": adv_real.item(),
        "adv_fake": adv_fake.item(),
        "regularizer": recon.item(),
    }
    return loss, comps


def siddm_c_loss(ctx: BatchContext, G, D, sched: NoiseSchedule,
                 fake=None) -> tuple[Tensor, dict[str, float]]:
    """Regression-head loss: predict the next forward-diffusion step of the
    (detached) fake; the optimum is the conditional mean, where the loss
    approaches the data dimension."""
    fake = _fake_or_build(fake, ctx, G, sched)
    beta, sqrt_1mb = _beta_consts(ctx, sched)
    fake_next = _afd_next_step(fake, ctx, sqrt_1mb, beta)
    cpsi = D.forward(fake, ctx.t)["cpsi"]
    loss = _per_row_scaled_sq(cpsi, fake_next, 1.0 / beta)
    return loss, {"c_objective": loss.item()}


def siddm_g_loss(ctx: BatchContext, G, D, sched: NoiseSchedule, lambda_afd: float,
                 adv_mode: str = "nonsaturating", include_adv: bool = True,
                 afd_form: str = "paired") -> tuple[Tensor, dict[str, float]]:
    """Generator loss: adversarial term on the denoised marginal plus the
    weighted forward-consistency term (cross-entropy of the next forward
    step minus the regression-head estimate of its entropy).

    ``afd_form`` selects the cross-entropy estimator.  The default 'paired'
    form scores the fake against the real sample paired with its
    conditioning, (1-b)||x' - x_{t-1}||^2 / b.  The 'nll' variant scores
    the conditioning input itself, ||x_t - sqrt(1-b) x'||^2 / b; the two
    agree in expectation only for fakes independent of the forward noise,
    which a conditional generator is not: under 'nll' the generator is
    rewarded for correlating its output with the noise in x_t, so 'paired'
    is the form that trains correctly.

    The caller must freeze all critic parameters; the fake is fully
    reparameterized so gradients reach the generator through the posterior
    mean and the diffused next step."""
    if not lambda_afd >= 0.0:
        raise ValueError(f"lambda_afd must be nonnegative, got {lambda_afd}")
    if adv_mode not in ("nonsaturating", "saturating"):
        raise ValueError(f"unknown adv_mode '{adv_mode}'")
    if afd_form not in ("paired", "nll"):
        raise ValueError(f"unknown afd_form '{afd_form}'")
    fake = _generate_fake(ctx, G, sched, detach=False)
    out = D.forward(fake, ctx.t)
    if adv_mode == "nonsaturating":
        adv = _mean_neg_log_sigmoid(out["adv"])
    else:
        adv = ad.vmean(ad.log_sigmoid(ad.scale(out["adv"], -1.0)))
    beta, sqrt_1mb = _beta_consts(ctx, sched)
    inv_beta = 1.0 / beta
    fake_next = _afd_next_step(fake, ctx, sqrt_1mb, beta)
    if afd_form == "paired":
        cross_entropy = _per_row_scaled_sq(fake, tensor(ctx.x_prev), (1.0 - beta) / beta)
    else:
        cross_entropy = _per_row_scaled_sq(tensor(ctx.x_t), ad.mul(fake, tensor(sqrt_1mb)),
                                           inv_beta)
    entropy = _per_row_scaled_sq(out["cpsi"], fake_next, inv_beta)
    afd = ad.sub(cross_entropy, entropy)
    comps = {
        "adv_gen": adv.item(),
        "afd_cross_entropy": cross_entropy.item(),
        "afd_entropy": entropy.item(),
    }
    if include_adv:
        loss = ad.add(adv, ad.scale(afd, lambda_afd))
    else:
        loss = ad.scale(afd, lambda_afd)
    return loss, comps


def ddgan_d_loss(ctx: BatchContext, G, D, sched: NoiseSchedule) -> tuple[Tensor, dict[str, float]]:
    """Joint-pair discriminator loss on (x_{t-1}, x_t) vs (fake, x_t)."""
    fake = _generate_fake(ctx, G, sched, detach=True)
    real_out = D.forward(ctx.x_prev, ctx.t, x_pair=ctx.x_t)
    fake_out = D.forward(fake, ctx.t, x_pair=ctx.x_t)
    adv_real = _mean_neg_log_sigmoid(real_out["adv"])
    adv_fake = _mean_neg_log_sigmoid(ad.scale(fake_out["adv"], -1.0))
    loss = ad.add(adv_real, adv_fake)
    return loss, {"adv_real": adv_real.item(), "adv_fake": adv_fake.item()}


def ddgan_g_loss(ctx: BatchContext, G, D, sched: NoiseSchedule,
                 adv_mode: str = "nonsaturating") -> tuple[Tensor, dict[str, float]]:
    fake = _generate_fake(ctx, G, sched, detach=False)
    out = D.forward(fake, ctx.t, x_pair=ctx.x_t)
    if adv_mode == "nonsaturating":
        loss = _mean_neg_log_sigmoid(out["adv"])
    else:
        loss = ad.vmean(ad.log_sigmoid(ad.scale(out["adv"], -1.0)))
    return loss, {"adv_gen": loss.item()}


def ddgan_losses(ctx: BatchContext, G, D, sched: NoiseSchedule) -> dict[str, Tensor]:
    """Both joint-pair losses in one graph (inspection/testing convenience;
    training alternates the two single-loss builders)."""
    d_loss, _ = ddgan_d_loss(ctx, G, D, sched)
    g_loss, _ = ddgan_g_loss(ctx, G, D, sched)
    return {"d_loss": d_loss, "g_loss": g_loss}


def ddpm_loss(ctx: BatchContext, G) -> Tensor:
    """Clean-data regression: mean squared error of the denoiser's
    prediction against x0, with a zeroed latent."""
    z = np.zeros((ctx.x0.shape[0], G.latent_dim))
    x0_hat = G.forward(ctx.x_t, z, ctx.t)
    return ad.vmean(ad.sumsq(ad.sub(x0_hat, tensor(ctx.x0)), axis=1))
