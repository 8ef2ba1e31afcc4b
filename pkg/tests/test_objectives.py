"""Objective-level tests: loss values at known parameter states, exact
detachment, the forward-consistency decomposition, and full-objective
gradient checks against finite differences."""

import numpy as np
import pytest

import siddm_lab.autodiff as ad
from siddm_lab.autodiff import Graph, backward, frozen, grad_check, tensor
from siddm_lab.diffusion import build_cosine_schedule
from siddm_lab.networks import CriticNet, DenoiserNet
from siddm_lab.objectives import (ddgan_d_loss, ddgan_g_loss, ddgan_losses, ddpm_loss,
                                  fake_values, make_batch_context, siddm_c_loss,
                                  siddm_d_loss, siddm_g_loss)
from siddm_lab.evaluation import MogSpec, mog_sample
from siddm_lab.rng import Xoshiro256

LN2 = np.log(2.0)
TINY = dict(hidden=(8, 8), temb_dim=8)


def _setup(T=4, n=16, seed=0, latent_dim=2, critic_mode="marginal", randomize=False):
    sched = build_cosine_schedule(T)
    rng = Xoshiro256(seed)
    G = DenoiserNet(2, latent_dim, T, rng=rng, **TINY)
    D = CriticNet(2, T, mode=critic_mode, rng=rng, **TINY)
    if randomize:
        for net in (G, D):
            for p in net.params.values():
                p.data = 0.3 * rng.normal(p.data.shape)
    x0 = mog_sample(MogSpec(), n, rng)
    ctx = make_batch_context(x0, sched, rng, latent_dim)
    return sched, G, D, ctx, rng


def test_batch_context_t1_rows_keep_clean_data():
    sched, G, D, ctx, _ = _setup(n=256, seed=3)
    t1 = ctx.t == 1
    assert t1.any()
    assert np.array_equal(ctx.x_prev[t1], ctx.x0[t1])


def test_batch_context_deterministic():
    def build():
        sched = build_cosine_schedule(4)
        rng = Xoshiro256(5)
        x0 = mog_sample(MogSpec(), 32, rng)
        return make_batch_context(x0, sched, rng, 2)

    a, b = build(), build()
    for field in ("x0", "t", "x_prev", "x_t", "z", "z_post", "eps_afd"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_batch_context_marginal_moments():
    sched = build_cosine_schedule(4)
    rng = Xoshiro256(6)
    n = 100_000
    x0 = np.zeros((n, 2))
    ctx = make_batch_context(x0, sched, rng, 0)
    for t in range(1, 5):
        rows = ctx.t == t
        target = 1.0 - sched.alpha_bar[t]
        assert ctx.x_t[rows].var() == pytest.approx(target, rel=0.02)


def test_siddm_d_loss_zero_init_values():
    sched, G, D, ctx, _ = _setup(n=64)
    lam = 0.7
    with Graph():
        loss, comps = siddm_d_loss(ctx, G, D, sched, lambda_reg=lam)
    adv_part = comps["adv_real"] + comps["adv_fake"]
    assert adv_part == pytest.approx(2 * LN2, abs=1e-12)
    expected_reg = np.mean(np.sum(ctx.x0**2, axis=1))
    assert comps["regularizer"] == pytest.approx(expected_reg, rel=1e-12)
    assert loss.item() == pytest.approx(adv_part + lam * expected_reg, rel=1e-12)


def test_siddm_d_loss_lambda_zero_is_pure_marginal_gan():
    sched, G, D, ctx, _ = _setup(n=32, randomize=True)
    with Graph():
        loss, comps = siddm_d_loss(ctx, G, D, sched, lambda_reg=0.0)
    fake = fake_values(ctx, G, sched)
    with Graph():
        real_logit = D.forward(ctx.x_prev, ctx.t)["adv"]
        fake_logit = D.forward(fake, ctx.t)["adv"]
        manual = ad.add(
            ad.scale(ad.vmean(ad.log_sigmoid(real_logit)), -1.0),
            ad.scale(ad.vmean(ad.log_sigmoid(ad.scale(fake_logit, -1.0))), -1.0),
        )
    assert loss.item() == pytest.approx(manual.item(), rel=1e-12)


def test_siddm_d_loss_generator_gradient_exactly_zero():
    sched, G, D, ctx, _ = _setup(n=16, randomize=True)
    with Graph() as g:
        loss, _ = siddm_d_loss(ctx, G, D, sched, lambda_reg=1.0)
    backward(g, loss)
    for name, p in G.params.items():
        assert np.array_equal(p.grad, np.zeros_like(p.data)), name


class _CondMeanCritic:
    """Stub whose regression head returns the exact conditional mean of the
    next forward step (or a caller-supplied map)."""

    def __init__(self, sched, fn=None):
        self.sched = sched
        self.fn = fn

    def forward(self, x, t, x_pair=None):
        n, d = x.data.shape
        if self.fn is not None:
            return {"cpsi": self.fn(x, t)}
        sqrt_1mb = np.sqrt(1.0 - self.sched.beta[np.asarray(t)])[:, None]
        coef = np.broadcast_to(sqrt_1mb, (n, d)).copy()
        return {"cpsi": ad.mul(x, tensor(coef))}


def test_siddm_c_loss_at_conditional_mean_equals_noise_norm():
    sched, G, D, ctx, _ = _setup(n=4096, randomize=True)
    with Graph():
        loss, _ = siddm_c_loss(ctx, G, _CondMeanCritic(sched), sched)
    # residual is sqrt(beta) * eps, so the scaled loss is exactly ||eps||^2
    expected = np.mean(np.sum(ctx.eps_afd**2, axis=1))
    assert loss.item() == pytest.approx(expected, rel=1e-12)
    assert loss.item() == pytest.approx(2.0, rel=0.10)  # data dimension


def test_siddm_c_loss_zero_when_head_predicts_next_step_exactly():
    sched, G, D, ctx, _ = _setup(n=32, randomize=True)
    fake = fake_values(ctx, G, sched)
    beta = sched.beta[ctx.t][:, None]
    target = np.sqrt(1.0 - beta) * fake + np.sqrt(beta) * ctx.eps_afd

    stub = _CondMeanCritic(sched, fn=lambda x, t: tensor(target))
    with Graph():
        loss, _ = siddm_c_loss(ctx, G, stub, sched, fake=fake)
    assert loss.item() == pytest.approx(0.0, abs=1e-18)


def test_siddm_c_loss_generator_gradient_exactly_zero():
    sched, G, D, ctx, _ = _setup(n=16, randomize=True)
    with Graph() as g:
        loss, _ = siddm_c_loss(ctx, G, D, sched)
    backward(g, loss)
    for name, p in G.params.items():
        assert np.array_equal(p.grad, np.zeros_like(p.data)), name


def test_afd_cross_entropy_identity_and_expectation():
    # With the fake replaced by the true previous-step sample, the scaled
    # cross-entropy residual is exactly the forward-step noise.
    sched, G, D, ctx, _ = _setup(n=4096)
    beta = sched.beta[ctx.t]
    ce_rows = np.sum((ctx.x_t - np.sqrt(1.0 - beta)[:, None] * ctx.x_prev) ** 2, axis=1) / beta
    noise_rows = np.sum(ctx.eps_step**2, axis=1)
    assert np.allclose(ce_rows, noise_rows, rtol=1e-10)
    assert ce_rows.mean() == pytest.approx(2.0, rel=0.10)  # data dimension


def test_siddm_g_loss_lambda_zero_reduces_to_adversarial_term():
    sched, G, D, ctx, _ = _setup(n=32, randomize=True)
    with Graph(), frozen(D.params):
        loss, comps = siddm_g_loss(ctx, G, D, sched, lambda_afd=0.0)
    assert loss.item() == pytest.approx(comps["adv_gen"], rel=1e-15)


def test_siddm_g_loss_decomposition_identity():
    sched, G, D, ctx, _ = _setup(n=32, randomize=True)
    lam = 0.73
    with Graph(), frozen(D.params):
        loss, comps = siddm_g_loss(ctx, G, D, sched, lambda_afd=lam)
    reconstructed = comps["adv_gen"] + lam * (comps["afd_cross_entropy"] - comps["afd_entropy"])
    assert loss.item() == reconstructed  # identical float sequence


def test_siddm_g_loss_critic_gradients_exactly_zero():
    sched, G, D, ctx, _ = _setup(n=16, randomize=True)
    with Graph() as g, frozen(D.params):
        loss, _ = siddm_g_loss(ctx, G, D, sched, lambda_afd=1.0)
    backward(g, loss)
    for name, p in D.params.items():
        assert p.grad is None or np.array_equal(p.grad, np.zeros_like(p.data)), name
    # and the generator does receive signal
    assert any(np.abs(p.grad).max() > 0 for p in G.params.values())


def test_siddm_g_loss_rejects_negative_weight_and_bad_mode():
    sched, G, D, ctx, _ = _setup(n=8)
    with Graph(), frozen(D.params):
        with pytest.raises(ValueError):
            siddm_g_loss(ctx, G, D, sched, lambda_afd=-0.1)
        with pytest.raises(ValueError):
            siddm_g_loss(ctx, G, D, sched, lambda_afd=1.0, adv_mode="wrong")


def test_siddm_g_loss_saturating_mode_sign():
    sched, G, D, ctx, _ = _setup(n=32, randomize=True)
    with Graph(), frozen(D.params):
        _, ns = siddm_g_loss(ctx, G, D, sched, 0.0, adv_mode="nonsaturating")
    with Graph(), frozen(D.params):
        _, sat = siddm_g_loss(ctx, G, D, sched, 0.0, adv_mode="saturating")
    # -log(sigmoid(x)) vs log(1 - sigmoid(x)): different values, same sign logic
    assert ns["adv_gen"] > 0.0
    assert sat["adv_gen"] < 0.0


def test_ddgan_zero_init_d_loss():
    sched, G, D, ctx, _ = _setup(critic_mode="joint")
    with Graph():
        losses = ddgan_losses(ctx, G, D, sched)
    assert losses["d_loss"].item() == pytest.approx(2 * LN2, abs=1e-12)
    assert losses["g_loss"].item() == pytest.approx(LN2, abs=1e-12)


def test_ddgan_d_loss_matches_manual_joint_gan():
    sched, G, D, ctx, _ = _setup(critic_mode="joint", randomize=True)
    with Graph():
        loss, _ = ddgan_d_loss(ctx, G, D, sched)
    fake = fake_values(ctx, G, sched)
    with Graph():
        real_logit = D.forward(ctx.x_prev, ctx.t, x_pair=ctx.x_t)["adv"]
        fake_logit = D.forward(fake, ctx.t, x_pair=ctx.x_t)["adv"]
        manual = ad.add(
            ad.scale(ad.vmean(ad.log_sigmoid(real_logit)), -1.0),
            ad.scale(ad.vmean(ad.log_sigmoid(ad.scale(fake_logit, -1.0))), -1.0),
        )
    assert loss.item() == pytest.approx(manual.item(), rel=1e-12)


def test_ddgan_detachment_both_directions():
    sched, G, D, ctx, _ = _setup(critic_mode="joint", randomize=True)
    with Graph() as g:
        d_loss, _ = ddgan_d_loss(ctx, G, D, sched)
    backward(g, d_loss)
    for p in G.params.values():
        assert np.array_equal(p.grad, np.zeros_like(p.data))
    for p in D.params.values():
        p.grad = None  # drop the d-step buffers before inspecting the g step
    with Graph() as g, frozen(D.params):
        g_loss, _ = ddgan_g_loss(ctx, G, D, sched)
    backward(g, g_loss)
    for p in D.params.values():
        assert p.grad is None or np.array_equal(p.grad, np.zeros_like(p.data))


def test_ddgan_T1_pairs_clean_data_with_single_noisy_step():
    sched, G, D, ctx, _ = _setup(T=1, critic_mode="joint", n=64)
    assert np.all(ctx.t == 1)
    assert np.array_equal(ctx.x_prev, ctx.x0)  # the real side is clean data


def test_ddpm_loss_values():
    sched, G, D, ctx, _ = _setup(n=64)
    with Graph():
        loss = ddpm_loss(ctx, G)  # zero-init head predicts 0
    assert loss.item() == pytest.approx(np.mean(np.sum(ctx.x0**2, axis=1)), rel=1e-12)

    class _Oracle:
        latent_dim = 0

        def forward(self, x_t, z, t):
            return tensor(ctx.x0)

    with Graph():
        perfect = ddpm_loss(ctx, _Oracle())
    assert perfect.item() == 0.0


# ------------------------------------------------- full-objective gradients

def _net_grad_check(loss_builder, net, other_frozen, seed, tol, n=4, T=4):
    """Finite-difference check of d loss / d net-params on a tiny instance."""
    sched = build_cosine_schedule(T)
    rng = Xoshiro256(seed)
    G = DenoiserNet(2, 2, T, rng=rng, hidden=(6,), temb_dim=4)
    mode = "joint" if loss_builder in (ddgan_d_loss, ddgan_g_loss) else "marginal"
    D = CriticNet(2, T, mode=mode, rng=rng, hidden=(6,), temb_dim=4)
    for netobj in (G, D):
        for p in netobj.params.values():
            p.data = 0.4 * rng.normal(p.data.shape)
    x0 = mog_sample(MogSpec(), n, rng)
    ctx = make_batch_context(x0, sched, rng, 2)
    target = {"G": G, "D": D}[net]
    names = list(target.params)
    points = [target.params[k].data.copy() for k in names]

    def f(leaves):
        for k, leaf in zip(names, leaves):
            target.params[k] = leaf
        if loss_builder is ddpm_loss:
            return ddpm_loss(ctx, G)
        if loss_builder is siddm_d_loss:
            return siddm_d_loss(ctx, G, D, sched, lambda_reg=0.8)[0]
        if loss_builder is siddm_c_loss:
            return siddm_c_loss(ctx, G, D, sched)[0]
        if loss_builder is siddm_g_loss:
            return siddm_g_loss(ctx, G, D, sched, lambda_afd=1.0)[0]
        if loss_builder is ddgan_d_loss:
            return ddgan_d_loss(ctx, G, D, sched)[0]
        return ddgan_g_loss(ctx, G, D, sched)[0]

    return grad_check(f, points, h=1e-4, tol=tol)


OBJECTIVE_CHECKS = {
    "siddm_d_wrt_D": (siddm_d_loss, "D"),
    "siddm_c_wrt_D": (siddm_c_loss, "D"),
    "siddm_g_wrt_G": (siddm_g_loss, "G"),
    "ddgan_d_wrt_D": (ddgan_d_loss, "D"),
    "ddgan_g_wrt_G": (ddgan_g_loss, "G"),
    "ddpm_wrt_G": (ddpm_loss, "G"),
}


@pytest.mark.parametrize("case", sorted(OBJECTIVE_CHECKS))
def test_full_objective_gradient_single_instance(case):
    builder, net = OBJECTIVE_CHECKS[case]
    report = _net_grad_check(builder, net, None, seed=11, tol=1e-4, n=8)
    assert report["pass"], (case, report)
