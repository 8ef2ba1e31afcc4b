"""MLP denoiser and a shared-trunk critic with adversarial/denoise/regression heads.

Initialization: uniform He-style fan-in scaling for trunk weights, zero
biases, and zero-initialized output heads, so freshly built nets produce
exactly-zero predictions/logits and small reproducible early gradients.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor, tensor


def time_embedding(t, T: int, dim: int = 64) -> np.ndarray:
    """Sinusoidal features of u = t/T with geometric frequencies 1..1000.

    Returns shape (dim,) for scalar t or (n, dim) for a per-row array;
    deterministic, all components in [-1, 1]."""
    if dim % 2 != 0 or dim < 2:
        raise ValueError(f"embedding dim must be even and >= 2, got {dim}")
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 1000.0 ** (np.arange(half) / (half - 1))
    phase = np.multiply.outer(t / T, freqs)
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


def _he_uniform(rng, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return (rng.uniform(shape) * 2.0 - 1.0) * limit


def _init_mlp(rng, in_dim: int, hidden) -> dict[str, Tensor]:
    params = {}
    prev = in_dim
    for i, width in enumerate(hidden):
        params[f"w{i}"] = tensor(_he_uniform(rng, prev, (prev, width)), requires_grad=True)
        params[f"b{i}"] = tensor(np.zeros(width), requires_grad=True)
        prev = width
    return params


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else tensor(x)


def _temb_rows(table: np.ndarray, t, n: int) -> np.ndarray:
    """Per-row lookup into a precomputed (T+1, dim) embedding table."""
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (n,))
    return table[t]


def _mlp_trunk(params: dict[str, Tensor], x: Tensor, n_layers: int, slope: float) -> Tensor:
    h = x
    n = h.data.shape[0]
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, params[f"w{i}"]), ad.broadcast_row(params[f"b{i}"], n))
        h = ad.leaky_relu(h, slope)
    return h


def _linear_head(w: Tensor, b: Tensor, h: Tensor) -> Tensor:
    return ad.add(ad.matmul(h, w), ad.broadcast_row(b, h.data.shape[0]))


def _load_state(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        v = values[name]
        if v.shape != p.data.shape:
            raise ad.ShapeError(f"param '{name}': shape {v.shape} != {p.data.shape}")
        p.data = v.copy()


class DenoiserNet:
    """Predicts clean data from a noisy input, a timestep, and a latent."""

    def __init__(self, data_dim: int, latent_dim: int, T: int, hidden=(256, 256, 256),
                 temb_dim: int = 64, slope: float = 0.2, rng=None):
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.T = T
        self.hidden = tuple(hidden)
        self.temb_dim = temb_dim
        self.slope = slope
        in_dim = data_dim + temb_dim + latent_dim
        self._temb_table = time_embedding(np.arange(T + 1), T, temb_dim)
        self.params = _init_mlp(rng, in_dim, self.hidden)
        self.params["head_w"] = tensor(np.zeros((self.hidden[-1], data_dim)), requires_grad=True)
        self.params["head_b"] = tensor(np.zeros(data_dim), requires_grad=True)

    def forward(self, x_t, z, t) -> Tensor:
        """Autodiff forward; x_t and z may be Tensors or arrays, t scalar or
        per-row."""
        x_t = _as_tensor(x_t)
        z = _as_tensor(z)
        n, d = x_t.data.shape
        if d != self.data_dim or z.data.shape != (n, self.latent_dim):
            raise ad.ShapeError(
                f"denoiser expects x ({n}, {self.data_dim}) and z ({n}, {self.latent_dim}), "
                f"got {x_t.data.shape} and {z.data.shape}"
            )
        temb = _temb_rows(self._temb_table, t, n)
        feats = ad.concat(x_t, tensor(temb), z)
        h = _mlp_trunk(self.params, feats, len(self.hidden), self.slope)
        return _linear_head(self.params["head_w"], self.params["head_b"], h)

    def predict(self, x_t: np.ndarray, z: np.ndarray, t) -> np.ndarray:
        """Gradient-free forward for sampling loops."""
        with Graph():
            with ad.frozen(self.params):
                return self.forward(x_t, z, t).data

    def load_state(self, values: dict[str, np.ndarray]) -> None:
        _load_state(self.params, values)


class CriticNet:
    """Shared MLP trunk with three heads: adversarial logit, a denoising
    reconstruction (the discriminator regularizer target), and a regression
    head estimating the conditional mean of the next forward-diffusion step.

    ``mode='marginal'`` scores single samples; ``mode='joint'`` scores
    adjacent-step pairs (the DDGAN-style conditional discriminator)."""

    def __init__(self, data_dim: int, T: int, mode: str = "marginal", hidden=(256, 256, 256),
                 temb_dim: int = 64, slope: float = 0.2, rng=None):
        if mode not in ("marginal", "joint"):
            raise ValueError(f"unknown critic mode '{mode}'")
        self.data_dim = data_dim
        self.T = T
        self.mode = mode
        self.hidden = tuple(hidden)
        self.temb_dim = temb_dim
        self.slope = slope
        in_dim = (2 * data_dim if mode == "joint" else data_dim) + temb_dim
        self._temb_table = time_embedding(np.arange(T + 1), T, temb_dim)
        self.params = _init_mlp(rng, in_dim, self.hidden)
        w = self.hidden[-1]
        for head, out_dim in (("adv", 1), ("denoise", data_dim), ("cpsi", data_dim)):
            self.params[f"{head}_w"] = tensor(np.zeros((w, out_dim)), requires_grad=True)
            self.params[f"{head}_b"] = tensor(np.zeros(out_dim), requires_grad=True)

    def trunk_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k[0] in "wb" and k[1].isdigit()}

    def head_params(self, head: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(f"{head}_")}

    def discriminator_params(self) -> dict[str, Tensor]:
        """Trunk + adversarial + denoise heads (the discriminator's own update)."""
        out = dict(self.trunk_params())
        out.update(self.head_params("adv"))
        out.update(self.head_params("denoise"))
        return out

    def forward(self, x, t, x_pair=None) -> dict[str, Tensor]:
        """One trunk pass, all three heads.  In joint mode ``x`` is the
        earlier-step sample and ``x_pair`` the later-step sample."""
        x = _as_tensor(x)
        n = x.data.shape[0]
        if x.data.shape[1] != self.data_dim:
            raise ad.ShapeError(f"critic expects width {self.data_dim}, got {x.data.shape}")
        temb = _temb_rows(self._temb_table, t, n)
        if self.mode == "joint":
            if x_pair is None:
                raise ad.ShapeError("joint-mode critic needs the adjacent-step pair")
            x_pair = _as_tensor(x_pair)
            if x_pair.data.shape != x.data.shape:
                raise ad.ShapeError(
                    f"joint pair shape mismatch {x.data.shape} vs {x_pair.data.shape}"
                )
            feats = ad.concat(x, x_pair, tensor(temb))
        else:
            if x_pair is not None:
                raise ad.ShapeError("marginal-mode critic takes a single sample")
            feats = ad.concat(x, tensor(temb))
        h = _mlp_trunk(self.params, feats, len(self.hidden), self.slope)
        return {
            "adv": _linear_head(self.params["adv_w"], self.params["adv_b"], h),
            "denoise": _linear_head(self.params["denoise_w"], self.params["denoise_b"], h),
            "cpsi": _linear_head(self.params["cpsi_w"], self.params["cpsi_b"], h),
        }

    def load_state(self, values: dict[str, np.ndarray]) -> None:
        _load_state(self.params, values)


class EmaParams:
    """Exponential moving average shadow of a parameter set."""

    def __init__(self, params: dict[str, Tensor], decay: float):
        if not (0.0 <= decay < 1.0):
            raise ValueError(f"ema decay must be in [0,1), got {decay}")
        self.decay = decay
        self.shadow = {k: p.data.copy() for k, p in params.items()}

    def update(self, params: dict[str, Tensor]) -> None:
        d = self.decay
        for k, p in params.items():
            s = self.shadow[k]
            s *= d
            s += (1.0 - d) * p.data
