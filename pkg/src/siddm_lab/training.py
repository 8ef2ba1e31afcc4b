"""Deterministic alternating-update training loop with EMA, CSV run logs,
and exact-roundtrip JSON checkpoints.

Determinism contract: a run is a pure function of its config.  All noise
flows from one seeded stream (init draws, then per-iteration batch draws);
evaluation sampling uses side streams derived from (seed, tag, iteration)
so logging cadence never perturbs training.  Checkpoints capture params,
EMA shadows, optimizer moments, and the raw rng state, making resumed
training bit-identical to an uninterrupted run.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import (AdamState, Graph, NonFiniteError, ShapeError, adam_step,
                       backward, frozen)
from .diffusion import ancestral_sample, build_cosine_schedule
from .evaluation import MogSpec, evaluate_samples, mog_sample
from .networks import CriticNet, DenoiserNet, EmaParams
from .objectives import (LossBundle, ddgan_d_loss, ddgan_g_loss, ddpm_loss, fake_values,
                         make_batch_context, siddm_c_loss, siddm_d_loss, siddm_g_loss)
from .rng import Xoshiro256, derive_seed

OBJECTIVES = ("siddm", "ddgan", "ddpm", "vanilla_gan")
DATA_DIM = 2
CHECKPOINT_VERSION = 1

_TAG_REF = 0x5EED_0001  # fixed reference sample set for metrics
_TAG_EVAL = 0x5EED_0002  # per-eval generator sampling
_TAG_EVAL_RAW = 0x5EED_0003  # per-eval sampling with raw (non-EMA) params


class TrainingAborted(RuntimeError):
    pass


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass(frozen=True)
class RunConfig:
    objective: str = "siddm"
    T: int = 4
    lambda_afd: float = 1.0  # math.inf disables the adversarial generator term
    lambda_reg: float = 1.0
    adv_mode: str = "nonsaturating"
    afd_form: str = "paired"  # cross-entropy estimator; see siddm_g_loss
    latent_dim: int = 2
    batch_size: int = 512
    iters: int = 50_000
    lr_g: float = 2e-4
    lr_d: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    ema_decay: float = 0.999
    eval_every: int = 1000
    eval_samples: int = 10_000
    eval_raw: bool = False  # also score raw (non-EMA) params at each eval
    seed: int = 0
    hidden: tuple = (256, 256, 256)
    temb_dim: int = 64
    mog_grid_k: int = 5
    mog_spacing: float = 2.0
    mog_sigma: float = 0.1
    schedule_s: float = 0.008
    output_dir: str | None = None

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective '{self.objective}' (choose from {OBJECTIVES})")
        if self.objective == "vanilla_gan" and self.T != 1:
            raise ValueError("vanilla_gan requires T = 1")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not self.lambda_afd >= 0.0:
            raise ValueError(f"lambda_afd must be >= 0, got {self.lambda_afd}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.adv_mode not in ("nonsaturating", "saturating"):
            raise ValueError(f"unknown adv_mode '{self.adv_mode}'")
        if self.afd_form not in ("paired", "nll"):
            raise ValueError(f"unknown afd_form '{self.afd_form}'")
        if self.batch_size < 1 or self.iters < 0 or self.eval_every < 1:
            raise ValueError("batch_size >= 1, iters >= 0, eval_every >= 1 required")
        if self.latent_dim < 0:
            raise ValueError(f"latent_dim must be >= 0, got {self.latent_dim}")

    def mog_spec(self) -> MogSpec:
        return MogSpec(grid_k=self.mog_grid_k, spacing=self.mog_spacing, sigma=self.mog_sigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["lambda_afd"] = "inf" if math.isinf(self.lambda_afd) else self.lambda_afd
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        if str(d.get("lambda_afd")) in ("inf", "Infinity"):
            d["lambda_afd"] = math.inf
        cfg = cls(**d)
        cfg.validate()
        return cfg


RUNLOG_HEADER = [
    "iteration", "d_loss", "c_loss", "g_loss", "adv_real", "adv_fake", "adv_gen",
    "afd_cross_entropy", "afd_entropy", "regularizer",
    "modes_covered", "hq_fraction", "frechet", "sliced_w2", "wall_clock",
]


@dataclass
class RunLogRecord:
    iteration: int
    d_loss: float
    c_loss: float
    g_loss: float
    adv_real: float
    adv_fake: float
    adv_gen: float
    afd_cross_entropy: float
    afd_entropy: float
    regularizer: float
    modes_covered: int
    hq_fraction: float
    frechet: float
    sliced_w2: float
    wall_clock: float
    raw_frechet: float | None = None  # only with eval_raw; not part of the CSV


class RunLog:
    """Append-only per-evaluation records with strictly increasing iteration."""

    def __init__(self):
        self.records: list[RunLogRecord] = []

    def append(self, rec: RunLogRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError(
                f"iterations must increase: {rec.iteration} after {self.records[-1].iteration}"
            )
        self.records.append(rec)

    def to_csv_text(self) -> str:
        lines = [",".join(RUNLOG_HEADER)]
        for r in self.records:
            vals = []
            for col in RUNLOG_HEADER:
                v = getattr(r, col)
                vals.append(str(v) if isinstance(v, int) else repr(float(v)))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def load(cls, path) -> "RunLog":
        log = cls()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != RUNLOG_HEADER:
                raise ValueError(f"unexpected run-log header in {path}")
            for line in fh:
                if not line.strip():
                    continue
                parts = line.strip().split(",")
                kw = dict(zip(RUNLOG_HEADER, parts))
                kw["iteration"] = int(kw["iteration"])
                kw["modes_covered"] = int(kw["modes_covered"])
                for k in RUNLOG_HEADER:
                    if k not in ("iteration", "modes_covered"):
                        kw[k] = float(kw[k])
                log.append(RunLogRecord(**kw))
        return log


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    version: int
    config: RunConfig
    step: int
    rng_state: dict
    params: dict[str, np.ndarray]
    ema_params: dict[str, np.ndarray]
    opt_state: dict


def _array_doc(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.reshape(-1)]}


def _array_from_doc(doc: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in doc["shape"])
        data = doc["data"]
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"malformed tensor entry '{name}': {e}") from e
    expected = int(np.prod(shape)) if shape else 1
    if len(data) != expected:
        raise CheckpointShapeError(
            f"tensor '{name}': shape {list(shape)} expects {expected} values, got {len(data)}"
        )
    return np.array(data, dtype=np.float64).reshape(shape)


def checkpoint_to_json(ckpt: Checkpoint) -> str:
    doc = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "params": {k: _array_doc(v) for k, v in ckpt.params.items()},
        "ema_params": {k: _array_doc(v) for k, v in ckpt.ema_params.items()},
        "opt_state": {
            group: {
                "t": st["t"],
                "m": {k: _array_doc(v) for k, v in st["m"].items()},
                "v": {k: _array_doc(v) for k, v in st["v"].items()},
            }
            for group, st in ckpt.opt_state.items()
        },
    }
    return json.dumps(doc, sort_keys=True)


def checkpoint_from_json(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointFormatError("checkpoint document missing 'version'")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {doc['version']} != supported {CHECKPOINT_VERSION}"
        )
    try:
        config = RunConfig.from_dict(doc["config"])
        params = {k: _array_from_doc(v, k) for k, v in doc["params"].items()}
        ema = {k: _array_from_doc(v, k) for k, v in doc["ema_params"].items()}
        opt = {
            group: {
                "t": int(st["t"]),
                "m": {k: _array_from_doc(v, f"{group}.m.{k}") for k, v in st["m"].items()},
                "v": {k: _array_from_doc(v, f"{group}.v.{k}") for k, v in st["v"].items()},
            }
            for group, st in doc["opt_state"].items()
        }
        return Checkpoint(
            version=doc["version"], config=config, step=int(doc["step"]),
            rng_state=doc["rng_state"], params=params, ema_params=ema, opt_state=opt,
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"malformed checkpoint: {e}") from e


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write_text(path, checkpoint_to_json(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        return checkpoint_from_json(fh.read())


def _grads(params) -> dict[str, np.ndarray]:
    return {k: p.grad for k, p in params.items()}


class _Trainer:
    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.sched = build_cosine_schedule(config.T, s=config.schedule_s)
        self.spec = config.mog_spec()
        self.rng = Xoshiro256(config.seed)
        self.G = DenoiserNet(DATA_DIM, config.latent_dim, config.T, hidden=config.hidden,
                             temb_dim=config.temb_dim, rng=self.rng)
        self.adversarial = config.objective in ("siddm", "ddgan", "vanilla_gan")
        self.D = None
        if self.adversarial:
            mode = "joint" if config.objective == "ddgan" else "marginal"
            self.D = CriticNet(DATA_DIM, config.T, mode=mode, hidden=config.hidden,
                               temb_dim=config.temb_dim, rng=self.rng)
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt = {"g": AdamState(self.G.params, *betas)}
        self.uses_cpsi = config.objective == "siddm"
        if self.adversarial:
            self.opt["d"] = AdamState(self.D.discriminator_params(), *betas)
        if self.uses_cpsi:
            self.opt["c"] = AdamState(self.D.head_params("cpsi"), *betas)
        self.ema = EmaParams(self.G.params, config.ema_decay)
        self.eval_net = DenoiserNet(DATA_DIM, config.latent_dim, config.T,
                                    hidden=config.hidden, temb_dim=config.temb_dim,
                                    rng=Xoshiro256(0))
        self.ref_real = mog_sample(
            self.spec, config.eval_samples, Xoshiro256(derive_seed(config.seed, _TAG_REF))
        )
        # lambda = inf: drop the adversarial generator term, weight the
        # forward-consistency term 1.0 (scale is absorbed by Adam).
        self.adv_in_g = not math.isinf(config.lambda_afd)
        self.lambda_eff = config.lambda_afd if self.adv_in_g else 1.0

    def step(self) -> LossBundle:
        cfg = self.config
        x0 = mog_sample(self.spec, cfg.batch_size, self.rng)
        ctx = make_batch_context(x0, self.sched, self.rng, cfg.latent_dim)
        bundle = LossBundle(d_loss=0.0, c_loss=0.0, g_loss=0.0, components={})
        if cfg.objective == "ddpm":
            with Graph() as g:
                loss = ddpm_loss(ctx, self.G)
            backward(g, loss)
            adam_step(self.G.params, _grads(self.G.params), self.opt["g"], cfg.lr_g)
            bundle.g_loss = loss.item()
        elif cfg.objective == "ddgan":
            with Graph() as g:
                d_loss, d_comps = ddgan_d_loss(ctx, self.G, self.D, self.sched)
            backward(g, d_loss)
            d_params = self.D.discriminator_params()
            adam_step(d_params, _grads(d_params), self.opt["d"], cfg.lr_d)
            with Graph() as g, frozen(self.D.params):
                g_loss, g_comps = ddgan_g_loss(ctx, self.G, self.D, self.sched, cfg.adv_mode)
            backward(g, g_loss)
            adam_step(self.G.params, _grads(self.G.params), self.opt["g"], cfg.lr_g)
            bundle.d_loss = d_loss.item()
            bundle.g_loss = g_loss.item()
            bundle.components = {**d_comps, **g_comps}
        else:  # siddm, vanilla_gan
            lam_reg = 0.0 if cfg.objective == "vanilla_gan" else cfg.lambda_reg
            fake = fake_values(ctx, self.G, self.sched)
            with Graph() as g:
                d_loss, d_comps = siddm_d_loss(ctx, self.G, self.D, self.sched, lam_reg,
                                               fake=fake)
            backward(g, d_loss)
            d_params = self.D.discriminator_params()
            adam_step(d_params, _grads(d_params), self.opt["d"], cfg.lr_d)
            c_comps = {}
            if self.uses_cpsi:
                with Graph() as g, frozen(self.D.discriminator_params()):
                    c_loss, c_comps = siddm_c_loss(ctx, self.G, self.D, self.sched, fake=fake)
                backward(g, c_loss)
                c_params = self.D.head_params("cpsi")
                adam_step(c_params, _grads(c_params), self.opt["c"], cfg.lr_d)
                bundle.c_loss = c_loss.item()
            lam_afd = 0.0 if cfg.objective == "vanilla_gan" else self.lambda_eff
            with Graph() as g, frozen(self.D.params):
                g_loss, g_comps = siddm_g_loss(ctx, self.G, self.D, self.sched, lam_afd,
                                               adv_mode=cfg.adv_mode, include_adv=self.adv_in_g,
                                               afd_form=cfg.afd_form)
            backward(g, g_loss)
            adam_step(self.G.params, _grads(self.G.params), self.opt["g"], cfg.lr_g)
            bundle.d_loss = d_loss.item()
            bundle.g_loss = g_loss.item()
            bundle.components = {**d_comps, **c_comps, **g_comps}
        self.ema.update(self.G.params)
        return bundle

    def _sample_metrics(self, values: dict[str, np.ndarray], seed: int):
        self.eval_net.load_state(values)
        erng = Xoshiro256(seed)
        gen = ancestral_sample(self.eval_net.predict, self.sched, self.config.eval_samples,
                               DATA_DIM, self.config.latent_dim, erng)
        return evaluate_samples(gen, self.ref_real, self.spec)

    def evaluate(self, iteration: int, bundle: LossBundle, t0: float) -> RunLogRecord:
        cfg = self.config
        rep = self._sample_metrics(self.ema.shadow, derive_seed(cfg.seed, _TAG_EVAL, iteration))
        raw_frechet = None
        if cfg.eval_raw:
            raw = self._sample_metrics(
                {k: p.data for k, p in self.G.params.items()},
                derive_seed(cfg.seed, _TAG_EVAL_RAW, iteration),
            )
            raw_frechet = raw.frechet
        comps = bundle.components
        return RunLogRecord(
            iteration=iteration,
            d_loss=bundle.d_loss, c_loss=bundle.c_loss, g_loss=bundle.g_loss,
            adv_real=comps.get("adv_real", 0.0), adv_fake=comps.get("adv_fake", 0.0),
            adv_gen=comps.get("adv_gen", 0.0),
            afd_cross_entropy=comps.get("afd_cross_entropy", 0.0),
            afd_entropy=comps.get("afd_entropy", 0.0),
            regularizer=comps.get("regularizer", 0.0),
            modes_covered=rep.modes_covered, hq_fraction=rep.hq_fraction,
            frechet=rep.frechet, sliced_w2=rep.sliced_w2,
            wall_clock=time.perf_counter() - t0,
            raw_frechet=raw_frechet,
        )

    def make_checkpoint(self, step: int) -> Checkpoint:
        params = {f"g.{k}": p.data.copy() for k, p in self.G.params.items()}
        if self.D is not None:
            params.update({f"d.{k}": p.data.copy() for k, p in self.D.params.items()})
        opt = {}
        for group, st in self.opt.items():
            opt[group] = {
                "t": st.t,
                "m": {k: v.copy() for k, v in st.m.items()},
                "v": {k: v.copy() for k, v in st.v.items()},
            }
        return Checkpoint(
            version=CHECKPOINT_VERSION, config=self.config, step=step,
            rng_state=self.rng.get_state(),
            params=params,
            ema_params={f"g.{k}": v.copy() for k, v in self.ema.shadow.items()},
            opt_state=opt,
        )

    def restore(self, ckpt: Checkpoint) -> None:
        mine = self.config.to_dict()
        theirs = ckpt.config.to_dict()
        # Observation-only fields may change across a resume; anything that
        # feeds the training stream must match.
        for skip in ("iters", "output_dir", "eval_every", "eval_samples", "eval_raw"):
            mine.pop(skip), theirs.pop(skip)
        if mine != theirs:
            raise ValueError("resume config differs from checkpoint config")
        if ckpt.step > self.config.iters:
            raise ValueError(f"checkpoint step {ckpt.step} beyond iters {self.config.iters}")
        try:
            self.G.load_state({k[2:]: v for k, v in ckpt.params.items() if k.startswith("g.")})
            if self.D is not None:
                self.D.load_state(
                    {k[2:]: v for k, v in ckpt.params.items() if k.startswith("d.")})
        except ShapeError as e:
            raise CheckpointShapeError(str(e)) from e
        self.ema.shadow = {k[2:]: v.copy() for k, v in ckpt.ema_params.items()}
        for group, st in self.opt.items():
            saved = ckpt.opt_state[group]
            st.t = saved["t"]
            for k in st.m:
                if saved["m"][k].shape != st.m[k].shape:
                    raise CheckpointShapeError(f"optimizer buffer '{group}.{k}' shape mismatch")
                st.m[k] = saved["m"][k].copy()
                st.v[k] = saved["v"][k].copy()
        self.rng.set_state(ckpt.rng_state)


def train(config: RunConfig, resume_from=None) -> tuple[Checkpoint, RunLog]:
    """Run (or resume) one training job; returns the final checkpoint and the
    evaluation log, writing both to ``config.output_dir`` when set."""
    trainer = _Trainer(config)
    start = 1
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        trainer.restore(ckpt)
        start = ckpt.step + 1
    log = RunLog()
    log_path = None
    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        log_path = os.path.join(config.output_dir, "runlog.csv")
    t0 = time.perf_counter()
    for i in range(start, config.iters + 1):
        try:
            bundle = trainer.step()
        except NonFiniteError as e:
            raise TrainingAborted(f"non-finite loss at iteration {i}: {e}") from e
        if i % config.eval_every == 0 or i == config.iters:
            log.append(trainer.evaluate(i, bundle, t0))
            if log_path:
                log.save(log_path)  # keep long runs inspectable mid-flight
    ckpt = trainer.make_checkpoint(config.iters if start <= config.iters else start - 1)
    if config.output_dir:
        save_checkpoint(os.path.join(config.output_dir, "checkpoint.json"), ckpt)
        if log_path:
            log.save(log_path)
    return ckpt, log


def ablation_sweep(base_config: RunConfig, axis: str, values, out_csv=None) -> list[dict]:
    """One train() per value on a shared base seed; returns (and optionally
    writes) final-eval metrics per value."""
    if axis not in ("lambda_afd", "steps"):
        raise ValueError(f"unknown sweep axis '{axis}' (lambda_afd or steps)")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for v in values:
        if axis == "lambda_afd":
            cfg = replace(base_config, lambda_afd=float(v))
        else:
            cfg = replace(base_config, T=int(v),
                          objective=base_config.objective)
        _, log = train(cfg)
        last = log.records[-1] if log.records else None
        rows.append({
            "axis": axis,
            "value": v,
            "frechet": last.frechet if last else float("nan"),
            "sliced_w2": last.sliced_w2 if last else float("nan"),
            "modes_covered": last.modes_covered if last else -1,
            "hq_fraction": last.hq_fraction if last else float("nan"),
            "iters": cfg.iters,
        })
    if out_csv:
        header = ["axis", "value", "frechet", "sliced_w2", "modes_covered", "hq_fraction", "iters"]
        lines = [",".join(header)]
        for r in rows:
            vals = []
            for col in header:
                v = r[col]
                if isinstance(v, float):
                    vals.append("inf" if math.isinf(v) else repr(v))
                else:
                    vals.append(str(v))
            lines.append(",".join(vals))
        atomic_write_text(out_csv, "\n".join(lines) + "\n")
    return rows
