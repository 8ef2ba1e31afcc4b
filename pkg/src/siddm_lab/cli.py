"""Command-line entry point: train, sample, eval, sweep, verify-theorem, plot.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Heavy imports are
deferred until after thread configuration so SIDDM_LAB_THREADS can cap BLAS
parallelism before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _configure_threads() -> None:
    cap = os.environ.get("SIDDM_LAB_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = cap


def _sig6(x: float) -> str:
    return f"{x:.6g}"


def _build_parser() -> _Parser:
    p = _Parser(prog="siddm-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_flags(sp):
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--objective", choices=["siddm", "ddgan", "ddpm", "vanilla_gan"])
        sp.add_argument("--steps", type=int, help="diffusion step count T")
        sp.add_argument("--lambda-afd", help="forward-consistency weight; 'inf' allowed")
        sp.add_argument("--lambda-reg", type=float)
        sp.add_argument("--latent-dim", type=int)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--eval-every", type=int)
        sp.add_argument("--eval-samples", type=int)

    sp = sub.add_parser("train", help="run one training job")
    add_config_flags(sp)

    sp = sub.add_parser("sample", help="draw samples from a checkpoint (EMA params)")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--steps", type=int, help="override the sampling step count")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="samples.csv")

    sp = sub.add_parser("eval", help="score a CSV of samples against the mixture spec")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--grid-k", type=int, default=5)
    sp.add_argument("--spacing", type=float, default=2.0)
    sp.add_argument("--sigma", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0, help="seed of the real reference draw")
    sp.add_argument("--out", help="write the metrics JSON here as well")

    sp = sub.add_parser("sweep", help="ablation sweep over a config axis")
    add_config_flags(sp)
    sp.add_argument("--axis", choices=["lambda_afd", "steps"], required=True)
    sp.add_argument("--values", required=True,
                    help="comma-separated values; 'inf' allowed for lambda_afd")
    sp.add_argument("--out", default="sweep.csv")

    sp = sub.add_parser("verify-theorem", help="random-pair check of the joint bound")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--max-support", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the JSON report array here instead of stdout")

    sp = sub.add_parser("plot", help="SVG scatter of samples over the mode centers")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--out", default="samples.svg")
    sp.add_argument("--grid-k", type=int, default=5)
    sp.add_argument("--spacing", type=float, default=2.0)
    sp.add_argument("--sigma", type=float, default=0.1)

    return p


def _load_config(args) -> "RunConfig":
    from .training import RunConfig

    doc = {}
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            doc = json.load(fh)
    overrides = {
        "seed": args.seed,
        "output_dir": args.out_dir,
        "objective": args.objective,
        "T": args.steps,
        "lambda_reg": args.lambda_reg,
        "latent_dim": args.latent_dim,
        "iters": args.iters,
        "batch_size": args.batch,
        "eval_every": args.eval_every,
        "eval_samples": args.eval_samples,
    }
    if args.lambda_afd is not None:
        overrides["lambda_afd"] = math.inf if args.lambda_afd == "inf" else float(args.lambda_afd)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.from_dict(doc)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _cmd_train(args) -> int:
    from .training import train

    cfg = _load_config(args)
    ckpt, log = train(cfg)
    if log.records:
        last = log.records[-1]
        print(
            f"done: step={ckpt.step} modes={last.modes_covered} "
            f"hq={_sig6(last.hq_fraction)} frechet={_sig6(last.frechet)} "
            f"sliced_w2={_sig6(last.sliced_w2)}"
        )
    else:
        print(f"done: step={ckpt.step} (no evaluations)")
    if not cfg.output_dir:
        print("note: no --out-dir given, checkpoint and run log were not written")
    return 0


def _cmd_sample(args) -> int:
    from .diffusion import ancestral_sample, build_cosine_schedule
    from .evaluation import samples_to_csv
    from .networks import DenoiserNet
    from .rng import Xoshiro256, derive_seed
    from .training import DATA_DIM, atomic_write_text, load_checkpoint

    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    T = args.steps if args.steps is not None else cfg.T
    sched = build_cosine_schedule(T, s=cfg.schedule_s)
    net = DenoiserNet(DATA_DIM, cfg.latent_dim, T, hidden=cfg.hidden,
                      temb_dim=cfg.temb_dim, rng=Xoshiro256(0))
    net.load_state({k[2:]: v for k, v in ckpt.ema_params.items()})
    rng = Xoshiro256(derive_seed(args.seed, 0x5A3B1E))
    x = ancestral_sample(net.predict, sched, args.n, DATA_DIM, cfg.latent_dim, rng)
    lines = ["x,y"] + [f"{float(row[0])!r},{float(row[1])!r}" for row in x]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.n} samples (T={T}) to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import MogSpec, evaluate_samples, metrics_to_json, mog_sample, samples_from_csv
    from .rng import Xoshiro256, derive_seed
    from .training import atomic_write_text

    if not os.path.exists(args.samples):
        raise FileNotFoundError(f"samples file not found: {args.samples}")
    gen = samples_from_csv(args.samples)
    spec = MogSpec(grid_k=args.grid_k, spacing=args.spacing, sigma=args.sigma)
    real = mog_sample(spec, len(gen), Xoshiro256(derive_seed(args.seed, 0x0EA1)))
    rep = evaluate_samples(gen, real, spec)
    text = metrics_to_json(rep)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    print(text)
    print(
        f"modes={rep.modes_covered} hq={_sig6(rep.hq_fraction)} "
        f"frechet={_sig6(rep.frechet)} sliced_w2={_sig6(rep.sliced_w2)}"
    )
    return 0


def _cmd_sweep(args) -> int:
    from .training import ablation_sweep

    cfg = _load_config(args)
    values = []
    for tok in args.values.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if args.axis == "steps":
            values.append(int(tok))
        else:
            values.append(math.inf if tok == "inf" else float(tok))
    if not values:
        raise UsageError("--values must list at least one value")
    rows = ablation_sweep(cfg, args.axis, values, out_csv=args.out)
    for r in rows:
        print(
            f"{args.axis}={r['value']}: frechet={_sig6(r['frechet'])} "
            f"modes={r['modes_covered']} hq={_sig6(r['hq_fraction'])}"
        )
    print(f"wrote sweep table to {args.out}")
    return 0


def _cmd_verify_theorem(args) -> int:
    from .divergences import run_trials
    from .rng import Xoshiro256
    from .training import atomic_write_text

    if args.trials < 0 or args.max_support < 2:
        raise UsageError("need --trials >= 0 and --max-support >= 2")
    reports, summary = run_trials(args.trials, args.max_support, args.seed, Xoshiro256)
    payload = json.dumps([r.to_dict() for r in reports])
    if args.out:
        atomic_write_text(args.out, payload + "\n")
    else:
        print(payload)
    slack = summary["min_slack"]
    slack_txt = "n/a" if slack is None else _sig6(slack)
    print(
        f"trials={summary['trials']} violations={summary['violations']} min_slack={slack_txt}"
    )
    return 0 if summary["violations"] == 0 else 2


def _cmd_plot(args) -> int:
    from .evaluation import MogSpec, samples_from_csv
    from .plots import svg_scatter
    from .training import atomic_write_text

    if not os.path.exists(args.samples):
        raise FileNotFoundError(f"samples file not found: {args.samples}")
    samples = samples_from_csv(args.samples)
    spec = MogSpec(grid_k=args.grid_k, spacing=args.spacing, sigma=args.sigma)
    svg = svg_scatter(samples, centers=spec.centers(),
                      extent=spec.spacing * spec.grid_k / 2.0 + 3.0 * spec.sigma + 0.5)
    atomic_write_text(args.out, svg)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "verify-theorem": _cmd_verify_theorem,
    "plot": _cmd_plot,
}


def run(argv: list[str]) -> int:
    _configure_threads()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
