"""Command-line entry point: ``lambda-grpo {train,resume,probe-weights,grad-check,report}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .checkpoint import CheckpointError
from .config import TrainConfig, load_config
from .gradcheck import DEFAULT_DELTA, check_lambda_gradient
from .trainer import METRICS_FILE, Trainer, read_metrics, resume_run
from .weighting import DEFAULT_H_FLOOR, DEFAULT_SCALE_R, Scheme, WeightScheme, compute_weights

log = logging.getLogger("lambda_grpo")


def _number(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _lengths(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lengths must be comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("at least one length is required")
    return vals


def _scheme(text: str) -> str:
    try:
        return Scheme.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _log_progress(every: int):
    def cb(m):
        if every and (m.step + 1) % every == 0:
            log.info("step %d  acc %.3f  reward %.3f  len %.2f  entropy %.3f  lambda %.4f",
                     m.step, m.accuracy, m.mean_reward, m.mean_response_len, m.mean_entropy, m.lambda_)
    return cb


def _plot_run(out_dir: Path):
    from .plotting import plot_metrics

    paths = plot_metrics({out_dir.name: read_metrics(out_dir / METRICS_FILE)}, out_dir)
    for p in paths:
        log.info("wrote %s", p)


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    if overrides:
        config = config.replace(**overrides)
    out_dir = Path(args.out)
    trainer = Trainer(config, out_dir, workers=args.workers, checkpoint_every=args.checkpoint_every,
                      dump_stream=sys.stdout if args.dump_samples else None)
    trainer.on_step = _log_progress(args.log_every)
    trainer.run()
    log.info("finished %d steps; metrics in %s", trainer.step, trainer.metrics_path)
    if args.plot:
        _plot_run(out_dir)
    return 0


def cmd_resume(args) -> int:
    ckpt_path = Path(args.checkpoint)
    out_dir = Path(args.out) if args.out else ckpt_path.parent
    resume_run(ckpt_path, out_dir, workers=args.workers,
               dump_stream=sys.stdout if args.dump_samples else None)
    log.info("resumed run finished; metrics in %s", out_dir / METRICS_FILE)
    if args.plot:
        _plot_run(out_dir)
    return 0


def cmd_probe_weights(args) -> int:
    scheme = WeightScheme(Scheme(args.scheme), scale_r=args.scale_r, h_floor=args.h_floor)
    w = compute_weights(scheme, args.lengths, args.lam)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["index", "length", "h", "g", "s", "f"])
    for i, n in enumerate(args.lengths):
        if w.h is None:
            row = [i, n, "", "", repr(float(w.f[i] / w.f.sum())), repr(float(w.f[i]))]
        else:
            row = [i, n] + [repr(float(v[i])) for v in (w.h, w.g, w.s, w.f)]
        writer.writerow(row)
    if args.plot:
        from .plotting import plot_lambda_effect

        log.info("wrote %s", plot_lambda_effect(args.plot, scale_r=args.scale_r))
    return 0


def cmd_grad_check(args) -> int:
    err = check_lambda_gradient(args.trials, seed=args.seed, delta=args.delta)
    ok = err < args.tol
    print(f"trials={args.trials} delta={args.delta:g} max_relative_error={err:.3e} tol={args.tol:g} "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    from .plotting import plot_metrics

    labels = args.labels.split(",") if args.labels else [Path(p).parent.name or Path(p).stem for p in args.metrics]
    if len(labels) != len(args.metrics):
        raise ValueError("--labels must name every metrics file")
    runs = {label: read_metrics(path) for label, path in zip(labels, args.metrics)}
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["run", "steps", "final_accuracy", "initial_entropy", "final_entropy",
                     "final_response_len", "final_lambda"])
    for label, cols in runs.items():
        n = len(cols["step"])
        if n == 0:
            writer.writerow([label, 0, "", "", "", "", ""])
            continue
        writer.writerow([label, n] + [f"{x:.6f}" for x in (
            cols["accuracy"][-1], cols["mean_entropy"][0], cols["mean_entropy"][-1],
            cols["mean_response_len"][-1], cols["lambda"][-1])])
    for p in plot_metrics(runs, args.out, fmt=args.format):
        log.info("wrote %s", p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lambda-grpo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a seeded training job")
    p.add_argument("--config", help="flat key: value config file")
    p.add_argument("--scheme", type=_scheme, help="grpo | dapo | dr-grpo | lambda-grpo")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="override total_steps")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--dump-samples", action="store_true", help="write rollouts as JSON lines to stdout")
    p.add_argument("--plot", action="store_true", help="render diagnostic figures next to metrics.csv")
    p.add_argument("--log-every", type=int, default=20)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("resume", help="continue a run from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output directory (default: the checkpoint's directory)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-samples", action="store_true")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("probe-weights", help="print per-response weights as CSV")
    p.add_argument("--lengths", type=_lengths, required=True, help="e.g. 10,20")
    p.add_argument("--scheme", type=_scheme, default=Scheme.LAMBDA_GRPO.value)
    p.add_argument("--lambda", dest="lam", type=_number, default=0.0)
    p.add_argument("--scale-r", type=_number, default=DEFAULT_SCALE_R)
    p.add_argument("--h-floor", type=_number, default=DEFAULT_H_FLOOR)
    p.add_argument("--plot", metavar="PATH", help="also render weight-vs-length curves for several lambda")
    p.set_defaults(func=cmd_probe_weights)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference lambda gradient")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("report", help="summarize metrics CSVs and render figures")
    p.add_argument("metrics", nargs="+", help="metrics.csv files")
    p.add_argument("--labels", help="comma-separated run labels")
    p.add_argument("--out", required=True, help="directory for figures")
    p.add_argument("--format", default="png", choices=["png", "pdf", "svg"])
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, OSError, CheckpointError, FloatingPointError) as exc:
        print(f"lambda-grpo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
