"""Command-line entry point: ``densegan <subcommand> ...``.

Exit status is 0 when the command completed and every internal check
passed, 1 on runtime errors or failed checks, and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import arch, data, gradcheck, metrics, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _describe(args) -> int:
    try:
        spec = arch.get_arch(args.name)
    except KeyError:
        print(f"unknown architecture {args.name!r}; known: {', '.join(arch.REGISTRY)}", file=sys.stderr)
        return 2
    if args.batch < 1:
        print("--batch must be positive", file=sys.stderr)
        return 2
    print("\n".join(arch.describe(spec, args.batch)))
    return 0


def _train(args) -> int:
    config = None if args.resume else train.TrainConfig.from_file(args.config)
    until = args.steps
    state = train.train_loop(config, args.out, resume=args.resume, until=until)
    print(f"finished at step {state.step}; metrics in {Path(args.out) / 'metrics.csv'}")
    return 0


def _eval(args) -> int:
    surrogate_path = Path(args.surrogate)
    if not surrogate_path.exists():
        raise FileNotFoundError(f"surrogate classifier not found: {surrogate_path} (create one with train-surrogate)")
    clf = metrics.SurrogateClassifier.load(surrogate_path)
    state = train.load_checkpoint(args.checkpoint, load_data=False)
    if state.config.is_toy:
        raise ValueError("eval needs an image checkpoint; toy runs have no classifier geometry")
    score = metrics.score_generator(state.generator, clf, args.samples, args.splits, args.seed)
    print(f"{state.config.arch_name} step {state.step}: inception score {score[0]:.6f} +- {score[1]:.6f} "
          f"(surrogate {clf.hash})")
    if args.report:
        metrics.append_score_report(args.report, state.config.arch_name, state.step, score, args.samples,
                                    args.splits, clf.hash)
    return 0


def _train_surrogate(args) -> int:
    images, labels = data.load_cifar10(args.data_dir, train=True, limit=args.train + args.heldout)
    clf = metrics.train_surrogate(images, labels, args.epochs, seed=args.seed,
                                  heldout_fraction=args.heldout / len(images))
    clf.save(args.out)
    print(f"surrogate {clf.hash}: held-out accuracy {clf.heldout_accuracy:.4f}; saved to {args.out}")
    return 0


def _gradcheck(args) -> int:
    failed = False
    for seed in range(args.seed, args.seed + args.seeds):
        for name, err in gradcheck.run_suite(seed).items():
            ok = err < gradcheck.TOLERANCE
            failed |= not ok
            print(f"seed {seed}  {name:<28} max_rel_err {err:.3e}  {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="densegan", description="Fisher GAN training with dense skip-connected generators.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("describe-arch", help="print the layer size table of a registry architecture")
    p.add_argument("name")
    p.add_argument("--batch", type=int, default=64)
    p.set_defaults(func=_describe)

    p = sub.add_parser("train", help="run or resume a training loop")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="key = value config file")
    src.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", default="runs/latest", help="output directory (metrics.csv, checkpoints)")
    p.add_argument("--steps", type=int, default=None, help="stop at this generator step instead of total_gen_steps")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="inception score of a checkpoint's generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--surrogate", default="surrogate.npz")
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="append a row to this score CSV")
    p.set_defaults(func=_eval)

    p = sub.add_parser("train-surrogate", help="fit the surrogate classifier on a CIFAR-10 subset")
    p.add_argument("--data-dir", default="data/cifar-10-batches-bin")
    p.add_argument("--out", default="surrogate.npz")
    p.add_argument("--train", type=int, default=5000)
    p.add_argument("--heldout", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_train_surrogate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")
    p.set_defaults(func=_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, train.DivergenceError) as exc:
        print(f"densegan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
