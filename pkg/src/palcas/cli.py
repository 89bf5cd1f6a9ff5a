"""Command-line entry point.

Subcommands:
    export-config   dump a preset configuration as JSON
    train           run federated training, writing checkpoints and rounds.csv
    eval            run frozen-policy episodes and write the metric CSVs
    ablate          train + eval with the priority lane-change reward disabled
    bench-inference time decision rounds and write the latency CDF
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from . import config as config_mod
from . import experiment
from .errors import ConfigError, ContractViolation, SchemaError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SCHEMA = 2


def _load_config(path: str) -> config_mod.ExperimentConfig:
    return config_mod.load_file(path)


def _cmd_export_config(args) -> int:
    preset = config_mod.PRESETS[args.preset]()
    text = config_mod.dumps(preset)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    result = experiment.train(cfg, args.out)
    print(f"wrote {result.out_dir / 'rounds.csv'}")
    for name in sorted(result.checkpoint_paths):
        print(f"wrote {result.checkpoint_paths[name]}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    result = experiment.evaluate(cfg, args.checkpoint, args.out)
    for name, mean, std, n in result.report.as_rows():
        shown = "absent" if mean == "" else f"{mean:.4g} +- {std:.4g} (n={n})"
        print(f"{name}: {shown}")
    print(f"wrote {result.out_dir / 'metrics.csv'}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = dataclasses.replace(_load_config(args.config), disable_priority_reward=True)
    out = Path(args.out)
    train_result = experiment.train(cfg, out / "train")
    ckpt = train_result.global_checkpoint or (out / "train" / "checkpoints")
    result = experiment.evaluate(cfg, ckpt, out / "eval")
    print(f"wrote {result.out_dir / 'metrics.csv'}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _load_config(args.config) if args.config else config_mod.desk_preset()
    result = experiment.bench_inference(cfg, args.checkpoint, args.out,
                                        n_rounds=args.rounds, n_cavs=args.cavs)
    print(f"p50={result.p50:.3f} ms  p90={result.p90:.3f} ms  p99={result.p99:.3f} ms")
    print(f"wrote {result.out_dir / 'inference_cdf.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="palcas",
                                     description="priority-aware lane-change advisory harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-config", help="print or write a preset config")
    p.add_argument("--preset", choices=sorted(config_mod.PRESETS), default="desk")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=_cmd_export_config)

    p = sub.add_parser("train", help="run federated training")
    p.add_argument("config")
    p.add_argument("--out", "-o", default="out/train")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run frozen-policy evaluation episodes")
    p.add_argument("config")
    p.add_argument("checkpoint", help="checkpoint file, or directory of agent_XX.ckpt")
    p.add_argument("--out", "-o", default="out/eval")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train + eval with the priority reward off")
    p.add_argument("config")
    p.add_argument("--out", "-o", default="out/ablate")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench-inference", help="time decision rounds")
    p.add_argument("checkpoint", nargs="?", default=None,
                   help="optional checkpoint; fresh weights otherwise")
    p.add_argument("--config", default=None)
    p.add_argument("--out", "-o", default="out/bench")
    p.add_argument("--rounds", type=int, default=3000)
    p.add_argument("--cavs", type=int, default=20)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
