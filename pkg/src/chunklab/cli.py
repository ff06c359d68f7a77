"""Command-line front end.

Subcommands: synth-gen, train, sweep, trace-eval, report, selftest.
Exit codes: 0 success, 1 usage/config error, 2 numerical abort,
3 trace evaluation completed with skipped records.

Every experiment config key can come from a ``key=value`` config file
(``--config``) and is overridable by the flag of the same name.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ExperimentConfig,
    RunAborted,
    parse_config_file,
    report,
    run_experiment,
    sweep,
    trace_eval,
    worker_count,
    write_manifest,
    write_metrics_csv,
    write_sweep_outputs,
    write_train_log,
)
from .rng import SeededRng
from .synthetic import GeneratorInstance, SynthConfig, save_sample
from .synthetic import sample as draw_sample
from .tape import NonFiniteError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_CONFIG_FLAGS = [
    ("--chunker", str, "boundary-score parameterization: cosine | sigmoid"),
    ("--smoothing", str, "temporal-expansion smoothing: chunk | byte"),
    ("--fusion", str, "stream fusion: none | residual | confidence_ste"),
    ("--c-tar", float, "target compression ratio"),
    ("--c-max", float, "compression cap enforced by boundary promotion"),
    ("--steps", int, "optimization steps per run"),
    ("--lr", float, "AdamW learning rate"),
    ("--beta1", float, "AdamW beta1"),
    ("--beta2", float, "AdamW beta2"),
    ("--eps", float, "AdamW epsilon"),
    ("--weight-decay", float, "AdamW decoupled weight decay"),
    ("--w-mse", float, "reconstruction loss weight"),
    ("--w-ratio", float, "ratio loss weight"),
    ("--w-cab", float, "confidence-alignment loss weight"),
    ("--seeds", str, "comma-separated run seeds"),
    ("--T", int, "sequence length"),
    ("--d-z", int, "latent width"),
    ("--d-x", int, "observation width"),
    ("--d-h", int, "encoder width"),
    ("--sigma", float, "observation noise scale"),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file")
    for flag, kind, help_text in _CONFIG_FLAGS:
        p.add_argument(flag, type=kind, default=None, help=help_text)


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {}
    for flag, _, _ in _CONFIG_FLAGS:
        key = flag.lstrip("-").replace("-", "_")
        val = getattr(args, key)
        if val is None:
            continue
        if key == "seeds":
            val = tuple(int(s) for s in val.split(",") if s.strip())
        overrides[key] = val
    if args.config is not None:
        return parse_config_file(args.config, overrides)
    return ExperimentConfig(**overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chunklab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate synthetic change-point samples (SMB1 containers)")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--count", type=int, default=1, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=int, default=4096)
    p.add_argument("--d-z", type=int, default=64)
    p.add_argument("--d-x", type=int, default=16)
    p.add_argument("--boundary-rate", type=float, default=0.25)
    p.add_argument("--sigma", type=float, default=0.1)

    p = sub.add_parser("train", help="train one variant over the configured seeds")
    _add_config_flags(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("sweep", help="run the four chunker x smoothing variants")
    _add_config_flags(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("trace-eval", help="boundary statistics over JSONL trace files")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--null-mode", choices=["exact", "mc"], default="exact")
    p.add_argument("--mc-shifts", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="digest an experiment directory into report.json")
    p.add_argument("--in-dir", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)

    sub.add_parser("selftest", help="run the gradient and metric oracle suites")
    return parser


def _cmd_synth_gen(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(args.count):
        cfg = SynthConfig(T=args.T, d_z=args.d_z, d_x=args.d_x,
                          boundary_rate=args.boundary_rate, sigma=args.sigma, seed=args.seed + i)
        gen = GeneratorInstance(cfg.d_z, cfg.d_x, SeededRng(cfg.seed, stream=2))
        s = draw_sample(cfg, gen, SeededRng(cfg.seed, stream=0))
        path = args.out_dir / f"sample_{i:04d}.smb1"
        save_sample(path, cfg, s)
        paths.append(path)
        paths.append(path.with_name(path.name + ".json"))
    config = {"command": "synth-gen", "count": args.count, "seed": args.seed, "T": args.T,
              "d_z": args.d_z, "d_x": args.d_x, "boundary_rate": args.boundary_rate, "sigma": args.sigma}
    write_manifest(args.out_dir, config, paths)
    print(f"wrote {args.count} sample(s) to {args.out_dir}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _experiment_config(args)
    logs = run_experiment(cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_train_log(args.out_dir, log) for log in logs]
    write_manifest(args.out_dir, {"command": "train", **cfg.to_dict()}, paths)
    for log in logs:
        s = log.summary
        print(f"{log.variant} seed={log.seed}: mse={s.l_mse:.4f} c_emp={s.c_emp:.3f} f1={s.f1:.3f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    result = sweep(cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for variant in sorted(result.logs):
        for log in result.logs[variant]:
            paths.append(write_train_log(args.out_dir, log))
    paths.extend(write_sweep_outputs(args.out_dir, result))
    write_manifest(args.out_dir, {"command": "sweep", **cfg.to_dict()}, paths)
    for variant in sorted(result.logs):
        finals = sorted(lg.summary.l_mse for lg in result.logs[variant])
        med = finals[len(finals) // 2]
        print(f"{variant}: median final mse={med:.4f} over {len(finals)} seed(s)")
    return EXIT_OK


def _cmd_trace_eval(args) -> int:
    mode = "exact" if args.null_mode == "exact" else "monte_carlo"
    result = trace_eval(args.traces, null_mode=mode, mc_shifts=args.mc_shifts, seed=args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = write_metrics_csv(args.out_dir / "metrics.csv", result.reports + [result.aggregate])
    config = {"command": "trace-eval", "traces": [str(t) for t in args.traces],
              "null_mode": args.null_mode, "mc_shifts": args.mc_shifts, "seed": args.seed}
    write_manifest(args.out_dir, config, [path], extra={"skipped": result.skipped})
    print(f"evaluated {len(result.reports)} trace(s); skipped {len(result.skipped)} record(s)")
    if result.skipped:
        for msg in result.skipped:
            print(f"warning: skipped {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_report(args) -> int:
    path = report(args.in_dir, args.out_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest()
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_NUMERICAL
    print("selftest: all gradient and metric oracle checks passed")
    return EXIT_OK


_COMMANDS = {
    "synth-gen": _cmd_synth_gen,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "trace-eval": _cmd_trace_eval,
    "report": _cmd_report,
    "selftest": _cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RunAborted, NonFiniteError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
