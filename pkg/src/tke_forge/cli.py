"""``tke-forge`` command line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import StageError, TkeForgeError
from .ingest import parse_csv
from .turbulence import DEFAULT_MA_WINDOW, format_augmented_csv, turbulence_series


def _ratios(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected train,test,val ratios")
    return vals


def _add_overrides(p):
    p.add_argument("--config", required=True, type=Path, help="pipeline config (JSON)")
    p.add_argument("--seed", type=int, help="split and model seed")
    p.add_argument("--ma-window", type=int, help="TKE moving-average window")
    p.add_argument("--split", type=_ratios, help="train,test,val ratios, e.g. 0.64,0.16,0.2")
    p.add_argument("--split-mode", choices=("shuffle", "chronological"))
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--paper-activation", action="store_true",
                   help="DNN uses a softmax last hidden layer read out linearly")


def build_parser():
    ap = argparse.ArgumentParser(prog="tke-forge", description="Temperature -> TKE regression toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_overrides(sub.add_parser("run", help="run the full workflow"))
    _add_overrides(sub.add_parser("sweep", help="grid-search the config's sweep lists"))

    s = sub.add_parser("synth", help="write a synthetic burn record and a runnable config")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=5000, help="number of 10 Hz samples")
    s.add_argument("--plume-gain", type=float, default=3.0)
    s.add_argument("--noise-sd", type=float, default=0.05)

    t = sub.add_parser("tke", help="augment a cluster CSV with tke and tke_ma columns")
    t.add_argument("input", type=Path)
    t.add_argument("--ma-window", type=int, default=DEFAULT_MA_WINDOW)
    t.add_argument("--mode", choices=("segment", "rolling"), default="segment")
    t.add_argument("--window", type=int, help="rolling-mean window (rolling mode)")
    t.add_argument("-o", "--output", type=Path, help="write here instead of stdout")
    return ap


def _load_config(args):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.from_json(
        args.config, seed=args.seed, ma_window=args.ma_window, split=args.split,
        split_mode=args.split_mode, output_dir=args.out,
    )
    if args.paper_activation and "mlp" in cfg.models:
        cfg.models["mlp"] = {**cfg.models["mlp"], "activation": "relu_softmax"}
    return cfg


def _cmd_run(args):
    from .pipeline import report_table, run

    cfg = _load_config(args)
    report = run(cfg)
    print(report_table(report))
    print(f"outputs: {cfg.out_path}")


def _cmd_sweep(args):
    from .pipeline import grid_sweep

    cfg = _load_config(args)
    report = grid_sweep(cfg)
    for r in report.sweep:
        if r.rank == 1:
            print(f"{r.model} {r.dataset} best {r.key} cv_r2={r.mean_r2:.4f}")
    print(f"outputs: {cfg.out_path}")


def _cmd_synth(args):
    from .synth import SynthConfig, generate, write_bundle

    cfg = SynthConfig(n_samples=args.n, seed=args.seed, plume_gain=args.plume_gain, noise_sd=args.noise_sd)
    out = write_bundle(generate(cfg), args.out)
    print(f"wrote {out / (cfg.name + '.csv')} and {out / 'config.json'}")


def _cmd_tke(args):
    ds = parse_csv(args.input)
    text = format_augmented_csv(ds, turbulence_series(ds, args.ma_window, args.mode, args.window))
    if args.output:
        args.output.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "synth": _cmd_synth, "tke": _cmd_tke}[args.command]
    try:
        handler(args)
    except StageError as exc:
        print(f"tke-forge: {exc}", file=sys.stderr)
        return 3
    except (TkeForgeError, OSError, json.JSONDecodeError) as exc:
        print(f"tke-forge: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
