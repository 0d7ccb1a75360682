"""Test R^2 of every model as the plume coupling grows from 0 (no link
between temperature and TKE) upward.

    python scripts/gain_sweep.py --gains 0 1 3 5 --n 3000
"""

import argparse
import tempfile
from pathlib import Path

from tke_forge.pipeline import PipelineConfig, run
from tke_forge.synth import SynthConfig, generate, write_bundle


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gains", type=float, nargs="+", default=[0.0, 1.0, 3.0, 5.0])
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--models", nargs="+", default=["knn", "rf", "gbr", "xgb", "mlp"])
    args = ap.parse_args()

    print("gain  " + "  ".join(f"{m:>6}" for m in args.models))
    for gain in args.gains:
        with tempfile.TemporaryDirectory() as tmp:
            write_bundle(generate(SynthConfig(n_samples=args.n, seed=args.seed, plume_gain=gain)), tmp)
            cfg = PipelineConfig.from_json(Path(tmp) / "config.json", models={m: {} for m in args.models})
            rep = run(cfg, write=False)
        print(f"{gain:4.1f}  " + "  ".join(f"{rep.r2(m, 'SYN', 'test'):6.3f}" for m in args.models))


if __name__ == "__main__":
    main()
