"""Generate a synthetic burn record and run the full workflow on it.

    python scripts/run_synthetic.py --out runs/syn7 --seed 7
"""

import argparse
import time
from pathlib import Path

from tke_forge.pipeline import PipelineConfig, report_table, run
from tke_forge.synth import SynthConfig, generate, write_bundle


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--plume-gain", type=float, default=3.0)
    ap.add_argument("--noise-sd", type=float, default=0.05)
    args = ap.parse_args()

    syn = SynthConfig(n_samples=args.n, seed=args.seed, plume_gain=args.plume_gain, noise_sd=args.noise_sd)
    write_bundle(generate(syn), args.out)
    cfg = PipelineConfig.from_json(args.out / "config.json")
    t0 = time.perf_counter()
    report = run(cfg)
    print(report_table(report))
    print(f"{time.perf_counter() - t0:.1f} s, outputs in {cfg.out_path}")


if __name__ == "__main__":
    main()
