"""Synthetic burn records with a known temperature -> TKE link.

A fire-front pulse (logistic rise, exponential decay, slow multiplicative
flicker) heats the seven thermocouples with height-dependent attenuation
and lag. The same pulse sets the latent TKE driver
``D(t) = base_tke + plume_gain * P(t)``. Wind fluctuations have magnitude
``sqrt(2 D(t))`` and a direction that wanders as normalized AR(1) noise, so
the per-sample TKE tracks ``D`` up to the sensor noise ``noise_sd``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError
from .ingest import CADENCE_S, THERMOCOUPLE_HEIGHTS_CM, ClusterDataset, format_csv


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 5000
    seed: int = 0
    fire_front_time_s: float = 100.0
    plume_gain: float = 3.0
    noise_sd: float = 0.05
    background_wind_ms: tuple = (2.0, 0.5, 0.0)
    wind_trend_ms_per_s: tuple = (0.0, 0.0, 0.0)
    base_tke: float = 0.2
    rise_s: float = 4.0
    decay_s: float = 90.0
    flicker: float = 0.3
    flicker_time_s: float = 5.0
    ar_coef: float = 0.9
    ambient_C: float = 15.0
    peak_rise_C: float = 25.0
    attenuation_cm: float = 40.0
    lag_s_per_cm: float = 0.03
    temp_noise_C: float = 0.3
    sonic_gain: float = 0.3
    sonic_lag_s: float = 1.0
    name: str = "SYN"

    def __post_init__(self):
        if self.n_samples < 100:
            raise ParameterError("n_samples must be >= 100")
        if self.noise_sd < 0 or self.temp_noise_C < 0 or self.plume_gain < 0:
            raise ParameterError("noise levels and plume_gain must be >= 0")
        if self.base_tke <= 0:
            raise ParameterError("base_tke must be > 0")
        if not 0 <= self.ar_coef < 1:
            raise ParameterError("ar_coef must lie in [0, 1)")
        if min(self.rise_s, self.decay_s, self.flicker_time_s, self.attenuation_cm) <= 0:
            raise ParameterError("time scales must be positive")


@dataclass
class SynthResult:
    dataset: ClusterDataset
    pulse: np.ndarray
    tke_driver: np.ndarray
    config: SynthConfig = field(repr=False)

    def truth_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("time_s", "pulse", "tke_driver"))
        for t, p, d in zip(self.dataset.time_s, self.pulse, self.tke_driver):
            w.writerow((repr(float(t)), repr(float(p)), repr(float(d))))
        return buf.getvalue()


def _ar1(rng, n, coef, dims=1):
    # unit stationary variance
    e = rng.standard_normal((n, dims)) * np.sqrt(1 - coef * coef)
    x0 = rng.standard_normal(dims)
    e[0] = x0
    return lfilter([1.0], [1.0, -coef], e, axis=0)


def _lag(x, k):
    if k <= 0:
        return x
    return np.concatenate([np.full(k, x[0]), x[:-k]])


def pulse_envelope(t, front, rise, decay):
    after = np.maximum(t - front, 0.0)
    return np.exp(-after / decay) / (1.0 + np.exp(-(t - front) / rise))


def generate(cfg=SynthConfig()):
    n = cfg.n_samples
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    flick_rng, dir_rng, temp_rng, wind_rng = streams

    t = np.arange(n) * CADENCE_S
    env = pulse_envelope(t, cfg.fire_front_time_s, cfg.rise_s, cfg.decay_s)
    flick = _ar1(flick_rng, n, np.exp(-CADENCE_S / cfg.flicker_time_s))[:, 0]
    pulse = env * np.maximum(0.0, 1.0 + cfg.flicker * flick)

    temps = []
    for h in THERMOCOUPLE_HEIGHTS_CM:
        lag = int(round(h * cfg.lag_s_per_cm / CADENCE_S))
        amp = cfg.peak_rise_C * np.exp(-h / cfg.attenuation_cm)
        temps.append(cfg.ambient_C + amp * _lag(pulse, lag))
    temps = np.column_stack(temps) + cfg.temp_noise_C * temp_rng.standard_normal((n, 7))
    sonic = (cfg.ambient_C
             + cfg.sonic_gain * cfg.peak_rise_C * _lag(pulse, int(round(cfg.sonic_lag_s / CADENCE_S)))
             + cfg.temp_noise_C * temp_rng.standard_normal(n))

    driver = cfg.base_tke + cfg.plume_gain * pulse
    g = _ar1(dir_rng, n, cfg.ar_coef, dims=3)
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    wind = (np.asarray(cfg.background_wind_ms, dtype=float)
            + np.outer(t, np.asarray(cfg.wind_trend_ms_per_s, dtype=float))
            + np.sqrt(2.0 * driver)[:, None] * direction
            + cfg.noise_sd * wind_rng.standard_normal((n, 3)))

    data = np.column_stack([t, wind, sonic, temps])
    ds = ClusterDataset(cfg.name, data, (f"{cfg.name}.csv",))
    return SynthResult(ds, pulse, driver, cfg)


def write_bundle(result, out_dir):
    """Write the record CSV, ``truth.csv``, a whole-record segmentation and a
    ready-to-run pipeline config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.config.name
    (out / f"{name}.csv").write_text(format_csv(result.dataset), encoding="utf-8")
    (out / "truth.csv").write_text(result.truth_csv(), encoding="utf-8")
    t = result.dataset.time_s
    seg = {"burn_start_s": float(t[0]), "burn_end_s": float(t[-1])}
    (out / "segmentation.json").write_text(json.dumps(seg, indent=2) + "\n", encoding="utf-8")
    cfg = {
        "inputs": {name: f"{name}.csv"},
        "segmentation": "segmentation.json",
        "output_dir": "results",
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    (out / "synth_config.json").write_text(
        json.dumps(asdict(result.config), indent=2) + "\n", encoding="utf-8")
    return out
