"""Wind fluctuations, per-sample turbulent kinetic energy, trailing moving
average and sonic temperature conversions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, EmptyInputError, ParameterError
from .ingest import COLUMNS

DEFAULT_MA_WINDOW = 10


@dataclass(frozen=True)
class WindFluctuation:
    u_p: np.ndarray
    v_p: np.ndarray
    w_p: np.ndarray

    def __len__(self):
        return len(self.u_p)


@dataclass(frozen=True)
class TurbulenceSeries:
    time_s: np.ndarray
    tke: np.ndarray
    tke_ma: np.ndarray | None = None

    def __len__(self):
        return len(self.tke)

    def with_moving_average(self, window=DEFAULT_MA_WINDOW):
        return TurbulenceSeries(self.time_s, self.tke, moving_average(self.tke, window))

    @staticmethod
    def concat(parts):
        parts = list(parts)
        if any(p.tke_ma is None for p in parts):
            ma = None
        else:
            ma = np.concatenate([p.tke_ma for p in parts])
        return TurbulenceSeries(
            np.concatenate([p.time_s for p in parts]),
            np.concatenate([p.tke for p in parts]),
            ma,
        )


@dataclass(frozen=True)
class SonicTempParams:
    gamma: float = 1.4
    R_gas: float = 8.314462618
    molar_mass: float = 0.0289647

    def __post_init__(self):
        if min(self.gamma, self.R_gas, self.molar_mass) <= 0:
            raise ParameterError("sonic temperature parameters must be strictly positive")


def compute_fluctuations(ds, mode="segment", window=None):
    """Deviations of u, v, w from their means.

    ``mode="segment"`` subtracts the mean over the whole dataset (the
    analysis segment). ``mode="rolling"`` subtracts a trailing mean over
    ``window`` samples instead.
    """
    if len(ds) == 0:
        raise EmptyInputError(f"{ds.name}: cannot compute fluctuations of an empty dataset")
    wind = ds.wind
    if mode == "segment":
        dev = wind - wind.mean(axis=0)
    elif mode == "rolling":
        if window is None or window < 1:
            raise ParameterError("rolling mode needs window >= 1")
        means = np.column_stack([_rolling_mean_exact(wind[:, k], window) for k in range(3)])
        dev = wind - means
    else:
        raise ParameterError(f"unknown fluctuation mode {mode!r}")
    return WindFluctuation(dev[:, 0].copy(), dev[:, 1].copy(), dev[:, 2].copy())


def _rolling_mean_exact(x, window):
    # windowed means, not prefix-sum differences: no cancellation on long series
    out = np.empty_like(x)
    head = min(window - 1, len(x))
    out[:head] = np.cumsum(x[:head]) / np.arange(1, head + 1)
    if len(x) >= window:
        out[window - 1:] = sliding_window_view(x, window).mean(axis=1)
    return out


def compute_tke(fl, time_s=None):
    if len(fl) == 0:
        raise EmptyInputError("cannot compute TKE of an empty fluctuation series")
    tke = 0.5 * (fl.u_p ** 2 + fl.v_p ** 2 + fl.w_p ** 2)
    if time_s is None:
        time_s = np.arange(len(tke)) * 0.1
    return TurbulenceSeries(np.asarray(time_s, dtype=float), tke)


def moving_average(x, window=DEFAULT_MA_WINDOW):
    """Trailing mean over ``window`` points with an expanding warm-up, so the
    output has the same length as ``x``."""
    if int(window) != window or window < 1:
        raise ParameterError(f"window must be a positive integer, got {window!r}")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyInputError("moving average of an empty series")
    window = int(window)
    out = _rolling_mean_exact(x, window)
    # summation rounding can push a mean a hair outside the data range
    return np.clip(out, x.min(), x.max())


def turbulence_series(ds, ma_window=DEFAULT_MA_WINDOW, mode="segment", window=None):
    fl = compute_fluctuations(ds, mode=mode, window=window)
    return compute_tke(fl, ds.time_s).with_moving_average(ma_window)


def sonic_speed_to_temperature(c, p=SonicTempParams()):
    """Invert c = sqrt(gamma R T / M); returns Kelvin."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise DomainError("speed of sound must be positive and finite")
    t = c * c * p.molar_mass / (p.gamma * p.R_gas)
    return float(t) if t.ndim == 0 else t


def temperature_to_sonic_speed(T, p=SonicTempParams()):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise DomainError("absolute temperature must be positive")
    c = np.sqrt(p.gamma * p.R_gas * T / p.molar_mass)
    return float(c) if c.ndim == 0 else c


def format_augmented_csv(ds, turb):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS + ("tke", "tke_ma"))
    for row, k, kma in zip(ds.data, turb.tke, turb.tke_ma):
        w.writerow([repr(float(v)) for v in row] + [repr(float(k)), repr(float(kma))])
    return buf.getvalue()
