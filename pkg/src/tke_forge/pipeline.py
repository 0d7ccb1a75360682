"""End-to-end workflow: ingest -> segment -> clamp -> TKE -> merge ->
features/split -> correlations -> train -> evaluate -> reports.

Every output is first written to a staging directory and promoted into
``output_dir`` only when the whole run succeeds; a failed run leaves its
partial outputs under ``output_dir/quarantine``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import platform
import shutil
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MissingCellError, ParameterError, StageError
from .ingest import PhaseSegmentation, clamp_outliers, merge_clusters, parse_csv, segment_phases
from .preprocess import (
    DEFAULT_RATIOS,
    SPLITS,
    assemble,
    fit_scaler,
    format_features_csv,
    shuffle_split_cv,
    split,
)
from .regressors import KINDS, RegressorSpec, fit, predict
from .regressors.trees import default_threads
from .stats import CORR_VARIABLES, correlation_matrix, evaluate, kde, mse, r_squared
from .turbulence import DEFAULT_MA_WINDOW, TurbulenceSeries, format_augmented_csv, turbulence_series

log = logging.getLogger("tke_forge")

MODEL_LABELS = {"mlp": "DNN", "rf": "RFR", "knn": "KNN", "gbr": "GBR", "gpr": "GPR", "xgb": "XGB"}
REPORT_ORDER = ("mlp", "rf", "knn", "gbr", "gpr", "xgb")
LOG_NAME = "run.log.jsonl"


@dataclass
class PipelineConfig:
    inputs: dict
    merges: dict = field(default_factory=dict)
    datasets: list | None = None
    segmentation: dict | str | None = None
    phase: str = "burn"
    clamp: list | None = field(default_factory=lambda: [-50.0, 50.0])
    ma_window: int = DEFAULT_MA_WINDOW
    fluctuation_mode: str = "segment"
    fluctuation_window: int | None = None
    split: list = field(default_factory=lambda: list(DEFAULT_RATIOS))
    split_mode: str = "shuffle"
    seed: int = 42
    models: dict | None = None
    output_dir: str = "results"
    sweep: dict = field(default_factory=dict)
    cv_folds: int = 5
    cv_train_frac: float = 0.8
    base_dir: str = "."

    def __post_init__(self):
        if not self.inputs:
            raise ParameterError("config needs at least one input file")
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise ParameterError(f"split ratios must be three values summing to 1, got {self.split}")
        if self.models is None:
            self.models = {k: {} for k in KINDS}
        for k in self.models:
            if k not in KINDS:
                raise ParameterError(f"unknown model {k!r}")
        for name, parts in self.merges.items():
            missing = [p for p in parts if p not in self.inputs]
            if missing or len(parts) < 2:
                raise ParameterError(f"merge {name!r} must name two or more inputs; unknown: {missing}")
        if self.datasets is None:
            self.datasets = list(self.inputs) + list(self.merges)
        for d in self.datasets:
            if d not in self.inputs and d not in self.merges:
                raise ParameterError(f"dataset {d!r} is neither an input nor a merge")
        for name, path in self.inputs.items():
            if not self.resolve(path).is_file():
                raise ParameterError(f"input {name!r}: {self.resolve(path)} does not exist")

    @classmethod
    def from_json(cls, path, **overrides):
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        obj.setdefault("base_dir", str(path.parent))
        obj.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ParameterError(f"bad config: {exc}") from None

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_path(self):
        return self.resolve(self.output_dir)

    def model_kinds(self):
        return [k for k in KINDS if k in self.models]

    def canonical(self):
        d = asdict(self)
        d.pop("base_dir")
        d["models"] = {k: RegressorSpec(k, v).params for k, v in sorted(self.models.items())}
        return d

    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class EvaluationReport:
    metrics: dict = field(default_factory=dict)        # (model, dataset, split) -> MetricsReport
    residuals: dict = field(default_factory=dict)      # (model, dataset, split) -> array
    kde: dict = field(default_factory=dict)            # (model, dataset) -> KdeCurve
    predictions: dict = field(default_factory=dict)    # (model, dataset) -> (y, y_hat, split)
    correlations: dict = field(default_factory=dict)   # dataset -> (pearson, spearman)
    models: list = field(default_factory=list)
    datasets: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def r2(self, model, dataset, split_name):
        try:
            return self.metrics[(model, dataset, split_name)].r2
        except KeyError:
            raise MissingCellError(model, dataset, split_name) from None


def derived_seed(seed, dataset, kind):
    ss = np.random.SeedSequence([int(seed), zlib.crc32(dataset.encode()), KINDS.index(kind)])
    return int(ss.generate_state(1)[0])


def _fmt(x):
    return repr(float(x))


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("start", extra={"stage": self.name})
        return self

    def __exit__(self, et, ev, tb):
        dt = round(time.perf_counter() - self.t0, 3)
        if ev is None:
            log.info("done", extra={"stage": self.name, "seconds": dt})
            return False
        if isinstance(ev, StageError):
            return False
        log.error(str(ev), extra={"stage": self.name, "seconds": dt})
        raise StageError(self.name, ev) from ev


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        obj = {"level": record.levelname, "msg": record.getMessage(),
               "stage": getattr(record, "stage", None)}
        for k in ("seconds", "dataset", "model"):
            if hasattr(record, k):
                obj[k] = getattr(record, k)
        return json.dumps(obj, sort_keys=True)


# stages --------------------------------------------------------------------

def _segmentation_for(cfg, name):
    seg = cfg.segmentation
    if seg is None:
        return None
    if isinstance(seg, str):
        return PhaseSegmentation.from_json(cfg.resolve(seg))
    if "burn_start_s" in seg:
        return PhaseSegmentation.from_dict(seg)
    per = seg.get(name)
    if per is None:
        return None
    return PhaseSegmentation.from_json(cfg.resolve(per)) if isinstance(per, str) \
        else PhaseSegmentation.from_dict(per)


def prepare_tables(cfg, staging=None):
    """Run the data stages and return ``{dataset: FeatureTable}`` with split
    labels attached."""
    with _Stage("ingest"):
        raw = {name: parse_csv(cfg.resolve(path), name) for name, path in cfg.inputs.items()}
    with _Stage("segment"):
        seg = {}
        for name, ds in raw.items():
            s = _segmentation_for(cfg, name)
            seg[name] = segment_phases(ds, s, cfg.phase) if s is not None else ds.replace(phase=cfg.phase)
    with _Stage("clamp"):
        if cfg.clamp is not None:
            seg = {n: clamp_outliers(ds, *cfg.clamp) for n, ds in seg.items()}
    with _Stage("turbulence"):
        turb = {n: turbulence_series(ds, cfg.ma_window, cfg.fluctuation_mode, cfg.fluctuation_window)
                for n, ds in seg.items()}
        if staging is not None:
            for n in seg:
                (staging / f"tke_{n}.csv").write_text(format_augmented_csv(seg[n], turb[n]))
    with _Stage("merge"):
        for name, parts in cfg.merges.items():
            ds = seg[parts[0]]
            for p in parts[1:]:
                ds = merge_clusters(ds, seg[p])
            seg[name] = ds.replace(name=name)
            turb[name] = TurbulenceSeries.concat(turb[p] for p in parts)
    with _Stage("features"):
        tables = {}
        for name in cfg.datasets:
            t = assemble(seg[name], turb[name], name)
            tables[name] = split(t, cfg.seed, cfg.split, cfg.split_mode)
            if staging is not None:
                (staging / f"features_{name}.csv").write_text(format_features_csv(tables[name]))
    return tables


def train_and_predict(table, kind, params, seed, fit_kwargs=None):
    """Fit one model on the table's train rows (scaled with train statistics)
    and predict every row."""
    Xtr, ytr = table.rows("train")
    scaler = fit_scaler(Xtr)
    model = fit(RegressorSpec(kind, params, seed), scaler.transform(Xtr), ytr, **(fit_kwargs or {}))
    return model, predict(model, scaler.transform(table.X))


def _correlations(tables, staging):
    out = {}
    for name, t in tables.items():
        out[name] = correlation_matrix(np.column_stack([t.X, t.y]))
    for idx, fname in ((0, "corr_pearson.csv"), (1, "corr_spearman.csv")):
        rows = []
        for name, mats in out.items():
            M = mats[idx]
            rows += [[name, v] + [_fmt(x) for x in M[i]] for i, v in enumerate(CORR_VARIABLES)]
        if staging is not None:
            (staging / fname).write_text(_csv(rows, ("dataset", "variable") + CORR_VARIABLES))
    return out


def _threads():
    return default_threads()


def _train_all(cfg, tables, hooks):
    jobs = [(d, k) for d in cfg.datasets for k in cfg.model_kinds()]

    def job(dk):
        d, k = dk
        kw = {}
        if k == "mlp" and hooks and "mlp_epoch" in hooks:
            cb = hooks["mlp_epoch"]
            kw["callback"] = lambda epoch, model: cb(d, epoch, model)
        t0 = time.perf_counter()
        model, yhat = train_and_predict(tables[d], k, cfg.models[k], derived_seed(cfg.seed, d, k), kw)
        log.info("trained", extra={"stage": "train", "dataset": d, "model": k,
                                   "seconds": round(time.perf_counter() - t0, 3)})
        return model, yhat

    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            results = list(ex.map(job, jobs))
    else:
        results = [job(j) for j in jobs]
    return dict(zip(jobs, results))


def _evaluate(cfg, tables, trained, report, staging):
    rows = []
    for d in cfg.datasets:
        t = tables[d]
        for k in cfg.model_kinds():
            _, yhat = trained[(d, k)]
            report.predictions[(k, d)] = (t.y, yhat, t.split)
            for s in SPLITS:
                m = t.split == s
                rep = evaluate(t.y[m], yhat[m])
                report.metrics[(k, d, s)] = rep
                report.residuals[(k, d, s)] = t.y[m] - yhat[m]
                rows.append([k, d, s, _fmt(rep.r2), _fmt(rep.mse), _fmt(rep.mae)])
            curve = kde(report.residuals[(k, d, "test")])
            report.kde[(k, d)] = curve
            if staging is not None:
                (staging / f"kde_{k}_{d}.csv").write_text(
                    _csv(zip(map(_fmt, curve.grid), map(_fmt, curve.density)), ("residual", "density")))
                (staging / f"pred_{k}_{d}.csv").write_text(_csv(
                    ([i, _fmt(tt), s, _fmt(a), _fmt(p)]
                     for i, (tt, s, a, p) in enumerate(zip(t.time_s, t.split, t.y, yhat))),
                    ("row", "time_s", "split", "actual", "predicted")))
    if staging is not None:
        (staging / "metrics.csv").write_text(_csv(rows, ("model", "dataset", "split", "r2", "mse", "mae")))


def _versions():
    import scipy

    return {"tke_forge": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _manifest(cfg, staging):
    files = {}
    for p in sorted(staging.iterdir()):
        if p.is_file() and p.name not in ("manifest.json", LOG_NAME):
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return {"config_hash": cfg.config_hash(), "config": cfg.canonical(),
            "versions": _versions(), "outputs": files}


class _Run:
    """Staging directory lifecycle and the run's JSON-lines log handler."""

    def __init__(self, cfg, write):
        self.cfg = cfg
        self.write = write
        self.staging = None

    def __enter__(self):
        if not self.write:
            return self
        out = self.cfg.out_path
        out.mkdir(parents=True, exist_ok=True)
        self.staging = out / ".staging"
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir()
        self.handler = logging.FileHandler(self.staging / LOG_NAME, encoding="utf-8")
        self.handler.setFormatter(JsonLineFormatter())
        log.addHandler(self.handler)
        if log.level == logging.NOTSET or log.level > logging.INFO:
            log.setLevel(logging.INFO)
        return self

    def __exit__(self, et, ev, tb):
        if not self.write:
            return False
        log.removeHandler(self.handler)
        self.handler.close()
        out = self.cfg.out_path
        if ev is None:
            for p in self.staging.iterdir():
                target = out / p.name
                if target.is_dir():
                    shutil.rmtree(target)
                p.replace(target)
            self.staging.rmdir()
        else:
            q = out / "quarantine"
            if q.exists():
                shutil.rmtree(q)
            self.staging.rename(q)
            (q / "error.json").write_text(json.dumps(
                {"stage": getattr(ev, "stage", None), "error": str(ev)}, indent=2) + "\n")
        return False


def run(cfg, hooks=None, write=True):
    """Execute the full workflow. Returns the :class:`EvaluationReport`;
    raises :class:`StageError` tagged with the failing stage."""
    report = EvaluationReport(models=cfg.model_kinds(), datasets=list(cfg.datasets))
    with _Run(cfg, write) as r:
        staging = r.staging
        tables = prepare_tables(cfg, staging)
        with _Stage("correlation"):
            report.correlations = _correlations(tables, staging)
        with _Stage("train"):
            trained = _train_all(cfg, tables, hooks)
        with _Stage("evaluate"):
            _evaluate(cfg, tables, trained, report, staging)
        with _Stage("report"):
            if staging is not None:
                (staging / "report.txt").write_text(report_table(report) + "\n")
                report.manifest = _manifest(cfg, staging)
                (staging / "manifest.json").write_text(
                    json.dumps(report.manifest, indent=2, sort_keys=True) + "\n")
    return report


# reporting ----------------------------------------------------------------

def format_percent(r2):
    """R^2 as a percentage with one decimal, rounded half away from zero."""
    d = (Decimal(repr(float(r2))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    if d == 0:
        d = abs(d)
    return f"{d:.1f}"


def report_table(report, datasets=None, models=None):
    """Test and validation R^2 (%) blocks: one row per model, one column per
    dataset."""
    datasets = list(datasets or report.datasets)
    models = [m for m in REPORT_ORDER if m in (models or report.models)]
    width = max(7, *(len(d) + 1 for d in datasets))
    lines = []
    head = "ML Models".ljust(10) + "".join(d.rjust(width) for d in datasets)
    for title, s in (("Test (%)", "test"), ("Validation (%)", "val")):
        lines += [title.center(len(head)), head]
        for m in models:
            cells = [format_percent(report.r2(m, d, s)) for d in datasets]
            lines.append(MODEL_LABELS[m].ljust(10) + "".join(c.rjust(width) for c in cells))
    return "\n".join(lines)


# grid sweep ---------------------------------------------------------------

@dataclass
class SweepRow:
    model: str
    dataset: str
    params: dict
    mean_r2: float
    mean_mse: float
    rank: int = 0

    @property
    def key(self):
        return json.dumps(self.params, sort_keys=True)


def sweep_points(grid):
    names = sorted(grid)
    values = [grid[n] if isinstance(grid[n], list) else [grid[n]] for n in names]
    points = [dict(zip(names, combo)) for combo in itertools.product(*values)]
    if not points:
        raise ParameterError("sweep grid is empty")
    return points


def cv_score(table, kind, params, seed, folds):
    r2s, mses = [], []
    for fit_idx, eval_idx in folds:
        scaler = fit_scaler(table.X[fit_idx])
        model = fit(RegressorSpec(kind, params, seed), scaler.transform(table.X[fit_idx]), table.y[fit_idx])
        yhat = predict(model, scaler.transform(table.X[eval_idx]))
        r2s.append(r_squared(table.y[eval_idx], yhat))
        mses.append(mse(table.y[eval_idx], yhat))
    return float(np.mean(r2s)), float(np.mean(mses))


def rank_rows(rows):
    rows = sorted(rows, key=lambda r: (-r.mean_r2, r.mean_mse, r.key))
    for i, r in enumerate(rows, 1):
        r.rank = i
    return rows


def grid_sweep(cfg, tables=None, write=True):
    """Evaluate every grid point with shuffle-split CV on the train+test rows,
    rank them, then refit the best point per (model, dataset) exactly as
    :func:`run` would and report its metrics."""
    if not cfg.sweep:
        raise ParameterError("config has no sweep lists")
    result_rows, best_params = [], {}
    report = EvaluationReport(datasets=list(cfg.datasets))
    with _Run(cfg, write) as r:
        staging = r.staging
        if tables is None:
            tables = prepare_tables(cfg, staging)
        with _Stage("sweep"):
            for kind in [k for k in KINDS if k in cfg.sweep]:
                base = dict(cfg.models.get(kind, {}))
                for d in cfg.datasets:
                    folds = shuffle_split_cv(tables[d], cfg.cv_folds, cfg.cv_train_frac, cfg.seed)
                    seed = derived_seed(cfg.seed, d, kind)
                    rows = []
                    for point in sweep_points(cfg.sweep[kind]):
                        params = {**base, **point}
                        r2_, mse_ = cv_score(tables[d], kind, params, seed, folds)
                        rows.append(SweepRow(kind, d, point, r2_, mse_))
                    rows = rank_rows(rows)
                    best_params[(kind, d)] = {**base, **rows[0].params}
                    result_rows += rows
                report.models.append(kind)
        with _Stage("refit"):
            trained = {}
            for (kind, d), params in best_params.items():
                trained[(d, kind)] = train_and_predict(tables[d], kind, params, derived_seed(cfg.seed, d, kind))
            refit_cfg = replace(cfg, models={k: best_params[(k, cfg.datasets[0])] for k in report.models})
            _evaluate(refit_cfg, tables, trained, report, staging)
        if staging is not None:
            (staging / "sweep.csv").write_text(_csv(
                ([r.model, r.dataset, r.key, _fmt(r.mean_r2), _fmt(r.mean_mse), r.rank] for r in result_rows),
                ("model", "dataset", "params", "mean_cv_r2", "mean_cv_mse", "rank")))
            report.manifest = _manifest(cfg, staging)
            (staging / "manifest.json").write_text(json.dumps(report.manifest, indent=2, sort_keys=True) + "\n")
    report.sweep = result_rows
    report.best_params = best_params
    return report
