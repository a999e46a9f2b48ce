"""Experiment wiring: method grid, single-method runs, grid search and comparisons."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from . import storage
from .arrange import ARRANGEMENTS, GaussianForecast
from .baselines import fit, forecast_gaussian
from .data import SeriesPanel, SyntheticParams, generate_synthetic, ingest_csv
from .hierarchy import HierarchySpec, build_summing_matrix, fig1_hierarchy
from .metrics import EvalReport, McbResult, evaluate, mcb
from .neural import TrainConfig, forecast, harden_bottom_up, predictive_incoherence, save_model, train
from .reconcile import build_bu, build_mint, build_td, reconcile_samples, reconciler_matrix

log = logging.getLogger(__name__)

BASE_KINDS = {"ar": "ar", "arima": "ar", "ets": "ses", "ses": "ses", "holt": "holt"}
RECONCILERS = {("bu", "none"), ("td", "none"), ("none", "none"), ("mint", "struct"), ("mint", "ols")}
NEURAL = ("deepar-hier", "pure-deepar")
DEFAULT_METHODS = list(NEURAL) + [f"{b}-{a}-{r}" for b in ("ar", "ets") for a in ("stack", "rank", "random")
                                for r in ("mint-struct", "bu-none")]
# allowed ranges for the searchable network settings
GRID_BOUNDS = {"hidden": (10, 30), "layers": (2, 5), "dropout": (0.1, 0.2), "epochs": (20, 60), "lam": (0.0, np.inf)}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class MethodSpec:
    label: str
    neural: bool
    base: str | None = None
    arrangement: str | None = None
    reconciler: str | None = None
    covariance: str | None = None


def parse_method(label: str) -> MethodSpec:
    label = label.strip().lower()
    if label in NEURAL:
        return MethodSpec(label, True)
    parts = label.split("-")
    if len(parts) != 4:
        raise ValueError(f"method {label!r} is not 'deepar-hier', 'pure-deepar' or base-arrangement-reconciler-covariance")
    base, arr, rec, cov = parts
    if base not in BASE_KINDS:
        raise ValueError(f"unknown base forecaster {base!r}")
    if arr not in ARRANGEMENTS:
        raise ValueError(f"unknown arrangement {arr!r}")
    if (rec, cov) not in RECONCILERS:
        raise ValueError(f"invalid reconciler/covariance pair {rec}-{cov}")
    return MethodSpec(label, False, base, arr, rec, cov)


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synthetic": {}})
    horizon: int = 8
    validation_folds: int = 3
    methods: list[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    ar_order: int = 4
    samples: int = 500
    seed: int = 0
    train: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    output: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def validate(self) -> None:
        for m in self.methods:
            parse_method(m)
        if self.samples < 2:
            raise ValueError("samples must be at least 2")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        self.train_config()  # raises on bad options
        for key, values in self.grid.items():
            if key not in TrainConfig.__dataclass_fields__:
                raise ValueError(f"unknown grid key {key!r}")
            lo, hi = GRID_BOUNDS.get(key, (-np.inf, np.inf))
            for v in values:
                if not lo <= v <= hi:
                    raise ValueError(f"grid value {key}={v} outside [{lo}, {hi}]")

    def train_config(self, **overrides) -> TrainConfig:
        opts = {"horizon": self.horizon, "seed": self.seed}
        synth = self.data.get("synthetic")
        if synth is not None and synth.get("seasonal_period"):
            opts["seasonal_period"] = synth["seasonal_period"]
        opts.update(self.train)
        opts.update(overrides)
        return TrainConfig.from_dict(opts)


DEFAULT_SYNTHETIC = {
    "hierarchy": "fig1",
    "T": 200,
    "seed": 0,
    "ar_coefs": [0.6],
    "noise_scale": 1.0,
    "level": 10.0,
    "seasonal_period": 12,
    "seasonal_amplitude": 3.0,
}


def default_config_text() -> str:
    """Commented reference of every option and its default."""
    cfg = ExperimentConfig()
    body = cfg.to_dict()
    body["data"] = {"synthetic": dict(DEFAULT_SYNTHETIC)}
    body["train"] = {k: v for k, v in TrainConfig(horizon=cfg.horizon).to_dict().items()
                     if k not in ("horizon", "seed")}
    body["grid"] = {"lam": [0.0, 0.1, 1.0]}
    header = (
        "# data: either 'synthetic' (generator settings) or\n"
        "#   csv: path, hierarchy: edge-list path, mode: bottom-only | all-nodes\n"
        "# methods: deepar-hier, pure-deepar or <ar|ets|ses|holt>-<stack|rank|random>-<bu-none|mint-struct|mint-ols|td-none|none-none>\n"
        "# train: network options (seasonal_period defaults to the synthetic one)\n"
        "# grid: lists of train options searched by rolling-origin cross-validation\n"
    )
    return header + yaml.safe_dump(body, sort_keys=False)


def load_dataset(cfg: ExperimentConfig) -> tuple[HierarchySpec, SeriesPanel]:
    data = cfg.data
    if "synthetic" in data:
        opts = {**DEFAULT_SYNTHETIC, **(data["synthetic"] or {})}
        hier_src = opts.pop("hierarchy")
        hier = fig1_hierarchy() if hier_src == "fig1" else HierarchySpec.from_file(hier_src)
        T, seed = int(opts.pop("T")), int(opts.pop("seed"))
        return hier, generate_synthetic(hier, T, seed, SyntheticParams(**opts))
    if "csv" in data:
        hier = HierarchySpec.from_file(data["hierarchy"])
        return hier, ingest_csv(data["csv"], hier, data.get("mode", "bottom-only"))
    raise ValueError("data must define 'synthetic' or 'csv'")


def _classical_base(spec: MethodSpec, panel: SeriesPanel, h: int, order: int) -> tuple[GaussianForecast, list[str]]:
    kind = BASE_KINDS[spec.base]
    mus, sigmas, notes = [], [], []
    for v, row in zip(panel.node_ids, panel.values):
        f = fit(row, kind, order)
        notes += [f"{v}: {msg}" for msg in f.fit_report]
        g = forecast_gaussian(f, h)
        mus.append(g.mu)
        sigmas.append(g.sigma)
    return GaussianForecast(np.array(mus), np.array(sigmas), panel.node_ids), notes


@dataclass
class MethodResult:
    report: EvalReport
    incoherence: float | None = None
    lam: float | None = None


def forecast_method(cfg: ExperimentConfig, spec: MethodSpec, hier: HierarchySpec, history: SeriesPanel,
                    h: int, out_dir: Path | None = None, train_config: TrainConfig | None = None):
    """Fit on ``history`` and return coherent joint draws for the next ``h`` steps."""
    S = build_summing_matrix(hier)
    extra: dict[str, Any] = {}
    if spec.neural:
        tc = train_config or cfg.train_config()
        if spec.label == "pure-deepar":
            tc = replace(tc, lam=0.0)
        model = train(history, hier, tc)
        gauss, raw = forecast(model, history, h, cfg.samples, cfg.seed)
        final = harden_bottom_up(raw, S)
        extra = {"incoherence": predictive_incoherence(gauss, hier), "lam": tc.lam}
        if out_dir is not None:
            save_model(model, out_dir / "model.npz")
            storage.write_gaussian(gauss, out_dir / "gaussian.csv")
            storage.write_samples(raw, out_dir / "raw_samples.csv.gz")
            storage.write_csv(pd.DataFrame({"epoch": np.arange(1, len(model.loss_trace) + 1),
                                       "loss": model.loss_trace}), out_dir / "loss_trace.csv")
        return final, extra
    gauss, notes = _classical_base(spec, history, h, cfg.ar_order)
    draws = gauss.draw(cfg.samples, cfg.seed)
    joint = ARRANGEMENTS[spec.arrangement](draws, hier.nodes, seed=cfg.seed + 1)
    if spec.reconciler == "none":
        rmap = None
        final = joint
    else:
        if spec.reconciler == "bu":
            rmap = build_bu(S)
        elif spec.reconciler == "td":
            rmap = build_td(S, history)
        else:
            rmap = build_mint(S, spec.covariance)
        final = reconcile_samples(rmap, S, joint)
    if out_dir is not None:
        storage.write_gaussian(gauss, out_dir / "base_gaussian.csv")
        storage.write_samples(joint, out_dir / "base_samples.csv.gz")
        if rmap is not None:
            storage.write_matrix(rmap.P, hier.bottom_nodes, hier.nodes, out_dir / "P.csv")
            storage.write_matrix(reconciler_matrix(rmap, S), hier.nodes, hier.nodes, out_dir / "SP.csv")
        if notes:
            (out_dir / "fit_report.txt").write_text("\n".join(notes) + "\n")
    return final, extra


def run_method(cfg: ExperimentConfig, method: str, hier: HierarchySpec | None = None,
               panel: SeriesPanel | None = None, out_dir: str | Path | None = None,
               train_config: TrainConfig | None = None) -> MethodResult:
    """fit -> forecast -> arrange -> reconcile/harden -> evaluate on the last ``horizon`` steps."""
    spec = parse_method(method)
    if hier is None or panel is None:
        hier, panel = load_dataset(cfg)
    h = cfg.horizon
    if panel.T - h < 2:
        raise PipelineError(spec.label, "panel too short for the requested horizon")
    history = panel.slice(0, panel.T - h)
    actuals = panel.values[:, panel.T - h:]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    try:
        final, extra = forecast_method(cfg, spec, hier, history, h, out_dir, train_config)
        report = evaluate(final, actuals, hier, spec.label)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(spec.label, str(exc)) from exc
    if out_dir is not None:
        storage.write_samples(final, out_dir / "samples.csv.gz")
        storage.write_csv(pd.DataFrame(report.rows()), out_dir / "crps.csv")
    return MethodResult(report, extra.get("incoherence"), extra.get("lam"))


def fold_origins(T: int, horizon: int, folds: int) -> list[int]:
    """History lengths of the rolling validation origins, all before the test window."""
    if folds < 1:
        raise ValueError("validation_folds must be at least 1")
    test_start = T - horizon
    origins = [test_start - (folds - f) * horizon for f in range(folds)]
    if origins[0] < 2:
        raise ValueError("validation folds do not fit in the data")
    return origins


def grid_points(cfg: ExperimentConfig) -> list[TrainConfig]:
    if not cfg.grid:
        return [cfg.train_config()]
    keys = list(cfg.grid)
    combos = list(itertools.product(*(cfg.grid[k] for k in keys)))
    if not combos:
        raise ValueError("empty grid")
    return [cfg.train_config(**dict(zip(keys, c))) for c in combos]


def grid_search(cfg: ExperimentConfig, hier: HierarchySpec | None = None, panel: SeriesPanel | None = None,
                method: str = "deepar-hier") -> tuple[TrainConfig, pd.DataFrame]:
    """Rolling-origin CV; the lowest mean validation CRPS wins, ties go to smaller lambda then hidden size."""
    if hier is None or panel is None:
        hier, panel = load_dataset(cfg)
    points = grid_points(cfg)
    if not points:
        raise ValueError("empty grid")
    origins = fold_origins(panel.T, cfg.horizon, cfg.validation_folds)
    spec = parse_method(method)
    rows = []
    for gi, tc in enumerate(points):
        for fi, origin in enumerate(origins):
            hist = panel.slice(0, origin)
            actual = panel.values[:, origin:origin + cfg.horizon]
            final, _ = forecast_method(cfg, spec, hier, hist, cfg.horizon, None, tc)
            score = evaluate(final, actual, hier).overall_mean
            rows.append({"point": gi, "fold": fi, "origin": origin, "lam": tc.lam, "hidden": tc.hidden,
                         "layers": tc.layers, "dropout": tc.dropout, "epochs": tc.epochs, "crps": score})
            log.info("grid point %d fold %d: crps %.5f", gi, fi, score)
    table = pd.DataFrame(rows)
    means = table.groupby("point")["crps"].mean()
    best = min(range(len(points)), key=lambda i: (means[i], points[i].lam, points[i].hidden))
    return points[best], table


@dataclass
class Comparison:
    reports: dict[str, EvalReport]
    mcb: McbResult | None
    summary: pd.DataFrame
    levels: pd.DataFrame
    per_node: pd.DataFrame
    best_train: TrainConfig | None = None
    grid_table: pd.DataFrame | None = None


def run_comparison(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Comparison:
    """Run every configured method, then write score tables, the MCB table and its figure."""
    from .plotting import plot_level_crps, plot_mcb

    if len(cfg.methods) < 2:
        raise PipelineError("compare", "at least two methods are required")
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    hier, panel = load_dataset(cfg)
    best_train, grid_table = None, None
    if any(parse_method(m).neural for m in cfg.methods):
        if cfg.grid:
            best_train, grid_table = grid_search(cfg, hier, panel)
            storage.write_csv(grid_table, out / "grid_results.csv")
        else:
            best_train = cfg.train_config()
    reports: dict[str, EvalReport] = {}
    lams: dict[str, float | None] = {}
    status = []
    failure = None
    for m in cfg.methods:
        label = parse_method(m).label
        try:
            res = run_method(cfg, label, hier, panel, out / "methods" / label, best_train)
        except PipelineError as exc:
            status.append({"method": label, "status": "failed", "message": str(exc)})
            failure = exc
            break
        reports[label] = res.report
        lams[label] = res.lam
        status.append({"method": label, "status": "ok", "message": ""})
    storage.write_csv(pd.DataFrame(status), out / "status.csv")
    per_node = pd.DataFrame([r for rep in reports.values() for r in rep.rows()],
                            columns=["node", "level", "method", "crps"])
    summary = pd.DataFrame({"method": list(reports), "average_crps": [r.overall_mean for r in reports.values()]})
    levels = pd.DataFrame([{"method": m, "level": lv, "lambda": lams[m], "crps": v}
                           for m, rep in reports.items() for lv, v in rep.level_means.items()])
    storage.write_csv(per_node, out / "per_node_crps.csv")
    storage.write_csv(summary, out / "summary_crps.csv")
    storage.write_csv(levels, out / "level_crps.csv")
    if failure is not None:
        raise failure
    result = mcb_from_scores(per_node)
    storage.write_csv(pd.DataFrame(result.rows()), out / "mcb.csv")
    plot_mcb(result, out / "mcb.svg")
    plot_level_crps(levels, out / "level_crps.svg")
    return Comparison(reports, result, summary, levels, per_node, best_train, grid_table)


def mcb_from_scores(per_node: pd.DataFrame) -> McbResult:
    """MCB over series: pivot a ``node,level,method,crps`` table to methods x nodes."""
    methods = list(dict.fromkeys(per_node["method"]))
    nodes = list(dict.fromkeys(per_node["node"]))
    table = per_node.pivot(index="method", columns="node", values="crps").loc[methods, nodes]
    return mcb(table.to_numpy(), methods)
