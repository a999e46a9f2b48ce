"""Command line entry point: ``hierprob <stage> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import storage
from .data import SeriesPanel, ingest_csv
from .hierarchy import HierarchySpec, build_summing_matrix
from .metrics import evaluate
from .pipeline import (ExperimentConfig, PipelineError, default_config_text, grid_search, load_dataset,
                       mcb_from_scores, parse_method, run_comparison, run_method)
from .reconcile import build_bu, build_mint, build_td, reconcile_samples, reconciler_matrix

log = logging.getLogger("hierprob")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.train = {**cfg.train, "seed": args.seed}
    if getattr(args, "lam", None) is not None:
        cfg.train = {**cfg.train, "lam": args.lam}
        cfg.grid = {k: v for k, v in cfg.grid.items() if k != "lam"}
    if getattr(args, "out", None):
        cfg.output = args.out
    cfg.validate()
    return cfg


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    cfg = _config(args)
    hier, panel = load_dataset(cfg)
    out = _out(cfg)
    panel.to_csv(out / "panel.csv")
    hier.to_file(out / "hierarchy.csv")
    print(f"wrote {panel.n} series x {panel.T} steps to {out / 'panel.csv'}")


def cmd_train(args):
    from .neural import save_model, train

    cfg = _config(args)
    hier, panel = load_dataset(cfg)
    method = parse_method(args.method or "deepar-hier")
    if not method.neural:
        raise PipelineError("train", "only deepar-hier and pure-deepar are trainable")
    tc = cfg.train_config()
    if method.label == "pure-deepar":
        tc = replace(tc, lam=0.0)
    history = panel.slice(0, panel.T - cfg.horizon)
    model = train(history, hier, tc)
    out = _out(cfg)
    save_model(model, out / "model.npz")
    print(f"trained {method.label} (lambda={tc.lam}); final loss {model.loss_trace[-1]:.4f}")


def cmd_forecast(args):
    from .neural import forecast, harden_bottom_up, load_model

    cfg = _config(args)
    hier, panel = load_dataset(cfg)
    model = load_model(args.model)
    history = panel.slice(0, panel.T - cfg.horizon)
    gauss, raw = forecast(model, history, cfg.horizon, cfg.samples, cfg.seed)
    final = harden_bottom_up(raw, build_summing_matrix(hier))
    out = _out(cfg)
    storage.write_gaussian(gauss, out / "gaussian.csv")
    storage.write_samples(raw, out / "raw_samples.csv.gz")
    storage.write_samples(final, out / "samples.csv.gz")
    print(f"wrote {cfg.horizon}-step forecasts with {cfg.samples} draws to {out}")


def cmd_reconcile(args):
    cfg = _config(args)
    out = _out(cfg)
    if args.samples:
        hier = HierarchySpec.from_file(args.hierarchy) if args.hierarchy else load_dataset(cfg)[0]
        S = build_summing_matrix(hier)
        base = storage.read_samples(args.samples, hier.nodes)
        rec, cov = (args.reconciler.split("-") + ["none"])[:2]
        if rec == "bu":
            rmap = build_bu(S)
        elif rec == "mint":
            rmap = build_mint(S, cov if cov != "none" else "struct")
        elif rec == "td":
            _, panel = load_dataset(cfg)
            rmap = build_td(S, panel.slice(0, panel.T - cfg.horizon))
        else:
            raise PipelineError("reconcile", f"unknown reconciler {args.reconciler!r}")
        storage.write_matrix(rmap.P, hier.bottom_nodes, hier.nodes, out / "P.csv")
        storage.write_matrix(reconciler_matrix(rmap, S), hier.nodes, hier.nodes, out / "SP.csv")
        storage.write_samples(reconcile_samples(rmap, S, base), out / "samples.csv.gz")
        print(f"reconciled {base.N} draws with {rmap.label}; wrote P.csv, SP.csv, samples.csv.gz")
        return
    method = args.method or "ar-stack-mint-struct"
    res = run_method(cfg, method, out_dir=out / parse_method(method).label)
    print(f"{method}: average CRPS {res.report.overall_mean:.6g}")


def cmd_evaluate(args):
    cfg = _config(args)
    hier, panel = load_dataset(cfg)
    if args.samples:
        sf = storage.read_samples(args.samples, hier.nodes)
        actuals = panel.values[:, panel.T - cfg.horizon:]
        report = evaluate(sf, actuals, hier, args.method or Path(args.samples).stem)
    else:
        report = run_method(cfg, args.method or "deepar-hier", hier, panel).report
    out = _out(cfg)
    storage.write_csv(pd.DataFrame(report.rows()), out / "crps.csv")
    for lv, v in report.level_means.items():
        print(f"level {lv}: {v:.6g}")
    print(f"overall: {report.overall_mean:.6g}")


def cmd_mcb(args):
    from .plotting import plot_mcb

    cfg = _config(args)
    per_node = pd.read_csv(args.scores, dtype={"node": str})
    result = mcb_from_scores(per_node)
    out = _out(cfg)
    storage.write_csv(pd.DataFrame(result.rows()), out / "mcb.csv")
    plot_mcb(result, out / "mcb.svg")
    for row in sorted(result.rows(), key=lambda r: r["average_rank"]):
        print(f"{row['method']:<28} {row['average_rank']:.3f}  [{row['lower']:.3f}, {row['upper']:.3f}]")


def cmd_compare(args):
    cfg = _config(args)
    if args.method:
        cfg.methods = [m.strip() for m in args.method.split(",")]
        cfg.validate()
    comp = run_comparison(cfg, _out(cfg))
    print(comp.summary.to_string(index=False))


def cmd_grid(args):
    cfg = _config(args)
    best, table = grid_search(cfg, method=args.method or "deepar-hier")
    out = _out(cfg)
    storage.write_csv(table, out / "grid_results.csv")
    (out / "best_train.yaml").write_text(yaml.safe_dump(best.to_dict(), sort_keys=False))
    print(f"selected lambda={best.lam} hidden={best.hidden} layers={best.layers} "
          f"dropout={best.dropout} epochs={best.epochs}")


def cmd_defaults(args):
    sys.stdout.write(default_config_text())


COMMANDS = {
    "synth": (cmd_synth, "generate the configured synthetic panel"),
    "train": (cmd_train, "train deepar-hier / pure-deepar on the history range"),
    "forecast": (cmd_forecast, "forecast from a saved model and harden bottom-up"),
    "reconcile": (cmd_reconcile, "reconcile a sample file, or run one classical method"),
    "evaluate": (cmd_evaluate, "CRPS of a sample file (or a method) against the test window"),
    "mcb": (cmd_mcb, "average ranks and intervals from a per-node CRPS table"),
    "compare": (cmd_compare, "run all configured methods and write reports"),
    "grid": (cmd_grid, "rolling-origin grid search over training options"),
    "defaults": (cmd_defaults, "print the default configuration"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierprob", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        if name == "defaults":
            continue
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--method")
        p.add_argument("--lambda", dest="lam", type=float)
        if name == "forecast":
            p.add_argument("--model", required=True)
        if name in ("reconcile", "evaluate"):
            p.add_argument("--samples", help="sample CSV (step,node,s0..)")
        if name == "reconcile":
            p.add_argument("--hierarchy", help="edge-list file (defaults to the config's)")
            p.add_argument("--reconciler", default="mint-struct", help="bu | td | mint-struct | mint-ols")
        if name == "mcb":
            p.add_argument("--scores", required=True, help="node,level,method,crps CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
