"""Command line interface: `python . <command>`.

Commands: stats, featurize, train, forecast, explain, evaluate, report, selftest.
Exit codes: 0 success, 1 validation error, 2 data error, 3 numerical failure.
"""

import argparse
import cProfile
import csv
import json
import logging
import os
import pstats

from config import load_config
from errors import ForecastError
from explain import attributions_to_csv
from figures import emit_figures
from pipeline import Pipeline, write_manifest
from selftest import run_selftest

logger = logging.getLogger(__name__)

COMMANDS = ("stats", "featurize", "train", "forecast", "explain", "evaluate", "report", "selftest")
ORDER_COLUMNS = (
    "spec", "aic", "n_params", "converged", "error", "ljung_box_statistic", "ljung_box_p_value"
)


def _write_json(outdir: str, name: str, document) -> str:
    path = os.path.join(outdir, f"{name}.json")
    with open(path, "w", encoding="utf-8", newline="\n") as json_file:
        json.dump(document, json_file, sort_keys=True, indent=2, allow_nan=False)
        json_file.write("\n")
    return path


def _write_csv(outdir: str, name: str, header: list[str], rows) -> str:
    path = os.path.join(outdir, f"{name}.csv")
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def cmd_stats(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    section = pipeline.stats_section()
    if fmt == "json":
        return [_write_json(outdir, "stats", section)]
    full = section["descriptive_stats"]["full"]
    training = section["descriptive_stats"]["training"]
    levels = section["lag_correlations"]["levels"]
    differenced = section["lag_correlations"]["differenced"]
    correlogram = section["autocorrelation"]
    return [
        _write_csv(
            outdir,
            "descriptive_stats",
            ["statistic", "full", "training"],
            [[k, repr(full[k]), repr(training[k])] for k in full],
        ),
        _write_csv(
            outdir,
            "lag_correlations",
            ["lag", "levels", "differenced"],
            [
                [a["lag"], repr(a["correlation"]), repr(b["correlation"])]
                for a, b in zip(levels, differenced)
            ],
        ),
        _write_csv(
            outdir,
            "autocorrelation",
            ["lag", "acf", "pacf"],
            [
                [k, repr(r), repr(p)]
                for k, r, p in zip(correlogram["lags"], correlogram["acf"], correlogram["pacf"])
            ],
        ),
    ]


def cmd_featurize(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    fm = pipeline.features
    if fmt == "csv":
        path = os.path.join(outdir, "features.csv")
        fm.to_csv(path)
        return [path]
    document = {
        "columns": list(fm.columns),
        "rows": {
            f"{t[0]:04d}-{t[1]:02d}": {"features": row.tolist(), "target": float(y)}
            for t, row, y in zip(fm.times, fm.rows, fm.target)
        },
    }
    return [_write_json(outdir, "features", document)]


def cmd_train(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    files = []
    for name, model in (("gbt_model", pipeline.gbt_model), ("sarima_model", pipeline.arima_model)):
        path = os.path.join(outdir, f"{name}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as model_file:
            model_file.write(model.to_json())
        files.append(path)
    section = pipeline.model_section()
    if fmt == "json":
        files.append(_write_json(outdir, "training", section))
    else:
        files.append(
            _write_csv(
                outdir,
                "order_selection",
                ORDER_COLUMNS,
                [[c[k] for k in ORDER_COLUMNS] for c in section["order_selection"]],
            )
        )
    return files


def cmd_forecast(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    section = pipeline.forecast_section()
    if fmt == "json":
        return [_write_json(outdir, "forecasts", section)]
    f = section["forecasts"]
    return [
        _write_csv(
            outdir,
            "forecasts",
            ["date", "actual", "gbt", "sarima"],
            [
                [d, repr(a), repr(g), repr(s)]
                for d, a, g, s in zip(f["dates"], f["actual"], f["gbt"], f["sarima"])
            ],
        )
    ]


def cmd_explain(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    if fmt == "json":
        return [_write_json(outdir, "explanations", pipeline.explain_section())]
    files = []
    for name, attributions in (
        ("tree_shap", pipeline.tree_attributions),
        ("permutation_shap", pipeline.permutation_attributions),
    ):
        path = os.path.join(outdir, f"{name}.csv")
        attributions_to_csv(attributions, path)
        files.append(path)
    files.append(
        _write_csv(
            outdir,
            "permutation_importance",
            ["feature", "mean_increase", "std"],
            [[e.feature, repr(e.mean_increase), repr(e.std)] for e in pipeline.importance],
        )
    )
    return files


def cmd_evaluate(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    evaluation = pipeline.evaluation
    if fmt == "json":
        return [_write_json(outdir, "evaluation", evaluation)]
    rows = []
    for model, found in evaluation["metrics"].items():
        for metric, value in found["point"].items():
            ci = found.get(f"{metric}_ci")
            rows.append(
                [model, metric, "" if value is None else repr(value)]
                + ([repr(ci["lower"]), repr(ci["upper"])] if ci else ["", ""])
            )
    dm = evaluation["diebold_mariano"]
    rows.append(["sarima_vs_gbt", "dm_statistic", repr(dm["statistic"]), "", ""])
    rows.append(["sarima_vs_gbt", "dm_p_value", repr(dm["p_value"]), "", ""])
    return [_write_csv(outdir, "evaluation", ["model", "metric", "value", "lower", "upper"], rows)]


def cmd_report(pipeline: Pipeline, outdir: str, fmt: str) -> list[str]:
    bundle = pipeline.bundle()
    files = [bundle.write(outdir)]
    figures = emit_figures(bundle, outdir)
    files += figures.files
    files.append(write_manifest(outdir, files, figures.omitted))
    return files


HANDLERS = {
    "stats": cmd_stats,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults to the shipped config.yaml)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--verbose", action="store_true", help="log debug messages")

    parser = argparse.ArgumentParser(
        prog="python .", description="Forecasting and explainability on monthly series."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        command = commands.add_parser(name, parents=[common])
        if name == "report":
            command.add_argument(
                "--profile", action="store_true", help="write cProfile stats to last_run.prof"
            )
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "selftest":
        results = run_selftest(seed=args.seed or 0)
        return 0 if all(r.passed for r in results) else 3

    config = load_config(args.config, seed=args.seed, output_dir=args.out)
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    files = HANDLERS[args.command](Pipeline(config), outdir, args.format)
    for path in files:
        logger.info("Wrote %s", path)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="(%(levelname).1s) %(message)s",
        force=True,
    )

    try:
        if getattr(args, "profile", False):
            with cProfile.Profile() as pr:
                code = run(args)
            # View with `snakeviz last_run.prof`
            stats = pstats.Stats(pr)
            stats.sort_stats(pstats.SortKey.TIME)
            stats.dump_stats(filename="last_run.prof")
            return code
        return run(args)
    except ForecastError as e:
        logger.error("%s", str(e).removeprefix("(E) "))
        return e.exit_code
    except OSError as e:
        logger.error("%s", e)
        return 1
