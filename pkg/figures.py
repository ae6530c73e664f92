"""Static SVG figures drawn from a report bundle.

Every plotted number is also written on its SVG element as a `data-*`
attribute with 10 significant digits, so a figure can be checked against the
bundle without reading pixels.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pygal
from pygal.style import Style

from errors import ValidationError
from math_utils import format_sig

logger = logging.getLogger(__name__)

report_style = Style(
    background="white",
    plot_background="white",
    foreground="#333333",
    foreground_strong="#000000",
    foreground_subtle="#888888",
    opacity=".8",
    opacity_hover=".95",
    transition="100ms ease-in",
    colors=("#1f1f1f", "#d62728", "#2ca02c", "#1f77b4", "#ff7f0e"),
)


@dataclass
class FigureSet:
    files: list[str] = field(default_factory=list)
    omitted: dict[str, str] = field(default_factory=dict)


def _chart_options(title: str) -> dict:
    # No external scripts: the figures must stand alone
    return {"title": title, "style": report_style, "js": []}


def _node(value: float, **extra) -> dict:
    return {"value": value, "node": {"data-value": format_sig(value), **extra}}


def _render(chart, path: str, name: str) -> str:
    svg = chart.render(is_unicode=True)
    # Fixed element ids keep the files byte-stable between runs
    uuid = getattr(chart, "uuid", None)
    if uuid:
        svg = svg.replace(str(uuid), f"figure-{name}")
    with open(path, "w", encoding="utf-8", newline="\n") as svg_file:
        svg_file.write(svg)
    logger.debug("Wrote %s", path)
    return path


def series_chart(data: dict):
    """Observed series with both hold-out forecasts."""
    series = data["series"]
    forecasts = data["forecasts"]
    dates = series["dates"]
    position = {date: i for i, date in enumerate(dates)}

    chart = pygal.Line(
        **_chart_options("Monthly passengers with hold-out forecasts"),
        x_label_rotation=45,
        show_minor_x_labels=False,
        x_labels_major_every=12,
        show_dots=True,
        dots_size=2,
        y_title="Passengers (thousands)",
    )
    chart.x_labels = dates
    chart.add(
        "Observed", [_node(v, **{"data-date": d}) for d, v in zip(dates, series["values"])]
    )

    for key, label in (("sarima", "SARIMA"), ("gbt", "GBT")):
        values = [None] * len(dates)
        for date, v in zip(forecasts["dates"], forecasts[key]):
            if date in position:
                values[position[date]] = _node(v, **{"data-date": date})
        chart.add(label, values)
    return chart


def bar_chart(title: str, labels: list[str], values: list[float], y_title: str):
    """Horizontal bars, one per label, in the given order (largest on top)."""
    chart = pygal.HorizontalBar(**_chart_options(title), show_legend=False, x_title=y_title)
    # pygal draws the first label at the bottom
    chart.x_labels = list(reversed(labels))
    chart.add(
        y_title,
        [_node(v, **{"data-feature": f}) for f, v in reversed(list(zip(labels, values)))],
    )
    return chart


def dependence_chart(dependence: dict):
    """Feature value against its contribution, coloured by a second feature."""
    points = dependence["points"]
    colors = np.array([p["color"] for p in points])
    low, high = colors.min(), colors.max()
    span = high - low if high > low else 1.0

    chart = pygal.XY(
        **_chart_options(f"Dependence of {dependence['feature']}"),
        stroke=False,
        show_legend=False,
        x_title=dependence["feature"],
        y_title=f"SHAP value of {dependence['feature']}",
    )
    values = []
    for p in points:
        # Blue (low) to red (high) by the colour feature
        t = (p["color"] - low) / span
        values.append(
            {
                "value": (p["value"], p["phi"]),
                "color": f"#{int(255 * t):02x}40{int(255 * (1 - t)):02x}",
                "node": {
                    "data-value": format_sig(p["phi"]),
                    "data-x": format_sig(p["value"]),
                    "data-color": format_sig(p["color"]),
                },
            }
        )
    chart.add(dependence["color_feature"], values)
    return chart


def _lime_factor(explanations: dict) -> str:
    """The middle kernel width of the sweep."""
    factors = sorted(explanations, key=float)
    return factors[len(factors) // 2]


def emit_figures(bundle, outdir: str) -> FigureSet:
    """Write the five report figures as standalone SVG files.

    A figure whose data is empty is skipped and recorded in `omitted`.

    Args:
        bundle (ReportBundle | dict): The report bundle
        outdir (str): Output directory, created if needed

    Raises:
        ValidationError: If the directory cannot be created or written.

    Returns:
        FigureSet: Written files and omitted figures with the reason
    """
    data = getattr(bundle, "data", bundle)
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"(E) cannot create output directory {outdir}: {e}") from e

    charts = {}
    figures = FigureSet()

    if data["series"]["values"]:
        charts["series_forecast"] = series_chart(data)
    else:
        figures.omitted["series_forecast"] = "empty series"

    ranking = data["shap"]["tree_ranking"]
    if ranking:
        charts["shap_summary"] = bar_chart(
            "Mean absolute SHAP value",
            [r["feature"] for r in ranking],
            [r["mean_abs_phi"] for r in ranking],
            "mean |SHAP|",
        )
    else:
        figures.omitted["shap_summary"] = "no attributions"

    if data["dependence"]["points"]:
        charts["dependence"] = dependence_chart(data["dependence"])
    else:
        figures.omitted["dependence"] = "no attributions"

    explanations = data["lime"]["explanations"]
    if explanations:
        factor = _lime_factor(explanations)
        scaled = explanations[factor]["scaled_coefficients"]
        order = sorted(scaled, key=lambda f: (-abs(scaled[f]), f))
        charts["lime"] = bar_chart(
            f"LIME surrogate for {data['lime']['month']} (width factor {factor})",
            order,
            [scaled[f] for f in order],
            "coefficient per training std",
        )
    else:
        figures.omitted["lime"] = "no LIME explanations"

    importance = data["permutation_importance"]
    if importance:
        charts["permutation_importance"] = bar_chart(
            "Permutation importance",
            [e["feature"] for e in importance],
            [e["mean_increase"] for e in importance],
            "RMSE increase",
        )
    else:
        figures.omitted["permutation_importance"] = "no importance scores"

    for name, chart in charts.items():
        path = os.path.join(outdir, f"{name}.svg")
        try:
            figures.files.append(_render(chart, path, name))
        except OSError as e:
            raise ValidationError(f"(E) cannot write {path}: {e}") from e

    for name, reason in figures.omitted.items():
        logger.warning("Figure %s omitted: %s", name, reason)
    return figures
