"""Scatter-plot SVG rendering for 2-D layouts.

Self-contained output: valid XML, no external resources, deterministic for
identical inputs.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .metrics import standardize_map

CANVAS_SIZE = 800
MARGIN_FRACTION = 0.05
EDGE_RENDER_LIMIT = 5000   # suppress edge segments on larger graphs
FALLBACK_COLOR = "#808080"

# fixed 12-color palette, cycled by class id
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
)


def _pixel_coords(y: np.ndarray) -> np.ndarray:
    """Map standardized coordinates into the canvas with a 5% margin,
    preserving aspect ratio. The y axis is flipped (SVG grows downward)."""
    s = standardize_map(y)
    lo = s.min(axis=0)
    hi = s.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
    margin = CANVAS_SIZE * MARGIN_FRACTION
    usable = CANVAS_SIZE - 2.0 * margin
    scale = usable / span
    center = (lo + hi) / 2.0
    px = np.empty_like(s)
    px[:, 0] = (s[:, 0] - center[0]) * scale + CANVAS_SIZE / 2.0
    px[:, 1] = (center[1] - s[:, 1]) * scale + CANVAS_SIZE / 2.0
    return px


def render_svg(y: np.ndarray, labels=None, edges=None) -> str:
    """Render a layout to an SVG string.

    Points are colored by class label when labels are given, neutral gray
    otherwise. Edges (an (E, 2) index array) are drawn as thin segments only
    when the layout has at most 5000 points.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError("layout must be an N x 2 matrix")
    n = y.shape[0]
    px = _pixel_coords(y)
    radius = max(1.0, 40.0 / np.sqrt(n)) if n else 1.0

    root = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(CANVAS_SIZE),
        "height": str(CANVAS_SIZE),
        "viewBox": f"0 0 {CANVAS_SIZE} {CANVAS_SIZE}",
    })
    ET.SubElement(root, "rect", {"width": str(CANVAS_SIZE),
                                 "height": str(CANVAS_SIZE), "fill": "#ffffff"})
    if edges is not None and n <= EDGE_RENDER_LIMIT:
        edge_group = ET.SubElement(root, "g", {"stroke": "#cccccc",
                                               "stroke-width": "0.3"})
        for i, j in np.asarray(edges, dtype=np.int64):
            ET.SubElement(edge_group, "line", {
                "x1": f"{px[i, 0]:.2f}", "y1": f"{px[i, 1]:.2f}",
                "x2": f"{px[j, 0]:.2f}", "y2": f"{px[j, 1]:.2f}"})
    point_group = ET.SubElement(root, "g")
    for i in range(n):
        color = (PALETTE[int(labels[i]) % len(PALETTE)] if labels is not None
                 else FALLBACK_COLOR)
        ET.SubElement(point_group, "circle", {
            "cx": f"{px[i, 0]:.2f}", "cy": f"{px[i, 1]:.2f}",
            "r": f"{radius:.2f}", "fill": color})
    return ET.tostring(root, encoding="unicode")


def write_svg(path, y: np.ndarray, labels=None, edges=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(y, labels=labels, edges=edges))
        fh.write("\n")
