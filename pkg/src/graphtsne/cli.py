"""Command-line front end: fit a layout, sweep alpha, or evaluate an
existing layout. Emits CSV coordinates, SVG scatter plots, and JSON reports.

Exit codes: 0 success, 1 malformed input, 2 invalid flags, 3 training failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import MalformedInputError, TrainingError
from .graph import (LabeledDataset, load_edge_list, load_features_csv,
                    load_labels_csv)
from .metrics import (DEFAULT_FOLDS, DEFAULT_KNN_K, DEFAULT_T_KS, DEFAULT_T_RS,
                      alpha_sweep, evaluate_layout)
from .svg import write_svg
from .trainer import (apply_overrides, default_config, embed,
                      read_config_file, train)

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(11))


def _comma_ints(text: str):
    return tuple(int(part) for part in text.split(",") if part.strip())


def _comma_floats(text: str):
    return tuple(float(part) for part in text.split(",") if part.strip())


def _add_input_flags(parser: argparse.ArgumentParser, with_num_nodes: bool) -> None:
    parser.add_argument("--edges", required=True,
                        help="edge list file: one 'i j' pair per line, '#' comments")
    parser.add_argument("--features", required=True,
                        help="headerless CSV of node features, one row per node")
    if with_num_nodes:
        parser.add_argument("--num-nodes", type=int, required=True,
                            help="total node count (isolated nodes included)")
    parser.add_argument("--labels", default=None,
                        help="optional headerless CSV of integer class labels")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help="flat key=value config file; flags override it")
    parser.add_argument("--seed", type=int, default=None, help="rng seed")
    parser.add_argument("--mode", choices=("full", "minibatch"), default=None,
                        help="training regime (default: by graph size)")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--perplexity", type=float, default=None)


def _add_metric_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--knn-k", type=int, default=DEFAULT_KNN_K,
                        help="k for the feature-space k-NN pair set")
    parser.add_argument("--t-ks", type=_comma_ints, default=DEFAULT_T_KS,
                        help="comma list of k values for feature trustworthiness")
    parser.add_argument("--t-rs", type=_comma_ints, default=DEFAULT_T_RS,
                        help="comma list of hop radii for graph trustworthiness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphtsne",
        description="Train 2-D graph layouts that blend graph and feature "
                    "structure, and score them.",
        epilog="Set GRAPHTSNE_THREADS to cap internal parallelism.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="train a model and write a 2-D layout")
    _add_input_flags(fit, with_num_nodes=True)
    fit.add_argument("--alpha", type=float, required=True,
                     help="graph-loss weight in [0, 1]")
    fit.add_argument("--out-dir", required=True)
    _add_train_flags(fit)
    fit.set_defaults(func=cmd_fit)

    sweep = sub.add_parser("sweep", help="train across an alpha grid and pick alpha*")
    _add_input_flags(sweep, with_num_nodes=True)
    sweep.add_argument("--grid", type=_comma_floats, default=DEFAULT_GRID,
                       help="comma list of alpha values (default 0.0..1.0 step 0.1)")
    sweep.add_argument("--out-dir", required=True)
    _add_train_flags(sweep)
    _add_metric_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    ev = sub.add_parser("evaluate", help="score an existing layout CSV")
    _add_input_flags(ev, with_num_nodes=False)
    ev.add_argument("--layout", required=True, help="layout CSV (node_id,x,y)")
    ev.add_argument("--out-dir", default=".")
    _add_metric_flags(ev)
    ev.set_defaults(func=cmd_evaluate)
    return parser


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _load_dataset(edges_path, features_path, labels_path, num_nodes=None):
    features = load_features_csv(features_path)
    n = features.shape[0] if num_nodes is None else num_nodes
    graph = load_edge_list(edges_path, n)
    labels = load_labels_csv(labels_path) if labels_path else None
    try:
        return LabeledDataset(graph=graph, features=features, labels=labels)
    except ValueError as exc:
        raise MalformedInputError(f"inconsistent inputs: {exc}") from exc


def _resolve_config(args, num_nodes, alpha):
    # sweep passes alpha=None; the placeholder is replaced per grid point
    cfg = default_config(num_nodes, alpha=0.5 if alpha is None else alpha)
    if args.config:
        cfg = apply_overrides(cfg, read_config_file(args.config))
    flag_overrides = {}
    for key in ("seed", "mode", "epochs", "perplexity"):
        value = getattr(args, key)
        if value is not None:
            flag_overrides[key] = value
    if alpha is not None:
        flag_overrides["alpha"] = alpha
    cfg = apply_overrides(cfg, flag_overrides)
    cfg.validate()
    return cfg


def _write_json_atomic(path, payload) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_layout_csv(path, y: np.ndarray) -> None:
    lines = ["node_id,x,y"]
    for i in range(y.shape[0]):
        lines.append(f"{i},{float(y[i, 0])!r},{float(y[i, 1])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_layout_csv(path, num_nodes: int) -> np.ndarray:
    """Parse a layout CSV (node_id,x,y; header optional) into an N x 2 matrix.

    Every node id in [0, num_nodes) must appear exactly once.
    """
    y = np.full((num_nodes, 2), np.nan)
    seen = np.zeros(num_nodes, dtype=bool)
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for rowno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or (rowno == 1 and line.lower().startswith("node_id")):
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise MalformedInputError(
                    f"{path}: row {rowno}: expected 3 columns, got {len(cells)}")
            try:
                node = int(cells[0])
                x, ycoord = float(cells[1]), float(cells[2])
            except ValueError:
                raise MalformedInputError(
                    f"{path}: row {rowno}: non-numeric cell") from None
            if not 0 <= node < num_nodes:
                raise MalformedInputError(
                    f"{path}: row {rowno}: node id {node} out of range "
                    f"[0, {num_nodes})")
            if seen[node]:
                raise MalformedInputError(
                    f"{path}: row {rowno}: duplicate node id {node}")
            seen[node] = True
            y[node] = (x, ycoord)
            count += 1
    if count != num_nodes:
        raise MalformedInputError(
            f"{path}: {count} layout rows for {num_nodes} nodes")
    return y


def _manifest(command: str, args, cfg, inputs: dict, outputs: dict) -> dict:
    argv = getattr(args, "argv_used", None)
    return {
        "command": command,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "inputs": inputs,
        "config": None if cfg is None else dataclasses.asdict(cfg),
        "argv": [str(a) for a in (sys.argv[1:] if argv is None else argv)],
        "outputs": outputs,
    }


def _input_paths(args, with_layout: bool = False) -> dict:
    paths = {"edges": args.edges, "features": args.features,
             "labels": args.labels}
    if with_layout:
        paths["layout"] = args.layout
    return paths


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = _resolve_config(args, args.num_nodes, args.alpha)
    data = _load_dataset(args.edges, args.features, args.labels, args.num_nodes)
    model, report = train(data, cfg)
    y = embed(model, data)

    os.makedirs(args.out_dir, exist_ok=True)
    layout_path = os.path.join(args.out_dir, "layout.csv")
    svg_path = os.path.join(args.out_dir, "layout.svg")
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    _write_layout_csv(layout_path, y)
    write_svg(svg_path, y, labels=data.labels, edges=data.graph.edge_pairs)
    manifest = _manifest("fit", args, cfg, _input_paths(args),
                         {"layout": layout_path, "svg": svg_path})
    manifest["losses"] = report.total_losses
    manifest["final_loss"] = report.total_losses[-1] if report.total_losses else None
    _write_json_atomic(manifest_path, manifest)
    print(f"wrote {layout_path} ({y.shape[0]} nodes)")
    return 0


def cmd_sweep(args) -> int:
    grid = list(args.grid)
    if not grid:
        raise ValueError("--grid must list at least one alpha value")
    cfg = _resolve_config(args, args.num_nodes, alpha=None)
    data = _load_dataset(args.edges, args.features, args.labels, args.num_nodes)
    result = alpha_sweep(data, cfg, grid, knn_k=args.knn_k,
                         t_ks=args.t_ks, t_rs=args.t_rs)

    os.makedirs(args.out_dir, exist_ok=True)
    sweep_path = os.path.join(args.out_dir, "sweep.json")
    summary_path = os.path.join(args.out_dir, "summary.txt")
    layout_path = os.path.join(args.out_dir, "layout.csv")
    svg_path = os.path.join(args.out_dir, "layout.svg")
    manifest_path = os.path.join(args.out_dir, "manifest.json")

    _write_json_atomic(sweep_path, [r.to_dict() for r in result.reports])
    _write_summary(summary_path, result, args.t_ks, args.t_rs)
    best = result.embeddings[result.alpha_star]
    _write_layout_csv(layout_path, best)
    write_svg(svg_path, best, labels=data.labels, edges=data.graph.edge_pairs)
    manifest = _manifest("sweep", args, cfg, _input_paths(args),
                         {"sweep": sweep_path, "summary": summary_path,
                          "layout": layout_path, "svg": svg_path})
    manifest["grid"] = grid
    manifest["alpha_star"] = result.alpha_star
    _write_json_atomic(manifest_path, manifest)
    print(f"alpha* = {result.alpha_star}")
    return 0


def _write_summary(path, result, t_ks, t_rs) -> None:
    headers = (["alpha"] + [f"T_X({k})" for k in t_ks]
               + [f"T_G({r})" for r in t_rs]
               + ["P_G", "P_X", "P_G+P_X", "1NN_acc"])
    rows = []
    for rep in result.reports:
        cells = [f"{rep.alpha:.3f}"]
        cells += [f"{rep.t_feature[k]:.4f}" for k in t_ks]
        cells += [f"{rep.t_graph[r]:.4f}" for r in t_rs]
        cells += [f"{rep.p_graph:.4f}", f"{rep.p_feature:.4f}",
                  f"{rep.combined:.4f}"]
        cells.append("-" if rep.knn_accuracy is None
                     else f"{rep.knn_accuracy:.4f}")
        rows.append(cells)
    widths = [max(len(h), max((len(r[c]) for r in rows), default=0))
              for c, h in enumerate(headers)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("  ".join(h.rjust(w) for h, w in zip(headers, widths)) + "\n")
        for cells in rows:
            fh.write("  ".join(c.rjust(w) for c, w in zip(cells, widths)) + "\n")
        fh.write(f"\nalpha* = {result.alpha_star}\n")


def cmd_evaluate(args) -> int:
    data = _load_dataset(args.edges, args.features, args.labels)
    y = read_layout_csv(args.layout, data.graph.num_nodes)
    report = evaluate_layout(data, y, knn_k=args.knn_k, t_ks=args.t_ks,
                             t_rs=args.t_rs, folds=DEFAULT_FOLDS)

    os.makedirs(args.out_dir, exist_ok=True)
    metrics_path = os.path.join(args.out_dir, "metrics.json")
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    _write_json_atomic(metrics_path, report.to_dict())
    _write_json_atomic(manifest_path,
                       _manifest("evaluate", args, None,
                                 _input_paths(args, with_layout=True),
                                 {"metrics": metrics_path}))
    print(f"wrote {metrics_path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.argv_used = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args)
    except MalformedInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())
