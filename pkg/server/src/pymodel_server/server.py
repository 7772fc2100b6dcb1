"""Bridge-protocol model server.

Fits a random survival forest on the requested dataset, keeps the top-k
features by permutation importance (concordance decrease), refits on the
retained set, then answers newline-delimited JSON requests on stdin until
end of input:

    {"op": "info"}                    -> {"name": ..., "n_features": K, "features": [...], ...}
    {"op": "predict", "x": [[...]]}   -> {"y": [...]}
    anything else                     -> {"error": "..."}

Fitting problems are reported on stderr with a nonzero exit before any
protocol traffic; request-level problems are error responses, and the loop
keeps serving.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .datasets import DatasetFormatError, DatasetMissingError, SurvivalData, load_dataset
from .metrics import permutation_importance, select_top_k
from .rsf import fit_survival_forest

__all__ = ["main", "prepare_model"]


def _log(msg: str) -> None:
    print(f"pymodel-server: {msg}", file=sys.stderr, flush=True)


def prepare_model(data: SurvivalData, seed: int, top_k: int, n_trees: int, n_repeats: int = 5):
    """Fit, select the top-k features, refit. Returns (model, data_served)."""
    forest = fit_survival_forest(
        data.X, data.time, data.event, feature_names=data.feature_names,
        n_trees=n_trees, seed=seed,
    )
    oob = forest.oob_concordance(data.X, data.time, data.event)
    _log(
        f"dataset {data.tag}: {data.n_rows} rows, {data.n_features} features, "
        f"{data.n_events} events; full-model OOB concordance {oob:.3f}"
    )
    if top_k <= 0 or top_k >= data.n_features:
        return forest, data
    importance = permutation_importance(
        forest, data.X, data.time, data.event, n_repeats=n_repeats, seed=seed
    )
    kept = select_top_k(importance.scores, top_k)
    restricted = SurvivalData(
        tag=data.tag,
        feature_names=tuple(data.feature_names[i] for i in kept),
        X=data.X[:, kept],
        time=data.time,
        event=data.event,
    )
    model = fit_survival_forest(
        restricted.X, restricted.time, restricted.event,
        feature_names=restricted.feature_names, n_trees=n_trees, seed=seed,
    )
    oob_restricted = model.oob_concordance(restricted.X, restricted.time, restricted.event)
    _log(
        f"kept top {top_k} features: {', '.join(restricted.feature_names)}; "
        f"restricted-model OOB concordance {oob_restricted:.3f}"
    )
    return model, restricted


def export_csv(data: SurvivalData, path: str) -> None:
    lines = [",".join(list(data.feature_names) + ["time", "event"])]
    for i in range(data.n_rows):
        cells = [repr(float(v)) for v in data.X[i]]
        cells.append(repr(float(data.time[i])))
        cells.append(str(int(data.event[i])))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"wrote served dataset ({data.n_rows} rows, {data.n_features} features) to {path}")


def _handle(request: dict, model, data: SurvivalData, name: str) -> dict:
    op = request.get("op")
    if op == "info":
        return {
            "name": name,
            "n_features": model.n_features(),
            "features": list(model.feature_names),
            "dataset": data.tag,
            "n_rows": data.n_rows,
            "n_events": data.n_events,
            "seed": model.seed,
        }
    if op == "predict":
        x = request.get("x")
        if not isinstance(x, list) or any(
            not isinstance(row, list) or len(row) != model.n_features() for row in x
        ):
            return {"error": f"predict expects x as a list of length-{model.n_features()} rows"}
        if not x:
            return {"y": []}
        try:
            batch = np.asarray(x, dtype=float)
        except (TypeError, ValueError) as exc:
            return {"error": f"non-numeric predict input: {exc}"}
        if not np.isfinite(batch).all():
            return {"error": "predict input contains non-finite values"}
        return {"y": [float(v) for v in model.predict(batch)]}
    return {"error": f"unknown op {op!r}"}


def serve(model, data: SurvivalData, name: str, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request is not an object")
        except ValueError as exc:
            response = {"error": f"invalid request json: {exc}"}
        else:
            response = _handle(request, model, data, name)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pymodel-server",
        description="random survival forest behind the NDJSON model-bridge protocol",
    )
    parser.add_argument(
        "--dataset", required=True,
        help="whas500 | breast-cancer | csv:<path>",
    )
    parser.add_argument("--data-dir", default=None, help="cache directory for study files")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--top-k", type=int, default=4, help="features kept after importance (0 = all)")
    parser.add_argument("--n-trees", type=int, default=100)
    parser.add_argument("--export-csv", default=None, help="also write the served dataset as CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_dataset(args.dataset, data_dir=args.data_dir)
        model, served = prepare_model(data, seed=args.seed, top_k=args.top_k, n_trees=args.n_trees)
    except (DatasetMissingError, DatasetFormatError, ValueError) as exc:
        _log(f"startup failed: {exc}")
        return 2
    if args.export_csv:
        export_csv(served, args.export_csv)
    serve(model, served, name=f"rsf-{data.tag}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
