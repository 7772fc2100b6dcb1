"""Command-line entry point.

Subcommands: explain (attribution report for one instance), anchor (who the
baseline individual is), importance (permutation feature importance),
experiment (the re-label validation protocol), synth (generate right-skewed
survival data). Every run is fully determined by its flags; outputs echo the
resolved configuration and are written atomically.

Exit codes: 0 success, 2 usage error, 3 data error, 4 model or bridge error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile

import numpy as np

from .bridge import BridgeError, connect
from .core import (
    Dataset,
    Instance,
    ModelError,
    SummaryStatistic,
    ValidationError,
)
from .engine import exact_shapley, find_anchor, sampled_shapley
from .harness import (
    ExperimentConfig,
    permutation_importance,
    run_experiment,
    select_top_k,
    synth_survival,
)
from .models import fit_forest, fit_linear, fit_tree
from .reference import SamplerConfig

__all__ = ["main", "load_dataset"]


class DataError(ValueError):
    """A problem with an input file, reported with file and line context."""


TRUE_WORDS = {"1", "true", "t", "yes"}
FALSE_WORDS = {"0", "false", "f", "no"}


def load_dataset(path: str) -> Dataset:
    """Read a dataset CSV: header row required, 'time' column required,
    'event' column optional, every other column is a feature. Missing values
    are rejected outright rather than imputed."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{path}:1: duplicate column names: {', '.join(dupes)}")
        if "time" not in header:
            raise DataError(f"{path}:1: no 'time' column in header {header}")
        time_col = header.index("time")
        event_col = header.index("event") if "event" in header else None
        feature_cols = [i for i in range(len(header)) if i not in (time_col, event_col)]
        if not feature_cols:
            raise DataError(f"{path}:1: no feature columns besides the outcome columns")

        rows, times, events = [], [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(c.strip() == "" for c in record):
                continue
            if len(record) != len(header):
                raise DataError(
                    f"{path}:{lineno}: row has {len(record)} fields, header has {len(header)}"
                )
            def cell(i):
                raw = record[i].strip()
                if raw == "":
                    raise DataError(
                        f"{path}:{lineno}: missing value in column '{header[i]}' (no imputation)"
                    )
                return raw

            try:
                rows.append([float(cell(i)) for i in feature_cols])
                times.append(float(cell(time_col)))
            except ValueError as exc:
                if isinstance(exc, DataError):
                    raise
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if event_col is not None:
                raw = cell(event_col).lower()
                if raw in TRUE_WORDS:
                    events.append(True)
                elif raw in FALSE_WORDS:
                    events.append(False)
                else:
                    raise DataError(
                        f"{path}:{lineno}: event value {raw!r} is not a boolean"
                    )
        if not rows:
            raise DataError(f"{path}: no data rows")
    try:
        return Dataset(
            feature_names=tuple(header[i] for i in feature_cols),
            features=np.array(rows),
            time=np.array(times),
            event=np.array(events, dtype=bool) if event_col is not None else None,
        )
    except ValidationError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".statshap-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.output:
        _write_atomic(args.output, text)
    else:
        print(text)


def _parse_statistic(spec: str) -> SummaryStatistic:
    if spec == "mean":
        return SummaryStatistic.mean()
    if spec == "median":
        return SummaryStatistic.median()
    if spec.startswith("q="):
        try:
            return SummaryStatistic.quantile(float(spec[2:]))
        except (ValueError, ValidationError) as exc:
            raise argparse.ArgumentTypeError(f"bad statistic {spec!r}: {exc}") from None
    raise argparse.ArgumentTypeError(
        f"bad statistic {spec!r}: use 'mean', 'median', or 'q=<value in (0,1)>'"
    )


def _parse_estimator(spec: str):
    if spec == "exact":
        return None
    if spec.startswith("sampled:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad estimator {spec!r}") from None
        if n < 1:
            raise argparse.ArgumentTypeError("sampled estimator needs >= 1 permutations")
        return n
    raise argparse.ArgumentTypeError(f"bad estimator {spec!r}: use 'exact' or 'sampled:<n>'")


def _resolve_model(spec: str, dataset: Dataset, args):
    """Returns (model, close_fn). Builtin models are fit on the dataset;
    external specs launch a bridge server."""
    if spec.startswith("builtin:"):
        kind = spec.split(":", 1)[1]
        if kind == "linear":
            return fit_linear(dataset), None
        if kind == "tree":
            return fit_tree(dataset, max_depth=args.max_depth, min_leaf=args.min_leaf), None
        if kind == "forest":
            return (
                fit_forest(
                    dataset,
                    n_trees=args.n_trees,
                    max_depth=args.max_depth,
                    min_leaf=args.min_leaf,
                    seed=args.seed,
                ),
                None,
            )
        raise ValidationError(f"unknown builtin model {kind!r}; use linear, tree, or forest")
    if spec.startswith("external:"):
        handle = connect(spec.split(":", 1)[1], timeout_ms=args.timeout_ms)
        if handle.n_features() != dataset.n_features:
            names = dataset.feature_names
            handle.close()
            raise ValidationError(
                f"external model expects {handle.n_features()} features, "
                f"dataset has {dataset.n_features} ({', '.join(names)})"
            )
        return handle, handle.close
    raise ValidationError(f"unknown model spec {spec!r}; use builtin:<kind> or external:<command>")


def _sampler_from(args) -> SamplerConfig:
    return SamplerConfig(mode=args.sampler, m=args.m, k=args.k, seed=args.seed)


def _config_echo(args, extra: dict | None = None) -> dict:
    echo = {
        "subcommand": args.command,
        "data": getattr(args, "data", None),
        "model": getattr(args, "model", None),
        "statistic": getattr(args, "statistic_raw", None),
        "sampler": getattr(args, "sampler", None),
        "m": getattr(args, "m", None),
        "k": getattr(args, "k", None),
        "estimator": getattr(args, "estimator_raw", None),
        "seed": getattr(args, "seed", None),
    }
    if extra:
        echo.update(extra)
    return {k: v for k, v in echo.items() if v is not None}


def _select_instance(args, dataset: Dataset) -> tuple[Instance, dict]:
    if args.row is not None and args.values is not None:
        raise ValidationError("give either --row or --values, not both")
    if args.row is not None:
        if not (0 <= args.row < dataset.n_rows):
            raise DataError(
                f"row index {args.row} out of range; valid rows are 0..{dataset.n_rows - 1}"
            )
        return dataset.instance(args.row), {"row": args.row}
    if args.values is not None:
        try:
            vals = [float(v) for v in args.values.split(",")]
        except ValueError as exc:
            raise DataError(f"bad --values: {exc}") from None
        if len(vals) != dataset.n_features:
            raise DataError(
                f"--values has {len(vals)} entries, dataset has {dataset.n_features} features"
            )
        return Instance(np.array(vals)), {"values": vals}
    raise ValidationError("select an instance with --row or --values")


def _anchor_block(anchor, feature_names) -> dict:
    block = {"synthetic": anchor.synthetic, "prediction": anchor.prediction}
    if not anchor.synthetic:
        block["index"] = anchor.index
        block["values"] = {n: float(v) for n, v in zip(feature_names, anchor.values)}
    return block


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_explain(args) -> int:
    dataset = load_dataset(args.data)
    stat = args.statistic
    model, close = _resolve_model(args.model, dataset, args)
    try:
        x, selector = _select_instance(args, dataset)
        sampler = _sampler_from(args)
        if args.estimator is None:
            report = exact_shapley(model, x, dataset, sampler, stat)
        else:
            report = sampled_shapley(model, x, dataset, sampler, stat, args.estimator, seed=args.seed)
        anchor = find_anchor(model, dataset, stat)
        payload = {
            "config": _config_echo(args, {"instance": selector}),
            "statistic": stat.label,
            "method": report.method,
            "n_permutations": report.n_permutations,
            "n_references": report.n_references,
            "prediction": report.prediction,
            "phi0": report.phi0,
            "attributions": [
                {"feature": n, "phi": float(v)}
                for n, v in zip(dataset.feature_names, report.phi)
            ],
            "efficiency_residual": report.efficiency_residual,
            "anchor": _anchor_block(anchor, dataset.feature_names),
        }
        if args.format == "json":
            _emit(args, json.dumps(payload, indent=2))
        else:
            width = max(len(n) for n in dataset.feature_names)
            lines = [
                f"statistic      {stat.label}",
                f"prediction     {report.prediction:.6g}",
                f"phi0           {report.phi0:.6g}",
                "",
            ]
            lines += [
                f"{n.ljust(width)}  {v:+.6g}" for n, v in zip(dataset.feature_names, report.phi)
            ]
            lines += [
                "",
                f"sum(phi)             {math.fsum(report.phi):+.6g}",
                f"prediction - phi0    {report.prediction - report.phi0:+.6g}",
                f"efficiency residual  {report.efficiency_residual:+.3g}",
            ]
            if anchor.synthetic:
                lines.append(f"anchor               synthetic, prediction {anchor.prediction:.6g}")
            else:
                lines.append(
                    f"anchor               row {anchor.index}, prediction {anchor.prediction:.6g}"
                )
            _emit(args, "\n".join(lines))
        return 0
    finally:
        if close:
            close()


def cmd_anchor(args) -> int:
    dataset = load_dataset(args.data)
    model, close = _resolve_model(args.model, dataset, args)
    try:
        anchor = find_anchor(model, dataset, args.statistic)
        payload = {
            "config": _config_echo(args),
            "statistic": args.statistic.label,
            "anchor": _anchor_block(anchor, dataset.feature_names),
        }
        if args.format == "json":
            _emit(args, json.dumps(payload, indent=2))
        else:
            if anchor.synthetic:
                _emit(
                    args,
                    f"anchor: synthetic (no single individual), prediction {anchor.prediction:.6g}",
                )
            else:
                vals = ", ".join(
                    f"{n}={v:.4g}" for n, v in zip(dataset.feature_names, anchor.values)
                )
                _emit(
                    args,
                    f"anchor: row {anchor.index}, prediction {anchor.prediction:.6g}\n{vals}",
                )
        return 0
    finally:
        if close:
            close()


def cmd_importance(args) -> int:
    dataset = load_dataset(args.data)
    model, close = _resolve_model(args.model, dataset, args)
    try:
        result = permutation_importance(
            model, dataset, metric=args.metric, n_repeats=args.n_repeats, seed=args.seed
        )
        payload = {
            "config": _config_echo(args, {"metric": args.metric, "n_repeats": args.n_repeats}),
            "baseline": result.baseline,
            "scores": [
                {"feature": n, "score": float(s), "stderr": float(e)}
                for n, s, e in zip(dataset.feature_names, result.scores, result.standard_errors())
            ],
        }
        if args.top_k is not None:
            picked = select_top_k(result.scores, args.top_k)
            payload["top_k"] = [dataset.feature_names[i] for i in picked]
        _emit(args, json.dumps(payload, indent=2))
        return 0
    finally:
        if close:
            close()


def cmd_experiment(args) -> int:
    dataset = load_dataset(args.data)
    model, close = _resolve_model(args.model, dataset, args)
    try:
        config = ExperimentConfig(
            n_explained=args.n_explained,
            seed=args.seed,
            sampler=_sampler_from(args),
            f_n_permutations=args.estimator,
            g_n_permutations=args.estimator,
            scaling=args.scaling,
            fit_regressor=lambda _ds: model,
        )
        report = run_experiment(dataset, config)
        if args.format == "json":
            payload = report.to_dict()
            payload["config"].update(_config_echo(args, {"scaling": args.scaling}))
            _emit(args, json.dumps(payload, indent=2))
        else:
            _emit(args, report.format_table())
        return 0
    finally:
        if close:
            close()


def cmd_synth(args) -> int:
    weights = None
    if args.weights:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError as exc:
            raise DataError(f"bad --weights: {exc}") from None
    dataset = synth_survival(
        n=args.n,
        m_features=args.features,
        effect_weights=weights,
        skew=args.skew,
        censor_rate=args.censor,
        seed=args.seed,
    )
    lines = [",".join(list(dataset.feature_names) + ["time", "event"])]
    for i in range(dataset.n_rows):
        cells = [repr(float(v)) for v in dataset.features[i]]
        cells.append(repr(float(dataset.time[i])))
        cells.append(str(int(dataset.event[i])))
        lines.append(",".join(cells))
    _emit(args, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statshap",
        description="Shapley-value explanations with pluggable summary statistics "
        "for black-box survival-time models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_model=True, with_stat=True, with_sampler=True):
        p.add_argument("--data", required=True, help="dataset CSV (header; 'time' column required)")
        if with_model:
            p.add_argument(
                "--model",
                default="builtin:forest",
                help="builtin:{linear|tree|forest} or external:<command>",
            )
            p.add_argument("--n-trees", type=int, default=100)
            p.add_argument("--max-depth", type=int, default=8)
            p.add_argument("--min-leaf", type=int, default=1)
            p.add_argument("--timeout-ms", type=int, default=10000, help="bridge request timeout")
        if with_stat:
            p.add_argument(
                "--statistic",
                type=_parse_statistic,
                default=SummaryStatistic.median(),
                help="mean | median | q=<value>",
            )
        if with_sampler:
            p.add_argument("--sampler", choices=["marginal", "conditional"], default="conditional")
            p.add_argument("--m", type=int, default=0, help="references per coalition (0 = all)")
            p.add_argument("--k", type=int, default=None, help="conditional neighbour count")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", default=None, help="write here (atomic); default stdout")
        p.add_argument("--format", choices=["json", "table"], default="json")

    p = sub.add_parser("explain", help="attribution report for one instance")
    add_common(p)
    p.add_argument("--estimator", type=_parse_estimator, default=None, help="exact | sampled:<n>")
    p.add_argument("--row", type=int, default=None, help="explain this dataset row")
    p.add_argument("--values", default=None, help="explain these comma-separated feature values")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("anchor", help="report the anchor individual for a statistic")
    add_common(p, with_sampler=False)
    p.set_defaults(func=cmd_anchor)

    p = sub.add_parser("importance", help="permutation feature importance")
    add_common(p, with_stat=False, with_sampler=False)
    p.add_argument("--metric", choices=["mse", "error_rate"], default="mse")
    p.add_argument("--n-repeats", type=int, default=5)
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("experiment", help="run the re-label validation experiment")
    add_common(p, with_stat=False)
    p.add_argument("--estimator", type=_parse_estimator, default=None, help="exact | sampled:<n>")
    p.add_argument("--n-explained", type=int, default=20)
    p.add_argument("--scaling", choices=["l1", "none"], default="l1")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="generate right-skewed synthetic survival data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--features", type=int, default=4)
    p.add_argument("--weights", default=None, help="comma-separated effect weights")
    p.add_argument("--skew", type=float, default=1.0)
    p.add_argument("--censor", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_synth, format="csv")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # keep the raw strings for the config echo
    args.statistic_raw = getattr(args, "statistic", None) and args.statistic.label
    est = getattr(args, "estimator", "absent")
    args.estimator_raw = None if est == "absent" else ("exact" if est is None else f"sampled:{est}")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"statshap: data error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"statshap: data error: {exc}", file=sys.stderr)
        return 3
    except BridgeError as exc:
        print(f"statshap: bridge error: {exc}", file=sys.stderr)
        return 4
    except ModelError as exc:
        print(f"statshap: model error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
