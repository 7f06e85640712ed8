"""Command-line interface: ``treelets {fit,transform,simulate,compare,cv}``.

Exit codes: 0 success, 1 data or spec error, 2 usage error.
Every artifact embeds the tool version, the resolved run configuration and a
SHA-256 digest of its input bytes. Thread count is an execution detail and is
left out of the embedded configuration, so artifacts do not depend on it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .core import TreeletBasis, resolve_metric, resolve_retention, transform, treelet_fit
from .data import RAW, DataMatrix, format_csv, parse_csv
from .errors import DataError, InvalidSpec, MissingFile, ScaleError, TreeletError, UsageError
from .evaluate import CLEAN, LEAKY, compare_report, nearest_centroid_cv, random_labels
from .simgen import generate, log_transform, spec_from_json

TOOL = "treelets"


# -- helpers -----------------------------------------------------------------


def _read_bytes(path):
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, "rb") as fh:
        return fh.read()


def _digest(*blobs):
    h = hashlib.sha256()
    for b in blobs:
        h.update(b)
    return h.hexdigest()


def _provenance(config, digest):
    return {"tool": TOOL, "version": __version__, "config": config, "input_sha256": digest}


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _compact(obj):
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_all(output_dir, files):
    """Write ``{name: text}`` only after every artifact has been rendered."""
    os.makedirs(output_dir, exist_ok=True)
    for name, text in files.items():
        write_atomic(os.path.join(output_dir, name), text)


def _load_matrix(path, apply_log):
    raw = _read_bytes(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    X, _ = parse_csv(text)
    if apply_log:
        if X.scale == RAW:
            X = log_transform(X)
        else:
            X = log_transform(DataMatrix(X.values, X.var_names, RAW))
    elif X.scale == RAW:
        raise ScaleError(f"{path} holds raw-scale values; rerun with --log to apply log_transform on ingest")
    return X, raw


def _load_labels(path):
    raw = _read_bytes(path)
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    labels = obj.get("labels") if isinstance(obj, dict) else obj
    if not isinstance(labels, list):
        raise DataError(f"{path}: expected a JSON list of labels or an object with a 'labels' list")
    return labels, raw


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TREELET_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"TREELET_SEED must be an integer, got {env!r}") from None
    return None


# -- commands ----------------------------------------------------------------


def cmd_fit(args):
    X, raw = _load_matrix(args.input, args.log)
    config = {
        "command": "fit",
        "input": args.input,
        "metric": resolve_metric(args.metric),
        "retention": resolve_retention(args.retention),
        "level": args.level,
        "log": args.log,
    }
    basis, dend = treelet_fit(X, args.level, config["metric"], config["retention"])
    prov = _provenance(config, _digest(raw))
    _write_all(
        args.output_dir,
        {
            "basis.json": _dump_json({"provenance": prov, **basis.to_json()}),
            "dendrogram.json": _dump_json({"provenance": prov, **dend.to_json()}),
            "dendrogram.nwk": dend.to_newick(comment=_compact(prov)) + "\n",
        },
    )


def cmd_transform(args):
    X, raw = _load_matrix(args.input, args.log)
    basis_raw = _read_bytes(args.basis)
    try:
        basis = TreeletBasis.from_json(json.loads(basis_raw))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.basis}: not a basis file ({exc})") from None
    level = basis.levels if args.level is None else args.level
    coeffs = transform(basis, X.values, level)
    config = {
        "command": "transform",
        "input": args.input,
        "basis": args.basis,
        "level": args.level,
        "log": args.log,
    }
    prov = _provenance(config, _digest(raw, basis_raw))
    out = DataMatrix(coeffs, tuple(f"c{i}" for i in range(basis.p)))
    _write_all(args.output_dir, {"coefficients.csv": format_csv(out, {"provenance": _compact(prov)})})


def cmd_simulate(args):
    raw = _read_bytes(args.spec)
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidSpec("<file>", f"invalid JSON ({exc})") from None
    seed = _resolve_seed(args)
    if isinstance(obj, dict):
        if args.seed is not None or ("seed" not in obj and seed is not None):
            obj = {**obj, "seed": seed}
    spec = spec_from_json(obj)
    X, labels = generate(spec)
    config = {"command": "simulate", "spec": args.spec, "seed": obj.get("seed") if isinstance(obj, dict) else None}
    prov = _provenance(config, _digest(raw))
    sidecar = {
        "provenance": prov,
        "model": obj.get("model", "block"),
        "scale": X.scale,
        "var_names": list(X.var_names),
        "labels": labels,
    }
    _write_all(
        args.output_dir,
        {
            "data.csv": format_csv(X, {"provenance": _compact(prov)}),
            "labels.json": _dump_json(sidecar),
        },
    )


def cmd_compare(args):
    X, raw = _load_matrix(args.input, args.log)
    blobs = [raw]
    labels = None
    if args.labels:
        labels, lab_raw = _load_labels(args.labels)
        blobs.append(lab_raw)
    config = {
        "command": "compare",
        "input": args.input,
        "labels": args.labels,
        "metric": resolve_metric(args.metric),
        "retention": resolve_retention(args.retention),
        "linkage": args.linkage,
        "log": args.log,
        "timing": args.timing,
    }
    report = compare_report(X, labels, config["metric"], config["retention"], args.linkage, args.timing)
    prov = _provenance(config, _digest(*blobs))
    rows = ["K,treelet,pca"]
    for (k, t), (_, q) in zip(report["treelet"]["energy"], report["pca"]["energy"]):
        rows.append(f"{k},{t!r},{q!r}")
    _write_all(
        args.output_dir,
        {
            "report.json": _dump_json({"provenance": prov, **report}),
            "energy.csv": f"# provenance: {_compact(prov)}\n" + "\n".join(rows) + "\n",
        },
    )


def cmd_cv(args):
    X, raw = _load_matrix(args.input, args.log)
    blobs = [raw]
    y = None
    if args.labels:
        y, lab_raw = _load_labels(args.labels)
        blobs.append(lab_raw)
        y = np.asarray(y)
    seed = _resolve_seed(args)
    seed = 0 if seed is None else seed
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.k is None:
        raise UsageError("cv needs --k")
    config = {
        "command": "cv",
        "input": args.input,
        "labels": args.labels,
        "metric": resolve_metric(args.metric),
        "retention": resolve_retention(args.retention),
        "level": args.level,
        "k": args.k,
        "folds": args.folds,
        "mode": args.mode,
        "seed": seed,
        "repeats": args.repeats,
        "log": args.log,
    }

    def one(r):
        s = seed + r
        labels = y if y is not None else random_labels(X.n, [s, 2])
        return nearest_centroid_cv(
            X, labels, args.k, args.folds, args.mode, s, args.level, config["metric"], config["retention"],
            threads=args.threads if args.repeats == 1 else 1,
        )

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(one, range(args.repeats)))
    else:
        reports = [one(r) for r in range(args.repeats)]

    prov = _provenance(config, _digest(*blobs))
    means = [r.mean_accuracy for r in reports]
    summary = {
        "mean_accuracy": float(np.mean(means)),
        "inside_chance": sum(r.inside_chance for r in reports),
        "above_chance": sum(r.mean_accuracy > r.chance_interval[1] for r in reports),
        "repeats": len(reports),
    }
    rows = ["repeat,seed,fold,accuracy"]
    for i, r in enumerate(reports):
        for f, acc in enumerate(r.fold_accuracies):
            rows.append(f"{i},{r.seed},{f},{acc!r}")
    _write_all(
        args.output_dir,
        {
            "cv_report.json": _dump_json(
                {"provenance": prov, "summary": summary, "runs": [r.to_json() for r in reports]}
            ),
            "cv_folds.csv": f"# provenance: {_compact(prov)}\n" + "\n".join(rows) + "\n",
        },
    )


# -- parser ------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog=TOOL, description="Treelet transform toolkit")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--output-dir", required=True)
        p.add_argument("--threads", type=_positive_int, default=1)
        if data:
            p.add_argument("--input", required=True)
            p.add_argument("--log", action="store_true", help="apply log_transform on ingest")

    def model_flags(p):
        p.add_argument("--metric", choices=["cov", "abscorr"], default="cov")
        p.add_argument("--retention", choices=["maxvar", "lowindex"], default="maxvar")

    p = sub.add_parser("fit", help="fit a treelet basis and dendrogram")
    common(p)
    model_flags(p)
    p.add_argument("--level", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="compute coefficients with a fitted basis")
    common(p)
    p.add_argument("--basis", required=True)
    p.add_argument("--level", type=int, default=None)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("simulate", help="draw synthetic data from a JSON model spec")
    common(p, data=False)
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="treelet vs PCA vs HC report")
    common(p)
    model_flags(p)
    p.add_argument("--labels", default=None, help="JSON block labels per variable")
    p.add_argument("--linkage", choices=["average", "complete"], default="average")
    p.add_argument("--timing", action="store_true", help="include wall-clock timings (not reproducible)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cv", help="nearest-centroid cross-validation, clean or leaky")
    common(p)
    model_flags(p)
    p.add_argument("--labels", default=None, help="JSON sample labels; random labels when omitted")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--mode", choices=[CLEAN, LEAKY], default=CLEAN)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_cv)
    return parser


def argv_from_config(config, output_dir):
    """Rebuild a command line from an artifact's embedded configuration."""
    config = dict(config)
    argv = [config.pop("command"), "--output-dir", output_dir]
    metric_flag = {"covariance": "cov", "abs_correlation": "abscorr"}
    for key, value in config.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif key == "metric":
            argv += [flag, metric_flag[value]]
        else:
            argv += [flag, str(value)]
    return argv


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"{TOOL} {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, TreeletError) as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
