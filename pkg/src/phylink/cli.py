"""Command line entry points.

Subcommands: ``fit`` (posterior for one model on one matrix), ``crossval``
(k-fold comparison of models plus the nearest-neighbour baseline), ``scan``
(distance-transform grid search), ``simulate`` (synthetic data sets), and
``report`` (degree, ordering, and recovery tables plus figures, all derived
from previously written artifacts).  Every run
directory gets a JSON manifest with the resolved configuration and content
digests of inputs and outputs; manifests carry no timestamps, so re-running
with the same inputs and seed reproduces them byte for byte.

Exit codes: 2 for configuration problems, 3 for data problems, 4 for
numerical failures.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .interactions import (
    InteractionMatrix,
    InteractionRecord,
    LabelMismatch,
    build_matrix,
    degree_distributions,
    drop_single_host_parasites,
    left_order,
    normalize_label,
    read_edge_csv,
    read_matrix_csv,
    read_probability_csv,
    temporal_split,
    write_edge_csv,
    write_matrix_csv,
)
from .model import AffinityPriors
from .newick import (
    pairwise_depths,
    parse_newick,
    prune_to,
    random_tree,
    relabel_tips,
    serialize_newick,
)
from .sampler import (
    SamplerConfig,
    generate_synthetic,
    posterior_predict,
    read_trace_csv,
    run_mcmc,
)
from .evaluate import parse_model_name, run_crossval, top_x_recovery
from .transforms import TransformSpec, transform_scan

__all__ = ["main", "build_parser", "MissingArtifact"]


class MissingArtifact(DataError):
    """A report was requested from a run directory lacking a needed file."""


_PKG_VERSION = "0.1.0"
_trapz = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_SCAN_GRID = "eb:-5:5:21,lambda:0:1:11,delta:0.25:4:16,ou:0:5:11,identity"


# ---------------------------------------------------------------------------
# configuration plumbing

def load_config_file(path) -> dict:
    """Flat key = value file; '#' starts a comment, dashes equal underscores."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def _conv_int(raw: str) -> int:
    return int(raw)


def _conv_float(raw: str) -> float:
    return float(raw)


def _conv_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _conv_weight(raw: str):
    if raw.strip() == "mean_distance":
        return "mean_distance"
    return float(raw)


class Options:
    """Effective option values: command line beats config file beats default."""

    def __init__(self, args, config: dict):
        self._args = args
        self._config = config
        self.resolved: dict = {}

    def get(self, name: str, default, conv=str):
        value = getattr(self._args, name, None)
        if value is None and name in self._config:
            raw = self._config[name]
            try:
                value = conv(raw)
            except ValueError as err:
                raise ConfigError(f"config key {name}: {err}") from None
        if value is None:
            value = default
        if isinstance(value, (str, int, float, bool)) or value is None:
            self.resolved[name] = value
        return value


def sampler_config_from(opts: Options, *, seed: int, flags: dict) -> SamplerConfig:
    priors = AffinityPriors(
        host_shape=opts.get("host_shape", 1.0, _conv_float),
        host_rate=opts.get("host_rate", 1.0, _conv_float),
        parasite_shape=opts.get("parasite_shape", 1.0, _conv_float),
        parasite_rate=opts.get("parasite_rate", 1.0, _conv_float),
    )
    config = SamplerConfig(
        iterations=opts.get("iterations", 20000, _conv_int),
        burn_in=opts.get("burn_in", 20000, _conv_int),
        thin=opts.get("thin", 1, _conv_int),
        seed=seed,
        adapt_window=opts.get("adapt_window", 50, _conv_int),
        proposal_scale_init=opts.get("proposal_scale", 0.1, _conv_float),
        tree_scale_init=opts.get("tree_scale_init", 0.0, _conv_float),
        miss_prob_init=opts.get("miss_prob_init", 0.5, _conv_float),
        use_phylogeny=flags["use_phylogeny"],
        use_affinities=flags["use_affinities"],
        use_uncertainty=flags["use_uncertainty"],
        row_average=opts.get("row_average", True, _conv_bool),
        parallel_rows=opts.get("parallel_rows", False, _conv_bool),
        empty_neighbor_weight=opts.get("empty_neighbor_weight", 1.0, _conv_weight),
        priors=priors,
    )
    config.validate()
    return config


# ---------------------------------------------------------------------------
# input loading

def load_tree_depths(tree_path, hosts, normalize_mode: str):
    """Parse a newick file and return pairwise depths for exactly ``hosts``.

    Tip labels are matched to host labels through ``normalize_label``; the
    tree is pruned to the matched tips and depths are normalized on the
    pruned tree.
    """
    try:
        with open(tree_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise DataError(f"cannot read tree file {tree_path}: {err}") from None
    tree = parse_newick(text)
    norm_to_tip: dict[str, str] = {}
    for lbl in tree.tip_labels():
        key = normalize_label(lbl, normalize_mode)
        other = norm_to_tip.get(key)
        if other is not None and other != lbl:
            raise DataError(
                f"tree tips {other!r} and {lbl!r} collide after normalization")
        norm_to_tip[key] = lbl
    mapping: dict[str, str] = {}
    missing = []
    for h in hosts:
        tip = norm_to_tip.get(normalize_label(h, normalize_mode))
        if tip is None:
            missing.append(h)
            continue
        if tip in mapping:
            raise DataError(
                f"hosts {mapping[tip]!r} and {h!r} resolve to the same tree tip {tip!r}")
        mapping[tip] = h
    if missing:
        shown = ", ".join(repr(m) for m in missing[:5])
        more = "" if len(missing) <= 5 else f" and {len(missing) - 5} more"
        raise LabelMismatch(
            f"{len(missing)} hosts have no tip in the tree: {shown}{more}")
    tree = relabel_tips(tree, mapping)
    tree = prune_to(tree, list(hosts))
    return pairwise_depths(tree)


def load_dataset(args, opts: Options, *, need_tree: bool):
    """Edges (plus optional tree) to an aligned matrix and depths."""
    if args.edges is None:
        raise ConfigError("--edges is required")
    records = read_edge_csv(args.edges)
    Z = build_matrix(records)
    if opts.get("drop_single_host", False, _conv_bool):
        Z = drop_single_host_parasites(Z)
    depths = None
    if need_tree:
        if args.tree is None:
            raise ConfigError("this model needs a tree; pass --tree")
        depths = load_tree_depths(args.tree, Z.hosts,
                                  opts.get("label_normalize", "loose"))
    return Z, depths


# ---------------------------------------------------------------------------
# manifests

def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(out_dir, command: str, resolved: dict, input_paths, output_names,
                   name: str = "manifest.json") -> None:
    manifest = {
        "command": command,
        "version": _PKG_VERSION,
        "config": {k: v for k, v in sorted(resolved.items())},
        "inputs": {str(p): _sha256(p) for p in input_paths},
        "outputs": {n: _sha256(os.path.join(out_dir, n)) for n in sorted(output_names)},
    }
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# fit

def cmd_fit(args) -> int:
    config_file = load_config_file(args.config) if args.config else {}
    opts = Options(args, config_file)
    seed = opts.get("seed", 0, _conv_int)
    model_name = opts.get("model", "full")
    if args.with_g:
        model_name += "+g"
    flags = parse_model_name(model_name)
    if flags.get("baseline"):
        raise ConfigError("fit expects a probabilistic model, not the baseline")
    opts.resolved["model"] = model_name

    Z, depths = load_dataset(args, opts, need_tree=flags["use_phylogeny"])
    holdout = None
    cutoff = opts.get("year_cutoff", None, _conv_int)
    if cutoff is not None:
        Z, holdout = temporal_split(Z, cutoff)

    config = sampler_config_from(opts, seed=seed, flags=flags)
    trace = run_mcmc(Z, depths, config)
    probs = posterior_predict(trace, Z, depths)

    out = _ensure_out(args.out)
    outputs = []

    write_matrix_csv(os.path.join(out, "matrix.csv"), Z)
    outputs.append("matrix.csv")
    trace.to_csv(os.path.join(out, "trace.csv"))
    outputs.append("trace.csv")
    write_matrix_csv(os.path.join(out, "predictive.csv"), Z, values=probs, fmt="%.6f")
    outputs.append("predictive.csv")

    with open(os.path.join(out, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "mean", "sd", "q025", "q975", "ess"])
        for row in trace.summary():
            writer.writerow([row["parameter"]] + [
                format(row[k], ".10g") for k in ("mean", "sd", "q025", "q975", "ess")])
    outputs.append("summary.csv")

    with open(os.path.join(out, "diagnostics.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        writer.writerow(["model", model_name])
        writer.writerow(["n_hosts", Z.shape[0]])
        writer.writerow(["n_parasites", Z.shape[1]])
        writer.writerow(["n_interactions", Z.n_ones])
        writer.writerow(["n_recorded_sweeps", trace.n_recorded])
        writer.writerow(["tree_scale_acceptance", format(trace.eta_acceptance, ".6g")])
        writer.writerow(["seed", seed])
    outputs.append("diagnostics.csv")

    if holdout is not None:
        write_matrix_csv(os.path.join(out, "holdout.csv"), Z,
                         values=holdout.astype(np.uint8))
        outputs.append("holdout.csv")

    inputs = [args.edges] + ([args.tree] if args.tree else [])
    write_manifest(out, "fit", opts.resolved, inputs, outputs)
    print(f"fit: {Z.shape[0]} hosts x {Z.shape[1]} parasites, "
          f"{trace.n_recorded} recorded sweeps -> {out}")
    return 0


# ---------------------------------------------------------------------------
# crossval

def cmd_crossval(args) -> int:
    config_file = load_config_file(args.config) if args.config else {}
    opts = Options(args, config_file)
    seed = opts.get("seed", 0, _conv_int)
    models_raw = opts.get("models", "full,nn")
    models = [m.strip() for m in models_raw.split(",") if m.strip()]
    if not models:
        raise ConfigError("no models requested")
    flags_by_name = {m: parse_model_name(m) for m in models}
    need_tree = any(not f.get("baseline") and f["use_phylogeny"]
                    for f in flags_by_name.values())
    n_folds = opts.get("folds", 5, _conv_int)
    floor = opts.get("floor", 2, _conv_int)
    jobs = opts.get("jobs", 1, _conv_int)

    Z, depths = load_dataset(args, opts, need_tree=need_tree)
    template = sampler_config_from(
        opts, seed=seed,
        flags={"use_phylogeny": need_tree, "use_affinities": True, "use_uncertainty": False})
    result = run_crossval(Z, depths, models, n_folds=n_folds, floor=floor, seed=seed,
                          sampler_config=template, jobs=jobs)

    out = _ensure_out(args.out)
    outputs = []

    write_matrix_csv(os.path.join(out, "folds.csv"), Z,
                     values=result.plan.assignment, fmt="%d")
    outputs.append("folds.csv")

    with open(os.path.join(out, "auc.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "fold", "auc", "best_threshold", "pct_ones_recovered"])
        for name in models:
            curve = result.roc[name]
            for f, a in enumerate(curve.fold_auc):
                writer.writerow([name, f, format(a, ".10g"), "", ""])
            writer.writerow([name, "avg", format(curve.auc, ".10g"),
                             format(curve.best_threshold, ".10g"),
                             format(curve.pct_ones_recovered, ".10g")])
    outputs.append("auc.csv")

    with open(os.path.join(out, "murphy.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta"] + models)
        first = result.murphy[models[0]]
        for i, theta in enumerate(first.thetas):
            writer.writerow([format(theta, ".10g")] + [
                format(result.murphy[m].scores[i], ".10g") for m in models])
    outputs.append("murphy.csv")

    with open(os.path.join(out, "roc.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "threshold", "fpr", "tpr"])
        for name in models:
            curve = result.roc[name]
            for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
                writer.writerow([name, format(t, ".10g"), format(x, ".10g"),
                                 format(y, ".10g")])
    outputs.append("roc.csv")

    with open(os.path.join(out, "wilcoxon.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "against", "p_value"])
        for (a, b), p in result.wilcoxon.items():
            writer.writerow([a, b, format(p, ".10g")])
    outputs.append("wilcoxon.csv")

    inputs = [args.edges] + ([args.tree] if args.tree else [])
    write_manifest(out, "crossval", opts.resolved, inputs, outputs)
    for name in models:
        curve = result.roc[name]
        folds_txt = ", ".join(format(a, ".3f") for a in curve.fold_auc)
        print(f"crossval {name}: area {curve.auc:.4f} (folds {folds_txt}), "
              f"threshold {curve.best_threshold:.3f} recovers "
              f"{curve.pct_ones_recovered:.1f}% of held-out links")
    print(f"crossval artifacts -> {out}")
    return 0


# ---------------------------------------------------------------------------
# scan

def _parse_scan_grid(raw: str) -> list:
    specs = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "identity":
            specs.append(TransformSpec("identity"))
            continue
        parts = token.split(":")
        if len(parts) != 4:
            raise ConfigError(
                f"bad grid token {token!r}; expected kind:lo:hi:n or identity")
        kind = parts[0].strip()
        try:
            lo, hi = float(parts[1]), float(parts[2])
            n = int(parts[3])
        except ValueError:
            raise ConfigError(f"bad grid token {token!r}") from None
        if n < 1:
            raise ConfigError(f"grid token {token!r} needs at least one point")
        for value in np.linspace(lo, hi, n):
            specs.append(TransformSpec(kind, float(value)))
    if not specs:
        raise ConfigError("empty transform grid")
    return specs


def cmd_scan(args) -> int:
    config_file = load_config_file(args.config) if args.config else {}
    opts = Options(args, config_file)
    seed = opts.get("seed", 0, _conv_int)
    grid_raw = opts.get("grid", DEFAULT_SCAN_GRID)
    allow_kappa = opts.get("allow_kappa", False, _conv_bool)
    n_folds = opts.get("folds", 5, _conv_int)
    floor = opts.get("floor", 2, _conv_int)

    Z, depths = load_dataset(args, opts, need_tree=True)
    specs = _parse_scan_grid(grid_raw)
    results = transform_scan(Z, depths, specs, folds=n_folds, floor=floor,
                             seed=seed, allow_kappa=allow_kappa)

    out = _ensure_out(args.out)
    with open(os.path.join(out, "scan.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "parameter", "auc"])
        for spec, auc in results:
            writer.writerow([spec.kind,
                             "" if spec.parameter is None else format(spec.parameter, ".10g"),
                             format(auc, ".10g")])
    inputs = [args.edges, args.tree]
    write_manifest(out, "scan", opts.resolved, inputs, ["scan.csv"])
    best_spec, best_auc = max(results, key=lambda r: r[1])
    print(f"scan: best transform {best_spec.describe()} with area {best_auc:.4f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    config_file = load_config_file(args.config) if args.config else {}
    opts = Options(args, config_file)
    seed = opts.get("seed", 0, _conv_int)
    n_hosts = opts.get("hosts", 30, _conv_int)
    n_parasites = opts.get("parasites", 60, _conv_int)
    tree_scale = opts.get("tree_scale", 1.0, _conv_float)
    burn_sweeps = opts.get("burn_sweeps", 1000, _conv_int)
    no_phylo = opts.get("no_phylogeny", False, _conv_bool)
    max_density = opts.get("max_density", None, _conv_float)
    priors = AffinityPriors(
        host_shape=opts.get("host_shape", 2.0, _conv_float),
        host_rate=opts.get("host_rate", 2.0, _conv_float),
        parasite_shape=opts.get("parasite_shape", 2.0, _conv_float),
        parasite_rate=opts.get("parasite_rate", 2.0, _conv_float),
    )
    if n_hosts < 2 or n_parasites < 1:
        raise ConfigError("need at least 2 hosts and 1 parasite")

    rng = np.random.default_rng(seed)
    gamma = rng.gamma(priors.host_shape, 1.0 / priors.host_rate, n_hosts)
    rho = rng.gamma(priors.parasite_shape, 1.0 / priors.parasite_rate, n_parasites)
    hosts = [f"h{i:04d}" for i in range(n_hosts)]
    depths = None
    tree = None
    if not no_phylo:
        tree = random_tree(hosts, rng)
        depths = pairwise_depths(tree)
    Z = generate_synthetic(depths, gamma, rho, tree_scale, burn_sweeps, rng)
    density = Z.n_ones / (Z.shape[0] * Z.shape[1])
    if max_density is not None and density > max_density:
        raise ConfigError(
            f"generated density {density:.3f} exceeds the limit {max_density}; "
            "lower the affinity priors or raise --max-density")

    out = _ensure_out(args.out)
    outputs = []
    records = [InteractionRecord(Z.hosts[h], Z.parasites[j])
               for h, j in zip(*np.nonzero(Z.values))]
    write_edge_csv(os.path.join(out, "edges.csv"), records)
    outputs.append("edges.csv")
    if tree is not None:
        with open(os.path.join(out, "tree.nwk"), "w", encoding="utf-8") as fh:
            fh.write(serialize_newick(tree) + "\n")
        outputs.append("tree.nwk")
    with open(os.path.join(out, "params.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "label", "value"])
        writer.writerow(["tree_scale", "", format(tree_scale, ".10g")])
        for lbl, v in zip(Z.hosts, gamma):
            writer.writerow(["host_affinity", lbl, format(v, ".10g")])
        for lbl, v in zip(Z.parasites, rho):
            writer.writerow(["parasite_affinity", lbl, format(v, ".10g")])
    outputs.append("params.csv")
    write_manifest(out, "simulate", opts.resolved, [], outputs)
    print(f"simulate: {Z.shape[0]} hosts x {Z.shape[1]} parasites, "
          f"{Z.n_ones} interactions -> {out}")
    return 0


# ---------------------------------------------------------------------------
# report

def _left_order_permutation(Z: InteractionMatrix) -> list:
    ordered = left_order(Z)
    index = {p: j for j, p in enumerate(Z.parasites)}
    return [index[p] for p in ordered.parasites]


def cmd_report(args) -> int:
    from types import SimpleNamespace

    from . import figures

    run_dir = args.run
    out = _ensure_out(args.out if args.out else run_dir)
    if not os.path.isdir(run_dir):
        raise DataError(f"run directory {run_dir} does not exist")

    def have(name):
        return os.path.exists(os.path.join(run_dir, name))

    outputs = []
    inputs = []

    if not any(have(n) for n in ("matrix.csv", "murphy.csv", "roc.csv")):
        raise MissingArtifact(f"nothing reportable in {run_dir}")

    Z = None
    if have("matrix.csv"):
        if not have("trace.csv"):
            raise MissingArtifact(f"{run_dir} has matrix.csv but no trace.csv")
        path = os.path.join(run_dir, "matrix.csv")
        inputs.append(path)
        Z = read_matrix_csv(path, allow_empty_columns=True)
        host_deg, para_deg = degree_distributions(Z)
        with open(os.path.join(out, "degrees.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["axis", "degree", "count"])
            for axis, hist in (("host", host_deg), ("parasite", para_deg)):
                for deg in sorted(hist):
                    writer.writerow([axis, deg, hist[deg]])
        outputs.append("degrees.csv")
        write_matrix_csv(os.path.join(out, "matrix_leftordered.csv"), left_order(Z))
        outputs.append("matrix_leftordered.csv")
        fig = figures.plot_degree_distributions(host_deg, para_deg)
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "degrees.png"))))
        perm = _left_order_permutation(Z)
        fig = figures.plot_matrix(Z.values[:, perm], title="documented interactions")
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "matrix.png"))))

    probs = None
    if have("predictive.csv"):
        path = os.path.join(run_dir, "predictive.csv")
        inputs.append(path)
        p_hosts, p_parasites, probs = read_probability_csv(path)
        if Z is not None and (tuple(p_hosts) != Z.hosts or tuple(p_parasites) != Z.parasites):
            raise DataError("predictive.csv labels do not match matrix.csv")
        order = _left_order_permutation(Z) if Z is not None else list(range(len(p_parasites)))
        fig = figures.plot_matrix(probs[:, order], title="posterior link probability")
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "predictive.png"))))

    if probs is not None and Z is not None and have("holdout.csv"):
        path = os.path.join(run_dir, "holdout.csv")
        inputs.append(path)
        holdout = read_matrix_csv(path, allow_empty_columns=True)
        if holdout.hosts != Z.hosts or holdout.parasites != Z.parasites:
            raise DataError("holdout.csv labels do not match matrix.csv")
        candidates = Z.values == 0
        scores = probs[candidates]
        hits = holdout.values[candidates] == 1
        xs, counts = top_x_recovery(scores, hits, scores.size)
        with open(os.path.join(out, "topx.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "recovered"])
            for x, c in zip(xs, counts):
                writer.writerow([x, c])
        outputs.append("topx.csv")
        total = max(int(hits.sum()), 1)
        fig = figures.plot_top_x({"model": (xs, counts / total)})
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "topx.png"))))

    if have("murphy.csv"):
        path = os.path.join(run_dir, "murphy.csv")
        inputs.append(path)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(c) for c in row] for row in reader if row]
        table = np.asarray(rows)
        curves = {
            name: SimpleNamespace(thetas=table[:, 0], scores=table[:, i + 1])
            for i, name in enumerate(header[1:])
        }
        fig = figures.plot_murphy(curves)
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "murphy.png"))))

    if have("roc.csv"):
        path = os.path.join(run_dir, "roc.csv")
        inputs.append(path)
        series: dict[str, list] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                if not row:
                    continue
                series.setdefault(row[0], []).append((float(row[2]), float(row[3])))
        curves = {}
        for name, pts in series.items():
            arr = np.asarray(pts)
            youden = int(np.argmax(arr[:, 1] - arr[:, 0]))
            curves[name] = SimpleNamespace(
                fpr=arr[:, 0], tpr=arr[:, 1],
                auc=float(_trapz(arr[:, 1], arr[:, 0])),
                best_fpr=float(arr[youden, 0]), best_tpr=float(arr[youden, 1]))
        fig = figures.plot_roc(curves)
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "roc.png"))))

    if have("trace.csv"):
        path = os.path.join(run_dir, "trace.csv")
        inputs.append(path)
        host_labels, parasite_labels, columns = read_trace_csv(path)
        picks = ["tree_scale", "miss_prob"]
        picks += [f"host_affinity:{l}" for l in host_labels[:2]]
        picks += [f"parasite_affinity:{l}" for l in parasite_labels[:2]]
        series2 = {k: columns[k] for k in picks if k in columns}
        fig = figures.plot_trace(series2)
        outputs.append(os.path.basename(figures.save_figure(
            fig, os.path.join(out, "trace.png"))))

    write_manifest(out, "report", {"run": run_dir}, inputs, outputs,
                   name="report_manifest.json")
    print(f"report: {len(outputs)} artifacts -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phylink",
        description="Predict undocumented links in bipartite interaction networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="random seed (default 0)")

    def add_data(p):
        p.add_argument("--edges", help="interaction CSV: host,parasite[,year][,evidence_count]")
        p.add_argument("--tree", help="newick tree covering the hosts")
        p.add_argument("--drop-single-host", action="store_true", default=None,
                       dest="drop_single_host",
                       help="drop parasites documented on a single host")
        p.add_argument("--label-normalize", choices=("loose", "none"),
                       dest="label_normalize",
                       help="how tree tips are matched to host labels (default loose)")

    def add_sampler(p):
        p.add_argument("--iterations", type=int, help="recorded sweeps (default 20000)")
        p.add_argument("--burn-in", type=int, dest="burn_in",
                       help="discarded sweeps (default 20000)")
        p.add_argument("--thin", type=int, help="record every nth sweep (default 1)")
        p.add_argument("--empty-neighbor-weight", dest="empty_neighbor_weight",
                       type=_conv_weight,
                       help="neighbor weight for parasites with no other host; "
                            "a number or mean_distance (default 1)")

    p = sub.add_parser("fit", help="fit one model and write its posterior artifacts")
    add_common(p)
    add_data(p)
    add_sampler(p)
    p.add_argument("--model", choices=("full", "affinity", "phylo"),
                   help="model variant (default full)")
    p.add_argument("--with-g", action="store_true", default=None, dest="with_g",
                   help="model undocumented-but-present links")
    p.add_argument("--year-cutoff", type=int, dest="year_cutoff",
                   help="train on links documented up to this year, hold out the rest")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("crossval", help="k-fold model comparison")
    add_common(p)
    add_data(p)
    add_sampler(p)
    p.add_argument("--models", help="comma-separated: full, affinity, phylo, nn, "
                                    "each optionally +g (default full,nn)")
    p.add_argument("--folds", type=int, help="number of folds (default 5)")
    p.add_argument("--floor", type=int,
                   help="minimum documented hosts kept per parasite (default 2)")
    p.add_argument("--jobs", type=int, help="parallel fit processes (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("scan", help="grid-search distance transforms by fold AUC")
    add_common(p)
    add_data(p)
    p.add_argument("--grid", help=f"kind:lo:hi:n tokens (default {DEFAULT_SCAN_GRID})")
    p.add_argument("--allow-kappa", action="store_true", default=None, dest="allow_kappa",
                   help="include the branch-power transform despite its pruning "
                        "inconsistency")
    p.add_argument("--folds", type=int, help="number of folds (default 5)")
    p.add_argument("--floor", type=int,
                   help="minimum documented hosts kept per parasite (default 2)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", help="draw a synthetic data set from the model")
    add_common(p)
    p.add_argument("--hosts", type=int, help="number of hosts (default 30)")
    p.add_argument("--parasites", type=int, help="number of parasites (default 60)")
    p.add_argument("--tree-scale", type=float, dest="tree_scale",
                   help="distance-rescaling rate (default 1.0)")
    p.add_argument("--burn-sweeps", type=int, dest="burn_sweeps",
                   help="chain length behind the draw (default 1000)")
    p.add_argument("--no-phylogeny", action="store_true", default=None, dest="no_phylogeny",
                   help="simulate from the affinity-only model")
    p.add_argument("--max-density", type=float, dest="max_density",
                   help="fail when the generated matrix is denser than this fraction")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render figures from a run directory")
    p.add_argument("--run", required=True, help="directory with fit or crossval artifacts")
    p.add_argument("--out", help="figure directory (default: the run directory)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
