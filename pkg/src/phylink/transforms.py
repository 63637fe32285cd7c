"""Single-parameter rescalings of pairwise tree distances.

Each transform maps the pair decomposition (depth of tip a, depth of tip b,
depth of their MRCA) to a rescaled distance between the two tips.  Every
transform reduces to the plain patristic distance at its identity parameter.
The exponential-rate ("eb") transform rescales each root-to-tip leg through
an exponential clock; the remaining kinds are the standard single-parameter
tree rescalings used for sensitivity scans.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "TRANSFORM_KINDS",
    "TransformSpec",
    "DegenerateDistance",
    "EmptyGrid",
    "transform_legs",
    "transform_pair",
    "transform_matrix",
    "transform_scan",
]

TRANSFORM_KINDS = ("eb", "lambda", "delta", "ou", "kappa", "identity")


class DegenerateDistance(DataError):
    """Two distinct tips at zero patristic distance where a positive weight is required."""


class EmptyGrid(ConfigError):
    """A transform scan was requested with no transform specs."""


@dataclass(frozen=True)
class TransformSpec:
    """One transform kind plus its parameter (None for identity).

    Domains: eb accepts any real rate; lambda requires [0, 1]; delta requires
    a positive power; ou requires a non-negative attraction rate; kappa
    requires a non-negative power; identity takes no parameter.
    """

    kind: str
    parameter: float | None = None

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        p = self.parameter
        if self.kind == "identity":
            if p is not None:
                raise ConfigError("identity transform takes no parameter")
            return
        if p is None or not np.isfinite(p):
            raise ConfigError(f"transform {self.kind!r} requires a finite parameter")
        if self.kind == "lambda" and not 0.0 <= p <= 1.0:
            raise ConfigError(f"lambda parameter must be in [0, 1], got {p}")
        if self.kind == "delta" and not p > 0.0:
            raise ConfigError(f"delta parameter must be positive, got {p}")
        if self.kind in ("ou", "kappa") and p < 0.0:
            raise ConfigError(f"{self.kind} parameter must be non-negative, got {p}")

    def describe(self) -> str:
        if self.kind == "identity":
            return "identity"
        return f"{self.kind}:{self.parameter:g}"


def _expm1_over_x(x: np.ndarray) -> np.ndarray:
    """expm1(x)/x with the limit value 1 at x = 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def transform_legs(tip_a, tip_b, mrca, spec: TransformSpec):
    """Rescaled distance for pairs given tip depths and MRCA depths.

    Arguments broadcast; each leg (tip depth minus MRCA depth) is rescaled
    independently and the two legs are summed.  Requires mrca <= min(tip_a,
    tip_b), which holds for depths produced by this package.
    """
    ta = np.asarray(tip_a, dtype=np.float64)
    tb = np.asarray(tip_b, dtype=np.float64)
    tk = np.asarray(mrca, dtype=np.float64)
    kind, p = spec.kind, spec.parameter
    if kind == "identity":
        return (ta - tk) + (tb - tk)
    if kind == "eb":
        if p == 0.0:
            return (ta - tk) + (tb - tk)
        # (exp(p*t) - exp(p*tk)) / p, written through expm1 so small rates
        # stay accurate instead of cancelling
        da, db = ta - tk, tb - tk
        scale = np.exp(p * tk)
        return scale * (da * _expm1_over_x(p * da) + db * _expm1_over_x(p * db))
    if kind == "lambda":
        # shared-path contribution scaled by the parameter, tips kept
        return (ta - p * tk) + (tb - p * tk)
    if kind == "delta":
        return (ta**p - tk**p) + (tb**p - tk**p)
    if kind == "ou":
        if p == 0.0:
            return (ta - tk) + (tb - tk)

        def f(t):
            return -np.expm1(-2.0 * p * t) / (2.0 * p)

        return (f(ta) - f(tk)) + (f(tb) - f(tk))
    if kind == "kappa":
        # the pair decomposition keeps no per-branch structure, so each
        # root-to-tip leg is treated as a single branch raised to the power
        return (ta - tk) ** p + (tb - tk) ** p
    raise ConfigError(f"unknown transform kind {kind!r}")


def transform_pair(depths, pair, spec: TransformSpec, require_positive: bool = False) -> float:
    """Rescaled distance between one labeled tip pair.

    ``pair`` is a (label, label) tuple.  With ``require_positive`` the call
    rejects duplicate tips (zero patristic distance) instead of returning a
    zero that would blow up as an inverse weight.
    """
    a = depths.index_of(pair[0])
    b = depths.index_of(pair[1])
    ta = depths.tip_depths[a]
    tb = depths.tip_depths[b]
    tk = depths.mrca_depths[a, b]
    if require_positive and a != b and (ta - tk) + (tb - tk) <= 0.0:
        raise DegenerateDistance(f"tips {pair[0]!r} and {pair[1]!r} are at zero distance")
    return float(transform_legs(ta, tb, tk, spec))


def transform_matrix(depths, spec: TransformSpec) -> np.ndarray:
    """Rescaled distances for all tip pairs; diagonal forced to 0."""
    t = depths.tip_depths
    out = transform_legs(t[:, None], t[None, :], depths.mrca_depths, spec)
    np.fill_diagonal(out, 0.0)
    return out


def transform_scan(Z, depths, specs, *, folds: int = 5, floor: int = 2, seed: int = 0,
                   allow_kappa: bool = False):
    """Cross-validated neighbor-model AUC for each transform spec.

    For every spec the interaction matrix is scored with the neighbor-only
    probability 1 - exp(-sum of inverse rescaled distances to documented
    hosts), using the same fold plan for all specs, and the fold-averaged
    ROC AUC is reported.  Returns a list of (spec, auc) pairs in input order.
    The kappa kind is excluded unless ``allow_kappa`` is set.
    """
    from . import evaluate
    from .model import delta_matrix

    specs = list(specs)
    if not specs:
        raise EmptyGrid("transform scan needs at least one spec")
    for spec in specs:
        if spec.kind == "kappa" and not allow_kappa:
            raise ConfigError("kappa transform is excluded by default; enable it explicitly")

    sub = depths.subset(Z.hosts)
    plain = sub.distances()
    off = ~np.eye(sub.n, dtype=bool)
    if np.any(plain[off] <= 0.0):
        raise DegenerateDistance("duplicate tips in the host set: zero pairwise distance")

    rng = np.random.default_rng(seed)
    plan = evaluate.make_folds(Z.values, folds, floor, rng)

    fold_train = []
    fold_cells = []
    for f in range(plan.k):
        train = plan.training_values(Z.values, f)
        mask = train == 0
        fold_train.append(train.astype(np.float64))
        fold_cells.append((mask, Z.values[mask].astype(np.int8)))

    results = []
    for spec in specs:
        phi = transform_matrix(sub, spec)
        if np.any(phi[off] <= 0.0) or not np.all(np.isfinite(phi[off])):
            raise DegenerateDistance(
                f"transform {spec.describe()} produced a non-positive pair distance")
        weights = np.zeros_like(phi)
        weights[off] = 1.0 / phi[off]
        preds = []
        truths = []
        for f in range(plan.k):
            train = fold_train[f]
            mask, truth = fold_cells[f]
            delta = delta_matrix(train, weights, default=1.0)
            p = -np.expm1(-delta)
            preds.append(p[mask])
            truths.append(truth)
        curve = evaluate.roc_auc(preds, truths)
        results.append((spec, float(curve.auc)))
    return results
