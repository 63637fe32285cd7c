"""Cross-validation harness: fold construction, scoring curves, baselines.

Held-out evaluation treats every cell that is zero in a fold's training
matrix as a candidate, scores the fitted model's probabilities against the
full matrix, and summarizes with Murphy diagrams (elementary scores over a
threshold grid), vertically averaged ROC curves, a nearest-neighbour
baseline, and an exact paired Wilcoxon test on per-fold areas.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .interactions import InteractionMatrix
from .sampler import SamplerConfig, posterior_predict, run_mcmc

__all__ = [
    "InfeasibleFloor",
    "EmptyTestSet",
    "DegenerateTruth",
    "AllZeroDifferences",
    "FoldPlan",
    "make_folds",
    "elementary_score",
    "ScoreCurve",
    "murphy_diagram",
    "RocCurve",
    "roc_auc",
    "NNResult",
    "nn_baseline",
    "top_x_recovery",
    "wilcoxon_paired_one_sided",
    "CrossvalResult",
    "run_crossval",
    "parse_model_name",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class InfeasibleFloor(DataError):
    pass


class EmptyTestSet(DataError):
    pass


class DegenerateTruth(DataError):
    pass


class AllZeroDifferences(DataError):
    pass


# ---------------------------------------------------------------------------
# folds

@dataclass(frozen=True)
class FoldPlan:
    """Assignment of documented cells to folds; -1 marks cells never held out."""

    k: int
    floor: int
    assignment: np.ndarray

    def held_out_mask(self, fold: int) -> np.ndarray:
        return self.assignment == fold

    def training_values(self, values, fold: int) -> np.ndarray:
        out = np.asarray(getattr(values, "values", values)).copy()
        out[self.assignment == fold] = 0
        return out

    def fold_sizes(self) -> np.ndarray:
        return np.array([int(np.sum(self.assignment == f)) for f in range(self.k)])

    @property
    def n_assigned(self) -> int:
        return int(np.sum(self.assignment >= 0))


def make_folds(values, k: int, floor: int, rng) -> FoldPlan:
    """Assign documented cells to k folds without starving any parasite column.

    Cells are visited in random order; each goes to a uniformly chosen fold
    among those whose training matrix would still keep at least ``floor``
    documented hosts in that cell's column.  Cells with no feasible fold stay
    in every training matrix.
    """
    vals = np.asarray(getattr(values, "values", values))
    if k < 2:
        raise ConfigError("need at least 2 folds")
    if floor < 0:
        raise ConfigError("floor cannot be negative")
    colsum = vals.sum(axis=0).astype(np.int64)  # signed: floor may exceed a column
    quota = colsum - floor
    assignment = np.full(vals.shape, -1, dtype=np.int16)
    held = np.zeros((vals.shape[1], k), dtype=np.int64)
    ones = np.argwhere(vals == 1)
    order = rng.permutation(len(ones))
    assigned = 0
    for idx in order:
        h, j = ones[idx]
        feasible = np.flatnonzero(held[j] < quota[j])
        if feasible.size == 0:
            continue
        f = int(feasible[rng.integers(feasible.size)])
        assignment[h, j] = f
        held[j, f] += 1
        assigned += 1
    if assigned == 0:
        raise InfeasibleFloor(
            f"no cell can be held out: every parasite column has at most {floor} hosts")
    return FoldPlan(k, floor, assignment)


# ---------------------------------------------------------------------------
# Murphy diagrams

def elementary_score(predictions, truth, theta: float) -> float:
    """Mean elementary score at level theta.

    A miss costs (1 - theta) when the outcome is 1 but the forecast is at or
    below theta, and theta when the outcome is 0 but the forecast is above.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(truth)
    miss = (y == 1) & (p <= theta)
    false_alarm = (y == 0) & (p > theta)
    return float(np.mean(miss * (1.0 - theta) + false_alarm * theta))


@dataclass(frozen=True)
class ScoreCurve:
    thetas: np.ndarray
    scores: np.ndarray
    fold_scores: np.ndarray


def _as_folds(predictions, truths):
    """Allow a single ungrouped prediction array to stand for one fold."""
    if isinstance(predictions, np.ndarray):
        return [predictions], [np.asarray(truths)]
    return list(predictions), list(truths)


def murphy_diagram(fold_predictions, fold_truths, thetas=None) -> ScoreCurve:
    """Elementary-score curve, averaged over cells within a fold then folds."""
    fold_predictions, fold_truths = _as_folds(fold_predictions, fold_truths)
    if thetas is None:
        thetas = np.linspace(0.01, 0.99, 99)
    thetas = np.asarray(thetas, dtype=np.float64)
    fold_scores = np.empty((len(fold_predictions), thetas.size))
    for f, (p, y) in enumerate(zip(fold_predictions, fold_truths)):
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y)
        if p.size == 0:
            raise EmptyTestSet(f"fold {f} has no test cells")
        for i, th in enumerate(thetas):
            fold_scores[f, i] = elementary_score(p, y, th)
    return ScoreCurve(thetas, fold_scores.mean(axis=0), fold_scores)


# ---------------------------------------------------------------------------
# ROC

@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    fold_fpr: np.ndarray
    fold_tpr: np.ndarray
    auc: float
    fold_auc: np.ndarray
    best_threshold: float
    best_tpr: float
    best_fpr: float
    pct_ones_recovered: float


def roc_auc(fold_predictions, fold_truths, thresholds=None) -> RocCurve:
    """Vertically averaged ROC over folds on a shared threshold grid.

    The grid is a fixed 201-point lattice on [0, 1] joined with every
    distinct predicted value and one sentinel below zero, so each fold's
    curve is exact (its trapezoid area equals the rank statistic).  A cell is
    called positive when its probability strictly exceeds the threshold.
    The operating point maximizes mean TPR - FPR.
    """
    fold_predictions, fold_truths = _as_folds(fold_predictions, fold_truths)
    base = np.linspace(0.0, 1.0, 201) if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    parts = [base, np.array([-1e-9])]
    for p in fold_predictions:
        parts.append(np.asarray(p, dtype=np.float64))
    grid = np.unique(np.concatenate(parts))[::-1]

    n_folds = len(fold_predictions)
    fold_fpr = np.empty((n_folds, grid.size))
    fold_tpr = np.empty((n_folds, grid.size))
    fold_auc = np.empty(n_folds)
    for f, (p, y) in enumerate(zip(fold_predictions, fold_truths)):
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y)
        if p.size == 0:
            raise EmptyTestSet(f"fold {f} has no test cells")
        npos = int(np.sum(y == 1))
        nneg = int(np.sum(y == 0))
        if npos == 0 or nneg == 0:
            raise DegenerateTruth(f"fold {f} test truth is one-sided")
        pos_sorted = np.sort(p[y == 1])
        neg_sorted = np.sort(p[y == 0])
        # count of scores strictly above each threshold, by binary search
        fold_tpr[f] = (npos - np.searchsorted(pos_sorted, grid, side="right")) / npos
        fold_fpr[f] = (nneg - np.searchsorted(neg_sorted, grid, side="right")) / nneg
        fold_auc[f] = _trapezoid(fold_tpr[f], fold_fpr[f])
    tpr = fold_tpr.mean(axis=0)
    fpr = fold_fpr.mean(axis=0)
    auc = float(_trapezoid(tpr, fpr))
    best = int(np.argmax(tpr - fpr))
    return RocCurve(grid, fpr, tpr, fold_fpr, fold_tpr, auc, fold_auc,
                    float(grid[best]), float(tpr[best]), float(fpr[best]),
                    100.0 * float(tpr[best]))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sx = x[order]
    starts = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1]])
    ends = np.r_[starts[1:], x.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney area: P(score_pos > score_neg) + half the tie mass."""
    pos = labels == 1
    npos = int(pos.sum())
    nneg = labels.size - npos
    if npos == 0 or nneg == 0:
        raise DegenerateTruth("labels are one-sided")
    r = _midranks(np.asarray(scores, dtype=np.float64))
    return float((r[pos].sum() - npos * (npos + 1) / 2.0) / (npos * nneg))


# ---------------------------------------------------------------------------
# nearest-neighbour baseline

@dataclass(frozen=True)
class NNResult:
    predictions: np.ndarray
    k: int
    train_auc: np.ndarray
    k_grid: np.ndarray


def _nn_cell_curves(shared, z_col, h, max_k):
    """Scores for one cell at every neighbourhood size 1..max_k.

    Hosts are grouped by their shared-parasite count with host h (the cell's
    own column excluded); size k keeps the groups with the k largest distinct
    positive counts and predicts the fraction of those hosts carrying the
    parasite.
    """
    counts = shared.copy()
    counts[h] = 0
    pos = counts > 0
    if not pos.any():
        return np.zeros(max_k)
    vals = counts[pos]
    carry = z_col[pos]
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    carry = carry[order]
    starts = np.flatnonzero(np.r_[True, vals[1:] != vals[:-1]])
    ends = np.r_[starts[1:], vals.size]
    group_sizes = ends - starts
    group_hits = np.add.reduceat(carry.astype(np.float64), starts)
    csize = np.cumsum(group_sizes)
    chits = np.cumsum(group_hits)
    n_groups = csize.size
    out = np.empty(max_k)
    for k in range(1, max_k + 1):
        g = min(k, n_groups) - 1
        out[k - 1] = chits[g] / csize[g]
    return out


def nn_baseline(train_values, test_mask, k_range=range(1, 11)) -> NNResult:
    """Nearest-neighbour predictor with the neighbourhood size tuned in-sample.

    Each candidate size is scored by its area under the ROC on the training
    matrix itself; the smallest size attaining the best area wins and is then
    applied to the test cells.
    """
    Z = np.asarray(getattr(train_values, "values", train_values), dtype=np.float64)
    mask = np.asarray(test_mask, dtype=bool)
    ks = np.asarray(list(k_range), dtype=np.int64)
    if ks.size == 0 or np.any(ks < 1):
        raise ConfigError("neighbourhood sizes must be positive")
    max_k = int(ks.max())
    H, J = Z.shape
    shared_all = Z @ Z.T

    train_scores = np.empty((max_k, H, J))
    for j in range(J):
        zj = Z[:, j]
        shared_j = shared_all - np.outer(zj, zj)
        for h in range(H):
            train_scores[:, h, j] = _nn_cell_curves(shared_j[h], zj, h, max_k)

    labels = Z.reshape(-1)
    train_auc = np.array([_rank_auc(train_scores[k - 1].reshape(-1), labels) for k in ks])
    best_k = int(ks[int(np.argmax(train_auc))])
    return NNResult(train_scores[best_k - 1][mask], best_k, train_auc, ks)


# ---------------------------------------------------------------------------
# ranked recovery

def top_x_recovery(predictions, truth, x_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Count recovered ones among the x highest-scoring cells, x = 1..x_max.

    Inputs may be matching matrices or flat arrays; matrices are walked in
    row-major order, and ties keep that order (stable sort), so the curve is
    deterministic.  Returns (x values, cumulative counts of true ones); the
    counts are nondecreasing.  x_max = 0 yields empty arrays.
    """
    s = np.asarray(predictions, dtype=np.float64).ravel(order="C")
    hit = np.asarray(truth).ravel(order="C") != 0
    if s.shape != hit.shape:
        raise ConfigError("predictions and truth must have matching shapes")
    if not 0 <= x_max <= s.size:
        raise ConfigError(f"x_max must lie in [0, {s.size}], got {x_max}")
    xs = np.arange(1, x_max + 1, dtype=np.int64)
    if x_max == 0:
        return xs, np.zeros(0, dtype=np.int64)
    order = np.argsort(-s, kind="stable")[:x_max]
    return xs, np.cumsum(hit[order]).astype(np.int64)


# ---------------------------------------------------------------------------
# paired comparison

def wilcoxon_paired_one_sided(a, b) -> tuple[float, float]:
    """Signed-rank test of H1: a tends to exceed b, on paired samples.

    Zero differences are dropped; absolute differences get midranks.  Up to
    20 informative pairs the p-value enumerates all sign patterns exactly;
    beyond that a tie-corrected normal approximation with continuity
    correction is used.  Returns (positive-rank sum, p-value).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("paired samples must be matching 1-d arrays")
    if a.size < 5:
        raise ConfigError("paired test needs at least 5 pairs")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = _midranks(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    if n <= 20:
        total = 1 << n
        count = 0
        chunk = 1 << 14
        for lo in range(0, total, chunk):
            codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
            bits = (codes[:, None] >> np.arange(n)) & 1
            w = bits @ ranks
            count += int(np.sum(w >= w_pos - 1e-9))
        return w_pos, count / total
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w_pos - mu - 0.5) / math.sqrt(var)
    return w_pos, 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# the full harness

_MODEL_FLAGS = {
    "full": (True, True),
    "affinity": (False, True),
    "phylo": (True, False),
}


def parse_model_name(name: str) -> dict:
    """Map a model token to sampler flags; 'nn' marks the baseline."""
    token = name.strip()
    with_g = token.endswith("+g")
    if with_g:
        token = token[: -2]
    if token == "nn":
        if with_g:
            raise ConfigError("the nearest-neighbour baseline has no uncertainty variant")
        return {"baseline": True}
    if token not in _MODEL_FLAGS:
        raise ConfigError(f"unknown model {name!r}; expected full, affinity, phylo, or nn")
    phylo, aff = _MODEL_FLAGS[token]
    return {"baseline": False, "use_phylogeny": phylo, "use_affinities": aff,
            "use_uncertainty": with_g}


@dataclass
class CrossvalResult:
    models: list
    plan: FoldPlan
    predictions: dict
    truths: list
    murphy: dict
    roc: dict
    wilcoxon: dict
    nn_k: list = field(default_factory=list)


def _fit_predict_task(payload):
    train, depths, flags, seed, base_config, mask = payload
    config = base_config.replace(
        seed=seed,
        use_phylogeny=flags["use_phylogeny"],
        use_affinities=flags["use_affinities"],
        use_uncertainty=flags["use_uncertainty"],
    )
    trace = run_mcmc(train, depths if flags["use_phylogeny"] else None, config)
    probs = posterior_predict(trace, train, depths if flags["use_phylogeny"] else None)
    return probs[mask]


def _task_seed(seed: int, model_idx: int, fold: int) -> int:
    return int(np.random.SeedSequence((seed, model_idx, fold)).generate_state(1)[0])


def run_crossval(Z: InteractionMatrix, depths, models, *, n_folds: int = 5,
                 floor: int = 2, seed: int = 0, sampler_config: SamplerConfig | None = None,
                 thetas=None, thresholds=None, k_range=range(1, 11), jobs: int = 1) -> CrossvalResult:
    """Fit every requested model on every fold and score the held-out cells.

    The same fold plan serves all models.  Each fold's test population is
    every cell undocumented in its training matrix, labelled by the full
    matrix.  Pairwise Wilcoxon p-values compare per-fold areas for every
    ordered model pair; incomparable pairs get NaN.
    """
    models = list(models)
    flags = {name: parse_model_name(name) for name in models}
    base = sampler_config if sampler_config is not None else SamplerConfig()
    plan = make_folds(Z.values, n_folds, floor, np.random.default_rng(
        np.random.SeedSequence((seed, 104729))))

    trains, masks, truths = [], [], []
    for f in range(n_folds):
        tv = plan.training_values(Z.values, f)
        mask = tv == 0
        if not mask.any():
            raise EmptyTestSet(f"fold {f} holds out nothing and the matrix is full")
        trains.append(Z.replace(values=tv, allow_empty_columns=True))
        masks.append(mask)
        truths.append(Z.values[mask])

    payloads = []
    slots = []
    for mi, name in enumerate(models):
        if flags[name]["baseline"]:
            continue
        for f in range(n_folds):
            payloads.append((trains[f], depths, flags[name], _task_seed(seed, mi, f),
                             base, masks[f]))
            slots.append((name, f))
    predictions = {name: [None] * n_folds for name in models}
    if jobs > 1 and payloads:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_predict_task, payloads))
    else:
        results = [_fit_predict_task(p) for p in payloads]
    for (name, f), probs in zip(slots, results):
        predictions[name][f] = probs

    nn_k = []
    for name in models:
        if flags[name]["baseline"]:
            for f in range(n_folds):
                res = nn_baseline(trains[f].values, masks[f], k_range)
                predictions[name][f] = res.predictions
                nn_k.append(res.k)

    murphy = {}
    roc = {}
    for name in models:
        murphy[name] = murphy_diagram(predictions[name], truths, thetas)
        roc[name] = roc_auc(predictions[name], truths, thresholds)

    wilcoxon = {}
    for a in models:
        for b in models:
            if a == b:
                continue
            try:
                _, p = wilcoxon_paired_one_sided(roc[a].fold_auc, roc[b].fold_auc)
            except (AllZeroDifferences, ConfigError):
                p = float("nan")  # identical areas, or too few folds to test
            wilcoxon[(a, b)] = p
    return CrossvalResult(models, plan, predictions, truths, murphy, roc, wilcoxon, nn_k)
