"""Markov chain machinery: row-wise Gibbs sweeps, traces, prediction, synthesis.

One sweep visits every host row in order.  For row h it redraws the latent
scores, then the host affinity from its closed-form Gamma conditional, then a
full parasite-affinity vector from the row's Gamma conditionals, then one
adaptive Metropolis step on the tree scale against the row conditional, and,
with uncertainty enabled, a Beta draw of the miss probability from the row's
documented/positive counts.  The recorded sample for the shared parameters is
the mean of the per-row draws within the sweep; a pooled single-draw variant
and a synchronous (previous-sweep state) variant are available as flags.
"""

import csv
import math
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .interactions import InteractionMatrix, LabelMismatch
from .model import (
    AffinityPriors,
    DeltaCache,
    ModelState,
    delta_matrix,
    positive_score_prob,
    sample_truncated_gumbel,
)
from .newick import PairwiseMrcaDepths, UnknownTip
from .transforms import DegenerateDistance, TransformSpec, transform_legs, transform_matrix

__all__ = [
    "InvalidConfig",
    "EmptyTrace",
    "SingleHostColumn",
    "NonFiniteLogPosterior",
    "SamplerConfig",
    "ScaleAdapter",
    "PosteriorTrace",
    "update_latent_row",
    "update_host_affinity",
    "update_parasite_affinity_row",
    "update_tree_scale",
    "update_miss_prob",
    "row_scale_logpost",
    "sweep",
    "run_mcmc",
    "posterior_predict",
    "generate_synthetic",
    "iter_synthetic_states",
    "autocorrelation",
    "effective_sample_size",
    "read_trace_csv",
]


class InvalidConfig(ConfigError):
    pass


class EmptyTrace(DataError):
    pass


class SingleHostColumn(DataError):
    """The phylogeny-only submodel cannot host parasites documented on one host."""


class NonFiniteLogPosterior(NumericalError):
    """The chain reached a state whose conditional log posterior is not finite."""


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, seeding, adaptation, and model-flag settings."""

    iterations: int = 20000
    burn_in: int = 20000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    proposal_scale_init: float = 0.1
    tree_scale_init: float = 0.0
    miss_prob_init: float = 0.5
    use_phylogeny: bool = True
    use_affinities: bool = True
    use_uncertainty: bool = False
    row_average: bool = True
    parallel_rows: bool = False
    empty_neighbor_weight: float | str = 1.0
    priors: AffinityPriors = field(default_factory=AffinityPriors)
    host_affinity_init: np.ndarray | None = None
    parasite_affinity_init: np.ndarray | None = None

    def validate(self) -> None:
        if self.iterations < 1:
            raise InvalidConfig("iterations must be at least 1")
        if self.burn_in < 0:
            raise InvalidConfig("burn_in cannot be negative")
        if self.burn_in + self.iterations < 2:
            raise InvalidConfig("burn_in + iterations must be at least 2")
        if self.thin < 1 or self.iterations % self.thin != 0:
            raise InvalidConfig("thin must be a positive divisor of iterations")
        if self.adapt_window < 1:
            raise InvalidConfig("adapt_window must be positive")
        if not (np.isfinite(self.proposal_scale_init) and self.proposal_scale_init > 0):
            raise InvalidConfig("proposal_scale_init must be positive")
        if not np.isfinite(self.tree_scale_init):
            raise InvalidConfig("tree_scale_init must be finite")
        if not 0.0 <= self.miss_prob_init <= 1.0:
            raise InvalidConfig("miss_prob_init must lie in [0, 1]")
        if not (self.use_phylogeny or self.use_affinities):
            raise InvalidConfig("enable at least one of phylogeny and affinities")
        if isinstance(self.empty_neighbor_weight, str):
            if self.empty_neighbor_weight != "mean_distance":
                raise InvalidConfig(
                    f"unknown empty_neighbor_weight {self.empty_neighbor_weight!r}")
            if not self.use_phylogeny:
                raise InvalidConfig("mean_distance default needs the phylogeny")
        elif not (np.isfinite(self.empty_neighbor_weight) and self.empty_neighbor_weight > 0):
            raise InvalidConfig("empty_neighbor_weight must be positive")

    def replace(self, **kwargs) -> "SamplerConfig":
        return dc_replace(self, **kwargs)


class ScaleAdapter:
    """Random-walk proposal scale adapted from the chain's running variance.

    Every ``window`` sweeps the scale is refreshed to sqrt(2.38^2 * var +
    jitter), the classic optimal-scaling rule for a one-dimensional target
    with a small floor so the proposal never degenerates.  ``freeze`` stops
    adaptation; acceptance counts keep accumulating either way.
    """

    def __init__(self, initial_scale: float = 0.1, window: int = 50, jitter: float = 1e-6):
        self.scale = float(initial_scale)
        self.window = int(window)
        self.jitter = float(jitter)
        self.frozen = False
        self._count = 0
        self._mean = 0.0
        self._m2 = 0.0
        self._sweeps = 0
        self.proposals = 0
        self.accepts = 0

    def observe(self, value: float) -> None:
        if self.frozen:
            return
        self._count += 1
        d = value - self._mean
        self._mean += d / self._count
        self._m2 += d * (value - self._mean)

    def record(self, accepted: bool) -> None:
        self.proposals += 1
        self.accepts += int(accepted)

    def end_sweep(self) -> None:
        if self.frozen:
            return
        self._sweeps += 1
        if self._sweeps % self.window == 0 and self._count >= 2:
            var = self._m2 / (self._count - 1)
            self.scale = math.sqrt(2.38**2 * var + self.jitter)

    def freeze(self) -> None:
        self.frozen = True

    def reset_acceptance(self) -> None:
        self.proposals = 0
        self.accepts = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepts / self.proposals if self.proposals else float("nan")


# ---------------------------------------------------------------------------
# per-row updates

def update_latent_row(h, state, cache, zrow, delta, rng) -> None:
    """Redraw the latent scores of row h and refresh the sign cache.

    Documented cells always draw a positive score from the truncated Gumbel
    at log-rate location; undocumented cells stay at 0 unless uncertainty is
    on, in which case they turn positive with the posterior odds implied by
    the miss probability and then draw from the same truncated distribution.
    """
    rate = state.host_affinity[h] * state.parasite_affinity * delta
    loc = np.log(rate)
    s = np.zeros(zrow.shape[0])
    ones = zrow == 1
    if np.any(ones):
        s[ones] = sample_truncated_gumbel(loc[ones], rng)
    if state.use_uncertainty and state.miss_prob > 0.0:
        zero_idx = np.flatnonzero(~ones)
        if zero_idx.size:
            p_pos = positive_score_prob(rate[zero_idx], state.miss_prob)
            turned = zero_idx[rng.random(zero_idx.size) < p_pos]
            if turned.size:
                s[turned] = sample_truncated_gumbel(loc[turned], rng)
    state.scores[h] = s
    cache.set_row(h, s > 0)


def update_host_affinity(h, state, delta, e_neg_s, rng) -> float:
    """Gamma draw: shape grows by the row's positive-score count, rate by the
    accumulated exposure of every cell."""
    pos = state.scores[h] > 0
    shape = state.priors.host_shape + float(pos.sum())
    rate = state.priors.host_rate + float(np.sum(state.parasite_affinity * delta * e_neg_s))
    return float(rng.gamma(shape, 1.0 / rate))


def update_parasite_affinity_row(h, state, delta, e_neg_s, rng) -> np.ndarray:
    """Row-conditional Gamma draws for the full parasite-affinity vector."""
    pos = (state.scores[h] > 0).astype(np.float64)
    shape = state.priors.parasite_shape + pos
    rate = state.priors.parasite_rate + state.host_affinity[h] * delta * e_neg_s
    return rng.gamma(shape, 1.0 / rate)


def row_scale_logpost(h, state, delta, e_neg_s) -> float:
    """Row h's conditional log posterior for the tree scale (flat prior),
    evaluated at whatever scale produced ``delta``."""
    pos = state.scores[h] > 0
    with np.errstate(divide="ignore"):
        lp = float(np.sum(np.log(delta[pos])))
    lp -= state.host_affinity[h] * float(np.sum(state.parasite_affinity * delta * e_neg_s))
    return lp


def update_tree_scale(h, state, cache, delta, e_neg_s, adapter, rng) -> float:
    """One random-walk Metropolis step against the row conditional.

    Non-finite proposals are rejected outright; a proposal equal to the
    current value is always accepted.
    """
    cur = state.tree_scale
    prop = cur + adapter.scale * rng.standard_normal()
    u = rng.random()
    lp_cur = row_scale_logpost(h, state, delta, e_neg_s)
    if not np.isfinite(lp_cur):
        raise NonFiniteLogPosterior(
            f"tree-scale log posterior is {lp_cur} at the current value {cur}")
    # extreme proposals overflow the rescaled distances; they only get rejected
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        delta_prop = cache.row_delta(h, prop)
        lp_prop = row_scale_logpost(h, state, delta_prop, e_neg_s)
    if np.isfinite(lp_prop):
        log_u = np.log(u) if u > 0.0 else -np.inf
        accepted = log_u < lp_prop - lp_cur
    else:
        accepted = False
    new = prop if accepted else cur
    adapter.record(bool(accepted))
    adapter.observe(new)
    return float(new)


def update_miss_prob(h, state, zrow, rng) -> float:
    """Beta draw from the row's (positive, undocumented) / (positive,
    documented) counts, flat Beta(1, 1) prior."""
    pos = state.scores[h] > 0
    n_missed = int(np.sum(pos & (zrow == 0)))
    n_documented = int(np.sum(pos & (zrow == 1)))
    return float(rng.beta(n_missed + 1, n_documented + 1))


@dataclass
class SweepRecord:
    host_affinity: np.ndarray
    parasite_affinity: np.ndarray
    tree_scale: float
    miss_prob: float


def sweep(state, cache, Z, config, rng, adapter) -> SweepRecord:
    """One full pass over the host rows; mutates state in place.

    Sequential mode chains the shared parameters through the rows and
    records their per-row means.  The pooled variant draws each shared
    parameter once per sweep from its all-rows conditional.  The synchronous
    variant computes every row against the sweep-start state (a parallel
    approximation) and commits row means afterwards.
    """
    if config.parallel_rows:
        return _sweep_synchronous(state, cache, Z, config, rng, adapter)
    if not config.row_average:
        return _sweep_pooled(state, cache, Z, config, rng, adapter)

    H, J = Z.shape
    rho_acc = np.zeros(J)
    eta_acc = 0.0
    g_acc = 0.0
    for h in range(H):
        delta = cache.row_delta(h, state.tree_scale)
        update_latent_row(h, state, cache, Z[h], delta, rng)
        e_neg_s = np.exp(-state.scores[h])
        if state.use_affinities:
            state.host_affinity[h] = update_host_affinity(h, state, delta, e_neg_s, rng)
            state.parasite_affinity = update_parasite_affinity_row(h, state, delta, e_neg_s, rng)
        if state.use_phylogeny:
            state.tree_scale = update_tree_scale(h, state, cache, delta, e_neg_s, adapter, rng)
        if state.use_uncertainty:
            state.miss_prob = update_miss_prob(h, state, Z[h], rng)
        rho_acc += state.parasite_affinity
        eta_acc += state.tree_scale
        g_acc += state.miss_prob
    adapter.end_sweep()
    return SweepRecord(state.host_affinity.copy(), rho_acc / H, eta_acc / H, g_acc / H)


def _sweep_pooled(state, cache, Z, config, rng, adapter) -> SweepRecord:
    H, J = Z.shape
    pr = state.priors
    rho_shape = np.full(J, pr.parasite_shape)
    rho_rate = np.full(J, pr.parasite_rate)
    for h in range(H):
        delta = cache.row_delta(h, state.tree_scale)
        update_latent_row(h, state, cache, Z[h], delta, rng)
        e_neg_s = np.exp(-state.scores[h])
        if state.use_affinities:
            state.host_affinity[h] = update_host_affinity(h, state, delta, e_neg_s, rng)
        rho_shape += state.scores[h] > 0
        rho_rate += state.host_affinity[h] * delta * e_neg_s
    if state.use_affinities:
        state.parasite_affinity = rng.gamma(rho_shape, 1.0 / rho_rate)
    if state.use_phylogeny:
        state.tree_scale = _pooled_tree_scale(state, cache, Z, adapter, rng)
    if state.use_uncertainty:
        pos = state.scores > 0
        n_missed = int(np.sum(pos & (Z == 0)))
        n_documented = int(np.sum(pos & (Z == 1)))
        state.miss_prob = float(rng.beta(n_missed + 1, n_documented + 1))
    adapter.end_sweep()
    return SweepRecord(state.host_affinity.copy(), state.parasite_affinity.copy(),
                       state.tree_scale, state.miss_prob)


def _pooled_tree_scale(state, cache, Z, adapter, rng) -> float:
    H = Z.shape[0]
    e_neg_s = np.exp(-state.scores)

    def full_logpost(scale):
        lp = 0.0
        for h in range(H):
            lp += row_scale_logpost(h, state, cache.row_delta(h, scale), e_neg_s[h])
        return lp

    cur = state.tree_scale
    prop = cur + adapter.scale * rng.standard_normal()
    u = rng.random()
    lp_cur = full_logpost(cur)
    if not np.isfinite(lp_cur):
        raise NonFiniteLogPosterior(
            f"tree-scale log posterior is {lp_cur} at the current value {cur}")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lp_prop = full_logpost(prop)
    if np.isfinite(lp_prop):
        log_u = np.log(u) if u > 0.0 else -np.inf
        accepted = log_u < lp_prop - lp_cur
    else:
        accepted = False
    new = prop if accepted else cur
    adapter.record(bool(accepted))
    adapter.observe(new)
    return float(new)


class _NullCache:
    """Sign sink for the synchronous pass: row draws must not feed later rows."""

    def set_row(self, h, signs_row) -> None:
        pass


def _sweep_synchronous(state, cache, Z, config, rng, adapter) -> SweepRecord:
    # Every per-row update reads only its own row of the scores, and
    # row_delta(h) is insensitive to row h's own signs (zero self weight,
    # neighbor counts subtract the row), so the sweep-start cache can be
    # shared read-only while rows accumulate into fresh buffers.
    H, J = Z.shape
    base_rho = state.parasite_affinity
    base_eta = state.tree_scale
    base_g = state.miss_prob
    sink = _NullCache()

    new_gamma = state.host_affinity.copy()
    rho_acc = np.zeros(J)
    eta_acc = 0.0
    g_acc = 0.0
    for h in range(H):
        state.parasite_affinity = base_rho
        state.tree_scale = base_eta
        state.miss_prob = base_g
        delta = cache.row_delta(h, base_eta)
        update_latent_row(h, state, sink, Z[h], delta, rng)
        e_neg_s = np.exp(-state.scores[h])
        if state.use_affinities:
            new_gamma[h] = update_host_affinity(h, state, delta, e_neg_s, rng)
            state.host_affinity[h] = new_gamma[h]
            rho_acc += update_parasite_affinity_row(h, state, delta, e_neg_s, rng)
        else:
            rho_acc += base_rho
        if state.use_phylogeny:
            eta_acc += update_tree_scale(h, state, cache, delta, e_neg_s, adapter, rng)
        else:
            eta_acc += base_eta
        if state.use_uncertainty:
            g_acc += update_miss_prob(h, state, Z[h], rng)
    state.host_affinity = new_gamma
    state.parasite_affinity = rho_acc / H
    state.tree_scale = eta_acc / H
    state.miss_prob = g_acc / H if state.use_uncertainty else 0.0
    for h in range(H):
        cache.set_row(h, state.scores[h] > 0)
    adapter.end_sweep()
    return SweepRecord(state.host_affinity.copy(), state.parasite_affinity.copy(),
                       state.tree_scale, state.miss_prob)


# ---------------------------------------------------------------------------
# trace

class PosteriorTrace:
    """Recorded sweeps plus enough context to reproduce predictions."""

    __slots__ = (
        "host_labels", "parasite_labels", "host_affinity", "parasite_affinity",
        "tree_scale", "miss_prob", "use_phylogeny", "use_affinities",
        "use_uncertainty", "empty_neighbor_weight", "eta_acceptance", "config",
    )

    def __init__(self, host_labels, parasite_labels, host_affinity, parasite_affinity,
                 tree_scale, miss_prob, *, use_phylogeny, use_affinities, use_uncertainty,
                 empty_neighbor_weight, eta_acceptance=float("nan"), config=None):
        self.host_labels = tuple(host_labels)
        self.parasite_labels = tuple(parasite_labels)
        self.host_affinity = np.asarray(host_affinity, dtype=np.float64)
        self.parasite_affinity = np.asarray(parasite_affinity, dtype=np.float64)
        self.tree_scale = np.asarray(tree_scale, dtype=np.float64)
        self.miss_prob = np.asarray(miss_prob, dtype=np.float64)
        self.use_phylogeny = bool(use_phylogeny)
        self.use_affinities = bool(use_affinities)
        self.use_uncertainty = bool(use_uncertainty)
        self.empty_neighbor_weight = float(empty_neighbor_weight)
        self.eta_acceptance = float(eta_acceptance)
        self.config = config

    @property
    def n_recorded(self) -> int:
        return int(self.tree_scale.shape[0])

    def parameter_series(self):
        """Yield (name, 1-d samples) for every scalar parameter."""
        yield "tree_scale", self.tree_scale
        yield "miss_prob", self.miss_prob
        for i, lbl in enumerate(self.host_labels):
            yield f"host_affinity:{lbl}", self.host_affinity[:, i]
        for j, lbl in enumerate(self.parasite_labels):
            yield f"parasite_affinity:{lbl}", self.parasite_affinity[:, j]

    def summary(self) -> list[dict]:
        rows = []
        for name, x in self.parameter_series():
            rows.append({
                "parameter": name,
                "mean": float(np.mean(x)),
                "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
                "q025": float(np.quantile(x, 0.025)),
                "q975": float(np.quantile(x, 0.975)),
                "ess": effective_sample_size(x),
            })
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["sweep", "tree_scale", "miss_prob"]
            header += [f"host_affinity:{lbl}" for lbl in self.host_labels]
            header += [f"parasite_affinity:{lbl}" for lbl in self.parasite_labels]
            writer.writerow(header)
            for i in range(self.n_recorded):
                row = [str(i), format(self.tree_scale[i], ".17g"), format(self.miss_prob[i], ".17g")]
                row += [format(v, ".17g") for v in self.host_affinity[i]]
                row += [format(v, ".17g") for v in self.parasite_affinity[i]]
                writer.writerow(row)

    @classmethod
    def concat(cls, traces) -> "PosteriorTrace":
        """Merge per-chain traces (same labels and flags) by concatenation."""
        traces = list(traces)
        if not traces:
            raise EmptyTrace("nothing to concatenate")
        first = traces[0]
        for t in traces[1:]:
            if (t.host_labels != first.host_labels or t.parasite_labels != first.parasite_labels
                    or t.use_phylogeny != first.use_phylogeny
                    or t.use_affinities != first.use_affinities
                    or t.use_uncertainty != first.use_uncertainty):
                raise DataError("traces disagree on labels or model flags")
        weights = np.array([t.n_recorded for t in traces], dtype=np.float64)
        acc = np.array([t.eta_acceptance for t in traces])
        ok = np.isfinite(acc)
        return cls(
            first.host_labels, first.parasite_labels,
            np.concatenate([t.host_affinity for t in traces]),
            np.concatenate([t.parasite_affinity for t in traces]),
            np.concatenate([t.tree_scale for t in traces]),
            np.concatenate([t.miss_prob for t in traces]),
            use_phylogeny=first.use_phylogeny,
            use_affinities=first.use_affinities,
            use_uncertainty=first.use_uncertainty,
            empty_neighbor_weight=first.empty_neighbor_weight,
            eta_acceptance=float(np.sum(acc[ok] * weights[ok]) / np.sum(weights[ok])) if ok.any() else float("nan"),
            config=first.config,
        )


def read_trace_csv(path):
    """Read a trace CSV back into arrays.

    Returns (host_labels, parasite_labels, columns) where columns maps each
    header name to its 1-d array.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [[] for _ in header]
        for row in reader:
            for i, v in enumerate(row):
                cols[i].append(float(v))
    columns = {name: np.asarray(vals) for name, vals in zip(header, cols)}
    host_labels = [n.split(":", 1)[1] for n in header if n.startswith("host_affinity:")]
    parasite_labels = [n.split(":", 1)[1] for n in header if n.startswith("parasite_affinity:")]
    return host_labels, parasite_labels, columns


# ---------------------------------------------------------------------------
# the driver

def _resolve_empty_weight(value, distances_offdiag_mean):
    if isinstance(value, str):
        if distances_offdiag_mean is None:
            raise InvalidConfig("mean_distance default needs the phylogeny")
        return float(distances_offdiag_mean)
    return float(value)


def _aligned_depths(Z: InteractionMatrix, depths: PairwiseMrcaDepths) -> PairwiseMrcaDepths:
    try:
        return depths.subset(Z.hosts)
    except UnknownTip as err:
        raise LabelMismatch(f"host labels missing from the phylogeny: {err}") from None


def _check_distances(sub: PairwiseMrcaDepths) -> np.ndarray:
    T = sub.distances()
    off = ~np.eye(sub.n, dtype=bool)
    if np.any(T[off] <= 0.0):
        i, j = np.argwhere((T <= 0.0) & off)[0]
        raise DegenerateDistance(
            f"hosts {sub.labels[i]!r} and {sub.labels[j]!r} sit at zero distance")
    return T


def _make_row_weights(sub: PairwiseMrcaDepths):
    t = sub.tip_depths
    K = sub.mrca_depths
    n = sub.n
    idx = np.arange(n)

    def row_weights(h: int, scale: float) -> np.ndarray:
        phi = transform_legs(t[h], t, K[h], TransformSpec("eb", float(scale)))
        w = np.zeros(n)
        mask = idx != h
        w[mask] = 1.0 / phi[mask]
        return w

    return row_weights


def run_mcmc(Z: InteractionMatrix, depths: PairwiseMrcaDepths | None, config: SamplerConfig) -> PosteriorTrace:
    """Run the chain and return the recorded trace.

    ``depths`` may be None only when the phylogeny is disabled.  Host labels
    of Z must all resolve in ``depths``; distances are taken on Z's host set
    without renormalization.
    """
    config.validate()
    H, J = Z.shape
    mean_T = None
    row_weights = None
    if config.use_phylogeny:
        if depths is None:
            raise InvalidConfig("phylogeny enabled but no pairwise depths given")
        sub = _aligned_depths(Z, depths)
        T = _check_distances(sub)
        off = ~np.eye(sub.n, dtype=bool)
        mean_T = float(T[off].mean())
        row_weights = _make_row_weights(sub)
    if not config.use_affinities:
        single = np.flatnonzero(Z.values.sum(axis=0) == 1)
        if single.size:
            raise SingleHostColumn(
                f"{single.size} parasites are documented on a single host "
                f"(first: {Z.parasites[int(single[0])]!r}); drop them or enable affinities")

    default = _resolve_empty_weight(config.empty_neighbor_weight, mean_T)
    priors = config.priors
    rng = np.random.default_rng(config.seed)

    gamma0 = np.full(H, priors.host_shape / priors.host_rate)
    rho0 = np.full(J, priors.parasite_shape / priors.parasite_rate)
    if config.host_affinity_init is not None:
        gamma0 = np.asarray(config.host_affinity_init, dtype=np.float64).copy()
        if gamma0.shape != (H,):
            raise InvalidConfig("host_affinity_init has the wrong length")
    if config.parasite_affinity_init is not None:
        rho0 = np.asarray(config.parasite_affinity_init, dtype=np.float64).copy()
        if rho0.shape != (J,):
            raise InvalidConfig("parasite_affinity_init has the wrong length")
    if not config.use_affinities:
        gamma0 = np.ones(H)
        rho0 = np.ones(J)

    Zvals = Z.values.astype(np.uint8)
    state = ModelState(
        host_affinity=gamma0,
        parasite_affinity=rho0,
        tree_scale=float(config.tree_scale_init),
        miss_prob=float(config.miss_prob_init) if config.use_uncertainty else 0.0,
        scores=Zvals.astype(np.float64),
        priors=priors,
        use_phylogeny=config.use_phylogeny,
        use_affinities=config.use_affinities,
        use_uncertainty=config.use_uncertainty,
    )
    state.validate()
    cache = DeltaCache(Zvals, row_weights, default)
    adapter = ScaleAdapter(config.proposal_scale_init, config.adapt_window)
    if config.burn_in == 0:
        adapter.freeze()

    n_rec = config.iterations // config.thin
    rec_gamma = np.empty((n_rec, H))
    rec_rho = np.empty((n_rec, J))
    rec_eta = np.empty(n_rec)
    rec_g = np.empty(n_rec)
    k = 0
    total = config.burn_in + config.iterations
    for it in range(total):
        record = sweep(state, cache, Zvals, config, rng, adapter)
        if it == config.burn_in - 1:
            adapter.freeze()
            adapter.reset_acceptance()
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            rec_gamma[k] = record.host_affinity
            rec_rho[k] = record.parasite_affinity
            rec_eta[k] = record.tree_scale
            rec_g[k] = record.miss_prob
            k += 1

    for arr, name in ((rec_gamma, "host affinities"), (rec_rho, "parasite affinities"),
                      (rec_eta, "tree scale"), (rec_g, "miss probability")):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {name} in the recorded trace")

    return PosteriorTrace(
        Z.hosts, Z.parasites, rec_gamma, rec_rho, rec_eta, rec_g,
        use_phylogeny=config.use_phylogeny,
        use_affinities=config.use_affinities,
        use_uncertainty=config.use_uncertainty,
        empty_neighbor_weight=default,
        eta_acceptance=adapter.acceptance_rate if config.use_phylogeny else float("nan"),
        config=config,
    )


def posterior_predict(trace: PosteriorTrace, Z: InteractionMatrix,
                      depths: PairwiseMrcaDepths | None = None) -> np.ndarray:
    """Monte Carlo mean link probability per cell over the recorded sweeps.

    Neighborhoods come from the documented matrix.  With uncertainty, the
    value reported for an undocumented cell is the conditional probability
    that the link exists but went unrecorded, g*p / (g*p + 1 - p).
    """
    if trace.n_recorded == 0:
        raise EmptyTrace("trace holds no recorded sweeps")
    if tuple(Z.hosts) != trace.host_labels or tuple(Z.parasites) != trace.parasite_labels:
        raise LabelMismatch("matrix labels do not match the trace")
    signs = Z.values.astype(np.float64)
    ones = Z.values == 1
    acc = np.zeros(Z.shape)
    t = K = None
    if trace.use_phylogeny:
        if depths is None:
            raise InvalidConfig("trace was fit with the phylogeny; pass depths")
        sub = _aligned_depths(Z, depths)
        _check_distances(sub)
        t = sub.tip_depths
        K = sub.mrca_depths
        off = ~np.eye(sub.n, dtype=bool)
    for i in range(trace.n_recorded):
        if trace.use_phylogeny:
            phi = transform_legs(t[:, None], t[None, :], K, TransformSpec("eb", float(trace.tree_scale[i])))
            weights = np.zeros_like(phi)
            weights[off] = 1.0 / phi[off]
            delta = delta_matrix(signs, weights, trace.empty_neighbor_weight)
        else:
            delta = np.ones(Z.shape)
        rate = np.outer(trace.host_affinity[i], trace.parasite_affinity[i]) * delta
        p = -np.expm1(-rate)
        if trace.use_uncertainty:
            g = trace.miss_prob[i]
            num = g * p
            p = np.where(ones, p, num / (num + (1.0 - p)))
        acc += p
    return acc / trace.n_recorded


# ---------------------------------------------------------------------------
# synthesis

def iter_synthetic_states(host_affinity, parasite_affinity, weights, default, sweeps, rng,
                          start=None):
    """Yield the 0/1 state after each systematic Gibbs pass over the rows.

    ``weights`` is the inverse rescaled distance matrix (zero diagonal), or
    None for the affinity-only model.  Columns evolve independently; the
    yielded array is the live buffer, so copy before storing.
    """
    gamma = np.asarray(host_affinity, dtype=np.float64)
    rho = np.asarray(parasite_affinity, dtype=np.float64)
    H, J = gamma.shape[0], rho.shape[0]
    if start is None:
        Z = (rng.random((H, J)) < 0.5).astype(np.float64)
    else:
        Z = np.asarray(start, dtype=np.float64).copy()
    colsum = Z.sum(axis=0)
    for _ in range(sweeps):
        for h in range(H):
            if weights is None:
                delta = np.ones(J)
            else:
                delta = weights[h] @ Z
                delta[(colsum - Z[h]) == 0] = default
            p = -np.expm1(-gamma[h] * rho * delta)
            new = (rng.random(J) < p).astype(np.float64)
            colsum += new - Z[h]
            Z[h] = new
        yield Z


def generate_synthetic(depths, host_affinity, parasite_affinity, tree_scale,
                       burn_sweeps: int = 1000, rng=None,
                       *, empty_neighbor_weight: float = 1.0,
                       parasite_labels=None) -> InteractionMatrix:
    """Draw one interaction matrix from the conditional model by Gibbs sampling.

    The model has no direct generative factorization, so the matrix is the
    state of a long single-site Gibbs chain from a random start.  Parasites
    left with no hosts at the end are re-seeded with one uniformly placed
    interaction.  Pass ``depths=None`` for the affinity-only model.
    """
    if rng is None:
        rng = np.random.default_rng()
    gamma = np.asarray(host_affinity, dtype=np.float64)
    rho = np.asarray(parasite_affinity, dtype=np.float64)
    if np.any(gamma <= 0) or np.any(rho <= 0):
        raise InvalidConfig("affinities must be strictly positive")
    if burn_sweeps < 1000:
        raise InvalidConfig("burn_sweeps must be at least 1000")
    H, J = gamma.shape[0], rho.shape[0]
    weights = None
    hosts = [f"h{i:04d}" for i in range(H)]
    if depths is not None:
        if depths.n != H:
            raise LabelMismatch("host affinity length does not match the depths")
        hosts = list(depths.labels)
        phi = transform_matrix(depths, TransformSpec("eb", float(tree_scale)))
        off = ~np.eye(H, dtype=bool)
        if np.any(phi[off] <= 0.0):
            raise DegenerateDistance("zero rescaled distance between distinct hosts")
        weights = np.zeros_like(phi)
        weights[off] = 1.0 / phi[off]
    parasites = list(parasite_labels) if parasite_labels is not None else [
        f"p{j:04d}" for j in range(J)]

    Z = None
    for Z in iter_synthetic_states(gamma, rho, weights, empty_neighbor_weight,
                                   burn_sweeps, rng):
        pass
    out = Z.astype(np.uint8)
    for j in np.flatnonzero(out.sum(axis=0) == 0):
        out[int(rng.integers(H)), j] = 1
    return InteractionMatrix(hosts, parasites, out)


# ---------------------------------------------------------------------------
# chain diagnostics

def autocorrelation(x, max_lag: int | None = None) -> np.ndarray:
    """Normalized autocorrelation function estimated with the FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        return np.ones(1)
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        out = np.zeros(n if max_lag is None else max_lag + 1)
        out[0] = 1.0
        return out
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n]
    acf = acov / acov[0]
    if max_lag is not None:
        acf = acf[: max_lag + 1]
    return acf


def effective_sample_size(x) -> float:
    """Geyer initial-positive-sequence effective sample size, capped at n."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 4 or np.std(x) == 0.0:
        return float(n)
    acf = autocorrelation(x)
    tau = 1.0
    k = 1
    while k + 1 < n:
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 2
    return float(min(n, n / max(tau, 1e-8)))
