"""Probabilistic kernel: neighbor weights, link probabilities, latent scores.

The conditional probability that host h hosts parasite j, given the rest of
the column, is 1 - exp(-rate) with rate = (host affinity) * (parasite
affinity) * (neighbor weight).  The neighbor weight sums inverse rescaled
tree distances from h to the other documented hosts of j; an empty
neighborhood falls back to a configurable default so the cell reduces to the
affinity-only model.

Latent scores s >= 0 carry the same information in continuous form: s = 0
means no link, s > 0 means a link, and conditionally on the rest the
positive part follows a unit Gumbel density tilted by the rate, with an atom
of mass exp(-rate) at 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError, PhylinkError

__all__ = [
    "NegativeRate",
    "NonPositiveDistance",
    "AffinityPriors",
    "ModelState",
    "DeltaCache",
    "delta_weight",
    "delta_matrix",
    "interaction_prob",
    "gumbel_zero_inflated_logpdf",
    "positive_score_prob",
    "sample_truncated_gumbel",
]


class NegativeRate(PhylinkError):
    """A probability was requested for a negative rate."""


class NonPositiveDistance(DataError):
    """A documented neighbor sits at non-positive rescaled distance."""


@dataclass(frozen=True)
class AffinityPriors:
    """Gamma priors (shape, rate) for host and parasite affinities."""

    host_shape: float = 1.0
    host_rate: float = 1.0
    parasite_shape: float = 1.0
    parasite_rate: float = 1.0

    def __post_init__(self):
        for name in ("host_shape", "host_rate", "parasite_shape", "parasite_rate"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"prior {name} must be positive and finite, got {v}")


@dataclass
class ModelState:
    """Mutable chain state.

    ``miss_prob`` is the probability that an existing link went undocumented;
    it is identically 0 unless ``use_uncertainty`` is set.  ``scores`` holds
    the latent matrix; without uncertainty its positive cells coincide with
    the documented ones.
    """

    host_affinity: np.ndarray
    parasite_affinity: np.ndarray
    tree_scale: float
    miss_prob: float
    scores: np.ndarray
    priors: AffinityPriors = field(default_factory=AffinityPriors)
    use_phylogeny: bool = True
    use_affinities: bool = True
    use_uncertainty: bool = False

    def validate(self) -> None:
        H = self.host_affinity.shape[0]
        J = self.parasite_affinity.shape[0]
        if self.scores.shape != (H, J):
            raise DataError("score matrix shape does not match affinity vectors")
        if np.any(self.host_affinity <= 0) or np.any(self.parasite_affinity <= 0):
            raise DataError("affinities must be strictly positive")
        if np.any(self.scores < 0):
            raise DataError("latent scores must be non-negative")
        if not self.use_uncertainty and self.miss_prob != 0.0:
            raise DataError("miss_prob must be 0 when uncertainty is disabled")
        if not 0.0 <= self.miss_prob <= 1.0:
            raise DataError("miss_prob must lie in [0, 1]")
        if not (self.use_phylogeny or self.use_affinities):
            raise DataError("at least one model component must be enabled")


def delta_weight(h: int, zcol, distances, default: float = 1.0) -> float:
    """Neighbor weight for host h in one parasite column.

    ``zcol`` flags the documented hosts of the parasite; ``distances`` is the
    rescaled pairwise distance matrix.  The weight is the sum of inverse
    distances from h to the other documented hosts, or ``default`` when there
    are none.
    """
    zcol = np.asarray(zcol)
    idx = np.flatnonzero(zcol)
    idx = idx[idx != h]
    if idx.size == 0:
        return float(default)
    d = np.asarray(distances)[h, idx]
    if np.any(d <= 0):
        raise NonPositiveDistance(
            f"host {h} has a documented neighbor at non-positive distance")
    return float(np.sum(1.0 / d))


def delta_matrix(signs, weights, default: float = 1.0) -> np.ndarray:
    """Neighbor weights for every cell at once.

    ``signs`` is the 0/1 (or boolean) positivity matrix, ``weights`` the
    inverse rescaled distances with a zero diagonal.  Cells whose column has
    no other positive host get the default value.
    """
    signs = np.asarray(signs, dtype=np.float64)
    delta = weights @ signs
    neighbor_count = signs.sum(axis=0)[None, :] - signs
    delta[neighbor_count == 0] = default
    return delta


class DeltaCache:
    """Current positivity matrix plus per-column counts for one chain.

    ``row_weights(h, scale)`` must return inverse rescaled distances from
    host h to every host, with entry h equal to 0.  Passing None pins all
    neighbor weights at 1 (no phylogeny).
    """

    def __init__(self, signs, row_weights=None, default: float = 1.0):
        self.signs = np.ascontiguousarray(signs, dtype=np.float64)
        self.col_counts = self.signs.sum(axis=0)
        self.row_weights = row_weights
        self.default = float(default)

    def row_delta(self, h: int, scale: float) -> np.ndarray:
        """Neighbor weights for every cell of row h at the given tree scale."""
        n_other = self.col_counts - self.signs[h]
        if self.row_weights is None:
            return np.ones(self.signs.shape[1])
        w = self.row_weights(h, scale)
        delta = w @ self.signs
        delta[n_other == 0] = self.default
        return delta

    def set_row(self, h: int, new_signs) -> None:
        new = np.asarray(new_signs, dtype=np.float64)
        self.col_counts += new - self.signs[h]
        self.signs[h] = new


def interaction_prob(rate):
    """Link probability 1 - exp(-rate); scalar or array."""
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0):
        raise NegativeRate("interaction rate must be non-negative")
    out = -np.expm1(-rate)
    return float(out) if out.ndim == 0 else out


def gumbel_zero_inflated_logpdf(s, rate):
    """Log density of the zero-inflated latent score.

    Mass exp(-rate) at s = 0; density rate * exp(-s - rate * exp(-s)) for
    s > 0.  Values below 0 get -inf.
    """
    s = np.asarray(s, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate <= 0):
        raise NegativeRate("score density needs a positive rate")
    s, rate = np.broadcast_arrays(s, rate)
    out = np.where(
        s > 0,
        np.log(rate) - s - rate * np.exp(-s),
        -rate,
    )
    out = np.where(s < 0, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def positive_score_prob(rate, miss_prob):
    """Probability an undocumented cell hides a positive latent score.

    With link probability psi = 1 - exp(-rate) and miss probability g this is
    g * psi / (g * psi + 1 - psi).
    """
    rate = np.asarray(rate, dtype=np.float64)
    psi = -np.expm1(-rate)
    num = miss_prob * psi
    out = num / (num + (1.0 - psi))
    return float(out) if out.ndim == 0 else out


def sample_truncated_gumbel(loc, rng: np.random.Generator):
    """Draw from a unit-scale Gumbel at location ``loc`` conditioned positive.

    ``loc`` is the log of the interaction rate.  Inverse CDF sampling on the
    uniform interval (F(0), 1); when F(0) crowds 1 the computation moves to
    log space so extreme truncation stays finite (the conditional approaches
    a unit exponential there).  Scalar or array ``loc``; all outputs are
    strictly positive.  Non-finite locations mean the rate itself degenerated
    and are refused.
    """
    loc = np.asarray(loc, dtype=np.float64)
    scalar = loc.ndim == 0
    loc = np.atleast_1d(loc)
    if not np.all(np.isfinite(loc)):
        raise NumericalError("non-finite score location; an interaction rate "
                             "underflowed or overflowed")

    def draw(locs, m):
        u = rng.random(m)
        while np.any(u == 0.0):  # need the open interval
            redo = u == 0.0
            u[redo] = rng.random(int(redo.sum()))
        e = np.exp(locs)  # rate; F(0) = exp(-e)
        one_minus_f0 = -np.expm1(-e)
        vals = np.empty(m)
        tiny = one_minus_f0 < 1e-12
        if np.any(~tiny):
            idx = ~tiny
            one_minus_v = (1.0 - u[idx]) * one_minus_f0[idx]
            vals[idx] = locs[idx] - np.log(-np.log1p(-one_minus_v))
        if np.any(tiny):
            idx = tiny
            omf = one_minus_f0[idx]
            # log(1 - F(0)); once exp(loc) underflows to 0 the limit is loc itself
            log_omf = np.where(omf > 0.0, np.log(np.where(omf > 0.0, omf, 1.0)), locs[idx])
            vals[idx] = locs[idx] - (np.log1p(-u[idx]) + log_omf)
        return vals

    out = draw(loc, loc.size)
    bad = ~(out > 0)
    rounds = 0
    while np.any(bad):  # float rounding can only touch measure-zero edges
        rounds += 1
        if rounds > 100:
            raise NumericalError("truncated score draws keep landing at zero")
        out[bad] = draw(loc[bad], int(bad.sum()))
        bad = ~(out > 0)
    return float(out[0]) if scalar else out
