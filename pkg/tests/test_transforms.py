"""Distance rescaling transforms and the cross-validated transform scan."""

import math

import numpy as np
import pytest

from phylink.errors import ConfigError
from phylink.interactions import InteractionMatrix
from phylink.newick import pairwise_depths, parse_newick, random_tree
from phylink.transforms import (
    TRANSFORM_KINDS,
    DegenerateDistance,
    EmptyGrid,
    TransformSpec,
    transform_matrix,
    transform_pair,
    transform_scan,
)

THREE_TAXON = "((A:1,B:1):1,C:2):0;"

# rescaled sister distance at rate log 2: both legs run from depth 0.5 to
# depth 1, giving 2 * (2 - sqrt(2)) / log(2)
EB_SISTER_AT_LOG2 = 1.6902223771686955


@pytest.fixture(scope="module")
def three_taxon():
    return pairwise_depths(parse_newick(THREE_TAXON))


def closed_form_leg(depth_from: float, depth_to: float, rate: float) -> float:
    """Direct (exp(r*t2) - exp(r*t1)) / r without the stabilized form."""
    return (math.exp(rate * depth_to) - math.exp(rate * depth_from)) / rate


class TestExponentialRate:
    def test_sister_pair_frozen_value(self, three_taxon):
        got = transform_pair(three_taxon, ("A", "B"), TransformSpec("eb", math.log(2.0)))
        assert abs(got - EB_SISTER_AT_LOG2) < 1e-12

    def test_matches_closed_form(self, three_taxon):
        for rate in (-3.0, -0.7, 0.2, 1.0, 4.5):
            spec = TransformSpec("eb", rate)
            for pair, mrca in ((("A", "B"), 0.5), (("A", "C"), 0.0)):
                want = 2.0 * closed_form_leg(mrca, 1.0, rate)
                assert abs(transform_pair(three_taxon, pair, spec) - want) < 1e-10

    def test_zero_rate_is_exact_identity(self, three_taxon):
        plain = transform_matrix(three_taxon, TransformSpec("identity"))
        at_zero = transform_matrix(three_taxon, TransformSpec("eb", 0.0))
        assert np.array_equal(plain, at_zero)
        np.testing.assert_allclose(plain, three_taxon.distances(), atol=1e-15)

    def test_tiny_rate_continuity(self):
        rng = np.random.default_rng(3)
        for rep in range(30):
            tree = random_tree([f"t{i}" for i in range(6)], rng, jitter=0.4)
            depths = pairwise_depths(tree)
            plain = depths.distances()
            for rate in (1e-9, -1e-9):
                near = transform_matrix(depths, TransformSpec("eb", rate))
                assert np.max(np.abs(near - plain)) < 1e-6

    def test_positive_for_distinct_tips(self):
        rng = np.random.default_rng(17)
        for rep in range(20):
            tree = random_tree([f"t{i}" for i in range(5)], rng, jitter=0.3)
            depths = pairwise_depths(tree)
            off = ~np.eye(depths.n, dtype=bool)
            for rate in (-30.0, -2.0, 2.0, 30.0):
                phi = transform_matrix(depths, TransformSpec("eb", rate))
                assert np.all(phi[off] > 0.0)

    def test_edge_additivity(self):
        """Pairwise values must equal the sum of edge-wise rescaled lengths."""
        rng = np.random.default_rng(29)
        for rep in range(25):
            tree = random_tree([f"t{i}" for i in range(7)], rng, jitter=0.5)
            depths = pairwise_depths(tree)
            node_depth = tree.depths() / depths.tree_depth
            rate = float(rng.uniform(-4, 4)) or 0.5
            spec = TransformSpec("eb", rate)
            tips = tree.tips()
            labels = [tree.label[t] for t in tips]
            for _ in range(4):
                a, b = rng.choice(len(tips), size=2, replace=False)
                total = 0.0
                seen = {}
                for start in (tips[int(a)], tips[int(b)]):
                    node = start
                    while tree.parent[node] >= 0:
                        seen.setdefault(node, 0)
                        seen[node] += 1
                        node = int(tree.parent[node])
                for node, count in seen.items():
                    if count == 1:  # edges below the MRCA appear once
                        parent = int(tree.parent[node])
                        total += closed_form_leg(node_depth[parent], node_depth[node], rate)
                got = transform_pair(depths, (labels[int(a)], labels[int(b)]), spec)
                assert abs(got - total) < 1e-9 * max(1.0, abs(total))


class TestOtherKinds:
    def test_shared_path_scaling(self, three_taxon):
        spec = TransformSpec("lambda", 0.3)
        got = transform_pair(three_taxon, ("A", "B"), spec)
        assert abs(got - 1.7) < 1e-12
        # no shared path between A and C, so nothing changes
        assert abs(transform_pair(three_taxon, ("A", "C"), spec) - 2.0) < 1e-12

    def test_power_transform(self, three_taxon):
        assert abs(transform_pair(three_taxon, ("A", "B"), TransformSpec("delta", 2.0))
                   - 1.5) < 1e-12
        assert abs(transform_pair(three_taxon, ("A", "B"), TransformSpec("delta", 0.5))
                   - (2.0 - math.sqrt(2.0))) < 1e-12

    def test_attraction_transform(self, three_taxon):
        alpha = 1.0

        def curved(t):
            return (1.0 - math.exp(-2.0 * alpha * t)) / (2.0 * alpha)

        want = 2.0 * (curved(1.0) - curved(0.5))
        got = transform_pair(three_taxon, ("A", "B"), TransformSpec("ou", alpha))
        assert abs(got - want) < 1e-12

    def test_leg_power_transform(self, three_taxon):
        got = transform_pair(three_taxon, ("A", "B"), TransformSpec("kappa", 0.5))
        assert abs(got - math.sqrt(2.0)) < 1e-12

    def test_identity_parameters(self):
        """Each kind at its identity setting reproduces plain distances."""
        rng = np.random.default_rng(41)
        identity_specs = [
            TransformSpec("eb", 0.0),
            TransformSpec("lambda", 1.0),
            TransformSpec("delta", 1.0),
            TransformSpec("ou", 0.0),
            TransformSpec("kappa", 1.0),
        ]
        for rep in range(20):
            tree = random_tree([f"t{i}" for i in range(6)], rng, jitter=0.3)
            depths = pairwise_depths(tree)
            plain = transform_matrix(depths, TransformSpec("identity"))
            np.testing.assert_allclose(plain, depths.distances(), atol=1e-14)
            for spec in identity_specs:
                np.testing.assert_allclose(
                    transform_matrix(depths, spec), plain, rtol=1e-12, atol=1e-12)


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            TransformSpec("banana", 1.0)

    @pytest.mark.parametrize("kind,param", [
        ("lambda", -0.1), ("lambda", 1.5),
        ("delta", 0.0), ("delta", -2.0),
        ("ou", -1.0), ("kappa", -0.5),
        ("eb", None), ("eb", float("inf")), ("eb", float("nan")),
    ])
    def test_out_of_domain(self, kind, param):
        with pytest.raises(ConfigError):
            TransformSpec(kind, param)

    def test_identity_takes_no_parameter(self):
        with pytest.raises(ConfigError):
            TransformSpec("identity", 1.0)
        TransformSpec("identity")

    def test_describe(self):
        assert TransformSpec("eb", 0.5).describe() == "eb:0.5"
        assert TransformSpec("identity").describe() == "identity"
        assert "lambda" in TransformSpec("lambda", 0.25).describe()

    def test_kind_list_stable(self):
        assert set(TRANSFORM_KINDS) == {"eb", "lambda", "delta", "ou", "kappa", "identity"}


class TestMatrixAndPairs:
    def test_matrix_matches_pairs(self, three_taxon):
        spec = TransformSpec("eb", 1.3)
        phi = transform_matrix(three_taxon, spec)
        assert np.array_equal(phi, phi.T)
        np.testing.assert_allclose(np.diag(phi), 0.0)
        for i, a in enumerate(three_taxon.labels):
            for j, b in enumerate(three_taxon.labels):
                if i != j:
                    assert phi[i, j] == pytest.approx(
                        transform_pair(three_taxon, (a, b), spec), abs=1e-14)

    def test_zero_distance_pair_guard(self):
        depths = pairwise_depths(parse_newick("((A:0,B:0):1,C:1):0;"))
        spec = TransformSpec("eb", 1.0)
        assert transform_pair(depths, ("A", "B"), spec) == 0.0
        with pytest.raises(DegenerateDistance):
            transform_pair(depths, ("A", "B"), spec, require_positive=True)


def small_interaction_fixture(seed=0):
    rng = np.random.default_rng(seed)
    labels = [f"h{i}" for i in range(6)]
    tree = random_tree(labels, rng, jitter=0.2)
    depths = pairwise_depths(tree)
    values = (rng.random((6, 10)) < 0.35).astype(np.uint8)
    for j in range(10):
        if values[:, j].sum() == 0:
            values[int(rng.integers(6)), j] = 1
    Z = InteractionMatrix(labels, [f"p{j}" for j in range(10)], values)
    return Z, depths


class TestScan:
    def test_scan_returns_input_order(self):
        Z, depths = small_interaction_fixture()
        specs = [TransformSpec("eb", 1.0), TransformSpec("identity"), TransformSpec("eb", 0.0)]
        out = transform_scan(Z, depths, specs, folds=3, floor=1, seed=5)
        assert [s for s, _ in out] == specs
        aucs = [a for _, a in out]
        assert all(0.0 <= a <= 1.0 for a in aucs)
        # a zero rate and the identity weigh neighbors identically
        assert aucs[1] == aucs[2]

    def test_scan_deterministic(self):
        Z, depths = small_interaction_fixture(3)
        specs = [TransformSpec("eb", r) for r in (-1.0, 0.0, 1.0)]
        a = transform_scan(Z, depths, specs, folds=3, floor=1, seed=9)
        b = transform_scan(Z, depths, specs, folds=3, floor=1, seed=9)
        assert [x for _, x in a] == [x for _, x in b]

    def test_empty_grid(self):
        Z, depths = small_interaction_fixture()
        with pytest.raises(EmptyGrid):
            transform_scan(Z, depths, [])

    def test_kappa_gate(self):
        Z, depths = small_interaction_fixture()
        with pytest.raises(ConfigError):
            transform_scan(Z, depths, [TransformSpec("kappa", 0.5)], folds=3, floor=1)
        out = transform_scan(Z, depths, [TransformSpec("kappa", 0.5)],
                             folds=3, floor=1, allow_kappa=True)
        assert len(out) == 1
