import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from cdcl.errors import DataError
from cdcl.graph import (
    WEIGHT_FLOOR,
    ProbabilityMap,
    SeedSet,
    argmax_segmentation,
    build_graph,
    erw_solve,
    load_probability_map,
    rw_solve,
    save_probability_map,
)


def dense_laplacian(image, beta):
    """Independent nested-loop construction of the 8-neighbor Laplacian."""
    h, w = image.shape
    n = h * w
    weight = np.zeros((n, n))
    for r in range(h):
        for c in range(w):
            i = r * w + c
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    j = rr * w + cc
                    wgt = np.exp(-beta * (image[r, c] - image[rr, cc]) ** 2) + WEIGHT_FLOOR
                    weight[i, j] = wgt
                    weight[j, i] = wgt
    return np.diag(weight.sum(axis=1)) - weight


def dense_walker(image, beta, seeds, classes, gamma=None, priors=None):
    """Dense Cholesky oracle for both solvers."""
    lap = dense_laplacian(image, beta)
    n = lap.shape[0]
    seed_px = np.array([p for p, _ in seeds])
    seed_lab = np.array([lab for _, lab in seeds])
    unlabeled = np.array([i for i in range(n) if i not in set(seed_px.tolist())])
    probs = np.zeros((n, classes))
    probs[seed_px, seed_lab - 1] = 1.0
    if unlabeled.size == 0:
        return probs
    a = lap[np.ix_(unlabeled, unlabeled)]
    b = lap[np.ix_(unlabeled, seed_px)]
    if gamma is not None:
        a = a + gamma * np.eye(unlabeled.size)
    factor = cho_factor(a)
    for cls in range(1, classes + 1):
        rhs = -b @ (seed_lab == cls).astype(float)
        if gamma is not None:
            rhs = rhs + gamma * priors[unlabeled, cls - 1]
        probs[unlabeled, cls - 1] = cho_solve(factor, rhs)
    return probs


def random_instance(rng, max_side=10, classes=None):
    h = int(rng.integers(2, max_side + 1))
    w = int(rng.integers(2, max_side + 1))
    image = rng.random((h, w))
    classes = classes or int(rng.integers(2, 5))
    n = h * w
    count = int(rng.integers(classes, min(n, classes + 4) + 1))
    pixels = rng.choice(n, size=count, replace=False)
    labels = np.concatenate(
        [np.arange(1, classes + 1), rng.integers(1, classes + 1, size=count - classes)]
    )
    seeds = SeedSet(tuple((int(p), int(l)) for p, l in zip(pixels, labels)))
    return image, seeds, classes


def random_priors(rng, n, classes):
    raw = rng.random((n, classes)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


class TestBuildGraph:
    def test_weight_formula(self):
        graph = build_graph(np.array([[0.0, 0.0]]), beta=710.0)
        assert graph.edge_w[0] == pytest.approx(1.0 + WEIGHT_FLOOR)

    def test_weight_midrange(self):
        graph = build_graph(np.array([[0.0, 0.05]]), beta=710.0)
        assert graph.edge_w[0] == pytest.approx(np.exp(-710 * 0.05**2) + 1e-6, rel=1e-9)
        assert graph.edge_w[0] == pytest.approx(0.16946, rel=1e-3)

    def test_underflow_floor(self):
        graph = build_graph(np.array([[0.0, 1.0]]), beta=710.0)
        assert graph.edge_w[0] == pytest.approx(WEIGHT_FLOOR)

    def test_laplacian_zero_row_sums_and_symmetry(self):
        rng = np.random.default_rng(0)
        graph = build_graph(rng.random((5, 7)), beta=710.0)
        lap = graph.laplacian.toarray()
        np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(lap, lap.T, atol=0.0)

    def test_edge_count_eight_neighbors(self):
        graph = build_graph(np.zeros((4, 5)), beta=1.0)
        h, w = 4, 5
        expected = h * (w - 1) + (h - 1) * w + 2 * (h - 1) * (w - 1)
        assert graph.edge_i.size == expected

    def test_rejects_bad_inputs(self):
        with pytest.raises(DataError):
            build_graph(np.zeros((2, 2)), beta=0.0)
        with pytest.raises(DataError):
            build_graph(np.full((2, 2), 1.5), beta=1.0)
        with pytest.raises(DataError):
            build_graph(np.zeros(4), beta=1.0)


class TestRwSolve:
    def test_three_pixel_path_symmetry(self):
        graph = build_graph(np.zeros((1, 3)), beta=710.0)
        pm = rw_solve(graph, SeedSet(((0, 1), (2, 2))), 2)
        np.testing.assert_allclose(pm.probs[1], [0.5, 0.5], atol=1e-9)

    def test_four_pixel_path_hand_solution(self):
        graph = build_graph(np.zeros((1, 4)), beta=710.0)
        pm = rw_solve(graph, SeedSet(((0, 1), (3, 2))), 2)
        np.testing.assert_allclose(pm.probs[1], [2 / 3, 1 / 3], atol=1e-7)
        np.testing.assert_allclose(pm.probs[2], [1 / 3, 2 / 3], atol=1e-7)

    def test_seeds_are_one_hot(self):
        rng = np.random.default_rng(1)
        image, seeds, classes = random_instance(rng)
        pm = rw_solve(build_graph(image, 710.0), seeds, classes)
        for pixel, label in seeds.entries:
            expected = np.zeros(classes)
            expected[label - 1] = 1.0
            np.testing.assert_array_equal(pm.probs[pixel], expected)

    def test_missing_class_seed_rejected(self):
        graph = build_graph(np.zeros((2, 2)), beta=1.0)
        with pytest.raises(DataError, match="without any seed"):
            rw_solve(graph, SeedSet(((0, 1),)), 2)
        with pytest.raises(DataError):
            rw_solve(graph, SeedSet(()), 2)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            image, seeds, classes = random_instance(rng)
            pm = rw_solve(build_graph(image, 710.0), seeds, classes)
            oracle = dense_walker(image, 710.0, seeds.entries, classes)
            assert np.abs(pm.probs - oracle).max() < 1e-8

    def test_row_stochastic_and_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            image, seeds, classes = random_instance(rng)
            pm = rw_solve(build_graph(image, 710.0), seeds, classes)
            np.testing.assert_allclose(pm.probs.sum(axis=1), 1.0, atol=1e-7)
            assert pm.probs.min() > -1e-7 and pm.probs.max() < 1 + 1e-7

    def test_class_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        image, seeds, classes = random_instance(rng, classes=3)
        graph = build_graph(image, 710.0)
        perm = np.array([2, 3, 1])  # label c -> perm[c-1]
        permuted = SeedSet(tuple((p, int(perm[l - 1])) for p, l in seeds.entries))
        pm = rw_solve(graph, seeds, 3)
        pm_perm = rw_solve(graph, permuted, 3)
        for c in range(3):
            np.testing.assert_allclose(
                pm.probs[:, c], pm_perm.probs[:, perm[c] - 1], atol=1e-9
            )


class TestErwSolve:
    def test_gamma_zero_equals_rw(self):
        rng = np.random.default_rng(5)
        image, seeds, classes = random_instance(rng)
        graph = build_graph(image, 710.0)
        priors = ProbabilityMap(
            graph.width, graph.height, classes,
            random_priors(rng, graph.n_pixels, classes),
        )
        pm_rw = rw_solve(graph, seeds, classes)
        pm_erw = erw_solve(graph, seeds, priors, gamma=0.0)
        assert np.abs(pm_rw.probs - pm_erw.probs).max() < 1e-7

    def test_large_gamma_follows_prior(self):
        # single unlabeled pixel: (d + gamma) p = b + gamma * lambda
        graph = build_graph(np.array([[0.1, 0.4, 0.9]]), beta=710.0)
        priors = ProbabilityMap(3, 1, 2, np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]]))
        pm = erw_solve(graph, SeedSet(((0, 1), (2, 2))), priors, gamma=1e6)
        np.testing.assert_allclose(pm.probs[1], [0.9, 0.1], atol=1e-4)

    def test_uniform_prior_symmetric_path(self):
        graph = build_graph(np.zeros((1, 3)), beta=710.0)
        priors = ProbabilityMap(3, 1, 2, np.full((3, 2), 0.5))
        for gamma in (1e-5, 1.0, 50.0):
            pm = erw_solve(graph, SeedSet(((0, 1), (2, 2))), priors, gamma)
            np.testing.assert_allclose(pm.probs[1], [0.5, 0.5], atol=1e-9)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            image, seeds, classes = random_instance(rng)
            graph = build_graph(image, 710.0)
            priors = random_priors(rng, graph.n_pixels, classes)
            pm = erw_solve(
                graph, seeds, ProbabilityMap(graph.width, graph.height, classes, priors), 1e-5
            )
            oracle = dense_walker(image, 710.0, seeds.entries, classes, gamma=1e-5, priors=priors)
            assert np.abs(pm.probs - oracle).max() < 1e-8

    def test_rejects_bad_priors(self):
        graph = build_graph(np.zeros((1, 3)), beta=1.0)
        seeds = SeedSet(((0, 1), (2, 2)))
        bad_sum = ProbabilityMap(3, 1, 2, np.full((3, 2), 0.9))
        with pytest.raises(DataError, match="row-stochastic"):
            erw_solve(graph, seeds, bad_sum, 1.0)
        negative = ProbabilityMap(3, 1, 2, np.array([[1.2, -0.2]] * 3))
        with pytest.raises(DataError, match="negative"):
            erw_solve(graph, seeds, negative, 1.0)
        with pytest.raises(DataError, match="gamma"):
            erw_solve(graph, seeds, ProbabilityMap(3, 1, 2, np.full((3, 2), 0.5)), -1.0)

    def test_continuity_in_gamma(self):
        # at gamma=1 the reduced system is well conditioned, so the solution
        # moves at most O(delta) when gamma does
        rng = np.random.default_rng(11)
        image, seeds, classes = random_instance(rng, max_side=6)
        graph = build_graph(image, 710.0)
        pmap = ProbabilityMap(
            graph.width, graph.height, classes, random_priors(rng, graph.n_pixels, classes)
        )
        base = erw_solve(graph, seeds, pmap, gamma=1.0)
        for delta in (1e-2, 1e-4):
            near = erw_solve(graph, seeds, pmap, gamma=1.0 + delta)
            assert np.abs(near.probs - base.probs).max() < 4 * delta

    def test_gamma_growth_tracks_prior_argmax(self):
        rng = np.random.default_rng(7)
        image, seeds, classes = random_instance(rng)
        graph = build_graph(image, 710.0)
        priors = random_priors(rng, graph.n_pixels, classes)
        pmap = ProbabilityMap(graph.width, graph.height, classes, priors)
        pm = erw_solve(graph, seeds, pmap, gamma=1e6)
        seed_px = set(seeds.pixels().tolist())
        unlabeled = [i for i in range(graph.n_pixels) if i not in seed_px]
        assert (
            pm.probs[unlabeled].argmax(axis=1) == priors[unlabeled].argmax(axis=1)
        ).all()


class TestSegmentation:
    def test_argmax_and_tie_rule(self):
        pm = ProbabilityMap(3, 1, 3, np.array([[0.2, 0.7, 0.1], [0.5, 0.5, 0.0], [0.1, 0.1, 0.8]]))
        seg = argmax_segmentation(pm)
        assert seg.labels.tolist() == [2, 1, 3]

    def test_seeds_keep_their_label(self):
        rng = np.random.default_rng(8)
        image, seeds, classes = random_instance(rng)
        pm = rw_solve(build_graph(image, 710.0), seeds, classes)
        seg = argmax_segmentation(pm)
        for pixel, label in seeds.entries:
            assert seg.labels[pixel] == label


class TestProbabilityMapIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        probs = random_priors(rng, 12, 3).astype(np.float32).astype(np.float64)
        pm = ProbabilityMap(4, 3, 3, probs)
        save_probability_map(pm, str(tmp_path / "pm.json"))
        back = load_probability_map(str(tmp_path / "pm.json"))
        np.testing.assert_array_equal(back.probs, pm.probs)
        assert (back.width, back.height, back.classes) == (4, 3, 3)
