import numpy as np
import pytest

from cdcl.errors import DataError
from cdcl.synthetic import SyntheticSpec, default_spec, generate_synthetic


class TestSpec:
    def test_heterogeneous_dimensions_enforced(self):
        with pytest.raises(DataError):
            SyntheticSpec(
                classes=3, width=8, height=8, source_dim=5, target_dim=5,
                class_means=np.zeros((3, 5)), class_covs=np.ones((3, 5)),
                mixing=np.eye(5), noise_scale=1.0, source_noise=0.1,
            )

    def test_default_spec_shape(self):
        spec = default_spec()
        assert spec.classes == 5
        assert (spec.source_dim, spec.target_dim) == (12, 20)
        assert spec.class_means.shape == (5, 20)


class TestGenerate:
    def test_determinism(self):
        spec = default_spec()
        a = generate_synthetic(spec, 123)
        b = generate_synthetic(spec, 123)
        for x, y in zip(a, b):
            arr_x = x.values if hasattr(x, "values") else x.labels
            arr_y = y.values if hasattr(y, "values") else y.labels
            np.testing.assert_array_equal(arr_x, arr_y)

    def test_different_seeds_differ(self):
        spec = default_spec()
        a = generate_synthetic(spec, 1)
        b = generate_synthetic(spec, 2)
        assert not np.array_equal(a[2].values, b[2].values)

    def test_every_class_present_many_seeds(self):
        spec = default_spec(classes=16, width=64, height=64, source_dim=12, target_dim=20)
        for seed in range(100):
            _, source_labels, _, target_labels = generate_synthetic(spec, seed)
            assert set(np.unique(target_labels.labels)) == set(range(1, 17))
            assert set(np.unique(source_labels.labels)) == set(range(1, 17))

    def test_class_means_recoverable_with_identity_like_mixing(self):
        # near-zero noise, identity mixing padded by one extra source band
        classes, dt = 4, 6
        rng = np.random.default_rng(0)
        means = rng.normal(size=(classes, dt)) * 3
        spec = SyntheticSpec(
            classes=classes, width=32, height=32, source_dim=dt + 1, target_dim=dt,
            class_means=means, class_covs=np.full((classes, dt), 1e-8),
            mixing=np.vstack([np.eye(dt), np.zeros((1, dt))]),
            noise_scale=1.0, source_noise=1e-6,
        )
        source_cube, source_labels, target_cube, target_labels = generate_synthetic(spec, 3)
        xt = target_cube.pixel_matrix()
        xs = source_cube.pixel_matrix()
        for cls in range(1, classes + 1):
            sample_mean = xt[target_labels.labels == cls].mean(axis=0)
            np.testing.assert_allclose(sample_mean, means[cls - 1], atol=1e-3)
            source_mean = xs[source_labels.labels == cls].mean(axis=0)
            np.testing.assert_allclose(source_mean[:dt], means[cls - 1], atol=1e-3)
            assert abs(source_mean[dt]) < 1e-3

    def test_spatial_contiguity(self):
        # each class region is a union of Voronoi cells: label changes are rare
        spec = default_spec()
        _, _, _, target_labels = generate_synthetic(spec, 5)
        grid = target_labels.grid()
        horizontal_changes = (grid[:, 1:] != grid[:, :-1]).mean()
        assert horizontal_changes < 0.2
