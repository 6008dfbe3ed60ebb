import math

import numpy as np
import pytest

from lidarlabels.clusters import (
    AugmentedCluster,
    ClusterLabel,
    CollinearClicksError,
    EmptyClusterError,
    NOISE_PRESETS,
    NoiseModel,
    annotation_cost,
    augment_cluster,
    cluster_center,
    cluster_from_clicks,
    clusters_from_boxes,
    parallelogram_from_clicks,
    pilot_crop_regions,
    select_budget,
)
from lidarlabels.geometry import Box3D, PointCloud, PointIndexSet, points_in_box

from synth import random_scene


def make_cloud(points):
    return PointCloud(np.array(points, dtype=float))


class TestClusterCenter:
    def test_midpoint_of_extents(self):
        cloud = make_cloud([[0, 0, 0], [2, 4, 6]])
        label = ClusterLabel(PointIndexSet(np.array([0, 1])), 1, 0)
        assert cluster_center(label, cloud) == (1.0, 2.0, 3.0)

    def test_single_point(self):
        cloud = make_cloud([[5, -1, 2]])
        label = ClusterLabel(PointIndexSet(np.array([0])), 1, 0)
        assert cluster_center(label, cloud) == (5.0, -1.0, 2.0)

    def test_minmax_per_axis(self):
        cloud = make_cloud([[-1, 0, 0], [1, 0, 0], [0, 3, 0], [0, -3, 7]])
        label = ClusterLabel(PointIndexSet(np.arange(4)), 1, 0)
        assert cluster_center(label, cloud) == (0.0, 0.0, 3.5)

    def test_center_inside_aabb(self):
        rng = np.random.default_rng(2)
        cloud = PointCloud(rng.normal(size=(50, 3)))
        label = ClusterLabel(PointIndexSet(np.arange(50)), 1, 0)
        cx, cy, cz = cluster_center(label, cloud)
        lo, hi = cloud.xyz.min(axis=0), cloud.xyz.max(axis=0)
        assert lo[0] <= cx <= hi[0] and lo[1] <= cy <= hi[1] and lo[2] <= cz <= hi[2]

    def test_empty_cluster_rejected(self):
        with pytest.raises(EmptyClusterError):
            ClusterLabel(PointIndexSet(np.array([], dtype=np.int64)), 1, 0)


class TestClustersFromBoxes:
    def test_zero_noise_identity(self):
        rng = np.random.default_rng(4)
        cloud, boxes = random_scene(rng)
        got, dropped = clusters_from_boxes(cloud, boxes, NoiseModel(), seed=0)
        kept = [b for i, b in enumerate(boxes) if i not in dropped]
        assert len(got) == len(kept)
        for cluster, box in zip(got, kept):
            assert np.array_equal(
                cluster.points.indices, points_in_box(cloud, box).indices
            )
            assert cluster.class_id == box.class_id

    def test_expansion_only_superset(self):
        rng = np.random.default_rng(6)
        for seed in range(20):
            cloud, boxes = random_scene(rng)
            got, dropped = clusters_from_boxes(
                cloud, boxes, NOISE_PRESETS["noise0"], seed=seed
            )
            kept = [b for i, b in enumerate(boxes) if i not in dropped]
            for cluster, box in zip(got, kept):
                gt_points = points_in_box(cloud, box).as_set()
                assert gt_points <= cluster.points.as_set()

    def test_noise2_parameters(self):
        model = NOISE_PRESETS["noise2"]
        assert model.shift_range == 0.2
        assert model.expand_range == 0.20
        assert model.rotate_range == pytest.approx(math.radians(15.0))

    def test_noise1_parameters(self):
        model = NOISE_PRESETS["noise1"]
        assert model.shift_range == 0.1
        assert model.expand_range == 0.50
        assert model.rotate_range == 0.0

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        cloud, boxes = random_scene(rng)
        a = clusters_from_boxes(cloud, boxes, NOISE_PRESETS["noise2"], seed=42)
        b = clusters_from_boxes(cloud, boxes, NOISE_PRESETS["noise2"], seed=42)
        assert len(a[0]) == len(b[0])
        for ca, cb in zip(a[0], b[0]):
            assert np.array_equal(ca.points.indices, cb.points.indices)

    def test_perturb_ranges(self):
        rng = np.random.default_rng(0)
        model = NoiseModel(shift_range=0.2, expand_range=0.2, rotate_range=0.3)
        box = Box3D(center=(0, 0, 0), dims=(4, 2, 2), yaw=0.0, class_id=1)
        for _ in range(200):
            noisy = model.perturb(box, rng)
            assert abs(noisy.center[0]) <= 0.2 and abs(noisy.center[1]) <= 0.2
            assert noisy.center[2] == 0.0
            for orig, new in zip(box.dims, noisy.dims):
                assert orig <= new <= orig * 1.2
            assert abs(noisy.yaw) <= 0.3


class TestClusterFromClicks:
    cloud = make_cloud(
        [[1, 0.5, 0], [3, 0.5, 0], [0.5, 0.2, 0], [1.5, 0.9, 10.0]]
    )

    def test_parallelogram_completion(self):
        poly = parallelogram_from_clicks(np.array([[0, 0], [2, 0], [0, 1]]))
        assert poly.tolist() == [[0, 0], [2, 0], [2, 1], [0, 1]]

    def test_point_included_and_excluded(self):
        label = cluster_from_clicks(
            self.cloud, np.array([[0, 0], [2, 0], [0, 1]]), class_id=1
        )
        assert 0 in label.points.as_set()  # (1, 0.5)
        assert 1 not in label.points.as_set()  # x = 3 outside

    def test_z_bounds_filter(self):
        label = cluster_from_clicks(
            self.cloud, np.array([[0, 0], [2, 0], [0, 1]]), class_id=1
        )
        assert 3 not in label.points.as_set()  # z = 10 above the scene band

    def test_collinear_clicks_error(self):
        with pytest.raises(CollinearClicksError):
            cluster_from_clicks(
                self.cloud, np.array([[0, 0], [1, 0], [2, 0]]), class_id=1
            )

    def test_empty_cluster_error(self):
        with pytest.raises(EmptyClusterError):
            cluster_from_clicks(
                self.cloud, np.array([[100, 100], [101, 100], [100, 101]]), class_id=1
            )

    def test_swap_second_third_click_invariant(self):
        a = cluster_from_clicks(
            self.cloud, np.array([[0, 0], [2, 0], [0, 1]]), class_id=1
        )
        b = cluster_from_clicks(
            self.cloud, np.array([[0, 0], [0, 1], [2, 0]]), class_id=1
        )
        assert a.points.as_set() == b.points.as_set()


class TestSelectBudget:
    def test_exact_count(self):
        selected, remainder = select_budget(100, 0.1, seed=0)
        assert len(selected) == 10
        assert len(remainder) == 90

    def test_full_ratio(self):
        selected, remainder = select_budget(100, 1.0, seed=0)
        assert selected == list(range(100))
        assert remainder == []

    def test_at_least_one(self):
        selected, _ = select_budget(30, 0.001, seed=0)
        assert len(selected) == 1

    def test_partition_and_determinism(self):
        a = select_budget(57, 0.3, seed=123)
        b = select_budget(57, 0.3, seed=123)
        assert a == b
        selected, remainder = a
        assert sorted(selected + remainder) == list(range(57))

    def test_rare_class_oversampling(self):
        # 2 rare boxes (class 3, weight 5) among 100; inclusion frequency of
        # rare boxes should be about 5x that of common boxes.
        class_ids = [3, 3] + [1] * 98
        weights = {3: 5.0}
        rare_hits = common_hits = 0
        n_trials = 10_000
        for seed in range(n_trials):
            selected, _ = select_budget(
                100, 0.05, seed, class_ids=class_ids, class_weights=weights
            )
            rare_hits += sum(1 for i in selected if i < 2)
            common_hits += sum(1 for i in selected if i >= 2)
        rare_rate = rare_hits / (2 * n_trials)
        common_rate = common_hits / (98 * n_trials)
        assert rare_rate / common_rate == pytest.approx(5.0, rel=0.15)


class TestAnnotationCost:
    def test_mixed(self):
        assert annotation_cost(10, 90, 100).cost == pytest.approx(0.226, abs=1e-15)

    def test_all_boxes(self):
        assert annotation_cost(100, 0, 100).cost == 1.0

    def test_all_clusters(self):
        assert annotation_cost(0, 100, 100).cost == pytest.approx(0.14, abs=1e-15)

    def test_scale_invariance(self):
        assert annotation_cost(10, 90, 100).cost == annotation_cost(20, 180, 200).cost

    def test_zero_total_error(self):
        with pytest.raises(ValueError):
            annotation_cost(0, 0, 0)


class TestPilotCropRegions:
    def test_dims_expanded_by_two_meters(self):
        rng = np.random.default_rng(1)
        cloud, _ = random_scene(rng)
        box = Box3D(center=(0, 0, 0), dims=(4, 2, 1.5), yaw=0.0, class_id=1)
        regions = pilot_crop_regions(cloud, [box], seed=0)
        assert regions[0].perturbed_box.dims == (6.0, 4.0, 3.5)

    def test_shift_magnitude_range(self):
        cloud = make_cloud([[0, 0, 0]])
        box = Box3D(center=(0, 0, 0), dims=(2, 2, 2), yaw=0.0, class_id=1)
        for seed in range(100):
            region = pilot_crop_regions(cloud, [box], seed=seed)[0]
            shift = math.hypot(
                region.perturbed_box.center[0], region.perturbed_box.center[1]
            )
            assert 0.2 <= shift <= 0.5
            dyaw = region.perturbed_box.yaw
            assert abs(dyaw) <= math.pi / 4 + 1e-12

    def test_empty_region_flagged(self):
        cloud = make_cloud([[100, 100, 100]])
        box = Box3D(center=(0, 0, 0), dims=(2, 2, 2), yaw=0.0, class_id=1)
        region = pilot_crop_regions(cloud, [box], seed=3)[0]
        assert region.empty
        assert len(region.points_local) == 0


class TestAugmentCluster:
    cloud = make_cloud([[0, 0, 0], [1, 1, 1]])
    label = ClusterLabel(PointIndexSet(np.array([0, 1])), 2, 7)
    gt = Box3D(center=(0.5, 0.5, 0.5), dims=(2, 1, 1), yaw=0.4, class_id=2)

    def test_center_only(self):
        rec = augment_cluster(self.label, self.gt, "center")
        assert rec.center == self.gt.center
        assert rec.dims is None and rec.yaw is None

    def test_full_equivalent_to_box(self):
        rec = augment_cluster(self.label, self.gt, "center+shape+heading")
        assert rec.center == self.gt.center
        assert rec.dims == self.gt.dims
        assert rec.yaw == self.gt.yaw

    def test_none_is_identity(self):
        rec = augment_cluster(self.label, self.gt, "none")
        assert rec == AugmentedCluster(cluster=self.label)

    def test_unknown_level(self):
        with pytest.raises(ValueError):
            augment_cluster(self.label, self.gt, "shape")
