import numpy as np
import pytest

from lidarlabels.geometry import PointCloud
from lidarlabels.masks import (
    CameraModel,
    InstanceMasks2D,
    PointLabeling,
    labeling_to_clusters,
    lift_masks,
    mask_semantic_classes,
    perturb_calibration,
    project_points,
    sar_refine,
)
from lidarlabels.metrics import panoptic_eval

from synth import instance_scene, render_masks, side_camera, split_labeling


def identity_camera(width=100, height=100, fx=100.0, cx=50.0, cy=50.0):
    return CameraModel(
        fx=fx,
        fy=fx,
        cx=cx,
        cy=cy,
        rotation=np.eye(3),
        translation=np.zeros(3),
        width=width,
        height=height,
    )


class TestProjectPoints:
    def test_principal_axis(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 5.0]]))
        in_view, pix, depth = project_points(cloud, identity_camera())
        assert in_view[0]
        assert pix[0].tolist() == [50.0, 50.0]
        assert depth[0] == 5.0

    def test_pinhole_arithmetic(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 5.0]]))
        _, pix, _ = project_points(cloud, identity_camera())
        assert pix[0].tolist() == [70.0, 50.0]

    def test_behind_camera(self):
        cloud = PointCloud(np.array([[0.0, 0.0, -1.0]]))
        in_view, _, _ = project_points(cloud, identity_camera())
        assert not in_view[0]

    def test_outside_image(self):
        cloud = PointCloud(np.array([[100.0, 0.0, 5.0]]))
        in_view, _, _ = project_points(cloud, identity_camera())
        assert not in_view[0]


class TestLiftMasks:
    def make_masks(self):
        inst = np.zeros((100, 100), dtype=np.uint32)
        cls = np.zeros((100, 100), dtype=np.uint16)
        inst[40:60, 40:60] = 1
        cls[40:60, 40:60] = 1
        return InstanceMasks2D(inst, cls)

    def test_point_inherits_mask(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 5.0]]))
        labeling = lift_masks(cloud, [identity_camera()], [self.make_masks()])
        assert labeling.mask_ids[0] >= 0
        assert labeling.class_ids[0] == 1

    def test_majority_pixel_class(self):
        inst = np.zeros((10, 10), dtype=np.uint32)
        cls = np.zeros((10, 10), dtype=np.uint16)
        inst[0, :13 % 10] = 1  # noqa: avoid confusion; painted below
        inst[:, :] = 0
        inst[0, 0:10] = 1
        inst[1, 0:3] = 1
        cls[0, 0:10] = 1  # 10 pixels of class 1 (car)
        cls[1, 0:3] = 2  # 3 pixels of class 2
        classes = mask_semantic_classes(InstanceMasks2D(inst, cls))
        assert classes[1] == 1

    def test_out_of_view_is_background(self):
        cloud = PointCloud(np.array([[0.0, 0.0, -5.0]]))
        labeling = lift_masks(cloud, [identity_camera()], [self.make_masks()])
        assert labeling.mask_ids[0] == -1
        assert labeling.class_ids[0] == 0

    def test_nearest_camera_wins(self):
        # Two identical cameras; the second is shifted backwards so depth is
        # larger, and carries a different mask. The first camera's labeling
        # must win.
        cloud = PointCloud(np.array([[0.0, 0.0, 5.0]]))
        cam_near = identity_camera()
        cam_far = CameraModel(
            fx=100.0, fy=100.0, cx=50.0, cy=50.0,
            rotation=np.eye(3), translation=np.array([0.0, 0.0, 3.0]),
            width=100, height=100,
        )
        masks_near = self.make_masks()
        inst = np.zeros((100, 100), dtype=np.uint32)
        cls = np.zeros((100, 100), dtype=np.uint16)
        inst[:, :] = 2
        cls[:, :] = 2
        masks_far = InstanceMasks2D(inst, cls)
        labeling = lift_masks(cloud, [cam_far, cam_near], [masks_far, masks_near])
        assert labeling.class_ids[0] == 1

    def test_dimension_mismatch(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 5.0]]))
        bad = InstanceMasks2D(
            np.zeros((50, 100), dtype=np.uint32), np.zeros((50, 100), dtype=np.uint16)
        )
        with pytest.raises(ValueError, match="dimensions"):
            lift_masks(cloud, [identity_camera()], [bad])

    def test_conservation(self):
        rng = np.random.default_rng(17)
        cloud, gts = instance_scene(rng)
        camera = side_camera()
        masks = render_masks(cloud, gts, camera)
        labeling = lift_masks(cloud, [camera], [masks])
        in_view, pix, _ = project_points(cloud, camera)
        expected = 0
        for i in range(len(cloud)):
            if in_view[i]:
                col, row = int(np.floor(pix[i, 0])), int(np.floor(pix[i, 1]))
                if masks.instance_map[row, col] != 0:
                    expected += 1
        assert int(np.sum(labeling.mask_ids >= 0)) == expected


class TestSarRefine:
    radii = {1: 0.6, 2: 0.6, 3: 0.6}

    def test_identity_single_mask_single_component(self):
        rng = np.random.default_rng(2)
        cloud, gts = instance_scene(rng, n_instances=1)
        labeling = split_labeling(cloud, gts)
        refined, report = sar_refine(cloud, labeling, radii=self.radii)
        assert np.array_equal(refined.class_ids, labeling.class_ids)
        assert len(np.unique(refined.mask_ids[refined.mask_ids >= 0])) == 1
        assert report["splits"] == 0 and report["merges"] == 0

    def test_split_keeps_majority_component(self):
        # One mask with 4 points in one far component and 2 in another.
        pts = np.vstack(
            [
                np.array([[0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0]]),
                np.array([[20, 0, 0], [20.1, 0, 0]]),
            ]
        ).astype(float)
        cloud = PointCloud(pts)
        labeling = PointLabeling(
            np.zeros(6, dtype=np.int64), np.ones(6, dtype=np.int64)
        )
        refined, report = sar_refine(cloud, labeling, radii=self.radii)
        assert report["splits"] == 1
        assert report["background_points"] == 2
        assert list(refined.mask_ids[:4]) == [0, 0, 0, 0]
        assert list(refined.mask_ids[4:]) == [-1, -1]
        assert list(refined.class_ids[4:]) == [0, 0]

    def test_merge_masks_in_component(self):
        # Two masks of 4 and 1 points inside one spatial component.
        pts = np.array(
            [[0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0], [0.4, 0, 0]],
            dtype=float,
        )
        cloud = PointCloud(pts)
        labeling = PointLabeling(
            np.array([0, 0, 0, 0, 1], dtype=np.int64),
            np.ones(5, dtype=np.int64),
        )
        refined, report = sar_refine(cloud, labeling, radii=self.radii)
        assert report["merges"] == 1
        assert len(set(refined.mask_ids.tolist())) == 1

    def test_over_segmented_scene_invariants(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            cloud, gts = instance_scene(rng, n_instances=5, n_classes=1)
            labeling = split_labeling(
                cloud, gts, merge_pairs=[(0, 2)], split_instances=(1, 3)
            )
            refined, _ = sar_refine(cloud, labeling, radii=self.radii)
            self.assert_components_match_instances(cloud, refined)

    def assert_components_match_instances(self, cloud, refined):
        from lidarlabels.geometry import PointIndexSet, connected_components

        fg = refined.foreground()
        for cls in np.unique(refined.class_ids[fg]):
            cls_idx = fg[refined.class_ids[fg] == cls]
            comp = connected_components(
                cloud, PointIndexSet(cls_idx), self.radii.get(int(cls), 0.5)
            )
            # each component hosts exactly one instance and vice versa
            pairs = {(comp[int(i)], int(refined.mask_ids[i])) for i in cls_idx}
            comps = {c for c, _ in pairs}
            insts = {m for _, m in pairs}
            assert len(pairs) == len(comps) == len(insts)

    def test_never_creates_foreground(self):
        rng = np.random.default_rng(6)
        cloud, gts = instance_scene(rng, n_instances=4)
        labeling = split_labeling(cloud, gts, split_instances=(0,))
        refined, _ = sar_refine(cloud, labeling, radii=self.radii)
        assert set(refined.foreground()) <= set(labeling.foreground())

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            cloud, gts = instance_scene(rng, n_instances=6, n_classes=2)
            labeling = split_labeling(
                cloud, gts, merge_pairs=[(1, 4)], split_instances=(0, 5)
            )
            once, _ = sar_refine(cloud, labeling, radii=self.radii)
            twice, report = sar_refine(cloud, once, radii=self.radii)
            assert np.array_equal(once.mask_ids, twice.mask_ids)
            assert np.array_equal(once.class_ids, twice.class_ids)
            assert report["splits"] == 0

    def test_empty_labeling(self):
        cloud = PointCloud(np.zeros((3, 3)))
        labeling = PointLabeling(
            np.full(3, -1, dtype=np.int64), np.zeros(3, dtype=np.int64)
        )
        refined, _ = sar_refine(cloud, labeling)
        assert len(refined.foreground()) == 0


class TestPerturbCalibration:
    def test_zero_noise_unchanged(self):
        cams = [side_camera()]
        out = perturb_calibration(cams, 0.0, seed=1)
        assert np.array_equal(out[0].translation, cams[0].translation)

    def test_offsets_within_range(self):
        cams = [side_camera(), identity_camera()]
        for seed in range(50):
            out = perturb_calibration(cams, 5.0, seed=seed)
            for before, after in zip(cams, out):
                offset = after.translation - before.translation
                assert np.all(np.abs(offset) <= 0.05)

    def test_deterministic(self):
        cams = [side_camera()]
        a = perturb_calibration(cams, 5.0, seed=7)
        b = perturb_calibration(cams, 5.0, seed=7)
        assert np.array_equal(a[0].translation, b[0].translation)


class TestLabelingToClusters:
    def test_two_instances(self):
        labeling = PointLabeling(
            np.array([0, 0, 1, 1, 1, -1], dtype=np.int64),
            np.array([1, 1, 2, 2, 2, 0], dtype=np.int64),
        )
        clusters = labeling_to_clusters(labeling)
        assert [len(c.points) for c in clusters] == [2, 3]
        assert [c.class_id for c in clusters] == [1, 2]
        assert [c.instance_id for c in clusters] == [0, 1]

    def test_all_background(self):
        labeling = PointLabeling(
            np.full(4, -1, dtype=np.int64), np.zeros(4, dtype=np.int64)
        )
        assert labeling_to_clusters(labeling) == []


class TestFullPipelinePerfectInputs:
    def test_reproduces_gt_exactly(self):
        rng = np.random.default_rng(10)
        cloud, gts = instance_scene(rng, n_instances=5)
        camera = side_camera()
        masks = render_masks(cloud, gts, camera)
        labeling = lift_masks(cloud, [camera], [masks])
        refined, _ = sar_refine(cloud, labeling, radii={1: 0.6, 2: 0.6, 3: 0.6})
        clusters = labeling_to_clusters(refined)
        report = panoptic_eval(clusters, gts)
        assert report.pq == 1.0
        got = sorted(tuple(c.points.indices) for c in clusters)
        want = sorted(tuple(g.points.indices) for g in gts)
        assert got == want
