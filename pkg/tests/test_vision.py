import numpy as np
import pytest

from comanip.geometry import FrameTransform, quat_from_axis_angle
from comanip.vision import (
    CAP_HEIGHT,
    LABEL_CAP,
    LABEL_MARKER,
    LABEL_UNKNOWN,
    ClusterFeatures,
    PlaneModel,
    PointCloud,
    SvmModel,
    TooFewPointsError,
    classify,
    cluster_objects,
    detect_objects,
    estimate_pose,
    extract_features,
    ransac_plane,
    read_ply,
    split_cluster_at_height,
    svm_training_set,
    synthetic_tabletop_scene,
    write_ply,
)


def plane_with_outliers(rng, n_plane=200, n_out=50):
    plane = np.column_stack([rng.uniform(-1, 1, n_plane), rng.uniform(-1, 1, n_plane), np.zeros(n_plane)])
    out = np.column_stack([rng.uniform(-1, 1, n_out), rng.uniform(-1, 1, n_out), rng.uniform(0.05, 0.5, n_out)])
    return np.vstack([plane, out])


def test_ransac_exact_plane():
    rng = np.random.default_rng(0)
    cloud = PointCloud(plane_with_outliers(rng))
    model = ransac_plane(cloud, threshold=0.005, iterations=500, seed=1)
    assert abs(abs(model.normal[2]) - 1.0) < 1e-6
    assert set(model.inlier_indices) == set(range(200))


def test_ransac_empty_cloud():
    with pytest.raises(TooFewPointsError):
        ransac_plane(PointCloud(np.zeros((0, 3))), threshold=0.005)


def test_ransac_collinear_degenerate():
    pts = np.outer(np.linspace(0, 1, 20), np.array([1.0, 2.0, 3.0]))
    from comanip.vision import DegenerateCloudError

    with pytest.raises(DegenerateCloudError):
        ransac_plane(PointCloud(pts), threshold=0.005, iterations=50, seed=0)


def test_ransac_noisy_normal_accuracy():
    angles = []
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        pts = plane_with_outliers(rng)
        pts[:200] += rng.normal(scale=0.002, size=(200, 3))
        model = ransac_plane(PointCloud(pts), threshold=0.005, iterations=300, seed=seed)
        cosang = abs(model.normal @ np.array([0, 0, 1.0]))
        angles.append(np.degrees(np.arccos(min(cosang, 1.0))))
    assert np.percentile(angles, 95) < 2.0


def test_ransac_deterministic():
    rng = np.random.default_rng(3)
    cloud = PointCloud(plane_with_outliers(rng))
    a = ransac_plane(cloud, 0.005, 200, seed=7)
    b = ransac_plane(cloud, 0.005, 200, seed=7)
    assert np.array_equal(a.normal, b.normal)
    assert np.array_equal(a.inlier_indices, b.inlier_indices)


def test_cluster_two_bodies():
    rng = np.random.default_rng(4)
    a = rng.uniform(-0.02, 0.02, (80, 3))
    b = rng.uniform(-0.02, 0.02, (60, 3)) + np.array([0.3, 0, 0])
    clusters = cluster_objects(PointCloud(np.vstack([a, b])), min_points=30, radius=0.05)
    assert len(clusters) == 2
    assert len(clusters[0]) == 80  # descending size
    assert len(clusters[1]) == 60


def test_cluster_below_min_points():
    clusters = cluster_objects(PointCloud(np.zeros((1, 3))), min_points=10, radius=0.05)
    assert clusters == []


def test_cluster_duplicates_merge():
    pts = np.tile(np.array([[0.1, 0.2, 0.3]]), (40, 1))
    clusters = cluster_objects(PointCloud(np.vstack([pts, pts])), min_points=30, radius=0.05)
    assert len(clusters) == 1
    assert len(clusters[0]) == 80


def test_cluster_tie_break_by_centroid_x():
    rng = np.random.default_rng(5)
    a = rng.uniform(-0.01, 0.01, (40, 3)) + np.array([0.9, 0, 0])
    b = rng.uniform(-0.01, 0.01, (40, 3)) + np.array([0.2, 0, 0])
    clusters = cluster_objects(PointCloud(np.vstack([a, b])), min_points=30, radius=0.05)
    assert len(clusters) == 2
    assert clusters[0].centroid()[0] < clusters[1].centroid()[0]


def test_classify_boundary_is_cap_and_unknown():
    svm = SvmModel(weights=np.zeros(6), bias=0.0)
    f = ClusterFeatures(np.array([0.01, 0.01, 0.02]), 100, 0.01, 0.005)
    result = classify(svm, f)
    assert result.score == 0.0
    assert result.label == LABEL_CAP
    assert result.uncertain


def test_svm_training_accuracy():
    X_train, y_train = svm_training_set(100, seed=11)  # 200 samples
    X_test, y_test = svm_training_set(50, seed=999)  # independent 100 samples
    svm = SvmModel(seed=3).fit(X_train, y_train)
    acc = float(np.mean(svm.predict(X_test) == y_test))
    assert acc >= 0.95


def test_svm_fit_deterministic():
    X, y = svm_training_set(40, seed=2)
    a = SvmModel(seed=5).fit(X, y)
    b = SvmModel(seed=5).fit(X, y)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.bias == b.bias


def test_classify_invariant_to_joint_rescale():
    X, y = svm_training_set(40, seed=6)
    svm = SvmModel(seed=1).fit(X, y)
    scaled = SvmModel(
        svm.weights * 7.3, svm.bias * 7.3, svm.feature_means, svm.feature_stds
    )
    f = ClusterFeatures(np.array([0.015, 0.015, 0.024]), 150, 0.012, 0.008)
    assert classify(svm, f).label == classify(scaled, f).label


def test_classify_scaled_scene_same_label():
    rng = np.random.default_rng(8)
    X, y = svm_training_set(100, seed=12)
    svm = SvmModel(seed=0).fit(X, y)
    plane = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0, np.zeros(0, dtype=int))
    from comanip.vision import _cylinder_points

    pts = _cylinder_points(rng, [0.5, 0.0, 0.0125], 0.008, 0.025, 180)
    base_label = classify(svm, extract_features(PointCloud(pts), plane)).label
    scaled_label = classify(svm, extract_features(PointCloud(pts * 2.0), plane)).label
    assert base_label == LABEL_CAP
    assert scaled_label == base_label


def test_estimate_pose_symmetric_cube():
    c = np.array([0.1, 0.2, 0.3])
    g = np.linspace(-0.05, 0.05, 4)
    pts = np.array([[x, y, z] for x in g for y in g for z in g]) + c
    hyp = estimate_pose(PointCloud(pts), FrameTransform.identity("detect_cam"))
    assert np.allclose(hyp.centroid, c, atol=1e-12)
    assert np.allclose(hyp.pose_base.position, c, atol=1e-12)


def test_estimate_pose_known_transform():
    t = FrameTransform(
        quat_from_axis_angle([0, 0, 1], np.pi / 2), np.array([1.0, 0, 0]), "detect_cam", "base"
    )
    pts = np.tile(np.array([[0.1, 0.0, 0.0]]), (10, 1))
    hyp = estimate_pose(PointCloud(pts), t)
    assert np.allclose(hyp.pose_base.position, [1.0, 0.1, 0.0], atol=1e-12)


def test_estimate_pose_empty_cluster():
    with pytest.raises(TooFewPointsError):
        estimate_pose(PointCloud(np.zeros((0, 3))), FrameTransform.identity("detect_cam"))


def test_centroid_commutes_with_rigid_transform():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pts = rng.normal(size=(50, 3))
        q = rng.normal(size=4)
        t = FrameTransform(q / np.linalg.norm(q), rng.normal(size=3), "detect_cam", "base")
        from comanip.geometry import apply_transform

        moved = np.array([apply_transform(t, p) for p in pts])
        c1 = PointCloud(moved).centroid()
        c2 = apply_transform(t, PointCloud(pts).centroid())
        assert np.max(np.abs(c1 - c2)) < 1e-10


def test_full_pipeline_on_synthetic_scene():
    cloud, truth = synthetic_tabletop_scene(seed=21)
    X, y = svm_training_set(100, seed=13)
    svm = SvmModel(seed=2).fit(X, y)
    hyps = detect_objects(cloud, svm, FrameTransform.identity("detect_cam"), seed=21)
    labels = {h.label for h in hyps}
    assert LABEL_CAP in labels and LABEL_MARKER in labels
    cap = next(h for h in hyps if h.label == LABEL_CAP)
    marker = next(h for h in hyps if h.label == LABEL_MARKER)
    assert np.linalg.norm(cap.pose_base.position - truth.cap_centroid) < 0.005
    assert np.linalg.norm(marker.pose_base.position - truth.marker_centroid) < 0.005


def test_split_cluster_at_height():
    rng = np.random.default_rng(10)
    plane = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0, np.zeros(0, dtype=int))
    low = np.column_stack([rng.uniform(0, 0.01, 100), rng.uniform(0, 0.01, 100), rng.uniform(0.0, 0.10, 100)])
    high = np.column_stack([rng.uniform(0, 0.01, 50), rng.uniform(0, 0.01, 50), rng.uniform(0.10, 0.125, 50)])
    top, rest = split_cluster_at_height(PointCloud(np.vstack([low, high])), plane, CAP_HEIGHT)
    assert len(top) == 50
    assert len(rest) == 100


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    cloud = PointCloud(rng.normal(size=(30, 3)), frame="detect_cam")
    path = tmp_path / "scene.ply"
    write_ply(cloud, path)
    loaded = read_ply(path)
    assert loaded.frame == "detect_cam"
    assert np.max(np.abs(loaded.points - cloud.points)) < 1e-6


def test_cloud_json_round_trip():
    rng = np.random.default_rng(12)
    cloud = PointCloud(rng.normal(size=(10, 3)), frame="cam2")
    again = PointCloud.from_json(cloud.to_json())
    assert again.frame == "cam2"
    assert np.array_equal(again.points, cloud.points)


def test_svm_json_round_trip(tmp_path):
    X, y = svm_training_set(30, seed=14)
    svm = SvmModel(seed=4).fit(X, y)
    path = tmp_path / "svm.json"
    svm.save(path)
    loaded = SvmModel.load(path)
    assert np.array_equal(loaded.weights, svm.weights)
    assert loaded.bias == svm.bias
    assert np.array_equal(loaded.feature_stds, svm.feature_stds)
