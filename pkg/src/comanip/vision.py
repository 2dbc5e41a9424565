"""Synthetic detection-camera pipeline.

Point clouds are segmented by a RANSAC plane fit (with a least-squares
refit of the consensus set), the remaining points are grouped by
single-linkage Euclidean clustering, and each cluster is recognized by a
linear SVM over simple geometric features. Object poses are the cluster
centroids, re-expressed in the robot base frame through the camera
extrinsics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from comanip.geometry import FrameTransform, Pose, apply_transform

LABEL_CAP = "cap"
LABEL_MARKER = "marker"
LABEL_UNKNOWN = "unknown"

UNKNOWN_MARGIN = 0.1

# desk-scale object models used by the synthetic scenes
CAP_RADIUS = 0.008
CAP_HEIGHT = 0.025
MARKER_RADIUS = 0.006
MARKER_HEIGHT = 0.120


class TooFewPointsError(ValueError):
    pass


class DegenerateCloudError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) m
    frame: str = "detect_cam"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise TooFewPointsError("empty cloud has no centroid")
        return self.points.mean(axis=0)

    def to_json(self) -> str:
        return json.dumps({"frame": self.frame, "points": self.points.tolist()})

    @staticmethod
    def from_json(text: str) -> "PointCloud":
        d = json.loads(text)
        return PointCloud(np.array(d["points"], dtype=float), d.get("frame", "detect_cam"))


def write_ply(cloud: PointCloud, path: str | Path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment frame {cloud.frame}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    lines += [f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}" for p in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path: str | Path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError("not an ascii PLY file")
    frame = "detect_cam"
    n = 0
    body_at = 0
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if tok[:2] == ["comment", "frame"]:
            frame = tok[2]
        elif tok[:2] == ["element", "vertex"]:
            n = int(tok[2])
        elif tok[0] == "end_header":
            body_at = i + 1
            break
    pts = np.array([[float(v) for v in lines[j].split()[:3]] for j in range(body_at, body_at + n)])
    return PointCloud(pts.reshape(-1, 3), frame)


@dataclass
class PlaneModel:
    normal: np.ndarray  # unit
    offset: float  # plane: normal . p = offset
    inlier_indices: np.ndarray

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        self.inlier_indices = np.asarray(self.inlier_indices, dtype=int)

    def distances(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal - self.offset


def _fit_plane_lsq(points: np.ndarray) -> tuple[np.ndarray, float]:
    c = points.mean(axis=0)
    _, s, vt = np.linalg.svd(points - c, full_matrices=False)
    if s.size < 3 or s[1] < 1e-12:  # rank < 2: collinear
        raise DegenerateCloudError("points do not span a plane")
    normal = vt[2]
    # canonical sign: largest-magnitude component positive
    k = int(np.argmax(np.abs(normal)))
    if normal[k] < 0:
        normal = -normal
    return normal, float(normal @ c)


def ransac_plane(cloud: PointCloud, threshold: float, iterations: int = 500, seed: int = 0) -> PlaneModel:
    """Consensus plane over random point triples, refit on the inlier set."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    pts = cloud.points
    n = pts.shape[0]
    if n < 3:
        raise TooFewPointsError(f"need at least 3 points, got {n}")
    rng = np.random.default_rng(seed)
    # sample all triples up front; rejection keeps the draw deterministic
    triples = np.empty((iterations, 3), dtype=np.intp)
    for r in range(iterations):
        triples[r] = rng.choice(n, size=3, replace=False)
    a, b, c = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]
    normals = np.cross(b - a, c - a)
    lengths = np.linalg.norm(normals, axis=1)
    valid = lengths > 1e-12
    if not np.any(valid):
        raise DegenerateCloudError("all sampled triples were collinear")
    normals = normals[valid] / lengths[valid, None]
    offsets = np.einsum("ij,ij->i", normals, a[valid])
    counts = np.count_nonzero(np.abs(pts @ normals.T - offsets) <= threshold, axis=0)
    best_idx = int(np.argmax(counts))  # first max: earliest sampled wins ties
    best_count = int(counts[best_idx])
    assert best_count >= counts.max()  # consensus never regresses
    best = (normals[best_idx], float(offsets[best_idx]))

    inliers = np.nonzero(np.abs(pts @ best[0] - best[1]) <= threshold)[0]
    normal, offset = _fit_plane_lsq(pts[inliers])
    inliers = np.nonzero(np.abs(pts @ normal - offset) <= threshold)[0]
    return PlaneModel(normal, offset, inliers)


def cluster_objects(cloud: PointCloud, min_points: int = 30, radius: float = 0.03) -> list[PointCloud]:
    """Single-linkage Euclidean components; small components are dropped.

    Deterministic order: descending size, ties broken by lowest centroid x.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = cloud.points
    n = pts.shape[0]
    if n == 0:
        return []
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    if pairs.size:
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        adj = coo_matrix((n, n))
    _, labels = connected_components(adj, directed=False)
    clusters = []
    for lbl in range(labels.max() + 1):
        idx = np.nonzero(labels == lbl)[0]
        if idx.size >= min_points:
            clusters.append(PointCloud(pts[idx], cloud.frame))
    clusters.sort(key=lambda c: (-len(c), c.centroid()[0]))
    return clusters


@dataclass
class ClusterFeatures:
    bbox_dims: np.ndarray  # axis-aligned extents, m
    point_count: int
    height_above_plane: float  # centroid distance along the plane normal, m
    mean_intensity_proxy: float  # mean point distance to centroid (size proxy)

    def __post_init__(self):
        self.bbox_dims = np.asarray(self.bbox_dims, dtype=float).reshape(3)
        if np.any(self.bbox_dims < 0):
            raise ValueError("bbox dims must be non-negative")

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.bbox_dims, [float(self.point_count), self.height_above_plane, self.mean_intensity_proxy]]
        )


FEATURE_DIM = 6


def extract_features(cluster: PointCloud, plane: PlaneModel | None = None) -> ClusterFeatures:
    if len(cluster) == 0:
        raise TooFewPointsError("cannot featurize an empty cluster")
    pts = cluster.points
    bbox = pts.max(axis=0) - pts.min(axis=0)
    c = cluster.centroid()
    height = float(plane.distances(c[None, :])[0]) if plane is not None else 0.0
    spread = float(np.mean(np.linalg.norm(pts - c, axis=1)))
    return ClusterFeatures(bbox, len(cluster), height, spread)


@dataclass
class ClassificationResult:
    label: str
    score: float
    uncertain: bool


@dataclass
class SvmModel:
    """Linear SVM with stored feature standardization.

    Trained by plain subgradient descent on the hinge loss: fixed epoch
    count, fixed step, seed-controlled shuffle, so two fits on the same
    data are bit-identical.
    """

    weights: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    bias: float = 0.0
    feature_means: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    feature_stds: np.ndarray = field(default_factory=lambda: np.ones(FEATURE_DIM))
    epochs: int = 200
    learning_rate: float = 0.01
    l2: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.feature_means = np.asarray(self.feature_means, dtype=float).reshape(-1)
        self.feature_stds = np.asarray(self.feature_stds, dtype=float).reshape(-1)
        if np.any(self.feature_stds <= 0):
            raise ValueError("feature stds must be positive")

    def get_params(self) -> dict:
        return {"epochs": self.epochs, "learning_rate": self.learning_rate, "l2": self.l2, "seed": self.seed}

    def scale(self, X: np.ndarray) -> np.ndarray:
        return (X - self.feature_means) / self.feature_stds

    def fit(self, X: np.ndarray, y: np.ndarray) -> "SvmModel":
        """X: (N, f) raw features; y: +1 for cap, -1 for marker."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        self.feature_means = X.mean(axis=0)
        stds = X.std(axis=0)
        self.feature_stds = np.where(stds > 1e-12, stds, 1.0)
        Xs = self.scale(X)
        n, f = Xs.shape
        w = np.zeros(f)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            for i in rng.permutation(n):
                margin = y[i] * (w @ Xs[i] + b)
                if margin < 1.0:
                    w -= self.learning_rate * (self.l2 * w - y[i] * Xs[i])
                    b += self.learning_rate * y[i]
                else:
                    w -= self.learning_rate * self.l2 * w
        self.weights = w
        self.bias = float(b)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.scale(np.asarray(X, dtype=float)) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_function(X)
        return np.where(scores >= 0, 1.0, -1.0)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "training": self.get_params(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def from_dict(d: dict) -> "SvmModel":
        t = d.get("training", {})
        return SvmModel(
            np.array(d["weights"], dtype=float),
            float(d["bias"]),
            np.array(d["feature_means"], dtype=float),
            np.array(d["feature_stds"], dtype=float),
            epochs=int(t.get("epochs", 200)),
            learning_rate=float(t.get("learning_rate", 0.01)),
            l2=float(t.get("l2", 1e-3)),
            seed=int(t.get("seed", 0)),
        )

    @staticmethod
    def load(path: str | Path) -> "SvmModel":
        return SvmModel.from_dict(json.loads(Path(path).read_text()))


def classify(svm: SvmModel, f: ClusterFeatures) -> ClassificationResult:
    """Signed score over standardized features; near-zero scores are
    additionally flagged uncertain (published label becomes unknown)."""
    v = f.vector()
    if not np.all(np.isfinite(v)):
        raise ValueError("feature vector must be finite")
    score = float(svm.decision_function(v[None, :])[0])
    label = LABEL_CAP if score >= 0 else LABEL_MARKER
    return ClassificationResult(label, score, abs(score) < UNKNOWN_MARGIN)


@dataclass
class ObjectHypothesis:
    label: str
    score: float
    centroid: np.ndarray  # camera frame
    pose_base: Pose

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=float).reshape(3)


def estimate_pose(cluster: PointCloud, extrinsics: FrameTransform) -> ObjectHypothesis:
    """Centroid pose: exact arithmetic mean, identity orientation in base."""
    c = cluster.centroid()
    p_base = apply_transform(extrinsics, c, frame=cluster.frame)
    return ObjectHypothesis(LABEL_UNKNOWN, 0.0, c, Pose(p_base))


def detect_objects(
    cloud: PointCloud,
    svm: SvmModel,
    extrinsics: FrameTransform,
    *,
    plane_threshold: float = 0.005,
    ransac_iterations: int = 500,
    seed: int = 0,
    cluster_radius: float = 0.03,
    min_points: int = 30,
) -> list[ObjectHypothesis]:
    """Full pipeline: plane removal, clustering, recognition, centroid pose."""
    plane = ransac_plane(cloud, plane_threshold, ransac_iterations, seed)
    mask = np.ones(len(cloud), dtype=bool)
    mask[plane.inlier_indices] = False
    rest = PointCloud(cloud.points[mask], cloud.frame)
    out = []
    for cluster in cluster_objects(rest, min_points, cluster_radius):
        result = classify(svm, extract_features(cluster, plane))
        hyp = estimate_pose(cluster, extrinsics)
        hyp.label = LABEL_UNKNOWN if result.uncertain else result.label
        hyp.score = result.score
        out.append(hyp)
    return out


def split_cluster_at_height(
    cluster: PointCloud, plane: PlaneModel, height_from_top: float
) -> tuple[PointCloud, PointCloud]:
    """Split a cluster at a fixed depth below its topmost point along the
    plane normal; used to separate a cap sitting on a taller body."""
    d = plane.distances(cluster.points)
    cut = d.max() - height_from_top
    top = cluster.points[d > cut]
    rest = cluster.points[d <= cut]
    return PointCloud(top, cluster.frame), PointCloud(rest, cluster.frame)


# --- synthetic scenes ---


def _cylinder_points(rng, center, radius, height, n_points):
    # area-weighted side/end-disk split keeps the sample centroid unbiased
    area_side = 2 * np.pi * radius * height
    area_disk = np.pi * radius**2
    n_disk = int(round(n_points * area_disk / (area_side + 2 * area_disk)))
    n_side = n_points - 2 * n_disk
    theta = rng.uniform(0, 2 * np.pi, n_side)
    z = rng.uniform(-height / 2, height / 2, n_side)
    side = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])
    parts = [side]
    for zc in (height / 2, -height / 2):
        theta_d = rng.uniform(0, 2 * np.pi, n_disk)
        r_d = radius * np.sqrt(rng.uniform(0, 1, n_disk))
        parts.append(np.column_stack([r_d * np.cos(theta_d), r_d * np.sin(theta_d), np.full(n_disk, zc)]))
    return np.vstack(parts) + np.asarray(center, dtype=float)


@dataclass
class SceneTruth:
    plane_normal: np.ndarray
    plane_offset: float
    cap_centroid: np.ndarray  # base frame
    marker_centroid: np.ndarray  # base frame


def synthetic_tabletop_scene(
    seed: int,
    extrinsics: FrameTransform | None = None,
    *,
    cap_center=(0.55, 0.10, 0.0425),
    marker_center=(0.55, -0.12, 0.090),
    plane_z: float = 0.0,
    noise_sigma: float = 0.002,
    n_plane: int = 600,
    n_outliers: int = 50,
    points_per_object: int = 300,
) -> tuple[PointCloud, SceneTruth]:
    """Tabletop plane plus a detached cap and marker, in the camera frame.

    Objects stand clear of the plane-threshold band (the co-manipulation
    scene has them held in the air). Ground truth is reported in the base
    frame; `extrinsics` maps camera to base (identity when omitted).
    """
    rng = np.random.default_rng(seed)
    plane_pts = np.column_stack(
        [rng.uniform(0.3, 0.9, n_plane), rng.uniform(-0.35, 0.35, n_plane), np.full(n_plane, plane_z)]
    )
    cap_pts = _cylinder_points(rng, cap_center, CAP_RADIUS, CAP_HEIGHT, points_per_object)
    marker_pts = _cylinder_points(rng, marker_center, MARKER_RADIUS, MARKER_HEIGHT, points_per_object)
    outliers = np.column_stack(
        [rng.uniform(0.3, 0.9, n_outliers), rng.uniform(-0.35, 0.35, n_outliers), rng.uniform(0.05, 0.5, n_outliers)]
    )
    pts_base = np.vstack([plane_pts, cap_pts, marker_pts, outliers])
    pts_base += rng.normal(scale=noise_sigma, size=pts_base.shape)

    if extrinsics is None:
        extrinsics = FrameTransform.identity("detect_cam")
    inv = extrinsics.inverse()
    pts_cam = np.array([apply_transform(inv, p) for p in pts_base]) if len(pts_base) else pts_base
    truth = SceneTruth(
        np.array([0.0, 0.0, 1.0]), plane_z, np.asarray(cap_center, float), np.asarray(marker_center, float)
    )
    return PointCloud(pts_cam, extrinsics.from_frame), truth


def svm_training_set(n_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Feature vectors from randomized single-object synthetic clusters."""
    rng = np.random.default_rng(seed)
    X = []
    y = []
    plane = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0, np.zeros(0, dtype=int))
    for label, radius, height in (
        (1.0, CAP_RADIUS, CAP_HEIGHT),
        (-1.0, MARKER_RADIUS, MARKER_HEIGHT),
    ):
        for _ in range(n_per_class):
            center = np.array(
                [rng.uniform(0.3, 0.9), rng.uniform(-0.3, 0.3), rng.uniform(0.0, 0.5) + height / 2]
            )
            n_pts = int(rng.integers(150, 360))
            pts = _cylinder_points(rng, center, radius, height, n_pts)
            pts += rng.normal(scale=0.002, size=pts.shape)
            if rng.uniform() < 0.3:
                # clusters occasionally chain in a few stray scene points
                n_stray = int(rng.integers(1, 4))
                anchor = pts[rng.integers(0, len(pts), n_stray)]
                pts = np.vstack([pts, anchor + rng.uniform(-0.025, 0.025, (n_stray, 3))])
            X.append(extract_features(PointCloud(pts), plane).vector())
            y.append(label)
    X = np.array(X)
    y = np.array(y)
    order = np.random.default_rng(seed + 1).permutation(len(y))
    return X[order], y[order]
