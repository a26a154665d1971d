"""Turn steady calibration data into per-node signal bases.

Pipeline: pool steady frames, cluster hand positions (k-means seeded on
the bounding-box surface), keep data near each centroid, run PCA on the
joint angles, reduce to a 1- or 2-direction signal basis under the 80%
explained-variance rule, record projection ranges, and align signs across
nodes so the interpolated field is continuous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import capture
from .capture import CalibrationSession, Frame

ONE_PC = "OnePC"
TWO_PC = "TwoPC"

DEFAULT_VARIANCE_THRESHOLD = 0.80
DEFAULT_NEIGHBORHOOD_RADIUS = 0.05  # m


class IdentifyError(RuntimeError):
    pass


@dataclass(frozen=True)
class IdentifyConfig:
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    neighborhood_radius: float = DEFAULT_NEIGHBORHOOD_RADIUS
    v_lin_max: float = capture.DEFAULT_LINEAR_THRESHOLD
    v_ang_max: float = capture.DEFAULT_ANGULAR_THRESHOLD
    min_segment: int = capture.DEFAULT_MIN_SEGMENT
    smooth_window: int = capture.DEFAULT_SMOOTH_WINDOW
    kmeans_max_iter: int = 100

    def to_json_dict(self) -> dict:
        return {
            "variance_threshold": self.variance_threshold,
            "neighborhood_radius": self.neighborhood_radius,
            "v_lin_max": self.v_lin_max,
            "v_ang_max": self.v_ang_max,
            "min_segment": self.min_segment,
            "smooth_window": self.smooth_window,
            "kmeans_max_iter": self.kmeans_max_iter,
        }


@dataclass(frozen=True)
class BoundingBox:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=float))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=float))
        if np.any(self.min_corner > self.max_corner):
            raise ValueError("bounding box min corner must be <= max corner componentwise")

    def surface_seeds(self) -> np.ndarray:
        """8 corners then face centers (top, bottom, +x, -x, +y, -y)."""
        lo, hi = self.min_corner, self.max_corner
        c = (lo + hi) / 2.0
        corners = np.array([
            [x, y, z]
            for x in (lo[0], hi[0])
            for y in (lo[1], hi[1])
            for z in (lo[2], hi[2])
        ])
        faces = np.array([
            [c[0], c[1], hi[2]],
            [c[0], c[1], lo[2]],
            [hi[0], c[1], c[2]],
            [lo[0], c[1], c[2]],
            [c[0], hi[1], c[2]],
            [c[0], lo[1], c[2]],
        ])
        return np.vstack([corners, faces])


def bounding_box(points: np.ndarray) -> BoundingBox:
    """Axis-aligned minimal box of a 3D point set."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("bounding_box needs at least one point")
    return BoundingBox(points.min(axis=0), points.max(axis=0))


@dataclass(frozen=True)
class ClusterSet:
    centroids: np.ndarray
    assignments: np.ndarray
    iterations: int
    inertia: float
    inertia_trace: tuple[float, ...]


def _nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    return assign, d2[np.arange(len(points)), assign]


def kmeans(
    points: np.ndarray,
    k: int,
    max_iter: int = 100,
    init_centroids: np.ndarray | None = None,
) -> ClusterSet:
    """Lloyd clustering with deterministic bounding-box-surface seeding.

    The first k of (8 corners, 6 face centers) seed the centroids; k above
    14 is not supported.  An emptied cluster is re-seeded to the point
    currently farthest from its assigned centroid.
    """
    points = np.asarray(points, dtype=float)
    m = len(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > m:
        raise ValueError(f"k={k} exceeds the number of points ({m})")
    if init_centroids is not None:
        centroids = np.asarray(init_centroids, dtype=float).copy()
    else:
        seeds = bounding_box(points).surface_seeds()
        if k > len(seeds):
            raise ValueError(f"surface seeding supports k <= {len(seeds)}, got {k}")
        centroids = seeds[:k].copy()

    assignments, d2 = _nearest(points, centroids)
    trace = [float(d2.sum())]
    iterations = 0
    for _ in range(max_iter):
        new_centroids = centroids.copy()
        for j in range(k):
            mask = assignments == j
            if np.any(mask):
                new_centroids[j] = points[mask].mean(axis=0)
            else:
                far = int(np.argmax(d2))
                new_centroids[j] = points[far]
        centroids = new_centroids
        new_assignments, d2 = _nearest(points, centroids)
        trace.append(float(d2.sum()))
        iterations += 1
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments

    return ClusterSet(
        centroids=centroids,
        assignments=assignments,
        iterations=iterations,
        inertia=trace[-1],
        inertia_trace=tuple(trace),
    )


def select_neighborhood(
    frames: list[Frame],
    centroid: np.ndarray,
    radius: float,
    min_count: int,
) -> list[Frame]:
    """Frames whose hand position lies within radius of the centroid."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    centroid = np.asarray(centroid, dtype=float)
    kept = [f for f in frames if np.linalg.norm(f.hand.position - centroid) <= radius]
    if len(kept) < min_count:
        raise IdentifyError(
            f"only {len(kept)} frames within {radius} m of {centroid}; "
            f"need at least {min_count} for PCA"
        )
    return kept


@dataclass(frozen=True)
class PrincipalBasis:
    mean: np.ndarray
    components: np.ndarray               # rows, descending eigenvalue order
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry is positive."""
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def pca(samples: np.ndarray) -> PrincipalBasis:
    """Mean-centered covariance eigen-decomposition.

    Components are ordered by descending eigenvalue, each sign-fixed so its
    largest-magnitude entry is positive.  Needs more samples than
    dimensions; all-equal samples are rejected.
    """
    x = np.asarray(samples, dtype=float)
    m, n = x.shape
    if m <= n:
        raise IdentifyError(f"PCA needs more samples than dimensions ({m} <= {n})")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (m - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    total = float(eigvals.sum())
    if total < 1e-18:
        raise IdentifyError("zero-variance input: all samples identical")
    components = np.array([canonical_sign(eigvecs[:, i]) for i in order])
    return PrincipalBasis(
        mean=mean,
        components=components,
        eigenvalues=eigvals,
        explained_variance_ratio=eigvals / total,
    )


@dataclass(frozen=True)
class SignalBasis:
    """Per-node reduction: mean, 1-2 directions, and the projection range."""

    node_position: np.ndarray
    mean: np.ndarray
    directions: np.ndarray               # (1, n) or (2, n) rows
    mode: str
    proj_min: float = np.nan
    proj_max: float = np.nan
    explained_variance_ratio: tuple[float, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "node_position", np.asarray(self.node_position, dtype=float))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "directions", np.atleast_2d(np.asarray(self.directions, dtype=float)))
        expected = 1 if self.mode == ONE_PC else 2
        if self.mode not in (ONE_PC, TWO_PC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.directions.shape[0] != expected:
            raise ValueError(f"{self.mode} basis needs {expected} direction(s)")

    @property
    def has_range(self) -> bool:
        return np.isfinite(self.proj_min) and np.isfinite(self.proj_max)

    def coordinate(self, q: np.ndarray) -> float:
        """Raw signal coordinate: projection (OnePC) or radial norm (TwoPC)."""
        p = self.directions @ (np.asarray(q, dtype=float) - self.mean)
        if self.mode == ONE_PC:
            return float(p[0])
        return float(np.hypot(p[0], p[1]))


def choose_signal_basis(
    basis: PrincipalBasis,
    node_position: np.ndarray,
    threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    label: str = "",
) -> SignalBasis:
    """Reduce a principal basis to the signal mode.

    OnePC when the first component explains at least `threshold` of the
    variance (boundary inclusive), otherwise TwoPC on the first two
    components.
    """
    ratios = basis.explained_variance_ratio
    if ratios[0] >= threshold:
        directions = basis.components[:1]
        mode = ONE_PC
    else:
        if basis.components.shape[0] < 2:
            raise IdentifyError(
                f"first component explains {ratios[0]:.3f} < {threshold} "
                "but only one component is available"
            )
        directions = basis.components[:2]
        mode = TWO_PC
    return SignalBasis(
        node_position=node_position,
        mean=basis.mean,
        directions=directions,
        mode=mode,
        explained_variance_ratio=tuple(float(r) for r in ratios),
        label=label,
    )


def projection_range(samples: np.ndarray, basis: SignalBasis) -> SignalBasis:
    """Fill proj_min/proj_max (or the radial range) from observed samples."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise IdentifyError("projection range needs at least 2 samples")
    coords = np.array([basis.coordinate(q) for q in x])
    lo, hi = float(coords.min()), float(coords.max())
    if hi - lo < 1e-6:
        raise IdentifyError(f"degenerate projection range [{lo}, {hi}] at node {basis.label!r}")
    return replace(basis, proj_min=lo, proj_max=hi)


def _minimum_spanning_tree(positions: np.ndarray) -> list[tuple[int, int]]:
    """Prim MST edges (parent, child) rooted at node 0, deterministic ties."""
    m = len(positions)
    in_tree = [0]
    edges = []
    remaining = set(range(1, m))
    while remaining:
        best = None
        for child in sorted(remaining):
            for parent in in_tree:
                d = float(np.linalg.norm(positions[parent] - positions[child]))
                if best is None or d < best[0] - 1e-15:
                    best = (d, parent, child)
        _, parent, child = best
        edges.append((parent, child))
        in_tree.append(child)
        remaining.discard(child)
    return edges


def _flip_first_direction(basis: SignalBasis) -> SignalBasis:
    directions = basis.directions.copy()
    directions[0] = -directions[0]
    if basis.mode == ONE_PC and basis.has_range:
        return replace(basis, directions=directions, proj_min=-basis.proj_max, proj_max=-basis.proj_min)
    return replace(basis, directions=directions)


def align_signs(bases: list[SignalBasis]) -> list[SignalBasis]:
    """Resolve the per-node PCA sign ambiguity over the node MST.

    Each child's first direction is flipped when it opposes its parent's
    (the projection range flips with it); TwoPC second directions are
    aligned the same way.  Without this the interpolated field would be
    discontinuous.
    """
    if not bases:
        raise ValueError("align_signs needs at least one basis")
    out = list(bases)
    positions = np.array([b.node_position for b in bases])
    for parent, child in _minimum_spanning_tree(positions):
        if float(out[parent].directions[0] @ out[child].directions[0]) < 0:
            out[child] = _flip_first_direction(out[child])
        if out[child].mode == TWO_PC and out[parent].mode == TWO_PC:
            if float(out[parent].directions[1] @ out[child].directions[1]) < 0:
                directions = out[child].directions.copy()
                directions[1] = -directions[1]
                out[child] = replace(out[child], directions=directions)
    return out


def identify_session(session: CalibrationSession, config: IdentifyConfig = IdentifyConfig()) -> list[SignalBasis]:
    """Full identification pipeline over a calibration session.

    Returns one sign-aligned SignalBasis per calibration node, ordered by
    cluster index; sub-operation failures are re-raised with the node label.
    """
    n = session.model.n
    pooled: list[Frame] = []
    frame_sources: list[str] = []
    for rec in session.recordings:
        segments = capture.segment_steady(
            rec,
            v_lin_max=config.v_lin_max,
            v_ang_max=config.v_ang_max,
            min_len=config.min_segment,
            window=config.smooth_window,
        )
        if not segments:
            raise IdentifyError(f"node {rec.label!r}: no steady data below thresholds")
        for seg in segments:
            pooled.extend(rec.frames[seg.begin:seg.end])
            frame_sources.extend([rec.label] * (seg.end - seg.begin))

    positions = np.array([f.hand.position for f in pooled])
    k = len(session.recordings)
    clusters = kmeans(positions, k=k, max_iter=config.kmeans_max_iter)

    bases = []
    for j in range(k):
        mask = clusters.assignments == j
        members = [f for f, keep in zip(pooled, mask) if keep]
        labels = [s for s, keep in zip(frame_sources, mask) if keep]
        label = max(set(labels), key=labels.count) if labels else f"cluster-{j}"
        try:
            kept = select_neighborhood(members, clusters.centroids[j], config.neighborhood_radius, min_count=n + 1)
            samples = np.array([f.q for f in kept])
            principal = pca(samples)
            basis = choose_signal_basis(
                principal, clusters.centroids[j], threshold=config.variance_threshold, label=label
            )
            basis = projection_range(samples, basis)
        except IdentifyError as exc:
            raise IdentifyError(f"node {label!r}: {exc}") from exc
        bases.append(basis)
    return align_signs(bases)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

BASIS_SCHEMA = "ikk-basis/1"


def bases_to_json_dict(bases: list[SignalBasis], config: IdentifyConfig | None = None) -> dict:
    nodes = []
    for b in bases:
        entry = {
            "label": b.label,
            "node_position": list(b.node_position),
            "mode": b.mode,
            "mean": list(b.mean),
            "directions": [list(d) for d in b.directions],
            "explained_variance_ratio": list(b.explained_variance_ratio),
        }
        if b.mode == ONE_PC:
            entry["proj_min"] = b.proj_min
            entry["proj_max"] = b.proj_max
        else:
            entry["radial_min"] = b.proj_min
            entry["radial_max"] = b.proj_max
        nodes.append(entry)
    doc = {"schema": BASIS_SCHEMA, "nodes": nodes}
    if config is not None:
        doc["config"] = config.to_json_dict()
    return doc


def bases_from_json_dict(doc: dict) -> list[SignalBasis]:
    if doc.get("schema") != BASIS_SCHEMA:
        raise ValueError(f"expected schema {BASIS_SCHEMA!r}, got {doc.get('schema')!r}")
    bases = []
    for entry in doc["nodes"]:
        lo = entry.get("proj_min", entry.get("radial_min"))
        hi = entry.get("proj_max", entry.get("radial_max"))
        bases.append(
            SignalBasis(
                node_position=np.array(entry["node_position"]),
                mean=np.array(entry["mean"]),
                directions=np.array(entry["directions"]),
                mode=entry["mode"],
                proj_min=float(lo),
                proj_max=float(hi),
                explained_variance_ratio=tuple(entry.get("explained_variance_ratio", ())),
                label=entry.get("label", ""),
            )
        )
    return bases


def save_bases(bases: list[SignalBasis], path, config: IdentifyConfig | None = None) -> None:
    Path(path).write_text(json.dumps(bases_to_json_dict(bases, config), indent=2), encoding="utf-8")


def load_bases(path) -> list[SignalBasis]:
    return bases_from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
