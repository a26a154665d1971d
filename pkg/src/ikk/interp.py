"""Natural-neighbor interpolation of signal bases over the hand workspace.

The calibration nodes are tetrahedralized once; queries inside the convex
hull get Sibson weights (the volume the query's Voronoi cell would steal
from each node's cell, computed by exact half-space clipping), and the
node bases are blended with those weights.  Outside the hull the basis
falls back to inverse-distance weighting over the four nearest nodes and
is flagged, so callers can warn the wearer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import delaunay, identify
from .delaunay import Triangulation
from .identify import ONE_PC, SignalBasis

NODE_SNAP_RADIUS = 1e-9       # m, queries this close to a node return it exactly
HULL_BOUNDARY_TOL = 1e-12     # m, strict-interior classification margin

VOLUME_SCHEMA = "ikk-volume/1"


class InterpError(ValueError):
    pass


class OutsideHullError(InterpError):
    """Query not strictly inside the hull; callers fall back to IDW."""


@dataclass(frozen=True)
class InterpolatedBasis:
    mean: np.ndarray
    directions: np.ndarray
    proj_min: float
    proj_max: float
    mode: str
    weights_used: np.ndarray
    inside_hull: bool

    def coordinate(self, q: np.ndarray) -> float:
        p = self.directions @ (np.asarray(q, dtype=float) - self.mean)
        if self.mode == ONE_PC:
            return float(p[0])
        return float(np.hypot(p[0], p[1]))


class InterpolationVolume:
    """Immutable query structure over the calibration nodes."""

    def __init__(self, nodes: list[SignalBasis], triangulation: Triangulation):
        self.nodes = list(nodes)
        self.mode = nodes[0].mode
        self.points = np.array([b.node_position for b in nodes])
        self.triangulation = triangulation
        self.tetrahedra = triangulation.canonical_tets()
        self.hull_faces = triangulation.hull_faces()

        interior = self.points.mean(axis=0)
        planes = []
        for face in self.hull_faces:
            a, b, c = (self.points[i] for i in face)
            n = np.cross(b - a, c - a)
            norm = np.linalg.norm(n)
            if norm < 1e-15:
                continue
            n = n / norm
            d = float(n @ a)
            if n @ interior - d > 0:
                n, d = -n, -d
            planes.append((n, d))
        self._hull_planes = planes

        # All weight geometry runs on the triangulation's perturbed copy of
        # the node positions: the stored tetrahedra are Delaunay for those
        # exact coordinates, so conflict tests stay consistent even for the
        # tets that are flat in the original (cospherical) layout.  The
        # perturbation is ~1e-12 of the diameter and shifts weights far
        # below every tolerance in use.
        self._geo = triangulation._perturbed
        self._sq_geo = (self._geo ** 2).sum(axis=1)

        # per-tet orientation signs for the determinant conflict test; a
        # near-flat tet still has a float-resolvable orientation since the
        # determinant magnitude far exceeds rounding error
        self._tet_array = np.array(self.tetrahedra, dtype=int)
        corners = self._geo[self._tet_array]                      # (T, 4, 3)
        ab = corners[:, 1] - corners[:, 0]
        ac = corners[:, 2] - corners[:, 0]
        ad = corners[:, 3] - corners[:, 0]
        self._tet_orient = np.einsum("ij,ij->i", np.cross(ab, ac), ad)

        # node adjacency (Delaunay edges) bounds each node's Voronoi cell
        m = len(nodes)
        adjacency: list[set[int]] = [set() for _ in range(m)]
        for i, j in triangulation.edges():
            adjacency[i].add(j)
            adjacency[j].add(i)
        self._adjacency = [tuple(sorted(s)) for s in adjacency]
        sq = (self._geo ** 2).sum(axis=1)
        self._pair_planes = {}
        for i in range(m):
            for j in self._adjacency[i]:
                n = 2.0 * (self._geo[j] - self._geo[i])
                d = float(sq[j] - sq[i])
                self._pair_planes[(i, j)] = (tuple(n), d)

    def __len__(self) -> int:
        return len(self.nodes)

    def inside_hull(self, point: np.ndarray) -> bool:
        """Strictly inside the convex hull of the nodes."""
        p = np.asarray(point, dtype=float)
        return all(float(n @ p) - d < -HULL_BOUNDARY_TOL for n, d in self._hull_planes)


def build_volume(bases: list[SignalBasis]) -> InterpolationVolume:
    """Tetrahedralize the node positions and wrap them for queries.

    Requires >= 4 nodes, not all coplanar, all sharing one signal mode.
    """
    if len(bases) < 4:
        raise InterpError(f"interpolation needs >= 4 nodes, got {len(bases)}")
    modes = {b.mode for b in bases}
    if len(modes) != 1:
        raise InterpError(f"mixed signal modes across nodes: {sorted(modes)}")
    points = np.array([b.node_position for b in bases])
    try:
        tri = Triangulation(points)
    except delaunay.DelaunayError as exc:
        raise InterpError(str(exc)) from exc
    return InterpolationVolume(bases, tri)


def _conflict_cavity(volume: InterpolationVolume, q: np.ndarray):
    """Conflict tets of a query plus the cavity boundary and its centers.

    Returns (conflict tet indices, [(cavity face, center id)], center
    coordinate list, node -> center-id sets, merge function).  Centers are
    merged within a small tolerance because cospherical node groups give
    several faces one circumcenter.
    """
    # lifted-determinant conflict test: q inside circumsphere of tet iff the
    # 4x4 insphere determinant disagrees in sign with the tet orientation
    rel = volume._geo[volume._tet_array] - q                      # (T, 4, 3)
    w = (rel ** 2).sum(axis=2)                                    # (T, 4)
    r0, r1, r2, r3 = rel[:, 0], rel[:, 1], rel[:, 2], rel[:, 3]
    d123 = np.einsum("ij,ij->i", np.cross(r1, r2), r3)
    d023 = np.einsum("ij,ij->i", np.cross(r0, r2), r3)
    d013 = np.einsum("ij,ij->i", np.cross(r0, r1), r3)
    d012 = np.einsum("ij,ij->i", np.cross(r0, r1), r2)
    det4 = -w[:, 0] * d123 + w[:, 1] * d023 - w[:, 2] * d013 + w[:, 3] * d012
    conflict = np.nonzero(det4 * volume._tet_orient < 0.0)[0]
    if len(conflict) == 0:
        raise InterpError(f"no conflicting tetrahedron for interior query {q}")

    conflict_count: dict[frozenset, int] = {}
    for k in conflict:
        for f in Triangulation._tet_faces(volume.tetrahedra[k]):
            conflict_count[f] = conflict_count.get(f, 0) + 1

    # a face bounds the cavity when only one of its sides is in conflict
    cavity_faces = [f for f, c in conflict_count.items() if c == 1]
    if len(cavity_faces) < 4:
        raise InterpError(f"degenerate conflict cavity for query {q}")

    # circumcenters of (cavity face, q) are the cell vertices, batched solve
    tri = np.array([sorted(f) for f in cavity_faces], dtype=int)
    pa = volume._geo[tri[:, 0]]
    pb = volume._geo[tri[:, 1]]
    pc = volume._geo[tri[:, 2]]
    m = 2.0 * np.stack([pb - pa, pc - pa, q - pa], axis=1)
    sq = volume._sq_geo
    rhs = np.stack(
        [sq[tri[:, 1]] - sq[tri[:, 0]], sq[tri[:, 2]] - sq[tri[:, 0]], q @ q - sq[tri[:, 0]]],
        axis=1,
    )
    try:
        solved = np.linalg.solve(m, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise InterpError(f"degenerate cavity face for query {q}")

    centers: list[tuple[float, float, float]] = []
    merge_tol = 1e-9

    def merge(center: tuple[float, float, float]) -> int:
        for k, existing in enumerate(centers):
            if (
                abs(existing[0] - center[0]) <= merge_tol
                and abs(existing[1] - center[1]) <= merge_tol
                and abs(existing[2] - center[2]) <= merge_tol
            ):
                return k
        centers.append(center)
        return len(centers) - 1

    cavity = []
    neighbor_verts: dict[int, set[int]] = {}
    for row, f in zip(solved, cavity_faces):
        cid = merge((float(row[0]), float(row[1]), float(row[2])))
        cavity.append((f, cid))
        for node in f:
            neighbor_verts.setdefault(node, set()).add(cid)
    return conflict, cavity, centers, neighbor_verts, merge


def _query_cell(volume: InterpolationVolume, q: np.ndarray):
    """The Voronoi cell the query would own, as an exact convex polyhedron.

    Vertices are circumcenters of (cavity-boundary-face, query) tetrahedra;
    each natural neighbor contributes one face lying on its bisector plane
    with the query.  No bounding box is involved, so the spiky cells that
    near-cospherical node layouts produce are represented exactly.
    """
    _, _, centers, neighbor_verts, _ = _conflict_cavity(volume, q)
    faces = []
    face_nodes = []
    qx, qy, qz = q
    for node, vert_ids in neighbor_verts.items():
        if len(vert_ids) < 3:
            continue
        px, py, pz = volume._geo[node]
        loop = delaunay._sort_coplanar_loop(sorted(vert_ids), centers, (px - qx, py - qy, pz - qz))
        if loop is None:
            continue
        faces.append(loop)
        face_nodes.append(node)
    return (centers, faces), face_nodes


def _signed_face_sum(loop, verts) -> float:
    """Divergence-theorem contribution of one outward-oriented face polygon."""
    x0, y0, z0 = verts[loop[0]]
    total = 0.0
    for k in range(1, len(loop) - 1):
        x1, y1, z1 = verts[loop[k]]
        x2, y2, z2 = verts[loop[k + 1]]
        total += (
            x0 * (y1 * z2 - z1 * y2)
            - y0 * (x1 * z2 - z1 * x2)
            + z0 * (x1 * y2 - y1 * x2)
        )
    return total


def sibson_weights(volume: InterpolationVolume, query: np.ndarray) -> np.ndarray:
    """Natural-neighbor weights of a query strictly inside the hull.

    Weight of node i is the volume the query's Voronoi cell steals from
    node i's cell.  The stolen pieces are assembled face by face: each
    piece is bounded by the cell face on the query-node bisector plus
    pair faces on node-node bisectors, whose vertices are circumcenters
    of conflict tetrahedra and of (cavity-face, query) tetrahedra.  Pair
    faces are shared by two pieces with opposite orientation, so the
    partition of the cell volume is exact by construction.
    """
    q = np.asarray(query, dtype=float)
    m = len(volume)
    dists = np.linalg.norm(volume.points - q, axis=1)
    nearest = int(np.argmin(dists))
    if dists[nearest] <= NODE_SNAP_RADIUS:
        w = np.zeros(m)
        w[nearest] = 1.0
        return w
    if not volume.inside_hull(q):
        raise OutsideHullError(f"query {q} is outside the calibrated hull")

    conflict, cavity, centers, neighbor_verts, merge = _conflict_cavity(volume, q)

    # old Voronoi vertices that fall inside the new cell: circumcenters of
    # the conflict tets, merged into the shared vertex pool
    tets = volume._tet_array[conflict]
    pa = volume._geo[tets[:, 0]]
    pb = volume._geo[tets[:, 1]]
    pc = volume._geo[tets[:, 2]]
    pd = volume._geo[tets[:, 3]]
    mm = 2.0 * np.stack([pb - pa, pc - pa, pd - pa], axis=1)
    sq = volume._sq_geo
    rhs = np.stack(
        [
            sq[tets[:, 1]] - sq[tets[:, 0]],
            sq[tets[:, 2]] - sq[tets[:, 0]],
            sq[tets[:, 3]] - sq[tets[:, 0]],
        ],
        axis=1,
    )
    try:
        tet_centers = np.linalg.solve(mm, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise InterpError(f"degenerate conflict tetrahedron for query {q}")

    pair_verts: dict[tuple[int, int], set[int]] = {}
    for row, tet in zip(tet_centers, tets):
        cid = merge((float(row[0]), float(row[1]), float(row[2])))
        a, b, c, d = (int(v) for v in tet)
        for i, j in ((a, b), (a, c), (a, d), (b, c), (b, d), (c, d)):
            pair_verts.setdefault((i, j), set()).add(cid)
    for f, cid in cavity:
        i, j, k = sorted(f)
        pair_verts.setdefault((i, j), set()).add(cid)
        pair_verts.setdefault((i, k), set()).add(cid)
        pair_verts.setdefault((j, k), set()).add(cid)

    geo = volume._geo
    qx, qy, qz = q
    piece = np.zeros(m)
    total = 0.0
    for node, vert_ids in neighbor_verts.items():
        if len(vert_ids) < 3:
            continue
        px, py, pz = geo[node]
        loop = delaunay._sort_coplanar_loop(
            sorted(vert_ids), centers, (px - qx, py - qy, pz - qz)
        )
        if loop is None:
            continue
        s = _signed_face_sum(loop, centers)
        piece[node] += s
        total += s
    for (i, j), vert_ids in pair_verts.items():
        if len(vert_ids) < 3:
            continue
        ni = geo[i]
        nj = geo[j]
        loop = delaunay._sort_coplanar_loop(
            sorted(vert_ids), centers, (nj[0] - ni[0], nj[1] - ni[1], nj[2] - ni[2])
        )
        if loop is None:
            continue
        s = _signed_face_sum(loop, centers)
        piece[i] += s
        piece[j] -= s

    if total <= 0:
        raise InterpError("degenerate natural-neighbor weights")
    weights = np.clip(piece, 0.0, None)
    return weights / weights.sum()


def _idw_fallback(volume: InterpolationVolume, query: np.ndarray, k: int = 4) -> np.ndarray:
    """Inverse-distance-squared weights over the k nearest nodes."""
    dists = np.linalg.norm(volume.points - np.asarray(query, dtype=float), axis=1)
    order = np.argsort(dists)[:k]
    w = np.zeros(len(volume))
    w[order] = 1.0 / np.maximum(dists[order], 1e-12) ** 2
    return w / w.sum()


def interpolate_basis(volume: InterpolationVolume, hand_pos: np.ndarray) -> InterpolatedBasis:
    """Blend node bases at a hand position.

    Inside the hull the blend uses Sibson weights; outside it falls back to
    inverse-distance weighting over the 4 nearest nodes with
    inside_hull=False.  Queries at a node return that node's basis exactly.
    """
    q = np.asarray(hand_pos, dtype=float)
    dists = np.linalg.norm(volume.points - q, axis=1)
    nearest = int(np.argmin(dists))
    if dists[nearest] <= NODE_SNAP_RADIUS:
        node = volume.nodes[nearest]
        w = np.zeros(len(volume))
        w[nearest] = 1.0
        return InterpolatedBasis(
            mean=node.mean,
            directions=node.directions,
            proj_min=node.proj_min,
            proj_max=node.proj_max,
            mode=node.mode,
            weights_used=w,
            inside_hull=True,
        )
    try:
        weights = sibson_weights(volume, q)
        inside = True
    except OutsideHullError:
        weights = _idw_fallback(volume, q)
        inside = False

    mean = np.zeros_like(volume.nodes[0].mean)
    n_dir = volume.nodes[0].directions.shape[0]
    directions = np.zeros((n_dir, mean.shape[0]))
    lo = 0.0
    hi = 0.0
    for w, node in zip(weights, volume.nodes):
        if w == 0.0:
            continue
        mean += w * node.mean
        directions += w * node.directions
        lo += w * node.proj_min
        hi += w * node.proj_max
    norm1 = np.linalg.norm(directions[0])
    if norm1 < 1e-6:
        raise InterpError("blended direction degenerate (near-antipodal node directions)")
    directions[0] = directions[0] / norm1
    if n_dir == 2:
        directions[1] -= (directions[1] @ directions[0]) * directions[0]
        norm2 = np.linalg.norm(directions[1])
        if norm2 < 1e-6:
            raise InterpError("blended second direction degenerate")
        directions[1] = directions[1] / norm2
    return InterpolatedBasis(
        mean=mean,
        directions=directions,
        proj_min=lo,
        proj_max=hi,
        mode=volume.mode,
        weights_used=weights,
        inside_hull=inside,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def volume_to_json_dict(volume: InterpolationVolume) -> dict:
    return {
        "schema": VOLUME_SCHEMA,
        "nodes": identify.bases_to_json_dict(volume.nodes)["nodes"],
        "tetrahedra": [list(t) for t in volume.tetrahedra],
    }


def volume_from_json_dict(doc: dict) -> InterpolationVolume:
    if doc.get("schema") != VOLUME_SCHEMA:
        raise InterpError(f"expected schema {VOLUME_SCHEMA!r}, got {doc.get('schema')!r}")
    bases = identify.bases_from_json_dict({"schema": identify.BASIS_SCHEMA, "nodes": doc["nodes"]})
    volume = build_volume(bases)
    stored = tuple(tuple(t) for t in doc["tetrahedra"])
    if stored != volume.tetrahedra:
        raise InterpError("stored tetrahedra do not match the rebuilt triangulation")
    return volume


def save_volume(volume: InterpolationVolume, path) -> None:
    Path(path).write_text(json.dumps(volume_to_json_dict(volume), indent=2), encoding="utf-8")


def load_volume(path) -> InterpolationVolume:
    return volume_from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_volume_or_bases(path) -> InterpolationVolume:
    """Accept either a basis file or a volume file and return a volume."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    schema = doc.get("schema")
    if schema == VOLUME_SCHEMA:
        return volume_from_json_dict(doc)
    if schema == identify.BASIS_SCHEMA:
        return build_volume(identify.bases_from_json_dict(doc))
    raise InterpError(f"unrecognized schema {schema!r} in {path}")
