"""Incremental 3D Delaunay tetrahedralization and convex-cell clipping.

Construction is Bowyer-Watson with ghost simplices standing in for the
outside of the hull, so no artificial super-tetrahedron distorts hull
decisions.  Predicates run in exact rational arithmetic on deterministically
perturbed copies of the input (tie-breaking keyed to the point index), which
resolves cospherical layouts such as box corners without affecting the
stored coordinates.

The polyhedron clipping utilities support the natural-neighbor weight
computation: Voronoi cells are intersections of bisector half-spaces.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

INF = -1  # ghost apex index

PERTURBATION_SCALE = 1e-12


class DelaunayError(ValueError):
    pass


def deterministic_perturbation(points: np.ndarray, scale: float = PERTURBATION_SCALE) -> np.ndarray:
    """Tiny index-keyed offsets that break cospherical/coplanar ties.

    Low-discrepancy fractional parts of multiples of irrational constants;
    the same point index always receives the same offset, so the final
    tetrahedron set does not depend on insertion order.
    """
    pts = np.asarray(points, dtype=float)
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if diam == 0.0:
        diam = 1.0
    idx = np.arange(1, len(pts) + 1)[:, None]
    alphas = np.array([[0.7548776662466927, 0.5698402909980532, 0.3287922500896426]])
    jitter = (np.modf(idx * alphas * 997.0)[0] - 0.5) * (scale * diam)
    return pts + jitter


def _det3(m) -> Fraction:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _det4(m) -> Fraction:
    total = Fraction(0)
    sign = 1
    for col in range(4):
        minor = [[m[r][c] for c in range(4) if c != col] for r in (1, 2, 3)]
        total += sign * m[0][col] * _det3(minor)
        sign = -sign
    return total


class ExactPredicates:
    """orient3d / insphere over exact rational copies of the coordinates."""

    def __init__(self, points: np.ndarray):
        self.coords = [tuple(Fraction(float(c)) for c in p) for p in np.asarray(points, dtype=float)]

    def orient3d(self, a: int, b: int, c: int, d: int) -> int:
        pa, pb, pc, pd = (self.coords[i] for i in (a, b, c, d))
        m = [
            [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]],
            [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]],
            [pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]],
        ]
        det = _det3(m)
        return (det > 0) - (det < 0)

    def insphere(self, tet: tuple[int, int, int, int], e: int) -> int:
        """+1 when point e lies strictly inside the circumsphere of tet."""
        a, b, c, d = tet
        orient = self.orient3d(a, b, c, d)
        if orient == 0:
            raise DelaunayError("degenerate (coplanar) tetrahedron in insphere test")
        pe = self.coords[e]
        rows = []
        for i in (a, b, c, d):
            p = self.coords[i]
            dx, dy, dz = p[0] - pe[0], p[1] - pe[1], p[2] - pe[2]
            rows.append([dx, dy, dz, dx * dx + dy * dy + dz * dz])
        det = _det4(rows)
        # with rows (p_i - e, |p_i - e|^2), e inside <=> det and orientation disagree
        sign = (det > 0) - (det < 0)
        return -sign * orient


class Triangulation:
    """Delaunay tetrahedralization of >= 4 non-coplanar points."""

    def __init__(self, points: np.ndarray, perturbation: float = PERTURBATION_SCALE):
        self.points = np.asarray(points, dtype=float)
        m = len(self.points)
        if m < 4:
            raise DelaunayError(f"need at least 4 points, got {m}")
        centered = self.points - self.points.mean(axis=0)
        if np.linalg.svd(centered, compute_uv=False)[-1] <= 1e-9:
            raise DelaunayError("points are coplanar (within 1e-9)")
        self._perturbed = deterministic_perturbation(self.points, perturbation)
        self._pred = ExactPredicates(self._perturbed)
        self.tets: set[tuple[int, int, int, int]] = set()
        self.ghosts: set[tuple[int, int, int]] = set()  # outward-oriented hull faces
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        pred = self._pred
        first = (0, 1, 2, 3)
        if pred.orient3d(*first) == 0:
            # pull in the first point that breaks coplanarity
            for k in range(4, len(self.points)):
                if pred.orient3d(0, 1, 2, k) != 0:
                    order = [0, 1, 2, k] + [i for i in range(len(self.points)) if i not in (0, 1, 2, k)]
                    break
            else:
                raise DelaunayError("all perturbed points coplanar; cannot triangulate")
        else:
            order = list(range(len(self.points)))
        a, b, c, d = order[:4]
        if pred.orient3d(a, b, c, d) < 0:
            a, b = b, a
        self.tets = {(a, b, c, d)}
        self._interior = tuple(self._perturbed[[a, b, c, d]].mean(axis=0))
        self._pred_interior = tuple(Fraction(float(x)) for x in self._interior)
        for face in ((a, c, b), (a, b, d), (b, c, d), (a, d, c)):
            self.ghosts.add(face)
        for idx in order[4:]:
            self._insert(idx)

    def _orient_interior(self, a: int, b: int, c: int) -> int:
        pa, pb, pc = (self._pred.coords[i] for i in (a, b, c))
        pd = self._pred_interior
        m = [
            [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]],
            [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]],
            [pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]],
        ]
        det = _det3(m)
        return (det > 0) - (det < 0)

    @staticmethod
    def _tet_faces(tet):
        a, b, c, d = tet
        return (
            frozenset((a, b, c)),
            frozenset((a, b, d)),
            frozenset((a, c, d)),
            frozenset((b, c, d)),
        )

    def _insert(self, p: int):
        pred = self._pred
        bad_tets = [t for t in self.tets if pred.insphere(t, p) > 0]
        bad_ghosts = [g for g in self.ghosts if pred.orient3d(g[0], g[1], g[2], p) > 0]
        if not bad_tets and not bad_ghosts:
            raise DelaunayError(f"point {p} conflicts with nothing (duplicate input?)")

        face_count: dict[frozenset, int] = {}
        oriented: dict[frozenset, tuple] = {}

        def add_face(key, tri):
            face_count[key] = face_count.get(key, 0) + 1
            oriented.setdefault(key, tri)

        for tet in bad_tets:
            a, b, c, d = tet
            for tri in ((a, c, b), (a, b, d), (b, c, d), (a, d, c)):
                add_face(frozenset(tri), tri)
        for g in bad_ghosts:
            a, b, c = g
            add_face(frozenset(g), g)
            for edge in ((a, b), (b, c), (c, a)):
                add_face(frozenset((edge[0], edge[1], INF)), (edge[0], edge[1], INF))

        for tet in bad_tets:
            self.tets.discard(tet)
        for g in bad_ghosts:
            self.ghosts.discard(g)

        for key, count in face_count.items():
            if count != 1:
                continue
            tri = oriented[key]
            if INF in key:
                x, y = (v for v in tri if v != INF)
                if self._orient_interior(x, y, p) > 0:
                    x, y = y, x
                self.ghosts.add((x, y, p))
            else:
                a, b, c = tri
                if pred.orient3d(a, b, c, p) < 0:
                    a, b = b, a
                self.tets.add((a, b, c, p))

    # -- queries -----------------------------------------------------------

    def canonical_tets(self) -> tuple[tuple[int, int, int, int], ...]:
        return tuple(sorted(tuple(sorted(t)) for t in self.tets))

    def hull_faces(self) -> tuple[tuple[int, int, int], ...]:
        """Outward-oriented hull triangles."""
        return tuple(sorted(self.ghosts))

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for t in self.tets:
            for i in range(4):
                for j in range(i + 1, 4):
                    out.add((min(t[i], t[j]), max(t[i], t[j])))
        return out

    def circumsphere_margins(self) -> float:
        """Worst empty-circumsphere margin over all tet/point pairs, in meters.

        Computed on the original (unperturbed) coordinates; non-negative up
        to the perturbation scale when the triangulation is Delaunay.
        """
        worst = np.inf
        pts = self.points
        for tet in self.tets:
            a, b, c, d = (pts[i] for i in tet)
            m = 2.0 * np.array([b - a, c - a, d - a])
            rhs = np.array([b @ b - a @ a, c @ c - a @ a, d @ d - a @ a])
            try:
                center = np.linalg.solve(m, rhs)
            except np.linalg.LinAlgError:
                continue
            radius = np.linalg.norm(center - a)
            for j in range(len(pts)):
                if j in tet:
                    continue
                margin = np.linalg.norm(pts[j] - center) - radius
                worst = min(worst, margin)
        return float(worst)


# ---------------------------------------------------------------------------
# Convex polyhedron clipping (float arithmetic, hot path)
# ---------------------------------------------------------------------------

_CLIP_TOL = 1e-12   # meters; planes are normalized before classification
_WELD_TOL = 1e-12   # meters; near-duplicate vertices are merged after a cut


def box_polyhedron(lo, hi):
    """Axis-aligned box as (vertices, outward faces)."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = [
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ]
    faces = [
        [0, 3, 2, 1],  # z = z0, outward -z
        [4, 5, 6, 7],  # z = z1, outward +z
        [0, 1, 5, 4],  # y = y0
        [2, 3, 7, 6],  # y = y1
        [1, 2, 6, 5],  # x = x1
        [0, 4, 7, 3],  # x = x0
    ]
    return verts, faces


def _sort_coplanar_loop(ids, verts, normal):
    """Order coplanar points of a convex polygon by angle; orient along +normal."""
    nx, ny, nz = normal
    norm = (nx * nx + ny * ny + nz * nz) ** 0.5
    if norm < 1e-300:
        return None
    nx, ny, nz = nx / norm, ny / norm, nz / norm
    ax, ay, az = abs(nx), abs(ny), abs(nz)
    if ax <= ay and ax <= az:
        rx, ry, rz = 1.0, 0.0, 0.0
    elif ay <= az:
        rx, ry, rz = 0.0, 1.0, 0.0
    else:
        rx, ry, rz = 0.0, 0.0, 1.0
    e1x, e1y, e1z = ny * rz - nz * ry, nz * rx - nx * rz, nx * ry - ny * rx
    e1n = (e1x * e1x + e1y * e1y + e1z * e1z) ** 0.5
    e1x, e1y, e1z = e1x / e1n, e1y / e1n, e1z / e1n
    e2x, e2y, e2z = ny * e1z - nz * e1y, nz * e1x - nx * e1z, nx * e1y - ny * e1x
    pts = [verts[i] for i in ids]
    k = len(pts)
    cx = sum(p[0] for p in pts) / k
    cy = sum(p[1] for p in pts) / k
    cz = sum(p[2] for p in pts) / k
    keyed = []
    for i, (px, py, pz) in zip(ids, pts):
        dx, dy, dz = px - cx, py - cy, pz - cz
        keyed.append((math.atan2(dx * e2x + dy * e2y + dz * e2z, dx * e1x + dy * e1y + dz * e1z), i))
    keyed.sort()
    loop = [i for _, i in keyed]
    # Newell normal over the whole loop is robust to collinear stretches
    sx = sy = sz = 0.0
    for idx in range(len(loop)):
        x0, y0, z0 = verts[loop[idx]]
        x1, y1, z1 = verts[loop[(idx + 1) % len(loop)]]
        sx += (y0 - y1) * (z0 + z1)
        sy += (z0 - z1) * (x0 + x1)
        sz += (x0 - x1) * (y0 + y1)
    if sx * nx + sy * ny + sz * nz < 0:
        loop.reverse()
    return loop


def _weld(verts, faces, candidates, tol=_WELD_TOL):
    """Merge near-coincident vertices and drop degenerate faces.

    Cascaded cuts through shared Voronoi vertices produce distinct ids for
    the same geometric point; later planes passing exactly through them
    would otherwise see an inconsistent classification.  Only the given
    candidate ids (points the current cut touched) can be merged away.
    """
    remap = list(range(len(verts)))
    merged = False
    for i in sorted(candidates):
        vx, vy, vz = verts[i]
        for k in range(i):
            if remap[k] != k:
                continue
            u = verts[k]
            if abs(u[0] - vx) <= tol and abs(u[1] - vy) <= tol and abs(u[2] - vz) <= tol:
                remap[i] = k
                merged = True
                break
    if not merged:
        return verts, faces
    new_faces = []
    for face in faces:
        loop = []
        for i in face:
            j = remap[i]
            if not loop or loop[-1] != j:
                loop.append(j)
        if len(loop) >= 2 and loop[0] == loop[-1]:
            loop.pop()
        if len(set(loop)) >= 3:
            new_faces.append(loop)
    if len(new_faces) < 4:
        return None
    return verts, new_faces


def clip_polyhedron(poly, normal, offset, tol=_CLIP_TOL):
    """Intersect a convex polyhedron with the half-space n.x <= offset.

    Returns the clipped (vertices, faces) or None when the intersection is
    empty.  Vertices exactly on the plane are kept and shared between the
    cut faces and the closing cap; the plane is normalized so tolerances
    are in coordinate units.
    """
    verts, faces = poly
    nx, ny, nz = normal
    scale = (nx * nx + ny * ny + nz * nz) ** 0.5
    if scale < 1e-300:
        return poly
    nx, ny, nz = nx / scale, ny / scale, nz / scale
    offset = offset / scale
    dists = [nx * v[0] + ny * v[1] + nz * v[2] - offset for v in verts]
    if all(d <= tol for d in dists):
        return poly
    if all(d >= -tol for d in dists):
        return None

    new_verts: list = []
    vert_map: dict[int, int] = {}
    edge_cache: dict[tuple[int, int], int] = {}

    def keep_vertex(i):
        j = vert_map.get(i)
        if j is None:
            j = len(new_verts)
            new_verts.append(verts[i])
            vert_map[i] = j
        return j

    def edge_point(i, j):
        key = (i, j) if i < j else (j, i)
        k = edge_cache.get(key)
        if k is None:
            di, dj = dists[i], dists[j]
            t = di / (di - dj)
            vi, vj = verts[i], verts[j]
            p = (vi[0] + t * (vj[0] - vi[0]), vi[1] + t * (vj[1] - vi[1]), vi[2] + t * (vj[2] - vi[2]))
            k = len(new_verts)
            new_verts.append(p)
            edge_cache[key] = k
        return k

    new_faces = []
    cap_ids: set[int] = set()
    for face in faces:
        loop = []
        count = len(face)
        for idx in range(count):
            i = face[idx]
            j = face[(idx + 1) % count]
            di, dj = dists[i], dists[j]
            if di <= tol:
                vi = keep_vertex(i)
                loop.append(vi)
                if abs(di) <= tol:
                    cap_ids.add(vi)
            if (di < -tol and dj > tol) or (di > tol and dj < -tol):
                vk = edge_point(i, j)
                loop.append(vk)
                cap_ids.add(vk)
        if len(loop) >= 3:
            new_faces.append(loop)

    if len(cap_ids) >= 3:
        # the closing cap is convex: order its vertices by angle in-plane
        cap = _sort_coplanar_loop(sorted(cap_ids), new_verts, (nx, ny, nz))
        if cap is not None:
            new_faces.append(cap)

    if len(new_faces) < 4:
        return None
    return _weld(new_verts, new_faces, cap_ids)


def polyhedron_volume(poly) -> float:
    """Volume from the divergence theorem over outward-oriented faces."""
    verts, faces = poly
    total = 0.0
    for face in faces:
        x0, y0, z0 = verts[face[0]]
        for k in range(1, len(face) - 1):
            x1, y1, z1 = verts[face[k]]
            x2, y2, z2 = verts[face[k + 1]]
            total += (
                x0 * (y1 * z2 - z1 * y2)
                - y0 * (x1 * z2 - z1 * x2)
                + z0 * (x1 * y2 - y1 * x2)
            )
    return abs(total) / 6.0
