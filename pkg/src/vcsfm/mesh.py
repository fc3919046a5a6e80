"""Triangle-mesh shape priors, ray casting that records every hit, and
surface-coordinate (face + barycentric) addressing.

Coordinates address points on the canonical topology, so the same coordinate
names the same body point on every posed copy of a mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoordinateError, ParseError
from .geometry import Ray

# hits closer than this are treated as self-intersections of a re-cast ray
EPS_MIN = 1e-9
# depth ties within this collapse to the smallest face index (shared edges)
DEPTH_TIE = 1e-12
# inclusive barycentric slack so shared-edge hits register in both triangles
BARY_TOL = 1e-10
# brute force below this face count, bounding-volume hierarchy above
BVH_FACE_THRESHOLD = 1000
_LEAF_SIZE = 8


@dataclass(frozen=True)
class SurfaceCoordinate:
    """Address of a surface point: face index + barycentric weights."""

    face: int
    bary: tuple[float, float, float]

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=np.float64)
        if b.shape != (3,) or np.any(b < -1e-9) or abs(b.sum() - 1.0) > 1e-9:
            raise InvalidCoordinateError(f"bad barycentric weights {self.bary}")
        object.__setattr__(self, "face", int(self.face))
        object.__setattr__(self, "bary", (float(b[0]), float(b[1]), float(b[2])))


@dataclass(frozen=True)
class SurfaceHit:
    """One ray-mesh intersection: depth along the ray, address, 3D point."""

    depth: float
    coord: SurfaceCoordinate
    point: np.ndarray


class TriangleMesh:
    """Immutable triangle mesh; builds its spatial index lazily."""

    def __init__(self, vertices, faces):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        self.vertices = v
        self.faces = f
        self._v0 = v[f[:, 0]]
        self._e1 = v[f[:, 1]] - self._v0
        self._e2 = v[f[:, 2]] - self._v0
        areas = 0.5 * np.linalg.norm(np.cross(self._e1, self._e2), axis=1)
        if f.size and areas.min() <= 1e-12:
            raise ValueError(f"degenerate face (area {areas.min():.3g})")
        self.face_areas = areas
        for a in (self.vertices, self.faces, self._v0, self._e1, self._e2, areas):
            a.flags.writeable = False
        self._bvh = None

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def bvh(self) -> "_Bvh":
        if self._bvh is None:
            self._bvh = _Bvh(self)
        return self._bvh

    def transformed(self, rotation=None, translation=None, scale=1.0) -> "TriangleMesh":
        """Rigidly (plus isotropic scale) transformed copy; topology shared."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.faces)


def surface_point(mesh: TriangleMesh, c: SurfaceCoordinate) -> np.ndarray:
    """Barycentric evaluation of a surface coordinate on this mesh."""
    if not 0 <= c.face < mesh.num_faces:
        raise InvalidCoordinateError(f"face {c.face} out of range")
    tri = mesh.vertices[mesh.faces[c.face]]
    return np.asarray(c.bary) @ tri


def surface_points(mesh: TriangleMesh, faces: np.ndarray, barys: np.ndarray) -> np.ndarray:
    """Vectorized surface_point for (N,) face indices and (N, 3) weights."""
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size and (faces.min() < 0 or faces.max() >= mesh.num_faces):
        raise InvalidCoordinateError("face index out of range")
    tris = mesh.vertices[mesh.faces[faces]]  # (N, 3, 3)
    return np.einsum("nk,nkj->nj", np.asarray(barys, dtype=np.float64), tris)


def surface_distance(mesh: TriangleMesh, a: SurfaceCoordinate, b: SurfaceCoordinate) -> float:
    """Euclidean distance between two surface coordinates evaluated on mesh."""
    return float(np.linalg.norm(surface_point(mesh, a) - surface_point(mesh, b)))


def _moller_trumbore(v0, e1, e2, origin, direction):
    """Intersection of one ray against triangle arrays.

    Returns (t, u, v, valid) over the triangles; `valid` applies the
    inclusive barycentric bounds and the forward-depth test.
    """
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = qvec @ direction * inv
    t = np.einsum("ij,ij->i", qvec, e2) * inv
    valid = (
        ok
        & (u >= -BARY_TOL)
        & (v >= -BARY_TOL)
        & (u + v <= 1.0 + BARY_TOL)
        & (t > EPS_MIN)
    )
    return t, u, v, valid


def _collect_hits(ray, t, u, v, valid, face_idx):
    """Sort raw intersections by depth, collapse ties, build SurfaceHits."""
    if not np.any(valid):
        return []
    t, u, v, face_idx = t[valid], u[valid], v[valid], face_idx[valid]
    order = np.lexsort((face_idx, t))
    t, u, v, face_idx = t[order], u[order], v[order], face_idx[order]

    hits = []
    i = 0
    while i < len(t):
        j = i + 1
        while j < len(t) and t[j] - t[i] <= DEPTH_TIE:
            j += 1
        group = slice(i, j)
        k = i + int(np.argmin(face_idx[group]))
        b = np.clip([1.0 - u[k] - v[k], u[k], v[k]], 0.0, None)
        b = b / b.sum()
        coord = SurfaceCoordinate(int(face_idx[k]), (b[0], b[1], b[2]))
        hits.append(SurfaceHit(float(t[k]), coord, ray.point_at(float(t[k]))))
        i = j
    return hits


def ray_mesh_all_hits(mesh: TriangleMesh, ray: Ray, accel: str = "auto") -> list[SurfaceHit]:
    """Every intersection of a ray with the mesh, ascending in depth.

    accel: "auto" (index above BVH_FACE_THRESHOLD faces), "bvh", or "brute".
    A miss returns an empty list.
    """
    if accel == "auto":
        accel = "bvh" if mesh.num_faces > BVH_FACE_THRESHOLD else "brute"
    if accel == "bvh":
        cand = mesh.bvh().candidate_faces(ray.origin, ray.direction)
        if cand.size == 0:
            return []
        t, u, v, valid = _moller_trumbore(
            mesh._v0[cand], mesh._e1[cand], mesh._e2[cand], ray.origin, ray.direction
        )
        return _collect_hits(ray, t, u, v, valid, cand)
    t, u, v, valid = _moller_trumbore(mesh._v0, mesh._e1, mesh._e2, ray.origin, ray.direction)
    return _collect_hits(ray, t, u, v, valid, np.arange(mesh.num_faces))


def first_hit(mesh: TriangleMesh, ray: Ray, accel: str = "auto") -> SurfaceHit | None:
    """Nearest intersection, or None on a miss."""
    hits = ray_mesh_all_hits(mesh, ray, accel=accel)
    return hits[0] if hits else None


def batch_first_hits(mesh: TriangleMesh, origins: np.ndarray, directions: np.ndarray,
                     chunk: int = 1024):
    """First hit of many rays at once (brute force, chunked).

    origins, directions: (N, 3); directions need not be unit length, depths are
    reported in units of the given direction vectors. Returns
    (depth (N,), face (N,), bary (N, 3), hit-mask (N,)).
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    n = len(origins)
    tables = None
    if n > 1 and np.ptp(origins, axis=0).max() == 0.0:
        tables = _shared_origin_tables(mesh, origins[0])
    depth = np.full(n, np.inf)
    face = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    for s in range(0, n, chunk):
        sl = slice(s, min(s + chunk, n))
        t, u, v, valid = _mt_batch(mesh, origins[sl], directions[sl], tables)
        t = np.where(valid, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        tb = t[rows, best]
        hit = np.isfinite(tb)
        depth[sl] = tb
        f = np.where(hit, best, -1)
        face[sl] = f
        ub, vb = u[rows, best], v[rows, best]
        b = np.stack([1.0 - ub - vb, ub, vb], axis=1)
        b = np.clip(b, 0.0, None)
        b /= np.maximum(b.sum(axis=1, keepdims=True), 1e-300)
        bary[sl] = np.where(hit[:, None], b, 0.0)
    return depth, face, bary, face >= 0


def batch_all_hits(mesh: TriangleMesh, origins: np.ndarray, directions: np.ndarray,
                   max_hits: int | None = None, chunk: int = 1024):
    """All hits of many rays (brute force, chunked), per-ray ascending depth.

    Returns a list of (depths (k,), faces (k,), barys (k, 3)) per ray, with the
    same tie-collapse rule as ray_mesh_all_hits and k capped at max_hits.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    tables = None
    if len(origins) > 1 and np.ptp(origins, axis=0).max() == 0.0:
        tables = _shared_origin_tables(mesh, origins[0])
    out = []
    for s in range(0, len(origins), chunk):
        sl = slice(s, min(s + chunk, len(origins)))
        t, u, v, valid = _mt_batch(mesh, origins[sl], directions[sl], tables)
        for r in range(t.shape[0]):
            vr = valid[r]
            if not vr.any():
                out.append((np.empty(0), np.empty(0, dtype=np.int64), np.empty((0, 3))))
                continue
            faces = np.nonzero(vr)[0]
            tr, ur, vvr = t[r, vr], u[r, vr], v[r, vr]
            order = np.lexsort((faces, tr))
            tr, ur, vvr, faces = tr[order], ur[order], vvr[order], faces[order]
            keep_t, keep_f, keep_b = [], [], []
            i = 0
            while i < len(tr):
                j = i + 1
                while j < len(tr) and tr[j] - tr[i] <= DEPTH_TIE:
                    j += 1
                k = i + int(np.argmin(faces[i:j]))
                b = np.clip([1.0 - ur[k] - vvr[k], ur[k], vvr[k]], 0.0, None)
                keep_t.append(tr[k])
                keep_f.append(faces[k])
                keep_b.append(b / b.sum())
                i = j
                if max_hits is not None and len(keep_t) >= max_hits:
                    break
            out.append(
                (np.array(keep_t), np.array(keep_f, dtype=np.int64), np.array(keep_b))
            )
    return out


def _mt_batch(mesh, origins, directions, shared_tables=None):
    """Moller-Trumbore for (R, 3) rays against every face: (R, F) outputs."""
    if shared_tables is not None:
        return _mt_batch_shared_origin(mesh, None, directions, shared_tables)
    if len(origins) > 1 and np.ptp(origins, axis=0).max() == 0.0:
        return _mt_batch_shared_origin(mesh, origins[0], directions)
    v0, e1, e2 = mesh._v0, mesh._e1, mesh._e2
    pvec = np.cross(directions[:, None, :], e2[None, :, :])
    det = np.einsum("fj,rfj->rf", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("rfj,rfj->rf", tvec, pvec) * inv
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("rfj,rj->rf", qvec, directions) * inv
    t = np.einsum("rfj,fj->rf", qvec, e2) * inv
    valid = ok & (u >= -BARY_TOL) & (v >= -BARY_TOL) & (u + v <= 1.0 + BARY_TOL) & (t > EPS_MIN)
    return t, u, v, valid


def _shared_origin_tables(mesh, origin):
    """Per-face vectors of the shared-origin Moller-Trumbore factorization."""
    v0, e1, e2 = mesh._v0, mesh._e1, mesh._e2
    tvec = np.asarray(origin)[None, :] - v0
    qvec = np.cross(tvec, e1)
    return (
        np.cross(e1, e2),  # det = -dirs @ this
        np.cross(e2, tvec),  # u numerator
        qvec,  # v numerator
        np.einsum("fj,fj->f", qvec, e2),  # t numerator (per face)
    )


def _mt_batch_shared_origin(mesh, origin, directions, tables=None):
    """Same outputs as _mt_batch when every ray starts at one origin.

    With a fixed origin the triple products factor into per-face vectors, so
    the whole batch becomes three (R,3)x(3,F) matmuls instead of an (R,F,3)
    broadcast cross product.
    """
    if tables is None:
        tables = _shared_origin_tables(mesh, origin)
    a, b_num, c_num, t_num = tables
    det = -(directions @ a.T)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    u = (directions @ b_num.T) * inv
    v = (directions @ c_num.T) * inv
    t = t_num[None, :] * inv
    valid = ok & (u >= -BARY_TOL) & (v >= -BARY_TOL) & (u + v <= 1.0 + BARY_TOL) & (t > EPS_MIN)
    return t, u, v, valid


class _Bvh:
    """Median-split bounding-volume hierarchy over face AABBs."""

    def __init__(self, mesh: TriangleMesh):
        f = mesh.faces
        tri = mesh.vertices[f]  # (F, 3, 3)
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        centers = tri.mean(axis=1)
        self.order = np.arange(len(f))
        n_nodes_cap = 2 * max(1, len(f)) + 1
        self.node_lo = np.empty((n_nodes_cap, 3))
        self.node_hi = np.empty((n_nodes_cap, 3))
        self.node_left = np.full(n_nodes_cap, -1, dtype=np.int64)
        self.node_right = np.full(n_nodes_cap, -1, dtype=np.int64)
        self.node_start = np.zeros(n_nodes_cap, dtype=np.int64)
        self.node_count = np.zeros(n_nodes_cap, dtype=np.int64)
        self._n = 0
        if len(f):
            self._build(0, len(f), lo, hi, centers)

    def _new_node(self):
        i = self._n
        self._n += 1
        return i

    def _build(self, start, end, lo, hi, centers):
        node = self._new_node()
        idx = self.order[start:end]
        self.node_lo[node] = lo[idx].min(axis=0)
        self.node_hi[node] = hi[idx].max(axis=0)
        if end - start <= _LEAF_SIZE:
            self.node_start[node] = start
            self.node_count[node] = end - start
            return node
        c = centers[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        local = np.argsort(c[:, axis], kind="stable")
        self.order[start:end] = idx[local]
        mid = start + (end - start) // 2
        self.node_left[node] = self._build(start, mid, lo, hi, centers)
        self.node_right[node] = self._build(mid, end, lo, hi, centers)
        return node

    def candidate_faces(self, origin, direction) -> np.ndarray:
        """Faces whose leaf AABB the ray enters, in index order."""
        if self._n == 0:
            return np.empty(0, dtype=np.int64)
        with np.errstate(divide="ignore"):
            inv = np.where(np.abs(direction) > 1e-300, 1.0 / direction, np.inf)
        stack = [0]
        found = []
        while stack:
            node = stack.pop()
            t1 = (self.node_lo[node] - origin) * inv
            t2 = (self.node_hi[node] - origin) * inv
            tmin = np.minimum(t1, t2).max()
            tmax = np.maximum(t1, t2).min()
            if tmax < max(tmin, 0.0):
                continue
            if self.node_left[node] < 0:
                s = self.node_start[node]
                found.append(self.order[s : s + self.node_count[node]])
            else:
                stack.append(int(self.node_right[node]))
                stack.append(int(self.node_left[node]))
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(found))


def load_mesh_text(path) -> TriangleMesh:
    """Read the `v x y z` / `f i j k` exchange format (1-based indices).

    Lines of any other type are ignored; malformed v/f lines raise ParseError.
    """
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) != 4:
                    raise ParseError("vertex line needs 3 coordinates", path, ln)
                try:
                    verts.append([float(x) for x in parts[1:]])
                except ValueError as exc:
                    raise ParseError(str(exc), path, ln) from exc
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ParseError("face line needs 3 indices", path, ln)
                try:
                    faces.append([int(x) - 1 for x in parts[1:]])
                except ValueError as exc:
                    raise ParseError(str(exc), path, ln) from exc
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64))


def save_mesh_text(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
