"""Piecewise-affine charts between model polygons.

A chart maps the model polygon of a 0-tile onto the outline of a 1-tile.
When the outline is an affine image of the 0-tile polygon the chart is a
single affine piece; otherwise it is a fan of triangles around an interior
point of the target, with boundary sides matched by proportional arc length.
Matching by arc length is what makes two charts agree on a shared edge.
"""

from __future__ import annotations

import numpy as np

_TOL = 1e-12


def _affine_from_triangles(src, dst):
    """Return (M, b) with M @ src[i] + b = dst[i] for the three vertices."""
    s = np.column_stack([src[1] - src[0], src[2] - src[0]])
    d = np.column_stack([dst[1] - dst[0], dst[2] - dst[0]])
    mat = d @ np.linalg.inv(s)
    return mat, dst[0] - mat @ src[0]


class Chart:
    """Piecewise-affine homeomorphism given by matched triangles.

    Parameters
    ----------
    src, dst : (P, 3, 2) arrays
        Source and destination triangles; piece ``i`` maps ``src[i]``
        affinely onto ``dst[i]``.
    """

    def __init__(self, src, dst):
        self.src = np.asarray(src, dtype=float)
        self.dst = np.asarray(dst, dtype=float)
        pieces = [_affine_from_triangles(s, d) for s, d in zip(self.src, self.dst)]
        self.mat = np.array([p[0] for p in pieces])
        self.shift = np.array([p[1] for p in pieces])
        self.inv_mat = np.linalg.inv(self.mat)
        self.inv_shift = -np.einsum("pij,pj->pi", self.inv_mat, self.shift)
        self.affine = bool(
            np.allclose(self.mat, self.mat[0], atol=1e-14)
            and np.allclose(self.shift, self.shift[0], atol=1e-14)
        )
        self._src_bary = self._bary_data(self.src)
        self._dst_bary = self._bary_data(self.dst)

    @staticmethod
    def _bary_data(tris):
        base = tris[:, 0, :]
        edges = np.stack([tris[:, 1] - base, tris[:, 2] - base], axis=2)
        return base, np.linalg.inv(edges)

    @staticmethod
    def _locate(pts, bary):
        """Index of the piece whose triangle best contains each point."""
        base, inv = bary
        rel = pts[:, None, :] - base[None, :, :]
        lam = np.einsum("pij,kpj->kpi", inv, rel)
        score = np.minimum(np.minimum(lam[..., 0], lam[..., 1]), 1.0 - lam[..., 0] - lam[..., 1])
        return np.argmax(score, axis=1), np.max(score, axis=1)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        if self.affine:
            out = flat @ self.mat[0].T + self.shift[0]
        else:
            piece, _ = self._locate(flat, self._src_bary)
            out = np.einsum("kij,kj->ki", self.mat[piece], flat) + self.shift[piece]
        return out.reshape(pts.shape)

    def inverse(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        if self.affine:
            out = flat @ self.inv_mat[0].T + self.inv_shift[0]
        else:
            piece, _ = self._locate(flat, self._dst_bary)
            out = np.einsum("kij,kj->ki", self.inv_mat[piece], flat) + self.inv_shift[piece]
        return out.reshape(pts.shape)

    def contains(self, pts, tol=1e-10):
        """Boolean mask of points inside the chart's image (with tolerance)."""
        flat = np.asarray(pts, dtype=float).reshape(-1, 2)
        _, score = self._locate(flat, self._dst_bary)
        return score >= -tol

    @property
    def lipschitz(self):
        """Largest operator norm over the affine pieces."""
        return float(max(np.linalg.norm(m, 2) for m in self.mat))

    @property
    def orientation(self):
        """+1 if every piece preserves model orientation, -1 if every piece reverses it."""
        dets = np.linalg.det(self.mat)
        if np.all(dets > 0):
            return 1
        if np.all(dets < 0):
            return -1
        return 0


def _side_paths(outline, corner_index):
    """Outline points between consecutive matched corners.

    Returns one list of outline indices per side ``k``, running from corner
    ``k`` to corner ``k + 1``, in whichever direction avoids other corners.
    """
    n_pts = len(outline)
    m = len(corner_index)
    corners = set(corner_index)
    paths = []
    for k in range(m):
        a, b = corner_index[k], corner_index[(k + 1) % m]
        for step in (1, -1):
            path = [a]
            i = a
            while True:
                i = (i + step) % n_pts
                path.append(i)
                if i == b or i in corners:
                    break
            if path[-1] == b:
                paths.append(path)
                break
        else:
            raise ValueError(f"corners {a} and {b} are not adjacent along the outline")
    return paths


def build_chart(zero_polygon, outline, corner_index, center=None):
    """Chart from a 0-tile polygon onto a tile outline.

    ``corner_index[k]`` is the outline index of the point that corresponds
    to corner ``k`` of ``zero_polygon``.
    """
    zero = np.asarray(zero_polygon, dtype=float)
    outline = np.asarray(outline, dtype=float)
    m = len(zero)
    corners = outline[list(corner_index)]
    if len(outline) == m:
        mat, b = _affine_from_triangles(zero[:3], corners[:3])
        if np.allclose(zero @ mat.T + b, corners, atol=1e-13):
            tris_src = np.array([[zero[0], zero[k], zero[k + 1]] for k in range(1, m - 1)])
            tris_dst = tris_src @ mat.T + b
            return Chart(tris_src, tris_dst)

    zc = zero.mean(axis=0)
    tc = corners.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    src_tris, dst_tris = [], []
    for k, path in enumerate(_side_paths(outline, corner_index)):
        pts = outline[path]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        frac = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        z0, z1 = zero[k], zero[(k + 1) % m]
        src_pts = z0[None, :] + frac[:, None] * (z1 - z0)[None, :]
        for j in range(len(pts) - 1):
            src_tris.append([zc, src_pts[j], src_pts[j + 1]])
            dst_tris.append([tc, pts[j], pts[j + 1]])
    return Chart(np.array(src_tris), np.array(dst_tris))


def polygon_area(pts):
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def segment_point_distance(p, a, b):
    """Distance from points ``p`` (k, 2) to segment ``ab``."""
    p = np.atleast_2d(p)
    ab = b - a
    t = np.clip(((p - a) @ ab) / max(float(ab @ ab), _TOL), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)
