"""Conforming triangular meshes, skeletons and newest-vertex bisection.

A :class:`Mesh` stores counter-clockwise triangles together with the local
index of each triangle's refinement edge (the edge opposite local vertex
``k``).  Meshes are immutable values: :func:`bisect` returns a new mesh.

Examples
--------
>>> from goafem.mesh import build_square_mesh, bisect
>>> m = build_square_mesh(1, ((0.7, 0.8), (0.3, 0.5)))
>>> m2 = bisect(m, {0, 5})
>>> m2.n_triangles > m.n_triangles
True
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

Rect = tuple[tuple[float, float], tuple[float, float]]

_GEOM_TOL = 1e-12


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming 2D triangulation.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counter-clockwise.
    refedge : (nt,) int array
        Local index in {0, 1, 2} of the refinement edge; edge ``k`` is the
        one opposite local vertex ``k``.
    in_goal : (nt,) bool array
        Membership of each triangle in the quantity-of-interest region.
    generation : (nt,) int array
        Number of bisections separating the triangle from the initial mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    refedge: np.ndarray
    in_goal: np.ndarray
    generation: np.ndarray
    omega0: Rect | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        nt = len(self.triangles)
        object.__setattr__(self, "refedge", _frozen(self.refedge, np.int64))
        object.__setattr__(self, "in_goal", _frozen(self.in_goal, bool))
        object.__setattr__(self, "generation", _frozen(self.generation, np.int64))
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        for name in ("refedge", "in_goal", "generation"):
            if getattr(self, name).shape != (nt,):
                raise ValueError(f"{name} must have one entry per triangle")
        if nt and not np.all(np.isin(self.refedge, (0, 1, 2))):
            raise ValueError("refinement-edge index must be 0, 1 or 2")
        if nt and np.any(self.signed_areas() <= 0.0):
            raise ValueError("triangles must have positive signed area")

    @classmethod
    def from_arrays(cls, vertices, triangles, in_goal=None, omega0=None):
        """Build a mesh seeding each refinement edge with the longest edge.

        Clockwise triangles are reoriented.  When ``in_goal`` is omitted and
        ``omega0`` is given, triangles are tagged by centroid.
        """
        vertices = np.asarray(vertices, dtype=float)
        tri = np.array(triangles, dtype=np.int64)
        p = vertices[tri]
        area2 = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        flip = area2 < 0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        p = vertices[tri]
        lengths = np.stack(
            [np.linalg.norm(p[:, (k + 2) % 3] - p[:, (k + 1) % 3], axis=1) for k in range(3)],
            axis=1,
        )
        refedge = np.argmax(lengths, axis=1)
        if in_goal is None:
            if omega0 is None:
                in_goal = np.zeros(len(tri), bool)
            else:
                in_goal = _inside_rect(p.mean(axis=1), omega0)
        return cls(vertices, tri, refedge, in_goal, np.zeros(len(tri), np.int64), omega0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def signed_areas(self) -> np.ndarray:
        p = self.corners()
        return 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def edge_lengths(self) -> np.ndarray:
        """(nt, 3) lengths; column ``k`` is the edge opposite vertex ``k``."""
        p = self.corners()
        return np.stack(
            [np.linalg.norm(p[:, (k + 2) % 3] - p[:, (k + 1) % 3], axis=1) for k in range(3)],
            axis=1,
        )

    def diameters(self) -> np.ndarray:
        """Element diameters h_T (longest edge)."""
        return self.edge_lengths().max(axis=1)

    def perimeters(self) -> np.ndarray:
        return self.edge_lengths().sum(axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in radians."""
        p = self.corners()
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(angles))

    def centroids(self) -> np.ndarray:
        return self.corners().mean(axis=1)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _inside_rect(x, rect, tol=_GEOM_TOL):
    (x0, x1), (y0, y1) = rect
    x = np.asarray(x)
    return (
        (x[..., 0] >= x0 - tol)
        & (x[..., 0] <= x1 + tol)
        & (x[..., 1] >= y0 - tol)
        & (x[..., 1] <= y1 + tol)
    )


def _check_rect(rect, box):
    (x0, x1), (y0, y1) = rect
    (bx0, bx1), (by0, by1) = box
    if not (bx0 < x0 < x1 < bx1 and by0 < y0 < y1 < by1):
        raise ValueError(f"region {rect} is not strictly inside {box}")


def _breakpoints(lo, hi, step, keep, insert):
    """Uniform breakpoints plus ``insert``; drop uniform points crowding an inserted one."""
    base = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    insert = np.asarray(insert, float)
    keep = np.asarray(keep, float)
    crowded = np.array(
        [np.min(np.abs(insert - b)) < 0.3 * step and np.min(np.abs(keep - b)) > 1e-12 for b in base]
    )
    pts = np.concatenate([base[~crowded], insert, keep])
    pts = np.unique(np.round(pts, 12))
    return pts


def _grid_mesh(xs, ys, inside, omega0):
    """Triangulate the cells of a tensor grid whose centres satisfy ``inside``.

    Each cell is split along a diagonal whose direction alternates with the
    cell parity; the diagonal is the longest edge of both halves, so the
    initial refinement edges are compatible.
    """
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vid = -np.ones(X.shape, dtype=np.int64)
    cells = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            cx, cy = 0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])
            if inside(cx, cy):
                cells.append((i, j))
    for i, j in cells:
        vid[i : i + 2, j : j + 2] = 0
    used = vid == 0
    vid[used] = np.arange(used.sum())
    vertices = np.stack([X[used], Y[used]], axis=1)
    tris = []
    for i, j in cells:
        a, b, c, d = vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]
        if (i + j) % 2 == 0:
            tris += [(a, b, c), (a, c, d)]
        else:
            tris += [(a, b, d), (b, c, d)]
    return Mesh.from_arrays(vertices, np.array(tris), omega0=omega0)


CROSS_GOAL = ((1.2, 1.4), (0.2, 0.4))


def in_cross(x, y):
    """Membership in (-2,2)x(-1,1) union (-1,1)x(-2,2)."""
    return (abs(x) < 2 and abs(y) < 1) or (abs(x) < 1 and abs(y) < 2)


def build_cross_mesh(step: float = 0.25, omega0: Rect = CROSS_GOAL) -> Mesh:
    """Goal-conforming initial mesh of the cross-shaped domain."""
    _check_rect(omega0, ((-2.0, 2.0), (-1.0, 1.0)))
    keep = [-2.0, -1.0, 1.0, 2.0]
    xs = _breakpoints(-2.0, 2.0, step, keep, omega0[0])
    ys = _breakpoints(-2.0, 2.0, step, keep, omega0[1])
    return _grid_mesh(xs, ys, in_cross, omega0)


def build_square_mesh(n: int, omega0: Rect) -> Mesh:
    """Goal-conforming mesh of the unit square with roughly ``4 n`` cells per side.

    Raises
    ------
    ValueError
        If ``n < 1`` or ``omega0`` is not strictly inside the unit square.
    """
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    _check_rect(omega0, ((0.0, 1.0), (0.0, 1.0)))
    step = 1.0 / (4 * n)
    xs = _breakpoints(0.0, 1.0, step, [0.0, 1.0], omega0[0])
    ys = _breakpoints(0.0, 1.0, step, [0.0, 1.0], omega0[1])
    return _grid_mesh(xs, ys, lambda x, y: True, omega0)


def _edge_table(triangles):
    """Unique edges (sorted vertex pairs) and the (nt, 3) triangle-to-edge map."""
    nt = len(triangles)
    loc = np.stack(
        [triangles[:, [(k + 1) % 3, (k + 2) % 3]] for k in range(3)], axis=1
    ).reshape(-1, 2)
    loc = np.sort(loc, axis=1)
    edges, inverse = np.unique(loc, axis=0, return_inverse=True)
    return edges, inverse.reshape(nt, 3)


def _split(tri, ca, ab, midpoint):
    """Bisect canonical triangles ``(a, b, c)`` whose refinement edge is ``bc``.

    Returns the children in canonical form (refinement edge opposite local
    vertex 0) and the ids of their refinement edges in the parent edge
    numbering; ``-1`` marks edges created by this bisection.
    """
    a, b, c = tri.T
    m = midpoint
    child1 = np.stack([m, a, b], axis=1)
    child2 = np.stack([m, c, a], axis=1)
    return child1, ab, child2, ca


def bisect(mesh: Mesh, marked, all_edges: bool = False) -> Mesh:
    """Newest-vertex bisection of the marked triangles with conformity closure.

    Every marked triangle is bisected through its refinement edge at least
    once; further bisections are added until no hanging node remains.  The
    children's refinement edges are the edges opposite the new vertex.

    With ``all_edges`` a marked triangle has all three edges bisected (three
    bisections, four children), which roughly doubles the growth per step.
    """
    if mesh.n_triangles == 0:
        raise ValueError("cannot refine an empty mesh")
    marked = np.unique(np.fromiter(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise IndexError("marked triangle index out of range")

    nt = mesh.n_triangles
    edges, t2e = _edge_table(mesh.triangles)
    rows = np.arange(nt)
    ref = t2e[rows, mesh.refedge]
    flagged = np.zeros(len(edges), bool)
    flagged[(t2e[marked] if all_edges else ref[marked]).ravel()] = True
    while True:
        pending = flagged[t2e].any(axis=1) & ~flagged[ref]
        if not pending.any():
            break
        flagged[ref[pending]] = True

    split_ids = np.flatnonzero(flagged)
    newv = -np.ones(len(edges), np.int64)
    newv[split_ids] = mesh.n_vertices + np.arange(split_ids.size)
    midpoints = 0.5 * (mesh.vertices[edges[split_ids, 0]] + mesh.vertices[edges[split_ids, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    # canonical rotation: refinement edge opposite local vertex 0
    r = mesh.refedge
    perm = np.stack([r, (r + 1) % 3, (r + 2) % 3], axis=1)
    canon = mesh.triangles[rows[:, None], perm]
    e_ca = t2e[rows, (r + 1) % 3]
    e_ab = t2e[rows, (r + 2) % 3]

    # (triangle, refinement-edge id, parent, order key, generation)
    keep = ~flagged[ref]
    out_tri = [canon[keep]]
    out_parent = [rows[keep]]
    out_key = [np.zeros(keep.sum(), np.int64)]
    out_gen = [mesh.generation[keep]]

    go = flagged[ref]
    p = rows[go]
    c1, r1, c2, r2 = _split(canon[go], e_ca[go], e_ab[go], newv[ref[go]])
    for child, rid, key in ((c1, r1, 0), (c2, r2, 2)):
        again = flagged[rid]
        out_tri.append(child[~again])
        out_parent.append(p[~again])
        out_key.append(np.full((~again).sum(), key, np.int64))
        out_gen.append(mesh.generation[p[~again]] + 1)
        g1, _, g2, _ = _split(child[again], None, None, newv[rid[again]])
        for grand, sub in ((g1, 0), (g2, 1)):
            out_tri.append(grand)
            out_parent.append(p[again])
            out_key.append(np.full(again.sum(), key + sub, np.int64))
            out_gen.append(mesh.generation[p[again]] + 2)

    tri = np.concatenate(out_tri)
    parent = np.concatenate(out_parent)
    key = np.concatenate(out_key)
    gen = np.concatenate(out_gen)
    order = np.lexsort((key, parent))
    return Mesh(
        vertices,
        tri[order],
        np.zeros(len(tri), np.int64),
        mesh.in_goal[parent[order]],
        gen[order],
        mesh.omega0,
    )


def refine_uniform(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = bisect(mesh, range(mesh.n_triangles))
    return mesh


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Edges of a mesh with a fixed orientation.

    ``left`` is T+ (the adjacent triangle with smaller index), ``right`` is
    T- or ``-1`` on the boundary.  ``normal`` points from T+ to T-, and is
    the outward normal of the domain on boundary edges.  ``left_local`` and
    ``right_local`` give the local edge index inside each neighbour.
    """

    edges: np.ndarray
    left: np.ndarray
    right: np.ndarray
    left_local: np.ndarray
    right_local: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    tri_edges: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior(self) -> np.ndarray:
        return self.right >= 0

    @property
    def boundary(self) -> np.ndarray:
        return self.right < 0


def _has_hanging_node(vertices, bedges) -> bool:
    """True if a boundary vertex lies strictly inside a boundary edge.

    A hanging node splits one side of an element into two edges, and all
    three of them are then seen by a single triangle only.
    """
    if len(bedges) == 0:
        return False
    bv = np.unique(bedges)
    tree = cKDTree(vertices[bv])
    a, b = vertices[bedges[:, 0]], vertices[bedges[:, 1]]
    mid, half = 0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1)
    for k, near in enumerate(tree.query_ball_point(mid, half * (1 + 1e-9))):
        for j in near:
            x = bv[j]
            if x in bedges[k]:
                continue
            d, r = b[k] - a[k], vertices[x] - a[k]
            if abs(d[0] * r[1] - d[1] * r[0]) <= 1e-10 * (d @ d):
                return True
    return False


def skeleton(mesh: Mesh) -> Skeleton:
    """Extract the skeleton; raises ``ValueError`` for non-conforming meshes."""
    nt = mesh.n_triangles
    edges, t2e = _edge_table(mesh.triangles)
    ne = len(edges)
    flat = t2e.ravel()
    count = np.bincount(flat, minlength=ne)
    if np.any(count > 2):
        raise ValueError("non-conforming mesh: edge shared by more than two triangles")
    if _has_hanging_node(mesh.vertices, edges[count == 1]):
        raise ValueError("non-conforming mesh: hanging node detected")

    tri_of = np.repeat(np.arange(nt), 3)
    loc_of = np.tile(np.arange(3), nt)
    order = np.lexsort((tri_of, flat))
    starts = np.searchsorted(flat[order], np.arange(ne))
    left = tri_of[order][starts]
    left_local = loc_of[order][starts]
    right = -np.ones(ne, np.int64)
    right_local = -np.ones(ne, np.int64)
    two = count == 2
    right[two] = tri_of[order][starts[two] + 1]
    right_local[two] = loc_of[order][starts[two] + 1]

    tl = mesh.triangles[left]
    a = mesh.vertices[tl[np.arange(ne), (left_local + 1) % 3]]
    b = mesh.vertices[tl[np.arange(ne), (left_local + 2) % 3]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    # CCW triangle: outward normal of edge a->b is (t_y, -t_x)
    normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    return Skeleton(edges, left, right, left_local, right_local, normal, length, t2e)


def eta_e(mesh: Mesh, skel: Skeleton, edge, p_t: int, d: int = 2):
    """Interior-penalty parameter of one edge (or an array of edges).

    ``(p_t+1)(p_t+d)/d`` times the perimeter/area ratio of the adjacent
    triangle, averaged over both neighbours on interior edges.
    """
    if d != 2:
        raise ValueError("only d = 2 is supported")
    if p_t < 1:
        raise ValueError("p_t must be >= 1")
    area = mesh.areas()
    if np.any(area <= 0.0):
        raise ValueError("degenerate triangle")
    ratio = mesh.perimeters() / area
    edge = np.asarray(edge)
    left = skel.left[edge]
    right = skel.right[edge]
    r = np.where(right >= 0, 0.5 * (ratio[left] + ratio[np.maximum(right, 0)]), ratio[left])
    val = (p_t + 1) * (p_t + d) / d * r
    return float(val) if val.ndim == 0 else val


def write_mesh(path, mesh: Mesh, indicator=None) -> None:
    """Write the plain-text mesh dump.

    Header ``nv nt``; then ``x y`` per vertex; then ``i j k tag indicator``
    per triangle.
    """
    if indicator is None:
        indicator = np.zeros(mesh.n_triangles)
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [
        f"{i} {j} {k} {int(tag)} {ind:.17g}"
        for (i, j, k), tag, ind in zip(mesh.triangles, mesh.in_goal, indicator)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Inverse of :func:`write_mesh`; returns ``(mesh, indicator)``."""
    rows = Path(path).read_text().split("\n")
    nv, nt = map(int, rows[0].split())
    verts = np.array([list(map(float, r.split())) for r in rows[1 : 1 + nv]]).reshape(nv, 2)
    body = [r.split() for r in rows[1 + nv : 1 + nv + nt]]
    tri = np.array([[int(c) for c in r[:3]] for r in body], dtype=np.int64).reshape(nt, 3)
    tag = np.array([int(r[3]) for r in body], dtype=bool)
    ind = np.array([float(r[4]) for r in body])
    return Mesh.from_arrays(verts, tri, in_goal=tag), ind
