"""Triangulation of the unit cell around a star-shaped inclusion.

The mesh is a transfinite O-grid: the inclusion boundary polyline (optionally
subdivided along its edges, which leaves the geometry unchanged) is joined by
graded layers to a uniform node cycle on the cell boundary, and filled inside
by concentric shrunken copies of the polyline down to a center point.

Two exactness guarantees matter downstream and are enforced by construction:

* opposite cell edges carry bitwise-identical node coordinates (the boundary
  cycle is built from one shared parameter array), so periodic identification
  and cell-to-cell stitching never need geometric tolerances;
* mesh nodes on the inclusion boundary lie exactly on the polyline, so the
  meshed geometry is the polyline itself at every refinement level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Array, CellGeometry

__all__ = ["MeshError", "UnitCellMesh", "build_cell_mesh", "dump_mesh"]

EXTERIOR = 0
INTERIOR = 1


class MeshError(ValueError):
    """Mesh generation failed (unsupported geometry or degenerate elements)."""


@dataclass(frozen=True)
class UnitCellMesh:
    """Conforming triangulation of Q = [0,1]^2 fitted to the inclusion.

    Fields:
        nodes: (n, 2) coordinates.
        triangles: (t, 3) node indices, counter-clockwise.
        tri_region: (t,) region tag per triangle, 0 exterior / 1 interior.
        ring: node ids on the inclusion boundary in counter-clockwise order;
            consecutive pairs (cyclically) are the interface segments.
        boundary_cycle: node ids on the cell boundary, counter-clockwise.
        h_max: longest element edge.
        refine: subdivision factor the mesh was built with.
    """

    nodes: Array
    triangles: Array
    tri_region: Array
    ring: Array
    boundary_cycle: Array
    h_max: float
    refine: int = 1
    _edge_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def edge_node_ids(self, side: str) -> Array:
        """Node ids on one cell edge, sorted along the edge (corners included)."""
        if side in self._edge_cache:
            return self._edge_cache[side]
        x = self.nodes[self.boundary_cycle, 0]
        y = self.nodes[self.boundary_cycle, 1]
        if side == "left":
            sel = x == 0.0
            order = np.argsort(y[sel], kind="stable")
        elif side == "right":
            sel = x == 1.0
            order = np.argsort(y[sel], kind="stable")
        elif side == "bottom":
            sel = y == 0.0
            order = np.argsort(x[sel], kind="stable")
        elif side == "top":
            sel = y == 1.0
            order = np.argsort(x[sel], kind="stable")
        else:
            raise ValueError(f"unknown side {side!r}")
        ids = self.boundary_cycle[sel][order]
        self._edge_cache[side] = ids
        return ids

    def interface_segments(self) -> Array:
        """(N, 2) node id pairs of the interface segments, counter-clockwise."""
        return np.column_stack([self.ring, np.roll(self.ring, -1)])

    def tri_areas(self) -> Array:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )


def _subdivided_boundary(geom: CellGeometry, refine: int) -> Array:
    v = geom.vertices
    n = len(v)
    nxt = np.roll(v, -1, axis=0)
    t = np.arange(refine) / refine
    # points of edge i at parameters t: shape (n, refine, 2), flattened CCW
    pts = v[:, None, :] * (1.0 - t)[None, :, None] + nxt[:, None, :] * t[None, :, None]
    pts[:, 0, :] = v  # keep original vertices bit-exact
    return pts.reshape(n * refine, 2)


def _outer_cycle(n_total: int) -> Array:
    """Uniform CCW node cycle on the cell boundary, starting at (0, 0).

    All coordinate values are drawn from one shared parameter array, so the
    four edges carry identical position sets."""
    n4 = n_total // 4
    param = np.arange(n4 + 1) / n4
    bottom = np.column_stack([param[:-1], np.zeros(n4)])
    right = np.column_stack([np.ones(n4), param[:-1]])
    top = np.column_stack([param[n4:0:-1], np.ones(n4)])
    left = np.column_stack([np.zeros(n4), param[n4:0:-1]])
    return np.vstack([bottom, right, top, left])


def build_cell_mesh(
    geom: CellGeometry,
    refine: int = 1,
    n_ext: int | None = None,
    n_int: int | None = None,
) -> UnitCellMesh:
    """Mesh the unit cell fitted to geom's boundary polyline.

    Args:
        geom: inclusion geometry; the (subdivided) polyline must be
            star-shaped with respect to its vertex centroid and have a node
            count divisible by 8.
        refine: edge-subdivision factor; doubles resolution without changing
            the geometry.
        n_ext: radial layers between the inclusion and the cell boundary
            (defaults to a balanced count scaled by refine).
        n_int: concentric rings inside the inclusion (same default policy).
    """
    if refine < 1:
        raise MeshError(f"refine must be >= 1, got {refine}")
    b = _subdivided_boundary(geom, refine)
    n_ring = len(b)
    if n_ring % 8 != 0:
        raise MeshError(
            f"subdivided boundary has {n_ring} nodes; need a multiple of 8 "
            "for edge-matched cell-boundary placement"
        )
    center = b.mean(axis=0)
    rel = b - center
    radii = np.hypot(rel[:, 0], rel[:, 1])
    cross = rel[:, 0] * np.roll(rel[:, 1], -1) - rel[:, 1] * np.roll(rel[:, 0], -1)
    if not (cross > 0.0).all():
        raise MeshError(
            "inclusion boundary is not star-shaped with respect to its "
            "centroid; this mesher only supports star-shaped polylines"
        )

    if n_ext is None:
        r_mean = float(radii.mean())
        base = max(3, round((n_ring / refine) * (0.5 - r_mean) / (2.0 * np.pi * r_mean)))
        n_ext = refine * base
    if n_int is None:
        n_int = refine * max(2, round((n_ring / refine) / (2.0 * np.pi)))

    outer = _outer_cycle(n_ring)
    # align the outer cycle with the ring: roll so the ray directions match
    ring_angle0 = np.arctan2(rel[0, 1], rel[0, 0])
    outer_angles = np.arctan2(outer[:, 1] - 0.5, outer[:, 0] - 0.5)
    j_star = int(np.argmin(np.abs(np.angle(np.exp(1j * (outer_angles - ring_angle0))))))
    outer = np.roll(outer, -j_star, axis=0)

    n_layers = n_ext + 1  # ring layer 0 .. outer layer n_ext
    nodes = [np.empty((n_layers * n_ring, 2))]
    nodes[0][:n_ring] = b
    for layer in range(1, n_ext):
        s = layer / n_ext
        nodes[0][layer * n_ring : (layer + 1) * n_ring] = b + s * (outer - b)
    nodes[0][n_ext * n_ring :] = outer

    base_int = n_layers * n_ring
    rings_inner = []
    for layer in range(1, n_int):
        r = 1.0 - layer / n_int
        rings_inner.append(center + r * rel)
    center_id = base_int + (n_int - 1) * n_ring
    if rings_inner:
        nodes.append(np.vstack(rings_inner))
    nodes.append(center[None, :])
    coords = np.vstack(nodes)

    def ring_ids(layer: int) -> Array:
        if layer == 0:
            return np.arange(n_ring)
        return base_int + (layer - 1) * n_ring + np.arange(n_ring)

    tris = []
    regions = []
    jj = np.arange(n_ring)
    j1 = np.roll(jj, -1)
    # exterior layers
    for layer in range(n_ext):
        a = layer * n_ring + jj
        bb = layer * n_ring + j1
        cc = (layer + 1) * n_ring + j1
        dd = (layer + 1) * n_ring + jj
        tris.append(np.column_stack([a, dd, cc]))
        tris.append(np.column_stack([a, cc, bb]))
        regions.extend([EXTERIOR, EXTERIOR])
    # interior rings (outer ring of the pair has the larger radius)
    for layer in range(n_int - 1):
        a = ring_ids(layer)[jj]
        bb = ring_ids(layer)[j1]
        cc = ring_ids(layer + 1)[j1]
        dd = ring_ids(layer + 1)[jj]
        tris.append(np.column_stack([a, bb, cc]))
        tris.append(np.column_stack([a, cc, dd]))
        regions.extend([INTERIOR, INTERIOR])
    # center fan
    last = ring_ids(n_int - 1)
    tris.append(np.column_stack([np.full(n_ring, center_id), last[j1], last[jj]]))
    regions.append(INTERIOR)

    triangles = np.vstack(tris).astype(np.int64)
    # regions were appended per stacked block; expand to per-triangle
    tri_region = np.concatenate(
        [np.full(len(t), r, dtype=np.uint8) for t, r in zip(tris, regions)]
    )

    p = coords[triangles]
    signed = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    flip = signed < 0.0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    signed = np.abs(signed)
    if signed.min() <= 1e-14:
        raise MeshError(
            f"degenerate element (area {signed.min():.3e}); the transfinite "
            "map tangled — geometry too far from circular for this mesher"
        )

    edges = coords[triangles] - coords[np.roll(triangles, -1, axis=1)]
    h_max = float(np.hypot(edges[..., 0], edges[..., 1]).max())

    boundary_ids = n_ext * n_ring + np.arange(n_ring)
    # report the cycle rolled back to start at (0, 0) for readability
    start = int(np.argmin(coords[boundary_ids, 0] ** 2 + coords[boundary_ids, 1] ** 2))
    boundary_ids = np.roll(boundary_ids, -start)

    coords.flags.writeable = False
    triangles.flags.writeable = False
    tri_region.flags.writeable = False
    return UnitCellMesh(
        nodes=coords,
        triangles=triangles,
        tri_region=tri_region,
        ring=np.arange(n_ring),
        boundary_cycle=boundary_ids,
        h_max=h_max,
        refine=refine,
    )


def dump_mesh(mesh: UnitCellMesh, path: str) -> None:
    """Plain-text mesh dump: node count + coordinates, then triangles with
    region tags.  Meant for external inspection, not round-tripping."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            f.write(f"{x:.17e} {y:.17e}\n")
        f.write(f"triangles {len(mesh.triangles)}\n")
        for (i, j, k), r in zip(mesh.triangles, mesh.tri_region):
            f.write(f"{i} {j} {k} {r}\n")
