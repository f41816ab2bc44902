"""Scattering-strip mesh built by replicating one master cell mesh.

The strip spans one period 0 <= x2 <= 2pi and the slab plus air margins in
x1. Every composite cell is the same master unit-cell mesh scaled by the
cell size eta, so cells are exact translates of each other and per-cell
quantities can be computed once on the template. Ring nodes are doubled
(an exterior-side and an interior-side copy at the same coordinates) so
the field may jump across the resonator sheet; interior elements
reference only interior copies.

Nodes shared between neighboring cells are merged by exact coordinate
lookup. That is safe, with no geometric tolerance, because the master
mesh guarantees edge nodes sit at bitwise-identical parameter values on
opposite edges and every global coordinate is computed by the single
formula origin + (cell_index + local) * eta.

The x2 = 2pi nodes are not independent unknowns: each one is paired with
its x2 = 0 partner and carries the Bloch phase e^{2 pi i kappa} at
assembly time. The mesh only records the pairing; the phase value belongs
to the physics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cellmesh import EXTERIOR, INTERIOR, MeshError, UnitCellMesh, build_cell_mesh
from .model import CellGeometry, SlabLattice, validate_lattice

MARGIN = 2

Array = np.ndarray


@dataclass(frozen=True)
class StripTemplate:
    """Master cell mesh with the ring nodes doubled."""

    master: UnitCellMesh
    nodes: Array  # (T, 2) unit-cell coordinates, ring duplicates appended
    tag: Array  # (T,) 0 = exterior side, 1 = interior side
    node_region: Array  # (T,) EXTERIOR / INTERIOR
    triangles: Array  # (t, 3) into template nodes
    tri_region: Array
    sheet_ext: Array  # (S, 2) exterior-copy endpoints of each ring segment
    sheet_int: Array  # (S, 2) interior-copy endpoints
    sheet_len: Array  # (S,) unit-cell segment lengths
    edge_param: Array  # (n4 + 1,) node parameters along a cell edge

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def _make_template(master: UnitCellMesh) -> StripTemplate:
    nm = master.n_nodes
    ring = master.ring
    n_ring = len(ring)
    remap = np.arange(nm + n_ring)
    remap[ring] = nm + np.arange(n_ring)

    tris = master.triangles.copy()
    interior = master.tri_region == INTERIOR
    tris[interior] = remap[tris[interior]]

    nodes = np.vstack([master.nodes, master.nodes[ring]])
    tag = np.zeros(len(nodes), dtype=np.uint8)
    tag[nm:] = 1
    node_region = np.full(len(nodes), EXTERIOR, dtype=np.uint8)
    node_region[np.unique(tris[interior])] = INTERIOR

    seg_ext = master.interface_segments()
    nxt = np.roll(np.arange(n_ring), -1)
    seg_int = np.column_stack([nm + np.arange(n_ring), nm + nxt])
    seg_vec = master.nodes[seg_ext[:, 1]] - master.nodes[seg_ext[:, 0]]
    seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])

    bottom = master.edge_node_ids("bottom")
    return StripTemplate(
        master=master,
        nodes=nodes,
        tag=tag,
        node_region=node_region,
        triangles=tris,
        tri_region=master.tri_region.copy(),
        sheet_ext=seg_ext,
        sheet_int=seg_int,
        sheet_len=seg_len,
        edge_param=master.nodes[bottom, 0].copy(),
    )


@dataclass
class StripMesh:
    """Global strip triangulation with doubled sheet nodes.

    `pmap` maps every full node to its reduced unknown; nodes on the
    x2 = 2pi seam map to their x2 = 0 partner and are flagged in
    `seam_mask` so assembly can attach the Bloch phase.
    """

    geom: CellGeometry
    lattice: SlabLattice
    refine: int
    template: StripTemplate
    nodes: Array
    node_tag: Array
    node_region: Array
    triangles: Array
    tri_region: Array
    tri_cell: Array  # flat slab-cell index i1 * n2 + i2, or -1 in the margins
    sheet_ext: Array  # (S, 2) global full node ids
    sheet_int: Array
    sheet_len: Array  # physical lengths
    sheet_cell: Array
    cell_nodes: Array  # (n1, n2, T) global full node ids of each slab cell
    pmap: Array
    seam_mask: Array
    n_reduced: int
    trace_minus: Array  # reduced ids on x1 = x_minus, ordered by x2
    trace_plus: Array
    trace_y: Array
    x_minus: float
    x_plus: float
    delta: float  # trace node spacing
    column_x: Array  # exact x1 values of all vertical cell boundaries
    _line_cache: dict = field(default_factory=dict, repr=False)

    @property
    def eta(self) -> float:
        return self.lattice.eta

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def bloch_phase(self, kappa: float) -> Array:
        """Per-full-node expansion phase for quasi-momentum `kappa`."""
        phase = np.ones(self.n_nodes, dtype=complex)
        phase[self.seam_mask] = np.exp(2j * np.pi * kappa)
        return phase

    def tri_areas(self) -> Array:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def vertical_line_nodes(self, x_value: float) -> Array:
        """Full node ids on an exact vertical mesh line, ordered by x2,
        seam copies excluded."""
        sel = np.nonzero((self.nodes[:, 0] == x_value) & ~self.seam_mask)[0]
        if sel.size == 0:
            raise MeshError(f"no mesh line at x1 = {x_value!r}; see column_x")
        return sel[np.argsort(self.nodes[sel, 1], kind="stable")]

    def translate_gap(self) -> float:
        """Largest deviation of any cell from an exact translate of the
        template (floating-point placement error only)."""
        tpl = self.template.nodes * self.eta
        worst = 0.0
        n1, n2 = self.lattice.n1, self.lattice.n2
        for i1, i2 in ((0, 0), (n1 - 1, n2 - 1), (n1 // 2, n2 // 2)):
            got = self.nodes[self.cell_nodes[i1, i2]]
            origin = got[0] - tpl[0]
            worst = max(worst, float(np.abs(got - origin - tpl).max()))
        return worst


def build_strip_mesh(geom: CellGeometry, lattice: SlabLattice, refine: int = 1) -> StripMesh:
    """Replicate the master mesh of `geom` over the slab and margins."""
    validate_lattice(lattice)
    master = build_cell_mesh(geom, refine=refine)
    tpl = _make_template(master)
    eta = lattice.eta
    n1, n2, mc = lattice.n1, lattice.n2, lattice.margin_cells
    a = lattice.a

    key_to_id: dict = {}
    xs: list = []
    ys: list = []
    tags: list = []
    regions: list = []

    def insert(gx: Array, gy: Array, tag: Array, region: Array) -> Array:
        gids = np.empty(len(gx), dtype=np.int64)
        for t in range(len(gx)):
            key = (gx[t], gy[t], tag[t])
            gid = key_to_id.get(key)
            if gid is None:
                gid = len(xs)
                key_to_id[key] = gid
                xs.append(gx[t])
                ys.append(gy[t])
                tags.append(tag[t])
                regions.append(region[t])
            gids[t] = gid
        return gids

    tri_blocks: list = []
    tri_region_blocks: list = []
    tri_cell_blocks: list = []
    sheet_ext_blocks: list = []
    sheet_int_blocks: list = []
    sheet_cell_blocks: list = []
    cell_nodes = np.empty((n1, n2, tpl.n_nodes), dtype=np.int64)

    txl = tpl.nodes[:, 0]
    tyl = tpl.nodes[:, 1]
    for i1 in range(n1):
        for i2 in range(n2):
            gx = a + (i1 + txl) * eta
            gy = (i2 + tyl) * eta
            gids = insert(gx, gy, tpl.tag, tpl.node_region)
            cell_nodes[i1, i2] = gids
            tri_blocks.append(gids[tpl.triangles])
            tri_region_blocks.append(tpl.tri_region)
            tri_cell_blocks.append(np.full(len(tpl.triangles), i1 * n2 + i2, dtype=np.int64))
            sheet_ext_blocks.append(gids[tpl.sheet_ext])
            sheet_int_blocks.append(gids[tpl.sheet_int])
            sheet_cell_blocks.append(np.full(len(tpl.sheet_len), i1 * n2 + i2, dtype=np.int64))

    # structured margin blocks, built on the same edge parameters so their
    # boundary nodes coincide bitwise with the replicated cells
    p = tpl.edge_param
    n4 = len(p) - 1
    pg, qg = np.meshgrid(p, p, indexing="ij")  # (n4+1, n4+1) local x, y
    quad = []
    for i in range(n4):
        for j in range(n4):
            v00 = i * (n4 + 1) + j
            v10 = (i + 1) * (n4 + 1) + j
            v11 = (i + 1) * (n4 + 1) + j + 1
            v01 = i * (n4 + 1) + j + 1
            quad.append((v00, v10, v11))
            quad.append((v00, v11, v01))
    quad = np.asarray(quad, dtype=np.int64)
    flat_x = pg.ravel()
    flat_y = qg.ravel()
    margin_tag = np.zeros(flat_x.size, dtype=np.uint8)
    margin_region = np.full(flat_x.size, MARGIN, dtype=np.uint8)

    margin_columns = list(range(-mc, 0)) + list(range(n1, n1 + mc))
    for i1 in margin_columns:
        for i2 in range(n2):
            gx = a + (i1 + flat_x) * eta
            gy = (i2 + flat_y) * eta
            gids = insert(gx, gy, margin_tag, margin_region)
            tri_blocks.append(gids[quad])
            tri_region_blocks.append(np.full(len(quad), MARGIN, dtype=np.uint8))
            tri_cell_blocks.append(np.full(len(quad), -1, dtype=np.int64))

    nodes = np.column_stack([np.asarray(xs), np.asarray(ys)])
    node_tag = np.asarray(tags, dtype=np.uint8)
    node_region = np.asarray(regions, dtype=np.uint8)
    triangles = np.vstack(tri_blocks)
    tri_region = np.concatenate(tri_region_blocks)
    tri_cell = np.concatenate(tri_cell_blocks)

    # pair the x2 = 2pi seam with x2 = 0 and number the reduced unknowns
    y_top = (float(n2 - 1) + 1.0) * eta
    seam_mask = nodes[:, 1] == y_top
    red_index = np.full(len(nodes), -1, dtype=np.int64)
    red_index[~seam_mask] = np.arange(int((~seam_mask).sum()))
    pmap = red_index.copy()
    for j in np.nonzero(seam_mask)[0]:
        partner = key_to_id.get((nodes[j, 0], 0.0, node_tag[j]))
        if partner is None or seam_mask[partner]:
            raise MeshError("x2-seam node has no x2 = 0 partner; mesh is inconsistent")
        pmap[j] = red_index[partner]
    n_reduced = int((~seam_mask).sum())

    x_minus = a + (float(-mc) + 0.0) * eta
    x_plus = a + (float(n1 + mc - 1) + 1.0) * eta
    column_x = a + np.arange(-mc, n1 + mc + 1, dtype=float) * eta

    def trace(x_value: float) -> tuple[Array, Array]:
        sel = np.nonzero((nodes[:, 0] == x_value) & ~seam_mask)[0]
        order = np.argsort(nodes[sel, 1], kind="stable")
        sel = sel[order]
        return pmap[sel], nodes[sel, 1]

    trace_minus, trace_y = trace(x_minus)
    trace_plus, trace_y_plus = trace(x_plus)
    if len(trace_minus) != n2 * n4 or len(trace_plus) != n2 * n4:
        raise MeshError(
            f"trace has {len(trace_minus)}/{len(trace_plus)} nodes, expected {n2 * n4}"
        )
    if not np.array_equal(trace_y, trace_y_plus):
        raise MeshError("bottom and top trace lines disagree in x2")
    delta = 2.0 * np.pi / (n2 * n4)

    return StripMesh(
        geom=geom,
        lattice=lattice,
        refine=refine,
        template=tpl,
        nodes=nodes,
        node_tag=node_tag,
        node_region=node_region,
        triangles=triangles,
        tri_region=tri_region,
        tri_cell=tri_cell,
        sheet_ext=np.vstack(sheet_ext_blocks),
        sheet_int=np.vstack(sheet_int_blocks),
        sheet_len=np.concatenate([tpl.sheet_len * eta] * (n1 * n2)),
        sheet_cell=np.concatenate(sheet_cell_blocks),
        cell_nodes=cell_nodes,
        pmap=pmap,
        seam_mask=seam_mask,
        n_reduced=n_reduced,
        trace_minus=trace_minus,
        trace_plus=trace_plus,
        trace_y=trace_y,
        x_minus=float(x_minus),
        x_plus=float(x_plus),
        delta=float(delta),
        column_x=column_x,
    )


def dump_strip_mesh(strip: StripMesh, path: str) -> None:
    """Plain-text mesh export in the same layout as the cell mesh dump,
    with region and cell tags appended to each triangle row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"nodes {strip.n_nodes}\n")
        for (x, y), tag in zip(strip.nodes, strip.node_tag):
            fh.write(f"{x:.17e} {y:.17e} {int(tag)}\n")
        fh.write(f"triangles {len(strip.triangles)}\n")
        for tri, reg, cell in zip(strip.triangles, strip.tri_region, strip.tri_cell):
            fh.write(f"{tri[0]} {tri[1]} {tri[2]} {int(reg)} {int(cell)}\n")
