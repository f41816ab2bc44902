"""Exterior cell problem: corrector potentials on D* and the effective
permittivity eps*.

The unknowns are two scalar periodic potentials w_1, w_2 (one per unit
vector xi).  Writing the corrector column as P_e xi = grad_perp w_xi turns
the rotated-gradient weak form into a standard anisotropic diffusion problem
with coefficient Rot^T eps^{-1} Rot, discretized with P1 triangles on the
exterior part of the cell mesh, exact periodic identification of boundary
nodes, and a mean-zero gauge enforced by a bordered Lagrange row.

eps*^{-1} xi = integral over D* of eps^{-1}(xi + P_e xi); the tensor is
assembled first in inverse form and then inverted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cellmesh import EXTERIOR, MeshError, UnitCellMesh, build_cell_mesh
from .model import Array, CellGeometry, MaterialSet

__all__ = [
    "SolverError",
    "CorrectorSolution",
    "solve_exterior_cell",
    "interior_corrector",
]

log = logging.getLogger(__name__)

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


class SolverError(RuntimeError):
    """Linear solve failed or produced an untrustworthy solution."""


def interior_corrector() -> Array:
    """Corrector matrix inside the resonator: Pi = -I, so xi + Pi xi = 0 and
    the leading-order interior electric field vanishes."""
    return -np.eye(2)


def _p1_geometry(coords: Array, tris: Array) -> tuple[Array, Array]:
    """Areas and barycentric gradients (t, 3, 2) for P1 triangles."""
    p = coords[tris]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    g = np.empty(tris.shape + (2,))
    g[:, 0, 0] = p[:, 1, 1] - p[:, 2, 1]
    g[:, 0, 1] = p[:, 2, 0] - p[:, 1, 0]
    g[:, 1, 0] = p[:, 2, 1] - p[:, 0, 1]
    g[:, 1, 1] = p[:, 0, 0] - p[:, 2, 0]
    g[:, 2, 0] = p[:, 0, 1] - p[:, 1, 1]
    g[:, 2, 1] = p[:, 1, 0] - p[:, 0, 0]
    g /= det[:, None, None]
    return 0.5 * det, g


def _periodic_map(mesh: UnitCellMesh) -> Array:
    """full-node -> master-node index map identifying opposite cell edges.

    Relies on the mesher's bitwise edge matching; composition handles the
    corner chain (1,1) -> (0,1) -> (0,0)."""
    n = mesh.n_nodes
    map_x = np.arange(n)
    right = mesh.edge_node_ids("right")
    left = mesh.edge_node_ids("left")
    if not (mesh.nodes[right, 1] == mesh.nodes[left, 1]).all():
        raise MeshError("left/right edge node ordinates do not match")
    map_x[right] = left
    map_y = np.arange(n)
    top = mesh.edge_node_ids("top")
    bottom = mesh.edge_node_ids("bottom")
    if not (mesh.nodes[top, 0] == mesh.nodes[bottom, 0]).all():
        raise MeshError("top/bottom edge node abscissae do not match")
    map_y[top] = bottom
    return map_x[map_y[map_x]]


@dataclass(frozen=True)
class CorrectorSolution:
    """Discrete exterior corrector and the assembled effective permittivity.

    w holds the two potentials (columns: xi = e1, e2) on the full node set of
    the parent mesh; entries at interior-only nodes are zero and unused.
    """

    mesh: UnitCellMesh
    w: Array
    eps_star: Array
    eps_star_inv: Array
    residual_rel: float
    area_exterior: float

    def pe_elementwise(self) -> Array:
        """P_e per exterior triangle: (t_ext, 2, 2), column xi is grad_perp w_xi."""
        tris = self.mesh.triangles[self.mesh.tri_region == EXTERIOR]
        _, grads = _p1_geometry(self.mesh.nodes, tris)
        gw = np.einsum("tia,tic->tac", grads, self.w[tris])  # d_a w_xi
        return np.einsum("ba,tac->tbc", ROT, gw)

    def exterior_mean(self) -> Array:
        """Area-weighted mean of each potential over D* (gauge check)."""
        tris = self.mesh.triangles[self.mesh.tri_region == EXTERIOR]
        areas, _ = _p1_geometry(self.mesh.nodes, tris)
        mean = (areas[:, None] * self.w[tris].mean(axis=1)).sum(axis=0)
        return mean / areas.sum()


def solve_exterior_cell(
    geom: CellGeometry,
    mats: MaterialSet,
    refine: int = 1,
    mesh: UnitCellMesh | None = None,
    n_ext: int | None = None,
    n_int: int | None = None,
) -> CorrectorSolution:
    """Solve the exterior cell problem and assemble eps*.

    Args:
        geom: inclusion geometry.
        mats: materials; only eps_matrix enters the exterior problem.
        refine: mesh subdivision factor (ignored when mesh is given).
        mesh: optional prebuilt cell mesh to reuse.

    Returns:
        CorrectorSolution with mean-zero potentials, eps* and its inverse,
        and the relative residual of the unconstrained discrete system.
    """
    if mesh is None:
        mesh = build_cell_mesh(geom, refine=refine, n_ext=n_ext, n_int=n_int)
    eps_inv = np.linalg.inv(mats.eps_matrix)
    coeff = ROT.T @ eps_inv @ ROT

    ext_tris = mesh.triangles[mesh.tri_region == EXTERIOR]
    areas, grads = _p1_geometry(mesh.nodes, ext_tris)
    area_ext = float(areas.sum())

    ke = np.einsum("t,tia,ab,tjb->tij", areas, grads, coeff, grads)
    rows = np.repeat(ext_tris, 3, axis=1).reshape(-1)
    cols = np.tile(ext_tris, (1, 3)).reshape(-1)
    vals = ke.reshape(-1)

    # RHS per xi: -(Rot^T eps^{-1} e_xi) . grad phi integrated
    rxi = ROT.T @ eps_inv  # columns: Rot^T eps^{-1} e_j
    fe = -np.einsum("t,tia,ac->tic", areas, grads, rxi)  # (t, 3, 2)

    pmap = _periodic_map(mesh)
    active = np.unique(pmap[np.unique(ext_tris)])
    reduced = np.full(mesh.n_nodes, -1, dtype=np.int64)
    reduced[active] = np.arange(len(active))
    red = reduced[pmap]

    nr = len(active)
    k_red = sp.coo_matrix(
        (vals, (red[rows], red[cols])), shape=(nr, nr), dtype=complex
    ).tocsr()
    f_red = np.zeros((nr, 2), dtype=complex)
    np.add.at(f_red, red[ext_tris.reshape(-1)], fe.reshape(-1, 2))

    # mean-zero gauge: bordered row with the P1 integration weights over D*
    wts = np.zeros(nr)
    np.add.at(wts, red[ext_tris.reshape(-1)], np.repeat(areas / 3.0, 3))
    border = sp.coo_matrix(
        (wts, (np.arange(nr), np.zeros(nr, dtype=np.int64))), shape=(nr, 1)
    )
    k_aug = sp.bmat([[k_red, border], [border.T, None]], format="csc", dtype=complex)

    rhs = np.vstack([f_red, np.zeros((1, 2), dtype=complex)])
    try:
        lu = spla.splu(k_aug)
    except RuntimeError as exc:
        est = spla.onenormest(k_aug)
        raise SolverError(
            f"cell stiffness factorization failed (1-norm {est:.3e}): {exc}"
        ) from exc
    sol = np.column_stack([lu.solve(rhs[:, 0]), lu.solve(rhs[:, 1])])
    w_red, lam = sol[:-1], sol[-1]

    resid = k_red @ w_red - f_red
    f_norm = np.linalg.norm(f_red, axis=0)
    residual_rel = float((np.linalg.norm(resid, axis=0) / f_norm).max())
    if residual_rel > 1e-8:
        est = spla.onenormest(k_aug)
        raise SolverError(
            f"cell solve residual {residual_rel:.3e} (matrix 1-norm {est:.3e}); "
            "system is near-singular"
        )
    log.debug("cell solve: %d dofs, residual %.2e, |lambda| %.2e",
              nr, residual_rel, float(np.abs(lam).max()))

    w_full = np.zeros((mesh.n_nodes, 2), dtype=complex)
    has_dof = red >= 0
    w_full[has_dof] = w_red[red[has_dof]]

    # eps*^{-1}_{ij} = sum_e area * [eps^{-1}(e_j + grad_perp w_j)]_i
    gw = np.einsum("tia,tic->tac", grads, w_full[ext_tris])
    pe = np.einsum("ba,tac->tbc", ROT, gw)
    integrand = np.einsum("ab,tbc->tac", eps_inv, pe)
    eps_star_inv = (areas[:, None, None] * integrand).sum(axis=0) + area_ext * eps_inv
    eps_star = np.linalg.inv(eps_star_inv)

    return CorrectorSolution(
        mesh=mesh,
        w=w_full,
        eps_star=eps_star,
        eps_star_inv=eps_star_inv,
        residual_rel=residual_rel,
        area_exterior=area_ext,
    )
