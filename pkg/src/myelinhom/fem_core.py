"""r-weighted P1 finite element operators on cracked axisymmetric meshes.

All quadratic forms carry the full 2*pi axisymmetric factor:

  stiffness   K(u,v) = 2*pi * int sigma grad(u).grad(v) r dr dy1
  jump mass   B(u,v) = 2*pi * r_crack * int [u][v] dmu  over the node segment
  volume mass M(u,v) = 2*pi * int u v r dr dy1

Collar-chart triangles (log-polar coordinates (phi, s) around a contact
corner) are assembled in their chart: the Dirichlet integrand is conformally
invariant, the weight becomes r = r_anchor + e^s sin(phi), the area element
for volume integrals e^{2s} ds dphi, and crack elements carry the measure
r_crack e^s ds.  Deep layers underflow gracefully (weights -> r_anchor, mass
-> 0), which matches the physics of the corner tail.

Quadrature: the stiffness r-weight is linear per element, so the centroid
value is exact; boundary loads use exact linear-times-linear edge integrals;
volume masses use a 4-point degree-3 rule (exact for the cubic integrands on
physical elements).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IncompatibleRhs, NoJumpSurface, SolverDivergence
from .meshing import AxiMesh

# degree-3 rule on the reference triangle (barycentric points, weights sum 1)
_Q3_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [0.6, 0.2, 0.2],
    [0.2, 0.6, 0.2],
    [0.2, 0.2, 0.6],
])
_Q3_W = np.array([-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0])


@dataclass(frozen=True)
class ConductivityField:
    sigma_i: float
    sigma_e: float
    sigma_m: float

    def by_region(self):
        # region order: intra, myelin, extra
        return np.array([self.sigma_i, self.sigma_m, self.sigma_e])


@dataclass
class SparseOperator:
    matrix: sp.csr_matrix
    kind: str                      # stiffness | jump_mass | volume_mass
    dof_of_vertex: np.ndarray
    n: int

    def form(self, x, y=None):
        y = x if y is None else y
        return float(x @ (self.matrix @ y))

    def to_dofs(self, vertex_values):
        out = np.zeros(self.n)
        out[self.dof_of_vertex] = vertex_values
        return out

    def to_vertices(self, dof_values):
        return dof_values[self.dof_of_vertex]


def _tri_geometry(mesh: AxiMesh):
    """Per-triangle coords, areas, P1 gradient vectors and axisymmetric weight."""
    coords = mesh.assembly_coords()
    v0, v1, v2 = coords[:, 0], coords[:, 1], coords[:, 2]
    d1 = v1 - v0
    d2 = v2 - v0
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    inv2A = 1.0 / (2.0 * area)
    # grad phi_i = perp(edge opposite i) / (2A)
    g0 = np.stack([v1[:, 1] - v2[:, 1], v2[:, 0] - v1[:, 0]], axis=1) * inv2A[:, None]
    g1 = np.stack([v2[:, 1] - v0[:, 1], v0[:, 0] - v2[:, 0]], axis=1) * inv2A[:, None]
    g2 = np.stack([v0[:, 1] - v1[:, 1], v1[:, 0] - v0[:, 0]], axis=1) * inv2A[:, None]
    grads = np.stack([g0, g1, g2], axis=1)          # (m,3,2)

    weight = np.empty(mesh.n_triangles)
    phys = mesh.tri_chart == 0
    weight[phys] = mesh.vertices[mesh.triangles[phys], 1].mean(axis=1)
    for ci in range(1, len(mesh.charts)):
        sel = mesh.tri_chart == ci
        if not np.any(sel):
            continue
        info = mesh.charts[ci]
        cent = coords[sel].mean(axis=1)             # (k,2) = (phi, s)
        with np.errstate(under="ignore"):
            rho = np.exp(cent[:, 1])
        weight[sel] = info.anchor_r + rho * np.sin(cent[:, 0])
    return coords, area, grads, weight


def _chart_jacobian(mesh: AxiMesh, coords):
    """Area-element factor dy1 dr / (du dv) at triangle centroids (1 off-collar)."""
    jac = np.ones(mesh.n_triangles)
    for ci in range(1, len(mesh.charts)):
        sel = mesh.tri_chart == ci
        if np.any(sel):
            with np.errstate(under="ignore"):
                jac[sel] = np.exp(2.0 * coords[sel, :, 1].mean(axis=1))
    return jac


def assemble_stiffness(mesh: AxiMesh, sigma: ConductivityField,
                       periodic: bool = True) -> SparseOperator:
    """K(u,v) = 2*pi int sigma grad(u).grad(v) r; periodic dofs merged."""
    coords, area, grads, weight = _tri_geometry(mesh)
    sig = sigma.by_region()[mesh.tri_region]
    scale = 2.0 * math.pi * sig * weight * area      # (m,)

    dof, ndof = mesh.dof_map(periodic)
    tri_dof = dof[mesh.triangles]
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tri_dof[:, i])
            cols.append(tri_dof[:, j])
            vals.append(scale * np.einsum("md,md->m", grads[:, i], grads[:, j]))
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ndof, ndof)).tocsr()
    A.sum_duplicates()
    return SparseOperator(matrix=A, kind="stiffness", dof_of_vertex=dof, n=ndof)


def _exp_moments(d):
    """I_k = int_0^d tau^k e^-tau dtau for k = 0,1,2 (stable for small d)."""
    if d < 1e-3:
        return (d - d * d / 2 + d ** 3 / 6,
                d * d / 2 - d ** 3 / 3,
                d ** 3 / 3 - d ** 4 / 4)
    e = math.exp(-d)
    return (1.0 - e,
            1.0 - (1.0 + d) * e,
            2.0 - (d * d + 2 * d + 2) * e)


def assemble_jump_mass(mesh: AxiMesh, periodic: bool = True) -> SparseOperator:
    """B(u,v) = 2*pi*r_crack * int [u][v] along the node segment.

    Crack tips are single vertices, so the tip edges carry the jump linearly
    extrapolated from the two adjacent pairs; the form is then exact for
    affine jump profiles (and in particular for constant jumps).
    """
    if not len(mesh.jump_pairs):
        raise NoJumpSurface("mesh has no jump pairs on the node segment")
    dof, ndof = mesh.dof_map(periodic)
    rows, cols, vals = [], [], []

    def scatter_pairs(pairs_and_signs, m):
        # m is a dense matrix over the listed (pair, coefficient) combinations
        k = len(pairs_and_signs)
        for i in range(k):
            for j in range(k):
                if m[i, j] == 0.0:
                    continue
                (ii, oi), ci = pairs_and_signs[i]
                (ij, oj), cj = pairs_and_signs[j]
                for (u, su) in ((ii, 1.0), (oi, -1.0)):
                    for (v, sv) in ((ij, 1.0), (oj, -1.0)):
                        rows.append(dof[u])
                        cols.append(dof[v])
                        vals.append(m[i, j] * ci * cj * su * sv)

    def edge_matrix(e):
        if e.kind == "phys":
            length = abs(e.x2 - e.x1)
            return np.array([[length / 3.0, length / 6.0],
                             [length / 6.0, length / 3.0]])
        d = e.x1 - e.x2
        with np.errstate(under="ignore"):
            ehi = math.exp(e.x1)
        if ehi == 0.0 or d <= 0.0:
            return np.zeros((2, 2))
        i0, i1, i2 = _exp_moments(d)
        return ehi * np.array([[i0 - 2 * i1 / d + i2 / (d * d),
                                i1 / d - i2 / (d * d)],
                               [i1 / d - i2 / (d * d), i2 / (d * d)]])

    def neighbor_of(tip_edge, shared):
        for e2 in mesh.crack_edges:
            if e2 is tip_edge:
                continue
            for p, q in (((e2.inner1, e2.outer1), (e2.inner2, e2.outer2)),
                         ((e2.inner2, e2.outer2), (e2.inner1, e2.outer1))):
                if p == shared and q[0] != q[1]:
                    return q, abs(e2.x2 - e2.x1)
        return None, 0.0

    two_pi_r = 2.0 * math.pi * mesh.crack_radius
    for e in mesh.crack_edges:
        pa = (e.inner1, e.outer1)
        pb = (e.inner2, e.outer2)
        m = two_pi_r * edge_matrix(e)
        dega, degb = pa[0] == pa[1], pb[0] == pb[1]
        if not dega and not degb:
            scatter_pairs([(pa, 1.0), (pb, 1.0)], m)
            continue
        tip_len = abs(e.x2 - e.x1)
        near = pb if dega else pa
        far, far_len = neighbor_of(e, near)
        # extrapolated tip value: j_tip = (1+t) j_near - t j_far
        if far is None or far_len <= 0.0:
            ext = [(near, 1.0)]
        else:
            t = tip_len / far_len
            ext = [(near, 1.0 + t), (far, -t)]
        combos = (ext + [(near, 1.0)]) if dega else ([(near, 1.0)] + ext)
        # expand the 2x2 edge matrix over the extrapolation combination
        terms = []
        idx = []
        for slot, lst in enumerate((combos[: len(ext)] if dega else [combos[0]],)):
            pass
        # build explicit list: slot 0 = first endpoint, slot 1 = second
        slot_lists = (ext, [(near, 1.0)]) if dega else ([(near, 1.0)], ext)
        flat = []
        for slot, lst in enumerate(slot_lists):
            for pair, coef in lst:
                flat.append((slot, pair, coef))
        k = len(flat)
        mfull = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                mfull[i, j] = m[flat[i][0], flat[j][0]]
        scatter_pairs([(p, c) for _, p, c in flat], mfull)

    B = sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsr()
    B.sum_duplicates()
    return SparseOperator(matrix=B, kind="jump_mass", dof_of_vertex=dof, n=ndof)


def lumped_jump_weights(mesh: AxiMesh):
    """Per-pair weights w_k with sum_k w_k [u]_k^2 ~ B(u,u) (lumped crack mass).

    Returns (pairs, weights): the membrane capacitance / ionic current surface
    terms of the microscale solver use this diagonal form.
    """
    index_of = {}
    pairs = []
    for e in mesh.crack_edges:
        for pin, pout in ((e.inner1, e.outer1), (e.inner2, e.outer2)):
            if (pin, pout) not in index_of:
                index_of[(pin, pout)] = len(pairs)
                pairs.append((pin, pout))
    w = np.zeros(len(pairs))
    two_pi_r = 2.0 * math.pi * mesh.crack_radius
    for e in mesh.crack_edges:
        ka = index_of[(e.inner1, e.outer1)]
        kb = index_of[(e.inner2, e.outer2)]
        if e.kind == "phys":
            half = 0.5 * abs(e.x2 - e.x1)
            w[ka] += two_pi_r * half
            w[kb] += two_pi_r * half
        else:
            with np.errstate(under="ignore"):
                mass = math.exp(e.x1) - math.exp(e.x2)
            w[ka] += two_pi_r * 0.5 * mass
            w[kb] += two_pi_r * 0.5 * mass
    return np.array(pairs, dtype=np.int64), w


def assemble_volume_mass(mesh: AxiMesh, region=None,
                         periodic: bool = True) -> SparseOperator:
    """M(u,v) = 2*pi int u v r over one region (or all)."""
    coords, area, _, _ = _tri_geometry(mesh)
    jac = _chart_jacobian(mesh, coords)
    sel = np.ones(mesh.n_triangles, dtype=bool) if region is None \
        else mesh.tri_region == region
    dof, ndof = mesh.dof_map(periodic)
    rows, cols, vals = [], [], []
    tri = mesh.triangles[sel]
    tdof = dof[tri]
    carea = area[sel]
    cjac = jac[sel]
    ccoords = coords[sel]
    cchart = mesh.tri_chart[sel]
    qpts = np.einsum("qb,mbd->mqd", _Q3_BARY, ccoords)    # (m,4,2)
    rw = np.empty(qpts.shape[:2])
    physm = cchart == 0
    rw[physm] = qpts[physm][:, :, 1]
    for ci in range(1, len(mesh.charts)):
        s2 = cchart == ci
        if not np.any(s2):
            continue
        info = mesh.charts[ci]
        with np.errstate(under="ignore"):
            rw[s2] = info.anchor_r + np.exp(qpts[s2][:, :, 1]) * np.sin(qpts[s2][:, :, 0])
    for i in range(3):
        for j in range(3):
            shape = _Q3_BARY[:, i] * _Q3_BARY[:, j]
            wij = (rw * shape[None, :]) @ _Q3_W
            rows.append(tdof[:, i])
            cols.append(tdof[:, j])
            vals.append(2.0 * math.pi * carea * cjac * wij)
    M = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ndof, ndof)).tocsr()
    M.sum_duplicates()
    return SparseOperator(matrix=M, kind="volume_mass", dof_of_vertex=dof, n=ndof)


def region_integrals(mesh: AxiMesh, vertex_values, region=None, shift=0.0):
    """(integral of (u-shift), integral of (u-shift)^2, volume), 3-D weighted."""
    coords, area, _, _ = _tri_geometry(mesh)
    jac = _chart_jacobian(mesh, coords)
    sel = np.ones(mesh.n_triangles, dtype=bool) if region is None \
        else mesh.tri_region == region
    tri = mesh.triangles[sel]
    ccoords = coords[sel]
    cchart = mesh.tri_chart[sel]
    qpts = np.einsum("qb,mbd->mqd", _Q3_BARY, ccoords)
    rw = np.empty(qpts.shape[:2])
    physm = cchart == 0
    rw[physm] = qpts[physm][:, :, 1]
    for ci in range(1, len(mesh.charts)):
        s2 = cchart == ci
        if not np.any(s2):
            continue
        info = mesh.charts[ci]
        with np.errstate(under="ignore"):
            rw[s2] = info.anchor_r + np.exp(qpts[s2][:, :, 1]) * np.sin(qpts[s2][:, :, 0])
    uq = np.einsum("qb,mb->mq", _Q3_BARY, np.asarray(vertex_values)[tri]) - shift
    w = 2.0 * math.pi * area[sel] * jac[sel]
    int_u = float(np.einsum("m,mq,q->", w, rw * uq, _Q3_W))
    int_u2 = float(np.einsum("m,mq,q->", w, rw * uq * uq, _Q3_W))
    vol = float(np.einsum("m,mq,q->", w, rw, _Q3_W))
    return int_u, int_u2, vol


def region_energy(mesh: AxiMesh, sigma: ConductivityField, vertex_values,
                  region=None):
    """2*pi int_region sigma |grad u|^2 r for a P1 field (by-element sum)."""
    coords, area, grads, weight = _tri_geometry(mesh)
    sel = np.ones(mesh.n_triangles, dtype=bool) if region is None \
        else mesh.tri_region == region
    vals = np.asarray(vertex_values)[mesh.triangles[sel]]
    gu = np.einsum("mb,mbd->md", vals, grads[sel])
    sig = sigma.by_region()[mesh.tri_region[sel]]
    return float(np.sum(2.0 * math.pi * sig * weight[sel] * area[sel]
                        * np.sum(gu * gu, axis=1)))


def jump_values(mesh: AxiMesh, vertex_values):
    """Per-pair jump [u] = u_inner - u_outer and lumped pair weights."""
    pairs, w = lumped_jump_weights(mesh)
    u = np.asarray(vertex_values)
    return u[pairs[:, 0]] - u[pairs[:, 1]], pairs, w


def edge_flux_load(mesh: AxiMesh, tag: str, periodic: bool = True):
    """Load vector L_v = -2*pi sum_edges int nu_1 phi_v r dl over tagged edges.

    nu is the normal pointing out of the extracellular region (downward for
    the sheath top curve traversed left to right); the integrand is exact for
    the linear r and P1 trace on each straight edge.
    """
    dof, ndof = mesh.dof_map(periodic)
    load = np.zeros(ndof)
    edges = mesh.boundary_tags.get(tag)
    if edges is None:
        return load
    for i, j in edges:
        yi, ri = mesh.vertices[i]
        yj, rj = mesh.vertices[j]
        if yj < yi:
            (i, j), (yi, ri), (yj, rj) = (j, i), (yj, rj), (yi, ri)
        dr = rj - ri
        # nu_1 * dl = dr ; int phi_i r dl -> (2 r_i + r_j)/6 * dl
        load[dof[i]] += -2.0 * math.pi * dr * (2 * ri + rj) / 6.0
        load[dof[j]] += -2.0 * math.pi * dr * (ri + 2 * rj) / 6.0
    return load


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_spd(op: SparseOperator, rhs, kernel_constants: bool = False,
              mean_weights=None, rtol: float = 1e-10, maxiter: int = 2000):
    """AMG-preconditioned CG solve of op.matrix @ x = rhs.

    kernel_constants=True handles the singular pure-Neumann case: the rhs is
    checked for compatibility and projected off the constant vector, and the
    solution is returned with zero weighted mean (weights `mean_weights`, else
    Euclidean).
    """
    import pyamg

    A = op.matrix
    b = np.asarray(rhs, dtype=float).copy()
    n = A.shape[0]
    if not np.any(b):
        return np.zeros(n)
    nb = np.linalg.norm(b)
    if kernel_constants:
        mean = b.sum() / n
        if abs(mean) * math.sqrt(n) > 1e-8 * nb:
            raise IncompatibleRhs(
                f"rhs has constant component {mean:.3e} (norm {nb:.3e})")
        b -= mean
        near_null = np.ones((n, 1))
    else:
        near_null = None
    ml = pyamg.smoothed_aggregation_solver(A.tocsr(), B=near_null,
                                           max_coarse=50)
    M = ml.aspreconditioner(cycle="V")
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    res = np.linalg.norm(b - A @ x) / nb
    if info != 0 or res > 10 * rtol:
        raise SolverDivergence(f"CG failed: info={info}, rel residual {res:.3e}")
    if kernel_constants:
        if mean_weights is not None:
            x -= (mean_weights @ x) / mean_weights.sum()
        else:
            x -= x.mean()
    return x


class GroundedSolver:
    """Direct factorization of an SPD operator with one dof pinned to zero.

    Used for inverse iteration on singular Neumann stiffness matrices: pinning
    one dof picks a representative of each constant-shift equivalence class.
    """

    def __init__(self, op: SparseOperator, ground: int = 0):
        n = op.n
        keep = np.ones(n, dtype=bool)
        keep[ground] = False
        self.keep = keep
        self.ground = ground
        self.n = n
        A = op.matrix.tocsc()[keep][:, keep].tocsc()
        self.lu = spla.splu(A)

    def solve(self, rhs):
        out = np.zeros(self.n)
        out[self.keep] = self.lu.solve(np.asarray(rhs)[self.keep])
        return out


def p1_point_values(mesh: AxiMesh, vertex_values, points):
    """Evaluate a P1 field at physical points (brute-force element search)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.full(len(pts), np.nan)
    phys = np.where(mesh.tri_chart == 0)[0]
    tri = mesh.triangles[phys]
    p0 = mesh.vertices[tri[:, 0]]
    p1 = mesh.vertices[tri[:, 1]]
    p2 = mesh.vertices[tri[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    u = np.asarray(vertex_values)
    for k, pt in enumerate(pts):
        dp = pt[None, :] - p0
        l1 = (dp[:, 0] * d2[:, 1] - dp[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * dp[:, 1] - d1[:, 1] * dp[:, 0]) / det
        l0 = 1.0 - l1 - l2
        ok = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not np.any(ok):
            continue
        t = np.argmax(ok)
        vals[k] = (l0[t] * u[tri[t, 0]] + l1[t] * u[tri[t, 1]]
                   + l2[t] * u[tri[t, 2]])
    return vals
