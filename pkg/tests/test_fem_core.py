import math

import numpy as np
import pytest

from myelinhom import fem_core as fem
from myelinhom import geometry as geo
from myelinhom import meshing as msh
from myelinhom.errors import IncompatibleRhs

SIGMA1 = fem.ConductivityField(sigma_i=1.0, sigma_e=1.0, sigma_m=1.0)


@pytest.fixture(scope="module")
def cell_mesh():
    g = geo.wedge_geometry(r0=0.5, R0=1.0, a=0.3, b=0.7,
                           phi_A=math.pi / 3, phi_B=math.pi / 3, height=0.25)
    return msh.build_cell_mesh(g, h=0.06)


def test_constant_field_in_stiffness_kernel(cell_mesh):
    K = fem.assemble_stiffness(cell_mesh, SIGMA1, periodic=True)
    ones = np.ones(K.n)
    assert abs(K.form(ones)) < 1e-12 * K.matrix.diagonal().sum()


def test_stiffness_linear_in_sigma(cell_mesh):
    K1 = fem.assemble_stiffness(cell_mesh, SIGMA1)
    K2 = fem.assemble_stiffness(
        cell_mesh, fem.ConductivityField(2.0, 2.0, 2.0))
    rng = np.random.default_rng(3)
    x = rng.standard_normal(K1.n)
    assert K2.form(x) == pytest.approx(2.0 * K1.form(x), rel=1e-12)


def test_stiffness_monotone_in_each_conductivity(cell_mesh):
    rng = np.random.default_rng(4)
    x = rng.standard_normal(fem.assemble_stiffness(cell_mesh, SIGMA1).n)
    base = fem.assemble_stiffness(cell_mesh, SIGMA1).form(x)
    for bump in (fem.ConductivityField(1.5, 1.0, 1.0),
                 fem.ConductivityField(1.0, 1.5, 1.0),
                 fem.ConductivityField(1.0, 1.0, 1.5)):
        assert fem.assemble_stiffness(cell_mesh, bump).form(x) >= base - 1e-12


def test_patch_test_affine_dirichlet_integral(cell_mesh):
    # non-periodic: u = a0 + a1*y1 + a2*r must reproduce the exact weighted
    # Dirichlet integral 2*pi*(a1^2+a2^2) * int r  over the cross section
    K = fem.assemble_stiffness(cell_mesh, SIGMA1, periodic=False)
    y1 = cell_mesh.vertices[:, 0]
    r = cell_mesh.vertices[:, 1]
    a0, a1, a2 = 0.7, 1.3, -0.4
    u = K.to_dofs(a0 + a1 * y1 + a2 * r)
    g = cell_mesh.geometry
    exact = 2 * math.pi * (a1 ** 2 + a2 ** 2) * (g.R0 ** 2 / 2.0)
    assert K.form(u) == pytest.approx(exact, rel=1e-10)


def test_stiffness_symmetry(cell_mesh):
    K = fem.assemble_stiffness(cell_mesh, SIGMA1)
    d = K.matrix - K.matrix.T
    assert abs(d).max() == 0.0


def test_jump_mass_constant_jump(cell_mesh):
    # inner trace 1, outer trace 0 -> 2*pi*r0*(b-a)
    B = fem.assemble_jump_mass(cell_mesh)
    u = np.zeros(cell_mesh.n_vertices)
    u[cell_mesh.jump_pairs[:, 0]] = 1.0
    g = cell_mesh.geometry
    assert B.form(B.to_dofs(u)) == pytest.approx(
        2 * math.pi * g.r0 * (g.b - g.a), rel=1e-12)
    assert B.form(np.zeros(B.n)) == 0.0


def test_jump_mass_linear_jump_exact_integral(cell_mesh):
    # [u] = y1 on (a,b), r0 = 0.5 -> 2*pi*r0*int_a^b y1^2 = pi*(b^3-a^3)/3
    B = fem.assemble_jump_mass(cell_mesh)
    u = np.zeros(cell_mesh.n_vertices)
    pairs = cell_mesh.jump_pairs
    u[pairs[:, 0]] = cell_mesh.vertices[pairs[:, 0], 0]
    g = cell_mesh.geometry
    assert B.form(B.to_dofs(u)) == pytest.approx(
        math.pi * (g.b ** 3 - g.a ** 3) / 3.0, rel=1e-10)


def test_jump_mass_rank_equals_pairs(cell_mesh):
    B = fem.assemble_jump_mass(cell_mesh)
    rank = np.linalg.matrix_rank(B.matrix.toarray())
    assert rank == len(cell_mesh.jump_pairs)


def test_volume_mass_reproduces_region_volumes(cell_mesh):
    m = geo.measures(cell_mesh.geometry)
    for region, vol in ((msh.INTRA, m.vol_Yi), (msh.MYELIN, m.vol_Ym),
                        (msh.EXTRA, m.vol_Ye)):
        M = fem.assemble_volume_mass(cell_mesh, region=region)
        ones = np.ones(M.n)
        # piecewise-linear sheath boundary: the wedge volume is exact
        assert M.form(ones) == pytest.approx(vol, rel=5e-3)


def test_region_integrals_match_volume_mass(cell_mesh):
    rng = np.random.default_rng(5)
    u = rng.standard_normal(cell_mesh.n_vertices)
    M = fem.assemble_volume_mass(cell_mesh, region=msh.EXTRA, periodic=False)
    _, int_u2, _ = fem.region_integrals(cell_mesh, u, region=msh.EXTRA)
    assert int_u2 == pytest.approx(M.form(M.to_dofs(u)), rel=1e-10)


def test_solve_spd_identity_like():
    import scipy.sparse as sp
    A = sp.identity(40, format="csr") * 2.0
    op = fem.SparseOperator(matrix=A, kind="stiffness",
                            dof_of_vertex=np.arange(40), n=40)
    rhs = np.zeros(40)
    rhs[0] = 2.0
    x = fem.solve_spd(op, rhs)
    assert np.allclose(x, rhs / 2.0, atol=1e-12)


def test_solve_spd_incompatible_rhs(cell_mesh):
    K = fem.assemble_stiffness(cell_mesh, SIGMA1)
    rhs = np.ones(K.n)   # pure constant component: incompatible
    with pytest.raises(IncompatibleRhs):
        fem.solve_spd(K, rhs, kernel_constants=True)


def test_grounded_solver_consistency(cell_mesh):
    K = fem.assemble_stiffness(cell_mesh, SIGMA1)
    rng = np.random.default_rng(6)
    b = rng.standard_normal(K.n)
    b -= b.mean()
    gs = fem.GroundedSolver(K, ground=0)
    x = gs.solve(b)
    res = np.linalg.norm(K.matrix @ x - b + (K.matrix @ x - b).mean())
    # grounded solve solves K x = b up to a constant shift in the residual
    assert res < 1e-8 * np.linalg.norm(b)


def test_edge_flux_load_is_compatible(cell_mesh):
    load = fem.edge_flux_load(cell_mesh, "myelin_outer")
    assert abs(load.sum()) < 1e-12
    assert np.linalg.norm(load) > 0.0
