import math

import numpy as np
import pytest
from scipy.integrate import quad

from myelinhom import geometry as geo
from myelinhom.errors import AngleOutOfRange, DegenerateNode, MyelinCurveInvalid


def test_validate_accepts_reference_box():
    g = geo.bare_geometry(r0=0.5, R0=1.0, a=0.1, b=0.3)
    assert geo.validate(g) is g


def test_validate_rejects_reversed_node():
    with pytest.raises(DegenerateNode):
        geo.bare_geometry(r0=0.5, R0=1.0, a=0.3, b=0.1)


def test_validate_rejects_flat_contact_angle():
    with pytest.raises(AngleOutOfRange):
        geo.validate(geo.CellGeometry(r0=0.5, R0=1.0, a=0.1, b=0.3,
                                      phi_A=math.pi, phi_B=math.pi / 2,
                                      myelin=geo.MyelinSpec(kind="none")))


def test_validate_rejects_sheath_touching_outer_wall():
    with pytest.raises(MyelinCurveInvalid):
        geo.wedge_geometry(r0=0.8, R0=1.0, a=0.3, b=0.7,
                           phi_A=math.pi / 3, phi_B=math.pi / 3, height=0.25)


def test_no_myelin_cylinder_measures():
    g = geo.bare_geometry(r0=0.5, R0=1.0, a=0.0, b=1.0)
    m = geo.measures(g)
    assert m.vol_Yi == pytest.approx(math.pi / 4, rel=1e-14)
    assert m.vol_Ye == pytest.approx(3 * math.pi / 4, rel=1e-14)
    assert m.vol_Ym == 0.0
    assert m.area_Gamma == pytest.approx(math.pi, rel=1e-14)


def test_arc_volume_against_adaptive_quadrature():
    # reference circular-arc bulge; oracle = adaptive quadrature of the profile
    g = geo.arc_geometry(r0=0.5, R0=1.0, a=0.3, b=0.7, phi=math.pi / 4)
    w = g.band_width

    def integrand(t):
        f = float(g.myelin_profile(t))
        return g.r0 * f + 0.5 * f * f

    val, err = quad(integrand, 0.0, w, epsabs=1e-14, epsrel=1e-14)
    oracle = 2.0 * math.pi * val
    assert err < 1e-12
    assert geo.measures(g).vol_Ym == pytest.approx(oracle, abs=1e-12)


def test_wedge_volume_against_adaptive_quadrature():
    g = geo.wedge_geometry(r0=0.5, R0=1.0, a=0.25, b=0.75,
                           phi_A=math.pi / 3, phi_B=math.pi / 3, height=0.3)
    w = g.band_width

    def integrand(t):
        f = float(g.myelin_profile(t))
        return g.r0 * f + 0.5 * f * f

    pieces = [0.0] + g.myelin_breakpoints() + [w]
    oracle = 0.0
    for t1, t2 in zip(pieces, pieces[1:]):
        val, _ = quad(integrand, t1, t2, epsabs=1e-14, epsrel=1e-14)
        oracle += val
    oracle *= 2.0 * math.pi
    assert geo.measures(g).vol_Ym == pytest.approx(oracle, abs=1e-12)


def test_partition_identity_randomized():
    rng = np.random.default_rng(7)
    for _ in range(25):
        r0 = rng.uniform(0.2, 0.6)
        R0 = r0 + rng.uniform(0.3, 0.8)
        a = rng.uniform(0.1, 0.4)
        b = a + rng.uniform(0.15, 0.5)
        kind = rng.choice(["wedge", "arc", "none"])
        if kind == "wedge":
            phi = rng.uniform(0.3, 1.4)
            height = min(0.4 * (R0 - r0),
                         0.45 * (1.0 - (b - a)) * math.tan(phi))
            g = geo.wedge_geometry(r0, R0, a, b, phi, phi, height)
        elif kind == "arc":
            phi = rng.uniform(0.3, 1.3)
            h_arc = 0.5 * (1.0 - (b - a)) * math.tan(0.5 * phi)
            if h_arc >= 0.95 * (R0 - r0):
                continue
            g = geo.arc_geometry(r0, R0, a, b, phi)
        else:
            g = geo.bare_geometry(r0, R0, a, b)
        m = geo.measures(g)
        assert m.vol_Yi + m.vol_Ye + m.vol_Ym == pytest.approx(m.vol_Y, rel=1e-10)
        assert m.area_Gamma == pytest.approx(2 * math.pi * r0 * (b - a), rel=1e-14)
        assert min(m.vol_Yi, m.vol_Ye, m.vol_Y) > 0.0


def test_polyline_angles_derived_from_end_slopes():
    w = 1.0 - 0.4
    pts = [(0.0, 0.0), (0.1, 0.1), (0.3, 0.12), (w - 0.1, 0.08), (w, 0.0)]
    g = geo.polyline_geometry(r0=0.5, R0=1.0, a=0.3, b=0.7, points=pts)
    assert g.phi_B == pytest.approx(math.atan2(0.1, 0.1))
    assert g.phi_A == pytest.approx(math.atan2(0.08, 0.1))
