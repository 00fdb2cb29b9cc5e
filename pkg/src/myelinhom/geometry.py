"""Periodicity cell of a myelinated axon, axisymmetric convention.

The cell is the cylinder Y = (0,1) x D_R0 described by its (y1, r) cross
section.  The intracellular core is r < r0, the membrane sits at r = r0, and
the bare (node) part of the membrane is the segment {r0} x (a, b).  The myelin
sheath covers the complementary membrane band, i.e. y1 in (b, 1) u (0, a),
reaching up to an outer curve r = r0 + f(t) given in band coordinates
t = (y1 - b) mod 1, t in [0, w], w = 1 - (b - a).  The sheath meets the
membrane at the node endpoints A = (a, r0) and B = (b, r0) with interior
contact angles phi_A, phi_B measured inside the sheath from the membrane line.

All 3-D volumes/areas carry the 2*pi axisymmetric factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AngleOutOfRange,
    DegenerateNode,
    MyelinCurveInvalid,
    QuadratureFailure,
)

MYELIN_KINDS = ("wedge", "arc", "polyline", "none")


@dataclass(frozen=True)
class MyelinSpec:
    """Outer myelin boundary r = r0 + f(t) over the band t in [0, w].

    kind:
      wedge    -- straight contact rays at the prescribed angles joined by a
                  flat top at height `height` (the verification family; the
                  contact angles are represented exactly),
      arc      -- single circular arc; requires phi_A == phi_B < pi/2 and ties
                  height = (w/2) tan(phi/2),
      polyline -- user-supplied graph (t_i, f_i), f_0 = f_n = 0; contact
                  angles are the end-segment slopes,
      none     -- no sheath (the node may then cover the whole membrane).
    """

    kind: str = "wedge"
    height: float | None = None
    points: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class CellGeometry:
    r0: float
    R0: float
    a: float
    b: float
    phi_A: float
    phi_B: float
    sigma_i: float = 1.0
    sigma_e: float = 1.0
    myelin: MyelinSpec = field(default_factory=MyelinSpec)

    @property
    def node_width(self) -> float:
        return self.b - self.a

    @property
    def band_width(self) -> float:
        return 1.0 - (self.b - self.a)

    @property
    def has_myelin(self) -> bool:
        return self.myelin.kind != "none"

    def band_to_y1(self, t):
        """Map band coordinate t in [0, w] to y1 in [0, 1) (t = 0 at B)."""
        return np.mod(self.b + np.asarray(t), 1.0)

    def y1_to_band(self, y1):
        """Inverse of band_to_y1 for y1 outside the node interval."""
        return np.mod(np.asarray(y1) - self.b, 1.0)

    # -- outer myelin curve ---------------------------------------------------

    def myelin_profile(self, t):
        """Sheath thickness f(t) >= 0 over the band coordinate."""
        t = np.asarray(t, dtype=float)
        w = self.band_width
        m = self.myelin
        if m.kind == "none":
            return np.zeros_like(t)
        if m.kind == "wedge":
            up = t * math.tan(self.phi_B)
            down = (w - t) * math.tan(self.phi_A)
            return np.minimum(m.height, np.minimum(up, down))
        if m.kind == "arc":
            Ra = w / (2.0 * math.sin(self.phi_B))
            eta_c = -Ra * math.cos(self.phi_B)
            u = t - w / 2.0
            return eta_c + np.sqrt(np.maximum(Ra * Ra - u * u, 0.0))
        if m.kind == "polyline":
            ts = np.array([p[0] for p in m.points])
            fs = np.array([p[1] for p in m.points])
            return np.interp(t, ts, fs)
        raise MyelinCurveInvalid(f"unknown myelin kind {m.kind!r}")

    def myelin_breakpoints(self) -> list[float]:
        """Band coordinates where f has slope breaks (mesh must hit these)."""
        w = self.band_width
        m = self.myelin
        if m.kind == "wedge":
            t_up = m.height / math.tan(self.phi_B)
            t_down = w - m.height / math.tan(self.phi_A)
            return [t_up, t_down]
        if m.kind == "polyline":
            return [p[0] for p in m.points[1:-1]]
        return []

    def max_myelin_height(self) -> float:
        m = self.myelin
        if m.kind == "none":
            return 0.0
        if m.kind in ("wedge", "arc"):
            return float(m.height)
        return max(p[1] for p in m.points)


def wedge_geometry(r0, R0, a, b, phi_A, phi_B, height,
                   sigma_i=1.0, sigma_e=1.0) -> CellGeometry:
    return validate(CellGeometry(
        r0=r0, R0=R0, a=a, b=b, phi_A=phi_A, phi_B=phi_B,
        sigma_i=sigma_i, sigma_e=sigma_e,
        myelin=MyelinSpec(kind="wedge", height=height)))


def arc_geometry(r0, R0, a, b, phi, sigma_i=1.0, sigma_e=1.0) -> CellGeometry:
    """Circular-arc sheath with equal contact angles phi < pi/2."""
    w = 1.0 - (b - a)
    height = 0.5 * w * math.tan(0.5 * phi)
    return validate(CellGeometry(
        r0=r0, R0=R0, a=a, b=b, phi_A=phi, phi_B=phi,
        sigma_i=sigma_i, sigma_e=sigma_e,
        myelin=MyelinSpec(kind="arc", height=height)))


def polyline_geometry(r0, R0, a, b, points, sigma_i=1.0, sigma_e=1.0) -> CellGeometry:
    """Sheath from a user polyline; contact angles come from the end slopes."""
    pts = tuple((float(t), float(f)) for t, f in points)
    if len(pts) < 3:
        raise MyelinCurveInvalid("polyline needs at least 3 points")
    t0, f0 = pts[0]
    t1, f1 = pts[1]
    tm, fm = pts[-2]
    tn, fn = pts[-1]
    phi_B = math.atan2(f1 - f0, t1 - t0)
    phi_A = math.atan2(fm - fn, tn - tm)
    return validate(CellGeometry(
        r0=r0, R0=R0, a=a, b=b, phi_A=phi_A, phi_B=phi_B,
        sigma_i=sigma_i, sigma_e=sigma_e,
        myelin=MyelinSpec(kind="polyline", points=pts)))


def bare_geometry(r0, R0, a=0.0, b=1.0, sigma_i=1.0, sigma_e=1.0) -> CellGeometry:
    """Cell without a sheath.  a = 0, b = 1 makes the whole membrane a node."""
    return validate(CellGeometry(
        r0=r0, R0=R0, a=a, b=b, phi_A=math.pi / 2, phi_B=math.pi / 2,
        sigma_i=sigma_i, sigma_e=sigma_e, myelin=MyelinSpec(kind="none")))


@dataclass(frozen=True)
class CellMeasures:
    vol_Y: float
    vol_Yi: float
    vol_Ye: float
    vol_Ym: float
    area_Gamma: float


def validate(geometry: CellGeometry) -> CellGeometry:
    """Check all geometric invariants; return the geometry unchanged."""
    g = geometry
    if not (0.0 < g.r0 < g.R0):
        raise MyelinCurveInvalid(f"need 0 < r0 < R0, got r0={g.r0}, R0={g.R0}")
    if g.sigma_i <= 0.0 or g.sigma_e <= 0.0:
        raise MyelinCurveInvalid("conductivities must be positive")
    if g.has_myelin:
        if not (0.0 < g.a < g.b < 1.0):
            raise DegenerateNode(f"need 0 < a < b < 1, got a={g.a}, b={g.b}")
    else:
        # a bare cell may let the node reach the period boundary (a=0, b=1)
        if not (0.0 <= g.a < g.b <= 1.0):
            raise DegenerateNode(f"need 0 <= a < b <= 1, got a={g.a}, b={g.b}")
    for name, phi in (("phi_A", g.phi_A), ("phi_B", g.phi_B)):
        if not (0.0 < phi < math.pi):
            raise AngleOutOfRange(f"{name}={phi} outside (0, pi)")

    m = g.myelin
    if m.kind not in MYELIN_KINDS:
        raise MyelinCurveInvalid(f"unknown myelin kind {m.kind!r}")
    if m.kind == "none":
        return g

    w = g.band_width
    if m.kind == "wedge":
        if m.height is None or m.height <= 0.0:
            raise MyelinCurveInvalid("wedge sheath needs a positive height")
        if not (g.phi_A < math.pi / 2 and g.phi_B < math.pi / 2):
            raise AngleOutOfRange(
                "wedge/arc sheaths are restricted to contact angles < pi/2 "
                "(graph-form outer curve)")
        run = m.height / math.tan(g.phi_B) + m.height / math.tan(g.phi_A)
        if run > 0.98 * w:
            raise MyelinCurveInvalid(
                f"contact rays of height {m.height} do not fit in band width {w}")
    elif m.kind == "arc":
        if abs(g.phi_A - g.phi_B) > 1e-12:
            raise MyelinCurveInvalid("arc sheath requires phi_A == phi_B")
        if g.phi_B >= math.pi / 2:
            raise AngleOutOfRange("arc sheath requires phi < pi/2")
        h_arc = 0.5 * w * math.tan(0.5 * g.phi_B)
        if m.height is None or abs(m.height - h_arc) > 1e-9 * max(1.0, h_arc):
            raise MyelinCurveInvalid(
                f"arc height must equal (w/2)tan(phi/2) = {h_arc}")
    elif m.kind == "polyline":
        pts = m.points
        ts = [p[0] for p in pts]
        fs = [p[1] for p in pts]
        if abs(ts[0]) > 1e-14 or abs(ts[-1] - w) > 1e-12:
            raise MyelinCurveInvalid("polyline must span the band [0, w]")
        if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
            raise MyelinCurveInvalid("polyline abscissae must increase")
        if abs(fs[0]) > 1e-14 or abs(fs[-1]) > 1e-14:
            raise MyelinCurveInvalid("polyline must start and end on the membrane")
        if any(f <= 0.0 for f in fs[1:-1]):
            raise MyelinCurveInvalid("polyline must stay above the membrane")
        if fs[1] <= fs[0] or fs[-2] <= fs[-1]:
            raise MyelinCurveInvalid("end segments must leave the membrane upward")

    if g.max_myelin_height() >= (g.R0 - g.r0) * (1.0 - 1e-12):
        raise MyelinCurveInvalid("sheath touches the outer wall r = R0")
    return g


def measures(geometry: CellGeometry) -> CellMeasures:
    """Exact cell measures; the sheath volume uses closed-form integrals."""
    g = validate(geometry)
    vol_Y = math.pi * g.R0 ** 2
    vol_Yi = math.pi * g.r0 ** 2
    area_Gamma = 2.0 * math.pi * g.r0 * (g.b - g.a)

    m = g.myelin
    if m.kind == "none":
        vol_Ym = 0.0
    elif m.kind == "arc":
        vol_Ym = _arc_volume(g)
    else:
        vol_Ym = _polyline_volume(g)
    if not math.isfinite(vol_Ym) or vol_Ym < 0.0:
        raise QuadratureFailure(f"sheath volume came out as {vol_Ym}")

    vol_Ye = vol_Y - vol_Yi - vol_Ym
    return CellMeasures(vol_Y=vol_Y, vol_Yi=vol_Yi, vol_Ye=vol_Ye,
                        vol_Ym=vol_Ym, area_Gamma=area_Gamma)


def _polyline_volume(g: CellGeometry) -> float:
    # vol_Ym = 2*pi * int (r0 f + f^2/2) dt, exact per linear segment
    w = g.band_width
    ts = [0.0] + sorted(t for t in g.myelin_breakpoints() if 0.0 < t < w) + [w]
    total = 0.0
    for t1, t2 in zip(ts, ts[1:]):
        f1 = float(g.myelin_profile(t1))
        f2 = float(g.myelin_profile(t2))
        dt = t2 - t1
        int_f = 0.5 * (f1 + f2) * dt
        int_f2 = dt * (f1 * f1 + f1 * f2 + f2 * f2) / 3.0
        total += g.r0 * int_f + 0.5 * int_f2
    return 2.0 * math.pi * total


def _arc_volume(g: CellGeometry) -> float:
    # closed-form moments of f = eta_c + sqrt(Ra^2 - u^2), u in (-w/2, w/2)
    w = g.band_width
    phi = g.phi_B
    Ra = w / (2.0 * math.sin(phi))
    eta_c = -Ra * math.cos(phi)
    u = w / 2.0

    def antideriv_g(x):
        return 0.5 * (x * math.sqrt(Ra * Ra - x * x) + Ra * Ra * math.asin(x / Ra))

    int_g = antideriv_g(u) - antideriv_g(-u)
    int_g2 = Ra * Ra * w - w ** 3 / 12.0
    int_f = eta_c * w + int_g
    int_f2 = eta_c * eta_c * w + 2.0 * eta_c * int_g + int_g2
    return 2.0 * math.pi * (g.r0 * int_f + 0.5 * int_f2)


