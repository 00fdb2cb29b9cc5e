"""Axisymmetric cracked triangulations of the periodicity cell.

The cross section Y' = (0,1) x (0,R0) is meshed column-by-column: every
column carries a vertical chain of vertices split at the membrane r = r0 and
at the sheath top r = r0 + f(y1); strips between adjacent columns are
triangulated region by region so no element crosses a material interface.
Vertices on the node segment {r0} x (a,b) are doubled (cracked-mesh jump
representation); crack tips stay single in plain cell meshes.

Eigenvalue meshes additionally replace a rectangular box around each contact
corner A, B with a "collar": a patch written in conformal log-polar
coordinates (phi, s = log rho) around the corner.  A collar column at angle
phi holds nodes from the box boundary down to s_min = log(rho_box) - depth/kappa,
which reaches radii as small as exp(-O(1/kappa)) without degenerate physical
coordinates.  Such triangles keep chart coordinates and are assembled in the
chart, where the Dirichlet energy is conformally invariant and the
axisymmetric weight is r = r_anchor + e^s sin(phi).  The crack continues
through the collar along phi = +-pi, so the jump degrees of freedom follow
the corner layer down to negligible radii.

Local corner frames use xi = orient*(y1 - x_corner) with orient = +1 at B and
-1 at A, so the sheath sector is always 0 < phi < phi_w, the intracellular
sector -pi < phi < 0, and the crack lies along phi = +-pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GeometryTooThin, MeshGenerationFailure, MyelinCurveInvalid
from .geometry import CellGeometry, validate

INTRA, MYELIN, EXTRA = 0, 1, 2
REGION_NAMES = ("intra", "myelin", "extra")


@dataclass(frozen=True)
class ChartInfo:
    """Conformal log-polar chart around one contact corner."""
    corner: str          # "A" or "B"
    anchor_x: float      # y1 of the corner
    anchor_r: float      # r of the corner (the membrane radius)
    orient: float        # +1 at B, -1 at A


@dataclass(frozen=True)
class CrackEdge:
    """One 1-D element of the node surface between two jump pairs.

    kind "phys": x1 < x2 are y1 coordinates, measure r_crack dy1.
    kind "log":  x1 > x2 are s = log rho in chart `chart`, measure
                 r_crack e^s ds (descending into the corner).
    """
    inner1: int
    outer1: int
    inner2: int
    outer2: int
    kind: str
    x1: float
    x2: float
    chart: int = 0


@dataclass(frozen=True)
class CollarSpec:
    """Resolution knobs for the corner collars of an eigenvalue mesh."""
    kappa_A: float
    kappa_B: float
    depth: float = 4.5          # collar depth in units of 1/kappa
    ds_factor: float = 8.0      # deep layer thickness = 1/(ds_factor*kappa)
    dphi: float = math.pi / 12  # angular resolution target
    n_myelin: int = 6           # min angular subdivisions of the sheath sector
    box_frac: float = 0.3       # box half-width as a fraction of the allowed max


@dataclass
class AxiMesh:
    vertices: np.ndarray                  # (n,2) physical (y1, r)
    triangles: np.ndarray                 # (m,3) vertex ids, CCW in their chart
    tri_region: np.ndarray                # (m,) in {INTRA, MYELIN, EXTRA}
    tri_chart: np.ndarray                 # (m,) 0 = physical, k>0 -> charts[k]
    chart_coords: np.ndarray              # (n,2) (phi, s), NaN off-collar
    charts: list                          # [None, ChartInfo, ...]
    jump_pairs: np.ndarray                # (k,2) (inner, outer) ids
    periodic_pairs: np.ndarray            # (p,2) (x=lo, x=hi) ids
    boundary_tags: dict                   # tag -> (e,2) vertex id pairs
    crack_edges: list                     # list[CrackEdge]
    crack_radius: float
    geometry: CellGeometry | None = None
    h: float = 0.0
    _dof_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def assembly_coords(self):
        """(m,3,2) triangle vertex coordinates in each assembly chart."""
        coords = self.vertices[self.triangles].copy()
        on_chart = self.tri_chart > 0
        if np.any(on_chart):
            coords[on_chart] = self.chart_coords[self.triangles[on_chart]]
        return coords

    def signed_areas(self, coords=None):
        c = self.assembly_coords() if coords is None else coords
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def dof_map(self, periodic: bool):
        """Vertex -> dof map; periodic=True merges the x=0/x=1 vertex pairs."""
        key = bool(periodic)
        if key not in self._dof_cache:
            n = self.n_vertices
            parent = np.arange(n)
            if periodic and len(self.periodic_pairs):
                parent[self.periodic_pairs[:, 1]] = self.periodic_pairs[:, 0]
            uniq, dof = np.unique(parent, return_inverse=True)
            self._dof_cache[key] = (dof.astype(np.int64), len(uniq))
        return self._dof_cache[key]


@dataclass
class QualityReport:
    n_vertices: int
    n_triangles: int
    min_angle_deg: float          # over physical-chart triangles
    max_aspect: float             # longest/shortest edge, physical chart
    min_angle_collar_deg: float   # over collar-chart triangles (anisotropic)
    counts_by_region: dict


def mesh_quality(mesh: AxiMesh) -> QualityReport:
    """Shape statistics, measured in each triangle's assembly chart.

    Collar layers are deliberately anisotropic (boundary-layer aligned), so
    their angles are reported separately from the physical bulk.
    """
    coords = mesh.assembly_coords()
    e0 = coords[:, 1] - coords[:, 0]
    e1 = coords[:, 2] - coords[:, 1]
    e2 = coords[:, 0] - coords[:, 2]
    lens = np.stack([np.linalg.norm(e0, axis=1), np.linalg.norm(e1, axis=1),
                     np.linalg.norm(e2, axis=1)], axis=1)
    area2 = np.abs(e0[:, 0] * (-e2[:, 1]) - e0[:, 1] * (-e2[:, 0]))

    def min_angles(sel):
        if not np.any(sel):
            return 90.0
        ls = lens[sel]
        a2 = area2[sel]
        # angle opposite the shortest edge is the smallest
        prods = np.stack([ls[:, 1] * ls[:, 2], ls[:, 2] * ls[:, 0],
                          ls[:, 0] * ls[:, 1]], axis=1)
        sines = np.clip(a2[:, None] / prods, 0.0, 1.0)
        # smallest angle has the smallest sine among angles < pi/2; use all three
        cosA = (ls[:, 1] ** 2 + ls[:, 2] ** 2 - ls[:, 0] ** 2) / (2 * prods[:, 0])
        cosB = (ls[:, 2] ** 2 + ls[:, 0] ** 2 - ls[:, 1] ** 2) / (2 * prods[:, 1])
        cosC = (ls[:, 0] ** 2 + ls[:, 1] ** 2 - ls[:, 2] ** 2) / (2 * prods[:, 2])
        angs = np.arccos(np.clip(np.stack([cosA, cosB, cosC], axis=1), -1, 1))
        return math.degrees(float(np.min(angs)))

    phys = mesh.tri_chart == 0
    aspect = float(np.max(np.max(lens[phys], axis=1) /
                          np.min(lens[phys], axis=1))) if np.any(phys) else 1.0
    counts = {REGION_NAMES[r]: int(np.sum(mesh.tri_region == r)) for r in range(3)}
    return QualityReport(
        n_vertices=mesh.n_vertices, n_triangles=mesh.n_triangles,
        min_angle_deg=min_angles(phys), max_aspect=aspect,
        min_angle_collar_deg=min_angles(~phys), counts_by_region=counts)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _graded_interior(x0, x1, lfun, nsub=200):
    """Interior points of [x0,x1] with local spacing ~ lfun(x); deterministic."""
    length = x1 - x0
    if length <= 1e-14:
        return []
    xs = np.linspace(x0, x1, nsub + 1)
    dens = 1.0 / np.maximum(np.array([lfun(float(x)) for x in xs]), 1e-12)
    mass = cumulative_trapezoid(dens, xs, initial=0.0)
    total = mass[-1]
    n = max(1, int(round(total)))
    targets = np.arange(1, n) * (total / n)
    return [float(p) for p in np.interp(targets, mass, xs)]


def _ladder(pos, left, right, emit):
    """Triangulate the strip between chains `left` and `right` (bottom->top).

    `pos(v)` gives the 2-D position in the build plane; the left chain sits at
    the smaller abscissa.  Emits CCW triples.
    """
    nl, nr = len(left), len(right)
    if nl + nr < 3:
        return
    i = k = 0
    while i < nl - 1 or k < nr - 1:
        can_l = i < nl - 1
        can_r = k < nr - 1
        if can_l and can_r:
            pl, pr = pos(left[i + 1]), pos(right[k])
            dl = math.hypot(pl[0] - pr[0], pl[1] - pr[1])
            pl2, pr2 = pos(left[i]), pos(right[k + 1])
            dr = math.hypot(pl2[0] - pr2[0], pl2[1] - pr2[1])
            adv_left = dl <= dr
        else:
            adv_left = can_l
        if adv_left:
            emit(left[i], right[k], left[i + 1])
            i += 1
        else:
            emit(left[i], right[k], right[k + 1])
            k += 1


def _snap_dir(phi):
    c, s = math.cos(phi), math.sin(phi)
    if abs(c) < 1e-15:
        c = 0.0
    if abs(s) < 1e-15:
        s = 0.0
    if abs(abs(c) - 1.0) < 1e-15:
        c = math.copysign(1.0, c)
    if abs(abs(s) - 1.0) < 1e-15:
        s = math.copysign(1.0, s)
    return c, s


@dataclass
class _Stack:
    """One mesh column: vertex chains split at the material interfaces."""
    x: float
    intra: list            # r = 0 .. membrane (top = crack inner if cracked)
    myelin: list           # membrane .. sheath top ([] without sheath)
    extra: list            # crack outer / sheath top .. R0
    crack: bool


@dataclass
class _CollarPatch:
    chart_id: int
    box: tuple                     # (Pxi, Pd, Pu)
    node_side_x: float
    band_side_x: float
    node_intra: list               # bottom box corner .. crack inner
    node_extra: list               # crack outer .. top box corner
    band_intra: list               # bottom box corner .. membrane vertex
    band_myelin: list              # membrane vertex .. ray vertex
    band_extra: list               # ray vertex .. top box corner
    top_nodes: list                # [(id, y1)] sorted by y1, corners excluded
    bottom_nodes: list             # [(id, y1)] sorted by y1, corners excluded


class _Builder:
    def __init__(self, geom: CellGeometry, h, grading, collar: CollarSpec | None,
                 min_factor=0.35):
        self.g = geom
        self.h = h
        self.grading = grading
        self.collar = collar
        self.min_factor = min_factor
        self.boxes = []          # (xc, Pxi, Pd, Pu) of built collar boxes
        self.l_box = h           # finest side-chain gap, set by build_collar
        self.vx = []
        self.uv = []
        self.tris = []
        self.tregion = []
        self.tchart = []
        self.charts = [None]
        self.jump_pairs = []
        self.periodic_pairs = []
        self.crack_edges = []
        self.tags = {k: [] for k in ("node_inner", "node_outer", "myelin_inner",
                                     "myelin_outer", "lateral", "axis")}

    def add_v(self, y1, r, uv=(math.nan, math.nan)):
        self.vx.append((float(y1), float(r)))
        self.uv.append((float(uv[0]), float(uv[1])))
        return len(self.vx) - 1

    def emit(self, region, chart):
        def _e(i, j, k):
            self.tris.append((i, j, k))
            self.tregion.append(region)
            self.tchart.append(chart)
        return _e

    def pos_phys(self, v):
        return self.vx[v]

    def pos_chart(self, v):
        return self.uv[v]

    # -- spacing fields -------------------------------------------------------

    def _corner_dist(self, x, r=None):
        g = self.g
        d = min(min(abs(x - c), abs(x - c - 1.0), abs(x - c + 1.0))
                for c in (g.a, g.b))
        if r is not None:
            d = math.hypot(d, r - g.r0)
        return d

    def _box_dist(self, x, r):
        d = math.inf
        for xc, Pxi, Pd, Pu in self.boxes:
            dx = max(0.0, abs(x - xc) - Pxi)
            dr = max(0.0, (self.g.r0 - Pd) - r, r - (self.g.r0 + Pu))
            d = min(d, math.hypot(dx, dr))
        return d

    def lx(self, x):
        if self.collar is not None:
            return min(self.h, self.l_box + 0.7 * self._box_dist(x, self.g.r0))
        d = self._corner_dist(x)
        return min(max(self.h * (d / 0.25) ** self.grading,
                       self.min_factor * self.h), self.h)

    def lr(self, x, r):
        if self.collar is not None:
            return min(self.h, self.l_box + 0.7 * self._box_dist(x, r))
        d = self._corner_dist(x, r)
        return min(max(self.h * (d / 0.25) ** self.grading,
                       self.min_factor * self.h), self.h)

    # -- collar ----------------------------------------------------------------

    def _box_sizes(self, corner):
        g, spec = self.g, self.collar
        phi_w = g.phi_B if corner == "B" else g.phi_A
        H = g.max_myelin_height()
        t_run = H / math.tan(phi_w)
        xc = g.b if corner == "B" else g.a
        limits = [0.45 * (g.b - g.a), 0.8 * t_run, 0.4 * g.band_width,
                  0.45 * g.r0, 0.9 * min(xc, 1.0 - xc)]
        Pxi = spec.box_frac / 0.3 * 0.3 * min(limits)
        Pu = max(Pxi, 1.3 * Pxi * math.tan(phi_w))
        Pu = min(Pu, 0.75 * (g.R0 - g.r0))
        if Pu <= Pxi * math.tan(phi_w):
            raise MeshGenerationFailure(
                f"corner box at {corner} cannot contain its sheath wedge")
        Pd = min(Pxi, 0.6 * g.r0)
        return Pxi, Pd, Pu

    def _collar_angles(self, corner, Pxi, Pd, Pu):
        g, spec = self.g, self.collar
        phi_w = g.phi_B if corner == "B" else g.phi_A
        a1 = math.atan2(Pu, Pxi)
        a2 = math.pi - a1
        a3 = -math.pi + math.atan2(Pd, Pxi)
        a4 = -math.atan2(Pd, Pxi)
        mand = sorted({-math.pi, a3, a4, 0.0, phi_w, a1, a2, math.pi})
        angles = []
        for lo, hi in zip(mand, mand[1:]):
            span = hi - lo
            target = spec.dphi
            if abs(lo) < 1e-14 and abs(hi - phi_w) < 1e-14:
                target = min(target, phi_w / spec.n_myelin)
            n = max(1, int(math.ceil(span / target - 1e-9)))
            angles.extend(lo + span * j / n for j in range(n))
        angles.append(math.pi)
        return angles, phi_w, (a1, a2, a3, a4)

    def _collar_slist(self, s_top, s_min, ds0, ds_max):
        out = [s_top]
        ds = ds0
        while out[-1] > s_min + 1e-12:
            nxt = out[-1] - ds
            if nxt - s_min < 0.35 * ds:
                nxt = s_min
            out.append(nxt)
            ds = min(ds * 1.8, ds_max)
        return out[::-1]

    def build_collar(self, corner) -> _CollarPatch:
        g, spec = self.g, self.collar
        xc = g.b if corner == "B" else g.a
        orient = 1.0 if corner == "B" else -1.0
        kappa = spec.kappa_B if corner == "B" else spec.kappa_A
        Pxi, Pd, Pu = self._box_sizes(corner)
        angles, phi_w, (a1, a2, a3, a4) = self._collar_angles(corner, Pxi, Pd, Pu)

        def rho_box(phi):
            c, s = _snap_dir(phi)
            cands = []
            if abs(c) > 1e-12:
                cands.append(Pxi / abs(c))
            if s > 1e-12:
                cands.append(Pu / s)
            elif s < -1e-12:
                cands.append(Pd / (-s))
            return min(cands)

        ds_max = 1.0 / (spec.ds_factor * kappa)
        ds0 = min(spec.dphi, ds_max)
        s_min = math.log(min(rho_box(p) for p in angles)) - spec.depth / kappa

        chart_id = len(self.charts)
        self.charts.append(ChartInfo(corner=corner, anchor_x=xc,
                                     anchor_r=g.r0, orient=orient))

        cols = []
        slist_pi = self._collar_slist(math.log(Pxi), s_min, ds0, ds_max)
        for phi in angles:
            c, sd = _snap_dir(phi)
            if abs(abs(phi) - math.pi) < 1e-14:
                slist = slist_pi
            else:
                slist = self._collar_slist(math.log(rho_box(phi)), s_min,
                                           ds0, ds_max)
            ids = []
            for s in slist:
                rho = math.exp(s)
                ids.append(self.add_v(xc + orient * rho * c, g.r0 + rho * sd,
                                      uv=(phi, s)))
            cols.append((phi, ids))

        for (phi_l, ids_l), (phi_r, ids_r) in zip(cols, cols[1:]):
            mid = 0.5 * (phi_l + phi_r)
            region = INTRA if mid < 0.0 else (MYELIN if mid < phi_w else EXTRA)
            _ladder(self.pos_chart, ids_l, ids_r, self.emit(region, chart_id))

        col_lo = cols[0][1]      # phi = -pi: intracellular crack face
        col_hi = cols[-1][1]     # phi = +pi: extracellular crack face
        if len(col_lo) != len(col_hi):
            raise MeshGenerationFailure("collar crack faces out of step")
        pairs = list(zip(col_lo, col_hi))
        self.jump_pairs.extend(pairs)
        svals = slist_pi
        for idx in range(len(pairs) - 1, 0, -1):
            i1, o1 = pairs[idx]
            i2, o2 = pairs[idx - 1]
            self.crack_edges.append(CrackEdge(
                inner1=i1, outer1=o1, inner2=i2, outer2=o2,
                kind="log", x1=svals[idx], x2=svals[idx - 1], chart=chart_id))

        eps = 1e-12

        def tops(lo, hi, reverse=False):
            sel = [(phi, ids[-1]) for phi, ids in cols if lo - eps <= phi <= hi + eps]
            sel.sort(key=lambda t: t[0], reverse=reverse)
            return [v for _, v in sel]

        node_intra = tops(-math.pi, a3, reverse=True)
        node_extra = tops(a2, math.pi, reverse=True)
        band_intra = tops(a4, 0.0)
        band_myelin = tops(0.0, phi_w)
        band_extra = tops(phi_w, a1)
        top_nodes = sorted(((ids[-1], self.vx[ids[-1]][0])
                            for phi, ids in cols if a1 + eps < phi < a2 - eps),
                           key=lambda t: t[1])
        bottom_nodes = sorted(((ids[-1], self.vx[ids[-1]][0])
                               for phi, ids in cols if a3 + eps < phi < a4 - eps),
                              key=lambda t: t[1])

        self.boxes.append((xc, Pxi, Pd, Pu))
        for chain in (node_intra, node_extra, band_intra, band_myelin, band_extra):
            rs = [self.vx[v][1] for v in chain]
            gaps = [r2 - r1 for r1, r2 in zip(rs, rs[1:]) if r2 - r1 > 1e-12]
            if gaps:
                self.l_box = min(self.l_box, min(gaps))

        return _CollarPatch(
            chart_id=chart_id, box=(Pxi, Pd, Pu),
            node_side_x=xc - orient * Pxi, band_side_x=xc + orient * Pxi,
            node_intra=node_intra, node_extra=node_extra,
            band_intra=band_intra, band_myelin=band_myelin,
            band_extra=band_extra, top_nodes=top_nodes,
            bottom_nodes=bottom_nodes)

    # -- column stacks ----------------------------------------------------------

    def _profile_at(self, x):
        g = self.g
        if not g.has_myelin or g.a <= x <= g.b:
            return 0.0
        return float(g.myelin_profile(g.y1_to_band(x)))

    def _chain(self, x, r_lo, r_hi, lo_id=None, hi_id=None):
        ids = [self.add_v(x, r_lo) if lo_id is None else lo_id]
        for r in _graded_interior(r_lo, r_hi, lambda rr: self.lr(x, rr)):
            ids.append(self.add_v(x, r))
        ids.append(self.add_v(x, r_hi) if hi_id is None else hi_id)
        return ids

    def make_stack(self, x, crack_range) -> _Stack:
        g = self.g
        f = self._profile_at(x)
        in_crack = crack_range[0] < x < crack_range[1]

        if in_crack:
            inner = self.add_v(x, g.r0)
            outer = self.add_v(x, g.r0)
            intra = self._chain(x, 0.0, g.r0, hi_id=inner)
            extra = self._chain(x, g.r0, g.R0, lo_id=outer)
            self.jump_pairs.append((inner, outer))
            return _Stack(x=x, intra=intra, myelin=[], extra=extra, crack=True)

        mem = self.add_v(x, g.r0)
        intra = self._chain(x, 0.0, g.r0, hi_id=mem)
        if f > 1e-12:
            if f > 1.5 * self.lr(x, g.r0 + 0.5 * f):
                myelin = self._chain(x, g.r0, g.r0 + f, lo_id=mem)
            else:
                myelin = [mem, self.add_v(x, g.r0 + f)]
            extra = self._chain(x, g.r0 + f, g.R0, lo_id=myelin[-1])
        else:
            myelin = [mem] if g.has_myelin else []
            extra = self._chain(x, g.r0, g.R0, lo_id=mem)
        return _Stack(x=x, intra=intra, myelin=myelin, extra=extra, crack=False)

    def twin_stack(self, src: _Stack, x) -> _Stack:
        """Copy of a period-cut stack at the other end, recording pairs."""
        mapping = {}

        def cp(ids):
            out = []
            for v in ids:
                if v not in mapping:
                    mapping[v] = self.add_v(x, self.vx[v][1])
                    self.periodic_pairs.append((v, mapping[v]))
                out.append(mapping[v])
            return out

        return _Stack(x=x, intra=cp(src.intra), myelin=cp(src.myelin),
                      extra=cp(src.extra), crack=False)

    # -- strips -----------------------------------------------------------------

    def strip(self, cl: _Stack, cr: _Stack, crack_range):
        _ladder(self.pos_phys, cl.intra, cr.intra, self.emit(INTRA, 0))
        if cl.myelin and cr.myelin and len(cl.myelin) + len(cr.myelin) >= 3:
            _ladder(self.pos_phys, cl.myelin, cr.myelin, self.emit(MYELIN, 0))
        _ladder(self.pos_phys, cl.extra, cr.extra, self.emit(EXTRA, 0))

        self.tags["axis"].append((cl.intra[0], cr.intra[0]))
        self.tags["lateral"].append((cl.extra[-1], cr.extra[-1]))
        in_node = (crack_range[0] - 1e-14 <= cl.x
                   and cr.x <= crack_range[1] + 1e-14)
        if in_node and (cl.crack or cr.crack
                        or self._is_tipish(cl) or self._is_tipish(cr)):
            li, lo = self._crack_ids(cl)
            ri, ro = self._crack_ids(cr)
            self.tags["node_inner"].append((li, ri))
            self.tags["node_outer"].append((lo, ro))
            self.crack_edges.append(CrackEdge(
                inner1=li, outer1=lo, inner2=ri, outer2=ro,
                kind="phys", x1=cl.x, x2=cr.x))
        elif cl.myelin and cr.myelin:
            self.tags["myelin_inner"].append((cl.myelin[0], cr.myelin[0]))
            self.tags["myelin_outer"].append((cl.myelin[-1], cr.myelin[-1]))

    def _is_tipish(self, st: _Stack):
        return (not st.crack) and st.intra[-1] == st.extra[0]

    def _crack_ids(self, st: _Stack):
        if st.crack:
            return st.intra[-1], st.extra[0]
        return st.intra[-1], st.intra[-1]

    # -- final assembly -----------------------------------------------------------

    def finish(self, crack_radius=None, geometry=None) -> AxiMesh:
        mesh = AxiMesh(
            vertices=np.array(self.vx),
            triangles=np.array(self.tris, dtype=np.int64),
            tri_region=np.array(self.tregion, dtype=np.int8),
            tri_chart=np.array(self.tchart, dtype=np.int32),
            chart_coords=np.array(self.uv),
            charts=self.charts,
            jump_pairs=(np.array(self.jump_pairs, dtype=np.int64)
                        if self.jump_pairs else np.zeros((0, 2), dtype=np.int64)),
            periodic_pairs=(np.array(self.periodic_pairs, dtype=np.int64)
                            if self.periodic_pairs else np.zeros((0, 2), dtype=np.int64)),
            boundary_tags={k: (np.array(v, dtype=np.int64) if v
                               else np.zeros((0, 2), dtype=np.int64))
                           for k, v in self.tags.items()},
            crack_edges=list(self.crack_edges),
            crack_radius=self.g.r0 if crack_radius is None else crack_radius,
            geometry=self.g if geometry is None else geometry,
            h=self.h)
        areas = mesh.signed_areas()
        bad = int(np.sum(areas <= 0.0))
        if bad:
            raise MeshGenerationFailure(f"{bad} non-positive triangles")
        return mesh


# ---------------------------------------------------------------------------
# public builders
# ---------------------------------------------------------------------------

def _terrain_mandatory(g: CellGeometry):
    pts = []
    if g.has_myelin:
        for t in g.myelin_breakpoints():
            y = float(g.band_to_y1(t))
            if 1e-12 < y < 1.0 - 1e-12:
                pts.append(y)
    for c in (g.a, g.b):
        if 1e-12 < c < 1.0 - 1e-12:
            pts.append(c)
    return pts


def _column_positions(bld: _Builder, x_lo, x_hi, mandatory):
    xs = sorted({x_lo, x_hi, *[x for x in mandatory if x_lo + 1e-12 < x < x_hi - 1e-12]})
    out = []
    for p, q in zip(xs, xs[1:]):
        out.append(p)
        out.extend(_graded_interior(p, q, bld.lx))
    out.append(x_hi)
    return out


def build_cell_mesh(geometry: CellGeometry, h: float, grading: float = 1.5,
                    min_factor: float = 0.35) -> AxiMesh:
    """Conforming cracked mesh of the cell cross section, graded at A and B.

    Local edge length is h*(dist/diam)**grading near the contact points,
    clipped to [min_factor*h, h]; min_factor < 0.3 trades element shape
    regularity for deeper corner refinement.
    """
    g = validate(geometry)
    if not (0.0 < h < (g.b - g.a) / 4.0):
        raise GeometryTooThin(
            f"target edge length h={h} too large for node width {g.b - g.a}")
    bld = _Builder(g, h, grading, collar=None, min_factor=min_factor)
    crack_range = (g.a, g.b)

    xs = _column_positions(bld, 0.0, 1.0, _terrain_mandatory(g))
    stacks = []
    cut_src = None
    for x in xs:
        if abs(x - 1.0) < 1e-14 and cut_src is not None:
            stacks.append(bld.twin_stack(cut_src, 1.0))
            continue
        st = bld.make_stack(x, crack_range)
        if abs(x) < 1e-14:
            cut_src = st
        stacks.append(st)
    for cl, cr in zip(stacks, stacks[1:]):
        bld.strip(cl, cr, crack_range)
    return bld.finish()


def build_eigen_mesh(geometry: CellGeometry, h: float, collar: CollarSpec) -> AxiMesh:
    """Cell mesh with log-polar collar patches around the contact corners.

    Requires the wedge sheath family (exact straight contact rays); the bulk
    is quasi-uniform at size h since the corner layers live in the collars.
    """
    g = validate(geometry)
    if g.myelin.kind != "wedge":
        raise MyelinCurveInvalid("eigenvalue meshes require the wedge sheath family")
    if not (0.0 < h < (g.b - g.a) / 4.0):
        raise GeometryTooThin(f"h={h} too large for node width {g.b - g.a}")

    bld = _Builder(g, h, grading=1.0, collar=collar)
    patch_A = bld.build_collar("A")
    patch_B = bld.build_collar("B")
    crack_range = (g.a, g.b)

    def side_stack(x, patch: _CollarPatch, side):
        Pxi, Pd, Pu = patch.box
        if side == "node":
            below, above = patch.node_intra, patch.node_extra
            intra = bld._chain(x, 0.0, g.r0 - Pd, hi_id=below[0])[:-1] + below
            extra = above + bld._chain(x, g.r0 + Pu, g.R0, lo_id=above[-1])[1:]
            # intra[-1]/extra[0] are the collar's top +-pi pair, already recorded
            return _Stack(x=x, intra=intra, myelin=[], extra=extra, crack=True)
        intra = bld._chain(x, 0.0, g.r0 - Pd, hi_id=patch.band_intra[0])[:-1] \
            + patch.band_intra
        extra = patch.band_extra \
            + bld._chain(x, g.r0 + Pu, g.R0, lo_id=patch.band_extra[-1])[1:]
        return _Stack(x=x, intra=intra, myelin=patch.band_myelin,
                      extra=extra, crack=False)

    sA_band = side_stack(patch_A.band_side_x, patch_A, "band")
    sA_node = side_stack(patch_A.node_side_x, patch_A, "node")
    sB_node = side_stack(patch_B.node_side_x, patch_B, "node")
    sB_band = side_stack(patch_B.band_side_x, patch_B, "band")

    mandatory = _terrain_mandatory(g)
    first = bld.make_stack(0.0, crack_range)

    def interval(x_lo, x_hi, st_lo, st_hi):
        xs = _column_positions(bld, x_lo, x_hi, mandatory)
        stacks = [st_lo]
        stacks += [bld.make_stack(x, crack_range) for x in xs[1:-1]]
        stacks.append(st_hi)
        for cl, cr in zip(stacks, stacks[1:]):
            bld.strip(cl, cr, crack_range)

    interval(0.0, patch_A.band_side_x, first, sA_band)
    interval(patch_A.node_side_x, patch_B.node_side_x, sA_node, sB_node)
    interval(patch_B.band_side_x, 1.0, sB_band, bld.twin_stack(first, 1.0))

    # blocks above / below each corner box
    for patch, left, right in ((patch_A, sA_band, sA_node),
                               (patch_B, sB_node, sB_band)):
        Pxi, Pd, Pu = patch.box
        lt = _index_at_r(bld, left.extra, g.r0 + Pu)
        rt = _index_at_r(bld, right.extra, g.r0 + Pu)
        cols_top = [left.extra[lt:]]
        cols_top += [bld._chain(xpos, g.r0 + Pu, g.R0, lo_id=vid)
                     for vid, xpos in patch.top_nodes]
        cols_top.append(right.extra[rt:])
        for ca, cb in zip(cols_top, cols_top[1:]):
            _ladder(bld.pos_phys, ca, cb, bld.emit(EXTRA, 0))
            bld.tags["lateral"].append((ca[-1], cb[-1]))
        lb = _index_at_r(bld, left.intra, g.r0 - Pd)
        rb = _index_at_r(bld, right.intra, g.r0 - Pd)
        cols_bot = [left.intra[:lb + 1]]
        cols_bot += [bld._chain(xpos, 0.0, g.r0 - Pd, hi_id=vid)
                     for vid, xpos in patch.bottom_nodes]
        cols_bot.append(right.intra[:rb + 1])
        for ca, cb in zip(cols_bot, cols_bot[1:]):
            _ladder(bld.pos_phys, ca, cb, bld.emit(INTRA, 0))
            bld.tags["axis"].append((ca[0], cb[0]))

    return bld.finish()


def _index_at_r(bld, ids, r_val):
    for i, v in enumerate(ids):
        if abs(bld.vx[v][1] - r_val) < 1e-11:
            return i
    raise MeshGenerationFailure("box corner vertex not found on side column")


# ---------------------------------------------------------------------------
# microscale axon mesh: scaled, replicated cells welded along the cuts
# ---------------------------------------------------------------------------

def build_axon_mesh(geometry: CellGeometry, epsilon: float, n_cells: int,
                    h: float, collar: CollarSpec | None = None,
                    grading: float = 1.2) -> AxiMesh:
    """Mesh of the axon (0, n_cells*epsilon) x (0, epsilon*R0).

    The unit cell is meshed once and then scaled by epsilon and replicated;
    the template's periodic pairs weld neighbouring cells.  End vertices at
    x1 = 0 and x1 = L are exported under boundary tag "ends".
    """
    template = (build_eigen_mesh(geometry, h, collar) if collar is not None
                else build_cell_mesh(geometry, h, grading=grading))
    n_t = template.n_vertices
    tpairs = template.periodic_pairs
    lo2hi = {int(lo): int(hi) for lo, hi in tpairs}
    log_eps = math.log(epsilon)

    verts, uv, charts = [], [], [None]
    tris, treg, tch = [], [], []
    jump_pairs, crack_edges = [], []
    tags = {k: [] for k in template.boundary_tags}
    tags["ends"] = []

    prev_map = None
    for k in range(n_cells):
        vmap = np.full(n_t, -1, dtype=np.int64)
        if k > 0:
            for lo, hi in lo2hi.items():
                vmap[lo] = prev_map[hi]
        for v in range(n_t):
            if vmap[v] >= 0:
                continue
            y1, r = template.vertices[v]
            verts.append(((y1 + k) * epsilon, r * epsilon))
            phi, s = template.chart_coords[v]
            uv.append((phi, s + log_eps))
            vmap[v] = len(verts) - 1

        chart_map = {0: 0}
        for ci in range(1, len(template.charts)):
            info = template.charts[ci]
            charts.append(ChartInfo(
                corner=info.corner, anchor_x=(info.anchor_x + k) * epsilon,
                anchor_r=info.anchor_r * epsilon, orient=info.orient))
            chart_map[ci] = len(charts) - 1

        tris.append(vmap[template.triangles])
        treg.append(template.tri_region)
        tch.append(np.array([chart_map[int(c)] for c in template.tri_chart],
                            dtype=np.int32))
        for i, o in template.jump_pairs:
            jump_pairs.append((vmap[i], vmap[o]))
        for e in template.crack_edges:
            if e.kind == "phys":
                x1, x2 = (e.x1 + k) * epsilon, (e.x2 + k) * epsilon
            else:
                x1, x2 = e.x1 + log_eps, e.x2 + log_eps
            crack_edges.append(CrackEdge(
                inner1=vmap[e.inner1], outer1=vmap[e.outer1],
                inner2=vmap[e.inner2], outer2=vmap[e.outer2],
                kind=e.kind, x1=x1, x2=x2, chart=chart_map[e.chart]))
        for tag, edges in template.boundary_tags.items():
            for i, j in edges:
                tags[tag].append((vmap[i], vmap[j]))
        if k == 0:
            tags["ends"].extend((vmap[lo], vmap[lo]) for lo in lo2hi)
        if k == n_cells - 1:
            tags["ends"].extend((vmap[hi], vmap[hi]) for hi in lo2hi.values())
        prev_map = vmap

    mesh = AxiMesh(
        vertices=np.array(verts),
        triangles=np.vstack(tris),
        tri_region=np.concatenate(treg),
        tri_chart=np.concatenate(tch),
        chart_coords=np.array(uv),
        charts=charts,
        jump_pairs=np.array(jump_pairs, dtype=np.int64),
        periodic_pairs=np.zeros((0, 2), dtype=np.int64),
        boundary_tags={k: (np.array(v, dtype=np.int64) if v
                           else np.zeros((0, 2), dtype=np.int64))
                       for k, v in tags.items()},
        crack_edges=crack_edges,
        crack_radius=geometry.r0 * epsilon,
        geometry=geometry,
        h=h)
    return mesh


def dirichlet_end_vertices(mesh: AxiMesh):
    """Vertex ids on the two axon end planes (tag "ends")."""
    edges = mesh.boundary_tags.get("ends")
    if edges is None or not len(edges):
        return np.zeros(0, dtype=np.int64)
    return np.unique(edges)


# ---------------------------------------------------------------------------
# plain-text dump
# ---------------------------------------------------------------------------

def dump_mesh(mesh: AxiMesh, stream):
    """Plain-text mesh dump.

    Sections, one line per entity:
      v y1 r                  vertices (physical coordinates)
      t i j k region          triangles (region name)
      j inner outer           jump pairs on the node segment
      p lo hi                 periodic vertex pairs
      e tag i j               tagged boundary edges
    """
    stream.write(f"# axisymmetric cracked mesh: {mesh.n_vertices} vertices, "
                 f"{mesh.n_triangles} triangles\n")
    for y1, r in mesh.vertices:
        stream.write(f"v {y1:.17g} {r:.17g}\n")
    for (i, j, k), reg in zip(mesh.triangles, mesh.tri_region):
        stream.write(f"t {i} {j} {k} {REGION_NAMES[reg]}\n")
    for i, o in mesh.jump_pairs:
        stream.write(f"j {i} {o}\n")
    for lo, hi in mesh.periodic_pairs:
        stream.write(f"p {lo} {hi}\n")
    for tag, edges in mesh.boundary_tags.items():
        for i, j in edges:
            stream.write(f"e {tag} {i} {j}\n")
