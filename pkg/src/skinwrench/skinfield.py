"""Taxel-array interpolation and surface integration.

Each taxel is modelled as a disk in the UV chart, sampled as its center plus
eight points on the rim. All samples carry the taxel's pressure, position and
normal. The samples are triangulated (Delaunay in UV) and every field is
barycentric-linear per triangle; pressure is zero outside the convex hull.

Taxel normals point along the force that the sensed pressure exerts on the
link, so the integrated force is ``sum(p * n) dA`` with no sign flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import Delaunay, QhullError, cKDTree

from .spatial import Wrench

DISK_POINTS = 8
DEDUP_TOL = 1e-9
DEFAULT_RESOLUTION = 200
CALIBRATION_CEILING = 50e3
DEFAULT_THRESHOLD = 1e3
_NORMAL_EPS = 1e-9

# column layout of InterpolatedFields.values
P, X, Y, Z, NX, NY, NZ = range(7)


class DegenerateTriangulationError(ValueError):
    """Sample points are collinear (or fewer than three)."""


class DegenerateNormalError(ValueError):
    """Interpolated normal vanishes, e.g. between opposing taxel normals."""


@dataclass(frozen=True, eq=False)
class Taxel:
    id: int | str
    uv: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    radius: float
    area: float

    def __post_init__(self):
        uv = np.array(self.uv, dtype=float)
        pos = np.array(self.position, dtype=float)
        nrm = np.array(self.normal, dtype=float)
        if uv.shape != (2,) or pos.shape != (3,) or nrm.shape != (3,):
            raise ValueError(f"taxel {self.id}: bad uv/position/normal shape")
        if not (np.all(np.isfinite(uv)) and np.all(np.isfinite(pos)) and np.all(np.isfinite(nrm))):
            raise ValueError(f"taxel {self.id}: non-finite geometry")
        if abs(np.linalg.norm(nrm) - 1.0) > 1e-6:
            raise ValueError(f"taxel {self.id}: normal is not unit length")
        if not self.radius > 0 or not self.area > 0:
            raise ValueError(f"taxel {self.id}: radius and area must be positive")
        for name, arr in (("uv", uv), ("position", pos), ("normal", nrm)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "area", float(self.area))

    @classmethod
    def from_dict(cls, d: dict) -> "Taxel":
        return cls(
            d["id"],
            (d["u"], d["v"]),
            (d["px"], d["py"], d["pz"]),
            (d["nx"], d["ny"], d["nz"]),
            d["radius"],
            d["area"],
        )

    def to_dict(self) -> dict:
        (u, v), (px, py, pz), (nx, ny, nz) = self.uv, self.position, self.normal
        return {
            "id": self.id, "u": float(u), "v": float(v),
            "px": float(px), "py": float(py), "pz": float(pz),
            "nx": float(nx), "ny": float(ny), "nz": float(nz),
            "radius": self.radius, "area": self.area,
        }


@dataclass(frozen=True, eq=False)
class SkinPatch:
    """Taxels covering one link, laid out in the chart ``[u1, u2] x [v1, v2]``."""

    link: str
    taxels: tuple[Taxel, ...]
    chart: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        taxels = tuple(self.taxels)
        object.__setattr__(self, "taxels", taxels)
        if len(taxels) < 3:
            raise ValueError(f"patch on {self.link!r} needs at least 3 taxels")
        ids = [t.id for t in taxels]
        if len(set(ids)) != len(ids):
            raise ValueError(f"patch on {self.link!r} has duplicate taxel ids")
        uv = np.array([t.uv for t in taxels])
        centered = uv - uv.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(uv).max())) < 2:
            raise DegenerateTriangulationError(f"taxel centers on {self.link!r} are collinear")
        if self.chart is None:
            r = max(t.radius for t in taxels)
            chart = (uv[:, 0].min() - r, uv[:, 0].max() + r, uv[:, 1].min() - r, uv[:, 1].max() + r)
        else:
            chart = tuple(float(c) for c in self.chart)
        u1, u2, v1, v2 = chart
        if not (u1 < u2 and v1 < v2):
            raise ValueError("chart bounds must satisfy u1 < u2 and v1 < v2")
        eps = 1e-12
        if np.any(uv[:, 0] < u1 - eps) or np.any(uv[:, 0] > u2 + eps) or np.any(uv[:, 1] < v1 - eps) or np.any(uv[:, 1] > v2 + eps):
            raise ValueError(f"taxel outside chart bounds on {self.link!r}")
        object.__setattr__(self, "chart", chart)

    def __len__(self) -> int:
        return len(self.taxels)

    @property
    def ids(self) -> list:
        return [t.id for t in self.taxels]

    @property
    def uv(self) -> np.ndarray:
        return np.array([t.uv for t in self.taxels])

    @property
    def positions(self) -> np.ndarray:
        return np.array([t.position for t in self.taxels])

    @property
    def normals(self) -> np.ndarray:
        return np.array([t.normal for t in self.taxels])

    @property
    def areas(self) -> np.ndarray:
        return np.array([t.area for t in self.taxels])

    @classmethod
    def from_dict(cls, d: dict) -> "SkinPatch":
        return cls(d["link"], tuple(Taxel.from_dict(t) for t in d["taxels"]), d.get("chart"))

    def to_dict(self) -> dict:
        return {"link": self.link, "chart": list(self.chart), "taxels": [t.to_dict() for t in self.taxels]}


@dataclass(frozen=True, eq=False)
class PressureFrame:
    link: str
    pressures: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        p = np.array(self.pressures, dtype=float)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise ValueError("pressures must be a finite 1-D array")
        p.setflags(write=False)
        object.__setattr__(self, "pressures", p)

    def check(self, patch: SkinPatch) -> None:
        if self.link != patch.link:
            raise ValueError(f"pressure frame for {self.link!r} applied to patch on {patch.link!r}")
        if len(self.pressures) != len(patch):
            raise ValueError(f"{len(self.pressures)} pressures for {len(patch)} taxels on {patch.link!r}")


@dataclass(frozen=True, eq=False)
class DataPoints:
    """Disk samples, ordered by (taxel, angle index); angle index 0 is the center."""

    uv: np.ndarray
    pressure: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    taxel: np.ndarray
    is_center: np.ndarray

    def __len__(self) -> int:
        return len(self.pressure)


@dataclass(frozen=True, eq=False)
class SkinContact:
    link: str
    location: np.ndarray
    wrench: Wrench
    activated_taxels: tuple

    def __post_init__(self):
        if not self.activated_taxels:
            raise ValueError("a skin contact needs at least one activated taxel")
        if self.wrench.frame != self.link:
            raise ValueError("skin contact wrench must be expressed in the link frame")


def sample_taxel_disks(patch: SkinPatch, frame: PressureFrame, n_rim: int = DISK_POINTS) -> DataPoints:
    frame.check(patch)
    n = len(patch)
    k = n_rim + 1
    angles = 2.0 * np.pi * np.arange(n_rim) / n_rim
    offsets = np.vstack([np.zeros((1, 2)), np.column_stack([np.cos(angles), np.sin(angles)])])
    radii = np.array([t.radius for t in patch.taxels])
    uv = patch.uv[:, None, :] + radii[:, None, None] * offsets[None, :, :]
    is_center = np.zeros((n, k), dtype=bool)
    is_center[:, 0] = True
    return DataPoints(
        uv=uv.reshape(-1, 2),
        pressure=np.repeat(frame.pressures, k),
        position=np.repeat(patch.positions, k, axis=0),
        normal=np.repeat(patch.normals, k, axis=0),
        taxel=np.repeat(np.arange(n), k),
        is_center=is_center.reshape(-1),
    )


def _dedupe(points: DataPoints) -> np.ndarray:
    """Indices kept after merging samples closer than DEDUP_TOL (max pressure wins)."""
    n = len(points)
    pairs = cKDTree(points.uv).query_pairs(DEDUP_TOL, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(n)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # highest pressure first, then lowest index
    order = np.lexsort((np.arange(n), -points.pressure))
    _, first = np.unique(labels[order], return_index=True)
    return np.sort(order[first])


class InterpolatedFields:
    """Piecewise-linear pressure, position and normal fields over a UV triangulation."""

    def __init__(self, tri: Delaunay, values: np.ndarray, taxel: np.ndarray,
                 centers_uv: np.ndarray, centers_pos: np.ndarray):
        self.tri = tri
        self.values = values
        self.values.setflags(write=False)
        self.taxel = taxel
        self.centers_uv = centers_uv
        self.centers_pos = centers_pos
        self._grid_cache: dict = {}
        self._metric = None

    @property
    def uv(self) -> np.ndarray:
        return self.tri.points

    @property
    def pressure(self) -> np.ndarray:
        return self.values[:, P]

    def with_pressure(self, pressure: np.ndarray) -> "InterpolatedFields":
        """Same triangulation and geometry with new per-vertex pressures."""
        values = self.values.copy()
        values[:, P] = pressure
        out = InterpolatedFields(self.tri, values, self.taxel, self.centers_uv, self.centers_pos)
        out._grid_cache = self._grid_cache
        out._metric = self._metric
        return out

    def hull_bounds(self) -> tuple[float, float, float, float]:
        lo, hi = self.uv.min(axis=0), self.uv.max(axis=0)
        return (lo[0], hi[0], lo[1], hi[1])

    def locate(self, uv) -> tuple[np.ndarray, np.ndarray]:
        """Containing simplex (-1 outside) and barycentric weights per query."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        simplex = self.tri.find_simplex(uv)
        inside = simplex >= 0
        bary = np.zeros((len(uv), 3))
        if np.any(inside):
            s = simplex[inside]
            T = self.tri.transform[s]
            b = np.einsum("ijk,ik->ij", T[:, :2, :], uv[inside] - T[:, 2, :])
            bary[inside] = np.column_stack([b, 1.0 - b.sum(axis=1)])
            # node reproduction: snap queries that coincide with a vertex
            verts = self.tri.simplices[s]
            hit = np.all(self.uv[verts] == uv[inside][:, None, :], axis=2)
            rows = np.flatnonzero(hit.any(axis=1))
            if len(rows):
                snapped = np.zeros((len(rows), 3))
                snapped[np.arange(len(rows)), hit[rows].argmax(axis=1)] = 1.0
                sub = bary[inside]
                sub[rows] = snapped
                bary[inside] = sub
        return simplex, bary

    def evaluate(self, uv, columns=slice(None)) -> np.ndarray:
        """Field values at the queries; pressure is 0 and geometry NaN outside the hull."""
        simplex, bary = self.locate(uv)
        vals = self.values[:, columns]
        out = np.full((len(simplex),) + vals.shape[1:], np.nan)
        inside = simplex >= 0
        if np.any(inside):
            verts = self.tri.simplices[simplex[inside]]
            out[inside] = np.einsum("ij,ij...->i...", bary[inside], vals[verts])
        if isinstance(columns, slice) and columns == slice(None):
            out[~inside, P] = 0.0
        elif columns == P:
            out[~inside] = 0.0
        return out

    def pressure_at(self, u: float, v: float) -> float:
        return float(self.evaluate([[u, v]], P)[0])

    def position_at(self, u: float, v: float) -> np.ndarray:
        pos = self.evaluate([[u, v]], slice(X, Z + 1))[0]
        if np.any(np.isnan(pos)):
            raise ValueError(f"({u}, {v}) is outside the triangulated region")
        return pos

    def metric_factor(self, uv: np.ndarray) -> np.ndarray:
        """``|dr/du x dr/dv|`` from differences of taxel-center positions.

        Rim samples reuse their taxel's position, so the Jacobian is taken on
        a triangulation of the taxel centers and interpolated from per-center
        averages (nearest center outside that hull).
        """
        if self._metric is None:
            ctri = Delaunay(self.centers_uv)
            acc = np.zeros(len(self.centers_uv))
            cnt = np.zeros(len(self.centers_uv))
            for simp in ctri.simplices:
                duv = self.centers_uv[simp[1:]] - self.centers_uv[simp[0]]
                dpos = self.centers_pos[simp[1:]] - self.centers_pos[simp[0]]
                jac = np.linalg.solve(duv, dpos)  # rows: dr/du, dr/dv
                m = np.linalg.norm(np.cross(jac[0], jac[1]))
                acc[simp] += m
                cnt[simp] += 1
            per_center = np.where(cnt > 0, acc / np.maximum(cnt, 1), 1.0)
            self._metric = (ctri, per_center, cKDTree(self.centers_uv))
        ctri, per_center, tree = self._metric
        simplex = ctri.find_simplex(uv)
        out = np.empty(len(uv))
        inside = simplex >= 0
        if np.any(inside):
            T = ctri.transform[simplex[inside]]
            b = np.einsum("ijk,ik->ij", T[:, :2, :], uv[inside] - T[:, 2, :])
            bary = np.column_stack([b, 1.0 - b.sum(axis=1)])
            out[inside] = np.einsum("ij,ij->i", bary, per_center[ctri.simplices[simplex[inside]]])
        if np.any(~inside):
            _, idx = tree.query(uv[~inside])
            out[~inside] = per_center[idx]
        return out

    def _grid(self, bounds, resolution):
        nu, nv = _resolution(resolution)
        key = (tuple(float(b) for b in bounds), nu, nv)
        hit = self._grid_cache.get(key)
        if hit is None:
            u1, u2, v1, v2 = bounds
            du, dv = (u2 - u1) / nu, (v2 - v1) / nv
            uu = u1 + (np.arange(nu) + 0.5) * du
            vv = v1 + (np.arange(nv) + 0.5) * dv
            U, V = np.meshgrid(uu, vv, indexing="xy")
            uv = np.column_stack([U.ravel(), V.ravel()])
            simplex, bary = self.locate(uv)
            inside = simplex >= 0
            hit = (uv[inside], self.tri.simplices[simplex[inside]], bary[inside], du * dv)
            self._grid_cache[key] = hit
        return hit


def build_fields(points: DataPoints) -> InterpolatedFields:
    if len(points) < 3:
        raise DegenerateTriangulationError("need at least 3 data points")
    keep = _dedupe(points)
    uv = points.uv[keep]
    centered = uv - uv.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(uv).max())) < 2:
        raise DegenerateTriangulationError("data points are collinear")
    try:
        tri = Delaunay(uv)
    except QhullError as exc:
        raise DegenerateTriangulationError(str(exc)) from exc
    values = np.column_stack([points.pressure[keep], points.position[keep], points.normal[keep]])
    centers = points.is_center
    return InterpolatedFields(tri, values, points.taxel[keep], points.uv[centers], points.position[centers])


def fields_for(patch: SkinPatch, frame: PressureFrame) -> InterpolatedFields:
    return build_fields(sample_taxel_disks(patch, frame))


def normal_at(fields: InterpolatedFields, u: float, v: float) -> np.ndarray:
    n = fields.evaluate([[u, v]], slice(NX, NZ + 1))[0]
    if np.any(np.isnan(n)):
        raise ValueError(f"({u}, {v}) is outside the triangulated region")
    norm = np.linalg.norm(n)
    if norm < _NORMAL_EPS:
        raise DegenerateNormalError(f"interpolated normal vanishes at ({u}, {v})")
    return n / norm


def _resolution(resolution) -> tuple[int, int]:
    if np.isscalar(resolution):
        nu = nv = int(resolution)
    else:
        nu, nv = (int(r) for r in resolution)
    if nu < 2 or nv < 2:
        raise ValueError("quadrature resolution must be at least 2x2")
    return nu, nv


def _traction_samples(fields, bounds, resolution, metric_factor):
    if bounds is None:
        bounds = fields.hull_bounds()
    uv, verts, bary, cell = fields._grid(bounds, resolution)
    p = np.einsum("ij,ij->i", bary, fields.values[verts, P])
    loaded = p != 0.0
    uv, verts, bary, p = uv[loaded], verts[loaded], bary[loaded], p[loaded]
    n = np.einsum("ij,ijk->ik", bary, fields.values[verts, NX:NZ + 1])
    norm = np.linalg.norm(n, axis=1)
    if np.any(norm < _NORMAL_EPS):
        raise DegenerateNormalError("interpolated normal vanishes inside the loaded region")
    weight = p * cell
    if metric_factor:
        weight = weight * fields.metric_factor(uv)
    traction = (weight / norm)[:, None] * n
    return traction, verts, bary


def integrate_force(fields: InterpolatedFields, bounds=None, resolution=DEFAULT_RESOLUTION,
                    metric_factor: bool = False) -> np.ndarray:
    """Midpoint-rule ``sum p(u,v) n(u,v) du dv``; cells outside the hull add nothing."""
    traction, _, _ = _traction_samples(fields, bounds, resolution, metric_factor)
    return traction.sum(axis=0)


def integrate_torque(fields: InterpolatedFields, bounds=None, resolution=DEFAULT_RESOLUTION,
                     metric_factor: bool = False) -> np.ndarray:
    """Moment ``sum r x (p n) du dv`` about the link-frame origin."""
    traction, verts, bary = _traction_samples(fields, bounds, resolution, metric_factor)
    r = np.einsum("ij,ijk->ik", bary, fields.values[verts, X:Z + 1])
    return np.cross(r, traction).sum(axis=0)


def integrate_wrench(fields: InterpolatedFields, frame: str, bounds=None,
                     resolution=DEFAULT_RESOLUTION, metric_factor: bool = False) -> Wrench:
    traction, verts, bary = _traction_samples(fields, bounds, resolution, metric_factor)
    r = np.einsum("ij,ijk->ik", bary, fields.values[verts, X:Z + 1])
    return Wrench(traction.sum(axis=0), np.cross(r, traction).sum(axis=0), frame)


def simplified_force(patch: SkinPatch, frame: PressureFrame) -> float:
    """``|A sum p_i n_i|`` for taxels sharing one area ``A``."""
    frame.check(patch)
    areas = patch.areas
    if not np.allclose(areas, areas[0], rtol=1e-9, atol=0.0):
        raise ValueError("simplified force needs all taxels to share one area")
    return float(np.linalg.norm(areas[0] * (frame.pressures[:, None] * patch.normals).sum(axis=0)))


def saturated_taxels(patch: SkinPatch, frame: PressureFrame, ceiling: float = CALIBRATION_CEILING) -> list:
    frame.check(patch)
    return [patch.taxels[i].id for i in np.flatnonzero(frame.pressures > ceiling)]


def detect_contacts(patch: SkinPatch, frame: PressureFrame, fields: InterpolatedFields,
                    threshold: float = DEFAULT_THRESHOLD, resolution=DEFAULT_RESOLUTION,
                    metric_factor: bool = False) -> list[SkinContact]:
    """Group activated taxels into contacts.

    Taxels above ``threshold`` are connected when a triangulation edge joins
    their samples; each connected group is one contact. Every other loaded
    taxel (pressure > 0) joins the group it is fewest edges away from through
    loaded taxels, so sub-threshold tails still count towards the wrench.
    Each group's wrench integrates the field obtained by zeroing every sample
    outside the group.
    """
    frame.check(patch)
    active = frame.pressures > threshold
    if not np.any(active):
        return []
    simp = fields.tri.simplices
    edges = np.vstack([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
    ta, tb = fields.taxel[edges[:, 0]], fields.taxel[edges[:, 1]]
    n = len(patch)
    between = ta != tb
    strong = between & active[ta] & active[tb]
    graph = coo_matrix((np.ones(int(strong.sum())), (ta[strong], tb[strong])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)

    loaded = frame.pressures > 0.0
    weak = between & loaded[ta] & loaded[tb]
    reach = coo_matrix((np.ones(int(weak.sum())), (ta[weak], tb[weak])), shape=(n, n)).tocsr()
    seeds = np.flatnonzero(active)
    _, _, source = dijkstra(reach, directed=False, indices=seeds, unweighted=True,
                            min_only=True, return_predecessors=True)
    owner = np.where(source >= 0, labels[np.maximum(source, 0)], -1)

    groups: dict[int, list[int]] = {}
    for i in seeds:
        groups.setdefault(labels[i], []).append(int(i))
    bounds = patch.chart
    positions = patch.positions
    contacts = []
    for members in sorted(groups.values()):
        members = np.array(members)
        in_group = np.isin(fields.taxel, np.flatnonzero(owner == labels[members[0]]))
        masked = fields.with_pressure(np.where(in_group, fields.pressure, 0.0))
        wrench = integrate_wrench(masked, patch.link, bounds, resolution, metric_factor)
        p = frame.pressures[members]
        location = (p[:, None] * positions[members]).sum(axis=0) / p.sum()
        ids = tuple(patch.taxels[i].id for i in members)
        contacts.append(SkinContact(patch.link, location, wrench, ids))
    return contacts


def mean_normal(patch: SkinPatch, frame: PressureFrame, taxel_ids: Sequence) -> np.ndarray:
    """Pressure-weighted unit normal over the given taxels."""
    index = {t.id: i for i, t in enumerate(patch.taxels)}
    rows = [index[t] for t in taxel_ids]
    n = (frame.pressures[rows, None] * patch.normals[rows]).sum(axis=0)
    norm = np.linalg.norm(n)
    if norm < _NORMAL_EPS:
        raise DegenerateNormalError("activated taxel normals cancel")
    return n / norm


def sample_grid(fields: InterpolatedFields, bounds, shape: tuple[int, int]) -> np.ndarray:
    """Rows ``u, v, p, x, y, z, nx, ny, nz`` on a ``W x H`` lattice, hull points only.

    Normals are renormalized; a vanishing normal is reported as NaN.
    """
    w, h = shape
    u1, u2, v1, v2 = bounds
    U, V = np.meshgrid(np.linspace(u1, u2, w), np.linspace(v1, v2, h), indexing="xy")
    uv = np.column_stack([U.ravel(), V.ravel()])
    vals = fields.evaluate(uv)
    inside = ~np.isnan(vals[:, X])
    uv, vals = uv[inside], vals[inside]
    n = vals[:, NX:NZ + 1]
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals[:, NX:NZ + 1] = np.where(norm < _NORMAL_EPS, np.nan, n / norm)
    return np.column_stack([uv, vals])
