"""Lattice discretization of continuum domains and discrete difference operators.

A domain D in R^d is discretized on the grid h*Z^d.  Grid points are
classified by how deep they sit inside the domain, using the second-order
neighbourhood

    N(y) = { y +- h e_i, y +- h(e_i +- e_j) : 1 <= i, j <= d }

(note i = j is allowed, so N(y) contains y +- 2h e_i).  The classes are

    V_h  = closure(D) cap h Z^d          all grid points of the domain
    R_h  = { y in V_h : N(y) in V_h }    interior points
    B_h  = V_h \\ R_h                     boundary band (double layer)
    R_h* = { y in R_h : N(y) in R_h }    deep interior
    B_h* = R_h \\ R_h*                    inner boundary band

The discrete field lives on R_h with zero values outside, which is exactly
the support needed so that the 13/25/41-point bilaplacian stencil applied at
any point of R_h never reads values outside V_h.

Operators are stored as integer stencils (offset -> coefficient) and scaled
by the appropriate power of h only when applied:

    delta1        (1/2d) * nearest-neighbour difference, dimensionless
    deltah        h^-2   * nearest-neighbour difference
    bilaplacian   h^-4   * squared stencil (center 4d^2+2d, axis -4d,
                  diagonals +2, double steps +1)
    bilap1        delta1 composed with itself = kappa^2 h^4 * bilaplacian
    lh2           bilaplacian on R_h*, h^2 * bilaplacian on B_h*, 0 elsewhere

with kappa = 1/(2d) throughout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

KAPPA_DENOM = 2  # kappa = 1 / (2 d)

Offset = Tuple[int, ...]
Stencil = Dict[Offset, Fraction]

# class labels
CLASS_BH = 0       # boundary band (field is pinned to zero here)
CLASS_BHSTAR = 1   # inner band: in R_h but not deep interior
CLASS_RHSTAR = 2   # deep interior
CLASS_NAMES = {CLASS_BH: "B_h", CLASS_BHSTAR: "B_h*", CLASS_RHSTAR: "R_h*"}


def kappa(d: int) -> float:
    return 1.0 / (2 * d)


# ---------------------------------------------------------------------------
# shapes

class ShapePredicate:
    """Bounded region of R^d with a pure, deterministic membership test.

    Membership is closed: points exactly on the boundary count as inside.
    """

    kind = "implicit"

    def __init__(self, dimension: int, membership: Callable[[np.ndarray], np.ndarray]):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        self._membership = membership

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Vectorized membership: x has shape (..., d); returns bool array."""
        return self._membership(np.asarray(x, dtype=float))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError("implicit shapes must override bounding_box")


class Box(ShapePredicate):
    """Axis-aligned box prod_i [lo_i, hi_i]."""

    kind = "box"

    def __init__(self, bounds: Sequence[Tuple[float, float]]):
        bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError("box bounds must satisfy lo < hi")
        self.bounds = bounds
        d = len(bounds)
        super().__init__(d, self._member)

    def _member(self, x: np.ndarray) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        eps = 1e-9 * scale
        return np.all((x >= lo - eps) & (x <= hi + eps), axis=-1)

    def bounding_box(self):
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return lo, hi

    def is_symmetric(self) -> bool:
        """Whether the box is centred at the origin per axis."""
        return all(abs(lo + hi) < 1e-12 for lo, hi in self.bounds)


class Ball(ShapePredicate):
    """Closed Euclidean ball of given center and radius."""

    kind = "ball"

    def __init__(self, center: Sequence[float], radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        super().__init__(len(self.center), self._member)

    def _member(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((x - self.center) ** 2, axis=-1)
        eps = 1e-9 * max(1.0, self.radius**2)
        return r2 <= self.radius**2 + eps

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


def unit_box(d: int) -> Box:
    """The standard box (-1, 1)^d used for the finite-volume field."""
    return Box([(-1.0, 1.0)] * d)


def shape_from_config(cfg: dict) -> ShapePredicate:
    """Build a shape from a config dict with keys kind, dimension, bounds/center/radius."""
    kind = cfg.get("kind")
    if kind == "box":
        if "bounds" in cfg:
            return Box([tuple(b) for b in cfg["bounds"]])
        d = int(cfg["dimension"])
        half = float(cfg.get("half_width", 1.0))
        return Box([(-half, half)] * d)
    if kind == "ball":
        d = int(cfg["dimension"])
        center = cfg.get("center", [0.0] * d)
        return Ball(center, float(cfg.get("radius", 1.0)))
    raise ValueError(f"unknown shape kind: {kind!r}")


# ---------------------------------------------------------------------------
# neighbourhood offsets

def neighborhood_offsets(d: int) -> list:
    """Offsets of N(y)/h: +-e_i, +-2e_i and +-e_i +- e_j for i != j."""
    offs = set()
    for i in range(d):
        for s in (1, -1):
            e = [0] * d
            e[i] = s
            offs.add(tuple(e))
            e = [0] * d
            e[i] = 2 * s
            offs.add(tuple(e))
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            for si in (1, -1):
                for sj in (1, -1):
                    e = [0] * d
                    e[i] = si
                    e[j] = sj
                    offs.add(tuple(e))
    return sorted(offs)


# ---------------------------------------------------------------------------
# grid domain

@dataclass
class GridDomain:
    """Lattice discretization of a shape with the double boundary-layer classification.

    Points are stored as integer lattice coordinates k (physical position
    x = k*h), ordered lexicographically.  `classes` holds one of CLASS_BH,
    CLASS_BHSTAR, CLASS_RHSTAR per point.  `rh_points`/`rh_index` give the
    bijection between R_h points and matrix row indices.
    """

    shape: ShapePredicate
    h: float
    points: np.ndarray          # (n, d) int64, all of V_h, lexicographic
    classes: np.ndarray         # (n,) int8
    origin: np.ndarray          # (d,) int64: lattice coord of mask[0,...,0]
    mask_shape: Tuple[int, ...]
    inside_mask: np.ndarray     # boolean over bounding grid (V_h)
    rh_mask: np.ndarray
    rhstar_mask: np.ndarray
    empty_interior: bool = False

    @property
    def d(self) -> int:
        return self.shape.dimension

    @property
    def kappa(self) -> float:
        return kappa(self.d)

    def __post_init__(self):
        rh = self.classes != CLASS_BH
        self.rh_points = self.points[rh]
        # map lattice coords -> row index over the bounding grid
        idx = -np.ones(self.mask_shape, dtype=np.int64)
        loc = tuple((self.rh_points - self.origin).T)
        idx[loc] = np.arange(len(self.rh_points))
        self.rh_index_grid = idx

    @property
    def n_vh(self) -> int:
        return len(self.points)

    @property
    def n_rh(self) -> int:
        return len(self.rh_points)

    def rh_coordinates(self) -> np.ndarray:
        """Physical coordinates of the R_h points, shape (n_rh, d)."""
        return self.rh_points * self.h

    def rh_index_of(self, point: Sequence[int]) -> int:
        """Row index of an integer lattice point; -1 if not in R_h."""
        p = np.asarray(point, dtype=np.int64) - self.origin
        if np.any(p < 0) or np.any(p >= np.array(self.mask_shape)):
            return -1
        return int(self.rh_index_grid[tuple(p)])

    def points_in_class(self, cls: int) -> np.ndarray:
        return self.points[self.classes == cls]

    def counts(self) -> Dict[str, int]:
        return {
            "V_h": self.n_vh,
            "B_h": int(np.sum(self.classes == CLASS_BH)),
            "B_h*": int(np.sum(self.classes == CLASS_BHSTAR)),
            "R_h*": int(np.sum(self.classes == CLASS_RHSTAR)),
            "R_h": self.n_rh,
        }

    def export_csv(self, path) -> None:
        """Write x_1..x_d,class rows for every V_h point."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{i+1}" for i in range(self.d)] + ["class"])
            for p, c in zip(self.points, self.classes):
                w.writerow([f"{v * self.h:.17g}" for v in p] + [CLASS_NAMES[int(c)]])


def _shift_and(mask: np.ndarray, offsets: Iterable[Offset]) -> np.ndarray:
    """Pointwise AND of mask shifted by every offset (False outside)."""
    out = mask.copy()
    nd = mask.ndim
    side = mask.shape
    for o in offsets:
        shifted = np.zeros_like(mask)
        src = []
        dst = []
        for k in range(nd):
            if o[k] >= 0:
                src.append(slice(o[k], side[k]))
                dst.append(slice(0, side[k] - o[k]))
            else:
                src.append(slice(0, side[k] + o[k]))
                dst.append(slice(-o[k], side[k]))
        shifted[tuple(dst)] = mask[tuple(src)]
        out &= shifted
    return out


def classify(shape: ShapePredicate, h: float) -> GridDomain:
    """Discretize a shape at spacing h and classify every grid point.

    Raises ValueError on an empty V_h ("degenerate discretization").  An
    empty R_h is flagged, not fatal.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    d = shape.dimension
    lo, hi = shape.bounding_box()
    kmin = np.floor(lo / h - 0.5).astype(np.int64)
    kmax = np.ceil(hi / h + 0.5).astype(np.int64)
    # pad by 2 cells so the neighbourhood test never leaves the array
    kmin -= 2
    kmax += 2
    shape_grid = tuple(int(b - a + 1) for a, b in zip(kmin, kmax))
    axes = [np.arange(a, b + 1) for a, b in zip(kmin, kmax)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack(mesh, axis=-1).astype(float) * h
    inside = shape.contains(coords)
    if not inside.any():
        raise ValueError("degenerate discretization: V_h is empty")

    offs = neighborhood_offsets(d)
    rh = inside & _shift_and(inside, offs)
    rhstar = rh & _shift_and(rh, offs)

    pts_idx = np.argwhere(inside)  # lexicographic (C order)
    points = pts_idx + kmin
    cls = np.zeros(len(points), dtype=np.int8)
    rh_flat = rh[tuple(pts_idx.T)]
    rhstar_flat = rhstar[tuple(pts_idx.T)]
    cls[rh_flat & ~rhstar_flat] = CLASS_BHSTAR
    cls[rhstar_flat] = CLASS_RHSTAR

    return GridDomain(
        shape=shape,
        h=float(h),
        points=points,
        classes=cls,
        origin=kmin,
        mask_shape=shape_grid,
        inside_mask=inside,
        rh_mask=rh,
        rhstar_mask=rhstar,
        empty_interior=not rh.any(),
    )


# ---------------------------------------------------------------------------
# stencils

def stencil_weights(variant: str, d: int) -> Stencil:
    """Integer/rational stencil for the named operator variant, before h-scaling.

    bilaplacian: collected coefficients of the expanded squared difference,
    center 4d^2+2d, +-e_i -> -4d, +-2e_i -> +1, +-e_i+-e_j (i != j) -> +2.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if variant in ("delta1", "deltah"):
        st: Stencil = {(0,) * d: Fraction(-2 * d)}
        for i in range(d):
            for s in (1, -1):
                e = [0] * d
                e[i] = s
                st[tuple(e)] = Fraction(1)
        if variant == "delta1":
            st = {o: c / (2 * d) for o, c in st.items()}
        return st
    if variant in ("bilaplacian", "bilap1", "lh2"):
        st = {(0,) * d: Fraction(4 * d * d + 2 * d)}
        for i in range(d):
            for s in (1, -1):
                e = [0] * d
                e[i] = s
                st[tuple(e)] = Fraction(-4 * d)
                e = [0] * d
                e[i] = 2 * s
                st[tuple(e)] = Fraction(1)
        for i in range(d):
            for j in range(i + 1, d):
                for si in (1, -1):
                    for sj in (1, -1):
                        e = [0] * d
                        e[i] = si
                        e[j] = sj
                        st[tuple(e)] = Fraction(2)
        if variant == "bilap1":
            st = {o: c / (4 * d * d) for o, c in st.items()}
        return st
    raise ValueError(f"unknown operator variant: {variant!r}")


@dataclass(frozen=True)
class DiscreteOperator:
    """A stencil plus its h-power scaling.  Immutable; application is pure."""

    variant: str
    d: int
    stencil: Stencil = field(compare=False, default=None)

    def __post_init__(self):
        if self.stencil is None:
            object.__setattr__(self, "stencil", stencil_weights(self.variant, self.d))

    def h_power(self) -> int:
        return {"delta1": 0, "bilap1": 0, "deltah": -2, "bilaplacian": -4, "lh2": -4}[
            self.variant
        ]

    def scale(self, h: float) -> float:
        return float(h) ** self.h_power()


def operator(variant: str, d: int) -> DiscreteOperator:
    return DiscreteOperator(variant=variant, d=d)


def apply_stencil_array(field: np.ndarray, stencil: Stencil, scale: float = 1.0) -> np.ndarray:
    """Apply a stencil to an nd-array, treating values outside the array as zero."""
    out = np.zeros_like(field, dtype=float)
    nd = field.ndim
    side = field.shape
    for o, c in stencil.items():
        src = []
        dst = []
        for k in range(nd):
            if o[k] >= 0:
                src.append(slice(o[k], side[k]))
                dst.append(slice(0, side[k] - o[k]))
            else:
                src.append(slice(0, side[k] + o[k]))
                dst.append(slice(-o[k], side[k]))
        out[tuple(dst)] += float(c) * field[tuple(src)]
    return out * scale


def apply(op: DiscreteOperator, field: np.ndarray, domain: GridDomain) -> np.ndarray:
    """Apply op to a field given on the domain's bounding grid (zero extension).

    The lh2 variant returns bilaplacian values on R_h*, h^2-scaled values on
    B_h*, and exactly zero outside R_h.
    """
    if field.shape != domain.mask_shape:
        raise ValueError(
            f"field shape {field.shape} does not match domain grid {domain.mask_shape}"
        )
    if op.d != domain.d:
        raise ValueError("operator dimension does not match domain")
    if op.variant == "lh2":
        base = stencil_weights("bilaplacian", op.d)
        raw = apply_stencil_array(field, base, domain.h ** -4)
        out = np.zeros_like(raw)
        out[domain.rhstar_mask] = raw[domain.rhstar_mask]
        bstar = domain.rh_mask & ~domain.rhstar_mask
        out[bstar] = domain.h**2 * raw[bstar]
        return out
    return apply_stencil_array(field, op.stencil, op.scale(domain.h))


def field_on_grid(domain: GridDomain, values_rh: np.ndarray) -> np.ndarray:
    """Embed R_h values into the domain's bounding grid with zeros elsewhere."""
    g = np.zeros(domain.mask_shape, dtype=float)
    g[tuple((domain.rh_points - domain.origin).T)] = values_rh
    return g


# ---------------------------------------------------------------------------
# B2* verifier

@dataclass
class B2StarReport:
    passed: bool
    K: int
    n_checked: int
    witnesses: dict            # point tuple -> (axis, direction, step of first of the pair)
    failures: list             # points with no axis witness within K steps


def verify_b2star(domain: GridDomain, K: int = 4) -> B2StarReport:
    """Check that every B_h* point sees two consecutive B_h points along some axis ray.

    Only the 2d axis rays are searched, within K steps.  Vacuously true when
    B_h* is empty.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    d = domain.d
    bstar_pts = domain.points[domain.classes == CLASS_BHSTAR]
    # B_h membership over the bounding grid
    bh_mask = domain.inside_mask & ~domain.rh_mask
    shape_grid = np.array(domain.mask_shape)

    def is_bh(p: np.ndarray) -> bool:
        q = p - domain.origin
        if np.any(q < 0) or np.any(q >= shape_grid):
            return False
        return bool(bh_mask[tuple(q)])

    witnesses = {}
    failures = []
    for p in bstar_pts:
        found = None
        for axis in range(d):
            for direction in (1, -1):
                run = 0
                for step in range(1, K + 1):
                    q = p.copy()
                    q[axis] += direction * step
                    if is_bh(q):
                        run += 1
                        if run == 2:
                            found = (axis, direction, step - 1)
                            break
                    else:
                        run = 0
                if found:
                    break
            if found:
                break
        if found:
            witnesses[tuple(int(v) for v in p)] = found
        else:
            failures.append(tuple(int(v) for v in p))
    return B2StarReport(
        passed=not failures,
        K=K,
        n_checked=len(bstar_pts),
        witnesses=witnesses,
        failures=failures,
    )
