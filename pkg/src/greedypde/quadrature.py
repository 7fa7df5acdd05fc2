"""Interior and boundary quadrature rules.

Three constructors cover the experiments: composite tensor-product
Gauss-Legendre grids (exact on piecewise polynomials of per-variable degree
<= 2t+1 over the cell partition), Halton quasi-Monte-Carlo points, and
uniform Monte-Carlo samples on boxes or the 2-D disk.  All weights are
strictly positive and exact-volume rules sum to |Omega|.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import NumericError, UnsupportedDomainError

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47,
           53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("box bounds must have equal length")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("box must have positive extent in every direction")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def radius(self) -> float:
        """Largest Euclidean norm over the box corners."""
        corner = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return float(np.linalg.norm(corner))

    @property
    def edge_lengths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        e = self.edge_lengths
        return float(sum(2.0 * np.prod(np.delete(e, j)) for j in range(self.dim)))


@dataclass(frozen=True)
class Disk:
    radius: float

    @property
    def dim(self) -> int:
        return 2

    @property
    def volume(self) -> float:
        return float(np.pi * self.radius**2)


@dataclass
class QuadratureRule:
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,), all > 0
    domain: object

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have equal length")
        if self.weights.size and self.weights.min() <= 0.0:
            raise ValueError("quadrature weights must be strictly positive")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class BoundaryRule(QuadratureRule):
    normals: np.ndarray = None  # (N, d) outward unit normals

    def __post_init__(self):
        super().__post_init__()
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if self.normals.shape != self.points.shape:
            raise ValueError("normals must match points in shape")


def _gauss_cells_1d(lo: float, hi: float, cells: int, t: int):
    """Nodes/weights of the composite (t+1)-point Gauss rule on [lo, hi]."""
    nodes, wts = roots_legendre(t + 1)
    edges = np.linspace(lo, hi, cells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * wts[None, :]).ravel()
    return x, w


def gauss_grid(box: Box, cells_per_dim, t: int) -> QuadratureRule:
    """Composite tensor-product Gauss-Legendre rule, (t+1)^d nodes per cell."""
    if t < 0:
        raise ValueError("t must be >= 0")
    cells = np.atleast_1d(np.asarray(cells_per_dim, dtype=int))
    if cells.size == 1:
        cells = np.full(box.dim, cells[0])
    if cells.size != box.dim or cells.min() < 1:
        raise ValueError("cells_per_dim must give >= 1 cell per dimension")
    axes = [
        _gauss_cells_1d(box.lower[j], box.upper[j], int(cells[j]), t)
        for j in range(box.dim)
    ]
    grids = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    points = np.column_stack([g.ravel() for g in grids])
    w = axes[0][1]
    for _, wj in axes[1:]:
        w = np.multiply.outer(w, wj)
    return QuadratureRule(points, w.ravel(), box)


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    n = indices.astype(np.int64).copy()
    out = np.zeros(n.shape, dtype=float)
    denom = float(base)
    while np.any(n > 0):
        out += (n % base) / denom
        n //= base
        denom *= base
    return out


def halton(box: Box, n: int, start_index: int = 1) -> QuadratureRule:
    """First n Halton points (index 0, the origin, is skipped by default),
    scaled to the box; weights are |Omega|/n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if box.dim > len(_PRIMES):
        raise ValueError(f"halton supports dimension <= {len(_PRIMES)}")
    idx = np.arange(start_index, start_index + n)
    cols = [_radical_inverse(idx, _PRIMES[j]) for j in range(box.dim)]
    unit = np.column_stack(cols)
    lo = np.asarray(box.lower)
    points = lo + unit * box.edge_lengths
    weights = np.full(n, box.volume / n)
    return QuadratureRule(points, weights, box)


def monte_carlo(domain, n: int, seed: int) -> QuadratureRule:
    """n i.i.d. uniform samples on a box or disk; weights |Omega|/n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(domain, Box):
        unit = rng.random((n, domain.dim))
        points = np.asarray(domain.lower) + unit * domain.edge_lengths
    elif isinstance(domain, Disk):
        # polar map with radius R * sqrt(u) gives the uniform area measure
        u = rng.random(n)
        theta = 2.0 * np.pi * rng.random(n)
        r = domain.radius * np.sqrt(u)
        points = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    else:
        raise UnsupportedDomainError(f"cannot sample domain {domain!r}")
    weights = np.full(n, domain.volume / n)
    return QuadratureRule(points, weights, domain)


def boundary_rule(box: Box, points_per_edge: int, t: int = 2,
                  method: str = "gauss", seed: int = 0) -> BoundaryRule:
    """Rule over the box boundary with outward unit normals attached.

    1-D: the two endpoint atoms with weight 1.  2-D: per-edge composite
    Gauss grids ('gauss') or uniform random samples per edge ('random').
    """
    if box.dim == 1:
        lo, hi = box.lower[0], box.upper[0]
        return BoundaryRule(
            points=np.array([[lo], [hi]]),
            weights=np.array([1.0, 1.0]),
            domain=box,
            normals=np.array([[-1.0], [1.0]]),
        )
    if box.dim != 2:
        raise UnsupportedDomainError(
            f"exact boundary rules support d in {{1, 2}}, got d = {box.dim}"
        )
    (x0, x1), (y0, y1) = (box.lower[0], box.upper[0]), (box.lower[1], box.upper[1])
    # (fixed axis, fixed value, varying axis bounds, outward normal)
    edges = [
        (0, x0, (y0, y1), (-1.0, 0.0)),
        (0, x1, (y0, y1), (1.0, 0.0)),
        (1, y0, (x0, x1), (0.0, -1.0)),
        (1, y1, (x0, x1), (0.0, 1.0)),
    ]
    rng = np.random.default_rng(seed)
    pts, wts, nrm = [], [], []
    for axis, value, (a, b), normal in edges:
        if method == "gauss":
            cells = max(1, int(round(points_per_edge / (t + 1))))
            s, w = _gauss_cells_1d(a, b, cells, t)
        elif method == "random":
            s = a + (b - a) * rng.random(points_per_edge)
            w = np.full(points_per_edge, (b - a) / points_per_edge)
        else:
            raise ValueError(f"unknown boundary method {method!r}")
        p = np.empty((s.size, 2))
        p[:, axis] = value
        p[:, 1 - axis] = s
        pts.append(p)
        wts.append(w)
        nrm.append(np.tile(normal, (s.size, 1)))
    return BoundaryRule(
        points=np.vstack(pts),
        weights=np.concatenate(wts),
        domain=box,
        normals=np.vstack(nrm),
    )


def integrate(rule: QuadratureRule, f) -> float:
    """sum_i w_i f(x_i); raises NumericError on a non-finite sample."""
    if rule.size == 0:
        return 0.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            vals = np.asarray(f(rule.points), dtype=float)
        if vals.shape != (rule.size,):
            raise TypeError
    except (TypeError, ValueError, DeprecationWarning):
        vals = np.array([float(f(p)) for p in rule.points])
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericError(
            f"non-finite integrand value at point index {i}",
            index=i,
            point=rule.points[i],
        )
    return float(rule.weights @ vals)
