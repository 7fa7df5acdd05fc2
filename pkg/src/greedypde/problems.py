"""PDE problem instances and their discrete objectives.

A quadratic objective is stored as 1/2 ||J(v) - y||^2_W + offset, where the
evaluation map J collects linear combinations of partial derivatives of v at
quadrature points.  Coordinates are grouped into blocks; each block shares
one point set, one metric-weight vector W (> 0), one target vector y, and a
list of (multi-index, coefficient) terms whose sum forms the coordinate
value.  Examples:

  * energy form: one block per derivative stage -- the zero-order block has
    W = w * a0 and target a0^{-1} f, each |alpha| = m block has
    W = w * a_alpha and target 0;
  * Dirichlet penalty: boundary blocks of normal-derivative traces with
    metric weight delta^{-1} * w-tilde and target 0;
  * PINN: one residual row per collocation point, mixing all operator terms,
    with target f; boundary rows of normal traces with target 0.

The constant offset is carried so that the objective value coincides with
the discretized energy (or the MSE residual), not just an equivalent
quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import (
    Activation,
    Expansion,
    RidgeNeuron,
    activation_derivative,
    multi_index_order,
    ridge_argument_many,
)
from .errors import (
    CoefficientViolationError,
    NumericError,
    UnsupportedDerivativeError,
)
from .quadrature import BoundaryRule, QuadratureRule


def _sample_coefficient(coeff, points: np.ndarray) -> np.ndarray:
    """Evaluate a constant or callable coefficient on (N, d) points."""
    if callable(coeff):
        vals = np.asarray(coeff(points), dtype=float)
        if vals.shape != (points.shape[0],):
            vals = np.broadcast_to(vals, (points.shape[0],)).astype(float)
        return vals
    return np.full(points.shape[0], float(coeff))


@dataclass
class CoordinateBlock:
    """One block of objective coordinates sharing points, metric and target."""

    label: str
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,) metric weights, > 0
    target: np.ndarray  # (N,)
    terms: list  # [(alpha, coeff)] with coeff a scalar or (N,) array

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.target = np.asarray(self.target, dtype=float).ravel()
        if self.weights.min() <= 0.0:
            raise ValueError(f"block {self.label!r} has nonpositive metric weight")
        self.terms = [
            (tuple(int(a) for a in alpha), coeff) for alpha, coeff in self.terms
        ]

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def max_order(self) -> int:
        return max(multi_index_order(alpha) for alpha, _ in self.terms)


class QuadraticObjective:
    """1/2 ||J(v) - y||^2_W + offset over coordinate blocks."""

    def __init__(self, blocks, offset=0.0, domain=None, meta=None):
        self.blocks = list(blocks)
        self.offset = float(offset)
        self.domain = domain
        self.meta = dict(meta or {})

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def max_derivative_order(self) -> int:
        return max(b.max_order for b in self.blocks)

    @property
    def target_norm2(self) -> float:
        """||y||^2_W, used to scale convergence thresholds."""
        return float(sum(b.weights @ b.target**2 for b in self.blocks))

    def check_activation(self, act: Activation):
        """Smoothness gate: relu-power degree must exceed the highest
        derivative order appearing in the loss."""
        order = self.max_derivative_order
        if act.kind == "relu-power" and act.degree < order + 1:
            raise UnsupportedDerivativeError(
                f"objective needs derivative order {order}; relu-power degree "
                f"{act.degree} requires degree >= {order + 1}"
            )

    def embed_blocks(self, g: RidgeNeuron):
        """Per-block coordinates of J(g)."""
        self.check_activation(g.activation)
        out = []
        for b in self.blocks:
            t = ridge_argument_many(b.points, g.omega, g.bias)
            vals = np.zeros(b.size)
            by_order = {}
            for alpha, coeff in b.terms:
                w_pow = g.omega_power(alpha)
                if w_pow == 0.0:
                    continue
                o = multi_index_order(alpha)
                if o not in by_order:
                    by_order[o] = activation_derivative(g.activation, t, o)
                vals += np.multiply(coeff, w_pow * by_order[o])
            out.append(vals)
        return out

    def embed(self, g: RidgeNeuron) -> np.ndarray:
        return np.concatenate(self.embed_blocks(g))

    def coords(self, u: Expansion):
        """Per-block coordinates of J(u)."""
        out = [np.zeros(b.size) for b in self.blocks]
        for a, g in u.terms:
            for acc, vals in zip(out, self.embed_blocks(g)):
                acc += a * vals
        return out

    def value_from_coords(self, coords) -> float:
        total = 0.0
        for b, c in zip(self.blocks, coords):
            r = c - b.target
            total += float(b.weights @ r**2)
        return 0.5 * total + self.offset

    def value(self, u: Expansion) -> float:
        return self.value_from_coords(self.coords(u))

    def weighted_residual(self, coords):
        """Per-block W * (J(u) - y), the pairing field of the residual."""
        return [b.weights * (c - b.target) for b, c in zip(self.blocks, coords)]

    def pairing_from_wres(self, wres, g: RidgeNeuron) -> float:
        """<J(g), J(u) - y>_W given the precomputed weighted residual."""
        total = 0.0
        for vals, w in zip(self.embed_blocks(g), wres):
            total += float(vals @ w)
        return total

    def pairing(self, u: Expansion, g: RidgeNeuron) -> float:
        return self.pairing_from_wres(self.weighted_residual(self.coords(u)), g)

    def pairing_field_groups(self, wres):
        """Groups (points, {alpha: q}) with pairing(g) =
        sum_groups sum_alpha q . (omega^alpha sigma^(|alpha|)(points @ omega + b)).
        Blocks sharing a point array are merged so direction scans sort once."""
        groups = {}
        order = []
        for b, w in zip(self.blocks, wres):
            key = id(b.points)
            if key not in groups:
                groups[key] = (b.points, {})
                order.append(key)
            _, chan = groups[key]
            for alpha, coeff in b.terms:
                q = np.multiply(coeff, w)
                if alpha in chan:
                    chan[alpha] = chan[alpha] + q
                else:
                    chan[alpha] = q
        return [groups[k] for k in order]


@dataclass
class EllipticProblem:
    """2m-th order elliptic problem in divergence form.

    coeff_top maps each multi-index with |alpha| = m to its coefficient
    a_alpha (constant or callable on points); coeff_zero is a0.  bc is
    'natural' (pure Neumann, nothing to assemble on the boundary) or
    ('penalty', delta) for the Dirichlet boundary penalty.
    """

    order_m: int
    coeff_top: dict
    coeff_zero: object
    source: object
    domain: object
    bc: object = "natural"
    coeff_bounds: tuple = (0.0, math.inf)  # open bounds (alpha0, alpha1)

    def __post_init__(self):
        for alpha in self.coeff_top:
            if multi_index_order(alpha) != self.order_m:
                raise ValueError(
                    f"coeff_top key {alpha} must have order m = {self.order_m}"
                )

    @property
    def penalty(self):
        if isinstance(self.bc, tuple) and self.bc[0] == "penalty":
            delta = float(self.bc[1])
            if delta <= 0.0:
                raise ValueError("penalty delta must be positive")
            return delta
        return None


def _checked_coefficient(name, coeff, points, bounds):
    vals = _sample_coefficient(coeff, points)
    lo, hi = bounds
    if vals.min() <= lo or not np.isfinite(vals).all() or vals.max() >= hi:
        i = int(np.argmin(vals))
        raise CoefficientViolationError(
            f"coefficient {name} = {vals[i]:g} violates ({lo:g}, {hi:g}) "
            f"at point index {i}",
            point=points[i],
        )
    return vals


def assemble_energy(p: EllipticProblem, rule: QuadratureRule) -> QuadraticObjective:
    """Discretized variational energy under natural boundary conditions."""
    pts, w = rule.points, rule.weights
    a0 = _checked_coefficient("a0", p.coeff_zero, pts, p.coeff_bounds)
    f = _sample_coefficient(p.source, pts)
    blocks = [
        CoordinateBlock(
            label="zero",
            points=pts,
            weights=w * a0,
            target=f / a0,
            terms=[((0,) * rule.dim, 1.0)],
        )
    ]
    for alpha in sorted(p.coeff_top):
        a = _checked_coefficient(f"a_{alpha}", p.coeff_top[alpha], pts, p.coeff_bounds)
        blocks.append(
            CoordinateBlock(
                label=f"d{alpha}",
                points=pts,
                weights=w * a,
                target=np.zeros(rule.size),
                terms=[(alpha, 1.0)],
            )
        )
    offset = -0.5 * float(w @ (f**2 / a0))
    return QuadraticObjective(blocks, offset=offset, domain=p.domain)


def _normal_trace_terms(order: int, normals: np.ndarray):
    """d^k/d nu^k as multi-index terms: sum_{|beta|=k} (k choose beta) nu^beta d^beta."""
    d = normals.shape[1]
    if order == 0:
        return [((0,) * d, 1.0)]
    terms = []
    for beta in _multi_indices(d, order):
        c = math.factorial(order)
        nu_pow = np.ones(normals.shape[0])
        for j, bj in enumerate(beta):
            c //= math.factorial(bj)
            nu_pow = nu_pow * normals[:, j] ** bj
        terms.append((beta, c * nu_pow))
    return terms


def _multi_indices(d: int, order: int):
    """All multi-indices of length d with |alpha| = order, lexicographic."""
    if d == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        for rest in _multi_indices(d - 1, order - first):
            out.append((first,) + rest)
    return out


def assemble_penalized(
    p: EllipticProblem, rule: QuadratureRule, brule: BoundaryRule
) -> QuadraticObjective:
    """Energy plus Dirichlet-penalty boundary blocks: one coordinate per
    (boundary point, trace order k <= m-1) with metric weight delta^{-1} w."""
    delta = p.penalty
    if delta is None:
        raise ValueError("assemble_penalized requires bc = ('penalty', delta)")
    obj = assemble_energy(p, rule)
    for k in range(p.order_m):
        obj.blocks.append(
            CoordinateBlock(
                label=f"trace{k}",
                points=brule.points,
                weights=brule.weights / delta,
                target=np.zeros(brule.size),
                terms=_normal_trace_terms(k, brule.normals),
            )
        )
    obj.meta["delta"] = delta
    return obj


@dataclass
class PinnProblem:
    """Linear residual problem L v = f with L = sum_alpha a_alpha d^alpha.

    boundary_trace_orders lists the normal-derivative orders whose traces
    are driven to zero on the boundary (order 1 is the Neumann trace).
    """

    operator: dict
    source: object
    domain: object
    boundary_trace_orders: tuple = (1,)

    def __post_init__(self):
        if not self.operator:
            raise ValueError("operator must include at least one term")


def assemble_pinn(
    p: PinnProblem,
    interior: QuadratureRule,
    boundary: BoundaryRule,
    boundary_weighting: str = "mean",
) -> QuadraticObjective:
    """MSE residual objective: value(v) = MSE_f + MSE_bc.

    Interior rows carry metric weight 2 w_i / |Omega| (1/2 ||.||^2 then
    equals the mean squared residual for uniform samples).  Boundary rows
    use 2 / N_bc ('mean') or 2 w-tilde_j ('atoms'); the latter reproduces the
    unnormalized endpoint sum used for 1-D problems.
    """
    pts, w = interior.points, interior.weights
    f = _sample_coefficient(p.source, pts)
    terms = [
        (alpha, _sample_coefficient(coeff, pts))
        for alpha, coeff in sorted(p.operator.items())
    ]
    blocks = [
        CoordinateBlock(
            label="residual",
            points=pts,
            weights=2.0 * w / interior.domain.volume,
            target=f,
            terms=terms,
        )
    ]
    if p.boundary_trace_orders:
        if boundary is None or boundary.size == 0:
            raise ValueError("boundary rule required for boundary trace rows")
        if boundary_weighting == "mean":
            bw = np.full(boundary.size, 2.0 / boundary.size)
        elif boundary_weighting == "atoms":
            bw = 2.0 * boundary.weights
        else:
            raise ValueError(f"unknown boundary_weighting {boundary_weighting!r}")
        for k in p.boundary_trace_orders:
            blocks.append(
                CoordinateBlock(
                    label=f"bc_trace{k}",
                    points=boundary.points,
                    weights=bw,
                    target=np.zeros(boundary.size),
                    terms=_normal_trace_terms(k, boundary.normals),
                )
            )
    return QuadraticObjective(blocks, offset=0.0, domain=p.domain)


@dataclass
class NonlinearEnergyProblem:
    """Convex energy int 1/2 |grad u|^2 + kappa cosh(u) - f u."""

    kappa: float
    source: object
    domain: object

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive for a convex energy")


_COSH_GUARD = 700.0  # cosh overflows double precision just past this


class ConvexObjective:
    """General convex loss exposing value and gradient pairing.

    The gradient pairing with a dictionary element g is
    sum_i w_i (grad u . grad g + kappa sinh(u) g - f g)(x_i).
    """

    def __init__(self, rule: QuadratureRule, kappa: float, f_vals: np.ndarray,
                 domain=None, smoothness_hint=None):
        self.rule = rule
        self.kappa = float(kappa)
        self.f_vals = np.asarray(f_vals, dtype=float)
        self.domain = domain
        self.smoothness_hint = smoothness_hint
        self._grad_alphas = [
            tuple(1 if j == i else 0 for j in range(rule.dim))
            for i in range(rule.dim)
        ]

    @property
    def max_derivative_order(self) -> int:
        return 1

    def fields(self, u: Expansion):
        """(values, gradients) of u on the quadrature points."""
        n, d = self.rule.size, self.rule.dim
        vals = np.zeros(n)
        grads = np.zeros((n, d))
        for a, g in u.terms:
            t = ridge_argument_many(self.rule.points, g.omega, g.bias)
            vals += a * activation_derivative(g.activation, t, 0)
            grads += (a * activation_derivative(g.activation, t, 1))[:, None] * g.omega
        return vals, grads

    def value_from_fields(self, vals: np.ndarray, grads: np.ndarray) -> float:
        peak = float(np.abs(vals).max()) if vals.size else 0.0
        if peak > _COSH_GUARD:
            raise NumericError(
                f"cosh overflow: max |u| = {peak:g} exceeds {_COSH_GUARD:g}"
            )
        integrand = (
            0.5 * np.einsum("ij,ij->i", grads, grads)
            + self.kappa * np.cosh(vals)
            - self.f_vals * vals
        )
        return float(self.rule.weights @ integrand)

    def value(self, u: Expansion) -> float:
        return self.value_from_fields(*self.fields(u))

    def pairing_from_fields(self, vals, grads, g: RidgeNeuron) -> float:
        w = self.rule.weights
        t = self.rule.points @ g.omega + g.bias
        gv = activation_derivative(g.activation, t, 0)
        gd = activation_derivative(g.activation, t, 1)
        grad_term = (grads @ g.omega) * gd
        zero_term = (self.kappa * np.sinh(vals) - self.f_vals) * gv
        return float(w @ (grad_term + zero_term))

    def pairing(self, u: Expansion, g: RidgeNeuron) -> float:
        return self.pairing_from_fields(*self.fields(u), g)

    def pairing_field_groups(self, fields):
        """Same group structure as the quadratic case, built from the
        energy gradient at the current iterate."""
        vals, grads = fields
        w = self.rule.weights
        chan = {(0,) * self.rule.dim: w * (self.kappa * np.sinh(vals) - self.f_vals)}
        for i, alpha in enumerate(self._grad_alphas):
            chan[alpha] = w * grads[:, i]
        return [(self.rule.points, chan)]


def assemble_nonlinear(
    p: NonlinearEnergyProblem, rule: QuadratureRule
) -> ConvexObjective:
    f_vals = _sample_coefficient(p.source, rule.points)
    return ConvexObjective(rule, p.kappa, f_vals, domain=p.domain)


# Spec-surface wrappers over the objective methods.

def embed(obj: QuadraticObjective, g: RidgeNeuron) -> np.ndarray:
    return obj.embed(g)


def objective_value(obj, u: Expansion) -> float:
    return obj.value(u)


def residual_pairing(obj, u: Expansion, g: RidgeNeuron) -> float:
    return obj.pairing(u, g)
