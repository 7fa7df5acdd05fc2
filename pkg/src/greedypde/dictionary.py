"""Ridge-function dictionary elements and their derivatives.

A dictionary element is a ridge function g(x) = sigma(omega . x + b).  Two
activation families are supported: powers of the rectifier,
sigma(t) = max(0, t)^k, and the logistic sigmoid.  Partial derivatives of a
ridge function factor as

    d^alpha g(x) = omega^alpha * sigma^(|alpha|)(omega . x + b),

so everything reduces to univariate derivatives of the activation.  For the
rectifier powers the j-th derivative is k!/(k-j)! * max(0, t)^(k-j) for
j <= k, with the value 0 assigned at the kink t = 0 (the one-sided limit
from the inactive side).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import UnsupportedDerivativeError

# A multi-index is a plain tuple of nonnegative integer exponents, one per
# coordinate; its order is the sum of the entries.
MultiIndex = tuple


def multi_index_order(alpha) -> int:
    return int(sum(alpha))


@dataclass(frozen=True)
class Activation:
    """Activation tag: relu-power with integer degree k >= 1, or sigmoid."""

    kind: str
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("relu-power", "sigmoid"):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "relu-power" and self.degree < 1:
            raise ValueError("relu-power degree must be >= 1")

    @property
    def max_derivative_order(self):
        """Highest pointwise derivative order defined for this activation."""
        return self.degree if self.kind == "relu-power" else math.inf

    def supports(self, order: int) -> bool:
        return order <= self.max_derivative_order


def relu_power(degree: int) -> Activation:
    return Activation("relu-power", degree)


def sigmoid() -> Activation:
    return Activation("sigmoid", 0)


# sigma^(n)(t) for the sigmoid is a polynomial in s = sigma(t):
# P_0(s) = s and P_{n+1} = P_n'(s) * (s - s^2).  Coefficients ascending.
_SIGMOID_POLYS = [np.array([0.0, 1.0])]


def _sigmoid_poly(order: int) -> np.ndarray:
    while len(_SIGMOID_POLYS) <= order:
        p = _SIGMOID_POLYS[-1]
        dp = p[1:] * np.arange(1, len(p))
        nxt = np.zeros(len(p) + 1)  # P'(s) * (s - s^2), ascending coefficients
        nxt[1 : 1 + len(dp)] += dp
        nxt[2 : 2 + len(dp)] -= dp
        _SIGMOID_POLYS.append(nxt)
    return _SIGMOID_POLYS[order]


def activation_derivative(act: Activation, t, order: int = 0):
    """Evaluate sigma^(order) elementwise; relu-power kinks evaluate to 0."""
    t = np.asarray(t, dtype=float)
    if act.kind == "relu-power":
        k = act.degree
        if order > k:
            raise UnsupportedDerivativeError(
                f"relu-power degree {k} supports derivatives up to order {k}, "
                f"got {order}"
            )
        coef = math.perm(k, order)
        p = k - order
        if p == 0:
            return np.where(t > 0.0, float(coef), 0.0)
        return coef * np.maximum(t, 0.0) ** p
    s = expit(t)
    coeffs = _sigmoid_poly(order)
    return np.polynomial.polynomial.polyval(s, coeffs)


@dataclass(frozen=True)
class RidgeNeuron:
    """One dictionary element sigma(omega . x + b)."""

    omega: np.ndarray
    bias: float
    activation: Activation

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    def omega_power(self, alpha) -> float:
        """omega^alpha = prod_i omega_i^alpha_i."""
        return float(np.prod(self.omega ** np.asarray(alpha)))


def ridge_argument_many(points: np.ndarray, omega: np.ndarray, bias: float):
    """omega . x + b over (N, d) points, with a fast path for directions
    supported on a single coordinate (the axis-restricted dictionary)."""
    nz = np.flatnonzero(omega)
    if nz.size == 0:
        return np.full(points.shape[0], float(bias))
    if nz.size == 1:
        j = int(nz[0])
        return omega[j] * points[:, j] + bias
    return points @ omega + bias


def _ridge_argument(g: RidgeNeuron, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != g.dim:
            raise ValueError(f"point has dim {x.shape[0]}, neuron expects {g.dim}")
        return float(x @ g.omega) + g.bias
    if x.ndim == 2:
        if x.shape[1] != g.dim:
            raise ValueError(f"points have dim {x.shape[1]}, neuron expects {g.dim}")
        return x @ g.omega + g.bias
    raise ValueError("x must be a point (d,) or an array of points (N, d)")


def neuron_eval(g: RidgeNeuron, x):
    """sigma(omega . x + b) at a point (d,) or batch (N, d)."""
    t = _ridge_argument(g, x)
    out = activation_derivative(g.activation, t, 0)
    return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

def neuron_partial(g: RidgeNeuron, x, alpha):
    """d^alpha g(x) = omega^alpha * sigma^(|alpha|)(omega . x + b)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != g.dim:
        raise ValueError(f"multi-index has {len(alpha)} entries, neuron dim {g.dim}")
    order = multi_index_order(alpha)
    if not g.activation.supports(order):
        raise UnsupportedDerivativeError(
            f"derivative order {order} unsupported for {g.activation.kind} "
            f"degree {g.activation.degree}"
        )
    t = _ridge_argument(g, x)
    out = g.omega_power(alpha) * activation_derivative(g.activation, t, order)
    return float(out) if np.ndim(t) == 0 else out


@dataclass
class Expansion:
    """Sparse model u = sum_i a_i g_i over ridge neurons.

    All neurons must share the ambient dimension and activation kind.
    """

    terms: list = field(default_factory=list)

    def __post_init__(self):
        self.terms = [(float(a), g) for a, g in self.terms]
        dims = {g.dim for _, g in self.terms}
        kinds = {(g.activation.kind, g.activation.degree) for _, g in self.terms}
        if len(dims) > 1:
            raise ValueError("expansion neurons must share one dimension")
        if len(kinds) > 1:
            raise ValueError("expansion neurons must share one activation")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def dim(self):
        return self.terms[0][1].dim if self.terms else None

    @property
    def l1_norm(self) -> float:
        return float(sum(abs(a) for a, _ in self.terms))

    def scaled(self, factor: float) -> "Expansion":
        return Expansion([(factor * a, g) for a, g in self.terms])

    def appended(self, coeff: float, g: RidgeNeuron) -> "Expansion":
        return Expansion(self.terms + [(coeff, g)])


def expansion_eval(u: Expansion, x):
    return expansion_partial(u, x, (0,) * (u.dim or np.atleast_2d(x).shape[-1]))


def expansion_partial(u: Expansion, x, alpha):
    """Linear combination of neuron partials; the empty expansion is 0."""
    x = np.asarray(x, dtype=float)
    if not u.terms:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
    acc = None
    for a, g in u.terms:
        val = np.multiply(a, neuron_partial(g, x, alpha))
        acc = val if acc is None else acc + val
    return acc


def expansion_partials_many(u: Expansion, x, alphas):
    """Evaluate several partials at a batch of points, sharing the ridge
    argument across derivative orders.  Returns {alpha: (N,) array}."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    alphas = [tuple(int(a) for a in al) for al in alphas]
    out = {al: np.zeros(n) for al in alphas}
    for a, g in u.terms:
        t = ridge_argument_many(x, g.omega, g.bias)
        by_order = {}
        for al in alphas:
            w_pow = g.omega_power(al)
            if w_pow == 0.0:
                continue
            o = multi_index_order(al)
            if o not in by_order:
                by_order[o] = activation_derivative(g.activation, t, o)
            out[al] += a * w_pow * by_order[o]
    return out


@dataclass(frozen=True)
class DictionarySpec:
    """Parameter domain of the dictionary searched by the argmax module.

    kind 'sphere': unit directions with bias in [c1, c2] (relu-power family).
    kind 'axis': directions restricted to signed coordinate axes.
    kind 'box': each component of (omega, bias) in [box_low, box_high].
    """

    activation: Activation
    dim: int
    kind: str = "sphere"
    c1: float = -2.0
    c2: float = 2.0
    box_low: float = -1.0
    box_high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sphere", "axis", "box"):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.kind != "box" and not self.c1 < self.c2:
            raise ValueError("bias interval must satisfy c1 < c2")


def bias_range_for_domain(domain_radius: float):
    """Bias bounds [c1, c2]: the default [-2, 2] when the domain sits inside
    the unit ball, otherwise +/-(radius + 1) so every hyperplane offset
    omega . x stays strictly inside the interval."""
    if domain_radius <= 1.0:
        return -2.0, 2.0
    return -(domain_radius + 1.0), domain_radius + 1.0
