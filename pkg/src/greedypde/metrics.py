"""Error norms against manufactured exact solutions and convergence tables.

All norms are square roots of quadrature sums of squared differences on a
fine rule that is distinct from (finer than) the assembly rule.  The order
between consecutive table rows is log(e_prev / e_curr) / log(n_curr /
n_prev), which reduces to the usual dyadic order for doubling schedules and
handles the occasional non-doubling final row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Expansion, expansion_partials_many, multi_index_order
from .errors import NumericError
from .problems import ConvexObjective, EllipticProblem, _multi_indices, \
    _sample_coefficient
from .quadrature import BoundaryRule, QuadratureRule


@dataclass
class ExactSolution:
    """Analytic solution with hand-derived partials up to the needed order.

    `partials` maps multi-index tuples to callables on (N, d) point arrays;
    the zero multi-index entry must agree with `value`.
    """

    value: object
    partials: dict
    order_m: int = 1

    def partial(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if multi_index_order(alpha) == 0:
            return self.value
        return self.partials[alpha]


@dataclass
class ConvergenceReport:
    """Rows of (n, errors, orders) plus run metadata."""

    columns: list
    rows: list = field(default_factory=list)  # (n, {col: err}, {col: order})
    metadata: dict = field(default_factory=dict)


def _eval_fields(u: Expansion, exact: ExactSolution, points, alphas):
    approx = (
        expansion_partials_many(u, points, alphas)
        if u.terms
        else {al: np.zeros(points.shape[0]) for al in alphas}
    )
    diffs = {}
    for al in alphas:
        ex = exact.partial(al)(points)
        diffs[al] = approx[al] - np.asarray(ex, dtype=float)
    return diffs


def error_norms(u: Expansion, exact: ExactSolution, fine: QuadratureRule,
                problem: EllipticProblem = None,
                fine_boundary: BoundaryRule = None) -> dict:
    """L2, Sobolev seminorm stack, H^j norms, and the problem energy norm.

    With a penalty problem and a boundary rule, also the a,delta norm
    (energy plus delta^{-1} boundary trace terms).
    """
    d = fine.dim
    m = exact.order_m
    alphas = []
    for j in range(m + 1):
        alphas.extend(_multi_indices(d, j))
    if problem is not None:
        alphas.extend(a for a in problem.coeff_top if a not in alphas)
    diffs = _eval_fields(u, exact, fine.points, alphas)
    for al, v in diffs.items():
        if not np.isfinite(v).all():
            i = int(np.argmax(~np.isfinite(v)))
            raise NumericError(
                f"non-finite field d{al} at point index {i}",
                index=i, point=fine.points[i],
            )
    w = fine.weights
    out = {}
    sq = {al: float(w @ diffs[al] ** 2) for al in diffs}
    zero = (0,) * d
    out["l2"] = math.sqrt(sq[zero])
    total = sq[zero]
    for j in range(1, m + 1):
        semi = sum(sq[al] for al in _multi_indices(d, j))
        out[f"seminorm_{j}"] = math.sqrt(semi)
        total += semi
        out[f"h{j}"] = math.sqrt(total)
    if problem is not None:
        a0 = _sample_coefficient(problem.coeff_zero, fine.points)
        energy_sq = float(w @ (a0 * diffs[zero] ** 2))
        for al, coeff in problem.coeff_top.items():
            a = _sample_coefficient(coeff, fine.points)
            energy_sq += float(w @ (a * diffs[al] ** 2))
        out["energy"] = math.sqrt(energy_sq)
        delta = problem.penalty
        if delta is not None and fine_boundary is not None:
            bdry_sq = 0.0
            for k in range(problem.order_m):
                trace = _normal_trace_of_difference(
                    u, exact, fine_boundary, k
                )
                bdry_sq += float(fine_boundary.weights @ trace**2)
            out["a_delta"] = math.sqrt(energy_sq + bdry_sq / delta)
    return out


def _normal_trace_of_difference(u, exact, brule: BoundaryRule, order: int):
    d = brule.dim
    if order == 0:
        betas = [(0,) * d]
        coeffs = [np.ones(brule.size)]
    else:
        betas = _multi_indices(d, order)
        coeffs = []
        for beta in betas:
            c = math.factorial(order)
            nu = np.ones(brule.size)
            for j, bj in enumerate(beta):
                c //= math.factorial(bj)
                nu = nu * brule.normals[:, j] ** bj
            coeffs.append(c * nu)
    diffs = _eval_fields(u, exact, brule.points, betas)
    trace = np.zeros(brule.size)
    for beta, c in zip(betas, coeffs):
        trace += c * diffs[beta]
    return trace


def order_between(n_prev, e_prev, n_curr, e_curr):
    """log(e_prev / e_curr) / log(n_curr / n_prev); None if undefined."""
    if e_prev is None or e_curr is None:
        return None
    if e_prev <= 0.0 or e_curr <= 0.0 or n_curr <= n_prev:
        return None
    return math.log(e_prev / e_curr) / math.log(n_curr / n_prev)


def order_table(rows, columns=None, metadata=None) -> ConvergenceReport:
    """Build a report from rows of (n, {column: error}).

    Neuron counts must be strictly increasing; orders are attached between
    consecutive rows and omitted where undefined.
    """
    rows = list(rows)
    ns = [int(n) for n, _ in rows]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("neuron counts must be strictly increasing")
    if columns is None:
        columns = list(rows[0][1].keys()) if rows else []
    report = ConvergenceReport(columns=list(columns), metadata=dict(metadata or {}))
    prev = None
    for n, errs in rows:
        orders = {}
        if prev is not None:
            pn, perrs = prev
            for col in columns:
                o = order_between(pn, perrs.get(col), n, errs.get(col))
                if o is not None:
                    orders[col] = o
        report.rows.append((int(n), dict(errs), orders))
        prev = (n, errs)
    return report


def fitted_order(ns, errors) -> float:
    """Least-squares slope of -log(error) against log(n)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0.0
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(ns[keep]), np.log(errors[keep]), 1)[0]
    return -float(slope)


def relative_gap(objective: ConvexObjective, u_n: Expansion,
                 exact_value: float) -> float:
    """(R(u_n) - R(u)) / (R(0) - R(u)) with u_0 = 0.

    `exact_value` is R at the exact solution computed by fine quadrature of
    the continuous energy; using the same rule for all three values keeps
    the differences correlated and accurate.
    """
    if isinstance(exact_value, Expansion):
        exact_value = objective.value(exact_value)
    r0 = objective.value(Expansion([]))
    denom = r0 - exact_value
    if denom == 0.0:
        raise ValueError("degenerate problem: R(0) equals R(exact)")
    return (objective.value(u_n) - exact_value) / denom
