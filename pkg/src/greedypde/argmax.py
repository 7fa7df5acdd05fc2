"""Per-iteration dictionary search g = argmax |<g, grad L(u)>|.

The pairing of a ridge candidate with the current residual is

    p(omega, b) = sum_groups sum_alpha q_alpha . (omega^alpha
                  sigma^(|alpha|)(points @ omega + b)),

where the q fields come from the objective's weighted residual.  For
relu-power activations p is piecewise polynomial in b between the
breakpoints -points @ omega, so for any fixed direction the bias subproblem
is solved exactly by sorting the breakpoints once and accumulating prefix
sums of the polynomial coefficients.  Direction search is an exhaustive
grid (signs in 1-D, polar angles in 2-D, coarse hyperspherical grids above,
signed axes for the restricted dictionary) followed by local refinement of
the best seeds.  Sort permutations per grid direction are cached across
iterations; only the residual fields change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import (
    Activation,
    DictionarySpec,
    RidgeNeuron,
    activation_derivative,
    multi_index_order,
    ridge_argument_many,
)
from .errors import UnsupportedDerivativeError
from .problems import ConvexObjective, QuadraticObjective


@dataclass
class SearchConfig:
    n_bias: int = 400          # bias grid count N_b (N_b + 1 samples)
    n_theta: int = 360         # polar angle count in 2-D
    n_angle_highd: int = 8     # per-angle grid for d >= 3
    box_grid: int = 12         # per-axis grid for box dictionaries
    top_k: int = 5             # seeds kept for refinement
    refine: str = "gradient"   # 'gradient' or 'newton'
    refine_iters: int = 50
    max_halvings: int = 50
    mode: str = "grid-refine"  # 'grid-refine', 'exact-1d', 'axis-restricted', 'box'
    bias_margin_frac: float = 0.05
    # Solve the bias subproblem exactly per direction (piecewise-polynomial
    # enumeration).  Exactness resolves quadrature-blind noise spikes of
    # width ~cell size, which deep runs on fixed grids must avoid -- the
    # 1-D presets therefore turn this off and rely on grid + refinement.
    exact_bias: bool = True
    # Smallest accepted refinement step.  Below the quadrature cell size the
    # discrete pairing is dominated by integration noise, so deep runs floor
    # the refinement resolution at one cell.
    min_refine_step: float = 0.0
    # Optional two-stage direction search: rank directions on a point
    # subsample, then run the exact bias machinery only on the screen_top
    # best.  Disabled by default: the pairing is a heavily cancelling sum,
    # so subsampled rankings are unreliable on oscillatory residuals.
    screen_top: int = 0
    screen_points: int = 8000
    screen_biases: int = 33

    def __post_init__(self):
        if self.n_bias < 1 or self.top_k < 1:
            raise ValueError("n_bias and top_k must be >= 1")


@dataclass
class Selection:
    neuron: RidgeNeuron
    pairing: float
    converged: bool = False
    searches: int = 0
    seed_pairing: float = 0.0
    direction_results: list = field(default_factory=list)
    # ranked (neuron, pairing) fallbacks, primary first; the greedy driver
    # walks down this list when a candidate fails its stability checks
    alternates: list = field(default_factory=list)
    note: str = ""


def _relaxed_derivative(act: Activation, t, order: int):
    """Like activation_derivative but relu orders beyond the degree give the
    a.e. value 0 (needed for curvature during refinement)."""
    if act.kind == "relu-power" and order > act.degree:
        return np.zeros(np.shape(t))
    return activation_derivative(act, t, order)


def pairing_from_groups(groups, act: Activation, omega, bias: float) -> float:
    """Direct evaluation of the pairing field at one candidate."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    total = 0.0
    for pts, chan in groups:
        t = ridge_argument_many(pts, omega, bias)
        by_order = {}
        for alpha, q in chan.items():
            w_pow = float(np.prod(omega ** np.asarray(alpha)))
            if w_pow == 0.0:
                continue
            o = multi_index_order(alpha)
            if o not in by_order:
                by_order[o] = activation_derivative(act, t, o)
            total += w_pow * float(q @ by_order[o])
    return total


def field_groups_of(objective, state):
    """Pairing field groups for either objective kind.

    For a quadratic objective `state` is the per-block weighted residual;
    for a convex objective it is the (values, gradients) field pair.
    """
    if isinstance(objective, QuadraticObjective):
        return objective.pairing_field_groups(state)
    if isinstance(objective, ConvexObjective):
        return objective.pairing_field_groups(state)
    raise TypeError(f"unsupported objective {type(objective)!r}")


def seed_candidates(dictionary: DictionarySpec, config: SearchConfig):
    """Grid of seed parameters on the dictionary's parameter space.

    1-D: omega in {-1, +1} crossed with biases b_i = c1 + (c2 - c1) i / N_b.
    2-D: polar directions theta_j = 2 pi j / N_theta crossed with biases.
    d >= 3: coarse hyperspherical angle grids crossed with biases; 'axis'
    dictionaries use the 2d signed axes; 'box' dictionaries use a product
    grid over every component of (omega, b).
    """
    d = dictionary.dim
    if dictionary.kind == "box":
        axis = np.linspace(dictionary.box_low, dictionary.box_high, config.box_grid)
        grids = np.meshgrid(*([axis] * (d + 1)), indexing="ij")
        flat = np.column_stack([g.ravel() for g in grids])
        return [(row[:d].copy(), float(row[d])) for row in flat]
    biases = dictionary.c1 + (dictionary.c2 - dictionary.c1) * np.arange(
        config.n_bias + 1
    ) / config.n_bias
    return [
        (omega, float(b))
        for omega in direction_grid(dictionary, config)
        for b in biases
    ]


def direction_grid(dictionary: DictionarySpec, config: SearchConfig):
    d = dictionary.dim
    if dictionary.kind == "axis":
        dirs = []
        for i in range(d):
            for s in (1.0, -1.0):
                e = np.zeros(d)
                e[i] = s
                dirs.append(e)
        return dirs
    if d == 1:
        return [np.array([-1.0]), np.array([1.0])]
    if d == 2:
        theta = 2.0 * np.pi * np.arange(config.n_theta) / config.n_theta
        return [np.array([np.cos(t), np.sin(t)]) for t in theta]
    # coarse hyperspherical product grid; refinement does the real work
    n = config.n_angle_highd
    polar = np.pi * (np.arange(n) + 0.5) / n
    azimuth = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    grids = np.meshgrid(*([polar] * (d - 2) + [azimuth]), indexing="ij")
    phis = np.column_stack([g.ravel() for g in grids])
    return [_sphere_point(p) for p in phis]


def _sphere_point(phis: np.ndarray) -> np.ndarray:
    d = phis.shape[0] + 1
    omega = np.empty(d)
    sin_prod = 1.0
    for i in range(d - 1):
        omega[i] = sin_prod * np.cos(phis[i])
        sin_prod *= np.sin(phis[i])
    omega[d - 1] = sin_prod
    return omega


def _sphere_jacobian(phis: np.ndarray) -> np.ndarray:
    """d omega / d phi for the hyperspherical parameterization, (d, d-1).

    omega_i = (prod_{l<i} sin phi_l) cos phi_i for i < d-1 and
    omega_{d-1} = prod_l sin phi_l.
    """
    d = phis.shape[0] + 1
    s, c = np.sin(phis), np.cos(phis)
    jac = np.zeros((d, d - 1))
    for i in range(d):
        n_sin = min(i, d - 1)
        for j in range(min(i + 1, d - 1)):
            if i < d - 1 and j == i:
                jac[i, j] = np.prod(s[:i]) * (-s[i])
            elif j < n_sin:
                factors = s[:n_sin].copy()
                factors[j] = c[j]
                val = float(np.prod(factors))
                if i < d - 1:
                    val *= c[i]
                jac[i, j] = val
    return jac


def _angles_from_omega(omega: np.ndarray) -> np.ndarray:
    d = omega.shape[0]
    phis = np.zeros(d - 1)
    for i in range(d - 2):
        phis[i] = np.arctan2(float(np.linalg.norm(omega[i + 1:])), omega[i])
    phis[d - 2] = np.arctan2(omega[d - 1], omega[d - 2])
    return phis


class _BiasPolynomial:
    """Piecewise polynomial b -> pairing(omega, b) for a relu-power degree k.

    Built from sorted breakpoints beta = -points @ omega and prefix sums of
    the expanded polynomial coefficients; evaluation and exact maximization
    of |pairing| over a bias interval are both O(#points)."""

    def __init__(self, groups, omega, k: int, perm=None):
        self.k = k
        zs, contribs = [], []
        for pts, chan in groups:
            z = ridge_argument_many(pts, omega, 0.0)
            by_order = {}
            for alpha, q in chan.items():
                w_pow = float(np.prod(omega ** np.asarray(alpha)))
                if w_pow == 0.0:
                    continue
                o = multi_index_order(alpha)
                if o > k:
                    raise UnsupportedDerivativeError(
                        f"pairing needs order {o}, relu degree {k}"
                    )
                if o in by_order:
                    by_order[o] = by_order[o] + w_pow * q
                else:
                    by_order[o] = w_pow * q
            contrib = np.zeros((k + 1, z.shape[0]))
            for o, qo in by_order.items():
                p = k - o
                kappa = math.perm(k, o)
                zpows = [np.ones_like(z)]
                for _ in range(p):
                    zpows.append(zpows[-1] * z)
                for j in range(p + 1):
                    contrib[j] += qo * (kappa * math.comb(p, j)) * zpows[p - j]
            zs.append(z)
            contribs.append(contrib)
        z_all = np.concatenate(zs) if len(zs) > 1 else zs[0]
        contrib_all = np.concatenate(contribs, axis=1) if len(zs) > 1 else contribs[0]
        beta = -z_all
        if perm is None:
            perm = np.argsort(beta, kind="stable")
        self.perm = perm
        self.betas = beta[perm]
        self.coeff = np.cumsum(contrib_all[:, perm], axis=1)

    def eval(self, b):
        """Pairing at bias values b (scalar or array)."""
        b = np.asarray(b, dtype=float)
        idx = np.searchsorted(self.betas, b, side="right") - 1
        valid = idx >= 0
        safe = np.where(valid, idx, 0)
        out = np.zeros(b.shape)
        bp = np.ones(b.shape)
        for j in range(self.k + 1):
            out += self.coeff[j, safe] * bp
            bp = bp * b
        return np.where(valid, out, 0.0)

    def _values_at_breakpoints(self):
        b = self.betas
        out = np.zeros_like(b)
        bp = np.ones_like(b)
        for j in range(self.k + 1):
            out += self.coeff[j] * bp
            bp = bp * b
        return out

    def abs_max(self, lo: float, hi: float):
        """(b*, pairing(b*)) maximizing |pairing| over [lo, hi]."""
        cand_b = [np.array([lo, hi])]
        cand_v = [self.eval(np.array([lo, hi]))]
        inside = (self.betas > lo) & (self.betas < hi)
        if inside.any():
            cand_b.append(self.betas[inside])
            cand_v.append(self._values_at_breakpoints()[inside])
        roots, vals = self._stationary_points(lo, hi)
        if roots is not None and roots.size:
            cand_b.append(roots)
            cand_v.append(vals)
        cb = np.concatenate(cand_b)
        cv = np.concatenate(cand_v)
        i = int(np.argmax(np.abs(cv)))
        return float(cb[i]), float(cv[i])

    def _stationary_points(self, lo, hi):
        k = self.k
        if k < 2:
            return None, None
        A = self.coeff
        starts = self.betas
        ends = np.append(self.betas[1:], np.inf)
        lo_i = np.maximum(starts, lo)
        hi_i = np.minimum(ends, hi)
        open_iv = lo_i < hi_i
        roots = []
        if k == 2:
            a2 = A[2]
            with np.errstate(divide="ignore", invalid="ignore"):
                r = -A[1] / (2.0 * a2)
            ok = open_iv & (np.abs(a2) > 0) & (r >= lo_i) & (r <= hi_i)
            roots.append(r[ok])
        elif k == 3:
            a, bq, c = 3.0 * A[3], 2.0 * A[2], A[1]
            with np.errstate(divide="ignore", invalid="ignore"):
                disc = bq * bq - 4.0 * a * c
                sq = np.sqrt(np.maximum(disc, 0.0))
                r1 = (-bq + sq) / (2.0 * a)
                r2 = (-bq - sq) / (2.0 * a)
                rlin = -c / bq
            quad = np.abs(a) > 0
            for r in (r1, r2):
                ok = open_iv & quad & (disc >= 0) & (r >= lo_i) & (r <= hi_i)
                roots.append(r[ok])
            ok = open_iv & ~quad & (np.abs(bq) > 0) & (rlin >= lo_i) & (rlin <= hi_i)
            roots.append(rlin[ok])
        else:
            # general degrees: dense sampling fallback inside [lo, hi]
            grid = np.linspace(lo, hi, 4097)
            return grid, self.eval(grid)
        if not roots:
            return None, None
        r = np.concatenate(roots)
        return r, self.eval(r)


class _DirectionBatch:
    """Piecewise-polynomial bias machinery for a chunk of directions at once.

    Identical mathematics to _BiasPolynomial, but every array carries a
    leading direction axis so sorting, prefix sums and the per-interval
    stationary-point search run as single vectorized calls.
    """

    def __init__(self, groups, omegas, k: int, perms=None):
        self.k = k
        m = omegas.shape[0]
        z_parts, contrib_parts = [], []
        for pts, chan in groups:
            zg = omegas @ pts.T  # (m, P_g)
            contrib = np.zeros((k + 1, m, zg.shape[1]))
            by_order = {}
            for alpha, q in chan.items():
                o = multi_index_order(alpha)
                if o > k:
                    raise UnsupportedDerivativeError(
                        f"pairing needs order {o}, relu degree {k}"
                    )
                w_pow = np.prod(omegas ** np.asarray(alpha)[None, :], axis=1)
                if o in by_order:
                    by_order[o] = by_order[o] + w_pow[:, None] * q[None, :]
                else:
                    by_order[o] = w_pow[:, None] * q[None, :]
            for o, qo in by_order.items():
                p = k - o
                kappa = math.perm(k, o)
                zpow = np.ones_like(zg)
                zpows = [zpow]
                for _ in range(p):
                    zpow = zpow * zg
                    zpows.append(zpow)
                for j in range(p + 1):
                    contrib[j] += qo * (kappa * math.comb(p, j)) * zpows[p - j]
            z_parts.append(zg)
            contrib_parts.append(contrib)
        z_all = np.concatenate(z_parts, axis=1) if len(z_parts) > 1 else z_parts[0]
        contrib_all = (
            np.concatenate(contrib_parts, axis=2)
            if len(contrib_parts) > 1
            else contrib_parts[0]
        )
        beta = -z_all
        if perms is None:
            perms = np.argsort(beta, axis=1).astype(np.int32)
        self.perms = perms
        self.betas = np.take_along_axis(beta, perms, axis=1)
        self.coeff = [
            np.cumsum(np.take_along_axis(contrib_all[j], perms, axis=1), axis=1)
            for j in range(k + 1)
        ]

    def _values_at_breakpoints(self):
        out = np.zeros_like(self.betas)
        bp = np.ones_like(self.betas)
        for j in range(self.k + 1):
            out += self.coeff[j] * bp
            bp = bp * self.betas
        return out

    def _eval_rows_at(self, b_scalar):
        """Pairing at one bias value for every direction, (m,)."""
        idx = np.array([
            np.searchsorted(self.betas[i], b_scalar, side="right") - 1
            for i in range(self.betas.shape[0])
        ])
        valid = idx >= 0
        safe = np.where(valid, idx, 0)
        rows = np.arange(self.betas.shape[0])
        out = np.zeros(self.betas.shape[0])
        bp = 1.0
        for j in range(self.k + 1):
            out += self.coeff[j][rows, safe] * bp
            bp = bp * b_scalar
        return np.where(valid, out, 0.0)

    def eval_grid(self, biases):
        """Pairing at a common bias grid for every direction, (m, nb)."""
        m = self.betas.shape[0]
        out = np.zeros((m, biases.shape[0]))
        for i in range(m):
            idx = np.searchsorted(self.betas[i], biases, side="right") - 1
            valid = idx >= 0
            safe = np.where(valid, idx, 0)
            vals = np.zeros(biases.shape[0])
            bp = np.ones_like(biases)
            for j in range(self.k + 1):
                vals += self.coeff[j][i, safe] * bp
                bp = bp * biases
            out[i] = np.where(valid, vals, 0.0)
        return out

    def abs_max(self, lo: float, hi: float):
        """Per-direction (b*, pairing(b*)) maximizing |pairing| on [lo, hi]."""
        m, P = self.betas.shape
        best_v = np.zeros(m)
        best_b = np.full(m, lo)

        def consider(bs, vs, mask=None):
            nonlocal best_v, best_b
            a = np.abs(vs)
            if mask is not None:
                a = np.where(mask, a, -np.inf)
            i = np.argmax(a, axis=1)
            rows = np.arange(m)
            better = a[rows, i] > np.abs(best_v)
            best_v = np.where(better, vs[rows, i], best_v)
            best_b = np.where(better, bs[rows, i], best_b)

        inside = (self.betas > lo) & (self.betas < hi)
        if inside.any():
            consider(self.betas, self._values_at_breakpoints(), inside)
        for b_end in (lo, hi):
            vals = self._eval_rows_at(b_end)
            better = np.abs(vals) > np.abs(best_v)
            best_v = np.where(better, vals, best_v)
            best_b = np.where(better, b_end, best_b)
        if self.k > 3:
            grid = np.linspace(lo, hi, 4097)
            vals = self.eval_grid(grid)
            consider(np.broadcast_to(grid, vals.shape), vals)
            return best_b, best_v
        roots = self._stationary_roots(lo, hi)
        for r, mask in roots:
            vals = np.zeros_like(r)
            bp = np.ones_like(r)
            for j in range(self.k + 1):
                vals += self.coeff[j] * bp
                bp = bp * r
            consider(r, vals, mask)
        return best_b, best_v

    def _stationary_roots(self, lo, hi):
        k = self.k
        if k < 2:
            return []
        starts = self.betas
        ends = np.concatenate(
            [self.betas[:, 1:], np.full((self.betas.shape[0], 1), np.inf)],
            axis=1,
        )
        lo_i = np.maximum(starts, lo)
        hi_i = np.minimum(ends, hi)
        open_iv = lo_i < hi_i
        out = []
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == 2:
                a2 = self.coeff[2]
                r = -self.coeff[1] / (2.0 * a2)
                mask = open_iv & (np.abs(a2) > 0) & (r >= lo_i) & (r <= hi_i)
                out.append((np.where(mask, r, 0.0), mask))
            elif k == 3:
                a = 3.0 * self.coeff[3]
                bq = 2.0 * self.coeff[2]
                c = self.coeff[1]
                disc = bq * bq - 4.0 * a * c
                sq = np.sqrt(np.maximum(disc, 0.0))
                quad = np.abs(a) > 0
                for sgn in (1.0, -1.0):
                    r = (-bq + sgn * sq) / (2.0 * a)
                    mask = (open_iv & quad & (disc >= 0)
                            & (r >= lo_i) & (r <= hi_i))
                    out.append((np.where(mask, r, 0.0), mask))
                rlin = -c / bq
                mask = (open_iv & ~quad & (np.abs(bq) > 0)
                        & (rlin >= lo_i) & (rlin <= hi_i))
                out.append((np.where(mask, rlin, 0.0), mask))
        return out


def _pairing_with_grads(groups, act, omega, bias, want_curvature=False):
    """Pairing plus d/d omega, d/d b (and optionally d2/d b2)."""
    d = omega.shape[0]
    p = 0.0
    g_omega = np.zeros(d)
    g_b = 0.0
    h_bb = 0.0
    for pts, chan in groups:
        t = ridge_argument_many(pts, omega, bias)
        cache = {}

        def s(order):
            if order not in cache:
                cache[order] = _relaxed_derivative(act, t, order)
            return cache[order]

        for alpha, q in chan.items():
            o = multi_index_order(alpha)
            al = np.asarray(alpha)
            w_pow = float(np.prod(omega**al))
            so, so1 = s(o), s(o + 1)
            qs0 = float(q @ so)
            qs1 = float(q @ so1)
            p += w_pow * qs0
            g_b += w_pow * qs1
            if want_curvature:
                h_bb += w_pow * float(q @ s(o + 2))
            for j in range(d):
                if alpha[j] > 0:
                    down = al.copy()
                    down[j] -= 1
                    g_omega[j] += alpha[j] * float(np.prod(omega**down)) * qs0
                g_omega[j] += w_pow * float(q @ (so1 * pts[:, j]))
    return p, g_omega, g_b, h_bb


def score(candidate: RidgeNeuron, objective, state, rga_mode: bool = False) -> float:
    """-1/2 pairing^2 (OGA mode) or -pairing (RGA mode, signed)."""
    groups = field_groups_of(objective, state)
    p = pairing_from_groups(groups, candidate.activation, candidate.omega,
                            candidate.bias)
    return -p if rga_mode else -0.5 * p * p


@dataclass
class _RefineResult:
    omega: np.ndarray
    bias: float
    pairing: float
    fell_back: bool = False


def refine_candidate(groups, act, dictionary: DictionarySpec,
                     config: SearchConfig, omega, bias, pairing0) -> _RefineResult:
    """Local ascent of the signed pairing in angle/bias (or box) coordinates.

    The sign is frozen at the seed so ascending s * pairing increases the
    pairing magnitude for both greedy flavors.  Steps backtrack by halving
    (at most config.max_halvings) and the result never scores worse than
    its seed; non-finite derivatives fall back to the unrefined seed.
    """
    omega = np.asarray(omega, dtype=float).copy()
    s = 1.0 if pairing0 >= 0 else -1.0
    d = dictionary.dim
    box_mode = dictionary.kind == "box"
    if box_mode:
        lo, hi = dictionary.box_low, dictionary.box_high
        step0 = (hi - lo) / max(config.box_grid, 2)
    else:
        margin = config.bias_margin_frac * (dictionary.c2 - dictionary.c1)
        b_lo, b_hi = dictionary.c1 - margin, dictionary.c2 + margin
        angle_step = 2.0 * np.pi / max(config.n_theta, 1)
        bias_step = (dictionary.c2 - dictionary.c1) / max(config.n_bias, 1)
        step0 = bias_step if d == 1 else max(angle_step, bias_step)
        phis = _angles_from_omega(omega) if d > 1 else np.zeros(0)
    best_p = pairing0
    cur_omega, cur_b = omega.copy(), float(bias)
    for _ in range(config.refine_iters):
        try:
            p, g_om, g_b, h_bb = _pairing_with_grads(
                groups, act, cur_omega, cur_b,
                want_curvature=(config.refine == "newton"),
            )
        except UnsupportedDerivativeError:
            break
        if not (np.isfinite(p) and np.isfinite(g_b) and np.isfinite(g_om).all()):
            return _RefineResult(omega, float(bias), pairing0, fell_back=True)
        if box_mode:
            grad = s * np.concatenate([g_om, [g_b]])
            norm = float(np.linalg.norm(grad))
            if norm == 0.0:
                break
            direction = grad / norm
            params = np.concatenate([cur_omega, [cur_b]])
            improved = False
            step = step0
            for _ in range(config.max_halvings):
                if step < config.min_refine_step:
                    break
                trial = np.clip(params + step * direction, lo, hi)
                tp = pairing_from_groups(groups, act, trial[:d], float(trial[d]))
                if s * tp > s * best_p + 1e-12 * abs(best_p):
                    cur_omega, cur_b, best_p = trial[:d], float(trial[d]), tp
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        else:
            if d > 1:
                jac = _sphere_jacobian(phis)
                g_phi = jac.T @ g_om
            else:
                g_phi = np.zeros(0)
            grad = s * np.concatenate([g_phi, [g_b]])
            norm = float(np.linalg.norm(grad))
            if norm == 0.0:
                break
            if config.refine == "newton" and h_bb != 0.0 and s * h_bb < 0.0:
                db = -g_b / h_bb
            else:
                db = None
            improved = False
            if db is not None and np.isfinite(db):
                # Newton step on the bias alone, halved until it improves
                step = 1.0
                for _ in range(config.max_halvings):
                    if abs(step * db) < config.min_refine_step:
                        break
                    tb = float(np.clip(cur_b + step * db, b_lo, b_hi))
                    tp = pairing_from_groups(groups, act, cur_omega, tb)
                    if s * tp > s * best_p + 1e-12 * abs(best_p):
                        cur_b, best_p = tb, tp
                        improved = True
                        break
                    step *= 0.5
            direction = grad / norm
            step = step0
            for _ in range(config.max_halvings):
                if step < config.min_refine_step:
                    break
                tphi = phis + step * direction[:-1] if d > 1 else phis
                tom = _sphere_point(tphi) if d > 1 else cur_omega
                tb = float(np.clip(cur_b + step * direction[-1], b_lo, b_hi))
                tp = pairing_from_groups(groups, act, tom, tb)
                if s * tp > s * best_p + 1e-12 * abs(best_p):
                    phis, cur_omega, cur_b, best_p = tphi, tom, tb, tp
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
    return _RefineResult(cur_omega, cur_b, best_p)


class ArgmaxEngine:
    """Stateful search engine bound to one objective.

    Caches the breakpoint sort permutation per grid direction (the points
    never change between iterations; only the residual fields do).
    """

    def __init__(self, objective, dictionary: DictionarySpec,
                 config: SearchConfig = None):
        self.objective = objective
        self.dictionary = dictionary
        self.config = config or SearchConfig()
        if isinstance(objective, QuadraticObjective):
            objective.check_activation(dictionary.activation)
        self._dirs = None
        if dictionary.kind != "box":
            self._dirs = direction_grid(dictionary, self.config)
        self._perm_cache = {}
        self._screen_idx = None
        self.last_search_count = 0

    # -- relu path: exact bias optimization per direction ------------------

    _PERM_CACHE_BUDGET = 2e9  # bytes of int32 sort permutations

    def _direction_batches(self, groups, dir_subset=None, cache_tag=""):
        """Yield (start, omegas, _DirectionBatch) chunks over the direction
        grid, reusing cached sort permutations (the points never move)."""
        dirs = np.asarray(self._dirs if dir_subset is None else dir_subset)
        total = sum(pts.shape[0] for pts, _ in groups)
        chunk = max(1, int(4_000_000 // max(total, 1)))
        k = self.dictionary.activation.degree
        cacheable = (
            dir_subset is None
            and len(dirs) * total * 4 <= self._PERM_CACHE_BUDGET
        )
        for start in range(0, len(dirs), chunk):
            sub = dirs[start : start + chunk]
            key = (cache_tag, start)
            perms = self._perm_cache.get(key) if cacheable else None
            batch = _DirectionBatch(groups, sub, k, perms=perms)
            if cacheable and perms is None:
                self._perm_cache[key] = batch.perms
            yield start, sub, batch

    def _subsampled_groups(self, groups):
        """Deterministic random subsample of every group for screening.
        A strided slice would alias against tensor-product grids."""
        total = sum(pts.shape[0] for pts, _ in groups)
        frac = min(1.0, self.config.screen_points / max(total, 1))
        if frac >= 1.0:
            return groups
        if self._screen_idx is None:
            rng = np.random.default_rng(1234)
            self._screen_idx = [
                np.sort(rng.choice(pts.shape[0],
                                   size=max(1, int(frac * pts.shape[0])),
                                   replace=False))
                for pts, _ in groups
            ]
        return [
            (pts[idx], {a: q[idx] for a, q in chan.items()})
            for (pts, chan), idx in zip(groups, self._screen_idx)
        ]

    def _screened_direction_indices(self, groups):
        """Rank directions on the subsample; return indices worth exact work."""
        cfg, dic = self.config, self.dictionary
        n_dirs = len(self._dirs)
        if cfg.screen_top <= 0 or n_dirs <= 2 * cfg.screen_top:
            return range(n_dirs)
        sub_groups = self._subsampled_groups(groups)
        biases = np.linspace(dic.c1, dic.c2, max(cfg.screen_biases, 3))
        scores = np.empty(n_dirs)
        for start, sub, batch in self._direction_batches(
            sub_groups, cache_tag="screen"
        ):
            vals = batch.eval_grid(biases)
            scores[start : start + sub.shape[0]] = np.abs(vals).max(axis=1)
        order = np.argsort(-scores, kind="stable")
        return [int(i) for i in order[: cfg.screen_top]]

    def _poly_for_direction(self, groups, j: int) -> _BiasPolynomial:
        perm = self._perm_cache.get(("dir", j))
        poly = _BiasPolynomial(groups, self._dirs[j],
                               self.dictionary.activation.degree, perm=perm)
        if perm is None:
            total = sum(pts.shape[0] for pts, _ in groups)
            if (len(self._perm_cache) + 1) * total * 4 <= self._PERM_CACHE_BUDGET:
                self._perm_cache[("dir", j)] = poly.perm
        return poly

    def select(self, state_or_groups, rga_mode: bool = False) -> Selection:
        groups = state_or_groups
        if not (isinstance(groups, list) and groups and isinstance(groups[0], tuple)):
            groups = field_groups_of(self.objective, state_or_groups)
        if self.dictionary.kind == "box":
            return self._select_box(groups, rga_mode)
        if self.dictionary.activation.kind == "relu-power":
            return self._select_relu(groups, rga_mode)
        return self._select_grid_scored(groups, rga_mode)

    def _select_relu(self, groups, rga_mode: bool) -> Selection:
        cfg, dic = self.config, self.dictionary
        if cfg.mode == "grid-refine" and not cfg.exact_bias:
            return self._select_relu_grid(groups, rga_mode)
        results = []
        survivors = self._screened_direction_indices(groups)
        for j in survivors:
            poly = self._poly_for_direction(groups, j)
            b, p = poly.abs_max(dic.c1, dic.c2)
            results.append((j, b, p))
        self.last_search_count = len(self._dirs)
        results.sort(key=lambda r: -abs(r[2]))
        best_j, best_b, best_p = results[0]
        best = (self._dirs[best_j].copy(), best_b, best_p)
        seed_pairing = best_p
        refine_it = dic.kind == "sphere" and dic.dim > 1 and cfg.mode == "grid-refine"
        if refine_it and abs(best_p) > 0.0:
            for j, b, p in results[: cfg.top_k]:
                res = refine_candidate(groups, dic.activation, dic, cfg,
                                       self._dirs[j], b, p)
                omega, b2, p2 = res.omega, res.bias, res.pairing
                # exact bias polish at the refined direction
                poly = _BiasPolynomial(groups, omega, dic.activation.degree)
                b3, p3 = poly.abs_max(dic.c1, dic.c2)
                if abs(p3) > abs(p2):
                    b2, p2 = b3, p3
                if abs(p2) > abs(best[2]):
                    best = (omega, b2, p2)
        omega, b, p = best
        neuron = RidgeNeuron(omega, b, dic.activation)
        alternates = [(neuron, p)]
        for j, bb, pp in results[:8]:
            cand = RidgeNeuron(self._dirs[j].copy(), bb, dic.activation)
            if (cand.bias, float(cand.omega[0])) != (neuron.bias,
                                                     float(neuron.omega[0])):
                alternates.append((cand, pp))
        return Selection(
            neuron=neuron,
            pairing=p,
            converged=(p == 0.0),
            searches=self.last_search_count,
            seed_pairing=seed_pairing,
            direction_results=[
                (self._dirs[j].copy(), bb, pp) for j, bb, pp in results
            ] if dic.kind in ("axis",) or dic.dim == 1 else [],
            alternates=alternates,
        )

    def _select_relu_grid(self, groups, rga_mode: bool) -> Selection:
        """Bias-grid seeding (scored through the piecewise polynomial) plus
        local refinement; the bias subproblem is never solved exactly."""
        cfg, dic = self.config, self.dictionary
        biases = dic.c1 + (dic.c2 - dic.c1) * np.arange(cfg.n_bias + 1) / cfg.n_bias
        seeds = []
        for start, sub, batch in self._direction_batches(groups):
            ps = batch.eval_grid(biases)
            for row in range(sub.shape[0]):
                order = np.argsort(-np.abs(ps[row]), kind="stable")[: cfg.top_k]
                for i in order:
                    seeds.append((sub[row], float(biases[i]), float(ps[row, i])))
        self.last_search_count = len(self._dirs) * (cfg.n_bias + 1)
        seeds.sort(key=lambda r: -abs(r[2]))
        best = seeds[0]
        seed_pairing = best[2]
        if abs(best[2]) > 0.0:
            for omega, b, p in seeds[: cfg.top_k]:
                res = refine_candidate(groups, dic.activation, dic, cfg,
                                       omega, b, p)
                if abs(res.pairing) > abs(best[2]):
                    best = (res.omega, res.bias, res.pairing)
        omega, b, p = best
        neuron = RidgeNeuron(np.asarray(omega), b, dic.activation)
        alternates = [(neuron, p)]
        alternates += [
            (RidgeNeuron(np.asarray(om), bb, dic.activation), pp)
            for om, bb, pp in seeds[:8]
        ]
        return Selection(
            neuron=neuron,
            pairing=p,
            converged=(p == 0.0),
            searches=self.last_search_count,
            seed_pairing=seed_pairing,
            alternates=alternates,
        )

    # -- grid-scored path for smooth activations on the sphere -------------

    def _select_grid_scored(self, groups, rga_mode: bool) -> Selection:
        cfg, dic = self.config, self.dictionary
        biases = dic.c1 + (dic.c2 - dic.c1) * np.arange(cfg.n_bias + 1) / cfg.n_bias
        seeds = []
        for omega in self._dirs:
            ps = self._pairings_on_bias_grid(groups, omega, biases)
            i = int(np.argmax(np.abs(ps)))
            seeds.append((omega, float(biases[i]), float(ps[i])))
        self.last_search_count = len(seeds)
        seeds.sort(key=lambda r: -abs(r[2]))
        return self._refine_top(groups, seeds, rga_mode)

    def _pairings_on_bias_grid(self, groups, omega, biases):
        act = self.dictionary.activation
        out = np.zeros(biases.shape[0])
        for pts, chan in groups:
            z = pts @ omega
            t = z[:, None] + biases[None, :]
            by_order = {}
            for alpha, q in chan.items():
                w_pow = float(np.prod(omega ** np.asarray(alpha)))
                if w_pow == 0.0:
                    continue
                o = multi_index_order(alpha)
                if o not in by_order:
                    by_order[o] = activation_derivative(act, t, o)
                out += w_pow * (q @ by_order[o])
        return out

    def _refine_top(self, groups, seeds, rga_mode: bool) -> Selection:
        cfg, dic = self.config, self.dictionary
        best = seeds[0]
        seed_pairing = best[2]
        if abs(best[2]) > 0.0:
            for omega, b, p in seeds[: cfg.top_k]:
                res = refine_candidate(groups, dic.activation, dic, cfg,
                                       omega, b, p)
                if abs(res.pairing) > abs(best[2]):
                    best = (res.omega, res.bias, res.pairing)
        omega, b, p = best
        neuron = RidgeNeuron(np.asarray(omega), b, dic.activation)
        alternates = [(neuron, p)]
        alternates += [
            (RidgeNeuron(np.asarray(om), bb, dic.activation), pp)
            for om, bb, pp in seeds[:8]
        ]
        return Selection(
            neuron=neuron,
            pairing=p,
            converged=(p == 0.0),
            searches=self.last_search_count,
            seed_pairing=seed_pairing,
            alternates=alternates,
        )

    # -- box dictionaries (general activation, compact parameter box) ------

    def _select_box(self, groups, rga_mode: bool) -> Selection:
        cfg, dic = self.config, self.dictionary
        d = dic.dim
        axis = np.linspace(dic.box_low, dic.box_high, cfg.box_grid)
        grids = np.meshgrid(*([axis] * (d + 1)), indexing="ij")
        cands = np.column_stack([g.ravel() for g in grids])
        pair = self._pairings_for_candidates(groups, cands[:, :d], cands[:, d])
        self.last_search_count = cands.shape[0]
        order = np.argsort(-np.abs(pair), kind="stable")
        seeds = [
            (cands[i, :d].copy(), float(cands[i, d]), float(pair[i]))
            for i in order[: max(cfg.top_k, 1)]
        ]
        return self._refine_top(groups, seeds, rga_mode)

    def _pairings_for_candidates(self, groups, omegas, biases, chunk=256):
        act = self.dictionary.activation
        n_cand = omegas.shape[0]
        out = np.zeros(n_cand)
        for start in range(0, n_cand, chunk):
            sl = slice(start, min(start + chunk, n_cand))
            om = omegas[sl]
            bs = biases[sl]
            acc = np.zeros(om.shape[0])
            for pts, chan in groups:
                t = pts @ om.T + bs[None, :]
                by_order = {}
                for alpha, q in chan.items():
                    o = multi_index_order(alpha)
                    if o not in by_order:
                        by_order[o] = activation_derivative(act, t, o)
                    w_pow = np.prod(om ** np.asarray(alpha)[None, :], axis=1)
                    acc += w_pow * (q @ by_order[o])
            out[sl] = acc
        return out


def exact_1d(objective, state, dictionary: DictionarySpec,
             config: SearchConfig = None) -> Selection:
    """Exact 1-D argmax by hyperplane enumeration over both signs."""
    cfg = config or SearchConfig(mode="exact-1d")
    engine = ArgmaxEngine(objective, dictionary, cfg)
    return engine.select(field_groups_of(objective, state))


def axis_restricted(objective, state, dictionary: DictionarySpec,
                    config: SearchConfig = None) -> Selection:
    """Best element over the signed-axis dictionary: 2d exact 1-D searches."""
    cfg = config or SearchConfig(mode="axis-restricted")
    if dictionary.kind != "axis":
        dictionary = DictionarySpec(
            activation=dictionary.activation, dim=dictionary.dim, kind="axis",
            c1=dictionary.c1, c2=dictionary.c2,
        )
    engine = ArgmaxEngine(objective, dictionary, cfg)
    return engine.select(field_groups_of(objective, state))


class ExhaustiveArgmax:
    """Exact argmax over a finite candidate list (synthetic/test problems)."""

    def __init__(self, objective, candidates):
        self.objective = objective
        self.candidates = list(candidates)
        self.last_search_count = 0

    def select(self, state_or_groups, rga_mode: bool = False) -> Selection:
        groups = state_or_groups
        if not (isinstance(groups, list) and groups and isinstance(groups[0], tuple)):
            groups = field_groups_of(self.objective, state_or_groups)
        scored = []
        for g in self.candidates:
            p = pairing_from_groups(groups, g.activation, g.omega, g.bias)
            scored.append((g, p))
        self.last_search_count = len(self.candidates)
        if not scored:
            return Selection(neuron=None, pairing=0.0, converged=True)
        scored.sort(key=lambda t: -abs(t[1]))
        best = scored[0]
        return Selection(neuron=best[0], pairing=best[1],
                         converged=(best[1] == 0.0),
                         searches=self.last_search_count,
                         alternates=scored[:8])
