"""Relaxed and orthogonal greedy drivers.

RGA (any convex objective): u_n = (1 - alpha_n) u_{n-1} - M alpha_n g_n with
alpha_n = min(1, 2/n) and g_n chosen by signed pairing with the gradient;
the l1 norm of the coefficients stays below M by construction.

OGA (quadratic objectives): g_n maximizes the absolute weighted pairing
with the residual, then the coefficients are recomputed as the W-metric
least-squares projection of the target onto span{J(g_1), ..., J(g_n)}.

When the embedded rows fit in a memory budget they are orthonormalized
incrementally (modified Gram-Schmidt with one reorthogonalization pass, in
the W inner product), the residual is updated by deflation, and the
coefficients come from back-substitution against the accumulated R factor.
Solving through the Gram matrix instead squares the condition number and
visibly corrupts the projection for this dictionary beyond roughly a
hundred neurons, so the Gram/Cholesky route (incremental update with full
refactorization every `refactor_every` steps) is kept only for the
low-memory mode where rows are recomputed on the fly and the iteration
counts stay small (the high-dimensional presets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .argmax import Selection
from .dictionary import Expansion, activation_derivative, \
    ridge_argument_many
from .errors import DegenerateDictionaryError, RankDeficientError
from .problems import ConvexObjective, QuadraticObjective


@dataclass
class RgaConfig:
    M: float
    iterations: int

    def __post_init__(self):
        if self.M <= 0:
            raise ValueError("the l1 budget M must be positive")


@dataclass
class OgaConfig:
    iterations: int
    eps_gram: float = 1e-12
    stop_pairing_rel: float = 1e-14
    refactor_every: int = 64
    dense_row_budget: float = 4e8  # bytes
    # Stability guard.  Once the discrete problem is exhausted (pairings at
    # the quadrature noise floor), further steps compound near-cancelling
    # coefficients and wreck the iterate off the training points.  After the
    # l1 norm has plateaued, a step whose re-projected l1 norm exceeds
    # l1_growth_factor times the trailing window is rejected; ranked
    # alternates are tried and the run stops when none passes.  0 disables.
    l1_growth_factor: float = 2.0
    l1_guard_window: int = 16
    l1_guard_after: int = 16

    def __post_init__(self):
        if self.eps_gram < 0:
            raise ValueError("eps_gram must be >= 0")


@dataclass
class IterationRecord:
    n: int
    objective_value: float
    omega: np.ndarray
    bias: float
    sign: float
    pairing: float
    l1_norm: float
    note: str = ""


@dataclass
class GreedyState:
    expansion: Expansion
    n: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    # OGA bookkeeping
    neurons: list = field(default_factory=list)
    coeffs: np.ndarray = None
    rows: list = None  # W-orthonormal basis columns, or None in lean mode
    rmat: np.ndarray = None  # upper-triangular factor (QR path)
    zvec: np.ndarray = None  # <q_i, y>_W (QR path)
    resid: np.ndarray = None  # concatenated y - J(u) (QR path)
    wvec: np.ndarray = None
    yvec: np.ndarray = None
    block_sizes: list = None
    gram: np.ndarray = None
    chol: np.ndarray = None
    bvec: np.ndarray = None
    ju: list = None  # per-block coordinates of J(u)
    appends_since_refactor: int = 0
    # RGA field caches
    fields: tuple = None

    def split_blocks(self, flat):
        out = []
        start = 0
        for size in self.block_sizes:
            out.append(flat[start : start + size])
            start += size
        return out


def project(vectors, y, w, eps_gram: float = 1e-12) -> np.ndarray:
    """W-metric least squares: minimize ||sum_i c_i v_i - y||_W.

    Solves the Gram normal equations with a Cholesky factorization, adding a
    Tikhonov shift eps_gram * trace(G)/n to the diagonal if the plain solve
    is numerically singular.  Residuals are W-orthogonal to every v_i.
    """
    J = np.asarray(vectors, dtype=float)
    if J.ndim != 2 or J.shape[0] == 0:
        raise ValueError("need a nonempty list of coordinate vectors")
    w = np.asarray(w, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    Jw = J * w
    G = Jw @ J.T
    rhs = Jw @ y
    tr = float(np.trace(G))
    if tr <= 0.0:
        raise RankDeficientError("all selected vectors vanish in the W metric")
    shifts = [0.0] + [eps_gram * tr / G.shape[0] * 100.0**k for k in range(3)]
    for shift in shifts:
        try:
            L = cholesky(G + shift * np.eye(G.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
        z = solve_triangular(L, rhs, lower=True)
        return solve_triangular(L.T, z, lower=False)
    raise RankDeficientError("Gram solve failed after Tikhonov regularization")


def init_oga_state(objective: QuadraticObjective, config: OgaConfig) -> GreedyState:
    n_max = max(config.iterations, 1)
    dense = objective.size * n_max * 8 <= config.dense_row_budget
    state = GreedyState(expansion=Expansion([]))
    state.gram = np.zeros((0, 0))
    state.bvec = np.zeros(0)
    state.coeffs = np.zeros(0)
    state.block_sizes = [b.size for b in objective.blocks]
    state.ju = [np.zeros(b.size) for b in objective.blocks]
    if dense:
        state.rows = np.empty((n_max, objective.size))
        state.wvec = _weights_concat(objective)
        state.yvec = _target_concat(objective)
        state.rmat = np.zeros((0, 0))
        state.zvec = np.zeros(0)
        state.resid = state.yvec.copy()
    return state


def _weights_concat(objective):
    return np.concatenate([b.weights for b in objective.blocks])


def _target_concat(objective):
    return np.concatenate([b.target for b in objective.blocks])


def _gram_row(objective, state, new_blocks):
    """Inner products <J(g_new), J(g_i)>_W, rows recomputed on the fly."""
    k = len(state.neurons)
    row = np.zeros(k)
    for i in range(k):
        acc = 0.0
        for b, nb, ob in zip(objective.blocks, new_blocks,
                             objective.embed_blocks(state.neurons[i])):
            acc += float((b.weights * nb) @ ob)
        row[i] = acc
    return row


def _chol_append(L, col, diag, eps_abs):
    if L.shape[0] == 0:
        if diag <= eps_abs:
            raise np.linalg.LinAlgError("nonpositive pivot")
        return np.array([[np.sqrt(diag)]])
    l = solve_triangular(L, col, lower=True)
    d2 = diag - float(l @ l)
    if d2 <= eps_abs:
        raise np.linalg.LinAlgError("nonpositive pivot")
    n = L.shape[0] + 1
    out = np.zeros((n, n))
    out[:-1, :-1] = L
    out[-1, :-1] = l
    out[-1, -1] = np.sqrt(d2)
    return out


def _chol_full(G, eps_gram):
    tr = float(np.trace(G))
    shifts = [0.0] + [eps_gram * tr / G.shape[0] * 100.0**k for k in range(3)]
    for shift in shifts:
        try:
            return cholesky(G + shift * np.eye(G.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    return None


def _refresh_ju_lean(objective, state):
    ju = [np.zeros(b.size) for b in objective.blocks]
    for c, g in zip(state.coeffs, state.neurons):
        for acc, vals in zip(ju, objective.embed_blocks(g)):
            acc += c * vals
    return ju


def _mark_rank_deficient(state, objective, g, sel):
    state.converged = True
    state.reason = "rank-deficient Gram matrix"
    state.history.append(
        IterationRecord(
            n=state.n + 1,
            objective_value=objective.value_from_coords(state.ju),
            omega=g.omega.copy(), bias=g.bias, sign=1.0,
            pairing=sel.pairing, l1_norm=state.expansion.l1_norm,
            note="rank-deficient; element skipped",
        )
    )


def _orthogonalize(state, objective, g):
    """MGS factor data for a candidate: (h, q, rnn, vnorm), not committed."""
    v = np.concatenate(objective.embed_blocks(g))
    w = state.wvec
    vnorm = math.sqrt(float((w * v) @ v))
    k = len(state.neurons)
    u = v
    h = np.zeros(k)
    if k:
        Q = state.rows[:k]
        for _ in range(2):  # one reorthogonalization pass
            coef = Q @ (w * u)
            u = u - coef @ Q
            h += coef
    rnn = math.sqrt(float((w * u) @ u))
    return h, u, rnn, vnorm


def _oga_step_qr(state, objective, sel, config):
    """Append one element via W-metric modified Gram-Schmidt.

    Candidates whose projection coefficient would exceed
    max_new_coeff_scale * (1 + current l1 norm) are rejected -- such steps
    amplify quadrature-level noise into large cancelling coefficients -- and
    the ranked alternates from the search are tried instead.
    """
    w = state.wvec
    cap = np.inf
    if config.l1_growth_factor > 0 and state.n >= config.l1_guard_after:
        window = [r.l1_norm for r in state.history[-config.l1_guard_window:]]
        wmin, wmax = min(window), max(window)
        # only an established plateau arms the guard; legitimate growth
        # phases (ramping l1) are left alone
        if wmax <= 1.5 * max(wmin, 1e-12):
            cap = config.l1_growth_factor * max(wmax, 1.0)
    attempts = sel.alternates or [(sel.neuron, sel.pairing)]
    chosen = None
    note = ""
    k = len(state.neurons)
    for g, pairing in attempts[:8]:
        h, u, rnn, vnorm = _orthogonalize(state, objective, g)
        if vnorm == 0.0 or rnn <= 1e-14 * vnorm:
            # nearly inside the span: fall through to the next candidate
            continue
        zn = float((w * (u / rnn)) @ state.resid)
        if np.isfinite(cap) and k:
            # trial re-projection: inspect the whole coefficient vector,
            # not just the newest entry
            rm_try = np.zeros((k + 1, k + 1))
            rm_try[:k, :k] = state.rmat
            rm_try[:k, k] = h
            rm_try[k, k] = rnn
            c_try = solve_triangular(rm_try, np.append(state.zvec, zn),
                                     lower=False)
            if float(np.abs(c_try).sum()) > cap:
                # coefficient blow-up past an established plateau means the
                # quadrature is exhausted; freeze rather than continue
                state.converged = True
                state.reason = "l1 stability guard: discrete problem exhausted"
                return
        chosen = (g, pairing, h, u / rnn, rnn, zn)
        if g is not sel.neuron:
            note = "alternate candidate (stability guard)"
        break
    if chosen is None:
        _mark_rank_deficient(state, objective, sel.neuron, sel)
        return
    g, pairing, h, q, rnn, zn = chosen
    if state.rows.shape[0] <= k:
        grown = np.empty((2 * state.rows.shape[0] + 1, state.rows.shape[1]))
        grown[:k] = state.rows[:k]
        state.rows = grown
    state.rows[k] = q
    rm = np.zeros((k + 1, k + 1))
    rm[:k, :k] = state.rmat
    rm[:k, k] = h
    rm[k, k] = rnn
    state.rmat = rm
    state.zvec = np.append(state.zvec, zn)
    state.resid = state.resid - zn * q
    state.neurons.append(g)
    state.coeffs = solve_triangular(state.rmat, state.zvec, lower=False)
    state.ju = state.split_blocks(state.yvec - state.resid)
    value = 0.5 * float((w * state.resid) @ state.resid) + objective.offset
    _finish_step(state, g, sel, value, pairing=pairing, note=note)


def _oga_step_gram(state, objective, g, sel, config):
    """Append one element via the incremental Gram/Cholesky route."""
    new_blocks = objective.embed_blocks(g)
    row = _gram_row(objective, state, new_blocks)
    diag = float(sum((b.weights * nb) @ nb
                     for b, nb in zip(objective.blocks, new_blocks)))
    bn = float(sum((b.weights * nb) @ b.target
                   for b, nb in zip(objective.blocks, new_blocks)))
    k = len(state.neurons)
    G = np.zeros((k + 1, k + 1))
    G[:k, :k] = state.gram
    G[k, :k] = row
    G[:k, k] = row
    G[k, k] = diag
    eps_abs = config.eps_gram * max(float(np.trace(G)) / (k + 1), 1e-300)
    L = None
    state.appends_since_refactor += 1
    if state.chol is not None and state.appends_since_refactor < config.refactor_every:
        try:
            L = _chol_append(state.chol, row, diag, eps_abs)
        except np.linalg.LinAlgError:
            L = None
    if L is None:
        L = _chol_full(G, config.eps_gram)
        state.appends_since_refactor = 0
    if L is None:
        _mark_rank_deficient(state, objective, g, sel)
        return
    state.neurons.append(g)
    state.gram = G
    state.chol = L
    state.bvec = np.append(state.bvec, bn)
    z = solve_triangular(L, state.bvec, lower=True)
    state.coeffs = solve_triangular(L.T, z, lower=False)
    state.ju = _refresh_ju_lean(objective, state)
    _finish_step(state, g, sel, objective.value_from_coords(state.ju))


def _finish_step(state, g, sel, value, pairing=None, note=""):
    state.expansion = Expansion(list(zip(state.coeffs, state.neurons)))
    state.n += 1
    state.history.append(
        IterationRecord(
            n=state.n,
            objective_value=value,
            omega=g.omega.copy(),
            bias=g.bias,
            sign=1.0,
            pairing=sel.pairing if pairing is None else pairing,
            l1_norm=state.expansion.l1_norm,
            note=note,
        )
    )


def oga_step(state: GreedyState, objective: QuadraticObjective, engine,
             config: OgaConfig) -> GreedyState:
    """One orthogonal-greedy step: select, append, re-project."""
    if state.converged:
        return state
    wres = objective.weighted_residual(state.ju)
    sel: Selection = engine.select(objective.pairing_field_groups(wres))
    threshold = config.stop_pairing_rel * max(objective.target_norm2, 1e-300)
    if sel.neuron is None or abs(sel.pairing) <= threshold:
        state.converged = True
        state.reason = "pairing below stop threshold"
        return state
    if state.rows is not None:
        _oga_step_qr(state, objective, sel, config)
    else:
        _oga_step_gram(state, objective, sel.neuron, sel, config)
    return state


def init_rga_state(objective) -> GreedyState:
    state = GreedyState(expansion=Expansion([]))
    if isinstance(objective, QuadraticObjective):
        state.ju = [np.zeros(b.size) for b in objective.blocks]
    elif isinstance(objective, ConvexObjective):
        n, d = objective.rule.size, objective.rule.dim
        state.fields = (np.zeros(n), np.zeros((n, d)))
    else:
        raise TypeError(f"unsupported objective {type(objective)!r}")
    return state


def rga_step(state: GreedyState, objective, engine, M: float) -> GreedyState:
    """One relaxed-greedy step with the l1 budget M."""
    n = state.n + 1
    if isinstance(objective, QuadraticObjective):
        wres = objective.weighted_residual(state.ju)
        groups = objective.pairing_field_groups(wres)
    else:
        groups = objective.pairing_field_groups(state.fields)
    sel: Selection = engine.select(groups, rga_mode=True)
    if sel.neuron is None:
        raise DegenerateDictionaryError("argmax returned no candidate")
    g = sel.neuron
    sign = 1.0 if sel.pairing >= 0.0 else -1.0
    alpha = min(1.0, 2.0 / n)
    kept = [] if alpha == 1.0 else [
        ((1.0 - alpha) * a, h) for a, h in state.expansion.terms
    ]
    state.expansion = Expansion(kept + [(-M * alpha * sign, g)])
    if isinstance(objective, QuadraticObjective):
        new_blocks = objective.embed_blocks(g)
        state.ju = [
            (1.0 - alpha) * cur - M * alpha * sign * nb
            for cur, nb in zip(state.ju, new_blocks)
        ]
        value = objective.value_from_coords(state.ju)
    else:
        t = ridge_argument_many(objective.rule.points, g.omega, g.bias)
        gv = activation_derivative(g.activation, t, 0)
        gd = activation_derivative(g.activation, t, 1)
        vals, grads = state.fields
        vals = (1.0 - alpha) * vals - M * alpha * sign * gv
        grads = (1.0 - alpha) * grads - (M * alpha * sign) * gd[:, None] * g.omega
        state.fields = (vals, grads)
        value = objective.value_from_fields(vals, grads)
    state.n = n
    state.history.append(
        IterationRecord(
            n=n,
            objective_value=value,
            omega=g.omega.copy(),
            bias=g.bias,
            sign=sign,
            pairing=sel.pairing,
            l1_norm=state.expansion.l1_norm,
        )
    )
    return state


def run_oga(objective, engine, config: OgaConfig, snapshot_at=()):
    """Run OGA for config.iterations steps; returns (state, snapshots)."""
    state = init_oga_state(objective, config)
    snapshots = {}
    want = set(snapshot_at)
    for _ in range(config.iterations):
        oga_step(state, objective, engine, config)
        if state.n in want:
            snapshots[state.n] = state.expansion
        if state.converged:
            break
    return state, snapshots


def run_rga(objective, engine, config: RgaConfig, snapshot_at=()):
    """Run RGA for config.iterations steps; returns (state, snapshots)."""
    state = init_rga_state(objective)
    snapshots = {}
    want = set(snapshot_at)
    for _ in range(config.iterations):
        rga_step(state, objective, engine, config.M)
        if state.n in want:
            snapshots[state.n] = state.expansion
    return state, snapshots
