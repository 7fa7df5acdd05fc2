"""Named experiment presets for the benchmark CLI.

Each preset bundles a PDE instance with a manufactured exact solution, the
assembly and error-measurement quadrature, the dictionary, and the argmax
configuration.  Source terms are derived analytically from the stated exact
solutions (symbolically for the messy ones) and validated against finite
differences in the test suite.

Desk-scale defaults keep every preset within minutes; `full_scale=True`
restores the original table schedules and quadrature sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .argmax import ArgmaxEngine, SearchConfig
from .dictionary import DictionarySpec, Expansion, relu_power, sigmoid
from .metrics import ExactSolution, error_norms, relative_gap
from .problems import (
    ConvexObjective,
    EllipticProblem,
    NonlinearEnergyProblem,
    PinnProblem,
    assemble_energy,
    assemble_nonlinear,
    assemble_penalized,
    assemble_pinn,
)
from .quadrature import (
    Box,
    Disk,
    boundary_rule,
    gauss_grid,
    halton,
    monte_carlo,
)


def _search_1d(cells: int) -> SearchConfig:
    """Paper-style 1-D search: bias grid plus local refinement, with the
    refinement resolution floored at one quadrature cell."""
    return SearchConfig(mode="grid-refine", n_bias=400, top_k=5,
                        refine_iters=50, exact_bias=False,
                        min_refine_step=2.0 / cells)


@dataclass
class Plan:
    """A fully wired experiment: objectives per row, measurement, metadata."""

    name: str
    columns: list
    algorithm: str  # 'oga' or 'rga'
    shared_objective: bool
    objective: object  # callable(n or None) -> (objective, engine)
    measure: object  # callable(expansion, n, objective) -> {column: value}
    schedule: list
    metadata: dict = field(default_factory=dict)
    rga_M: float = 0.0
    breakpoint_domain: tuple = None  # (lo, hi) when breakpoints are exported
    exact_curve: object = None  # 1-D exact solution for plots


def _const_or_vals(fn):
    """Wrap a sympy-lambdified function to return (N,) arrays on points."""

    def wrapped(pts):
        cols = [pts[:, j] for j in range(pts.shape[1])]
        out = np.asarray(fn(*cols), dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.broadcast_to(out, (pts.shape[0],)).copy()
        return out

    return wrapped


def _sympy_solution_1d(u_expr, x):
    du = sp.diff(u_expr, x)
    f_expr = -sp.diff(u_expr, x, 2) + u_expr
    u_fn = _const_or_vals(sp.lambdify([x], u_expr, "numpy"))
    du_fn = _const_or_vals(sp.lambdify([x], du, "numpy"))
    f_fn = _const_or_vals(sp.lambdify([x], f_expr, "numpy"))
    exact = ExactSolution(value=u_fn, partials={(1,): du_fn}, order_m=1)
    return exact, f_fn


# -- Example 1: 1-D elliptic, -u'' + u = f on (-1, 1) ----------------------

def _ex1_exact_neumann():
    return ExactSolution(
        value=lambda p: np.cos(np.pi * p[:, 0]),
        partials={(1,): lambda p: -np.pi * np.sin(np.pi * p[:, 0])},
        order_m=1,
    )


def _ex1_source_neumann(p):
    return (1.0 + np.pi**2) * np.cos(np.pi * p[:, 0])


def _ex1_exact_dirichlet():
    return ExactSolution(
        value=lambda p: np.cos(0.5 * np.pi * p[:, 0]),
        partials={(1,): lambda p: -0.5 * np.pi * np.sin(0.5 * np.pi * p[:, 0])},
        order_m=1,
    )


def _ex1_source_dirichlet(p):
    return (1.0 + np.pi**2 / 4.0) * np.cos(0.5 * np.pi * p[:, 0])


def build_ex1_neumann(cfg) -> Plan:
    box = Box([-1.0], [1.0])
    # deeper than the usual t=2, L=4000 grid: the kink-cell quadrature noise
    # must sit below the pairing signal for the n = 256 row to stay clean
    cells = cfg.quad_int("cells", 32_000)
    t = cfg.quad_int("t", 2)
    problem = EllipticProblem(1, {(1,): 1.0}, 1.0, _ex1_source_neumann, box)
    objective = assemble_energy(problem, gauss_grid(box, cells, t))
    spec = DictionarySpec(relu_power(2), dim=1)
    engine = ArgmaxEngine(objective, spec, cfg.search(_search_1d(cells)))
    fine = gauss_grid(box, 2 * cells, t)
    exact = _ex1_exact_neumann()

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem)
        return {"l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex1-neumann",
        columns=["l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128, 256],
                              [16, 32, 64, 128, 256, 512, 1024, 2048]),
        metadata={"quadrature": {"kind": "gauss", "cells": cells, "t": t},
                  "fine_cells": 2 * cells, "dictionary": "relu2-sphere"},
        exact_curve=exact,
    )


def build_ex1_dirichlet(cfg) -> Plan:
    box = Box([-1.0], [1.0])
    cells = cfg.quad_int("cells", 16_000)
    t = cfg.quad_int("t", 2)
    rule = gauss_grid(box, cells, t)
    brule = boundary_rule(box, 1)
    fine = gauss_grid(box, 2 * cells, t)
    exact = _ex1_exact_dirichlet()
    spec = DictionarySpec(relu_power(2), dim=1)
    delta_coeff = cfg.algorithm.get("delta_coeff", 0.1)

    def problem_for(n):
        return EllipticProblem(
            1, {(1,): 1.0}, 1.0, _ex1_source_dirichlet, box,
            bc=("penalty", delta_coeff * float(n) ** -2),
        )

    def objective(n):
        p = problem_for(n)
        obj = assemble_penalized(p, rule, brule)
        eng = ArgmaxEngine(obj, spec, cfg.search(_search_1d(cells)))
        return obj, eng

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem_for(n),
                            fine_boundary=brule)
        return {"l2": norms["l2"], "a_delta": norms["a_delta"]}

    return Plan(
        name="ex1-dirichlet",
        columns=["l2", "a_delta"],
        algorithm="oga",
        shared_objective=False,
        objective=objective,
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128, 256],
                              [16, 32, 64, 128, 256, 512]),
        metadata={"quadrature": {"kind": "gauss", "cells": cells, "t": t},
                  "delta_schedule": f"{delta_coeff}*n^-2",
                  "dictionary": "relu2-sphere"},
        exact_curve=exact,
    )


def build_ex1_pinn(cfg) -> Plan:
    box = Box([-1.0], [1.0])
    n_f = cfg.quad_int("n_interior", 10_000)
    problem = PinnProblem(
        operator={(0,): 1.0, (2,): -1.0},
        source=_ex1_source_neumann,
        domain=box,
        boundary_trace_orders=(1,),
    )
    interior = monte_carlo(box, n_f, seed=cfg.seed)
    brule = boundary_rule(box, 1)
    objective = assemble_pinn(problem, interior, brule,
                              boundary_weighting="atoms")
    spec = DictionarySpec(relu_power(3), dim=1)
    engine = ArgmaxEngine(objective, spec,
                          cfg.search(_search_1d(n_f // 2)))
    fine = gauss_grid(box, 8000, 2)
    exact = _ex1_exact_neumann()

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine)
        return {"pinn_loss": obj.value(u), "l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex1-pinn",
        columns=["pinn_loss", "l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128],
                              [16, 32, 64, 128, 256, 512, 1024, 2048]),
        metadata={"quadrature": {"kind": "monte-carlo", "n_interior": n_f,
                                 "seed": cfg.seed},
                  "dictionary": "relu3-sphere"},
        exact_curve=exact,
    )


# -- Example 2: three-peak adaptivity benchmark ----------------------------

def _ex2_symbolic():
    x = sp.symbols("x")
    K = sp.Rational(1, 100)
    peaks = (
        sp.Rational(1, 2) * sp.exp(-((x + sp.Rational(1, 2)) ** 2) / K)
        + sp.exp(-(x**2) / K)
        + sp.Rational(1, 2) * sp.exp(-((x - sp.Rational(1, 2)) ** 2) / K)
    )
    u = (1 + x) ** 2 * (1 - x**2) * peaks
    return _sympy_solution_1d(u, x)


def build_ex2_peaks(cfg) -> Plan:
    box = Box([-1.0], [1.0])
    cells = cfg.quad_int("cells", 4000)
    t = cfg.quad_int("t", 2)
    exact, source = _ex2_symbolic()
    problem = EllipticProblem(1, {(1,): 1.0}, 1.0, source, box)
    objective = assemble_energy(problem, gauss_grid(box, cells, t))
    spec = DictionarySpec(relu_power(2), dim=1)
    engine = ArgmaxEngine(objective, spec, cfg.search(_search_1d(cells)))
    fine = gauss_grid(box, 2 * cells, t)

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem)
        return {"l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex2-peaks",
        columns=["l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128],
                              [16, 32, 64, 128, 256, 512]),
        metadata={"quadrature": {"kind": "gauss", "cells": cells, "t": t},
                  "dictionary": "relu2-sphere"},
        breakpoint_domain=(-1.0, 1.0),
        exact_curve=exact,
    )


# -- Example 3: 2-D elliptic on the unit square ----------------------------

def _ex3_exact():
    c = 2.0 * np.pi
    return ExactSolution(
        value=lambda p: np.cos(c * p[:, 0]) * np.cos(c * p[:, 1]),
        partials={
            (1, 0): lambda p: -c * np.sin(c * p[:, 0]) * np.cos(c * p[:, 1]),
            (0, 1): lambda p: -c * np.cos(c * p[:, 0]) * np.sin(c * p[:, 1]),
        },
        order_m=1,
    )


def _ex3_source(p):
    c = 2.0 * np.pi
    return (1.0 + 8.0 * np.pi**2) * np.cos(c * p[:, 0]) * np.cos(c * p[:, 1])


def build_ex3_2d(cfg) -> Plan:
    box = Box([0.0, 0.0], [1.0, 1.0])
    cells = cfg.quad_int("cells", 96 if not cfg.full_scale else 400)
    t = cfg.quad_int("t", 2)
    problem = EllipticProblem(
        1, {(1, 0): 1.0, (0, 1): 1.0}, 1.0, _ex3_source, box
    )
    objective = assemble_energy(problem, gauss_grid(box, cells, t))
    spec = DictionarySpec(relu_power(2), dim=2, c1=-(box.radius + 1),
                          c2=box.radius + 1)
    engine = ArgmaxEngine(objective, spec, cfg.search(SearchConfig(
        mode="grid-refine", n_theta=360, top_k=5, refine_iters=50)))
    fine = gauss_grid(box, 2 * cells, t)
    exact = _ex3_exact()

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem)
        return {"l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex3-2d",
        columns=["l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128],
                              [16, 32, 64, 128, 256, 356]),
        metadata={"quadrature": {"kind": "gauss", "cells": cells, "t": t},
                  "dictionary": "relu2-sphere"},
    )


def build_ex3_2d_pinn(cfg) -> Plan:
    box = Box([0.0, 0.0], [1.0, 1.0])
    n_f = cfg.quad_int("n_interior", 20_000)
    per_edge = cfg.quad_int("n_boundary_per_edge", 2000)
    problem = PinnProblem(
        operator={(0, 0): 1.0, (2, 0): -1.0, (0, 2): -1.0},
        source=_ex3_source,
        domain=box,
        boundary_trace_orders=(1,),
    )
    interior = monte_carlo(box, n_f, seed=cfg.seed)
    brule = boundary_rule(box, per_edge, method="random", seed=cfg.seed + 1)
    objective = assemble_pinn(problem, interior, brule,
                              boundary_weighting="mean")
    spec = DictionarySpec(relu_power(3), dim=2, c1=-(box.radius + 1),
                          c2=box.radius + 1)
    engine = ArgmaxEngine(objective, spec, cfg.search(SearchConfig(
        mode="grid-refine", n_theta=360, top_k=5, refine_iters=50)))
    fine = gauss_grid(box, 192, 2)
    exact = _ex3_exact()

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine)
        return {"pinn_loss": obj.value(u), "l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex3-2d-pinn",
        columns=["pinn_loss", "l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128],
                              [16, 32, 64, 128, 256, 512, 1024, 2048]),
        metadata={"quadrature": {"kind": "monte-carlo", "n_interior": n_f,
                                 "n_boundary": 4 * per_edge, "seed": cfg.seed},
                  "dictionary": "relu3-sphere"},
    )


# -- Example 4: fourth-order equation on (-1, 1)^2 --------------------------

def _ex4_symbolic():
    x, y = sp.symbols("x y")
    u = (x**2 - 1) ** 4 * (y**2 - 1) ** 4
    f = (
        sp.diff(u, x, 4)
        + 2 * sp.diff(u, x, 2, y, 2)
        + sp.diff(u, y, 4)
        + u
    )
    lam = lambda e: _const_or_vals(sp.lambdify([x, y], e, "numpy"))
    exact = ExactSolution(
        value=lam(u),
        partials={
            (1, 0): lam(sp.diff(u, x)),
            (0, 1): lam(sp.diff(u, y)),
            (2, 0): lam(sp.diff(u, x, 2)),
            (1, 1): lam(sp.diff(u, x, 1, y, 1)),
            (0, 2): lam(sp.diff(u, y, 2)),
        },
        order_m=2,
    )
    return exact, lam(f)


def build_ex4_biharmonic(cfg) -> Plan:
    box = Box([-1.0, -1.0], [1.0, 1.0])
    cells = cfg.quad_int("cells", 64 if not cfg.full_scale else 400)
    t = cfg.quad_int("t", 2)
    exact, source = _ex4_symbolic()
    # multinomial weights 2!/alpha! make sum_alpha c_alpha d^(2 alpha) the
    # squared Laplacian in the energy
    problem = EllipticProblem(
        2, {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0}, 1.0, source, box
    )
    objective = assemble_energy(problem, gauss_grid(box, cells, t))
    spec = DictionarySpec(relu_power(3), dim=2, c1=-(box.radius + 1),
                          c2=box.radius + 1)
    engine = ArgmaxEngine(objective, spec, cfg.search(SearchConfig(
        mode="grid-refine", n_theta=360, top_k=5, refine_iters=50)))
    fine = gauss_grid(box, 2 * cells, t)

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem)
        return {"l2": norms["l2"], "energy": norms["energy"]}

    return Plan(
        name="ex4-biharmonic",
        columns=["l2", "energy"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64], [16, 32, 64, 128, 256]),
        metadata={"quadrature": {"kind": "gauss", "cells": cells, "t": t},
                  "dictionary": "relu3-sphere"},
    )


# -- Example 5: 10-D variable-coefficient elliptic ---------------------------

_EX5_D = 10


def _ex5_alpha(p):
    return np.sqrt(1.0 + np.sum((p - 0.5) ** 2, axis=1))


def _ex5_exact():
    partials = {}
    for i in range(_EX5_D):
        alpha = tuple(1 if j == i else 0 for j in range(_EX5_D))
        partials[alpha] = (
            lambda ax: lambda p: -np.pi * np.sin(np.pi * p[:, ax])
        )(i)
    return ExactSolution(
        value=lambda p: np.cos(np.pi * p).sum(axis=1),
        partials=partials,
        order_m=1,
    )


def _ex5_source(p):
    a = _ex5_alpha(p)
    sin = np.sin(np.pi * p)
    cos = np.cos(np.pi * p)
    # f = -div(alpha grad u) + u with u = sum_i cos(pi x_i)
    grad_term = (np.pi * (p - 0.5) * sin).sum(axis=1) / a
    lap_term = a * np.pi**2 * cos.sum(axis=1)
    return grad_term + lap_term + cos.sum(axis=1)


def build_ex5_highdim(cfg) -> Plan:
    d = _EX5_D
    box = Box([0.0] * d, [1.0] * d)
    n_pts = cfg.quad_int("n_interior", 1_000_000 if not cfg.full_scale
                         else 100_000_000)
    coeff_top = {
        tuple(1 if j == i else 0 for j in range(d)): _ex5_alpha
        for i in range(d)
    }
    problem = EllipticProblem(1, coeff_top, 1.0, _ex5_source, box)
    rule = halton(box, n_pts)
    objective = assemble_energy(problem, rule)
    c = box.radius + 1.0
    spec = DictionarySpec(relu_power(2), dim=d, kind="axis", c1=-c, c2=c)
    engine = ArgmaxEngine(objective, spec,
                          cfg.search(SearchConfig(mode="axis-restricted")))
    fine = halton(box, 2 * n_pts, start_index=n_pts + 1)
    exact = _ex5_exact()

    def measure(u, n, obj):
        norms = error_norms(u, exact, fine, problem=problem)
        return {"l2": norms["l2"], "h1": norms["h1"]}

    return Plan(
        name="ex5-highdim",
        columns=["l2", "h1"],
        algorithm="oga",
        shared_objective=True,
        objective=lambda n=None: (objective, engine),
        measure=measure,
        schedule=cfg.schedule([16, 32, 64], [16, 32, 64, 128, 256]),
        metadata={
            "quadrature": {"kind": "halton", "n_interior": n_pts},
            "fine_points": 2 * n_pts,
            "dictionary": "relu2-axis-restricted",
            # crude 1/N proxy for the quasi-Monte-Carlo accuracy limit;
            # rows with errors below ~10x this floor are quadrature-bound
            "quadrature_noise_floor": 1.0 / n_pts,
        },
    )


# -- Example 6: nonlinear Poisson-Boltzmann on the disk ----------------------

def _ex6_sin_factor(r):
    # sin(pi r / 2) / r with the r -> 0 limit pi/2
    out = np.full(r.shape, np.pi / 2)
    nz = r > 1e-12
    out[nz] = np.sin(0.5 * np.pi * r[nz]) / r[nz]
    return out


def _ex6_exact_fields(p):
    r = np.linalg.norm(p, axis=1)
    u = np.cos(0.5 * np.pi * r)
    sf = _ex6_sin_factor(r)
    grad = -0.5 * np.pi * sf[:, None] * p
    return u, grad


def _ex6_source(p, kappa=1.0):
    r = np.linalg.norm(p, axis=1)
    u = np.cos(0.5 * np.pi * r)
    sf = _ex6_sin_factor(r)
    return 0.25 * np.pi**2 * u + 0.5 * np.pi * sf + kappa * np.sinh(u)


def build_ex6_poisson_boltzmann(cfg) -> Plan:
    kappa = 1.0
    disk = Disk(2.0)
    problem = NonlinearEnergyProblem(kappa, _ex6_source, disk)
    spec = DictionarySpec(sigmoid(), dim=2, kind="box",
                          box_low=-20.0, box_high=20.0)
    n_floor = cfg.quad_int("n_floor", 10_000)
    fine_n = cfg.quad_int("n_fine", 1_000_000 if not cfg.full_scale
                          else 4_000_000)
    fine = monte_carlo(disk, fine_n, seed=cfg.seed + 1000)
    fine_obj = assemble_nonlinear(problem, fine)
    u_vals, u_grad = _ex6_exact_fields(fine.points)
    r_exact = fine_obj.value_from_fields(u_vals, u_grad)

    def objective(n):
        n_pts = max(int(math.ceil(n * n / 10.0)), n_floor)
        rule = monte_carlo(disk, n_pts, seed=int(cfg.seed * 100_003 + n))
        obj = assemble_nonlinear(problem, rule)
        eng = ArgmaxEngine(obj, spec, cfg.search(SearchConfig(
            mode="box", box_grid=8, top_k=5, refine_iters=30)))
        return obj, eng

    def measure(u, n, obj):
        return {"rel_gap": relative_gap(fine_obj, u, r_exact)}

    return Plan(
        name="ex6-poisson-boltzmann",
        columns=["rel_gap"],
        algorithm="rga",
        rga_M=20.0,
        shared_objective=False,
        objective=objective,
        measure=measure,
        schedule=cfg.schedule([16, 32, 64, 128, 256, 512],
                              [16, 32, 64, 128, 256, 512, 1024, 2048]),
        metadata={
            "quadrature": {"kind": "monte-carlo", "schedule": "max(n^2/10, 1e4)",
                           "seed": cfg.seed},
            "fine_points": fine_n,
            "dictionary": "sigmoid-box-20",
            "M": 20.0,
        },
    )


PRESETS = {
    "ex1-neumann": build_ex1_neumann,
    "ex1-dirichlet": build_ex1_dirichlet,
    "ex1-pinn": build_ex1_pinn,
    "ex2-peaks": build_ex2_peaks,
    "ex3-2d": build_ex3_2d,
    "ex3-2d-pinn": build_ex3_2d_pinn,
    "ex4-biharmonic": build_ex4_biharmonic,
    "ex5-highdim": build_ex5_highdim,
    "ex6-poisson-boltzmann": build_ex6_poisson_boltzmann,
}
