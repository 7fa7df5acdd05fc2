"""Finite-difference validation of the manufactured solutions and sources.

Every preset's hard-coded source term is checked against a finite-difference
application of its operator to the exact solution, and the exact partials
against finite differences of the value.
"""

import numpy as np
import pytest

from greedypde.cli import ExperimentConfig
from greedypde.presets import (
    PRESETS,
    _ex1_exact_neumann,
    _ex1_source_neumann,
    _ex1_exact_dirichlet,
    _ex1_source_dirichlet,
    _ex2_symbolic,
    _ex3_exact,
    _ex3_source,
    _ex4_symbolic,
    _ex5_alpha,
    _ex5_exact,
    _ex5_source,
    _ex6_exact_fields,
    _ex6_source,
)


def fd_second(fn, pts, axis, h=1e-4):
    e = np.zeros(pts.shape[1])
    e[axis] = h
    return (fn(pts + e) - 2 * fn(pts) + fn(pts - e)) / h**2


def fd_first(fn, pts, axis, h=1e-6):
    e = np.zeros(pts.shape[1])
    e[axis] = h
    return (fn(pts + e) - fn(pts - e)) / (2 * h)


def check_partials(exact, pts, h=1e-6, rtol=1e-6):
    d = pts.shape[1]
    for axis in range(d):
        alpha = tuple(1 if j == axis else 0 for j in range(d))
        if alpha not in exact.partials:
            continue
        fd = fd_first(exact.value, pts, axis, h)
        an = exact.partials[alpha](pts)
        scale = np.maximum(np.abs(an), 1.0)
        assert np.all(np.abs(fd - an) <= rtol * scale)


class TestManufacturedSources:
    def test_ex1_neumann(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.95, 0.95, size=(50, 1))
        exact = _ex1_exact_neumann()
        check_partials(exact, pts)
        residual = -fd_second(exact.value, pts, 0) + exact.value(pts)
        assert np.allclose(residual, _ex1_source_neumann(pts), rtol=1e-6)

    def test_ex1_dirichlet(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.95, 0.95, size=(50, 1))
        exact = _ex1_exact_dirichlet()
        check_partials(exact, pts)
        residual = -fd_second(exact.value, pts, 0) + exact.value(pts)
        assert np.allclose(residual, _ex1_source_dirichlet(pts), rtol=1e-6)
        # Dirichlet trace of the exact solution vanishes
        ends = np.array([[-1.0], [1.0]])
        assert np.allclose(exact.value(ends), 0.0, atol=1e-15)

    def test_ex2_peaks(self):
        exact, source = _ex2_symbolic()
        rng = np.random.default_rng(2)
        pts = rng.uniform(-0.9, 0.9, size=(60, 1))
        check_partials(exact, pts, h=1e-6, rtol=2e-5)
        residual = -fd_second(exact.value, pts, 0, h=1e-5) + exact.value(pts)
        scale = np.maximum(np.abs(source(pts)), 1.0)
        assert np.all(np.abs(residual - source(pts)) <= 1e-4 * scale)

    def test_ex3(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0.05, 0.95, size=(50, 2))
        exact = _ex3_exact()
        check_partials(exact, pts)
        lap = fd_second(exact.value, pts, 0) + fd_second(exact.value, pts, 1)
        residual = -lap + exact.value(pts)
        assert np.allclose(residual, _ex3_source(pts), rtol=1e-5)

    def test_ex4(self):
        exact, source = _ex4_symbolic()
        rng = np.random.default_rng(4)
        pts = rng.uniform(-0.9, 0.9, size=(40, 2))
        check_partials(exact, pts)
        # biharmonic via nested finite-difference Laplacians with one
        # Richardson extrapolation step (plain h^2 truncation is too coarse
        # for the eighth-degree polynomial)
        def biharmonic(h):
            def lap(fn, q):
                out = np.zeros(q.shape[0])
                for axis in range(2):
                    e = np.zeros(2)
                    e[axis] = h
                    out += (fn(q + e) - 2 * fn(q) + fn(q - e)) / h**2
                return out

            bih = np.zeros(pts.shape[0])
            for axis in range(2):
                e = np.zeros(2)
                e[axis] = h
                bih += (lap(exact.value, pts + e) - 2 * lap(exact.value, pts)
                        + lap(exact.value, pts - e)) / h**2
            return bih

        bih = (4.0 * biharmonic(5e-3) - biharmonic(1e-2)) / 3.0
        residual = bih + exact.value(pts)
        scale = np.maximum(np.abs(source(pts)), 1.0)
        assert np.all(np.abs(residual - source(pts)) <= 1e-6 * scale)
        # second partials against finite differences of first partials
        for alpha, fd_pair in (((2, 0), (0, 0)), ((0, 2), (1, 1)),
                               ((1, 1), (0, 1))):
            ax_out, ax_in = fd_pair
            base = exact.partials[tuple(1 if j == ax_in else 0
                                        for j in range(2))]
            fd = fd_first(base, pts, ax_out)
            an = exact.partials[alpha](pts)
            scale = np.maximum(np.abs(an), 1.0)
            assert np.all(np.abs(fd - an) <= 1e-5 * scale)

    def test_ex5(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0.05, 0.95, size=(30, 10))
        exact = _ex5_exact()
        check_partials(exact, pts)
        # f = -div(alpha grad u) + u via finite differences of alpha du/dx_i
        h = 1e-5
        residual = exact.value(pts).copy()
        for axis in range(10):
            e = np.zeros(10)
            e[axis] = h

            def flux(q, ax=axis):
                al = tuple(1 if j == ax else 0 for j in range(10))
                return _ex5_alpha(q) * exact.partials[al](q)

            residual -= (flux(pts + e) - flux(pts - e)) / (2 * h)
        scale = np.maximum(np.abs(_ex5_source(pts)), 1.0)
        assert np.all(np.abs(residual - _ex5_source(pts)) <= 1e-5 * scale)

    def test_ex6(self):
        rng = np.random.default_rng(6)
        r = rng.uniform(0.05, 1.9, size=40)
        th = rng.uniform(0, 2 * np.pi, size=40)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
        vals, grads = _ex6_exact_fields(pts)

        def value(q):
            return _ex6_exact_fields(q)[0]

        for axis in range(2):
            fd = fd_first(value, pts, axis)
            assert np.allclose(fd, grads[:, axis], rtol=1e-6, atol=1e-8)
        lap = fd_second(value, pts, 0, h=1e-4) + fd_second(value, pts, 1, h=1e-4)
        residual = -lap + np.sinh(vals)
        assert np.allclose(residual, _ex6_source(pts), rtol=1e-5, atol=1e-6)

    def test_ex6_gradient_at_origin_finite(self):
        pts = np.array([[0.0, 0.0], [1e-13, 0.0]])
        vals, grads = _ex6_exact_fields(pts)
        assert np.all(np.isfinite(grads))
        assert np.allclose(grads[0], 0.0)

    def test_ex6_neumann_trace_vanishes(self):
        th = np.linspace(0, 2 * np.pi, 17)
        pts = 2.0 * np.column_stack([np.cos(th), np.sin(th)])
        _, grads = _ex6_exact_fields(pts)
        normal = pts / 2.0
        assert np.allclose(np.einsum("ij,ij->i", grads, normal), 0.0, atol=1e-12)


class TestPresetRegistry:
    def test_all_presets_build(self):
        cfg = ExperimentConfig(preset="x", n_schedule=[4, 8])
        for name, builder in PRESETS.items():
            if name == "ex5-highdim":
                cfg5 = ExperimentConfig(preset=name, n_schedule=[4, 8],
                                        quadrature={"n_interior": 2000})
                plan = builder(cfg5)
            else:
                plan = builder(cfg)
            assert plan.name == name
            assert plan.schedule == [4, 8]
            assert plan.columns

    def test_natural_bc_traces_vanish(self):
        # manufactured solutions satisfy the natural boundary conditions
        ends = np.array([[-1.0], [1.0]])
        ex1 = _ex1_exact_neumann()
        assert np.allclose(ex1.partials[(1,)](ends), 0.0, atol=1e-12)
        ex3 = _ex3_exact()
        edge = np.column_stack([np.ones(5), np.linspace(0, 1, 5)])
        assert np.allclose(ex3.partials[(1, 0)](edge), 0.0, atol=1e-12)
        ex5 = _ex5_exact()
        pts = np.random.default_rng(8).uniform(0, 1, size=(5, 10))
        pts[:, 3] = 1.0
        alpha = tuple(1 if j == 3 else 0 for j in range(10))
        assert np.allclose(ex5.partials[alpha](pts), 0.0, atol=1e-12)
