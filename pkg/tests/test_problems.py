import numpy as np
import pytest

from greedypde.dictionary import Expansion, RidgeNeuron, relu_power, sigmoid
from greedypde.errors import (
    CoefficientViolationError,
    NumericError,
    UnsupportedDerivativeError,
)
from greedypde.problems import (
    EllipticProblem,
    NonlinearEnergyProblem,
    PinnProblem,
    assemble_energy,
    assemble_nonlinear,
    assemble_penalized,
    assemble_pinn,
    embed,
    objective_value,
    residual_pairing,
)
from greedypde.quadrature import (
    Box,
    Disk,
    boundary_rule,
    gauss_grid,
    integrate,
    monte_carlo,
)


def ex1_problem(bc="natural"):
    return EllipticProblem(
        order_m=1,
        coeff_top={(1,): 1.0},
        coeff_zero=1.0,
        source=lambda x: (1 + np.pi**2) * np.cos(np.pi * x[:, 0]),
        domain=Box([-1.0], [1.0]),
        bc=bc,
    )


def relu2(omega, bias):
    return RidgeNeuron(np.atleast_1d(np.asarray(omega, float)), bias, relu_power(2))


class TestAssembleEnergy:
    def test_zero_source_zero_value(self):
        p = EllipticProblem(1, {(1,): 1.0}, 1.0, 0.0, Box([-1.0], [1.0]))
        obj = assemble_energy(p, gauss_grid(Box([-1.0], [1.0]), 8, 2))
        assert all(np.allclose(b.target, 0.0) for b in obj.blocks)
        assert objective_value(obj, Expansion([])) == pytest.approx(0.0, abs=1e-15)

    def test_constant_source_target(self):
        p = EllipticProblem(1, {(1,): 1.0}, 1.0, 2.0, Box([-1.0], [1.0]))
        obj = assemble_energy(p, gauss_grid(Box([-1.0], [1.0]), 8, 2))
        zero_block = obj.blocks[0]
        assert zero_block.label == "zero"
        assert np.allclose(zero_block.target, 2.0)

    def test_target_structure(self):
        obj = assemble_energy(ex1_problem(), gauss_grid(Box([-1.0], [1.0]), 16, 2))
        # zero-order target is a0^{-1} f, every derivative block target is 0
        f = (1 + np.pi**2) * np.cos(np.pi * obj.blocks[0].points[:, 0])
        assert np.allclose(obj.blocks[0].target, f)
        for b in obj.blocks[1:]:
            assert np.allclose(b.target, 0.0)

    def test_value_identity_against_direct_quadrature(self):
        # independent path: quadrature of 1/2 (a1 v'^2 + a0 v^2) - f v
        rule = gauss_grid(Box([-1.0], [1.0]), 64, 2)
        p = ex1_problem()
        obj = assemble_energy(p, rule)
        v = Expansion([(1.3, relu2(1.0, 0.4)), (-0.7, relu2(-1.0, 0.9))])

        def integrand(pts):
            from greedypde.dictionary import expansion_partial

            vals = expansion_partial(v, pts, (0,))
            der = expansion_partial(v, pts, (1,))
            f = (1 + np.pi**2) * np.cos(np.pi * pts[:, 0])
            return 0.5 * (der**2 + vals**2) - f * vals

        direct = integrate(rule, integrand)
        assert objective_value(obj, v) == pytest.approx(direct, rel=1e-10)

    def test_coefficient_violation_reports_point(self):
        p = EllipticProblem(
            1, {(1,): lambda x: x[:, 0]}, 1.0, 0.0, Box([-1.0], [1.0])
        )
        with pytest.raises(CoefficientViolationError) as err:
            assemble_energy(p, gauss_grid(Box([-1.0], [1.0]), 8, 2))
        assert err.value.point is not None

    def test_order_key_validation(self):
        with pytest.raises(ValueError):
            EllipticProblem(1, {(2,): 1.0}, 1.0, 0.0, Box([-1.0], [1.0]))


class TestAssemblePenalized:
    def make(self, delta, cells=32):
        p = EllipticProblem(
            1,
            {(1,): 1.0},
            1.0,
            lambda x: (1 + np.pi**2 / 4) * np.cos(np.pi * x[:, 0] / 2),
            Box([-1.0], [1.0]),
            bc=("penalty", delta),
        )
        rule = gauss_grid(Box([-1.0], [1.0]), cells, 2)
        brule = boundary_rule(Box([-1.0], [1.0]), 1)
        return p, assemble_penalized(p, rule, brule)

    def test_boundary_block_shape(self):
        _, obj = self.make(0.5)
        trace = obj.blocks[-1]
        assert trace.label == "trace0"
        assert trace.size == 2
        assert np.allclose(trace.weights, 1.0 / 0.5)

    def test_zero_trace_matches_unpenalized(self):
        p, obj = self.make(0.25)
        unpen = assemble_energy(
            EllipticProblem(1, p.coeff_top, p.coeff_zero, p.source, p.domain),
            gauss_grid(Box([-1.0], [1.0]), 32, 2),
        )
        # bump vanishing at both endpoints: max(0,x)^2 - 4 max(0,x-1/2)^2
        v = Expansion([(1.0, relu2(1.0, 0.0)), (-4.0, relu2(1.0, -0.5))])
        vals = [sum(a * max(0.0, w * x + b) ** 2
                    for a, (w, b) in zip([1.0, -4.0], [(1, 0), (1, -0.5)]))
                for x in (-1.0, 1.0)]
        assert vals[0] == 0.0 and vals[1] == 0.0
        assert objective_value(obj, v) == pytest.approx(
            objective_value(unpen, v), rel=1e-12
        )

    def test_delta_schedule_weight(self):
        n = 16
        delta = 0.1 * n**-2
        _, obj = self.make(delta)
        assert np.allclose(obj.blocks[-1].weights, 256 / 0.1)

    def test_penalty_monotone_in_delta(self):
        v = Expansion([(1.0, relu2(1.0, 0.5))])  # nonzero trace at x = 1
        vals = [objective_value(self.make(d)[1], v) for d in (0.1, 0.01, 0.001)]
        assert vals[0] < vals[1] < vals[2]

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(ValueError):
            self.make(0.0)


class TestAssemblePinn:
    def make_1d(self, n_interior=200, seed=0):
        box = Box([-1.0], [1.0])
        p = PinnProblem(
            operator={(0,): 1.0, (2,): -1.0},
            source=lambda x: (1 + np.pi**2) * np.cos(np.pi * x[:, 0]),
            domain=box,
            boundary_trace_orders=(1,),
        )
        interior = monte_carlo(box, n_interior, seed=seed)
        brule = boundary_rule(box, 1)
        return p, interior, assemble_pinn(p, interior, brule,
                                          boundary_weighting="atoms")

    def test_zero_model_mse(self):
        p, interior, obj = self.make_1d()
        f = (1 + np.pi**2) * np.cos(np.pi * interior.points[:, 0])
        expected = float(np.mean(f**2))
        assert objective_value(obj, Expansion([])) == pytest.approx(expected)

    def test_value_matches_paper_formula(self):
        # MSE_f + MSE_bc with MSE_bc = |v'(-1)|^2 + |v'(1)|^2
        p, interior, obj = self.make_1d()
        g = RidgeNeuron(np.array([1.0]), 0.3, relu_power(3))
        v = Expansion([(0.8, g)])
        x = interior.points[:, 0]
        t = x + 0.3
        vv = 0.8 * np.maximum(t, 0) ** 3
        vxx = 0.8 * 6 * np.maximum(t, 0)
        f = (1 + np.pi**2) * np.cos(np.pi * x)
        mse_f = float(np.mean((-vxx + vv - f) ** 2))
        dv = lambda s: 0.8 * 3 * max(0.0, s + 0.3) ** 2
        mse_bc = (-dv(-1.0)) ** 2 + dv(1.0) ** 2
        assert objective_value(obj, v) == pytest.approx(mse_f + mse_bc, rel=1e-12)

    def test_exact_solution_of_identity_operator(self):
        # operator L = id admits an expansion as exact solution
        box = Box([-1.0], [1.0])
        g = RidgeNeuron(np.array([1.0]), 0.2, relu_power(3))
        exact = Expansion([(1.5, g)])
        p = PinnProblem(
            operator={(0,): 1.0},
            source=lambda x: 1.5 * np.maximum(x[:, 0] + 0.2, 0.0) ** 3,
            domain=box,
            boundary_trace_orders=(),
        )
        interior = monte_carlo(box, 100, seed=1)
        obj = assemble_pinn(p, interior, None)
        assert objective_value(obj, exact) == pytest.approx(0.0, abs=1e-22)

    def test_missing_boundary_rule_rejected(self):
        box = Box([-1.0], [1.0])
        p = PinnProblem({(2,): -1.0}, 0.0, box, boundary_trace_orders=(1,))
        with pytest.raises(ValueError):
            assemble_pinn(p, monte_carlo(box, 10, 0), None)

    def test_2d_mean_weighting(self):
        box = Box([0.0, 0.0], [1.0, 1.0])
        p = PinnProblem(
            operator={(0, 0): 1.0, (2, 0): -1.0, (0, 2): -1.0},
            source=1.0,
            domain=box,
            boundary_trace_orders=(1,),
        )
        interior = monte_carlo(box, 300, seed=2)
        brule = boundary_rule(box, 50, method="random", seed=3)
        obj = assemble_pinn(p, interior, brule, boundary_weighting="mean")
        # v = 0: value = mean(f^2) + 0
        assert objective_value(obj, Expansion([])) == pytest.approx(1.0)


class TestEmbed:
    def test_layout_zero_then_derivative_blocks(self):
        p = EllipticProblem(1, {(1,): 1.0}, 1.0, 0.0, Box([-1.0], [1.0]))
        rule = gauss_grid(Box([-1.0], [1.0]), 1, 0)  # 1 cell, 1 node
        obj = assemble_energy(p, rule)
        # hand-build a 2-point rule
        from greedypde.quadrature import QuadratureRule

        rule2 = QuadratureRule(np.array([[0.1], [0.6]]), np.array([1.0, 1.0]),
                               Box([-1.0], [1.0]))
        obj = assemble_energy(p, rule2)
        g = relu2(1.0, 0.0)
        vec = embed(obj, g)
        expected = [0.01, 0.36, 0.2, 1.2]  # [v(x1), v(x2), v'(x1), v'(x2)]
        assert np.allclose(vec, expected)

    def test_linearity_in_output_scale(self):
        obj = assemble_energy(ex1_problem(), gauss_grid(Box([-1.0], [1.0]), 8, 2))
        g = relu2(1.0, 0.3)
        v1 = embed(obj, g)
        u = Expansion([(2.5, g)])
        coords = np.concatenate(obj.coords(u))
        assert np.allclose(coords, 2.5 * v1)

    def test_inactive_neuron_embeds_to_zero(self):
        obj = assemble_energy(ex1_problem(), gauss_grid(Box([-1.0], [1.0]), 8, 2))
        g = relu2(1.0, -2.0)  # omega x + b <= -1 on [-1, 1]
        assert np.allclose(embed(obj, g), 0.0)

    def test_smoothness_gate(self):
        box = Box([-1.0], [1.0])
        p = PinnProblem({(2,): -1.0, (0,): 1.0}, 0.0, box, ())
        obj = assemble_pinn(p, monte_carlo(box, 10, 0), None)
        with pytest.raises(UnsupportedDerivativeError):
            embed(obj, relu2(1.0, 0.0))  # degree 2 < max order 2 + 1


class TestPairingAndValues:
    def test_pairing_at_zero_model(self):
        rule = gauss_grid(Box([-1.0], [1.0]), 32, 2)
        obj = assemble_energy(ex1_problem(), rule)
        g = relu2(1.0, 0.5)
        f = (1 + np.pi**2) * np.cos(np.pi * rule.points[:, 0])
        gv = np.maximum(rule.points[:, 0] + 0.5, 0.0) ** 2
        expected = -float(rule.weights @ (f * gv))
        assert residual_pairing(obj, Expansion([]), g) == pytest.approx(expected)

    def test_pairing_vanishes_at_projected_minimizer(self):
        from greedypde.greedy import project

        rule = gauss_grid(Box([-1.0], [1.0]), 32, 2)
        obj = assemble_energy(ex1_problem(), rule)
        gs = [relu2(1.0, 0.1), relu2(-1.0, 0.7), relu2(1.0, -0.4)]
        rows = [embed(obj, g) for g in gs]
        w = np.concatenate([b.weights for b in obj.blocks])
        y = np.concatenate([b.target for b in obj.blocks])
        coeffs = project(rows, y, w)
        u = Expansion(list(zip(coeffs, gs)))
        scale = np.sqrt(obj.target_norm2)
        for g in gs:
            assert abs(residual_pairing(obj, u, g)) <= 1e-9 * scale

    def test_value_difference_identity(self):
        rule = gauss_grid(Box([-1.0], [1.0]), 64, 2)
        obj = assemble_energy(ex1_problem(), rule)
        rng = np.random.default_rng(5)
        v1 = Expansion([(rng.normal(), relu2(s, rng.uniform(-1, 1)))
                        for s in (1.0, -1.0)])
        v2 = Expansion([(rng.normal(), relu2(s, rng.uniform(-1, 1)))
                        for s in (1.0, -1.0, 1.0)])
        w = np.concatenate([b.weights for b in obj.blocks])
        y = np.concatenate([b.target for b in obj.blocks])
        j1 = np.concatenate(obj.coords(v1))
        j2 = np.concatenate(obj.coords(v2))
        direct = 0.5 * float(w @ (j1 - y) ** 2) - 0.5 * float(w @ (j2 - y) ** 2)
        viaval = objective_value(obj, v1) - objective_value(obj, v2)
        assert viaval == pytest.approx(direct, rel=1e-10)

    def test_biharmonic_multinomial_form(self):
        # a(u, u) = int u_xx^2 + 2 u_xy^2 + u_yy^2 for u = x^2 y^2 equals
        # 32/5 + 128/9 on (-1,1)^2 (hand computed)
        box = Box([-1.0, -1.0], [1.0, 1.0])
        p = EllipticProblem(
            2,
            {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0},
            1.0,
            0.0,
            box,
        )
        rule = gauss_grid(box, 8, 2)
        obj = assemble_energy(p, rule)
        pts = rule.points
        fields = {
            (0, 0): pts[:, 0] ** 2 * pts[:, 1] ** 2,
            (2, 0): 2 * pts[:, 1] ** 2,
            (1, 1): 4 * pts[:, 0] * pts[:, 1],
            (0, 2): 2 * pts[:, 0] ** 2,
        }
        top = 0.0
        for b in obj.blocks:
            if b.label == "zero":
                continue
            alpha = b.terms[0][0]
            top += float(b.weights @ fields[alpha] ** 2)
        assert top == pytest.approx(32 / 5 + 128 / 9, rel=1e-12)


class TestNonlinear:
    def make(self, n=2000, kappa=1.0, source=0.0):
        p = NonlinearEnergyProblem(kappa, source, Disk(2.0))
        rule = monte_carlo(Disk(2.0), n, seed=9)
        return assemble_nonlinear(p, rule)

    def test_zero_model_value(self):
        obj = self.make(kappa=1.0)
        assert obj.value(Expansion([])) == pytest.approx(np.pi * 4.0, rel=1e-12)

    def test_zero_gradient_pairing_without_source(self):
        obj = self.make()
        g = RidgeNeuron(np.array([0.3, -0.2]), 0.1, sigmoid())
        assert obj.pairing(Expansion([]), g) == pytest.approx(0.0, abs=1e-14)

    def test_gradient_pairing_matches_finite_difference(self):
        obj = self.make(n=500, source=lambda x: np.cos(x[:, 0]))
        rng = np.random.default_rng(3)
        u = Expansion([
            (rng.normal(), RidgeNeuron(rng.normal(size=2), rng.normal(), sigmoid()))
            for _ in range(3)
        ])
        g = RidgeNeuron(rng.normal(size=2), rng.normal(), sigmoid())
        eps = 1e-6
        up = Expansion(u.terms + [(eps, g)])
        um = Expansion(u.terms + [(-eps, g)])
        fd = (obj.value(up) - obj.value(um)) / (2 * eps)
        pairing = obj.pairing(u, g)
        assert pairing == pytest.approx(fd, rel=1e-5)

    def test_midpoint_convexity(self):
        obj = self.make(n=400, source=lambda x: x[:, 0])
        rng = np.random.default_rng(8)

        def rand_expansion():
            return Expansion([
                (rng.normal(),
                 RidgeNeuron(rng.normal(size=2), rng.normal(), sigmoid()))
                for _ in range(2)
            ])

        for _ in range(10):
            u1, u2 = rand_expansion(), rand_expansion()
            mid = Expansion([(0.5 * a, g) for a, g in u1.terms]
                            + [(0.5 * a, g) for a, g in u2.terms])
            lhs = obj.value(mid)
            rhs = 0.5 * obj.value(u1) + 0.5 * obj.value(u2)
            assert lhs <= rhs + 1e-10 * max(abs(rhs), 1.0)

    def test_cosh_overflow_guard(self):
        obj = self.make(n=50)
        g = RidgeNeuron(np.array([0.0, 0.0]), 5.0, sigmoid())  # constant ~1
        huge = Expansion([(2000.0, g)])
        with pytest.raises(NumericError):
            obj.value(huge)

    def test_kappa_positive_required(self):
        with pytest.raises(ValueError):
            NonlinearEnergyProblem(0.0, 0.0, Disk(1.0))
