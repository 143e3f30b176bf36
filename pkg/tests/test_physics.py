import numpy as np
import pytest

from flowpinn import autodiff as ad
from flowpinn import model as m
from flowpinn import physics as ph


class TestReynolds:
    def test_values(self):
        assert ph.reynolds(m.DesignPoint(1.0, 0.1)) == pytest.approx(100.0)
        assert ph.reynolds(m.DesignPoint(0.8, 0.08)) == pytest.approx(64.0)

    def test_scale_invariance(self):
        c1 = ph.FluidConstants(nu=0.001)
        c2 = ph.FluidConstants(nu=0.003)
        d1 = m.DesignPoint(0.9, 0.1)
        d2 = m.DesignPoint(0.9 * 3, 0.1)
        assert ph.reynolds(d1, c1) == pytest.approx(ph.reynolds(d2, c2))

    def test_nu_positive(self):
        with pytest.raises(ValueError):
            ph.FluidConstants(nu=0.0)


class TestSheddingFrequency:
    def test_reference_values(self):
        assert ph.shedding_frequency(m.DesignPoint(1.0, 0.1)) == pytest.approx(1.659)
        assert ph.shedding_frequency(m.DesignPoint(0.8, 0.08)) == pytest.approx(1.4109375)

    def test_high_re_limit(self):
        # approaches 0.21 u/d from below as Re grows
        c = ph.FluidConstants(nu=1e-7)
        d = m.DesignPoint(1.0, 0.1)
        assert ph.shedding_frequency(d, c) < 0.21 * 10.0
        assert ph.shedding_frequency(d, c) == pytest.approx(2.1, rel=1e-4)

    def test_below_validity(self):
        with pytest.raises(ph.OutOfValidityError):
            ph.shedding_frequency(m.DesignPoint(0.1, 0.1))

    def test_monotone_in_u_inlet(self):
        us = np.linspace(0.8, 1.0, 21)
        for d_y in (0.08, 0.095, 0.11):
            f = [ph.shedding_frequency(m.DesignPoint(u, d_y)) for u in us]
            assert all(b > a for a, b in zip(f, f[1:]))


class TestResidualValues:
    def test_zero_network(self):
        params = m.init_params(0, m.ModelConfig(trunk_layers=2, trunk_width=8,
                                                ffm_layers=1, ffm_width=4))
        for w, b in params.ffm + params.trunk:
            w[:] = 0.0
            b[:] = 0.0
        tr = ph.residual_at(params, 0.4, 0.1, 1.0, m.DesignPoint(0.9, 0.1))
        assert tr == ph.ResidualTriple(0.0, 0.0, 0.0)

    def test_constant_fields(self):
        x = ad.variable(0.3, tag="x")
        y = ad.variable(0.2, tag="y")
        t = ad.variable(1.0, tag="t")
        # constants that still depend structurally on the leaves
        u = 1.7 + 0.0 * x
        v = -0.4 + 0.0 * y
        p = 2.2 + 0.0 * t
        tr = ph.residual_of_fields(u, v, p, x, y, t)
        assert (tr.r_momentum_x, tr.r_momentum_y, tr.r_continuity) == (0.0, 0.0, 0.0)

    def test_taylor_green_residual_50_points(self):
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(50):
            xv = rng.uniform(0, 2 * np.pi)
            yv = rng.uniform(0, 2 * np.pi)
            tv = rng.uniform(0, 2.0)
            u, v, p, x, y, t = ph.taylor_green_graph(xv, yv, tv)
            tr = ph.residual_of_fields(u, v, p, x, y, t)
            worst = max(worst, abs(tr.r_momentum_x), abs(tr.r_momentum_y),
                        abs(tr.r_continuity))
        assert worst < 1e-8

    def test_continuity_matches_independent_derivatives(self):
        params = m.init_params(9, m.ModelConfig(trunk_layers=3, trunk_width=16,
                                                ffm_layers=2, ffm_width=8))
        d = m.DesignPoint(0.85, 0.09)
        rng = np.random.default_rng(5)
        for _ in range(5):
            xv, yv, tv = rng.uniform(0, 1.5), rng.uniform(0, 0.3), rng.uniform(0, 5)
            tr = ph.residual_at(params, xv, yv, tv, d)
            u, v, _ = m.predict_graph(params, xv, yv, tv, d)
            ux = ad.derivative(u, ad.GradientRequest(("x",), 1))[0]
            vy = ad.derivative(v, ad.GradientRequest(("y",), 1))[0]
            assert abs(tr.r_continuity - (ux + vy)) < 1e-12

    def test_poisoned_params(self):
        params = m.init_params(9, m.ModelConfig(trunk_layers=2, trunk_width=8,
                                                ffm_layers=1, ffm_width=4))
        params.trunk[0][0][0, 0] = np.nan
        with pytest.raises(ph.PoisonedParametersError):
            ph.residual_at(params, 0.4, 0.1, 1.0, m.DesignPoint(0.9, 0.1))


class TestResidualStreamPath:
    def test_stream_residuals_match_pointwise(self):
        params = m.init_params(13, m.ModelConfig(trunk_layers=3, trunk_width=12,
                                                 ffm_layers=2, ffm_width=6))
        pn = m.params_to_nodes(params)
        rng = np.random.default_rng(17)
        n = 12
        X = np.column_stack([rng.uniform(0, 1.5, n), rng.uniform(0, 0.3, n),
                             rng.uniform(0, 5, n), rng.uniform(0.8, 1.0, n),
                             rng.uniform(0.08, 0.11, n)])
        cols = [ad.constant(X[:, i:i + 1]) for i in range(5)]
        rx, ry, rc = ph.residual_nodes(m.graph_forward_with_derivs(pn, *cols))
        for i in range(n):
            tr = ph.residual_at(params, X[i, 0], X[i, 1], X[i, 2],
                                m.DesignPoint(X[i, 3], X[i, 4]))
            assert rx.value[i, 0] == pytest.approx(tr.r_momentum_x, rel=1e-9, abs=1e-10)
            assert ry.value[i, 0] == pytest.approx(tr.r_momentum_y, rel=1e-9, abs=1e-10)
            assert rc.value[i, 0] == pytest.approx(tr.r_continuity, rel=1e-9, abs=1e-10)
