import numpy as np
import pytest

from normflow.flows import (
    DegenerateFieldError,
    FlowSpec,
    FlowSpecError,
    NonPositiveFieldError,
    conserved_norm,
    lambda_value,
    normalize,
    rhs,
    validate_pairing,
)
from normflow.geometry import (
    BALL,
    CIRCLE,
    INTERVAL,
    RECTANGLE,
    TORUS,
    build_geometry,
    integrate,
)


def interval(res=512):
    return build_geometry(INTERVAL, 1.0, 1, res)


def circle(length=2 * np.pi, res=256):
    return build_geometry(CIRCLE, length, 1, res)


class TestFlowSpec:
    def test_conserved_exponents(self):
        assert FlowSpec("A", 3.0, 1).q == 3.0
        assert FlowSpec("B", 3.0, 1).q == 2.0
        assert FlowSpec("C", 3.0, 1, subcritical_override=True).q == 4.0

    def test_flow_a_needs_p_above_one(self):
        with pytest.raises(FlowSpecError, match="p > 1"):
            FlowSpec("A", 1.0, 1)

    def test_flow_b_subcritical_bound(self):
        FlowSpec("B", 3.0, 1)            # no bound below dimension 3
        FlowSpec("B", 4.9, 3)            # (n+2)/(n-2) = 5
        with pytest.raises(FlowSpecError, match="subcritical"):
            FlowSpec("B", 5.0, 3)

    def test_flow_b_admits_linear_case(self):
        assert FlowSpec("B", 1.0, 1).q == 2.0

    def test_flow_c_needs_override_below_critical(self):
        FlowSpec("C", 5.0, 3)            # critical power admitted
        FlowSpec("C", 7.0, 3)
        with pytest.raises(FlowSpecError, match="override"):
            FlowSpec("C", 3.0, 3)
        FlowSpec("C", 3.0, 3, subcritical_override=True)
        with pytest.raises(FlowSpecError, match="override"):
            FlowSpec("C", 3.0, 1)        # everything is subcritical below n=3

    def test_unknown_variant(self):
        with pytest.raises(FlowSpecError, match="variant"):
            FlowSpec("D", 2.0, 1)

    def test_pairing(self):
        with pytest.raises(FlowSpecError, match="periodic"):
            validate_pairing(FlowSpec("A", 2.0, 1), interval())
        with pytest.raises(FlowSpecError, match="Dirichlet"):
            validate_pairing(FlowSpec("B", 3.0, 1), circle())
        with pytest.raises(FlowSpecError, match="dimension"):
            validate_pairing(FlowSpec("B", 3.0, 2), interval())
        validate_pairing(FlowSpec("A", 2.0, 1), circle())
        validate_pairing(FlowSpec("B", 3.0, 1), interval())


class TestLambdaValue:
    def test_flow_a_constant_is_zero(self):
        geom = circle()
        spec = FlowSpec("A", 2.0, 1)
        u = normalize(spec, geom, np.ones(geom.node_count))
        assert lambda_value(spec, geom, u) == pytest.approx(0.0, abs=1e-12)

    def test_flow_b_analytic(self):
        # u = sqrt(2) sin(pi x): int |grad u|^2 = pi^2, int u^4 = 3/2
        geom = interval()
        u = np.sqrt(2) * np.sin(np.pi * geom.coords)
        lam = lambda_value(FlowSpec("B", 3.0, 1), geom, u)
        assert lam == pytest.approx(2 * np.pi**2 / 3, rel=1e-4)

    def test_flow_c_analytic(self):
        # p int u^2 |grad u|^2 / int u^6 = 3 (pi^2/2) / (5/2) = 3 pi^2 / 5
        geom = interval()
        u = np.sqrt(2) * np.sin(np.pi * geom.coords)
        lam = lambda_value(FlowSpec("C", 3.0, 1, subcritical_override=True), geom, u)
        assert lam == pytest.approx(3 * np.pi**2 / 5, rel=1e-4)

    def test_rejects_nonpositive(self):
        geom = interval(16)
        u = np.linspace(-0.1, 1.0, geom.node_count)
        with pytest.raises(NonPositiveFieldError):
            lambda_value(FlowSpec("B", 3.0, 1), geom, u)

    def test_degenerate_denominator(self):
        geom = interval(16)
        u = np.full(geom.node_count, 1e-200)
        with pytest.raises(DegenerateFieldError):
            lambda_value(FlowSpec("B", 3.0, 1), geom, u)


class TestRhs:
    def test_flow_a_constant_steady(self):
        geom = circle()
        spec = FlowSpec("A", 3.0, 1)
        c = (2 * np.pi) ** (-1.0 / 3.0)
        out = rhs(spec, geom, np.full(geom.node_count, c), 0.0)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_flow_b_linear_eigen_residual(self):
        # continuum eigenpair: residual is exactly (pi^2 - mu1_h) u, -> 0 as h -> 0
        spec = FlowSpec("B", 1.0, 1)
        prev = None
        for res in (64, 128, 256):
            geom = interval(res)
            h = geom.spacing_h[0]
            u = np.sqrt(2) * np.sin(np.pi * geom.coords)
            out = rhs(spec, geom, u, np.pi**2)
            mu_h = 2.0 / h**2 * (1 - np.cos(np.pi * h))
            np.testing.assert_allclose(out, (np.pi**2 - mu_h) * u, atol=1e-8)
            peak = np.max(np.abs(out))
            if prev is not None:
                assert peak < prev / 3.5  # second-order shrinkage
            prev = peak

    def test_flow_c_center_value(self):
        # independent oracle: -pi^2 u + lambda u^3 at u = sqrt(2) with
        # lambda = 3 pi^2/5 gives sqrt(2) pi^2 / 5 = 2.791544 in the limit
        expected = np.sqrt(2) * np.pi**2 / 5
        assert expected == pytest.approx(2.7915457, abs=1e-6)
        spec = FlowSpec("C", 3.0, 1, subcritical_override=True)
        errors = []
        for res in (128, 256, 512):
            geom = interval(res)
            u = np.sqrt(2) * np.sin(np.pi * geom.coords)
            lam = lambda_value(spec, geom, u)
            out = rhs(spec, geom, u, lam)
            center = out[geom.node_count // 2]
            assert geom.coords[geom.node_count // 2] == pytest.approx(0.5)
            errors.append(abs(center - expected))
        assert errors[-1] < 1e-3
        assert errors[-1] < errors[0] / 10

    def test_flow_a_p2_matches_flow_b_p1(self, rng):
        geom = circle(res=64)
        u = 1.0 + 0.5 * rng.random(geom.node_count)
        lam = lambda_value(FlowSpec("A", 2.0, 1), geom, normalize(FlowSpec("A", 2.0, 1), geom, u))
        a = rhs(FlowSpec("A", 2.0, 1), geom, u, lam)
        b = rhs(FlowSpec("B", 1.0, 1), geom, u, lam)
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonpositive_for_flow_a(self):
        geom = circle(res=16)
        u = np.zeros(geom.node_count)
        with pytest.raises(NonPositiveFieldError):
            rhs(FlowSpec("A", 3.0, 1), geom, u, 1.0)


class TestNormalize:
    def test_idempotent(self, rng):
        geom = interval(64)
        spec = FlowSpec("B", 3.0, 1)
        u = normalize(spec, geom, 1.0 + rng.random(geom.node_count))
        again = normalize(spec, geom, u)
        np.testing.assert_allclose(again, u, rtol=1e-14)

    def test_sine_rescale(self):
        geom = interval()
        u = 2.0 * np.sin(np.pi * geom.coords)
        out = normalize(FlowSpec("B", 3.0, 1), geom, u)
        np.testing.assert_allclose(out, np.sqrt(2) * np.sin(np.pi * geom.coords), rtol=1e-10)

    def test_constant_flow_a(self):
        geom = build_geometry(CIRCLE, 1.0, 1, 64)
        out = normalize(FlowSpec("A", 3.0, 1), geom, np.full(64, 5.0))
        np.testing.assert_allclose(out, 1.0, rtol=1e-13)

    def test_zero_field_degenerate(self):
        geom = interval(16)
        with pytest.raises(DegenerateFieldError):
            normalize(FlowSpec("B", 3.0, 1), geom, np.zeros(geom.node_count))


class TestConservedNorm:
    def test_normalized_is_one(self, rng):
        geom = interval(64)
        for variant, p in (("A", 2.0), ("B", 3.0), ("C", 3.0)):
            spec = FlowSpec(variant, p, 1, subcritical_override=True)
            geometry = circle(res=64) if variant == "A" else geom
            u = normalize(spec, geometry, 1.0 + rng.random(geometry.node_count))
            assert conserved_norm(spec, geometry, u) == pytest.approx(1.0, abs=1e-13)

    def test_analytic_values(self):
        geom = interval()
        u = np.sqrt(2) * np.sin(np.pi * geom.coords)
        # trigonometric sums make both quadratures exact
        assert conserved_norm(FlowSpec("B", 3.0, 1), geom, u) == pytest.approx(1.0, abs=1e-12)
        spec_c = FlowSpec("C", 3.0, 1, subcritical_override=True)
        assert conserved_norm(spec_c, geom, u) == pytest.approx(1.5, abs=1e-12)


class TestMultiplierExactness:
    """d/dt integrate(u^q) vanishes to rounding for the discrete multiplier."""

    def _drift_rate(self, spec, geom, u):
        lam = lambda_value(spec, geom, u)
        du = rhs(spec, geom, u, lam)
        rate = integrate(geom, spec.q * u ** (spec.q - 1.0) * du)
        scale = integrate(geom, spec.q * u ** (spec.q - 1.0) * np.abs(du)) + 1e-300
        return abs(rate) / scale

    def test_flow_a_periodic(self, rng):
        for geom in (circle(res=96), build_geometry(TORUS, (2 * np.pi, 4.0), 2, 24)):
            spec = FlowSpec("A", 2.5, geom.dimension_n)
            u = normalize(spec, geom, 1.0 + 0.4 * rng.random(geom.node_count))
            assert self._drift_rate(spec, geom, u) < 1e-10

    def test_flows_b_c_dirichlet(self, rng):
        geoms = (
            interval(128),
            build_geometry(RECTANGLE, (1.0, 1.3), 2, 24),
            build_geometry(BALL, 1.0, 3, 96),
        )
        for geom in geoms:
            n = geom.dimension_n
            for variant, p in (("B", 1.7), ("C", 7.0 if n == 3 else 3.0)):
                spec = FlowSpec(variant, p, n, subcritical_override=True)
                u = 0.2 + rng.random(geom.node_count)
                assert self._drift_rate(spec, geom, u) < 1e-10


class TestScalingCovariance:
    @pytest.mark.parametrize("variant,p,power", [("B", 3.0, -2.0), ("C", 3.0, -2.0), ("A", 3.0, 2.0)])
    def test_lambda_scaling(self, variant, p, power, rng):
        # lambda(c u) = c^{1-p} lambda(u) for B and C; c^2 for A (pure energy)
        geom = circle(res=64) if variant == "A" else interval(64)
        spec = FlowSpec(variant, p, 1, subcritical_override=True)
        u = 0.5 + rng.random(geom.node_count)
        base = lambda_value(spec, geom, u)
        for c in (0.5, 2.0, 3.7):
            expected = c**power * base if variant != "A" else c**2 * base
            assert lambda_value(spec, geom, c * u) == pytest.approx(expected, rel=1e-12)
