"""Fixed-step schemes and the adaptive reference flow."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mep_string.errors import DomainEscape, StepLimit
from mep_string.experiments import TRUNCATION_DTS, truncation_slope
from mep_string.geometry import StringOfImages
from mep_string.integrator import (
    FlowOracleConfig,
    IntegratorSpec,
    advance_string,
    reference_flow,
    reference_flow_checkpoints,
    step,
)
from mep_string.potential import DoubleWell, QuadraticWell

TIGHT = FlowOracleConfig(1e-12, 1e-12)


def double_well_u(u0, t, a=1.0):
    """Closed form of u' = -4a u (u^2 - 1): w = u^2 solves a logistic equation."""
    w = 1.0 / (1.0 + (1.0 / u0 ** 2 - 1.0) * math.exp(-8.0 * a * t))
    return math.copysign(math.sqrt(w), u0)


class TestSchemes:
    @pytest.mark.parametrize("scheme, factor", [
        ("euler", lambda h: 1 - h),
        ("heun", lambda h: 1 - h + h * h / 2),
        ("rk4", lambda h: 1 - h + h ** 2 / 2 - h ** 3 / 6 + h ** 4 / 24),
    ])
    def test_quadratic_amplification(self, scheme, factor):
        x = np.array([[1.0, -2.0], [0.5, 0.25]])
        np.testing.assert_allclose(step(IntegratorSpec(scheme, 0.1), QuadraticWell(), x), factor(0.1) * x,
                                   rtol=1e-15)

    def test_order_q(self):
        assert [IntegratorSpec(s).order_q for s in ("euler", "heun", "rk4")] == [2, 3, 5]

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            IntegratorSpec("leapfrog")
        with pytest.raises(ValueError):
            IntegratorSpec("euler", 0.0)

    def test_domain_escape(self):
        with pytest.raises(DomainEscape):
            step(IntegratorSpec("euler", 1.0), DoubleWell(), [[1.9, 0.0]])

    def test_advance_pins_endpoints(self):
        pts = np.array([[-0.9, 0.01], [0.0, 0.3], [0.9, -0.02]])
        y = advance_string(IntegratorSpec("euler", 0.01), DoubleWell(), StringOfImages(pts))
        assert np.array_equal(y.images[0], pts[0]) and np.array_equal(y.images[-1], pts[-1])
        assert not np.array_equal(y.images[1], pts[1])


class TestReferenceFlow:
    @given(st.floats(0.0, 3.0), st.floats(-3, 3), st.floats(-3, 3))
    def test_quadratic_exponential_decay(self, t, a, b):
        x = np.array([a, b])
        np.testing.assert_allclose(reference_flow(TIGHT, QuadraticWell(), x, t), math.exp(-t) * x,
                                   rtol=1e-9, atol=1e-12)

    @given(st.floats(0.05, 1.5), st.floats(0.0, 2.0))
    def test_double_well_closed_form(self, u0, t):
        y = reference_flow(TIGHT, DoubleWell(), [u0, 0.5], t)
        assert y[0] == pytest.approx(double_well_u(u0, t), abs=1e-9)
        assert y[1] == pytest.approx(0.5 * math.exp(-2.0 * t), abs=1e-10)

    def test_checkpoints_match_single_calls(self):
        x = np.array([[0.3, 0.4], [-0.5, 0.2]])
        times = [0.0, 0.5, 1.0, 2.0]
        states = reference_flow_checkpoints(TIGHT, DoubleWell(), x, times)
        assert len(states) == 4
        np.testing.assert_array_equal(states[0], x)
        for t, s in zip(times, states):
            np.testing.assert_allclose(s, reference_flow(TIGHT, DoubleWell(), x, t), atol=1e-10)

    def test_step_limit(self):
        with pytest.raises(StepLimit):
            reference_flow(FlowOracleConfig(1e-12, 1e-12, max_substeps=3), DoubleWell(), [0.3, 0.4], 5.0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            reference_flow(TIGHT, QuadraticWell(), [1.0, 1.0], -1.0)


class TestTruncationOrder:
    @pytest.mark.parametrize("scheme", ["euler", "heun", "rk4"])
    def test_local_error_slope(self, scheme):
        """Assumption (truncation error): one-step error scales as dt^q."""
        rng = np.random.default_rng(0)
        cases = (
            (QuadraticWell(), rng.uniform(-2, 2, size=(20, 2))),
            # near the path; far out the double well is stiff and dt = 0.1 is not asymptotic
            (DoubleWell(), rng.uniform([-1.1, -0.5], [1.1, 0.5], size=(20, 2))),
        )
        for p, pts in cases:
            slope, _ = truncation_slope(p, scheme, TRUNCATION_DTS[scheme], pts)
            assert abs(slope - IntegratorSpec(scheme).order_q) <= 0.1, \
                f"Assumption (truncation error): {scheme} slope {slope:.3f} on {p.name}"
