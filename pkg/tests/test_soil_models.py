"""Tests for retention curves, conductivity functions and the Feddes sink."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from drw_richards.errors import ParameterError
from drw_richards.models import CompositeParams, FeddesParams, GardnerParams, HaverkampParams, VanGenuchtenParams
from drw_richards.services.benchmarks import loam
from drw_richards.services.soil_models import (
    feddes_sink,
    feddes_stress,
    hydraulic_conductivity,
    moisture_capacity,
    moisture_capacity_detailed,
    parse_soil,
    water_content,
)

HAVERKAMP = HaverkampParams(
    K_s=0.00944, theta_s=0.287, theta_r=0.075,
    A_h=1.175e6, gamma_h=4.74, alpha_h=1.611e6, beta_h=3.96,
)
GARDNER = GardnerParams(K_s=1.1, theta_s=0.5, theta_r=0.0, alpha_g=0.1)

MODELS = [
    (HAVERKAMP, np.array([-60.0, -30.0, -10.0, -5.0])),
    (loam(), np.array([-5.0, -1.0, -0.3, -0.05])),
    (GARDNER, np.array([-15.0, -5.0, -1.0, -0.1])),
]


class TestRetention:
    @pytest.mark.parametrize("model,psi", MODELS)
    def test_saturated_plateau(self, model, psi):
        """theta and K reach theta_s and K_s at and above zero head."""
        heads = np.array([0.0, 0.5, 3.0])
        assert_allclose(water_content(model, heads), model.theta_s)
        assert_allclose(hydraulic_conductivity(model, heads), model.K_s)

    @pytest.mark.parametrize("model,psi", MODELS)
    def test_monotone_and_bounded(self, model, psi):
        """theta and K increase with head and stay inside their physical ranges."""
        heads = np.linspace(psi.min() * 2.0, 0.0, 400)
        theta = water_content(model, heads)
        K = hydraulic_conductivity(model, heads)
        assert np.all(np.diff(theta) >= 0)
        assert np.all(np.diff(K) >= 0)
        assert np.all((theta >= model.theta_r) & (theta <= model.theta_s))
        assert np.all((K > 0) & (K <= model.K_s))

    @pytest.mark.parametrize("model,psi", MODELS)
    def test_capacity_matches_finite_difference(self, model, psi):
        """Analytical dtheta/dpsi agrees with a central difference."""
        h = 1e-4 * np.abs(psi)
        fd = (water_content(model, psi + h) - water_content(model, psi - h)) / (2.0 * h)
        assert_allclose(moisture_capacity(model, psi), fd, rtol=1e-5)

    def test_capacity_flags_saturation_kink(self):
        """Heads at or above zero are marked as one-sided derivatives."""
        result = moisture_capacity_detailed(loam(), np.array([-1.0, 0.0, 0.2]))
        assert result.one_sided.tolist() == [False, True, True]

    def test_gardner_closed_form(self):
        """Gardner theta and K are exponential in suction."""
        psi = np.array([-2.0])
        assert_allclose(hydraulic_conductivity(GARDNER, psi), 1.1 * np.exp(-0.2))
        assert_allclose(water_content(GARDNER, psi), 0.5 * np.exp(-0.2))


class TestCompositeAndParsing:
    def test_composite_splits_curves(self):
        """A composite soil takes theta from one model and K from the other."""
        retention = VanGenuchtenParams(K_s=1.1, theta_s=0.5, theta_r=0.0, alpha_vg=0.1, n_vg=2.0)
        soil = CompositeParams(retention=retention, conductivity=GARDNER)
        psi = np.array([-10.0, -1.0])
        assert_allclose(water_content(soil, psi), water_content(retention, psi))
        assert_allclose(hydraulic_conductivity(soil, psi), hydraulic_conductivity(GARDNER, psi))

    def test_parse_soil_dispatches_on_kind(self):
        """The kind field selects the parameter model."""
        soil = parse_soil({"kind": "gardner", "K_s": 1.0, "theta_s": 0.4, "theta_r": 0.1, "alpha_g": 0.5})
        assert isinstance(soil, GardnerParams)

    def test_parse_soil_rejects_inverted_moisture_bounds(self):
        """theta_r must be below theta_s."""
        with pytest.raises(ParameterError):
            parse_soil({"kind": "gardner", "K_s": 1.0, "theta_s": 0.1, "theta_r": 0.4, "alpha_g": 0.5})

    def test_connectivity_defaults_to_n(self):
        """Without an explicit exponent the classical Mualem form is used."""
        assert loam().connectivity == pytest.approx(1.56)


class TestFeddes:
    def test_stress_ramp(self):
        """Full uptake between psi_2 and psi_3, linear ramps outside, none beyond the ends."""
        params = FeddesParams(S_max=2e-8)
        psi = np.array([0.0, -0.1, -1.0, -42.5, -80.0, -100.0])
        assert_allclose(feddes_stress(params, psi), [0.0, 0.0, 1.0, 0.5, 0.0, 0.0])
        assert_allclose(feddes_sink(params, np.array([-1.0])), [2e-8])

    def test_thresholds_must_be_ordered(self):
        """Unordered thresholds are rejected."""
        with pytest.raises(ValueError):
            FeddesParams(psi_2=-6.0, psi_3=-5.0)
