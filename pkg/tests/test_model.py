import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from optopulse.model import (DomainError, FeasibilityInput, ScenarioError, SystemParams, derive_g0,
                             feasibility_report, params_from_dict, params_to_dict, pulse_power_requirement,
                             thermal_occupation)

LAB = FeasibilityInput(nu_si=2 * math.pi * 1e6, m_eff=5e-11, cavity_length=1e-2, wavelength=1064e-9)
MICRO = FeasibilityInput(nu_si=2 * math.pi * 1e4, m_eff=1e-10, cavity_length=4 * 1064e-9, wavelength=1064e-9)


def test_defaults_and_regime():
    p = SystemParams()
    assert p.nu == 1.0
    assert SystemParams(g0=0.001).regime == "linear"
    assert SystemParams(g0=0.3).regime == "nonlinear"
    assert SystemParams(g0=0.05, linear_threshold=0.1).regime == "linear"


@pytest.mark.parametrize("field", ["nu", "kappa", "gamma_m", "nbar_env"])
def test_invalid_params_rejected(field):
    with pytest.raises(DomainError):
        SystemParams(**{field: -1.0})


def test_lab_cavity_coupling_near_75_hz():
    assert derive_g0(LAB) == pytest.approx(75, rel=0.10)


def test_microcavity_coupling_order_of_magnitude():
    assert 1e5 < derive_g0(MICRO) < 1e7
    assert round(math.log10(derive_g0(MICRO))) == 6


def test_quadrupled_mass_halves_coupling():
    heavy = FeasibilityInput(LAB.nu_si, 4 * LAB.m_eff, LAB.cavity_length, LAB.wavelength)
    assert derive_g0(heavy) == pytest.approx(derive_g0(LAB) / 2, rel=1e-12)


@given(st.floats(0.1, 10.0))
def test_coupling_scaling_law(scale):
    # g0 ~ 1 / (lambda L): scaling both by s changes g0 by 1/s^2
    scaled = FeasibilityInput(LAB.nu_si, LAB.m_eff, LAB.cavity_length * scale, LAB.wavelength * scale)
    assert derive_g0(scaled) == pytest.approx(derive_g0(LAB) / scale ** 2, rel=1e-12)


def test_feasibility_input_validation():
    with pytest.raises(DomainError):
        FeasibilityInput(nu_si=0.0, m_eff=1.0, cavity_length=1.0)


def test_power_thresholds():
    assert pulse_power_requirement(SystemParams(g0=0.001), "linear") == pytest.approx(1e4)
    assert pulse_power_requirement(SystemParams(g0=1.0), "nonlinear") == pytest.approx(1e2)
    assert pulse_power_requirement(SystemParams(g0=10.0), "nonlinear") == pytest.approx(10.0)
    with pytest.raises(DomainError):
        pulse_power_requirement(SystemParams(g0=0.0), "linear")


def test_thermal_occupation_high_temperature_limit():
    # k T >> hbar nu gives n ~ k T / (hbar nu)
    from optopulse.model import HBAR, K_B
    nu = 2 * math.pi * 1e3
    assert thermal_occupation(nu, 300.0) == pytest.approx(K_B * 300 / (HBAR * nu) - 0.5, rel=1e-6)


def test_feasibility_report_rows():
    rep = feasibility_report(LAB)
    rows = dict(rep.rows())
    assert rows["regime"] == "linear"
    assert rep.g0_over_nu == pytest.approx(rep.g0_hz / LAB.nu_si)


@given(st.floats(0, 5), st.floats(0, 2), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 100))
def test_params_round_trip_exact(kappa, g0, delta, gamma_m, nbar):
    p = SystemParams(kappa=kappa, g0=g0, delta=delta, gamma_m=gamma_m, nbar_env=nbar)
    assert params_from_dict(params_to_dict(p)) == p


def test_si_rates_need_reference_frequency():
    p = params_from_dict({"nu_si": 2.0, "kappa_si": 1.0})
    assert p.kappa == 0.5
    with pytest.raises(ScenarioError) as err:
        params_from_dict({"kappa_si": 1.0})
    assert err.value.path == "$.params.kappa_si"


def test_both_unit_forms_rejected():
    with pytest.raises(ScenarioError, match="exactly one"):
        params_from_dict({"nu_si": 1.0, "kappa_nu": 1.0, "kappa_si": 1.0})


def test_unknown_field_reported_with_path():
    with pytest.raises(ScenarioError) as err:
        params_from_dict({"kapa_nu": 1.0})
    assert err.value.path == "$.params.kapa_nu"
