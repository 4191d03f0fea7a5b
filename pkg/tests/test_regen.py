from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crdnn.errors import InputError
from crdnn.regen import (
    KMH,
    RegenScenario,
    VelocityProfile,
    representative_profile,
    rows_to_csv,
    simulate_cycle,
    sweep,
)

# frozen from a closed-form per-leg evaluation of the representative cycle;
# at mu 0.3 the drive also pushes through the braking ramps
GAIN = {0.01: 0.2446391620725578, 0.05: 0.0732848564293861, 0.3: 0.0}
REGEN_J = {0.01: 53972.18607407408, 0.05: 37564.63407407408}
WHEEL_J = {0.01: 138372.59259259258, 0.05: 321492.5925925926, 0.3: 1569600.0}


def single_stop(speed, mass=14_000.0, mu=0.0):
    prof = VelocityProfile([0.0, 1.0, 3.0], [speed, speed, 0.0], [True, True])
    return RegenScenario(vehicle_mass=mass - 4000.0, rolling_friction_mu=mu, profile=prof)


def test_kinetic_energy_oracle():
    led = simulate_cycle(single_stop(2.78))
    assert led.kinetic_at_onset == [pytest.approx(54098.79999999999, rel=1e-12)]
    assert led.regenerated == pytest.approx(33930.76735999999, rel=1e-12)


@pytest.mark.parametrize("mu", [0.01, 0.05, 0.3])
def test_representative_cycle(mu):
    led = simulate_cycle(RegenScenario(rolling_friction_mu=mu))
    assert led.efficiency_gain == pytest.approx(GAIN[mu], abs=1e-12)
    assert sum(led.traction_per_segment) == pytest.approx(WHEEL_J[mu], rel=1e-12)
    if mu in REGEN_J:
        assert led.regenerated == pytest.approx(REGEN_J[mu], rel=1e-12)
    assert len(led.kinetic_at_onset) == 2


def test_default_is_headline_friction():
    assert RegenScenario().rolling_friction_mu == 0.05


def test_stationary_profile_gives_zero():
    prof = VelocityProfile([0.0, 5.0, 10.0], [0.0, 0.0, 0.0], [True, False])
    led = simulate_cycle(RegenScenario(profile=prof))
    assert led.regenerated == 0.0 and led.efficiency_gain == 0.0 and led.baseline == 0.0


def test_friction_above_deceleration_gives_zero():
    # braking at 1.39 m/s^2 is below mu*g for mu 0.3
    assert simulate_cycle(RegenScenario(rolling_friction_mu=0.3)).regenerated == 0.0


def test_stage_toggles():
    full = simulate_cycle(RegenScenario()).regenerated
    no_pump = simulate_cycle(RegenScenario(use_pump=False)).regenerated
    assert no_pump == pytest.approx(full / 0.8)
    none = RegenScenario(use_pump=False, use_motor=False, use_mechanical=False)
    assert none.chain_efficiency() == 1.0


def test_wheel_baseline_option():
    sc = RegenScenario(baseline_through_drivetrain=False)
    led = simulate_cycle(sc)
    assert led.baseline == pytest.approx(sum(led.traction_per_segment))


@given(st.lists(st.floats(0.0, 0.6), min_size=2, max_size=6))
def test_gain_non_increasing_in_friction(mus):
    gains = [simulate_cycle(RegenScenario(rolling_friction_mu=m)).efficiency_gain for m in sorted(mus)]
    assert all(b <= a + 1e-12 for a, b in zip(gains, gains[1:]))


@given(speed=st.floats(0.5, 6.0), mass=st.floats(0.0, 8000.0), mu=st.floats(0.0, 0.3))
def test_regen_bounded_by_kinetic_energy(speed, mass, mu):
    sc = RegenScenario(material_mass=mass, rolling_friction_mu=mu, profile=representative_profile(speed))
    led = simulate_cycle(sc)
    assert 0.0 <= led.regenerated <= sc.chain_efficiency() * sum(led.kinetic_at_onset) + 1e-9
    assert 0.0 <= led.efficiency_gain < 1.0


def test_sign_change_split():
    prof = VelocityProfile([0.0, 2.0], [1.0, -1.0], [False])
    pieces = list(prof.intervals())
    assert [(round(d, 12), a, b) for d, a, b, _ in pieces] == [(1.0, 1.0, 0.0), (1.0, 0.0, 1.0)]


@pytest.mark.parametrize(
    "kw",
    [
        dict(times=[0.0, 1.0, 1.0], speeds=[0, 1, 0], loaded=[True, True]),
        dict(times=[0.0, 1.0], speeds=[0, float("nan")], loaded=[True]),
        dict(times=[0.0, 1.0], speeds=[0, 1], loaded=[]),
    ],
)
def test_invalid_profiles(kw):
    with pytest.raises(InputError):
        VelocityProfile(**kw)


def test_invalid_scenario():
    with pytest.raises(InputError):
        RegenScenario(pump_loss_coeff=1.2)
    with pytest.raises(InputError):
        RegenScenario(vehicle_mass=0.0)


def test_sweep_factorial_and_csv():
    rows = sweep(RegenScenario(), speed_values=[5 * KMH, 10 * KMH], material_masses=[0.0, 4000.0])
    assert len(rows) == 12
    by_key = {(r["mu"], round(r["speed_mps"], 9), r["material_mass_kg"]): r for r in rows}
    assert by_key[(0.05, round(10 * KMH, 9), 4000.0)]["efficiency_gain"] == pytest.approx(GAIN[0.05])
    text = rows_to_csv(rows)
    assert text.splitlines()[0].startswith("mu,speed_mps,material_mass_kg")
    assert len(text.splitlines()) == 13
    with pytest.raises(InputError):
        sweep(RegenScenario(), mu_values=[])


def test_scenario_dict_round_trip():
    sc = RegenScenario(rolling_friction_mu=0.02)
    again = RegenScenario.from_dict(sc.to_dict())
    assert again == sc
